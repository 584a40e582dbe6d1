"""Built-in scenarios bundling map, noise, fold rules, hole sizes and time scale."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .maps import PiecewiseLinearMap, three_well, two_well, two_well_A
from .noise import NoiseModel, TransitionKernel, q_eps, support_violations, three_well_noise, two_well_noise
from .restricted import FoldRule, three_well_rules, two_well_rules
from .wells import WellStructure, build_wells, default_delta

XBAR = 17 / 36


def beta_from_rule(rule, epsilon: float, q: float) -> float:
    """Time scale beta_eps.

    ``inverse_q``: 1 / q_eps.  ``escape``: eps^(1 - 2q), the inverse order of
    the per-step escape probability, which keeps the rates of order one.
    A number is used as given.
    """
    if isinstance(rule, (int, float)):
        return float(rule)
    if rule == "inverse_q":
        return 1.0 / q_eps(epsilon, q)
    if rule == "escape":
        return epsilon ** (1.0 - 2.0 * q)
    try:
        return float(rule)
    except ValueError:
        raise ConfigError(f"unknown beta rule {rule!r}") from None


@dataclass
class PerturbedSystem:
    map: PiecewiseLinearMap
    noise: NoiseModel
    beta: float
    fold_rules: list[FoldRule] = field(default_factory=list)
    name: str = "custom"
    delta: np.ndarray | None = None

    @property
    def kernel(self) -> TransitionKernel:
        return TransitionKernel(self.map, self.noise)

    @property
    def epsilon(self) -> float:
        return self.noise.epsilon

    def wells(self) -> WellStructure:
        d = self.delta if self.delta is not None else default_delta(self.map, self.noise.epsilon, self.noise.q)
        return build_wells(self.map, d, self.noise.epsilon)

    def kernel_arrays(self) -> dict[str, np.ndarray]:
        br = self.map.branch_arrays()
        nz = self.noise.kernel_arrays()
        return {"br_right": br["hi"], "br_slope": br["slope"], "br_icpt": br["intercept"],
                "nz_right": nz["right"], "nz_lo": nz["lo"], "nz_hi": nz["hi"], "nz_flip": nz["flip"]}


def make_system(name: str, epsilon: float, q: float, b: float = 0.05, beta_rule="inverse_q",
                delta=None, check_support: bool = True) -> PerturbedSystem:
    if name == "two_well":
        m, noise, rules = two_well(b), two_well_noise(epsilon, q), two_well_rules(b)
    elif name == "two_well_A":
        m, noise, rules = two_well_A(b), two_well_noise(epsilon, q), []
    elif name == "three_well":
        m, noise, rules = three_well(), three_well_noise(epsilon, q, XBAR), three_well_rules()
    else:
        raise ConfigError(f"unknown scenario {name!r}")
    if check_support:
        bad = support_violations(TransitionKernel(m, noise))
        if bad:
            raise ConfigError(f"{name} with eps={epsilon!r}: noise leaves the interval ({bad[0]}); "
                              "two-well runs need eps <= b")
    sys = PerturbedSystem(m, noise, beta_from_rule(beta_rule, epsilon, q), rules, name,
                          None if delta is None else np.asarray(delta, dtype=float))
    return sys
