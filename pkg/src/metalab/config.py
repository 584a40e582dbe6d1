"""INI experiment configuration.

Example::

    [metalab]
    version = 1

    [scenario]
    name = two_well
    b = 0.1

    [noise]
    eps_grid = 0.1, 0.05, 0.02
    q = 3

    [grid]
    n_cells = 2048

    [simulate]
    seed = 7
    n_samples = 1000
    horizon = 2000
    beta_rule = inverse_q

    [resolvent]
    lambda = 1
    g = 1, 0

    [outputs]
    directory = out
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

from .errors import ConfigError

CONFIG_VERSION = 1
SCENARIOS = ("two_well", "two_well_A", "three_well")


@dataclass
class ExperimentConfig:
    scenario: str
    b: float
    eps_grid: list[float]
    q: float
    n_cells: int
    seed: int
    n_samples: int = 1000
    horizon: float = 1000.0
    beta_rule: str = "inverse_q"
    mc_q: float | None = None
    delta: float | None = None
    lambdas: list[float] = field(default_factory=lambda: [1.0])
    g: list[float] | None = None
    outputs: str = "out"
    x0: float | None = None
    text: str = ""

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:16]


def _floats(raw: str, where: str) -> list[float]:
    try:
        return [float(v) for v in raw.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{where}: expected comma-separated numbers, got {raw!r}") from None


def _get(cp, section, key, conv, default=None, required=False):
    if not cp.has_option(section, key):
        if required:
            raise ConfigError(f"[{section}] {key}: missing")
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    version = _get(cp, "metalab", "version", int, required=True)
    if version != CONFIG_VERSION:
        raise ConfigError(f"[metalab] version: expected {CONFIG_VERSION}, got {version}")
    scenario = _get(cp, "scenario", "name", str.strip, required=True)
    if scenario not in SCENARIOS:
        raise ConfigError(f"[scenario] name: unknown scenario {scenario!r}")
    eps = _floats(_get(cp, "noise", "eps_grid", str, required=True), "[noise] eps_grid")
    if not eps:
        raise ConfigError("[noise] eps_grid: empty")
    if any(e <= 0 for e in eps):
        raise ConfigError("[noise] eps_grid: values must be positive")
    cfg = ExperimentConfig(
        scenario=scenario,
        b=_get(cp, "scenario", "b", float, 0.05),
        eps_grid=eps,
        q=_get(cp, "noise", "q", float, 3.0),
        n_cells=_get(cp, "grid", "n_cells", int, 2048),
        seed=_get(cp, "simulate", "seed", int, required=True),
        n_samples=_get(cp, "simulate", "n_samples", int, 1000),
        horizon=_get(cp, "simulate", "horizon", float, 1000.0),
        beta_rule=_get(cp, "simulate", "beta_rule", str.strip, "inverse_q"),
        mc_q=_get(cp, "simulate", "q", float),
        delta=_get(cp, "wells", "delta", float),
        lambdas=_floats(_get(cp, "resolvent", "lambda", str, "1"), "[resolvent] lambda"),
        g=_get(cp, "resolvent", "g", lambda r: _floats(r, "[resolvent] g")),
        outputs=_get(cp, "outputs", "directory", str.strip, "out"),
        x0=_get(cp, "simulate", "x0", float),
        text=text,
    )
    _check(cfg)
    return cfg


def _check(cfg: ExperimentConfig) -> None:
    n = cfg.n_cells
    base = n // 3 if cfg.scenario == "three_well" else n
    if cfg.scenario == "three_well" and n % 3:
        raise ConfigError("[grid] n_cells: three_well needs a multiple of 3")
    if n < 256 or base & (base - 1):
        raise ConfigError("[grid] n_cells: must be a power of two >= 256 (times 3 for three_well)")
    if cfg.scenario.startswith("two_well") and max(cfg.eps_grid) > cfg.b:
        raise ConfigError(f"[noise] eps_grid: two-well runs need eps <= b = {cfg.b}")
    if cfg.seed < 0 or cfg.seed >= 2 ** 64:
        raise ConfigError("[simulate] seed: must be an unsigned 64-bit integer")
    if any(lam <= 0 for lam in cfg.lambdas):
        raise ConfigError("[resolvent] lambda: values must be positive")


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    return parse_config(text)
