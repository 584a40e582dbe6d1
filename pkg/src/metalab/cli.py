"""Command-line experiment runner.

    metalab {validate,spectrum,rates,resolvent,stability,simulate}
            --config PATH [--workers N] [--out DIR] [--seed U64]

Every output file starts with a comment line carrying the package version,
a hash of the config text, the seed and the command.  Floats are written in
shortest round-trip form, so reruns with the same inputs are byte-identical
regardless of the worker count.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import MetalabError
from .maps import adjacency, validate_assumptions
from .noise import sub_gaussian_check
from .resolvent import (GeneratorMatrix, ReducedGenerator, check_rate_identities, solve_reduced,
                        solve_resolvent)
from .scenarios import PerturbedSystem, make_system
from .simulate import estimate_rates, order_path_csv, quadrature_rates, run_jump_path, trace_and_order
from .stability import chen_stein_report
from .ulam import build_perturbed, bv_norm, second_eigenvalue, stationary_density


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Writer:
    def __init__(self, cfg: ExperimentConfig, out: str, command: str):
        self.cfg, self.out, self.command = cfg, out, command
        os.makedirs(out, exist_ok=True)

    @property
    def header(self) -> str:
        return (f"# metalab {__version__} config={self.cfg.digest} seed={self.cfg.seed} "
                f"command={self.command}")

    def csv(self, name: str, columns, rows) -> str:
        lines = [self.header, ",".join(columns)]
        lines += [",".join(_fmt(v) for v in r) for r in rows]
        return self._write(name, "\n".join(lines) + "\n")

    def json(self, name: str, payload: dict) -> str:
        body = {"meta": {"version": __version__, "config": self.cfg.digest, "seed": self.cfg.seed,
                         "command": self.command}, **payload}
        return self._write(name, json.dumps(body, indent=1, sort_keys=True) + "\n")

    def raw(self, name: str, text: str) -> str:
        return self._write(name, self.header + "\n" + text)

    def _write(self, name: str, text: str) -> str:
        path = os.path.join(self.out, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        return path


def _system(cfg: ExperimentConfig, eps: float, q: float | None = None,
            beta_rule: str | None = None) -> PerturbedSystem:
    from .maps import three_well, two_well, two_well_A
    delta = None
    if cfg.delta is not None:
        m = {"two_well": two_well, "two_well_A": two_well_A}.get(cfg.scenario)
        m = m(cfg.b) if m else three_well()
        delta = cfg.delta * adjacency(m).astype(float)
    return make_system(cfg.scenario, eps, cfg.q if q is None else q, b=cfg.b,
                       beta_rule=beta_rule or cfg.beta_rule, delta=delta)


def _full(system: PerturbedSystem, n_cells: int):
    op = build_perturbed(system.kernel, n_cells)
    return op, stationary_density(op)


def cmd_validate(cfg: ExperimentConfig, w: Writer, workers: int) -> int:
    rows, ok = [], True
    for eps in cfg.eps_grid:
        s = _system(cfg, eps)
        rep = validate_assumptions(s.map)
        sg = sub_gaussian_check(s.noise, s.noise.gamma1, s.noise.gamma2,
                                list(np.linspace(0.0, 5 * eps, 51)))
        ws = s.wells()
        ok = ok and rep.passed and sg
        rows.append({"epsilon": eps, "assumptions": rep.to_dict(), "sub_gaussian": sg,
                     "wells": json.loads(ws.to_json())})
    w.json("validate.json", {"passed": ok, "runs": rows})
    return 0 if ok else 1


def cmd_spectrum(cfg: ExperimentConfig, w: Writer, workers: int) -> int:
    rows = []
    for eps in cfg.eps_grid:
        op, p = _full(_system(cfg, eps), cfg.n_cells)
        lam2 = second_eigenvalue(op)
        rows.append((eps, cfg.n_cells, lam2, 1.0 - lam2, bv_norm(p)))
    w.csv("spectrum.csv", ("epsilon", "n_cells", "lambda2", "gap", "bv_norm"), rows)
    return 0


def cmd_rates(cfg: ExperimentConfig, w: Writer, workers: int) -> int:
    rows = []
    for eps in cfg.eps_grid:
        s = _system(cfg, eps, q=cfg.mc_q)
        ws = s.wells()
        op, p = _full(s, cfg.n_cells)
        grid = check_rate_identities(op.matrix, p, s.beta, ws).theta
        quad = quadrature_rates(s, ws, p)
        mc = estimate_rates(s, ws, p, cfg.n_samples, cfg.seed, workers=workers)
        k = ws.kappa
        for i in range(k):
            for j in range(k):
                if i != j:
                    rows.append((eps, i + 1, j + 1, mc.theta_hat[i, j], mc.std_err[i, j], grid[i, j],
                                 quad[i, j], int(mc.counts[i, j]), mc.censored, s.beta))
    w.csv("rates.csv", ("epsilon", "i", "j", "theta_mc", "std_err", "theta_grid", "theta_quad",
                        "count", "censored", "beta"), rows)
    return 0


def cmd_resolvent(cfg: ExperimentConfig, w: Writer, workers: int) -> int:
    rows, caps, report = [], [], []
    for eps in cfg.eps_grid:
        s = _system(cfg, eps)
        ws = s.wells()
        op, p = _full(s, cfg.n_cells)
        ident = check_rate_identities(op.matrix, p, s.beta, ws)
        reduced = ReducedGenerator(ident.theta)
        gen = GeneratorMatrix.from_operator(op, s.beta)
        g = cfg.g if cfg.g is not None else [1.0] + [0.0] * (ws.kappa - 1)
        for lam in cfg.lambdas:
            sol = solve_resolvent(gen, lam, g, ws, p)
            f = solve_reduced(reduced, lam, g)
            for i in range(ws.kappa):
                rows.append((eps, lam, i + 1, sol.oscillation[i], sol.f_eps[i], f[i],
                             abs(sol.f_eps[i] - f[i]), sol.residual))
            report.append({"epsilon": eps, "lambda": lam, "g": list(map(float, g)),
                           "oscillation": sol.oscillation.tolist(), "f_eps": sol.f_eps.tolist(),
                           "f": f.tolist(), "residual": sol.residual})
        for i in range(ws.kappa):
            caps.append((eps, i + 1, ident.mu[i], ident.cap[i], ident.cap_dag[i],
                         ident.balance_error, ident.sum_error, ident.cap_error))
    w.csv("resolvent.csv", ("epsilon", "lambda", "well", "oscillation", "f_eps", "f", "abs_error",
                            "residual"), rows)
    w.csv("capacity.csv", ("epsilon", "well", "mu", "cap", "cap_dag", "balance_error", "sum_error",
                           "cap_error"), caps)
    w.json("resolvent.json", {"runs": report})
    return 0


def cmd_stability(cfg: ExperimentConfig, w: Writer, workers: int) -> int:
    eps = sorted(cfg.eps_grid, reverse=True)
    rep = chen_stein_report(cfg.scenario, eps, q=cfg.q, b=cfg.b, n_cells=cfg.n_cells, workers=workers)
    w.csv("stability.csv", ("epsilon", "dtv", "q_eps", "d_eps", "mass_gap", "bound_rhs"), rep.rows())
    w.json("stability.json", {"scenario": rep.scenario, "fit_C": rep.fit_C,
                              "slope": rep.slope() if len(eps) > 1 else None, "pi": rep.pi})
    return 0


def cmd_simulate(cfg: ExperimentConfig, w: Writer, workers: int) -> int:
    for k, eps in enumerate(cfg.eps_grid):
        s = _system(cfg, eps, q=cfg.mc_q)
        ws = s.wells()
        x0 = cfg.x0
        if x0 is None:
            c = s.map.component(1)
            x0 = 0.5 * (c.lo + c.hi)
        path = run_jump_path(s, x0, cfg.horizon, cfg.seed, sample_id=k)
        w.raw(f"order_path_{k}.csv", f"# epsilon={eps!r} beta={s.beta!r} jumps={len(path.states) - 1}\n"
              + order_path_csv(trace_and_order(path, ws)))
    return 0


COMMANDS = {"validate": cmd_validate, "spectrum": cmd_spectrum, "rates": cmd_rates,
            "resolvent": cmd_resolvent, "stability": cmd_stability, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="metalab", description="Metastability experiments for noisy "
                                 "piecewise-expanding maps.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="INI experiment file")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", help="output directory (overrides [outputs] directory)")
    ap.add_argument("--seed", type=int, help="master seed (overrides [simulate] seed)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise MetalabError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.workers < 1:
            raise MetalabError("--workers must be >= 1")
        w = Writer(cfg, args.out or cfg.outputs, args.command)
        return COMMANDS[args.command](cfg, w, args.workers)
    except MetalabError as exc:
        print(f"metalab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
