"""Acceptance criteria 1-13; each test records one PASS/FAIL line."""
import numpy as np
import pytest
from scipy import stats

from metalab.cli import main as cli_main
from metalab.maps import three_well, two_well, validate_assumptions
from metalab.noise import TransitionKernel, two_well_noise
from metalab.resolvent import (GeneratorMatrix, ReducedGenerator, capacity, check_R2,
                               check_rate_identities, on_support, solve_resolvent, well_cells)
from metalab.restricted import RestrictedFamily, two_well_rules
from metalab.scenarios import make_system
from metalab.simulate import estimate_rates, gamma_exceedance, quadrature_rates, sample_escape_times
from metalab.stability import chen_stein_report
from metalab.ulam import (build_deterministic, build_perturbed, leading_eigenvalue, ly_check,
                          second_eigenvalue, stationary_density)

EPS_GRID = (0.1, 0.05, 0.02)
B_GRID = 0.1  # two-well runs need eps <= b, and the grid includes eps = 0.1


@pytest.fixture(scope="module")
def stability_report():
    return chen_stein_report("two_well", [0.1, 0.05, 0.02, 0.01], q=3.0, b=B_GRID, n_cells=4096)


def test_c01_structural_exactness(record):
    n = 4096
    ops, valid = [], True
    for m, sysm in ((two_well(0.05), make_system("two_well", 0.05, 3, b=0.05)),
                    (three_well(), make_system("three_well", 0.03, 3))):
        valid &= validate_assumptions(m).passed
        ops += [build_deterministic(m, i, n) for i in m.labels]
        ops.append(build_perturbed(sysm.kernel, n))
        ops += [build_perturbed(sysm.kernel, n, restriction=(i, sysm.fold_rules)) for i in m.labels]
    row = max(float(np.abs(op.row_sums() - 1).max()) for op in ops)
    lead = max(abs(leading_eigenvalue(op) - 1) for op in ops)
    ok = valid and row <= 1e-10 and lead <= 1e-10
    assert record(1, ok, f"{len(ops)} operators, n={n}: max|row sum-1|={row:.1e}, "
                         f"max|lambda1-1|={lead:.1e}, assumptions valid={valid}")


def test_c02_lasota_yorke(record):
    k = TransitionKernel(two_well(0.05), two_well_noise(0.05, 3))
    fam = RestrictedFamily(k, 1, two_well_rules(0.05))
    rep = ly_check(fam, 3.6, 0.45, n_cells=1024, trials=100, n_omega=50, seed=2024, slack=1e-6)
    ok = rep.violations == 0 and rep.checked == 5000
    assert record(2, ok, f"{rep.violations} violations in {rep.checked} checks, "
                         f"worst margin {rep.worst_margin:.3g}; "
                         f"{rep.sharp_violations} against (2/s)TV + (2/l + 1)L1")


def test_c03_spectral_signature(record):
    lam = []
    for eps in EPS_GRID:
        s = make_system("two_well", eps, 3, b=B_GRID)
        lam.append(second_eigenvalue(build_perturbed(s.kernel, 1024)))
    ok = lam[0] < lam[1] < lam[2] and all(v < 1 for v in lam)
    assert record(3, ok, "1-lambda2 = " + ", ".join(f"{1 - v:.3e}" for v in lam))


def test_c04_symmetry(record):
    from metalab.intervals import IntervalSet
    masses = []
    for eps in EPS_GRID:
        s = make_system("two_well", eps, 3, b=B_GRID)
        p = stationary_density(build_perturbed(s.kernel, 2048))
        masses.append(p.integral(IntervalSet.of((0.0, 0.5))))
    dev = max(abs(m - 0.5) for m in masses)
    assert record(4, dev <= 2e-3, f"max |mu(I_1)-0.5| = {dev:.2e} (tol 2e-3)")


def test_c05_rate_concordance(record):
    s = make_system("two_well", 0.05, 2.2, b=0.05)
    ws = s.wells()
    op = build_perturbed(s.kernel, 2048)
    p = stationary_density(op)
    mc = estimate_rates(s, ws, p, 10_000, seed=505)
    grid = check_rate_identities(op.matrix, p, s.beta, ws).theta
    quad = quadrature_rates(s, ws, p)
    worst = 0.0
    for i, j in ((0, 1), (1, 0)):
        se = mc.std_err[i, j]
        trio = (mc.theta_hat[i, j], grid[i, j], quad[i, j])
        worst = max(worst, max(abs(a - b) for a in trio for b in trio) / se)
    assert record(5, worst <= 3, f"theta(1,2): mc={mc.theta_hat[0, 1]:.5g}+-{mc.std_err[0, 1]:.2g} "
                                 f"grid={grid[0, 1]:.5g} quad={quad[0, 1]:.5g}; "
                                 f"max pairwise gap {worst:.2f} se")


def test_c06_three_well_structure(record):
    s = make_system("three_well", 0.03, 2.2)
    ws = s.wells()
    p = stationary_density(build_perturbed(s.kernel, 3072))
    r = estimate_rates(s, ws, p, 10_000, seed=606)
    zero = r.counts[0, 2] == 0 and r.counts[2, 0] == 0 and r.theta_hat[0, 2] == r.theta_hat[2, 0] == 0
    diff = abs(r.theta_hat[0, 1] - r.theta_hat[2, 1])
    sigma = float(np.hypot(r.std_err[0, 1], r.std_err[2, 1]))
    ok = zero and diff <= 3 * sigma
    assert record(6, ok, f"tallies 1->3={r.counts[0, 2]}, 3->1={r.counts[2, 0]}; "
                         f"|theta(1,2)-theta(3,2)|={diff:.2e} <= 3 sigma={3 * sigma:.2e}")


def test_c07_exponential_escape(record):
    s = make_system("two_well", 0.05, 2.2, b=0.05)
    ws = s.wells()
    p = stationary_density(build_perturbed(s.kernel, 2048))
    e = sample_escape_times(s, ws, 1, 10_000, seed=707, density=p)
    ks = stats.kstest(e.times / e.times.mean(), "expon").statistic
    ok = ks < 0.02 and e.censored == 0
    assert record(7, ok, f"KS distance {ks:.4f} (tol 0.02), censored {e.censored}")


@pytest.mark.parametrize("delta", [None, 0.02], ids=["hole=eps^q", "hole=0.02"])
def test_c08_capacity_identities(record, delta):
    d = None if delta is None else [[0, delta], [delta, 0]]
    s = make_system("two_well", 0.05, 3, b=0.05, delta=d)
    ws = s.wells()
    op = build_perturbed(s.kernel, 2048)
    p = stationary_density(op)
    rep = check_rate_identities(op.matrix, p, s.beta, ws)
    ch = on_support(op.matrix, p)
    A, B = well_cells(ws, p.grid, ch)
    c_ab, c_ba = capacity(ch, s.beta, A, B), capacity(ch, s.beta, B, A)
    sym = abs(c_ab - c_ba) / max(c_ab, c_ba)
    ok = rep.cap_error <= 1e-8 and sym <= 1e-8 and rep.balance_error <= 1e-6 and rep.sum_error <= 1e-6
    tag = "8" if delta is None else "8 (enlarged hole)"
    line = (f"cap vs cap_dag {rep.cap_error:.1e}, cap(A,B) vs cap(B,A) {sym:.1e}, "
            f"balance {rep.balance_error:.1e}, row sums {rep.sum_error:.1e} [{tag}]")
    if delta is None:
        assert record(8, ok, line)
    else:
        print(line)
        assert ok


def test_c09_resolvent_conditions(record):
    osc, err = [], None
    for eps in EPS_GRID:
        s = make_system("two_well", eps, 3, b=B_GRID)
        ws = s.wells()
        op = build_perturbed(s.kernel, 2048)
        p = stationary_density(op)
        sol = solve_resolvent(GeneratorMatrix.from_operator(op, s.beta), 1.0, [1.0, 0.0], ws, p)
        osc.append(float(sol.oscillation.max()))
        if eps == 0.02:
            theta = check_rate_identities(op.matrix, p, s.beta, ws).theta
            err = max(check_R2(sol, ReducedGenerator(theta), 0.1)["abs_error"])
    ok = osc[0] > osc[1] > osc[2] and err <= 0.1
    assert record(9, ok, "oscillation " + ", ".join(f"{v:.3e}" for v in osc)
                  + f"; max |f_eps-f| at eps=0.02 = {err:.2e}")


def test_c10_gamma_concentration(record):
    parts, ok = [], True
    for n in (16, 64, 256):
        emp, bound = gamma_exceedance(n, 10_000, seed=1010)
        ok &= emp <= bound
        parts.append(f"n={n}: {emp:.4f} <= {bound:.4f}")
    assert record(10, ok, "; ".join(parts))


def test_c11_stochastic_stability(record, stability_report):
    r = stability_report
    dec = all(a > b for a, b in zip(r.dtv, r.dtv[1:]))
    slope = r.slope()
    ok = dec and slope >= 0.8
    assert record(11, ok, "dTV " + ", ".join(f"{v:.4f}" for v in r.dtv) + f"; slope {slope:.3f} (>= 0.8)")


def test_c12_d_eps_linearity(record, stability_report):
    r = stability_report
    ratio = [d / e for d, e in zip(r.d_eps, r.eps_grid)]
    ok = max(ratio) <= 2 * ratio[0]
    assert record(12, ok, "d_eps/eps " + ", ".join(f"{v:.4f}" for v in ratio))


CLI_CONFIG = """\
[metalab]
version = 1
[scenario]
name = two_well
b = 0.1
[noise]
eps_grid = 0.1, 0.05
q = 3
[grid]
n_cells = 512
[simulate]
seed = 1313
n_samples = 300
horizon = 100
q = 2.2
[resolvent]
lambda = 1, 2
"""


def test_c13_determinism(record, tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(CLI_CONFIG)
    commands = ("validate", "spectrum", "rates", "resolvent", "stability", "simulate")
    snapshots = []
    for run, workers in enumerate((1, 4, 1)):
        out = tmp_path / f"run{run}"
        for cmd in commands:
            assert cli_main([cmd, "--config", str(cfg), "--out", str(out), "--workers", str(workers)]) == 0
        snapshots.append({f.name: f.read_bytes() for f in sorted(out.iterdir())})
    ok = snapshots[0] == snapshots[1] == snapshots[2] and len(snapshots[0]) >= 8
    assert record(13, ok, f"{len(snapshots[0])} files byte-identical across workers 1/4/1")
