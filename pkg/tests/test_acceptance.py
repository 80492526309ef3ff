"""End-to-end acceptance criteria, one test each, at their stated tolerances.

Run alone with ``pytest tests/test_acceptance.py -v``; a summary with one
PASS/FAIL line per criterion is printed at the end of the session.
"""

import os
import time

import numpy as np
import pytest

from phasecell.cell import CellProblem, check_rescaling, estimate_density, solve_cell
from phasecell.fields import DiscreteEnergy, Grid, glue, init_from_datum
from phasecell.geometry import RotatedCube, direction_from_angle, frame_for
from phasecell.homogenize import anisotropy_scan, homogenize_direction
from phasecell.integrands import make_integrand
from phasecell.parallel import pmap
from phasecell.potentials import compute_cp
from phasecell.solver import SolverConfig, minimise
from phasecell.stochastic import check_covariance, check_subadditivity, derive_seed, ergodic_estimate

JOBS = min(8, os.cpu_count() or 1)
HOM = make_integrand({})
# coefficient 2 on y2 in [0, 1/2) and 1 on [1/2, 1): layers stacked along y2
LAMINATE = make_integrand({"variant": "laminate", "values": [2, 1], "axis": 1})
CHECKER = make_integrand({"variant": "checkerboard"})
CP = compute_cp(HOM.W, HOM.p)
E2 = (0.0, 1.0)

# densities of every solve in criteria 1-4 with the c1 of its integrand
SOLVES = {}


def _line(k, ok, detail, runtime=None, limit=None):
    status = "PASS" if ok else "FAIL"
    t = f" [{runtime:.1f}s < {limit:.0f}s]" if runtime is not None else ""
    return f"CRITERION {k}: {status} | {detail}{t}"


def _finish(report_line, k, ok, detail, t0=None, limit=None):
    runtime = None if t0 is None else time.perf_counter() - t0
    if runtime is not None and limit is not None:
        ok = ok and runtime < limit
    report_line(_line(k, ok, detail, runtime, limit))
    assert ok, detail


def _rescaled_task(args):
    I, nu, centre, r, N = args
    P = CellProblem(I, centre, nu, r, 1.0, N)
    r_ = solve_cell(P)
    return r_.density, r_.outcome.converged


def test_criterion_01_modica_mortola(report_line):
    t0 = time.perf_counter()
    eps_list = [1 / 8, 1 / 16, 1 / 32]
    dens = []
    for eps in eps_list:
        r = solve_cell(CellProblem(HOM, (0.0, 0.0), E2, 1.0, eps, 96))
        dens.append(r.density)
    SOLVES[1] = [(d, HOM.c1) for d in dens]
    err = [abs(d - CP) for d in dens]
    window = 0.97 * CP <= dens[-1] <= 1.08 * CP
    decreasing = err[0] > err[1] > err[2]
    detail = f"densities/c_p = {[round(d / CP, 5) for d in dens]}, window [0.97, 1.08] {window}, error decreasing {decreasing}"
    _finish(report_line, 1, window and decreasing, detail, t0, 120)


def test_criterion_02_bracketing(report_line):
    t0 = time.perf_counter()
    r, res = 8.0, 16
    tasks = []
    for nu in [(1.0, 0.0), E2, (3 / 5, 4 / 5), (4 / 5, 3 / 5), (5 / 13, 12 / 13)]:
        for x in [(0.0, 0.0), (0.3, 0.7)]:
            tasks.append((CHECKER, nu, tuple(r * c for c in x), r, int(r * res)))
    for k in range(10):
        I = make_integrand({"variant": "random", "values": [0.5, 2.0], "seed": derive_seed(2024, k)})
        tasks.append((I, (3 / 5, 4 / 5), (0.0, 0.0), r, int(r * res)))
    out = pmap(_rescaled_task, tasks, JOBS)
    dens = [d for d, _ in out]
    SOLVES[2] = [(d, 0.5) for d in dens]
    lo, hi = 0.5 * CP * 0.95, 2.0 * CP * 1.08
    ok = len(dens) == 20 and all(lo <= d <= hi for d in dens)
    detail = f"20 solves, densities/c_p in [{min(dens) / CP:.4f}, {max(dens) / CP:.4f}] vs bracket [0.475, 2.16]"
    _finish(report_line, 2, ok, detail, t0, 300)


def test_criterion_03_isotropy(report_line):
    t0 = time.perf_counter()
    dirs = [direction_from_angle(22.5 * k) for k in range(8)]
    t = anisotropy_scan(HOM, dirs, 8, resolution=16, jobs=JOBS)
    SOLVES[3] = [(d, HOM.c1) for d in t.densities]
    ok = t.ratio <= 1.05
    _finish(report_line, 3, ok, f"8 directions at r=8, max/min = {t.ratio:.6f} (<= 1.05)", t0, 300)


def test_criterion_04_laminate_anisotropy(report_line):
    t0 = time.perf_counter()
    d1 = homogenize_direction(LAMINATE, (1.0, 0.0), r_list=(16,), jobs=JOBS).f_hom_est
    d2 = homogenize_direction(LAMINATE, E2, r_list=(16,), jobs=JOBS).f_hom_est
    SOLVES[4] = [(d1, LAMINATE.c1), (d2, LAMINATE.c1)]
    gap = d2 <= d1 - 0.05 * CP
    channel = d2 <= 1.15 * LAMINATE.c1 * CP
    detail = (
        f"density(e1)/c_p = {d1 / CP:.4f}, density(e2)/c_p = {d2 / CP:.4f}; "
        f"gap >= 0.05 c_p {gap}; density(e2) <= 1.15 c_p {channel}"
    )
    _finish(report_line, 4, gap and channel, detail, t0, 300)


def test_criterion_05_rescaling_identity(report_line):
    t0 = time.perf_counter()
    worst = 0.0
    for I in (HOM, CHECKER, LAMINATE):
        for eps in (1 / 4, 1 / 8):
            rep = check_rescaling(CellProblem(I, (0.3, -0.2), (3 / 5, 4 / 5), 1.0, eps, 64), fields=10, seed=5)
            worst = max(worst, rep.max_rel_dev)
    _finish(report_line, 5, worst <= 1e-12, f"max relative deviation {worst:.3e} (<= 1e-12) over 60 fields", t0, 10)


PARTITIONS = [
    (0, 2, [(0, 1), (1, 2)]),
    (0, 3, [(0, 1), (1, 3)]),
    (0, 3, [(0, 1), (1, 2), (2, 3)]),
    (0, 4, [(0, 2), (2, 4)]),
    (0, 4, [(0, 1), (1, 2), (2, 3), (3, 4)]),
]


def _sub_task(args):
    seed, a, b, parts = args
    rep = check_subadditivity(seed, a, b, parts, E2)
    return rep.ok, rep.whole.mu, rep.sum_parts, rep.filler_energy


def test_criterion_06_subadditivity(report_line):
    t0 = time.perf_counter()
    tasks = [(derive_seed(6, s), a, b, parts) for s in range(4) for a, b, parts in PARTITIONS]
    out = pmap(_sub_task, tasks, JOBS)
    ok = len(out) >= 20 and all(o[0] for o in out)
    margin = min(o[2] - o[1] for o in out)
    detail = f"{sum(o[0] for o in out)}/{len(out)} (seed, partition) pairs hold; min sum - whole = {margin:.4g}"
    _finish(report_line, 6, ok, detail, t0, 600)


def _cov_task(args):
    seed, a, b, zp, nu = args
    return check_covariance(seed, a, b, zp, nu).deviation


def test_criterion_07_covariance(report_line):
    t0 = time.perf_counter()
    tasks = []
    for s in range(10):
        seed = derive_seed(7, s)
        nu = E2 if s % 2 == 0 else (3 / 5, 4 / 5)
        for zp in ((1,), (-3,)):
            tasks.append((seed, 0, 2, zp, nu))
    devs = pmap(_cov_task, tasks, JOBS)
    ok = len(devs) >= 20 and max(devs) <= 1e-9
    _finish(report_line, 7, ok, f"{len(devs)} (seed, z') pairs, max |difference| = {max(devs):.3e} (<= 1e-9)", t0, 600)


def test_criterion_08_ergodic(report_line):
    t0 = time.perf_counter()
    est = ergodic_estimate(E2, (4, 8, 16), seeds=16, values=(0.5, 2.0), jobs=JOBS)
    s4, s16 = est.std(4.0), est.std(16.0)
    mean = est.mean(16.0)
    lo, hi = 0.5 * CP * 0.95, 2.0 * CP * 1.08
    ok = s16 < s4 and lo <= mean <= hi
    detail = f"std r=4 {s4:.4f}, r=8 {est.std(8.0):.4f}, r=16 {s16:.4f}; mean(r=16)/c_p = {mean / CP:.4f} in [0.475, 2.16]"
    _finish(report_line, 8, ok, detail, t0, 1800)


def test_criterion_09_monotonicity(report_line):
    t0 = time.perf_counter()
    rows = []
    for I in (HOM, LAMINATE):
        est = estimate_density(I, (0.0, 0.0), E2, (0.5, 0.75, 1.0), (1 / 8, 1 / 16), 1 / 64, SolverConfig(), oscillate=True, jobs=JOBS)
        rows.extend(est.monotonicity)
    ok = len(rows) == 8 and all(r["ok"] for r in rows)
    slack = min(r["bound"] - r["m_rho_prime"] for r in rows)
    _finish(report_line, 9, ok, f"{sum(r['ok'] for r in rows)}/{len(rows)} (rho, rho') pairs hold; min slack {slack:.4g}", t0, 180)


def test_criterion_10_fundamental_estimate(report_line):
    t0 = time.perf_counter()
    ok = True
    parts = []
    for name, I in (("homogeneous", HOM), ("laminate", LAMINATE)):
        omegas = []
        for eps in (0.2, 0.1, 0.05):
            Ie = I.oscillating(eps)
            g = Grid.cube((0.0, 0.0), 1.0, E2, int(round(4 / eps)))
            v = init_from_datum(g, eps)
            u = minimise(Ie, v, eps).field
            r = glue(Ie, u, v, eps, 0.2, 0.4)
            try:
                r.field.check_admissible()
                admissible = True
            except ValueError:
                admissible = False
            ok &= admissible and r.holds
            omegas.append(r.omega)
        ok &= omegas[0] > omegas[1] > omegas[2]
        parts.append(f"{name} omega {[round(o, 4) for o in omegas]}")
    _finish(report_line, 10, ok, "; ".join(parts) + "; admissible and bound holds", t0, 180)


def test_criterion_11_slicing_lower_bound(report_line):
    missing = [k for k in (1, 2, 3, 4) if k not in SOLVES]
    if missing:
        # run standalone: solve the missing criteria first
        pytest.skip(f"criteria {missing} did not record solves in this session")
    worst = min(d / (c1 * CP) for k in (1, 2, 3, 4) for d, c1 in SOLVES[k])
    count = sum(len(SOLVES[k]) for k in (1, 2, 3, 4))
    _finish(report_line, 11, worst >= 0.95, f"{count} solves from criteria 1-4, min density/(c1 c_p) = {worst:.4f} (>= 0.95)")


def test_criterion_12_gradient(report_line):
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)
    worst = 0.0
    for k in range(10):
        I = (HOM, CHECKER.oscillating(0.1))[k % 2]
        frame = frame_for(direction_from_angle(float(rng.uniform(0, 360))))
        grid = Grid(RotatedCube(rng.uniform(-1, 1, 2), 1.0, frame), 1 / 24)
        F = init_from_datum(grid, 0.1)
        F.values[F.free] = rng.uniform(0, 1, int(F.free.sum()))
        prob = DiscreteEnergy(I, grid, 0.1)
        _, G = prob.energy_and_gradient(F.values)
        free = np.argwhere(F.free)
        for j in rng.choice(len(free), 5, replace=False):
            idx = tuple(free[j])
            d = 1e-6
            v = F.values.copy()
            v[idx] += d
            ep = prob.energy(v)
            v[idx] -= 2 * d
            fd = (ep - prob.energy(v)) / (2 * d)
            worst = max(worst, abs(fd - G[idx]) / max(abs(G[idx]), 1e-8))
    _finish(report_line, 12, worst <= 1e-5, f"10 fields x 5 nodes, max relative error {worst:.3e} (<= 1e-5)", t0, 30)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
