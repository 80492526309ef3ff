"""Random checkerboard media: the lattice process mu_nu and Monte-Carlo estimates."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .fields import DiscreteEnergy, Grid, init_from_datum
from .geometry import LatticeInterval, RotatedCube, frame_for, lattice_interval
from .homogenize import _cells, relative_spread
from .integrands import CoefficientField, Integrand, RandomCheckerboard
from .parallel import pmap
from .potentials import DoubleWell, compute_Cu, compute_cp
from .solver import SolverConfig, minimise

DEFAULT_VALUES = (0.5, 2.0)
DEFAULT_RESOLUTION = 8
BOUND_SLACK = 0.05


def derive_seed(master_seed: int, index: int) -> int:
    """Per-sample field seed; independent of execution order."""
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1, np.uint64)[0])


def random_integrand(seed: int, values=DEFAULT_VALUES, W: DoubleWell | None = None, p: float = 2.0, offset=()) -> Integrand:
    rf = RandomCheckerboard(int(seed), tuple(values), tuple(offset))
    coef = CoefficientField("random-checkerboard", rf.values, random=rf)
    return Integrand(W or DoubleWell(), p, coef.a_lo, coef.a_hi, coef)


@dataclass
class SubadditiveSample:
    seed: int
    a: tuple
    b: tuple
    nu: tuple
    M: int
    mu: float
    energy: float
    converged: bool
    iterations: int
    upper: float
    field: object = field(default=None, repr=False)

    @property
    def bounded(self) -> bool:
        return 0.0 <= self.mu <= self.upper

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "a": list(self.a),
            "b": list(self.b),
            "nu": list(self.nu),
            "M": self.M,
            "mu": self.mu,
            "converged": self.converged,
            "iterations": self.iterations,
            "bounded": self.bounded,
        }


def _interval_grid(L: LatticeInterval, resolution: int) -> Grid:
    box = L.box()
    h = 1.0 / resolution
    for side in box.sides:
        _cells(side, resolution, L.frame.n)
    return Grid(box, h)


def mu_nu(
    seed: int,
    a,
    b,
    nu,
    cfg: SolverConfig | None = None,
    resolution: int = DEFAULT_RESOLUTION,
    integrand: Integrand | None = None,
    warm_start=None,
) -> SubadditiveSample:
    """``mu_nu(omega, I) = m_omega(u^nu_0, I_nu) / M^(n-1)`` at ``eps = 1``.

    ``integrand`` overrides the random field built from ``seed``.
    ``warm_start`` optionally supplies an admissible starting field; the
    result is the better of that start and the datum start.
    """
    cfg = cfg or SolverConfig()
    L = lattice_interval(a, b, nu)
    I = integrand if integrand is not None else random_integrand(seed)
    grid = _interval_grid(L, resolution)
    F0 = init_from_datum(grid, 1.0)
    out = minimise(I, F0, 1.0, cfg)
    if warm_start is not None:
        Fw = F0.with_values(warm_start)
        out_w = minimise(I, Fw, 1.0, cfg)
        if out_w.energy < out.energy:
            out = out_w
    M = L.M
    n = L.frame.n
    Cu = compute_Cu(I.W, p=I.p)
    upper = I.c2 * Cu * L.measure * (1 + BOUND_SLACK)
    return SubadditiveSample(
        int(seed), L.a, L.b, L.frame.nu, M, out.energy / M ** (n - 1), out.energy, out.converged, out.iterations, upper, out.field
    )


@dataclass
class CovarianceReport:
    seed: int
    zp: tuple
    left: float
    right: float
    fields_equal: bool

    @property
    def deviation(self) -> float:
        return abs(self.left - self.right)

    @property
    def ok(self) -> bool:
        return self.deviation <= 1e-9


def check_covariance(seed: int, a, b, zp, nu, cfg: SolverConfig | None = None, resolution: int = DEFAULT_RESOLUTION) -> CovarianceReport:
    """``mu(omega, I + z') = mu(tau_{z'_nu} omega, I)`` with ``z'_nu = M R (z', 0)``."""
    L = lattice_interval(a, b, nu)
    zp = tuple(int(v) for v in np.atleast_1d(zp))
    Lz = L.translated(zp)
    left = mu_nu(seed, Lz.a, Lz.b, nu, cfg, resolution)
    base = random_integrand(seed)
    shifted = base.shifted(L.lattice_vector(zp))
    right = mu_nu(seed, L.a, L.b, nu, cfg, resolution, integrand=shifted)
    same = bool(np.array_equal(left.field.values, right.field.values))
    return CovarianceReport(int(seed), zp, left.mu, right.mu, same)


@dataclass
class SubadditivityReport:
    seed: int
    whole: SubadditiveSample
    parts: list
    tol: float
    competitor_energy: float
    filler_energy: float

    @property
    def sum_parts(self) -> float:
        return float(sum(p.mu for p in self.parts))

    @property
    def ok(self) -> bool:
        M, n = self.whole.M, len(self.whole.nu)
        return (
            self.whole.mu <= self.sum_parts + self.tol
            and self.competitor_energy / M ** (n - 1) >= self.whole.mu - 1e-12
            and self.filler_energy == 0.0
        )

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "mu_whole": self.whole.mu,
            "sum_parts": self.sum_parts,
            "tol": self.tol,
            "competitor_energy": self.competitor_energy,
            "filler_energy": self.filler_energy,
            "ok": self.ok,
        }


def _validate_partition(a, b, parts):
    n1 = len(a)
    cells = np.zeros([bi - ai for ai, bi in zip(a, b)], dtype=int)
    for pa, pb in parts:
        if len(pa) != n1 or any(pbi <= pai for pai, pbi in zip(pa, pb)):
            raise ValueError("every part must be a nonempty interval of the same dimension")
        if any(pai < ai or pbi > bi for pai, pbi, ai, bi in zip(pa, pb, a, b)):
            raise ValueError("parts must lie inside the interval")
        sl = tuple(slice(pai - ai, pbi - ai) for pai, pbi, ai in zip(pa, pb, a))
        cells[sl] += 1
    if not np.all(cells == 1):
        raise ValueError("parts must be pairwise disjoint and cover the interval")


def check_subadditivity(seed: int, a, b, parts, nu, cfg: SolverConfig | None = None, resolution: int = DEFAULT_RESOLUTION) -> SubadditivityReport:
    """``mu(I) <= sum mu(I_i) + tol`` with ``tol = (number of parts) * 10 * tol_pg``.

    The concatenation of the part minimisers, completed by the datum, is an
    admissible field on ``I_nu``; its energy outside the part boxes must vanish
    and it is used as a second starting point for the whole-box solve.
    """
    cfg = cfg or SolverConfig()
    a = (a,) if np.isscalar(a) else tuple(a)
    b = (b,) if np.isscalar(b) else tuple(b)
    parts = [(((pa,) if np.isscalar(pa) else tuple(pa)), ((pb,) if np.isscalar(pb) else tuple(pb))) for pa, pb in parts]
    _validate_partition(a, b, parts)
    L = lattice_interval(a, b, nu)
    I = random_integrand(seed)
    samples = [mu_nu(seed, pa, pb, nu, cfg, resolution, integrand=I) for pa, pb in parts]

    grid = _interval_grid(L, resolution)
    F0 = init_from_datum(grid, 1.0)
    comp = F0.values.copy()
    covered = np.zeros(grid.shape, dtype=bool)
    h = grid.h
    M = L.M
    mid = [0.5 * (ai + bi) for ai, bi in zip(a, b)]
    for (pa, pb), smp in zip(parts, samples):
        Lp = lattice_interval(pa, pb, nu)
        lo_p, hi_p = Lp.local_bounds()
        pmid = [0.5 * (ai + bi) for ai, bi in zip(pa, pb)]
        shift = np.array([M * (pm - m) for pm, m in zip(pmid, mid)] + [0.0])
        start = np.rint((lo_p + shift - grid.box.lo) / h).astype(int)
        shape = smp.field.grid.node_shape
        sl = tuple(slice(s0, s0 + k) for s0, k in zip(start, shape))
        comp[sl] = smp.field.values
        covered[tuple(slice(s0, s0 + k - 1) for s0, k in zip(start, shape))] = True
    prob = DiscreteEnergy(I, grid, 1.0)
    cells = prob.cell_energies(comp)
    filler = float(np.sum(cells[~covered]))
    E = float(np.sum(cells))
    whole = mu_nu(seed, a, b, nu, cfg, resolution, integrand=I, warm_start=comp)
    tol = len(parts) * 10 * cfg.tol_pg
    return SubadditivityReport(int(seed), whole, samples, tol, E, filler)


# --- Monte-Carlo ------------------------------------------------------------


def _cube_task(args):
    seed, values, nu, x, r, resolution, cfg = args
    I = random_integrand(seed, values)
    frame = frame_for(nu)
    N = _cells(r, resolution, frame.n)
    grid = Grid(RotatedCube(r * np.asarray(x, dtype=float), r, frame), r / N)
    F0 = init_from_datum(grid, 1.0)
    out = minimise(I, F0, 1.0, cfg)
    return out.energy / grid.box.area, out.converged, out.iterations


@dataclass
class ErgodicEstimate:
    nu: tuple
    r_list: list
    seeds: list
    densities: dict  # r -> list over seeds
    converged: dict
    iterations: dict
    values: tuple

    def mean(self, r) -> float:
        return float(np.mean(self.densities[r]))

    def std(self, r) -> float:
        d = self.densities[r]
        return float(np.std(d, ddof=1)) if len(d) > 1 else 0.0

    def ci_halfwidth(self, r) -> float:
        return 1.96 * self.std(r) / math.sqrt(len(self.densities[r]))

    @property
    def f_hom_est(self) -> float:
        return self.mean(self.r_list[-1])

    @property
    def concentrating(self) -> bool:
        return self.std(self.r_list[-1]) < self.std(self.r_list[0])

    def bracket(self, W: DoubleWell | None = None, p: float = 2.0) -> tuple[float, float]:
        cp = compute_cp(W or DoubleWell(), p)
        return min(self.values) * cp * 0.95, max(self.values) * cp * 1.08

    def summary(self) -> dict:
        return {
            "nu": list(self.nu),
            "r": self.r_list,
            "seeds": len(self.seeds),
            "mean": [self.mean(r) for r in self.r_list],
            "std": [self.std(r) for r in self.r_list],
            "ci_halfwidth": [self.ci_halfwidth(r) for r in self.r_list],
            "f_hom_est": self.f_hom_est,
            "concentrating": self.concentrating,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["seed", "r", "nu", "density", "iterations", "converged"])
            for r in self.r_list:
                for s, d, it, c in zip(self.seeds, self.densities[r], self.iterations[r], self.converged[r]):
                    wr.writerow([s, repr(r), ";".join(repr(c_) for c_ in self.nu), repr(d), it, int(c)])


def ergodic_estimate(
    nu,
    r_list=(4, 8, 16),
    seeds: int = 16,
    cfg: SolverConfig | None = None,
    master_seed: int = 0,
    values=DEFAULT_VALUES,
    resolution: int = DEFAULT_RESOLUTION,
    jobs: int = 1,
    min_seeds: int = 8,
) -> ErgodicEstimate:
    """Densities on ``Q^nu_r(0)`` for independent realisations and each ``r``."""
    cfg = cfg or SolverConfig()
    if seeds < min_seeds:
        raise ValueError(f"at least {min_seeds} seeds are required")
    r_list = [float(r) for r in r_list]
    nu_t = tuple(float(c) for c in frame_for(nu).nu)
    n = len(nu_t)
    for r in r_list:
        _cells(r, resolution, n)
    field_seeds = [derive_seed(master_seed, k) for k in range(seeds)]
    tasks = [(s, tuple(values), nu_t, (0.0,) * n, r, resolution, cfg) for r in r_list for s in field_seeds]
    res = pmap(_cube_task, tasks, jobs)
    dens, conv, its = {}, {}, {}
    k = 0
    for r in r_list:
        chunk = res[k : k + seeds]
        k += seeds
        dens[r] = [c[0] for c in chunk]
        conv[r] = [c[1] for c in chunk]
        its[r] = [c[2] for c in chunk]
    return ErgodicEstimate(nu_t, r_list, field_seeds, dens, conv, its, tuple(values))


@dataclass
class XIndependenceReport:
    x_list: list
    densities: list
    spread: float
    threshold: float = 0.10

    @property
    def flagged(self) -> bool:
        return self.spread > self.threshold


def check_x_independence(seed: int, nu, x_list, r: float, cfg: SolverConfig | None = None, values=DEFAULT_VALUES, resolution: int = DEFAULT_RESOLUTION, jobs: int = 1) -> XIndependenceReport:
    cfg = cfg or SolverConfig()
    nu_t = tuple(float(c) for c in frame_for(nu).nu)
    tasks = [(int(seed), tuple(values), nu_t, tuple(x), float(r), resolution, cfg) for x in x_list]
    res = pmap(_cube_task, tasks, jobs)
    d = [c[0] for c in res]
    return XIndependenceReport([tuple(x) for x in x_list], d, relative_spread(d))
