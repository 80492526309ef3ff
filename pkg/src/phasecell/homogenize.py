"""Periodic homogenisation in the rescaled setting: ``eps = 1`` and growing cubes."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .fields import DiscreteEnergy, Grid, ScalarField, init_from_datum
from .geometry import RotatedCube, frame_for
from .integrands import Integrand
from .parallel import pmap
from .potentials import compute_Cu, compute_cp
from .solver import SolverConfig, minimise

log = logging.getLogger(__name__)

# cells per axis allowed for a single solve
MAX_CELLS = {2: 512, 3: 96}
MIN_RESOLUTION = 16
LOWER_SLACK = 0.05
UPPER_SLACK = 0.08


class ResourceError(ValueError):
    pass


def _cells(r: float, resolution: int, n: int) -> int:
    N = r * resolution
    if abs(N - round(N)) > 1e-9:
        raise ValueError(f"r * resolution = {N} must be an integer")
    N = int(round(N))
    cap = MAX_CELLS.get(n, 64)
    if N > cap:
        raise ResourceError(
            f"r={r} at {resolution} cells per unit needs {N} cells per axis (cap {cap}); "
            f"lower the resolution or the largest r"
        )
    return N


def rescaled_problem(I: Integrand, nu, x, r: float, resolution: int) -> ScalarField:
    """Datum field on ``Q^nu_r(r x)`` at ``eps = 1`` with the default band."""
    frame = frame_for(nu)
    n = frame.n
    N = _cells(r, resolution, n)
    centre = r * np.asarray(x, dtype=float)
    grid = Grid(RotatedCube(centre, r, frame), r / N)
    return init_from_datum(grid, 1.0)


def _density_task(args):
    I, nu, x, r, resolution, cfg = args
    F0 = rescaled_problem(I, nu, x, r, resolution)
    out = minimise(I, F0, 1.0, cfg)
    return out.energy / F0.grid.box.area, out.converged, out.iterations


@dataclass
class HomogenizationRun:
    nu: tuple
    x_list: list
    r_list: list
    densities: dict  # (x index, r) -> density
    converged: dict
    f_hom_est: float
    x_spread: float
    trend: list
    bracket: tuple
    resolution: int

    @property
    def bracket_ok(self) -> bool:
        lo, hi = self.bracket
        rmax = max(self.r_list)
        return all(lo <= self.densities[(i, rmax)] <= hi for i in range(len(self.x_list)))

    @property
    def extrapolated(self) -> float | None:
        """First-order extrapolation in ``1/r`` from the two largest sides."""
        if len(self.r_list) < 2:
            return None
        r1, r2 = self.r_list[-2:]
        k = len(self.x_list)
        d1 = float(np.mean([self.densities[(i, r1)] for i in range(k)]))
        d2 = float(np.mean([self.densities[(i, r2)] for i in range(k)]))
        return d2 + (d2 - d1) * r1 / (r2 - r1)

    def rows(self) -> list:
        out = []
        for i, x in enumerate(self.x_list):
            for r in self.r_list:
                out.append({"nu": self.nu, "x": tuple(x), "r": r, "density": self.densities[(i, r)], "converged": self.converged[(i, r)]})
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["nu_x", "nu_y", "x", "r", "density", "converged"])
            for row in self.rows():
                wr.writerow([repr(row["nu"][0]), repr(row["nu"][1]), ";".join(repr(float(c)) for c in row["x"]), repr(row["r"]), repr(row["density"]), int(row["converged"])])

    def summary(self) -> dict:
        return {
            "nu": list(self.nu),
            "f_hom_est": self.f_hom_est,
            "extrapolated": self.extrapolated,
            "x_spread": self.x_spread,
            "trend": self.trend,
            "bracket": list(self.bracket),
            "bracket_ok": self.bracket_ok,
            "resolution": self.resolution,
        }


def hom_bracket(I: Integrand) -> tuple[float, float]:
    cp = compute_cp(I.W, I.p)
    return I.c1 * cp * (1 - LOWER_SLACK), I.c2 * cp * (1 + UPPER_SLACK)


def relative_spread(values) -> float:
    values = list(values)
    if len(values) < 2:
        return 0.0
    return max(abs(a - b) / min(abs(a), abs(b)) for a, b in combinations(values, 2))


def homogenize_direction(
    I: Integrand,
    nu,
    x_list=((0.0, 0.0),),
    r_list=(2, 4, 8),
    resolution: int = MIN_RESOLUTION,
    cfg: SolverConfig | None = None,
    jobs: int = 1,
    enforce_resolution: bool = True,
) -> HomogenizationRun:
    """Densities ``m(u^nu_{rx}, Q^nu_r(rx)) / r^(n-1)`` over ``x`` and increasing ``r``.

    ``f_hom_est`` is the mean over ``x`` at the largest ``r`` and ``x_spread``
    the largest pairwise relative difference there.
    """
    cfg = cfg or SolverConfig()
    if enforce_resolution and resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be >= {MIN_RESOLUTION} cells per unit period")
    r_list = [float(r) for r in r_list]
    if sorted(r_list) != r_list or len(set(r_list)) != len(r_list):
        raise ValueError("r_list must be strictly increasing")
    n = len(np.asarray(nu).ravel())
    for r in r_list:
        _cells(r, resolution, n)
    tasks = []
    keys = []
    for i, x in enumerate(x_list):
        for r in r_list:
            tasks.append((I, tuple(nu), tuple(x), r, resolution, cfg))
            keys.append((i, r))
    res = pmap(_density_task, tasks, jobs)
    dens = {k: v[0] for k, v in zip(keys, res)}
    conv = {k: v[1] for k, v in zip(keys, res)}
    rmax = r_list[-1]
    top = [dens[(i, rmax)] for i in range(len(x_list))]
    trend = [float(np.mean([dens[(i, r)] for i in range(len(x_list))])) for r in r_list[-3:]]
    nu_t = tuple(float(c) for c in frame_for(nu).nu)
    return HomogenizationRun(nu_t, [tuple(x) for x in x_list], r_list, dens, conv, float(np.mean(top)), relative_spread(top), trend, hom_bracket(I), resolution)


@dataclass
class AnisotropyTable:
    r: float
    directions: list
    densities: list
    converged: list

    @property
    def ratio(self) -> float:
        return max(self.densities) / min(self.densities)

    def polar(self) -> list:
        return [(math.degrees(math.atan2(nu[1], nu[0])), d) for nu, d in zip(self.directions, self.densities)]

    def write_csv(self, path, polar: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            if polar:
                wr.writerow(["angle_deg", "density"])
                for a, d in self.polar():
                    wr.writerow([repr(a), repr(d)])
            else:
                wr.writerow(["nu_x", "nu_y", "r", "density", "converged"])
                for nu, d, c in zip(self.directions, self.densities, self.converged):
                    wr.writerow([repr(nu[0]), repr(nu[1]), repr(self.r), repr(d), int(c)])


def anisotropy_scan(I: Integrand, nu_list, r: float, resolution: int = MIN_RESOLUTION, cfg: SolverConfig | None = None, jobs: int = 1, x=None) -> AnisotropyTable:
    cfg = cfg or SolverConfig()
    dirs = [tuple(float(c) for c in frame_for(nu).nu) for nu in nu_list]
    n = len(dirs[0])
    x = tuple(x) if x is not None else (0.0,) * n
    res = pmap(_density_task, [(I, nu, x, float(r), resolution, cfg) for nu in dirs], jobs)
    return AnisotropyTable(float(r), dirs, [v[0] for v in res], [v[1] for v in res])


# --- periodic tiling ----------------------------------------------------------


@dataclass
class TilingReport:
    r: float
    s: float
    spacing: int
    tiles: int
    m_r: float
    competitor_energy: float
    competitor_density: float
    direct_density: float | None
    bound: float
    admissible: bool
    filler_energy: float

    @property
    def holds(self) -> bool:
        return self.admissible and self.competitor_density <= self.bound and (
            self.direct_density is None or self.direct_density <= self.bound
        )

    def summary(self) -> dict:
        d = dict(self.__dict__)
        d["holds"] = self.holds
        return d


def check_tiling_subadditivity(
    I: Integrand,
    nu,
    r: int,
    s: int,
    resolution: int = MIN_RESOLUTION,
    cfg: SolverConfig | None = None,
    tol: float = 1e-6,
    direct: bool = True,
) -> TilingReport:
    """Tile ``Q^nu_s(0)`` with copies of the ``r``-minimiser and check the density bound.

    Copies sit at the lattice points ``L R (z', 0)`` with ``L = (floor(r / M) + 1) M``
    (integer vectors on the interface plane, so the periodic integrand and
    the datum are unchanged by the shift); the rest of ``Q_s`` carries the
    datum. The competitor density must satisfy
    ``m_s / s^(n-1) <= m_r / r^(n-1) + c2 C_u (1 - r^(n-1) (1/(r+1) - 1/s)^(n-1)) + tol``.
    """
    cfg = cfg or SolverConfig()
    frame = frame_for(nu)
    if not frame.rational:
        raise ValueError(f"direction {frame.nu} is not in the rational catalog")
    n = frame.n
    if s < r:
        raise ValueError("need s >= r")
    M = frame.M
    L = (int(r) // M + 1) * M
    Fr = rescaled_problem(I, frame.nu, (0.0,) * n, float(r), resolution)
    out_r = minimise(I, Fr, 1.0, cfg)
    m_r = out_r.energy

    Fs = rescaled_problem(I, frame.nu, (0.0,) * n, float(s), resolution)
    h = Fs.grid.h
    comp = Fs.values.copy()
    half_s, half_r = 0.5 * s, 0.5 * r
    kmax = int(math.floor((half_s - half_r) / L))
    tiles = 0
    rng = range(-kmax, kmax + 1)
    for zp in np.ndindex(*(len(rng),) * (n - 1)):
        offs = [L * rng[k] for k in zp]
        start = [int(round((o - half_r + half_s) / h)) for o in offs] + [int(round((half_s - half_r) / h))]
        sl = tuple(slice(a, a + Fr.grid.node_shape[k]) for k, a in enumerate(start))
        comp[sl] = out_r.field.values
        tiles += 1
    admissible = bool(np.array_equal(comp[Fs.mask], Fs.clamped_values))
    prob = DiscreteEnergy(I, Fs.grid, 1.0)
    cells = prob.cell_energies(comp)
    E = float(np.sum(cells))
    area_s = Fs.grid.box.area
    Cu = compute_Cu(I.W, p=I.p)
    bound = m_r / r ** (n - 1) + I.c2 * Cu * (1 - r ** (n - 1) * max(0.0, 1 / (r + 1) - 1 / s) ** (n - 1)) + tol
    filler = E - tiles * m_r
    direct_density = None
    if direct:
        # best of a datum start and a start from the competitor
        cold = minimise(I, Fs, 1.0, cfg)
        warm = minimise(I, Fs.with_values(comp), 1.0, cfg)
        direct_density = min(cold.energy, warm.energy) / area_s
    return TilingReport(float(r), float(s), L, tiles, m_r, E, E / area_s, direct_density, bound, admissible, filler)
