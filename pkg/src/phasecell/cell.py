"""Cell problems on rotated cubes and sweeps estimating the surface density."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .fields import DiscreteEnergy, Grid, ScalarField, energy, init_from_datum
from .geometry import RotatedCube, frame_for
from .integrands import Integrand
from .parallel import pmap
from .potentials import compute_Cu, compute_cp
from .solver import SolveOutcome, SolverConfig, minimise, multi_start

log = logging.getLogger(__name__)

# relative slack on the bracketing bounds, shared with the verify tolerance table
LOWER_SLACK = 0.05
UPPER_SLACK = 0.05


@dataclass
class CellProblem:
    """``m(u_datum, Q^nu_rho(x))`` for the integrand as given, at scale ``eps``.

    ``integrand`` is used as is; pass ``I.oscillating(eps)`` to work with
    ``f(x / eps, u, xi)``. ``delta_bc`` defaults to ``2h``.
    """

    integrand: Integrand
    x: tuple = (0.0, 0.0)
    nu: tuple = (0.0, 1.0)
    rho: float = 1.0
    eps: float = 1.0 / 16
    N: int = 64
    delta_bc: float | None = None
    cfg: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0

    def __post_init__(self):
        self.x = tuple(float(c) for c in np.asarray(self.x, dtype=float).ravel())
        self.nu = tuple(float(c) for c in np.asarray(self.nu, dtype=float).ravel())
        if len(self.x) != len(self.nu):
            raise ValueError("x and nu must have the same dimension")
        if not self.eps > 0 or not self.rho > 0:
            raise ValueError("rho and eps must be positive")
        if not self.rho > 2 * self.eps:
            raise ValueError(f"cell problems need rho > 2 eps (rho={self.rho}, eps={self.eps})")
        if self.N < 8:
            raise ValueError("N must be >= 8")
        h = self.rho / self.N
        if self.delta_bc is not None and self.delta_bc < 2 * h * (1 - 1e-9):
            raise ValueError(f"delta_bc must be >= 2h = {2 * h}")

    @property
    def h(self) -> float:
        return self.rho / self.N

    @property
    def n(self) -> int:
        return len(self.nu)

    def grid(self) -> Grid:
        return Grid(RotatedCube(self.x, self.rho, frame_for(self.nu)), self.h)

    def initial_field(self, delta_bc: float | None = None) -> ScalarField:
        band = self.delta_bc if delta_bc is None else delta_bc
        return init_from_datum(self.grid(), self.eps, band)

    def to_dict(self) -> dict:
        return {
            "integrand": self.integrand.to_dict(),
            "x": list(self.x),
            "nu": list(self.nu),
            "rho": self.rho,
            "eps": self.eps,
            "N": self.N,
            "delta_bc": self.delta_bc if self.delta_bc is not None else 2 * self.h,
            "solver": self.cfg.to_dict(),
            "seed": self.seed,
        }


@dataclass
class CellResult:
    m_hat: float
    density: float
    outcome: SolveOutcome
    problem: CellProblem
    lower: float
    upper: float

    @property
    def bracket_ok(self) -> bool:
        return self.lower <= self.density <= self.upper

    @property
    def slicing_ok(self) -> bool:
        return self.density >= self.lower

    def summary(self) -> dict:
        d = {
            "m_hat": self.m_hat,
            "density": self.density,
            "lower_bound": self.lower,
            "upper_bound": self.upper,
            "bracket_ok": self.bracket_ok,
        }
        d.update(self.outcome.summary())
        return d


def bracket(I: Integrand) -> tuple[float, float]:
    """``c1 c_p (1 - slack)`` and ``c2 C_u (1 + slack)``."""
    cp = compute_cp(I.W, I.p)
    Cu = compute_Cu(I.W, p=I.p)
    return I.c1 * cp * (1 - LOWER_SLACK), I.c2 * Cu * (1 + UPPER_SLACK)


def _solve(P: CellProblem, F0: ScalarField) -> CellResult:
    if P.cfg.restarts > 1:
        out = multi_start(P.integrand, F0, P.eps, P.cfg, seed=P.seed)
    else:
        out = minimise(P.integrand, F0, P.eps, P.cfg)
    area = F0.grid.box.area
    lo, hi = bracket(P.integrand)
    res = CellResult(out.energy, out.energy / area, out, P, lo, hi)
    if not res.bracket_ok:
        log.warning("density %.6g outside bracket [%.6g, %.6g]", res.density, lo, hi)
    return res


def solve_cell(P: CellProblem) -> CellResult:
    return _solve(P, P.initial_field())


def solve_cell_delta(P: CellProblem, delta: float) -> CellResult:
    """``m^delta``: the datum is imposed on ``Q_rho`` minus the closed ``Q_(rho - delta)``."""
    if not P.rho > delta > 2 * P.eps:
        raise ValueError("need rho > delta > 2 eps")
    band = 0.5 * delta
    if band < P.h * (1 - 1e-9):
        raise ValueError("delta / 2 must be at least one cell")
    F0 = init_from_datum(P.grid(), P.eps, band)
    return _solve(P, F0)


# --- sweeps -----------------------------------------------------------------


@dataclass
class DensityEstimate:
    x: tuple
    nu: tuple
    table: list  # dicts with rho, eps, N, density, converged, iterations, m_hat
    f_prime_est: float
    f_dprime_est: float
    trend_spread: float
    monotonicity: list
    richardson: float | None = None

    @property
    def monotone(self) -> bool:
        return all(m["ok"] for m in self.monotonicity)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["rho", "eps", "N", "density", "converged", "iterations"])
            for row in self.table:
                wr.writerow([repr(row["rho"]), repr(row["eps"]), row["N"], repr(row["density"]), int(row["converged"]), row["iterations"]])

    def summary(self) -> dict:
        return {
            "x": list(self.x),
            "nu": list(self.nu),
            "f_prime_est": self.f_prime_est,
            "f_dprime_est": self.f_dprime_est,
            "trend_spread": self.trend_spread,
            "monotone": self.monotone,
            "richardson": self.richardson,
            "rows": len(self.table),
        }


def _cell_task(P: CellProblem):
    r = solve_cell(P)
    return r.m_hat, r.density, r.outcome.converged, r.outcome.iterations, r.outcome.field.values


def extend_by_datum(F: ScalarField, target: Grid, eps: float) -> ScalarField:
    """Embed ``F`` into a larger concentric grid, filling the rest with the datum."""
    src = F.grid
    if target.h != src.h or not target.box.frame == src.box.frame or not np.allclose(target.box.x, src.box.x):
        raise ValueError("extension needs concentric grids with a common spacing")
    off = (src.box.lo - target.box.lo) / src.h
    ioff = np.rint(off).astype(int)
    if np.any(np.abs(off - ioff) > 1e-9) or np.any(ioff < 0):
        raise ValueError("source grid is not nested in the target grid")
    G = init_from_datum(target, eps)
    sl = tuple(slice(o, o + s) for o, s in zip(ioff, src.node_shape))
    G.values[sl] = F.values
    if not np.array_equal(G.values[G.mask], G.clamped_values):
        raise ValueError("inner field reaches into the clamped band of the larger cube")
    return G


def monotonicity_check(I: Integrand, x, nu, rho_small: float, rho_big: float, eps: float, h: float, F_small: ScalarField, m_small: float, m_big: float, tol_pg: float) -> dict:
    """``m(Q_rho') <= m(Q_rho) + c2 C_u (rho'^(n-1) - rho^(n-1)) + 10 tol_pg``.

    Besides the solved ``m(Q_rho')`` the explicit competitor (the
    ``rho``-solution extended by the datum) is evaluated and checked against
    the same bound.
    """
    n = len(nu)
    target = Grid(RotatedCube(x, rho_big, frame_for(nu)), h)
    ext = extend_by_datum(F_small, target, eps)
    e_ext = energy(I, ext, eps).total
    Cu = compute_Cu(I.W, p=I.p)
    rhs = m_small + I.c2 * Cu * (rho_big ** (n - 1) - rho_small ** (n - 1)) + 10 * tol_pg
    return {
        "rho": rho_small,
        "rho_prime": rho_big,
        "eps": eps,
        "m_rho": m_small,
        "m_rho_prime": m_big,
        "extension_energy": e_ext,
        "bound": rhs,
        "ok": bool(m_big <= rhs and e_ext <= rhs),
    }


def estimate_density(
    I: Integrand,
    x,
    nu,
    rho_list,
    eps_list,
    h: float,
    cfg: SolverConfig | None = None,
    oscillate: bool = False,
    richardson: bool = False,
    jobs: int = 1,
) -> DensityEstimate:
    """Sweep ``(rho, eps)`` at a common grid spacing ``h``.

    The estimate is the density at the finest corner: smallest ``eps`` for the
    smallest ``rho``. Consecutive radii are compared through the
    extension-by-datum construction. With ``oscillate`` the integrand is used
    as ``f(x / eps)``.
    """
    cfg = cfg or SolverConfig()
    rho_list = sorted(set(float(r) for r in rho_list), reverse=True)
    eps_list = sorted(set(float(e) for e in eps_list), reverse=True)
    problems = []
    for rho in rho_list:
        for eps in eps_list:
            if not rho > 2 * eps:
                log.warning("skipping infeasible pair rho=%g eps=%g", rho, eps)
                continue
            N = rho / h
            if abs(N - round(N)) > 1e-9:
                raise ValueError(f"rho={rho} is not a multiple of h={h}")
            Ieps = I.oscillating(eps) if oscillate else I
            problems.append(CellProblem(Ieps, x, nu, rho, eps, int(round(N)), cfg=cfg))
    results = pmap(_cell_task, problems, jobs)
    table = []
    fields = {}
    for P, (m, dens, conv, its, vals) in zip(problems, results):
        table.append({"rho": P.rho, "eps": P.eps, "N": P.N, "density": dens, "converged": conv, "iterations": its, "m_hat": m})
        F = P.initial_field()
        F.values = vals
        fields[(P.rho, P.eps)] = F
    if not table:
        raise ValueError("no feasible (rho, eps) pairs")
    rho_min = min(r["rho"] for r in table)
    finest = [r for r in table if r["rho"] == rho_min]
    finest.sort(key=lambda r: -r["eps"])
    est = finest[-1]["density"]
    last3 = [r["density"] for r in finest[-3:]]
    spread = (max(last3) - min(last3)) / abs(np.mean(last3)) if last3 else 0.0
    rich = None
    if richardson and len(finest) >= 2:
        # first-order extrapolation in eps from the two finest values
        (e1, d1), (e2, d2) = [(r["eps"], r["density"]) for r in finest[-2:]]
        rich = d2 + (d2 - d1) * e2 / (e1 - e2)
    mono = []
    rhos = sorted({r["rho"] for r in table})
    for eps in eps_list:
        for a, b in zip(rhos[:-1], rhos[1:]):
            if (a, eps) in fields and (b, eps) in fields:
                Ieps = I.oscillating(eps) if oscillate else I
                ma = next(r["m_hat"] for r in table if r["rho"] == a and r["eps"] == eps)
                mb = next(r["m_hat"] for r in table if r["rho"] == b and r["eps"] == eps)
                mono.append(monotonicity_check(Ieps, x, nu, a, b, eps, h, fields[(a, eps)], ma, mb, cfg.tol_pg))
    x = tuple(float(c) for c in np.asarray(x).ravel())
    nu = tuple(float(c) for c in np.asarray(nu).ravel())
    return DensityEstimate(x, nu, table, est, est, spread, mono, rich)


# --- rescaling identity -----------------------------------------------------


@dataclass
class RescalingReport:
    eps: float
    lhs: list
    rhs: list
    max_rel_dev: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_rel_dev <= self.tol


def check_rescaling(P: CellProblem, fields: int = 10, seed: int = 0, tol: float = 1e-12) -> RescalingReport:
    """``F_eps(u, Q_rho(x)) = eps^(n-1) F_1(u(eps .), Q_(rho/eps)(x/eps))``.

    The left side uses ``f(. / eps)`` at scale ``eps``; the right side the
    integrand itself at scale 1 on the rescaled grid. Fields are the datum
    plus uniform noise on the free nodes.
    """
    eps = P.eps
    n = P.n
    I = P.integrand
    left = DiscreteEnergy(I.oscillating(eps), P.grid(), eps)
    g1 = P.grid().rescaled(1.0 / eps)
    right = DiscreteEnergy(I, g1, 1.0)
    base = P.initial_field()
    rng = np.random.default_rng(seed)
    lhs, rhs = [], []
    worst = 0.0
    for k in range(fields):
        v = base.values.copy()
        if k > 0:
            free = base.free
            v[free] = np.clip(v[free] + rng.uniform(-0.5, 0.5, int(free.sum())), 0.0, 1.0)
        a = left.energy(v)
        b = eps ** (n - 1) * right.energy(v)
        lhs.append(a)
        rhs.append(b)
        worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
    return RescalingReport(eps, lhs, rhs, worst, tol)


def modica_mortola_comparison(I: Integrand, F: ScalarField, eps: float) -> dict:
    """``c1 MM(u) <= F(u) <= c2 MM(u)`` at a fixed field, ``MM`` the plain functional."""
    mm = energy(replace(I, coefficient=None, scale=1.0), F, eps).total
    f = energy(I, F, eps).total
    tol = 1e-12 * max(1.0, mm)
    return {"F": f, "MM": mm, "ok": bool(I.c1 * mm - tol <= f <= I.c2 * mm + tol)}


def modica_mortola_bracket(P: CellProblem) -> dict:
    """Solve ``f`` and the plain Modica-Mortola functional from the same start.

    The pointwise bracket is asserted on each solved field; the minimum values
    satisfy ``c1 m_MM <= m_f <= c2 m_MM`` up to solver tolerance.
    """
    Imm = replace(P.integrand, coefficient=None, scale=1.0, c1=1.0, c2=1.0)
    rf = solve_cell(P)
    rm = solve_cell(replace(P, integrand=Imm))
    at_f = modica_mortola_comparison(P.integrand, rf.outcome.field, P.eps)
    at_m = modica_mortola_comparison(P.integrand, rm.outcome.field, P.eps)
    c1, c2 = P.integrand.c1, P.integrand.c2
    rel = 1e-6
    ok_min = c1 * rm.m_hat * (1 - rel) <= rf.m_hat <= c2 * rm.m_hat * (1 + rel)
    return {"m_f": rf.m_hat, "m_MM": rm.m_hat, "pointwise_ok": at_f["ok"] and at_m["ok"], "minima_ok": bool(ok_min)}


def cell_from_dict(d: dict, I: Integrand, cfg: SolverConfig) -> CellProblem:
    eps = float(d.get("eps", 1.0 / 16))
    Iuse = I.oscillating(eps) if d.get("oscillate", False) else I
    nu = d.get("nu", (0.0, 1.0))
    n = len(nu)
    return CellProblem(
        Iuse,
        tuple(d.get("x", (0.0,) * n)),
        tuple(nu),
        float(d.get("rho", 1.0)),
        eps,
        int(d.get("N", 64)),
        d.get("delta_bc"),
        cfg,
        int(d.get("seed", 0)),
    )

