"""Box-constrained minimisation by projected Barzilai-Borwein steps.

The core routine :func:`projected_bb` works on flat arrays; :func:`minimise`
and :func:`multi_start` wrap it for scalar fields with clamped nodes.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Callable

import numpy as np

if TYPE_CHECKING:
    from .fields import ScalarField

log = logging.getLogger(__name__)

BB_VARIANTS = ("BB1", "BB2", "alternating")


class SolverError(RuntimeError):
    """Raised when the energy or its gradient stops being finite."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 20000
    # sup-norm of the projected gradient, measured in the mass-scaled metric
    tol_pg: float = 1e-6
    tol_rel: float = 1e-9
    rel_window: int = 20
    bb_variant: str = "alternating"
    window: int = 10
    restarts: int = 1
    perturbation: float = 0.05
    sigma: float = 1e-4
    backtrack: float = 0.5
    step_min: float = 1e-10
    step_max: float = 1e10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol_pg <= 0 or self.tol_rel <= 0:
            raise ValueError("tolerances must be positive")
        if self.bb_variant not in BB_VARIANTS:
            raise ValueError(f"bb_variant must be one of {BB_VARIANTS}")
        if self.window < 1 or self.restarts < 1:
            raise ValueError("window and restarts must be >= 1")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BBInfo:
    energy: float
    iterations: int
    converged: bool
    pg_norm: float
    reason: str
    evaluations: int


def _pg_norm(x, gs, lo, hi):
    return float(np.max(np.abs(np.clip(x - gs, lo, hi) - x), initial=0.0))


def projected_bb(
    fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    cfg: SolverConfig,
    lo: float = 0.0,
    hi: float = 1.0,
    metric: float | np.ndarray = 1.0,
    step_unit: float = 1.0,
) -> tuple[np.ndarray, BBInfo]:
    """Minimise ``fun_grad`` over the box ``[lo, hi]^m``.

    ``metric`` is a diagonal mass; search directions use ``grad / metric`` so
    that the projected-gradient tolerance is resolution independent. Step
    lengths are kept inside ``[step_min, step_max] * step_unit``.

    Returns the lowest-energy iterate seen together with diagnostics.
    """
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    amin = cfg.step_min * step_unit
    amax = cfg.step_max * step_unit
    E, g = fun_grad(x)
    nevals = 1
    if x.size == 0:
        return x, BBInfo(float(E), 0, True, 0.0, "no free variables", nevals)
    if not np.isfinite(E) or not np.all(np.isfinite(g)):
        raise SolverError("non-finite initial energy or gradient", {"energy": E, "iteration": 0})

    gs = g / metric
    pg = _pg_norm(x, gs, lo, hi)
    alpha = float(np.clip(1.0 / max(pg, 1e-300), amin, amax))
    hist = deque([E], maxlen=cfg.window)
    best_x, best_E = x.copy(), E
    best_trace = [E]
    reason = "max_iters"
    converged = False
    k = 0
    for k in range(1, cfg.max_iters + 1):
        if pg <= cfg.tol_pg:
            converged, reason = True, "pg"
            k -= 1
            break
        d = np.clip(x - alpha * gs, lo, hi) - x
        gd = float(g @ d)
        if gd >= 0.0:
            # projected step is not a descent direction at this alpha; shrink
            alpha = max(amin, alpha * cfg.backtrack)
            if alpha <= amin:
                reason = "stalled"
                break
            continue
        Emax = max(hist)
        lam = 1.0
        while True:
            xn = x + lam * d
            En, gn = fun_grad(xn)
            nevals += 1
            if not np.isfinite(En) or not np.all(np.isfinite(gn)):
                raise SolverError(
                    "non-finite energy or gradient",
                    {"energy": En, "iteration": k, "step": lam * alpha, "best_energy": best_E},
                )
            if En <= Emax + cfg.sigma * lam * gd:
                break
            lam *= cfg.backtrack
            if lam < 1e-16:
                break
        if lam < 1e-16:
            reason = "line search failure"
            break

        s = xn - x
        y = gn - g
        sy = float(s @ y)
        x, g, E = xn, gn, En
        gs = g / metric
        hist.append(E)
        if E < best_E:
            best_x, best_E = x.copy(), E
        best_trace.append(best_E)

        if sy <= 0.0:
            alpha = min(amax, 10.0 * alpha)
        else:
            ms = s * metric
            bb1 = float(s @ ms) / sy
            gy = y / metric
            bb2 = sy / float(y @ gy)
            if cfg.bb_variant == "BB1":
                alpha = bb1
            elif cfg.bb_variant == "BB2":
                alpha = bb2
            else:
                alpha = bb1 if k % 2 else bb2
            alpha = float(np.clip(alpha, amin, amax))

        pg = _pg_norm(x, gs, lo, hi)
        w = cfg.rel_window
        if len(best_trace) > w:
            drop = best_trace[-1 - w] - best_trace[-1]
            if drop <= cfg.tol_rel * max(abs(best_trace[-1]), 1e-300):
                converged, reason = True, "rel"
                break
    else:
        k = cfg.max_iters

    if pg <= cfg.tol_pg and not converged:
        converged, reason = True, "pg"
    if reason == "pg" and E <= best_E + 1e-12 * max(abs(best_E), 1.0):
        # the stationary iterate wins over an earlier one that is only lower by rounding
        best_x, best_E = x.copy(), E
    best_g = fun_grad(best_x)[1]
    nevals += 1
    best_pg = _pg_norm(best_x, best_g / metric, lo, hi)
    info = BBInfo(float(best_E), k, converged, best_pg, reason, nevals)
    if not converged:
        log.warning("projected_bb stopped without convergence: %s", info)
    return best_x, info


@dataclass
class SolveOutcome:
    field: ScalarField
    energy: float
    iterations: int
    converged: bool
    pg_norm: float
    restarts_used: int
    reason: str = ""
    energy_initial: float = float("nan")

    def summary(self) -> dict:
        return {
            "energy": self.energy,
            "iterations": self.iterations,
            "converged": self.converged,
            "pg_norm": self.pg_norm,
            "restarts_used": self.restarts_used,
            "reason": self.reason,
        }


def minimise(integrand, F0, eps: float, cfg: SolverConfig | None = None) -> SolveOutcome:
    """Minimise the discrete energy over the free nodes of ``F0``.

    Clamped nodes keep their datum values and every iterate stays in [0, 1].
    The result never has higher energy than ``F0``.
    """
    from .fields import DiscreteEnergy

    cfg = cfg or SolverConfig()
    F0.check_admissible()
    problem = DiscreteEnergy(integrand, F0.grid, eps)
    free = ~F0.mask
    E0 = problem.energy(F0.values)
    if not free.any():
        return SolveOutcome(F0.copy(), E0, 0, True, 0.0, 1, "no free nodes", E0)

    base = F0.values.copy()

    def fg(xf):
        base[free] = xf
        E, G = problem.energy_and_gradient(base)
        return E, G[free]

    x, info = projected_bb(
        fg,
        F0.values[free],
        cfg,
        metric=problem.mass,
        step_unit=F0.grid.h**2,
    )
    out = F0.copy()
    out.values[free] = x
    E = problem.energy(out.values)
    if E > E0:
        # numerically impossible for the best iterate, but keep the guarantee
        out, E = F0.copy(), E0
    return SolveOutcome(out, E, info.iterations, info.converged, info.pg_norm, 1, info.reason, E0)


def multi_start(integrand, F0, eps: float, cfg: SolverConfig | None = None, seed: int = 0) -> SolveOutcome:
    """Best of ``cfg.restarts`` solves; restart ``r >= 1`` perturbs ``F0``.

    Perturbations are uniform on ``[-a, a]`` with ``a = cfg.perturbation``,
    drawn from a generator keyed by ``(seed, r)``, then clipped to [0, 1].
    """
    cfg = cfg or SolverConfig()
    best = minimise(integrand, F0, eps, cfg)
    free = ~F0.mask
    for r in range(1, cfg.restarts):
        rng = np.random.default_rng([seed, r])
        start = F0.copy()
        noise = rng.uniform(-cfg.perturbation, cfg.perturbation, size=int(free.sum()))
        start.values[free] = np.clip(start.values[free] + noise, 0.0, 1.0)
        trial = minimise(integrand, start, eps, cfg)
        if trial.energy < best.energy:
            best = replace(trial, energy_initial=best.energy_initial)
    best.restarts_used = cfg.restarts
    return best
