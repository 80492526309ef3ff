"""Double-well potentials, transition profiles and the 1D surface constants."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P

from .solver import SolverConfig, projected_bb

POTENTIAL_KINDS = ("quartic", "quadratic-wells", "custom-polynomial")

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(7)


@dataclass(frozen=True)
class DoubleWell:
    """A potential vanishing exactly at 0 and 1.

    ``quartic``: ``c0 * t^2 (1-t)^2``.
    ``quadratic-wells``: ``c0 * min(t, 1-t)^2``.
    ``custom-polynomial``: ``t^2 (1-t)^2 * P(t)`` with ``P`` given by its
    ascending coefficients; ``P`` must be positive on the sampled range.
    """

    kind: str = "quartic"
    coefficients: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if not self.coefficients:
            raise ValueError("at least one coefficient is required")
        if self.kind != "custom-polynomial" and self.coefficients[0] <= 0:
            raise ValueError("potential scale must be positive")
        t = np.arange(-500, 1501) * 1e-3
        t = t[(np.abs(t) > 1e-12) & (np.abs(t - 1) > 1e-12)]
        if np.any(self(t) <= 0):
            raise ValueError("potential must be positive away from 0 and 1")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        c = self.coefficients
        if self.kind == "quartic":
            return c[0] * (t * (1.0 - t)) ** 2
        if self.kind == "quadratic-wells":
            return c[0] * np.minimum(t, 1.0 - t) ** 2
        return (t * (1.0 - t)) ** 2 * P.polyval(t, c)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        c = self.coefficients
        q = t * (1.0 - t)
        dq = 1.0 - 2.0 * t
        if self.kind == "quartic":
            return c[0] * 2.0 * q * dq
        if self.kind == "quadratic-wells":
            m = np.minimum(t, 1.0 - t)
            return c[0] * 2.0 * m * np.sign(0.5 - t)
        return 2.0 * q * dq * P.polyval(t, c) + q * q * P.polyval(t, P.polyder(c))

    def scaled(self, lam: float) -> "DoubleWell":
        if self.kind == "custom-polynomial":
            return DoubleWell(self.kind, tuple(lam * c for c in self.coefficients))
        return DoubleWell(self.kind, (lam * self.coefficients[0],) + self.coefficients[1:])

    def is_symmetric(self) -> bool:
        t = np.linspace(0.0, 1.0, 101)
        return bool(np.allclose(self(t), self(1.0 - t), rtol=1e-13, atol=0.0))


@dataclass(frozen=True)
class Profile:
    """Cubic smoothstep ``3s^2 - 2s^3``, ``s = clamp((t/width + 1)/2, 0, 1)``.

    With the default ``width=1`` the profile is exactly 0 for ``t <= -1`` and
    1 for ``t >= 1``. Other widths only serve change-of-variables checks.
    """

    width: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("profile width must be positive")

    def __call__(self, t):
        s = np.clip((np.asarray(t, dtype=float) / self.width + 1.0) * 0.5, 0.0, 1.0)
        return s * s * (3.0 - 2.0 * s)

    def derivative(self, t):
        s = np.clip((np.asarray(t, dtype=float) / self.width + 1.0) * 0.5, 0.0, 1.0)
        return 3.0 * s * (1.0 - s) / self.width


def eval_profile(t, profile: Profile | None = None):
    return (profile or Profile())(t)


def _gauss_legendre(fun, breaks) -> float:
    breaks = np.asarray(breaks, dtype=float)
    a, b = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (b - a)
    x = 0.5 * (a + b) + half * _GL_NODES[None, :]
    return float(np.sum(half * _GL_WEIGHTS[None, :] * fun(x)))


def _graded_breaks(panels_per_half: int, power: float = 6.0) -> np.ndarray:
    # algebraic refinement toward both endpoints of [0, 1]; resolves the
    # t^a endpoint behaviour of W^((p-1)/p) for every p > 1
    k = np.arange(panels_per_half + 1)
    left = 0.5 * (k / panels_per_half) ** power
    return np.concatenate([left, 1.0 - left[::-1][1:]])


def compute_cp(W: DoubleWell, p: float, quad_points: int = 256) -> float:
    """``p (p-1)^((1-p)/p) * int_0^1 W^((p-1)/p)``: the optimal 1D transition cost."""
    if not p > 1:
        raise ValueError("p must be > 1")
    if quad_points < 64:
        raise ValueError("quad_points must be >= 64")
    return _compute_cp_cached(W, float(p), int(quad_points))


@lru_cache(maxsize=256)
def _compute_cp_cached(W: DoubleWell, p: float, quad_points: int) -> float:
    per_half = max(2, math.ceil(quad_points / 14))
    q = (p - 1.0) / p
    integral = _gauss_legendre(lambda t: np.maximum(W(t), 0.0) ** q, _graded_breaks(per_half))
    return p * (p - 1.0) ** ((1.0 - p) / p) * integral


def compute_Cu(W: DoubleWell, profile: Profile | None = None, p: float = 2.0, panels: int = 64) -> float:
    """Cost ``int (W(u) + |u'|^p) dt`` of a fixed transition profile."""
    if not p > 1:
        raise ValueError("p must be > 1")
    return _compute_Cu_cached(W, profile or Profile(), float(p), int(panels))


@lru_cache(maxsize=256)
def _compute_Cu_cached(W: DoubleWell, profile: Profile, p: float, panels: int) -> float:
    w = profile.width
    breaks = np.linspace(-w, w, panels + 1)
    return _gauss_legendre(lambda t: W(profile(t)) + np.abs(profile.derivative(t)) ** p, breaks)


@dataclass
class Profile1D:
    cost: float
    t: np.ndarray
    values: np.ndarray
    iterations: int
    converged: bool
    pg_norm: float
    reason: str


def profile_energy_1d(W: DoubleWell, p: float, v: np.ndarray, h: float) -> tuple[float, np.ndarray]:
    """Discrete ``sum h (W(mid) + |dv/h|^p)`` and its gradient in all nodes."""
    m = 0.5 * (v[1:] + v[:-1])
    d = np.diff(v) / h
    ad = np.abs(d)
    E = float(np.sum(h * (W(m) + ad**p)))
    gm = 0.5 * h * W.derivative(m)
    gd = p * ad ** (p - 1.0) * np.sign(d)
    g = np.zeros_like(v)
    g[:-1] += gm - gd
    g[1:] += gm + gd
    return E, g


def optimal_profile_1d(
    W: DoubleWell,
    p: float = 2.0,
    grid: int = 512,
    half_width: float = 5.0,
    cfg: SolverConfig | None = None,
) -> Profile1D:
    """Minimise the 1D transition energy with ``v(-T) = 0``, ``v(T) = 1``.

    The discretisation is piecewise linear with midpoint evaluation of ``W``,
    i.e. the one-dimensional section of the field energy. For the quartic
    well and ``p = 2`` the midpoint rule over-integrates the concave
    ``sqrt(W)`` so the discrete cost stays above ``c_p``; the remaining slack
    is O(h^2) plus a truncation term of order ``exp(-2T)``.
    """
    if grid < 128:
        raise ValueError("grid must be >= 128")
    if half_width < 5.0:
        raise ValueError("half_width must be >= 5")
    if not p > 1:
        raise ValueError("p must be > 1")
    cfg = cfg or SolverConfig(max_iters=200000, tol_pg=1e-9, tol_rel=1e-14, rel_window=50)
    h = 2.0 * half_width / grid
    t = np.linspace(-half_width, half_width, grid + 1)
    v = Profile()(t)
    v[0], v[-1] = 0.0, 1.0

    def fg(xf):
        v[1:-1] = xf
        E, g = profile_energy_1d(W, p, v, h)
        return E, g[1:-1]

    x, info = projected_bb(fg, v[1:-1].copy(), cfg, metric=h, step_unit=h * h)
    v[1:-1] = x
    cost, _ = profile_energy_1d(W, p, v, h)
    return Profile1D(cost, t, v.copy(), info.iterations, info.converged, info.pg_norm, info.reason)
