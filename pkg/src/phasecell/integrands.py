"""Integrands ``f(y, u, xi) = a(y) * (W(u) + |xi|^p)`` and their coefficient fields."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .potentials import DoubleWell

COEFFICIENT_KINDS = ("constant", "periodic-laminate", "periodic-checkerboard", "random-checkerboard")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix(x: np.ndarray) -> np.ndarray:
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def cell_hash(master_seed: int, cells: np.ndarray) -> np.ndarray:
    """Stateless 64-bit hash of ``(master_seed, z)`` for integer cells ``z``.

    ``cells`` has shape ``(..., n)``; the result has shape ``(...)``.
    """
    cells = np.asarray(cells, dtype=np.int64)
    with np.errstate(over="ignore"):
        h = _splitmix(np.full(cells.shape[:-1], np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF)))
        for k in range(cells.shape[-1]):
            h = _splitmix(h ^ cells[..., k].view(np.uint64))
    return h


@dataclass(frozen=True)
class RandomCheckerboard:
    """I.i.d. values on unit cells, chosen uniformly from ``values``.

    ``offset`` realises the shift ``tau_z``: the field with offset ``z``
    evaluated at ``y`` equals the unshifted field at ``y + z``.
    """

    master_seed: int
    values: tuple[float, ...] = (0.5, 2.0)
    offset: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "offset", tuple(int(z) for z in self.offset))
        if not self.values or min(self.values) <= 0:
            raise ValueError("checkerboard values must be positive")

    def cell_values(self, cells) -> np.ndarray:
        cells = np.asarray(cells, dtype=np.int64)
        if self.offset:
            cells = cells + np.asarray(self.offset, dtype=np.int64)
        idx = cell_hash(self.master_seed, cells) % np.uint64(len(self.values))
        return np.asarray(self.values)[idx.astype(np.int64)]

    def __call__(self, y) -> np.ndarray:
        return self.cell_values(np.floor(np.asarray(y, dtype=float)).astype(np.int64))

    def shifted(self, z) -> "RandomCheckerboard":
        z = tuple(int(v) for v in z)
        base = self.offset or (0,) * len(z)
        return replace(self, offset=tuple(a + b for a, b in zip(base, z)))


def shift_random(rf: RandomCheckerboard, z) -> RandomCheckerboard:
    return rf.shifted(z)


@dataclass(frozen=True)
class CoefficientField:
    """Scalar coefficient ``a(y) > 0``.

    ``periodic-laminate`` splits the unit period along ``axis`` into
    ``len(values)`` equal layers; ``periodic-checkerboard`` splits the unit
    cell into ``subdivisions^n`` sub-cells with ``values`` in C order.
    """

    kind: str = "constant"
    values: tuple[float, ...] = (1.0,)
    axis: int = 0
    subdivisions: int = 2
    random: RandomCheckerboard | None = None

    def __post_init__(self):
        if self.kind not in COEFFICIENT_KINDS:
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        if self.kind == "random-checkerboard":
            if self.random is None:
                raise ValueError("random-checkerboard needs a RandomCheckerboard")
            object.__setattr__(self, "values", self.random.values)
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values or min(self.values) <= 0:
            raise ValueError("coefficient values must be positive")
        if self.kind == "periodic-checkerboard":
            if self.subdivisions < 1:
                raise ValueError("subdivisions must be >= 1")
            k, m = self.subdivisions, len(self.values)
            while m % k == 0 and m > 1 and k > 1:
                m //= k
            if m != 1:
                raise ValueError(f"checkerboard needs subdivisions^n values, got {len(self.values)}")

    @property
    def a_lo(self) -> float:
        return min(self.values)

    @property
    def a_hi(self) -> float:
        return max(self.values)

    @property
    def periodic(self) -> bool:
        return self.kind != "random-checkerboard"

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind == "constant":
            return np.full(y.shape[:-1], self.values[0])
        if self.kind == "periodic-laminate":
            frac = y[..., self.axis] - np.floor(y[..., self.axis])
            k = len(self.values)
            idx = np.minimum((frac * k).astype(np.int64), k - 1)
            return np.asarray(self.values)[idx]
        if self.kind == "periodic-checkerboard":
            k = self.subdivisions
            n = y.shape[-1]
            if len(self.values) != k**n:
                raise ValueError(f"checkerboard needs {k**n} values in dimension {n}")
            frac = y - np.floor(y)
            sub = np.minimum((frac * k).astype(np.int64), k - 1)
            flat = np.ravel_multi_index(tuple(sub[..., i] for i in range(n)), (k,) * n)
            return np.asarray(self.values)[flat]
        return self.random(y)

    def shifted(self, z) -> "CoefficientField":
        if self.kind != "random-checkerboard":
            raise ValueError("only random fields carry a shift action")
        return replace(self, random=self.random.shifted(z))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "values": list(self.values)}
        if self.kind == "periodic-laminate":
            d["axis"] = self.axis
        if self.kind == "periodic-checkerboard":
            d["subdivisions"] = self.subdivisions
        if self.kind == "random-checkerboard":
            d["seed"] = self.random.master_seed
            d["offset"] = list(self.random.offset)
        return d


@dataclass(frozen=True)
class Integrand:
    """``f(y, u, xi) = a(y / scale) * (W(u) + |xi|^p)``.

    ``scale`` realises the oscillating integrands ``f(x / eps, u, xi)``; it is
    1 for the integrand itself.
    """

    W: DoubleWell = field(default_factory=DoubleWell)
    p: float = 2.0
    c1: float = 1.0
    c2: float = 1.0
    coefficient: CoefficientField | None = None
    scale: float = 1.0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must be > 1")
        if not 0 < self.c1 <= self.c2:
            raise ValueError("growth constants must satisfy 0 < c1 <= c2")

    @property
    def homogeneous(self) -> bool:
        return self.coefficient is None

    def coefficient_at(self, y, shift=None) -> np.ndarray:
        """``a(y / scale)``; ``shift`` is an optional integer vector added to ``y``.

        With ``scale == 1`` the integer part is applied after locating the unit
        cell, so integer translates give bit-identical coefficients.
        """
        y = np.asarray(y, dtype=float)
        if self.coefficient is None:
            return np.ones(y.shape[:-1])
        if shift is not None and self.scale == 1.0:
            c = self.coefficient
            if c.kind == "random-checkerboard":
                cells = np.floor(y).astype(np.int64) + np.asarray(shift, dtype=np.int64)
                return c.random.cell_values(cells)
            return c(y)
        if shift is not None:
            y = y + np.asarray(shift, dtype=float)
        if self.scale != 1.0:
            y = y / self.scale
        return self.coefficient(y)

    def __call__(self, y, u, xi):
        xi = np.asarray(xi, dtype=float)
        return self.coefficient_at(y) * (self.W(u) + np.sum(xi * xi, axis=-1) ** (0.5 * self.p))

    def du(self, y, u, xi):
        return self.coefficient_at(y) * self.W.derivative(u)

    def dxi(self, y, u, xi):
        xi = np.asarray(xi, dtype=float)
        r2 = np.sum(xi * xi, axis=-1)
        if self.p == 2.0:
            w = np.full_like(r2, 2.0)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(r2 > 0, self.p * r2 ** (0.5 * self.p - 1.0), 0.0)
        return (self.coefficient_at(y) * w)[..., None] * xi

    def oscillating(self, eps: float) -> "Integrand":
        """``f_k(x, u, xi) = f(x / eps, u, xi)``."""
        if self.coefficient is None:
            return self
        return replace(self, scale=self.scale * eps)

    def shifted(self, z) -> "Integrand":
        if self.coefficient is None:
            raise ValueError("homogeneous integrand has no shift action")
        return replace(self, coefficient=self.coefficient.shifted(z))

    def with_constants(self) -> "Integrand":
        if self.coefficient is None:
            return replace(self, c1=1.0, c2=1.0)
        return replace(self, c1=self.coefficient.a_lo, c2=self.coefficient.a_hi)

    def to_dict(self) -> dict:
        d = {
            "potential": {"kind": self.W.kind, "coefficients": list(self.W.coefficients)},
            "p": self.p,
            "c1": self.c1,
            "c2": self.c2,
            "variant": "homogeneous" if self.coefficient is None else "coefficient",
        }
        if self.coefficient is not None:
            d["coefficient"] = self.coefficient.to_dict()
        if self.scale != 1.0:
            d["scale"] = self.scale
        return d


_VARIANT_ALIASES = {
    "laminate": "periodic-laminate",
    "checkerboard": "periodic-checkerboard",
    "random": "random-checkerboard",
}


def _potential_from(spec) -> DoubleWell:
    if spec is None:
        return DoubleWell()
    if isinstance(spec, DoubleWell):
        return spec
    if isinstance(spec, str):
        return DoubleWell(spec, (1.0,))
    return DoubleWell(spec.get("kind", "quartic"), tuple(spec.get("coefficients", (1.0,))))


def make_integrand(spec: dict) -> Integrand:
    """Build an integrand from a plain description.

    Keys: ``potential`` (name or ``{kind, coefficients}``), ``p``, ``c1``,
    ``c2``, ``variant`` (``homogeneous``, ``constant``, ``laminate``,
    ``checkerboard``, ``random``) and the coefficient parameters ``value``,
    ``values``, ``axis``, ``subdivisions``, ``seed``. Coefficient variants
    replace ``c1, c2`` by the coefficient range.
    """
    spec = dict(spec)
    W = _potential_from(spec.get("potential"))
    p = float(spec.get("p", 2.0))
    c1 = float(spec.get("c1", 1.0))
    c2 = float(spec.get("c2", max(1.0, c1)))
    if not p > 1:
        raise ValueError("p must be > 1")
    if c1 <= 0:
        raise ValueError("c1 must be positive")
    if c1 > c2:
        raise ValueError("c1 must not exceed c2")
    variant = spec.get("variant", "homogeneous")
    variant = _VARIANT_ALIASES.get(variant, variant)
    if variant == "homogeneous":
        return Integrand(W, p, 1.0, 1.0)
    if variant == "constant":
        coef = CoefficientField("constant", (float(spec.get("value", 1.0)),))
    elif variant == "periodic-laminate":
        coef = CoefficientField("periodic-laminate", tuple(spec.get("values", (2.0, 1.0))), axis=int(spec.get("axis", 0)))
    elif variant == "periodic-checkerboard":
        coef = CoefficientField(
            "periodic-checkerboard",
            tuple(spec.get("values", (0.5, 2.0, 2.0, 0.5))),
            subdivisions=int(spec.get("subdivisions", 2)),
        )
    elif variant == "random-checkerboard":
        rf = RandomCheckerboard(int(spec.get("seed", 0)), tuple(spec.get("values", (0.5, 2.0))), tuple(spec.get("offset", ())))
        coef = CoefficientField("random-checkerboard", rf.values, random=rf)
    else:
        raise ValueError(f"unknown integrand variant {variant!r}")
    return Integrand(W, p, coef.a_lo, coef.a_hi, coef)


def growth_probes(n: int, count: int = 1000, seed: int = 0):
    """Fixed probe triples ``(y, u, xi)`` for the growth-bound checks."""
    rng = np.random.default_rng(seed)
    y = rng.uniform(-20.0, 20.0, size=(count, n))
    u = rng.uniform(-0.5, 1.5, size=count)
    u[: count // 10] = rng.choice([0.0, 1.0], size=count // 10)
    xi = rng.normal(size=(count, n)) * rng.choice([0.0, 0.1, 1.0, 10.0], size=(count, 1))
    return y, u, xi


def check_growth(I: Integrand, n: int = 2, count: int = 1000, seed: int = 0) -> tuple[bool, float]:
    """Sampled ``c1 M <= f <= c2 M`` with ``M = W(u) + |xi|^p``; returns (ok, worst violation)."""
    y, u, xi = growth_probes(n, count, seed)
    f = I(y, u, xi)
    base = I.W(u) + np.sum(xi * xi, axis=-1) ** (0.5 * I.p)
    lo = I.c1 * base - f
    hi = f - I.c2 * base
    worst = float(max(lo.max(), hi.max(), 0.0))
    return worst <= 1e-12 * max(1.0, float(base.max())), worst
