"""Rotated cubes and boxes, rotation frames, jump data and lattice intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .potentials import Profile

# primitive integer directions (numerator, denominator); signs are added below
_CATALOG_2D = [((1, 0), 1), ((0, 1), 1), ((3, 4), 5), ((4, 3), 5), ((5, 12), 13), ((12, 5), 13), ((8, 15), 17), ((15, 8), 17)]
_CATALOG_3D = [((1, 0, 0), 1), ((0, 1, 0), 1), ((0, 0, 1), 1), ((0, 3, 4), 5), ((3, 0, 4), 5), ((2, 2, 1), 3), ((1, 2, 2), 3)]


def _signed_variants(base):
    out = []
    for num, den in base:
        n = len(num)
        for signs in np.ndindex(*(2,) * n):
            v = tuple(c * (-1 if s else 1) for c, s in zip(num, signs))
            if (v, den) not in out:
                out.append((v, den))
    return out


CATALOG = {2: _signed_variants(_CATALOG_2D), 3: _signed_variants(_CATALOG_3D)}


def _exact_matrix(num, den):
    """Rotation frame as a matrix of Fractions for a rational direction."""
    nu = [Fraction(c, den) for c in num]
    n = len(nu)
    if n == 2:
        return [[nu[1], nu[0]], [-nu[0], nu[1]]]
    flip = nu[-1] < 0
    if flip:
        nu = [-c for c in nu]
    v = [Fraction(0)] * n
    v[-1] = Fraction(1)
    v = [a - b for a, b in zip(v, nu)]
    vv = sum(c * c for c in v)
    R = [[Fraction(int(i == j)) - (2 * v[i] * v[j] / vv if vv else 0) for j in range(n)] for i in range(n)]
    if flip:
        for i in range(n):
            R[i][-1] = -R[i][-1]
    return R


def _float_matrix(nu: np.ndarray) -> np.ndarray:
    n = nu.size
    if n == 2:
        return np.array([[nu[1], nu[0]], [-nu[0], nu[1]]])
    flip = nu[-1] < 0
    m = -nu if flip else nu
    v = -m.copy()
    # 1 - m_n without cancellation near the pole
    t = float(m[:-1] @ m[:-1])
    v[-1] = t / (1.0 + m[-1])
    vv = float(v @ v)
    R = np.eye(n) if vv < 1e-300 else np.eye(n) - 2.0 * np.outer(v, v) / vv
    if flip:
        R[:, -1] *= -1.0
    return R


@dataclass(frozen=True, eq=False)
class RotationFrame:
    """Orthogonal ``R`` with ``R e_n = nu``.

    In 2D the frame is the rotation ``[[nu2, nu1], [-nu1, nu2]]``; in 3D it is
    a Householder reflection, composed with ``diag(1, .., -1)`` on the lower
    hemisphere. Either way ``R_{-nu} Q = R_nu Q`` for centred cubes ``Q``.
    For catalogued rational directions ``M`` is the smallest integer > 2 with
    ``M R`` integer and ``num / den`` is the exact direction.
    """

    nu: tuple
    R: np.ndarray
    M: int | None = None
    num: tuple | None = None
    den: int | None = None

    @property
    def n(self) -> int:
        return len(self.nu)

    @property
    def rational(self) -> bool:
        return self.M is not None

    def MR_int(self) -> np.ndarray:
        if self.M is None:
            raise ValueError(f"direction {self.nu} is not in the rational catalog")
        exact = _exact_matrix(self.num, self.den)
        return np.array([[int(self.M * c) for c in row] for row in exact], dtype=np.int64)

    def __eq__(self, other):
        return isinstance(other, RotationFrame) and self.nu == other.nu and np.array_equal(self.R, other.R)

    def __hash__(self):
        return hash(self.nu)


def parse_direction(text: str, n: int = 2) -> np.ndarray:
    """``"p,q[,r]"`` (normalised) or an angle in degrees such as ``"30deg"``."""
    text = text.strip()
    if text.endswith("deg"):
        if n != 2:
            raise ValueError("angles are only accepted in 2D")
        a = math.radians(float(text[:-3]))
        return np.array([math.cos(a), math.sin(a)])
    parts = [float(s) for s in text.split(",")]
    return np.asarray(parts)


def direction_from_angle(deg: float) -> np.ndarray:
    a = math.radians(deg)
    return np.array([math.cos(a), math.sin(a)])


def frame_for(nu) -> RotationFrame:
    nu = np.asarray(nu, dtype=float).ravel()
    if nu.size not in (2, 3):
        raise ValueError("only n = 2 and n = 3 are supported")
    norm = float(np.linalg.norm(nu))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("direction must be a nonzero finite vector")
    nu = nu / norm
    for num, den in CATALOG[nu.size]:
        if np.max(np.abs(nu - np.asarray(num) / den)) < 1e-9:
            exact = _exact_matrix(num, den)
            R = np.array([[float(c) for c in row] for row in exact])
            lcm = 1
            for row in exact:
                for c in row:
                    lcm = lcm * c.denominator // math.gcd(lcm, c.denominator)
            M = lcm * (2 // lcm + 1)
            return RotationFrame(tuple(float(c) / den for c in num), R, M, tuple(num), den)
    return RotationFrame(tuple(float(c) for c in nu), _float_matrix(nu))


class RotatedBox:
    """Box ``{R z + x : lo <= z <= hi}`` in the local frame of ``frame``."""

    def __init__(self, x, frame: RotationFrame, lo, hi):
        self.x = np.asarray(x, dtype=float).ravel()
        self.frame = frame
        self.lo = np.asarray(lo, dtype=float).ravel()
        self.hi = np.asarray(hi, dtype=float).ravel()
        if not (self.x.size == self.lo.size == self.hi.size == frame.n):
            raise ValueError("dimension mismatch between centre, bounds and frame")
        if np.any(self.hi <= self.lo):
            raise ValueError("box must have positive side lengths")

    @property
    def n(self) -> int:
        return self.frame.n

    @property
    def sides(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def rho(self) -> float:
        return float(np.max(self.sides))

    @property
    def area(self) -> float:
        """(n-1)-volume of the cross-section orthogonal to ``nu``."""
        return float(np.prod(self.sides[:-1]))

    @property
    def nu(self) -> np.ndarray:
        return np.asarray(self.frame.nu)

    def to_physical(self, z) -> np.ndarray:
        return np.asarray(z) @ self.frame.R.T + self.x

    def to_local(self, y) -> np.ndarray:
        return (np.asarray(y) - self.x) @ self.frame.R

    def vertices(self) -> np.ndarray:
        corners = np.array([[self.hi[i] if b else self.lo[i] for i, b in enumerate(bits)] for bits in np.ndindex(*(2,) * self.n)])
        return self.to_physical(corners)

    def scaled(self, lam: float) -> "RotatedBox":
        return RotatedBox(lam * self.x, self.frame, lam * self.lo, lam * self.hi)

    def translated(self, shift) -> "RotatedBox":
        return RotatedBox(self.x + np.asarray(shift, dtype=float), self.frame, self.lo, self.hi)

    def same_as(self, other: "RotatedBox", tol: float = 0.0) -> bool:
        return (
            self.frame == other.frame
            and np.allclose(self.x, other.x, atol=tol, rtol=0)
            and np.allclose(self.lo, other.lo, atol=tol, rtol=0)
            and np.allclose(self.hi, other.hi, atol=tol, rtol=0)
        )

    def __repr__(self):
        return f"RotatedBox(x={self.x.tolist()}, nu={list(self.frame.nu)}, lo={self.lo.tolist()}, hi={self.hi.tolist()})"


class RotatedCube(RotatedBox):
    """``Q^nu_rho(x)``: the cube of side ``rho`` centred at ``x`` with a face normal ``nu``."""

    def __init__(self, x, rho: float, frame: RotationFrame):
        if not rho > 0:
            raise ValueError("side length must be positive")
        half = 0.5 * rho * np.ones(frame.n)
        super().__init__(x, frame, -half, half)

    def scaled(self, lam: float) -> "RotatedCube":
        return RotatedCube(lam * self.x, lam * self.rho, self.frame)


def jump_datum(x, nu, y) -> np.ndarray:
    """``u^nu_x(y)``: 1 where ``(y - x) . nu >= 0`` and 0 elsewhere."""
    t = (np.asarray(y, dtype=float) - np.asarray(x, dtype=float)) @ np.asarray(nu, dtype=float)
    return (t >= 0).astype(float)


def regularised_datum(x, nu, eps: float, y, profile: Profile | None = None) -> np.ndarray:
    if not eps > 0:
        raise ValueError("eps must be positive")
    t = (np.asarray(y, dtype=float) - np.asarray(x, dtype=float)) @ np.asarray(nu, dtype=float)
    return (profile or Profile())(t / eps)


@dataclass(frozen=True)
class LatticeInterval:
    """``I = [a, b)`` in Z^(n-1) and its box ``I_nu = M R (I x [-c, c))``."""

    a: tuple
    b: tuple
    frame: RotationFrame

    def __post_init__(self):
        if len(self.a) != len(self.b) or len(self.a) != self.frame.n - 1:
            raise ValueError("interval dimension must be n - 1")
        if any(bi <= ai for ai, bi in zip(self.a, self.b)):
            raise ValueError("degenerate interval")
        if not self.frame.rational:
            raise ValueError(
                f"direction {self.frame.nu} is not in the rational catalog; use direct cube estimates instead"
            )

    @property
    def M(self) -> int:
        return self.frame.M

    @property
    def c(self) -> float:
        return 0.5 * max(bi - ai for ai, bi in zip(self.a, self.b))

    @property
    def measure(self) -> int:
        return int(np.prod([bi - ai for ai, bi in zip(self.a, self.b)]))

    def lattice_vector(self, zp) -> np.ndarray:
        """``M R (z', 0)`` as an integer vector."""
        z = np.zeros(self.frame.n, dtype=np.int64)
        z[:-1] = np.asarray(zp, dtype=np.int64)
        return self.frame.MR_int() @ z

    def local_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Bounds of ``I_nu`` in the frame coordinates scaled by ``M`` (centred at the origin)."""
        M = self.M
        mid = [0.5 * (ai + bi) for ai, bi in zip(self.a, self.b)]
        lo = [M * (ai - m) for ai, m in zip(self.a, mid)] + [-M * self.c]
        hi = [M * (bi - m) for bi, m in zip(self.b, mid)] + [M * self.c]
        return np.array(lo, dtype=float), np.array(hi, dtype=float)

    def centre(self) -> np.ndarray:
        # M R (mid, 0) = (M R (a + b, 0)) / 2, exact in binary floating point
        z = np.zeros(self.frame.n, dtype=np.int64)
        z[:-1] = np.asarray(self.a, dtype=np.int64) + np.asarray(self.b, dtype=np.int64)
        return (self.frame.MR_int() @ z).astype(float) * 0.5

    def box(self) -> RotatedBox:
        lo, hi = self.local_bounds()
        return RotatedBox(self.centre(), self.frame, lo, hi)

    def translated(self, zp) -> "LatticeInterval":
        zp = tuple(int(v) for v in zp)
        return LatticeInterval(
            tuple(ai + z for ai, z in zip(self.a, zp)), tuple(bi + z for bi, z in zip(self.b, zp)), self.frame
        )


def lattice_interval(a, b, nu) -> LatticeInterval:
    a = (a,) if np.isscalar(a) else tuple(a)
    b = (b,) if np.isscalar(b) else tuple(b)
    frame = nu if isinstance(nu, RotationFrame) else frame_for(nu)
    return LatticeInterval(tuple(int(v) for v in a), tuple(int(v) for v in b), frame)
