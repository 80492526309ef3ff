"""Nodal fields on rotated boxes and the discrete phase-field energy.

Each grid cell contributes ``h^n / eps * a(y_c) * (W(u_c) + |eps g|^p)``
where ``u_c`` is the mean of the ``2^n`` corner values, ``g`` the
forward-difference gradient taken from the lower corner and ``y_c`` the
physical cell centre.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .geometry import RotatedBox, RotatedCube, frame_for
from .integrands import Integrand
from .potentials import Profile

FIELD_MAGIC = b"PHCF"
FIELD_VERSION = 1


class Grid:
    """Uniform nodal grid of spacing ``h`` on a rotated box."""

    def __init__(self, box: RotatedBox, h: float):
        if not h > 0:
            raise ValueError("h must be positive")
        cells = box.sides / h
        shape = np.rint(cells).astype(int)
        if np.any(np.abs(cells - shape) > 1e-9 * np.maximum(1.0, cells)):
            raise ValueError(f"box sides {box.sides.tolist()} are not multiples of h = {h}")
        if np.any(shape < 8):
            raise ValueError("at least 8 cells per axis are required")
        self.box = box
        self.h = float(h)
        self.shape = tuple(int(s) for s in shape)

    @classmethod
    def cube(cls, x, rho: float, nu, N: int) -> "Grid":
        frame = nu if hasattr(nu, "R") else frame_for(nu)
        return cls(RotatedCube(x, rho, frame), rho / N)

    @property
    def n(self) -> int:
        return self.box.n

    @property
    def N(self):
        return self.shape[0] if len(set(self.shape)) == 1 else self.shape

    @property
    def node_shape(self) -> tuple:
        return tuple(s + 1 for s in self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.node_shape))

    def axes(self) -> list[np.ndarray]:
        return [self.box.lo[i] + self.h * np.arange(self.shape[i] + 1) for i in range(self.n)]

    def local_nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def local_centres(self) -> np.ndarray:
        ax = [a[:-1] + 0.5 * self.h for a in self.axes()]
        return np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1)

    def physical_nodes(self) -> np.ndarray:
        return self.box.to_physical(self.local_nodes())

    def boundary_distance(self) -> np.ndarray:
        """Sup-norm distance of every node to the box boundary, in local coordinates."""
        d = None
        for i, a in enumerate(self.axes()):
            di = np.minimum(a - self.box.lo[i], self.box.hi[i] - a)
            shape = [1] * self.n
            shape[i] = -1
            di = di.reshape(shape)
            d = di if d is None else np.minimum(d, di)
        return np.broadcast_to(d, self.node_shape).copy()

    def compatible(self, other: "Grid") -> bool:
        return self.shape == other.shape and self.h == other.h and self.box.same_as(other.box)

    def rescaled(self, lam: float) -> "Grid":
        return Grid(self.box.scaled(lam), lam * self.h)

    def __repr__(self):
        return f"Grid(shape={self.shape}, h={self.h}, box={self.box!r})"


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    mask: np.ndarray
    clamped_values: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape != self.grid.node_shape or self.mask.shape != self.grid.node_shape:
            raise ValueError("values and mask must match the grid node shape")
        if self.clamped_values is None:
            self.clamped_values = self.values[self.mask].copy()

    def check_admissible(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite values")
        if self.values.min(initial=0.0) < 0.0 or self.values.max(initial=1.0) > 1.0:
            raise ValueError("field values must lie in [0, 1]")
        if not np.array_equal(self.values[self.mask], self.clamped_values):
            raise ValueError("clamped nodes differ from their datum values")

    @property
    def free(self) -> np.ndarray:
        return ~self.mask

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.mask.copy(), self.clamped_values.copy())

    def with_values(self, values) -> "ScalarField":
        out = self.copy()
        out.values = np.asarray(values, dtype=float).copy()
        return out


@dataclass
class EnergyReport:
    total: float
    eps: float
    density: float
    per_cell: np.ndarray | None = None


def datum_values(grid: Grid, eps: float, profile: Profile | None = None) -> np.ndarray:
    """``u(z_n / eps)`` at every node: the regularised datum of a box centred on its interface."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    zn = grid.axes()[-1]
    prof = (profile or Profile())(zn / eps)
    return np.broadcast_to(prof, grid.node_shape).copy()


def init_from_datum(grid: Grid, eps: float, delta_bc: float | None = None, profile: Profile | None = None) -> ScalarField:
    """Datum-initialised field with the open boundary band clamped.

    A node is clamped when its sup-norm distance to the box boundary is
    strictly less than ``delta_bc`` (default ``2h``), i.e. the band is
    ``Q_rho minus the closed cube Q_(rho - 2 delta_bc)``. The datum is
    ``u((y - x) . nu / eps)`` with ``x`` the box centre, which in the local
    frame is ``u(z_n / eps)``.
    """
    h = grid.h
    delta_bc = 2.0 * h if delta_bc is None else float(delta_bc)
    if delta_bc < h * (1 - 1e-9):
        raise ValueError(f"clamp band {delta_bc} is thinner than one cell (h = {h})")
    if delta_bc >= 0.5 * float(np.min(grid.box.sides)):
        raise ValueError("clamp band must be narrower than half the box")
    values = datum_values(grid, eps, profile)
    mask = grid.boundary_distance() < delta_bc - 1e-9 * h
    return ScalarField(grid, values, mask)


def _corner(v: np.ndarray, bits) -> np.ndarray:
    return v[tuple(slice(1, None) if b else slice(None, -1) for b in bits)]


class DiscreteEnergy:
    """The discrete energy of an integrand on a fixed grid, with cached coefficients."""

    def __init__(self, integrand: Integrand, grid: Grid, eps: float):
        if not eps > 0:
            raise ValueError("eps must be positive")
        self.integrand = integrand
        self.grid = grid
        self.eps = float(eps)
        self.p = float(integrand.p)
        self.W = integrand.W
        n = grid.n
        self.mass = grid.h**n / self.eps
        self.corners = list(np.ndindex(*(2,) * n))
        if integrand.homogeneous:
            self.coef = None
        else:
            # split the centre into integer and fractional parts so that integer
            # translates of the box see bit-identical coefficients
            x = grid.box.x
            xi = np.floor(x)
            y = grid.box.frame.R @ np.moveaxis(grid.local_centres(), -1, 0).reshape(n, -1)
            y = y.T.reshape(grid.local_centres().shape) + (x - xi)
            self.coef = integrand.coefficient_at(y, shift=xi.astype(np.int64))

    def _parts(self, v: np.ndarray):
        n = self.grid.n
        h = self.grid.h
        uc = sum(_corner(v, b) for b in self.corners) / (1 << n)
        lower = _corner(v, (0,) * n)
        grads = []
        for i in range(n):
            up = tuple(1 if j == i else 0 for j in range(n))
            grads.append((_corner(v, up) - lower) / h)
        return uc, grads

    def cell_energies(self, v: np.ndarray) -> np.ndarray:
        uc, grads = self._parts(v)
        e2 = self.eps * self.eps
        r2 = sum(g * g for g in grads) * e2
        grad_term = r2 if self.p == 2.0 else r2 ** (0.5 * self.p)
        e = self.mass * (self.W(uc) + grad_term)
        return e if self.coef is None else e * self.coef

    def energy(self, v: np.ndarray) -> float:
        return float(np.sum(self.cell_energies(v)))

    def energy_and_gradient(self, v: np.ndarray) -> tuple[float, np.ndarray]:
        n = self.grid.n
        h = self.grid.h
        uc, grads = self._parts(v)
        e2 = self.eps * self.eps
        r2 = sum(g * g for g in grads) * e2
        a = self.mass if self.coef is None else self.mass * self.coef
        if self.p == 2.0:
            gterm = r2
            dg = 2.0 * e2 * a
        else:
            gterm = r2 ** (0.5 * self.p)
            with np.errstate(divide="ignore", invalid="ignore"):
                dg = np.where(r2 > 0, self.p * r2 ** (0.5 * self.p - 1.0), 0.0) * e2 * a
        E = float(np.sum(a * (self.W(uc) + gterm)))
        G = np.zeros_like(v)
        du = a * self.W.derivative(uc) / (1 << n)
        for b in self.corners:
            _corner(G, b)[...] += du
        lower = _corner(G, (0,) * n)
        for i in range(n):
            q = dg * grads[i] / h
            up = tuple(1 if j == i else 0 for j in range(n))
            _corner(G, up)[...] += q
            lower -= q
        return E, G


def energy(I: Integrand, F: ScalarField, eps: float, per_cell: bool = False) -> EnergyReport:
    prob = DiscreteEnergy(I, F.grid, eps)
    cells = prob.cell_energies(F.values)
    total = float(np.sum(cells))
    return EnergyReport(total, float(eps), total / F.grid.box.area, cells if per_cell else None)


def energy_gradient(I: Integrand, F: ScalarField, eps: float, full: bool = False) -> np.ndarray:
    """Gradient of the discrete energy; only free nodes unless ``full``."""
    _, G = DiscreteEnergy(I, F.grid, eps).energy_and_gradient(F.values)
    return G if full else G[F.free]


def rescale_field(F: ScalarField, lam: float) -> ScalarField:
    """Same nodal values on the box scaled by ``lam``: ``u_lam(z) = u(z / lam)``."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    if lam == 1.0:
        return F.copy()
    return ScalarField(F.grid.rescaled(lam), F.values.copy(), F.mask.copy(), F.clamped_values.copy())


# --- gluing -----------------------------------------------------------------


@dataclass
class GlueResult:
    field: ScalarField
    energy: float
    index: int
    energies: list
    F_u: float
    F_v: float
    K_eps: float
    omega: float
    bound: float
    layers: int
    lipschitz: float

    @property
    def holds(self) -> bool:
        return self.energy <= self.bound * (1 + 1e-12) + 1e-14

    def summary(self) -> dict:
        return {
            "energy": self.energy,
            "bound": self.bound,
            "omega": self.omega,
            "K_eps": self.K_eps,
            "F_u_Aprime": self.F_u,
            "F_v_B": self.F_v,
            "index": self.index,
            "layers": self.layers,
            "holds": self.holds,
        }


def _centre_radius(grid: Grid, pts: np.ndarray) -> np.ndarray:
    mid = 0.5 * (grid.box.lo + grid.box.hi)
    return np.max(np.abs(pts - mid), axis=-1)


def glue(I: Integrand, u: ScalarField, v: ScalarField, eps: float, alpha: float, alpha_prime: float, layers: int | None = None) -> GlueResult:
    """Join ``u`` (living on ``A'``) and ``v`` (on ``B``) by cutoff interpolation.

    ``A`` and ``A'`` are the concentric cubes of half-sides ``alpha <
    alpha_prime`` around the box centre; ``B`` is the set of cells outside
    ``A``, so that ``A u B`` is the whole grid. ``layers`` shells lie between
    ``A`` and ``A'`` (default ``floor(2 / eps)``, capped so that each shell is
    at least one cell thick). The cutoff ``phi_i`` drops linearly from 1 to 0
    across shell ``i``; the result is the ``w^i`` of least energy.

    The returned bound is ``(1 + K eps)(F(u, A') + F(v, B)) + omega`` with
    ``K eps = Mhat / N`` and
    ``omega = Mhat / N * (Lip^p eps^(p-1) int_S |u - v|^p + sum_i int_{S_i} W(w^i) / eps)``.
    """
    g = u.grid
    if not g.compatible(v.grid):
        raise ValueError("u and v must live on the same grid")
    if not 0 < alpha < alpha_prime:
        raise ValueError("need 0 < alpha < alpha_prime")
    if alpha_prime > 0.5 * float(np.min(g.box.sides)):
        raise ValueError("A' must fit inside the box")
    h = g.h
    d = alpha_prime - alpha
    cap = max(1, int(np.floor(d / h)) - 2)
    N = int(np.floor(2.0 / eps)) if layers is None else int(layers)
    N = min(N, cap)
    if N < 2:
        raise ValueError("at least 2 layers are required; widen the gap between A and A'")
    p = I.p
    c1, c2 = I.c1, I.c2
    Mhat = max(2 ** (p - 1) * c2 / c1, 2 ** (p - 1) * c2, c2)
    step = d / (N + 2)
    lip = 1.0 / step

    prob = DiscreteEnergy(I, g, eps)
    r_node = _centre_radius(g, g.local_nodes())
    r_cell = _centre_radius(g, g.local_centres())
    in_Ap = r_cell < alpha_prime
    in_B = r_cell > alpha
    in_S = in_Ap & in_B
    cu = prob.cell_energies(u.values)
    cv = prob.cell_energies(v.values)
    F_u = float(np.sum(cu[in_Ap]))
    F_v = float(np.sum(cv[in_B]))

    diff = np.abs(u.values - v.values) ** p
    # sup over corners keeps the cell integral an upper bound
    dmax = np.max(np.stack([_corner(diff, b) for b in prob.corners]), axis=0)
    int_S = float(np.sum(dmax[in_S])) * h**g.n

    best = None
    energies = []
    wsum = 0.0
    for i in range(1, N + 1):
        s_i = alpha + i * step
        phi = np.clip((s_i + step - r_node) / step, 0.0, 1.0)
        w = phi * u.values + (1.0 - phi) * v.values
        ce = prob.cell_energies(w)
        E = float(np.sum(ce))
        energies.append(E)
        mixed = np.zeros(g.shape, dtype=bool)
        pmin = np.min(np.stack([_corner(phi, b) for b in prob.corners]), axis=0)
        pmax = np.max(np.stack([_corner(phi, b) for b in prob.corners]), axis=0)
        mixed = (pmax > 0) & (pmin < 1)
        uc = sum(_corner(w, b) for b in prob.corners) / (1 << g.n)
        wsum += float(np.sum(I.W(uc)[mixed])) * h**g.n
        if best is None or E < best[1]:
            best = (w, E, i)
    w, E, i_best = best
    K_eps = Mhat / N
    omega = K_eps * (lip**p * eps ** (p - 1) * int_S + wsum / eps)
    bound = (1.0 + K_eps) * (F_u + F_v) + omega

    out_mask = u.mask & v.mask & (u.values == v.values)
    out = ScalarField(g, w, out_mask)
    return GlueResult(out, E, i_best, energies, F_u, F_v, K_eps, omega, bound, N, lip)


# --- export -----------------------------------------------------------------


def write_field_csv(F: ScalarField, path) -> None:
    """One row per node: local and physical coordinates, value, clamp flag."""
    n = F.grid.n
    z = F.grid.local_nodes().reshape(-1, n)
    y = F.grid.physical_nodes().reshape(-1, n)
    vals = F.values.ravel()
    mask = F.mask.ravel()
    names = "xyz"[:n]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"z{k}" for k in names] + [f"y{k}" for k in names] + ["u", "clamped"])
        for k in range(vals.size):
            wr.writerow([repr(float(c)) for c in z[k]] + [repr(float(c)) for c in y[k]] + [repr(float(vals[k])), int(mask[k])])


def write_field_binary(F: ScalarField, path, eps: float) -> None:
    """Header ``magic, version, n, N, rho, nu[n], eps`` then the values and mask.

    Layout (little endian): 4-byte magic ``PHCF``, uint32 version, uint32 n,
    uint32 N (cells along axis 0), float64 rho, n float64 for nu, float64 eps,
    then ``(N+1)^n`` float64 values in C order and as many uint8 mask bytes.
    """
    g = F.grid
    n = g.n
    if len(set(g.shape)) != 1:
        raise ValueError("binary dumps are defined for cubes only")
    head = FIELD_MAGIC + struct.pack("<III", FIELD_VERSION, n, g.shape[0])
    head += struct.pack("<d", g.box.rho) + struct.pack(f"<{n}d", *g.box.frame.nu) + struct.pack("<d", eps)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(F.values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(F.mask, dtype=np.uint8).tobytes())


def read_field_binary(path) -> dict:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != FIELD_MAGIC:
        raise ValueError("not a field dump")
    version, n, N = struct.unpack_from("<III", data, 4)
    off = 16
    rho = struct.unpack_from("<d", data, off)[0]
    off += 8
    nu = struct.unpack_from(f"<{n}d", data, off)
    off += 8 * n
    eps = struct.unpack_from("<d", data, off)[0]
    off += 8
    count = (N + 1) ** n
    values = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape((N + 1,) * n)
    off += 8 * count
    mask = np.frombuffer(data, dtype=np.uint8, count=count, offset=off).reshape((N + 1,) * n).astype(bool)
    return {"version": version, "n": n, "N": N, "rho": rho, "nu": nu, "eps": eps, "values": values, "mask": mask}
