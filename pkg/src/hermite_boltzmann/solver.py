"""Time stepping: finite-volume convection, local collision steps, homogeneous RK4.

A spatial state is a list (one entry per species) of arrays shaped
``grid.shape + (N,)`` holding Hermite coefficients about fixed per-species
convection centers.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_genlaguerre

from .basis import ExpansionCenter, index_set, largest_hermite_root, n_coeffs, project_batch, project_coefficients
from .collision import CollisionSetup, collision_rhs_batch
from .moments import moments_batch

log = logging.getLogger(__name__)

GHOSTS = 2


class SolverConfigError(ValueError):
    pass


class RealizabilityError(ArithmeticError):
    pass


class DegenerateWallError(ArithmeticError):
    pass


@dataclass
class SolverConfig:
    M: int
    M0: int
    cfl: float = 0.45
    reconstruction: str = "weno3"
    substeps: int = 1
    t_end: float = 1.0
    output_every: float | None = None
    wall_mode: str = "hll"

    def __post_init__(self):
        if not 0 < self.cfl < 1:
            raise SolverConfigError(f"CFL number must lie in (0, 1), got {self.cfl}")
        if not self.M >= self.M0 >= 1:
            raise SolverConfigError(f"need M >= M0 >= 1, got M={self.M}, M0={self.M0}")
        if self.reconstruction not in ("linear", "weno3", "constant"):
            raise SolverConfigError(f"unknown reconstruction {self.reconstruction!r}")
        if self.substeps < 1:
            raise SolverConfigError("substeps must be >= 1")
        if self.wall_mode not in ("hll", "half-range"):
            raise SolverConfigError(f"unknown wall mode {self.wall_mode!r}")


@dataclass(frozen=True)
class Wall:
    """Fully diffuse wall with temperature T and velocity u (dimensionless)."""

    T: float
    u: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.T <= 0:
            raise SolverConfigError("wall temperature must be > 0")


@dataclass
class GridField:
    """Uniform 1-D or 2-D grid of cell averages.

    ``boundaries[d]`` is either ``"periodic"`` or a pair of walls
    (low side, high side) for spatial direction d.
    """

    shape: tuple
    dx: tuple
    masses: np.ndarray
    centers: list  # ExpansionCenter per species (convection frame)
    f: list  # arrays grid.shape + (N,)
    boundaries: list = field(default_factory=list)
    time: float = 0.0

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.dx = tuple(float(h) for h in self.dx)
        self.masses = np.asarray(self.masses, dtype=float)
        if len(self.shape) not in (1, 2) or len(self.dx) != len(self.shape):
            raise SolverConfigError("grids must be 1-D or 2-D with one cell size per direction")
        if any(h <= 0 for h in self.dx):
            raise SolverConfigError("cell sizes must be positive")
        if not self.boundaries:
            self.boundaries = ["periodic"] * len(self.shape)
        for i, a in enumerate(self.f):
            if a.shape[:-1] != self.shape:
                raise SolverConfigError(f"species {i}: array shape {a.shape} does not match grid {self.shape}")

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def M(self) -> int:
        from .basis import order_of

        return order_of(self.f[0].shape[-1])

    def copy(self) -> "GridField":
        return GridField(self.shape, self.dx, self.masses.copy(), list(self.centers), [a.copy() for a in self.f],
                         list(self.boundaries), self.time)


@dataclass
class ConvectionOperator:
    A: sp.csr_matrix
    lam_L: float
    lam_R: float
    direction: int

    def apply(self, f):
        """A_d acting on the last axis of ``f``."""
        shp = f.shape
        return (self.A @ f.reshape(-1, shp[-1]).T).T.reshape(shp)


def build_convection_operator(M: int, center: ExpansionCenter, d: int) -> ConvectionOperator:
    """Matrix of v_d in the Hermite basis about ``center``, truncated at order M."""
    if M < 0:
        raise ValueError("M must be >= 0")
    iset = index_set(M)
    s = np.sqrt(center.T)
    ud = center.u[d]
    rows, cols, vals = [], [], []
    for a in range(iset.size):
        rows.append(a), cols.append(a), vals.append(ud)
        lo = iset.down[d, a]
        if lo >= 0:
            rows.append(a), cols.append(lo), vals.append(s)
        hi = iset.up[d, a]
        if hi >= 0:
            rows.append(a), cols.append(hi), vals.append((iset.alphas[a, d] + 1) * s)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(iset.size, iset.size))
    c = largest_hermite_root(M + 1)
    return ConvectionOperator(A, ud - c * s, ud + c * s, d)


# --- reconstruction & flux -------------------------------------------------

WENO_EPS = 1e-6
WENO_G1, WENO_G2 = 1.0 / 3.0, 2.0 / 3.0


def reconstruct(f_minus, f_0, f_plus, kind: str = "linear"):
    """Face states of the middle cell: (value at its right face, value at its left face)."""
    if kind == "constant":
        return f_0.copy(), f_0.copy()
    if kind == "linear":
        half = 0.25 * (f_plus - f_minus)
        return f_0 + half, f_0 - half
    if kind == "weno3":
        dm = f_0 - f_minus
        dp = f_plus - f_0
        bm = (WENO_EPS + dm * dm) ** 2
        bp = (WENO_EPS + dp * dp) ** 2
        wl1, wl2 = WENO_G1 / bm, WENO_G2 / bp
        wr1, wr2 = WENO_G1 / bp, WENO_G2 / bm
        fl = (wl1 * (1.5 * f_0 - 0.5 * f_minus) + wl2 * (0.5 * f_0 + 0.5 * f_plus)) / (wl1 + wl2)
        fr = (wr1 * (1.5 * f_0 - 0.5 * f_plus) + wr2 * (0.5 * f_0 + 0.5 * f_minus)) / (wr1 + wr2)
        return fl, fr
    raise ValueError(f"unknown reconstruction {kind!r}")


def hll_flux(op: ConvectionOperator, fL, fR):
    lL, lR = op.lam_L, op.lam_R
    if lL > lR:
        raise ValueError("wave speeds out of order")
    if lL >= 0:
        return op.apply(fL)
    if lR <= 0:
        return op.apply(fR)
    return (lR * op.apply(fL) - lL * op.apply(fR) + lR * lL * (fR - fL)) / (lR - lL)


def cfl_dt(config: SolverConfig, grid: GridField) -> float:
    c = largest_hermite_root(config.M + 1)
    worst = 0.0
    for center in grid.centers:
        rate = sum((abs(center.u[d]) + c * np.sqrt(center.T)) / grid.dx[d] for d in range(grid.ndim))
        worst = max(worst, rate)
    return config.cfl / worst


# --- walls -----------------------------------------------------------------


def wall_maxwellian(wall: Wall, mass: float, center: ExpansionCenter, M: int):
    """Unit-density wall Maxwellian expressed about the convection center."""
    e0 = np.zeros(n_coeffs(M))
    e0[0] = 1.0
    return project_coefficients(e0, ExpansionCenter(tuple(wall.u), wall.T / mass), center, M)


def _half_range_flux(coeffs, center: ExpansionCenter, d: int, outward_negative: bool, n_pts: int = 20):
    """Half-space particle flux of |v_d| f on one side of v_d = 0.

    Only the pure-direction coefficients f_{k e_d} survive integration over
    the transverse velocities. With t = x^2 / 2 the half-line integral of
    x p(x) exp(-x^2/2) becomes a Laguerre integral: the even part of p is a
    polynomial in t, the odd part sqrt(t) times one, so 20-point rules with
    exponents 0 and 1/2 are exact for M < 40.
    """
    from numpy.polynomial.hermite_e import hermevander

    M = order_of_len(coeffs.shape[-1])
    if abs(center.u[d]) > 1e-14:
        raise SolverConfigError("half-range wall flux needs zero normal velocity in the convection center")
    iset = index_set(M)
    idx = [iset.index(tuple(k if e == d else 0 for e in range(3))) for k in range(M + 1)]
    pure = coeffs[..., idx]
    sign = -1.0 if outward_negative else 1.0
    t0, w0 = roots_genlaguerre(n_pts, 0.0)
    t1, w1 = roots_genlaguerre(n_pts, 0.5)
    x0, x1 = np.sqrt(2 * t0), np.sqrt(2 * t1)
    even = 0.5 * (hermevander(sign * x0, M) + hermevander(-sign * x0, M))
    odd = 0.5 * (hermevander(sign * x1, M) - hermevander(-sign * x1, M))
    vals = w0 @ even + (w1 / np.sqrt(t1)) @ odd
    return np.sqrt(center.T) * (pure @ vals) / np.sqrt(2 * np.pi)


def order_of_len(N: int) -> int:
    from .basis import order_of

    return order_of(N)


def maxwell_wall_ghost(interior, wall: Wall, mass: float, center: ExpansionCenter, op: ConvectionOperator,
                       side: str, mode: str = "hll", P=None):
    """Ghost-cell coefficients n_w * P for a diffuse wall.

    ``interior`` holds the cells adjacent to the wall, shape (..., N).
    With ``mode="hll"`` the density n_w zeroes the mass component of the
    HLL flux through the wall face evaluated with the piecewise-constant
    states (ghost, interior). ``mode="half-range"`` balances the half-space
    fluxes of the interior state and the wall Maxwellian instead.
    """
    M = order_of_len(interior.shape[-1])
    if P is None:
        P = wall_maxwellian(wall, mass, center, M)
    AP0 = op.apply(P)[0]
    Af0 = op.apply(interior)[..., 0]
    f0 = interior[..., 0]
    lL, lR = op.lam_L, op.lam_R
    if mode == "hll":
        # mass flux F0 = a + b * n_w
        if side == "low":  # ghost on the left
            if lL >= 0:
                a, b = 0.0 * f0, AP0 + 0.0 * f0
            elif lR <= 0:
                a, b = Af0, 0.0 * f0
            else:
                a = (-lL * Af0 + lR * lL * f0) / (lR - lL)
                b = (lR * AP0 - lR * lL) / (lR - lL) + 0.0 * f0
        else:
            if lL >= 0:
                a, b = Af0, 0.0 * f0
            elif lR <= 0:
                a, b = 0.0 * f0, AP0 + 0.0 * f0
            else:
                a = (lR * Af0 - lR * lL * f0) / (lR - lL)
                b = (-lL * AP0 + lR * lL) / (lR - lL) + 0.0 * f0
        if np.any(np.abs(b) < 1e-300):
            raise DegenerateWallError("wall density cannot balance the mass flux")
        n_w = -a / b
    else:
        d = op.direction
        toward_low = side == "low"
        out_flux = _half_range_flux(interior, center, d, outward_negative=toward_low)
        in_flux = _half_range_flux(P, center, d, outward_negative=not toward_low)
        if np.all(np.abs(out_flux) < 1e-300) and np.all(f0 == 0):
            raise DegenerateWallError("empty interior next to the wall")
        n_w = out_flux / in_flux
    return n_w[..., None] * P


# --- convection --------------------------------------------------------------


@dataclass
class Transport:
    """Per-species convection operators and cached wall Maxwellians."""

    ops: list  # ops[i][d]
    walls: dict  # (i, d, side) -> P


def build_transport(grid: GridField, M: int) -> Transport:
    ops = [[build_convection_operator(M, c, d) for d in range(grid.ndim)] for c in grid.centers]
    walls = {}
    for d, bc in enumerate(grid.boundaries):
        if bc == "periodic":
            continue
        for side, wall in zip(("low", "high"), bc):
            for i, c in enumerate(grid.centers):
                walls[i, d, side] = wall_maxwellian(wall, grid.masses[i], c, M)
    return Transport(ops, walls)


def _fluxes_along(f, i, d, grid: GridField, tr: Transport, kind: str, wall_mode: str):
    """Face fluxes along axis d: shape with n_d + 1 faces on that axis."""
    op = tr.ops[i][d]
    a = np.moveaxis(f, d, 0)
    n = a.shape[0]
    bc = grid.boundaries[d]
    if bc == "periodic":
        ext = np.concatenate([a[-GHOSTS:], a, a[:GHOSTS]], axis=0)
    else:
        lo = maxwell_wall_ghost(a[0], bc[0], grid.masses[i], grid.centers[i], op, "low", wall_mode, tr.walls[i, d, "low"])
        hi = maxwell_wall_ghost(a[-1], bc[1], grid.masses[i], grid.centers[i], op, "high", wall_mode, tr.walls[i, d, "high"])
        ext = np.concatenate([lo[None], lo[None], a, hi[None], hi[None]], axis=0)
    # cells -1 .. n in extended indexing 1 .. n+2
    fl, fr = reconstruct(ext[0:n + 2], ext[1:n + 3], ext[2:n + 4], kind)
    # face k+1/2 for k = -1..n-1: left state = fl of cell k, right state = fr of cell k+1
    left = fl[0:n + 1]
    right = fr[1:n + 2]
    if bc != "periodic":
        left = left.copy()
        right = right.copy()
        left[0] = ext[1]
        right[0] = ext[2]
        left[n] = ext[n + 1]
        right[n] = ext[n + 2]
    F = hll_flux(op, left, right)
    return np.moveaxis(F, 0, d)


def convection_step(grid: GridField, tr: Transport, dt: float, config: SolverConfig) -> GridField:
    limit = cfl_dt(config, grid) / config.cfl
    if dt > limit * (1 + 1e-12):
        raise SolverConfigError(f"time step {dt:.3e} violates the CFL bound {limit:.3e}")
    out = grid.copy()
    for i, f in enumerate(grid.f):
        new = f.copy()
        for d in range(grid.ndim):
            F = _fluxes_along(f, i, d, grid, tr, config.reconstruction, config.wall_mode)
            Fm = np.moveaxis(F, d, 0)
            div = (Fm[1:] - Fm[:-1]) / grid.dx[d]
            new -= dt * np.moveaxis(div, 0, d)
        out.f[i] = new
    return out


def wall_mass_flux(grid: GridField, tr: Transport, config: SolverConfig) -> float:
    """Largest wall-face mass flux relative to the thermal flux n sqrt(T) of the adjacent cell."""
    worst = 0.0
    for d, bc in enumerate(grid.boundaries):
        if bc == "periodic":
            continue
        for i, f in enumerate(grid.f):
            F = np.moveaxis(_fluxes_along(f, i, d, grid, tr, config.reconstruction, config.wall_mode), d, 0)
            a = np.moveaxis(f, d, 0)
            scale = np.sqrt(grid.centers[i].T)
            for face, cell in ((F[0], a[0]), (F[-1], a[-1])):
                rel = np.abs(face[..., 0]) / (np.abs(cell[..., 0]) * scale)
                worst = max(worst, float(np.max(rel)))
    return worst


# --- collisions ---------------------------------------------------------------


def cell_frames(f_list, centers, masses):
    """Mixture velocity and total average temperature of every cell."""
    parts = [moments_batch(f, c.u_array, c.T, m, need_heat_flux=False) for f, c, m in zip(f_list, centers, masses)]
    n = sum(p["n"] for p in parts)
    rho = sum(p["rho"] for p in parts)
    u = sum(p["rho"][..., None] * p["u"] for p in parts) / rho[..., None]
    E = sum(p["E"] for p in parts)
    calT = (E - 0.5 * rho * np.sum(u * u, axis=-1)) / (1.5 * n)
    return u, calT, parts


def collision_step(grid: GridField, setup: CollisionSetup, dt: float, substeps: int = 1, threads: int = 1) -> GridField:
    """Project to local frames, relax with forward Euler, project back."""
    s = len(grid.f)
    N = grid.f[0].shape[-1]
    M = setup.M
    flat = [f.reshape(-1, N) for f in grid.f]
    u, calT, parts = cell_frames(flat, grid.centers, grid.masses)
    bad = np.nonzero(~(calT > 0))[0]
    if len(bad):
        raise RealizabilityError(f"non-positive total temperature in cell {int(bad[0])} (value {calT[bad[0]]:.3g})")
    for i, p in enumerate(parts):
        bad = np.nonzero(~(p["n"] > 0))[0]
        if len(bad):
            raise RealizabilityError(f"species {i}: non-positive density in cell {int(bad[0])}")
    local = [
        project_batch(flat[i], grid.centers[i].u_array, grid.centers[i].T, u, calT / grid.masses[i], M)
        for i in range(s)
    ]
    h = dt / substeps

    def relax(sl):
        loc = [a[sl] for a in local]
        for _ in range(substeps):
            rhs = collision_rhs_batch(loc, u[sl], calT[sl], setup)
            loc = [a + h * r for a, r in zip(loc, rhs)]
        return loc

    B = flat[0].shape[0]
    if threads > 1 and B > 1:
        bounds = np.linspace(0, B, threads + 1).astype(int)
        slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ThreadPoolExecutor(threads) as pool:
            pieces = list(pool.map(relax, slices))
        local = [np.concatenate([p[i] for p in pieces]) for i in range(s)]
    else:
        local = relax(slice(None))
    out = grid.copy()
    for i in range(s):
        back = project_batch(local[i], u, calT / grid.masses[i], grid.centers[i].u_array, grid.centers[i].T, M)
        out.f[i] = back.reshape(grid.f[i].shape)
    return out


def advance(grid: GridField, config: SolverConfig, setup: CollisionSetup, tr: Transport | None = None,
            dt: float | None = None, threads: int = 1) -> GridField:
    """One time step: convection, then the local collision step."""
    if tr is None:
        tr = build_transport(grid, config.M)
    if dt is None:
        dt = cfl_dt(config, grid)
    mid = convection_step(grid, tr, dt, config)
    out = collision_step(mid, setup, dt, config.substeps, threads)
    out.time = grid.time + dt
    return out


# --- homogeneous problems -------------------------------------------------------


def integrate_homogeneous_rk4(f_list, calT: float, setup: CollisionSetup, dt: float, t_end: float,
                              callback=None, u=(0.0, 0.0, 0.0)):
    """Classical RK4 for df/dt = sum_j Q^{ij} / Kn_ij at fixed centers [u, calT / m_i].

    ``callback(t, f_list)`` is called after every step (and at t = 0).
    """
    f = [np.asarray(a, dtype=float)[None, :] for a in f_list]
    ub = np.asarray(u, dtype=float)[None, :]
    cT = np.array([calT], dtype=float)

    def rhs(g):
        return collision_rhs_batch(g, ub, cT, setup)

    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise SolverConfigError(f"t_end={t_end} is not a multiple of dt={dt}")
    if callback is not None:
        callback(0.0, [a[0] for a in f])
    for step in range(n_steps):
        k1 = rhs(f)
        k2 = rhs([a + 0.5 * dt * k for a, k in zip(f, k1)])
        k3 = rhs([a + 0.5 * dt * k for a, k in zip(f, k2)])
        k4 = rhs([a + dt * k for a, k in zip(f, k3)])
        f = [a + dt / 6 * (p + 2 * q + 2 * r + w) for a, p, q, r, w in zip(f, k1, k2, k3, k4)]
        if callback is not None:
            callback((step + 1) * dt, [a[0] for a in f])
    return [a[0] for a in f]
