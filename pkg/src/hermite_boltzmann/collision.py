"""Quadratic, BGK and hybrid collision coefficients."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .basis import ExpansionCenter, maxwellian_batch, n_coeffs, project_coefficients
from .moments import MixtureState, SpeciesMoments, moments_batch
from .tensor import CollisionTensor

log = logging.getLogger(__name__)


class CollisionConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BgkParams:
    nu: float
    u: np.ndarray
    T: float


def _check_order(tensor: CollisionTensor, f):
    N0 = tensor.size
    if f.shape[-1] < N0:
        raise ValueError(f"coefficients of length {f.shape[-1]} cannot feed a tensor of order {tensor.M0}")
    return f[..., :N0]


def quadratic_Q(tensor: CollisionTensor, f_i, f_j, T_bar: float = 1.0, chunk: int = 2048):
    """Q_alpha = T_bar^{C/2} sum A_{alpha lambda kappa}(0, 1) f_i,lambda f_j,kappa.

    ``T_bar`` is the temperature of species i's expansion center (the tensor
    was assembled with that center at temperature 1). Inputs may be batched
    as (B, N); ``T_bar`` then broadcasts to (B,).
    """
    f_i = _check_order(tensor, np.asarray(f_i, dtype=float))
    f_j = _check_order(tensor, np.asarray(f_j, dtype=float))
    N0 = tensor.size
    scale = np.asarray(T_bar, dtype=float) ** (0.5 * tensor.C) if tensor.C else 1.0
    if f_i.ndim == 1:
        out = tensor.matrix @ np.outer(f_i, f_j).ravel()
        return out * scale
    B = f_i.shape[0]
    out = np.empty((B, N0))
    for s in range(0, B, chunk):
        e = min(B, s + chunk)
        X = np.einsum("bl,bk->blk", f_i[s:e], f_j[s:e]).reshape(e - s, N0 * N0)
        out[s:e] = (tensor.matrix @ X.T).T
    if np.ndim(scale):
        out *= scale[:, None]
    else:
        out *= scale
    return out


def mean_velocity_temperature(rho_i, n_i, u_i, T_i, rho_j, n_j, u_j, T_j, nu_ij, nu_ji):
    """Shared BGK velocity and temperature of a species pair (array-friendly)."""
    u_i, u_j = np.asarray(u_i, dtype=float), np.asarray(u_j, dtype=float)
    a, b = rho_i * nu_ij, rho_j * nu_ji
    u = (np.asarray(a)[..., None] * u_i + np.asarray(b)[..., None] * u_j) / np.asarray(a + b)[..., None]
    den = n_i * nu_ij + n_j * nu_ji
    uu = np.sum(u * u, axis=-1)
    T = (n_i * nu_ij * T_i + n_j * nu_ji * T_j) / den + (
        a * (np.sum(u_i * u_i, axis=-1) - uu) + b * (np.sum(u_j * u_j, axis=-1) - uu)
    ) / (3 * den)
    return u, T


def bgk_mixture_params(mom_i: SpeciesMoments, mom_j: SpeciesMoments, nu_ij: float, nu_ji: float) -> BgkParams:
    if mom_i.n <= 0 or mom_j.n <= 0:
        raise ValueError("BGK parameters need positive densities")
    if nu_ij <= 0 or nu_ji <= 0:
        raise ValueError("collision frequencies must be positive")
    u, T = mean_velocity_temperature(
        mom_i.rho, mom_i.n, mom_i.u, mom_i.T, mom_j.rho, mom_j.n, mom_j.u, mom_j.T, nu_ij, nu_ji
    )
    return BgkParams(float(nu_ij), u, float(T))


def bgk_Q(f_i, params: BgkParams, n_i: float, n_j: float, center_i: ExpansionCenter, M: int, mass_i: float = 1.0):
    """nu n_j [n_i (projected Maxwellian)_alpha - f_alpha] over |alpha| <= M.

    The target Maxwellian has velocity ``params.u`` and temperature
    ``params.T / mass_i``.
    """
    if params.T <= 0:
        raise ValueError(f"BGK target temperature must be > 0, got {params.T}")
    f_i = np.asarray(f_i, dtype=float)[: n_coeffs(M)]
    e0 = np.zeros(n_coeffs(M))
    e0[0] = n_i
    target = project_coefficients(e0, ExpansionCenter(tuple(params.u), params.T / mass_i), center_i, M)
    return params.nu * n_j * (target - f_i)


def damping_rate(tensor: CollisionTensor, zero_tol: float = 0.0) -> float:
    """Minimum real part of the spectra of the (lambda, kappa) slices A_alpha.

    Rows or columns that vanish contribute a zero eigenvalue and are peeled
    off before the dense eigensolve. Entries with magnitude below
    ``zero_tol`` times the slice maximum count as zero for peeling only.
    """
    if tensor.M0 < 1:
        return 0.0
    N = tensor.size
    worst = 0.0  # the alpha = 0 slice is identically zero
    for a in range(1, N):
        row = tensor.matrix.getrow(a)
        if row.nnz == 0:
            continue
        mat = row.toarray().reshape(N, N)
        big = np.abs(mat) > zero_tol * np.abs(mat).max()
        keep = np.ones(N, bool)
        while True:
            sub = big[np.ix_(keep, keep)]
            dead = ~(sub.any(axis=1) & sub.any(axis=0))
            if not dead.any():
                break
            idx = np.nonzero(keep)[0]
            keep[idx[dead]] = False
            if not keep.any():
                break
        if not keep.any():
            continue
        try:
            ev = np.linalg.eigvals(mat[np.ix_(keep, keep)])
        except np.linalg.LinAlgError as exc:
            raise ArithmeticError(f"eigenvalue iteration failed for alpha index {a}") from exc
        worst = min(worst, float(ev.real.min()))
    tensor.damping = worst
    return worst


def hybrid_Q(
    tensor: CollisionTensor,
    f_i,
    f_j,
    bgk: BgkParams,
    M: int,
    M0: int,
    T_bar: float,
    n_i: float,
    n_j: float,
    center_i: ExpansionCenter,
    mass_i: float = 1.0,
    nu_M0: float | None = None,
):
    """Quadratic coefficients up to order M0, damped BGK above."""
    if M0 < 1:
        raise CollisionConfigError("the quadratic band needs M0 >= 1")
    if M < M0:
        raise CollisionConfigError(f"M={M} must be >= M0={M0}")
    if tensor.M0 != M0:
        raise CollisionConfigError(f"tensor order {tensor.M0} != M0={M0}")
    out = np.zeros(n_coeffs(M))
    N0 = n_coeffs(M0)
    out[:N0] = quadratic_Q(tensor, f_i, f_j, T_bar)
    if M > M0:
        rate = abs(tensor.damping_rate if nu_M0 is None else nu_M0)
        out[N0:] = rate * bgk_Q(f_i, bgk, n_i, n_j, center_i, M, mass_i)[N0:]
    return out


@dataclass
class CollisionSetup:
    """Everything needed to evaluate the mixture collision operator.

    ``tensors[i][j]`` holds the tensor for species i colliding with j;
    ``nu`` is the BGK frequency matrix of the tail.
    """

    masses: np.ndarray
    kn: np.ndarray
    tensors: dict
    M: int
    M0: int
    nu: np.ndarray | None = None
    substeps: int = 1

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        self.kn = np.asarray(self.kn, dtype=float)
        s = len(self.masses)
        if self.nu is None:
            self.nu = np.ones((s, s))
        self.nu = np.asarray(self.nu, dtype=float)
        if self.M0 < 1:
            raise CollisionConfigError("M0 must be >= 1")
        if self.M < self.M0:
            raise CollisionConfigError("M must be >= M0")
        for i in range(s):
            for j in range(s):
                if (i, j) not in self.tensors:
                    raise CollisionConfigError(f"no collision tensor for species pair ({i}, {j})")
                t = self.tensors[i, j]
                if t.M0 != self.M0:
                    raise CollisionConfigError(f"tensor ({i}, {j}) has order {t.M0}, expected {self.M0}")
                if not np.isclose(t.r, self.masses[j] / self.masses[i], rtol=1e-12):
                    raise CollisionConfigError(f"tensor ({i}, {j}) mass ratio {t.r} does not match the species")


def collision_rhs_batch(f, u_bar, calT, setup: CollisionSetup):
    """Collision increments for many cells.

    ``f`` is a list (one per species) of (B, N) arrays expanded about
    [u_bar, calT / m_i]; ``u_bar`` is (B, 3) and ``calT`` (B,).
    Returns a list of (B, N) arrays df/dt.
    """
    s = len(setup.masses)
    M, M0 = setup.M, setup.M0
    N0 = n_coeffs(M0)
    B = f[0].shape[0]
    zeta = [calT / setup.masses[i] for i in range(s)]
    need_tail = M > M0
    if need_tail:
        mom = [moments_batch(f[i], u_bar, zeta[i], setup.masses[i], need_heat_flux=False) for i in range(s)]
    out = [np.zeros((B, n_coeffs(M))) for _ in range(s)]
    for i in range(s):
        for j in range(s):
            t = setup.tensors[i, j]
            w = 1.0 / setup.kn[i, j]
            out[i][:, :N0] += w * quadratic_Q(t, f[i], f[j], zeta[i])
            if not need_tail:
                continue
            mi, mj = mom[i], mom[j]
            u, T = mean_velocity_temperature(
                mi["rho"], mi["n"], mi["u"], mi["T"], mj["rho"], mj["n"], mj["u"], mj["T"],
                setup.nu[i, j], setup.nu[j, i],
            )
            if np.any(T <= 0):
                raise ArithmeticError("non-positive BGK mixture temperature")
            target = maxwellian_batch(mi["n"], u, T / setup.masses[i], u_bar, zeta[i], M)
            tail = setup.nu[i, j] * mj["n"][:, None] * (target[:, N0:] - f[i][:, N0:])
            out[i][:, N0:] += w * abs(t.damping_rate) * tail
    return out


def collision_rhs(state: MixtureState, kn, tensors, M: int, M0: int, nu=None):
    """df/dt of every species for a single state.

    All species must already sit on the centers [u, calT / m_i].
    """
    masses = [d.mass for d in state.species]
    setup = CollisionSetup(masses, kn, tensors, M, M0, nu)
    c0 = state.species[0].center
    calT = c0.T * masses[0]
    for d in state.species:
        if not np.allclose(d.center.u_array, c0.u_array) or not np.isclose(d.center.T * d.mass, calT):
            raise CollisionConfigError("species centers are not [u, calT / m_i] with a shared u, calT")
    f = [d.coeffs[None, :] for d in state.species]
    res = collision_rhs_batch(f, c0.u_array[None, :], np.array([calT]), setup)
    return [r[0] for r in res]
