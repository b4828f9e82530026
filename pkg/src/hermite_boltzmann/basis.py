"""Weighted Hermite basis in three velocity dimensions.

Coefficient vectors are dense over the total-degree set {alpha : |alpha| <= M},
ordered by degree and then lexicographically. ``IndexSet`` owns that
enumeration together with the neighbour tables used by the recursions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial, sqrt

import numpy as np


def n_coeffs(M: int) -> int:
    """Size of the total-degree set in three dimensions."""
    return (M + 1) * (M + 2) * (M + 3) // 6


def _degree_block(k: int) -> list[tuple[int, int, int]]:
    return [(a, b, k - a - b) for a in range(k + 1) for b in range(k - a + 1)]


class IndexSet:
    """Graded-lexicographic enumeration of multi-indices with |alpha| <= M."""

    def __init__(self, M: int):
        if M < 0:
            raise ValueError(f"order must be non-negative, got {M}")
        self.M = M
        alphas = [a for k in range(M + 1) for a in _degree_block(k)]
        self.alphas = np.array(alphas, dtype=np.int64).reshape(-1, 3)
        self.size = len(alphas)
        self.orders = self.alphas.sum(axis=1)
        self._pos = {a: i for i, a in enumerate(alphas)}
        # down[d][i] -> index of alpha - e_d (or -1); up[d][i] -> alpha + e_d
        self.down = np.full((3, self.size), -1, dtype=np.int64)
        self.down2 = np.full((3, self.size), -1, dtype=np.int64)
        self.up = np.full((3, self.size), -1, dtype=np.int64)
        for i, a in enumerate(alphas):
            for d in range(3):
                b = list(a)
                b[d] -= 1
                if b[d] >= 0:
                    self.down[d, i] = self._pos[tuple(b)]
                b[d] -= 1
                if b[d] >= 0:
                    self.down2[d, i] = self._pos[tuple(b)]
                b[d] += 3
                j = self._pos.get(tuple(b))
                if j is not None:
                    self.up[d, i] = j
        self.factorials = np.array(
            [factorial(a) * factorial(b) * factorial(c) for a, b, c in alphas], dtype=float
        )

    def index(self, alpha) -> int:
        try:
            return self._pos[tuple(int(x) for x in alpha)]
        except KeyError:
            raise KeyError(f"{tuple(alpha)} is not in the order-{self.M} index set") from None

    def __contains__(self, alpha) -> bool:
        return tuple(int(x) for x in alpha) in self._pos

    def __len__(self) -> int:
        return self.size

    def __iter__(self):
        return (tuple(int(x) for x in a) for a in self.alphas)

    def unit(self, d: int) -> int:
        e = [0, 0, 0]
        e[d] = 1
        return self._pos[tuple(e)]


@lru_cache(maxsize=None)
def index_set(M: int) -> IndexSet:
    return IndexSet(M)


def linear_index(alpha) -> int:
    """Dense position of alpha in the graded-lex order, independent of M."""
    a1, a2, a3 = (int(x) for x in alpha)
    if min(a1, a2, a3) < 0:
        raise ValueError(f"multi-index components must be >= 0, got {alpha}")
    k = a1 + a2 + a3
    offset = k * (k + 1) * (k + 2) // 6
    # within block k: a1 ascending, then a2 ascending
    before_a1 = sum(k - a + 1 for a in range(a1))
    return offset + before_a1 + a2


@dataclass(frozen=True)
class ExpansionCenter:
    """Velocity shift and temperature scale of a Hermite basis family."""

    u: tuple = (0.0, 0.0, 0.0)
    T: float = 1.0

    def __post_init__(self):
        u = tuple(float(x) for x in self.u)
        if len(u) != 3:
            raise ValueError("expansion center velocity needs 3 components")
        object.__setattr__(self, "u", u)
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"expansion center temperature must be > 0, got {self.T}")
        object.__setattr__(self, "T", float(self.T))

    @property
    def u_array(self) -> np.ndarray:
        return np.asarray(self.u)


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    kind: str = "gauss-hermite"
    meta: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.nodes)


@lru_cache(maxsize=None)
def gauss_hermite(n: int) -> QuadratureRule:
    """Gauss-Hermite rule for the weight exp(-x^2) on the real line."""
    x, w = np.polynomial.hermite.hermgauss(n)
    return QuadratureRule(x, w, "gauss-hermite")


@lru_cache(maxsize=None)
def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0) -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (b - a) * x + 0.5 * (b + a)
    return QuadratureRule(x, 0.5 * (b - a) * w, "gauss-legendre", {"interval": (a, b)})


@lru_cache(maxsize=None)
def gauss_laguerre(n: int, alpha: float = 0.0) -> QuadratureRule:
    """Generalised Gauss-Laguerre rule for x^alpha exp(-x) on (0, inf)."""
    from scipy.special import roots_genlaguerre

    x, w = roots_genlaguerre(n, alpha)
    return QuadratureRule(x, w, "gauss-laguerre", {"alpha": alpha})


def hermite_1d(n_max: int, x) -> np.ndarray:
    """Probabilists' Hermite values He_0..He_{n_max} at x, stacked on axis 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = x
    for n in range(1, n_max):
        out[n + 1] = x * out[n] - n * out[n - 1]
    return out


def _check_finite(v):
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("velocity has non-finite components")
    return v


def hermite_eval(alpha, center: ExpansionCenter, v) -> np.ndarray:
    """H_alpha^{u,T}(v) for velocities ``v`` of shape (..., 3)."""
    v = _check_finite(v)
    x = (v - center.u_array) / sqrt(center.T)
    out = np.ones(x.shape[:-1])
    for d in range(3):
        out = out * hermite_1d(int(alpha[d]), x[..., d])[int(alpha[d])]
    return out


def basis_values(M: int, center: ExpansionCenter, v) -> np.ndarray:
    """All H_alpha^{u,T}(v), |alpha| <= M; returns shape (N, ...)."""
    v = _check_finite(v)
    iset = index_set(M)
    x = (v - center.u_array) / sqrt(center.T)
    h = [hermite_1d(M, x[..., d]) for d in range(3)]
    a = iset.alphas
    return h[0][a[:, 0]] * h[1][a[:, 1]] * h[2][a[:, 2]]


def maxwellian_eval(center: ExpansionCenter, v) -> np.ndarray:
    v = _check_finite(v)
    r2 = np.sum((v - center.u_array) ** 2, axis=-1)
    return (2 * np.pi * center.T) ** -1.5 * np.exp(-r2 / (2 * center.T))


def reconstruct(coeffs, center: ExpansionCenter, v) -> np.ndarray:
    """Evaluate sum_alpha f_alpha H_alpha M at velocities v (..., 3)."""
    coeffs = np.asarray(coeffs, dtype=float)
    M = order_of(coeffs.shape[-1])
    return np.tensordot(coeffs, basis_values(M, center, v), axes=(-1, 0)) * maxwellian_eval(
        center, v
    )


def order_of(n: int) -> int:
    M = 0
    while n_coeffs(M) < n:
        M += 1
    if n_coeffs(M) != n:
        raise ValueError(f"{n} is not the size of a total-degree coefficient set")
    return M


def tensor_grid(rule: QuadratureRule, center: ExpansionCenter):
    """Velocity nodes and weights of the 3-D product rule mapped to ``center``.

    Nodes follow v = u + sqrt(2 T) x. The returned weights already include
    the exp(+|x|^2) factor, so sum(w * g(v)) approximates the plain integral
    of g when g carries the Maxwellian decay of this center.
    """
    x = rule.nodes
    X = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    W = np.einsum("i,j,k->ijk", rule.weights, rule.weights, rule.weights).ravel()
    scale = sqrt(2 * center.T)
    v = center.u_array + scale * X
    w = W * np.exp(np.sum(X**2, axis=-1)) * scale**3
    return v, w


def coefficient_of(f_sampler, alpha, center: ExpansionCenter, rule: QuadratureRule | None = None):
    """(1/alpha!) * integral of f(v) H_alpha(v) by tensorised Gauss-Hermite."""
    alpha = tuple(int(a) for a in alpha)
    if rule is None:
        rule = gauss_hermite(max(10, sum(alpha) + 2))
    if len(rule) < max(alpha) + 1:
        raise ArithmeticError(
            f"{len(rule)}-point rule cannot resolve alpha={alpha}; need >= {max(alpha) + 1}"
        )
    v, w = tensor_grid(rule, center)
    fac = factorial(alpha[0]) * factorial(alpha[1]) * factorial(alpha[2])
    return float(np.sum(w * f_sampler(v) * hermite_eval(alpha, center, v)) / fac)


def coefficients_of(f_sampler, M: int, center: ExpansionCenter, rule: QuadratureRule | None = None):
    """Vector of all coefficients |alpha| <= M by one quadrature sweep."""
    if rule is None:
        rule = gauss_hermite(max(10, M + 2))
    if len(rule) < M + 1:
        raise ArithmeticError(f"{len(rule)}-point rule cannot resolve order {M}")
    v, w = tensor_grid(rule, center)
    H = basis_values(M, center, v)
    return (H @ (w * f_sampler(v))) / index_set(M).factorials


def project_coefficients(coeffs, src: ExpansionCenter, dst: ExpansionCenter, M: int | None = None):
    """Re-expand coefficients given at ``src`` about ``dst``.

    Works on arrays of shape (..., N). Coefficient alpha at the new center
    only depends on coefficients of order <= |alpha| at the old one, so the
    truncated result is exact for every retained order.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if M is None:
        M = order_of(coeffs.shape[-1])
    iset = index_set(M)
    if coeffs.shape[-1] != iset.size:
        raise ValueError(f"expected {iset.size} coefficients for M={M}, got {coeffs.shape[-1]}")
    if src == dst:
        return coeffs.copy()
    flat = coeffs.reshape(-1, iset.size)
    out = project_batch(flat, src.u_array, src.T, dst.u_array, dst.T, M)
    return out.reshape(coeffs.shape)


@lru_cache(maxsize=None)
def _shift_pairs(M: int):
    """For each direction d and shift k >= 1: (targets alpha with alpha_d >= k, sources alpha - k e_d)."""
    iset = index_set(M)
    a = iset.alphas
    out = []
    for d in range(3):
        per_k = []
        for k in range(1, M + 1):
            tgt = np.nonzero(a[:, d] >= k)[0]
            src = np.array([iset.index(tuple(a[t] - k * (np.arange(3) == d))) for t in tgt], dtype=np.int64)
            per_k.append((tgt, src))
        out.append(per_k)
    return out


def project_batch(coeffs, src_u, src_T, dst_u, dst_T, M: int):
    """Vectorised projection with per-row centers.

    ``coeffs`` has shape (B, N); the centre arguments broadcast against B
    (velocities as (B, 3), temperatures as (B,)). The change of center is a
    product of three one-dimensional lower-triangular convolutions whose
    kernels are the 1-D Maxwellian coefficients.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    iset = index_set(M)
    B = coeffs.shape[0]
    src_u = np.broadcast_to(np.asarray(src_u, dtype=float), (B, 3))
    dst_u = np.broadcast_to(np.asarray(dst_u, dtype=float), (B, 3))
    src_T = np.broadcast_to(np.asarray(src_T, dtype=float), (B,))
    dst_T = np.broadcast_to(np.asarray(dst_T, dtype=float), (B,))
    if np.any(src_T <= 0) or np.any(dst_T <= 0):
        raise ValueError("expansion center temperature must be > 0")
    du = (src_u - dst_u).T
    dT = src_T - dst_T
    kern = np.zeros((M + 1, 3, B))
    kern[0] = 1.0
    if M >= 1:
        kern[1] = du
    for k in range(2, M + 1):
        kern[k] = (du * kern[k - 1] + dT * kern[k - 2]) / k
    ords = iset.orders[:, None]
    phi = coeffs.T * src_T ** (0.5 * ords)  # (N, B): row gathers stay contiguous
    for d, per_k in enumerate(_shift_pairs(M)):
        nxt = phi.copy()
        for k, (tgt, src) in enumerate(per_k, start=1):
            nxt[tgt] += kern[k, d] * phi[src]
        phi = nxt
    return (phi * dst_T ** (-0.5 * ords)).T


def maxwellian_coefficients(n: float, u, theta: float, target: ExpansionCenter, M: int):
    """Coefficients of n * M_{u, theta} about ``target``."""
    if theta <= 0:
        raise ValueError(f"Maxwellian temperature must be > 0, got {theta}")
    f = np.zeros(n_coeffs(M))
    f[0] = n
    return project_coefficients(f, ExpansionCenter(tuple(u), theta), target, M)


def maxwellian_batch(n, u, theta, dst_u, dst_T, M: int):
    """Coefficients of n M_{u, theta} about [dst_u, dst_T] for many rows at once.

    The expansion factorises over directions: with y = (u - dst_u) / sqrt(dst_T)
    and h = theta / dst_T - 1, the 1-D factors obey k g_k = y g_{k-1} + h g_{k-2}.
    """
    n = np.asarray(n, dtype=float)
    B = n.shape[0]
    u = np.broadcast_to(np.asarray(u, dtype=float), (B, 3))
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (B,))
    dst_u = np.broadcast_to(np.asarray(dst_u, dtype=float), (B, 3))
    dst_T = np.broadcast_to(np.asarray(dst_T, dtype=float), (B,))
    if np.any(theta <= 0) or np.any(dst_T <= 0):
        raise ValueError("Maxwellian and center temperatures must be > 0")
    y = (u - dst_u) / np.sqrt(dst_T)[:, None]
    h = theta / dst_T - 1.0
    g = np.zeros((M + 1, B, 3))
    g[0] = 1.0
    if M >= 1:
        g[1] = y
    for k in range(2, M + 1):
        g[k] = (y * g[k - 1] + h[:, None] * g[k - 2]) / k
    a = index_set(M).alphas
    return n[:, None] * g[a[:, 0], :, 0].T * g[a[:, 1], :, 1].T * g[a[:, 2], :, 2].T


@lru_cache(maxsize=None)
def largest_hermite_root(n: int) -> float:
    """Largest root of He_n (0 for n <= 1)."""
    if n <= 1:
        return 0.0
    # eigenvalues of the symmetric Jacobi matrix of He
    off = np.sqrt(np.arange(1, n, dtype=float))
    J = np.diag(off, 1) + np.diag(off, -1)
    return float(np.linalg.eigvalsh(J)[-1])
