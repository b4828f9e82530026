"""Binary-collision expansion tensors A_{alpha lambda kappa}.

The tensor of a species pair (i, j) is assembled once at the reference
center [0, 1] for the mass ratio r = m_j / m_i; for kernels of the form
|g|^C Sigma(chi) the tensor at temperature scale T follows by the factor
T^{C/2}.

Assembly goes through the unit-ratio coefficients gamma_kappa^j(1, 1),
which reduce to a 2-D (radial x deflection angle) integral K through a
Laguerre/Legendre decomposition of the Hermite polynomials.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial, gamma as gamma_fn, pi, sqrt

import numpy as np
import scipy.sparse as sp
from scipy.special import eval_genlaguerre, eval_legendre, roots_genlaguerre, roots_jacobi

from .basis import IndexSet, QuadratureRule, index_set, n_coeffs

log = logging.getLogger(__name__)


class TensorCacheError(Exception):
    """Base class for cache problems."""


class IncompatibleTensorError(TensorCacheError):
    pass


class CorruptTensorError(TensorCacheError):
    pass


class TensorMemoryError(MemoryError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Collision kernel B(|g|, chi) = prefactor * |g|^C * (1 + cos chi)^(alpha - 1).

    ``constant`` kernels carry their value in ``B``; ``vss`` kernels use the
    dimensionless VSS law with viscosity index ``omega``, scattering
    parameter ``alpha`` and the two (dimensionless) masses.
    """

    kind: str = "constant"
    B: float = 1.0 / (4 * pi)
    omega: float = 1.0
    alpha: float = 1.0
    m_i: float = 1.0
    m_j: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "vss"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "vss":
            if not 0.5 <= self.omega <= 1.0:
                raise ValueError(f"VSS viscosity index must lie in [0.5, 1], got {self.omega}")
            if not 1.0 <= self.alpha <= 2.0:
                raise ValueError(f"VSS scattering parameter must lie in [1, 2], got {self.alpha}")
            if self.m_i <= 0 or self.m_j <= 0:
                raise ValueError("masses must be positive")

    @classmethod
    def constant(cls, B: float) -> "KernelSpec":
        return cls("constant", B=float(B))

    @classmethod
    def vss(cls, omega, alpha, m_i, m_j) -> "KernelSpec":
        return cls("vss", omega=float(omega), alpha=float(alpha), m_i=float(m_i), m_j=float(m_j))

    @classmethod
    def vhs(cls, omega, m_i, m_j) -> "KernelSpec":
        return cls.vss(omega, 1.0, m_i, m_j)

    @classmethod
    def hard_sphere(cls, m_i, m_j) -> "KernelSpec":
        return cls.vss(0.5, 1.0, m_i, m_j)

    @property
    def C(self) -> float:
        return 0.0 if self.kind == "constant" else 2.0 * (1.0 - self.omega)

    @property
    def scattering(self) -> float:
        return 1.0 if self.kind == "constant" else self.alpha

    @property
    def prefactor(self) -> float:
        if self.kind == "constant":
            return self.B
        w, a = self.omega, self.alpha
        mu = self.m_i * self.m_j / (self.m_i + self.m_j)
        return (
            2 ** (w - 0.5)
            * a
            / (
                sqrt(1 + self.m_i / self.m_j)
                * mu ** (w - 0.5)
                * gamma_fn(2.5 - w)
                * 2 ** (a + 1)
                * pi
            )
        )

    def params(self) -> tuple:
        if self.kind == "constant":
            return (self.B,)
        return (self.omega, self.alpha, self.m_i, self.m_j)


def vss_kernel_eval(kernel: KernelSpec, g, chi):
    g = np.asarray(g, dtype=float)
    chi = np.asarray(chi, dtype=float)
    if np.any(chi < 0) or np.any(chi > pi):
        raise ValueError("deflection angle must lie in [0, pi]")
    if np.any(g < 0):
        raise ValueError("relative speed must be >= 0")
    if kernel.kind == "constant":
        return np.broadcast_to(kernel.B, np.broadcast(g, chi).shape).astype(float)
    return kernel.prefactor * g**kernel.C * (1 + np.cos(chi)) ** (kernel.alpha - 1)


# --- combinatorial pieces -------------------------------------------------


def c_coeff(lp: int, kp: int, l: int, k: int, r: float) -> float:
    """Generalised binomial mixing coefficient of one velocity component."""
    if lp + kp != l + k:
        return 0.0
    total = 0.0
    for s in range(max(0, lp - k), min(l, lp) + 1):
        total += comb(l, s) * comb(k, lp - s) * (-1) ** (k - lp + s) * r ** ((l + lp) / 2 - s)
    return (1 + r) ** (-(lp + kp) / 2) * total


@lru_cache(maxsize=None)
def _c_table(smax: int, r: float) -> np.ndarray:
    """tab[s, l', l] = c(l', s - l', l, s - l; r) for 0 <= l, l' <= s <= smax."""
    tab = np.zeros((smax + 1, smax + 1, smax + 1))
    for s in range(smax + 1):
        for lp in range(s + 1):
            for l in range(s + 1):
                tab[s, lp, l] = c_coeff(lp, s - lp, l, s - l, r)
    return tab


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def d_coeff(m, kappa) -> float:
    """Coefficient of the Laguerre/harmonic split of H_kappa.

    The double factorial is taken of the total order 2|kappa - m| + 1.
    """
    m = tuple(int(x) for x in m)
    kappa = tuple(int(x) for x in kappa)
    if any(a > b for a, b in zip(m, kappa)):
        return 0.0
    mm = sum(m)
    kfac = factorial(kappa[0]) * factorial(kappa[1]) * factorial(kappa[2])
    mfac = factorial(m[0]) * factorial(m[1]) * factorial(m[2])
    return (-1) ** mm * 4 * pi * factorial(mm) / _double_factorial(2 * (sum(kappa) - mm) + 1) * kfac / mfac


@lru_cache(maxsize=None)
def _block(k: int):
    """Degree-k multi-indices (same order as IndexSet) and their positions."""
    alphas = [(a, b, k - a - b) for a in range(k + 1) for b in range(k - a + 1)]
    return alphas, {a: i for i, a in enumerate(alphas)}


@lru_cache(maxsize=None)
def legendre_pair_coeffs(k: int) -> np.ndarray:
    """S[a, b]: coefficient of v^a w^b in (|v||w|)^k P_k(v.w / |v||w|).

    Rows and columns enumerate degree-k multi-indices in block order.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return np.ones((1, 1))
    if k == 1:
        return _unit_pairs()
    prev2 = legendre_pair_coeffs(k - 2)
    prev1 = legendre_pair_coeffs(k - 1)
    blk, pos = _block(k)
    blk1, _ = _block(k - 1)
    blk2, _ = _block(k - 2)
    out = np.zeros((len(blk), len(blk)))
    kk = k - 1
    for d in range(3):
        ia = [pos[_shift(a, d, 1)] for a in blk1]
        out[np.ix_(ia, ia)] += (2 * kk + 1) / (kk + 1) * prev1
    for d in range(3):
        ia = [pos[_shift(a, d, 2)] for a in blk2]
        for e in range(3):
            ib = [pos[_shift(b, e, 2)] for b in blk2]
            out[np.ix_(ia, ib)] -= kk / (kk + 1) * prev2
    return out


def _unit_pairs() -> np.ndarray:
    blk, pos = _block(1)
    out = np.zeros((3, 3))
    for d in range(3):
        e = tuple(int(i == d) for i in range(3))
        out[pos[e], pos[e]] = 1.0
    return out


def _shift(a, d, n):
    b = list(a)
    b[d] += n
    return tuple(b)


# --- the 2-D integral -----------------------------------------------------


def _radial_exponent(m_ord, n_ord, kappa_ord, j_ord, C):
    # after t = r^2 / 4 the radial weight is t^p exp(-t)
    return 0.5 * (kappa_ord + j_ord) - (m_ord + n_ord) + 0.5 + 0.5 * C


def default_radial_rule(m_ord, n_ord, kappa_ord, j_ord, kernel: KernelSpec, n: int | None = None):
    p = _radial_exponent(m_ord, n_ord, kappa_ord, j_ord, kernel.C)
    if n is None:
        n = max(8, m_ord + n_ord + 2)
    x, w = roots_genlaguerre(n, p)
    return QuadratureRule(x, w, "gauss-laguerre", {"alpha": p})


def default_angle_rule(kernel: KernelSpec, l: int, n: int | None = None):
    """Gauss-Jacobi rule in mu = cos(chi) carrying (1 + mu)^(alpha - 1)."""
    if n is None:
        n = max(8, l + 2)
    beta = kernel.scattering - 1.0
    x, w = roots_jacobi(n, 0.0, beta)
    return QuadratureRule(x, w, "gauss-jacobi", {"beta": beta})


def k_integral(
    m_ord: int,
    n_ord: int,
    kappa_ord: int,
    j_ord: int,
    kernel: KernelSpec,
    rule_r: QuadratureRule | None = None,
    rule_chi: QuadratureRule | None = None,
) -> float:
    """Radial/deflection integral K for the unit-ratio gamma coefficients.

    Integrand: L_m^{(a)}(r^2/4) L_n^{(b)}(r^2/4) (r/sqrt2)^{|kappa|+|j|-2(m+n)+2}
    B(r, chi) [P_{|kappa|-2m}(cos chi) - 1] exp(-r^2/4) sin(chi), with
    a = |kappa| - 2m + 1/2 and b = |j| - 2n + 1/2.
    """
    if min(m_ord, n_ord, kappa_ord, j_ord) < 0:
        raise ValueError("orders must be >= 0")
    l = kappa_ord - 2 * m_ord
    lj = j_ord - 2 * n_ord
    if l < 0 or lj < 0:
        return 0.0
    if l == 0:
        return 0.0  # P_0 - 1 vanishes identically
    if kernel.C == 0.0 and l == lj and m_ord != n_ord:
        return 0.0  # Laguerre orthogonality under the common weight
    p = _radial_exponent(m_ord, n_ord, kappa_ord, j_ord, kernel.C)
    if rule_r is None:
        rule_r = default_radial_rule(m_ord, n_ord, kappa_ord, j_ord, kernel)
    t = rule_r.nodes
    corr = t ** (p - rule_r.meta.get("alpha", 0.0)) if rule_r.meta.get("alpha", 0.0) != p else 1.0
    lag = eval_genlaguerre(m_ord, l + 0.5, t) * eval_genlaguerre(n_ord, lj + 0.5, t)
    # (r/sqrt2)^e * r^C * dr with r = 2 sqrt(t): 2^{e/2} t^{e/2} 2^C t^{C/2} t^{-1/2} dt
    e = kappa_ord + j_ord - 2 * (m_ord + n_ord) + 2
    radial = 2 ** (0.5 * e + kernel.C) * np.sum(rule_r.weights * lag * corr)
    if rule_chi is None:
        rule_chi = default_angle_rule(kernel, l)
    angular = _angular_integral(kernel, l, rule_chi)
    return float(kernel.prefactor * radial * angular)


def _angular_integral(kernel: KernelSpec, l: int, rule: QuadratureRule) -> float:
    a = kernel.scattering
    if rule.kind == "gauss-jacobi":
        beta = rule.meta.get("beta", 0.0)
        mu = rule.nodes
        extra = (1 + mu) ** (a - 1 - beta) if a - 1 != beta else 1.0
        return float(np.sum(rule.weights * extra * (eval_legendre(l, mu) - 1)))
    if rule.kind == "gauss-legendre":
        chi = rule.nodes  # rule laid out on [0, pi]
        vals = (1 + np.cos(chi)) ** (a - 1) * (eval_legendre(l, np.cos(chi)) - 1) * np.sin(chi)
        return float(np.sum(rule.weights * vals))
    raise ValueError(f"unsupported deflection-angle rule {rule.kind!r}")


def k_integral_converged(m_ord, n_ord, kappa_ord, j_ord, kernel, tol=1e-12, n0=None, cap=512):
    """K with automatic point doubling until successive values agree to ``tol``."""
    l = kappa_ord - 2 * m_ord
    n_r = n0 or max(8, m_ord + n_ord + 2)
    n_a = n0 or max(8, l + 2)
    prev = k_integral(
        m_ord, n_ord, kappa_ord, j_ord, kernel,
        default_radial_rule(m_ord, n_ord, kappa_ord, j_ord, kernel, n_r),
        default_angle_rule(kernel, l, n_a),
    )
    while True:
        n_r, n_a = 2 * n_r, 2 * n_a
        if max(n_r, n_a) > cap:
            raise ArithmeticError(f"K integral for orders {(m_ord, n_ord, kappa_ord, j_ord)} did not converge")
        cur = k_integral(
            m_ord, n_ord, kappa_ord, j_ord, kernel,
            default_radial_rule(m_ord, n_ord, kappa_ord, j_ord, kernel, n_r),
            default_angle_rule(kernel, l, n_a),
        )
        if abs(cur - prev) <= tol * max(abs(cur), 1e-300):
            return cur
        prev = cur


# --- gamma coefficients ---------------------------------------------------

_MAXWELL_NORM = (2 * pi) ** -1.5


def gamma_unit(kappa, j, kernel: KernelSpec) -> float:
    """gamma_kappa^j(1, 1) summed term by term (reference implementation)."""
    kappa = tuple(int(x) for x in kappa)
    j = tuple(int(x) for x in j)
    ko, jo = sum(kappa), sum(j)
    total = 0.0
    for m in _half_indices(kappa):
        a = tuple(x - 2 * y for x, y in zip(kappa, m))
        l = sum(a)
        for n in _half_indices(j):
            b = tuple(x - 2 * y for x, y in zip(j, n))
            if sum(b) != l:
                continue
            blk, pos = _block(l)
            S = legendre_pair_coeffs(l)[pos[a], pos[b]]
            if S == 0.0:
                continue
            K = k_integral(sum(m), sum(n), ko, jo, kernel)
            total += (2 * l + 1) * d_coeff(m, kappa) * d_coeff(n, j) * S * K
    return _MAXWELL_NORM * total


def _half_indices(kappa):
    return [
        (a, b, c)
        for a in range(kappa[0] // 2 + 1)
        for b in range(kappa[1] // 2 + 1)
        for c in range(kappa[2] // 2 + 1)
    ]


@dataclass
class GammaTable:
    """Dense gamma_kappa^j(1, 1) for |kappa| <= kmax (rows) and |j| <= jmax."""

    kmax: int
    jmax: int
    kernel: KernelSpec
    values: np.ndarray = field(repr=False)

    def __call__(self, kappa, j) -> float:
        return float(self.values[index_set(self.kmax).index(kappa), index_set(self.jmax).index(j)])


def _u_matrix(iset: IndexSet, l: int) -> np.ndarray:
    """U[kappa, a] = D_{(kappa - a)/2}^kappa over degree-l targets a."""
    blk, pos = _block(l)
    U = np.zeros((iset.size, len(blk)))
    for i, kappa in enumerate(iset):
        ko = sum(kappa)
        if ko < l or (ko - l) % 2:
            continue
        for m in _half_indices(kappa):
            if sum(m) * 2 != ko - l:
                continue
            a = tuple(x - 2 * y for x, y in zip(kappa, m))
            U[i, pos[a]] = d_coeff(m, kappa)
    return U


def build_gamma_table(kmax: int, jmax: int, kernel: KernelSpec) -> GammaTable:
    """All gamma_kappa^j(1, 1), vectorised over the harmonic degree l."""
    kset, jset = index_set(kmax), index_set(jmax)
    kord, jord = kset.orders, jset.orders
    vals = np.zeros((kset.size, jset.size))
    for l in range(1, min(kmax, jmax) + 1):
        Uk = _u_matrix(kset, l)
        Uj = _u_matrix(jset, l)
        core = Uk @ legendre_pair_coeffs(l) @ Uj.T
        # K only depends on (|kappa|, |j|) once l is fixed
        Kmat = np.zeros((kmax + 1, jmax + 1))
        for ko in range(l, kmax + 1, 2):
            for jo in range(l, jmax + 1, 2):
                if kernel.kind == "constant" and ko != jo:
                    continue
                Kmat[ko, jo] = k_integral((ko - l) // 2, (jo - l) // 2, ko, jo, kernel)
        vals += (2 * l + 1) * core * Kmat[np.ix_(kord, jord)]
    vals *= _MAXWELL_NORM
    if kernel.kind == "constant":
        vals[kord[:, None] != jord[None, :]] = 0.0
    return GammaTable(kmax, jmax, kernel, vals)


def gamma_scale(r: float, T_bar: float, C: float) -> float:
    """gamma(r, T) / gamma(1, 1) for kernels |g|^C Sigma(chi)."""
    return ((1 + r) / (2 * r)) ** 1.5 * ((1 + r) * T_bar / (2 * r)) ** (0.5 * C)


# --- tensor ---------------------------------------------------------------


@dataclass
class CollisionTensor:
    """Sparse A_{alpha lambda kappa}(0, 1) for one (kernel, r, M0).

    ``matrix`` has shape (N0, N0 * N0) with column lambda * N0 + kappa.
    """

    M0: int
    r: float
    kernel: KernelSpec
    matrix: sp.csr_matrix = field(repr=False)
    T_ref: float = 1.0
    damping: float | None = None

    @property
    def size(self) -> int:
        return n_coeffs(self.M0)

    @property
    def C(self) -> float:
        return self.kernel.C

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    @property
    def nbytes(self) -> int:
        return self.nnz * (9 * 2 + 8)

    def dense(self) -> np.ndarray:
        N = self.size
        return self.matrix.toarray().reshape(N, N, N)

    def entry(self, alpha, lam, kappa) -> float:
        iset = index_set(self.M0)
        N = iset.size
        return float(self.matrix[iset.index(alpha), iset.index(lam) * N + iset.index(kappa)])

    def key(self) -> tuple:
        return (self.kernel.kind, self.kernel.params(), self.M0, self.r)

    @property
    def damping_rate(self) -> float:
        if self.damping is None:
            from .collision import damping_rate

            self.damping = damping_rate(self)
        return self.damping


def _lin_index(a: np.ndarray) -> np.ndarray:
    """Vectorised graded-lex position of multi-indices in rows of ``a``."""
    a1, a2 = a[..., 0], a[..., 1]
    k = a.sum(axis=-1)
    return k * (k + 1) * (k + 2) // 6 + a1 * (k + 1) - a1 * (a1 - 1) // 2 + a2


def estimate_bytes(M0: int, kernel: KernelSpec) -> int:
    N = n_coeffs(M0)
    if kernel.kind == "constant":
        count = sum((a + 1) * (a + 2) // 2 * comb(a + 5, 5) for a in range(M0 + 1))
    else:
        count = N**3
    return count * 26


def assemble_tensor(
    M0: int,
    r: float,
    kernel: KernelSpec,
    T_bar: float = 1.0,
    memory_budget: int = 8 * 2**30,
    drop_tol: float = 1e-14,
) -> CollisionTensor:
    """Assemble A_{alpha lambda kappa}(0, T_bar) for the mass ratio r.

    Each (lambda, kappa) pair is grouped by sigma = lambda + kappa, which
    turns the inner sum over lambda' into one dense product per sigma.
    """
    if M0 < 0:
        raise ValueError("M0 must be >= 0")
    if r <= 0:
        raise ValueError("mass ratio must be positive")
    need = estimate_bytes(M0, kernel)
    if need > memory_budget:
        raise TensorMemoryError(f"tensor M0={M0} needs about {need} bytes (budget {memory_budget})")
    constant = kernel.kind == "constant"
    smax = M0 if constant else 2 * M0
    iset = index_set(M0)
    N = iset.size
    gt = build_gamma_table(smax, M0, kernel)
    gvals = gt.values * gamma_scale(r, T_bar, kernel.C)
    ctab = _c_table(smax, float(r))
    alphas = iset.alphas
    aord = iset.orders
    jfac = iset.factorials
    pref = r**1.5 / (1 + r) ** (0.5 * (np.arange(M0 + 1) + 3))

    rows, cols, data = [], [], []
    for sigma in index_set(smax).alphas:
        s_ord = int(sigma.sum())
        # lambda' <= sigma with |lambda'| <= M0
        lp_mask = np.all(alphas <= sigma, axis=1)
        lps = alphas[lp_mask]
        # lambda <= sigma with |lambda|, |sigma - lambda| <= M0
        lam_mask = lp_mask & (s_ord - aord <= M0)
        lams = alphas[lam_mask]
        if len(lams) == 0:
            continue
        a_mask = aord == s_ord if constant else np.ones(N, bool)
        a_idx = np.nonzero(a_mask)[0]
        if len(a_idx) == 0:
            continue
        # G[alpha, lambda'] = r^{|j|/2} / j! * gamma_{sigma - lambda'}^{j}, j = alpha - lambda'
        jj = alphas[a_idx][:, None, :] - lps[None, :, :]
        valid = np.all(jj >= 0, axis=-1)
        jj_c = np.where(valid[..., None], jj, 0)
        j_lin = _lin_index(jj_c)
        kp_lin = _lin_index(sigma[None, :] - lps)
        G = gvals[kp_lin[None, :], j_lin] * (r ** (0.5 * jj_c.sum(-1)) / jfac[j_lin])
        G[~valid] = 0.0
        # Cmat[lambda', lambda] = prod_d c(l'_d, s_d - l'_d, l_d, s_d - l_d)
        Cm = np.ones((len(lps), len(lams)))
        for d in range(3):
            Cm *= ctab[sigma[d]][lps[:, d][:, None], lams[:, d][None, :]]
        block = (G @ Cm) * pref[aord[a_idx]][:, None]
        nz_a, nz_l = np.nonzero(block)
        if len(nz_a) == 0:
            continue
        lam_lin = _lin_index(lams)
        kap_lin = _lin_index(sigma[None, :] - lams)
        rows.append(a_idx[nz_a])
        cols.append(lam_lin[nz_l] * N + kap_lin[nz_l])
        data.append(block[nz_a, nz_l])

    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.concatenate(data)
    else:
        rows = cols = np.zeros(0, np.int64)
        data = np.zeros(0)
    keep = rows != 0  # the alpha = 0 row vanishes identically (mass conservation)
    if len(data):
        keep &= np.abs(data) >= drop_tol * np.max(np.abs(data))
    mat = sp.csr_matrix((data[keep], (rows[keep], cols[keep])), shape=(N, N * N))
    mat.sum_duplicates()
    log.debug("assembled M0=%d r=%g kernel=%s: %d entries", M0, r, kernel.kind, mat.nnz)
    return CollisionTensor(M0, float(r), kernel, mat, T_ref=float(T_bar))


# --- disk cache -----------------------------------------------------------

MAGIC = b"BMXT"
FORMAT_VERSION = 1
_KIND_CODES = {"constant": 0, "vss": 1}
_N_PARAMS = {"constant": 1, "vss": 4}
_TRAILER = b"DAMP"
_RECORD = np.dtype([("idx", "<u2", (9,)), ("value", "<f8")])


def _pack_header(kind: str, params, M0: int, r: float, count: int) -> bytes:
    import struct

    return (
        MAGIC
        + struct.pack("<IB", FORMAT_VERSION, _KIND_CODES[kind])
        + struct.pack(f"<{len(params)}d", *params)
        + struct.pack("<IdQ", M0, r, count)
    )


def tensor_cache_save(t: CollisionTensor, path) -> None:
    """Write ``t`` in the little-endian BMXT layout.

    A damping rate, when known, is appended as a trailer ("DAMP" + f64).
    """
    if t.T_ref != 1.0:
        raise ValueError("only tensors at the reference temperature 1 are cached")
    iset = index_set(t.M0)
    N = iset.size
    coo = t.matrix.tocoo()
    rec = np.empty(coo.nnz, dtype=_RECORD)
    al = iset.alphas
    rec["idx"][:, 0:3] = al[coo.row]
    rec["idx"][:, 3:6] = al[coo.col // N]
    rec["idx"][:, 6:9] = al[coo.col % N]
    rec["value"] = coo.data
    with open(path, "wb") as fh:
        fh.write(_pack_header(t.kernel.kind, t.kernel.params(), t.M0, t.r, coo.nnz))
        fh.write(rec.tobytes())
        if t.damping is not None:
            fh.write(_TRAILER + np.float64(t.damping).astype("<f8").tobytes())


def tensor_cache_load(path, M0: int | None = None, r: float | None = None, kernel: KernelSpec | None = None) -> CollisionTensor:
    """Read a BMXT file, optionally checking it against the requested key."""
    import struct

    with open(path, "rb") as fh:
        raw = fh.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise CorruptTensorError(f"{path}: file truncated at byte {len(raw)} (needed {pos + n})")
        chunk = raw[pos : pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise IncompatibleTensorError(f"{path}: not a collision-tensor file")
    version, code = struct.unpack("<IB", take(5))
    if version != FORMAT_VERSION:
        raise IncompatibleTensorError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    kinds = {v: k for k, v in _KIND_CODES.items()}
    if code not in kinds:
        raise IncompatibleTensorError(f"{path}: unknown kernel code {code}")
    kind = kinds[code]
    params = struct.unpack(f"<{_N_PARAMS[kind]}d", take(8 * _N_PARAMS[kind]))
    fM0, fr, count = struct.unpack("<IdQ", take(20))
    stored = KernelSpec.constant(params[0]) if kind == "constant" else KernelSpec.vss(*params)
    if M0 is not None and M0 != fM0:
        raise IncompatibleTensorError(f"{path}: holds M0={fM0}, requested {M0}")
    if r is not None and r != fr:
        raise IncompatibleTensorError(f"{path}: holds r={fr!r}, requested {r!r}")
    if kernel is not None and (kernel.kind, kernel.params()) != (stored.kind, stored.params()):
        raise IncompatibleTensorError(f"{path}: kernel {stored} differs from requested {kernel}")
    rec = np.frombuffer(take(count * _RECORD.itemsize), dtype=_RECORD)
    damping = None
    rest = raw[pos:]
    if rest:
        if len(rest) != 12 or rest[:4] != _TRAILER:
            raise CorruptTensorError(f"{path}: {len(rest)} unexpected trailing bytes")
        damping = float(np.frombuffer(rest[4:], "<f8")[0])
    iset = index_set(fM0)
    N = iset.size
    idx = rec["idx"].astype(np.int64)
    if count and idx.reshape(-1, 3).sum(axis=1).max() > fM0:
        raise CorruptTensorError(f"{path}: index beyond order {fM0}")
    rows = _lin_index(idx[:, 0:3])
    cols = _lin_index(idx[:, 3:6]) * N + _lin_index(idx[:, 6:9])
    mat = sp.csr_matrix((rec["value"].astype(float), (rows, cols)), shape=(N, N * N))
    return CollisionTensor(fM0, fr, stored, mat, damping=damping)


def cache_filename(M0: int, r: float, kernel: KernelSpec) -> str:
    import hashlib

    key = repr((kernel.kind, kernel.params(), M0, float(r).hex()))
    return f"A_{kernel.kind}_M{M0}_{hashlib.sha1(key.encode()).hexdigest()[:16]}.bmxt"


class TensorCache:
    """Directory of BMXT files keyed by (kernel, M0, r)."""

    def __init__(self, directory, memory_budget: int = 8 * 2**30):
        from pathlib import Path

        self.dir = Path(directory) if directory is not None else None
        self.memory_budget = memory_budget
        self._mem: dict = {}
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def path_for(self, M0, r, kernel):
        return None if self.dir is None else self.dir / cache_filename(M0, r, kernel)

    def get(self, M0: int, r: float, kernel: KernelSpec, with_damping: bool = True, build: bool = True) -> CollisionTensor:
        key = (kernel.kind, kernel.params(), M0, float(r))
        if key in self._mem:
            return self._mem[key]
        path = self.path_for(M0, r, kernel)
        t = None
        if path is not None and path.exists():
            try:
                t = tensor_cache_load(path, M0, r, kernel)
                log.info("loaded tensor %s", path.name)
            except CorruptTensorError:
                log.warning("cache file %s is corrupt; rebuilding", path.name)
        if t is None:
            if not build:
                raise FileNotFoundError(f"no cached tensor for M0={M0} r={r} {kernel}")
            t = assemble_tensor(M0, r, kernel, memory_budget=self.memory_budget)
            if with_damping and M0 >= 1:
                t.damping_rate
            if path is not None:
                tensor_cache_save(t, path)
        elif with_damping and t.damping is None and M0 >= 1:
            t.damping_rate
            if path is not None:
                tensor_cache_save(t, path)
        self._mem[key] = t
        return t
