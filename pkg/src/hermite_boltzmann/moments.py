"""Distribution containers and macroscopic moments from Hermite coefficients."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .basis import ExpansionCenter, index_set, maxwellian_coefficients, n_coeffs, order_of

log = logging.getLogger(__name__)

__all__ = [
    "SpectralDistribution",
    "SpeciesMoments",
    "MixtureMoments",
    "MixtureState",
    "MomentCapabilityError",
    "species_moments",
    "moments_batch",
    "mixture_moments",
    "maxwellian_coefficients",
]


class MomentCapabilityError(ValueError):
    pass


@dataclass
class SpectralDistribution:
    species: int
    mass: float
    center: ExpansionCenter
    M: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (n_coeffs(self.M),):
            raise ValueError(f"order {self.M} needs {n_coeffs(self.M)} coefficients, got {self.coeffs.shape}")
        if self.mass <= 0:
            raise ValueError("species mass must be positive")

    def projected(self, center: ExpansionCenter) -> "SpectralDistribution":
        from .basis import project_coefficients

        return SpectralDistribution(
            self.species, self.mass, center, self.M, project_coefficients(self.coeffs, self.center, center, self.M)
        )


@dataclass(frozen=True)
class SpeciesMoments:
    n: float
    rho: float
    u: np.ndarray
    T: float
    sigma: np.ndarray
    q: np.ndarray
    E: float


class MixtureMoments(NamedTuple):
    n: float
    rho: float
    u: np.ndarray
    T: float
    sigma: np.ndarray
    q: np.ndarray
    E: float
    calT: float


@dataclass
class MixtureState:
    species: list[SpectralDistribution]
    kn: np.ndarray

    def __post_init__(self):
        self.kn = np.asarray(self.kn, dtype=float)
        s = len(self.species)
        if self.kn.shape != (s, s):
            raise ValueError(f"Knudsen matrix must be {s}x{s}")
        if np.any(self.kn <= 0):
            raise ValueError("Knudsen numbers must be positive")
        if len({d.M for d in self.species}) > 1:
            raise ValueError("all species must share the expansion order")


def _raw_moments(coeffs, iset, order):
    """Integrals of x^beta f for |beta| <= order, x the scaled velocity.

    Uses x^k = sum_j k! / (j! 2^j (k-2j)!) He_{k-2j}(x) per direction and
    the integral of He_a f being a! f_a.
    Returns a dict beta -> array over the leading batch shape.
    """
    from math import factorial

    out = {}
    for beta in iset:
        if sum(beta) > order:
            break
        beta = tuple(int(b) for b in beta)
        acc = 0.0
        for j0 in range(beta[0] // 2 + 1):
            for j1 in range(beta[1] // 2 + 1):
                for j2 in range(beta[2] // 2 + 1):
                    js = (j0, j1, j2)
                    low = tuple(b - 2 * j for b, j in zip(beta, js))
                    w = 1.0
                    for b, j in zip(beta, js):
                        w *= factorial(b) / (factorial(j) * 2**j)
                    acc = acc + w * coeffs[..., iset.index(low)]
        out[beta] = acc
    return out


def _unit(*dirs):
    a = [0, 0, 0]
    for d in dirs:
        a[d] += 1
    return tuple(a)


def moments_batch(coeffs, u_bar, T_bar, mass, need_heat_flux=True):
    """Moments of many distributions at once.

    ``coeffs`` has shape (..., N); ``u_bar`` broadcasts to (..., 3) and
    ``T_bar`` to (...). Returns a dict of arrays with keys n, rho, u, T,
    sigma (..., 3, 3), q (..., 3) and E.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    M = order_of(coeffs.shape[-1])
    if need_heat_flux and M < 3:
        raise MomentCapabilityError(f"order {M} < 3: heat flux q needs third-order coefficients")
    if M < 2:
        raise MomentCapabilityError(f"order {M} < 2: temperature, stress and heat flux unavailable")
    iset = index_set(M)
    lead = coeffs.shape[:-1]
    u_bar = np.broadcast_to(np.asarray(u_bar, dtype=float), lead + (3,))
    T_bar = np.broadcast_to(np.asarray(T_bar, dtype=float), lead)
    raw = _raw_moments(coeffs, iset, 3 if need_heat_flux else 2)
    s = np.sqrt(T_bar)
    n = raw[(0, 0, 0)]
    M1 = np.stack([raw[_unit(d)] for d in range(3)], axis=-1)
    M2 = np.empty(lead + (3, 3))
    for a in range(3):
        for b in range(3):
            M2[..., a, b] = raw[_unit(a, b)]
    u = u_bar + s[..., None] * M1 / n[..., None]
    delta = u_bar - u
    # second central moment about u
    P2 = s[..., None, None] ** 2 * M2 - n[..., None, None] * delta[..., :, None] * delta[..., None, :]
    tr = np.trace(P2, axis1=-2, axis2=-1)
    T = mass * tr / (3 * n)
    sigma = mass * (P2 - (tr / 3)[..., None, None] * np.eye(3))
    rho = mass * n
    E = 0.5 * rho * np.sum(u * u, axis=-1) + 1.5 * n * T
    out = {"n": n, "rho": rho, "u": u, "T": T, "sigma": sigma, "E": E}
    if need_heat_flux:
        M3 = np.empty(lead + (3, 3, 3))
        for a in range(3):
            for b in range(3):
                for c in range(3):
                    M3[..., a, b, c] = raw[_unit(a, b, c)]
        # c = s x + delta, expand the cube
        s3 = s[..., None, None, None]
        P3 = (
            s3**3 * M3
            + s3**2 * (
                np.einsum("...k,...lm->...klm", delta, M2)
                + np.einsum("...l,...km->...klm", delta, M2)
                + np.einsum("...m,...kl->...klm", delta, M2)
            )
            + s3 * (
                np.einsum("...k,...l,...m->...klm", delta, delta, M1)
                + np.einsum("...k,...m,...l->...klm", delta, delta, M1)
                + np.einsum("...l,...m,...k->...klm", delta, delta, M1)
            )
            + n[..., None, None, None] * np.einsum("...k,...l,...m->...klm", delta, delta, delta)
        )
        out["q"] = 0.5 * mass * np.einsum("...kll->...k", P3)
    return out


def species_moments(d: SpectralDistribution) -> SpeciesMoments:
    if d.M < 3:
        missing = "heat flux q" if d.M == 2 else "temperature T, stress sigma, heat flux q, energy E"
        raise MomentCapabilityError(f"order {d.M} < 3: unavailable moments: {missing}")
    r = moments_batch(d.coeffs, d.center.u_array, d.center.T, d.mass)
    if r["n"] <= 0 or r["T"] <= 0:
        warnings.warn(f"species {d.species}: non-physical moments n={r['n']:.3g}, T={r['T']:.3g}")
    return SpeciesMoments(
        float(r["n"]), float(r["rho"]), r["u"], float(r["T"]), r["sigma"], r["q"], float(r["E"])
    )


def combine_moments(parts) -> MixtureMoments:
    """Mixture totals from a sequence of per-species moment records."""
    parts = list(parts)
    n = sum(p.n for p in parts)
    if n == 0:
        raise ValueError("total number density is zero")
    rho = sum(p.rho for p in parts)
    u = sum(p.rho * np.asarray(p.u) for p in parts) / rho
    T = sum(p.n * p.T for p in parts) / n
    sigma = sum(np.asarray(p.sigma) for p in parts)
    q = sum(np.asarray(p.q) for p in parts)
    E = sum(p.E for p in parts)
    calT = (E - 0.5 * rho * float(u @ u)) / (1.5 * n)
    return MixtureMoments(n, rho, u, T, sigma, q, E, calT)


def mixture_moments(s: MixtureState) -> MixtureMoments:
    return combine_moments(species_moments(d) for d in s.species)
