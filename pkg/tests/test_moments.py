import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hermite_boltzmann.basis import ExpansionCenter, basis_values, index_set, n_coeffs
from hermite_boltzmann.moments import (
    MixtureState,
    MomentCapabilityError,
    SpectralDistribution,
    maxwellian_coefficients,
    mixture_moments,
    moments_batch,
    species_moments,
)
from oracles import quadrature_moments


@settings(max_examples=20, deadline=None)
@given(
    st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3),
    st.floats(0.5, 2.0),
    st.floats(0.5, 3.0),
    st.integers(0, 2**31 - 1),
)
def test_moments_match_quadrature(u, T, mass, seed):
    M = 5
    c = ExpansionCenter(tuple(u), T)
    rng = np.random.default_rng(seed)
    f = np.zeros(n_coeffs(M))
    f[0] = rng.uniform(0.5, 2)
    f[1:] = 0.05 * rng.standard_normal(n_coeffs(M) - 1)
    got = species_moments(SpectralDistribution(0, mass, c, M, f))

    def ratio(X):
        v = c.u_array + np.sqrt(T) * X
        return f @ basis_values(M, c, v)

    n, uq, Tq, sig, q, E = quadrature_moments(ratio, mass, c.u_array, T)
    assert got.n == pytest.approx(n, rel=1e-13)
    assert np.allclose(got.u, uq, atol=1e-13)
    assert got.T == pytest.approx(Tq, rel=1e-12)
    assert np.allclose(got.sigma, sig, atol=1e-12)
    assert np.allclose(got.q, q, atol=1e-12)
    assert got.E == pytest.approx(E, rel=1e-12)


def test_maxwellian_moments():
    c = ExpansionCenter((0.0, 0.0, 0.0), 0.5)
    m = 2.0
    f = maxwellian_coefficients(1.5, (0.2, -0.1, 0.3), 0.6 / m, c, 8)
    r = species_moments(SpectralDistribution(0, m, c, 8, f))
    assert r.n == pytest.approx(1.5)
    assert np.allclose(r.u, (0.2, -0.1, 0.3))
    assert r.T == pytest.approx(0.6)
    assert np.allclose(r.sigma, 0, atol=1e-14)
    assert np.allclose(r.q, 0, atol=1e-14)


def test_capability_errors():
    c = ExpansionCenter((0, 0, 0), 1.0)
    with pytest.raises(MomentCapabilityError, match="heat flux"):
        species_moments(SpectralDistribution(0, 1.0, c, 2, np.r_[1.0, np.zeros(9)]))
    with pytest.raises(MomentCapabilityError):
        moments_batch(np.r_[1.0, np.zeros(3)], c.u_array, c.T, 1.0, need_heat_flux=False)
    # without heat flux order 2 suffices
    r = moments_batch(np.r_[1.0, np.zeros(9)], c.u_array, c.T, 1.0, need_heat_flux=False)
    assert "q" not in r and r["T"] == pytest.approx(1.0)


def test_nonphysical_warns():
    c = ExpansionCenter((0, 0, 0), 1.0)
    f = np.zeros(n_coeffs(3))
    f[0] = 1.0
    for d in range(3):
        f[index_set(3).index(tuple(2 * (k == d) for k in range(3)))] = -1.0
    with pytest.warns(UserWarning, match="non-physical"):
        species_moments(SpectralDistribution(0, 1.0, c, 3, f))


def test_mixture_totals():
    masses = (1.0, 2.0)
    sp = []
    for i, (m, n, u, T) in enumerate(zip(masses, (1.0, 0.5), ((0.1, 0, 0), (-0.3, 0, 0)), (1.0, 1.4))):
        c = ExpansionCenter((0, 0, 0), 1.0 / m)
        sp.append(SpectralDistribution(i, m, c, 4, maxwellian_coefficients(n, u, T / m, c, 4)))
    mm = mixture_moments(MixtureState(sp, np.ones((2, 2))))
    assert mm.n == pytest.approx(1.5)
    assert mm.rho == pytest.approx(2.0)
    assert mm.u[0] == pytest.approx((0.1 - 0.3) / 2.0)
    # calT absorbs the relative drift energy
    drift = 0.5 * (1.0 * 0.2**2 + 1.0 * 0.2**2)
    assert mm.calT == pytest.approx((1.5 * (1.0 + 0.5 * 1.4) + drift) / 2.25)


def test_state_validation():
    c = ExpansionCenter((0, 0, 0), 1.0)
    d = SpectralDistribution(0, 1.0, c, 3, np.r_[1.0, np.zeros(19)])
    with pytest.raises(ValueError):
        MixtureState([d], np.zeros((1, 1)))
    with pytest.raises(ValueError):
        SpectralDistribution(0, 1.0, c, 3, np.zeros(10))
