import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hermite_boltzmann.basis import (
    ExpansionCenter,
    basis_values,
    coefficients_of,
    gauss_hermite,
    index_set,
    largest_hermite_root,
    linear_index,
    maxwellian_batch,
    maxwellian_coefficients,
    n_coeffs,
    order_of,
    project_batch,
    project_coefficients,
    reconstruct,
)
from hermite_boltzmann.moments import moments_batch

centers = st.builds(
    lambda u, T: ExpansionCenter(tuple(u), T),
    st.lists(st.floats(-1, 1), min_size=3, max_size=3),
    st.floats(0.3, 3.0),
)


def test_sizes():
    assert [n_coeffs(M) for M in range(5)] == [1, 4, 10, 20, 35]
    for M in range(8):
        assert order_of(n_coeffs(M)) == M
    with pytest.raises(ValueError):
        order_of(5)


def test_graded_lex_order():
    I = index_set(2)
    assert list(I) == [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0), (0, 0, 2), (0, 1, 1), (0, 2, 0),
                       (1, 0, 1), (1, 1, 0), (2, 0, 0)]
    for k, a in enumerate(index_set(6)):
        assert linear_index(a) == k
        assert index_set(6).index(a) == k


def test_neighbour_tables():
    I = index_set(5)
    for k, a in enumerate(I):
        for d in range(3):
            dn = I.down[d, k]
            if a[d] == 0:
                assert dn == -1
            else:
                b = list(a)
                b[d] -= 1
                assert I.index(b) == dn


def test_orthogonality():
    c = ExpansionCenter((0.3, -0.2, 0.1), 1.7)
    M = 4
    rule = gauss_hermite(8)
    for k in (0, 3, 7, 22):
        e = np.eye(n_coeffs(M))[k]
        H = coefficients_of(lambda v: reconstruct(e, c, v), M, c, rule)
        assert np.allclose(H, e, atol=1e-12)


def test_basis_values_shape():
    v = np.zeros((5, 2, 3))
    assert basis_values(3, ExpansionCenter((0, 0, 0), 1.0), v).shape == (20, 5, 2)


def test_largest_root():
    assert largest_hermite_root(1) == 0.0
    assert largest_hermite_root(2) == pytest.approx(1.0)
    assert largest_hermite_root(3) == pytest.approx(np.sqrt(3))


@settings(max_examples=30, deadline=None)
@given(centers, centers, st.integers(1, 10), st.integers(0, 2**31 - 1))
def test_projection_round_trip(a, b, M, seed):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(n_coeffs(M)) * 0.5 ** index_set(M).orders
    back = project_coefficients(project_coefficients(f, a, b, M), b, a, M)
    assert np.max(np.abs(back - f)) <= 1e-12 * max(1.0, np.max(np.abs(f)))


near_centers = st.builds(
    lambda u, T: ExpansionCenter(tuple(u), T),
    st.lists(st.floats(-0.3, 0.3), min_size=3, max_size=3),
    st.floats(0.8, 1.25),
)


@settings(max_examples=10, deadline=None)
@given(near_centers, near_centers, st.integers(0, 2**31 - 1))
def test_projection_matches_quadrature(a, b, seed):
    """Projected coefficients equal the inner products of the function with the new basis."""
    M = 4
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(n_coeffs(M)) * 0.3
    g = project_coefficients(f, a, b, M)
    ref = coefficients_of(lambda v: reconstruct(f, a, v), M, b, gauss_hermite(40))
    assert np.allclose(g, ref, rtol=1e-9, atol=1e-9)


def test_projection_exact_for_maxwellian():
    """A Maxwellian re-expanded about its own center has a single coefficient."""
    target = ExpansionCenter((0.4, 0.0, -0.3), 0.9)
    other = ExpansionCenter((0.0, 0.1, 0.0), 1.3)
    M = 12
    f = maxwellian_coefficients(2.5, target.u, target.T, other, M)
    back = project_coefficients(f, other, target, M)
    expected = np.zeros(n_coeffs(M))
    expected[0] = 2.5
    assert np.max(np.abs(back - expected)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(centers, centers, st.integers(0, 2**31 - 1))
def test_moment_invariance(a, b, seed):
    M = 6
    rng = np.random.default_rng(seed)
    f = np.zeros(n_coeffs(M))
    f[0] = 1.0
    f[1:] = 0.05 * rng.standard_normal(n_coeffs(M) - 1)
    g = project_coefficients(f, a, b, M)
    ma = moments_batch(f, a.u_array, a.T, 1.3)
    mb = moments_batch(g, b.u_array, b.T, 1.3)
    for key in ("n", "u", "T", "sigma", "q", "E"):
        assert np.allclose(ma[key], mb[key], rtol=1e-12, atol=1e-12)


def _maxwellian_closed_form(n, u, theta, c, M):
    """Explicit double sum for each 1-D factor (no recursion)."""
    from math import factorial

    out = np.zeros(n_coeffs(M))
    for k, a in enumerate(index_set(M)):
        val = n
        for d in range(3):
            y = (u[d] - c.u[d]) / np.sqrt(c.T)
            h = theta / c.T - 1
            val *= sum(
                y ** (a[d] - 2 * j) * (h / 2) ** j / (factorial(a[d] - 2 * j) * factorial(j))
                for j in range(a[d] // 2 + 1)
            )
        out[k] = val
    return out


def test_maxwellian_batch_closed_form():
    rng = np.random.default_rng(3)
    M = 7
    n = rng.uniform(0.5, 2, 4)
    u = rng.normal(size=(4, 3))
    th = rng.uniform(0.5, 2, 4)
    c = ExpansionCenter((0.1, -0.2, 0.3), 1.3)
    got = maxwellian_batch(n, u, th, c.u_array, c.T, M)
    for k in range(4):
        ref = _maxwellian_closed_form(n[k], u[k], th[k], c, M)
        assert np.allclose(got[k], ref, rtol=1e-12, atol=1e-14)
        single = maxwellian_coefficients(n[k], u[k], th[k], c, M)
        assert np.allclose(single, ref, rtol=1e-12, atol=1e-14)


def test_density_coefficient_untouched():
    rng = np.random.default_rng(0)
    F = rng.standard_normal((6, n_coeffs(7)))
    out = project_batch(F, rng.normal(size=(6, 3)), rng.uniform(0.5, 2, 6), 0.0, 1.0, 7)
    assert np.array_equal(out[:, 0], F[:, 0])


def test_bad_center():
    with pytest.raises(ValueError):
        ExpansionCenter((0, 0, 0), 0.0)
    with pytest.raises(ValueError):
        project_batch(np.zeros((1, 4)), 0.0, -1.0, 0.0, 1.0, 1)
