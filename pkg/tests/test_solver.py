import numpy as np
import pytest

from subspectra import (
    GridFunction,
    fixed_point_solve,
    grand_potential,
    functional_derivative_check,
    moment_oracle,
    moment_series,
    qssep_kernel,
    resolvent,
    spectral_density,
    wigner_kernel,
)
from subspectra import solver as sv
from subspectra.errors import DomainError, SizeLimitError, UnsupportedOrderError
from subspectra.grids import midpoints

from conftest import smooth_kernel


def test_wigner_closed_form_at_three():
    st = fixed_point_solve(wigner_kernel(1.0), GridFunction.constant(1.0, 64), 3.0)
    expect = (3 - np.sqrt(5)) / 2
    assert abs(st.a.mean() - expect) < 1e-9
    assert st.residual <= 1e-10
    g = resolvent(wigner_kernel(1.0), GridFunction.constant(1.0, 64), 3.0)
    assert abs(g - expect) < 1e-9


def test_large_z_asymptotics():
    h = GridFunction.from_callable(lambda x: 0.5 + x / 4, 64)
    for kern in (wigner_kernel(1.0), qssep_kernel(), smooth_kernel(0)):
        st = fixed_point_solve(kern, h, 1e3)
        assert np.max(np.abs(st.a - h.values / 1e3)) < 5e-6  # O(z^-2) corrections


def test_qssep_profile_closed_form_at_two():
    G = 400
    st = fixed_point_solve(qssep_kernel(), GridFunction.constant(1.0, G), 2.0)
    x = midpoints(G)
    b_exact = 2 - 2 * 0.5 ** x
    assert np.max(np.abs(st.b - b_exact)) < 1e-5  # grid-level discretization


def test_empty_block_resolvent_and_potential():
    kern = wigner_kernel(1.0)
    h0 = GridFunction.constant(0.0, 32)
    assert abs(resolvent(kern, h0, 2.5) - 0.4) < 1e-14
    assert abs(grand_potential(kern, h0, 2.5) - np.log(2.5)) < 1e-14


def test_branch_init_matches_first_order_term():
    # b at a=0 equals the first-order kernel term
    kern = smooth_kernel(4)
    b0 = sv.r0_apply(kern, np.zeros(48))
    np.testing.assert_allclose(b0, kern.eval(1, midpoints(48)), atol=1e-14)


def test_herglotz_sign():
    h = GridFunction.constant(1.0, 64)
    for kern in (wigner_kernel(1.0), qssep_kernel()):
        for z in (0.5 + 0.01j, -1.0 + 0.3j, 0.3 + 1j, 2.0 + 0.05j):
            g = resolvent(kern, h, z)
            assert g.imag * z.imag < 0


def test_moment_series_wigner_catalan():
    phis = moment_series(wigner_kernel(1.0), GridFunction.constant(1.0, 64), 6)
    np.testing.assert_allclose(phis.asarray(), [0, 1, 0, 2, 0, 5], atol=1e-7)


def test_moment_series_matches_oracle_smooth_kernel():
    kern = smooth_kernel(0)
    h = GridFunction.from_callable(lambda x: 0.5 + x / 4, 64)
    phis = moment_series(kern, h, 6).asarray()
    want = [moment_oracle(kern, h, n, 64) for n in range(1, 7)]
    np.testing.assert_allclose(phis, want, rtol=1e-7, atol=1e-10)


def test_moment_series_qssep_first():
    phis = moment_series(qssep_kernel(), GridFunction.constant(1.0, 64), 1)
    assert abs(phis[0] - 0.5) < 1e-9


def test_moment_series_order_limit():
    with pytest.raises(SizeLimitError):
        moment_series(wigner_kernel(1.0), GridFunction.constant(1.0, 16), 9)


def test_generic_kernel_order_limit():
    def fn(n, xs):
        return np.broadcast_arrays(*xs)[0] * 0 + 0.1
    from subspectra.kernels import LocalCumulantKernel
    quartic = LocalCumulantKernel(name="quartic", fn=fn, zero_beyond=4)
    with pytest.raises(UnsupportedOrderError):
        sv.r0_apply(quartic, np.zeros(16))


def test_spectral_density_semicircle():
    kern = wigner_kernel(1.0)
    lam = np.linspace(-2.5, 2.5, 251)
    dens = spectral_density(kern, GridFunction.constant(1.0, 200), lam, eps=1e-3)
    exact = np.where(np.abs(lam) < 2, np.sqrt(np.maximum(4 - lam ** 2, 0)) / (2 * np.pi), 0)
    assert np.trapezoid(np.abs(dens.rho - exact), lam) < 1e-2
    assert int(dens.gaps.sum()) == 0
    assert abs(dens.integral() - 1.0) < 1e-2
    assert dens.rho.min() > -1e-8


def test_spectral_density_atom_weight_indicator():
    kern = wigner_kernel(1.0)
    h = GridFunction.indicator([(0.25, 0.75)], 200)
    lam = np.linspace(-1.8, 1.8, 121)
    dens = spectral_density(kern, h, lam, eps=2e-3)
    assert abs(dens.atom_weight - 0.5) < 1e-12
    assert abs(dens.block_fraction - 0.5) < 1e-12
    # block-normalized mass is 1
    assert abs(dens.integral() - 1.0) < 2e-2


def test_scan_direction_independence():
    kern = wigner_kernel(1.0)
    h = GridFunction.constant(1.0, 100)
    lam = np.linspace(-1.5, 1.5, 61)
    up = spectral_density(kern, h, lam, eps=1e-3, tol=1e-12)
    down = spectral_density(kern, h, lam[::-1], eps=1e-3, tol=1e-12)
    assert np.max(np.abs(up.rho - down.rho[::-1])) < 1e-8


def test_thread_count_does_not_change_results():
    kern = wigner_kernel(1.0)
    h = GridFunction.constant(1.0, 100)
    lam = np.linspace(-2.2, 2.2, 150)
    one = spectral_density(kern, h, lam, eps=1e-3, chunk=32, threads=1)
    two = spectral_density(kern, h, lam, eps=1e-3, chunk=32, threads=3)
    np.testing.assert_array_equal(one.rho, two.rho)


def test_grand_potential_derivative_is_resolvent():
    h = GridFunction.constant(1.0, 128)
    for kern, z in ((wigner_kernel(1.0), 3.0), (qssep_kernel(), 2.0 + 1.0j)):
        d = 1e-5
        dF = (grand_potential(kern, h, z + d) - grand_potential(kern, h, z - d)) / (2 * d)
        g = resolvent(kern, h, z)
        assert abs(dF - g) <= 1e-6 * abs(g)


def test_grand_potential_wigner_series():
    import math
    z = 3.0
    val = grand_potential(wigner_kernel(1.0), GridFunction.constant(1.0, 64), z).real
    cats = [math.comb(2 * n, n) // (n + 1) for n in range(1, 60)]
    series = np.log(z) - sum(z ** (-2 * n) * cats[n - 1] / (2 * n) for n in range(1, 60))
    assert abs(val - series) < 1e-8


def test_functional_derivative_examples():
    rng = np.random.default_rng(11)
    G = 128
    h1 = GridFunction.constant(1.0, G)
    hs = GridFunction.from_callable(lambda x: 0.5 + x / 4, G)
    for kern, h, z in ((wigner_kernel(1.0), h1, 3.0), (qssep_kernel(), hs, 2.0 + 1.0j)):
        for idx in rng.integers(0, G, size=3):
            lhs, rhs = functional_derivative_check(kern, h, z, int(idx))
            assert abs(lhs - rhs) <= 1e-4 * max(abs(rhs), 1e-12)


def test_functional_derivative_requires_positive_weight():
    h = GridFunction.indicator([(0.5, 1.0)], 32)
    with pytest.raises(DomainError):
        functional_derivative_check(wigner_kernel(1.0), h, 3.0, 0)


def test_weight_must_be_nonnegative():
    with pytest.raises(DomainError):
        fixed_point_solve(wigner_kernel(1.0), np.array([-1.0] * 8), 3.0)


def test_residual_tolerance_contract():
    st = fixed_point_solve(qssep_kernel(), GridFunction.constant(1.0, 128), 1.5 + 0.2j)
    a_check = 1.0 / (st.z - st.b)
    b_check = sv.r0_apply(qssep_kernel(), st.a, scratch=dict(st.scratch))
    assert np.max(np.abs(st.a - a_check)) < 1e-12
    assert np.max(np.abs(np.asarray(b_check) - st.b)) <= 1e-10