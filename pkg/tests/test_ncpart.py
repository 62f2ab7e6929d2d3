import numpy as np
import pytest

from subspectra import (
    GridFunction,
    NCPartition,
    catalan,
    constant_kernel,
    enumerate_nc,
    is_noncrossing,
    kreweras,
    marked_moment_oracle,
    moment_oracle,
)
from subspectra import cumulants_to_moments, free_cumulants
from subspectra.errors import InvalidPartitionError, SizeLimitError, UnsupportedOrderError
from subspectra.grids import midpoints
from subspectra.kernels import LocalCumulantKernel

from conftest import smooth_kernel


@pytest.mark.parametrize("n,count", [(1, 1), (2, 2), (3, 5), (4, 14), (5, 42), (6, 132)])
def test_enumeration_counts(n, count):
    parts = enumerate_nc(n)
    assert len(parts) == count == catalan(n)
    assert len(set(parts)) == count


def test_enumeration_counts_to_ten():
    for n in range(7, 11):
        assert len(enumerate_nc(n)) == catalan(n)


def test_enumeration_all_noncrossing():
    for n in range(1, 8):
        for pi in enumerate_nc(n):
            assert is_noncrossing(pi.parts, n)


def test_enumeration_deterministic_order():
    first = [p.parts for p in enumerate_nc(5)]
    enumerate_nc.cache_clear()
    assert [p.parts for p in enumerate_nc(5)] == first


def test_enumeration_size_limit():
    with pytest.raises(SizeLimitError):
        enumerate_nc(13)
    with pytest.raises(SizeLimitError):
        enumerate_nc(0)


def test_crossing_partition_rejected():
    with pytest.raises(InvalidPartitionError):
        NCPartition(4, [[1, 3], [2, 4]])
    with pytest.raises(InvalidPartitionError):
        NCPartition(3, [[1, 2]])  # not covering


def test_kreweras_worked_example():
    pi = NCPartition(6, [[1, 3], [2], [4, 5], [6]])
    assert kreweras(pi).parts == ((1, 2), (3, 5, 6), (4,))


def test_kreweras_extremes():
    n = 5
    full = NCPartition(n, [range(1, n + 1)])
    singles = NCPartition(n, [[i] for i in range(1, n + 1)])
    assert kreweras(full).parts == tuple((i,) for i in range(1, n + 1))
    assert kreweras(singles).parts == (tuple(range(1, n + 1)),)


@pytest.mark.parametrize("n", range(1, 9))
def test_kreweras_part_count_identity(n):
    for pi in enumerate_nc(n):
        assert len(pi) + len(kreweras(pi)) == n + 1


def test_kreweras_output_noncrossing():
    for n in range(1, 8):
        for pi in enumerate_nc(n):
            assert is_noncrossing(kreweras(pi).parts, n)


# ---------------------------------------------------------------------------
# moment oracle
# ---------------------------------------------------------------------------

def test_constant_kernel_reproduces_moment_cumulant_relation():
    rng = np.random.default_rng(3)
    kap = rng.normal(scale=0.5, size=6)
    kern = constant_kernel(kap)
    h1 = GridFunction.constant(1.0, 16)
    want = cumulants_to_moments(free_cumulants(kap)).asarray()
    got = [moment_oracle(kern, h1, n, 16) for n in range(1, 7)]
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-13)


def test_point_mass_and_semicircle_examples():
    h1 = GridFunction.constant(1.0, 16)
    delta = constant_kernel([1.0])
    assert all(abs(moment_oracle(delta, h1, n, 16) - 1.0) < 1e-13 for n in (1, 2, 3, 4))
    semi = constant_kernel([0.0, 1.0])
    got = [moment_oracle(semi, h1, n, 16) for n in range(1, 7)]
    np.testing.assert_allclose(got, [0, 1, 0, 2, 0, 5], atol=1e-13)


def test_wigner_fourth_moment_two_pairings():
    s = 1.3
    kern = constant_kernel([0.0, s ** 2])
    h1 = GridFunction.constant(1.0, 32)
    assert abs(moment_oracle(kern, h1, 4, 32) - 2 * s ** 4) < 1e-12


def test_qssep_first_moment_half():
    from subspectra import qssep_kernel
    h1 = GridFunction.constant(1.0, 64)
    assert abs(moment_oracle(qssep_kernel(), h1, 1, 64) - 0.5) < 1e-14


def test_two_point_expansion_matches_direct_quadrature():
    kern = smooth_kernel(1)
    G = 24
    h = GridFunction.from_callable(lambda x: 0.5 + x / 4, G)
    x = midpoints(G)
    g1 = kern.eval(1, x)
    k2 = kern.eval(2, x[:, None], x[None, :])
    direct = np.mean(g1 ** 2 * h.values ** 2) + (h.values @ k2 @ h.values) / G ** 2
    assert abs(moment_oracle(kern, h, 2, G) - direct) < 1e-13


def test_marked_oracle_pins_and_integrates():
    kern = smooth_kernel(2)
    G = 20
    h = GridFunction.from_callable(lambda x: 0.5 + x / 4, G)
    grid = midpoints(G)
    for n in range(1, 5):
        total = np.mean([marked_moment_oracle(kern, h, n, x, G) for x in grid])
        assert abs(total - moment_oracle(kern, h, n, G)) < 1e-12


def test_marked_first_order_value():
    g1x = LocalCumulantKernel(name="g1x", fn=lambda n, xs: np.broadcast_arrays(*xs)[0] * 1.0,
                              zero_beyond=1)
    h1 = GridFunction.constant(1.0, 32)
    assert abs(marked_moment_oracle(g1x, h1, 1, 0.3, 32) - 0.3) < 1e-14
    assert abs(moment_oracle(g1x, h1, 1, 32) - 0.5) < 1e-14


def test_cyclic_relabeling_invariance():
    from subspectra import qssep_kernel
    base = qssep_kernel()

    def rotated(n, xs):
        return base.fn(n, xs[1:] + xs[:1])

    rot = LocalCumulantKernel(name="qssep-rot", fn=rotated, max_order=base.max_order)
    h = GridFunction.from_callable(lambda x: 0.5 + x / 4, 20)
    for n in (2, 3, 4):
        a = moment_oracle(base, h, n, 20)
        b = moment_oracle(rot, h, n, 20)
        assert abs(a - b) < 1e-12


def test_oracle_order_limit_and_kernel_order_error():
    kern = constant_kernel([0.5, 0.25], max_order=2, zero_beyond=None)
    h1 = GridFunction.constant(1.0, 8)
    with pytest.raises(SizeLimitError):
        moment_oracle(kern, h1, 9, 8)
    with pytest.raises(UnsupportedOrderError):
        moment_oracle(kern, h1, 3, 8)  # complement needs order 3


def test_negative_weight_rejected():
    kern = constant_kernel([0.0, 1.0])
    with pytest.raises(ValueError):
        moment_oracle(kern, np.array([-0.1] * 8), 2, 8)
