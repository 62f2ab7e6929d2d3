import numpy as np
import pytest

from subspectra import GridFunction, LocalCumulantKernel
from subspectra import freeprob as fp


def rel_close(a, b, rel=1e-6, floor=1e-8):
    """Relative closeness with an absolute floor for true zeros."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.all(np.abs(a - b) <= np.maximum(rel * np.maximum(np.abs(a), np.abs(b)), floor))


def smooth_kernel(seed=0):
    """A fixed smooth position-dependent kernel with orders 1..3.

    Fourier modes in the coordinate differences keep it cyclically invariant
    and reversal-symmetric; amplitudes are drawn once from the seed.
    """
    rng = np.random.default_rng(seed)
    c1, a1, p1 = 0.4, 0.25 * rng.uniform(0.5, 1), rng.uniform(0, 2 * np.pi)
    c2, a2 = 0.25, 0.15 * rng.uniform(0.5, 1)
    c3, a3 = 0.08, 0.1 * rng.uniform(0.5, 1)

    def fn(n, xs):
        xs = [np.asarray(x) for x in xs]
        if n == 1:
            return c1 + a1 * np.sin(2 * np.pi * xs[0] + p1)
        if n == 2:
            return c2 + a2 * np.cos(2 * np.pi * (xs[0] - xs[1]))
        s = (np.cos(2 * np.pi * (xs[0] - xs[1]))
             + np.cos(2 * np.pi * (xs[1] - xs[2]))
             + np.cos(2 * np.pi * (xs[2] - xs[0])))
        return c3 + a3 * s / 3.0
    return LocalCumulantKernel(name=f"smooth[{seed}]", fn=fn, zero_beyond=3)


def bernoulli_cumulants(order=12):
    return fp.moments_to_cumulants(fp.moments([0.5] * order))


@pytest.fixture(scope="session")
def h_profiles_64():
    return {
        "full": GridFunction.constant(1.0, 64),
        "half": GridFunction.indicator([(0.0, 0.5)], 64),
        "smooth": GridFunction.from_callable(lambda x: 0.5 + x / 4, 64),
    }
