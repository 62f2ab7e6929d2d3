"""Functions sampled at midpoints of a uniform grid on [0, 1].

All quadrature in the package is the midpoint rule: the integral of a grid
function equals the mean of its values.  Weight profiles h, the slice
variables a_z, b_z and variance profiles all live on this grid.
"""

import numpy as np


def midpoints(resolution):
    """Cell midpoints (k + 1/2)/G of the uniform G-cell grid on [0, 1]."""
    return (np.arange(resolution) + 0.5) / resolution


class GridFunction:
    """A real- or complex-valued function known at grid midpoints."""

    __slots__ = ("values",)

    def __init__(self, values):
        values = np.asarray(values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("grid function needs a non-empty 1-d value array")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        self.values = values

    @property
    def resolution(self):
        return self.values.size

    @property
    def x(self):
        return midpoints(self.values.size)

    def integrate(self):
        """Midpoint-rule integral over [0, 1] (the mean of the values)."""
        return self.values.mean()

    @classmethod
    def from_callable(cls, fn, resolution):
        return cls(np.asarray(fn(midpoints(resolution))))

    @classmethod
    def constant(cls, value, resolution):
        return cls(np.full(resolution, value, dtype=type(value) if isinstance(value, complex) else float))

    @classmethod
    def indicator(cls, intervals, resolution):
        """Indicator of a union of intervals [(c, d), ...], sampled at midpoints."""
        x = midpoints(resolution)
        vals = np.zeros(resolution)
        for c, d in intervals:
            if not (0.0 <= c < d <= 1.0):
                raise ValueError(f"interval ({c}, {d}) not inside [0, 1]")
            vals[(x > c) & (x < d)] = 1.0
        return cls(vals)

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"GridFunction(G={self.values.size}, dtype={self.values.dtype})"


def profile_values(h, default_resolution):
    """Like as_grid_values, but a GridFunction keeps its own resolution."""
    if isinstance(h, GridFunction):
        return h.values
    return as_grid_values(h, default_resolution)


def as_grid_values(h, resolution=None):
    """Coerce a GridFunction, array, callable or scalar to a value array."""
    if isinstance(h, GridFunction):
        if resolution is not None and h.resolution != resolution:
            raise ValueError(f"grid function has G={h.resolution}, expected {resolution}")
        return h.values
    if callable(h):
        if resolution is None:
            raise ValueError("resolution required to sample a callable")
        return np.asarray(h(midpoints(resolution)))
    arr = np.asarray(h)
    if arr.ndim == 0:
        if resolution is None:
            raise ValueError("resolution required to broadcast a scalar")
        return np.full(resolution, float(arr))
    if resolution is not None and arr.size != resolution:
        raise ValueError(f"value array has size {arr.size}, expected {resolution}")
    return arr
