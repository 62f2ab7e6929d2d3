"""Non-crossing partitions, Kreweras complements, and the moment oracle.

The oracle computes trace moments of the weighted matrix slice directly as a
sum over non-crossing partitions, with one quadrature variable per part and
the complementary partition supplying the cumulant factors.  It is the
brute-force cross-check for the fixed-point solver.
"""

import functools
import itertools
import math

import numpy as np

from .errors import InvalidPartitionError, SizeLimitError, UnsupportedOrderError
from .grids import as_grid_values, midpoints

ENUM_MAX_N = 12
ORACLE_MAX_N = 8

# Largest factor tensor (elements) the generic quadrature path may build.
_MAX_TENSOR_ELEMS = 1 << 21


def catalan(n):
    return math.comb(2 * n, n) // (n + 1)


def is_noncrossing(parts, n):
    """True if the parts form a non-crossing partition of {1..n}."""
    part_of = {}
    for idx, p in enumerate(parts):
        for i in p:
            if i in part_of:
                return False
            part_of[i] = idx
    if sorted(part_of) != list(range(1, n + 1)):
        return False
    for a, b, c, d in itertools.combinations(range(1, n + 1), 4):
        if part_of[a] == part_of[c] != part_of[b] == part_of[d]:
            return False
    return True


class NCPartition:
    """A non-crossing set partition of {1..n}, parts sorted by minimum."""

    __slots__ = ("n", "parts")

    def __init__(self, n, parts, _trusted=False):
        parts = tuple(sorted((tuple(sorted(p)) for p in parts), key=lambda p: p[0]))
        if not _trusted and not is_noncrossing(parts, n):
            raise InvalidPartitionError(f"not a non-crossing partition of {{1..{n}}}: {parts}")
        self.n = n
        self.parts = parts

    def __len__(self):
        return len(self.parts)

    def __eq__(self, other):
        return isinstance(other, NCPartition) and (self.n, self.parts) == (other.n, other.parts)

    def __hash__(self):
        return hash((self.n, self.parts))

    def __repr__(self):
        return f"NCPartition({self.n}, {list(map(list, self.parts))})"

    def part_of(self):
        """Map element -> index of its part."""
        lookup = {}
        for idx, p in enumerate(self.parts):
            for i in p:
                lookup[i] = idx
        return lookup


def _nc_parts(elems):
    """Yield non-crossing partitions of the sorted tuple elems.

    The part of the smallest element is chosen first; the gaps between its
    consecutive members are partitioned independently (any crossing would
    have to straddle the chosen part).
    """
    if not elems:
        yield ()
        return
    first, rest = elems[0], elems[1:]
    m = len(rest)
    for k in range(m + 1):
        for picks in itertools.combinations(range(m), k):
            block = (first,) + tuple(rest[i] for i in picks)
            bounds = list(picks) + [m]
            gaps = []
            lo = 0
            for hi in bounds:
                gaps.append(rest[lo:hi])
                lo = hi + 1
            for sub in itertools.product(*[tuple(_nc_parts(g)) for g in gaps]):
                out = (block,)
                for s in sub:
                    out = out + s
                yield out


@functools.lru_cache(maxsize=None)
def enumerate_nc(n):
    """All non-crossing partitions of {1..n}, in a fixed deterministic order."""
    if not 1 <= n <= ENUM_MAX_N:
        raise SizeLimitError(f"n must be in 1..{ENUM_MAX_N}, got {n}")
    out = tuple(NCPartition(n, parts, _trusted=True)
                for parts in _nc_parts(tuple(range(1, n + 1))))
    assert len(out) == catalan(n)
    return out


def kreweras(pi):
    """Kreweras complement of a non-crossing partition, relabelled to {1..n}.

    Writing the parts of pi as increasing cycles gives a permutation p; the
    complement is the cycle decomposition of p^{-1} composed with the full
    cycle (1 2 .. n).  It satisfies len(pi) + len(kreweras(pi)) == n + 1.
    """
    n = pi.n
    perm = {}
    for p in pi.parts:
        for i, j in zip(p, p[1:] + p[:1]):
            perm[i] = j
    inv = {v: k for k, v in perm.items()}
    q = {i: inv[i % n + 1] for i in range(1, n + 1)}
    seen = set()
    parts = []
    for start in range(1, n + 1):
        if start in seen:
            continue
        cycle = [start]
        seen.add(start)
        nxt = q[start]
        while nxt != start:
            cycle.append(nxt)
            seen.add(nxt)
            nxt = q[nxt]
        parts.append(cycle)
    return NCPartition(n, parts, _trusted=True)


# ---------------------------------------------------------------------------
# moment oracle
# ---------------------------------------------------------------------------

def _white_order_check(kern, pistar):
    for q in pistar.parts:
        if not kern.supports(len(q)):
            raise UnsupportedOrderError(
                f"kernel '{kern.name}' cannot supply order {len(q)} "
                f"needed by complement {pistar.parts}")


def _partition_marked(kern, pi, h_vals, grid, root_coord, root_h):
    """Contribution of one partition, as values over the root variable.

    Message passing over the bipartite part tree: each part of pi is a
    variable vertex carrying h^{|part|}, each part of the complement is a
    factor vertex carrying a cumulant tensor; the two kinds alternate and
    every element of {1..n} is one tree edge.  Non-root variables are
    integrated with the midpoint rule; the root runs over root_coord.
    """
    pistar = kreweras(pi)
    _white_order_check(kern, pistar)
    if any(kern.zero_beyond is not None and len(q) > kern.zero_beyond
           for q in pistar.parts):
        return np.zeros_like(root_coord)

    root = pi.part_of()[1]
    G = len(grid)

    if kern.constant:
        coef = 1.0
        for q in pistar.parts:
            coef *= kern.constant_value(len(q))
            if coef == 0.0:
                return np.zeros_like(root_coord)
        for idx, p in enumerate(pi.parts):
            if idx != root:
                coef *= float(np.mean(h_vals ** len(p)))
        return coef * root_h ** len(pi.parts[root])

    pof, qof = pi.part_of(), pistar.part_of()
    black_facs = {b: [] for b in range(len(pi.parts))}       # black -> whites
    white_slots = {w: [] for w in range(len(pistar.parts))}  # white -> [(elem, black)]
    for i in range(1, pi.n + 1):
        black_facs[pof[i]].append(qof[i])
        white_slots[qof[i]].append((i, pof[i]))

    def coord_of(b):
        return root_coord if b == root else grid

    def msg_black(b, skip_white):
        vec = (root_h if b == root else h_vals) ** len(pi.parts[b])
        for w in black_facs[b]:
            if w != skip_white:
                vec = vec * msg_white(w, b)
        return vec

    def msg_white(w, parent_black):
        slot_blacks = [b for _, b in sorted(white_slots[w])]
        axis_of = {}
        for b in slot_blacks:
            if b not in axis_of:
                axis_of[b] = len(axis_of)
        nax = len(axis_of)
        sizes = {b: len(coord_of(b)) for b in axis_of}
        if math.prod(sizes.values()) > _MAX_TENSOR_ELEMS:
            raise UnsupportedOrderError(
                f"order-{len(slot_blacks)} factor needs a tensor of "
                f"{math.prod(sizes.values())} elements; reduce the oracle grid")
        coords = []
        for b in slot_blacks:
            shape = [1] * nax
            shape[axis_of[b]] = sizes[b]
            coords.append(coord_of(b).reshape(shape))
        tensor = np.asarray(kern.eval(len(slot_blacks), *coords))
        for b in sorted(axis_of, key=axis_of.get):
            if b == parent_black:
                continue
            ax = axis_of[b]
            tensor = np.tensordot(tensor, msg_black(b, w), axes=([ax], [0])) / G
            axis_of = {v: (a if a < ax else a - 1) for v, a in axis_of.items() if v != b}
        return tensor  # 1-d over the parent axis

    return msg_black(root, None)


def _checked_order(n):
    if not 1 <= n <= ORACLE_MAX_N:
        raise SizeLimitError(f"oracle order must be in 1..{ORACLE_MAX_N}, got {n}")
    return n


def _checked_h(h, resolution):
    h_vals = as_grid_values(h, resolution)
    if np.any(h_vals < 0):
        raise ValueError("weight profile h must be nonnegative")
    return h_vals


def moment_oracle(kern, h, n, resolution=64):
    """n-th trace moment of the h-weighted slice, by direct partition sum.

    Each non-crossing partition contributes a tensor-quadrature integral with
    one midpoint variable per part; the Kreweras complement supplies the
    cumulant factors.  Cost grows with the largest complement part, so keep
    the grid modest at high orders.
    """
    h_vals = _checked_h(h, resolution)
    grid = midpoints(len(h_vals))
    total = 0.0
    for pi in enumerate_nc(_checked_order(n)):
        total += float(np.mean(_partition_marked(kern, pi, h_vals, grid, grid, h_vals)))
    return total


def marked_moment_oracle(kern, h, n, x, resolution=64):
    """Moment with the variable of the part containing 1 pinned to x.

    Integrating the result over x with the midpoint rule recovers
    moment_oracle.  The weight at the marked point is interpolated from the
    grid when x is off-grid.
    """
    h_vals = _checked_h(h, resolution)
    if not 0.0 <= x <= 1.0:
        raise ValueError("marked point must lie in [0, 1]")
    grid = midpoints(len(h_vals))
    hx = float(np.interp(x, grid, h_vals))
    root_coord = np.array([float(x)])
    root_h = np.array([hx])
    total = 0.0
    for pi in enumerate_nc(_checked_order(n)):
        total += float(_partition_marked(kern, pi, h_vals, grid, root_coord, root_h)[0])
    return total
