"""Grid solver for the slice-spectrum stationarity equations.

For a weight profile h and a local cumulant kernel, the pair (a_z, b_z) on
the grid satisfies

    a_z(x) = h(x) / (z - h(x) b_z(x)),        b_z(x) = R0[a_z](x),

where R0 is the gradient of the cumulant generating functional F0.  The
resolvent of the weighted slice is the grid mean of 1/(z - h b_z); its
boundary values give the spectral density, and the stationary value of

    F(z) = integral[ log(z - h b) + a b ] - F0[a]

is the generating function whose z-derivative is the resolvent.

Kernels supply R0/F0 either as closed forms, as constants (position-free
ensembles), or through order <= 3 tensor quadrature.
"""

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BranchError,
    ConditioningError,
    ConvergenceError,
    DomainError,
    NoSolutionError,
    SizeLimitError,
    UnsupportedOrderError,
)
from .freeprob import MOMENTS, FormalSeries, SpectralDensity, richardson_extrapolate
from .grids import as_grid_values, midpoints

_MAX_TENSOR_ELEMS = 1 << 21
GENERIC_MAX_ORDER = 3


@dataclass
class FixedPointState:
    """Converged (a, b) pair at one spectral parameter."""

    z: complex
    a: np.ndarray
    b: np.ndarray
    residual: float
    iterations: int
    scratch: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# R0 / F0 dispatch
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=64)
def _kernel_tensor(kern, n, resolution):
    """Order-n kernel values on the grid, cached per (kernel, grid)."""
    if resolution ** n > _MAX_TENSOR_ELEMS:
        raise UnsupportedOrderError(
            f"order-{n} quadrature tensor would need {resolution ** n} elements; "
            f"use a closed-form kernel or a coarser grid")
    grid = midpoints(resolution)
    coords = []
    for axis in range(n):
        shape = [1] * n
        shape[axis] = resolution
        coords.append(grid.reshape(shape))
    return np.asarray(kern.eval(n, *coords), dtype=float)


def _generic_orders(kern):
    top = kern.zero_beyond
    if top is None:
        top = kern.max_order
    if top is None or top > GENERIC_MAX_ORDER:
        raise UnsupportedOrderError(
            f"kernel '{kern.name}' has terms beyond order {GENERIC_MAX_ORDER} and "
            f"no closed form; the generic quadrature path cannot evaluate it")
    return min(top, GENERIC_MAX_ORDER)


def _constant_orders(kern):
    top = kern.max_order if kern.max_order is not None else kern.zero_beyond
    if top is None:
        raise UnsupportedOrderError(
            f"constant kernel '{kern.name}' needs max_order or zero_beyond set")
    if kern.zero_beyond is not None:
        top = min(top, kern.zero_beyond)
    return top


def r0_apply(kern, a, resolution=None, scratch=None):
    """Apply the cumulant-functional gradient: b(x) = dF0/da(x).

    Dispatches to the kernel's closed form when available, to the power
    series in A = mean(a) for constant kernels, and to tensor quadrature
    (orders <= 3) otherwise.
    """
    a = as_grid_values(a, resolution)
    G = a.size
    x = midpoints(G)
    if scratch is None:
        scratch = {}
    if kern.r0_form is not None:
        return kern.r0_form(a, x, scratch)
    if kern.constant:
        A = a.mean()
        top = _constant_orders(kern)
        out = 0.0
        for k in range(top, 0, -1):
            out = out * A + kern.constant_value(k)
        return np.full(G, out) if np.isscalar(out) or np.ndim(out) == 0 else out
    top = _generic_orders(kern)
    b = _kernel_tensor(kern, 1, G).astype(complex) if np.iscomplexobj(a) \
        else _kernel_tensor(kern, 1, G).copy()
    if top >= 2:
        b = b + _kernel_tensor(kern, 2, G) @ a / G
    if top >= 3:
        b = b + np.einsum("xyz,y,z->x", _kernel_tensor(kern, 3, G), a, a) / G ** 2
    return b


def f0_value(kern, a, resolution=None, scratch=None):
    """Value of the cumulant generating functional F0 at the profile a."""
    a = as_grid_values(a, resolution)
    G = a.size
    x = midpoints(G)
    if scratch is None:
        scratch = {}
    if kern.f0_form is not None:
        return kern.f0_form(a, x, scratch)
    if kern.constant:
        A = a.mean()
        top = _constant_orders(kern)
        return sum(kern.constant_value(k) * A ** k / k for k in range(1, top + 1))
    top = _generic_orders(kern)
    out = np.mean(_kernel_tensor(kern, 1, G) * a)
    if top >= 2:
        out = out + (a @ _kernel_tensor(kern, 2, G) @ a) / (2 * G ** 2)
    if top >= 3:
        out = out + np.einsum("xyz,x,y,z", _kernel_tensor(kern, 3, G), a, a, a) / (3 * G ** 3)
    return out


# ---------------------------------------------------------------------------
# fixed point
# ---------------------------------------------------------------------------

def _checked_weight(h, resolution):
    h_vals = as_grid_values(h, resolution)
    if np.any(h_vals < 0):
        raise DomainError("weight profile h must be nonnegative (h^(1/2) must exist)")
    return h_vals.astype(float)


def fixed_point_solve(kern, h, z, warm_start=None, tol=1e-10, max_iter=8000,
                      damping=0.5, anderson_depth=4, resolution=None):
    """Solve the stationarity pair (a, b) at spectral parameter z.

    Damped alternating updates: a is recomputed exactly from b, then b is
    relaxed toward R0[a], with Anderson mixing over the last few iterates to
    remove the critical slowdown near spectral edges.  Kernels whose
    linearized update map is expanding (the closed-form exclusion-process
    path at small Im z) defeat every damped relaxation, so a matrix-free
    Newton-Krylov fallback takes over when the relaxation stalls or blows
    up.  The returned state satisfies both relations to sup-norm tol.
    Deterministic for fixed inputs and settings.
    """
    h_vals = _checked_weight(h, resolution)
    G = h_vals.size
    z = complex(z)
    if warm_start is not None and warm_start.b.size == G:
        b = warm_start.b.astype(complex)
        scratch = dict(warm_start.scratch)
    else:
        scratch = {}
        b = np.asarray(r0_apply(kern, np.zeros(G), scratch=scratch), dtype=complex)

    def apply_map(b_cur):
        denom = z - h_vals * b_cur
        if np.any(np.abs(denom) < 1e-13 * max(1.0, abs(z))):
            raise BranchError(
                f"z - h*b vanished (z={z}); off the physical branch")
        a_cur = h_vals / denom
        return a_cur, np.asarray(r0_apply(kern, a_cur, scratch=scratch), dtype=complex)

    relax_budget = min(max_iter, 400)
    hist_b = []
    hist_g = []
    res_best = np.inf
    b_best = b
    eta = damping
    b_good = None
    fails = 0
    it = 0
    while it < relax_budget:
        it += 1
        try:
            a, g = apply_map(b)
            fails = 0
        except (BranchError, NoSolutionError):
            # an accelerated step left the kernel's admissible region;
            # bisect back toward the last mappable iterate
            if b_good is None:
                raise
            fails += 1
            if fails > 40:
                break
            hist_b.clear()
            hist_g.clear()
            eta = max(eta * 0.5, 1e-3)
            b = 0.5 * (b + b_good)
            continue
        b_good = b
        res = float(np.max(np.abs(g - b)))
        if res <= tol:
            return FixedPointState(z=z, a=a, b=b, residual=res,
                                   iterations=it, scratch=scratch)
        if res < res_best:
            res_best = res
            b_best = b
        elif res > 100.0 * res_best:
            break  # relaxation is diverging; hand over to Newton
        if res > 10.0 * res_best:
            hist_b.clear()
            hist_g.clear()
            eta = max(eta * 0.5, 1e-3)
        hist_b.append(b)
        hist_g.append(g)
        if len(hist_b) > anderson_depth + 1:
            hist_b.pop(0)
            hist_g.pop(0)
        m = len(hist_b) - 1
        stepped = False
        if m >= 1 and it > 3:
            # Anderson type-II: minimize the combined residual over the history
            R = np.stack([hist_g[i] - hist_b[i] for i in range(m + 1)], axis=1)
            dR = R[:, 1:] - R[:, :-1]
            gamma, *_ = np.linalg.lstsq(dR, R[:, -1], rcond=None)
            if np.all(np.isfinite(gamma)) and np.max(np.abs(gamma)) < 50.0:
                alpha = np.zeros(m + 1, dtype=complex)
                alpha[-1] = 1.0
                alpha[1:] -= gamma
                alpha[:-1] += gamma
                b = sum(alpha[i] * hist_g[i] for i in range(m + 1))
                stepped = True
        if not stepped:
            b = (1.0 - eta) * b + eta * g
    return _newton_krylov(apply_map, b_best, z, scratch, tol,
                          iterations_used=it)


def _newton_krylov(apply_map, b0, z, scratch, tol, iterations_used=0,
                   max_newton=60):
    """Matrix-free Newton on F(b) = R0[a(b)] - b with GMRES inner solves.

    Directional derivatives of the analytic update map are taken by complex
    forward differences; a backtracking line search keeps the residual
    decreasing.
    """
    from scipy.sparse.linalg import LinearOperator, gmres

    b = b0.astype(complex)
    n = b.size
    a, g = apply_map(b)
    F = g - b
    res = float(np.max(np.abs(F)))
    for newton_it in range(1, max_newton + 1):
        if res <= tol:
            return FixedPointState(z=z, a=a, b=b, residual=res,
                                   iterations=iterations_used + newton_it,
                                   scratch=scratch)
        scale = float(np.linalg.norm(b)) + 1.0

        def matvec(v):
            nv = float(np.linalg.norm(v))
            if nv == 0.0:
                return np.zeros(n, dtype=complex)
            delta = 1e-7 * scale / nv
            _, g_pert = apply_map(b + delta * v)
            return (g_pert - g) / delta - v

        op = LinearOperator((n, n), matvec=matvec, dtype=complex)
        step, info = gmres(op, -F, rtol=1e-3, restart=80, maxiter=2)
        if not np.all(np.isfinite(step)):
            break
        norm_f = float(np.linalg.norm(F))
        accepted = False
        for t in (1.0, 0.5, 0.25, 0.1, 0.03, 0.01):
            try:
                a_t, g_t = apply_map(b + t * step)
            except (BranchError, NoSolutionError):
                continue
            f_t = g_t - (b + t * step)
            if float(np.linalg.norm(f_t)) < (1.0 - 0.1 * t) * norm_f:
                b = b + t * step
                a, g, F = a_t, g_t, f_t
                res = float(np.max(np.abs(F)))
                accepted = True
                break
        if not accepted:
            break
    raise ConvergenceError(
        f"no convergence at z={z} (relaxation and Newton; residual {res:.3e})",
        residual=res, iterations=iterations_used)


def resolvent(kern, h, z, warm_start=None, **kwargs):
    """Trace resolvent of the weighted slice: grid mean of 1/(z - h b_z).

    Cells with h = 0 contribute exactly 1/z.
    """
    state = fixed_point_solve(kern, h, z, warm_start=warm_start, **kwargs)
    return resolvent_from_state(state, _checked_weight(h, kwargs.get("resolution")))


def resolvent_from_state(state, h_vals):
    return complex(np.mean(1.0 / (state.z - h_vals * state.b)))


# ---------------------------------------------------------------------------
# moment extraction
# ---------------------------------------------------------------------------

def estimate_radius(kern, h, resolution=None):
    """Crude upper estimate of the slice spectral radius from one R0 sweep.

    Combines the first-order scale sup|h g_1| with a variance-type scale
    from the interaction part of R0 probed at a = h; the factor 2 reproduces
    the exact edge for position-free pair kernels.
    """
    h_vals = _checked_weight(h, resolution)
    b1 = np.real(np.asarray(r0_apply(kern, np.zeros(h_vals.size))))
    bh = np.asarray(r0_apply(kern, h_vals.astype(complex)), dtype=complex)
    lin = float(np.max(np.abs(h_vals * b1))) if h_vals.size else 0.0
    inter = float(np.max(np.abs(bh - b1)))
    sup_h = float(np.max(h_vals)) if h_vals.size else 0.0
    return 1.5 * (lin + 2.0 * math.sqrt(max(sup_h * inter, 0.0))) + 0.1


def moment_series(kern, h, n_max, resolution=64, radius=None, nodes=24,
                  circle_factor=3.0, tol=1e-13):
    """Trace moments of the weighted slice from the large-|z| resolvent.

    Samples z G(z) = sum phi_n z^{-n} on a circle |z| = circle_factor * radius
    safely beyond the spectral radius and solves the resulting Vandermonde
    system in u = 1/z for the expansion coefficients.  Equispaced circle
    nodes keep the system perfectly conditioned, which real nodes cannot do
    at these orders.  Results match the partition-sum oracle on the same
    grid.  The normalization coefficient is checked and a conditioning error
    raised if the extraction degraded.
    """
    if not 1 <= n_max <= 8:
        raise SizeLimitError(f"n_max must be in 1..8, got {n_max}")
    h_vals = _checked_weight(h, resolution)
    if radius is None:
        radius = estimate_radius(kern, h_vals)
    big_r = circle_factor * max(radius, 1e-6)
    u = np.exp(2j * np.pi * np.arange(nodes) / nodes) / big_r
    samples = np.empty(nodes, dtype=complex)
    state = None
    for j in range(nodes):
        z = 1.0 / u[j]
        state = fixed_point_solve(kern, h_vals, z, warm_start=state, tol=tol)
        samples[j] = z * resolvent_from_state(state, h_vals)
    vand = u[:, None] ** np.arange(nodes)[None, :]
    coeffs = np.linalg.solve(vand, samples)
    if abs(coeffs[0] - 1.0) > 1e-7 or np.max(np.abs(coeffs[1:n_max + 1].imag)) > 1e-6:
        raise ConditioningError(
            f"moment extraction degraded (phi_0 = {coeffs[0]}); "
            f"reduce n_max or supply a tighter radius")
    return FormalSeries(MOMENTS, coeffs[1:n_max + 1].real)


# ---------------------------------------------------------------------------
# spectral density
# ---------------------------------------------------------------------------

def _scan_density(kern, h_vals, lam_grid, eps, tol, max_iter, chunk,
                  anneal_start, anneal_steps):
    """One continuation sweep at fixed eps; returns (rho_block, gap mask)."""
    G = h_vals.size
    mask = h_vals > 0
    ell = float(np.mean(mask))
    rho = np.full(lam_grid.size, np.nan)
    gaps = np.zeros(lam_grid.size, dtype=bool)
    for start in range(0, lam_grid.size, chunk):
        state = None
        for i in range(start, min(start + chunk, lam_grid.size)):
            lam = lam_grid[i]
            try:
                if state is None and anneal_steps > 0:
                    for e in np.geomspace(anneal_start, eps, anneal_steps):
                        state = fixed_point_solve(kern, h_vals, complex(lam, e),
                                                  warm_start=state, tol=tol,
                                                  max_iter=max_iter)
                else:
                    state = fixed_point_solve(kern, h_vals, complex(lam, eps),
                                              warm_start=state, tol=tol,
                                              max_iter=max_iter)
            except (ConvergenceError, BranchError, NoSolutionError):
                gaps[i] = True
                state = None
                continue
            g_block = np.mean(mask / (state.z - h_vals * state.b)) / ell
            # G(lam - i eps) is the conjugate of G(lam + i eps)
            rho[i] = -g_block.imag / np.pi
    return rho, gaps


def spectral_density(kern, h, lam_grid, eps=1e-3, eps_ladder=None,
                     resolution=None, tol=1e-10, max_iter=8000, chunk=64,
                     anneal_start=0.5, anneal_steps=6, threads=1):
    """Spectral density of the weighted slice along a real grid.

    Scans z = lambda + i*eps with warm-start continuation inside fixed-size
    chunks (chunks re-initialize, so results do not depend on the thread
    count).  With an eps ladder, densities are Richardson-extrapolated to
    the real axis.  Returns the block-normalized density together with the
    zero-eigenvalue atom weight 1 - ell carried by the total spectrum.
    Isolated convergence failures are marked as gaps, not fatal.
    """
    h_vals = _checked_weight(h, resolution)
    lam_grid = np.asarray(lam_grid, dtype=float)
    mask = h_vals > 0
    ell = float(np.mean(mask))
    if ell == 0.0:
        return SpectralDensity(lam_grid, np.zeros(lam_grid.size),
                               atom_weight=1.0, block_fraction=0.0)
    ladder = [float(eps)] if eps_ladder is None else [float(e) for e in eps_ladder]

    def sweep(e):
        return _scan_density(kern, h_vals, lam_grid, e, tol, max_iter, chunk,
                             anneal_start, anneal_steps)

    if threads > 1 and lam_grid.size > chunk:
        from concurrent.futures import ThreadPoolExecutor

        def sweep(e):  # noqa: F811 - threaded variant with identical chunking
            starts = list(range(0, lam_grid.size, chunk))
            rho = np.full(lam_grid.size, np.nan)
            gaps = np.zeros(lam_grid.size, dtype=bool)
            def run(s):
                sub = lam_grid[s:s + chunk]
                return s, _scan_density(kern, h_vals, sub, e, tol, max_iter,
                                        chunk, anneal_start, anneal_steps)
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for s, (r, g) in pool.map(run, starts):
                    rho[s:s + chunk] = r
                    gaps[s:s + chunk] = g
            return rho, gaps

    rows = []
    gaps = np.zeros(lam_grid.size, dtype=bool)
    for e in ladder:
        r, g = sweep(e)
        rows.append(r)
        gaps |= g
    rho = rows[0] if len(rows) == 1 else richardson_extrapolate(ladder, rows)
    dens = SpectralDensity(lam_grid, rho, atom_weight=1.0 - ell,
                           block_fraction=ell, gaps=gaps)
    dens.support = dens.detect_support()
    return dens


# ---------------------------------------------------------------------------
# variational structure
# ---------------------------------------------------------------------------

def grand_potential(kern, h, z, warm_start=None, **kwargs):
    """Stationary value of the generating functional at z.

    Evaluates integral[log(z - h b) + a b] - F0[a] at the fixed point; its
    numerical z-derivative equals the resolvent.  For h identically zero
    this is log z exactly.
    """
    h_vals = _checked_weight(h, kwargs.get("resolution"))
    state = fixed_point_solve(kern, h_vals, z, warm_start=warm_start, **kwargs)
    bracket = np.mean(np.log(state.z - h_vals * state.b) + state.a * state.b)
    return complex(bracket - f0_value(kern, state.a, scratch=state.scratch))


def functional_derivative_check(kern, h, z, x_index, delta=1e-4, **kwargs):
    """Compare -h(x) dF/dh(x) (central differences) against a(x) b(x).

    Returns the pair (lhs, rhs); they agree at a converged stationary point.
    """
    h_vals = _checked_weight(h, kwargs.get("resolution"))
    G = h_vals.size
    if not 0 <= x_index < G:
        raise DomainError(f"x_index {x_index} outside grid of size {G}")
    if h_vals[x_index] <= 0:
        raise DomainError("functional derivative probe requires h > 0 at the cell")
    step = min(delta, 0.45 * h_vals[x_index])
    h_plus = h_vals.copy()
    h_minus = h_vals.copy()
    h_plus[x_index] += step
    h_minus[x_index] -= step
    f_plus = grand_potential(kern, h_plus, z, **kwargs)
    f_minus = grand_potential(kern, h_minus, z, **kwargs)
    lhs = -h_vals[x_index] * (f_plus - f_minus) * G / (2.0 * step)
    state = fixed_point_solve(kern, h_vals, z, **kwargs)
    rhs = complex(state.a[x_index] * state.b[x_index])
    return lhs, rhs
