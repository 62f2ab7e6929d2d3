"""Closed-form kernels and spectra for the worked ensembles.

Position-free ensembles (flat-variance pair kernel, unitarily rotated
matrices) have constant cumulant kernels; the exclusion-process steady
state has the structured kernel fixed by

    sum over non-crossing partitions of g_pi(x) = min(x),

whose generating functional admits the implicit closed form used by the
solver.  The slice spectra of proper subintervals follow a transcendental
one-complex-parameter equation solved here by Newton continuation.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DomainError,
    NoSolutionError,
    RootTrackingError,
    SizeLimitError,
    UnsupportedOrderError,
)
from . import freeprob
from .freeprob import FormalSeries, SpectralDensity
from .grids import as_grid_values, midpoints, profile_values
from .kernels import LocalCumulantKernel, constant_kernel
from .ncpart import enumerate_nc

QSSEP_KERNEL_MAX_N = 8


# ---------------------------------------------------------------------------
# flat and variance-profile pair kernels
# ---------------------------------------------------------------------------

def wigner_kernel(s):
    """Pair-only kernel: g_2 = s^2, all other orders vanish."""
    if not s > 0:
        raise DomainError(f"scale s must be positive, got {s}")
    return constant_kernel([0.0, float(s) ** 2], name=f"wigner(s={s})")


def inhomogeneous_wigner_kernel(s_profile, resolution=400):
    """Diagonal-covariance pair kernel with variance profile s(x)^2.

    The pair cumulant is concentrated on coinciding positions, so the
    functional gradient acts cellwise: b(x) = s(x)^2 a(x).  There is no
    pointwise kernel evaluation (the profile is a distribution in x - y);
    only the solver closed forms are provided.
    """
    s_vals = profile_values(s_profile, resolution)
    if np.any(s_vals <= 0):
        raise DomainError("variance profile s(x) must be positive")
    s2 = np.asarray(s_vals, dtype=float) ** 2

    def r0(a, x, scratch):
        if a.size != s2.size:
            raise ValueError(f"profile grid {s2.size} != solver grid {a.size}")
        return s2 * a

    def f0(a, x, scratch):
        return np.mean(s2 * a * a) / 2.0

    return LocalCumulantKernel(name="inhomogeneous-wigner", fn=None,
                               zero_beyond=2, r0_form=r0, f0_form=f0)


def inhomogeneous_wigner_density(s_profile, lam, resolution=400):
    """Density of the variance-profile ensemble on the full interval.

    Superposition of local semicircles:
    rho(lam) = (1/2pi) integral dx sqrt(max(4 s(x)^2 - lam^2, 0)) / s(x)^2.
    """
    s_vals = np.asarray(profile_values(s_profile, resolution), dtype=float)
    s2 = s_vals ** 2
    lam = np.asarray(lam, dtype=float)
    rad = np.maximum(4.0 * s2[None, :] - lam[..., None] ** 2, 0.0)
    out = np.mean(np.sqrt(rad) / s2[None, :], axis=-1) / (2.0 * np.pi)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# unitarily rotated matrices: constant kernels and free compression
# ---------------------------------------------------------------------------

def haar_kernel(kappa):
    """Constant kernel equal to the free cumulants of the rotated spectrum."""
    if kappa.kind != freeprob.FREE_CUMULANTS:
        raise ValueError("haar_kernel needs a free-cumulant series")
    return constant_kernel(kappa.coeffs, name="haar", max_order=kappa.order,
                           zero_beyond=None)


def haar_subblock_moments(kappa, ell, n_max):
    """Slice moments of a rotated matrix via free compression.

    Compress the cumulants by 1/ell, convert to moments, then rescale the
    eigenvalue by ell; the trace moments over the full matrix acquire one
    extra factor of ell from the block fraction.
    """
    if not 0 < ell <= 1:
        raise DomainError(f"block fraction must be in (0, 1], got {ell}")
    if n_max > kappa.order:
        raise UnsupportedOrderError(
            f"need cumulants to order {n_max}, series has {kappa.order}")
    comp = freeprob.free_compress(kappa, ell)
    m_comp = freeprob.cumulants_to_moments(comp).asarray()[:n_max]
    m_block = np.array([ell ** n * m_comp[n - 1] for n in range(1, n_max + 1)])
    return FormalSeries(freeprob.MOMENTS, m_block)


def haar_subblock_density(kappa, ell, lam_grid, eps=1e-3):
    """Slice density of a rotated matrix from the compressed-cumulant resolvent.

    The truncated cumulant series turns the resolvent relation into a
    polynomial equation per grid point; the root on the half-plane branch is
    tracked by continuation.  Quality is limited by the series truncation;
    moment-level comparisons should use haar_subblock_moments.
    """
    if not 0 < ell <= 1:
        raise DomainError(f"block fraction must be in (0, 1], got {ell}")
    comp = freeprob.free_compress(kappa, ell).asarray()
    K = comp.size
    lam_grid = np.asarray(lam_grid, dtype=float)
    rho = np.zeros(lam_grid.size)

    def pick_root(zeta, target):
        # zeta*A = 1 + sum_k comp_k A^k
        poly = np.zeros(K + 1, dtype=complex)  # np.roots order: highest first
        poly[-1] = -1.0
        poly[-2] = zeta - comp[0]
        for k in range(2, K + 1):
            poly[K - k] = -comp[k - 1]
        roots = np.roots(poly)
        cand = roots[roots.imag < 0.0]
        if cand.size == 0:
            return None
        return cand[np.argmin(np.abs(cand - target))]

    prev = None
    order = np.argsort(np.abs(lam_grid - np.median(lam_grid)))
    for i in order:
        u = lam_grid[i] / ell
        if prev is None:
            # ride the asymptotic branch down from far off the axis
            A = 1.0 / complex(u, 2.0)
            for im in np.geomspace(2.0, eps, 8):
                A = pick_root(complex(u, im), A)
                if A is None:
                    break
        else:
            A = pick_root(complex(u, eps), prev)
        if A is None:
            continue
        prev = A
        rho[i] = -A.imag / np.pi / ell
    dens = SpectralDensity(lam_grid, rho, atom_weight=1.0 - ell, block_fraction=ell)
    dens.support = dens.detect_support()
    return dens


# ---------------------------------------------------------------------------
# exclusion-process steady state
# ---------------------------------------------------------------------------

def _qssep_eval(n, xs):
    """Recursive kernel values: g_n = min - sum of proper partition products."""
    arrays = [np.asarray(x, dtype=float) for x in xs]
    cache = {}

    def rec(idx):
        if idx in cache:
            return cache[idx]
        if len(idx) == 1:
            val = arrays[idx[0]]
        else:
            val = np.minimum.reduce(np.broadcast_arrays(*[arrays[i] for i in idx]))
            val = np.array(val, copy=True)
            for pi in enumerate_nc(len(idx)):
                if len(pi.parts) == 1:
                    continue
                term = 1.0
                for p in pi.parts:
                    term = term * rec(tuple(idx[j - 1] for j in p))
                val -= term
        cache[idx] = val
        return val

    out = rec(tuple(range(n)))
    return out if np.ndim(out) else float(out)


def _qssep_w(i_vals, scratch=None, tol=1e-13):
    """Root of mean(1/(w - I)) = 1 for the remaining-mass profile I.

    Real profiles use a bracketed search above max(I); complex profiles use
    damped Newton seeded by the previous root of the continuation.
    """
    i_vals = np.asarray(i_vals)
    real_case = not np.iscomplexobj(i_vals) or float(np.max(np.abs(i_vals.imag))) < 1e-14
    if real_case:
        ir = i_vals.real
        top = float(ir.max())

        def f(w):
            return float(np.mean(1.0 / (w - ir))) - 1.0

        lo = top + 1e-12 * max(1.0, abs(top))
        while f(lo) < 0:
            lo = top + (lo - top) * 0.25
            if lo - top < 1e-300:
                raise NoSolutionError("no admissible root above max(I)")
        hi = top + 1.0
        for _ in range(200):
            if f(hi) < 0:
                break
            hi = top + 2.0 * (hi - top)
        else:
            raise NoSolutionError("remaining-mass equation has no root above max(I)")
        w = brentq(f, lo, hi, xtol=1e-15, rtol=8.9e-16)
        if scratch is not None:
            scratch["w"] = complex(w)
        return complex(w)

    def newton(w, profile, iters=60):
        best = (np.inf, w)
        for _ in range(iters):
            d = w - profile
            if np.min(np.abs(d)) < 1e-13:
                return best[1], False
            inv = 1.0 / d
            g = np.mean(inv) - 1.0
            scale = max(1.0, float(np.mean(np.abs(inv))))
            if abs(g) <= tol * scale:
                return w, True
            if abs(g) < best[0]:
                best = (abs(g), w)
            gp = -np.mean(inv * inv)
            if not np.isfinite(gp) or gp == 0:
                return best[1], False
            step = g / gp
            cap = 0.5 * (1.0 + abs(w))
            if abs(step) > cap:
                step *= cap / abs(step)
            for _ in range(60):
                if np.min(np.abs((w - step) - profile)) > 1e-12:
                    break
                step *= 0.5
            w = w - step
        return best[1], False

    seeds = []
    if scratch and "w" in scratch:
        seeds.append(complex(scratch["w"]))
    seeds.append(1.0 + complex(np.mean(i_vals)))
    for w0 in seeds:
        w, ok = newton(w0, i_vals)
        if ok:
            if scratch is not None:
                scratch["w"] = w
            return w
    # homotopy fallback: grow the profile from zero and track the outer root
    w, t, dt = 1.0 + 0.0j, 0.0, 0.25
    while t < 1.0:
        t_next = min(1.0, t + dt)
        w_next, ok = newton(w, t_next * i_vals, iters=50)
        if not ok:
            dt *= 0.5
            if dt < 1e-5:
                raise NoSolutionError(
                    "continuation stalled on the remaining-mass equation")
            continue
        w, t = w_next, t_next
        dt = min(0.5, dt * 1.6)
    if scratch is not None:
        scratch["w"] = w
    return w


def _qssep_tail_integral(a):
    """I(x_k) = integral of a over (x_k, 1], consistent with the midpoint rule."""
    G = a.size
    rev = np.concatenate((np.cumsum(a[::-1])[::-1][1:], [0.0 * a[0]]))
    return (rev + 0.5 * a) / G


def _qssep_head_integral(f):
    """integral of f over [0, x_k), consistent with the midpoint rule."""
    G = f.size
    head = np.concatenate(([0.0 * f[0]], np.cumsum(f)[:-1]))
    return (head + 0.5 * f) / G


def _qssep_r0(a, x, scratch):
    i_vals = _qssep_tail_integral(np.asarray(a))
    w = _qssep_w(i_vals, scratch)
    return _qssep_head_integral(1.0 / (w - i_vals))


def _qssep_f0(a, x, scratch):
    i_vals = _qssep_tail_integral(np.asarray(a))
    w = _qssep_w(i_vals, scratch)
    return w - 1.0 - np.mean(np.log(w - i_vals))


def qssep_kernel():
    """Steady-state kernel of the boundary-driven exclusion process.

    Pointwise values come from the partition recursion (orders up to 8);
    the solver uses the implicit closed form of the generating functional.
    """

    def fn(n, xs):
        if n > QSSEP_KERNEL_MAX_N:
            raise SizeLimitError(
                f"kernel recursion supported to order {QSSEP_KERNEL_MAX_N}, got {n}")
        return _qssep_eval(n, xs)

    return LocalCumulantKernel(name="qssep", fn=fn, max_order=QSSEP_KERNEL_MAX_N,
                               r0_form=_qssep_r0, f0_form=_qssep_f0)


def qssep_f0(a, resolution=None):
    """Closed-form generating functional for a grid profile a."""
    a_vals = profile_values(a, resolution) if resolution else as_grid_values(a)
    return complex(_qssep_f0(np.asarray(a_vals), None, {}))


def qssep_full_density(lam):
    """Full-interval eigenvalue density: a Cauchy law in log(lam/(1-lam))."""
    lam = np.asarray(lam, dtype=float)
    inside = (lam > 0.0) & (lam < 1.0)
    out = np.zeros_like(lam)
    lo = lam[inside]
    out[inside] = 1.0 / (lo * (1.0 - lo) * (np.pi ** 2 + np.log((1.0 - lo) / lo) ** 2))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# subinterval spectra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QssepBlockSpec:
    """Subinterval [c, d] of the chain, 0 <= c < d <= 1."""

    c: float
    d: float

    def __post_init__(self):
        if not (0.0 <= self.c < self.d <= 1.0):
            raise DomainError(f"need 0 <= c < d <= 1, got ({self.c}, {self.d})")

    @property
    def ell(self):
        return self.d - self.c


@dataclass
class QRoot:
    """Branch point Q = r e^{i theta} of the slice spectrum at one lam."""

    lam: float
    r: float
    theta: float
    residual: float

    @property
    def log_q(self):
        return complex(math.log(self.r), self.theta)


def qssep_support(spec):
    """Support endpoints (z_minus, z_plus) of the subinterval spectrum.

    Closed form from the criticality of the transcendental branch equation;
    degenerate boundary placements use the limiting formulas.
    """
    c, d, ell = spec.c, spec.d, spec.ell
    if c == 0.0 and d == 1.0:
        return 0.0, 1.0
    if c == 0.0:
        z_plus = d / (d + (1.0 - d) * math.exp(-1.0 / (1.0 - d)))
        return 0.0, z_plus
    if d == 1.0:
        z_minus = c / (c + (1.0 - c) * math.exp(-1.0 / c))
        return z_minus, 1.0
    delta_big = ell * (1.0 - ell) * (ell * (1.0 - ell) + 4.0 * c * (1.0 - d))
    if delta_big < 0:
        raise DomainError(f"negative discriminant {delta_big} for spec {spec}")
    sq = math.sqrt(delta_big)
    base = c * (1.0 - c) + d * (1.0 - d)
    out = []
    for sign in (-1.0, +1.0):
        delta = ((ell * (1.0 - ell) + sign * sq) / (2.0 * (1.0 - d)) - ell) / c
        num = base + sign * sq
        out.append(num / (num + 2.0 * (1.0 - d) ** 2 * math.exp(-delta)))
    return out[0], out[1]


def _q_equation(log_q, z, c, d):
    """Residual and derivative of the branch equation in L = log Q."""
    ell = d - c
    e = np.exp(log_q)
    val = (1.0 - z + z * e) * (ell - c * log_q) - z * (ell - 1.0) * e * log_q
    der = (z * e) * (ell - c * log_q) - c * (1.0 - z + z * e) \
        - z * (ell - 1.0) * e * (log_q + 1.0)
    return val, der


def solve_Q(spec, lam, warm_start=None, tol=1e-12, max_iter=80):
    """Track the branch parameter Q = r e^{i theta} at one lam in the support.

    Complex Newton on L = log Q with the analytic derivative; seeds fall
    back from the warm start to the full-interval closed form with a range
    of damped angles.  The retained root has theta in (0, pi].
    """
    c, d = spec.c, spec.d
    z_minus, z_plus = qssep_support(spec)
    if not z_minus < lam < z_plus:
        raise DomainError(f"lam={lam} outside the open support ({z_minus}, {z_plus})")
    seeds = []
    if warm_start is not None:
        seeds.append(complex(math.log(warm_start.r), warm_start.theta))
    base = math.log((1.0 - lam) / lam)
    seeds += [complex(base, math.pi * t) for t in (1.0, 0.75, 0.5, 0.25, 0.05)]
    for seed in seeds:
        log_q = seed
        converged = False
        for _ in range(max_iter):
            val, der = _q_equation(log_q, lam, c, d)
            if abs(val) <= tol:
                converged = True
                break
            if der == 0:
                break
            step = val / der
            if abs(step) > 5.0:
                step *= 5.0 / abs(step)
            log_q = log_q - step
        if not converged:
            continue
        theta = log_q.imag
        if theta < 0:
            log_q = log_q.conjugate()
            theta = -theta
        if 0.0 < theta <= math.pi + 1e-12:
            val, _ = _q_equation(log_q, lam, c, d)
            return QRoot(lam=float(lam), r=float(math.exp(log_q.real)),
                         theta=float(min(theta, math.pi)), residual=abs(val))
    raise RootTrackingError(f"no admissible branch root at lam={lam}, spec={spec}")


def qssep_subblock_density(spec, lam_grid):
    """Spectral density of the subinterval slice on a real grid.

    dsigma = theta / (theta^2 + log(r)^2) / (pi lam (1 - lam)) inside the
    closed-form support, tracked by Newton continuation from the support
    midpoint outward; one edge cell is left at zero where the critical
    roots merge.  Isolated tracking failures are recorded as gaps.
    """
    lam_grid = np.asarray(lam_grid, dtype=float)
    if np.any((lam_grid <= 0.0) | (lam_grid >= 1.0)):
        raise DomainError("grid must lie strictly inside (0, 1)")
    z_minus, z_plus = qssep_support(spec)
    rho = np.zeros(lam_grid.size)
    gaps = np.zeros(lam_grid.size, dtype=bool)
    edge = np.median(np.diff(np.sort(lam_grid))) if lam_grid.size > 1 else 0.0
    inside = (lam_grid > z_minus + edge) & (lam_grid < z_plus - edge)
    idx = np.nonzero(inside)[0]
    if idx.size:
        mid = 0.5 * (z_minus + z_plus)
        start = idx[np.argmin(np.abs(lam_grid[idx] - mid))]
        for chain in (idx[idx >= start], idx[idx <= start][::-1]):
            root = None
            for i in chain:
                try:
                    root = solve_Q(spec, lam_grid[i], warm_start=root)
                except (RootTrackingError, DomainError):
                    gaps[i] = True
                    root = None
                    continue
                lam = lam_grid[i]
                rho[i] = root.theta / (root.theta ** 2 + math.log(root.r) ** 2) \
                    / (np.pi * lam * (1.0 - lam))
    dens = SpectralDensity(lam_grid, rho, atom_weight=1.0 - spec.ell,
                           block_fraction=spec.ell, gaps=gaps)
    dens.support = (z_minus, z_plus)
    return dens


# ---------------------------------------------------------------------------
# compatibility with free multiplicative convolution
# ---------------------------------------------------------------------------

def nonfreeness_diagnostic(kern, h, order=2, resolution=None):
    """Leading ratio series of the slice equation versus the weight S-series.

    Expands the implicit relation between the probed spectral parameters of
    the weighted and unweighted ensembles to first order in w and compares
    it with the S-transform of the weight profile's value distribution.
    Equality of the two series is the signature of compatibility with free
    multiplicative convolution; position-dependent kernels generically
    break it already at order zero.
    """
    if order not in (1, 2):
        raise DomainError(f"order must be 1 or 2, got {order}")
    h_vals = np.asarray(profile_values(h, resolution or 64), dtype=float)
    G = h_vals.size
    x = midpoints(G)
    g1 = np.asarray(kern.eval(1, x), dtype=float)
    hg1 = float(np.mean(h_vals * g1))
    if abs(hg1) < 1e-14:
        raise DomainError("degenerate weight: [h g_1] vanishes")

    ones = np.ones(G)
    k2 = np.asarray(kern.eval(2, x[:, None], x[None, :]), dtype=float)

    def bracket_terms(weight):
        b1 = g1
        b2 = k2 @ weight / G
        p1 = float(np.mean(weight * b1))
        p2 = float(np.mean((weight * b1) ** 2)) + float(np.mean(weight * b2))
        return p1, p2

    p1_h, p2_h = bracket_terms(h_vals)
    p1_0, p2_0 = bracket_terms(ones)
    r0 = p1_0 / p1_h
    r1 = -r0 * (p2_h / p1_h ** 2 - p2_0 / p1_0 ** 2)
    ratio = FormalSeries(freeprob.S_COEFFS, [r0, r1][:order])

    nu_moments = freeprob.FormalSeries(
        freeprob.MOMENTS, [float(np.mean(h_vals ** n)) for n in range(1, 4)])
    s_h = freeprob.s_transform(freeprob.moments_to_cumulants(nu_moments))
    s_h = FormalSeries(freeprob.S_COEFFS, s_h.coeffs[:order])
    return ratio, s_h
