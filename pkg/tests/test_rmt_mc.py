import numpy as np
import pytest

from subspectra import freeprob as fp
from subspectra import rmt_mc as mc
from subspectra.errors import DomainError, StabilityError


def test_wigner_sampler_statistics():
    m = mc.sample_wigner(300, 1.0, seed=3)
    assert np.max(np.abs(m - m.conj().T)) == 0.0
    draws = np.array([mc.sample_wigner(50, 1.0, seed=3, stream=s)[0, 1]
                      for s in range(2000)])
    assert abs(np.mean(draws)) < 3.0 / np.sqrt(2000 * 50)
    assert abs(np.mean(np.abs(draws) ** 2) * 50 - 1.0) < 0.1


def test_wigner_semicircle_ks():
    eigs = np.concatenate([np.linalg.eigvalsh(mc.sample_wigner(500, 1.0, seed=11, stream=s))
                           for s in range(6)])
    lam = np.linspace(-2.2, 2.2, 441)
    semi = fp.SpectralDensity.from_callable(
        lambda t: np.sqrt(np.maximum(4 - t ** 2, 0)) / (2 * np.pi), lam)
    assert mc.ks_distance(mc.empirical_density(eigs), semi) < 0.05


def test_wigner_variance_profile_enters():
    prof = lambda x: 0.5 + 1.5 * x
    draws1 = np.array([mc.sample_wigner(40, prof, seed=5, stream=s)[0, 1]
                       for s in range(2000)])
    drawsN = np.array([mc.sample_wigner(40, prof, seed=6, stream=s)[38, 39]
                       for s in range(2000)])
    v1 = np.mean(np.abs(draws1) ** 2) * 40
    vN = np.mean(np.abs(drawsN) ** 2) * 40
    assert v1 < vN  # variance grows along the profile
    assert abs(v1 - prof(2.5 / 80) ** 2) < 0.05
    assert abs(vN - prof(78.5 / 80) ** 2) < 0.3


def test_haar_spectrum_is_exact():
    meas = fp.Measure1D.bernoulli(0.5)
    m = mc.sample_haar_conjugated(128, meas, seed=5)
    ev = np.sort(np.linalg.eigvalsh(m))
    np.testing.assert_allclose(ev, np.sort(meas.quantiles(128)), atol=1e-12)


def test_haar_pair_loop_matches_second_cumulant():
    meas = fp.Measure1D.bernoulli(0.5)
    samples = [mc.sample_haar_conjugated(100, meas, seed=7, stream=s) for s in range(150)]
    est, se = mc.estimate_local_cumulants(samples, 2, (0.2, 0.7))
    assert abs(est - 0.25) <= 3 * se


def test_loop_estimator_zero_mean_offdiagonal():
    samples = [mc.sample_wigner(80, 1.0, seed=9, stream=s) for s in range(100)]
    est, se = mc.estimate_local_cumulants(samples, 1, (0.4,))
    assert abs(est) <= 3 * se + 1e-3


def test_loop_estimator_input_validation():
    samples = [mc.sample_wigner(20, 1.0, seed=1, stream=s) for s in range(4)]
    with pytest.raises(DomainError):
        mc.estimate_local_cumulants(samples, 2, (0.3, 0.31))  # same site
    with pytest.raises(DomainError):
        mc.estimate_local_cumulants(samples, 4, (0.1, 0.3, 0.5, 0.7))


def test_subblock_selection():
    d = np.diag(np.arange(1, 11) / 10.0)
    np.testing.assert_allclose(mc.subblock_eigs(d, (0.0, 0.3)), [0.1, 0.2, 0.3])
    np.testing.assert_allclose(mc.subblock_eigs(d, (0.0, 1.0)), np.diag(d))
    with pytest.raises(DomainError):
        mc.subblock_eigs(d, (0.98, 0.99))


def test_qssep_trace_conserved_without_boundaries():
    cfg = mc.QssepConfig(n_sites=30, dt=0.05, t_end=1.5, t_stat=0.0,
                         rates=(0, 0, 0, 0), seed=1, snapshot_stride=1)
    run = mc.qssep_run(cfg)
    traces = [np.trace(s).real for s in run.snapshots]
    assert np.max(np.abs(np.diff(traces))) < 1e-10
    assert max(np.max(np.abs(s - s.conj().T)) for s in run.snapshots) <= 1e-12


def test_qssep_noise_off_is_static():
    # zero-noise limit: scale noise away by taking dt -> tiny with no steps of effect
    cfg = mc.QssepConfig(n_sites=10, dt=0.01, t_end=0.05, t_stat=0.0,
                         rates=(0, 0, 0, 0), seed=2, snapshot_stride=1,
                         integrator="unitary")
    run = mc.qssep_run(cfg)
    # unitary noise preserves the spectrum exactly; with boundaries off the
    # eigenvalues never move
    base = np.sort(np.linalg.eigvalsh(np.diag(np.arange(1, 11) / 10.0)))
    for snap in run.snapshots:
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(snap)), base, atol=1e-12)


def test_qssep_euler_instability_detected():
    cfg = mc.QssepConfig(n_sites=40, dt=0.5, t_end=400.0, t_stat=0.0, seed=3,
                         snapshot_stride=10, integrator="euler")
    with pytest.raises(StabilityError):
        mc.qssep_run(cfg)


def test_qssep_stationary_profile_and_pair_kernel():
    cfg = mc.QssepConfig(n_sites=60, dt=0.1, t_end=1600.0, t_stat=900.0, seed=42,
                         snapshot_stride=100, integrator="unitary")
    run = mc.qssep_run(cfg)
    prof = np.mean([np.diag(s).real for s in run.snapshots], axis=0)
    target = np.arange(1, 61) / 60
    assert np.max(np.abs(prof - target)) < 0.05
    est, se = mc.estimate_local_cumulants(run.snapshots, 2, (0.3, 0.6))
    assert abs(est - 0.12) <= 3 * se
    # eigenvalues stay near [0, 1] at stationarity (soft bound, monitored)
    eigs = np.concatenate([mc.subblock_eigs(s, (0.4, 0.7)) for s in run.snapshots])
    assert eigs.min() > -0.05 and eigs.max() < 1.05


def test_qssep_reproducibility():
    cfg = dict(n_sites=20, dt=0.1, t_end=30.0, t_stat=10.0, seed=9,
               snapshot_stride=20, integrator="unitary")
    a = mc.qssep_run(mc.QssepConfig(**cfg))
    b = mc.qssep_run(mc.QssepConfig(**cfg))
    assert len(a.snapshots) == len(b.snapshots)
    for x, y in zip(a.snapshots, b.snapshots):
        np.testing.assert_array_equal(x, y)


def test_stationarity_detector():
    t = np.arange(4000.0)
    series = 1.0 - np.exp(-t / 150.0) + 0.001 * np.sin(t)
    onset = mc.detect_stationarity(series, window=200)
    assert onset is not None
    assert 150 <= onset <= 2000


def test_ks_distance_basics():
    rng = np.random.default_rng(0)
    xs = rng.random(10000)
    lam = np.linspace(0, 1, 101)
    uniform = fp.SpectralDensity(lam, np.ones(101))
    emp = mc.empirical_density(xs)
    assert mc.ks_distance(emp, emp) == 0.0
    assert mc.ks_distance(emp, uniform) < 0.02


def test_phase_conjugation_leaves_subblock_spectrum():
    rng = np.random.default_rng(4)
    meas = fp.Measure1D.bernoulli(0.5)
    eigs_a, eigs_b = [], []
    for s in range(10):
        m = mc.sample_haar_conjugated(120, meas, seed=13, stream=s)
        eigs_a.append(mc.subblock_eigs(m, (0.2, 0.8)))
        eigs_b.append(mc.subblock_eigs(mc.conjugate_by_random_phases(m, rng), (0.2, 0.8)))
    da = mc.empirical_density(np.concatenate(eigs_a))
    db = mc.empirical_density(np.concatenate(eigs_b))
    assert mc.ks_distance(da, db) < 0.02
