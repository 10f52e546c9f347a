import numpy as np
import pytest

from spintomo.algebra import make_spin_system, stretched_state, vectorize
from spintomo.dynamics import PhysicsParams, observable_history
from spintomo.measurement import (
    MeasurementRecord,
    SnrSpec,
    apply_filter,
    load_record,
    moving_average,
    save_record,
    sigma_from_snr,
    simulate_record,
)
from spintomo.waveform import ControlWaveform, random_waveform

SYS1 = make_spin_system(1)
SYS3 = make_spin_system(3)


def small_history(sys=SYS1, **kw):
    base = dict(
        sys=sys, beta=1.0, gamma=0.0, larmor_omega=2 * np.pi * 15e3,
        background_std_hz=0.0, T=4e-4, dt_coarse=4e-6, dt_fine=1e-6,
        quadrature_points=1,
    )
    base.update(kw)
    p = PhysicsParams(**base)
    w = random_waveform(6, p.T, np.random.default_rng(0))
    return observable_history(w, p), p, w


def test_snr_spec_validation():
    with pytest.raises(ValueError):
        SnrSpec(0.0)
    with pytest.raises(ValueError):
        SnrSpec(-3.0)
    SnrSpec(np.inf)  # noiseless is allowed


def test_sigma_from_snr():
    assert np.isclose(sigma_from_snr(SnrSpec(30.0), SYS3), 0.1)
    assert np.isclose(sigma_from_snr(SnrSpec(4.0), make_spin_system(4)), 1.0)
    assert sigma_from_snr(SnrSpec(np.inf), SYS3) == 0.0


def test_moving_average_identity_and_window3():
    x = np.array([1.0, 2.0, 6.0, 3.0, 8.0])
    out1 = moving_average(x, 1)
    assert np.array_equal(out1, x)
    out1[0] = -1.0  # w = 1 must return a copy, not a view
    assert x[0] == 1.0
    out3 = moving_average(x, 3)
    # interior samples are the three-point mean, edges truncate the window
    assert np.allclose(out3[1:-1], (x[:-2] + x[1:-1] + x[2:]) / 3.0)
    assert np.isclose(out3[0], (x[0] + x[1]) / 2.0)
    assert np.isclose(out3[-1], (x[-2] + x[-1]) / 2.0)


def test_moving_average_rejects_even_window():
    with pytest.raises(ValueError):
        moving_average(np.zeros(5), 2)
    with pytest.raises(ValueError):
        moving_average(np.zeros(5), 0)


def test_moving_average_axis():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((20, 4))
    out = moving_average(x, 5, axis=0)
    for k in range(4):
        assert np.allclose(out[:, k], moving_average(x[:, k], 5))


def test_noiseless_record_is_exact_signal():
    hist, _, _ = small_history(sys=SYS3, beta=7.67)
    psi = stretched_state(SYS3)
    rho0 = np.outer(psi, psi.conj())
    rv = vectorize(rho0, SYS3)
    rec = simulate_record(rho0, hist, SnrSpec(np.inf), seed=0, w=1)
    assert rec.sigma == 0.0
    assert np.allclose(rec.values, hist.expectation(rv.coeffs, rv.trace_part),
                       atol=1e-12)


def test_frozen_eigenstate_signal_is_F():
    # no Hamiltonian, no decay: the m = +F state gives a constant record at F
    p = PhysicsParams(
        sys=SYS3, beta=0.0, gamma=0.0, larmor_omega=0.0,
        background_std_hz=0.0, T=4e-4, dt_coarse=4e-6, dt_fine=1e-6,
        quadrature_points=1,
    )
    w = ControlWaveform(knot_angles=np.zeros(5), T=p.T)
    hist = observable_history(w, p)
    psi = stretched_state(SYS3)
    rec = simulate_record(np.outer(psi, psi.conj()), hist, SnrSpec(np.inf),
                          seed=0, w=1)
    assert np.allclose(rec.values, 3.0, atol=1e-10)


def test_noise_statistics():
    hist, _, _ = small_history(sys=SYS3, T=4e-3)
    psi = stretched_state(SYS3)
    rho0 = np.outer(psi, psi.conj())
    rv = vectorize(rho0, SYS3)
    signal = hist.expectation(rv.coeffs, rv.trace_part)
    rec = simulate_record(rho0, hist, SnrSpec(30.0), seed=11, w=1)
    noise = rec.values - signal
    K = len(noise)
    assert K == 1000
    assert np.isclose(np.var(noise), 0.01, rtol=0.15)
    assert abs(np.mean(noise)) < 3 * 0.1 / np.sqrt(K)
    # whiteness: lag-1 autocorrelation consistent with zero
    r1 = np.mean(noise[1:] * noise[:-1]) / np.var(noise)
    assert abs(r1) < 3.0 / np.sqrt(K)


def test_record_reproducible_and_seed_sensitive():
    hist, _, _ = small_history()
    rho0 = np.eye(SYS1.d) / SYS1.d
    r1 = simulate_record(rho0, hist, SnrSpec(10.0), seed=42)
    r2 = simulate_record(rho0, hist, SnrSpec(10.0), seed=42)
    r3 = simulate_record(rho0, hist, SnrSpec(10.0), seed=43)
    assert np.array_equal(r1.values, r2.values)
    assert not np.array_equal(r1.values, r3.values)


def test_filter_consistency_record_vs_model():
    # filtering the raw record and filtering the model rows commute with
    # taking expectations: filtered signal == expectation of filtered rows
    hist, _, _ = small_history(sys=SYS3, beta=7.67)
    psi = stretched_state(SYS3)
    rho0 = np.outer(psi, psi.conj())
    rv = vectorize(rho0, SYS3)
    rec = simulate_record(rho0, hist, SnrSpec(np.inf), seed=0, w=3)
    h3 = apply_filter(hist, 3)
    assert h3.filter_window == 3
    assert np.allclose(rec.values, h3.expectation(rv.coeffs, rv.trace_part),
                       atol=1e-12)
    # w = 1 returns the history unchanged
    assert apply_filter(hist, 1) is hist
    with pytest.raises(ValueError):
        apply_filter(hist, 4)


def test_record_dimension_mismatch():
    hist, _, _ = small_history()
    with pytest.raises(ValueError):
        simulate_record(np.eye(7) / 7, hist, SnrSpec(10.0), seed=0)


def test_save_load_roundtrip(tmp_path):
    hist, _, _ = small_history()
    rho0 = np.eye(SYS1.d) / SYS1.d
    rec = simulate_record(rho0, hist, SnrSpec(30.0), seed=5, w=3)
    path = tmp_path / "rec.csv"
    save_record(path, rec, 30.0, hist.params_digest)
    rec2, meta = load_record(path)
    assert np.allclose(rec2.values, rec.values, atol=1e-10)
    assert np.allclose(rec2.times, rec.times, atol=1e-15)
    assert rec2.seed == 5
    assert rec2.filter_window == 3
    assert np.isclose(rec2.sigma, rec.sigma)
    assert meta["snr"] == 30.0
    assert meta["params_digest"] == hist.params_digest


def test_load_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,v\n0,1\n")
    with pytest.raises(ValueError):
        load_record(path)
