import numpy as np
import pytest

from spintomo.waveform import (
    AmplitudeScaledWaveform,
    ControlWaveform,
    load_waveform,
    random_waveform,
    save_waveform,
)


def test_interpolant_passes_through_knots():
    rng = np.random.default_rng(0)
    w = random_waveform(10, 2e-3, rng)
    phi = w.phi(w.knot_times)
    assert np.allclose(np.mod(phi, 2 * np.pi), w.knot_angles, atol=1e-10)


def test_c1_continuity_at_knots():
    rng = np.random.default_rng(1)
    w = random_waveform(8, 1e-3, rng)
    h = 1e-9
    for tk in w.knot_times[1:-1]:
        left = (w.phi(tk) - w.phi(tk - h)) / h
        right = (w.phi(tk + h) - w.phi(tk)) / h
        # typical slopes are ~1e4 rad/s and a genuine kink would show a
        # jump of the same order; the residual here is float noise
        assert abs(left - right) < 10.0


def test_nearest_branch_unwrap():
    # adjacent knots straddling the branch cut interpolate through the cut,
    # not the long way around
    w = ControlWaveform(knot_angles=np.array([0.1, 2 * np.pi - 0.1, 0.1, 2 * np.pi - 0.1]), T=1.0)
    t = np.linspace(0, 1, 301)
    dphi = np.diff(w.phi(t))
    assert np.max(np.abs(dphi)) < 0.1  # bounded slope, no 2*pi jump


def test_angular_velocity_bounded():
    rng = np.random.default_rng(7)
    for _ in range(10):
        w = random_waveform(50, 4e-3, rng)
        t = np.linspace(0, w.T, 4001)
        dphi = np.abs(np.diff(w.phi(t))) / (t[1] - t[0])
        # nearest-branch increments are < pi per knot interval; the
        # Catmull-Rom slope overshoot is bounded by a small factor
        h = w.T / (w.n - 1)
        assert dphi.max() < 3.0 * np.pi / h


def test_control_unit_is_unit():
    rng = np.random.default_rng(2)
    w = random_waveform(6, 1e-3, rng)
    x, y = w.control_unit(np.linspace(0, w.T, 100))
    assert np.allclose(x**2 + y**2, 1.0, atol=1e-12)


def test_with_knot_and_support():
    rng = np.random.default_rng(3)
    w = random_waveform(10, 1e-3, rng)
    w2 = w.with_knot(4, 1.234)
    assert np.isclose(w2.knot_angles[4], 1.234)
    assert np.allclose(np.delete(w2.knot_angles, 4), np.delete(w.knot_angles, 4))
    h = w.T / 9
    lo, hi = w.knot_support(4)
    assert np.isclose(lo, 2 * h) and np.isclose(hi, 6 * h)
    # outside the support the interpolant is unchanged
    t_out = np.linspace(0, lo - 1e-9, 50)
    assert np.allclose(w.phi(t_out), w2.phi(t_out), atol=1e-12)
    lo0, hi0 = w.knot_support(0)
    assert lo0 == 0.0 and np.isclose(hi0, 2 * h)


def test_validation():
    with pytest.raises(ValueError):
        ControlWaveform(knot_angles=np.zeros(3), T=1.0)
    with pytest.raises(ValueError):
        ControlWaveform(knot_angles=np.zeros(5), T=0.0)
    w = ControlWaveform(knot_angles=np.zeros(5), T=1.0)
    with pytest.raises(ValueError):
        w.phi(1.5)
    with pytest.raises(ValueError):
        w.phi(-0.1)


def test_angles_stored_mod_2pi():
    w = ControlWaveform(knot_angles=np.array([-0.5, 7.0, 2.0, 3.0]), T=1.0)
    assert np.all(w.knot_angles >= 0.0)
    assert np.all(w.knot_angles < 2 * np.pi)


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    w = random_waveform(50, 4e-3, rng)
    path = tmp_path / "wf.txt"
    save_waveform(path, w)
    w2 = load_waveform(path)
    assert w2.n == w.n
    assert np.isclose(w2.T, w.T)
    assert np.allclose(w2.knot_angles, w.knot_angles, atol=1e-13)


def test_load_rejects_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("7 1.0\n0.1 0.2\n")
    with pytest.raises(ValueError):
        load_waveform(path)


def test_amplitude_scaled_waveform():
    rng = np.random.default_rng(6)
    w = random_waveform(6, 1e-3, rng)
    factors = np.array([1.0, 1.1, 0.9, 1.0, 1.05])
    ws = AmplitudeScaledWaveform(base=w, factors=factors)
    assert ws.T == w.T and ws.n == w.n
    assert np.array_equal(ws.knot_angles, w.knot_angles)
    # direction is untouched, magnitude is the interval's factor
    h = w.T / (w.n - 1)
    t = np.array([0.5 * h, 1.5 * h, 4.7 * h, w.T])
    x0, y0 = w.control_unit(t)
    x1, y1 = ws.control_unit(t)
    f_expected = factors[[0, 1, 4, 4]]
    assert np.allclose(np.hypot(x1, y1), f_expected, atol=1e-12)
    assert np.allclose(x1, f_expected * x0, atol=1e-12)
    assert np.allclose(y1, f_expected * y0, atol=1e-12)
    with pytest.raises(ValueError):
        AmplitudeScaledWaveform(base=w, factors=np.ones(3))
    with pytest.raises(ValueError):
        AmplitudeScaledWaveform(base=w, factors=np.array([1, 1, 1, 1, -0.2]))


def test_amplitude_scaled_history_digest_differs():
    from spintomo.algebra import make_spin_system
    from spintomo.dynamics import PhysicsParams, observable_history

    p = PhysicsParams(
        sys=make_spin_system(1), beta=1.0, gamma=0.0,
        larmor_omega=2 * np.pi * 15e3, background_std_hz=0.0, T=4e-4,
        dt_coarse=4e-6, dt_fine=4e-6, quadrature_points=1,
    )
    w = random_waveform(6, p.T, np.random.default_rng(7))
    ws = AmplitudeScaledWaveform(base=w, factors=np.full(5, 1.01))
    h0 = observable_history(w, p)
    h1 = observable_history(ws, p)
    assert h0.params_digest != h1.params_digest
    assert not np.allclose(h0.coeffs, h1.coeffs, atol=1e-9)


def test_random_waveform_range_and_determinism():
    w1 = random_waveform(20, 1e-3, np.random.default_rng(5))
    w2 = random_waveform(20, 1e-3, np.random.default_rng(5))
    assert np.allclose(w1.knot_angles, w2.knot_angles)
    assert np.all((w1.knot_angles >= 0) & (w1.knot_angles < 2 * np.pi))
