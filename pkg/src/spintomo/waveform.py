"""Planar control waveforms: knot angles with smooth interpolation.

The control field lives in the x-y plane with fixed magnitude; the only
free parameters are n knot angles theta_k at equally spaced times
t_k = k*T/(n-1). Between knots the angle is interpolated with a C1
Catmull-Rom cubic (clamped ends) through the nearest-branch unwrapped
knot angles, so there are no 2*pi branch-cut jumps and the angular
velocity stays bounded by the knot spacing.

(Interpolating the planar unit vector componentwise and renormalizing
was tried first; when adjacent knots are nearly antipodal the interpolant
passes close to the origin and the renormalized direction flips almost
discontinuously, which defeats any fixed-step integrator.)
"""

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ControlWaveform:
    """n knot angles (radians, stored mod 2*pi) over duration T seconds."""

    knot_angles: np.ndarray
    T: float

    def __post_init__(self):
        angles = np.mod(np.asarray(self.knot_angles, dtype=float), TWO_PI)
        if angles.ndim != 1 or angles.size < 4:
            raise ValueError("waveform needs at least 4 knot angles")
        if not np.all(np.isfinite(angles)) or not (self.T > 0):
            raise ValueError("knot angles and duration must be finite, T > 0")
        object.__setattr__(self, "knot_angles", angles)
        # nearest-branch unwrap: each increment folded into [-pi, pi)
        delta = np.diff(angles)
        delta -= TWO_PI * np.floor(delta / TWO_PI + 0.5)
        psi = np.concatenate([[angles[0]], angles[0] + np.cumsum(delta)])
        object.__setattr__(self, "_psi", psi)

    @property
    def n(self):
        return self.knot_angles.size

    @property
    def knot_times(self):
        return np.linspace(0.0, self.T, self.n)

    def phi(self, t):
        """Interpolated (unwrapped) control angle at times t."""
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.T * (1 + 1e-12)):
            raise ValueError("time outside [0, T]")
        h = self.T / (self.n - 1)
        s = np.clip(np.floor(t / h).astype(int), 0, self.n - 2)
        u = t / h - s
        return _catmull_rom(self._psi, s, u)

    def control_unit(self, t):
        """Unit vector (cos phi, sin phi) of the control direction at times t."""
        phi = self.phi(t)
        return np.cos(phi), np.sin(phi)

    def with_knot(self, k, angle):
        angles = self.knot_angles.copy()
        angles[k] = angle
        return ControlWaveform(knot_angles=angles, T=self.T)

    def knot_support(self, k):
        """Time interval [t0, t1] whose interpolant depends on knot k."""
        h = self.T / (self.n - 1)
        lo = max(k - 2, 0) * h
        hi = min(k + 2, self.n - 1) * h
        return lo, hi


@dataclass(frozen=True)
class AmplitudeScaledWaveform:
    """A waveform whose drive amplitude is scaled piecewise per knot interval.

    Models control-field amplitude errors at the waveform generator's
    update rate: the relative drive amplitude on knot interval k is
    factors[k] (nominal 1.0). The control direction is untouched; the
    scale multiplies the unit vector handed to the dynamics, i.e. the
    effective Larmor rate on that interval.
    """

    base: ControlWaveform
    factors: np.ndarray  # (n - 1,) relative amplitude per knot interval

    def __post_init__(self):
        factors = np.asarray(self.factors, dtype=float)
        if factors.shape != (self.base.n - 1,):
            raise ValueError("need one amplitude factor per knot interval")
        if not np.all(np.isfinite(factors)) or np.any(factors <= 0):
            raise ValueError("amplitude factors must be finite and positive")
        object.__setattr__(self, "factors", factors)

    @property
    def T(self):
        return self.base.T

    @property
    def n(self):
        return self.base.n

    @property
    def knot_angles(self):
        return self.base.knot_angles

    def phi(self, t):
        return self.base.phi(t)

    def control_unit(self, t):
        x, y = self.base.control_unit(t)
        h = self.base.T / (self.base.n - 1)
        k = np.clip((np.asarray(t, dtype=float) / h).astype(int),
                    0, self.base.n - 2)
        f = self.factors[k]
        return f * x, f * y


def _catmull_rom(p, s, u):
    """Componentwise Catmull-Rom value on segment s at local parameter u,
    with clamped (duplicated) endpoint ghosts."""
    n = p.size
    p0 = p[np.clip(s - 1, 0, n - 1)]
    p1 = p[s]
    p2 = p[s + 1]
    p3 = p[np.clip(s + 2, 0, n - 1)]
    return 0.5 * (
        2.0 * p1
        + (p2 - p0) * u
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u**2
        + (3.0 * p1 - p0 - 3.0 * p2 + p3) * u**3
    )


def random_waveform(n, T, rng):
    """i.i.d. uniform knot angles in [0, 2*pi)."""
    return ControlWaveform(knot_angles=rng.uniform(0.0, TWO_PI, size=n), T=T)


def save_waveform(path, w):
    """Plain-text format: one line 'n T', then n knot angles in radians."""
    lines = [f"{w.n} {w.T:.12e}"]
    lines += [f"{a:.15e}" for a in w.knot_angles]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_waveform(path):
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ValueError(f"malformed waveform file {path}")
    n = int(tokens[0])
    T = float(tokens[1])
    angles = np.array([float(x) for x in tokens[2 : 2 + n]])
    if angles.size != n:
        raise ValueError(f"waveform file {path} promises {n} knots, has {angles.size}")
    return ControlWaveform(knot_angles=angles, T=T)
