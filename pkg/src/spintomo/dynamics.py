"""Time-dependent Lindblad generator and Heisenberg-picture propagation.

The measured observable Fz is propagated through the driven, dissipative
dynamics as a vector of real coordinates on the orthonormal operator basis
{I/sqrt(d), E_1, ..., E_{d^2-1}}. The record model only ever needs the rows
(O| S_t of the superoperator propagator, so we carry the running product
S_t (piecewise-constant semigroup steps with a 2-point Magnus rule per
step) and extract one row per fine step, bin-averaged over the detector
coarse-graining time.

All generators are real (d^2)x(d^2) matrices in the operator-basis
coordinates. The Schroedinger-picture matrix L acts on states; the
adjoint (Heisenberg) generator exposed publicly is its transpose.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm as _scipy_expm

from .algebra import SpinSystem, check_hermitian, make_spin_system, vectorize
from .waveform import ControlWaveform

LOSS_ONLY = "loss_only"
ISOTROPIC_PUMPING = "isotropic_pumping"

#: fraction of scattered population returned to the manifold (isotropic model)
PUMPING_BRANCH = 0.5

_EXPM_THETA = 0.25  # scaling target for the batched Taylor exponential
_GAUSS3 = np.sqrt(15.0) / 10.0  # 3-point Gauss-Legendre offset


class NumericalFailureError(RuntimeError):
    """Propagation produced non-finite numbers."""


@dataclass(frozen=True)
class PhysicsParams:
    """Physical and numerical parameters of one measurement configuration."""

    sys: SpinSystem
    beta: float
    gamma: float
    larmor_omega: float  # |Omega|, rad/s
    background_std_hz: float  # std of the background Larmor frequency, Hz
    T: float  # record duration, s
    dt_coarse: float  # detector coarse-graining time, s
    dt_fine: float  # semigroup step, s
    dissipator_model: str = LOSS_ONLY
    quadrature_points: int = 7

    def __post_init__(self):
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be non-negative")
        if self.dissipator_model not in (LOSS_ONLY, ISOTROPIC_PUMPING):
            raise ValueError(f"unknown dissipator model {self.dissipator_model!r}")
        if self.quadrature_points < 1 or self.quadrature_points % 2 == 0:
            raise ValueError("quadrature_points must be an odd integer >= 1")
        for big, small, name in (
            (self.dt_coarse, self.dt_fine, "dt_fine/dt_coarse"),
            (self.T, self.dt_coarse, "dt_coarse/T"),
        ):
            ratio = big / small
            if not (small > 0) or abs(ratio - round(ratio)) > 1e-9 * ratio:
                raise ValueError(f"{name}: {small} must evenly divide {big}")

    @property
    def n_fine(self):
        return round(self.T / self.dt_fine)

    @property
    def steps_per_bin(self):
        return round(self.dt_coarse / self.dt_fine)

    @property
    def n_bins(self):
        return round(self.T / self.dt_coarse)

    def digest_dict(self):
        return {
            "F": self.sys.F,
            "beta": self.beta,
            "gamma": self.gamma,
            "larmor_omega": self.larmor_omega,
            "background_std_hz": self.background_std_hz,
            "T": self.T,
            "dt_coarse": self.dt_coarse,
            "dt_fine": self.dt_fine,
            "dissipator_model": self.dissipator_model,
            "quadrature_points": self.quadrature_points,
        }


@dataclass(frozen=True)
class Generator:
    """Adjoint (Heisenberg) generator matrix on operator coordinates."""

    matrix: np.ndarray  # (d^2, d^2) real


@dataclass(frozen=True)
class ObservableHistory:
    """Coarse-grained, background-averaged Heisenberg history of Fz.

    coeffs[i] are the traceless coordinates of O_i, trace_parts[i] the
    coefficient on I/sqrt(d); times are bin centers.
    """

    sys: SpinSystem
    coeffs: np.ndarray  # (K, d^2 - 1)
    trace_parts: np.ndarray  # (K,)
    times: np.ndarray  # (K,)
    params_digest: str
    filter_window: int = 1

    def __len__(self):
        return self.coeffs.shape[0]

    def expectation(self, rho_vec_coeffs, rho_trace_part):
        """Model signal <O_i, rho> for state coordinates (trace, coeffs)."""
        return self.coeffs @ rho_vec_coeffs + self.trace_parts * rho_trace_part


# ---------------------------------------------------------------------------
# superoperator building blocks


class LiouvilleStructure:
    """Constant matrices from which every L(t) is a linear combination.

    All matrices act on Schroedinger-picture state coordinates in the basis
    {I/sqrt(d), E_j}; commutator blocks are C_H[a,b] = Tr[B_a (-i)[H, B_b]].
    """

    def __init__(self, sys, dissipator_model, pumping_branch=PUMPING_BRANCH):
        self.sys = sys
        d = sys.d
        B = np.concatenate(
            [np.eye(d, dtype=complex)[None] / np.sqrt(d), sys.basis], axis=0
        )
        self._B = B
        self._Bflat = B.conj().reshape(d * d, d * d)
        self.comm_x = self._commutator_matrix(sys.Fx)
        self.comm_y = self._commutator_matrix(sys.Fy)
        self.comm_z = self._commutator_matrix(sys.Fz)
        self.comm_xx = self._commutator_matrix(sys.Fx @ sys.Fx)
        if dissipator_model == LOSS_ONLY:
            D = 2.0 * np.eye(d * d)
        else:
            r = pumping_branch
            pump = self._sandwich_matrix([sys.Fx, sys.Fy, sys.Fz])
            D = 2.0 * np.eye(d * d) - (2.0 * r / (sys.F * (sys.F + 1.0))) * pump
        self.dissipator = D  # multiply by -gamma/2 when assembling L

    def _superop(self, images):
        flat = images.reshape(images.shape[0], -1)
        M = np.real(self._Bflat @ flat.T)
        return np.ascontiguousarray(M)

    def _commutator_matrix(self, H):
        images = -1j * (H[None] @ self._B - self._B @ H[None])
        return self._superop(images)

    def _sandwich_matrix(self, ops):
        images = sum(op[None] @ self._B @ op[None] for op in ops)
        return self._superop(images)

    def liouville(self, cos_phi, sin_phi, b0_shift, p):
        """Schroedinger L matrix; arguments may be scalars or arrays."""
        cos_phi = np.asarray(cos_phi)[..., None, None]
        sin_phi = np.asarray(sin_phi)[..., None, None]
        L = p.larmor_omega * (cos_phi * self.comm_x + sin_phi * self.comm_y)
        const = (
            b0_shift * self.comm_z
            + p.beta * p.gamma * self.comm_xx
            - 0.5 * p.gamma * self.dissipator
        )
        return L + const


_STRUCTURE_CACHE = {}


def liouville_structure(sys, dissipator_model, pumping_branch=PUMPING_BRANCH):
    key = (sys.d, dissipator_model, pumping_branch)
    if key not in _STRUCTURE_CACHE:
        _STRUCTURE_CACHE[key] = LiouvilleStructure(sys, dissipator_model, pumping_branch)
    return _STRUCTURE_CACHE[key]


# ---------------------------------------------------------------------------
# public operations


def build_hamiltonian(t, w, b0_shift, p):
    """H(t)/hbar for control waveform w and background shift b0 (rad/s)."""
    if not (0.0 <= t <= w.T * (1 + 1e-12)):
        raise ValueError(f"time {t} outside [0, {w.T}]")
    x, y = w.control_unit(np.atleast_1d(t))
    sys = p.sys
    H = p.larmor_omega * (x[0] * sys.Fx + y[0] * sys.Fy)
    H = H + b0_shift * sys.Fz + p.beta * p.gamma * (sys.Fx @ sys.Fx)
    return H


def build_generator(H, p):
    """Adjoint-form generator for Hamiltonian H plus dissipation."""
    H = check_hermitian(H)
    struct = liouville_structure(p.sys, p.dissipator_model)
    images = -1j * (H[None] @ struct._B - struct._B @ H[None])
    L = struct._superop(images) - 0.5 * p.gamma * struct.dissipator
    return Generator(matrix=np.ascontiguousarray(L.T))


def step_propagator(G, dt):
    """Matrix exponential expm(G*dt) via scaling and squaring."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    P = _scipy_expm(np.asarray(G.matrix) * dt)
    if not np.all(np.isfinite(P)):
        raise NumericalFailureError("step propagator has non-finite entries")
    return P


_FACT = np.array([1.0] + list(np.cumprod(np.arange(1.0, 14.0))))


def _poly12(powers, coeffs):
    """Degree-12 matrix polynomial, Paterson-Stockmeyer in A^4."""
    A1, A2, A3, A4 = powers
    c = coeffs
    idx = np.arange(A1.shape[-1])

    def block(i):
        out = c[i + 1] * A1
        out += c[i + 2] * A2
        out += c[i + 3] * A3
        out[..., idx, idx] += c[i]
        return out

    out = c[12] * A4
    out += block(8)
    out = out @ A4
    out += block(4)
    out = out @ A4
    out += block(0)
    return out


def expm_batch(Ms):
    """Exponentials of a batch of small real matrices.

    Scaling-and-squaring with a degree-12 Taylor kernel; the scaling is
    chosen from the largest 1-norm in the batch so accuracy is uniform.
    """
    Ms = np.asarray(Ms)
    norm = np.abs(Ms).sum(axis=-2).max() if Ms.size else 0.0
    s = max(0, int(np.ceil(np.log2(max(norm, 1e-300) / _EXPM_THETA))))
    A = Ms / (2.0**s)
    A2 = A @ A
    A3 = A2 @ A
    A4 = A3 @ A
    E = _poly12((A, A2, A3, A4), 1.0 / _FACT[:13])
    for _ in range(s):
        E = E @ E
    return E


def expm_phi1_batch(Ms):
    """(expm(M), phi1(M)) for a batch, phi1(M) = sum_k M^k/(k+1)!.

    Shares the scaling-and-squaring schedule of expm_batch, using the
    doubling rule phi1(2A) = (expm(A) + I) phi1(A) / 2.
    """
    Ms = np.asarray(Ms)
    D = Ms.shape[-1]
    norm = np.abs(Ms).sum(axis=-2).max() if Ms.size else 0.0
    s = max(0, int(np.ceil(np.log2(max(norm, 1e-300) / _EXPM_THETA))))
    A = Ms / (2.0**s)
    A2 = A @ A
    A3 = A2 @ A
    A4 = A3 @ A
    powers = (A, A2, A3, A4)
    E = _poly12(powers, 1.0 / _FACT[:13])
    Ph = _poly12(powers, 1.0 / _FACT[1:14])
    idx = np.arange(D)
    for _ in range(s):
        Epi = E.copy()
        Epi[..., idx, idx] += 1.0
        Ph = Epi @ Ph
        Ph *= 0.5
        E = E @ E
    return E, Ph


def control_sample_times(j0, j1, dt, T):
    """Gauss-node sample times for fine steps j0..j1-1, clipped to [0, T]."""
    j = np.arange(j0, j1)
    return [np.minimum((j + c) * dt, T) for c in (0.5 - _GAUSS3, 0.5, 0.5 + _GAUSS3)]


def kernels_from_generators(A1, A2, A3, dt):
    """Magnus kernels (E_j, B_j) from generator samples at the Gauss nodes.

    E_j = expm(Omega_j) advances the running propagator S across step j;
    B_j maps S at the step start to the time integral of S over the step,
    so bin averages of (O| S_t need no sub-step quadrature. Omega_j is the
    sixth-order 3-point Gauss Magnus exponent; the integral uses the same
    rule applied to the generator augmented with d(Int S)/dt = S, whose
    exponential is expressible through phi1(Omega).
    """
    # Blanes-Casas sixth-order Gauss-Magnus exponent, on the augmented
    # blocks (X, Y) representing [[X, 0], [Y, 0]]. The Y block of the
    # sampled generator is the identity (d Int/dt = S), so a1y = dt*I and
    # every Y-side product collapses to a scalar multiple or one matmul.
    a1 = dt * A2
    a2 = (np.sqrt(15.0) / 3.0 * dt) * (A3 - A1)
    a3 = (10.0 / 3.0 * dt) * (A3 - 2.0 * A2 + A1)
    m21 = a2 @ a1
    c1 = a1 @ a2
    c1 -= m21
    r = 2.0 * a3 + c1
    c2 = a1 @ r
    c2 -= r @ a1
    c2 /= -60.0
    c2y = dt * (m21 - r)
    c2y /= 60.0
    p = -20.0 * a1 - a3 + c1
    q = a2 + c2
    fx = p @ q
    fx -= q @ p
    # py = -20*dt*I + dt*a2  (c1y = a1y @ a2 = dt*a2), qy = c2y
    fy = dt * (a2 @ q)
    fy -= (20.0 * dt) * q
    fy -= c2y @ p
    omega = a1 + a3 / 12.0 + fx / 240.0
    bmat = fy / 240.0
    idx = np.arange(bmat.shape[-1])
    bmat[..., idx, idx] += dt
    E, Ph = expm_phi1_batch(omega)
    return E, bmat @ Ph


def step_kernels(w, p, b0_shift, step_slice=None, dt=None):
    """Per-fine-step kernels (E_j, B_j) for one waveform and background."""
    dt = p.dt_fine if dt is None else dt
    n_total = round(p.T / dt)
    j0, j1 = (0, n_total) if step_slice is None else step_slice
    struct = liouville_structure(p.sys, p.dissipator_model)
    As = []
    for t in control_sample_times(j0, j1, dt, w.T):
        x, y = w.control_unit(t)
        As.append(struct.liouville(x, y, b0_shift, p))
    return kernels_from_generators(As[0], As[1], As[2], dt)


def background_nodes(p):
    """Gauss-Hermite nodes/weights for the background Larmor shift (rad/s)."""
    if p.background_std_hz == 0.0 or p.quadrature_points == 1:
        return np.array([0.0]), np.array([1.0])
    x, wts = np.polynomial.hermite.hermgauss(p.quadrature_points)
    sigma = 2.0 * np.pi * p.background_std_hz
    return np.sqrt(2.0) * sigma * x, wts / np.sqrt(np.pi)


def fz_coordinates(sys):
    """Coordinates of the measured observable Fz on {I/sqrt(d), E_j}."""
    D = sys.d * sys.d
    o0 = np.zeros(D)
    fz = vectorize(sys.Fz, sys)
    o0[0] = fz.trace_part
    o0[1:] = fz.coeffs
    return o0


def _observable_rows(w, p, b0_shift, chunk=256):
    """Bin-averaged rows (O_i| of the running propagator, one background."""
    sys = p.sys
    D = sys.d * sys.d
    o0 = fz_coordinates(sys)
    m = p.steps_per_bin
    rows = np.zeros((p.n_bins, D))
    S = np.eye(D)
    n = p.n_fine
    for j0 in range(0, n, chunk):
        j1 = min(j0 + chunk, n)
        E, B = step_kernels(w, p, b0_shift, (j0, j1))
        for j in range(j0, j1):
            rows[j // m] += (o0 @ B[j - j0]) @ S
            S = E[j - j0] @ S
    rows /= p.dt_coarse
    if not np.all(np.isfinite(rows)):
        raise NumericalFailureError("observable history has non-finite entries")
    return rows


def params_digest(w, p, extra=None):
    h = hashlib.sha256()
    h.update(repr(sorted(p.digest_dict().items())).encode())
    h.update(np.ascontiguousarray(w.knot_angles).tobytes())
    h.update(repr(w.T).encode())
    factors = getattr(w, "factors", None)
    if factors is not None:
        h.update(np.ascontiguousarray(factors).tobytes())
    if extra is not None:
        h.update(repr(extra).encode())
    return h.hexdigest()


def observable_history(w, p):
    """Coarse-grained history {O_i}, averaged over the background field."""
    if abs(w.T - p.T) > 1e-12 * p.T:
        raise ValueError("waveform duration does not match params.T")
    nodes, weights = background_nodes(p)
    rows = None
    for b0, wt in zip(nodes, weights):
        r = wt * _observable_rows(w, p, b0)
        rows = r if rows is None else rows + r
    times = (np.arange(p.n_bins) + 0.5) * p.dt_coarse
    return ObservableHistory(
        sys=p.sys,
        coeffs=rows[:, 1:],
        trace_parts=rows[:, 0] * 1.0,
        times=times,
        params_digest=params_digest(w, p),
    )
