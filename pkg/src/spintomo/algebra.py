"""Hermitian operator algebra for a single spin-F manifold.

Spin matrices, an orthonormal traceless operator basis (generalized
Gell-Mann construction), vectorization onto real coordinates, positivity
projection and fidelity. Everything here is dense numpy, double precision,
and immutable after construction.

Conventions: hbar = 1, basis states |F,m> ordered with m descending, so
Fz = diag(F, F-1, ..., -F). Operator inner product is Tr[A B] (Hilbert-
Schmidt, Hermitian case).
"""

from dataclasses import dataclass, field

import numpy as np

HERMITICITY_TOL = 1e-12


class DegenerateEstimateError(ValueError):
    """Raised when an estimate has no positive spectral weight to keep."""


def _check_half_integer(F):
    twoF = 2 * F
    if abs(twoF - round(twoF)) > 1e-9 or F <= 0:
        raise ValueError(f"spin quantum number must be a positive half-integer, got {F}")
    return round(twoF) / 2.0


def spin_matrices(F):
    """Return (Fx, Fy, Fz) for spin F, dimension d = 2F+1, m descending."""
    F = _check_half_integer(F)
    d = round(2 * F + 1)
    m = F - np.arange(d)
    Fz = np.diag(m).astype(complex)
    # raising operator in the m-descending ordering: F+|F,m> = c|F,m+1>,
    # i.e. it connects column (m) to row (m+1), one above the diagonal
    c = np.sqrt(F * (F + 1) - m[1:] * (m[1:] + 1))
    Fp = np.zeros((d, d), dtype=complex)
    Fp[np.arange(d - 1), np.arange(1, d)] = c
    Fx = (Fp + Fp.conj().T) / 2
    Fy = (Fp - Fp.conj().T) / 2j
    return Fx, Fy, Fz


def gell_mann_basis(d):
    """Orthonormal traceless Hermitian basis of dimension d**2 - 1.

    Families in order: symmetric off-diagonal, antisymmetric off-diagonal
    (both over index pairs j < k, lexicographic), then diagonal. Normalized
    so that Tr[E_j E_k] = delta_jk.
    """
    basis = []
    s = 1.0 / np.sqrt(2.0)
    for j in range(d):
        for k in range(j + 1, d):
            E = np.zeros((d, d), dtype=complex)
            E[j, k] = s
            E[k, j] = s
            basis.append(E)
    for j in range(d):
        for k in range(j + 1, d):
            E = np.zeros((d, d), dtype=complex)
            E[j, k] = -1j * s
            E[k, j] = 1j * s
            basis.append(E)
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1.0
        diag[l] = -l
        basis.append(np.diag(diag / np.sqrt(l * (l + 1))).astype(complex))
    return np.array(basis)


@dataclass(frozen=True)
class SpinSystem:
    """Arena for all operator algebra of a single spin-F manifold."""

    F: float
    d: int
    Fx: np.ndarray
    Fy: np.ndarray
    Fz: np.ndarray
    basis: np.ndarray  # (d**2 - 1, d, d) orthonormal traceless Hermitian
    # flattened conjugates for fast Tr[E_j A] = sum_ab conj(E_j)_ab A_ab
    _basis_flat: np.ndarray = field(repr=False, default=None)

    @property
    def n_params(self):
        return self.d * self.d - 1


def make_spin_system(F):
    """Build the spin system for half-integer or integer F (d <= 100)."""
    F = _check_half_integer(F)
    d = round(2 * F + 1)
    if d > 100:
        raise ValueError(f"dimension {d} too large (need d <= 100)")
    Fx, Fy, Fz = spin_matrices(F)
    basis = gell_mann_basis(d)
    flat = basis.conj().reshape(len(basis), d * d)
    return SpinSystem(F=F, d=d, Fx=Fx, Fy=Fy, Fz=Fz, basis=basis, _basis_flat=flat)


def check_hermitian(A, tol=HERMITICITY_TOL):
    """Raise ValueError if A is not Hermitian to tol (relative)."""
    A = np.asarray(A, dtype=complex)
    scale = max(np.linalg.norm(A), 1.0)
    if np.linalg.norm(A - A.conj().T) > tol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    return A


def hs_inner(A, B):
    """Hilbert-Schmidt inner product Tr[A B] for Hermitian A, B."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return float(np.real(np.sum(A.conj().T * B.T)))


@dataclass(frozen=True)
class OperatorVector:
    """Real coordinates of a Hermitian operator: trace part on I/sqrt(d),
    traceless part on the Gell-Mann basis."""

    trace_part: float
    coeffs: np.ndarray


def vectorize(A, sys):
    """Real coordinates (Tr[A]/sqrt(d), {Tr[E_j A]}) of Hermitian A."""
    A = check_hermitian(A)
    if A.shape != (sys.d, sys.d):
        raise ValueError("operator dimension does not match spin system")
    coeffs = np.real(sys._basis_flat @ A.ravel())
    trace_part = float(np.real(np.trace(A))) / np.sqrt(sys.d)
    return OperatorVector(trace_part=trace_part, coeffs=coeffs)


def devectorize(v, sys):
    """Inverse of vectorize."""
    A = np.tensordot(v.coeffs, sys.basis, axes=1)
    A += v.trace_part / np.sqrt(sys.d) * np.eye(sys.d)
    return A


def project_positive(rho_hat):
    """Clip negative eigenvalues and renormalize to trace one.

    Raises DegenerateEstimateError when no positive weight remains.
    """
    rho_hat = check_hermitian(rho_hat)
    w, V = np.linalg.eigh(rho_hat)
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if total <= 0.0:
        raise DegenerateEstimateError("estimate has no positive eigenvalues")
    w /= total
    return (V * w) @ V.conj().T


def fidelity(psi0, rho):
    """Overlap <psi0| rho |psi0> of a pure reference with a density matrix."""
    psi0 = np.asarray(psi0, dtype=complex).ravel()
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-9:
        raise ValueError("reference state is not normalized")
    rho = np.asarray(rho)
    if rho.shape != (psi0.size, psi0.size):
        raise ValueError("state and density matrix dimensions differ")
    val = float(np.real(psi0.conj() @ rho @ psi0))
    return min(max(val, 0.0), 1.0)


def random_density_matrix(d, rng, rank=None):
    """Random full(ish)-rank density matrix, Hilbert-Schmidt-style measure."""
    rank = d if rank is None else rank
    G = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def cat_state(sys):
    """(|F,m=F> + |F,m=-F>)/sqrt(2) in the m-descending basis."""
    psi = np.zeros(sys.d, dtype=complex)
    psi[0] = psi[-1] = 1.0 / np.sqrt(2.0)
    return psi


def stretched_state(sys):
    """|F,m=F>."""
    psi = np.zeros(sys.d, dtype=complex)
    psi[0] = 1.0
    return psi
