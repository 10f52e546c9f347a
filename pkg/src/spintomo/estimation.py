"""Gaussian inversion of measurement records on the traceless subspace.

The record is linear in the unknown state coordinates, so the posterior
under white Gaussian noise is Gaussian: an information matrix R (the
quadratic form) and a data vector b accumulate additively over samples
and over independent runs. The unit-trace constraint is enforced by
parameterizing on the traceless subspace (the zero-variance trace
pseudo-measurement in closed form); positivity by eigenvalue clipping.
"""

from dataclasses import dataclass

import numpy as np

from .algebra import fidelity as _fidelity
from .algebra import project_positive


class NoInformationError(ValueError):
    """The information matrix carries no invertible directions."""


DEFAULT_RCOND = 1e-10
DEFAULT_EPS_REL = 1e-9


@dataclass
class InformationMatrix:
    """Accumulated quadratic form R and data vector b on traceless coords."""

    R: np.ndarray  # (d^2-1, d^2-1)
    b: np.ndarray  # (d^2-1,)
    sample_count: int = 0
    sigma: float = 0.0

    @classmethod
    def zeros(cls, n_params):
        return cls(R=np.zeros((n_params, n_params)), b=np.zeros(n_params))

    def copy(self):
        return InformationMatrix(
            R=self.R.copy(), b=self.b.copy(),
            sample_count=self.sample_count, sigma=self.sigma,
        )


@dataclass(frozen=True)
class ReconstructionResult:
    rho_hat: np.ndarray
    rho_pos: np.ndarray
    entropy: float
    rank: int
    eigenvalues: np.ndarray
    fidelity: float = None


def model_information(hist, sigma=1.0, prior=None):
    """Information matrix of a record of this history (data-independent)."""
    A = hist.coeffs
    scale = 1.0 if sigma == 0.0 else 1.0 / sigma**2
    R = scale * (A.T @ A)
    out = InformationMatrix(
        R=R, b=np.zeros(A.shape[1]), sample_count=len(hist), sigma=sigma
    )
    if prior is not None:
        out.R += prior.R
        out.b += prior.b
        out.sample_count += prior.sample_count
    return out


def accumulate(hist, rec, prior=None):
    """Add one (filtered history, record) pair onto the information.

    The noiseless limit sigma = 0 uses unit weights; the estimate is
    invariant under the overall scale of (R, b).
    """
    if len(hist) != len(rec):
        raise ValueError("history and record lengths differ")
    if hist.filter_window != rec.filter_window:
        raise ValueError("history and record were filtered differently")
    A = hist.coeffs
    sigma = rec.sigma
    scale = 1.0 if sigma == 0.0 else 1.0 / sigma**2
    d = hist.sys.d
    y = rec.values - hist.trace_parts / np.sqrt(d)
    out = prior.copy() if prior is not None else InformationMatrix.zeros(A.shape[1])
    out.R += scale * (A.T @ A)
    out.b += scale * (A.T @ y)
    out.sample_count += len(rec)
    out.sigma = sigma
    return out


def estimate(info, sys, rcond=DEFAULT_RCOND):
    """Least-squares estimate I/d + sum_j c_j E_j with c = R^+ b.

    Eigendirections of R below rcond*lambda_max are unmeasured: their
    coefficients stay at the maximally-mixed prior mean (zero).
    """
    lam, V = np.linalg.eigh(info.R)
    lam_max = lam[-1] if lam.size else 0.0
    keep = lam > rcond * lam_max
    if lam_max <= 0.0 or not np.any(keep):
        raise NoInformationError("information matrix has no usable eigenvalues")
    c = V[:, keep] @ ((V[:, keep].T @ info.b) / lam[keep])
    rho = np.tensordot(c, sys.basis, axes=1) + np.eye(sys.d) / sys.d
    return rho


def information_rank(info, rcond=DEFAULT_RCOND):
    lam = np.linalg.eigvalsh(info.R)
    lam_max = max(lam[-1], 0.0) if lam.size else 0.0
    return int(np.count_nonzero(lam > rcond * lam_max)) if lam_max > 0 else 0


def entropy(info, eps_rel=DEFAULT_EPS_REL):
    """S = -sum_j log(lambda_j + eps_rel*lambda_max) over all directions.

    The relative regularization keeps S finite before the measurement set
    is informationally complete.
    """
    lam = np.linalg.eigvalsh(info.R)
    lam_max = max(float(lam[-1]), np.finfo(float).eps)
    return float(-np.sum(np.log(np.clip(lam, 0.0, None) + eps_rel * lam_max)))


def entropy_of_eigenvalues(lam, eps_rel=DEFAULT_EPS_REL):
    lam = np.asarray(lam)
    lam_max = max(float(lam.max()), np.finfo(float).eps)
    return float(-np.sum(np.log(np.clip(lam, 0.0, None) + eps_rel * lam_max)))


def reconstruct(
    hists,
    records,
    reference=None,
    rcond=DEFAULT_RCOND,
    eps_rel=DEFAULT_EPS_REL,
):
    """Full inversion pipeline over one or more runs.

    hists/records are parallel lists (one entry per independent run);
    histories must already carry the record's filter.
    """
    if len(hists) != len(records) or not hists:
        raise ValueError("need equally many histories and records, at least one")
    sys = hists[0].sys
    info = None
    for h, r in zip(hists, records):
        if h.sys.d != sys.d:
            raise ValueError("runs use inconsistent spin systems")
        info = accumulate(h, r, prior=info)
    rho_hat = estimate(info, sys, rcond=rcond)
    rho_pos = project_positive(rho_hat)
    lam = np.linalg.eigvalsh(info.R)
    fid = None if reference is None else _fidelity(reference, rho_pos)
    return ReconstructionResult(
        rho_hat=rho_hat,
        rho_pos=rho_pos,
        entropy=entropy_of_eigenvalues(lam, eps_rel),
        rank=int(np.count_nonzero(lam > rcond * max(lam[-1], 0.0))),
        eigenvalues=lam,
        fidelity=fid,
    )


def save_density_matrix(path, rho):
    """Text dump, row-major, 're,im' pairs, 12 significant digits."""
    rho = np.asarray(rho)
    lines = []
    for row in rho:
        lines.append(" ".join(f"{z.real:.12e},{z.imag:.12e}" for z in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_density_matrix(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            pairs = [tok.split(",") for tok in line.split()]
            rows.append([complex(float(a), float(b)) for a, b in pairs])
    return np.array(rows)
