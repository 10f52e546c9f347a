"""Synthetic measurement records: signal plus Gaussian white noise, with
optional low-pass filtering by a centered moving average.

Records are per-atom normalized: the ensemble-size prefactor multiplies
signal and noise alike, so the signal-to-noise ratio per coarse-grained
sample is the only noise knob. SNR is defined against the maximum
possible signal M_max = F (the largest eigenvalue of Fz).
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .dynamics import ObservableHistory

DEFAULT_FILTER_WINDOW = 3


@dataclass(frozen=True)
class SnrSpec:
    """Signal-to-noise ratio per coarse-grained sample; inf = noiseless."""

    snr: float

    def __post_init__(self):
        if not self.snr > 0:
            raise ValueError("snr must be positive (use inf for noiseless)")


@dataclass(frozen=True)
class MeasurementRecord:
    """Noisy, filtered samples of the measurement record."""

    values: np.ndarray
    sigma: float  # per-sample noise std before filtering
    times: np.ndarray
    seed: int
    filter_window: int = 1

    def __len__(self):
        return self.values.size


def sigma_from_snr(s, sys):
    """Per-sample noise std implied by the SNR spec: sigma = F / snr."""
    if np.isinf(s.snr):
        return 0.0
    return sys.F / s.snr


def moving_average(x, w, axis=0):
    """Centered moving average over window w (odd), truncated at the edges."""
    if w < 1 or w % 2 == 0:
        raise ValueError("filter window must be an odd integer >= 1")
    if w == 1:
        return np.asarray(x, dtype=float).copy()
    x = np.moveaxis(np.asarray(x, dtype=float), axis, 0)
    n = x.shape[0]
    h = w // 2
    csum = np.cumsum(x, axis=0)
    zeros = np.zeros((1,) + x.shape[1:])
    csum = np.concatenate([zeros, csum], axis=0)
    i = np.arange(n)
    lo = np.maximum(i - h, 0)
    hi = np.minimum(i + h, n - 1)
    out = (csum[hi + 1] - csum[lo]) / (hi - lo + 1)[(...,) + (None,) * (x.ndim - 1)]
    return np.moveaxis(out, 0, axis)


def simulate_record(rho0, hist, s, seed, w=DEFAULT_FILTER_WINDOW):
    """Simulate one noisy record for true state rho0.

    Raw samples are <O_i, rho0> + sigma*W_i with i.i.d. standard normal
    W_i from the seeded generator; the output is their centered moving
    average over w bins.
    """
    from .algebra import vectorize

    rho0 = np.asarray(rho0)
    sys = hist.sys
    if rho0.shape != (sys.d, sys.d):
        raise ValueError("state dimension does not match history")
    rv = vectorize(rho0, sys)
    signal = hist.expectation(rv.coeffs, rv.trace_part)
    sigma = sigma_from_snr(s, sys)
    rng = np.random.default_rng(seed)
    raw = signal + sigma * rng.standard_normal(len(hist))
    return MeasurementRecord(
        values=moving_average(raw, w),
        sigma=sigma,
        times=hist.times.copy(),
        seed=seed,
        filter_window=w,
    )


def apply_filter(hist, w):
    """The model-side twin of the record filter: moving-average the O_i."""
    if w < 1 or w % 2 == 0:
        raise ValueError("filter window must be an odd integer >= 1")
    if w == 1:
        return hist
    return ObservableHistory(
        sys=hist.sys,
        coeffs=moving_average(hist.coeffs, w),
        trace_parts=moving_average(hist.trace_parts, w),
        times=hist.times.copy(),
        params_digest=hist.params_digest,
        filter_window=w,
    )


def save_record(path, rec, snr, params_digest):
    """CSV with header time_s,value plus a JSON metadata sidecar."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["time_s", "value"])
        for t, v in zip(rec.times, rec.values):
            out.writerow([f"{t:.12e}", f"{v:.12e}"])
    meta = {
        "seed": int(rec.seed),
        "snr": None if np.isinf(snr) else float(snr),
        "sigma": float(rec.sigma),
        "filter_window": int(rec.filter_window),
        "params_digest": params_digest,
    }
    with open(_sidecar(path), "w") as fh:
        json.dump(meta, fh, indent=2)


def load_record(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["time_s", "value"]:
            raise ValueError(f"unexpected record header {header} in {path}")
        data = np.array([[float(a), float(b)] for a, b in reader])
    with open(_sidecar(path)) as fh:
        meta = json.load(fh)
    rec = MeasurementRecord(
        values=data[:, 1],
        sigma=meta["sigma"],
        times=data[:, 0],
        seed=meta["seed"],
        filter_window=meta["filter_window"],
    )
    return rec, meta


def _sidecar(path):
    path = str(path)
    base = path[: -len(".csv")] if path.endswith(".csv") else path
    return base + ".meta.json"
