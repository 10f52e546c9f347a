"""Configuration-driven command-line harness for simulated tomography
experiments: waveform design, record simulation, reconstruction, SNR
sweeps, control-error sensitivity, and an invariant self-check.

Every command is deterministic given (config, base_seed): realization r
of SNR index s with m combined runs draws its record noise from seed
base_seed + ((s*n_realizations + r)*n_runs + run_index).
"""

import argparse
import csv
import json
import logging
import os
import sys as _sys

import numpy as np

from . import algebra, design, dynamics, estimation, measurement, waveform

log = logging.getLogger("spintomo")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_VALIDATION = 3

BETA_PRESETS = {"d1": 7.67, "d2": 0.81}

_PHYSICS_KEYS = {
    "F", "beta", "gamma", "larmor_omega", "background_std_hz", "T",
    "dt_coarse", "dt_fine", "dissipator_model", "quadrature_points",
}
_CONTROL_KEYS = {
    "grid_size", "max_sweeps", "tol", "seed", "eps_rel", "n_knots",
    "waveform_files",
}
_TOP_KEYS = {
    "physics", "state_prep", "snr_list", "n_realizations", "n_runs",
    "control", "control_error_pct", "output_dir", "base_seed",
    "filter_window",
}


class ConfigError(ValueError):
    pass


def _check_keys(d, allowed, where):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


class ExperimentConfig:
    """Validated experiment description loaded from a JSON file."""

    def __init__(self, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        _check_keys(raw, _TOP_KEYS, "config")
        phys = raw.get("physics")
        if not isinstance(phys, dict):
            raise ConfigError("config needs a 'physics' object")
        _check_keys(phys, _PHYSICS_KEYS, "physics")
        if "F" not in phys:
            raise ConfigError("physics.F is required")
        beta = phys.get("beta", 0.0)
        if isinstance(beta, str):
            if beta not in BETA_PRESETS:
                raise ConfigError(f"unknown beta preset {beta!r}")
            beta = BETA_PRESETS[beta]
        self.sys = algebra.make_spin_system(phys["F"])
        try:
            self.physics = dynamics.PhysicsParams(
                sys=self.sys,
                beta=float(beta),
                gamma=float(phys.get("gamma", 1e3)),
                larmor_omega=float(phys.get("larmor_omega", 2 * np.pi * 15e3)),
                background_std_hz=float(phys.get("background_std_hz", 60.0)),
                T=float(phys.get("T", 4e-3)),
                dt_coarse=float(phys.get("dt_coarse", 4e-6)),
                dt_fine=float(phys.get("dt_fine", 1e-6)),
                dissipator_model=phys.get("dissipator_model", dynamics.LOSS_ONLY),
                quadrature_points=int(phys.get("quadrature_points", 7)),
            )
        except ValueError as e:
            raise ConfigError(str(e))
        self.state_prep = raw.get("state_prep", "cat")
        self.snr_list = list(raw.get("snr_list", [30.0]))
        if not self.snr_list:
            raise ConfigError("snr_list must be non-empty")
        self.n_realizations = int(raw.get("n_realizations", 50))
        if self.n_realizations < 1:
            raise ConfigError("n_realizations must be >= 1")
        self.n_runs = int(raw.get("n_runs", 1))
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        err = raw.get("control_error_pct", 0.0)
        self.error_pct_list = [float(e) for e in
                               (err if isinstance(err, list) else [err])]
        if any(e < 0 for e in self.error_pct_list):
            raise ConfigError("control_error_pct must be >= 0")
        self.output_dir = raw.get("output_dir", "out")
        self.base_seed = int(raw.get("base_seed", 0))
        self.filter_window = int(raw.get("filter_window",
                                         measurement.DEFAULT_FILTER_WINDOW))
        control = raw.get("control", {})
        if not isinstance(control, dict):
            raise ConfigError("'control' must be an object")
        _check_keys(control, _CONTROL_KEYS, "control")
        self.waveform_files = control.get("waveform_files")
        if self.waveform_files is not None:
            for f in self.waveform_files:
                if not os.path.exists(f):
                    raise ConfigError(f"waveform file not found: {f}")
        self.search = design.SearchConfig(
            grid_size=int(control.get("grid_size", 32)),
            max_sweeps=int(control.get("max_sweeps", 20)),
            tol=float(control.get("tol", 1e-3)),
            seed=int(control.get("seed", self.base_seed)),
            eps_rel=float(control.get("eps_rel", estimation.DEFAULT_EPS_REL)),
            n_knots=int(control.get("n_knots", 50)),
        )

    def initial_state(self):
        """Density matrix and (if pure) state vector of the prepared state."""
        if self.state_prep == "cat":
            psi = algebra.cat_state(self.sys)
        elif self.state_prep == "stretched":
            psi = algebra.stretched_state(self.sys)
        else:
            if not os.path.exists(self.state_prep):
                raise ConfigError(f"state file not found: {self.state_prep}")
            rho = estimation.load_density_matrix(self.state_prep)
            if rho.shape != (self.sys.d, self.sys.d):
                raise ConfigError("state file dimension mismatch")
            return rho, None
        return np.outer(psi, psi.conj()), psi

    def design_params(self):
        """Coarse surrogate resolution used inside waveform design only.

        The objective is insensitive to the fine-step refinement and the
        background average at the level that matters for ranking
        candidate angles, and design cost scales with both.
        """
        from dataclasses import replace

        return replace(
            self.physics,
            dt_fine=self.physics.dt_coarse,
            quadrature_points=1,
            background_std_hz=0.0,
        )


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    return ExperimentConfig(raw)


def _ensure_outdir(cfg, override=None):
    out = override or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _waveform_path(out, r):
    return os.path.join(out, f"waveform_run{r + 1}.txt")


def _get_waveforms(cfg, out, n_runs=None):
    """Load configured/previously designed waveforms, or design them."""
    n = n_runs if n_runs is not None else cfg.n_runs
    if cfg.waveform_files is not None:
        if len(cfg.waveform_files) < n:
            raise ConfigError(
                f"need {n} waveform files, config lists {len(cfg.waveform_files)}"
            )
        return [waveform.load_waveform(f) for f in cfg.waveform_files[:n]]
    paths = [_waveform_path(out, r) for r in range(n)]
    if all(os.path.exists(p) for p in paths):
        return [waveform.load_waveform(p) for p in paths]
    res = cmd_design(cfg, out)
    return list(res.waveforms[:n])


def cmd_design(cfg, out):
    """Design cfg.n_runs waveforms and write them plus the search log."""
    res = design.greedy_multirun(cfg.n_runs, cfg.design_params(), cfg.search)
    for r, w in enumerate(res.waveforms):
        waveform.save_waveform(_waveform_path(out, r), w)
    with open(os.path.join(out, "design_log.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["sweep", "entropy", "rank"])
        for i, (s, rk) in enumerate(zip(res.entropy_trace, res.rank_trace)):
            wr.writerow([i, f"{s:.6f}", rk])
    log.info("designed %d waveform(s), final rank %d", len(res.waveforms),
             res.final_rank)
    return res


def _histories(cfg, waveforms, params=None):
    p = params if params is not None else cfg.physics
    return [dynamics.observable_history(w, p) for w in waveforms]


def _reconstruct_realization(hists_f, records, psi):
    return estimation.reconstruct(hists_f, records, reference=psi)


def _realization_seed(cfg, snr_idx, realization, run):
    return cfg.base_seed + (
        (snr_idx * cfg.n_realizations + realization) * cfg.n_runs + run
    )


def cmd_sweep(cfg, out):
    """Fidelity vs SNR and vs number of combined runs; CSV output."""
    waveforms = _get_waveforms(cfg, out)
    rho0, psi = cfg.initial_state()
    hists = _histories(cfg, waveforms)
    hists_f = [measurement.apply_filter(h, cfg.filter_window) for h in hists]
    rows = []
    excluded = 0
    for si, snr in enumerate(sorted(cfg.snr_list)):
        spec = measurement.SnrSpec(float(snr))
        for m in range(1, cfg.n_runs + 1):
            fids, ents, ranks = [], [], []
            for i in range(cfg.n_realizations):
                records = [
                    measurement.simulate_record(
                        rho0, hists[r], spec,
                        seed=_realization_seed(cfg, si, i, r),
                        w=cfg.filter_window,
                    )
                    for r in range(m)
                ]
                try:
                    res = _reconstruct_realization(hists_f[:m], records, psi)
                except (algebra.DegenerateEstimateError,
                        estimation.NoInformationError) as e:
                    log.warning("excluding realization %d (snr=%s, runs=%d): %s",
                                i, snr, m, e)
                    excluded += 1
                    continue
                fids.append(res.fidelity)
                ents.append(res.entropy)
                ranks.append(res.rank)
            if not fids:
                raise dynamics.NumericalFailureError(
                    f"all realizations failed at snr={snr}, runs={m}"
                )
            fids = np.array(fids)
            rows.append([
                snr, m,
                float(fids.mean()),
                float(fids.std(ddof=1) / np.sqrt(len(fids))) if len(fids) > 1 else 0.0,
                float(np.mean(ents)),
                int(ranks[-1]),
            ])
    path = os.path.join(out, "sweep.csv")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["snr", "n_runs", "mean_fidelity", "stderr_fidelity",
                     "mean_entropy", "rank"])
        for row in rows:
            wr.writerow([f"{row[0]:g}", row[1], f"{row[2]:.6f}",
                         f"{row[3]:.6f}", f"{row[4]:.6f}", row[5]])
    if excluded:
        log.warning("excluded %d degenerate realization(s)", excluded)
    log.info("wrote %s (%d rows, %d excluded)", path, len(rows), excluded)
    return rows


def cmd_sensitivity(cfg, out):
    """Fidelity degradation under control-amplitude errors; CSV output.

    Each realization perturbs the record-generating dynamics with a
    relative drive-amplitude error of eps percent, piecewise-constant
    over each knot interval (the waveform generator's update rate) and
    drawn independently per interval and per run; the estimator keeps
    the nominal model. Uses the first snr in snr_list.
    """
    from dataclasses import replace

    waveforms = _get_waveforms(cfg, out)
    rho0, psi = cfg.initial_state()
    snr = float(sorted(cfg.snr_list)[0])
    spec = measurement.SnrSpec(snr)
    hists = _histories(cfg, waveforms)
    hists_f = [measurement.apply_filter(h, cfg.filter_window) for h in hists]
    # perturbed record generation can use the coarse fine-step: the step
    # refinement moves the signal by ~1e-5, far below the noise floor
    p_rec = replace(cfg.physics, dt_fine=cfg.physics.dt_coarse)
    rows = []
    excluded = 0
    for ei, eps in enumerate(cfg.error_pct_list):
        fids = []
        rng = np.random.default_rng(cfg.base_seed + 90000 + ei)
        for i in range(cfg.n_realizations):
            if eps == 0.0:
                h_rec = hists
            else:
                perturbed = [
                    waveform.AmplitudeScaledWaveform(
                        base=w,
                        factors=1.0 + eps / 100.0
                        * rng.standard_normal(w.n - 1),
                    )
                    for w in waveforms
                ]
                h_rec = _histories(cfg, perturbed, p_rec)
            records = [
                measurement.simulate_record(
                    rho0, h_rec[r], spec,
                    seed=_realization_seed(cfg, 0, i, r),
                    w=cfg.filter_window,
                )
                for r in range(cfg.n_runs)
            ]
            try:
                res = _reconstruct_realization(hists_f, records, psi)
            except (algebra.DegenerateEstimateError,
                    estimation.NoInformationError) as e:
                log.warning("excluding realization %d (eps=%s): %s", i, eps, e)
                excluded += 1
                continue
            fids.append(res.fidelity)
        fids = np.array(fids)
        stderr = float(fids.std(ddof=1) / np.sqrt(len(fids))) if len(fids) > 1 else 0.0
        rows.append([eps, float(fids.mean()), stderr])
    path = os.path.join(out, "sensitivity.csv")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["control_error_pct", "mean_fidelity", "stderr_fidelity"])
        for row in rows:
            wr.writerow([f"{row[0]:g}", f"{row[1]:.6f}", f"{row[2]:.6f}"])
    if excluded:
        log.warning("excluded %d degenerate realization(s)", excluded)
    log.info("wrote %s", path)
    return rows


def cmd_simulate(cfg, out):
    """Write one noisy record per (snr, run) for external inspection."""
    waveforms = _get_waveforms(cfg, out)
    rho0, _ = cfg.initial_state()
    hists = _histories(cfg, waveforms)
    n = 0
    for si, snr in enumerate(sorted(cfg.snr_list)):
        spec = measurement.SnrSpec(float(snr))
        for r in range(cfg.n_runs):
            rec = measurement.simulate_record(
                rho0, hists[r], spec,
                seed=_realization_seed(cfg, si, 0, r),
                w=cfg.filter_window,
            )
            path = os.path.join(out, f"record_snr{snr:g}_run{r + 1}.csv")
            measurement.save_record(path, rec, float(snr), hists[r].params_digest)
            n += 1
    log.info("wrote %d record(s) to %s", n, out)


def cmd_reconstruct(cfg, out):
    """Invert the records written by `simulate`; summary CSV + state dumps."""
    waveforms = _get_waveforms(cfg, out)
    _, psi = cfg.initial_state()
    hists = _histories(cfg, waveforms)
    hists_f = [measurement.apply_filter(h, cfg.filter_window) for h in hists]
    rows = []
    for si, snr in enumerate(sorted(cfg.snr_list)):
        records = []
        for r in range(cfg.n_runs):
            path = os.path.join(out, f"record_snr{snr:g}_run{r + 1}.csv")
            if not os.path.exists(path):
                raise ConfigError(f"missing record {path}; run `simulate` first")
            rec, _meta = measurement.load_record(path)
            records.append(rec)
        res = estimation.reconstruct(hists_f, records, reference=psi)
        estimation.save_density_matrix(
            os.path.join(out, f"rho_snr{snr:g}.txt"), res.rho_pos
        )
        rows.append([si, snr, res.rank, res.entropy,
                     "" if res.fidelity is None else f"{res.fidelity:.6f}"])
    path = os.path.join(out, "reconstruction.csv")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["run_id", "snr", "rank", "entropy", "fidelity"])
        for row in rows:
            wr.writerow([row[0], f"{row[1]:g}", row[2], f"{row[3]:.6f}", row[4]])
    log.info("wrote %s", path)


# ---------------------------------------------------------------------------
# validation


def _validation_checks(corrupt_basis=False):
    """Small-scale invariant suite; yields (name, passed) pairs."""
    sys2 = algebra.make_spin_system(1)
    basis = sys2.basis.copy()
    if corrupt_basis:
        basis[0] = 2.0 * basis[0]
    flat = basis.reshape(len(basis), -1)
    gram = np.real(flat.conj() @ flat.T)
    yield "basis_orthonormal", bool(
        np.allclose(gram, np.eye(len(basis)), atol=1e-10)
    )

    rng = np.random.default_rng(0)
    # analytic oracle: constant control along x, no nonlinearity or decay,
    # stretched state along z -> <Fz>(t) = F cos(w t), bin-averaged
    p0 = dynamics.PhysicsParams(
        sys=sys2, beta=0.0, gamma=0.0, larmor_omega=2 * np.pi * 15e3,
        background_std_hz=0.0, T=4e-4, dt_coarse=4e-6, dt_fine=1e-6,
        quadrature_points=1,
    )
    w = waveform.ControlWaveform(knot_angles=np.zeros(8), T=p0.T)
    hist = dynamics.observable_history(w, p0)
    psi = algebra.stretched_state(sys2)
    rho_z = np.outer(psi, psi.conj())
    rv = algebra.vectorize(rho_z, sys2)
    signal = hist.expectation(rv.coeffs, rv.trace_part)
    om = p0.larmor_omega
    exact = (sys2.F * np.sin(om * p0.dt_coarse / 2.0)
             / (om * p0.dt_coarse / 2.0) * np.cos(om * hist.times))
    yield "adjoint_consistency", bool(
        np.max(np.abs(signal - exact)) < 1e-8
    )
    rho0 = algebra.random_density_matrix(sys2.d, rng)
    rv = algebra.vectorize(rho0, sys2)

    # noiseless exactness at F=1
    p1 = dynamics.PhysicsParams(
        sys=sys2, beta=7.67, gamma=1e3, larmor_omega=2 * np.pi * 15e3,
        background_std_hz=0.0, T=1e-3, dt_coarse=4e-6, dt_fine=2e-6,
        quadrature_points=1,
    )
    w1 = waveform.random_waveform(12, p1.T, rng)
    h1 = dynamics.observable_history(w1, p1)
    rec = measurement.simulate_record(
        rho0, h1, measurement.SnrSpec(np.inf), seed=0, w=1
    )
    res = estimation.reconstruct([h1], [rec])
    yield "noiseless_exactness", bool(
        np.linalg.norm(res.rho_hat - rho0) < 1e-8 and res.rank == sys2.n_params
    )

    # information monotonicity on a random split
    A = h1.coeffs
    R1 = A[:100].T @ A[:100]
    R2 = R1 + A[100:].T @ A[100:]
    lam1 = np.linalg.eigvalsh(R1)
    lam2 = np.linalg.eigvalsh(R2)
    yield "information_monotonicity", bool(
        np.all(lam2 - lam1 >= -1e-10 * max(lam2[-1], 1.0))
    )

    # filter consistency
    h3 = measurement.apply_filter(h1, 3)
    rec3 = measurement.simulate_record(
        rho0, h1, measurement.SnrSpec(np.inf), seed=0, w=3
    )
    model3 = h3.expectation(rv.coeffs, rv.trace_part)
    yield "filter_consistency", bool(
        np.allclose(rec3.values, model3, atol=1e-12)
    )


def cmd_validate(corrupt_basis=False):
    results = list(_validation_checks(corrupt_basis=corrupt_basis))
    width = max(len(n) for n, _ in results)
    ok = True
    for name, passed in results:
        print(f"{name:<{width}}  {'PASS' if passed else 'FAIL'}")
        ok = ok and passed
    print(f"{'overall':<{width}}  {'PASS' if ok else 'FAIL'}")
    return ok


# ---------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(
        prog="spintomo",
        description="simulated continuous-measurement spin tomography",
    )
    ap.add_argument("--config", help="JSON experiment configuration")
    ap.add_argument("--seed", type=int, help="override base_seed")
    ap.add_argument("--out", help="override output directory")
    ap.add_argument("--threads", type=int, default=None,
                    help="cap BLAS threads (default: library choice)")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument(
        "command",
        choices=["design", "sweep", "sensitivity", "simulate", "reconstruct",
                 "validate"],
    )
    ap.add_argument("--inject-fault", action="store_true",
                    help=argparse.SUPPRESS)  # negative control for validate
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    if args.command == "validate":
        return EXIT_OK if cmd_validate(corrupt_basis=args.inject_fault) \
            else EXIT_VALIDATION
    if not args.config:
        print("error: --config is required for this command", file=_sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.base_seed = args.seed
        out = _ensure_outdir(cfg, args.out)
        if args.command == "design":
            cmd_design(cfg, out)
        elif args.command == "sweep":
            cmd_sweep(cfg, out)
        elif args.command == "sensitivity":
            cmd_sensitivity(cfg, out)
        elif args.command == "simulate":
            cmd_simulate(cfg, out)
        elif args.command == "reconstruct":
            cmd_reconstruct(cfg, out)
    except ConfigError as e:
        print(f"config error: {e}", file=_sys.stderr)
        return EXIT_CONFIG
    except (dynamics.NumericalFailureError, estimation.NoInformationError,
            algebra.DegenerateEstimateError) as e:
        print(f"numerical failure: {e}", file=_sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    _sys.exit(main())
