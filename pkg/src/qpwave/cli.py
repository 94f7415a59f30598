"""Run orchestration: config ingestion, pipeline execution, checkpointing.

Pipeline: validate -> analyze -> assemble -> schedule/split -> screen ->
reduce -> verify, with per-step checkpoints under <out>/steps and a
deterministic summary.json (timings quarantined under their own key).

Exit codes: 0 converged, 2 resonant scaling value, 3 step-size abort,
4 config error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import resonance
from .galerkin import QuadraticForm, WeightedSpace, assemble_initial_forms, coupling_tensor
from .kam import (
    ChainStep,
    KamEngine,
    KamOptions,
    NormalForm,
    ResonanceError,
    Schedule,
    StepSizeError,
    TransformChain,
    build_schedule,
    seed_pieces,
)
from .potential import (
    FrequencySpec,
    InvalidPotentialError,
    fourier_analyze,
    make_potential,
    validate_assumptions,
)
from .smoothing import JacksonKernel, decompose
from .verify import (
    TruncatedWaveSystem,
    compare_through_chain,
    integrate_full,
    lyapunov_exponent,
    multiplier_decay,
    qp_to_u,
)

EXIT_CONVERGED = 0
EXIT_RESONANT = 2
EXIT_STEPSIZE = 3
EXIT_CONFIG = 4

SCHEMA_VERSION = 1

DEFAULT_OMEGA0 = (1.0, 1.4142135623730951, 1.7320508075688772, 2.2360679774997896)


@dataclass
class RunConfig:
    n: int = 2
    smoothness_N: int = 6
    gamma: float = 0.05
    eps: float = 1e-3
    tau: float = 1.48225
    tau_sweep: list | None = None
    omega0: list | None = None
    potential: dict = field(default_factory=lambda: {
        "preset": "finite_smooth", "scale": 0.1, "theta_band": 16,
        "coefficients": None,
    })
    J_max: int = 32
    K_theta: int = 16
    M: int = 4
    picard_tol: float = 1e-12
    residual_tol: float = 1e-10
    conjugacy_T: float = 100.0
    conjugacy_samples: int = 160
    lyapunov_T: float = 120.0
    lyapunov_renorm_dt: float = 1.0
    K_check: int = 20
    validation_grid: int = 24
    tau_grid_points: int = 10_000
    norm_grid: int = 12
    seed: int = 20260808
    threads: int | None = None
    run_verify: bool = True

    def __post_init__(self):
        if self.omega0 is None:
            self.omega0 = list(DEFAULT_OMEGA0[: self.n])
        if len(self.omega0) != self.n:
            raise ValueError("omega0 length must equal n")
        if not (0.0 <= self.eps < 1.0):
            raise ValueError("eps must lie in [0, 1)")
        if self.tau_sweep is None and not (1.0 <= self.tau <= 2.0):
            raise ValueError("tau must lie in [1, 2]")
        for name in ("picard_tol", "residual_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if min(self.J_max, self.K_theta, self.M) < 1:
            raise ValueError("truncations and step count must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def as_dict(self) -> dict:
        return asdict(self)


def load_config(path: str | None, overrides: dict) -> RunConfig:
    data = {}
    if path:
        with open(path) as f:
            data = json.load(f)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------------------
# Checkpoint helpers


def _save_complex(path: Path, arr: np.ndarray):
    path.write_bytes(np.ascontiguousarray(arr).astype("<c16").tobytes())


def _load_complex(path: Path, shape) -> np.ndarray:
    return np.frombuffer(path.read_bytes(), dtype="<c16").reshape(shape).astype(complex)


def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)


def save_checkpoint(out: Path, engine: KamEngine, record: dict):
    m_done = engine.state.m  # steps completed
    step_dir = out / "steps" / f"step_{m_done - 1:03d}"
    step_dir.mkdir(parents=True, exist_ok=True)
    st = engine.state
    manifest = {
        "schema": SCHEMA_VERSION,
        "m_next": st.m,
        "record": record,
        "mu_history": [[e, mu.tolist()] for e, mu in st.normal_form.mu_history],
        "pieces": [],
        "chain_step": None,
    }
    for i, piece in enumerate(st.remainder):
        piece.save(step_dir, f"piece_{i}")
        manifest["pieces"].append(f"piece_{i}")
    last = engine.chain.steps[-1]
    _save_complex(step_dir / "transform.bin", last.P_hat)
    manifest["chain_step"] = {
        "shape": list(last.P_hat.shape),
        "n": last.n, "K": last.K, "J": last.J, "eps_m": last.eps_m,
        "P_norm": last.P_norm, "symplectic_defect": last.symplectic_defect,
    }
    _write_json(step_dir / "state.json", manifest)


def load_checkpoints(out: Path):
    """Rebuild (m_next, mu_history, pieces, chain, records) from disk."""
    steps_dir = out / "steps"
    step_dirs = sorted(steps_dir.glob("step_*"))
    if not step_dirs:
        return None
    chain = TransformChain()
    records = []
    manifest = None
    for d in step_dirs:
        with open(d / "state.json") as f:
            manifest = json.load(f)
        info = manifest["chain_step"]
        P_hat = _load_complex(d / "transform.bin", info["shape"])
        chain.steps.append(ChainStep(
            P_hat=P_hat, n=info["n"], K=info["K"], J=info["J"],
            eps_m=info["eps_m"], P_norm=info["P_norm"],
            symplectic_defect=info["symplectic_defect"],
        ))
        records.append(manifest["record"])
    last_dir = step_dirs[-1]
    pieces = [QuadraticForm.load(last_dir, name) for name in manifest["pieces"]]
    mu_history = [(float(e), np.asarray(mu, dtype=float))
                  for e, mu in manifest["mu_history"]]
    return manifest["m_next"], mu_history, pieces, chain, records


# ---------------------------------------------------------------------------
# Pipeline


class PipelineAbort(Exception):
    def __init__(self, code: int, status: str, detail: str):
        self.code, self.status, self.detail = code, status, detail
        super().__init__(detail)


def _build_inputs(config: RunConfig, tau: float):
    freq = FrequencySpec(tuple(config.omega0), tau, config.gamma)
    pot_cfg = dict(config.potential)
    preset = pot_cfg.get("preset", "finite_smooth")
    coefficients = pot_cfg.get("coefficients")
    if coefficients is not None:
        # config format: list of [[k_1, ..., k_n], j, re, im]
        coefficients = {
            (tuple(int(x) for x in row[0]), int(row[1])): complex(row[2], row[3])
            for row in coefficients
        }
    spec, table = make_potential(
        preset, freq, eps=config.eps, N=config.smoothness_N,
        scale=pot_cfg.get("scale", 1.0),
        theta_band=pot_cfg.get("theta_band", config.K_theta),
        coefficients=coefficients,
    )
    return freq, spec, table


def run_pipeline(config: RunConfig, out_dir: str | Path, resume: bool = False) -> dict:
    """Execute the full pipeline; returns the summary dict (also written)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict = {}
    t_start = time.time()
    summary: dict = {
        "schema_version": SCHEMA_VERSION,
        "config": config.as_dict(),
        "status": "incomplete",
    }
    _write_json(out / "config.json", config.as_dict())

    try:
        freq, spec, table = _build_inputs(config, config.tau)
    except (ValueError, InvalidPotentialError) as e:
        raise PipelineAbort(EXIT_CONFIG, "config_error", str(e))

    # 1. validate
    t0 = time.time()
    try:
        report = validate_assumptions(spec, config.K_check, config.validation_grid)
    except InvalidPotentialError as e:
        raise PipelineAbort(EXIT_CONFIG, "config_error", str(e))
    summary["validation"] = report.as_dict()
    timings["validate"] = time.time() - t0
    if not report.all_ok:
        raise PipelineAbort(EXIT_CONFIG, "config_error",
                            f"potential assumptions failed: {report.as_dict()}")

    # 2. analyze
    t0 = time.time()
    pf = fourier_analyze(spec, config.K_theta, config.J_max)
    summary["potential_tail"] = {"tail_norm": pf.tail_norm, "flagged": pf.tail_flagged}
    timings["analyze"] = time.time() - t0

    ws = WeightedSpace(config.smoothness_N, config.J_max)
    ct = coupling_tensor(config.J_max)
    qf0 = assemble_initial_forms(pf, ct, ws)

    # 3. schedule and analytic split
    t0 = time.time()
    if config.eps == 0.0:
        sched = Schedule.degenerate_schedule(config.n, config.smoothness_N, config.gamma)
        dec = None
    else:
        sched = build_schedule(config.eps, config.smoothness_N, config.gamma,
                               config.n, config.M)
        dec = decompose(qf0, list(sched.strip), JacksonKernel(), ws=ws)
        summary["decomposition"] = {
            "piece_norms": dec.piece_norms,
            "residual_norm": dec.residual_norm,
            "bound_constants": dec.bound_constants,
        }
    summary["schedule"] = sched.as_dict()
    timings["schedule_split"] = time.time() - t0

    # 4. screen + measure at entry parameters
    t0 = time.time()
    nf0 = NormalForm(J=config.J_max)
    K0_eff = (int(min(math.ceil(sched.cutoff[0]), config.K_theta))
              if not sched.degenerate else config.K_theta)
    screen = resonance.screen_tau(config.tau, nf0, np.asarray(config.omega0),
                                  K0_eff, float(sched.gamma_steps[0]), config.J_max)
    scan = resonance.measure_scan(nf0, freq, K0_eff, float(sched.gamma_steps[0]),
                                  config.J_max, config.tau_grid_points)
    summary["resonance"] = {
        "screen_passed": screen.passed,
        "worst_query": screen.worst.as_dict(),
        "scan": scan.as_dict(),
    }
    _write_resonance_csv(out, scan)
    timings["screen"] = time.time() - t0
    if not screen.passed:
        raise PipelineAbort(EXIT_RESONANT, "resonant_tau",
                            f"tau={config.tau} rejected: {screen.worst.as_dict()}")

    # 5. reduce
    t0 = time.time()
    if sched.degenerate:
        engine = None
        from .kam import KamResult

        result = KamResult(normal_form=nf0, chain=TransformChain(), history=[],
                           pieces=[], xi=np.zeros(config.J_max), composed_norm=0.0,
                           converged=True)
    else:
        opts = KamOptions(picard_tol=config.picard_tol,
                          residual_tol=config.residual_tol,
                          norm_grid=config.norm_grid)
        restored = load_checkpoints(out) if resume else None
        if restored is not None:
            m_next, mu_history, pieces, chain, records = restored
            nf = NormalForm(J=config.J_max,
                            mu_history=[(e, mu) for e, mu in mu_history])
            engine = KamEngine(pieces, freq, sched, ws, K_theta=config.K_theta,
                               options=opts, normal_form=nf, chain=chain,
                               m_start=m_next, diagnostics=list(records))
        else:
            pieces = seed_pieces(dec, sched.eps0, sched)
            engine = KamEngine(pieces, freq, sched, ws, K_theta=config.K_theta,
                               options=opts)
        try:
            while not engine.finished:
                record = engine.step()
                save_checkpoint(out, engine, record)
        except ResonanceError as e:
            raise PipelineAbort(EXIT_RESONANT, "resonant_tau",
                                f"reduce, step m={engine.state.m}: {e}")
        except StepSizeError as e:
            raise PipelineAbort(EXIT_STEPSIZE, "step_size_abort",
                                f"reduce, step m={engine.state.m}: {e}")
        result = engine.result()
    timings["reduce"] = time.time() - t0

    summary["steps"] = result.history
    summary["normal_form"] = {
        "lambda_final": result.normal_form.lambdas().tolist(),
        "mu_decay_constants": result.normal_form.mu_decay_constants(),
    }

    # nested admissible-set bookkeeping: per-step scans with the running
    # frequencies, chaining the excluded masks across steps
    if not sched.degenerate:
        mask = None
        per_step_scans = []
        nf_m = NormalForm(J=config.J_max)
        hist = result.normal_form.mu_history
        for m in range(sched.M):
            lam_m = nf_m.lambdas()
            K_eff = int(min(math.ceil(sched.cutoff[m]), config.K_theta))
            scan_m = resonance.measure_scan(
                lam_m, freq, K_eff, float(sched.gamma_steps[m]), config.J_max,
                config.tau_grid_points, m=m, prev_mask=mask,
            )
            mask = scan_m.excluded_mask if mask is None else (mask | scan_m.excluded_mask)
            entry = scan_m.as_dict()
            entry["cumulative_admissible_fraction"] = float(1.0 - np.mean(mask))
            per_step_scans.append(entry)
            if m < len(hist):
                nf_m = NormalForm(J=config.J_max, mu_history=hist[: m + 1])
        summary["resonance"]["per_step"] = per_step_scans
    summary["contraction_exponents"] = result.contraction_exponents()
    summary["composed_transform_norm"] = result.composed_norm
    summary["final_weighted_size"] = result.final_weighted_size
    summary["final_remainder_norm"] = result.final_remainder_norm

    mult = multiplier_decay(result.normal_form)
    summary["multiplier"] = mult.as_dict()

    # 6. verify
    if config.run_verify:
        t0 = time.time()
        summary["verify"] = _verify_stage(config, freq, pf, ct, result, ws, out)
        timings["verify"] = time.time() - t0

    summary["status"] = "converged"
    timings["total"] = time.time() - t_start
    summary["timings"] = timings
    _write_json(out / "summary.json", summary)
    return summary


def _verify_stage(config: RunConfig, freq, pf, ct, result, ws, out: Path) -> dict:
    rng = np.random.default_rng(config.seed)
    J = config.J_max
    theta0 = np.zeros(config.n)
    sys_full = TruncatedWaveSystem(pf, ct, freq, config.eps, J, theta0)

    # initial state: smooth profile mapped through the chain at theta0
    decay = np.arange(1, J + 1, dtype=float) ** (-(config.smoothness_N + 1.0))
    z0 = decay * np.exp(1j * rng.uniform(0, 2 * np.pi, J))
    u_red0 = np.concatenate([z0, np.conj(z0)])
    if result.chain.steps:
        mats = result.chain.matrices_at(theta0.reshape(1, -1))[0]
        u_full0 = mats @ u_red0
    else:
        u_full0 = u_red0
    q0 = np.sqrt(2.0) * u_full0[:J].real
    p0 = -np.sqrt(2.0) * u_full0[:J].imag
    y0 = np.concatenate([q0, p0])

    times, states = integrate_full(sys_full, y0, config.conjugacy_T,
                                   record_every=None)
    sub = max(1, len(times) // config.conjugacy_samples)
    lam = result.normal_form.lambdas()
    conj = compare_through_chain(result.chain, times, states, lam, theta0,
                                 freq.omega, ws, subsample=sub)
    tol = 10.0 * max(result.final_remainder_norm, float(getattr(result, "final_weighted_size", 0.0)),
                     _eps_floor(config))
    _write_trajectory_csv(out, conj)

    lyap_T = config.lyapunov_T
    est_T = lyapunov_exponent(sys_full, lyap_T, config.lyapunov_renorm_dt, ws=ws,
                              seed=config.seed)
    est_4T = lyapunov_exponent(sys_full, 4 * lyap_T, config.lyapunov_renorm_dt,
                               ws=ws, seed=config.seed)
    _write_lyapunov_csv(out, est_4T)

    energy_drift = None
    if config.eps == 0.0:
        e0 = sys_full.energy(states[0])
        energies = np.array([sys_full.energy(s) for s in states])
        energy_drift = float(np.max(np.abs(energies - e0)) / max(abs(e0), 1e-300))

    return {
        "conjugacy": {
            "max_rel_deviation": conj.max_rel_deviation,
            "modulus_drift": conj.modulus_drift,
            "tolerance": tol,
            "within_tolerance": bool(conj.max_rel_deviation <= tol),
            "horizon": config.conjugacy_T,
        },
        "lyapunov": {
            "estimate_T": est_T.top_exponent,
            "estimate_4T": est_4T.top_exponent,
            "horizon_T": lyap_T,
            "shrink_factor": (abs(est_T.top_exponent) / max(abs(est_4T.top_exponent), 1e-300)),
        },
        "energy_drift": energy_drift,
        "state_norm_ratio": float(
            _u_sup_norm(states, ws, J) / max(_u_norm_single(states[0], ws, J), 1e-300)
        ),
    }


def _eps_floor(config: RunConfig) -> float:
    if config.eps == 0.0:
        return 0.0
    return float(config.eps ** ((4.0 / 3.0) ** config.M))


def _u_norm_single(state, ws, J):
    u = qp_to_u(state.reshape(1, -1), J)[0]
    w = np.concatenate([ws.metric_weights, ws.metric_weights])
    return float(np.sqrt(np.sum((w * np.abs(u)) ** 2)))


def _u_sup_norm(states, ws, J):
    u = qp_to_u(states, J)
    w = np.concatenate([ws.metric_weights, ws.metric_weights])
    return float(np.max(np.sqrt(np.sum((w[None, :] * np.abs(u)) ** 2, axis=1))))


def _write_resonance_csv(out: Path, scan):
    path = out / "resonance.csv"
    taus = np.linspace(scan.tau_span[0], scan.tau_span[1], scan.grid_points)
    with open(path, "w") as f:
        f.write("tau,excluded\n")
        stride = max(1, scan.grid_points // 2000)
        for t, flag in zip(taus[::stride], scan.excluded_mask[::stride]):
            f.write(f"{t:.6f},{int(flag)}\n")


def _write_trajectory_csv(out: Path, conj):
    path = out / "trajectories"
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "conjugacy.csv", "w") as f:
        f.write("t,rel_deviation\n")
        for t, d in zip(conj.times, conj.deviations):
            f.write(f"{t:.6f},{d:.12e}\n")


def _write_lyapunov_csv(out: Path, est):
    path = out / "trajectories"
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "lyapunov.csv", "w") as f:
        f.write("t,cum_log_growth\n")
        for t, g in zip(est.times, est.growth):
            f.write(f"{t:.6f},{g:.12e}\n")


# ---------------------------------------------------------------------------
# Sweep


def sweep_tau(config: RunConfig, out_dir: str | Path) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not config.tau_sweep or len(config.tau_sweep) != 3:
        raise PipelineAbort(EXIT_CONFIG, "config_error",
                            "tau_sweep must be [lo, hi, count]")
    lo, hi, count = config.tau_sweep
    count = int(count)
    if count < 2:
        raise PipelineAbort(EXIT_CONFIG, "config_error", "sweep needs >= 2 points")
    taus = np.linspace(float(lo), float(hi), count)
    results = []
    statuses = []
    for i, tau in enumerate(taus):
        sub = RunConfig.from_dict({**config.as_dict(), "tau": float(tau),
                                   "tau_sweep": None})
        sub_out = out / f"tau_{i:03d}"
        try:
            s = run_pipeline(sub, sub_out)
            statuses.append("converged")
            results.append({"tau": float(tau), "status": "converged",
                            "max_abs_xi": s["multiplier"]["max_abs"]})
        except PipelineAbort as e:
            statuses.append(e.status)
            results.append({"tau": float(tau), "status": e.status,
                            "detail": e.detail})
    converged = sum(1 for s in statuses if s == "converged")
    frac = converged / count
    gamma = config.gamma
    aggregate = {
        "schema_version": SCHEMA_VERSION,
        "taus": taus.tolist(),
        "results": results,
        "converged_fraction": frac,
        "excluded_fraction": 1.0 - frac,
        "empirical_constant": (1.0 - frac) / gamma ** (1.0 / 3.0),
        "bound_form": "converged_fraction >= 1 - c * gamma^(1/3)",
    }
    _write_json(out / "sweep_summary.json", aggregate)
    return aggregate


# ---------------------------------------------------------------------------
# Entry points


def _cmd_validate(config: RunConfig, out: Path) -> int:
    try:
        freq, spec, _ = _build_inputs(config, config.tau)
        report = validate_assumptions(spec, config.K_check, config.validation_grid)
        nf0 = NormalForm(J=config.J_max)
        gamma0 = config.gamma
        screen = resonance.screen_tau(config.tau, nf0, np.asarray(config.omega0),
                                      config.K_theta, gamma0, config.J_max)
        payload = {"validation": report.as_dict(),
                   "screen_passed": screen.passed,
                   "worst_query": screen.worst.as_dict()}
        _write_json(out / "validate.json", payload)
        print(json.dumps(payload, indent=1, sort_keys=True))
        if not report.all_ok:
            return EXIT_CONFIG
        return EXIT_CONVERGED if screen.passed else EXIT_RESONANT
    except (ValueError, InvalidPotentialError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


def _cmd_report(out: Path) -> int:
    """Re-render CSV outputs from stored checkpoints without recomputation."""
    summary_path = out / "summary.json"
    if not summary_path.exists():
        print("no summary.json under --out", file=sys.stderr)
        return EXIT_CONFIG
    with open(summary_path) as f:
        summary = json.load(f)
    steps = summary.get("steps", [])
    with open(out / "steps_report.csv", "w") as f:
        f.write("m,eps_m,K_eff,divisor_min,homological_residual,P_norm,"
                "symplectic_defect,consistency_defect,weighted_size\n")
        for rec in steps:
            f.write(
                f"{rec['m']},{rec['eps_m']:.6e},{rec['K_eff']},"
                f"{rec['divisor_min']:.6e},{rec['homological_residual']:.6e},"
                f"{rec['P_norm']:.6e},{rec['symplectic_defect']:.6e},"
                f"{rec['consistency_defect']:.6e},{rec['weighted_size']:.6e}\n"
            )
    print(f"re-rendered reports under {out}")
    return EXIT_CONVERGED


def main(argv: list | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="qpwave",
        description="Reducibility engine for the time-quasi-periodic wave operator",
    )
    parser.add_argument("command",
                        choices=["validate", "run", "sweep", "resume", "report"])
    parser.add_argument("--config", default=None, help="JSON config path")
    parser.add_argument("--out", default="qpwave_out", help="output directory")
    parser.add_argument("--tau", type=float, default=None)
    parser.add_argument("--tau-sweep", default=None, metavar="LO:HI:COUNT")
    parser.add_argument("--steps", type=int, default=None, help="override M")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None,
                        help="advisory thread cap (wall clock only)")
    args = parser.parse_args(argv)

    overrides: dict = {"tau": args.tau, "seed": args.seed, "threads": args.threads}
    if args.steps is not None:
        overrides["M"] = args.steps
    if args.tau_sweep:
        lo, hi, count = args.tau_sweep.split(":")
        overrides["tau_sweep"] = [float(lo), float(hi), int(count)]

    try:
        config = load_config(args.config, overrides)
    except (ValueError, OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if config.threads:
        try:
            import threadpoolctl

            threadpoolctl.threadpool_limits(config.threads)
        except ImportError:
            pass

    out = Path(args.out)
    try:
        if args.command == "validate":
            return _cmd_validate(config, out)
        if args.command == "report":
            return _cmd_report(out)
        if args.command == "sweep":
            agg = sweep_tau(config, out)
            print(json.dumps({k: agg[k] for k in
                              ("converged_fraction", "excluded_fraction",
                               "empirical_constant")}, indent=1))
            return EXIT_CONVERGED
        summary = run_pipeline(config, out, resume=(args.command == "resume"))
        print(f"status: {summary['status']}; summary at {out / 'summary.json'}")
        return EXIT_CONVERGED
    except PipelineAbort as e:
        payload = {"status": e.status, "detail": e.detail,
                   "config": config.as_dict()}
        _write_json(out / "summary.json", payload)
        print(f"{e.status}: {e.detail}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
