import csv
import json
import logging
import math
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy
import torch

import zonalnls
from zonalnls.blowup import (
    HamiltonianQuadratic,
    blowup_time,
    classify,
    condition_holds,
    parameter_grid,
    resonant_direction,
)
from zonalnls.config import ExperimentConfig, initial_data
from zonalnls.estimates import Window, estimate_scan
from zonalnls.evolution import SimConfig, Status, Trajectory, simulate
from zonalnls.field import DyadicBand, ZonalSpectrum, random_localized, sobolev_norm
from zonalnls.resonance import count_representations, counting_scaling_holds, counting_scan
from zonalnls.selftest import run_selftest as run_suites
from zonalnls.sweep import parallel_map

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    experiment: str
    output_dir: Path
    checks: Dict[str, bool] = field(default_factory=dict)
    files: List[Path] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def versions() -> Dict[str, str]:
    return {
        "zonalnls": zonalnls.__version__,
        "torch": torch.__version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_manifest(path: Path, config: ExperimentConfig, started: str, finished: str) -> Path:
    manifest = {
        "experiment": config.experiment,
        "config_echo": config.echo(),
        "seed": config.seed,
        "run_id": config.run_id(),
        "versions": versions(),
        "started": started,
        "finished": finished,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    with open(path, "w", newline="") as f:
        csv_writer = csv.writer(f)
        csv_writer.writerow(header)
        for row in rows:
            csv_writer.writerow(row)
    return path


def _relative_drift(trajectory: Trajectory, name: str) -> float:
    values = trajectory.series(name)
    return trajectory.drift(name) / max(1.0, abs(float(values[0])))


def _h1_growth(trajectory: Trajectory) -> float:
    h1 = trajectory.series("h1")
    return float(h1.max() / h1[0]) if float(h1[0]) > 0 else 1.0


def _debug_record(t, diag):
    logger.debug(f"t={t:.6g} mass={diag.mass:.15g} energy={diag.energy:.15g} sup={diag.sup:.6g}")


def run_simulate(config: ExperimentConfig, out: Path, result: RunResult):
    spec = config.equation.build()
    u0 = initial_data(config)
    trajectory = simulate(u0, spec, config.discretization.sim_config(), record=_debug_record)

    result.files.append(trajectory.to_csv(out / "trajectory.csv"))
    (out / "final_spectrum.json").write_text(trajectory.final.to_json())
    result.files.append(out / "final_spectrum.json")
    result.files.append(
        write_json(
            out / "summary.json",
            {"status": trajectory.status.value, "blowup_time": trajectory.blowup_time},
        )
    )
    result.checks["finite"] = all(
        math.isfinite(v) for r in trajectory.records for v in (r.mass, r.energy, r.h1)
    )
    logger.info(f"Simulation ended with status {trajectory.status.value} at t={trajectory.times[-1]:.6g}")


def run_conservation(config: ExperimentConfig, out: Path, result: RunResult):
    spec = config.equation.build()
    u0 = initial_data(config)
    trajectory = simulate(u0, spec, config.discretization.sim_config(), record=_debug_record)
    result.files.append(trajectory.to_csv(out / "trajectory.csv"))

    drifts = {
        "mass_drift": _relative_drift(trajectory, "mass"),
        "energy_drift": _relative_drift(trajectory, "energy"),
        "re_integral_drift": trajectory.drift("re_integral"),
        "h1_growth": _h1_growth(trajectory),
    }
    for name, value in drifts.items():
        logger.info(f"{name}: {value:.3e}")
        bound = getattr(config.checks, name)
        if bound is not None:
            result.checks[name] = value < bound
    result.checks["completed"] = trajectory.status is Status.COMPLETED
    result.files.append(
        write_json(out / "conservation.json", {**drifts, "status": trajectory.status.value})
    )


def run_convergence(config: ExperimentConfig, out: Path, result: RunResult):
    spec = config.equation.build()
    u0 = initial_data(config)
    disc = config.discretization
    steps = [disc.dt / 2**k for k in range(disc.refinements + 1)]

    def drift_at(dt):
        sim = SimConfig(dt=dt, T=disc.T, P=disc.P, blowup_threshold=disc.blowup_threshold, record_stride=1)
        trajectory = simulate(u0, spec, sim)
        return trajectory.drift("energy"), trajectory.drift("mass")

    drifts = parallel_map(drift_at, steps, threads=config.threads, desc="convergence")
    rows, ratios = [], []
    for k, (dt, (energy, mass)) in enumerate(zip(steps, drifts)):
        ratio = drifts[k - 1][0] / energy if k > 0 and energy > 0 else None
        if ratio is not None:
            ratios.append(ratio)
        rows.append([repr(dt), repr(mass), repr(energy), "" if ratio is None else repr(ratio)])
        logger.info(f"dt={dt:.3g}: energy drift {energy:.3e}" + ("" if ratio is None else f", ratio {ratio:.3f}"))
    result.files.append(write_csv(out / "convergence.csv", ["dt", "mass_drift", "energy_drift", "ratio"], rows))

    lo, hi = config.checks.order_ratio
    result.checks["order_two"] = bool(ratios) and all(lo <= r <= hi for r in ratios)


def _blowup_trial(a: complex, b: complex, dcfg) -> dict:
    verdict = classify(a, b)
    entry = {
        "a": [a.real, a.imag],
        "b": [b.real, b.imag],
        "condition_holds": verdict.condition_holds,
        "witness": verdict.witness(),
        "simulated_t_star": None,
        "closed_form_t_star": None,
        "rel_gap": None,
    }
    data = verdict.blowup_data(dcfg.y0)
    if data is None:
        return entry
    omega, y0 = data
    t_star = blowup_time(y0, omega, a, b)
    if t_star is None:
        return entry

    u0 = ZonalSpectrum.constant(omega * y0, 2)
    sim = SimConfig(
        dt=t_star / dcfg.steps_to_blowup,
        T=1.5 * t_star,
        P=2,
        blowup_threshold=1e3 * abs(y0),
        record_stride=dcfg.steps_to_blowup,
    )
    trajectory = simulate(u0, HamiltonianQuadratic(a, b).equation(), sim)
    simulated = trajectory.blowup_time if trajectory.status is Status.BLOWUP else None
    entry["closed_form_t_star"] = t_star
    entry["simulated_t_star"] = simulated
    entry["rel_gap"] = None if simulated is None else abs(simulated - t_star) / t_star
    return entry


def _small_data_trial(a: complex, b: complex, dcfg, seed: int) -> dict:
    band = DyadicBand(2)
    u0 = random_localized(band, seed, dcfg.small_P)
    u0 = u0 * (dcfg.small_h1 / sobolev_norm(u0, 1.0))
    sim = SimConfig(dt=dcfg.small_dt, T=dcfg.small_T, P=dcfg.small_P, blowup_threshold=1e6, record_stride=10)
    trajectory = simulate(u0, HamiltonianQuadratic(a, b).equation(), sim)
    return {
        "a": [a.real, a.imag],
        "b": [b.real, b.imag],
        "condition_holds": True,
        "h1_growth": _h1_growth(trajectory),
        "status": trajectory.status.value,
    }


def run_blowup_dichotomy(config: ExperimentConfig, out: Path, result: RunResult):
    dcfg = config.dichotomy
    pairs = parameter_grid(dcfg.magnitudes, dcfg.ratios, dcfg.angles)

    disagreements = []
    holding, failing = [], []
    for a, b in pairs:
        holds = condition_holds(a, b)
        simple_zero = resonant_direction(a, b) is not None
        if holds == simple_zero:
            disagreements.append([[a.real, a.imag], [b.real, b.imag]])
        (holding if holds else failing).append((a, b))
    logger.info(f"Dichotomy grid: {len(pairs)} pairs, {len(disagreements)} disagreements")

    blowups = parallel_map(
        lambda ab: _blowup_trial(*ab, dcfg),
        failing[: dcfg.blowup_pairs],
        threads=config.threads,
        desc="blow-up trials",
    )
    small = parallel_map(
        lambda ab: _small_data_trial(*ab, dcfg, config.seed),
        holding[: dcfg.holding_pairs],
        threads=config.threads,
        desc="small-data trials",
    )

    gaps = [e["rel_gap"] for e in blowups]
    growth = [e["h1_growth"] for e in small]
    result.checks["dichotomy"] = not disagreements
    result.checks["blowup_time"] = bool(gaps) and all(g is not None and g < dcfg.rel_gap for g in gaps)
    result.checks["small_data"] = all(g < dcfg.h1_growth for g in growth)

    result.files.append(
        write_json(
            out / "dichotomy.json",
            {
                "pairs": len(pairs),
                "disagreements": disagreements,
                "blowup": blowups,
                "small_data": small,
            },
        )
    )


def run_estimate_scan(config: ExperimentConfig, out: Path, result: RunResult):
    scan = config.scan
    samples, fit = estimate_scan(
        scan.kind,
        scan.alpha,
        scan.schedule,
        draws=scan.draws,
        seed=config.seed,
        window=Window(config.window_width),
        threads=config.threads,
        pattern=scan.pattern,
    )
    rows = []
    for sample in samples:
        bands = [repr(n) for n in sample.bands] + [""] * (4 - len(sample.bands))
        rows.append(
            [
                sample.kind,
                repr(scan.alpha),
                *bands,
                repr(sample.m),
                "" if sample.tau_star is None else repr(sample.tau_star),
                repr(sample.value),
                "" if sample.seed is None else sample.seed,
            ]
        )
    header = ["kind", "alpha", "N1", "N2", "N3", "N4", "m", "tau_star", "value", "seed"]
    result.files.append(write_csv(out / "scan.csv", header, rows))
    result.files.append(write_json(out / "fit.json", fit.to_dict()))
    result.checks["slope"] = fit.slope <= scan.slope_bound


def run_counting_scan(config: ExperimentConfig, out: Path, result: RunResult):
    counting = config.counting
    records = counting_scan(
        counting.scales,
        counting.sigmas,
        counting.exclude_degenerate,
        threads=config.threads,
    )
    rows = [[r.N, r.sigma, r.M_star, r.max_count, r.excluded_degenerate] for r in records]
    header = ["N", "sigma", "M_star", "max_count", "excluded_degenerate"]
    result.files.append(write_csv(out / "counting.csv", header, rows))
    if counting.exclude_degenerate and -1 in counting.sigmas:
        for N in counting.scales:
            logger.info(f"Degenerate line sigma=-1, M=0 at N={N}: {count_representations(N, -1, 0)} solutions")
    result.checks["scaling"] = counting_scaling_holds(records, counting.bound)


def run_selftest(config: ExperimentConfig, out: Path, result: RunResult):
    report = run_suites(tensor_cache=config.selftest.tensor_cache, threads=config.threads)
    result.files.append(write_json(out / "selftest.json", report.to_dict()))
    for suite in report.suites:
        result.checks[suite.name] = suite.passed


RUNNERS: Dict[str, Callable[[ExperimentConfig, Path, RunResult], None]] = {
    "selftest": run_selftest,
    "simulate": run_simulate,
    "conservation": run_conservation,
    "convergence": run_convergence,
    "blowup-dichotomy": run_blowup_dichotomy,
    "estimate-scan": run_estimate_scan,
    "counting-scan": run_counting_scan,
}


def run_experiment(config: ExperimentConfig, out: Optional[Path] = None) -> RunResult:
    out = config.output_dir() if out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)
    logger.info(f"Running {config.experiment} (seed {config.seed}), output path: {out}")

    result = RunResult(config.experiment, out)
    started = _now()
    RUNNERS[config.experiment](config, out, result)
    result.files.append(write_manifest(out / "manifest.json", config, started, _now()))

    for name, ok in result.checks.items():
        logger.info(f"check {name}: {'pass' if ok else 'FAIL'}")
    return result
