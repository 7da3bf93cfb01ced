"""End-to-end runs: simulate (or load) stacks, analyse them, report, emit files."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import jsonschema

from . import analysis
from .analysis import CorrelationProfile, DarkCalibration, DoubleGaussianFit, JdpMatrix
from .config import (ConfigError, ExperimentConfig, config_from_dict, config_to_dict)
from .model import (EntanglementReport, conditional_momentum_width, conditional_position_width,
                    gamma_product, mode_count, model_from_pump, asymmetry_factor)
from .simulator import SimulatedSource, StackMode
from .stackio import FileSource

RESULTS_SCHEMA_VERSION = 1
PASS_TAGS = {"dark": 0, "near": 1, "far": 2}


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def pass_seed(seed: int, tag: str) -> int:
    """Independent 64-bit seed for one acquisition pass."""
    return int(np.random.SeedSequence([seed, PASS_TAGS[tag]]).generate_state(1, np.uint64)[0])


@dataclass
class AxisResult:
    """Fit and converted width for one (pass, axis) profile."""
    width_px: float
    width: float
    unit: str
    fit: DoubleGaussianFit
    profile: Optional[CorrelationProfile] = field(default=None, compare=False, repr=False)
    jdp: Optional[JdpMatrix] = field(default=None, compare=False, repr=False)


@dataclass
class Theory:
    sigma_minus: float
    delta_x_x: float
    delta_x_y: float
    delta_p_x: float
    delta_p_y: float
    gamma_x: float
    gamma_y: float
    modes_x: float
    modes_y: float


@dataclass
class RunReport:
    config: ExperimentConfig
    near_x: AxisResult
    near_y: AxisResult
    far_x: AxisResult
    far_y: AxisResult
    entanglement: EntanglementReport
    theory: Theory

    def axes(self) -> Dict[str, AxisResult]:
        return {"near_x": self.near_x, "near_y": self.near_y,
                "far_x": self.far_x, "far_y": self.far_y}


@dataclass
class SweepReport:
    config: ExperimentConfig
    betas: List[float]
    runs: List[RunReport]

    def trend_rows(self) -> List[dict]:
        rows = []
        for beta, run in zip(self.betas, self.runs):
            e = run.entanglement
            rows.append({"beta": beta, "gamma_x": e.gamma_x, "gamma_y": e.gamma_y,
                         "modes_x": e.modes_x, "modes_y": e.modes_y,
                         "entangled_x": e.entangled_x, "entangled_y": e.entangled_y,
                         "far_y_width_px": run.far_y.width_px,
                         "theory_gamma_x": run.theory.gamma_x,
                         "theory_gamma_y": run.theory.gamma_y})
        return rows


def theory_for(config: ExperimentConfig) -> Theory:
    model = model_from_pump(config.pump.beam(), config.crystal_spec())
    sm = model.sigma_minus
    return Theory(
        sigma_minus=sm,
        delta_x_x=float(conditional_position_width(model.sigma_plus_x, sm)),
        delta_x_y=float(conditional_position_width(model.sigma_plus_y, sm)),
        delta_p_x=float(conditional_momentum_width(model.sigma_plus_x, sm)),
        delta_p_y=float(conditional_momentum_width(model.sigma_plus_y, sm)),
        gamma_x=float(gamma_product(model.sigma_plus_x, sm)),
        gamma_y=float(gamma_product(model.sigma_plus_y, sm)),
        modes_x=float(mode_count(config.pump.waist_x, sm)),
        modes_y=float(mode_count(config.pump.waist_y, sm)),
    )


def sources_for(config: ExperimentConfig) -> Dict[str, SimulatedSource]:
    model = model_from_pump(config.pump.beam(), config.crystal_spec())
    cam = config.camera
    return {
        "dark": SimulatedSource(cam, pass_seed(config.seed, "dark")),
        "near": SimulatedSource(cam, pass_seed(config.seed, "near"), model, config.near, config.source),
        "far": SimulatedSource(cam, pass_seed(config.seed, "far"), model, config.far, config.source),
    }


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage attached
        raise PipelineError(name, exc) from exc


def _axis_result(jdp: JdpMatrix, coordinate: str, convert, unit: str) -> AxisResult:
    prof = analysis.extract_profile(jdp, coordinate)
    fit = analysis.fit_double_gaussian(prof)
    px = analysis.resultant_width(fit)
    return AxisResult(width_px=px, width=convert(px), unit=unit, fit=fit, profile=prof, jdp=jdp)


def calibrate(config: ExperimentConfig, workers: int = 1, dark_path=None) -> DarkCalibration:
    if dark_path is not None:
        src = FileSource(dark_path)
        return analysis.calibrate_dark_source(src, src.n_frames, workers=workers)
    return analysis.calibrate_dark_source(sources_for(config)["dark"], config.frames.dark,
                                          workers=workers)


def run_pipeline(config: ExperimentConfig, workers: int = 1, stacks: Optional[Dict[str, str]] = None,
                 dark: Optional[DarkCalibration] = None) -> RunReport:
    """Dark calibration, near- and far-field passes, fits and entanglement report.

    ``stacks`` may map ``dark``/``near``/``far`` to BPFS files to analyse
    recorded data instead of simulating it; ``dark`` short-circuits the
    calibration with one computed earlier.
    """
    if not isinstance(config, ExperimentConfig):
        raise ConfigError("run_pipeline needs an ExperimentConfig")
    stacks = stacks or {}
    sims = sources_for(config)
    srcs, counts = {}, {}
    for tag in ("near", "far"):
        if tag in stacks:
            srcs[tag] = _stage(f"load {tag}", FileSource, stacks[tag])
            counts[tag] = srcs[tag].n_frames
            want = StackMode.NEAR if tag == "near" else StackMode.FAR
            if srcs[tag].mode != want:
                raise PipelineError(f"load {tag}", ValueError(f"stack mode is {srcs[tag].mode.name}"))
        else:
            srcs[tag] = sims[tag]
            counts[tag] = getattr(config.frames, tag)
    if dark is None:
        dark = _stage("dark calibration", calibrate, config, workers, stacks.get("dark"))

    cam = config.camera
    near = _stage("near-field accumulation", analysis.accumulate_source, srcs["near"], dark,
                  counts["near"], workers=workers)
    far = _stage("far-field accumulation", analysis.accumulate_source, srcs["far"], dark,
                 counts["far"], workers=workers)

    def pos(px):
        return analysis.to_position_width(px, cam.pixel_pitch, config.near.magnification)

    def mom(px):
        return analysis.to_momentum_width(px, cam.pixel_pitch, config.far.focal_length,
                                          config.far.spdc_wavelength)

    res = {}
    for axis in ("x", "y"):
        res[f"near_{axis}"] = _stage(f"near-field {axis} fit", _axis_result, near[axis],
                                     "difference", pos, "m")
        res[f"far_{axis}"] = _stage(f"far-field {axis} fit", _axis_result, far[axis],
                                    "sum", mom, "hbar/m")
    ent = _stage("report", analysis.build_report, res["near_x"].width, res["near_y"].width,
                 res["far_x"].width, res["far_y"].width, config.pump.beam())
    return RunReport(config=config, entanglement=ent, theory=theory_for(config), **res)


def sweep_beta(config: ExperimentConfig, beta_values: Sequence[float], workers: int = 1) -> SweepReport:
    """Rerun the pipeline with ``waist_y = beta * waist_x`` for each beta.

    The runs share the seed, so they differ only through the pump shape.
    """
    betas = [float(b) for b in beta_values]
    if not betas:
        raise ConfigError("no beta values given")
    configs = [config.with_beta(b) for b in betas]
    dark = _stage("dark calibration", calibrate, config, workers)
    runs = [run_pipeline(c, workers=workers, dark=dark) for c in configs]
    return SweepReport(config=config, betas=betas, runs=runs)


# ---------------------------------------------------------------- documents

def _um(v):
    return f"{v * 1e6:.3f} µm"


def _qty(value, unit):
    d = {"value": value, "unit": unit}
    if unit == "m":
        d["display"] = _um(value)
    return d


def _num(v):
    return None if isinstance(v, float) and math.isinf(v) else v


def _fit_dict(f: DoubleGaussianFit) -> dict:
    return {"amp_signal": f.amp_signal, "width_signal_px": f.width_signal_px,
            "amp_noise": f.amp_noise, "width_noise_px": _num(f.width_noise_px),
            "baseline": f.baseline, "center_px": f.center_px,
            "residual_norm": f.residual_norm, "converged": bool(f.converged),
            "iterations": int(f.iterations)}


def _fit_from(d: dict) -> DoubleGaussianFit:
    d = dict(d)
    if d["width_noise_px"] is None:
        d["width_noise_px"] = math.inf
    return DoubleGaussianFit(**d)


def report_to_dict(r: RunReport) -> dict:
    e, t = r.entanglement, r.theory
    return {
        "schema_version": RESULTS_SCHEMA_VERSION,
        "kind": "run",
        "config": config_to_dict(r.config),
        "measurements": {
            name: {"width_px": a.width_px, "width": _qty(a.width, a.unit), "fit": _fit_dict(a.fit)}
            for name, a in r.axes().items()
        },
        "entanglement": {
            "beta": e.beta,
            "gamma_x": _qty(e.gamma_x, "hbar"), "gamma_y": _qty(e.gamma_y, "hbar"),
            "modes_x": e.modes_x, "modes_y": e.modes_y,
            "entangled_x": e.entangled_x, "entangled_y": e.entangled_y,
        },
        "theory": {
            "sigma_minus": _qty(t.sigma_minus, "m"),
            "delta_x_x": _qty(t.delta_x_x, "m"), "delta_x_y": _qty(t.delta_x_y, "m"),
            "delta_p_x": _qty(t.delta_p_x, "hbar/m"), "delta_p_y": _qty(t.delta_p_y, "hbar/m"),
            "gamma_x": _qty(t.gamma_x, "hbar"), "gamma_y": _qty(t.gamma_y, "hbar"),
            "modes_x": t.modes_x, "modes_y": t.modes_y,
        },
    }


def report_from_dict(d: dict) -> RunReport:
    validate_results(d)
    m, e, t = d["measurements"], d["entanglement"], d["theory"]
    axes = {name: AxisResult(width_px=v["width_px"], width=v["width"]["value"],
                             unit=v["width"]["unit"], fit=_fit_from(v["fit"]))
            for name, v in m.items()}
    ent = EntanglementReport(beta=e["beta"], gamma_x=e["gamma_x"]["value"],
                             gamma_y=e["gamma_y"]["value"], modes_x=e["modes_x"],
                             modes_y=e["modes_y"], entangled_x=e["entangled_x"],
                             entangled_y=e["entangled_y"])
    th = Theory(**{k: (v["value"] if isinstance(v, dict) else v) for k, v in t.items()})
    return RunReport(config=config_from_dict(d["config"]), entanglement=ent, theory=th, **axes)


def sweep_to_dict(s: SweepReport) -> dict:
    return {"schema_version": RESULTS_SCHEMA_VERSION, "kind": "sweep",
            "config": config_to_dict(s.config), "betas": s.betas,
            "runs": [report_to_dict(r) for r in s.runs]}


def sweep_from_dict(d: dict) -> SweepReport:
    validate_results(d)
    return SweepReport(config=config_from_dict(d["config"]), betas=list(d["betas"]),
                       runs=[report_from_dict(r) for r in d["runs"]])


def _q(unit):
    return {"type": "object", "required": ["value", "unit"],
            "properties": {"value": {"type": "number"}, "unit": {"const": unit},
                           "display": {"type": "string"}},
            "additionalProperties": False}


_NUM = {"type": "number"}
_FIT = {"type": "object",
        "required": ["amp_signal", "width_signal_px", "amp_noise", "width_noise_px",
                     "baseline", "center_px", "residual_norm", "converged", "iterations"],
        "properties": {"amp_signal": _NUM, "width_signal_px": {"type": "number", "exclusiveMinimum": 0},
                       "amp_noise": _NUM,
                       # null encodes an absent (infinitely broad) second component
                       "width_noise_px": {"type": ["number", "null"], "exclusiveMinimum": 0},
                       "baseline": _NUM, "center_px": _NUM, "residual_norm": _NUM,
                       "converged": {"type": "boolean"}, "iterations": {"type": "integer"}},
        "additionalProperties": False}
_AXIS = lambda unit: {"type": "object", "required": ["width_px", "width", "fit"],  # noqa: E731
                      "properties": {"width_px": {"type": "number", "exclusiveMinimum": 0},
                                     "width": _q(unit), "fit": _FIT},
                      "additionalProperties": False}

RUN_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "kind", "config", "measurements", "entanglement", "theory"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": RESULTS_SCHEMA_VERSION},
        "kind": {"const": "run"},
        "config": {"type": "object"},
        "measurements": {
            "type": "object", "additionalProperties": False,
            "required": ["near_x", "near_y", "far_x", "far_y"],
            "properties": {"near_x": _AXIS("m"), "near_y": _AXIS("m"),
                           "far_x": _AXIS("hbar/m"), "far_y": _AXIS("hbar/m")},
        },
        "entanglement": {
            "type": "object", "additionalProperties": False,
            "required": ["beta", "gamma_x", "gamma_y", "modes_x", "modes_y",
                         "entangled_x", "entangled_y"],
            "properties": {"beta": {"type": "number"}, "gamma_x": _q("hbar"), "gamma_y": _q("hbar"),
                           "modes_x": {"type": "number"}, "modes_y": {"type": "number"},
                           "entangled_x": {"type": "boolean"}, "entangled_y": {"type": "boolean"}},
        },
        "theory": {
            "type": "object", "additionalProperties": False,
            "required": ["sigma_minus", "delta_x_x", "delta_x_y", "delta_p_x", "delta_p_y",
                         "gamma_x", "gamma_y", "modes_x", "modes_y"],
            "properties": {"sigma_minus": _q("m"), "delta_x_x": _q("m"), "delta_x_y": _q("m"),
                           "delta_p_x": _q("hbar/m"), "delta_p_y": _q("hbar/m"),
                           "gamma_x": _q("hbar"), "gamma_y": _q("hbar"),
                           "modes_x": {"type": "number"}, "modes_y": {"type": "number"}},
        },
    },
}

SWEEP_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "kind", "config", "betas", "runs"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": RESULTS_SCHEMA_VERSION},
        "kind": {"const": "sweep"},
        "config": {"type": "object"},
        "betas": {"type": "array", "items": {"type": "number"}},
        "runs": {"type": "array", "items": RUN_SCHEMA},
    },
}


def validate_results(doc: dict) -> None:
    schema = SWEEP_SCHEMA if doc.get("kind") == "sweep" else RUN_SCHEMA
    jsonschema.validate(doc, schema)


def dumps(doc: dict) -> str:
    validate_results(doc)
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def load_results(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return sweep_from_dict(doc) if doc.get("kind") == "sweep" else report_from_dict(doc)


# ---------------------------------------------------------------- files

def _write_profile_csv(path, axis: AxisResult):
    prof, fit = axis.profile, axis.fit
    a1, s1, a2, s2 = fit.amp_signal, fit.width_signal_px, fit.amp_noise, fit.width_noise_px
    dx = prof.offsets - fit.center_px
    model = a1 * np.exp(-0.5 * (dx / s1) ** 2) + fit.baseline
    if not math.isinf(s2):
        model = model + a2 * np.exp(-0.5 * (dx / s2) ** 2)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["offset", "jdp_value", "fit_value"])
        for o, v, f in zip(prof.offsets, prof.values, model):
            w.writerow([int(o), repr(float(v)), repr(float(f))])


def _write_run_files(run: RunReport, directory: str, plots: bool):
    os.makedirs(os.path.join(directory, "profiles"), exist_ok=True)
    os.makedirs(os.path.join(directory, "jdp"), exist_ok=True)
    for name, axis in run.axes().items():
        if axis.profile is not None:
            _write_profile_csv(os.path.join(directory, "profiles", f"{name}.csv"), axis)
        if axis.jdp is not None:
            np.savetxt(os.path.join(directory, "jdp", f"{name}.csv"), axis.jdp.resolved(),
                       delimiter=",", fmt="%.10g")
            j = axis.jdp
            np.savez(os.path.join(directory, "jdp", f"{name}_accumulators.npz"),
                     same_frame_sum=j.same_frame_sum, cross_frame_sum=j.cross_frame_sum,
                     marginal_sum=j.marginal_sum, pixel_self_sum=j.pixel_self_sum,
                     pixel_cross_sum=j.pixel_cross_sum,
                     counts=np.array([j.frames_processed, j.pairs_processed]))
    if plots:
        from .plotting import plot_run
        plot_run(run, directory)


def emit_outputs(result, directory, plots: bool = False) -> List[str]:
    """Write the results document, CSV tables and optional SVG plots.

    Returns the results-document path first, then the other files written.
    """
    os.makedirs(directory, exist_ok=True)
    results = os.path.join(directory, "results.json")
    if isinstance(result, SweepReport):
        doc = sweep_to_dict(result)
        with open(os.path.join(directory, "trend.csv"), "w", newline="") as fh:
            rows = result.trend_rows()
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for row in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        for beta, run in zip(result.betas, result.runs):
            _write_run_files(run, os.path.join(directory, f"beta_{beta:.4f}"), plots)
        if plots:
            from .plotting import plot_sweep
            plot_sweep(result, directory)
    else:
        doc = report_to_dict(result)
        _write_run_files(result, directory, plots)
    text = dumps(doc)
    with open(results, "w", encoding="utf-8") as fh:
        fh.write(text)
    written = [results]
    for root, _, files in sorted(os.walk(directory)):
        written += sorted(os.path.join(root, f) for f in files
                          if os.path.join(root, f) != results)
    return written


__all__ = ["RunReport", "SweepReport", "AxisResult", "Theory", "PipelineError", "run_pipeline",
           "sweep_beta", "emit_outputs", "load_results", "report_to_dict", "report_from_dict",
           "theory_for", "pass_seed", "asymmetry_factor"]
