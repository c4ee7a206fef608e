"""
File formats: dataset / measurement CSV, hyperparameter records, model
documents, tracking traces and evaluation reports, and the INI-style
scenario configuration.
"""

from __future__ import annotations

import configparser
import csv
import json
from dataclasses import fields
from pathlib import Path

import numpy as np

from .campaign import CampaignConfig, EvaluationReport, MeasurementSet, TrackingConfig
from .gp import Dataset, GPPosterior, fit_posterior
from .kernels import INPUT_NAMES, HyperParameters, KernelSpec
from .motor_sim import PlantParams, TrackingTrace
from .sparse import SRPredictor
from .trajectory import MotionConstraints, TrajectoryProfile, sample_trajectory

__all__ = [
    "ParseError",
    "TARGET_COLUMN",
    "MODEL_FORMAT",
    "write_dataset_csv",
    "read_dataset_csv",
    "write_measurement_csv",
    "format_hyperparameters",
    "parse_hyperparameters",
    "save_model",
    "load_model",
    "write_trace_csv",
    "write_profile_csv",
    "write_reports_csv",
    "read_reports_csv",
    "load_config",
]

TARGET_COLUMN = "fz_total_N"
MODEL_FORMAT = "maglev-gp-model"
MODEL_VERSION = 1


class ParseError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.path = path
        self.line = line


def _fmt(x: float) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------- CSV


def write_dataset_csv(path, data: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(INPUT_NAMES) + [TARGET_COLUMN])
        for row, y in zip(data.inputs, data.targets):
            w.writerow([_fmt(v) for v in row] + [_fmt(y)])


def write_measurement_csv(path, ms: MeasurementSet) -> None:
    """Same schema as a dataset CSV, so each run file is directly trainable."""
    write_dataset_csv(path, ms.to_dataset())


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", path, 1)
        cols = [h.strip() for h in header]
        missing = [c for c in list(INPUT_NAMES) + [TARGET_COLUMN] if c not in cols]
        if missing:
            raise ParseError(f"missing columns {missing}", path, 1)
        idx = [cols.index(c) for c in INPUT_NAMES]
        it = cols.index(TARGET_COLUMN)
        X, y = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                raise ParseError(f"expected {len(cols)} fields, got {len(row)}", path, lineno)
            try:
                vals = [float(row[i]) for i in idx]
                target = float(row[it])
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno)
            if not (np.all(np.isfinite(vals)) and np.isfinite(target)):
                raise ParseError("non-finite value", path, lineno)
            X.append(vals)
            y.append(target)
    if not y:
        raise ParseError("no data rows", path)
    return Dataset(np.array(X), np.array(y))


def write_trace_csv(path, trace: TrackingTrace) -> None:
    axes = ("x", "y", "z", "chi", "psi", "zeta")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["time_s"]
            + [f"ref_{a}" for a in axes]
            + [f"meas_{a}" for a in axes]
            + ["z_error_m", "fz_total_N", "fz_ff_N", "constant_velocity"]
        )
        for k in range(trace.t.size):
            w.writerow(
                [_fmt(trace.t[k])]
                + [_fmt(v) for v in trace.ref[k]]
                + [_fmt(v) for v in trace.meas[k]]
                + [_fmt(trace.z_error[k]), _fmt(trace.fz_total[k]), _fmt(trace.fz_ff[k]), int(trace.constant_velocity[k])]
            )


def write_profile_csv(path, profile: TrajectoryProfile, rate_hz: float) -> None:
    """Sample a 1-D profile at ``rate_hz`` including both end points."""
    if not rate_hz > 0:
        raise ValueError("sample rate must be positive")
    n = int(np.floor(profile.duration * rate_hz + 1e-9)) + 1
    t = np.arange(n) / rate_hz
    if t[-1] < profile.duration:
        t = np.append(t, profile.duration)
    cols = sample_trajectory(profile, t)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "pos_m", "vel_m_s", "acc_m_s2", "jerk_m_s3", "snap_m_s4"])
        for k in range(t.size):
            w.writerow([_fmt(t[k])] + [_fmt(c[k]) for c in cols])


_REPORT_KEYS = ("bfr", "l2", "linf", "cv_l2", "cv_linf", "n", "n_cv")


def write_reports_csv(path, reports: dict) -> None:
    """``reports`` maps a label (e.g. ``no_compensation``) to an :class:`EvaluationReport`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("label",) + _REPORT_KEYS)
        for label, rep in reports.items():
            d = rep.as_dict()
            w.writerow([label] + [_fmt(d[k]) if k not in ("n", "n_cv") else int(d[k]) for k in _REPORT_KEYS])


def read_reports_csv(path) -> dict:
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                out[row["label"]] = EvaluationReport(
                    *(float(row[k]) for k in _REPORT_KEYS[:5]), int(row["n"]), int(row["n_cv"])
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ParseError(f"bad report row ({exc})", path, lineno)
    return out


# ---------------------------------------------------------------- hyperparameters


def format_hyperparameters(hp: HyperParameters, spec: KernelSpec | None = None) -> str:
    """``name = value`` lines in canonical order, natural units."""
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in hp.to_record(spec).items())


def parse_hyperparameters(text: str) -> HyperParameters:
    rec = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'name = value', got {line!r}", line=lineno)
        k, v = (s.strip() for s in line.split("=", 1))
        try:
            rec[k] = float(v)
        except ValueError:
            raise ParseError(f"bad value for {k}: {v!r}", line=lineno)
    try:
        return HyperParameters.from_record(rec)
    except KeyError as exc:
        raise ParseError(str(exc))


# ------------------------------------------------------------------------ models


def save_model(path, model, report=None, extra=None) -> None:
    """Serialise a :class:`GPPosterior` or :class:`SRPredictor` to a JSON document."""
    if isinstance(model, SRPredictor):
        doc = {
            "kind": "sr",
            "kernel": model.spec.value,
            "hyperparameters": model.hp.to_record(model.spec),
            "inputs": model.inputs.tolist(),
            "weights": model.weights.tolist(),
            "selection_bfr": model.selection_bfr,
        }
    elif isinstance(model, GPPosterior):
        doc = {
            "kind": "exact",
            "kernel": model.spec.value,
            "hyperparameters": model.hp.to_record(model.spec),
            "inputs": model.inputs.tolist(),
            "targets": model.targets.tolist(),
        }
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION, **doc}
    if report is not None:
        doc["optimization"] = {
            "initial_nll": report.initial_nll,
            "final_nll": report.final_nll,
            "converged": report.converged,
            "grad_norm": report.grad_norm,
            "n_iter": report.n_iter,
            "trace": list(report.trace),
        }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", path, exc.lineno)
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ParseError("not a model document", path)
    if doc.get("version") != MODEL_VERSION:
        raise ParseError(f"unsupported model version {doc.get('version')}", path)
    try:
        spec = KernelSpec.parse(doc["kernel"])
        hp = HyperParameters.from_record(doc["hyperparameters"])
        if doc["kind"] == "sr":
            return SRPredictor(spec, hp, np.array(doc["inputs"]), np.array(doc["weights"]), doc.get("selection_bfr", float("nan")))
        if doc["kind"] == "exact":
            return fit_posterior(Dataset(np.array(doc["inputs"]), np.array(doc["targets"])), spec, hp)
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"malformed model document ({exc})", path)
    raise ParseError(f"unknown model kind {doc['kind']!r}", path)


# ------------------------------------------------------------------------ config


def _coerce(cls, section) -> dict:
    out = {}
    names = {f.name: f for f in fields(cls)}
    for key, raw in section.items():
        if key not in names:
            raise ParseError(f"unknown key {key!r} in [{section.name}]")
        default = getattr(cls(), key) if key in names else None
        try:
            if isinstance(default, tuple):
                out[key] = tuple(float(v) for v in raw.replace(",", " ").split())
            elif isinstance(default, bool):
                out[key] = section.getboolean(key)
            elif isinstance(default, int):
                out[key] = int(raw)
            else:
                out[key] = float(raw)
        except ValueError:
            raise ParseError(f"bad value for {key} in [{section.name}]: {raw!r}")
    return out


def load_config(path=None) -> dict:
    """Parse a scenario file with ``[campaign]``, ``[plant]``, ``[motion]`` and ``[tracking]`` sections.

    Missing sections or keys keep their defaults.  Returns a dict with
    ``campaign`` (:class:`CampaignConfig`), ``plant`` (:class:`PlantParams`),
    ``motion`` (:class:`MotionConstraints`), ``tracking`` (:class:`TrackingConfig`)
    and ``field`` (keyword overrides for :func:`motor_sim.default_field`).
    """
    cp = configparser.ConfigParser()
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except configparser.Error as exc:
            raise ParseError(str(exc), path)
    known = {"campaign", "plant", "motion", "tracking", "field"}
    for name in cp.sections():
        if name not in known:
            raise ParseError(f"unknown section [{name}]", path)

    def sec(name):
        return cp[name] if cp.has_section(name) else {}

    plant = PlantParams(**(_coerce(PlantParams, cp["plant"]) if cp.has_section("plant") else {}))
    motion = MotionConstraints(**(_coerce(MotionConstraints, cp["motion"]) if cp.has_section("motion") else {}))
    campaign = CampaignConfig(**(_coerce(CampaignConfig, cp["campaign"]) if cp.has_section("campaign") else {}))
    tr = {}
    if cp.has_section("tracking"):
        s = cp["tracking"]
        allowed = {"plane", "dwell", "bandwidth_hz", "noise_std", "seed", "gain_scale"}
        for key in s:
            if key not in allowed:
                raise ParseError(f"unknown key {key!r} in [tracking]", path)
        if "plane" in s:
            tr["plane"] = tuple(float(v) for v in s["plane"].replace(",", " ").split())
        if "noise_std" in s:
            tr["noise_std"] = tuple(float(v) for v in s["noise_std"].replace(",", " ").split())
        for key in ("dwell", "bandwidth_hz", "gain_scale"):
            if key in s:
                tr[key] = float(s[key])
        if "seed" in s:
            tr["seed"] = int(s["seed"])
    tracking = TrackingConfig(constraints=motion, params=plant, **tr)
    fld = {}
    if cp.has_section("field"):
        for key, raw in sec("field").items():
            if key not in {"amplitude", "period", "slopes", "inter_run_dev"}:
                raise ParseError(f"unknown key {key!r} in [field]", path)
            fld[key] = tuple(float(v) for v in raw.replace(",", " ").split()) if key == "slopes" else float(raw)
    return {"campaign": campaign, "plant": plant, "motion": motion, "tracking": tracking, "field": fld}
