"""File formats.

Observation CSV
    UTF-8, header line ``a,b,y``, then one sample per line: 0-based integer
    row index, 0-based integer column index, decimal response.

Matrix CSV
    UTF-8, no header, one matrix row per line, comma-separated, each value
    written with Python's shortest round-trip ``repr``.

Vector CSV
    Numbers separated by commas and/or newlines, read in order.

JSON artifacts (models, experiment results, manifests) are UTF-8 with sorted
keys and 2-space indentation; matrices are nested row-major lists.  Every
artifact carries a ``manifest`` whose ``timing`` block is the only part that
varies between identical invocations.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .completion import ObservationSet
from .errors import InvalidInputError
from .linalg import Subspace
from .simulation import ExperimentResult, MethodSummary
from .transfer import TransferModel

MODEL_FORMAT = "matcomp.transfer-model"
RESULT_FORMAT = "matcomp.experiment-result"


def read_observations(path, p: int, q: int) -> ObservationSet:
    """Parse an observation CSV, reporting the offending line on bad input."""
    path = Path(path)
    rows, cols, ys = [], [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["a", "b", "y"]:
            raise InvalidInputError(f"{path}: line 1: expected header 'a,b,y', got {header!r}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != 3:
                raise InvalidInputError(f"{path}: line {lineno}: expected 3 fields, got {len(rec)}")
            try:
                a, b, y = int(rec[0]), int(rec[1]), float(rec[2])
            except ValueError:
                raise InvalidInputError(f"{path}: line {lineno}: cannot parse {rec!r}") from None
            if not 0 <= a < p:
                raise InvalidInputError(f"{path}: line {lineno} (sample {lineno - 2}): row index {a} outside [0, {p})")
            if not 0 <= b < q:
                raise InvalidInputError(f"{path}: line {lineno} (sample {lineno - 2}): column index {b} outside [0, {q})")
            if not math.isfinite(y):
                raise InvalidInputError(f"{path}: line {lineno}: non-finite response")
            rows.append(a)
            cols.append(b)
            ys.append(y)
    return ObservationSet(p, q, np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(ys))


def write_observations(path, obs: ObservationSet) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("a,b,y\n")
        for a, b, y in zip(obs.rows.tolist(), obs.cols.tolist(), obs.y.tolist()):
            fh.write(f"{a},{b},{y!r}\n")


def format_matrix(m) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return "".join(",".join(repr(float(x)) for x in row) + "\n" for row in m)


def write_matrix(path, m) -> None:
    Path(path).write_text(format_matrix(m), encoding="utf-8")


def read_matrix(path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError:
            raise InvalidInputError(f"{path}: line {lineno}: non-numeric entry") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise InvalidInputError(f"{path}: matrix rows are empty or ragged")
    return np.array(rows)


def read_vector(path) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8").replace("\n", ",")
    try:
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise InvalidInputError(f"{path}: non-numeric entry in vector file") from None


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """Provenance block embedded in every JSON artifact."""

    config: dict
    inputs: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    started: float = field(default_factory=time.time)
    tool_version: str = __version__

    def add_inputs(self, *paths) -> None:
        for p in paths:
            self.inputs[str(p)] = "sha256:" + file_digest(p)

    def to_dict(self) -> dict:
        return {
            "tool": "matcomp",
            "tool_version": self.tool_version,
            "config": self.config,
            "inputs": dict(self.inputs),
            "warnings": list(self.warnings),
            "timing": {
                "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(self.started)),
                "elapsed_seconds": round(time.time() - self.started, 3),
            },
        }


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: invalid JSON ({exc})") from None


def strip_timing(obj: dict) -> dict:
    """Copy of an artifact without the manifest's timing block."""
    out = json.loads(json.dumps(obj))
    if isinstance(out.get("manifest"), dict):
        out["manifest"].pop("timing", None)
    return out


def _matrix(m):
    return np.asarray(m, dtype=float).tolist()


def model_to_dict(model: TransferModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": 1,
        "mode": model.mode,
        "p": model.p,
        "q": model.q,
        "p0": model.p0,
        "q0": model.q0,
        "n0": model.n0,
        "u_basis": _matrix(model.u_hat.basis),
        "v_basis": _matrix(model.v_hat.basis),
        "gamma": _matrix(model.gamma),
        "gate_u_used_transfer": bool(model.gate_u_used_transfer),
        "gate_v_used_transfer": bool(model.gate_v_used_transfer),
        "gate_u_alignment": model.gate_u_alignment,
        "gate_v_alignment": model.gate_v_alignment,
        "selected_u": list(model.selected_u),
        "selected_v": list(model.selected_v),
        "residual_ss": model.residual_ss,
        "config": model.config,
    }


def model_from_dict(d: dict) -> TransferModel:
    if d.get("format") != MODEL_FORMAT:
        raise InvalidInputError(f"not a transfer model (format={d.get('format')!r})")
    try:
        u = Subspace(np.array(d["u_basis"], dtype=float).reshape(d["p"], d["p0"]))
        v = Subspace(np.array(d["v_basis"], dtype=float).reshape(d["q"], d["q0"]))
        gamma = np.array(d["gamma"], dtype=float).reshape(d["p0"], d["q0"])
        return TransferModel(
            u_hat=u,
            v_hat=v,
            gamma=gamma,
            theta_hat=u.basis @ gamma @ v.basis.T,
            gate_u_used_transfer=bool(d["gate_u_used_transfer"]),
            gate_v_used_transfer=bool(d["gate_v_used_transfer"]),
            selected_u=tuple(d["selected_u"]),
            selected_v=tuple(d["selected_v"]),
            residual_ss=float(d["residual_ss"]),
            n0=int(d.get("n0", 0)),
            mode=d.get("mode", "oracle"),
            gate_u_alignment=d.get("gate_u_alignment"),
            gate_v_alignment=d.get("gate_v_alignment"),
            config=dict(d.get("config", {})),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise InvalidInputError(f"malformed model JSON: {exc}") from None


def result_to_dict(res: ExperimentResult) -> dict:
    return {
        "format": RESULT_FORMAT,
        "version": 1,
        "config": res.config,
        "rep_seeds": res.rep_seeds,
        "methods": [
            {
                "label": m.label,
                "errors": m.errors,
                "mean": m.mean,
                "stderr": m.stderr,
                "n_failed": m.n_failed,
            }
            for m in res.methods
        ],
        "diagnostics": res.diagnostics,
    }


def result_from_dict(d: dict) -> ExperimentResult:
    if d.get("format") != RESULT_FORMAT:
        raise InvalidInputError(f"not an experiment result (format={d.get('format')!r})")
    return ExperimentResult(
        methods=[MethodSummary(m["label"], list(m["errors"]), m["mean"], m["stderr"], m["n_failed"]) for m in d["methods"]],
        config=d["config"],
        rep_seeds=[list(s) for s in d["rep_seeds"]],
        diagnostics=list(d.get("diagnostics", [])),
    )


def write_result_csv(path, res: ExperimentResult) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("method,rep,rel_error\n")
        for label, rep, err in res.csv_rows():
            fh.write(f"{label},{rep},{'' if err is None else repr(float(err))}\n")
