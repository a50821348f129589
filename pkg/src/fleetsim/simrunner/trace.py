"""Trace recording and post-processing.

Traces are line-delimited JSON. The first line is a header carrying the
schema version and the full normalized config; every following line is
one record with a ``kind`` field:

    {"kind": "pose", "t": 0.01, "agent": 2, "pos": [x, y]}
    {"kind": "input", "t": 0.01, "agent": 2, "u": [ux, uy]}
    {"kind": "task_event", "t": 1.2, "event": "reveal|assign|complete",
     "task": 3, "agent": 1, "pos": [x, y]}
    {"kind": "assignment", "t": 1.2, "epoch": 0, "perm": [...],
     "objective": 1.23, "reference": 1.23, "rounds": 9}
    {"kind": "mpc_residual", "t": 3, "residual": 0.0, "costs": [...]}
    {"kind": "summary", ...}

Records are serialized with sorted keys and no wall-clock timestamps, so
a run is byte-reproducible from (config, seed). Readers reject traces
whose schema version does not match.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from ..errors import TraceError
from ..guidance import FormationSpec, hexagon_formation
from .metrics import convex_hull, formation_error, max_pairwise_distance, point_hull_distance

__all__ = [
    "SCHEMA_VERSION",
    "TraceWriter",
    "read_trace",
    "summarize",
    "export_csv",
]

SCHEMA_VERSION = 1


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    return value


class TraceWriter:
    """Appends schema-versioned JSONL records to a file.

    Records are flushed on close and on :meth:`flush`; engines call flush
    in error paths so a failed run still leaves a readable partial trace.
    """

    def __init__(self, path: str, config: dict):
        self.path = path
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        self._fh = open(path, "w", encoding="utf-8")
        self._count = 0
        self._write({"kind": "header", "schema": SCHEMA_VERSION, "config": _jsonable(config)})

    def _write(self, record: dict) -> None:
        self._fh.write(json.dumps(_jsonable(record), sort_keys=True, separators=(",", ":")))
        self._fh.write("\n")
        self._count += 1

    def write(self, record: dict) -> None:
        if "kind" not in record:
            raise TraceError("record without a kind: %r" % (record,))
        self._write(record)

    @property
    def count(self) -> int:
        return self._count

    def flush(self) -> None:
        self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.flush()
            self._fh.close()

    def __enter__(self) -> "TraceWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


def read_trace(path: str) -> tuple[dict, list[dict]]:
    """Load (header, records); raises TraceError on version or format skew."""
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise TraceError("cannot open trace %s: %s" % (path, exc)) from exc
    with fh:
        lines = fh.read().splitlines()
    if not lines:
        raise TraceError("trace %s is empty (no header)" % path)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceError("trace header is not valid JSON: %s" % exc) from exc
    if header.get("kind") != "header":
        raise TraceError("first trace line must be the header record")
    if header.get("schema") != SCHEMA_VERSION:
        raise TraceError(
            "trace schema %r does not match reader schema %d"
            % (header.get("schema"), SCHEMA_VERSION)
        )
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise TraceError("line %d is not valid JSON: %s" % (lineno, exc)) from exc
    return header, records


def _pose_series(records) -> dict[float, dict[int, list[float]]]:
    """t -> {agent: pos}, insertion-ordered by time."""
    series: dict[float, dict[int, list[float]]] = {}
    for rec in records:
        if rec.get("kind") == "pose":
            series.setdefault(rec["t"], {})[rec["agent"]] = rec["pos"]
    return series


def _formation_spec_from_config(config: dict) -> FormationSpec:
    block = config["formation"]
    if block["kind"] == "hexagon":
        return hexagon_formation(block.get("side", 1.0))
    return FormationSpec.from_pairs([tuple(row) for row in block["distances"]])


def _containment_series(config: dict, records) -> list[tuple[float, float]]:
    leaders = set(config["containment"]["leaders"])
    out = []
    for t, poses in _pose_series(records).items():
        lead = [p for a, p in poses.items() if a in leaders]
        foll = [p for a, p in poses.items() if a not in leaders]
        if not lead or not foll:
            continue
        hull = convex_hull(lead)
        out.append((t, max(point_hull_distance(p, hull) for p in foll)))
    return out


def _formation_series(config: dict, records) -> list[tuple[float, float]]:
    spec = _formation_spec_from_config(config)
    out = []
    for t, poses in _pose_series(records).items():
        if len(poses) == config["n"]:
            out.append((t, formation_error(poses, spec)))
    return out


def _spread_series(records) -> list[tuple[float, float]]:
    out = []
    for t, poses in _pose_series(records).items():
        if len(poses) >= 2:
            out.append((t, max_pairwise_distance(list(poses.values()))))
    return out


def _gantt_rows(records) -> list[tuple[int, float, float, int]]:
    """(task, start, end, robot) per completed task.

    Start is the moment the completing robot was (last) assigned the
    task; end is the completion time.
    """
    assigns: dict[tuple[int, int], float] = {}
    rows = []
    for rec in records:
        if rec.get("kind") != "task_event":
            continue
        if rec["event"] == "assign":
            assigns[(rec["task"], rec["agent"])] = rec["t"]
        elif rec["event"] == "complete":
            start = assigns.get((rec["task"], rec["agent"]), rec["t"])
            rows.append((rec["task"], start, rec["t"], rec["agent"]))
    rows.sort(key=lambda r: (r[1], r[0]))
    return rows


def summarize(path: str) -> dict:
    """Scenario-appropriate summary metrics computed from a trace file."""
    header, records = read_trace(path)
    config = header["config"]
    scenario = config["scenario"]
    summary: dict = {"scenario": scenario, "records": len(records)}
    if scenario == "containment":
        series = _containment_series(config, records)
        summary["final_hull_distance"] = series[-1][1] if series else None
        t_end = series[-1][0] if series else 0.0
        last = [d for t, d in series if t >= t_end - 1.0]
        summary["max_hull_distance_final_second"] = max(last) if last else None
    elif scenario == "formation":
        series = _formation_series(config, records)
        summary["final_formation_error"] = series[-1][1] if series else None
    elif scenario == "rendezvous":
        series = _spread_series(records)
        summary["final_spread"] = series[-1][1] if series else None
    elif scenario == "assignment":
        solves = [r for r in records if r.get("kind") == "assignment"]
        completes = [r for r in records if r.get("kind") == "task_event" and r["event"] == "complete"]
        reveals = [r for r in records if r.get("kind") == "task_event" and r["event"] == "reveal"]
        summary["total_cost"] = sum(r["objective"] for r in solves) if solves else 0.0
        summary["optimality_gap"] = (
            sum(r["objective"] - r["reference"] for r in solves) if solves else 0.0
        )
        summary["solves"] = len(solves)
        summary["completed_tasks"] = len(completes)
        summary["reveals"] = len(reveals)
        summary["gantt_rows"] = len(_gantt_rows(records))
    else:
        residuals = [r for r in records if r.get("kind") == "mpc_residual"]
        summary["max_coupling_residual"] = (
            max(r["residual"] for r in residuals) if residuals else None
        )
        summary["closed_loop_cost"] = (
            sum(r["stage_cost"] for r in residuals if "stage_cost" in r) if residuals else None
        )
        summary["steps"] = len(residuals)
    return summary


def _write_csv(path: str, headers: list[str], rows) -> str:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(headers)
        for row in rows:
            w.writerow(row)
    return path


def export_csv(path: str, out_dir: str) -> list[str]:
    """Write plot-ready CSV tables for a trace; returns written paths.

    Every scenario gets ``positions.csv`` when pose records exist; each
    scenario adds its metric time series, and assignment runs add
    ``gantt.csv`` with one row per completed task.
    """
    header, records = read_trace(path)
    config = header["config"]
    scenario = config["scenario"]
    os.makedirs(out_dir, exist_ok=True)
    written = []

    poses = [
        (r["t"], r["agent"], *r["pos"])
        for r in records
        if r.get("kind") == "pose"
    ]
    if poses:
        cols = len(poses[0]) - 2
        headers = ["t", "agent"] + ["xyz"[k] for k in range(cols)]
        written.append(_write_csv(os.path.join(out_dir, "positions.csv"), headers, poses))

    if scenario == "containment":
        series = _containment_series(config, records)
        written.append(
            _write_csv(os.path.join(out_dir, "hull_distance.csv"), ["t", "max_hull_distance"], series)
        )
    elif scenario == "formation":
        series = _formation_series(config, records)
        written.append(
            _write_csv(os.path.join(out_dir, "formation_error.csv"), ["t", "error"], series)
        )
    elif scenario == "rendezvous":
        series = _spread_series(records)
        written.append(_write_csv(os.path.join(out_dir, "spread.csv"), ["t", "max_distance"], series))
    elif scenario == "assignment":
        rows = _gantt_rows(records)
        written.append(
            _write_csv(os.path.join(out_dir, "gantt.csv"), ["task", "start", "end", "robot"], rows)
        )
    else:
        rows = [
            (r["t"], r["residual"], r.get("stage_cost", ""))
            for r in records
            if r.get("kind") == "mpc_residual"
        ]
        written.append(
            _write_csv(
                os.path.join(out_dir, "coupling_residual.csv"), ["t", "residual", "stage_cost"], rows
            )
        )
    return written
