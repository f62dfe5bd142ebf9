"""Trace container and stable on-disk formats.

A Trace is the unit of I/O for every simulation in the package: a time
axis, named float64 columns (per-DoF columns use a "<dof>.<field>" naming
convention) and a metadata dict carrying the schema version, parameters,
step size and seed.

Three encodings are supported and round-trip losslessly:

* csv    - '#'-prefixed metadata lines, header row, repr-encoded floats
           (shortest round-tripping decimal, exact on re-read)
* binary - NumPy .npz archive with the metadata as an embedded JSON string
* json   - single JSON document, floats again via repr

Bound tables use a small CSV dialect of their own: one row per DoF, one
column per calibration task, plus an optional symmetry-partner column.
"""

from __future__ import annotations

import io
import json
import warnings
import zipfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import TraceFormatError

TRACE_MAGIC = "# fatiguesim-trace v1"
BOUNDS_MAGIC = "# fatiguesim-bounds v1"
SUPPORTED_VERSIONS = (1,)

#: |ma + mr + mf - 100| beyond this triggers a ConservationWarning on read.
CONSERVATION_TOL = 1e-6


class ConservationWarning(UserWarning):
    """Compartment columns of a trace read from disk do not sum to 100."""


@dataclass
class Trace:
    """Time-indexed record of simulation quantities."""

    meta: dict
    time: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.time)

    @property
    def dofs(self) -> list[str]:
        return list(self.meta.get("dofs", []))

    def get(self, dof: str, fld: str) -> np.ndarray:
        return self.columns[f"{dof}.{fld}"]

    def has(self, dof: str, fld: str) -> bool:
        return f"{dof}.{fld}" in self.columns

    def validate(self) -> "Trace":
        """Check structural invariants; warn (not raise) on conservation drift."""
        n = len(self.time)
        if n > 1 and not np.all(np.diff(self.time) > 0):
            raise TraceFormatError("time axis is not strictly increasing")
        for name, col in self.columns.items():
            if len(col) != n:
                raise TraceFormatError(
                    f"column {name!r} has {len(col)} rows, expected {n}"
                )
        for dof in self.dofs:
            if not self.has(dof, "ma"):
                continue
            total = self.get(dof, "ma") + self.get(dof, "mr") + self.get(dof, "mf")
            worst = float(np.max(np.abs(total - 100.0))) if n else 0.0
            if worst > CONSERVATION_TOL:
                warnings.warn(
                    f"DoF {dof!r}: compartments deviate from 100 by up to {worst:.3g}",
                    ConservationWarning,
                    stacklevel=2,
                )
        return self


def _format_from_path(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix == ".npz":
        return "binary"
    if suffix == ".json":
        return "json"
    raise ValueError(f"cannot infer trace format from {path!r}; pass fmt explicitly")


def write_trace(trace: Trace, path, fmt: str | None = None) -> None:
    fmt = fmt or _format_from_path(path)
    path = Path(path)
    if fmt == "csv":
        path.write_text(trace_to_csv(trace))
    elif fmt == "binary":
        arrays = {"t": trace.time, **trace.columns}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(trace.meta)), **arrays)
    elif fmt == "json":
        path.write_text(trace_to_json(trace))
    else:
        raise ValueError(f"unknown trace format {fmt!r}")


def read_trace(path, fmt: str | None = None) -> Trace:
    path = Path(path)
    if fmt is None:
        head = path.open("rb").read(2)
        if head[:2] == b"PK":
            fmt = "binary"
        elif head[:1] == b"{":
            fmt = "json"
        else:
            fmt = "csv"
    if fmt == "csv":
        return trace_from_csv(path.read_text())
    if fmt == "binary":
        try:
            with np.load(path, allow_pickle=False) as data:
                meta = json.loads(str(data["__meta__"]))
                _check_version(meta)
                columns = {
                    k: data[k] for k in data.files if k not in ("__meta__", "t")
                }
                return Trace(meta=meta, time=data["t"], columns=columns).validate()
        except (zipfile.BadZipFile, OSError, KeyError, ValueError) as exc:
            raise TraceFormatError(f"unreadable binary trace: {exc}") from exc
    if fmt == "json":
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"unreadable json trace: {exc}") from exc
        return trace_from_json_doc(doc)
    raise ValueError(f"unknown trace format {fmt!r}")


def trace_to_csv(trace: Trace) -> str:
    buf = io.StringIO()
    buf.write(TRACE_MAGIC + "\n")
    buf.write("# " + json.dumps(trace.meta, sort_keys=True, separators=(",", ":")) + "\n")
    names = list(trace.columns)
    buf.write(",".join(["t"] + names) + "\n")
    cols = [trace.time] + [trace.columns[n] for n in names]
    for row in zip(*cols):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def trace_from_csv(text: str) -> Trace:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# fatiguesim-trace"):
        raise TraceFormatError("missing trace magic line", line=1)
    if lines[0] != TRACE_MAGIC:
        raise TraceFormatError(
            f"unsupported trace schema {lines[0][2:]!r}", line=1
        )
    if len(lines) < 2 or not lines[1].startswith("# "):
        raise TraceFormatError("missing metadata line", line=2)
    try:
        meta = json.loads(lines[1][2:])
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"bad metadata JSON: {exc}", line=2) from exc
    _check_version(meta)
    if len(lines) < 3:
        raise TraceFormatError("missing header row", line=3)
    header = lines[2].split(",")
    if header[0] != "t":
        raise TraceFormatError("first column must be 't'", line=3)
    names = header[1:]

    rows = []
    for lineno, raw in enumerate(lines[3:], start=4):
        if not raw:
            continue
        parts = raw.split(",")
        if len(parts) != len(header):
            raise TraceFormatError(
                f"expected {len(header)} fields, got {len(parts)}", line=lineno
            )
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise TraceFormatError(f"bad number: {exc}", line=lineno) from exc

    data = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(header)))
    columns = {name: data[:, j + 1].copy() for j, name in enumerate(names)}
    return Trace(meta=meta, time=data[:, 0].copy(), columns=columns).validate()


def trace_to_json(trace: Trace) -> str:
    doc = {
        "schema": "fatiguesim-trace",
        "version": trace.meta.get("version", 1),
        "meta": trace.meta,
        "t": trace.time.tolist(),
        "columns": {k: v.tolist() for k, v in trace.columns.items()},
    }
    return json.dumps(doc)


def trace_from_json_doc(doc: dict) -> Trace:
    if doc.get("schema") != "fatiguesim-trace":
        raise TraceFormatError("not a fatiguesim trace document")
    meta = doc.get("meta", {})
    _check_version(meta)
    columns = {k: np.asarray(v, dtype=np.float64) for k, v in doc["columns"].items()}
    return Trace(
        meta=meta, time=np.asarray(doc["t"], dtype=np.float64), columns=columns
    ).validate()


def _check_version(meta: dict) -> None:
    version = meta.get("version")
    if version not in SUPPORTED_VERSIONS:
        raise TraceFormatError(f"unsupported trace schema version {version!r}")


# ---------------------------------------------------------------------------
# Bound tables
# ---------------------------------------------------------------------------

MAX_ACROSS_TASKS = "max"


def load_bound_table(path_or_text, aggregation: str = MAX_ACROSS_TASKS):
    """Parse a bound-table file into a TorqueBoundTable.

    ``aggregation`` selects a named task column, or "max" for the row-wise
    maximum across all task columns.
    """
    from .torque import TorqueBoundTable

    if isinstance(path_or_text, (str, Path)) and "\n" not in str(path_or_text):
        text = Path(path_or_text).read_text()
    else:
        text = str(path_or_text)

    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != BOUNDS_MAGIC:
        raise TraceFormatError("missing bound-table magic line", line=1)
    body = [ln for ln in lines[1:] if not ln.startswith("#")]
    if not body:
        raise TraceFormatError("bound table has no header row")
    header = [h.strip() for h in body[0].split(",")]
    if header[:2] != ["dof", "partner"]:
        raise TraceFormatError("bound table header must start with 'dof,partner'")
    tasks = header[2:]
    if not tasks:
        raise TraceFormatError("bound table declares no task columns")

    names: list[str] = []
    partners: list[str] = []
    values: list[list[float]] = []
    for lineno, raw in enumerate(body[1:], start=2):
        parts = [p.strip() for p in raw.split(",")]
        if len(parts) != len(header):
            raise TraceFormatError(
                f"expected {len(header)} fields, got {len(parts)}", line=lineno
            )
        names.append(parts[0])
        partners.append(parts[1])
        try:
            row = [float(p) for p in parts[2:]]
        except ValueError as exc:
            raise TraceFormatError(f"bad number: {exc}", line=lineno) from exc
        if any(v < 0 for v in row):
            raise TraceFormatError(
                f"negative torque bound for {parts[0]!r}", line=lineno
            )
        values.append(row)

    grid = np.asarray(values, dtype=np.float64)
    if aggregation == MAX_ACROSS_TASKS:
        t_max = grid.max(axis=1)
    else:
        if aggregation not in tasks:
            raise ValueError(
                f"unknown task {aggregation!r}; table has {', '.join(tasks)}"
            )
        t_max = grid[:, tasks.index(aggregation)].copy()

    index = {n: i for i, n in enumerate(names)}
    pairs: list[tuple[int, int]] = []
    for i, partner in enumerate(partners):
        if not partner:
            continue
        if partner not in index:
            raise TraceFormatError(f"unknown symmetry partner {partner!r}")
        j = index[partner]
        if partners[j] not in ("", names[i]):
            raise TraceFormatError(
                f"inconsistent symmetry: {names[i]} -> {partner} -> {partners[j]}"
            )
        if i < j:
            pairs.append((i, j))
    return TorqueBoundTable(names=names, t_max=t_max, symmetry_pairs=pairs)


def write_bound_table(table, path, task: str = "calibrated") -> None:
    """Write a TorqueBoundTable as a single-task bound file."""
    partner = [""] * len(table.names)
    for i, j in table.symmetry_pairs:
        partner[i] = table.names[j]
        partner[j] = table.names[i]
    lines = [BOUNDS_MAGIC, f"dof,partner,{task}"]
    for name, p, v in zip(table.names, partner, table.t_max):
        lines.append(f"{name},{p},{float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def humanoid_bound_table(aggregation: str = MAX_ACROSS_TASKS):
    """Bundled per-task maximum-torque bounds for a 28-DoF humanoid."""
    text = (
        resources.files("fatiguesim")
        .joinpath("data/humanoid_torque_bounds.csv")
        .read_text()
    )
    return load_bound_table(text, aggregation)
