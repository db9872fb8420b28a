"""Model and table files, and deterministic report serialization.

Every document carries ``schema_version``; loaders reject versions they do
not know.  Floats are written with 17 significant digits so that a report
round-trips exactly and identical runs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import fields, is_dataclass
from pathlib import Path

import numpy as np

from .errors import IoError, SchemaError, ValidationError
from .mdp import FiniteMdp

SCHEMA_VERSION = 1


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isfinite(x):
        return format(x, ".17g")
    if math.isnan(x):
        return "NaN"
    return "Infinity" if x > 0 else "-Infinity"


def to_plain(obj):
    """Convert numpy values and dataclasses into JSON-compatible builtins."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        # tolist already yields builtin scalars
        return obj.tolist()
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(type(v) is float for v in obj):
            return "[" + ", ".join(map(fmt_float, obj)) + "]"
        if all(not isinstance(v, (list, dict)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        inner = (",\n").join(pad + _encode(v, indent, level + 1) for v in obj)
        return "[\n" + inner + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        inner = (",\n").join(
            pad + json.dumps(k) + ": " + _encode(v, indent, level + 1) for k, v in obj.items()
        )
        return "{\n" + inner + "\n" + end + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """Deterministic JSON text with 17-digit floats."""
    return _encode(to_plain(obj), indent, 0) + "\n"


def write_text(text: str, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def read_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: top level must be an object")
    return doc


def check_version(doc: dict, where: str = "document") -> None:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"{where}: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")


def matrix_doc(M, max_density: float = 0.25):
    """Dense rows, or coordinate form when at most ``max_density`` of entries are non-zero."""
    M = np.asarray(M, dtype=float)
    rows, cols = np.nonzero(M)
    if M.ndim != 2 or rows.size > max_density * M.size:
        return M
    return {"format": "coo", "shape": list(M.shape), "rows": rows, "cols": cols, "values": M[rows, cols]}


def matrix_from_doc(doc) -> np.ndarray:
    """Inverse of ``matrix_doc``."""
    if isinstance(doc, dict):
        if doc.get("format") != "coo":
            raise SchemaError(f"unknown matrix format {doc.get('format')!r}")
        M = np.zeros(tuple(doc["shape"]))
        M[np.asarray(doc["rows"], dtype=int), np.asarray(doc["cols"], dtype=int)] = doc["values"]
        return M
    return np.asarray(doc, dtype=float)


# -- models ------------------------------------------------------------------


def mdp_from_dict(doc: dict, where: str = "mdp") -> FiniteMdp:
    """Build an MDP from a parsed document.

    ``transition`` may be nested rows or a flat row-major list of
    ``n_states**2`` numbers.
    """
    check_version(doc, where)
    missing = [k for k in ("n_states", "transition", "reward", "gamma") if k not in doc]
    if missing:
        raise SchemaError(f"{where}: missing field(s) {', '.join(missing)}")
    n = doc["n_states"]
    if not isinstance(n, int) or n < 1:
        raise ValidationError(f"{where}: n_states must be a positive integer")
    try:
        T = matrix_from_doc(doc["transition"])
        R = np.asarray(doc["reward"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: transition and reward must be numeric arrays") from exc
    if T.ndim == 1:
        if T.size != n * n:
            raise ValidationError(f"{where}: flat transition has {T.size} entries, expected {n * n}")
        T = T.reshape(n, n)
    if T.shape != (n, n):
        raise ValidationError(f"{where}: transition has shape {T.shape}, expected ({n}, {n})")
    try:
        return FiniteMdp(T, R, float(doc["gamma"]), float(doc.get("lambda", 0.0)), doc.get("grid"))
    except ValidationError as exc:
        raise type(exc)(f"{where}: {exc}") from exc


def load_mdp(path) -> FiniteMdp:
    return mdp_from_dict(read_json(path), str(path))


def mdp_to_dict(mdp: FiniteMdp) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "n_states": mdp.n_states,
        "transition": mdp.transition,
        "reward": mdp.reward,
        "gamma": mdp.gamma,
        "lambda": mdp.lam,
    }
    if mdp.grid is not None:
        doc["grid"] = mdp.grid
    return to_plain(doc)


def save_mdp(mdp: FiniteMdp, path) -> Path:
    return write_text(dumps(mdp_to_dict(mdp)), path)


# -- tables ------------------------------------------------------------------


def load_table(path) -> np.ndarray:
    """Read a ``(functions, states)`` table from ``.json`` or ``.csv``.

    JSON documents hold ``{"schema_version": 1, "rows": [[...], ...]}``.  CSV
    files hold one function per line; blank lines and ``#`` comments are
    skipped.
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        doc = read_json(path)
        check_version(doc, str(path))
        if "rows" not in doc:
            raise SchemaError(f"{path}: missing field rows")
        rows = doc["rows"]
    else:
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc
        rows = [
            line for line in csv.reader(io.StringIO(text))
            if line and not line[0].lstrip().startswith("#")
        ]
    try:
        table = np.asarray(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: table rows must be numeric and of equal length") from exc
    if table.ndim == 1:
        table = table[None, :]
    if table.ndim != 2 or table.size == 0:
        raise ValidationError(f"{path}: expected a non-empty 2-d table")
    return table


def save_table(table, path) -> Path:
    path = Path(path)
    table = np.atleast_2d(np.asarray(table, dtype=float))
    if path.suffix.lower() == ".json":
        return write_text(dumps({"schema_version": SCHEMA_VERSION, "rows": table}), path)
    return write_text("".join(",".join(fmt_float(x) for x in row) + "\n" for row in table), path)


# -- reports -------------------------------------------------------------------


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def extrema_csv(reports) -> str:
    """One row per audited direction."""
    reports = list(reports)
    k = len(reports[0].direction) if reports else 0
    header = [f"c_{j + 1}" for j in range(k)] + [
        "phi_max", "phi_min", "level_alpha", "mass_upper", "mass_lower",
        "mass_at_max", "mass_at_min", "zero_mass", "flat_max", "flat_min",
    ]
    rows = [
        list(r.direction) + [
            r.phi_max, r.phi_min, r.level_alpha, r.mass_upper, r.mass_lower,
            r.mass_at_max, r.mass_at_min, r.zero_mass, r.flat_max, r.flat_min,
        ]
        for r in reports
    ]
    return csv_text(header, rows)


def trace_csv(trace) -> str:
    """Header ``iter, w_1..w_k, residual`` and one row per recorded iterate."""
    k = trace.iterates.shape[1]
    header = ["iter"] + [f"w_{j + 1}" for j in range(k)] + ["residual"]
    rows = (
        [int(t)] + list(w) + [r]
        for t, w, r in zip(trace.steps, trace.iterates, trace.residuals)
    )
    return csv_text(header, rows)


def flat_items(doc, prefix: str = ""):
    """``(dotted.key, value)`` pairs of a nested document, arrays joined by spaces."""
    doc = to_plain(doc)
    if isinstance(doc, dict):
        for k, v in doc.items():
            yield from flat_items(v, f"{prefix}.{k}" if prefix else k)
    elif isinstance(doc, list) and any(isinstance(v, (list, dict)) for v in doc):
        for i, v in enumerate(doc):
            yield from flat_items(v, f"{prefix}[{i}]")
    elif isinstance(doc, list):
        yield prefix, " ".join(_cell(v) for v in doc)
    else:
        yield prefix, doc


def document_csv(doc) -> str:
    return csv_text(["field", "value"], ([k, "" if v is None else v] for k, v in flat_items(doc)))


def emit_report(result, fmt: str, path) -> Path:
    """Serialize a task result.

    ``result`` is a mapping with a ``kind`` key.  In ``csv`` format an
    ``audit`` becomes one row per entry of ``reports`` and a ``trace`` one
    row per iterate of ``trace``; any other document becomes
    ``field,value`` pairs.  ``structured`` writes the whole
    mapping as JSON.
    """
    if fmt not in ("csv", "structured"):
        raise ValidationError(f"unknown report format {fmt!r}")
    path = Path(path)
    if fmt == "structured":
        return write_text(dumps(result), path.with_suffix(".json"))
    kind = result.get("kind")
    if kind == "audit":
        text = extrema_csv(result["reports"])
    elif kind == "trace":
        text = trace_csv(result["trace"])
    else:
        text = document_csv(result)
    return write_text(text, path.with_suffix(".csv"))
