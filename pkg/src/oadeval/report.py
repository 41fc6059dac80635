"""Deterministic report rendering.

Machine formats (csv, json) print reals with 6 significant digits;
markdown prints fractions as percentages with one decimal.  Absent cells
are ``--`` in text formats and ``null`` in json.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .annotations import FLAG_NAMES
from .errors import FormatError

ABSENT = "--"
FORMATS = ("csv", "markdown", "json")

# column letters used for metadata tables
FLAG_LETTERS = {name: chr(ord("A") + i) for i, name in enumerate(FLAG_NAMES)}


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = "text"  # text | int | raw | pct
    label: str | None = None  # markdown header, defaults to name


@dataclass
class Table:
    title: str
    columns: list[Column]
    rows: list[list[Any]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    # markdown appends " (%)" to percentage headers unless the table says so itself
    pct_suffix: bool = True


@dataclass
class ReportDocument:
    command: str
    version: str
    parameters: dict[str, Any]
    inputs: dict[str, str]
    tables: list[Table]


def _raw(x: float) -> str:
    return f"{x:.6g}"


def _cell_text(value, kind: str, markdown: bool) -> str:
    if value is None:
        return ABSENT
    if kind == "int":
        return str(int(value))
    if kind == "pct":
        return f"{100.0 * value:.1f}" if markdown else _raw(value)
    if kind == "raw":
        return _raw(value)
    return str(value)


def _cell_json(value, kind: str):
    if value is None:
        return None
    if kind == "int":
        return int(value)
    if kind in ("pct", "raw"):
        return float(_raw(value))
    return str(value)


def render_csv(doc: ReportDocument) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    for i, table in enumerate(doc.tables):
        if i:
            out.write("\n")
        if len(doc.tables) > 1:
            writer.writerow([f"# {table.title}"])
        writer.writerow([c.name for c in table.columns])
        for row in table.rows:
            writer.writerow([_cell_text(v, c.kind, False) for v, c in zip(row, table.columns)])
    return out.getvalue()


def _md_escape(text: str) -> str:
    return text.replace("|", "\\|")


def render_markdown(doc: ReportDocument) -> str:
    lines = [f"# {doc.command}", "", f"oadeval {doc.version}"]
    for key, value in doc.parameters.items():
        lines.append(f"- {key}: {value}")
    for name, digest in doc.inputs.items():
        lines.append(f"- input {name}: sha256 {digest[:16]}")
    for table in doc.tables:
        lines += ["", f"## {table.title}", ""]
        suffix = " (%)" if table.pct_suffix else ""
        header = [c.label or c.name + (suffix if c.kind == "pct" else "") for c in table.columns]
        lines.append("| " + " | ".join(_md_escape(h) for h in header) + " |")
        lines.append("|" + "|".join("---" if c.kind == "text" else "---:" for c in table.columns) + "|")
        for row in table.rows:
            cells = [_md_escape(_cell_text(v, c.kind, True)) for v, c in zip(row, table.columns)]
            lines.append("| " + " | ".join(cells) + " |")
        if table.notes:
            lines.append("")
            lines.extend(table.notes)
    return "\n".join(lines) + "\n"


def render_json(doc: ReportDocument) -> str:
    payload = {
        "tool": "oadeval",
        "version": doc.version,
        "command": doc.command,
        "parameters": doc.parameters,
        "inputs": doc.inputs,
        "tables": [
            {
                "title": t.title,
                "columns": [c.name for c in t.columns],
                "rows": [{c.name: _cell_json(v, c.kind) for v, c in zip(row, t.columns)} for row in t.rows],
            }
            for t in doc.tables
        ],
    }
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def render(doc: ReportDocument, fmt: str) -> str:
    if fmt == "csv":
        return render_csv(doc)
    if fmt == "markdown":
        return render_markdown(doc)
    if fmt == "json":
        return render_json(doc)
    raise ValueError(f"unknown report format {fmt!r}")


# ---------------------------------------------------------------------------
# input digests


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dir_digest(path, suffixes: Sequence[str] = (".oads", ".csv")) -> str:
    """Digest over the sorted (name, content digest) pairs of a score directory."""
    h = hashlib.sha256()
    for file in sorted(Path(path).iterdir()):
        if file.suffix in suffixes:
            h.update(file.name.encode("utf-8") + b"\0" + bytes.fromhex(file_digest(file)))
    return h.hexdigest()


# ---------------------------------------------------------------------------
# metadata (per-class cAP + yes/no differences) tables


def metadata_table(
    title: str,
    class_names: Sequence[str],
    overall: Sequence[float | None],
    diffs: dict[str, Sequence[float | None]],
) -> Table:
    """Per-class overall cAP plus one yes-minus-no column per flag, mean row last.

    Flags from the fixed list are headed by their letter and explained in a
    legend line.
    """
    flags = list(diffs)
    columns = [Column("class", label="cAP (%)"), Column("Overall", "pct")]
    columns += [Column(FLAG_LETTERS.get(f, f), "pct") for f in flags]
    rows = []
    for i, name in enumerate(class_names):
        rows.append([name, overall[i], *(diffs[f][i] for f in flags)])

    def mean(values):
        present = [v for v in values if v is not None]
        return math.fsum(present) / len(present) if present else None

    rows.append(["Mean", mean(overall), *(mean(diffs[f]) for f in flags)])
    legend = ", ".join(f"{FLAG_LETTERS[f]}: {f}" for f in flags if f in FLAG_LETTERS)
    notes = [f"Flag columns show cAP(yes) - cAP(no); {ABSENT} marks classes without enough instances on both sides."]
    if legend:
        notes.append(legend)
    return Table(title, columns, rows, notes, pct_suffix=False)


def read_metadata_results(text: str) -> dict[str, tuple[list[str], list[float | None], dict[str, list[float | None]]]]:
    """Parse a results csv ``model,class,overall,<flag>...`` into per-model columns.

    Cells hold fractions; ``--`` or an empty cell marks an absent value.
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or header[:3] != ["model", "class", "overall"]:
        raise FormatError("results csv needs header model,class,overall,...", 1)
    flags = header[3:]
    models: dict[str, tuple[list[str], list[float | None], dict[str, list[float | None]]]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise FormatError(f"expected {len(header)} fields, got {len(row)}", lineno)
        names, overall, diffs = models.setdefault(row[0], ([], [], {f: [] for f in flags}))
        names.append(row[1])
        values = []
        for text_value in row[2:]:
            text_value = text_value.strip()
            if text_value in ("", ABSENT):
                values.append(None)
                continue
            try:
                values.append(float(text_value))
            except ValueError:
                raise FormatError(f"bad value {text_value!r}", lineno) from None
        overall.append(values[0])
        for f, v in zip(flags, values[1:]):
            diffs[f].append(v)
    return models
