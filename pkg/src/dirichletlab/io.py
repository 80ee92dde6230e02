"""File formats: form spec files, measure/function CSV, sequence expressions.

All numeric output uses 15 significant digits so that identical inputs
reproduce byte-identical files.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .core import GraphForm, ValidationError, form_from_edges

FMT = "%.15g"


def fmt(x) -> str:
    return FMT % float(x)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def read_form(path, allow_null_base=False) -> GraphForm:
    """Parse a form spec file.

    Lines: ``points a b c``, ``edge a b 1.5``, ``kill a 0.5``,
    ``measure a 2.0``; '#' starts a comment.  Base measure defaults to 1,
    killing to 0.
    """
    labels: list = []
    edges: list = []
    kills: dict = {}
    measures: dict = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            kind, args = parts[0], parts[1:]
            try:
                if kind == "points":
                    if labels:
                        raise ValidationError("duplicate points line")
                    labels = list(args)
                elif kind == "edge":
                    a, b, c = args
                    edges.append((a, b, float(c)))
                elif kind == "kill":
                    a, v = args
                    kills[a] = kills.get(a, 0.0) + float(v)
                elif kind == "measure":
                    a, v = args
                    if a in measures:
                        raise ValidationError(f"duplicate measure for {a}")
                    measures[a] = float(v)
                else:
                    raise ValidationError(f"unknown directive {kind!r}")
            except (ValueError, IndexError) as exc:
                raise ValidationError(f"{path}:{ln}: bad line {line!r}: {exc}") from None
    if not labels:
        raise ValidationError(f"{path}: missing points line")
    index = {lab: k for k, lab in enumerate(labels)}
    if len(index) != len(labels):
        raise ValidationError(f"{path}: duplicate point label")

    def look(lab):
        if lab not in index:
            raise ValidationError(f"{path}: unknown point label {lab!r}")
        return index[lab]

    n = len(labels)
    edge_list = [(look(a), look(b), c) for a, b, c in edges]
    kappa = np.zeros(n)
    for lab, v in kills.items():
        kappa[look(lab)] = v
    mu = np.ones(n)
    for lab, v in measures.items():
        mu[look(lab)] = v
    return form_from_edges(n, edge_list, killing=kappa, base_measure=mu,
                           labels=labels, allow_null_base=allow_null_base)


def write_form(path, form: GraphForm):
    lines = ["# form specification", "points " + " ".join(form.labels)]
    for i, j, c in zip(form.edge_i, form.edge_j, form.edge_c):
        lines.append(f"edge {form.labels[i]} {form.labels[j]} {fmt(c)}")
    for i, k in enumerate(form.kappa):
        if k != 0.0:
            lines.append(f"kill {form.labels[i]} {fmt(k)}")
    for i, v in enumerate(form.mu):
        lines.append(f"measure {form.labels[i]} {fmt(v)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_csv_rows(path):
    rows = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([cell.strip() for cell in line.split(",")])
    return rows


def read_point_values(path, form: GraphForm, default=0.0, kind="value") -> np.ndarray:
    """CSV (point, value) aligned with the form's labels; header optional."""
    rows = _read_csv_rows(path)
    out = np.full(form.n, float(default))
    seen = set()
    for row in rows:
        if len(row) != 2:
            raise ValidationError(f"{path}: expected two columns, got {row}")
        label, value = row
        try:
            v = float(value)
        except ValueError:
            if label.lower() == "point":
                continue  # header
            raise ValidationError(f"{path}: bad {kind} {value!r} for {label!r}") from None
        if label not in form.labels:
            raise ValidationError(f"{path}: unknown point label {label!r}")
        if label in seen:
            raise ValidationError(f"{path}: duplicate row for {label!r}")
        seen.add(label)
        out[form.index_of(label)] = v
    return out


def read_measure(path, form: GraphForm) -> np.ndarray:
    m = read_point_values(path, form, default=0.0, kind="weight")
    if np.any(m < 0):
        raise ValidationError(f"{path}: negative measure weight")
    return m


def write_point_values(path, form: GraphForm, values, header=("point", "value"),
                       comments=()):
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for lab, v in zip(form.labels, values):
        lines.append(f"{lab},{fmt(v)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_table(path, header, rows, comments=()):
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(cell if isinstance(cell, str) else fmt(cell)
                              for cell in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_generators(path, form: GraphForm) -> list:
    """CSV with one row per point: point,g0,g1,...; returns the columns."""
    rows = _read_csv_rows(path)
    if not rows:
        raise ValidationError(f"{path}: empty generator file")
    start = 0
    if rows[0][0].lower() == "point":
        start = 1
    data = {}
    width = None
    for row in rows[start:]:
        label, vals = row[0], row[1:]
        if width is None:
            width = len(vals)
        if len(vals) != width or width == 0:
            raise ValidationError(f"{path}: ragged generator row {row}")
        if label not in form.labels:
            raise ValidationError(f"{path}: unknown point label {label!r}")
        data[label] = [float(v) for v in vals]
    missing = [lab for lab in form.labels if lab not in data]
    if missing:
        raise ValidationError(f"{path}: missing generator rows for {missing}")
    matrix = np.array([data[lab] for lab in form.labels])
    return [matrix[:, k].copy() for k in range(matrix.shape[1])]


def read_sequence(path, form: GraphForm) -> list:
    """Expression file: one python expression per line, evaluated with
    ``x`` (vertex coordinates, or normalized index), ``i`` (indices),
    ``n`` (1-based line number) and ``np``."""
    x = form.positions
    if x is None:
        x = np.arange(form.n, dtype=float) / max(form.n - 1, 1)
    i = np.arange(form.n)
    seq = []
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                value = eval(line, {"__builtins__": {}},
                             {"np": np, "x": x, "i": i, "n": len(seq) + 1})
            except Exception as exc:
                raise ValidationError(f"{path}:{ln}: bad expression: {exc}") from None
            arr = np.asarray(value, dtype=float) * np.ones(form.n)
            if arr.shape != (form.n,):
                raise ValidationError(f"{path}:{ln}: expression has wrong shape")
            seq.append(arr)
    if not seq:
        raise ValidationError(f"{path}: no expressions found")
    return seq
