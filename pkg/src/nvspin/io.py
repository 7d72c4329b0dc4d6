"""File readers and table writers shared by the command-line tools.

Every table starts with one provenance line::

    # nvspin <version> {"command": ..., ...}

holding the resolved run configuration as sorted-key JSON, so identical
runs produce identical bytes. JSON output carries the same mapping under
the ``provenance`` key instead.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from . import __version__
from .errors import ParseError
from .hfi import HfiMatrix

__all__ = ["read_matrices", "provenance_line", "render_table", "format_value"]


def _floats(cells, lineno, source):
    try:
        return [float(c) for c in cells]
    except ValueError:
        raise ParseError(f"non-numeric value in {cells!r}", lineno, source) from None


def read_matrices(text, source=None):
    """Parse hfi matrices given as upper triangles (XX XY XZ YY YZ ZZ).

    Text input holds one matrix per line, optionally preceded by an integer
    id (7 fields). JSON input is a list of objects with an ``upper`` list and
    an optional ``id``. Returns a list of (id, HfiMatrix); ids default to
    1, 2, ... in file order.
    """
    stripped = text.lstrip()
    if stripped.startswith("[") or stripped.startswith("{"):
        return _matrices_json(text, source)
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cells = line.replace(",", " ").split()
        if len(cells) == 7:
            vals = _floats(cells[1:], lineno, source)
            try:
                mid = int(cells[0])
            except ValueError:
                raise ParseError(f"id must be an integer, got {cells[0]!r}", lineno, source) from None
        elif len(cells) == 6:
            vals, mid = _floats(cells, lineno, source), len(out) + 1
        else:
            raise ParseError(f"expected 6 upper-triangle values (plus optional id), got {len(cells)}", lineno, source)
        out.append((mid, HfiMatrix.from_upper(*vals)))
    return out


def _matrices_json(text, source):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, source) from None
    if isinstance(doc, dict):
        doc = [doc]
    out = []
    for k, item in enumerate(doc, start=1):
        up = item.get("upper") if isinstance(item, dict) else None
        if not isinstance(up, list) or len(up) != 6:
            raise ParseError(f"entry {k} needs an 'upper' list of 6 numbers", None, source)
        out.append((int(item.get("id", k)), HfiMatrix.from_upper(*_floats(up, None, source))))
    return out


def provenance_line(config):
    return f"# nvspin {__version__} {json.dumps(config, sort_keys=True)}\n"


def format_value(v):
    """Shortest round-trip text for floats; ints and strings unchanged."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _json_value(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


def render_table(columns, rows, config, fmt="csv", comments=(), extra=None):
    """Render ``rows`` (sequences matching ``columns``) as CSV or JSON text."""
    if fmt == "json":
        doc = {
            "provenance": config,
            "columns": list(columns),
            "rows": [{c: _json_value(v) for c, v in zip(columns, r)} for r in rows],
        }
        if comments:
            doc["notes"] = list(comments)
        if extra:
            doc.update({k: _json_value(v) for k, v in extra.items()})
        return json.dumps(doc, sort_keys=True, indent=1, ensure_ascii=False) + "\n"
    buf = io.StringIO()
    buf.write(provenance_line(config))
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_value(v) for v in r])
    return buf.getvalue()
