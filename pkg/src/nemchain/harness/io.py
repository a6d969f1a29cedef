"""Flat-file persistence: CSV tables with a provenance comment line, plus JSON."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

from .. import __version__


def provenance(config_hash: str | None = None, seed: int | None = None, **extra) -> str:
    """Text of the one-line header comment carried by every CSV."""
    parts = [f"nemchain={__version__}", f"config_hash={config_hash}", f"seed={seed}"]
    parts += [f"{k}={v}" for k, v in extra.items()]
    return " ".join(parts)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):  # numpy scalar
        return _fmt(value.item())
    return str(value)


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence], header: str | None = None) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if header is not None:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _parse(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_csv(path: str | Path) -> tuple[dict, list[str], list[list]]:
    """Inverse of :func:`write_csv`: ``(header_fields, columns, rows)``; numbers are parsed."""
    meta: dict = {}
    body = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                for token in line[1:].split():
                    k, _, v = token.partition("=")
                    meta[k] = v
            else:
                body.append(line)
    reader = csv.reader(io.StringIO("".join(body)))
    columns = next(reader)
    rows = [[_parse(v) for v in row] for row in reader]
    return meta, columns, rows


def write_json(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence], header: dict | None = None) -> Path:
    path = Path(path)
    payload = {"meta": header or {}, "columns": list(columns), "rows": [[_jsonable(v) for v in r] for r in rows]}
    path.write_text(json.dumps(payload, indent=1, sort_keys=True))
    return path


def _jsonable(v):
    return v.item() if hasattr(v, "item") else v


def write_table(path: str | Path, columns, rows, fmt: str = "csv", config_hash=None, seed=None) -> Path:
    """Write a table as CSV or JSON, choosing the extension from ``fmt``."""
    path = Path(path).with_suffix("." + fmt)
    rows = list(rows)
    if fmt == "csv":
        return write_csv(path, columns, rows, provenance(config_hash, seed))
    if fmt == "json":
        return write_json(path, columns, rows, {"nemchain": __version__, "config_hash": config_hash, "seed": seed})
    raise ValueError(f"unknown format {fmt!r}")


def format_aligned(columns: Sequence[str], rows: Sequence[Sequence], precision: int = 3) -> str:
    cells = [list(columns)] + [[f"{v:.{precision}f}" if isinstance(v, float) else str(v) for v in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells)
