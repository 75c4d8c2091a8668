"""Series ingestion and atomic, header-first record files."""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidArgument


def ingest(path, fmt: str = "values") -> tuple[np.ndarray, int]:
    """Read one numeric record per line.

    ``fmt="values"`` returns the column as is. ``fmt="prices"`` returns the
    percentage log-returns ``100 (log P_t - log P_{t-1})`` after dropping
    missing or nonpositive prices. Blank lines and ``#`` comments are
    ignored; with several comma/tab separated columns the last one is used,
    so date-stamped exports work directly.

    Returns the series and the number of dropped rows.
    """
    if fmt not in ("values", "prices"):
        raise InvalidArgument("format must be 'values' or 'prices'")
    vals = []
    dropped = 0
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            field = line.replace("\t", ",").split(",")[-1].strip()
            if field == "" or field.lower() in ("na", "nan", "null", "."):
                if fmt == "prices":
                    dropped += 1
                    continue
                raise InvalidArgument(f"{path}:{lineno}: missing value")
            try:
                v = float(field)
            except ValueError:
                if not vals and not header_seen:
                    header_seen = True
                    continue
                raise InvalidArgument(f"{path}:{lineno}: cannot parse {field!r}") from None
            if fmt == "prices" and not (math.isfinite(v) and v > 0):
                dropped += 1
                continue
            if not math.isfinite(v):
                raise InvalidArgument(f"{path}:{lineno}: non-finite value")
            vals.append(v)
    arr = np.asarray(vals, dtype=float)
    if fmt == "prices":
        if arr.size < 2:
            raise InvalidArgument("at least two valid prices are required")
        return 100.0 * np.diff(np.log(arr)), dropped
    if arr.size < 1:
        raise InvalidArgument("no observations found")
    return arr, dropped


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to a temporary file in the target directory, then rename it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else str(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(_fmt(x) for x in np.asarray(v).ravel().tolist())
    return str(v)


def format_records(fields: Sequence[str], records: Iterable[Mapping],
                   config: Mapping | None = None) -> str:
    """Tab-separated records preceded by an optional ``# config`` echo and a header line."""
    lines = []
    if config is not None:
        lines.append("# config " + json.dumps(config, sort_keys=True, default=_jsonable))
    lines.append("\t".join(fields))
    for rec in records:
        lines.append("\t".join(_fmt(rec.get(f)) for f in fields))
    return "\n".join(lines) + "\n"


def write_records(path, fields, records, config=None) -> None:
    atomic_write_text(path, format_records(fields, records, config))


def read_records(path) -> tuple[dict | None, list[dict]]:
    """Inverse of :func:`write_records` (values are returned as strings)."""
    config = None
    rows = []
    header = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# config "):
            config = json.loads(line[len("# config "):])
            continue
        if not line.strip():
            continue
        parts = line.split("\t")
        if header is None:
            header = parts
            continue
        rows.append(dict(zip(header, parts)))
    return config, rows


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o).__name__}")
