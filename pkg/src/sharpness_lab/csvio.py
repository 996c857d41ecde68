"""Deterministic CSV output.

Floats are serialized with 17 significant digits so values round-trip
exactly and reruns produce byte-identical files; None becomes an empty
cell. Quoting follows RFC 4180 (minimal quoting, quotes doubled).
"""

from __future__ import annotations

import csv
import io
from typing import Iterable, Sequence


def fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def csv_bytes(header: Sequence[str], rows: Iterable[Sequence]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([fmt_cell(v) for v in row])
    return buf.getvalue().encode("utf-8")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    data = csv_bytes(header, rows)
    with open(path, "wb") as f:
        f.write(data)
