from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

from . import __version__

logger = logging.getLogger(__name__)

UNITS_NOTE = "frequencies in MHz (linear, 2pi not included); lengths in um; errors and fidelities dimensionless"


def fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.10g}"
    return str(value)


def write_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    comment: Optional[str] = None,
) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# {UNITS_NOTE}\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    logger.info("wrote %s", path)
    return path


def write_gnuplot(
    path: Path,
    csv_name: str,
    x_column: str,
    y_columns: Sequence[str],
    header: Sequence[str],
    title: str,
    logscale_y: bool = False,
) -> Path:
    """Standalone gnuplot script plotting columns of a CSV written next to it."""
    cols = list(header)
    lines: List[str] = [
        f"# generated by spheregate {__version__}",
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{x_column}'",
        "set grid",
    ]
    if logscale_y:
        lines.append("set logscale y")
    plots = [f"'{csv_name}' using {cols.index(x_column) + 1}:{cols.index(y) + 1} with linespoints" for y in y_columns]
    lines.append("plot " + ", \\\n     ".join(plots))
    lines.append("pause -1")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    logger.info("wrote %s", path)
    return path


def write_run_record(
    path: Path,
    command: str,
    config: Dict[str, Any],
    summary: Dict[str, Any],
    files: Sequence[Path],
    failures: Sequence[Dict[str, Any]] = (),
) -> Path:
    record = {
        "spheregate_version": __version__,
        "command": command,
        "config": config,
        "summary": summary,
        "files": [p.name for p in files],
        "failures": list(failures),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2, sort_keys=True, default=_jsonable) + "\n")
    logger.info("wrote %s", path)
    return path


def _jsonable(obj: Any) -> Any:
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "value"):
        return obj.value
    return str(obj)
