"""Utilities for writing run output: CSV tables, JSON documents and summaries."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

from .data import Dataset
from .flow import Trajectory

TRAJECTORY_COLUMNS = (
    "step",
    "tau",
    "log_loss",
    "norm_w",
    "alpha",
    "alpha_norm",
    "beta",
    "zeta",
    "theta",
    "j_potential",
    "euler_residual",
    "rate_alpha",
    "rate_zeta",
)
MARGIN_COLUMNS = ("tau", "example_index", "normalized_margin", "dual_weight")
GRID_COLUMNS = ("x", "y", "normalized_prediction")

PathLike = Union[str, Path]


def format_real(value: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(value), ".17g")


def _encode(value: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    close = " " * (indent * level)
    if isinstance(value, Enum):
        value = value.value
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValueError(f"cannot write non-finite real {value!r} as JSON")
        return format_real(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, Mapping):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(key))}: {_encode(item, indent, level + 1)}" for key, item in value.items()]
        return "{\n" + ",\n".join(items) + f"\n{close}}}"
    if isinstance(value, (list, tuple, np.ndarray)):
        items = list(value)
        if not items:
            return "[]"
        if all(not isinstance(item, (Mapping, list, tuple, np.ndarray)) for item in items):
            return "[" + ", ".join(_encode(item, indent, level + 1) for item in items) + "]"
        return "[\n" + ",\n".join(f"{pad}{_encode(item, indent, level + 1)}" for item in items) + f"\n{close}]"
    raise TypeError(f"cannot serialize {type(value).__name__} to JSON")


def dumps_json(document: Any, indent: int = 2) -> str:
    """JSON text with every real written to 17 significant digits."""
    return _encode(document, indent, 0) + "\n"


def write_text(path: PathLike, text: str) -> Path:
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", newline="", dir=target.parent, prefix=f".{target.name}.", delete=False
    )
    try:
        with handle:
            handle.write(text)
        os.replace(handle.name, target)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise
    return target


def csv_text(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([str(int(v)) if isinstance(v, (int, np.integer)) else format_real(v) for v in row])
    return buffer.getvalue()


def trajectory_rows(trajectory: Trajectory) -> List[tuple]:
    return [tuple(getattr(record, column) for column in TRAJECTORY_COLUMNS) for record in trajectory.records]


def final_margin_order(trajectory: Trajectory) -> np.ndarray:
    """Example order by final normalized margin (stable for ties)."""
    if not trajectory.records:
        return np.zeros(0, dtype=int)
    return np.argsort(trajectory.records[-1].margins_norm, kind="stable")


def margin_rows(trajectory: Trajectory) -> List[tuple]:
    order = final_margin_order(trajectory)
    rows: List[tuple] = []
    for record in trajectory.records:
        for rank, index in enumerate(order):
            rows.append((record.tau, rank, record.margins_norm[index], record.duals[index]))
    return rows


def write_trajectory_csv(path: PathLike, trajectory: Trajectory) -> Path:
    return write_text(path, csv_text(TRAJECTORY_COLUMNS, trajectory_rows(trajectory)))


def write_margins_csv(path: PathLike, trajectory: Trajectory) -> Path:
    return write_text(path, csv_text(MARGIN_COLUMNS, margin_rows(trajectory)))


def write_grid_csv(path: PathLike, xs: np.ndarray, ys: np.ndarray, values: np.ndarray) -> Path:
    rows = zip(np.ravel(xs), np.ravel(ys), np.ravel(values))
    return write_text(path, csv_text(GRID_COLUMNS, rows))


def write_json(path: PathLike, document: Any) -> Path:
    return write_text(path, dumps_json(document))


def write_verify_json(path: PathLike, report: Any) -> Path:
    """``report`` is a VerifyReport (anything with ``to_dict``)."""
    return write_json(path, report.to_dict())


def write_dataset(path: PathLike, dataset: Dataset) -> Path:
    return write_json(path, dataset.to_dict())


def format_run_summary(
    trajectory: Trajectory,
    *,
    heading: str = "Gradient flow run",
    description: Optional[str] = None,
) -> str:
    """Render a short human-readable summary of a trajectory."""
    message = f"📈 *{heading}*"
    if description:
        message += f" – {description}"
    message += "\n\n"

    if not trajectory.records:
        return message + "No records were written.\n"

    first, last = trajectory.records[0], trajectory.records[-1]
    message += f"• records: {len(trajectory.records)} (tau {first.tau:.3f} → {last.tau:.3f})\n"
    message += f"• steps: {last.step}\n"
    message += f"• ||W||: {first.norm_w:.4g} → {last.norm_w:.4g}\n"
    message += f"• normalized smoothed margin: {first.alpha_norm:.6g} → {last.alpha_norm:.6g}\n"
    message += f"• min normalized margin: {float(np.min(last.margins_norm)):.6g}\n"
    message += f"• path length zeta: {last.zeta:.6g}\n"
    message += f"• alignment angle: {last.theta:.3e} rad\n"
    return message
