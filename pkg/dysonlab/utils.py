from pathlib import Path
from typing import Iterable
import csv
import json
import numpy as np


def format_float(value: float) -> str:
    """Seventeen significant digits, locale independent."""
    value = float(value)
    if np.isnan(value):
        return "nan"
    if np.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.17g}"


def to_jsonable(value):
    """Recursively convert numpy scalars and arrays into plain JSON values."""
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [_finite_or_string(value.real), _finite_or_string(value.imag)]
    if isinstance(value, (float, np.floating)):
        return _finite_or_string(float(value))
    return value


def _finite_or_string(value: float) -> float | str:
    # round trips through repr, which is exactly 17 significant digits or fewer
    value = float(value)
    return value if np.isfinite(value) else format_float(value)


def write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        json.dump(to_jsonable(payload), file, indent=2, sort_keys=True)
        file.write("\n")


def write_csv(path: Path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                format_float(item) if isinstance(item, (float, np.floating)) else item
                for item in row
            )


def read_csv_columns(path: Path) -> dict[str, np.ndarray]:
    with open(path, "r", encoding="utf-8", newline="") as file:
        reader = csv.DictReader(file)
        rows = list(reader)
    if not rows:
        return {}
    return {key: np.array([float(row[key]) for row in rows]) for key in rows[0]}


def runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True in a boolean array, as inclusive (start, stop) indices."""
    mask = np.asarray(mask, dtype=bool)
    padded = np.concatenate(([False], mask, [False]))
    changes = np.flatnonzero(np.diff(padded.astype(int)))
    return [(int(start), int(stop) - 1) for start, stop in zip(changes[::2], changes[1::2])]
