"""
CSV writers for trajectories, error curves, sweep tables and matrices.

Floats are written with repr(), the shortest text that parses back to the same
double, so exports round-trip exactly and identical runs give identical bytes.
"""

import csv
import io
import sys
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from app.errors import FileAccessError
from app.models import SweepTable
from app.services.protocol_service import Trajectory


def _fmt(value: float) -> str:
    return repr(float(value))


@contextmanager
def _open_output(path: Optional[str]) -> Iterator[TextIO]:
    """path None or "-" writes to stdout"""
    if path in (None, "-"):
        yield sys.stdout
        return
    try:
        with open(path, "w", newline="") as f:
            yield f
    except OSError as e:
        raise FileAccessError(f"Cannot write {path}: {e}")


def _write(path: Optional[str], header: Optional[Sequence[str]], rows: Sequence[Sequence[str]]) -> None:
    with _open_output(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        if header is not None:
            writer.writerow(header)
        writer.writerows(rows)


def trajectory_rows(traj: Trajectory) -> Tuple[List[str], List[List[str]]]:
    n = traj.n
    header = ["k"] + [f"x_{j}" for j in range(1, n + 1)] + [f"s_{j}" for j in range(1, n + 1)] + ["error"]
    rows = [
        [str(k)] + [_fmt(v) for v in traj.x[k]] + [_fmt(v) for v in traj.s[k]] + [_fmt(traj.error[k])]
        for k in range(traj.iterations + 1)
    ]
    return header, rows


def export_trajectory(traj: Trajectory, path: Optional[str]) -> None:
    header, rows = trajectory_rows(traj)
    _write(path, header, rows)


def export_curve(mean_error: np.ndarray, path: Optional[str]) -> None:
    _write(path, ["k", "mean_error"], [[str(k), _fmt(v)] for k, v in enumerate(mean_error)])


def export_curves_wide(curves: Dict[str, np.ndarray], path: Optional[str]) -> None:
    """One column per labelled curve, all sharing the k column"""
    labels = list(curves)
    length = min(len(curves[label]) for label in labels)
    rows = [[str(k)] + [_fmt(curves[label][k]) for label in labels] for k in range(length)]
    _write(path, ["k"] + labels, rows)


def export_sweep(table: SweepTable, path: Optional[str]) -> None:
    if table.parameter == "tau_bar":
        rows = [[str(int(row.value)), _fmt(row.mean_gap)] for row in table.rows]
    else:
        rows = [[_fmt(row.value), _fmt(row.mean_gap)] for row in table.rows]
    _write(path, [table.parameter, "mean_gap"], rows)


def export_matrix(M: np.ndarray, path: Optional[str]) -> None:
    """Row-major dump without a header"""
    _write(path, None, [[_fmt(v) for v in row] for row in np.asarray(M)])


def read_csv_table(path: str) -> Tuple[List[str], np.ndarray]:
    try:
        with open(path, "r", newline="") as f:
            return parse_csv_text(f.read())
    except OSError as e:
        raise FileAccessError(f"Cannot read {path}: {e}")


def parse_csv_text(text: str) -> Tuple[List[str], np.ndarray]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    data = np.array([[float(v) for v in row] for row in reader if row])
    return header, data
