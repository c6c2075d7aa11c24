"""
File formats: JSON documents and versioned CSV tables.

Every write goes to a temp file first and is renamed into place, so readers never
see half-written output. CSV files start with
    # format_version=<N> kind=<kind>
followed by a column header row.
"""
import csv
import json
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

FORMAT_VERSION = 1

# Fixed column sets; None means the columns are free (checked against the header only).
CSV_KINDS: Dict[str, Optional[Tuple[str, ...]]] = {
    "coeffs": ("delta", "re_r", "im_r", "T", "psi", "x_p", "y_p", "x_m", "y_m", "sql"),
    "coeffs_basis": None,
    "scan": ("index", "delta", "j_cos", "j_sin"),
    "moments": ("delta", "mean_c", "mean_s", "var_c", "var_s", "cov_cs", "sql"),
    "dc": ("index", "delta", "level"),
    "tomography": ("delta", "theta", "mean", "variance"),
    "phi_sweep": ("phi", "p_s", "q_s", "p_a", "q_a", "se_p_s", "se_q_s", "se_p_a", "se_q_a", "radius", "radius_se"),
}


class FormatError(ValueError):
    """Malformed input file; row is the 1-based line number when known."""

    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(message)
        self.row = row


def _replace_atomic(path: str, write) -> None:
    """Run write(f) on a temp file next to path, fsync, then rename over path."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = path + ".tmp." + str(os.getpid())
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as f:
            write(f)
            f.flush()
            try:
                os.fsync(f.fileno())
            except (OSError, AttributeError):
                pass
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            try:
                os.remove(tmp)
            except OSError:
                pass


# --- JSON ---

def read_json(path: str) -> Any:
    """Parsed JSON; FormatError when the file is not valid JSON."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}", row=e.lineno) from e


def save_json_atomic(path: str, data: Any) -> None:
    def write(f):
        json.dump(data, f, indent=2, ensure_ascii=False, allow_nan=True)
        f.write("\n")

    _replace_atomic(path, write)


# --- CSV ---

def _header_line(kind: str) -> str:
    return f"# format_version={FORMAT_VERSION} kind={kind}\n"


def write_csv_atomic(path: str, kind: str, columns: Sequence[str], data: np.ndarray,
                     int_columns: Sequence[str] = ()) -> None:
    """Write a 2D array with full float precision; int_columns are written as integers."""
    if kind not in CSV_KINDS:
        raise ValueError(f"unknown CSV kind {kind!r}")
    expected = CSV_KINDS[kind]
    if expected is not None and tuple(columns) != expected:
        raise ValueError(f"{kind} CSV needs columns {expected}, got {tuple(columns)}")
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != len(columns):
        raise ValueError(f"{kind} CSV data must have shape (n, {len(columns)}), got {arr.shape}")
    fmt = ["%d" if c in int_columns else "%.17g" for c in columns]

    def write(f):
        f.write(_header_line(kind))
        f.write(",".join(columns) + "\n")
        if len(arr):
            np.savetxt(f, arr, delimiter=",", fmt=fmt)

    _replace_atomic(path, write)


def _parse_version_line(path: str, line: str, kind: str) -> None:
    if not line.startswith("#"):
        raise FormatError(f"{path}: missing '# format_version=... kind=...' header", row=1)
    fields = dict(part.split("=", 1) for part in line[1:].split() if "=" in part)
    try:
        version = int(fields.get("format_version", ""))
    except ValueError:
        raise FormatError(f"{path}: unreadable format_version", row=1) from None
    if version > FORMAT_VERSION:
        raise FormatError(f"{path}: format_version {version} is newer than supported {FORMAT_VERSION}", row=1)
    if fields.get("kind") != kind:
        raise FormatError(f"{path}: expected kind={kind}, found kind={fields.get('kind')}", row=1)


def read_csv(path: str, kind: str) -> Tuple[List[str], np.ndarray]:
    """Columns and a float array; FormatError names the offending row."""
    if kind not in CSV_KINDS:
        raise ValueError(f"unknown CSV kind {kind!r}")
    rows: List[List[float]] = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        first = f.readline()
        _parse_version_line(path, first.strip(), kind)
        reader = csv.reader(f)
        try:
            columns = [c.strip() for c in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: missing column header", row=2) from None
        expected = CSV_KINDS[kind]
        if expected is not None and tuple(columns) != expected:
            raise FormatError(f"{path}: columns {columns} do not match {list(expected)}", row=2)
        width = len(columns)
        for lineno, row in enumerate(reader, start=3):
            if not row:
                continue
            if len(row) != width:
                raise FormatError(f"{path}: row {lineno} has {len(row)} fields, expected {width}", row=lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise FormatError(f"{path}: row {lineno} has a non-numeric field", row=lineno) from None
    data = np.array(rows, dtype=float).reshape(-1, width)
    return columns, data


def column(columns: Sequence[str], data: np.ndarray, name: str) -> np.ndarray:
    try:
        return data[:, list(columns).index(name)]
    except ValueError:
        raise FormatError(f"missing column {name!r}") from None
