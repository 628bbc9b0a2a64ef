"""Ingestion, cleaning, IQR outlier filtering and summary statistics for
river observation tables.

A dataset is a plain ``list`` of :class:`Sample`.  Every function here is
pure: inputs are never mutated.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

COLUMNS = ("w", "d", "U", "Ustar", "Dl")
FEATURES = ("w", "d", "U", "Ustar")
MISSING_TOKENS = {"", "na", "nan", "null", "none"}


class DataError(ValueError):
    """Raised when input data violates an ingestion contract."""


@dataclass(frozen=True)
class Sample:
    """One river observation (SI units).

    ``Dl`` may be ``None`` for prediction-only rows.  Any field that failed
    to parse is stored as ``None`` so that :func:`clean` can drop the row.
    """

    w: Optional[float]
    d: Optional[float]
    U: Optional[float]
    Ustar: Optional[float]
    Dl: Optional[float] = None

    def values(self) -> tuple:
        return tuple(getattr(self, c) for c in COLUMNS)

    @property
    def is_complete(self) -> bool:
        """True when all five fields are finite and strictly positive."""
        return all(_valid(v) for v in self.values())


def _valid(v) -> bool:
    return v is not None and math.isfinite(v) and v > 0


def _parse_number(text: str) -> Optional[float]:
    text = text.strip()
    if text.lower() in MISSING_TOKENS:
        return None
    try:
        return float(text)
    except ValueError:
        return None


def parse_csv(text: str, require_target: bool = True) -> list[Sample]:
    """Parse a comma-delimited table with a header row into samples.

    Columns may appear in any order and unknown columns are ignored.  Cells
    that are blank, ``NA`` or unparseable become ``None``.
    """
    if not text.strip():
        raise DataError("empty input")
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty input") from None
    required = COLUMNS if require_target else FEATURES
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"missing required column(s): {', '.join(missing)}")
    index = {c: header.index(c) for c in COLUMNS if c in header}

    samples = []
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        values = {}
        for col in COLUMNS:
            j = index.get(col)
            values[col] = _parse_number(row[j]) if j is not None and j < len(row) else None
        samples.append(Sample(**values))
    return samples


def read_csv(path, require_target: bool = True) -> list[Sample]:
    with open(path, encoding="utf-8") as fh:
        return parse_csv(fh.read(), require_target=require_target)


def format_csv(samples: Iterable[Sample]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for s in samples:
        writer.writerow(["NA" if v is None else repr(float(v)) for v in s.values()])
    return buf.getvalue()


def write_csv(path, samples: Iterable[Sample]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(samples))


def clean(samples: Sequence[Sample]) -> list[Sample]:
    """Drop rows with missing/non-finite/non-positive fields and exact duplicates.

    The first occurrence of a duplicated row is kept, preserving order.
    """
    seen = set()
    out = []
    for s in samples:
        if not s.is_complete:
            continue
        key = s.values()
        if key in seen:
            continue
        seen.add(key)
        out.append(s)
    return out


def to_columns(samples: Sequence[Sample], names: Sequence[str] = COLUMNS) -> dict[str, np.ndarray]:
    """Column-major view of ``samples`` as float arrays (``None`` -> nan)."""
    return {
        c: np.array([np.nan if getattr(s, c) is None else getattr(s, c) for s in samples], dtype=float)
        for c in names
    }


def from_arrays(w, d, U, Ustar, Dl=None) -> list[Sample]:
    n = len(w)
    Dl = [None] * n if Dl is None else Dl
    return [
        Sample(float(a), float(b), float(c), float(e), None if f is None else float(f))
        for a, b, c, e, f in zip(w, d, U, Ustar, Dl)
    ]


# -- quartiles ---------------------------------------------------------------

def _median_sorted(xs: Sequence[float]) -> float:
    n = len(xs)
    mid = n // 2
    if n % 2:
        return float(xs[mid])
    return (float(xs[mid - 1]) + float(xs[mid])) / 2.0


def quartiles(values: Iterable[float]) -> tuple[float, float]:
    """Split-halves quartiles ``(Q1, Q3)``.

    For ``2n`` or ``2n+1`` values, Q1 is the median of the ``n`` smallest and
    Q3 the median of the ``n`` largest; the middle element of an odd-length
    set belongs to neither half.  A single value is its own quartiles.
    """
    xs = sorted(float(v) for v in values)
    if not xs:
        raise DataError("quartiles of an empty set")
    if len(xs) == 1:
        return xs[0], xs[0]
    half = len(xs) // 2
    return _median_sorted(xs[:half]), _median_sorted(xs[-half:])


def iqr_fences(values: Iterable[float], k: float = 1.5) -> tuple[float, float]:
    """Tukey fences ``(Q1 - k*IQR, Q3 + k*IQR)`` on split-halves quartiles."""
    values = list(values)
    if not values:
        raise DataError("iqr_fences of an empty set")
    if not all(math.isfinite(v) for v in values):
        raise DataError("iqr_fences requires finite values")
    q1, q3 = quartiles(values)
    iqr = q3 - q1
    return q1 - k * iqr, q3 + k * iqr


def filter_outliers(
    samples: Sequence[Sample], columns: Iterable[str] = COLUMNS, k: float = 1.5
) -> list[Sample]:
    """Keep samples lying inside the IQR fences of every selected column.

    Fences are computed once on the full input, then applied (single pass).
    Running the filter again re-fences the survivors and may remove more.
    """
    samples = list(samples)
    if not samples:
        return []
    selected = [c for c in COLUMNS if c in set(columns)]
    fences = {c: iqr_fences([getattr(s, c) for s in samples], k) for c in selected}
    return [
        s for s in samples
        if all(fences[c][0] <= getattr(s, c) <= fences[c][1] for c in selected)
    ]


# -- descriptive statistics --------------------------------------------------

@dataclass(frozen=True)
class ColumnStats:
    count: int
    min: float
    median: float
    max: float
    iqr: float
    std: float
    var: float
    kurtosis: float
    mad: float
    skewness: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DatasetStats = dict  # column name -> ColumnStats


def column_stats(values: Sequence[float]) -> ColumnStats:
    """Ten summary metrics of one column.

    ``std``/``var`` use the sample (n-1) estimator; skewness and excess
    kurtosis are moment estimators.  A constant column reports 0 for both
    with ``degenerate=True``.
    """
    x = np.sort(np.asarray(values, dtype=float))  # sorted: bitwise order-free sums
    if x.size == 0:
        raise DataError("summary of an empty column")
    q1, q3 = quartiles(x)
    med = float(np.median(x))
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    degenerate = bool(np.ptp(x) == 0)
    if degenerate:
        skew = kurt = 0.0
        std = 0.0
    else:
        skew = float(stats.skew(x))
        kurt = float(stats.kurtosis(x, fisher=True))
    return ColumnStats(
        count=int(x.size),
        min=float(x.min()),
        median=med,
        max=float(x.max()),
        iqr=q3 - q1,
        std=std,
        var=std * std,
        kurtosis=kurt,
        mad=float(np.median(np.abs(x - med))),
        skewness=skew,
        degenerate=degenerate,
    )


def summarize(samples: Sequence[Sample], names: Sequence[str] = COLUMNS) -> DatasetStats:
    if not samples:
        raise DataError("summary of an empty dataset")
    cols = to_columns(samples, names)
    return {c: column_stats(cols[c]) for c in names}


def stats_to_json(summary: DatasetStats) -> dict:
    return {c: s.to_dict() for c, s in summary.items()}


# -- rank correlation --------------------------------------------------------

@dataclass(frozen=True)
class SpearmanResult:
    columns: tuple
    matrix: np.ndarray
    undefined: tuple  # (i, j) pairs involving a constant column, reported as 0

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "matrix": self.matrix.tolist(),
            "undefined": [list(p) for p in self.undefined],
        }


def spearman_matrix(samples: Sequence[Sample], names: Sequence[str] = COLUMNS) -> SpearmanResult:
    """Spearman rank correlation between every pair of columns.

    Ties get average ranks.  Entries involving a constant column are
    undefined; they are reported as 0 and listed in ``undefined``.
    """
    if len(samples) < 3:
        raise DataError("spearman_matrix needs at least 3 samples")
    cols = to_columns(samples, names)
    ranks = np.column_stack([stats.rankdata(cols[c]) for c in names])
    centered = ranks - ranks.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    k = len(names)
    rho = np.zeros((k, k))
    undefined = []
    for i in range(k):
        for j in range(k):
            if i != j and (norms[i] == 0 or norms[j] == 0):
                undefined.append((i, j))
                continue
            if i == j:
                rho[i, j] = 1.0
                continue
            rho[i, j] = centered[:, i] @ centered[:, j] / (norms[i] * norms[j])
    rho = np.clip((rho + rho.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return SpearmanResult(tuple(names), rho, tuple(undefined))
