"""LIBSVM-format classification data: parsing, scaling, splitting, synthesis.

Rows are stored sparsely as (indices, values) pairs with 0-based feature
indices; the on-disk LIBSVM format is 1-based.  Labels are normalized to
{-1, +1}.  Datasets are immutable after construction and safe to share
between concurrently running experiments.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng


class LibsvmFormatError(ValueError):
    """Malformed LIBSVM text; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass(frozen=True)
class Dataset:
    """Sparse binary-classification sample set.

    rows[i] is a pair of aligned arrays (feature indices, values) with
    strictly increasing indices; labels[i] is -1.0 or +1.0.
    """

    rows: tuple
    labels: np.ndarray
    d: int
    n: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n", len(self.rows))
        if self.n != len(self.labels):
            raise ValueError("row/label count mismatch")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        for idx, _ in self.rows:
            if len(idx) and (idx[-1] >= self.d or idx[0] < 0):
                raise ValueError("feature index out of range")
            if len(idx) > 1 and np.any(np.diff(idx) <= 0):
                raise ValueError("duplicate or unsorted feature indices")

    def dense(self) -> np.ndarray:
        """Materialize an (n, d) dense feature matrix."""
        x = np.zeros((self.n, self.d))
        for i, (idx, val) in enumerate(self.rows):
            x[i, idx] = val
        return x

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            rows=tuple(self.rows[i] for i in indices),
            labels=self.labels[indices].copy(),
            d=self.d,
        )


@dataclass(frozen=True)
class ScalingParams:
    """Per-feature min/max fitted on one split, reusable on another."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if np.any(self.lo > self.hi):
            raise ValueError("per-feature min exceeds max")


def parse_libsvm(text: str) -> Dataset:
    """Parse LIBSVM text (``<label> <idx>:<val> ...`` per line).

    Labels > 0 map to +1 and labels <= 0 to -1.  The dimension is the
    largest feature index seen.  Raises LibsvmFormatError with the offending
    line number on malformed input and ValueError on empty input.
    """
    rows = []
    labels = []
    d = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        try:
            label = float(parts[0])
        except ValueError:
            raise LibsvmFormatError(line_no, f"bad label {parts[0]!r}") from None
        idx = np.empty(len(parts) - 1, dtype=np.int64)
        val = np.empty(len(parts) - 1)
        prev = 0
        for k, tok in enumerate(parts[1:]):
            try:
                i_str, v_str = tok.split(":", 1)
                i = int(i_str)
                v = float(v_str)
            except ValueError:
                raise LibsvmFormatError(line_no, f"bad feature {tok!r}") from None
            if i < 1:
                raise LibsvmFormatError(line_no, f"feature index {i} < 1")
            if i <= prev:
                raise LibsvmFormatError(
                    line_no, f"feature indices not strictly increasing at {i}"
                )
            prev = i
            idx[k] = i - 1
            val[k] = v
        d = max(d, prev)
        rows.append((idx, val))
        labels.append(1.0 if label > 0 else -1.0)
    if not rows:
        raise ValueError("no samples")
    return Dataset(rows=tuple(rows), labels=np.array(labels), d=d)


def serialize_libsvm(ds: Dataset) -> str:
    """Inverse of parse_libsvm (1-based indices, shortest-roundtrip floats)."""
    lines = []
    for (idx, val), y in zip(ds.rows, ds.labels):
        feats = " ".join(f"{i + 1}:{float(v)!r}" for i, v in zip(idx, val))
        lines.append(f"{int(y):+d} {feats}".rstrip())
    return "\n".join(lines) + "\n"


def _column_ranges(ds: Dataset) -> ScalingParams:
    # Implicit zeros participate: a feature absent from any row contributes 0.
    lo = np.full(ds.d, np.inf)
    hi = np.full(ds.d, -np.inf)
    counts = np.zeros(ds.d, dtype=np.int64)
    for idx, val in ds.rows:
        np.minimum.at(lo, idx, val)
        np.maximum.at(hi, idx, val)
        counts[idx] += 1
    has_implicit_zero = counts < ds.n
    lo = np.where(has_implicit_zero, np.minimum(lo, 0.0), lo)
    hi = np.where(has_implicit_zero, np.maximum(hi, 0.0), hi)
    never_seen = counts == 0
    lo[never_seen] = 0.0
    hi[never_seen] = 0.0
    return ScalingParams(lo=lo, hi=hi)


def minmax_scale(ds: Dataset, params: ScalingParams | None = None):
    """Affinely map each feature to [0, 1] using per-feature min/max.

    Fits params on ds when none are given; otherwise applies the supplied
    ones (fit on train, apply to test).  Constant columns map to 0.  Returns
    (scaled dataset, params).
    """
    if params is None:
        params = _column_ranges(ds)
    elif len(params.lo) != ds.d:
        raise ValueError("scaling params dimension mismatch")
    span = params.hi - params.lo
    degenerate = span == 0
    safe_span = np.where(degenerate, 1.0, span)
    # Features whose minimum is nonzero shift implicit zeros to (0-lo)/span,
    # so those entries must be materialized.
    shifted = (~degenerate) & (params.lo != 0)
    shifted_idx = np.flatnonzero(shifted)
    rows = []
    for idx, val in ds.rows:
        if shifted_idx.size:
            merged = np.union1d(idx, shifted_idx)
            dense_vals = np.zeros(len(merged))
            pos = np.searchsorted(merged, idx)
            dense_vals[pos] = val
            idx, val = merged, dense_vals
        new_val = np.where(
            degenerate[idx], 0.0, (val - params.lo[idx]) / safe_span[idx]
        )
        keep = new_val != 0.0
        rows.append((idx[keep].astype(np.int64), new_val[keep]))
    return Dataset(rows=tuple(rows), labels=ds.labels.copy(), d=ds.d), params


def train_test_split(ds: Dataset, test_fraction: float, seed: int):
    """Disjoint seeded split; test size is floor(test_fraction * n)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    if ds.n < 2:
        raise ValueError("need at least 2 samples to split")
    n_test = int(test_fraction * ds.n)
    if ds.n - n_test < 1:
        raise ValueError("train split would be empty")
    order = rng.stream(seed, rng.DOMAIN_SPLIT).permutation(ds.n)
    test_idx = np.sort(order[:n_test])
    train_idx = np.sort(order[n_test:])
    return ds.subset(train_idx), ds.subset(test_idx)


def subsample(ds: Dataset, max_rows: int, seed: int) -> Dataset:
    """Seeded row subsample used to keep large corpora at desk scale."""
    if ds.n <= max_rows:
        return ds
    pick = rng.stream(seed, rng.DOMAIN_SUBSAMPLE).permutation(ds.n)[:max_rows]
    return ds.subset(np.sort(pick))


def synthetic_classification(
    n: int, d: int, seed: int, nnz_per_row: int | None = None
) -> Dataset:
    """Deterministic sparse synthetic stand-in for the LIBSVM corpora.

    Feature values are uniform in [0, 1] (already scaled); labels come from
    a random planted separator with 10% flip noise.
    """
    g = rng.stream(seed, rng.DOMAIN_SYNTHETIC_DATA)
    k = nnz_per_row or max(1, d // 5)
    w_true = g.standard_normal(d) / np.sqrt(d)
    rows = []
    labels = np.empty(n)
    for i in range(n):
        idx = np.sort(g.choice(d, size=k, replace=False)).astype(np.int64)
        val = g.uniform(0.05, 1.0, size=k)
        margin = float(val @ w_true[idx]) + 0.05 * float(g.standard_normal())
        y = 1.0 if margin > 0 else -1.0
        if g.uniform() < 0.1:
            y = -y
        rows.append((idx, val))
        labels[i] = y
    return Dataset(rows=tuple(rows), labels=labels, d=d)
