"""Dataset ingestion and deterministic train/validation/test splitting.

All observation data is carried as a sparse triple list (row, col, value)
over an N x M array.  Two external formats are read (MovieLens tab files
and generic edge lists) and one canonical format is written, so that
everything downstream consumes a single representation.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateObservationError,
    EmptyDatasetError,
    ParseError,
)

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15


def mix_seed(seed: int, stream: int) -> int:
    """Derive an independent child seed via the splitmix64 finalizer.

    ``mix_seed(s, r)`` equals the (r+1)-th output of a splitmix64 generator
    seeded with ``s``, so distinct ``stream`` values give statistically
    independent 64-bit seeds without any shared generator state.
    """
    z = (seed + (stream + 1) * _GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(eq=False)
class ObservationSet:
    """A partially observed N x M array stored as (row, col, value) triples.

    Rows/cols are 0-based int64 arrays of equal length; values are float64.
    Order is significant: downstream accumulation follows triple order so
    runs are reproducible.
    """

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.validate:
            self.check()

    def check(self):
        if not (len(self.rows) == len(self.cols) == len(self.values)):
            raise ValueError("rows, cols and values must have equal length")
        if len(self.rows) == 0:
            raise EmptyDatasetError("observation set has no triples")
        if self.n_rows <= 0 or self.n_cols <= 0:
            raise ValueError("array dimensions must be positive")
        if self.rows.min() < 0 or self.rows.max() >= self.n_rows:
            raise ValueError("row index out of range")
        if self.cols.min() < 0 or self.cols.max() >= self.n_cols:
            raise ValueError("column index out of range")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("observation values must be finite")
        keys = self.rows * self.n_cols + self.cols
        if len(np.unique(keys)) != len(keys):
            raise DuplicateObservationError("duplicate (row, col) pair")

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return (
            self.n_rows == other.n_rows
            and self.n_cols == other.n_cols
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.values, other.values)
        )

    @classmethod
    def from_triples(cls, n_rows, n_cols, triples, validate=True):
        triples = list(triples)
        rows = np.array([t[0] for t in triples], dtype=np.int64)
        cols = np.array([t[1] for t in triples], dtype=np.int64)
        values = np.array([t[2] for t in triples], dtype=np.float64)
        return cls(n_rows, n_cols, rows, cols, values, validate=validate)

    @property
    def triples(self):
        """Triples as a list of (row, col, value) tuples."""
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))

    def pair_set(self):
        """The observed (row, col) index pairs as a Python set."""
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    def subset(self, indices, validate=True):
        """New ObservationSet keeping the triples at ``indices`` (in order)."""
        return ObservationSet(
            self.n_rows,
            self.n_cols,
            self.rows[indices],
            self.cols[indices],
            self.values[indices],
            validate=validate,
        )

    def value_range(self):
        return float(self.values.min()), float(self.values.max())


@dataclass(frozen=True)
class SplitSpec:
    """How to carve repeated test/validation/train partitions out of a dataset."""

    test_fraction: float
    validation_fraction: float
    n_repeats: int
    seed: int

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be positive")
        held = self.test_fraction + (1 - self.test_fraction) * self.validation_fraction
        if held >= 1.0:
            raise ValueError("fractions leave no training data")


@dataclass
class DataSplit:
    train: ObservationSet
    validation: ObservationSet
    test: ObservationSet


def _parse_fields(path, line_no, line, n_fields):
    fields = line.split("\t")
    if len(fields) != n_fields:
        raise ParseError(
            path, line_no, f"expected {n_fields} tab-separated fields, got {len(fields)}"
        )
    return fields


def ingest_movielens(path) -> ObservationSet:
    """Read a MovieLens-style `user<TAB>item<TAB>rating<TAB>timestamp` file.

    IDs are 1-indexed integers; ratings are integers in [1, 5].  The
    timestamp is discarded.  Dimensions are the maximum user/item ids and
    indices are stored 0-based.
    """
    rows, cols, values = [], [], []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line == "":
                raise ParseError(path, line_no, "blank line")
            fields = _parse_fields(path, line_no, line, 4)
            try:
                user = int(fields[0])
                item = int(fields[1])
                rating = int(fields[2])
                int(fields[3])
            except ValueError:
                raise ParseError(path, line_no, f"non-numeric field in {fields!r}") from None
            if user < 1 or item < 1:
                raise ParseError(path, line_no, "ids must be 1-indexed positive integers")
            if not 1 <= rating <= 5:
                raise ParseError(path, line_no, f"rating {rating} outside [1, 5]")
            key = (user, item)
            if key in seen:
                raise DuplicateObservationError(
                    f"{path}:{line_no}: duplicate observation for user {user}, item {item}"
                )
            seen.add(key)
            rows.append(user - 1)
            cols.append(item - 1)
            values.append(float(rating))
    if not rows:
        raise EmptyDatasetError(f"{path}: no observations")
    n_rows = max(rows) + 1
    n_cols = max(cols) + 1
    return ObservationSet(n_rows, n_cols, rows, cols, values)


def ingest_edge_list(path, square=False) -> ObservationSet:
    """Read a `row<TAB>col<TAB>value` edge list with 1-indexed ids.

    Graph data normally carries values in {0, 1} but any real value is
    accepted.  With ``square`` set, both index columns share one id space
    and N = M = the largest id seen; row and column entities still get
    independent latent features downstream.
    """
    rows, cols, values = [], [], []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line == "":
                raise ParseError(path, line_no, "blank line")
            fields = _parse_fields(path, line_no, line, 3)
            try:
                r = int(fields[0])
                c = int(fields[1])
                v = float(fields[2])
            except ValueError:
                raise ParseError(path, line_no, f"non-numeric field in {fields!r}") from None
            if r < 1 or c < 1:
                raise ParseError(path, line_no, "ids must be 1-indexed positive integers")
            if not np.isfinite(v):
                raise ParseError(path, line_no, f"non-finite value {fields[2]}")
            key = (r, c)
            if key in seen:
                raise DuplicateObservationError(
                    f"{path}:{line_no}: duplicate observation for ({r}, {c})"
                )
            seen.add(key)
            rows.append(r - 1)
            cols.append(c - 1)
            values.append(v)
    if not rows:
        raise EmptyDatasetError(f"{path}: no observations")
    if square:
        n = max(max(rows), max(cols)) + 1
        n_rows = n_cols = n
    else:
        n_rows = max(rows) + 1
        n_cols = max(cols) + 1
    return ObservationSet(n_rows, n_cols, rows, cols, values)


def write_canonical(data: ObservationSet, path):
    """Write the canonical `#obs N M` + 0-based `row<TAB>col<TAB>value` format.

    Values are written with repr so a read back is bit-exact.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#obs {data.n_rows} {data.n_cols}\n")
        for r, c, v in zip(data.rows.tolist(), data.cols.tolist(), data.values.tolist()):
            fh.write(f"{r}\t{c}\t{v!r}\n")


def read_canonical(path) -> ObservationSet:
    """Read a file produced by :func:`write_canonical`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split()
        if len(parts) != 3 or parts[0] != "#obs":
            raise ParseError(path, 1, "expected header line '#obs N M'")
        try:
            n_rows, n_cols = int(parts[1]), int(parts[2])
        except ValueError:
            raise ParseError(path, 1, "non-integer dimensions in header") from None
        rows, cols, values = [], [], []
        for line_no, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if line == "":
                raise ParseError(path, line_no, "blank line")
            fields = _parse_fields(path, line_no, line, 3)
            try:
                rows.append(int(fields[0]))
                cols.append(int(fields[1]))
                values.append(float(fields[2]))
            except ValueError:
                raise ParseError(path, line_no, f"non-numeric field in {fields!r}") from None
    if not rows:
        raise EmptyDatasetError(f"{path}: no observations")
    return ObservationSet(n_rows, n_cols, rows, cols, values)


FORMAT_READERS = {
    "movielens": lambda path, square=False: ingest_movielens(path),
    "edgelist": ingest_edge_list,
    "canonical": lambda path, square=False: read_canonical(path),
}


def load_dataset(path, fmt, square=False) -> ObservationSet:
    if fmt not in FORMAT_READERS:
        raise ValueError(f"unknown dataset format {fmt!r}")
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset file not found: {path}")
    return FORMAT_READERS[fmt](path, square=square)


def split_sizes(n_obs: int, spec: SplitSpec):
    """Partition sizes implied by floor arithmetic on the fractions."""
    n_test = int(np.floor(spec.test_fraction * n_obs))
    n_val = int(np.floor(spec.validation_fraction * (n_obs - n_test)))
    n_train = n_obs - n_test - n_val
    return n_train, n_val, n_test


def split_index_arrays(data: ObservationSet, spec: SplitSpec):
    """Per-repeat (train, validation, test) triple-index arrays.

    Repeat r derives its own RNG from ``mix_seed(spec.seed, r)``, permutes
    the triple indices once, and takes the leading block as the test set
    and the next block (a fraction of what remains) as the validation set.
    Indices refer to triple positions in the source ObservationSet, so
    split files written from these arrays never copy data.
    """
    n_obs = len(data)
    n_train, n_val, n_test = split_sizes(n_obs, spec)
    if n_test == 0 or n_val == 0 or n_train <= 0:
        raise EmptyDatasetError(
            f"fractions give empty partition: train={n_train}, "
            f"validation={n_val}, test={n_test} of {n_obs}"
        )
    out = []
    for r in range(spec.n_repeats):
        rng = np.random.default_rng(mix_seed(spec.seed, r))
        perm = rng.permutation(n_obs)
        out.append(
            (
                np.sort(perm[n_test + n_val :]),
                np.sort(perm[n_test : n_test + n_val]),
                np.sort(perm[:n_test]),
            )
        )
    return out


def make_splits(data: ObservationSet, spec: SplitSpec) -> list[DataSplit]:
    """Produce ``spec.n_repeats`` deterministic train/validation/test splits.

    Identical inputs give identical splits; see :func:`split_index_arrays`
    for the derivation.
    """
    splits = []
    for train_idx, val_idx, test_idx in split_index_arrays(data, spec):
        splits.append(
            DataSplit(
                train=data.subset(train_idx),
                validation=data.subset(val_idx),
                test=data.subset(test_idx),
            )
        )
    return splits
