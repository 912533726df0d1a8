"""Feature-matrix ingestion, stratified splitting, quantile binning and tensor IO.

On-disk formats owned here:

* Feature CSV: UTF-8, header ``id,label,f0,f1,...,f{D-1}``, label in {0,1},
  features as decimal floats, LF line endings.
* Tensor file (little-endian binary): magic ``DFT1``, version u8 = 1, rank u8,
  rank x u32 dims, then the f32 payload in row-major order (last dimension
  fastest). Rank-3 tensors are (height, width, channels).

Binning rule, stated once and used everywhere: the bin index of a value v is
the number of thresholds strictly below v, so a value exactly equal to a
threshold falls in the lower bin.
"""

from __future__ import annotations

import csv
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .rng import SplitMix64

DEFAULT_MAX_BINS = 256

_TENSOR_MAGIC = b"DFT1"
_TENSOR_VERSION = 1
# Guards against absurd dim products before allocating (u32 dims can claim
# up to 2**160 elements for rank 5).
_MAX_TENSOR_ELEMENTS = 1 << 40


class DataError(ValueError):
    """Malformed input file or contract violation, with location context."""


def _atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write via a temp file in the same directory + rename, so readers never
    observe a partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Rows of deep-feature vectors with binary labels (0 benign, 1 malignant).

    ids, labels and features share the row count; features is a dense
    (n_rows, n_features) float64 matrix of finite values. Arrays are frozen
    after construction and safe to share across threads.
    """

    ids: tuple[str, ...]
    labels: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        features = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "features", features)
        if features.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        n_rows, n_features = features.shape
        if n_rows < 1:
            raise DataError("dataset must contain at least one row")
        if n_features < 1:
            raise DataError("dataset must contain at least one feature")
        if len(self.ids) != n_rows or labels.shape != (n_rows,):
            raise DataError("ids, labels and features must share the row count")
        if not np.all((labels == 0) | (labels == 1)):
            raise DataError("labels must be 0 or 1")
        if not np.all(np.isfinite(features)):
            raise DataError("features must be finite")
        labels.flags.writeable = False
        features.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.ids == other.ids
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.features, other.features)
        )

    def take(self, indices: np.ndarray) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.intp)
        return LabeledDataset(
            ids=tuple(self.ids[i] for i in indices),
            labels=self.labels[indices],
            features=self.features[indices],
        )


@dataclass(frozen=True, eq=False)
class FeatureBins:
    """Per-feature sorted threshold arrays; at most max_bins - 1 per feature."""

    thresholds: tuple[np.ndarray, ...]
    max_bins: int

    def __post_init__(self):
        if self.max_bins < 2:
            raise DataError("max_bins must be >= 2")
        frozen = []
        for j, t in enumerate(self.thresholds):
            arr = np.asarray(t, dtype=np.float64)
            if arr.ndim != 1 or len(arr) > self.max_bins - 1:
                raise DataError(f"feature {j}: invalid threshold list")
            if len(arr) > 1 and not np.all(np.diff(arr) > 0):
                raise DataError(f"feature {j}: thresholds must be strictly increasing")
            arr.flags.writeable = False
            frozen.append(arr)
        object.__setattr__(self, "thresholds", tuple(frozen))

    @property
    def n_features(self) -> int:
        return len(self.thresholds)


@dataclass(frozen=True, eq=False)
class BinnedMatrix:
    """Bin indices for every (row, feature) cell plus the bins that made them."""

    codes: np.ndarray
    bins: FeatureBins = field(repr=False)

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.ndim != 2 or codes.shape[1] != self.bins.n_features:
            raise DataError("codes shape does not match bins")
        if codes.size and int(codes.max()) >= self.bins.max_bins:
            raise DataError("bin index out of range")
        codes.flags.writeable = False
        object.__setattr__(self, "codes", codes)

    @property
    def n_rows(self) -> int:
        return self.codes.shape[0]

    @property
    def n_features(self) -> int:
        return self.codes.shape[1]


def _expected_header(n_features: int) -> list[str]:
    return ["id", "label"] + [f"f{j}" for j in range(n_features)]


def load_feature_matrix(path: str) -> LabeledDataset:
    """Read a Feature CSV; errors carry 1-based line numbers (header is line 1)."""
    if not os.path.exists(path):
        raise DataError(f"feature file not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 3 or header[:2] != ["id", "label"]:
            raise DataError(f"{path}: malformed header {header!r}")
        n_features = len(header) - 2
        if header != _expected_header(n_features):
            raise DataError(f"{path}: malformed header {header!r}")

        ids: list[str] = []
        labels: list[int] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {lineno} has {len(row)} columns, expected {len(header)}"
                )
            row_id = row[0]
            if row[1] not in ("0", "1"):
                raise DataError(f"{path}: label outside {{0,1}} at row {lineno}")
            values = []
            for j, cell in enumerate(row[2:]):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value at row {lineno} (id {row_id!r}), column f{j}"
                    ) from None
                if not math.isfinite(value):
                    raise DataError(
                        f"{path}: non-finite value at row {lineno} (id {row_id!r}), column f{j}"
                    )
                values.append(value)
            ids.append(row_id)
            labels.append(int(row[1]))
            rows.append(values)

    if not rows:
        raise DataError(f"{path}: no data rows")
    return LabeledDataset(
        ids=tuple(ids),
        labels=np.array(labels, dtype=np.int8),
        features=np.array(rows, dtype=np.float64),
    )


def save_feature_matrix(ds: LabeledDataset, path: str) -> None:
    """Write a Feature CSV (atomic; floats at full round-trip precision)."""
    lines = [",".join(_expected_header(ds.n_features))]
    for i, row_id in enumerate(ds.ids):
        if any(c in row_id for c in ',"\r\n'):
            raise DataError(f"row id {row_id!r} contains CSV delimiter characters")
        cells = [row_id, str(int(ds.labels[i]))]
        cells.extend(repr(float(v)) for v in ds.features[i])
        lines.append(",".join(cells))
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def stratified_split(
    ds: LabeledDataset, train_frac: float, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Per class, a seeded shuffle sends floor(train_frac * n_c) rows to train
    and the rest to test. train_frac is interpreted as its shortest decimal
    (Fraction of str) so 0.7 of 1390 rows is exactly 973, not a float-noise 972.
    Output partitions keep the original row order.
    """
    if not (0.0 < train_frac < 1.0):
        raise DataError("train_frac must be in (0,1)")
    frac = Fraction(str(train_frac))
    rng = SplitMix64(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls in (0, 1):
        members = [i for i in range(ds.n_rows) if ds.labels[i] == cls]
        if not members:
            raise DataError(f"class {cls} has no rows; cannot stratify")
        rng.shuffle(members)
        n_train = int(frac * len(members))
        train_idx.extend(members[:n_train])
        test_idx.extend(members[n_train:])
    if not train_idx or not test_idx:
        raise DataError("split produced an empty partition; adjust train_frac")
    return ds.take(np.sort(train_idx)), ds.take(np.sort(test_idx))


def compute_bins(ds: LabeledDataset, max_bins: int = DEFAULT_MAX_BINS) -> FeatureBins:
    """Quantile cut points over each feature's distinct sorted values.

    Thresholds are midpoints between consecutive distinct values at the ranks
    floor(k*m/max_bins), k = 1..max_bins-1. When a feature has m <= max_bins
    distinct values this yields every midpoint, so binning is lossless there.
    """
    if max_bins < 2:
        raise DataError("max_bins must be >= 2")
    thresholds = []
    for j in range(ds.n_features):
        distinct = np.unique(ds.features[:, j])
        m = len(distinct)
        cuts = []
        prev_idx = 0
        for k in range(1, max_bins):
            idx = (k * m) // max_bins
            if idx >= 1 and idx != prev_idx:
                cuts.append((distinct[idx - 1] + distinct[idx]) / 2.0)
                prev_idx = idx
        thresholds.append(np.array(cuts, dtype=np.float64))
    return FeatureBins(thresholds=tuple(thresholds), max_bins=max_bins)


def _code_dtype(max_bins: int):
    return np.uint8 if max_bins <= 256 else np.uint16


def bin_features(ds: LabeledDataset, bins: FeatureBins) -> BinnedMatrix:
    """Entry (i,j) = number of thresholds of feature j strictly below the value."""
    if ds.n_features != bins.n_features:
        raise DataError(
            f"dataset has {ds.n_features} features, bins describe {bins.n_features}"
        )
    codes = np.empty((ds.n_rows, ds.n_features), dtype=_code_dtype(bins.max_bins))
    for j in range(ds.n_features):
        # side='left' counts thresholds strictly below; equality -> lower bin
        codes[:, j] = np.searchsorted(bins.thresholds[j], ds.features[:, j], side="left")
    return BinnedMatrix(codes=codes, bins=bins)


def write_tensor(tensor: np.ndarray, path: str) -> None:
    arr = np.ascontiguousarray(tensor, dtype=np.float32)
    if arr.ndim < 1 or arr.ndim > 255:
        raise DataError("tensor rank must be in [1, 255]")
    if any(d < 1 for d in arr.shape):
        raise DataError("tensor dims must all be >= 1")
    if any(d >= 1 << 32 for d in arr.shape):
        raise DataError("tensor dim exceeds u32 range")
    if not np.all(np.isfinite(arr)):
        raise DataError("tensor values must be finite")
    header = _TENSOR_MAGIC + struct.pack("<BB", _TENSOR_VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    _atomic_write_bytes(path, header + arr.tobytes(order="C"))


def read_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 6:
        raise DataError(f"{path}: truncated header")
    if blob[:4] != _TENSOR_MAGIC:
        raise DataError(f"{path}: bad magic {blob[:4]!r}")
    version, rank = struct.unpack_from("<BB", blob, 4)
    if version != _TENSOR_VERSION:
        raise DataError(f"{path}: unsupported tensor version {version}")
    if rank < 1:
        raise DataError(f"{path}: rank must be >= 1")
    dims_end = 6 + 4 * rank
    if len(blob) < dims_end:
        raise DataError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{rank}I", blob, 6)
    if any(d < 1 for d in dims):
        raise DataError(f"{path}: zero dimension")
    count = 1
    for d in dims:
        count *= d
    if count > _MAX_TENSOR_ELEMENTS:
        raise DataError(f"{path}: dimension overflow ({count} elements)")
    payload = blob[dims_end:]
    if len(payload) != 4 * count:
        raise DataError(
            f"{path}: truncated payload ({len(payload)} bytes, expected {4 * count})"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite payload values")
    return arr
