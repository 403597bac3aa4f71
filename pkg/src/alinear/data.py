"""CSV ingestion, chronological splitting, standardization, and windowing.

Input files are plain CSV with a header row: first column an ISO-8601
timestamp, remaining columns real-valued channels. Rows with non-parseable
or non-finite values are hard errors (the benchmark files are complete, so
silent imputation would only mask ingestion bugs).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class RawSeries:
    """An immutable multi-channel series on a strictly increasing time axis."""

    name: str
    timestamps: tuple[datetime, ...]
    channels: dict[str, np.ndarray]  # insertion order == file column order

    @property
    def length(self) -> int:
        return len(self.timestamps)

    @property
    def channel_names(self) -> list[str]:
        return list(self.channels)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    val_fraction: float = 0.1
    test_fraction: float = 0.2

    def __post_init__(self):
        for label, value in (
            ("train_fraction", self.train_fraction),
            ("val_fraction", self.val_fraction),
            ("test_fraction", self.test_fraction),
        ):
            if not 0.0 < value < 1.0:
                raise DataError(f"{label} must lie in (0, 1), got {value}")
        total = self.train_fraction + self.val_fraction + self.test_fraction
        if abs(total - 1.0) > 1e-9:
            raise DataError(f"split fractions must sum to 1, got {total}")


@dataclass(frozen=True)
class StandardizationStats:
    """Per-channel affine normalization fitted on the training segment only."""

    mean: dict[str, float]
    std: dict[str, float]  # population std, floored at 1e-8

    def inverse(self, channel: str, values: np.ndarray) -> np.ndarray:
        return values * self.std[channel] + self.mean[channel]


@dataclass(frozen=True)
class ForecastWindow:
    """One (history, future) pair; the two slices are adjacent in time."""

    input: np.ndarray   # (T,)
    target: np.ndarray  # (H,)


def load_csv(path: str | Path, name: str | None = None,
             channels: list[str] | None = None) -> RawSeries:
    """Parse a timestamped CSV into a RawSeries.

    ``channels`` optionally restricts ingestion to a named subset of the
    value columns (order preserved from the file).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")

    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        if len(header) < 2:
            raise DataError(f"{path}: need a timestamp column plus at least one channel")
        column_names = [c.strip() for c in header[1:]]
        if channels is not None:
            missing = [c for c in channels if c not in column_names]
            if missing:
                raise DataError(f"{path}: channels not in file: {missing}")
            keep = [i for i, c in enumerate(column_names) if c in set(channels)]
        else:
            keep = list(range(len(column_names)))

        timestamps: list[datetime] = []
        values: list[list[float]] = [[] for _ in keep]
        previous: datetime | None = None
        for row_number, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {row_number} has {len(row)} fields, expected {len(header)}")
            try:
                stamp = datetime.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(f"{path}: row {row_number}: bad timestamp {row[0]!r}") from None
            if previous is not None and stamp <= previous:
                raise DataError(f"{path}: row {row_number}: timestamps not strictly increasing")
            previous = stamp
            timestamps.append(stamp)
            for slot, column in enumerate(keep):
                cell = row[1 + column].strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {row_number}: non-numeric value {cell!r} "
                                    f"in column {column_names[column]!r}") from None
                if not math.isfinite(value):
                    raise DataError(f"{path}: row {row_number}: non-finite value {cell!r} "
                                    f"in column {column_names[column]!r}")
                values[slot].append(value)

    if not timestamps:
        raise DataError(f"{path}: no data rows")
    series_channels = {
        column_names[column]: np.asarray(values[slot], dtype=np.float64)
        for slot, column in enumerate(keep)
    }
    for arr in series_channels.values():
        arr.setflags(write=False)
    return RawSeries(name=name or path.stem, timestamps=tuple(timestamps),
                     channels=series_channels)


def chronological_split(
    series: RawSeries | int, spec: SplitSpec, min_segment: int = 0
) -> tuple[range, range, range]:
    """Contiguous train/val/test index ranges with boundaries at floor(N*f).

    ``min_segment`` enforces that each range can hold at least one window
    (input length + horizon).
    """
    n = series if isinstance(series, int) else series.length
    train_end = int(math.floor(n * spec.train_fraction))
    val_end = int(math.floor(n * (spec.train_fraction + spec.val_fraction)))
    ranges = (range(0, train_end), range(train_end, val_end), range(val_end, n))
    if min_segment:
        for label, segment in zip(("train", "val", "test"), ranges):
            if len(segment) < min_segment:
                raise DataError(
                    f"{label} segment too short: {len(segment)} < {min_segment} "
                    f"(need input length + horizon)"
                )
    return ranges


def standardize(
    series: RawSeries, train_range: range
) -> tuple[RawSeries, StandardizationStats]:
    """Z-score every channel using mean/std of the training segment only.

    Uses the population (1/N) standard deviation. Zero-variance channels are
    floored at 1e-8 and reported with a warning instead of failing.
    """
    if len(train_range) < 1:
        raise DataError("training range is empty")
    means: dict[str, float] = {}
    stds: dict[str, float] = {}
    standardized: dict[str, np.ndarray] = {}
    lo, hi = train_range.start, train_range.stop
    for channel, values in series.channels.items():
        segment = values[lo:hi]
        mean = float(np.mean(segment))
        std = float(np.std(segment))
        if std < 1e-8:
            warnings.warn(f"channel {channel!r} has (near-)zero variance on the "
                          f"training segment; flooring std at 1e-8")
            std = 1e-8
        means[channel] = mean
        stds[channel] = std
        scaled = (values - mean) / std
        scaled.setflags(write=False)
        standardized[channel] = scaled
    out = RawSeries(name=series.name, timestamps=series.timestamps, channels=standardized)
    return out, StandardizationStats(mean=means, std=stds)


def make_windows(
    series: RawSeries,
    index_range: range,
    input_len: int,
    horizon: int,
    stride: int = 1,
) -> dict[str, list[ForecastWindow]]:
    """Sliding (input, target) windows per channel within one index range.

    Windows are channel-independent: each channel is forecast from its own
    past only. Offsets advance by ``stride``; the count per channel is
    floor((len - T - H) / stride) + 1.
    """
    if stride < 1:
        raise DataError(f"stride must be >= 1, got {stride}")
    span = input_len + horizon
    length = len(index_range)
    if length < span:
        raise DataError(f"range of length {length} too short for windows of {span}")
    lo = index_range.start
    starts = range(0, length - span + 1, stride)
    out: dict[str, list[ForecastWindow]] = {}
    for channel, values in series.channels.items():
        windows = []
        for offset in starts:
            begin = lo + offset
            windows.append(ForecastWindow(
                input=values[begin : begin + input_len],
                target=values[begin + input_len : begin + span],
            ))
        out[channel] = windows
    return out
