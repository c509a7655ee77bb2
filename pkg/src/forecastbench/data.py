"""Series ingestion, chronological splitting, min-max scaling and windowing."""
import csv
import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, IngestionError

LOOKBACK = 14
SPLIT_RATIOS = (0.70, 0.15)


@dataclass
class TimeSeries:
    dates: list
    values: np.ndarray
    volumes: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.volumes is not None:
            self.volumes = np.asarray(self.volumes, dtype=np.float64)
        if len(self.dates) != len(self.values):
            raise DomainError("dates and values differ in length")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise DomainError(f"dates not strictly increasing at {b}")

    def __len__(self):
        return len(self.values)

    def segment(self, start, stop):
        vol = None if self.volumes is None else self.volumes[start:stop]
        return TimeSeries(self.dates[start:stop], self.values[start:stop], vol)


def load_series(path):
    """Read a ``date,close[,volume]`` CSV file.

    Raises :class:`IngestionError` naming the offending line for malformed
    rows, missing values, non-increasing dates or non-positive closes.
    """
    dates, values, volumes = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise IngestionError("empty file", line=1) from None
        if header[:2] != ["date", "close"] or len(header) > 3 or (
                len(header) == 3 and header[2] != "volume"):
            raise IngestionError("header must be date,close[,volume]", line=1)
        has_volume = len(header) == 3
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise IngestionError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            try:
                date = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise IngestionError(f"bad date {row[0]!r}", line=lineno) from None
            close = _number(row[1], "close", lineno)
            if close <= 0:
                raise IngestionError(f"non-positive close {close}", line=lineno)
            if dates and date <= dates[-1]:
                raise IngestionError(f"date {date} does not follow {dates[-1]}", line=lineno)
            dates.append(date)
            values.append(close)
            if has_volume:
                vol = _number(row[2], "volume", lineno)
                if vol < 0:
                    raise IngestionError(f"negative volume {vol}", line=lineno)
                volumes.append(vol)
    if not dates:
        raise IngestionError("no data rows", line=2)
    return TimeSeries(dates, values, volumes if has_volume else None)


def _number(text, what, lineno):
    text = text.strip()
    if not text:
        raise IngestionError(f"missing {what}", line=lineno)
    try:
        x = float(text)
    except ValueError:
        raise IngestionError(f"unparsable {what} {text!r}", line=lineno) from None
    if not math.isfinite(x):
        raise IngestionError(f"non-finite {what}", line=lineno)
    return x


def split_sizes(n):
    if n < 20:
        raise DomainError(f"series of length {n} is too short to split (need >= 20)")
    n_train = math.floor(SPLIT_RATIOS[0] * n)
    n_val = math.floor(SPLIT_RATIOS[1] * n)
    return n_train, n_val, n - n_train - n_val


def chronological_split(series):
    """Contiguous 70/15/15 split with floors; the remainder goes to test."""
    n_train, n_val, _ = split_sizes(len(series))
    n = len(series)
    return (series.segment(0, n_train),
            series.segment(n_train, n_train + n_val),
            series.segment(n_train + n_val, n))


@dataclass(frozen=True)
class Normalizer:
    min_t: float
    max_t: float

    def __post_init__(self):
        if not self.max_t > self.min_t:
            raise DomainError("degenerate series: max equals min")

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.min_t) / (self.max_t - self.min_t)

    def invert(self, x):
        return np.asarray(x, dtype=np.float64) * (self.max_t - self.min_t) + self.min_t


def fit_normalizer(train):
    values = train.values if isinstance(train, TimeSeries) else np.asarray(train, dtype=np.float64)
    if values.size == 0:
        raise DomainError("cannot fit a normalizer on an empty series")
    return Normalizer(float(values.min()), float(values.max()))


def apply_normalizer(norm, x):
    return norm.apply(x)


def invert_normalizer(norm, x):
    return norm.invert(x)


@dataclass
class WindowedDataset:
    inputs: np.ndarray    # (n, lookback, channels)
    targets: np.ndarray   # (n, 1)
    origins: np.ndarray   # index of each target in the source values

    def __len__(self):
        return len(self.targets)

    def concat(self, other):
        return WindowedDataset(np.concatenate([self.inputs, other.inputs]),
                               np.concatenate([self.targets, other.targets]),
                               np.concatenate([self.origins, other.origins]))


def make_windows(values, lookback=LOOKBACK, horizon=1, offset=0):
    """Sample ``i`` holds ``values[i:i+lookback]`` and target ``values[i+lookback+horizon-1]``.

    ``values`` may be 1-D or ``(N, channels)``; the target is always channel 0.
    ``offset`` shifts the recorded origins so they index a parent series.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    n_total = values.shape[0]
    if lookback < 1 or horizon < 1:
        raise DomainError("lookback and horizon must be positive")
    n = n_total - lookback - horizon + 1
    if n_total <= lookback or n < 1:
        raise DomainError(f"need more than {lookback + horizon - 1} values, got {n_total}")
    idx = np.arange(n)[:, None] + np.arange(lookback)[None, :]
    inputs = values[idx]
    target_idx = np.arange(n) + lookback + horizon - 1
    targets = values[target_idx, :1].copy()
    return WindowedDataset(inputs, targets, target_idx + offset)


@dataclass
class PreparedData:
    normalizer: Normalizer
    train: WindowedDataset
    val: WindowedDataset
    test: WindowedDataset


def prepare(series, lookback=LOOKBACK, use_volume=False):
    """Split, fit the scaler on train only, and window each segment separately."""
    train, val, test = chronological_split(series)
    norm = fit_normalizer(train)
    vol_norm = None
    if use_volume:
        if series.volumes is None:
            raise DomainError("series has no volume column")
        vol_norm = fit_normalizer(train.volumes)
    sets, start = [], 0
    for seg in (train, val, test):
        x = norm.apply(seg.values)
        if vol_norm is not None:
            x = np.stack([x, vol_norm.apply(seg.volumes)], axis=1)
        sets.append(make_windows(x, lookback, offset=start))
        start += len(seg)
    return PreparedData(norm, *sets)
