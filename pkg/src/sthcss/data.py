"""Sensor series ingestion, chronological splits, standardization, sliding
windows, and a synthetic multi-group process generator."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import (ConfigError, EmptyDataError, InsufficientDataError, InvalidArgumentError,
                         ParseError, SchemaError)

log = logging.getLogger(__name__)

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class SensorSeries:
    names: tuple[str, ...]
    values: np.ndarray  # T x D
    target_name: str
    target: np.ndarray  # T
    sample_rate_hz: float = 1.0

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise SchemaError(f"values {self.values.shape} do not match {len(self.names)} sensor names")
        if self.target.shape != (self.values.shape[0],):
            raise SchemaError(f"target {self.target.shape} does not match {self.values.shape[0]} rows")
        if len(set(self.names)) != len(self.names):
            raise SchemaError("sensor names are not unique")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def D(self) -> int:
        return self.values.shape[1]

    def slice(self, start, stop) -> "SensorSeries":
        return replace(self, values=self.values[start:stop], target=self.target[start:stop])


@dataclass(frozen=True)
class Standardizer:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    @classmethod
    def fit(cls, train: SensorSeries) -> "Standardizer":
        x_mean = train.values.mean(axis=0)
        x_std = train.values.std(axis=0)
        flat = x_std < STD_FLOOR
        if np.any(flat):
            bad = [train.names[i] for i in np.flatnonzero(flat)]
            warnings.warn(f"constant sensors {bad}; std floored to {STD_FLOOR}", RuntimeWarning,
                          stacklevel=2)
            x_std = np.where(flat, STD_FLOOR, x_std)
        y_std = float(train.target.std())
        if y_std < STD_FLOOR:
            warnings.warn("constant target in training split", RuntimeWarning, stacklevel=2)
            y_std = STD_FLOOR
        return cls(x_mean, x_std, float(train.target.mean()), y_std)

    def transform(self, series: SensorSeries) -> SensorSeries:
        return replace(series,
                       values=(series.values - self.x_mean) / self.x_std,
                       target=(series.target - self.y_mean) / self.y_std)

    def inverse_target(self, y):
        return np.asarray(y) * self.y_std + self.y_mean

    def as_buffers(self) -> dict[str, np.ndarray]:
        return {"scaler.x_mean": self.x_mean, "scaler.x_std": self.x_std,
                "scaler.y_mean": np.array([self.y_mean]), "scaler.y_std": np.array([self.y_std])}

    @classmethod
    def from_buffers(cls, buf) -> "Standardizer":
        return cls(buf["scaler.x_mean"], buf["scaler.x_std"],
                   float(buf["scaler.y_mean"][0]), float(buf["scaler.y_std"][0]))


def standardize(series: SensorSeries, stats_from: SensorSeries | Standardizer):
    """Standardize ``series`` with statistics of the training split ``stats_from``."""
    stats = stats_from if isinstance(stats_from, Standardizer) else Standardizer.fit(stats_from)
    return stats.transform(series), stats


@dataclass(frozen=True)
class WindowedDataset:
    windows: np.ndarray  # n x D x W
    targets: np.ndarray  # n
    split: str = ""
    stats: Standardizer | None = None
    end_index: np.ndarray = field(default=None)  # row of each window's last column

    def __len__(self):
        return self.targets.shape[0]

    def flat(self) -> np.ndarray:
        return self.windows.reshape(len(self), -1)


# --------------------------------------------------------------------------
# CSV


def load_csv(path, target_column: str | None = None, sample_rate_hz: float = 1.0) -> SensorSeries:
    """Read a header + numeric rows CSV; ``target_column`` defaults to the last column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataError(f"{path}: file is empty") from None
        rows = []
        for r, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: expected {len(header)} cells, found {len(row)}", row=r)
            vals = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: non-numeric cell {cell!r}", row=r, column=name) from None
                if not math.isfinite(v):
                    raise ParseError(f"{path}: missing or non-finite value", row=r, column=name)
                vals.append(v)
            rows.append(vals)
    if target_column is None:
        target_column = header[-1]
    if target_column not in header:
        raise SchemaError(f"{path}: target column {target_column!r} not in header {header}")
    if not rows:
        raise EmptyDataError(f"{path}: header present but no data rows")
    data = np.array(rows, dtype=np.float64)
    ti = header.index(target_column)
    keep = [i for i in range(len(header)) if i != ti]
    return SensorSeries(names=tuple(header[i] for i in keep), values=data[:, keep],
                        target_name=target_column, target=data[:, ti],
                        sample_rate_hz=sample_rate_hz)


def write_csv(series: SensorSeries, path) -> None:
    """Write in the ingestion schema: sensor columns then the target column."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(series.names) + [series.target_name])
        for row, y in zip(series.values, series.target):
            w.writerow([repr(float(v)) for v in row] + [repr(float(y))])


# --------------------------------------------------------------------------
# splitting and windowing


def split_bounds(T: int, ratios=(0.6, 0.2, 0.2)) -> tuple[int, int]:
    r = tuple(float(x) for x in ratios)
    if len(r) != 3 or any(x <= 0 for x in r) or abs(sum(r) - 1.0) > 1e-9:
        raise InvalidArgumentError(f"split ratios must be three positive numbers summing to 1, got {ratios}")
    # the epsilon absorbs representation error such as 0.6 * 10 = 6.000000000000001
    b1 = int(math.floor(r[0] * T + 1e-9))
    b2 = int(math.floor((r[0] + r[1]) * T + 1e-9))
    return b1, b2


def split_chronological(series: SensorSeries, ratios=(0.6, 0.2, 0.2), window: int | None = None):
    """Contiguous (train, val, test) segments cut at floor(0.6 T) and floor(0.8 T).

    With ``window`` set, every segment must hold at least one full window.
    """
    b1, b2 = split_bounds(series.T, ratios)
    parts = (series.slice(0, b1), series.slice(b1, b2), series.slice(b2, series.T))
    if window is not None:
        for name, part in zip(("train", "val", "test"), parts):
            if part.T < window:
                raise InsufficientDataError(
                    f"{name} split has {part.T} rows, fewer than the window size {window}")
    return parts


def make_windows(series: SensorSeries, W: int, stride: int = 1, split: str = "",
                 stats: Standardizer | None = None) -> WindowedDataset:
    """Overlapping D x W windows; window i covers rows i*stride .. i*stride+W-1
    and is paired with the target at its last row."""
    if W < 1 or stride < 1:
        raise InvalidArgumentError(f"window {W} and stride {stride} must be positive")
    if W > series.T:
        raise InsufficientDataError(f"window size {W} exceeds series length {series.T}")
    view = np.lib.stride_tricks.sliding_window_view(series.values, W, axis=0)  # n x D x W
    ends = np.arange(W - 1, series.T)[::stride]
    windows = np.ascontiguousarray(view[::stride])
    return WindowedDataset(windows=windows, targets=series.target[ends].copy(), split=split,
                           stats=stats, end_index=ends)


# --------------------------------------------------------------------------
# synthetic process


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic multi-group process.

    Each group of sensors follows one latent driver (low-frequency sinusoids
    plus an AR(1) component, scaled to unit variance). The target mixes a
    lagged linear driver term, a cross-group product and a squared term, so
    neither a purely linear model nor a single sensor group suffices.
    """

    D: int = 12
    groups: tuple[int, ...] = (4, 4, 4)
    T: int = 6000
    noise_std: float = 0.1
    sensor_nonlinearity: bool = True
    identity_transforms: bool = False
    target_lag: int = 5
    target_linear: float = 1.0
    target_interaction: float = 0.5
    target_square: float = 0.3
    target_noise_std: float = 0.05
    segments: int = 1
    seed: int = 42

    def __post_init__(self):
        if any(int(g) != g or g < 1 for g in self.groups) or sum(self.groups) != self.D:
            raise ConfigError(f"groups {self.groups} must be positive sizes summing to D={self.D}")
        if self.noise_std < 0 or self.target_noise_std < 0:
            raise ConfigError("noise levels must be non-negative")
        if self.T < 1 or self.target_lag < 0 or self.segments < 1:
            raise ConfigError("T and segments must be positive, target_lag non-negative")

    @property
    def group_of(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.groups)), self.groups)


def parse_groups(text: str, D: int | None = None) -> tuple[int, ...]:
    """Parse ``"4,4,4"`` into group sizes."""
    try:
        sizes = tuple(int(s) for s in str(text).split(","))
    except ValueError:
        raise ConfigError(f"malformed groups {text!r}; expected comma-separated sizes like 4,4,4") from None
    if not sizes or any(s < 1 for s in sizes) or (D is not None and sum(sizes) != D):
        raise ConfigError(f"groups {text!r} must be positive sizes summing to D={D}")
    return sizes


def _driver(rng: np.random.Generator, T: int) -> np.ndarray:
    t = np.arange(T)
    s = np.zeros(T)
    for _ in range(3):
        period = rng.uniform(20.0, 200.0)
        s += rng.uniform(0.5, 1.0) * np.sin(2 * np.pi * t / period + rng.uniform(0, 2 * np.pi))
    phi = 0.9
    eps = rng.normal(0.0, 0.5 * math.sqrt(1 - phi ** 2), size=T)
    ar = np.empty(T)
    acc = 0.0
    for i in range(T):
        acc = phi * acc + eps[i]
        ar[i] = acc
    z = s + ar
    return (z - z.mean()) / z.std()


def synth_generate(cfg: SynthConfig = SynthConfig()) -> SensorSeries:
    rng = np.random.default_rng(cfg.seed)
    G = len(cfg.groups)
    Z = np.stack([_driver(rng, cfg.T) for _ in range(G)])  # G x T
    if cfg.segments > 1:
        # piecewise setpoint shifts shared by all drivers' sensors
        edges = np.linspace(0, cfg.T, cfg.segments + 1).astype(int)
        for a, b in zip(edges[:-1], edges[1:]):
            Z[:, a:b] += rng.normal(0.0, 0.5, size=(G, 1))

    X = np.empty((cfg.T, cfg.D))
    for i, g in enumerate(cfg.group_of):
        z = Z[g]
        if cfg.identity_transforms:
            x = z.copy()
        else:
            gain = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
            x = gain * z + rng.uniform(-3.0, 3.0)
            if cfg.sensor_nonlinearity:
                x += 0.3 * abs(gain) * np.tanh(1.5 * z)
        if cfg.noise_std > 0:
            x = x + rng.normal(0.0, cfg.noise_std, size=cfg.T)
        X[:, i] = x

    lag = cfg.target_lag
    z0_lag = np.concatenate([np.full(lag, Z[0, 0]), Z[0, :cfg.T - lag]]) if lag else Z[0]
    z1 = Z[1 % G]
    z2 = Z[2 % G]
    y = (cfg.target_linear * z0_lag
         + cfg.target_interaction * z0_lag * z1
         + cfg.target_square * (z2 ** 2 - 1.0))
    if cfg.target_noise_std > 0:
        y = y + rng.normal(0.0, cfg.target_noise_std, size=cfg.T)
    names = tuple(f"s{i + 1:02d}" for i in range(cfg.D))
    return SensorSeries(names=names, values=X, target_name="y", target=y)
