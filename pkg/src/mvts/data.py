"""Synthetic multichannel datasets, standardization, and the CTS container.

Synthetic windows are mixtures of shared sinusoidal sources whose frequencies
are drawn from a class-specific band, mixed into channels by one fixed random
matrix, plus independent channel noise. Shared sources give the channels the
cross-correlation that multi-view contrastive learning relies on; the class
bands give a classifier something to find.

Each window is generated from a counter-based RNG keyed by (seed, window
index), so generation order cannot change the data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .configio import from_dict, to_dict
from .errors import ConfigError, DataError, FormatError

Array = np.ndarray

CTS_MAGIC = b"CTS1"
CTS_VERSION = 1

# Second Philox key word for the mixing matrix; window keys use indices < 2^32.
_MIXING_STREAM = 1 << 32


@dataclass
class WindowedDataset:
    windows: Array  # [N, C, T] float32
    labels: Array | None  # [N] uint8 or None
    channel_names: list[str]
    sample_rate_hz: float
    window_seconds: float
    num_classes: int = 0

    @property
    def num_windows(self) -> int:
        return self.windows.shape[0]

    @property
    def num_channels(self) -> int:
        return self.windows.shape[1]

    @property
    def t_in(self) -> int:
        return self.windows.shape[2]


def subset(ds: WindowedDataset, indices) -> WindowedDataset:
    idx = np.asarray(indices, dtype=int)
    return WindowedDataset(
        windows=ds.windows[idx],
        labels=None if ds.labels is None else ds.labels[idx],
        channel_names=list(ds.channel_names),
        sample_rate_hz=ds.sample_rate_hz,
        window_seconds=ds.window_seconds,
        num_classes=ds.num_classes,
    )


def select_channels(ds: WindowedDataset, channels) -> WindowedDataset:
    """Keep only the given channel indices, in the given order."""
    idx = list(channels)
    return WindowedDataset(
        windows=ds.windows[:, idx, :],
        labels=ds.labels,
        channel_names=[ds.channel_names[c] for c in idx],
        sample_rate_hz=ds.sample_rate_hz,
        window_seconds=ds.window_seconds,
        num_classes=ds.num_classes,
    )


@dataclass
class SynthConfig:
    num_channels: int = 6
    num_classes: int = 5
    windows_per_class: int = 100
    sample_rate_hz: float = 100.0
    window_seconds: float = 3.0
    num_latent_sources: int = 3
    noise_std: float = 0.1
    seed: int = 0
    class_bands: list | None = None  # [[lo_hz, hi_hz] per class] or None for auto
    mixing_seed: int | None = None  # channel mixing matrix stream; defaults to seed

    def validate(self) -> None:
        if self.num_channels < 1:
            raise ConfigError(f"num_channels must be >= 1, got {self.num_channels}")
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.num_classes > 255:
            raise ConfigError(f"num_classes must fit in a byte, got {self.num_classes}")
        if self.windows_per_class < 1:
            raise ConfigError(f"windows_per_class must be >= 1, got {self.windows_per_class}")
        if self.sample_rate_hz <= 0 or self.window_seconds <= 0:
            raise ConfigError("sample rate and window length must be positive")
        if self.num_latent_sources < 1:
            raise ConfigError(f"num_latent_sources must be >= 1, got {self.num_latent_sources}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.seed < 0 or (self.mixing_seed is not None and self.mixing_seed < 0):
            raise ConfigError("seeds must be non-negative")
        nyquist = self.sample_rate_hz / 2.0
        for lo, hi in self.bands():
            if not (0.0 < lo < hi < nyquist):
                raise ConfigError(
                    f"class band ({lo}, {hi}) must satisfy 0 < lo < hi < {nyquist}"
                )

    def bands(self) -> list[tuple[float, float]]:
        """Per-class frequency bands; evenly spaced disjoint defaults."""
        if self.class_bands is not None:
            if len(self.class_bands) != self.num_classes:
                raise ConfigError(
                    f"{len(self.class_bands)} bands for {self.num_classes} classes"
                )
            return [(float(lo), float(hi)) for lo, hi in self.class_bands]
        top = 0.8 * self.sample_rate_hz / 2.0
        seg = (top - 1.0) / self.num_classes
        return [
            (1.0 + i * seg + 0.15 * seg, 1.0 + (i + 1) * seg - 0.15 * seg)
            for i in range(self.num_classes)
        ]

    @property
    def t_in(self) -> int:
        return int(round(self.sample_rate_hz * self.window_seconds))

    @classmethod
    def from_dict(cls, data) -> "SynthConfig":
        cfg = from_dict(cls, data)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return to_dict(self)


def generate_synthetic(cfg: SynthConfig) -> WindowedDataset:
    """Deterministic labeled dataset; labels interleave classes (i mod K)."""
    cfg.validate()
    c, t = cfg.num_channels, cfg.t_in
    n = cfg.num_classes * cfg.windows_per_class
    bands = cfg.bands()
    mix_seed = cfg.seed if cfg.mixing_seed is None else cfg.mixing_seed
    mix_rng = np.random.Generator(
        np.random.Philox(key=np.array([mix_seed, _MIXING_STREAM], dtype=np.uint64))
    )
    mixing = mix_rng.uniform(-1.0, 1.0, size=(c, cfg.num_latent_sources))

    times = np.arange(t) / cfg.sample_rate_hz
    windows = np.empty((n, c, t), dtype=np.float32)
    labels = np.empty(n, dtype=np.uint8)
    for i in range(n):
        label = i % cfg.num_classes
        labels[i] = label
        rng = np.random.Generator(
            np.random.Philox(key=np.array([cfg.seed, i], dtype=np.uint64))
        )
        lo, hi = bands[label]
        freqs = rng.uniform(lo, hi, size=cfg.num_latent_sources)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=cfg.num_latent_sources)
        amps = rng.uniform(0.5, 1.5, size=cfg.num_latent_sources)
        sources = amps[:, None] * np.sin(
            2.0 * np.pi * freqs[:, None] * times[None, :] + phases[:, None]
        )
        win = mixing @ sources
        if cfg.noise_std > 0:
            win = win + cfg.noise_std * rng.standard_normal((c, t))
        windows[i] = win.astype(np.float32)
    return WindowedDataset(
        windows=windows,
        labels=labels,
        channel_names=[f"ch{j}" for j in range(c)],
        sample_rate_hz=cfg.sample_rate_hz,
        window_seconds=cfg.window_seconds,
        num_classes=cfg.num_classes,
    )


def split_dataset(
    ds: WindowedDataset, ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
) -> tuple[WindowedDataset, WindowedDataset, WindowedDataset]:
    """Contiguous train/val/test split; interleaved labels keep it balanced."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {ratios}")
    n = ds.num_windows
    n_train = int(n * ratios[0])
    n_val = int(n * ratios[1])
    return (
        subset(ds, range(0, n_train)),
        subset(ds, range(n_train, n_train + n_val)),
        subset(ds, range(n_train + n_val, n)),
    )


def standardize_window(window: Array, eps: float = 1e-8) -> Array:
    """Per-channel zero mean, unit-ish std; constant channels become zeros."""
    w = np.asarray(window, dtype=np.float64)
    mean = w.mean(axis=-1, keepdims=True)
    std = w.std(axis=-1, keepdims=True)
    return (w - mean) / (std + eps)


def standardize_dataset(ds: WindowedDataset, eps: float = 1e-8) -> Array:
    """Stacked standardized windows as float64 [N, C, T]."""
    out = np.empty(ds.windows.shape, dtype=np.float64)
    for i in range(ds.num_windows):
        out[i] = standardize_window(ds.windows[i], eps=eps)
    return out


def sample_balanced(
    ds: WindowedDataset, n_per_class: int, rng: np.random.Generator
) -> WindowedDataset:
    """Uniform without-replacement draw of n_per_class windows per class."""
    if ds.labels is None:
        raise DataError("balanced sampling needs a labeled dataset")
    if n_per_class < 1:
        raise ConfigError(f"n_per_class must be >= 1, got {n_per_class}")
    k = ds.num_classes if ds.num_classes > 0 else int(ds.labels.max()) + 1
    chosen = []
    for c in range(k):
        pool = np.flatnonzero(ds.labels == c)
        if pool.size < n_per_class:
            raise DataError(
                f"class {c} has only {pool.size} windows, need {n_per_class}"
            )
        chosen.append(rng.choice(pool, size=n_per_class, replace=False))
    return subset(ds, np.concatenate(chosen))


# ---------------------------------------------------------------------------
# CTS container: a little-endian binary format that round-trips bit-exactly.


def write_cts(ds: WindowedDataset, path) -> None:
    n, c, t = ds.windows.shape
    has_labels = ds.labels is not None
    num_classes = ds.num_classes if has_labels else 0
    if not 0 <= num_classes <= 255:
        raise FormatError(f"num_classes {num_classes} does not fit in a byte")
    parts = [CTS_MAGIC]
    parts.append(
        struct.pack(
            "<IIIII", CTS_VERSION, n, c, t, int(round(ds.sample_rate_hz * 1000.0))
        )
    )
    parts.append(struct.pack("<BB", int(has_labels), num_classes))
    for name in ds.channel_names:
        raw = name.encode("utf-8")
        if len(raw) > 255:
            raise FormatError(f"channel name {name!r} exceeds 255 bytes")
        parts.append(struct.pack("<B", len(raw)))
        parts.append(raw)
    parts.append(np.ascontiguousarray(ds.windows, dtype="<f4").tobytes())
    if has_labels:
        parts.append(np.ascontiguousarray(ds.labels, dtype=np.uint8).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def _need(buf: bytes, offset: int, count: int, what: str) -> None:
    if offset + count > len(buf):
        raise FormatError(
            f"truncated file: {what} needs {count} bytes at byte {offset}, "
            f"only {len(buf) - offset} remain"
        )


def read_cts(path) -> WindowedDataset:
    with open(path, "rb") as fh:
        buf = fh.read()
    off = 0
    _need(buf, off, 4, "magic")
    if buf[:4] != CTS_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r} at byte 0, expected {CTS_MAGIC!r}")
    off = 4
    _need(buf, off, 20, "header")
    version, n, c, t, rate_mhz = struct.unpack_from("<IIIII", buf, off)
    if version != CTS_VERSION:
        raise FormatError(f"unsupported version {version} at byte {off}")
    off += 20
    _need(buf, off, 2, "flags")
    has_labels, num_classes = struct.unpack_from("<BB", buf, off)
    off += 2
    names = []
    for j in range(c):
        _need(buf, off, 1, f"channel name {j} length")
        (length,) = struct.unpack_from("<B", buf, off)
        off += 1
        _need(buf, off, length, f"channel name {j}")
        names.append(buf[off : off + length].decode("utf-8"))
        off += length
    data_bytes = 4 * n * c * t
    _need(buf, off, data_bytes, "window data")
    windows = np.frombuffer(buf, dtype="<f4", count=n * c * t, offset=off).reshape(n, c, t)
    off += data_bytes
    labels = None
    if has_labels:
        _need(buf, off, n, "labels")
        labels = np.frombuffer(buf, dtype=np.uint8, count=n, offset=off).copy()
        off += n
        if num_classes > 0 and n > 0 and int(labels.max()) >= num_classes:
            raise FormatError(
                f"label {int(labels.max())} out of range for {num_classes} classes "
                f"in block at byte {off - n}"
            )
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} unexpected trailing bytes at byte {off}")
    rate = rate_mhz / 1000.0
    return WindowedDataset(
        windows=windows.copy(),
        labels=labels,
        channel_names=names,
        sample_rate_hz=rate,
        window_seconds=(t / rate) if rate > 0 else 0.0,
        num_classes=int(num_classes),
    )
