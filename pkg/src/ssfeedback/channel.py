"""Sparse geometric ULA channels, a synthetic site generator and dataset I/O."""

import struct
from dataclasses import dataclass, field

import numpy as np

from ssfeedback import _kernels
from ssfeedback.errors import DatasetFormatError, DimensionMismatchError, TruncationError

DATASET_MAGIC = b"BLCH1"
DATASET_VERSION = 1


@dataclass(frozen=True)
class PathSet:
    """Complex path gains and spatial frequencies ``u = (d/lambda) sin(phi)``."""

    gains: np.ndarray
    spatial_freqs: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=np.complex128).reshape(-1)
        u = np.asarray(self.spatial_freqs, dtype=np.float64).reshape(-1)
        if g.shape != u.shape:
            raise DimensionMismatchError("gains and spatial_freqs differ in length")
        if np.any(np.abs(u) > 0.5) or not np.all(np.isfinite(g)):
            raise ValueError("spatial frequencies must lie in [-0.5, 0.5] and gains be finite")
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "spatial_freqs", u)

    def __len__(self):
        return self.gains.shape[0]

    def strongest(self, count):
        """Indices of the ``count`` strongest paths, ties to the lower index."""
        order = np.argsort(-np.abs(self.gains) ** 2, kind="stable")
        return order[:count]


@dataclass(frozen=True)
class ChannelRealization:
    paths: PathSet
    h: np.ndarray

    @property
    def n_t(self):
        return self.h.shape[0]

    @property
    def has_paths(self):
        return len(self.paths) > 0


@dataclass
class SiteModel:
    """Cluster-based stand-in for a site-specific channel distribution.

    Every path picks a cluster uniformly at random, draws its spatial
    frequency uniformly in ``center +/- cluster_spread`` and a log-normal
    power around that cluster's ``gain_profile_db`` entry.
    """

    n_t: int = 64
    cluster_centers: tuple = (-0.25, 0.05, 0.3)
    cluster_spread: float = 0.02
    path_count_range: tuple = (2, 4)
    gain_profile_db: tuple = (-100.0, -110.0, -115.0)
    gain_sigma_db: float = 3.0
    seed: int = 0

    def __post_init__(self):
        centers = np.asarray(self.cluster_centers, dtype=float)
        if centers.size == 0 or np.any(centers < -0.5) or np.any(centers >= 0.5):
            raise ValueError("cluster centers must lie in [-0.5, 0.5)")
        if len(self.gain_profile_db) != centers.size:
            raise ValueError("gain_profile_db needs one entry per cluster")
        if self.cluster_spread < 0 or self.gain_sigma_db < 0:
            raise ValueError("spreads must be non-negative")
        lo, hi = self.path_count_range
        if lo < 1 or hi < lo:
            raise ValueError("path_count_range must satisfy 1 <= min <= max")
        if self.n_t < 1:
            raise ValueError("n_t must be positive")


@dataclass
class ChannelDataset:
    n_t: int
    samples: list = field(default_factory=list)
    origin: str = "synthetic"

    def __post_init__(self):
        if not self.samples:
            raise ValueError("dataset must not be empty")
        for s in self.samples:
            if s.n_t != self.n_t:
                raise DimensionMismatchError(f"sample has n_t={s.n_t}, dataset n_t={self.n_t}")

    def __len__(self):
        return len(self.samples)

    def channels(self):
        """Stack every ``h`` into an ``(count, n_t)`` array."""
        return np.stack([s.h for s in self.samples])

    def subset(self, indices):
        return ChannelDataset(self.n_t, [self.samples[i] for i in indices], self.origin)


def wrap_freq(u):
    """Map spatial frequencies onto the half-open period ``[-0.5, 0.5)``."""
    return (np.asarray(u, dtype=float) + 0.5) % 1.0 - 0.5


def steering(u, n_t):
    """Normalized ULA steering vector for spatial frequency ``u``."""
    if n_t < 1:
        raise ValueError("n_t must be >= 1")
    return _kernels.active.steering(np.array([u], dtype=float), n_t)[:, 0]


def steering_matrix(us, n_t):
    return _kernels.active.steering(np.asarray(us, dtype=float).reshape(-1), n_t)


def dirichlet_gain(delta, n_t):
    """``|a(u)^H a(u + delta)|^2`` in closed form."""
    delta = np.asarray(delta, dtype=float)
    num = np.sin(np.pi * n_t * delta)
    den = n_t * np.sin(np.pi * delta)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.abs(den) < 1e-300, 1.0, (num / np.where(den == 0, 1.0, den)) ** 2)
    return out


def assemble(paths, n_t):
    if len(paths) == 0:
        raise ValueError("assemble needs at least one path")
    a = steering_matrix(paths.spatial_freqs, n_t)
    return ChannelRealization(paths, a @ paths.gains)


def orthogonality_residual(paths, n_t):
    """``max |A^H A - I|`` for the path steering matrix ``A``."""
    if len(paths) == 0:
        raise ValueError("need at least one path")
    a = steering_matrix(paths.spatial_freqs, n_t)
    gram = a.conj().T @ a
    return float(np.max(np.abs(gram - np.eye(len(paths)))))


def sample_site(model, count, rng_seed=0):
    """Draw ``count`` channels from ``model``; deterministic in both seeds."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(model.seed), int(rng_seed)]))
    centers = np.asarray(model.cluster_centers, dtype=float)
    profile = np.asarray(model.gain_profile_db, dtype=float)
    lo, hi = model.path_count_range
    samples = []
    for _ in range(count):
        n_paths = int(rng.integers(lo, hi + 1))
        cl = rng.integers(0, centers.size, size=n_paths)
        u = wrap_freq(centers[cl] + rng.uniform(-model.cluster_spread, model.cluster_spread, size=n_paths))
        power_db = profile[cl] + model.gain_sigma_db * rng.standard_normal(n_paths)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=n_paths)
        gains = 10.0 ** (power_db / 20.0) * np.exp(1j * phase)
        samples.append(assemble(PathSet(gains, u), model.n_t))
    return ChannelDataset(model.n_t, samples, "synthetic")


def imported_dataset(channels, paths=None):
    """Wrap externally generated channels (e.g. ray-traced) as a dataset.

    ``paths`` may be omitted, in which case each sample carries an empty
    path set and path-based oracles are unavailable for it.
    """
    chans = np.asarray(channels, dtype=np.complex128)
    if chans.ndim != 2:
        raise DimensionMismatchError("channels must be (count, n_t)")
    empty = PathSet(np.zeros(0, complex), np.zeros(0))
    samples = []
    for i, h in enumerate(chans):
        p = paths[i] if paths is not None else empty
        samples.append(ChannelRealization(p, h.copy()))
    return ChannelDataset(chans.shape[1], samples, "imported")


# -- binary file format ------------------------------------------------------


def _pack_complex(z):
    z = np.asarray(z, dtype=np.complex128)
    return np.column_stack([z.real, z.imag]).astype("<f8").tobytes()


def dumps_dataset(ds):
    parts = [DATASET_MAGIC, struct.pack("<BII", DATASET_VERSION, ds.n_t, len(ds))]
    for s in ds.samples:
        parts.append(struct.pack("<H", len(s.paths)))
        parts.append(_pack_complex(s.paths.gains))
        parts.append(s.paths.spatial_freqs.astype("<f8").tobytes())
        parts.append(_pack_complex(s.h))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise TruncationError(f"file truncated while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def f64(self, count, what):
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").astype(np.float64)

    def c128(self, count, what):
        raw = self.f64(2 * count, what).reshape(count, 2)
        return raw[:, 0] + 1j * raw[:, 1]


def loads_dataset(buf, expect_n_t=None):
    r = _Reader(buf)
    if bytes(r.take(len(DATASET_MAGIC), "magic")) != DATASET_MAGIC:
        raise DatasetFormatError("bad magic: not a channel dataset file")
    version, n_t, count = r.unpack("<BII", "header")
    if version != DATASET_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    if expect_n_t is not None and n_t != expect_n_t:
        raise DimensionMismatchError(f"dataset has n_t={n_t}, expected {expect_n_t}")
    if count == 0:
        raise DatasetFormatError("dataset declares zero samples")
    samples = []
    for i in range(count):
        (n_paths,) = r.unpack("<H", f"sample {i} header")
        gains = r.c128(n_paths, f"sample {i} gains")
        us = r.f64(n_paths, f"sample {i} spatial frequencies")
        h = r.c128(n_t, f"sample {i} channel")
        samples.append(ChannelRealization(PathSet(gains, us), h))
    if r.pos != len(r.buf):
        raise DatasetFormatError(f"{len(r.buf) - r.pos} trailing bytes after {count} samples")
    origin = "synthetic" if all(s.has_paths for s in samples) else "imported"
    return ChannelDataset(n_t, samples, origin)


def save_dataset(ds, path):
    with open(path, "wb") as fh:
        fh.write(dumps_dataset(ds))


def load_dataset(path, expect_n_t=None):
    with open(path, "rb") as fh:
        return loads_dataset(fh.read(), expect_n_t)
