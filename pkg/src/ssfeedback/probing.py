"""Probing codebooks and the SSB/RSRP fingerprint measurement model."""

import struct
from dataclasses import dataclass

import numpy as np

from ssfeedback.channel import steering_matrix, wrap_freq
from ssfeedback.errors import DatasetFormatError, DegenerateChannelError, DimensionMismatchError

FLOOR_DB = -300.0
_FLOOR_LIN = 10.0 ** (FLOOR_DB / 10.0)

CODEBOOK_MAGIC = b"BLCB1"
KINDS = ("dft_oversampled", "random", "learned")


@dataclass(frozen=True)
class Codebook:
    """``n_t x K`` matrix of unit-norm beams."""

    beams: np.ndarray
    kind: str = "dft_oversampled"

    def __post_init__(self):
        b = np.asarray(self.beams, dtype=np.complex128)
        if b.ndim != 2:
            raise DimensionMismatchError("beams must be a 2-D array")
        if self.kind not in KINDS:
            raise ValueError(f"unknown codebook kind {self.kind!r}")
        norms = np.linalg.norm(b, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("codebook columns must have unit norm")
        object.__setattr__(self, "beams", b)

    @property
    def n_t(self):
        return self.beams.shape[0]

    @property
    def size(self):
        return self.beams.shape[1]


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian dB-domain perturbation of the RSRP readings."""

    mu_b: float = 0.0
    sigma_b: float = 1.0
    p_ssb: float = 1.0
    enabled: bool = True

    def __post_init__(self):
        if self.sigma_b < 0:
            raise ValueError("sigma_b must be >= 0")
        if self.p_ssb <= 0:
            raise ValueError("p_ssb must be > 0")


@dataclass(frozen=True)
class RsrpFingerprint:
    values_db: np.ndarray
    noise_free_db: np.ndarray = None


def dft_codebook(n_t, oversample=1):
    """Oversampled DFT dictionary with ``n_t * oversample`` columns.

    Column ``m`` is the steering vector at ``m / (n_t * oversample)``,
    wrapped into ``[-0.5, 0.5)``.
    """
    if n_t < 1 or oversample < 1:
        raise ValueError("n_t and oversample must be >= 1")
    m = np.arange(n_t * oversample)
    return Codebook(steering_matrix(wrap_freq(m / (n_t * oversample)), n_t), "dft_oversampled")


def dft_sweep(n_t, k):
    """``k`` beams evenly spaced in spatial frequency (uniform SSB sweep)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return Codebook(steering_matrix(wrap_freq(np.arange(k) / k), n_t), "dft_oversampled")


def random_codebook(n_t, k, seed=0):
    rng = np.random.default_rng(seed)
    b = rng.standard_normal((n_t, k)) + 1j * rng.standard_normal((n_t, k))
    return Codebook(b / np.linalg.norm(b, axis=0), "random")


def beam_power_db(beams, h, p_ssb):
    """Noise-free dB power of every beam; floors at ``FLOOR_DB``.

    Works on a single channel ``(n_t,)`` or a batch ``(n, n_t)``.
    """
    s = np.asarray(h) @ np.conj(beams)  # b_k^H h, row-wise for batches
    p = p_ssb * (s.real ** 2 + s.imag ** 2)
    return 10.0 * np.log10(np.maximum(p, _FLOOR_LIN))


def rsrp_fingerprint(h, book, noise=NoiseModel(), rng_seed=0):
    h = np.asarray(h, dtype=np.complex128)
    if h.shape != (book.n_t,):
        raise DimensionMismatchError(f"channel length {h.shape} vs codebook n_t={book.n_t}")
    if not np.any(h):
        raise DegenerateChannelError("zero channel has no RSRP fingerprint")
    clean = beam_power_db(book.beams, h, noise.p_ssb)
    if not noise.enabled:
        return RsrpFingerprint(clean.copy(), clean)
    rng = np.random.default_rng(rng_seed)
    return RsrpFingerprint(clean + rng.normal(noise.mu_b, noise.sigma_b, size=clean.shape), clean)


def normalize_fingerprint(r, eps=1e-6):
    """Per-fingerprint standardization: zero mean, unit (population) std."""
    x = np.asarray(getattr(r, "values_db", r), dtype=np.float64)
    c = x - x.mean(axis=-1, keepdims=True)
    return c / (c.std(axis=-1, keepdims=True) + eps)


# -- binary codebook format ---------------------------------------------------


def dumps_codebook(book):
    head = CODEBOOK_MAGIC + struct.pack("<BII", KINDS.index(book.kind), book.n_t, book.size)
    cols = book.beams.T  # column-major payload
    flat = np.column_stack([cols.real.reshape(-1), cols.imag.reshape(-1)])
    return head + flat.astype("<f8").tobytes()


def read_codebook(buf, offset=0):
    """Parse a codebook starting at ``offset``; returns ``(book, new_offset)``."""
    buf = memoryview(buf)
    hdr = len(CODEBOOK_MAGIC) + struct.calcsize("<BII")
    if len(buf) - offset < hdr:
        raise DatasetFormatError("codebook header truncated")
    if bytes(buf[offset:offset + 5]) != CODEBOOK_MAGIC:
        raise DatasetFormatError("bad magic: not a codebook")
    kind, n_t, k = struct.unpack("<BII", buf[offset + 5:offset + hdr])
    if kind >= len(KINDS):
        raise DatasetFormatError(f"unknown codebook kind id {kind}")
    nbytes = 16 * n_t * k
    end = offset + hdr + nbytes
    if len(buf) < end:
        raise DatasetFormatError("codebook payload truncated")
    raw = np.frombuffer(buf[offset + hdr:end], dtype="<f8").reshape(k, n_t, 2)
    beams = (raw[..., 0] + 1j * raw[..., 1]).T.copy()
    return Codebook(beams, KINDS[kind]), end


def loads_codebook(buf):
    book, end = read_codebook(buf)
    if end != len(buf):
        raise DatasetFormatError("trailing bytes after codebook")
    return book


def save_codebook(book, path):
    with open(path, "wb") as fh:
        fh.write(dumps_codebook(book))


def load_codebook(path):
    with open(path, "rb") as fh:
        return loads_codebook(fh.read())
