"""Portable little-endian checkpoint for a trained probing matrix and decoder."""

import struct

import numpy as np

from ssfeedback.errors import DatasetFormatError, DimensionMismatchError, TruncationError
from ssfeedback.learn.network import MlpModel, TrainableProbing
from ssfeedback.probing import Codebook, dumps_codebook, read_codebook

MODEL_MAGIC = b"BLML1"
MODEL_VERSION = 1
_HEAD = "<B5I"


def _array(a):
    a = np.ascontiguousarray(a, dtype="<f8").reshape(-1)
    return struct.pack("<I", a.size) + a.tobytes()


def dumps_model(probe, model):
    if probe.n_t != model.n_t or probe.k != model.k:
        raise DimensionMismatchError("probing matrix does not match the decoder's n_t/K")
    parts = [MODEL_MAGIC,
             struct.pack(_HEAD, MODEL_VERSION, model.n_t, model.k, model.q, model.depth, model.width),
             dumps_codebook(Codebook(probe.b, "learned"))]
    for layer in model.layers:
        for key in ("w", "b", "gamma", "beta"):
            parts.append(_array(layer[key]))
    parts.append(_array(model.w_out))
    parts.append(_array(model.b_out))
    return b"".join(parts)


def loads_model(buf):
    """Inverse of :func:`dumps_model`; returns ``(probe, model)``."""
    buf = memoryview(buf)
    pos = len(MODEL_MAGIC)
    if bytes(buf[:pos]) != MODEL_MAGIC:
        raise DatasetFormatError("bad magic: not a model checkpoint")
    hsize = struct.calcsize(_HEAD)
    if len(buf) < pos + hsize:
        raise TruncationError("checkpoint header truncated")
    version, n_t, k, q, depth, width = struct.unpack(_HEAD, buf[pos:pos + hsize])
    if version != MODEL_VERSION:
        raise DatasetFormatError(f"unsupported checkpoint version {version}")
    pos += hsize
    book, pos = read_codebook(buf, pos)
    if book.n_t != n_t or book.size != k:
        raise DatasetFormatError("embedded probing matrix disagrees with the header")

    def take(shape):
        nonlocal pos
        if len(buf) < pos + 4:
            raise TruncationError("checkpoint truncated at array length")
        (count,) = struct.unpack("<I", buf[pos:pos + 4])
        pos += 4
        if count != int(np.prod(shape)):
            raise DatasetFormatError(f"array of {count} values, expected shape {shape}")
        if len(buf) < pos + 8 * count:
            raise TruncationError("checkpoint truncated inside an array")
        out = np.frombuffer(buf[pos:pos + 8 * count], dtype="<f8").astype(np.float64).reshape(shape)
        pos += 8 * count
        return out

    layers = []
    fan_in = k
    for _ in range(depth):
        layers.append({"w": take((width, fan_in)), "b": take((width,)),
                       "gamma": take((width,)), "beta": take((width,))})
        fan_in = width
    w_out = take((2 * n_t * q, width))
    b_out = take((2 * n_t * q,))
    if pos != len(buf):
        raise DatasetFormatError("trailing bytes after checkpoint")
    model = MlpModel(n_t, k, q, depth, width, layers, w_out, b_out)
    probe = TrainableProbing(book.beams, "learned")
    probe.b = book.beams.copy()  # keep stored bits; construction renormalizes
    return probe, model


def save_model(probe, model, path):
    with open(path, "wb") as fh:
        fh.write(dumps_model(probe, model))


def load_model(path):
    with open(path, "rb") as fh:
        return loads_model(fh.read())
