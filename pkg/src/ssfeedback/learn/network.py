"""Probing encoder, LayerNorm/GELU MLP decoder and the ridge-projection loss.

Everything is batched over channels and differentiated by hand.  Complex
parameters are treated as independent real and imaginary parts; their
gradients are returned packed as ``dL/dRe + 1j * dL/dIm``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from ssfeedback.errors import DegenerateChannelError, DimensionMismatchError, NumericFailure
from ssfeedback.probing import FLOOR_DB, beam_power_db, dft_sweep, random_codebook

LN_EPS = 1e-5
NORM_EPS = 1e-6
_DB_PER_NEPER = 10.0 / math.log(10.0)
_FLOOR_LIN = 10.0 ** (FLOOR_DB / 10.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x):
    return x * ndtr(x)


def gelu_grad(x):
    return ndtr(x) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


@dataclass
class TrainableProbing:
    """Probing matrix ``B`` with unit-norm columns."""

    b: np.ndarray
    kind: str = "learned"

    def __post_init__(self):
        self.b = np.array(self.b, dtype=np.complex128)
        self.renormalize()

    def renormalize(self):
        norms = np.linalg.norm(self.b, axis=0)
        if np.any(norms == 0) or not np.all(np.isfinite(norms)):
            raise NumericFailure("probing column collapsed to zero or non-finite")
        self.b /= norms

    @property
    def n_t(self):
        return self.b.shape[0]

    @property
    def k(self):
        return self.b.shape[1]

    @classmethod
    def dft(cls, n_t, k):
        return cls(dft_sweep(n_t, k).beams, "dft_oversampled")

    @classmethod
    def random(cls, n_t, k, seed=0):
        return cls(random_codebook(n_t, k, seed).beams, "random")


@dataclass
class MlpModel:
    """Depth-``D`` MLP: ``K -> W -> ... -> W -> 2 n_t q``.

    ``layers`` holds one dict per hidden layer with keys ``w``, ``b``,
    ``gamma``, ``beta``; the linear read-out is ``w_out``, ``b_out``.
    """

    n_t: int
    k: int
    q: int
    depth: int
    width: int
    layers: list = field(default_factory=list)
    w_out: np.ndarray = None
    b_out: np.ndarray = None

    @classmethod
    def init(cls, n_t, k, q, depth=3, width=256, seed=0):
        if depth < 1 or width < 1:
            raise ValueError("depth and width must be >= 1")
        rng = np.random.default_rng(seed)
        layers = []
        fan_in = k
        for _ in range(depth):
            lim = math.sqrt(3.0 / fan_in)
            layers.append({
                "w": rng.uniform(-lim, lim, size=(width, fan_in)),
                "b": np.zeros(width),
                "gamma": np.ones(width),
                "beta": np.zeros(width),
            })
            fan_in = width
        lim = math.sqrt(3.0 / width)
        w_out = rng.uniform(-lim, lim, size=(2 * n_t * q, width))
        return cls(n_t, k, q, depth, width, layers, w_out, np.zeros(2 * n_t * q))

    def params(self):
        """Flat ``{name: array}`` view in a fixed order (shared storage)."""
        out = {}
        for d, layer in enumerate(self.layers):
            for key in ("w", "b", "gamma", "beta"):
                out[f"{key}{d}"] = layer[key]
        out["w_out"] = self.w_out
        out["b_out"] = self.b_out
        return out

    def copy(self):
        layers = [{k: v.copy() for k, v in layer.items()} for layer in self.layers]
        return MlpModel(self.n_t, self.k, self.q, self.depth, self.width, layers,
                        self.w_out.copy(), self.b_out.copy())


# -- forward pieces ---------------------------------------------------------------


def encode(probe, h, p_ssb=1.0):
    """Noise-free dB fingerprint of ``h`` (single channel or batch)."""
    h = np.asarray(h, dtype=np.complex128)
    energy = np.sum(np.abs(h) ** 2, axis=-1)
    if np.any(energy == 0):
        raise DegenerateChannelError("zero channel cannot be encoded")
    return beam_power_db(probe.b, h, p_ssb)


def _standardize(r):
    c = r - r.mean(axis=-1, keepdims=True)
    sd = np.sqrt(np.mean(c * c, axis=-1, keepdims=True))
    return c / (sd + NORM_EPS), c, sd


def _split_complex(o, n_t, q):
    nq = n_t * q
    return (o[..., :nq] + 1j * o[..., nq:]).reshape(o.shape[:-1] + (n_t, q))


def decode(model, fingerprint, _cache=None):
    """Raw ``n_t x q`` complex basis from a standardized fingerprint.

    Accepts a single ``(K,)`` fingerprint or a ``(batch, K)`` stack.
    """
    x = np.asarray(fingerprint, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.k:
        raise DimensionMismatchError(f"fingerprint length {x.shape[1]} != K={model.k}")
    for layer in model.layers:
        z = x @ layer["w"].T + layer["b"]
        mu = z.mean(axis=1, keepdims=True)
        zc = z - mu
        inv_std = 1.0 / np.sqrt(np.mean(zc * zc, axis=1, keepdims=True) + LN_EPS)
        xhat = zc * inv_std
        y = layer["gamma"] * xhat + layer["beta"]
        a = gelu(y)
        if _cache is not None:
            _cache.append((x, xhat, inv_std, y))
        x = a
    o = x @ model.w_out.T + model.b_out
    if _cache is not None:
        _cache.append((x,))
    if not np.all(np.isfinite(o)):
        raise NumericFailure("decoder produced non-finite activations")
    c = _split_complex(o, model.n_t, model.q)
    return c[0] if single else c


def _ridge_terms(c_raw, h, ridge_eps):
    q = c_raw.shape[-1]
    ch = np.conj(np.swapaxes(c_raw, -1, -2))
    gram = ch @ c_raw + ridge_eps * np.eye(q)
    v = (ch @ h[..., None])[..., 0]
    x = np.linalg.solve(gram, v[..., None])[..., 0]
    captured = np.real(np.sum(np.conj(v) * x, axis=-1))
    return x, captured


def subspace_loss(c_raw, h, ridge_eps=1e-6):
    """``(loss, eta)`` using ``P = C (C^H C + eps I)^-1 C^H`` on the raw basis.

    Batched inputs return per-sample arrays.
    """
    c_raw = np.asarray(c_raw, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    energy = np.real(np.sum(np.conj(h) * h, axis=-1))
    if np.any(energy == 0):
        raise DegenerateChannelError("zero channel")
    _, captured = _ridge_terms(c_raw, h, ridge_eps)
    eta = captured / energy
    if np.ndim(eta) == 0:
        return -float(eta), float(eta)
    return -eta, eta


# -- full pipeline with reverse mode ----------------------------------------------


@dataclass
class PipelineResult:
    loss: float
    eta: np.ndarray
    grads: dict = None
    grad_b: np.ndarray = None


def forward_backward(probe, model, h, noise_db=None, p_ssb=1.0, ridge_eps=1e-6,
                     weights=None, need_grad=True):
    """Mini-batch loss ``-mean(eta)`` and exact gradients for ``B`` and the MLP.

    ``noise_db`` is an additive ``(batch, K)`` perturbation of the dB
    fingerprint; it is a constant for differentiation.  ``weights`` scales
    each sample's loss term (default ``1 / batch``).
    """
    h = np.atleast_2d(np.asarray(h, dtype=np.complex128))
    n = h.shape[0]
    energy = np.real(np.sum(np.conj(h) * h, axis=1))
    if np.any(energy == 0):
        raise DegenerateChannelError("zero channel in batch")
    if weights is None:
        weights = np.full(n, 1.0 / n)

    s = h @ np.conj(probe.b)  # (n, K): b_k^H h
    p = p_ssb * (s.real ** 2 + s.imag ** 2)
    live = p > _FLOOR_LIN
    r = 10.0 * np.log10(np.maximum(p, _FLOOR_LIN))  # same expression as beam_power_db
    if noise_db is not None:
        r = r + noise_db
    x0, centred, sd = _standardize(r)

    cache = []
    c = decode(model, x0, _cache=cache)
    x_sol, captured = _ridge_terms(c, h, ridge_eps)
    eta = captured / energy
    loss = -float(np.sum(weights * eta))
    if not np.isfinite(loss):
        raise NumericFailure("loss is not finite")
    if not need_grad:
        return PipelineResult(loss, eta)

    # d loss / d captured_n, then dC = 2 r x^H scaled
    g_cap = -weights / energy
    resid = h - (c @ x_sol[..., None])[..., 0]
    g_c = 2.0 * g_cap[:, None, None] * resid[:, :, None] * np.conj(x_sol)[:, None, :]
    nq = model.n_t * model.q
    g_o = np.concatenate([g_c.real.reshape(n, nq), g_c.imag.reshape(n, nq)], axis=1)

    grads = {}
    (a_last,) = cache[-1]
    grads["w_out"] = g_o.T @ a_last
    grads["b_out"] = g_o.sum(axis=0)
    g_a = g_o @ model.w_out
    for d in range(model.depth - 1, -1, -1):
        layer = model.layers[d]
        x_in, xhat, inv_std, y = cache[d]
        g_y = g_a * gelu_grad(y)
        grads[f"gamma{d}"] = np.sum(g_y * xhat, axis=0)
        grads[f"beta{d}"] = g_y.sum(axis=0)
        g_xhat = g_y * layer["gamma"]
        g_z = inv_std * (g_xhat - g_xhat.mean(axis=1, keepdims=True)
                         - xhat * np.mean(g_xhat * xhat, axis=1, keepdims=True))
        grads[f"w{d}"] = g_z.T @ x_in
        grads[f"b{d}"] = g_z.sum(axis=0)
        g_a = g_z @ layer["w"]

    # back through the per-fingerprint standardization
    k = r.shape[1]
    denom = sd + NORM_EPS
    g_x0 = g_a
    safe_sd = np.where(sd > 0, sd, 1.0)
    g_r = (g_x0 - g_x0.mean(axis=1, keepdims=True)) / denom \
        - centred * np.sum(centred * g_x0, axis=1, keepdims=True) / (k * safe_sd * denom ** 2)
    # dB power -> probing columns: d r / d B* = (10/ln10) h / s
    g_s = np.where(live, g_r / np.where(live, s, 1.0), 0.0)
    grad_b = 2.0 * _DB_PER_NEPER * (h.T @ g_s)
    return PipelineResult(loss, eta, grads, grad_b)


def flat_grad_norm(res):
    total = sum(float(np.sum(g * g)) for g in res.grads.values())
    total += float(np.sum(np.abs(res.grad_b) ** 2))
    return math.sqrt(total)
