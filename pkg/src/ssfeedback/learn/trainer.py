"""Mini-batch joint training of the probing matrix and decoder, and deployment."""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ssfeedback.errors import EmptyBasisError, NumericFailure
from ssfeedback.learn.network import (
    MlpModel,
    TrainableProbing,
    decode,
    flat_grad_norm,
    forward_backward,
)
from ssfeedback.numkernel import orthonormalize
from ssfeedback.probing import Codebook, NoiseModel, normalize_fingerprint, rsrp_fingerprint
from ssfeedback.schemes import FeedbackOutcome, FeedbackReport, Subspace, proposed


@dataclass
class TrainConfig:
    k: int = 8
    q: int = 4
    depth: int = 3
    width: int = 256
    batch_size: int = 64
    step_beta: float = 0.05
    epochs: int = 200
    optimizer: str = "sgd"
    adam_b1: float = 0.9
    adam_b2: float = 0.999
    adam_eps: float = 1e-8
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0
    ridge_eps: float = 1e-6
    val_fraction: float = 0.15
    probing_init: str = "dft"
    train_probing: bool = True
    clip_norm: float = None

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.step_beta < 0:
            raise ValueError("step_beta must be >= 0")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.probing_init not in ("dft", "random"):
            raise ValueError(f"unknown probing_init {self.probing_init!r}")


@dataclass
class TrainTrace:
    epoch: list = field(default_factory=list)
    train_eta: list = field(default_factory=list)
    val_eta: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)

    def __len__(self):
        return len(self.epoch)

    def append(self, epoch, train_eta, val_eta, grad_norm, wall):
        self.epoch.append(epoch)
        self.train_eta.append(train_eta)
        self.val_eta.append(val_eta)
        self.grad_norm.append(grad_norm)
        self.wall_time.append(wall)

    def rows(self):
        """Deterministic rows (wall time excluded)."""
        return list(zip(self.epoch, self.train_eta, self.val_eta, self.grad_norm))


class TrainingDiverged(NumericFailure):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


def init_probing(cfg, n_t):
    if cfg.probing_init == "dft":
        probe = TrainableProbing.dft(n_t, cfg.k)
    else:
        probe = TrainableProbing.random(n_t, cfg.k, seed=cfg.seed + 7919)
    if cfg.train_probing:
        probe.kind = "learned"
    return probe


def split_indices(count, val_fraction, seed):
    perm = np.random.default_rng(np.random.SeedSequence([seed, 31])).permutation(count)
    n_val = int(round(count * val_fraction))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def evaluate_ridge(probe, model, h, cfg, noise_db=None, chunk=512):
    """Per-sample training-path eta (ridge projector) without gradients."""
    out = []
    for i in range(0, h.shape[0], chunk):
        nd = None if noise_db is None else noise_db[i:i + chunk]
        out.append(forward_backward(probe, model, h[i:i + chunk], nd, cfg.noise.p_ssb,
                                    cfg.ridge_eps, need_grad=False).eta)
    return np.concatenate(out) if out else np.zeros(0)


def draw_noise(rng, noise, shape):
    """Additive dB perturbation for a batch of fingerprints (``None`` when off)."""
    if not noise.enabled:
        return None
    return rng.normal(noise.mu_b, noise.sigma_b, size=shape)


class _Adam:
    def __init__(self, cfg):
        self.cfg = cfg
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads, lr):
        c = self.cfg
        self.t += 1
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros(g.shape)
            self.m[name] = c.adam_b1 * self.m[name] + (1 - c.adam_b1) * g
            self.v[name] = c.adam_b2 * self.v[name] + (1 - c.adam_b2) * np.abs(g) ** 2
            mh = self.m[name] / (1 - c.adam_b1 ** self.t)
            vh = self.v[name] / (1 - c.adam_b2 ** self.t)
            params[name] -= lr * mh / (np.sqrt(vh) + c.adam_eps)


def train(dataset, cfg, val_dataset=None, probe=None, log=None):
    """Jointly fit the probing matrix and decoder on ``dataset``.

    Each iteration samples a mini-batch, measures the dB fingerprint,
    adds Gaussian dB noise, decodes a basis and descends ``-mean(eta)``;
    probing columns are renormalized after every step.  Validation eta is
    measured after each epoch with a fixed noise draw.

    Returns ``(probe, model, trace)``.
    """
    h_all = dataset.channels()
    if val_dataset is None:
        tr_idx, va_idx = split_indices(len(dataset), cfg.val_fraction, cfg.seed)
        h_train, h_val = h_all[tr_idx], h_all[va_idx]
    else:
        h_train, h_val = h_all, val_dataset.channels()
    n_t = dataset.n_t
    if h_train.shape[0] < cfg.batch_size:
        raise ValueError(f"training split ({h_train.shape[0]}) smaller than batch ({cfg.batch_size})")

    ss = np.random.SeedSequence([cfg.seed, 2024])
    init_seed, batch_seed, val_seed = ss.spawn(3)
    model = MlpModel.init(n_t, cfg.k, cfg.q, cfg.depth, cfg.width,
                          seed=int(init_seed.generate_state(1)[0]))
    probe = probe if probe is not None else init_probing(cfg, n_t)
    rng = np.random.default_rng(batch_seed)
    noise = cfg.noise
    val_noise = draw_noise(np.random.default_rng(val_seed), noise, (h_val.shape[0], cfg.k))
    params = model.params()
    adam = _Adam(cfg) if cfg.optimizer == "adam" else None
    steps = h_train.shape[0] // cfg.batch_size
    trace = TrainTrace()
    t0 = time.perf_counter()

    for epoch in range(cfg.epochs):
        perm = rng.permutation(h_train.shape[0])
        etas, norms = [], []
        for it in range(steps):
            batch = h_train[perm[it * cfg.batch_size:(it + 1) * cfg.batch_size]]
            nd = draw_noise(rng, noise, (batch.shape[0], cfg.k))
            try:
                res = forward_backward(probe, model, batch, nd, noise.p_ssb, cfg.ridge_eps)
                gnorm = flat_grad_norm(res)
                if not math.isfinite(gnorm):
                    raise NumericFailure("non-finite gradient")
                scale = 1.0
                if cfg.clip_norm is not None and gnorm > cfg.clip_norm:
                    scale = cfg.clip_norm / gnorm
                grads = {k: v * scale for k, v in res.grads.items()}
                if cfg.train_probing:
                    grads["probe"] = res.grad_b * scale
                targets = dict(params)
                targets["probe"] = probe.b
                if adam is None:
                    for name, g in grads.items():
                        targets[name] -= cfg.step_beta * g
                else:
                    adam.step(targets, grads, cfg.step_beta)
                probe.renormalize()
            except (NumericFailure, np.linalg.LinAlgError) as exc:
                raise TrainingDiverged(f"epoch {epoch}, step {it}: {exc}", trace) from exc
            etas.append(float(np.mean(res.eta)))
            norms.append(gnorm)
        val_eta = float("nan")
        if h_val.shape[0]:
            val_eta = float(np.mean(evaluate_ridge(probe, model, h_val, cfg, val_noise)))
        train_eta = float(np.mean(etas)) if etas else float("nan")
        if etas and not math.isfinite(train_eta):
            raise TrainingDiverged(f"epoch {epoch}: loss became NaN", trace)
        trace.append(epoch, train_eta, val_eta, float(np.mean(norms)) if norms else 0.0,
                     time.perf_counter() - t0)
        if log is not None:
            log(epoch, train_eta, val_eta)
    return probe, model, trace


def infer_subspace(probe, model, fingerprint_db, tol=1e-8):
    """Decode a fingerprint and orthonormalize; returns ``(Subspace, rank_ok)``."""
    c_raw = decode(model, normalize_fingerprint(fingerprint_db))
    u = orthonormalize(c_raw, tol)
    return Subspace(u), u.shape[1] == model.q


def export_deployment(probe, model, h, noise=NoiseModel(), seed=0):
    """Run the online procedure for one channel with trained artifacts.

    Sweep the probing beams, measure a (noisy) fingerprint, infer and
    orthonormalize the subspace, then apply the coefficient feedback
    scheme.  A rank-deficient decoded basis proceeds with reduced rank
    and is flagged ``reduced_rank``.
    """
    book = Codebook(probe.b, "learned")
    fp = rsrp_fingerprint(h, book, noise, seed)
    flags = []
    try:
        sub, full = infer_subspace(probe, model, fp.values_db)
    except EmptyBasisError:
        h = np.asarray(h, dtype=np.complex128)
        report = FeedbackReport("proposed", None, np.zeros(model.q, dtype=complex))
        return FeedbackOutcome(report, np.zeros_like(h), np.zeros_like(h), 0.0, 0.0,
                               probe.k + 2 * model.q, flags=["degenerate_projection"])
    if not full:
        flags.append("reduced_rank")
    out = proposed(h, sub, probe.k)
    out.flags = flags + out.flags
    # overhead stays K + 2q with the configured q, also when rank drops
    out.overhead_uses = probe.k + 2 * model.q
    return out
