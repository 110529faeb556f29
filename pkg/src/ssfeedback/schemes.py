"""Feedback schemes as compression/reconstruction pairs with projector semantics.

Each scheme returns a :class:`FeedbackOutcome` holding the UE report, the
reconstructed channel, the unit-norm MRT beamformer, the capture
efficiency ``eta = ||P h||^2 / ||h||^2``, rate and effective SE.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ssfeedback import _kernels
from ssfeedback.channel import steering_matrix
from ssfeedback.errors import (
    DegenerateChannelError,
    DimensionMismatchError,
    EmptyBasisError,
    PathsUnavailableError,
)
from ssfeedback.numkernel import as_cvec, least_squares, orthonormalize, spectral_norm

SCHEMES = ("type1", "type2", "psc", "proposed")
_RANK_TOL = 1e-10


@dataclass(frozen=True)
class Subspace:
    basis: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.basis, dtype=np.complex128)
        if u.ndim != 2 or not 1 <= u.shape[1] <= u.shape[0]:
            raise DimensionMismatchError(f"basis must be n_t x q with 1 <= q <= n_t, got {u.shape}")
        if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[1]))) >= 1e-10:
            raise ValueError("basis columns are not orthonormal")
        object.__setattr__(self, "basis", u)

    @classmethod
    def from_basis(cls, raw, tol=1e-8):
        """Orthonormalize an arbitrary spanning set."""
        return cls(orthonormalize(raw, tol))

    @property
    def n_t(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def projector(self):
        return self.basis @ self.basis.conj().T


@dataclass(frozen=True)
class FeedbackReport:
    scheme: str
    indices: tuple = None
    coefficients: np.ndarray = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "type1" and (self.indices is None or len(self.indices) != 1
                                       or self.coefficients is not None):
            raise ValueError("type1 reports exactly one index and no coefficients")
        if self.scheme in ("type2", "psc") and (
                self.indices is None or self.coefficients is None
                or len(self.indices) != len(self.coefficients)):
            raise ValueError(f"{self.scheme} needs matching indices and coefficients")
        if self.scheme == "proposed" and (self.indices is not None or self.coefficients is None):
            raise ValueError("proposed reports coefficients only")


@dataclass
class LinkParams:
    """Link budget; ``rho`` is the linear transmit-SNR ``P_t / sigma_n^2``."""

    rho: float = None
    t_c: int = 1000
    t_ssb: int = 0
    p_t_dbm: float = 40.0
    bw_hz: float = 10e6
    noise_psd_dbm_hz: float = -170.0

    def __post_init__(self):
        if self.rho is None:
            rho_db = self.p_t_dbm - (self.noise_psd_dbm_hz + 10.0 * math.log10(self.bw_hz))
            self.rho = 10.0 ** (rho_db / 10.0)
        if self.rho <= 0 or self.t_c <= 0:
            raise ValueError("rho and t_c must be positive")

    def scaled(self, factor):
        return LinkParams(self.rho * factor, self.t_c, self.t_ssb, self.p_t_dbm,
                          self.bw_hz, self.noise_psd_dbm_hz)


@dataclass
class FeedbackOutcome:
    report: FeedbackReport
    h_hat: np.ndarray
    w_hat: np.ndarray
    eta: float
    captured: float  # ||P h||^2, absolute
    overhead_uses: int
    rate_bps_hz: float = 0.0
    effective_se: float = 0.0
    flags: list = field(default_factory=list)
    subspace: Subspace = None  # kept for the proposed scheme only

    @property
    def scheme(self):
        return self.report.scheme

    def with_link(self, link):
        """Fill in rate and effective SE for ``link``; returns ``self``."""
        self.rate_bps_hz = rate(self.captured, link.rho)
        self.effective_se = effective_se(self.captured, self.overhead_uses + link.t_ssb,
                                         link.t_c, link.rho)
        return self


# -- projector algebra --------------------------------------------------------


def _check_channel(h):
    h = as_cvec(h, "channel")
    e = float(np.real(np.vdot(h, h)))
    if e == 0.0:
        raise DegenerateChannelError("channel has zero norm")
    return h, e


def project(sub, h):
    h = np.asarray(h, dtype=np.complex128)
    if h.shape != (sub.n_t,):
        raise DimensionMismatchError(f"channel {h.shape} vs subspace n_t={sub.n_t}")
    return sub.basis @ (sub.basis.conj().T @ h)


def capture_efficiency(sub, h):
    h, e = _check_channel(h)
    z = sub.basis.conj().T @ h
    return min(float(np.real(np.vdot(z, z))) / e, 1.0)


def rate(captured, rho):
    """``log2(1 + rho ||P h||^2)``."""
    return math.log2(1.0 + rho * captured)


def effective_se(captured, overhead, t_c, rho):
    """Rate discounted by the overhead fraction; clamps to 0 when ``T_o >= T_c``."""
    if overhead < 0:
        raise ValueError("overhead must be >= 0")
    if overhead >= t_c:
        return 0.0
    return (1.0 - overhead / t_c) * rate(captured, rho)


def _outcome(report, h, e, u, overhead, flags=None):
    """Common tail: reconstruct ``P h`` from orthonormal ``u`` and form the MRT beam."""
    z = u.conj().T @ h
    h_hat = u @ z
    captured = float(np.real(np.vdot(z, z)))
    flags = list(flags or [])
    nh = math.sqrt(captured)
    if nh <= 1e-300:
        flags.append("degenerate_projection")
        w = np.zeros_like(h)
        captured = 0.0
    else:
        w = h_hat / nh
    return FeedbackOutcome(report, h_hat, w, min(captured / e, 1.0), captured, overhead, flags=flags)


# -- schemes --------------------------------------------------------------------


def type1(h, quant):
    """Single best DFT codeword (PMI); overhead ``N_t + 1``."""
    h, e = _check_channel(h)
    if quant.n_t != h.shape[0]:
        raise DimensionMismatchError("codebook and channel dimensions differ")
    corr = np.abs(quant.beams.conj().T @ h) ** 2
    idx = _argmax_low(corr)
    d = quant.beams[:, [idx]]
    out = _outcome(FeedbackReport("type1", (idx,)), h, e, d, h.shape[0] + 1)
    # reconstruction is the codeword itself, which is also the beamformer
    out.h_hat = d[:, 0].copy()
    out.w_hat = d[:, 0].copy()
    return out


def _argmax_low(values):
    """Index of the maximum; near-ties (1e-12 relative) go to the lowest index."""
    best = float(np.max(values))
    return int(np.flatnonzero(values >= best - 1e-12 * max(best, 1e-300))[0])


def type2(h, quant, q):
    """Greedy ``q``-beam DFT subspace with least-squares coefficients.

    Beams are added one at a time, each maximizing the projection-energy
    gain on the current residual; overhead ``N_t + 2q``.
    """
    h, e = _check_channel(h)
    n_t = h.shape[0]
    if not 1 <= q <= n_t:
        raise ValueError(f"q must be in [1, {n_t}]")
    if quant.n_t != n_t:
        raise DimensionMismatchError("codebook and channel dimensions differ")
    picks = [int(i) for i in _kernels.active.greedy_select(h, quant.beams, q, _RANK_TOL)]
    flags = [] if len(picks) == q else ["rank_deficient"]
    d_s = quant.beams[:, picks]
    coeffs = least_squares(d_s, h)
    u = orthonormalize(d_s)
    out = _outcome(FeedbackReport("type2", tuple(picks), coeffs), h, e, u, n_t + 2 * q, flags)
    return out


def psc(h, n_p):
    """Strongest ``n_p`` antenna ports; overhead ``N_t + 2 n_p``."""
    h, e = _check_channel(h)
    n_t = h.shape[0]
    if not 1 <= n_p <= n_t:
        raise ValueError(f"n_p must be in [1, {n_t}]")
    power = np.abs(h) ** 2
    sel = np.sort(np.argsort(-power, kind="stable")[:n_p])
    coeffs = h[sel].copy()
    h_hat = np.zeros_like(h)
    h_hat[sel] = coeffs
    captured = float(np.sum(power[sel]))
    w = h_hat / math.sqrt(captured) if captured > 0 else np.zeros_like(h)
    flags = [] if captured > 0 else ["degenerate_projection"]
    return FeedbackOutcome(FeedbackReport("psc", tuple(int(i) for i in sel), coeffs),
                           h_hat, w, min(captured / e, 1.0), captured, n_t + 2 * n_p, flags=flags)


def proposed(h, sub, k_probe):
    """Coefficients ``z = U^H h`` over an inferred subspace; overhead ``K + 2q``.

    A zero projection yields ``eta = 0`` with a ``degenerate_projection``
    flag instead of a NaN beamformer.
    """
    h, e = _check_channel(h)
    if sub.n_t != h.shape[0]:
        raise DimensionMismatchError("subspace and channel dimensions differ")
    z = sub.basis.conj().T @ h
    out = _outcome(FeedbackReport("proposed", None, z), h, e, sub.basis,
                   int(k_probe) + 2 * sub.dim)
    out.subspace = sub
    return out


def oracle_subspace(paths, q, n_t):
    """Span of the steering vectors of the ``min(q, L)`` strongest paths."""
    if q < 1:
        raise ValueError("q must be >= 1")
    if len(paths) == 0:
        raise PathsUnavailableError("sample has no path decomposition")
    idx = paths.strongest(min(q, len(paths)))
    raw = steering_matrix(paths.spatial_freqs[idx], n_t)
    return Subspace.from_basis(raw)


def mismatch_bound(p_inferred, p_oracle, h):
    """Subspace mismatch ``delta`` and the implied lower bound on ``eta``."""
    h, _ = _check_channel(h)
    delta = spectral_norm(p_inferred.projector - p_oracle.projector)
    eta_star = capture_efficiency(p_oracle, h)
    return delta, max(eta_star - delta, 0.0)


def angular_response(sub, grid_points, normalize=False):
    """``a(u)^H P a(u)`` on a uniform grid over ``[-0.5, 0.5)``.

    Returns ``(u_grid, response)``.
    """
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    u = -0.5 + np.arange(grid_points) / grid_points
    a = steering_matrix(u, sub.n_t)
    g = np.sum(np.abs(sub.basis.conj().T @ a) ** 2, axis=0)
    g = np.clip(g, 0.0, 1.0)
    if normalize and g.max() > 0:
        g = g / g.max()
    return u, g


def beam_subspace(w):
    """Rank-1 subspace of a single beam (e.g. a Type-I codeword)."""
    w = np.asarray(w, dtype=np.complex128)
    n = np.linalg.norm(w)
    if n == 0:
        raise EmptyBasisError("zero beam")
    return Subspace((w / n)[:, None])


def outcome_subspace(outcome, quant=None):
    """Recover the representation subspace behind an outcome."""
    rep = outcome.report
    if rep.scheme == "type1":
        return beam_subspace(quant.beams[:, rep.indices[0]])
    if rep.scheme == "type2":
        return Subspace.from_basis(quant.beams[:, list(rep.indices)])
    if rep.scheme == "psc":
        n_t = outcome.h_hat.shape[0]
        return Subspace(np.eye(n_t, dtype=complex)[:, list(rep.indices)])
    if outcome.subspace is None:
        raise EmptyBasisError("proposed outcome has no inferred subspace")
    return outcome.subspace
