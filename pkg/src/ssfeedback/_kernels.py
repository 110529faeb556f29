"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin with identical semantics.  The active
implementation is picked once at import time:

* ``SSFB_DISABLE_NUMBA=1`` in the environment forces the numpy path;
* a missing numba install falls back to numpy silently.

Both families stay importable (``numpy_impl`` / ``numba_impl``) so tests
and ``benchmarks/bench_kernels.py`` can compare them directly.
"""

import os
from types import SimpleNamespace

import numpy as np

_TIE_RTOL = 1e-12

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False


def _flag_set(name):
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = NUMBA_AVAILABLE and not _flag_set("SSFB_DISABLE_NUMBA")


# ---------------------------------------------------------------------------
# numpy reference kernels
# ---------------------------------------------------------------------------


def _mgs_np(basis, tol_rel):
    n, k = basis.shape
    out = np.zeros((n, k), dtype=np.complex128)
    norms = np.sqrt(np.sum(np.abs(basis) ** 2, axis=0))
    scale = norms.max() if k else 0.0
    if scale == 0.0:
        return out[:, :0]
    thresh = tol_rel * scale
    rank = 0
    for j in range(k):
        v = basis[:, j].astype(np.complex128, copy=True)
        # two MGS sweeps: the second one mops up cancellation error
        for _ in range(2):
            for i in range(rank):
                v = v - out[:, i] * np.vdot(out[:, i], v)
        nv = np.sqrt(np.sum(np.abs(v) ** 2))
        if nv < thresh:
            continue
        out[:, rank] = v / nv
        rank += 1
    return out[:, :rank]


def _steering_np(us, n_t):
    k = np.arange(n_t, dtype=np.float64)[:, None]
    return np.exp(2j * np.pi * k * np.asarray(us, dtype=np.float64)[None, :]) / np.sqrt(n_t)


def _greedy_select_np(h, dico, q, tol):
    n, m = dico.shape
    corr = dico.conj().T @ h  # d_m^H r for the current residual r
    resid_norm2 = np.sum(np.abs(dico) ** 2, axis=0).astype(np.float64)
    chosen = np.zeros(m, dtype=np.bool_)
    picks = np.empty(q, dtype=np.int64)
    basis = np.zeros((n, q), dtype=np.complex128)
    resid = np.asarray(h, dtype=np.complex128).copy()
    count = 0
    for _ in range(q):
        best = -1.0
        best_idx = -1
        for j in range(m):
            if chosen[j] or resid_norm2[j] <= tol:
                continue
            gain = (corr[j].real ** 2 + corr[j].imag ** 2) / resid_norm2[j]
            if best_idx < 0 or gain > best + _TIE_RTOL * max(best, 1e-300):
                best = gain
                best_idx = j
        if best_idx < 0:
            break
        chosen[best_idx] = True
        v = dico[:, best_idx].astype(np.complex128, copy=True)
        for i in range(count):
            v = v - basis[:, i] * np.vdot(basis[:, i], v)
        for i in range(count):
            v = v - basis[:, i] * np.vdot(basis[:, i], v)
        nv = np.sqrt(np.sum(np.abs(v) ** 2))
        e = v / nv
        basis[:, count] = e
        picks[count] = best_idx
        count += 1
        e_r = np.vdot(e, resid)
        resid = resid - e * e_r
        proj = dico.conj().T @ e  # d_m^H e
        corr = corr - proj * e_r
        resid_norm2 = resid_norm2 - np.abs(proj) ** 2
    return picks[:count]


def _power_iteration_np(m, x0, iters, tol):
    if not np.any(m):
        return 0.0
    x = x0 / np.linalg.norm(x0)
    prev = 0.0
    sigma = 0.0
    for _ in range(iters):
        y = m @ x
        z = m.conj().T @ y
        sigma = np.sqrt(np.real(np.vdot(y, y)))
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return float(sigma)
        x = z / nz
        if abs(sigma - prev) <= tol * max(sigma, 1e-300):
            break
        prev = sigma
    return float(np.linalg.norm(m @ x))


numpy_impl = SimpleNamespace(
    name="numpy",
    mgs=_mgs_np,
    steering=_steering_np,
    greedy_select=_greedy_select_np,
    power_iteration=_power_iteration_np,
)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

if NUMBA_AVAILABLE:
    _jit = numba.njit(cache=True, nogil=True)

    @_jit
    def _cdot(a, b):
        s = 0j
        for i in range(a.shape[0]):
            s += a[i].conjugate() * b[i]
        return s

    @_jit
    def _norm(a):
        s = 0.0
        for i in range(a.shape[0]):
            s += a[i].real * a[i].real + a[i].imag * a[i].imag
        return np.sqrt(s)

    @_jit
    def _mgs_nb_core(basis, tol_rel):
        n, k = basis.shape
        out = np.zeros((n, k), dtype=np.complex128)
        scale = 0.0
        for j in range(k):
            nj = _norm(basis[:, j])
            if nj > scale:
                scale = nj
        if scale == 0.0:
            return out, 0
        thresh = tol_rel * scale
        rank = 0
        v = np.empty(n, dtype=np.complex128)
        for j in range(k):
            for r in range(n):
                v[r] = basis[r, j]
            for _ in range(2):
                for i in range(rank):
                    c = _cdot(out[:, i], v)
                    for r in range(n):
                        v[r] -= out[r, i] * c
            nv = _norm(v)
            if nv < thresh:
                continue
            for r in range(n):
                out[r, rank] = v[r] / nv
            rank += 1
        return out, rank

    def _mgs_nb(basis, tol_rel):
        basis = np.ascontiguousarray(basis, dtype=np.complex128)
        out, rank = _mgs_nb_core(basis, float(tol_rel))
        return out[:, :rank]

    @_jit
    def _steering_nb_core(us, n_t):
        out = np.empty((n_t, us.shape[0]), dtype=np.complex128)
        inv = 1.0 / np.sqrt(n_t)
        for l in range(us.shape[0]):
            for k in range(n_t):
                ph = 2.0 * np.pi * k * us[l]
                out[k, l] = complex(np.cos(ph) * inv, np.sin(ph) * inv)
        return out

    def _steering_nb(us, n_t):
        return _steering_nb_core(np.ascontiguousarray(us, dtype=np.float64), int(n_t))

    @_jit
    def _greedy_select_nb_core(h, dico, q, tol, tie_rtol):
        n, m = dico.shape
        corr = np.empty(m, dtype=np.complex128)
        resid_norm2 = np.empty(m, dtype=np.float64)
        for j in range(m):
            corr[j] = _cdot(dico[:, j], h)
            resid_norm2[j] = _norm(dico[:, j]) ** 2
        chosen = np.zeros(m, dtype=np.bool_)
        picks = np.empty(q, dtype=np.int64)
        basis = np.zeros((n, q), dtype=np.complex128)
        resid = h.copy()
        v = np.empty(n, dtype=np.complex128)
        count = 0
        for _ in range(q):
            best = -1.0
            best_idx = -1
            for j in range(m):
                if chosen[j] or resid_norm2[j] <= tol:
                    continue
                gain = (corr[j].real ** 2 + corr[j].imag ** 2) / resid_norm2[j]
                if best_idx < 0 or gain > best + tie_rtol * max(best, 1e-300):
                    best = gain
                    best_idx = j
            if best_idx < 0:
                break
            chosen[best_idx] = True
            for r in range(n):
                v[r] = dico[r, best_idx]
            for _ in range(2):
                for i in range(count):
                    c = _cdot(basis[:, i], v)
                    for r in range(n):
                        v[r] -= basis[r, i] * c
            nv = _norm(v)
            for r in range(n):
                basis[r, count] = v[r] / nv
            picks[count] = best_idx
            e = basis[:, count]
            e_r = _cdot(e, resid)
            for r in range(n):
                resid[r] -= e[r] * e_r
            count += 1
            for j in range(m):
                p = _cdot(dico[:, j], e)
                corr[j] -= p * e_r
                resid_norm2[j] -= p.real * p.real + p.imag * p.imag
        return picks[:count]

    def _greedy_select_nb(h, dico, q, tol):
        return _greedy_select_nb_core(
            np.ascontiguousarray(h, dtype=np.complex128),
            np.ascontiguousarray(dico, dtype=np.complex128),
            int(q),
            float(tol),
            _TIE_RTOL,
        )

    @_jit
    def _power_iteration_nb_core(m, x0, iters, tol):
        rows, cols = m.shape
        nonzero = False
        for i in range(rows):
            for j in range(cols):
                if m[i, j] != 0:
                    nonzero = True
        if not nonzero:
            return 0.0
        x = x0 / _norm(x0)
        y = np.empty(rows, dtype=np.complex128)
        z = np.empty(cols, dtype=np.complex128)
        prev = 0.0
        for _ in range(iters):
            for i in range(rows):
                s = 0j
                for j in range(cols):
                    s += m[i, j] * x[j]
                y[i] = s
            for j in range(cols):
                s = 0j
                for i in range(rows):
                    s += m[i, j].conjugate() * y[i]
                z[j] = s
            sigma = _norm(y)
            nz = _norm(z)
            if nz == 0.0:
                return sigma
            for j in range(cols):
                x[j] = z[j] / nz
            if abs(sigma - prev) <= tol * max(sigma, 1e-300):
                break
            prev = sigma
        for i in range(rows):
            s = 0j
            for j in range(cols):
                s += m[i, j] * x[j]
            y[i] = s
        return _norm(y)

    def _power_iteration_nb(m, x0, iters, tol):
        return float(
            _power_iteration_nb_core(
                np.ascontiguousarray(m, dtype=np.complex128),
                np.ascontiguousarray(x0, dtype=np.complex128),
                int(iters),
                float(tol),
            )
        )

    numba_impl = SimpleNamespace(
        name="numba",
        mgs=_mgs_nb,
        steering=_steering_nb,
        greedy_select=_greedy_select_nb,
        power_iteration=_power_iteration_nb,
    )
else:  # pragma: no cover
    numba_impl = None


active = numba_impl if USE_NUMBA else numpy_impl
