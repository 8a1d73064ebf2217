"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The stencil correlations here run once per optimizer step on every grid
point, and the phase-field stepper runs for O(1e5) steps, so they dominate
runtime. Both backends implement identical summation order (taps applied in
ascending offset order) so results agree bit-for-bit for the correlations.

Backend selection: set ``MOLLIPDE_BACKEND`` to ``numpy`` to force the pure
numpy path, ``numba`` to require the JIT path, or leave unset / ``auto`` to
use numba when importable. ``benchmarks/bench_backends.py`` compares the two.
"""

import os
import warnings

import numpy as np

_ENV_VAR = "MOLLIPDE_BACKEND"


def _select_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"{_ENV_VAR} must be 'auto', 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise
        warnings.warn("numba not importable; falling back to the numpy backend")
        return "numpy"
    return "numba"


BACKEND = _select_backend()
HAS_NUMBA = BACKEND == "numba"


# ---------------------------------------------------------------------------
# Pure numpy reference implementations
# ---------------------------------------------------------------------------

def _np_correlate1d(x, taps):
    k = (taps.shape[0] - 1) // 2
    n = x.shape[0]
    out = np.zeros_like(x)
    if n < 2 * k + 1:
        return out
    for t in range(2 * k + 1):
        out[k:n - k] += taps[t] * x[t:n - 2 * k + t]
    return out


def _np_scatter1d(c, taps):
    # Adjoint of _np_correlate1d under the assumption that c vanishes
    # wherever the forward output was not computed (margin >= k):
    # out[m] = sum_t taps[t] * c[m + k - t].
    k = (taps.shape[0] - 1) // 2
    n = c.shape[0]
    out = np.zeros_like(c)
    for t in range(2 * k + 1):
        lo_out = max(0, t - k)
        hi_out = min(n, n + t - k)
        lo_in = lo_out + k - t
        hi_in = hi_out + k - t
        out[lo_out:hi_out] += taps[t] * c[lo_in:hi_in]
    return out


def _np_correlate2d(x, taps):
    k0 = (taps.shape[0] - 1) // 2
    k1 = (taps.shape[1] - 1) // 2
    n0, n1 = x.shape
    out = np.zeros_like(x)
    if n0 < 2 * k0 + 1 or n1 < 2 * k1 + 1:
        return out
    for t0 in range(2 * k0 + 1):
        for t1 in range(2 * k1 + 1):
            w = taps[t0, t1]
            if w == 0.0:
                continue
            out[k0:n0 - k0, k1:n1 - k1] += w * x[t0:n0 - 2 * k0 + t0, t1:n1 - 2 * k1 + t1]
    return out


def _np_scatter2d(c, taps):
    k0 = (taps.shape[0] - 1) // 2
    k1 = (taps.shape[1] - 1) // 2
    n0, n1 = c.shape
    out = np.zeros_like(c)
    for t0 in range(2 * k0 + 1):
        lo0 = max(0, t0 - k0)
        hi0 = min(n0, n0 + t0 - k0)
        for t1 in range(2 * k1 + 1):
            w = taps[t0, t1]
            if w == 0.0:
                continue
            lo1 = max(0, t1 - k1)
            hi1 = min(n1, n1 + t1 - k1)
            out[lo0:hi0, lo1:hi1] += w * c[lo0 + k0 - t0:hi0 + k0 - t0,
                                            lo1 + k1 - t1:hi1 + k1 - t1]
    return out


def _np_phase_field_step(phi_n, phi_d, lam, phi_max, delta_sq, inv_h2, dt):
    def lap(f):
        g = np.pad(f, 1, mode="edge")
        return (g[:-2, 1:-1] + g[2:, 1:-1] + g[1:-1, :-2] + g[1:-1, 2:]
                - 4.0 * f) * inv_h2

    phi_h = 0.5 * (phi_d + 1.0 - phi_n)
    phi_e = 0.5 * (1.0 - phi_n - phi_d)
    bulk = phi_h * (phi_max - phi_h) * (phi_max - 2.0 * phi_h)
    mu_d = -phi_e + bulk - delta_sq * lap(phi_d)
    mu_n = -phi_e - bulk - delta_sq * lap(phi_n)
    rate_d = lap(mu_d) + 2.0 * (lam * phi_e - phi_h)
    rate_n = lap(mu_n)
    phi_n_new = phi_n + dt * rate_n
    phi_d_new = phi_d + dt * rate_d
    return phi_n_new, phi_d_new, float(np.max(np.abs(rate_d)))


# ---------------------------------------------------------------------------
# Numba fast path
# ---------------------------------------------------------------------------

if HAS_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _nb_correlate1d(x, taps):
        k = (taps.shape[0] - 1) // 2
        n = x.shape[0]
        out = np.zeros_like(x)
        for i in range(k, n - k):
            acc = 0.0
            for t in range(2 * k + 1):
                acc += taps[t] * x[i + t - k]
            out[i] = acc
        return out

    @njit(cache=True)
    def _nb_scatter1d(c, taps):
        k = (taps.shape[0] - 1) // 2
        n = c.shape[0]
        out = np.zeros_like(c)
        for m in range(n):
            acc = 0.0
            for t in range(2 * k + 1):
                j = m + k - t
                if 0 <= j < n:
                    acc += taps[t] * c[j]
            out[m] = acc
        return out

    @njit(cache=True)
    def _nb_correlate2d(x, taps):
        k0 = (taps.shape[0] - 1) // 2
        k1 = (taps.shape[1] - 1) // 2
        n0, n1 = x.shape
        out = np.zeros_like(x)
        for i in range(k0, n0 - k0):
            for j in range(k1, n1 - k1):
                acc = 0.0
                for t0 in range(2 * k0 + 1):
                    for t1 in range(2 * k1 + 1):
                        w = taps[t0, t1]
                        if w != 0.0:
                            acc += w * x[i + t0 - k0, j + t1 - k1]
                out[i, j] = acc
        return out

    @njit(cache=True)
    def _nb_scatter2d(c, taps):
        k0 = (taps.shape[0] - 1) // 2
        k1 = (taps.shape[1] - 1) // 2
        n0, n1 = c.shape
        out = np.zeros_like(c)
        for i in range(n0):
            for j in range(n1):
                acc = 0.0
                for t0 in range(2 * k0 + 1):
                    ii = i + k0 - t0
                    if ii < 0 or ii >= n0:
                        continue
                    for t1 in range(2 * k1 + 1):
                        jj = j + k1 - t1
                        if 0 <= jj < n1:
                            w = taps[t0, t1]
                            if w != 0.0:
                                acc += w * c[ii, jj]
                out[i, j] = acc
        return out

    @njit(cache=True)
    def _nb_phase_field_step(phi_n, phi_d, lam, phi_max, delta_sq, inv_h2, dt):
        n0, n1 = phi_d.shape
        mu_d = np.empty_like(phi_d)
        mu_n = np.empty_like(phi_d)
        for i in range(n0):
            im = i - 1 if i > 0 else 0
            ip = i + 1 if i < n0 - 1 else n0 - 1
            for j in range(n1):
                jm = j - 1 if j > 0 else 0
                jp = j + 1 if j < n1 - 1 else n1 - 1
                lap_d = (phi_d[im, j] + phi_d[ip, j] + phi_d[i, jm] + phi_d[i, jp]
                         - 4.0 * phi_d[i, j]) * inv_h2
                lap_n = (phi_n[im, j] + phi_n[ip, j] + phi_n[i, jm] + phi_n[i, jp]
                         - 4.0 * phi_n[i, j]) * inv_h2
                phi_h = 0.5 * (phi_d[i, j] + 1.0 - phi_n[i, j])
                phi_e = 0.5 * (1.0 - phi_n[i, j] - phi_d[i, j])
                bulk = phi_h * (phi_max - phi_h) * (phi_max - 2.0 * phi_h)
                mu_d[i, j] = -phi_e + bulk - delta_sq * lap_d
                mu_n[i, j] = -phi_e - bulk - delta_sq * lap_n
        phi_n_new = np.empty_like(phi_n)
        phi_d_new = np.empty_like(phi_d)
        max_rate = 0.0
        for i in range(n0):
            im = i - 1 if i > 0 else 0
            ip = i + 1 if i < n0 - 1 else n0 - 1
            for j in range(n1):
                jm = j - 1 if j > 0 else 0
                jp = j + 1 if j < n1 - 1 else n1 - 1
                lap_mu_d = (mu_d[im, j] + mu_d[ip, j] + mu_d[i, jm] + mu_d[i, jp]
                            - 4.0 * mu_d[i, j]) * inv_h2
                lap_mu_n = (mu_n[im, j] + mu_n[ip, j] + mu_n[i, jm] + mu_n[i, jp]
                            - 4.0 * mu_n[i, j]) * inv_h2
                phi_h = 0.5 * (phi_d[i, j] + 1.0 - phi_n[i, j])
                phi_e = 0.5 * (1.0 - phi_n[i, j] - phi_d[i, j])
                rate_d = lap_mu_d + 2.0 * (lam[i, j] * phi_e - phi_h)
                phi_n_new[i, j] = phi_n[i, j] + dt * lap_mu_n
                phi_d_new[i, j] = phi_d[i, j] + dt * rate_d
                if abs(rate_d) > max_rate:
                    max_rate = abs(rate_d)
        return phi_n_new, phi_d_new, max_rate

    correlate1d = _nb_correlate1d
    scatter1d = _nb_scatter1d
    correlate2d = _nb_correlate2d
    scatter2d = _nb_scatter2d
    phase_field_step = _nb_phase_field_step
else:
    correlate1d = _np_correlate1d
    scatter1d = _np_scatter1d
    correlate2d = _np_correlate2d
    scatter2d = _np_scatter2d
    phase_field_step = _np_phase_field_step


def reference_functions():
    """Return the numpy implementations regardless of the active backend."""
    return {
        "correlate1d": _np_correlate1d,
        "scatter1d": _np_scatter1d,
        "correlate2d": _np_correlate2d,
        "scatter2d": _np_scatter2d,
        "phase_field_step": _np_phase_field_step,
    }
