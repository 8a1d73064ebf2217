"""Apply derivative stencils to grid fields; verify the convergence law.

The forward operation is a plain correlation of field samples with stencil
taps, evaluated only where the whole footprint fits (margins grow by the
stencil radius).  The adjoint scatters interior cotangents back to every
contributing sample; together they make the smoothing layer a linear operator
with an exact transpose, which is all the network training needs.

``convergence_sweep`` measures the uniform first-derivative error of the
smoothed estimate under grid refinement and bounded noise, and
``fit_error_envelope`` fits the two-constant bound C1 * delta + C2 * (h + eps)
to such a table.  The constants are empirical: they depend on the test
function and are never hard-coded elsewhere.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import accounting, backend
from .errors import ConfigurationError, DimensionError, InvalidArgumentError
from .grids import GridField
from .kernels import DiscreteStencil, KernelFamily, MollifierKernel, discretize
from .kernels import laplacian_stencil as _laplacian_stencil


def _check_spacing(field: GridField, stencil: DiscreteStencil, grows: bool = True):
    if len(field.spacing) != len(stencil.spacing) or any(
            abs(a - b) > 1e-12 * max(a, b) for a, b in zip(field.spacing, stencil.spacing)):
        raise ConfigurationError(
            f"stencil spacing {stencil.spacing} does not match field spacing {field.spacing}")
    if grows:
        for n, m in zip(field.shape, field.margin):
            if n - 2 * (m + stencil.radius) < 1:
                raise ConfigurationError(
                    f"field of shape {field.shape} (margin {field.margin}) too small for "
                    f"stencil radius {stencil.radius}")


def mollify(field: GridField, stencil: DiscreteStencil) -> GridField:
    """Correlate a field with stencil taps; exterior cells become invalid.

    Returns a field on the same grid whose margin has grown by the stencil
    radius; values outside the new margin are zero and excluded from losses.
    """
    _check_spacing(field, stencil)
    t0 = time.perf_counter()
    if field.dimension == 1:
        out = backend.correlate1d(field.values, stencil.taps)
    else:
        out = backend.correlate2d(field.values, stencil.taps)
    margin = tuple(m + stencil.radius for m in field.margin)
    # zero anything the input margin already invalidated
    result = np.zeros_like(out)
    sl = tuple(slice(m, n - m) for m, n in zip(margin, field.shape))
    result[sl] = out[sl]
    accounting.note_seconds(time.perf_counter() - t0)
    accounting.note_array(result, derivative=True)
    return field.with_values(result, margin=margin)


def mollify_adjoint(cotangent: GridField, stencil: DiscreteStencil) -> GridField:
    """Transpose of :func:`mollify` for the same stencil.

    The cotangent must be supported on the forward output's interior (margin
    at least the stencil radius); everything outside it is ignored.
    """
    _check_spacing(cotangent, stencil, grows=False)
    if any(m < stencil.radius for m in cotangent.margin):
        raise ConfigurationError(
            f"cotangent margin {cotangent.margin} smaller than stencil radius "
            f"{stencil.radius}; it must live on the forward output's interior")
    t0 = time.perf_counter()
    sl = tuple(slice(m, n - m) for m, n in zip(cotangent.margin, cotangent.shape))
    buf = np.zeros_like(cotangent.values)
    buf[sl] = cotangent.values[sl]
    if cotangent.dimension == 1:
        out = backend.scatter1d(buf, stencil.taps)
    else:
        out = backend.scatter2d(buf, stencil.taps)
    accounting.note_seconds(time.perf_counter() - t0)
    accounting.note_array(out)
    return cotangent.with_values(out, margin=(0,) * cotangent.dimension)


def laplacian(field: GridField, kernel: MollifierKernel) -> GridField:
    """Sum of second-derivative stencils along each axis (2D fields only)."""
    if field.dimension != 2:
        raise DimensionError("laplacian requires a 2D field")
    if kernel.dimension != 2:
        raise DimensionError("laplacian requires a 2D kernel")
    return mollify(field, _laplacian_stencil(kernel, field.spacing))


# ---------------------------------------------------------------------------
# Convergence harness
# ---------------------------------------------------------------------------

TEST_FUNCTIONS = {
    "sin2pi": (lambda x: np.sin(2 * np.pi * x),
               lambda x: 2 * np.pi * np.cos(2 * np.pi * x)),
    "linear": (lambda x: x, lambda x: np.ones_like(x)),
    "gauss": (lambda x: np.exp(-((x - 0.5) ** 2) / 0.02),
              lambda x: -2 * (x - 0.5) / 0.02 * np.exp(-((x - 0.5) ** 2) / 0.02)),
}


@dataclass(frozen=True)
class SweepRow:
    h: float
    delta: float
    noise: float
    uniform_error: float
    central_diff_error: float


def convergence_sweep(test_function: str, family, pairs, noise_amplitude=0.0,
                      seed: int = 0) -> list:
    """Uniform first-derivative error for each (h, delta) pair.

    Samples the named analytic function on [0, 1], adds uniform noise bounded
    by ``noise_amplitude`` (a fixed draw scaled by the amplitude, so error is
    monotone in the bound), applies the first-derivative stencil and reports
    the max interior deviation from the analytic derivative.  A secondary
    column reports the centered-difference-of-smoothed-field route.
    """
    pairs = list(pairs)
    if not pairs:
        raise InvalidArgumentError("empty (h, delta) sweep")
    if test_function not in TEST_FUNCTIONS:
        raise InvalidArgumentError(
            f"unknown test function {test_function!r}; options: {sorted(TEST_FUNCTIONS)}")
    fn, dfn = TEST_FUNCTIONS[test_function]
    if isinstance(family, str):
        family = KernelFamily.parse(family)
    rng = np.random.default_rng(seed)
    unit_noise = rng.uniform(-1.0, 1.0, size=4 * 1048576)  # shared across rows

    rows = []
    for h, delta in pairs:
        if delta < 1.5 * h:
            raise InvalidArgumentError(f"delta={delta} < 1.5 h for h={h}")
        n = int(round(1.0 / h)) + 1
        x = np.linspace(0.0, 1.0, n)
        samples = fn(x) + noise_amplitude * unit_noise[:n]
        field = GridField(samples, spacing=(h,))
        kernel = MollifierKernel(family, support_radius=delta, dimension=1)
        deriv = mollify(field, discretize(kernel, h, (1,)))
        sl = deriv.interior_mask().slices
        err = float(np.max(np.abs(deriv.values[sl] - dfn(x)[sl])))

        smooth = mollify(field, discretize(kernel, h, (0,)))
        sm = smooth.values
        d0 = np.zeros_like(sm)
        d0[1:-1] = (sm[2:] - sm[:-2]) / (2 * h)
        pad = tuple(slice(m + 1, nn - m - 1) for m, nn in zip(smooth.margin, smooth.shape))
        err_d0 = float(np.max(np.abs(d0[pad] - dfn(x)[pad])))
        rows.append(SweepRow(h=h, delta=delta, noise=noise_amplitude,
                             uniform_error=err, central_diff_error=err_d0))
    return rows


def loglog_slope(rows) -> float:
    """Fitted slope of log(uniform_error) against log(h)."""
    hs = np.array([r.h for r in rows])
    errs = np.array([r.uniform_error for r in rows])
    if np.any(errs <= 0):
        raise InvalidArgumentError("zero error rows; slope undefined")
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def fit_error_envelope(rows) -> tuple:
    """Non-negative least squares fit err ~ C1 * delta + C2 * (h + eps)."""
    a = np.array([[r.delta, r.h + r.noise] for r in rows])
    b = np.array([r.uniform_error for r in rows])
    from scipy.optimize import nnls

    coef, _ = nnls(a, b)
    return float(coef[0]), float(coef[1])


def envelope_bound(c1: float, c2: float, h: float, delta: float, noise: float,
                   safety: float = 1.0) -> float:
    return safety * (c1 * delta + c2 * (h + noise))
