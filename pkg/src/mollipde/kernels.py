"""Compactly supported smoothing kernels and their discrete derivative stencils.

Four analytic families are provided, each non-negative on the open ball of
radius ``R`` and identically zero outside it (unnormalized profiles):

* ``poly2``     : R^2 - x^2
* ``poly4``     : (R^2 - x^2)^2
* ``sine``      : cos(pi * x / (2 R))
* ``exp_bump``  : exp(-1 / (1 - (x/R)^2))

All are normalized to unit mass over the support so that plain (zeroth
order) convolution is an averaging operator.  Derivatives of the normalized
kernel are available in closed form up to total order 4; in 2D the kernel is
the radial composition profile(||x||) and partial derivatives are assembled
from radial derivatives exactly.

``discretize`` samples a derivative kernel on the integer offset lattice and
applies a least-norm affine correction so the resulting stencil reproduces
derivatives of monomials up to degree ``order + 1`` exactly (zeroth-order
stencils are instead rescaled, which keeps every tap non-negative).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as _poly
from scipy.integrate import quad

from .errors import (
    BoundarySmoothnessWarning,
    DimensionError,
    InvalidArgumentError,
    KernelTooNarrowError,
    UnsupportedOrderError,
)

MAX_DERIVATIVE_ORDER = 4

#: Support radii paired with 7-tap stencils in the shipped benchmark
#: configurations, keyed by problem name.  Recorded verbatim as presets; the
#: radius is always configured explicitly rather than derived from a tap
#: count (see README).
SIZE7_SUPPORT_RADII = {
    "langevin": 0.3,
    "heat": 0.015,
    "reaction_diffusion": 0.15,
}


class KernelFamily(enum.Enum):
    POLY2 = "poly2"
    POLY4 = "poly4"
    SINE = "sine"
    EXP_BUMP = "exp_bump"

    @classmethod
    def parse(cls, name: str) -> "KernelFamily":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(f.value for f in cls)
            raise InvalidArgumentError(f"unknown kernel family {name!r}; valid: {valid}")


#: Continuity class at the support edge (C^k).  Inside the open support every
#: family is smooth; edge regularity is what limits usable derivative order.
_EDGE_SMOOTHNESS = {
    KernelFamily.POLY2: 0,
    KernelFamily.POLY4: 1,
    KernelFamily.SINE: 0,
    KernelFamily.EXP_BUMP: math.inf,
}

# exp(-1/w) underflows to zero below this w = 1 - q^2; evaluating the
# rational prefactor there would produce inf * 0.
_BUMP_W_FLOOR = 1.35e-3


@lru_cache(maxsize=None)
def _bump_rational(order: int):
    """Coefficients (N, m) with d^k/dq^k exp(-1/(1-q^2)) = exp(-1/(1-q^2)) N(q)/(1-q^2)^m."""
    if order == 0:
        return np.array([1.0]), 0
    n_prev, m_prev = _bump_rational(order - 1)
    w = np.array([1.0, 0.0, -1.0])  # 1 - q^2, low -> high degree
    dn = _poly.polyder(n_prev) if n_prev.size > 1 else np.array([0.0])
    term = _poly.polymul(np.array([0.0, -2.0]), n_prev)
    term = _poly.polyadd(term, _poly.polymul(dn, _poly.polymul(w, w)))
    if m_prev:
        term = _poly.polyadd(term, _poly.polymul(np.array([0.0, 2.0 * m_prev]),
                                                 _poly.polymul(n_prev, w)))
    return term, m_prev + 2


@lru_cache(maxsize=None)
def _bump_unit_mass_1d() -> float:
    return quad(lambda q: math.exp(-1.0 / (1.0 - q * q)), -1.0, 1.0, limit=200)[0]


@lru_cache(maxsize=None)
def _bump_unit_mass_2d() -> float:
    return 2.0 * math.pi * quad(lambda q: math.exp(-1.0 / (1.0 - q * q)) * q,
                                0.0, 1.0, limit=200)[0]


def _profile_derivative(family: KernelFamily, radius: float, x: np.ndarray,
                        order: int) -> np.ndarray:
    """Order-th derivative of the unnormalized profile, vectorized over x."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < radius
    if not np.any(inside):
        return out
    xi = x[inside]
    if family is KernelFamily.POLY2:
        vals = {
            0: radius * radius - xi * xi,
            1: -2.0 * xi,
            2: np.full_like(xi, -2.0),
            3: np.zeros_like(xi),
            4: np.zeros_like(xi),
        }[order]
    elif family is KernelFamily.POLY4:
        r2 = radius * radius
        vals = {
            0: (r2 - xi * xi) ** 2,
            1: 4.0 * xi ** 3 - 4.0 * r2 * xi,
            2: 12.0 * xi * xi - 4.0 * r2,
            3: 24.0 * xi,
            4: np.full_like(xi, 24.0),
        }[order]
    elif family is KernelFamily.SINE:
        a = math.pi / (2.0 * radius)
        phase = order % 4
        scale = a ** order
        if phase == 0:
            vals = scale * np.cos(a * xi)
        elif phase == 1:
            vals = -scale * np.sin(a * xi)
        elif phase == 2:
            vals = -scale * np.cos(a * xi)
        else:
            vals = scale * np.sin(a * xi)
    elif family is KernelFamily.EXP_BUMP:
        q = xi / radius
        w = 1.0 - q * q
        coeffs, m = _bump_rational(order)
        vals = np.zeros_like(q)
        ok = w > _BUMP_W_FLOOR
        if np.any(ok):
            qq, ww = q[ok], w[ok]
            vals[ok] = (np.exp(-1.0 / ww) * _poly.polyval(qq, coeffs)
                        / ww ** m / radius ** order)
    else:  # pragma: no cover
        raise InvalidArgumentError(f"unknown family {family}")
    out[inside] = vals
    return out


def _analytic_mass(family: KernelFamily, radius: float, dimension: int) -> float:
    r = radius
    if dimension == 1:
        return {
            KernelFamily.POLY2: (4.0 / 3.0) * r ** 3,
            KernelFamily.POLY4: (16.0 / 15.0) * r ** 5,
            KernelFamily.SINE: 4.0 * r / math.pi,
            KernelFamily.EXP_BUMP: r * _bump_unit_mass_1d(),
        }[family]
    return {
        KernelFamily.POLY2: math.pi * r ** 4 / 2.0,
        KernelFamily.POLY4: math.pi * r ** 6 / 3.0,
        KernelFamily.SINE: 4.0 * r * r * (1.0 - 2.0 / math.pi),
        KernelFamily.EXP_BUMP: r * r * _bump_unit_mass_2d(),
    }[family]


# --- radial partial derivatives -------------------------------------------
#
# A partial derivative of profile(r(x, y)) is a sum of terms
# c * profile^(k)(r) * x^i * y^j / r^m; differentiating one such term yields
# three more, so arbitrary multi-indices reduce to a closed table of terms.

@lru_cache(maxsize=None)
def _radial_terms(order_x: int, order_y: int):
    terms = {(0, 0, 0, 0): 1.0}

    def diff(ts, axis):
        out: dict = {}

        def add(key, value):
            out[key] = out.get(key, 0.0) + value

        for (k, i, j, m), c in ts.items():
            if axis == 0:
                add((k + 1, i + 1, j, m + 1), c)
                if i:
                    add((k, i - 1, j, m), c * i)
                if m:
                    add((k, i + 1, j, m + 2), -c * m)
            else:
                add((k + 1, i, j + 1, m + 1), c)
                if j:
                    add((k, i, j - 1, m), c * j)
                if m:
                    add((k, i, j + 1, m + 2), -c * m)
        return {key: v for key, v in out.items() if v != 0.0}

    for _ in range(order_x):
        terms = diff(terms, 0)
    for _ in range(order_y):
        terms = diff(terms, 1)
    return tuple((key, c) for key, c in terms.items())


def _origin_partial(family: KernelFamily, radius: float,
                    order_x: int, order_y: int) -> float:
    # Even Taylor series of the radial profile: only even/even multi-indices
    # survive at the origin.
    if order_x % 2 or order_y % 2:
        return 0.0
    total = order_x + order_y
    p_total = float(_profile_derivative(family, radius, np.array([0.0]), total)[0])
    c = p_total / math.factorial(total)
    half = total // 2
    return c * math.comb(half, order_x // 2) * math.factorial(order_x) * math.factorial(order_y)


@dataclass(frozen=True)
class MollifierKernel:
    """A normalized, compactly supported smoothing kernel.

    ``support_radius`` is in domain units; ``dimension`` is 1 or 2.  In 2D the
    kernel is radial: profile(||x||) / mass.
    """

    family: KernelFamily
    support_radius: float
    dimension: int = 1

    def __post_init__(self):
        if not (self.support_radius > 0.0 and math.isfinite(self.support_radius)):
            raise InvalidArgumentError(f"support_radius must be positive, got {self.support_radius}")
        if self.dimension not in (1, 2):
            raise InvalidArgumentError(f"dimension must be 1 or 2, got {self.dimension}")
        if isinstance(self.family, str):
            object.__setattr__(self, "family", KernelFamily.parse(self.family))

    @property
    def normalization_constant(self) -> float:
        """1 / continuous mass of the unnormalized profile over the support."""
        return 1.0 / _analytic_mass(self.family, self.support_radius, self.dimension)

    @property
    def edge_smoothness(self) -> float:
        return _EDGE_SMOOTHNESS[self.family]

    # -- unnormalized profile (handy for cross-checking closed forms) -------

    def profile(self, point) -> np.ndarray:
        r = self._radii(point)
        return _profile_derivative(self.family, self.support_radius, r, 0)

    def profile_derivative(self, x, order: int) -> np.ndarray:
        """1D profile derivative d^order/dx^order, unnormalized."""
        if self.dimension != 1:
            raise InvalidArgumentError("profile_derivative is the 1D closed form")
        self._check_order(order)
        return _profile_derivative(self.family, self.support_radius,
                                   np.asarray(x, dtype=float), order)

    # -- normalized kernel ---------------------------------------------------

    def __call__(self, point) -> np.ndarray:
        r = self._radii(point)
        return self.normalization_constant * _profile_derivative(
            self.family, self.support_radius, r, 0)

    def derivative(self, point, multi_index) -> np.ndarray:
        """Closed-form partial derivative of the normalized kernel."""
        multi_index = self._check_multi_index(multi_index)
        order = sum(multi_index)
        if order > self.edge_smoothness + 1:
            warnings.warn(
                f"{self.family.value} is C^{self.edge_smoothness} at its support edge; "
                f"order-{order} derivatives degrade near the boundary",
                BoundarySmoothnessWarning, stacklevel=2)
        return self._derivative_raw(point, multi_index) * self.normalization_constant

    def _derivative_raw(self, point, multi_index) -> np.ndarray:
        if self.dimension == 1:
            x = self._coords_1d(point)
            return _profile_derivative(self.family, self.support_radius, x, multi_index[0])
        x, y = self._coords_2d(point)
        r = np.hypot(x, y)
        out = np.zeros_like(r)
        inside = r < self.support_radius
        interior = inside & (r > 0.0)
        if np.any(interior):
            xi, yi, ri = x[interior], y[interior], r[interior]
            acc = np.zeros_like(ri)
            radial = {}
            for (k, i, j, m), c in _radial_terms(*multi_index):
                if k not in radial:
                    radial[k] = _profile_derivative(self.family, self.support_radius, ri, k)
                acc += c * radial[k] * xi ** i * yi ** j / ri ** m
            out[interior] = acc
        at_origin = inside & (r == 0.0)
        if np.any(at_origin):
            out[at_origin] = _origin_partial(self.family, self.support_radius, *multi_index)
        return out

    # -- helpers --------------------------------------------------------------

    def _check_order(self, order: int):
        if not (0 <= order <= MAX_DERIVATIVE_ORDER):
            raise UnsupportedOrderError(
                f"derivative order {order} outside supported range 0..{MAX_DERIVATIVE_ORDER}")

    def _check_multi_index(self, multi_index) -> tuple:
        multi_index = tuple(int(v) for v in np.atleast_1d(multi_index))
        if len(multi_index) != self.dimension or any(v < 0 for v in multi_index):
            raise InvalidArgumentError(
                f"multi_index {multi_index} incompatible with dimension {self.dimension}")
        self._check_order(sum(multi_index))
        return multi_index

    def _coords_1d(self, point) -> np.ndarray:
        x = np.asarray(point, dtype=float)
        if not np.all(np.isfinite(x)):
            raise InvalidArgumentError("non-finite coordinates")
        return x

    def _coords_2d(self, point):
        p = np.asarray(point, dtype=float)
        if p.shape[-1] != 2:
            raise InvalidArgumentError(f"expected (..., 2) coordinates, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise InvalidArgumentError("non-finite coordinates")
        return p[..., 0], p[..., 1]

    def _radii(self, point) -> np.ndarray:
        if self.dimension == 1:
            return self._coords_1d(point)
        x, y = self._coords_2d(point)
        return np.hypot(x, y)


@dataclass(frozen=True)
class DiscreteStencil:
    """Lattice weights approximating one partial derivative at the center.

    ``taps`` lives on the integer offset lattice ``[-radius, radius]`` per
    axis and already includes the quadrature factor h^d, so applying the
    stencil is a plain weighted sum of neighboring samples.  After moment
    correction the stencil differentiates monomials up to degree
    ``order + 1`` exactly.
    """

    multi_index: tuple
    taps: np.ndarray = field(repr=False)
    spacing: tuple
    radius: int
    family: KernelFamily
    support_radius: float
    #: set for composite stencils (e.g. "laplacian" = sum over axes), whose
    #: taps do not correspond to the single multi_index recorded above
    label: str = ""

    @property
    def order(self) -> int:
        return int(sum(self.multi_index))

    @property
    def dimension(self) -> int:
        return len(self.multi_index)

    def moment(self, powers) -> float:
        """Sum of taps against the monomial prod_k (offset_k * h_k)^powers[k]."""
        return self.moment_with_scale(powers)[0]

    def moment_with_scale(self, powers):
        """(moment, cancellation scale): the scale is sum |tap * monomial|,
        the natural floating-point error unit for the moment sum."""
        powers = tuple(int(p) for p in np.atleast_1d(powers))
        offs = np.arange(-self.radius, self.radius + 1)
        if self.dimension == 1:
            terms = self.taps * (offs * self.spacing[0]) ** powers[0]
        else:
            ox, oy = np.meshgrid(offs, offs, indexing="ij")
            terms = (self.taps * (ox * self.spacing[0]) ** powers[0]
                     * (oy * self.spacing[1]) ** powers[1])
        return float(terms.sum()), float(np.abs(terms).sum())

    def to_csv(self, path):
        offs = np.arange(-self.radius, self.radius + 1)
        with open(path, "w", encoding="ascii") as fh:
            if self.dimension == 1:
                fh.write("offset,weight\n")
                for o, w in zip(offs, self.taps):
                    fh.write(f"{o},{float(w)!r}\n")
            else:
                fh.write("offset_x,offset_y,weight\n")
                for ix, ox in enumerate(offs):
                    for iy, oy in enumerate(offs):
                        fh.write(f"{ox},{oy},{float(self.taps[ix, iy])!r}\n")


def _parity_symmetrize(taps: np.ndarray, multi_index) -> np.ndarray:
    out = taps
    for axis, order in enumerate(multi_index):
        sign = -1.0 if order % 2 else 1.0
        out = 0.5 * (out + sign * np.flip(out, axis=axis))
    return out


def _monomials_upto(dimension: int, degree: int):
    if dimension == 1:
        return [(p,) for p in range(degree + 1)]
    return [(a, b) for total in range(degree + 1)
            for a in range(total + 1) for b in [total - a]]


@lru_cache(maxsize=None)
def _discretize_cached(kernel: MollifierKernel, spacing: tuple, multi_index: tuple
                       ) -> DiscreteStencil:
    R = kernel.support_radius
    h = spacing
    order = sum(multi_index)
    if R * (1.0 + 1e-12) < 1.5 * max(h):
        raise KernelTooNarrowError(
            f"support radius {R} spans fewer than 3 grid points at spacing {max(h)}")
    radius = math.ceil(R / min(h) - 1e-12)
    offs = np.arange(-radius, radius + 1)

    if kernel.dimension == 1:
        positions = -offs * h[0]
        raw = kernel._derivative_raw(positions, multi_index) * kernel.normalization_constant * h[0]
        inside = np.abs(offs * h[0]) < R
    else:
        ox, oy = np.meshgrid(offs, offs, indexing="ij")
        pts = np.stack([-ox * h[0], -oy * h[1]], axis=-1)
        raw = (kernel._derivative_raw(pts, multi_index)
               * kernel.normalization_constant * h[0] * h[1])
        inside = np.hypot(ox * h[0], oy * h[1]) < R

    raw = _parity_symmetrize(raw, multi_index)
    taps = np.where(inside, raw, 0.0)

    if order == 0:
        total = taps.sum()
        if total <= 0.0:
            raise KernelTooNarrowError("zeroth-order taps have non-positive mass")
        taps = taps / total
    else:
        taps = _moment_correct(taps, inside, offs, h, multi_index)
        taps = np.where(inside, _parity_symmetrize(taps, multi_index), 0.0)

    stencil = DiscreteStencil(multi_index=multi_index, taps=taps, spacing=h,
                              radius=radius, family=kernel.family, support_radius=R)
    _verify_moments(stencil)
    return stencil


def _moment_correct(taps, inside, offs, h, multi_index) -> np.ndarray:
    """Least-norm tap adjustment enforcing exactness on low-degree monomials.

    Solved on the integer lattice (taps rescaled by h^order) so the linear
    system is spacing-free and well conditioned.
    """
    dimension = len(multi_index)
    order = sum(multi_index)
    scale = float(np.prod([h[a] ** multi_index[a] for a in range(dimension)]))
    flat_inside = inside.ravel()
    v = (taps * scale).ravel()[flat_inside]

    if dimension == 1:
        lattice = [offs[flat_inside]]
    else:
        ox, oy = np.meshgrid(offs, offs, indexing="ij")
        lattice = [ox.ravel()[flat_inside], oy.ravel()[flat_inside]]

    monomials = _monomials_upto(dimension, order + 1)
    a_mat = np.stack([np.prod([lat.astype(float) ** p
                               for lat, p in zip(lattice, powers)], axis=0)
                      for powers in monomials])
    target = np.array([float(np.prod([math.factorial(p) for p in powers]))
                       if powers == tuple(multi_index) else 0.0
                       for powers in monomials])

    # row-scaled min-norm solve with one refinement pass for conditioning
    row_norm = np.linalg.norm(a_mat, axis=1)
    row_norm[row_norm == 0.0] = 1.0
    a_scaled = a_mat / row_norm[:, None]
    for _ in range(2):
        delta, *_ = np.linalg.lstsq(a_scaled, (target - a_mat @ v) / row_norm,
                                    rcond=None)
        v = v + delta
    residual = np.max(np.abs(a_mat @ v - target))
    if residual > 1e-9 * max(1.0, np.max(np.abs(target))):
        raise KernelTooNarrowError(
            f"stencil for multi_index {multi_index} cannot satisfy moment exactness "
            f"(residual {residual:.2e}); enlarge the support radius")

    corrected = np.zeros(taps.size)
    corrected[flat_inside] = v / scale
    return corrected.reshape(taps.shape)


def _verify_moments(stencil: DiscreteStencil):
    order = stencil.order
    for powers in _monomials_upto(stencil.dimension, order + 1):
        target = (np.prod([math.factorial(p) for p in powers])
                  if powers == tuple(stencil.multi_index) else 0.0)
        got, scale = stencil.moment_with_scale(powers)
        # 1e-14 * scale allows only the cancellation floor of the tap sum
        if abs(got - target) > 1e-10 * max(1.0, abs(target)) + 1e-14 * scale:
            raise KernelTooNarrowError(
                f"moment check failed for {powers}: {got} != {target}")


def discretize(kernel: MollifierKernel, spacing, multi_index) -> DiscreteStencil:
    """Build the moment-corrected derivative stencil for one multi-index.

    ``spacing`` is a scalar or per-axis tuple of grid spacings.  Raises
    :class:`KernelTooNarrowError` when the support covers fewer than three
    grid points or the correction is infeasible, and
    :class:`UnsupportedOrderError` above total order 4.
    """
    if np.isscalar(spacing):
        spacing = (float(spacing),) * kernel.dimension
    else:
        spacing = tuple(float(s) for s in spacing)
    if len(spacing) != kernel.dimension or any(s <= 0 for s in spacing):
        raise InvalidArgumentError(f"bad spacing {spacing} for dimension {kernel.dimension}")
    multi_index = kernel._check_multi_index(multi_index)
    order = sum(multi_index)
    if order > kernel.edge_smoothness + 1:
        warnings.warn(
            f"{kernel.family.value} is C^{kernel.edge_smoothness} at its support edge; "
            f"order-{order} stencils degrade in accuracy",
            BoundarySmoothnessWarning, stacklevel=2)
    return _discretize_cached(kernel, spacing, multi_index)


def laplacian_stencil(kernel: MollifierKernel, spacing) -> DiscreteStencil:
    """Sum of the two axis-aligned second-derivative stencils (2D only)."""
    if kernel.dimension != 2:
        raise DimensionError("laplacian_stencil requires a 2D kernel")
    sxx = discretize(kernel, spacing, (2, 0))
    syy = discretize(kernel, spacing, (0, 2))
    return DiscreteStencil(multi_index=(2, 0), taps=sxx.taps + syy.taps,
                           spacing=sxx.spacing, radius=sxx.radius,
                           family=kernel.family, support_radius=kernel.support_radius,
                           label="laplacian")


def biharmonic_stencil(kernel: MollifierKernel, spacing) -> DiscreteStencil:
    """Single-pass fourth-order stencil: dxxxx + 2 dxxyy + dyyyy (2D only)."""
    if kernel.dimension != 2:
        raise DimensionError("biharmonic_stencil requires a 2D kernel")
    s40 = discretize(kernel, spacing, (4, 0))
    s22 = discretize(kernel, spacing, (2, 2))
    s04 = discretize(kernel, spacing, (0, 4))
    return DiscreteStencil(multi_index=(4, 0),
                           taps=s40.taps + 2.0 * s22.taps + s04.taps,
                           spacing=s40.spacing, radius=s40.radius,
                           family=kernel.family, support_radius=kernel.support_radius,
                           label="biharmonic")
