"""Residual assembly, losses with exact cotangents, and parameter recovery.

All residuals are built from smoothed fields: the network's raw output is
convolved with derivative stencils of one kernel, so every derivative in the
governing equation costs a single fixed-size convolution regardless of the
network.  The total loss is the plain sum of the data term (over sampled
observation points) and the residual term (over all valid interior points);
``total_loss`` also returns the exact gradient of that sum with respect to
both network output grids, routed through the stencil adjoints.

Supported problems:

* ``LANGEVIN``      du/dt = u + lam(t)                   (1D in time)
* ``HEAT2D``        0 = lam(x,y) lap(u) + m(x,y)
* ``RD2D``          0 = lap(mu_d) + 2 (lam phi_e - phi_h), with
                    mu_d = -phi_e + phi_h(phi_max-phi_h)(phi_max-2 phi_h)
                           - delta^2 lap(phi_d)
* ``FORWARD_ODE``   du/dx + lam u = 0 with lam known (forward toy problem)

For the fourth-order problem the outer Laplacian is applied to the already
assembled mu_d grid (two chained second-order stencils); a single-pass
biharmonic stencil for the -delta^2 lap(lap(phi_d)) part is available behind
``single_fourth_order`` for comparison.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .calculus import laplacian, mollify, mollify_adjoint
from .errors import (
    ConfigurationError,
    DegenerateDenominatorError,
    InvalidArgumentError,
)
from .grids import GridField, merge_margins
from .kernels import (
    MollifierKernel,
    biharmonic_stencil,
    discretize,
    laplacian_stencil,
)


class ProblemKind(enum.Enum):
    LANGEVIN = "langevin"
    HEAT2D = "heat"
    RD2D = "reaction_diffusion"
    FORWARD_ODE = "forward_ode"


_DIFFERENTIAL_ORDER = {
    ProblemKind.LANGEVIN: 1,
    ProblemKind.HEAT2D: 2,
    ProblemKind.RD2D: 4,
    ProblemKind.FORWARD_ODE: 1,
}


@dataclass(frozen=True)
class SampleMask:
    """Flat indices of observed data points within the problem grid."""

    indices: np.ndarray
    seed: int = 0
    fraction: float = 1.0

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp).ravel()
        object.__setattr__(self, "indices", idx)
        if idx.size == 0:
            raise InvalidArgumentError("empty sample mask")

    @classmethod
    def full(cls, field: GridField) -> "SampleMask":
        return cls(indices=np.arange(field.values.size), fraction=1.0)


@dataclass(frozen=True)
class PdeProblem:
    kind: ProblemKind
    known_fields: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    estimator: str = "separable"
    single_fourth_order: bool = False

    def __post_init__(self):
        if self.estimator not in ("head", "separable"):
            raise InvalidArgumentError(f"unknown estimator mode {self.estimator!r}")
        needed = {
            ProblemKind.HEAT2D: ("source",),
            ProblemKind.RD2D: ("nucleoplasm",),
        }.get(self.kind, ())
        for name in needed:
            if name not in self.known_fields:
                raise ConfigurationError(f"{self.kind.value} problem needs known field {name!r}")
        if self.kind is ProblemKind.RD2D:
            for c in ("phi_max", "interface_width"):
                if c not in self.constants:
                    raise ConfigurationError(f"reaction-diffusion problem needs constant {c!r}")
        if self.kind is ProblemKind.FORWARD_ODE and "lam" not in self.constants:
            raise ConfigurationError("forward problem needs the known constant 'lam'")

    @property
    def differential_order(self) -> int:
        return _DIFFERENTIAL_ORDER[self.kind]

    @property
    def dimension(self) -> int:
        return 2 if self.kind in (ProblemKind.HEAT2D, ProblemKind.RD2D) else 1


def langevin_problem(estimator: str = "separable") -> PdeProblem:
    return PdeProblem(kind=ProblemKind.LANGEVIN, estimator=estimator)


def heat_problem(source: GridField, estimator: str = "separable") -> PdeProblem:
    return PdeProblem(kind=ProblemKind.HEAT2D, known_fields={"source": source},
                      estimator=estimator)


def reaction_diffusion_problem(nucleoplasm: GridField, phi_max: float,
                               interface_width: float,
                               estimator: str = "separable",
                               single_fourth_order: bool = False) -> PdeProblem:
    return PdeProblem(kind=ProblemKind.RD2D,
                      known_fields={"nucleoplasm": nucleoplasm},
                      constants={"phi_max": phi_max, "interface_width": interface_width},
                      estimator=estimator, single_fourth_order=single_fourth_order)


def forward_ode_problem(lam: float = 1.0) -> PdeProblem:
    return PdeProblem(kind=ProblemKind.FORWARD_ODE, constants={"lam": lam},
                      estimator="head")


@dataclass
class LossBreakdown:
    mse_u: float
    mse_f: float
    mse_total: float
    residual: GridField
    n_f: int
    n_u: int


# ---------------------------------------------------------------------------
# Residual forms on concrete fields
# ---------------------------------------------------------------------------

def _shared_margin(*fields: GridField) -> tuple:
    return merge_margins(*fields)


def _as_field_like(template: GridField, values) -> np.ndarray:
    if isinstance(values, GridField):
        if not template.same_grid(values):
            raise ConfigurationError("fields do not share a grid")
        return values.values
    return np.broadcast_to(np.asarray(values, dtype=float), template.shape)


def residual_langevin(u_hat: GridField, u_hat_t: GridField, lam_hat) -> GridField:
    """f = du/dt estimate - u estimate - lam."""
    margin = _shared_margin(u_hat, u_hat_t)
    lam = _as_field_like(u_hat, lam_hat)
    f = np.zeros(u_hat.shape)
    sl = tuple(slice(m, n - m) for m, n in zip(margin, u_hat.shape))
    f[sl] = u_hat_t.values[sl] - u_hat.values[sl] - lam[sl]
    return u_hat.with_values(f, margin=margin)


def residual_heat(u_hat_laplacian: GridField, lam_hat, source) -> GridField:
    """f = lam * lap(u) + m."""
    lam = _as_field_like(u_hat_laplacian, lam_hat)
    m = _as_field_like(u_hat_laplacian, source)
    margin = u_hat_laplacian.margin
    f = np.zeros(u_hat_laplacian.shape)
    sl = tuple(slice(mm, n - mm) for mm, n in zip(margin, u_hat_laplacian.shape))
    f[sl] = lam[sl] * u_hat_laplacian.values[sl] + m[sl]
    return u_hat_laplacian.with_values(f, margin=margin)


def _bulk(phi_h: np.ndarray, phi_max: float) -> np.ndarray:
    return phi_h * (phi_max - phi_h) * (phi_max - 2.0 * phi_h)


def _bulk_prime(phi_h: np.ndarray, phi_max: float) -> np.ndarray:
    return phi_max * phi_max - 6.0 * phi_max * phi_h + 6.0 * phi_h * phi_h


def chemical_potential(phi_d: GridField, phi_n, kernel: MollifierKernel,
                       interface_width: float, phi_max: float) -> GridField:
    """mu_d on the first interior ring: pointwise bulk minus delta^2 lap(phi_d)."""
    psi = 1.0 - _as_field_like(phi_d, phi_n)
    phi_h = 0.5 * (phi_d.values + psi)
    phi_e = 0.5 * (psi - phi_d.values)
    lap_d = laplacian(phi_d, kernel)
    mu = -phi_e + _bulk(phi_h, phi_max) - interface_width ** 2 * lap_d.values
    out = np.zeros_like(mu)
    sl = tuple(slice(m, n - m) for m, n in zip(lap_d.margin, phi_d.shape))
    out[sl] = mu[sl]
    return phi_d.with_values(out, margin=lap_d.margin)


def residual_reaction_diffusion(phi_d: GridField, phi_n, lam_hat,
                                kernel: MollifierKernel, interface_width: float,
                                phi_max: float,
                                single_fourth_order: bool = False) -> GridField:
    """f = lap(mu_d) + 2 (lam phi_e - phi_h) on the double-margin interior."""
    psi = 1.0 - _as_field_like(phi_d, phi_n)
    lam = _as_field_like(phi_d, lam_hat)
    phi_h = 0.5 * (phi_d.values + psi)
    phi_e = 0.5 * (psi - phi_d.values)
    if single_fourth_order:
        pointwise = phi_d.with_values(-phi_e + _bulk(phi_h, phi_max), margin=phi_d.margin)
        lap_pointwise = laplacian(pointwise, kernel)
        bih = mollify(phi_d, biharmonic_stencil(kernel, phi_d.spacing))
        margin = merge_margins(lap_pointwise, bih)
        lap_mu = lap_pointwise.values - interface_width ** 2 * bih.values
    else:
        mu = chemical_potential(phi_d, phi_n, kernel, interface_width, phi_max)
        lap_mu_field = laplacian(mu, kernel)
        margin = lap_mu_field.margin
        lap_mu = lap_mu_field.values
    f = np.zeros(phi_d.shape)
    sl = tuple(slice(m, n - m) for m, n in zip(margin, phi_d.shape))
    f[sl] = lap_mu[sl] + 2.0 * (lam[sl] * phi_e[sl] - phi_h[sl])
    return phi_d.with_values(f, margin=margin)


def residual_forward_ode(u_hat: GridField, u_hat_x: GridField, lam: float) -> GridField:
    """f = du/dx estimate + lam * u estimate."""
    margin = _shared_margin(u_hat, u_hat_x)
    f = np.zeros(u_hat.shape)
    sl = tuple(slice(m, n - m) for m, n in zip(margin, u_hat.shape))
    f[sl] = u_hat_x.values[sl] + lam * u_hat.values[sl]
    return u_hat.with_values(f, margin=margin)


# ---------------------------------------------------------------------------
# Pointwise (separable) parameter recovery
# ---------------------------------------------------------------------------

def separable_lambda(problem: PdeProblem, g_field: GridField,
                     kernel: MollifierKernel, tau_factor: float = 1e-3):
    """Solve the governing equation for the parameter pointwise.

    Returns ``(lam, valid)`` where ``valid`` marks interior points whose
    denominator magnitude exceeds ``tau_factor`` times its median.  Raises
    :class:`DegenerateDenominatorError` when more than half the interior is
    masked out.
    """
    if problem.estimator != "separable":
        raise ConfigurationError("problem estimator mode is not 'separable'")
    h = g_field.spacing
    if problem.kind is ProblemKind.LANGEVIN:
        u_hat = mollify(g_field, discretize(kernel, h, (0,)))
        u_hat_t = mollify(g_field, discretize(kernel, h, (1,)))
        lam = u_hat.with_values(u_hat_t.values - u_hat.values, margin=u_hat.margin)
        return lam, lam.interior_mask().boolean
    if problem.kind is ProblemKind.HEAT2D:
        lap_u = laplacian(g_field, kernel)
        m = problem.known_fields["source"].values
        return _masked_ratio(lap_u, -m, lap_u.values, tau_factor)
    if problem.kind is ProblemKind.RD2D:
        lap_stencil = laplacian_stencil(kernel, h)
        u_hat = mollify(g_field, discretize(kernel, h, (0, 0)))
        lap_u = mollify(g_field, lap_stencil)
        phi_n = problem.known_fields["nucleoplasm"]
        psi = 1.0 - phi_n.values
        phi_max = problem.constants["phi_max"]
        phi_h = 0.5 * (u_hat.values + psi)
        phi_e = 0.5 * (psi - u_hat.values)
        mu_vals = (-phi_e + _bulk(phi_h, phi_max)
                   - problem.constants["interface_width"] ** 2 * lap_u.values)
        mu = u_hat.with_values(np.where(lap_u.interior_mask().boolean, mu_vals, 0.0),
                               margin=lap_u.margin)
        lap_mu = mollify(mu, lap_stencil)
        return _masked_ratio(lap_mu, 2.0 * phi_h - lap_mu.values, 2.0 * phi_e, tau_factor)
    raise ConfigurationError(f"no separable estimator for {problem.kind.value}")


def _masked_ratio(template: GridField, numerator, denominator, tau_factor: float):
    # threshold is relative to the typical denominator, with a floor tied to
    # the numerator scale so a globally vanishing denominator cannot slip
    # through the relative test and silently produce huge ratios
    interior = template.interior_mask().boolean
    den = np.where(interior, denominator, 0.0)
    num = np.asarray(numerator)
    tau = max(tau_factor * float(np.median(np.abs(den[interior]))),
              1e-9 * float(np.median(np.abs(num[interior]))))
    valid = interior & (np.abs(den) >= max(tau, 1e-300))
    masked_fraction = 1.0 - valid.sum() / interior.sum()
    if masked_fraction > 0.5:
        raise DegenerateDenominatorError(
            f"{masked_fraction:.1%} of interior points have |denominator| < {tau:.3e}",
            masked_fraction=float(masked_fraction), threshold=tau)
    lam = np.zeros(template.shape)
    lam[valid] = num[valid] / den[valid]
    return template.with_values(lam, margin=template.margin), valid


# ---------------------------------------------------------------------------
# Total loss with exact cotangents
# ---------------------------------------------------------------------------

def _interior_flat(field: GridField) -> np.ndarray:
    return field.interior_mask().flat_indices


def total_loss(problem: PdeProblem, g_field: GridField, lam_field: GridField,
               data: GridField, mask: SampleMask, kernel: MollifierKernel,
               collocation: np.ndarray | None = None,
               include_residual: bool = True):
    """Data + residual loss and its exact gradient w.r.t. both output grids.

    ``collocation`` optionally restricts both loss terms to a flat-index
    subset of the grid (mini-batching); the data term always additionally
    intersects with the sample mask and the smoothed field's interior.
    ``include_residual=False`` is the data-only ablation: the residual and
    its breakdown are still computed and reported, but only the data term
    contributes to the returned cotangents.

    Returns ``(LossBreakdown, cot_g, cot_lambda)``.
    """
    if not g_field.same_grid(data):
        raise ConfigurationError("network output and data live on different grids")
    h = g_field.spacing
    dim = g_field.dimension
    zeroth = discretize(kernel, h, (0,) * dim)
    u_hat = mollify(g_field, zeroth)

    # -- residual forward pass, per problem kind ---------------------------
    if problem.kind is ProblemKind.LANGEVIN:
        first = discretize(kernel, h, (1,))
        u_hat_t = mollify(g_field, first)
        resid = residual_langevin(u_hat, u_hat_t, lam_field)
    elif problem.kind is ProblemKind.FORWARD_ODE:
        first = discretize(kernel, h, (1,))
        u_hat_x = mollify(g_field, first)
        resid = residual_forward_ode(u_hat, u_hat_x, problem.constants["lam"])
    elif problem.kind is ProblemKind.HEAT2D:
        lap_stencil = laplacian_stencil(kernel, h)
        lap_u = mollify(g_field, lap_stencil)
        resid = residual_heat(lap_u, lam_field, problem.known_fields["source"])
    elif problem.kind is ProblemKind.RD2D:
        lap_stencil = laplacian_stencil(kernel, h)
        phi_n = problem.known_fields["nucleoplasm"]
        psi = 1.0 - phi_n.values
        phi_max = problem.constants["phi_max"]
        delta_sq = problem.constants["interface_width"] ** 2
        phi_h = 0.5 * (u_hat.values + psi)
        phi_e = 0.5 * (psi - u_hat.values)
        if problem.single_fourth_order:
            pointwise = u_hat.with_values(
                np.where(u_hat.interior_mask().boolean,
                         -phi_e + _bulk(phi_h, phi_max), 0.0), margin=u_hat.margin)
            lap_pw = mollify(pointwise, lap_stencil)
            bih_stencil = biharmonic_stencil(kernel, h)
            bih = mollify(g_field, bih_stencil)
            f = lap_pw.values - delta_sq * bih.values + 2.0 * (
                lam_field.values * phi_e - phi_h)
            resid = u_hat.with_values(
                np.where(lap_pw.interior_mask().boolean, f, 0.0), margin=lap_pw.margin)
        else:
            lap_u = mollify(g_field, lap_stencil)
            mu_vals = -phi_e + _bulk(phi_h, phi_max) - delta_sq * lap_u.values
            mu = u_hat.with_values(np.where(lap_u.interior_mask().boolean, mu_vals, 0.0),
                                   margin=lap_u.margin)
            lap_mu = mollify(mu, lap_stencil)
            f = lap_mu.values + 2.0 * (lam_field.values * phi_e - phi_h)
            resid = u_hat.with_values(np.where(lap_mu.interior_mask().boolean, f, 0.0),
                                      margin=lap_mu.margin)
    else:  # pragma: no cover
        raise ConfigurationError(f"unsupported problem kind {problem.kind}")

    # -- select residual and data points -----------------------------------
    resid_flat = _interior_flat(resid)
    data_flat = np.intersect1d(np.asarray(mask.indices), _interior_flat(u_hat))
    if collocation is not None:
        batch = np.asarray(collocation, dtype=np.intp)
        resid_flat = np.intersect1d(resid_flat, batch)
        data_flat = np.intersect1d(data_flat, batch)
    if data_flat.size == 0:
        raise InvalidArgumentError("sample mask selects no valid interior points")
    if resid_flat.size == 0:
        raise InvalidArgumentError("no valid residual points")

    n_f = int(resid_flat.size)
    n_u = int(data_flat.size)
    r = resid.values.ravel()[resid_flat]
    mse_f = float(np.mean(r * r))
    diff = u_hat.values.ravel()[data_flat] - data.values.ravel()[data_flat]
    mse_u = float(np.mean(diff * diff))
    mse_total = mse_u + mse_f

    # -- cotangents ----------------------------------------------------------
    cres = np.zeros(g_field.values.size)
    if include_residual:
        cres[resid_flat] = 2.0 * r / n_f
    cres = cres.reshape(g_field.shape)
    c_resid = resid.with_values(cres, margin=resid.margin)

    cdata = np.zeros(g_field.values.size)
    cdata[data_flat] = 2.0 * diff / n_u
    c_data = u_hat.with_values(cdata.reshape(g_field.shape), margin=u_hat.margin)

    cot_g_vals = mollify_adjoint(c_data, zeroth).values
    cot_lam_vals = np.zeros(g_field.shape)

    if problem.kind is ProblemKind.LANGEVIN:
        cot_g_vals += (mollify_adjoint(c_resid, first).values
                       - mollify_adjoint(c_resid, zeroth).values)
        cot_lam_vals -= c_resid.values
    elif problem.kind is ProblemKind.FORWARD_ODE:
        cot_g_vals += (mollify_adjoint(c_resid, first).values
                       + problem.constants["lam"] * mollify_adjoint(c_resid, zeroth).values)
    elif problem.kind is ProblemKind.HEAT2D:
        scaled = c_resid.with_values(c_resid.values * lam_field.values,
                                     margin=c_resid.margin)
        cot_g_vals += mollify_adjoint(scaled, lap_stencil).values
        cot_lam_vals += c_resid.values * lap_u.values
    elif problem.kind is ProblemKind.RD2D:
        cot_lam_vals += c_resid.values * 2.0 * phi_e
        # reaction term: d f / d u_hat = 2 (lam d phi_e/d u - d phi_h/d u)
        cot_u = -(lam_field.values + 1.0) * c_resid.values
        if problem.single_fourth_order:
            cot_pw = mollify_adjoint(c_resid, lap_stencil)
            cot_pw = cot_pw.with_values(
                np.where(pointwise.interior_mask().boolean, cot_pw.values, 0.0),
                margin=pointwise.margin)
            cot_u += cot_pw.values * (0.5 + 0.5 * _bulk_prime(phi_h, phi_max))
            cot_g_vals += -delta_sq * mollify_adjoint(c_resid, bih_stencil).values
        else:
            cot_mu = mollify_adjoint(c_resid, lap_stencil)
            cot_mu = cot_mu.with_values(
                np.where(mu.interior_mask().boolean, cot_mu.values, 0.0), margin=mu.margin)
            # mu depends pointwise on u_hat and linearly on lap(g)
            cot_u += cot_mu.values * (0.5 + 0.5 * _bulk_prime(phi_h, phi_max))
            cot_g_vals += -delta_sq * mollify_adjoint(cot_mu, lap_stencil).values
        cot_u_field = u_hat.with_values(
            np.where(u_hat.interior_mask().boolean, cot_u, 0.0), margin=u_hat.margin)
        cot_g_vals += mollify_adjoint(cot_u_field, zeroth).values

    breakdown = LossBreakdown(mse_u=mse_u, mse_f=mse_f, mse_total=mse_total,
                              residual=resid, n_f=n_f, n_u=n_u)
    cot_g = GridField(cot_g_vals, spacing=g_field.spacing, origin=g_field.origin)
    cot_lambda = GridField(cot_lam_vals, spacing=g_field.spacing, origin=g_field.origin)
    return breakdown, cot_g, cot_lambda
