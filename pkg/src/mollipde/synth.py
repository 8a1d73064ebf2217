"""Forward simulators providing ground truth for the three inverse benchmarks.

* Langevin: du/dt = u + lam(t) integrated with classical RK4 and the forcing
  held constant within each step; lam(t) ~ N(profile(t), sigma^2) i.i.d. per
  node, with the same underlying standard normals across sigma levels so
  cross-noise comparisons isolate the noise amplitude.  Draws are truncated
  at 4 sigma to keep the bounded-noise error analysis applicable.
* Heat (steady state): manufactured solutions; the source term is computed
  analytically from the chosen solution and diffusivity, so the returned
  triple satisfies the equation exactly.
* Reaction-diffusion: explicit Euler on the coupled (phi_n, phi_d) chromatin
  phase-field system with no-flux edges, run until the phase dynamics stall.

Chemical potentials derive from the free energy density

    F = phi_e^2 + phi_h^2 (phi_max - phi_h)^2
        + (delta^2/2)(|grad phi_n|^2 + |grad phi_d|^2)

with phi_h = (phi_d + 1 - phi_n)/2 and phi_e = (1 - phi_n - phi_d)/2, giving

    mu_d = -phi_e + phi_h (phi_max - phi_h)(phi_max - 2 phi_h) - delta^2 lap(phi_d)
    mu_n = -phi_e - phi_h (phi_max - phi_h)(phi_max - 2 phi_h) - delta^2 lap(phi_n)

(the mu_n bulk term is d F_bulk / d phi_n via the chain rule on (phi_h, phi_e)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import backend
from .errors import InvalidArgumentError, StabilityError
from .grids import GridField
from .residuals import SampleMask

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Langevin
# ---------------------------------------------------------------------------

FORCING_PROFILES = {
    "constant": lambda t, level: np.full_like(t, level),
    "ramp": lambda t, level: level * (0.5 + t),
    "sine": lambda t, level: level * (1.0 + 0.5 * np.sin(TWO_PI * t)),
    "smooth_step": lambda t, level: level * (1.0 + 0.5 * np.tanh((t - 0.5) / 0.1)),
}


@dataclass(frozen=True)
class LangevinSpec:
    profile: str = "constant"
    mean_level: float = -1.0
    sigma: float = 0.0
    spacing: float = 0.01
    n_points: int = 101
    u0: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidArgumentError("sigma must be non-negative")
        if self.profile not in FORCING_PROFILES:
            raise InvalidArgumentError(
                f"unknown forcing profile {self.profile!r}; options: {sorted(FORCING_PROFILES)}")


def simulate_langevin(spec: LangevinSpec):
    """Returns (u, lam_true) sampled on the time grid, both GridFields."""
    t = spec.spacing * np.arange(spec.n_points)
    mean = FORCING_PROFILES[spec.profile](t, spec.mean_level)
    rng = np.random.default_rng(spec.seed)
    z = np.clip(rng.standard_normal(spec.n_points), -4.0, 4.0)
    lam = mean + spec.sigma * z

    u = np.empty(spec.n_points)
    u[0] = spec.u0
    h = spec.spacing
    for i in range(spec.n_points - 1):
        c = lam[i]  # forcing held constant across the step
        k1 = u[i] + c
        k2 = (u[i] + 0.5 * h * k1) + c
        k3 = (u[i] + 0.5 * h * k2) + c
        k4 = (u[i] + h * k3) + c
        u[i + 1] = u[i] + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    u_field = GridField(u, spacing=(h,))
    lam_field = GridField(lam, spacing=(h,))
    return u_field, lam_field


def langevin_exact_constant(lam: float, u0: float, t: np.ndarray) -> np.ndarray:
    """Closed-form solution of du/dt = u + lam for constant lam."""
    return (u0 + lam) * np.exp(t) - lam


# ---------------------------------------------------------------------------
# Heat (manufactured steady states)
# ---------------------------------------------------------------------------

DIFFUSIVITY_PROFILES = {
    "constant": lambda x, y, level: np.full_like(x, level),
    "sine_x": lambda x, y, level: level * (1.0 + 0.5 * np.sin(TWO_PI * x)),
    "sine_xy": lambda x, y, level: level * (1.0 + 0.3 * np.sin(TWO_PI * x)
                                            + 0.3 * np.sin(TWO_PI * y)),
}

SOLUTION_PROFILES = {
    # (u, analytic laplacian of u)
    "sinsin": (lambda x, y: np.sin(TWO_PI * x) * np.sin(TWO_PI * y),
               lambda x, y: -2.0 * TWO_PI ** 2 * np.sin(TWO_PI * x) * np.sin(TWO_PI * y)),
    "quadratic": (lambda x, y: x * x + y * y,
                  lambda x, y: np.full_like(x, 4.0)),
}


@dataclass(frozen=True)
class HeatSpec:
    diffusivity: str = "sine_x"
    level: float = 1.0
    solution: str = "sinsin"
    shape: tuple = (64, 64)
    spacing: float = None  # default: unit square
    seed: int = 0

    def __post_init__(self):
        if self.diffusivity not in DIFFUSIVITY_PROFILES:
            raise InvalidArgumentError(f"unknown diffusivity profile {self.diffusivity!r}")
        if self.solution not in SOLUTION_PROFILES:
            raise InvalidArgumentError(f"unknown solution profile {self.solution!r}")

    def grid_spacing(self) -> float:
        if self.spacing is not None:
            return float(self.spacing)
        return 1.0 / (self.shape[0] - 1)


def simulate_heat(spec: HeatSpec):
    """Returns (u, lam_true, m) with m = -lam * lap(u) computed analytically."""
    h = spec.grid_spacing()
    xs = h * np.arange(spec.shape[0])
    ys = h * np.arange(spec.shape[1])
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    u_fn, lap_fn = SOLUTION_PROFILES[spec.solution]
    lam = DIFFUSIVITY_PROFILES[spec.diffusivity](gx, gy, spec.level)
    u = u_fn(gx, gy)
    m = -lam * lap_fn(gx, gy)
    mk = lambda v: GridField(v, spacing=(h, h))
    return mk(u), mk(lam), mk(m)


# ---------------------------------------------------------------------------
# Reaction-diffusion phase field
# ---------------------------------------------------------------------------

REACTION_PROFILES = {
    "constant": lambda x, y, level, rng: np.full_like(x, level),
    "two_level": lambda x, y, level, rng: level * (1.0 + 0.4 * np.tanh((x - x.mean()) / 0.3)),
    "noisy": lambda x, y, level, rng: level * (1.0 + 0.15 * np.clip(
        rng.standard_normal(x.shape), -4.0, 4.0)),
}


@dataclass(frozen=True)
class RdSpec:
    reaction: str = "two_level"
    level: float = 1.2
    phi_max: float = 0.8
    interface_width: float = 0.12
    nucleoplasm: float = 0.2
    shape: tuple = (64, 64)
    spacing: float = 0.05
    dt: float = None
    steady_tol: float = 1e-3
    max_steps: int = 6_000_000
    init_amplitude: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.steady_tol <= 0:
            raise InvalidArgumentError("steady-state tolerance must be positive")
        if self.reaction not in REACTION_PROFILES:
            raise InvalidArgumentError(f"unknown reaction profile {self.reaction!r}")

    def stable_dt(self) -> float:
        # 10x safety margin on the explicit biharmonic limit, plus a cap from
        # the reaction relaxation rate
        h = self.spacing
        biharmonic = 0.1 * h ** 4 / (8.0 * self.interface_width ** 2)
        reaction = 0.05 / (1.0 + 2.0 * abs(self.level))
        return min(biharmonic, reaction) if self.dt is None else self.dt


def simulate_reaction_diffusion(spec: RdSpec):
    """Explicit evolution to a steady chromatin configuration.

    Returns (phi_d, phi_n, lam_true, diagnostics).  Raises
    :class:`StabilityError` if the fields blow up, reporting the time step.
    """
    h = spec.spacing
    xs = h * np.arange(spec.shape[0])
    ys = h * np.arange(spec.shape[1])
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    rng = np.random.default_rng(spec.seed)
    lam = REACTION_PROFILES[spec.reaction](gx, gy, spec.level, rng)

    psi = 1.0 - spec.nucleoplasm  # chromatin fraction available
    phi_n = np.full(spec.shape, spec.nucleoplasm)
    # start near the local reaction balance so relaxation focuses on diffusion
    phi_d = (lam - 1.0) * psi / (lam + 1.0)
    phi_d = phi_d + spec.init_amplitude * rng.standard_normal(spec.shape)

    dt = spec.stable_dt()
    inv_h2 = 1.0 / (h * h)
    delta_sq = spec.interface_width ** 2

    check_every = 100
    steps = 0
    max_rate = math.inf
    while steps < spec.max_steps:
        for _ in range(check_every):
            phi_n, phi_d, max_rate = backend.phase_field_step(
                phi_n, phi_d, lam, spec.phi_max, delta_sq, inv_h2, dt)
        steps += check_every
        if not np.all(np.isfinite(phi_d)) or np.max(np.abs(phi_d)) > 10.0:
            raise StabilityError(
                f"phase field diverged after {steps} steps (dt={dt:.3e})", dt)
        if max_rate < spec.steady_tol:
            break

    diagnostics = {
        "steps": steps,
        "dt": dt,
        "final_max_rate": float(max_rate),
        "reached_steady_state": bool(max_rate < spec.steady_tol),
        "total_nucleoplasm": float(phi_n.sum() * h * h),
        "spec": asdict(spec),
    }
    mk = lambda v: GridField(v, spacing=(h, h))
    return mk(phi_d), mk(phi_n), mk(lam), diagnostics


def sparse_sample(field: GridField, fraction: float, seed: int = 0) -> SampleMask:
    """Uniform random subset of grid nodes, without replacement."""
    if not (0.0 < fraction <= 1.0):
        raise InvalidArgumentError(f"sampling fraction must be in (0, 1], got {fraction}")
    n = field.values.size
    count = max(1, int(round(fraction * n)))
    if count >= n:
        indices = np.arange(n)
    else:
        indices = np.sort(np.random.default_rng(seed).choice(n, size=count, replace=False))
    return SampleMask(indices=indices, seed=seed, fraction=fraction)
