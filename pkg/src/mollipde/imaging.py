"""Point clouds to continuous density fields to phase-fraction fields.

Binary localization clouds are regressed onto a target grid with a Gaussian
kernel (weights exp(-d^2 / 2 sigma^2); the normalizing constant cancels in the
weighted average).  Grid nodes with no point within 5 sigma are flagged as
low-support and filled from the nearest point rather than silently zeroed.

The density-to-phase transform is applied verbatim:

    phi_h = (z * 6/7)^0.5
    phi_n = ((z - 0.7)/0.7)^2 * 6/(7*0.7) + 0.2
    phi_e = 1 - phi_h - phi_n

phi_e can go negative at low densities; such nodes are flagged, never
clamped, because clamping would break the three-way identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputRangeError, InvalidArgumentError
from .grids import GridField


@dataclass(frozen=True)
class PointCloud:
    """Scattered (x, y) samples with one value per point, inside a rectangle."""

    points: np.ndarray
    values: np.ndarray
    extent: tuple  # (width, height) in the same units as points

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
            raise InvalidArgumentError("points must be a non-empty (N, 2) array")
        if vals.shape != (pts.shape[0],):
            raise InvalidArgumentError("one value per point required")
        extent = tuple(float(e) for e in self.extent)
        if len(extent) != 2 or any(e <= 0 for e in extent):
            raise InvalidArgumentError(f"bad extent {extent}")
        eps = 1e-9 * max(extent)
        if (pts.min() < -eps or pts[:, 0].max() > extent[0] + eps
                or pts[:, 1].max() > extent[1] + eps):
            raise InvalidArgumentError("points fall outside the stated extent")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "extent", extent)

    def to_csv(self, path):
        with open(path, "w", encoding="ascii") as fh:
            fh.write("x,y,z\n")
            for (x, y), z in zip(self.points, self.values):
                fh.write(f"{float(x)!r},{float(y)!r},{float(z)!r}\n")

    @classmethod
    def from_csv(cls, path, extent):
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        data = np.atleast_2d(data)
        return cls(points=data[:, :2], values=data[:, 2], extent=extent)


@dataclass(frozen=True)
class SmootherConfig:
    bandwidth: float
    grid_shape: tuple
    grid_spacing: float
    batch_size: int = 1024

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise InvalidArgumentError("bandwidth must be positive")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch size must be >= 1")


def watson_smooth(cloud: PointCloud, cfg: SmootherConfig):
    """Kernel-weighted average of point values at each grid node.

    Evaluates the grid in batches of ``cfg.batch_size`` nodes; chunking only
    partitions the output so results are bit-identical to a single pass.
    Returns ``(z_mesh, low_support)`` where the boolean field flags nodes
    with no point within 5 bandwidths (filled from the nearest point).
    """
    nx, ny = cfg.grid_shape
    h = cfg.grid_spacing
    xs = h * np.arange(nx)
    ys = h * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.stack([gx.ravel(), gy.ravel()], axis=-1)

    pts = cloud.points
    vals = cloud.values
    inv_two_sigma_sq = 1.0 / (2.0 * cfg.bandwidth ** 2)
    cutoff_sq = (5.0 * cfg.bandwidth) ** 2

    out = np.empty(nodes.shape[0])
    low = np.zeros(nodes.shape[0], dtype=bool)
    for start in range(0, nodes.shape[0], cfg.batch_size):
        chunk = nodes[start:start + cfg.batch_size]
        d_sq = ((chunk[:, None, 0] - pts[None, :, 0]) ** 2
                + (chunk[:, None, 1] - pts[None, :, 1]) ** 2)
        weights = np.exp(-d_sq * inv_two_sigma_sq)
        totals = weights.sum(axis=1)
        nearest = np.argmin(d_sq, axis=1)
        bad = (d_sq.min(axis=1) > cutoff_sq) | (totals == 0.0)
        safe_totals = np.where(bad, 1.0, totals)
        # per-row reductions (not a matmul) so chunking cannot change the
        # summation order and chunked output stays bit-identical
        est = (weights * vals[None, :]).sum(axis=1) / safe_totals
        est[bad] = vals[nearest[bad]]
        out[start:start + cfg.batch_size] = est
        low[start:start + cfg.batch_size] = bad

    mk = lambda v: GridField(v.reshape(cfg.grid_shape), spacing=(h, h))
    return mk(out), mk(low.astype(float))


def to_phase_fields(z_mesh: GridField):
    """Density to (phi_h, phi_n, phi_e) plus a flag field for phi_e < 0."""
    z = z_mesh.values
    if np.any(z < 0.0) or np.any(z > 1.0):
        raise InputRangeError("densities must lie in [0, 1]")
    phi_h = np.sqrt(z * 6.0 / 7.0)
    phi_n = ((z - 0.7) / 0.7) ** 2 * (6.0 / (7.0 * 0.7)) + 0.2
    phi_e = 1.0 - phi_h - phi_n
    flagged = phi_e < 0.0
    mk = lambda v: z_mesh.with_values(v)
    return mk(phi_h), mk(phi_n), mk(phi_e), mk(flagged.astype(float))


def synthesize_point_cloud(density: GridField, count: int, seed: int = 0) -> PointCloud:
    """Draw points proportional to a non-negative density field.

    Cells are selected by inverse-CDF sampling of the cell masses, then each
    point is jittered uniformly within its cell.  Deterministic per seed.
    """
    if count <= 0:
        raise InvalidArgumentError("count must be positive")
    dens = density.values
    if np.any(dens < 0) or not np.any(dens > 0):
        raise InvalidArgumentError("density must be non-negative and not all zero")
    h = density.spacing
    masses = dens.ravel()
    cdf = np.cumsum(masses)
    cdf /= cdf[-1]
    rng = np.random.default_rng(seed)
    cells = np.searchsorted(cdf, rng.uniform(size=count), side="right")
    ci, cj = np.unravel_index(cells, dens.shape)
    jitter = rng.uniform(size=(count, 2))
    # cell (i, j) covers the pixel patch [i h, (i+1) h) x [j h, (j+1) h)
    x = density.origin[0] + (ci + jitter[:, 0]) * h[0]
    y = density.origin[1] + (cj + jitter[:, 1]) * h[1]
    extent = (density.origin[0] + dens.shape[0] * h[0],
              density.origin[1] + dens.shape[1] * h[1])
    return PointCloud(points=np.stack([x, y], axis=-1),
                      values=np.ones(count), extent=extent)
