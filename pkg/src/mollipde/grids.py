"""Scalar fields sampled on uniform 1D/2D grids, plus file formats.

A :class:`GridField` carries its spacing and origin so stencil operations can
check compatibility.  ``margin`` records how many cells per side are invalid
(not computed); convolution-style operations grow it by their stencil radius
and all losses are evaluated on the remaining interior only.

Serialization formats (documented here, stable):

* CSV: header ``x,value`` or ``x,y,value``; one row per grid node in
  row-major order.
* Binary (little-endian): ``int64 ndim`` | ``int64 shape[ndim]`` |
  ``float64 spacing[ndim]`` | ``float64 origin[ndim]`` | ``float64 values``
  in row-major order.  Margins are bookkeeping for in-memory pipelines and
  are not part of the wire format.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError


@dataclass(frozen=True)
class GridField:
    values: np.ndarray
    spacing: tuple
    origin: tuple = None
    margin: tuple = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim not in (1, 2):
            raise InvalidArgumentError(f"fields are 1D or 2D, got ndim={values.ndim}")
        if any(n < 3 for n in values.shape):
            raise InvalidArgumentError(f"need >= 3 points per axis, got shape {values.shape}")
        spacing = self.spacing
        if np.isscalar(spacing):
            spacing = (float(spacing),) * values.ndim
        spacing = tuple(float(s) for s in spacing)
        if len(spacing) != values.ndim or any(s <= 0 for s in spacing):
            raise InvalidArgumentError(f"bad spacing {spacing}")
        object.__setattr__(self, "spacing", spacing)
        origin = self.origin if self.origin is not None else (0.0,) * values.ndim
        if np.isscalar(origin):
            origin = (float(origin),) * values.ndim
        object.__setattr__(self, "origin", tuple(float(o) for o in origin))
        margin = self.margin if self.margin is not None else (0,) * values.ndim
        if np.isscalar(margin):
            margin = (int(margin),) * values.ndim
        object.__setattr__(self, "margin", tuple(int(m) for m in margin))
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("field values must be finite")

    @property
    def dimension(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def axis_coordinates(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        return self.origin[axis] + self.spacing[axis] * np.arange(n)

    def coordinates(self) -> np.ndarray:
        """Grid node coordinates, shape (N, ndim), row-major order."""
        axes = [self.axis_coordinates(a) for a in range(self.dimension)]
        if self.dimension == 1:
            return axes[0][:, None]
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)

    def interior_mask(self) -> "InteriorMask":
        return InteriorMask(margin=self.margin, shape=self.shape)

    def interior_values(self) -> np.ndarray:
        return self.values[self.interior_mask().slices]

    def with_values(self, values, margin=None) -> "GridField":
        return replace(self, values=np.asarray(values, dtype=float),
                       margin=self.margin if margin is None else margin)

    def same_grid(self, other: "GridField") -> bool:
        return (self.shape == other.shape and self.spacing == other.spacing
                and self.origin == other.origin)


@dataclass(frozen=True)
class InteriorMask:
    """Grid points whose stencil footprint lies fully inside the grid."""

    margin: tuple
    shape: tuple

    def __post_init__(self):
        if any(2 * m >= n for m, n in zip(self.margin, self.shape)):
            raise ConfigurationError(
                f"margin {self.margin} leaves no interior for shape {self.shape}")

    @property
    def slices(self) -> tuple:
        return tuple(slice(m, n - m) for m, n in zip(self.margin, self.shape))

    @property
    def boolean(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.slices] = True
        return mask

    @property
    def flat_indices(self) -> np.ndarray:
        return np.flatnonzero(self.boolean.ravel())

    @property
    def count(self) -> int:
        return int(np.prod([n - 2 * m for m, n in zip(self.margin, self.shape)]))


def merge_margins(*fields: GridField) -> tuple:
    """Widest margin per axis across fields sharing one grid."""
    first = fields[0]
    for f in fields[1:]:
        if not first.same_grid(f):
            raise ConfigurationError("fields do not share a grid")
    return tuple(max(f.margin[a] for f in fields) for a in range(first.dimension))


def edge_pad(field: GridField, halo: int) -> GridField:
    """Extend a field by ``halo`` edge-replicated cells per side.

    The padded ring is marked invalid via the margin, so losses never read
    it; it exists so stencil footprints centered anywhere in the original
    domain stay inside the grid (a collocation halo for the network).
    """
    if halo < 0:
        raise InvalidArgumentError("halo must be non-negative")
    if halo == 0:
        return field
    values = np.pad(field.values, halo, mode="edge")
    origin = tuple(o - halo * s for o, s in zip(field.origin, field.spacing))
    margin = tuple(m + halo for m in field.margin)
    return GridField(values, spacing=field.spacing, origin=origin, margin=margin)


def halo_flat_indices(original_shape, halo: int) -> np.ndarray:
    """Flat indices (in the padded frame) of the original-domain nodes,
    in the original row-major order."""
    extended = tuple(n + 2 * halo for n in original_shape)
    grids = np.meshgrid(*[halo + np.arange(n) for n in original_shape], indexing="ij")
    return np.ravel_multi_index([g.ravel() for g in grids], extended)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def write_csv(field: GridField, path) -> None:
    coords = field.coordinates()
    vals = field.values.ravel()
    header = "x,value" if field.dimension == 1 else "x,y,value"
    with open(path, "w", encoding="ascii") as fh:
        fh.write(header + "\n")
        for row, v in zip(coords, vals):
            fh.write(",".join(repr(float(c)) for c in row) + f",{float(v)!r}\n")


def read_csv(path) -> GridField:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    if data.ndim != 2 or data.shape[1] not in (2, 3):
        raise InvalidArgumentError(f"unrecognized CSV layout in {path}")
    if data.shape[1] == 2:
        x, v = data[:, 0], data[:, 1]
        dx = np.diff(x)
        if dx.size == 0 or not np.allclose(dx, dx[0], rtol=1e-9, atol=1e-12):
            raise InvalidArgumentError("CSV grid is not uniform")
        return GridField(v, spacing=(float(dx[0]),), origin=(float(x[0]),))
    x, y, v = data[:, 0], data[:, 1], data[:, 2]
    ys = np.unique(y)
    xs = np.unique(x)
    if xs.size * ys.size != v.size:
        raise InvalidArgumentError("CSV rows do not form a full grid")
    hx = float(xs[1] - xs[0])
    hy = float(ys[1] - ys[0])
    return GridField(v.reshape(xs.size, ys.size), spacing=(hx, hy),
                     origin=(float(xs[0]), float(ys[0])))


def write_binary(field: GridField, path) -> None:
    with open(path, "wb") as fh:
        fh.write(np.int64(field.dimension).tobytes())
        fh.write(np.asarray(field.shape, dtype="<i8").tobytes())
        fh.write(np.asarray(field.spacing, dtype="<f8").tobytes())
        fh.write(np.asarray(field.origin, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_binary(path) -> GridField:
    with open(path, "rb") as fh:
        raw = fh.read()
    ndim = int(np.frombuffer(raw, dtype="<i8", count=1)[0])
    if ndim not in (1, 2):
        raise InvalidArgumentError(f"bad field file {path}: ndim={ndim}")
    off = 8
    shape = np.frombuffer(raw, dtype="<i8", count=ndim, offset=off)
    off += 8 * ndim
    spacing = np.frombuffer(raw, dtype="<f8", count=ndim, offset=off)
    off += 8 * ndim
    origin = np.frombuffer(raw, dtype="<f8", count=ndim, offset=off)
    off += 8 * ndim
    count = int(np.prod(shape))
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape)
    return GridField(values.copy(), spacing=tuple(spacing), origin=tuple(origin))
