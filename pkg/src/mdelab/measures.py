"""Atomic measure algebra: weighted Dirac combinations on R^d, velocity
measures on R^d x R^d, mesh bookkeeping and the grid snapping operators.

Conventions
-----------
* Atom locations are rows of an ``(n, d)`` float64 array; callables passed
  to :meth:`DiscreteMeasure.integrate` and :meth:`DiscreteMeasure.push_forward`
  must accept such an array (vectorized over atoms).
* All objects are immutable after construction and every operation is pure,
  so values can be shared freely across threads.
* Spatial cells are half open, ``x_i + [0, dx)^d``; an index is obtained by
  flooring, with a round-to-nearest escape hatch when the scaled coordinate
  sits within 1e-12 (absolute or relative) of an integer so accumulated
  float drift cannot push an atom into the wrong cell.
"""

from __future__ import annotations

import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import AtomOutsideMesh, DimensionMismatch

__all__ = [
    "DiscreteMeasure",
    "VelocityMeasure",
    "Mesh",
    "grid_project_x",
    "grid_project_xv",
    "combine",
    "write_text_atomic",
]

_SNAP_RTOL = 1e-12
_SNAP_ATOL = 1e-12
_BOX_SLACK = 1e-9


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _as_matrix(points, dim: int | None = None) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if dim in (None, 1) else pts.reshape(1, -1)
    if pts.ndim != 2:
        raise ValueError(f"atom locations must form a 2-d array, got shape {pts.shape}")
    return pts


def _format(x: float) -> str:
    # 17 significant digits round-trip float64 exactly through decimal text.
    return f"{x:.17g}"


def write_text_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file and rename."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite nonnegative atomic measure ``sum_i w_i delta_{x_i}`` on R^d.

    Parameters
    ----------
    dim : int
        Ambient dimension d >= 1.
    points : (n, d) array
        Atom locations; all coordinates must be finite.
    weights : (n,) array
        Atom masses; strictly nonnegative (a negative weight is an error,
        the state space is the cone of nonnegative measures).
    """

    dim: int
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be a positive integer")
        pts = _as_matrix(self.points, self.dim)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.shape[0] != w.shape[0]:
            raise ValueError("points and weights must have matching lengths")
        if pts.shape[0] and pts.shape[1] != self.dim:
            raise ValueError(f"atoms of length {pts.shape[1]} in dimension {self.dim}")
        if pts.size == 0:
            pts = pts.reshape(0, self.dim)
        if not np.all(np.isfinite(pts)):
            raise ValueError("atom locations must be finite")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0.0):
            i = int(np.argmin(w))
            raise ValueError(f"negative weight {w[i]} at atom {i}")
        object.__setattr__(self, "points", _freeze(pts))
        object.__setattr__(self, "weights", _freeze(w))

    # -- constructors ---------------------------------------------------------
    @classmethod
    def empty(cls, dim: int) -> "DiscreteMeasure":
        return cls(dim, np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def dirac(cls, location, weight: float = 1.0) -> "DiscreteMeasure":
        loc = np.atleast_1d(np.asarray(location, dtype=float))
        return cls(loc.size, loc.reshape(1, -1), np.array([weight]))

    @classmethod
    def from_atoms(cls, atoms, dim: int | None = None) -> "DiscreteMeasure":
        """Build from an iterable of ``(location, weight)`` pairs."""
        atoms = list(atoms)
        if not atoms:
            if dim is None:
                raise ValueError("dimension required for an empty atom list")
            return cls.empty(dim)
        pts = np.array([np.atleast_1d(np.asarray(loc, dtype=float)) for loc, _ in atoms])
        w = np.array([float(wt) for _, wt in atoms])
        return cls(pts.shape[1], pts, w)

    # -- basic queries ---------------------------------------------------------
    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    def is_empty(self) -> bool:
        return self.n_atoms == 0

    def total_mass(self) -> float:
        """Total variation ``sum_i w_i`` (equals the flat norm on the cone)."""
        return float(np.sum(self.weights))

    def support_radius(self) -> float:
        """Largest Euclidean norm over atoms carrying positive mass (0 if none)."""
        mask = self.weights > 0.0
        if not np.any(mask):
            return 0.0
        return float(np.max(np.linalg.norm(self.points[mask], axis=1)))

    def integrate(self, f) -> float:
        """Return ``sum_i w_i f(x_i)`` for a vectorized integrand.

        ``f`` receives the full ``(n, d)`` location array and must return one
        finite value per atom; non-finite values are raised as errors.
        """
        if self.is_empty():
            return 0.0
        vals = np.asarray(f(self.points), dtype=float).reshape(-1)
        if vals.shape[0] != self.n_atoms:
            raise ValueError("integrand must return one value per atom")
        if not np.all(np.isfinite(vals)):
            raise ValueError("integrand produced a non-finite value")
        return float(np.dot(self.weights, vals))

    # -- transformations -------------------------------------------------------
    def push_forward(self, mapping) -> "DiscreteMeasure":
        """Image measure under ``mapping`` (vectorized ``(n, d) -> (n, d')``).

        Weights travel with their atoms, so total mass is preserved; exact
        duplicate images are merged only by a subsequent :meth:`canonicalize`.
        """
        if self.is_empty():
            return self
        imgs = _as_matrix(mapping(self.points))
        if imgs.shape[0] != self.n_atoms:
            raise ValueError("mapping must return one image per atom")
        return DiscreteMeasure(imgs.shape[1], imgs, self.weights)

    def scaled(self, factor: float) -> "DiscreteMeasure":
        """Multiply every weight by a nonnegative factor."""
        if factor < 0.0:
            raise ValueError("scaling factor must be nonnegative")
        return DiscreteMeasure(self.dim, self.points, self.weights * factor)

    def canonicalize(self) -> "DiscreteMeasure":
        """Merge atoms at exactly equal locations and drop zero weights.

        Atoms are returned in lexicographic location order, which makes the
        reduction deterministic and results bitwise reproducible.
        """
        mask = self.weights > 0.0
        pts, w = self.points[mask], self.weights[mask]
        if pts.shape[0] == 0:
            return DiscreteMeasure.empty(self.dim)
        uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
        merged = np.bincount(inverse.reshape(-1), weights=w, minlength=uniq.shape[0])
        return DiscreteMeasure(self.dim, uniq, merged)

    # -- serialization ---------------------------------------------------------
    def to_csv_text(self) -> str:
        cols = ",".join(f"x{k}" for k in range(self.dim))
        out = io.StringIO()
        out.write(f"atom_index,{cols},weight\n")
        for i in range(self.n_atoms):
            coords = ",".join(_format(c) for c in self.points[i])
            out.write(f"{i},{coords},{_format(self.weights[i])}\n")
        return out.getvalue()

    def to_csv(self, path) -> None:
        write_text_atomic(path, self.to_csv_text())

    @classmethod
    def from_csv_text(cls, text: str) -> "DiscreteMeasure":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = lines[0].split(",")
        if header[0] != "atom_index" or header[-1] != "weight":
            raise ValueError("expected header atom_index,x0,...,weight")
        dim = len(header) - 2
        pts, w = [], []
        for ln in lines[1:]:
            parts = ln.split(",")
            pts.append([float(p) for p in parts[1:1 + dim]])
            w.append(float(parts[1 + dim]))
        if not pts:
            return cls.empty(dim)
        return cls(dim, np.array(pts), np.array(w))

    @classmethod
    def read_csv(cls, path) -> "DiscreteMeasure":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_csv_text(fh.read())

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "atoms": [
                {"x": [float(_format(c)) for c in self.points[i]],
                 "w": float(_format(self.weights[i]))}
                for i in range(self.n_atoms)
            ],
        }

    def to_json(self, path) -> None:
        write_text_atomic(path, json.dumps(self.to_json_dict(), indent=2) + "\n")

    @classmethod
    def from_json_dict(cls, data: dict) -> "DiscreteMeasure":
        dim = int(data["dim"])
        atoms = data.get("atoms", [])
        if not atoms:
            return cls.empty(dim)
        pts = np.array([a["x"] for a in atoms], dtype=float)
        w = np.array([a["w"] for a in atoms], dtype=float)
        return cls(dim, pts, w)

    @classmethod
    def read_json(cls, path) -> "DiscreteMeasure":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def combine(*measures: DiscreteMeasure) -> DiscreteMeasure:
    """Sum of measures (atom lists concatenated, then canonicalized)."""
    measures = [m for m in measures if m is not None]
    if not measures:
        raise ValueError("nothing to combine")
    dim = measures[0].dim
    if any(m.dim != dim for m in measures):
        raise DimensionMismatch("cannot combine measures of different dimension")
    pts = np.vstack([m.points for m in measures]) if measures else np.zeros((0, dim))
    w = np.concatenate([m.weights for m in measures])
    return DiscreteMeasure(dim, pts, w).canonicalize()


@dataclass(frozen=True)
class VelocityMeasure:
    """Atomic measure on R^d x R^d: atoms ``(x_i, v_j)`` with masses ``m_ij``.

    The first coordinate block is spatial position, the second admissible
    velocity. Instances produced by a measure vector field must satisfy the
    push-forward condition: the spatial marginal equals the input measure.
    """

    dim: int
    points: np.ndarray      # (n, d) spatial locations
    velocities: np.ndarray  # (n, d) velocity coordinates
    weights: np.ndarray     # (n,) nonnegative masses

    def __post_init__(self):
        pts = _as_matrix(self.points, self.dim)
        vel = _as_matrix(self.velocities, self.dim)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.size == 0:
            pts = pts.reshape(0, self.dim)
        if vel.size == 0:
            vel = vel.reshape(0, self.dim)
        if not (pts.shape == vel.shape and pts.shape[0] == w.shape[0]):
            raise ValueError("points, velocities and weights must align")
        if pts.shape[0] and pts.shape[1] != self.dim:
            raise ValueError(f"atoms of length {pts.shape[1]} in dimension {self.dim}")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(vel))):
            raise ValueError("coordinates must be finite")
        if np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "points", _freeze(pts))
        object.__setattr__(self, "velocities", _freeze(vel))
        object.__setattr__(self, "weights", _freeze(w))

    @classmethod
    def empty(cls, dim: int) -> "VelocityMeasure":
        z = np.zeros((0, dim))
        return cls(dim, z, z.copy(), np.zeros(0))

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    def is_empty(self) -> bool:
        return self.n_atoms == 0

    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def spatial_marginal(self) -> DiscreteMeasure:
        """Drop the velocity coordinate and merge coincident locations.

        Realizes ``pi_1 # V``: total mass is preserved exactly (grouped sums).
        """
        return DiscreteMeasure(self.dim, self.points, self.weights).canonicalize()

    def canonicalize(self) -> "VelocityMeasure":
        """Merge atoms equal in both position and velocity, drop zero weights."""
        mask = self.weights > 0.0
        pts, vel, w = self.points[mask], self.velocities[mask], self.weights[mask]
        if pts.shape[0] == 0:
            return VelocityMeasure.empty(self.dim)
        phase = np.hstack([pts, vel])
        uniq, inverse = np.unique(phase, axis=0, return_inverse=True)
        merged = np.bincount(inverse.reshape(-1), weights=w, minlength=uniq.shape[0])
        return VelocityMeasure(self.dim, uniq[:, :self.dim], uniq[:, self.dim:], merged)

    def as_phase_measure(self) -> DiscreteMeasure:
        """View as an atomic measure on R^{2d} (position and velocity stacked)."""
        return DiscreteMeasure(2 * self.dim, np.hstack([self.points, self.velocities]),
                               self.weights)

    def moved(self, tau: float) -> DiscreteMeasure:
        """Push forward through ``(x, v) -> x + tau v``."""
        return DiscreteMeasure(self.dim, self.points + tau * self.velocities,
                               self.weights)

    def max_speed(self) -> float:
        mask = self.weights > 0.0
        if not np.any(mask):
            return 0.0
        return float(np.max(np.linalg.norm(self.velocities[mask], axis=1)))


@dataclass(frozen=True)
class Mesh:
    """Discretization bookkeeping for a given resolution N.

    Steps are exact rationals of N: time step ``1/N``, velocity step ``1/N``,
    space step ``1/N^2``. The spatial grid is ``(Z^d / N^2) ∩ [-N, N]^d`` and
    the velocity grid ``(Z^d / N) ∩ [-N, N]^d``; both are addressed purely by
    integer cell indices and never materialized. Time points are
    ``t_l = l/N`` up to ``floor(T N)`` with a final point at exactly T when
    ``T N`` is not an integer, so all intervals have length at most ``1/N``.
    """

    n: int
    dim: int
    horizon: float
    time_points: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("mesh resolution N must be a positive integer")
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise ValueError("horizon T must be positive and finite")
        steps = self.horizon * self.n
        if abs(steps - round(steps)) <= 1e-9 * max(1.0, abs(steps)):
            n_full = int(round(steps))
            pts = [l / self.n for l in range(n_full)]
            pts.append(self.horizon)
        else:
            n_full = int(math.floor(steps))
            pts = [l / self.n for l in range(n_full + 1)]
            pts.append(self.horizon)
        object.__setattr__(self, "time_points", _freeze(np.array(pts)))

    @property
    def dt(self) -> float:
        return 1.0 / self.n

    @property
    def dv(self) -> float:
        return 1.0 / self.n

    @property
    def dx(self) -> float:
        return 1.0 / self.n ** 2

    @property
    def n_steps(self) -> int:
        return len(self.time_points) - 1

    def floor_time_index(self, t: float) -> int:
        """Index of the largest mesh time <= t (with a 1e-9 snap tolerance)."""
        times = self.time_points
        idx = int(np.searchsorted(times, t + 1e-9, side="right")) - 1
        return max(idx, 0)

    def nearest_time_index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.time_points - t)))

    def is_mesh_time(self, t: float) -> bool:
        y = t * self.n
        return abs(y - round(y)) <= 1e-9 * max(1.0, abs(y)) and -1e-12 <= t <= self.horizon + 1e-12


def _snap_to_cells(values: np.ndarray, scale: float) -> np.ndarray:
    """Floor ``values * scale`` to integer cell indices.

    Values whose scaled coordinate lies within 1e-12 (absolute or relative)
    of an integer are rounded instead of floored; without this, an atom that
    is mathematically on a grid line could land one cell low after float
    drift, an error far above the projection bound.
    """
    y = values * scale
    r = np.round(y)
    near = np.isclose(y, r, rtol=_SNAP_RTOL, atol=_SNAP_ATOL)
    return np.where(near, r, np.floor(y)).astype(np.int64)


def _check_box(values: np.ndarray, limit: float, grid: str) -> None:
    over = np.abs(values) > limit + _BOX_SLACK
    if np.any(over):
        i, j = np.argwhere(over)[0]
        raise AtomOutsideMesh(grid, int(i), float(values[i, j]), float(limit))


def grid_project_x(m: DiscreteMeasure, mesh: Mesh) -> DiscreteMeasure:
    """Spatial discretization operator: snap every atom to its grid cell.

    Each atom's mass is assigned to the grid point of the half-open cell
    ``x_i + [0, dx)^d`` containing it; masses landing in one cell are summed,
    so total mass is conserved exactly. The flat distance to the input is at
    most ``sqrt(d) * dx * total_mass``.

    Raises
    ------
    AtomOutsideMesh
        If any atom lies outside the box ``[-N, N]^d``; the caller must
        raise N. Atoms exactly on the upper face are kept (measure-zero
        boundary, assigned to the last cell).
    """
    if m.dim != mesh.dim:
        raise DimensionMismatch("measure and mesh dimension differ")
    if m.is_empty():
        return m
    _check_box(m.points, mesh.n, "space")
    idx = _snap_to_cells(m.points, float(mesh.n ** 2))
    uniq, inverse = np.unique(idx, axis=0, return_inverse=True)
    merged = np.bincount(inverse.reshape(-1), weights=m.weights, minlength=uniq.shape[0])
    keep = merged > 0.0
    return DiscreteMeasure(m.dim, uniq[keep] / float(mesh.n ** 2), merged[keep])


def grid_project_xv(v: VelocityMeasure, mesh: Mesh) -> VelocityMeasure:
    """Phase-space discretization: positions to the dx-grid, velocities to
    the dv-grid, both by flooring; masses in one cell pair are summed.

    The flat distance (on R^d x R^d with the Euclidean product metric) to the
    input is at most ``2 sqrt(d) * dt * total_mass``.

    Raises
    ------
    AtomOutsideMesh
        Identifying whether the space or the velocity grid was exceeded.
    """
    if v.dim != mesh.dim:
        raise DimensionMismatch("measure and mesh dimension differ")
    if v.is_empty():
        return v
    _check_box(v.points, mesh.n, "space")
    _check_box(v.velocities, mesh.n, "velocity")
    idx_x = _snap_to_cells(v.points, float(mesh.n ** 2))
    idx_v = _snap_to_cells(v.velocities, float(mesh.n))
    key = np.hstack([idx_x, idx_v])
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    merged = np.bincount(inverse.reshape(-1), weights=v.weights, minlength=uniq.shape[0])
    keep = merged > 0.0
    uniq = uniq[keep]
    return VelocityMeasure(
        v.dim,
        uniq[:, :v.dim] / float(mesh.n ** 2),
        uniq[:, v.dim:] / float(mesh.n),
        merged[keep],
    )
