"""Exception types shared across the package."""

from __future__ import annotations


class MdelabError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(MdelabError):
    """Two measures (or a measure and a map) disagree on the ambient dimension."""


class EmptyMeasure(MdelabError):
    """An operation that needs at least one atom received an empty measure."""


class MassMismatch(MdelabError):
    """Equal total masses were required but differ beyond tolerance."""


class NotProbability(MdelabError):
    """A probability measure (total mass 1 within 1e-12) was required."""


class NonMeshTime(MdelabError):
    """A time argument must lie on the mesh t_l = l/N but does not."""


class InitialDataIdentical(MdelabError):
    """Continuity ratios are undefined: the initial measures coincide."""


class ConfigError(MdelabError):
    """A run configuration file could not be parsed or is incomplete."""


class AtomOutsideMesh(MdelabError):
    """An atom fell outside the mesh box; the caller must raise N.

    Attributes
    ----------
    grid : str
        Which grid was exceeded, ``"space"`` or ``"velocity"``.
    atom_index : int
        Index of the first offending atom.
    coordinate : float
        The offending coordinate value.
    limit : float
        The box half-width N that was exceeded.
    time_index : int or None
        Index of the failing time step, filled in by the solver.
    suggested_n : int or None
        A priori admissible mesh size, filled in by the solver.
    """

    def __init__(self, grid, atom_index, coordinate, limit,
                 time_index=None, suggested_n=None):
        self.grid = grid
        self.atom_index = atom_index
        self.coordinate = coordinate
        self.limit = limit
        self.time_index = time_index
        self.suggested_n = suggested_n
        super().__init__(self._message())

    def _message(self):
        msg = (f"atom {self.atom_index} leaves the {self.grid} grid: "
               f"|{self.coordinate:.6g}| > {self.limit:.6g}")
        if self.time_index is not None:
            msg += f" at time step {self.time_index}"
        if self.suggested_n is not None:
            msg += f"; rerun with N >= {self.suggested_n}"
        return msg
