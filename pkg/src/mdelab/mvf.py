"""Measure vector fields, growth functions and source operators, plus the
numeric certification of the structural assumptions they must satisfy.

A measure vector field (MVF) sends a nonnegative measure on R^d to a measure
on R^d x R^d whose spatial marginal is the input; the velocity coordinate
encodes admissible transport directions. Constants are declared by the field
author and audited empirically, never inferred: the checkers below are
falsifiers, not estimators, though they do report the observed ratios.

Checks provided:

* ``check_marginal`` -- the push-forward condition, atom by atom.
* ``check_v1``       -- velocity support control
  ``max |v| <= C_S (1 + max |x|)`` over the output support.
* ``check_v2``       -- flat-metric Lipschitz continuity of the field, with
  the lifted distance taken on R^d x R^d under the Euclidean product metric.
* ``check_v3``       -- the pushed-forward continuity condition; the supremum
  over test functions of ``int psi(x + tau v) d(V[mu] - V[nu])`` equals the
  flat distance of the two measures pushed through ``(x, v) -> x + tau v``,
  which reduces the check to a single exact LP solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, EmptyMeasure
from .measures import DiscreteMeasure, VelocityMeasure
from .metrics import barycenter_split, flat_value, wasserstein1_1d

__all__ = [
    "MeasureVectorField",
    "GrowthFunction",
    "SourceOperator",
    "lipschitz_field_mvf",
    "barycenter_mvf",
    "broken_marginal_mvf",
    "constant_growth",
    "affine_growth",
    "mass_coupled_growth",
    "fixed_source",
    "scaled_source",
    "MarginalReport",
    "check_marginal",
    "check_v1",
    "check_v2",
    "check_v3",
]


@dataclass(frozen=True)
class MeasureVectorField:
    """Evaluation contract mapping a measure to its velocity measure.

    Attributes
    ----------
    name : str
    c_s : float
        Declared velocity-support constant.
    c_f : float
        Declared Lipschitz constant of the field.
    c_h : float
        Declared constant of the pushed-forward continuity condition.
    continuity_metric : str
        Metric in which the continuity constants are declared: ``"flat"``
        for general fields, ``"w1"`` for fields defined on probability
        measures whose bounds are proved in the 1-Wasserstein distance
        (the conservative setting). Checkers build their right-hand sides
        in this metric.
    """

    name: str
    c_s: float
    c_f: float
    c_h: float
    _eval: Callable[[DiscreteMeasure], VelocityMeasure]
    continuity_metric: str = "flat"

    def __call__(self, mu: DiscreteMeasure) -> VelocityMeasure:
        return self._eval(mu)

    def base_distance(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
        """Distance between inputs in the declared continuity metric."""
        if self.continuity_metric == "w1":
            return wasserstein1_1d(mu, nu)
        return flat_value(mu, nu)


@dataclass(frozen=True)
class GrowthFunction:
    """Growth/decay rate ``c(x, mu)``, possibly sign changing.

    ``c_b`` bounds ``|c|`` on the working compact; ``c_l`` is the declared
    Lipschitz constant in ``(x, mu)`` (flat metric in the measure slot).
    The callable is vectorized: it receives an ``(n, d)`` array of points and
    the current measure, and returns one rate per point.
    """

    name: str
    c_b: float
    c_l: float
    _fn: Callable[[np.ndarray, DiscreteMeasure], np.ndarray]

    def __call__(self, points: np.ndarray, mu: DiscreteMeasure) -> np.ndarray:
        vals = np.asarray(self._fn(points, mu), dtype=float).reshape(-1)
        if vals.shape[0] != points.shape[0]:
            raise ValueError("growth function must return one rate per point")
        return vals


@dataclass(frozen=True)
class SourceOperator:
    """Measure-valued source ``s[mu]``, nonnegative with support in B(0, R).

    ``lip`` is the declared flat-Lipschitz constant, ``radius`` the declared
    support radius R.
    """

    name: str
    lip: float
    radius: float
    _fn: Callable[[DiscreteMeasure], DiscreteMeasure]

    def __call__(self, mu: DiscreteMeasure) -> DiscreteMeasure:
        out = self._fn(mu)
        if np.any(out.weights < 0.0):
            raise ValueError("source operator produced a negative weight")
        return out


# -- built-in measure vector fields -------------------------------------------

def lipschitz_field_mvf(field, lip_constant: float, c_s: float,
                        name: str = "lipschitz_field") -> MeasureVectorField:
    """MVF attaching the single velocity ``v(x)`` to each atom: ``mu (x) delta_{v(x)}``.

    ``field`` must be vectorized (``(n, d) -> (n, d)``). ``lip_constant`` is a
    caller-asserted Lipschitz constant of the field on the working domain; the
    declared constants follow from it: the pushed-forward condition holds with
    ``C_H = lip`` and flat Lipschitz continuity with ``C_F = 1 + lip``.
    """

    def evaluate(mu: DiscreteMeasure) -> VelocityMeasure:
        if mu.is_empty():
            return VelocityMeasure.empty(mu.dim)
        vel = np.asarray(field(mu.points), dtype=float)
        if vel.shape != mu.points.shape:
            raise ValueError("velocity field must return one velocity per atom")
        return VelocityMeasure(mu.dim, mu.points, vel, mu.weights)

    return MeasureVectorField(name=name, c_s=float(c_s),
                              c_f=1.0 + float(lip_constant),
                              c_h=float(lip_constant), _eval=evaluate)


def barycenter_mvf() -> MeasureVectorField:
    """The 1D median-splitting MVF on probability measures.

    Mass strictly left of the median B moves at speed -1, strictly right at
    +1; an atom at B with positive mass is divided by the balancing fraction
    so each direction carries exactly half the total. The marginal condition
    holds by construction. All speeds are 1, so C_S = 1 covers the support
    condition; the field is non-expansive, giving C_F = 1 and C_H = 0.
    """

    def evaluate(mu: DiscreteMeasure) -> VelocityMeasure:
        split = barycenter_split(mu)
        pts = np.vstack([split.left.points, split.right.points])
        vel = np.vstack([np.full_like(split.left.points, -1.0),
                         np.full_like(split.right.points, 1.0)])
        w = np.concatenate([split.left.weights, split.right.weights])
        return VelocityMeasure(1, pts, vel, w)

    return MeasureVectorField(name="barycenter", c_s=1.0, c_f=1.0, c_h=0.0,
                              _eval=evaluate, continuity_metric="w1")


def broken_marginal_mvf(c_s: float = 1.0) -> MeasureVectorField:
    """Negative control: drops half of every atom's mass (marginal violated)."""

    def evaluate(mu: DiscreteMeasure) -> VelocityMeasure:
        if mu.is_empty():
            return VelocityMeasure.empty(mu.dim)
        return VelocityMeasure(mu.dim, mu.points, np.zeros_like(mu.points),
                               0.5 * mu.weights)

    return MeasureVectorField(name="broken_marginal", c_s=float(c_s), c_f=1.0,
                              c_h=0.0, _eval=evaluate)


# -- built-in growth functions and sources -------------------------------------

def constant_growth(kappa: float) -> GrowthFunction:
    """c(x, mu) = kappa."""
    return GrowthFunction(
        name=f"constant({kappa})", c_b=abs(float(kappa)), c_l=0.0,
        _fn=lambda pts, mu: np.full(pts.shape[0], float(kappa)))


def affine_growth(offset: float, slope, bound: float) -> GrowthFunction:
    """c(x, mu) = offset + slope . x; the bound holds on the working compact."""
    slope_vec = np.atleast_1d(np.asarray(slope, dtype=float))
    return GrowthFunction(
        name="affine", c_b=float(bound), c_l=float(np.linalg.norm(slope_vec)),
        _fn=lambda pts, mu: float(offset) + pts @ slope_vec)


def mass_coupled_growth(kappa: float, bound: float) -> GrowthFunction:
    """c(x, mu) = kappa (1 - total mass): the canonical measure-dependent rate.

    Lipschitz in the measure slot with constant |kappa|, since the mass gap
    of nonnegative measures is dominated by their flat distance.
    """
    return GrowthFunction(
        name=f"mass_coupled({kappa})", c_b=float(bound), c_l=abs(float(kappa)),
        _fn=lambda pts, mu: np.full(pts.shape[0], float(kappa) * (1.0 - mu.total_mass())))


def fixed_source(sigma: DiscreteMeasure, radius: float | None = None) -> SourceOperator:
    """s[mu] = sigma for a fixed nonnegative measure (Lipschitz constant 0)."""
    r = sigma.support_radius() if radius is None else float(radius)
    return SourceOperator(name="fixed", lip=0.0, radius=r, _fn=lambda mu: sigma)


def scaled_source(sigma: DiscreteMeasure, radius: float | None = None) -> SourceOperator:
    """s[mu] = total_mass(mu) * sigma.

    Flat-Lipschitz with constant ``|sigma|_TV`` because the mass gap of
    nonnegative measures is dominated by their flat distance.
    """
    r = sigma.support_radius() if radius is None else float(radius)
    return SourceOperator(name="scaled", lip=sigma.total_mass(), radius=r,
                          _fn=lambda mu: sigma.scaled(mu.total_mass()))


# -- certification --------------------------------------------------------------

@dataclass(frozen=True)
class MarginalReport:
    ok: bool
    mass_in: float
    mass_out: float
    max_weight_error: float
    message: str


def check_marginal(mvf: MeasureVectorField, mu: DiscreteMeasure) -> MarginalReport:
    """Verify the push-forward condition on one input, atom by atom.

    Passes iff the spatial marginal of ``mvf(mu)`` equals ``mu`` after
    canonicalization, with weights matching to 1e-12 relative. Failures are
    reported, not raised.
    """
    marginal = mvf(mu).spatial_marginal()
    target = mu.canonicalize()
    mass_in, mass_out = target.total_mass(), marginal.total_mass()
    scale = max(1.0, mass_in)
    if marginal.n_atoms != target.n_atoms or not np.array_equal(marginal.points, target.points):
        return MarginalReport(False, mass_in, mass_out, float("inf"),
                              f"support mismatch: {marginal.n_atoms} atoms vs "
                              f"{target.n_atoms}; mass deficit {mass_in - mass_out:.6g}")
    err = float(np.max(np.abs(marginal.weights - target.weights), initial=0.0))
    if err > 1e-12 * scale:
        return MarginalReport(False, mass_in, mass_out, err,
                              f"weight mismatch up to {err:.3g}; mass deficit "
                              f"{mass_in - mass_out:.6g}")
    return MarginalReport(True, mass_in, mass_out, err, "marginal condition holds")


def check_v1(mvf: MeasureVectorField, mu: DiscreteMeasure,
             c_s: float | None = None):
    """Velocity support control: returns ``(ok, ratio)``.

    ``ratio = max|v| / (1 + max|x|)`` over the output support; the check
    passes iff it does not exceed the declared C_S.
    """
    v = mvf(mu)
    if v.is_empty():
        raise EmptyMeasure("check_v1 needs a nonempty velocity measure")
    bound = mvf.c_s if c_s is None else float(c_s)
    mask = v.weights > 0.0
    vmax = float(np.max(np.linalg.norm(v.velocities[mask], axis=1)))
    xmax = float(np.max(np.linalg.norm(v.points[mask], axis=1)))
    ratio = vmax / (1.0 + xmax)
    return ratio <= bound + 1e-12, ratio


def check_v2(mvf: MeasureVectorField, mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Lipschitz continuity of the field: returns ``(lhs, rhs, ratio)``.

    ``lhs`` is the flat distance of the two velocity measures on R^d x R^d
    (Euclidean metric on the stacked coordinates), ``rhs = C_F`` times the
    distance of the inputs in the field's declared continuity metric (flat
    by default, W1 for fields declared on probability measures), and
    ``ratio = lhs / base`` is the empirical Lipschitz estimate (nan when the
    inputs coincide).
    """
    if mu.dim != nu.dim:
        raise DimensionMismatch("inputs of different dimension")
    lhs = flat_value(mvf(mu).as_phase_measure(), mvf(nu).as_phase_measure())
    base = mvf.base_distance(mu, nu)
    rhs = mvf.c_f * base
    ratio = lhs / base if base > 0.0 else float("nan")
    return lhs, rhs, ratio


def check_v3(mvf: MeasureVectorField, mu: DiscreteMeasure, nu: DiscreteMeasure,
             tau: float):
    """Pushed-forward continuity condition: returns ``(lhs, rhs, gap)``.

    ``lhs`` is the flat distance of the two velocity measures pushed through
    ``(x, v) -> x + tau v``; because the flat norm is a supremum over test
    functions, this equals the supremum in the condition, so one exact LP
    solve settles the check. ``rhs = (1 + C_H tau)`` times the distance of
    the inputs in the field's declared continuity metric, and ``gap = rhs -
    lhs`` should stay above -1e-9 when the declared constant is honest.
    """
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    if mu.dim != nu.dim:
        raise DimensionMismatch("inputs of different dimension")
    lhs = flat_value(mvf(mu).moved(tau), mvf(nu).moved(tau))
    rhs = (1.0 + mvf.c_h * tau) * mvf.base_distance(mu, nu)
    return lhs, rhs, rhs - lhs
