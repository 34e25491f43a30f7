"""Exact flat (bounded-Lipschitz) distance between nonnegative atomic
measures, its dual certificate, and 1D Wasserstein machinery.

The flat distance is computed from the partial-transport characterization

    inf ||mu - mu~||_TV + ||nu - nu~||_TV + W_1(mu~, nu~)

over dominated submeasures of equal mass. On atoms this is a finite linear
program: transport arcs priced at ``min(|x_i - y_j|, 2)`` plus one unit-cost
waste arc per atom. Capping the arc cost at 2 is lossless, since any plan
shipping mass at cost above 2 is strictly improved by removing that mass on
both sides. The dual program maximizes ``int psi d(mu - nu)`` over functions
with ``|psi| <= 1`` and Lipschitz constant 1 on the joint support; any such
psi extends to all of R^d with the same norm (McShane extension), so the two
optima coincide and serve as independent cross-checks.

Both programs are solved with HiGHS via ``scipy.optimize.linprog``; all
distance evaluations are pure functions without shared state.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import DimensionMismatch, EmptyMeasure, MassMismatch, NotProbability
from .measures import DiscreteMeasure, write_text_atomic

__all__ = [
    "TransportPlan",
    "DualCertificate",
    "BarycenterSplit",
    "flat_distance",
    "flat_value",
    "flat_distance_dual",
    "wasserstein1_1d",
    "quantile",
    "barycenter_split",
    "plan_to_csv_text",
    "plan_to_csv",
]

REMOVAL_COST = 2.0  # per unit mass: one unit removed on each side
_MASS_RTOL = 1e-12


@dataclass(frozen=True)
class TransportPlan:
    """A feasible (optimal, when produced by :func:`flat_distance`) partial
    transport plan between two atomic measures.

    ``entries[i, j]`` is the mass shipped from atom i of mu to atom j of nu;
    ``source_slack[i]`` and ``sink_slack[j]`` are the removed masses. Row and
    column sums plus slacks reproduce the respective atom weights.
    """

    rows: int
    cols: int
    entries: np.ndarray
    source_slack: np.ndarray
    sink_slack: np.ndarray

    def marginal_residuals(self, mu: DiscreteMeasure, nu: DiscreteMeasure):
        """Max absolute violation of the two marginal identities."""
        shipped_out = self.entries.sum(axis=1) if self.cols else np.zeros(self.rows)
        shipped_in = self.entries.sum(axis=0) if self.rows else np.zeros(self.cols)
        res_mu = np.max(np.abs(shipped_out + self.source_slack - mu.weights), initial=0.0)
        res_nu = np.max(np.abs(shipped_in + self.sink_slack - nu.weights), initial=0.0)
        return float(res_mu), float(res_nu)


@dataclass(frozen=True)
class DualCertificate:
    """A test function psi sampled on the union support of two measures.

    Feasibility means ``|psi| <= 1`` everywhere and ``|psi(p) - psi(q)| <=
    |p - q|`` for every pair of support points, i.e. psi lies in the unit
    ball of the bounded-Lipschitz norm restricted to the support.
    """

    points: np.ndarray  # (k, d) union support
    values: np.ndarray  # (k,)

    def max_violation(self) -> float:
        """Largest constraint violation (0 for a feasible certificate)."""
        worst = max(0.0, float(np.max(np.abs(self.values), initial=0.0)) - 1.0)
        k = self.points.shape[0]
        if k > 1:
            diff = np.abs(self.values[:, None] - self.values[None, :])
            dist = np.linalg.norm(self.points[:, None, :] - self.points[None, :, :], axis=-1)
            worst = max(worst, float(np.max(diff - dist)))
        return worst


@dataclass(frozen=True)
class BarycenterSplit:
    """Equal-mass decomposition of a 1D probability measure at its median.

    ``point`` is the median B, ``fraction`` the share of the median atom
    assigned to the left part (None when no atom sits at B, in which case
    the parts already balance). ``left + right`` reassembles the measure and
    each part carries mass 1/2.
    """

    point: float
    fraction: float | None
    left: DiscreteMeasure
    right: DiscreteMeasure


def _require_same_dim(mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
    if mu.dim != nu.dim:
        raise DimensionMismatch(f"dimensions differ: {mu.dim} vs {nu.dim}")


def _canonical_key(m: DiscreteMeasure):
    return (m.n_atoms, m.points.tobytes(), m.weights.tobytes())


def _distance_matrix(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.linalg.norm(p[:, None, :] - q[None, :, :], axis=-1)


def _solve_lp(c, a_ub, b_ub, bounds):
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed (status {res.status}): {res.message}")
    return res


def flat_distance(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Flat (bounded-Lipschitz) distance and an optimal transport plan.

    Minimizes ``sum_ij T_ij min(|x_i - y_j|, 2) + sum_i s_i + sum_j r_j``
    over plans with nonnegative entries whose row (column) sums plus slacks
    equal the atom weights of mu (nu). The value is symmetric, vanishes at
    mu = nu, and equals the total-variation difference whenever one measure
    dominates the other atomwise.
    """
    _require_same_dim(mu, nu)
    mu_c = mu.canonicalize()
    nu_c = nu.canonicalize()
    # Solve in a canonical argument order so the value is exactly symmetric.
    if _canonical_key(nu_c) < _canonical_key(mu_c):
        value, plan = flat_distance(nu, mu)
        return value, TransportPlan(plan.cols, plan.rows, plan.entries.T.copy(),
                                    plan.sink_slack, plan.source_slack)
    n, m = mu_c.n_atoms, nu_c.n_atoms
    a, b = mu_c.weights, nu_c.weights
    if n == 0 or m == 0:
        plan = TransportPlan(n, m, np.zeros((n, m)), a.copy(), b.copy())
        return mu_c.total_mass() + nu_c.total_mass(), plan
    cost = np.minimum(_distance_matrix(mu_c.points, nu_c.points), REMOVAL_COST)
    # Substitute the slacks out: minimize sum (cost_ij - 2) T_ij + |mu| + |nu|
    # subject to row sums <= a, column sums <= b.
    c = (cost - REMOVAL_COST).ravel()
    rows_i = np.repeat(np.arange(n), m)
    cols_j = np.tile(np.arange(m), n)
    var = np.arange(n * m)
    a_ub = sparse.coo_matrix(
        (np.ones(2 * n * m), (np.concatenate([rows_i, n + cols_j]),
                              np.concatenate([var, var]))),
        shape=(n + m, n * m),
    ).tocsr()
    b_ub = np.concatenate([a, b])
    res = _solve_lp(c, a_ub, b_ub, bounds=(0, None))
    entries = np.clip(res.x.reshape(n, m), 0.0, None)
    source_slack = np.clip(a - entries.sum(axis=1), 0.0, None)
    sink_slack = np.clip(b - entries.sum(axis=0), 0.0, None)
    value = float(res.fun) + mu_c.total_mass() + nu_c.total_mass()
    return max(value, 0.0), TransportPlan(n, m, entries, source_slack, sink_slack)


def flat_value(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Flat distance without the plan."""
    return flat_distance(mu, nu)[0]


def flat_distance_dual(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Flat distance via the dual program, with an optimal certificate.

    Maximizes ``sum psi(x_i) w_i(mu) - sum psi(y_j) w_j(nu)`` subject to
    ``|psi| <= 1`` pointwise and all pairwise Lipschitz-1 constraints on the
    union support. No constraint pruning is attempted: instances are desk
    scale and this routine is the trusted oracle, so simplicity wins.
    """
    _require_same_dim(mu, nu)
    mu_c = mu.canonicalize()
    nu_c = nu.canonicalize()
    stacked = np.vstack([mu_c.points, nu_c.points])
    signed = np.concatenate([mu_c.weights, -nu_c.weights])
    if stacked.shape[0] == 0:
        return 0.0, DualCertificate(stacked, signed)
    support, inverse = np.unique(stacked, axis=0, return_inverse=True)
    coeff = np.zeros(support.shape[0])
    np.add.at(coeff, inverse.reshape(-1), signed)
    k = support.shape[0]
    if k == 1:
        value = abs(coeff[0])
        return float(value), DualCertificate(support, np.array([np.sign(coeff[0])]))
    iu, ju = np.triu_indices(k, 1)
    dist = np.linalg.norm(support[iu] - support[ju], axis=1)
    npairs = iu.size
    # psi_i - psi_j <= d_ij and psi_j - psi_i <= d_ij for every pair.
    rows = np.repeat(np.arange(2 * npairs), 2)
    plus = np.concatenate([iu, ju])
    minus = np.concatenate([ju, iu])
    cols = np.stack([plus, minus], axis=1).ravel()
    vals = np.tile([1.0, -1.0], 2 * npairs)
    a_ub = sparse.coo_matrix((vals, (rows, cols)), shape=(2 * npairs, k)).tocsr()
    b_ub = np.concatenate([dist, dist])
    res = _solve_lp(-coeff, a_ub, b_ub, bounds=(-1.0, 1.0))
    return float(-res.fun), DualCertificate(support, res.x)


def _sorted_atoms_1d(m: DiscreteMeasure):
    c = m.canonicalize()
    if c.is_empty():
        raise EmptyMeasure("operation undefined for an empty measure")
    return c.points[:, 0], c.weights


def quantile(mu: DiscreteMeasure, y: float) -> float:
    """Generalized inverse CDF ``F^{-1}(y) = inf{x : F(x) > y}`` for d = 1.

    The total mass is normalized to 1 internally; cumulative weights are
    compared with strict inequality, exactly as the generalized inverse
    demands.
    """
    if mu.dim != 1:
        raise DimensionMismatch("quantile is defined for 1D measures")
    if not 0.0 <= y < 1.0:
        raise ValueError("quantile level must lie in [0, 1)")
    xs, ws = _sorted_atoms_1d(mu)
    cum = np.cumsum(ws) / np.sum(ws)
    idx = min(int(np.searchsorted(cum, y, side="right")), xs.size - 1)
    return float(xs[idx])


def wasserstein1_1d(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact 1-Wasserstein distance between equal-mass 1D measures.

    Computes ``int_0^1 |F^{-1}(y) - G^{-1}(y)| dy`` in closed form by merging
    the two quantile step functions; for non-unit masses both measures are
    normalized and the result is scaled back by the common mass.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise DimensionMismatch("wasserstein1_1d needs 1D measures")
    xa, wa = _sorted_atoms_1d(mu)
    xb, wb = _sorted_atoms_1d(nu)
    ma, mb = float(np.sum(wa)), float(np.sum(wb))
    if abs(ma - mb) > _MASS_RTOL * max(ma, mb):
        raise MassMismatch(f"total masses differ: {ma} vs {mb}")
    common = 0.5 * (ma + mb)
    ca = np.cumsum(wa) / ma
    cb = np.cumsum(wb) / mb
    cuts = np.unique(np.concatenate([[0.0], ca[:-1], cb[:-1], [1.0]]))
    cuts = cuts[(cuts >= 0.0) & (cuts <= 1.0)]
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    ia = np.minimum(np.searchsorted(ca, mids, side="right"), xa.size - 1)
    ib = np.minimum(np.searchsorted(cb, mids, side="right"), xb.size - 1)
    gaps = np.abs(xa[ia] - xb[ib])
    return common * float(np.dot(np.diff(cuts), gaps))


def barycenter_split(mu: DiscreteMeasure) -> BarycenterSplit:
    """Split a 1D probability measure at its median into equal halves.

    The median is ``B = sup{x : F(x) <= 1/2}``; the atom at B (which exists
    for atomic probability measures) is divided so that the left part closes
    at exactly mass 1/2: a share ``(1/2 - F(B-)) / mu{B}`` stays left, the
    rest goes right. Atoms strictly left (right) of B belong to the left
    (right) part wholesale.
    """
    if mu.dim != 1:
        raise DimensionMismatch("barycenter_split is defined for 1D measures")
    xs, ws = _sorted_atoms_1d(mu)
    mass = float(np.sum(ws))
    if abs(mass - 1.0) > _MASS_RTOL:
        raise NotProbability(f"total mass {mass} is not 1")
    cum = np.cumsum(ws)
    idx = min(int(np.searchsorted(cum, 0.5, side="right")), xs.size - 1)
    b_point = float(xs[idx])
    below = float(cum[idx - 1]) if idx > 0 else 0.0
    w_b = float(ws[idx])
    fraction = (0.5 - below) / w_b
    left_pts = np.concatenate([xs[:idx], [b_point]]).reshape(-1, 1)
    left_w = np.concatenate([ws[:idx], [fraction * w_b]])
    right_pts = np.concatenate([[b_point], xs[idx + 1:]]).reshape(-1, 1)
    right_w = np.concatenate([[(1.0 - fraction) * w_b], ws[idx + 1:]])
    left = DiscreteMeasure(1, left_pts, np.clip(left_w, 0.0, None)).canonicalize()
    right = DiscreteMeasure(1, right_pts, np.clip(right_w, 0.0, None)).canonicalize()
    return BarycenterSplit(b_point, fraction, left, right)


def plan_to_csv_text(plan: TransportPlan, mu: DiscreteMeasure, nu: DiscreteMeasure,
                     threshold: float = 1e-15) -> str:
    """Dump a plan as ``i,j,mass,cost`` rows; removals carry a ``-`` on the
    missing side and unit cost."""
    mu_c, nu_c = mu.canonicalize(), nu.canonicalize()
    out = io.StringIO()
    out.write("i,j,mass,cost\n")
    if plan.rows and plan.cols:
        cost = np.minimum(_distance_matrix(mu_c.points, nu_c.points), REMOVAL_COST)
        for i in range(plan.rows):
            for j in range(plan.cols):
                if plan.entries[i, j] > threshold:
                    out.write(f"{i},{j},{plan.entries[i, j]:.17g},{cost[i, j]:.17g}\n")
    for i in range(plan.rows):
        if plan.source_slack[i] > threshold:
            out.write(f"{i},-,{plan.source_slack[i]:.17g},1\n")
    for j in range(plan.cols):
        if plan.sink_slack[j] > threshold:
            out.write(f"-,{j},{plan.sink_slack[j]:.17g},1\n")
    return out.getvalue()


def plan_to_csv(plan: TransportPlan, mu: DiscreteMeasure, nu: DiscreteMeasure,
                path) -> None:
    write_text_atomic(path, plan_to_csv_text(plan, mu, nu))
