"""Flat metric (primal and dual LPs), 1D Wasserstein and the median split."""

import numpy as np
import pytest

from mdelab import (DimensionMismatch, DiscreteMeasure, EmptyMeasure,
                    MassMismatch, NotProbability, barycenter_split,
                    flat_distance, flat_distance_dual, flat_value, quantile,
                    wasserstein1_1d)
from mdelab.metrics import plan_to_csv_text

from oracles import (balanced_w1_lp, random_equal_mass_pair_1d,
                     random_measure, random_prob_measure_1d)


def dirac(x, w=1.0):
    return DiscreteMeasure.dirac(np.atleast_1d(x), w)


# -- flat distance: pinned values ------------------------------------------------

def test_flat_distance_known_values():
    assert flat_value(dirac(0.0), dirac(1.0)) == pytest.approx(1.0, abs=1e-12)
    assert flat_value(dirac(0.0), dirac(5.0)) == pytest.approx(2.0, abs=1e-12)
    assert flat_value(dirac(0.0, 2.0), dirac(0.0)) == pytest.approx(1.0, abs=1e-12)


def test_flat_distance_identity_and_empty():
    m = DiscreteMeasure.from_atoms([([0.3], 1.2), ([1.7], 0.4)])
    assert flat_value(m, m) == pytest.approx(0.0, abs=1e-12)
    assert flat_value(m, DiscreteMeasure.empty(1)) == pytest.approx(
        m.total_mass(), abs=1e-12)


def test_flat_distance_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        flat_value(dirac(0.0), DiscreteMeasure.dirac([0.0, 0.0]))


def test_flat_distance_plan_is_feasible():
    rng = np.random.default_rng(1)
    for _ in range(10):
        mu = random_measure(rng, 2, max_atoms=6)
        nu = random_measure(rng, 2, max_atoms=6)
        value, plan = flat_distance(mu, nu)
        res_mu, res_nu = plan.marginal_residuals(mu.canonicalize(),
                                                 nu.canonicalize())
        assert res_mu < 1e-9 and res_nu < 1e-9
        assert np.all(plan.entries >= 0.0)
        assert value >= 0.0


def test_flat_distance_exactly_symmetric():
    rng = np.random.default_rng(2)
    for _ in range(10):
        mu = random_measure(rng, 1, max_atoms=8)
        nu = random_measure(rng, 1, max_atoms=8)
        assert flat_value(mu, nu) == flat_value(nu, mu)


def test_flat_distance_triangle_inequality():
    rng = np.random.default_rng(3)
    for _ in range(15):
        a = random_measure(rng, 2, max_atoms=6)
        b = random_measure(rng, 2, max_atoms=6)
        c = random_measure(rng, 2, max_atoms=6)
        assert flat_value(a, c) <= flat_value(a, b) + flat_value(b, c) + 1e-9


def test_flat_distance_bounded_by_total_masses():
    rng = np.random.default_rng(4)
    for _ in range(10):
        mu = random_measure(rng, 3, max_atoms=5)
        nu = random_measure(rng, 3, max_atoms=5)
        assert flat_value(mu, nu) <= mu.total_mass() + nu.total_mass() + 1e-12


# -- dual program -----------------------------------------------------------------

def test_dual_known_values():
    value, cert = flat_distance_dual(dirac(0.0), dirac(1.0))
    assert value == pytest.approx(1.0, abs=1e-12)
    assert cert.max_violation() <= 1e-9
    value2, _ = flat_distance_dual(dirac(0.0), dirac(0.0))
    assert value2 == pytest.approx(0.0, abs=1e-12)
    value3, cert3 = flat_distance_dual(dirac(0.0, 2.0), dirac(0.0))
    assert value3 == pytest.approx(1.0, abs=1e-12)
    assert cert3.values[0] == pytest.approx(1.0, abs=1e-9)


def test_strong_duality_randomized():
    rng = np.random.default_rng(5)
    for dim in (1, 2, 3):
        for _ in range(15):
            mu = random_measure(rng, dim)
            nu = random_measure(rng, dim)
            primal = flat_value(mu, nu)
            dual, cert = flat_distance_dual(mu, nu)
            assert abs(primal - dual) <= 1e-9
            assert cert.max_violation() <= 1e-7


# -- 1D Wasserstein ----------------------------------------------------------------

def test_wasserstein_pinned_example():
    mu = DiscreteMeasure.from_atoms([([0.0], 0.5), ([1.0], 0.5)])
    nu = DiscreteMeasure.from_atoms([([0.0], 0.5), ([2.0], 0.5)])
    assert wasserstein1_1d(mu, nu) == pytest.approx(0.5, abs=1e-12)
    assert wasserstein1_1d(mu, mu) == 0.0
    assert wasserstein1_1d(dirac(-0.3), dirac(1.9)) == pytest.approx(2.2, abs=1e-12)


def test_wasserstein_errors():
    with pytest.raises(MassMismatch):
        wasserstein1_1d(dirac(0.0, 1.0), dirac(0.0, 2.0))
    with pytest.raises(EmptyMeasure):
        wasserstein1_1d(DiscreteMeasure.empty(1), dirac(0.0))


def test_wasserstein_matches_balanced_lp():
    rng = np.random.default_rng(6)
    for _ in range(25):
        mu, nu = random_equal_mass_pair_1d(rng)
        assert wasserstein1_1d(mu, nu) == pytest.approx(
            balanced_w1_lp(mu, nu), abs=1e-9)


def test_flat_equals_wasserstein_when_close_and_balanced():
    # equal masses, all pairwise gaps below the removal threshold
    rng = np.random.default_rng(7)
    for _ in range(15):
        mu = random_measure(rng, 1, max_atoms=6, box=0.9)
        nu = random_measure(rng, 1, max_atoms=6, box=0.9)
        nu = nu.scaled(mu.total_mass() / nu.total_mass())
        assert flat_value(mu, nu) == pytest.approx(
            wasserstein1_1d(mu, nu), abs=1e-9)


# -- quantiles and the median split --------------------------------------------------

def test_quantile_examples():
    m = DiscreteMeasure.from_atoms([([0.0], 0.5), ([1.0], 0.5)])
    assert quantile(m, 0.25) == 0.0
    assert quantile(m, 0.5) == 1.0
    assert quantile(dirac(3.0), 0.0) == 3.0
    assert quantile(dirac(3.0), 0.99) == 3.0
    with pytest.raises(EmptyMeasure):
        quantile(DiscreteMeasure.empty(1), 0.5)


def test_quantile_is_monotone():
    rng = np.random.default_rng(8)
    m = random_prob_measure_1d(rng)
    levels = np.sort(rng.uniform(0, 1, 20))
    vals = [quantile(m, y) for y in levels]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_barycenter_split_examples():
    s = barycenter_split(dirac(0.0))
    assert s.point == 0.0 and s.fraction == pytest.approx(0.5)
    assert s.left.total_mass() == pytest.approx(0.5, abs=1e-15)
    assert s.right.total_mass() == pytest.approx(0.5, abs=1e-15)

    m = DiscreteMeasure.from_atoms([([0.0], 0.25), ([1.0], 0.75)])
    s = barycenter_split(m)
    assert s.point == 1.0 and s.fraction == pytest.approx(1.0 / 3.0)
    assert np.allclose(s.left.points.ravel(), [0.0, 1.0])
    assert np.allclose(s.left.weights, [0.25, 0.25])
    assert np.allclose(s.right.points.ravel(), [1.0])
    assert np.allclose(s.right.weights, [0.5])

    m2 = DiscreteMeasure.from_atoms([([-1.0], 0.5), ([1.0], 0.5)])
    s2 = barycenter_split(m2)
    assert s2.point == 1.0 and s2.fraction == pytest.approx(0.0)
    assert np.allclose(s2.left.points.ravel(), [-1.0])
    assert np.allclose(s2.right.points.ravel(), [1.0])


def test_barycenter_split_invariants_randomized():
    rng = np.random.default_rng(9)
    for _ in range(30):
        m = random_prob_measure_1d(rng)
        s = barycenter_split(m)
        assert s.left.total_mass() == pytest.approx(0.5, abs=1e-12)
        assert s.right.total_mass() == pytest.approx(0.5, abs=1e-12)
        assert np.all(s.left.points[:, 0] <= s.point + 1e-15)
        assert np.all(s.right.points[:, 0] >= s.point - 1e-15)
        rebuilt = DiscreteMeasure(
            1, np.vstack([s.left.points, s.right.points]),
            np.concatenate([s.left.weights, s.right.weights])).canonicalize()
        target = m.canonicalize()
        assert np.array_equal(rebuilt.points, target.points)
        assert np.allclose(rebuilt.weights, target.weights, rtol=1e-12)


def test_barycenter_split_rejects_non_probability():
    with pytest.raises(NotProbability):
        barycenter_split(dirac(0.0, 2.0))


def test_decomposition_lemma_randomized():
    rng = np.random.default_rng(10)
    for _ in range(30):
        mu = random_prob_measure_1d(rng)
        nu = random_prob_measure_1d(rng)
        sm, sn = barycenter_split(mu), barycenter_split(nu)
        whole = wasserstein1_1d(mu, nu)
        parts = (wasserstein1_1d(sm.left, sn.left)
                 + wasserstein1_1d(sm.right, sn.right))
        assert whole == pytest.approx(parts, abs=1e-9)


# -- plan export ----------------------------------------------------------------------

def test_plan_csv_includes_removals():
    value, plan = flat_distance(dirac(0.0, 2.0), dirac(0.0))
    text = plan_to_csv_text(plan, dirac(0.0, 2.0), dirac(0.0))
    lines = text.strip().splitlines()
    assert lines[0] == "i,j,mass,cost"
    assert any(",-," in ln for ln in lines[1:])
