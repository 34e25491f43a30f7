"""Lattice scheme: single steps, trajectories, mass laws and confinement."""

import math

import numpy as np
import pytest

from mdelab import (AtomOutsideMesh, DiscreteMeasure, Mesh, Scenario,
                    constant_growth, convergence_study, fixed_source,
                    flat_value, init, lipschitz_field_mvf, solve, step)

from oracles import random_measure


def dirac(x, w=1.0):
    return DiscreteMeasure.dirac(np.atleast_1d(x), w)


def const_field(value):
    return lambda pts: np.full_like(pts, value)


def make_scenario(velocity=0.0, lip=0.0, kappa=None, source=None, mu0=None,
                  horizon=1.0, c_s=1.0, field=None):
    mvf = lipschitz_field_mvf(field or const_field(velocity), lip, c_s=c_s)
    growth = None if kappa is None else constant_growth(kappa)
    return Scenario("test", mvf, growth, source,
                    mu0 if mu0 is not None else dirac(0.0), horizon)


# -- init -------------------------------------------------------------------------

def test_init_examples():
    sc = make_scenario(mu0=dirac(0.0))
    assert np.allclose(init(sc, 4).points, [[0.0]])
    sc2 = make_scenario(mu0=dirac(0.3))
    assert np.allclose(init(sc2, 2).points, [[0.25]])
    sc3 = make_scenario(mu0=DiscreteMeasure.empty(1))
    assert init(sc3, 4).is_empty()


def test_init_outside_mesh_suggests_n():
    sc = make_scenario(mu0=dirac(40.0))
    with pytest.raises(AtomOutsideMesh) as err:
        init(sc, 4)
    assert err.value.suggested_n is not None
    assert err.value.suggested_n >= 40


# -- single steps -----------------------------------------------------------------

def test_step_pure_growth_single_atom():
    sc = make_scenario(kappa=0.7)
    mesh = Mesh(4, 1, 1.0)
    tau = 0.2
    out = step(dirac(0.0), 0.0, tau, sc, mesh)
    assert out.n_atoms == 1
    assert out.weights[0] == pytest.approx(math.exp(0.7 * tau), rel=1e-14)
    assert np.allclose(out.points, [[0.0]])


def test_step_unit_velocity_moves_atom():
    sc = make_scenario(velocity=1.0)
    mesh = Mesh(2, 1, 1.0)
    out = step(dirac(0.0), 0.0, mesh.dt, sc, mesh)
    assert np.allclose(out.points, [[0.5]])
    assert out.weights[0] == pytest.approx(1.0, abs=0)


def test_step_source_only():
    src = fixed_source(dirac(0.0))
    sc = make_scenario(source=src, mu0=DiscreteMeasure.empty(1))
    mesh = Mesh(4, 1, 1.0)
    tau = 0.25
    out = step(DiscreteMeasure.empty(1), 0.0, tau, sc, mesh)
    assert out.n_atoms == 1
    assert out.weights[0] == pytest.approx(tau, abs=0)
    assert np.allclose(out.points, [[0.0]])


def test_step_is_positively_homogeneous_in_state():
    rng = np.random.default_rng(0)
    sc = make_scenario(field=lambda p: 0.5 * p + 0.25, lip=0.5, c_s=1.0)
    mesh = Mesh(4, 1, 1.0)
    state = random_measure(rng, 1, max_atoms=6, box=2.0)
    one = step(state, 0.0, mesh.dt, sc, mesh)
    two = step(state.scaled(2.0), 0.0, mesh.dt, sc, mesh)
    assert np.array_equal(one.points, two.points)
    assert np.allclose(two.weights, 2.0 * one.weights, rtol=0, atol=0)


def test_step_rejects_bad_tau():
    sc = make_scenario()
    mesh = Mesh(4, 1, 1.0)
    with pytest.raises(ValueError):
        step(dirac(0.0), 0.0, 0.5, sc, mesh)


# -- trajectories and mass laws ------------------------------------------------------

def test_mass_law_pure_growth():
    sc = make_scenario(kappa=0.5, mu0=dirac(0.25))
    traj = solve(sc, 8)
    expected = traj.mass[0] * np.exp(0.5 * traj.times)
    assert np.max(np.abs(traj.mass - expected) / expected) < 1e-12


def test_mass_law_conservative():
    mu0 = DiscreteMeasure.from_atoms([([0.25], 0.6), ([-0.5], 0.4)])
    sc = make_scenario(velocity=1.0, mu0=mu0)
    traj = solve(sc, 8)
    assert np.max(np.abs(traj.mass - traj.mass[0])) < 1e-12


def test_mass_law_pure_source():
    src = fixed_source(dirac(0.0, 0.5))
    sc = make_scenario(source=src, mu0=dirac(0.5))
    traj = solve(sc, 8)
    expected = traj.mass[0] + 0.5 * traj.times
    assert np.max(np.abs(traj.mass - expected)) < 1e-12


def test_nonnegativity_under_strong_decay():
    src = fixed_source(dirac(0.25, 0.3))
    sc = make_scenario(velocity=0.5, kappa=-5.0, source=src,
                       mu0=DiscreteMeasure.from_atoms([([0.0], 1.0), ([0.5], 1.0)]))
    traj = solve(sc, 8)
    for state in traj.states:
        assert np.all(state.weights >= 0.0)
    assert traj.mass[-1] < traj.mass[0]  # decay really happened


def test_support_and_velocity_confinement():
    mu0 = DiscreteMeasure.from_atoms([([0.25], 0.6), ([-0.5], 0.4)])
    sc = make_scenario(field=lambda p: 0.5 * p, lip=0.5, c_s=0.5, mu0=mu0)
    bound = sc.support_bound()
    vbound = sc.velocity_bound()
    for n in (4, 8, 16):
        traj = solve(sc, n)
        assert np.all(traj.support_radius <= bound + 1e-9)
        for state in traj.states:
            vel = sc.mvf(state)
            assert vel.max_speed() <= vbound + 1e-9


def test_solve_aborts_with_failing_step_and_suggestion():
    # outward drift at snapped speed 1.5 leaves the N = 2 box mid-run
    sc = make_scenario(velocity=1.9, c_s=2.0, mu0=dirac(0.5), horizon=2.0)
    with pytest.raises(AtomOutsideMesh) as err:
        solve(sc, 2)
    assert err.value.grid == "space"
    assert err.value.time_index == 3
    assert err.value.suggested_n > 2


def test_lipschitz_in_time_constant_stable_across_n():
    mu0 = DiscreteMeasure.from_atoms([([0.25], 0.6), ([-0.5], 0.4)])
    sc = make_scenario(velocity=1.0, kappa=0.5, mu0=mu0)
    fitted = {}
    for n in (4, 8, 16):
        traj = solve(sc, n)
        best = 0.0
        states = list(zip(traj.times, traj.states))
        for (t_a, s_a), (t_b, s_b) in zip(states, states[1:]):
            best = max(best, flat_value(s_a, s_b) / (t_b - t_a))
        fitted[n] = best
    lo, hi = min(fitted.values()), max(fitted.values())
    assert hi <= 2.0 * lo  # single constant within a factor two across meshes


def test_mass_bounded_uniformly():
    mu0 = DiscreteMeasure.from_atoms([([0.25], 0.6), ([-0.5], 0.4)])
    sc = make_scenario(velocity=1.0, kappa=0.5, mu0=mu0)
    cap = mu0.total_mass() * math.exp(0.5 * sc.horizon) + 1e-9
    for n in (4, 8, 16):
        assert np.max(solve(sc, n).mass) <= cap


def test_record_intermediate_samples():
    sc = make_scenario(velocity=1.0, mu0=dirac(0.0))
    traj = solve(sc, 4, record_intermediate=True)
    assert len(traj.intermediate_times) == traj.mesh.n_steps
    mid = traj.intermediate_states[0]
    assert np.allclose(mid.points, [[0.125]])  # half step at speed one


def test_trajectory_csv_round_trip_shape(tmp_path):
    sc = make_scenario(velocity=1.0, mu0=dirac(0.0))
    traj = solve(sc, 4)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,atom_index,x0,weight"
    assert len(lines) == 1 + sum(s.n_atoms for s in traj.states)
    dpath = tmp_path / "diag.csv"
    traj.diagnostics_to_csv(dpath)
    assert dpath.read_text().splitlines()[0] == "t,mass,support_radius,atom_count"


# -- convergence study ------------------------------------------------------------------

def test_convergence_study_identical_resolutions():
    sc = make_scenario(velocity=1.0, mu0=dirac(0.25))
    a = solve(sc, 4).final_state()
    b = solve(sc, 4).final_state()
    assert flat_value(a, b) == 0.0


def test_convergence_study_pure_growth_machine_epsilon():
    sc = make_scenario(kappa=0.5, mu0=dirac(0.25))
    rep = convergence_study(sc, [4, 8, 16], [1.0])
    for _, _, _, dist in rep.rows:
        assert dist <= 1e-12


def test_convergence_study_first_order_with_growth():
    mu0 = DiscreteMeasure.from_atoms([([0.25], 0.6), ([-0.5], 0.4)])
    mvf = lipschitz_field_mvf(const_field(1.0), 0.0, c_s=1.0)
    from mdelab import affine_growth
    sc = Scenario("transport", mvf, affine_growth(0.5, [0.25], 2.0), None, mu0, 1.0)
    rep = convergence_study(sc, [4, 8, 16, 32], [1.0])
    for order in rep.orders[1.0]:
        assert 0.3 <= order <= 1.7


def test_convergence_report_csv(tmp_path):
    sc = make_scenario(kappa=0.5, mu0=dirac(0.25))
    rep = convergence_study(sc, [4, 8], [0.5, 1.0])
    path = tmp_path / "conv.csv"
    rep.to_csv(path)
    assert path.read_text().splitlines()[0] == "n_coarse,n_fine,t,distance,order"
