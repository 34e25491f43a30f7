"""Scenario-driven command line front end.

Subcommands
-----------
* ``solve``      one trajectory; writes trajectory.csv and diagnostics.csv,
  asserts nonnegativity and the a priori support bound.
* ``converge``   successive-refinement distances; writes convergence.csv.
* ``continuity`` two solves from mu0 and nu0; writes continuity.csv.
* ``residual``   weak-formulation residuals over an N list; writes
  residual.csv and, when the list spans doublings, asserts the halving band.
* ``certify``    randomized audit of the marginal condition, the support,
  Lipschitz and pushed-forward continuity assumptions, the growth bound and
  the source support; exits nonzero with witnesses on any violation.
* ``metrics``    standalone flat (and 1D Wasserstein) distance between two
  measure files (.csv or .json).

Randomized sweeps draw from numpy's Philox4x64 counter-based generator keyed
by the seed, so a given (config, seed) pair reproduces the same samples and
byte-identical output files everywhere. All files are written atomically.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from .config import RunConfig, load_config
from .errors import AtomOutsideMesh, MdelabError
from .measures import DiscreteMeasure, write_text_atomic
from .metrics import flat_value, wasserstein1_1d
from .mvf import check_marginal, check_v1, check_v2, check_v3
from .scheme import convergence_study, solve
from .verify import (continuity_experiment, radial_bump, residuals_to_csv_text,
                     weak_residual)

RESIDUAL_RATIO_BAND = (0.3, 0.8)
GAP_TOLERANCE = -1e-9


def _sweep_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def _out_dir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _load(args) -> RunConfig:
    from .config import from_values
    cfg = load_config(args.config)
    overrides = dict(cfg.raw)
    if getattr(args, "n", None):
        overrides["n"] = args.n
        overrides["n_list"] = [args.n]
    if getattr(args, "n_list", None):
        overrides["n_list"] = [int(v) for v in args.n_list.split(",")]
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "samples", None):
        overrides["certify_samples"] = args.samples
    return from_values(overrides, name=cfg.name)


def _fail(message: str) -> int:
    print(f"FAIL: {message}")
    return 1


# -- subcommands ----------------------------------------------------------------

def _cmd_solve(args) -> int:
    cfg = _load(args)
    scenario = cfg.build_scenario()
    traj = solve(scenario, cfg.n, record_intermediate=args.record_intermediate)
    out = _out_dir(args)
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    traj.diagnostics_to_csv(os.path.join(out, "diagnostics.csv"))
    print(f"solved {scenario.name!r} at N={cfg.n}: {len(traj.times)} states, "
          f"final mass {traj.mass[-1]:.12g}, final support {traj.support_radius[-1]:.6g}")
    bad = [k for k, s in enumerate(traj.states) if np.any(s.weights < 0.0)]
    if bad:
        return _fail(f"negative weight in state {bad[0]}")
    bound = scenario.support_bound() + 1e-9
    over = [k for k, r in enumerate(traj.support_radius) if r > bound]
    if over:
        k = over[0]
        return _fail(f"support radius {traj.support_radius[k]:.6g} at t="
                     f"{traj.times[k]:.6g} exceeds the a priori bound {bound:.6g}")
    print(f"assertions passed: nonnegativity, support bound {bound:.6g}")
    return 0


def _cmd_converge(args) -> int:
    cfg = _load(args)
    scenario = cfg.build_scenario()
    if len(cfg.n_list) < 2:
        return _fail("converge needs an ascending n_list of length >= 2")
    report = convergence_study(scenario, cfg.n_list, cfg.probe_times)
    report.to_csv(os.path.join(_out_dir(args), "convergence.csv"))
    for n_c, n_f, t, dist in report.rows:
        print(f"N {n_c:>4d} -> {n_f:<4d} t={t:<8g} distance {dist:.6e}")
    for t, orders in report.orders.items():
        shown = ", ".join("nan" if math.isnan(o) else f"{o:.3f}" for o in orders)
        print(f"empirical order at t={t:g}: [{shown}]")
    return 0


def _cmd_continuity(args) -> int:
    cfg = _load(args)
    scenario = cfg.build_scenario()
    nu0 = cfg.require_nu0()
    report = continuity_experiment(scenario, cfg.mu0, nu0, cfg.n, cfg.probe_times)
    report.to_csv(os.path.join(_out_dir(args), "continuity.csv"))
    print(f"initial flat distance {report.initial_distance:.6e}; fitted "
          f"C^ = {report.c_hat:.6g}")
    for t, r in zip(report.times, report.ratios):
        print(f"t={t:<8g} ratio {r:.9g} bound {float(report.bound(t)):.9g}")
    return 0


def _cmd_residual(args) -> int:
    cfg = _load(args)
    scenario = cfg.build_scenario()
    f = radial_bump(1.1 * scenario.support_bound())
    reports = []
    for n in cfg.n_list:
        traj = solve(scenario, n)
        zero = weak_residual(traj, scenario, f, 0.0)
        if zero.residual > 1e-10:
            return _fail(f"residual at t=0 is {zero.residual:.3g}, expected 0")
        for t in cfg.probe_times:
            reports.append(weak_residual(traj, scenario, f, t))
    write_text_atomic(os.path.join(_out_dir(args), "residual.csv"),
                      residuals_to_csv_text(reports))
    for r in reports:
        print(f"N={r.n:<4d} t={r.t:<8g} residual {r.residual:.6e}")
    doubled = all(b == 2 * a for a, b in zip(cfg.n_list, cfg.n_list[1:]))
    if len(cfg.n_list) >= 2 and doubled:
        t_end = cfg.probe_times[-1]
        seq = [r.residual for r in reports if abs(r.t - t_end) < 1e-9]
        ratios = [b / a for a, b in zip(seq, seq[1:]) if a > 0.0]
        lo, hi = RESIDUAL_RATIO_BAND
        print(f"halving ratios at t={t_end:g}: "
              + ", ".join(f"{r:.3f}" for r in ratios))
        if any(not (lo <= r <= hi) for r in ratios):
            return _fail(f"residual ratio outside [{lo}, {hi}]")
    return 0


def _random_measure(rng, dim, probability: bool, max_atoms: int = 8):
    # Sweep measures live in the scenario's working set: support in a small
    # box and total mass at most 2, the compact on which the declared growth
    # bound and continuity constants are meant to hold.
    k = int(rng.integers(1, max_atoms + 1))
    pts = rng.uniform(-1.5, 1.5, size=(k, dim))
    w = rng.uniform(0.1, 1.0, size=k)
    total = 1.0 if probability else float(rng.uniform(0.2, 2.0))
    return DiscreteMeasure(dim, pts, w * (total / w.sum()))


def _cmd_certify(args) -> int:
    cfg = _load(args)
    scenario = cfg.build_scenario()
    mvf = scenario.mvf
    rng = _sweep_rng(cfg.seed)
    probability = mvf.continuity_metric == "w1"
    lines = ["check,sample,lhs,rhs,margin,pass"]
    failures = []

    def record(check: str, k: int, lhs: float, rhs: float, ok: bool,
               witness: str = "") -> None:
        lines.append(f"{check},{k},{lhs:.17g},{rhs:.17g},{rhs - lhs:.17g},{int(ok)}")
        if not ok:
            failures.append(f"{check} sample {k}: {witness or f'lhs {lhs:.6g} > rhs {rhs:.6g}'}")

    for k in range(cfg.certify_samples):
        mu = _random_measure(rng, cfg.dim, probability)
        nu = _random_measure(rng, cfg.dim, probability)
        tau = float(rng.uniform(0.0, 1.0))

        rep = check_marginal(mvf, mu)
        record("marginal", k, rep.mass_out, rep.mass_in, rep.ok, rep.message)
        ok1, ratio = check_v1(mvf, mu)
        record("v1", k, ratio, mvf.c_s, ok1,
               f"speed ratio {ratio:.6g} exceeds C_S {mvf.c_s}")
        lhs2, rhs2, _ = check_v2(mvf, mu, nu)
        record("v2", k, lhs2, rhs2, rhs2 - lhs2 >= GAP_TOLERANCE)
        lhs3, rhs3, gap3 = check_v3(mvf, mu, nu, tau)
        record("v3", k, lhs3, rhs3, gap3 >= GAP_TOLERANCE)

        if scenario.growth is not None:
            rates = scenario.growth(mu.points, mu)
            worst = float(np.max(np.abs(rates), initial=0.0))
            record("growth_bound", k, worst, scenario.growth.c_b,
                   worst <= scenario.growth.c_b + 1e-12)
        if scenario.source is not None:
            s_mu = scenario.source(mu)
            record("source_support", k, s_mu.support_radius(),
                   scenario.source.radius,
                   s_mu.support_radius() <= scenario.source.radius + 1e-12)

    write_text_atomic(os.path.join(_out_dir(args), "certify.csv"),
                      "\n".join(lines) + "\n")
    checks = sorted({ln.split(",")[0] for ln in lines[1:]})
    print(f"certified {scenario.name!r}: {cfg.certify_samples} samples over "
          f"{', '.join(checks)}")
    if failures:
        for msg in failures[:10]:
            print(f"VIOLATION: {msg}")
        return _fail(f"{len(failures)} certification violations (see certify.csv)")
    print("all certification checks passed")
    return 0


def _read_measure(path: str) -> DiscreteMeasure:
    if path.endswith(".json"):
        return DiscreteMeasure.read_json(path)
    return DiscreteMeasure.read_csv(path)


def _cmd_metrics(args) -> int:
    mu = _read_measure(args.measure_a)
    nu = _read_measure(args.measure_b)
    print(f"flat_distance = {flat_value(mu, nu):.12g}")
    if args.wasserstein:
        print(f"wasserstein1 = {wasserstein1_1d(mu, nu):.12g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdelab",
        description="numerical laboratory for measure differential equations")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="scenario config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="sweep seed (u64)")
        p.add_argument("--n", type=int, default=None, help="mesh resolution N")
        p.add_argument("--n-list", default=None, help="comma separated N list")

    p = sub.add_parser("solve", help="run one trajectory")
    common(p)
    p.add_argument("--record-intermediate", action="store_true")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("converge", help="successive-refinement study")
    common(p)
    p.set_defaults(fn=_cmd_converge)

    p = sub.add_parser("continuity", help="continuity in initial data")
    common(p)
    p.set_defaults(fn=_cmd_continuity)

    p = sub.add_parser("residual", help="weak-formulation residual sweep")
    common(p)
    p.set_defaults(fn=_cmd_residual)

    p = sub.add_parser("certify", help="randomized assumption audit")
    common(p)
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(fn=_cmd_certify)

    p = sub.add_parser("metrics", help="distance between two measure files")
    p.add_argument("measure_a")
    p.add_argument("measure_b")
    p.add_argument("--wasserstein", action="store_true",
                   help="also print the 1D Wasserstein distance")
    p.set_defaults(fn=_cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (AtomOutsideMesh, MdelabError) as exc:
        print(f"FAIL: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
