"""Executable forms of the structural theorems: weak-formulation residuals,
continuity in the initial data, and the semigroup property of the recursion.

The weak residual compares the pairing gap

    int f d mu_t - int f d mu_0

against the three time integrals (transport against the velocity measure,
growth against the state, source against s[state]) evaluated with the
left-endpoint rule on mesh intervals. The scheme itself is explicit with
left-endpoint evaluations throughout, so this quadrature choice makes the
residual measure the discretization error and not a quadrature mismatch.

The continuity experiment reports flat-distance ratios r(t) between two
solves and the fitted exponent ``C^ = max_t log r(t) / t``; a max fit, not a
least-squares fit, because the statement under test is a one-sided bound and
the max is its falsifier.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InitialDataIdentical, NonMeshTime
from .measures import DiscreteMeasure, write_text_atomic
from .metrics import flat_value
from .scheme import Scenario, Trajectory, init, solve

__all__ = [
    "TestFunction",
    "radial_bump",
    "plateau_bump",
    "ResidualReport",
    "weak_residual",
    "ContinuityReport",
    "continuity_experiment",
    "semigroup_check",
    "residuals_to_csv_text",
]


@dataclass(frozen=True)
class TestFunction:
    """A smooth compactly supported test function with coded gradient.

    ``value`` maps an ``(n, d)`` array of points to ``(n,)`` values and
    ``gradient`` to ``(n, d)`` gradients; both vanish outside the declared
    support radius.
    """

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    smoothness: str = "smooth, compactly supported"

    def max_gradient_gap(self, rng: np.random.Generator, dim: int,
                         samples: int = 64, h: float = 1e-5) -> float:
        """Worst gap between the coded gradient and central differences at
        random interior points (radius up to 0.9 of the support)."""
        radius = 0.9 * self.support_radius
        pts = rng.uniform(-1.0, 1.0, size=(samples, dim))
        norms = np.linalg.norm(pts, axis=1, keepdims=True)
        pts = np.where(norms > 0, pts / norms, pts)
        pts = pts * (rng.uniform(0.0, radius, size=(samples, 1)))
        worst = 0.0
        grad = self.gradient(pts)
        for k in range(dim):
            shift = np.zeros(dim)
            shift[k] = h
            num = (self.value(pts + shift) - self.value(pts - shift)) / (2.0 * h)
            worst = max(worst, float(np.max(np.abs(num - grad[:, k]), initial=0.0)))
        return worst

    def max_outside_value(self, rng: np.random.Generator, dim: int,
                          samples: int = 64) -> float:
        """Largest |f| or |grad f| entry on a sampled shell outside the support."""
        direc = rng.normal(size=(samples, dim))
        direc /= np.linalg.norm(direc, axis=1, keepdims=True)
        radii = self.support_radius * (1.0 + rng.uniform(0.0, 0.5, size=(samples, 1)))
        pts = direc * radii
        worst = float(np.max(np.abs(self.value(pts)), initial=0.0))
        worst = max(worst, float(np.max(np.abs(self.gradient(pts)), initial=0.0)))
        return worst


def radial_bump(radius: float) -> TestFunction:
    """The canonical mollifier ``exp(1 - 1/(1 - |x/r|^2))`` inside |x| < r.

    Choose the radius at least 1.1 times the a priori support bound of the
    scenario under test so the trajectory never sees the boundary.
    """
    r2 = float(radius) ** 2

    def value(pts: np.ndarray) -> np.ndarray:
        u = np.sum(pts * pts, axis=1) / r2
        inside = u < 1.0
        out = np.zeros(pts.shape[0])
        ui = u[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui))
        return out

    def gradient(pts: np.ndarray) -> np.ndarray:
        u = np.sum(pts * pts, axis=1) / r2
        inside = u < 1.0
        out = np.zeros_like(pts)
        ui = u[inside]
        f = np.exp(1.0 - 1.0 / (1.0 - ui))
        out[inside] = (-f / (1.0 - ui) ** 2)[:, None] * (2.0 * pts[inside] / r2)
        return out

    return TestFunction(name=f"bump(r={radius:g})", value=value, gradient=gradient,
                        support_radius=float(radius))


def _phi(z: np.ndarray) -> np.ndarray:
    out = np.zeros_like(z)
    pos = z > 0.0
    out[pos] = np.exp(-1.0 / z[pos])
    return out


def _phi_prime(z: np.ndarray) -> np.ndarray:
    out = np.zeros_like(z)
    pos = z > 0.0
    out[pos] = np.exp(-1.0 / z[pos]) / z[pos] ** 2
    return out


def plateau_bump(inner_radius: float, radius: float) -> TestFunction:
    """Smooth function equal to 1 on |x| <= inner_radius, 0 beyond radius.

    The transition uses the standard smooth step built from exp(-1/z), so the
    whole function is infinitely differentiable with gradient identically
    zero on the plateau. Useful for mass-balance residuals, where a test
    function constant on the support isolates the growth and source terms.
    """
    a, rho = float(inner_radius), float(radius)
    if not 0.0 < a < rho:
        raise ValueError("need 0 < inner_radius < radius")
    width = rho - a

    def _t(r: np.ndarray) -> np.ndarray:
        return (r - a) / width

    def value(pts: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(pts, axis=1)
        t = np.clip(_t(r), 0.0, 1.0)
        num = _phi(1.0 - t)
        den = _phi(t) + num
        return np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)

    def gradient(pts: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(pts, axis=1)
        out = np.zeros_like(pts)
        band = (r > a) & (r < rho)
        if not np.any(band):
            return out
        t = _t(r[band])
        pt, p1t = _phi(t), _phi(1.0 - t)
        ppt, pp1t = _phi_prime(t), _phi_prime(1.0 - t)
        den = pt + p1t
        sigma_prime = (-pp1t * pt - p1t * ppt) / den ** 2
        scale = sigma_prime / (width * r[band])
        out[band] = scale[:, None] * pts[band]
        return out

    return TestFunction(name=f"plateau(r={a:g},{rho:g})", value=value,
                        gradient=gradient, support_radius=rho)


@dataclass(frozen=True)
class ResidualReport:
    """Weak-formulation residual of one trajectory at one probe time."""

    n: int
    t: float
    f_name: str
    lhs: float
    rhs_transport: float
    rhs_growth: float
    rhs_source: float

    @property
    def rhs_total(self) -> float:
        return self.rhs_transport + self.rhs_growth + self.rhs_source

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs_total)


def weak_residual(traj: Trajectory, scenario: Scenario, f: TestFunction,
                  t: float) -> ResidualReport:
    """Residual of the weak formulation at probe time t (snapped to the
    nearest mesh time).

    The left-hand side is the pairing gap between the state at t and the
    initial state; the right-hand side accumulates, interval by interval
    with the left-endpoint rule, the transport pairing ``grad f . v`` against
    the raw velocity measure of the state, the growth pairing ``f c`` against
    the state, and the source pairing ``f`` against ``s[state]``.
    """
    k = traj.mesh.nearest_time_index(t)
    t_snap = float(traj.times[k])
    lhs = traj.states[k].integrate(f.value) - traj.states[0].integrate(f.value)
    rhs_t = rhs_g = rhs_s = 0.0
    for l in range(k):
        tau = float(traj.times[l + 1]) - float(traj.times[l])
        state = traj.states[l]
        if not state.is_empty():
            vel = scenario.mvf(state)
            pairing = np.einsum("ij,ij->i", f.gradient(vel.points), vel.velocities)
            rhs_t += tau * float(np.dot(vel.weights, pairing))
            if scenario.growth is not None:
                rates = scenario.growth(state.points, state)
                vals = f.value(state.points)
                rhs_g += tau * float(np.dot(state.weights, vals * rates))
        if scenario.source is not None:
            rhs_s += tau * scenario.source(state).integrate(f.value)
    return ResidualReport(n=traj.mesh.n, t=t_snap, f_name=f.name, lhs=lhs,
                          rhs_transport=rhs_t, rhs_growth=rhs_g, rhs_source=rhs_s)


def residuals_to_csv_text(reports) -> str:
    out = io.StringIO()
    out.write("N,t,residual\n")
    for r in reports:
        out.write(f"{r.n},{r.t:.17g},{r.residual:.17g}\n")
    return out.getvalue()


@dataclass(frozen=True)
class ContinuityReport:
    """Flat-distance ratios between two solves and the fitted exponent.

    ``ratios[k]`` is ``flat(mu_t, nu_t) / flat(mu_0^N, nu_0^N)`` at
    ``times[k]``; ``c_hat = max_t log r(t) / t`` over positive probe times,
    so ``r(t) <= exp(c_hat t)`` holds by construction for the fitted data and
    becomes falsifiable on refinements.
    """

    n: int
    times: np.ndarray
    ratios: np.ndarray
    initial_distance: float
    c_hat: float

    def bound(self, t) -> np.ndarray:
        return np.exp(self.c_hat * np.asarray(t, dtype=float))

    def to_csv_text(self) -> str:
        out = io.StringIO()
        out.write("t,ratio,bound\n")
        for t, r in zip(self.times, self.ratios):
            out.write(f"{t:.17g},{r:.17g},{float(self.bound(t)):.17g}\n")
        return out.getvalue()

    def to_csv(self, path) -> None:
        write_text_atomic(path, self.to_csv_text())


def continuity_experiment(scenario: Scenario, mu0: DiscreteMeasure,
                          nu0: DiscreteMeasure, n: int, t_probe) -> ContinuityReport:
    """Solve twice from nearby initial data and report the ratio envelope."""
    traj_mu = solve(scenario.with_initial(mu0), n)
    traj_nu = solve(scenario.with_initial(nu0), n)
    d0 = flat_value(traj_mu.states[0], traj_nu.states[0])
    if d0 < 1e-13:
        raise InitialDataIdentical(
            f"projected initial data coincide (flat distance {d0:.3g})")
    times, ratios = [], []
    for t in t_probe:
        d = flat_value(traj_mu.state_at(t), traj_nu.state_at(t))
        times.append(float(t))
        ratios.append(d / d0)
    c_hat = -math.inf
    for t, r in zip(times, ratios):
        if t > 0.0 and r > 0.0:
            c_hat = max(c_hat, math.log(r) / t)
    return ContinuityReport(n=n, times=np.array(times), ratios=np.array(ratios),
                            initial_distance=d0, c_hat=c_hat)


def _require_mesh_time(t: float, n: int, label: str) -> None:
    y = t * n
    if t < -1e-12 or abs(y - round(y)) > 1e-9 * max(1.0, abs(y)):
        raise NonMeshTime(f"{label} = {t} is not a mesh time for N = {n}")


def semigroup_check(scenario: Scenario, n: int, t1: float, t2: float) -> float:
    """Flat distance between solving to t1 + t2 directly and restarting at t1.

    The recursion is Markov in the state, so the distance is zero (to float
    noise, assert <= 1e-12) whenever t1 is a mesh time.
    """
    _require_mesh_time(t1, n, "t1")
    _require_mesh_time(t2, n, "t2")
    _require_mesh_time(t1 + t2, n, "t1 + t2")
    if t1 + t2 <= 0.0:
        return 0.0
    direct = solve(scenario.with_initial(scenario.mu0, horizon=t1 + t2), n).final_state()
    if t1 <= 0.0:
        state_t1 = init(scenario, n)
    else:
        state_t1 = solve(scenario.with_initial(scenario.mu0, horizon=t1), n).final_state()
    if t2 <= 0.0:
        restarted = state_t1
    else:
        restarted = solve(scenario.with_initial(state_t1, horizon=t2), n).final_state()
    return flat_value(direct, restarted)
