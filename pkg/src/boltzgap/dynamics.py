"""Time evolution of dh/dt = L h + R[h, h] on the truncated space.

Both solvers work in the eigenbasis of L restricted to H0, where the
semigroup is diagonal.  :func:`integrate` is an exponential midpoint
scheme with step halving; :func:`picard_solve` iterates the Duhamel map
window by window, integrating the nonlinear source exactly against the
exponential after piecewise-linear interpolation in time.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .basis import StateVector, l1_estimate, project_H0
from .operators import LMatrix, RTensor
from .report import dumps

__all__ = [
    "DynamicsError",
    "Semigroup",
    "Trajectory",
    "PicardResult",
    "TheoremReport",
    "semigroup_apply",
    "time_grid",
    "integrate",
    "picard_solve",
    "riccati_envelope",
    "c_star",
    "theorem_check",
    "decay_rate_fit",
]

log = logging.getLogger(__name__)


class DynamicsError(RuntimeError):
    pass


class Semigroup:
    """exp(tL) on H0 through the eigen-decomposition of L restricted there."""

    def __init__(self, L: LMatrix):
        self.L = L
        self.basis = L.basis
        self.eigenvalues, self.eigenvectors = L.h0_eigen

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[-1])

    def to_modes(self, x: np.ndarray) -> np.ndarray:
        return self.eigenvectors.T @ x

    def from_modes(self, y: np.ndarray) -> np.ndarray:
        return self.eigenvectors @ y

    def apply(self, t: float, g: np.ndarray) -> np.ndarray:
        if t < 0:
            raise DynamicsError("semigroup is only defined for t >= 0")
        return self.from_modes(np.exp(self.eigenvalues * t) * self.to_modes(g))


def semigroup_apply(S: Semigroup, t: float, g: StateVector) -> StateVector:
    if not g.in_H0(1e-10):
        raise DynamicsError("semigroup acts on H0; project the state first")
    return StateVector(g.basis, S.apply(t, g.coeffs))


def _phi1(lam: np.ndarray, dt: float) -> np.ndarray:
    """int_0^dt exp(lam (dt - s)) ds."""
    x = lam * dt
    out = np.empty_like(lam)
    small = np.abs(x) < 1e-8
    out[~small] = np.expm1(x[~small]) / lam[~small]
    out[small] = dt * (1 + x[small] / 2)
    return out


def _phi2(lam: np.ndarray, dt: float) -> np.ndarray:
    """int_0^dt exp(lam (dt - s)) s / dt ds."""
    x = lam * dt
    out = np.empty_like(lam)
    small = np.abs(x) < 1e-4
    xs = x[~small]
    out[~small] = (np.expm1(xs) - xs) / (lam[~small] * xs)
    xx = x[small]
    out[small] = dt * (0.5 + xx / 6 + xx * xx / 24)
    return out


def time_grid(t_end: float, dt_out: float = 1 / 16, geometric_start: float = 1e-3) -> np.ndarray:
    """Uniform grid joined with a geometric grid that resolves early times."""
    n = int(round(t_end / dt_out))
    uniform = np.linspace(0.0, n * dt_out, n + 1)
    if uniform[-1] < t_end:
        uniform = np.append(uniform, t_end)
    geo = []
    t = geometric_start
    while t < min(dt_out, t_end):
        geo.append(t)
        t *= 2
    return np.union1d(uniform, geo)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray = field(repr=False)
    invariant_residuals: np.ndarray = field(repr=False)
    basis: object = field(repr=False)
    step: float = 0.0
    refinements: int = 0

    @property
    def theta(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.states, self.states)

    @property
    def norms(self) -> np.ndarray:
        return np.sqrt(self.theta)

    def state(self, i: int) -> StateVector:
        return StateVector(self.basis, self.states[i])

    def at(self, t: float) -> StateVector:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-12:
            raise KeyError(f"time {t} is not on the grid")
        return self.state(i)

    def sup_distance(self, other: "Trajectory") -> float:
        if self.times.shape != other.times.shape or np.max(np.abs(self.times - other.times)) > 1e-12:
            raise ValueError("trajectories live on different grids")
        return float(np.max(np.linalg.norm(self.states - other.states, axis=1)))


def _check_initial(h0: StateVector) -> np.ndarray:
    res = h0.invariant_residual()
    if res > 1e-12:
        raise DynamicsError(f"initial state is not in H0 (invariant residual {res:.3e})")
    return project_H0(h0).coeffs


def _midpoint_run(S: Semigroup, T: RTensor | None, x0: np.ndarray, grid: np.ndarray, dt: float):
    lam = S.eigenvalues
    P = S.basis.projector.vectors
    y = S.to_modes(x0)
    states = [S.from_modes(y)]
    residuals = [float(np.max(np.abs(P @ states[0])))]
    cache: dict[float, tuple] = {}

    def coeffs(h):
        if h not in cache:
            cache[h] = (np.exp(lam * h), _phi1(lam, h), np.exp(lam * h / 2), _phi1(lam, h / 2))
        return cache[h]

    for t0, t1 in zip(grid[:-1], grid[1:]):
        span = t1 - t0
        n_sub = max(1, int(math.ceil(span / dt - 1e-9)))
        h = span / n_sub
        E, F, Eh, Fh = coeffs(h)
        for _ in range(n_sub):
            if T is None:
                y = E * y
                continue
            x = S.from_modes(y)
            n0 = S.to_modes(T.quadratic(x))
            y_half = Eh * y + Fh * n0
            n_half = S.to_modes(T.quadratic(S.from_modes(y_half)))
            y = E * y + F * n_half
            if not np.all(np.isfinite(y)) or float(y @ y) > 1e6:
                raise DynamicsError("left perturbative regime")
        x = S.from_modes(y)
        residuals.append(float(np.max(np.abs(P @ x))))
        # modal coordinates live in H0; re-zeroing is implicit in the projection back
        states.append(x - P.T @ (P @ x))
    return np.array(states), np.array(residuals)


def integrate(h0: StateVector, L: LMatrix, T: RTensor | None, t_end: float, dt0: float = 1 / 16,
              grid: np.ndarray | None = None, tol: float = 1e-8, max_halvings: int = 10,
              nonlinear: bool = True) -> Trajectory:
    """Exponential midpoint integration of dh/dt = L h + R[h, h].

    The internal step starts at ``dt0`` and is halved until the sup over
    the output grid of the change in theta = ||h||^2 drops below ``tol``
    (relative to max theta once that exceeds 1).
    ``T=None`` or ``nonlinear=False`` gives the exact linear semigroup.
    """
    x0 = _check_initial(h0)
    if grid is None:
        grid = time_grid(t_end)
    grid = np.asarray(grid, dtype=float)
    S = Semigroup(L)
    if T is None or not nonlinear:
        states, res = _midpoint_run(S, None, x0, grid, dt0)
        return Trajectory(grid, states, res, h0.basis, dt0, 0)
    dt = dt0
    blowups = 0

    def run(step):
        nonlocal blowups
        try:
            out = _midpoint_run(S, T, x0, grid, step)
        except DynamicsError:
            # a single blow-up may be a coarse-step artefact; two in a row are not
            blowups += 1
            if blowups >= 2:
                raise
            return None, None
        blowups = 0
        return out

    prev, res = run(dt)
    for k in range(1, max_halvings + 1):
        dt /= 2
        cur, res = run(dt)
        if cur is None or prev is None:
            prev = cur
            continue
        th_cur = np.einsum("ij,ij->i", cur, cur)
        change = float(np.max(np.abs(th_cur - np.einsum("ij,ij->i", prev, prev))))
        # absolute inside the perturbative regime, relative for large data
        change /= max(1.0, float(th_cur.max()))
        log.debug("integrate: dt=%g theta change %.3e", dt, change)
        if change < tol:
            return Trajectory(grid, cur, res, h0.basis, dt, k)
        prev = cur
    raise DynamicsError("integrator failed tolerance")


# ---------------------------------------------------------------------------
# Picard iteration of the Duhamel map


@dataclass
class PicardResult:
    trajectory: Trajectory
    distances: list[list[float]]
    factors: list[float]
    ball_radius: float
    max_iterate_norm: float
    iterations: list[int]

    @property
    def max_factor(self) -> float:
        return max(self.factors) if self.factors else 0.0

    def history_json(self) -> str:
        return dumps({
            "window_distances": self.distances,
            "window_contraction_factor": self.factors,
            "ball_radius": self.ball_radius,
            "max_iterate_norm": self.max_iterate_norm,
            "iterations": self.iterations,
        })


def picard_solve(h0: StateVector, L: LMatrix, T: RTensor, t_end: float, window: float = 1.0,
                 dt: float = 1 / 64, tol: float = 1e-13, max_iter: int = 60,
                 gap: float | None = None, noise_floor: float = 1e-11) -> PicardResult:
    """Fixed-point iteration x -> exp(tL) h0 + int_0^t exp((t-s)L) R[x(s), x(s)] ds.

    The first iterate on each window is the linear evolution.  Every
    iterate must stay in the ball of radius |gap|/8 (sup over the grid);
    leaving it raises :class:`DynamicsError`.  The contraction factor of a
    window is the largest ratio of successive sup distances, counted while
    the distances are above ``noise_floor``.
    """
    x0 = _check_initial(h0)
    S = Semigroup(L)
    if gap is None:
        gap = S.gap
    delta = abs(gap) / 16
    if np.linalg.norm(x0) > delta * (1 + 1e-12):
        raise DynamicsError(f"initial norm {np.linalg.norm(x0):.4g} exceeds delta = {delta:.4g}")
    radius = abs(gap) / 8
    lam = S.eigenvalues
    E = np.exp(lam * dt)
    A = _phi1(lam, dt)
    Cc = _phi2(lam, dt)
    n_windows = int(math.ceil(t_end / window - 1e-9))
    steps = int(round(window / dt))
    if abs(steps * dt - window) > 1e-12:
        raise ValueError("window must be a multiple of dt")

    times = [0.0]
    states = [S.from_modes(S.to_modes(x0))]
    all_dist: list[list[float]] = []
    factors: list[float] = []
    iters: list[int] = []
    max_norm = float(np.linalg.norm(x0))
    y_start = S.to_modes(x0)
    for w in range(n_windows):
        t0 = w * window
        m = min(steps, int(round((t_end - t0) / dt)))
        local = np.arange(m + 1) * dt
        lin = np.exp(np.outer(local, lam)) * y_start  # (m+1, k)
        y = lin.copy()
        dists: list[float] = []
        for it in range(max_iter):
            src = np.array([S.to_modes(T.quadratic(S.from_modes(yj))) for yj in y])
            duh = np.zeros_like(y)
            for j in range(m):
                duh[j + 1] = E * duh[j] + A * src[j] + Cc * (src[j + 1] - src[j])
            y_new = lin + duh
            norms = np.linalg.norm(y_new, axis=1)
            max_norm = max(max_norm, float(norms.max()))
            if norms.max() > radius:
                raise DynamicsError(
                    f"Picard stability violated: iterate norm {norms.max():.4g} > {radius:.4g}")
            d = float(np.max(np.linalg.norm(y_new - y, axis=1)))
            dists.append(d)
            y = y_new
            if d < tol:
                break
        else:
            raise DynamicsError(f"Picard iteration did not converge in {max_iter} iterations")
        ratios = [dists[i + 1] / dists[i] for i in range(len(dists) - 1) if dists[i] > noise_floor and dists[i + 1] > noise_floor]
        factors.append(max(ratios) if ratios else 0.0)
        all_dist.append(dists)
        iters.append(len(dists))
        for j in range(1, m + 1):
            times.append(t0 + local[j])
            states.append(S.from_modes(y[j]))
        y_start = y[-1]
    X = np.array(states)
    P = h0.basis.projector.vectors
    res = np.max(np.abs(X @ P.T), axis=1)
    traj = Trajectory(np.array(times), X, res, h0.basis, dt, 0)
    return PicardResult(traj, all_dist, factors, radius, max_norm, iters)


# ---------------------------------------------------------------------------
# bounds


def c_star(h0_norm: float, gap: float) -> float:
    """(1/||h0|| + 2/gap)^(-2)."""
    return (1.0 / h0_norm + 2.0 / gap) ** -2


def riccati_envelope(theta0: float, gap: float, t):
    """Exact solution of d theta/dt = gap theta + 2 theta^(3/2) started at theta0."""
    if gap >= 0:
        raise ValueError("gap must be negative")
    if theta0 < 0:
        raise ValueError("theta0 must be non-negative")
    if 2 * math.sqrt(theta0) >= abs(gap):
        raise DynamicsError("outside basin covered by the comparison argument")
    t = np.asarray(t, dtype=float)
    if theta0 == 0.0:
        return np.zeros_like(t) if t.ndim else 0.0
    y = (theta0**-0.5 + 2.0 / gap) * np.exp(-gap * t / 2) - 2.0 / gap
    out = y**-2.0
    return out if t.ndim else float(out)


@dataclass
class TheoremReport:
    delta: float
    gap: float
    c_star: float
    initial_norm: float
    sup_norm: float
    hypothesis_ok: bool
    margins: dict
    clauses: dict
    fitted_rate: float | None
    l1_flagged: int = 0

    @property
    def passed(self) -> bool:
        return self.hypothesis_ok and all(self.clauses.values())

    def to_json(self) -> str:
        d = asdict(self)
        d["pass"] = self.passed
        d["status"] = "hypothesis_failed" if not self.hypothesis_ok else ("pass" if self.passed else "fail")
        return dumps(d)


def decay_rate_fit(traj: Trajectory, t_min: float, min_points: int = 10) -> float:
    """Least-squares slope of log theta on t >= t_min."""
    t = traj.times
    theta = traj.theta
    mask = t >= t_min
    tiny = theta <= 1e-300
    if np.any(mask & tiny):
        warnings.warn("theta underflows; fitting on the truncated window", RuntimeWarning, stacklevel=2)
        mask &= ~tiny
    if mask.sum() < min_points:
        raise ValueError(f"need at least {min_points} points for the fit, have {int(mask.sum())}")
    slope, _ = np.polyfit(t[mask], np.log(theta[mask]), 1)
    return float(slope)


def theorem_check(traj: Trajectory, gap: float, delta: float | None = None, l1: bool = True,
                  fit_from: float | None = None, l1_stride: int = 1) -> TheoremReport:
    """Check the neighbourhood, decay, envelope and L1 bounds along a trajectory.

    Margins are bound minus observed value (worst over the grid); a clause
    passes when its margin is non-negative up to the stated slack.
    """
    if delta is None:
        delta = abs(gap) / 16
    theta = traj.theta
    t = traj.times
    n0 = float(math.sqrt(theta[0]))
    hyp = n0 <= delta * (1 + 1e-12)
    sup = float(np.sqrt(theta.max()))
    if not hyp or n0 == 0.0:
        cs = c_star(n0, gap) if n0 > 0 and 1 / n0 + 2 / gap > 0 else float("nan")
        margins = {"stability": 2 * delta - sup}
        clauses = {"stability": bool(sup <= 2 * delta)}
        if n0 == 0.0 and hyp:
            clauses.update({"decay": bool(theta.max() == 0.0), "riccati": bool(theta.max() == 0.0)})
        return TheoremReport(delta, gap, cs, n0, sup, hyp, margins, clauses, None)
    cs = c_star(n0, gap)
    decay_bound = cs * np.exp(gap * t) * (1 + 1e-6)
    env = riccati_envelope(float(theta[0]), gap, t)
    margins = {
        "stability": 2 * delta - sup,
        "ball_D": abs(gap) / 8 - sup,
        "decay": float(np.min(decay_bound - theta)),
        "decay_relative": float(np.min(1 - theta / decay_bound)),
        "riccati": float(np.min(env * (1 + 1e-12) - theta)),
    }
    clauses = {
        "stability": bool(margins["stability"] >= 0),
        "decay": bool(margins["decay"] >= 0),
        "riccati": bool(margins["riccati"] >= 0),
    }
    flagged = 0
    if l1:
        sq = math.sqrt(cs)
        worst_sqrt = math.inf
        worst_stated = math.inf
        for i in range(0, len(t), l1_stride):
            est = l1_estimate(traj.state(i))
            flagged += int(not est.converged)
            worst_sqrt = min(worst_sqrt, sq * math.exp(gap * t[i] / 2) * (1 + 1e-4) - est.upper)
            worst_stated = min(worst_stated, cs * math.exp(gap * t[i] / 2) - est.upper)
        margins["l1_sqrt_cstar"] = worst_sqrt
        # plain C* prefactor, reported for information only
        margins["l1_stated_prefactor"] = worst_stated
        clauses["l1"] = bool(worst_sqrt >= 0)
    rate = None
    t_fit = t[-1] / 2 if fit_from is None else fit_from
    try:
        rate = decay_rate_fit(traj, t_fit)
    except ValueError:
        pass
    return TheoremReport(delta, gap, cs, n0, sup, hyp, margins, clauses, rate, flagged)


def trajectory_csv(traj: Trajectory, gap: float, l1: bool = True) -> str:
    """CSV with the per-time quantities used by the theorem checks."""
    theta = traj.theta
    n0 = math.sqrt(theta[0]) if theta[0] > 0 else 0.0
    cs = c_star(n0, gap) if n0 > 0 and 1 / n0 + 2 / gap > 0 else float("nan")
    try:
        env = riccati_envelope(float(theta[0]), gap, traj.times)
    except DynamicsError:
        env = np.full_like(traj.times, np.nan)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "theta", "sup_norm", "C_star_bound", "riccati_envelope", "l1_estimate",
                "l1_bound_sqrtCstar", "invariant_residual"])
    running = 0.0
    for i, t in enumerate(traj.times):
        running = max(running, math.sqrt(theta[i]))
        l1v = l1_estimate(traj.state(i)).value if l1 else float("nan")
        row = [t, theta[i], running, cs * math.exp(gap * t), env[i], l1v,
               math.sqrt(cs) * math.exp(gap * t / 2) if cs == cs else float("nan"),
               traj.invariant_residuals[i]]
        w.writerow([format(float(x), ".17g") for x in row])
    return buf.getvalue()
