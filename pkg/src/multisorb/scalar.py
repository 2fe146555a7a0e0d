"""Explicit time integrator for the summed equation  dw/dt = lap(phi(w)) + F.

The Dirichlet datum is imposed on phi(w) at boundary-face midpoints, so a run
with constant data g is stationary exactly when the initial state satisfies
phi(w) = g.  Forward Euler under the CFL limit keeps the update monotone and
the state nonnegative, which is what every downstream check relies on.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CflError, InvariantError, SupportBreachError
from .grid import Grid, Field, collar_mask, gradient_energy_values, integrate_values, lap_values
from .isotherm import IsothermModel
from .trajectory import RunTrajectory, SolverConfig, StepReport

_TIME_SUP_SAMPLES = 513


def value_at(data, t: float) -> float:
    return float(data(t)) if callable(data) else float(data)


def sup_over_time(data, T: float) -> float:
    """Supremum of a scalar datum over [0, T] (sampled when time-dependent)."""
    if not callable(data):
        return float(data)
    ts = np.linspace(0.0, T, _TIME_SUP_SAMPLES)
    return float(max(value_at(data, t) for t in ts))


def forcing_at(forcing, t: float, grid: Grid):
    """Resolve a forcing datum (scalar, array, or callable of t) at time t."""
    if forcing is None:
        return 0.0
    if callable(forcing):
        forcing = forcing(t)
    if np.isscalar(forcing):
        return float(forcing)
    arr = np.asarray(forcing, dtype=float)
    if arr.shape != grid.shape:
        raise ValueError(f"forcing shape {arr.shape} != grid shape {grid.shape}")
    return arr


def forcing_sup(forcing, T: float, grid: Grid) -> float:
    if forcing is None:
        return 0.0
    if not callable(forcing):
        arr = forcing_at(forcing, 0.0, grid)
        return float(np.max(arr)) if isinstance(arr, np.ndarray) else float(arr)
    ts = np.linspace(0.0, T, _TIME_SUP_SAMPLES)
    sup = 0.0
    for t in ts:
        arr = forcing_at(forcing, t, grid)
        sup = max(sup, float(np.max(arr)) if isinstance(arr, np.ndarray) else float(arr))
    return sup


def diffusivity_sup(model: IsothermModel, m_bound: float) -> float:
    """sup of phi' on [0, m_bound], by dense sampling plus the endpoint."""
    if m_bound <= 0:
        raise ValueError(f"m_bound must be positive, got {m_bound}")
    samples = np.concatenate(
        (np.linspace(0.0, m_bound, 257), np.geomspace(m_bound * 1e-9, m_bound, 129))
    )
    return float(np.max(model.phi_prime(samples)))


def cfl_dt(model: IsothermModel, m_bound: float, grid: Grid, safety: float) -> float:
    """Explicit stability step: safety * h^2 / (2 dim L) with L = sup phi'.

    On anisotropic grids the equivalent form safety / (2 L sum(1/h_k^2)) is
    used.  A vanishing L (identically degenerate range) falls back to
    safety * h_min^2 with a warning.
    """
    if not 0.0 < safety <= 1.0:
        raise ValueError(f"safety must be in (0, 1], got {safety}")
    L = diffusivity_sup(model, m_bound)
    if L == 0.0:
        warnings.warn("phi' vanishes identically on the sampled range; using dt = safety*h_min^2")
        return safety * min(grid.h) ** 2
    return safety / (2.0 * L * sum(1.0 / h**2 for h in grid.h))


def hard_dt_limit(model: IsothermModel, m_bound: float, grid: Grid) -> float:
    """Positivity boundary of the explicit update (cfl_dt at safety 1)."""
    return cfl_dt(model, m_bound, grid, 1.0)


def step_w_values(grid: Grid, model: IsothermModel, w: np.ndarray, f_t, g_t: float, dt: float) -> np.ndarray:
    """One unguarded forward-Euler step on the raw array (flux on max(w, 0))."""
    G = model.phi(np.maximum(w, 0.0))
    return w + dt * lap_values(grid, G, g_t) + dt * f_t


def _guard_dt(model: IsothermModel, grid: Grid, dt: float, sup_state: float) -> None:
    if sup_state <= 0:
        return
    limit = hard_dt_limit(model, sup_state, grid)
    if dt > limit * (1.0 + 1e-9):
        raise CflError(f"dt={dt} exceeds the explicit stability limit {limit} (state sup {sup_state})")


def step_w(w: Field, forcing, g_dirichlet, model: IsothermModel, dt: float) -> Field:
    """One explicit step of the summed equation with Dirichlet datum on phi(w).

    Refuses (CflError) if dt is beyond the stability limit for the current
    state, since the nonnegativity contract would be void.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = w.grid
    g_t = value_at(g_dirichlet, 0.0) if g_dirichlet is not None else 0.0
    if g_t < 0:
        raise InvariantError(f"Dirichlet datum must be nonnegative, got {g_t}")
    sup_state = max(float(np.max(w.values)), float(model.beta(g_t)))
    _guard_dt(model, grid, dt, sup_state)
    f_t = forcing_at(forcing, 0.0, grid)
    return Field(grid, step_w_values(grid, model, w.values, f_t, g_t, dt))


def step_w_report(w_before: Field, w_after: Field, dt: float, model: IsothermModel) -> StepReport:
    grid = w_before.grid
    sup = float(np.max(w_before.values))
    limit = hard_dt_limit(model, max(sup, 1e-300), grid) if sup > 0 else math.inf
    return StepReport(
        dt=dt,
        w_min=float(np.min(w_after.values)),
        w_max=float(np.max(w_after.values)),
        cfl_ratio=dt / limit if math.isfinite(limit) else 0.0,
        mass_before=integrate_values(grid, w_before.values),
        mass_after=integrate_values(grid, w_after.values),
    )


@dataclass
class ScalarProblem:
    """Summed-equation problem on a box.

    ``forcing`` may be a scalar, an array over cells, or a callable of t
    returning either.  ``g_dirichlet`` is the boundary value of phi(w), a
    scalar or callable of t.  ``cauchy=True`` means a vacuum box emulating the
    whole-space problem: g is forced to 0 and the solver aborts if the
    support reaches the boundary collar.
    """

    grid: Grid
    model: IsothermModel
    w0: np.ndarray
    forcing: object = 0.0
    g_dirichlet: object = 0.0
    T: float = 1.0
    cauchy: bool = False
    bound: float | None = None

    def __post_init__(self):
        self.w0 = np.asarray(self.w0, dtype=float)
        if self.w0.shape != self.grid.shape:
            raise InvariantError(f"w0 shape {self.w0.shape} != grid shape {self.grid.shape}")
        if np.any(self.w0 < 0):
            raise InvariantError("initial state must be nonnegative")
        if self.T <= 0:
            raise InvariantError(f"horizon T must be positive, got {self.T}")
        if self.cauchy and sup_over_time(self.g_dirichlet, self.T) != 0.0:
            raise InvariantError("a vacuum-box (cauchy) run requires zero boundary data")
        if self.bound is not None:
            if np.max(self.w0) > self.bound * (1 + 1e-12):
                raise InvariantError(f"w0 exceeds the declared bound {self.bound}")


def run_range_bound(model: IsothermModel, w0_sup: float, g_sup: float, f_sup: float, T: float) -> float:
    """A-priori sup bound for the whole run: max(sup w0, beta(sup g)) + T sup F."""
    return max(w0_sup, float(model.beta(g_sup))) + T * f_sup


def plan_steps(T: float, dt0: float, n_snapshots: int) -> tuple[int, float, int]:
    """(steps, dt, snapshot stride): dt is shrunk so the run lands exactly on T."""
    steps = max(1, math.ceil(T / dt0 - 1e-12))
    dt = T / steps
    stride = max(1, math.ceil(steps / n_snapshots))
    return steps, dt, stride


def solve_scalar(problem: ScalarProblem, config: SolverConfig | None = None) -> RunTrajectory:
    """Integrate the summed equation to the horizon, recording snapshots.

    Snapshots (state copy plus diagnostics: mass, sup, inf, total energy
    density, cumulative gradient energy of the flux, support radius) are taken
    every ceil(steps / n_snapshots) steps and at t = 0 and t = T.
    """
    config = config or SolverConfig()
    grid, model = problem.grid, problem.model
    if config.regularize_eps is not None:
        model = model.regularize(config.regularize_eps)

    g_fn = 0.0 if problem.cauchy else problem.g_dirichlet
    g_sup = sup_over_time(g_fn, problem.T)
    f_sup = forcing_sup(problem.forcing, problem.T, grid)
    m_range = run_range_bound(model, float(np.max(problem.w0)), g_sup, f_sup, problem.T)

    if config.dt is not None:
        dt0 = config.dt
        if m_range > 0 and dt0 > hard_dt_limit(model, m_range, grid) * (1.0 + 1e-9):
            raise CflError(f"dt override {dt0} exceeds the stability limit for this data")
    else:
        dt0 = cfl_dt(model, m_range, grid, config.safety) if m_range > 0 else config.safety * min(grid.h) ** 2
    steps, dt, stride = plan_steps(problem.T, dt0, config.n_snapshots)

    center = config.support_center if config.support_center is not None else grid.center()
    traj = RunTrajectory(
        grid=grid, dt=dt, n_steps=steps, species=0, eps_supp=config.eps_supp,
        support_center=center, cauchy=problem.cauchy, problem=problem, model=model,
        diagnostics={k: [] for k in (
            "t", "mass", "sup_w", "inf_w", "energy_Psi", "cum_grad_energy", "support_radius")},
    )

    neg_tol = 1e-14 * max(m_range, 1e-30)
    collar = np.flatnonzero(collar_mask(grid, config.abort_margin_cells)) if problem.cauchy else None
    dist = grid.distance_from(center)
    cum_grad = 0.0

    def record(t: float, w: np.ndarray):
        if not np.all(np.isfinite(w)):
            raise InvariantError(f"non-finite state at t={t}")
        if float(np.min(w)) < -neg_tol:
            raise InvariantError(f"negativity beyond roundoff at t={t}: min={np.min(w)}")
        if float(np.max(w)) > m_range + 1e-8:
            raise InvariantError(f"sup bound violated at t={t}: {np.max(w)} > {m_range}")
        mask = w > config.eps_supp
        radius = float(np.max(dist[mask])) if mask.any() else 0.0
        d = traj.diagnostics
        d["t"].append(t)
        d["mass"].append(integrate_values(grid, w))
        d["sup_w"].append(float(np.max(w)))
        d["inf_w"].append(float(np.min(w)))
        d["energy_Psi"].append(integrate_values(grid, np.asarray(model.psi(np.maximum(w, 0.0)))))
        d["cum_grad_energy"].append(cum_grad)
        d["support_radius"].append(radius)
        traj.times.append(t)
        traj.w.append(w.copy())

    w = problem.w0.copy()
    record(0.0, w)
    for k in range(steps):
        t = k * dt
        G = model.phi(np.maximum(w, 0.0))
        cum_grad += dt * gradient_energy_values(grid, G)
        f_t = forcing_at(problem.forcing, t, grid)
        g_t = value_at(g_fn, t)
        w = w + dt * lap_values(grid, G, g_t) + dt * f_t
        if collar is not None and w.reshape(-1)[collar].max(initial=0.0) > config.eps_supp:
            traj.abort_reason = f"support reached the boundary collar at t={t + dt}"
            raise SupportBreachError(traj.abort_reason, trajectory=traj)
        if (k + 1) % stride == 0 or k + 1 == steps:
            record((k + 1) * dt, w)
    return traj
