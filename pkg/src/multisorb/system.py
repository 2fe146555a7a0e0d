"""Explicit integrator for the N-species system  du_i/dt = lap(rho * u_i) + f_i.

The mobility rho = phi(w)/w is evaluated once per step from a single scalar
field and shared by every species, so summing the species updates reproduces
the scalar scheme on w up to floating-point summation order.  Two solve modes
differ only in where that scalar field comes from:

* ``coupled``    -- rho from the recomputed sum of the current species states;
* ``decomposed`` -- rho from an auxiliary copy of w advanced by the scalar
  scheme itself (the sum of the species is then checked against it).

The boundary datum applies to the product rho*u_i: its face value is the
boundary concentration z_i, and the summed face values reproduce the scalar
datum g = |z|_1 exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CflError, InvariantError, SupportBreachError
from .grid import (
    DirichletConcentration,
    Grid,
    VacuumBox,
    collar_mask,
    gradient_energy_values,
    integrate_values,
    lap_values,
)
from .isotherm import IsothermModel
from .scalar import (
    cfl_dt,
    forcing_at,
    forcing_sup,
    hard_dt_limit,
    plan_steps,
    run_range_bound,
    step_w_values,
    sup_over_time,
    value_at,
)
from .trajectory import RunTrajectory, SolverConfig


def boundary_translate(model: IsothermModel, z_values) -> tuple[float, np.ndarray]:
    """Translate boundary concentrations into the scalar datum and densities.

    Returns (g, u_boundary) with g = |z|_1 (the Dirichlet value for phi(w))
    and u_i = z_i / rho(beta(g)) the per-species boundary densities, which
    sum to beta(g).  A zero z gives all zeros.
    """
    z = np.asarray(z_values, dtype=float)
    if np.any(z < 0):
        raise InvariantError("boundary concentrations must be nonnegative")
    g = float(z.sum())
    if g == 0.0:
        return 0.0, np.zeros_like(z)
    w_b = float(model.beta(g))
    return g, z / float(model.rho(w_b))


def _boundary_values(boundary, n: int, t: float) -> np.ndarray:
    if boundary is None or isinstance(boundary, VacuumBox):
        return np.zeros(n)
    if isinstance(boundary, DirichletConcentration):
        z = boundary.at(t)
    else:
        z = np.array([value_at(v, t) for v in boundary], dtype=float)
    if z.shape != (n,):
        raise InvariantError(f"expected {n} boundary values, got shape {z.shape}")
    if np.any(z < 0):
        raise InvariantError("boundary concentrations must be nonnegative")
    return z


@dataclass
class SpeciesState:
    """Stacked species densities on a grid at one instant.

    ``u`` has shape (N, *grid.shape).  The sum w and the mobility rho are
    always derived from ``u``, never stored.
    """

    grid: Grid
    u: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.ndim != self.grid.dim + 1 or self.u.shape[1:] != self.grid.shape:
            raise InvariantError(f"u shape {self.u.shape} incompatible with grid {self.grid.shape}")

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def w(self) -> np.ndarray:
        return self.u.sum(axis=0)

    def rho(self, model: IsothermModel) -> np.ndarray:
        return np.asarray(model.rho(np.maximum(self.w, 0.0)))


@dataclass
class SystemProblem:
    """N-species problem on a box.

    ``forcing`` is a sequence of per-species data (scalar, array, or callable
    of t).  ``boundary`` is VacuumBox (Cauchy emulation, with the support
    monitor armed) or DirichletConcentration.  ``bound`` is the declared data
    bound M; when omitted it defaults to the observed data maximum.
    """

    grid: Grid
    model: IsothermModel
    u0: np.ndarray
    forcing: tuple = ()
    boundary: object = VacuumBox()
    T: float = 1.0
    bound: float | None = None
    mode: str = "coupled"

    def __post_init__(self):
        self.u0 = np.asarray(self.u0, dtype=float)
        if self.u0.ndim != self.grid.dim + 1:
            raise InvariantError("u0 must be stacked per species: shape (N, *grid.shape)")
        if self.u0.shape[1:] != self.grid.shape:
            raise InvariantError(f"u0 shape {self.u0.shape} incompatible with grid {self.grid.shape}")
        if np.any(self.u0 < 0):
            raise InvariantError("initial densities must be nonnegative")
        if self.T <= 0:
            raise InvariantError(f"horizon T must be positive, got {self.T}")
        if not self.forcing:
            self.forcing = tuple(0.0 for _ in range(self.n_species))
        if len(self.forcing) != self.n_species:
            raise InvariantError(f"expected {self.n_species} forcing entries, got {len(self.forcing)}")
        if self.mode not in ("coupled", "decomposed"):
            raise InvariantError(f"unknown mode {self.mode!r}")
        if self.bound is not None:
            if float(np.max(self.u0)) > self.bound * (1 + 1e-12):
                raise InvariantError(f"u0 exceeds the declared bound M={self.bound}")

    @property
    def n_species(self) -> int:
        return self.u0.shape[0]

    @property
    def cauchy(self) -> bool:
        return isinstance(self.boundary, VacuumBox)

    def summed_forcing(self):
        """Callable t -> sum of the per-species forcings (resolved on the grid)."""
        static = [f for f in self.forcing if not callable(f)]
        if len(static) == len(self.forcing):
            resolved = np.stack([np.broadcast_to(forcing_at(f, 0.0, self.grid), self.grid.shape)
                                 for f in self.forcing])
            total = resolved.sum(axis=0)
            return total

        def total_at(t):
            resolved = np.stack([np.broadcast_to(forcing_at(f, t, self.grid), self.grid.shape)
                                 for f in self.forcing])
            return resolved.sum(axis=0)

        return total_at

    def summed_dirichlet(self):
        if self.cauchy:
            return 0.0
        values = self.boundary.values if isinstance(self.boundary, DirichletConcentration) else self.boundary
        if all(not callable(v) for v in values):
            return float(np.sum([float(v) for v in values]))
        return lambda t: float(_boundary_values(self.boundary, self.n_species, t).sum())


def species_flux(model: IsothermModel, u: np.ndarray, w_source: np.ndarray) -> np.ndarray:
    """Per-species flux variables rho(w) * u_i.

    For a single species the algebraic identity rho(w) u_1 = phi(w) is used
    directly, which makes the one-species system reduce to the scalar scheme
    bit for bit.
    """
    w_pos = np.maximum(w_source, 0.0)
    if u.shape[0] == 1:
        return np.asarray(model.phi(w_pos))[None]
    return np.asarray(model.rho(w_pos)) * u


def step_species_values(
    grid: Grid, model: IsothermModel, u: np.ndarray, w_source: np.ndarray, f_res, z_t: np.ndarray, dt: float
) -> np.ndarray:
    """One unguarded explicit step of every species with frozen mobility."""
    flux = species_flux(model, u, w_source)
    out = np.empty_like(u)
    for i in range(u.shape[0]):
        f_i = f_res[i] if f_res is not None else 0.0
        out[i] = u[i] + dt * lap_values(grid, flux[i], float(z_t[i])) + dt * f_i
    return out


def _resolve_forcings(forcing, t: float, grid: Grid):
    return [forcing_at(f, t, grid) for f in forcing] if forcing else None


def _guard_state(model: IsothermModel, grid: Grid, dt: float, state: SpeciesState, z_t: np.ndarray):
    sup_state = max(float(np.max(state.w)), float(model.beta(float(z_t.sum()))))
    if sup_state > 0 and dt > hard_dt_limit(model, sup_state, grid) * (1.0 + 1e-9):
        raise CflError(f"dt={dt} exceeds the explicit stability limit for state sup {sup_state}")


def step_coupled(state: SpeciesState, forcing, boundary, model: IsothermModel, dt: float) -> SpeciesState:
    """One explicit step with the mobility recomputed from the current sum."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    z_t = _boundary_values(boundary, state.n, state.t)
    _guard_state(model, state.grid, dt, state, z_t)
    f_res = _resolve_forcings(forcing, state.t, state.grid)
    u_new = step_species_values(state.grid, model, state.u, state.w, f_res, z_t, dt)
    return SpeciesState(state.grid, u_new, state.t + dt)


def step_decomposed(state: SpeciesState, forcing, boundary, model: IsothermModel, dt: float) -> SpeciesState:
    """One step of the two-stage scheme: advance w by the scalar kernel, then
    every species with the mobility frozen at the pre-step w.

    With the mobility shared, the species update coincides with step_coupled;
    the independently advanced w is checked against the recomputed sum.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    z_t = _boundary_values(boundary, state.n, state.t)
    _guard_state(model, state.grid, dt, state, z_t)
    f_res = _resolve_forcings(forcing, state.t, state.grid)
    w_pre = state.w
    if f_res is not None:
        f_sum = np.sum(np.stack([np.broadcast_to(f, state.grid.shape) for f in f_res]), axis=0)
    else:
        f_sum = 0.0
    w_next = step_w_values(state.grid, model, w_pre, f_sum, float(z_t.sum()), dt)
    u_new = step_species_values(state.grid, model, state.u, w_pre, f_res, z_t, dt)
    dev = float(np.max(np.abs(u_new.sum(axis=0) - w_next)))
    scale = max(float(np.max(np.abs(w_pre))), 1e-30)
    if dev > 1e-9 * scale:
        raise InvariantError(f"decomposed step lost consistency: |sum u - w| = {dev}")
    return SpeciesState(state.grid, u_new, state.t + dt)


def concentration_view(state: SpeciesState, model: IsothermModel) -> np.ndarray:
    """Concentrations z = rho(w) u per species; vacuum cells map to zero."""
    return model.map_b_inverse(np.maximum(state.u, 0.0))


def solve_system(problem: SystemProblem, config: SolverConfig | None = None) -> RunTrajectory:
    """Integrate the species system, recording per-species snapshots.

    The time step is the scalar CFL step computed from the summed data, so a
    scalar run on (sum u0, sum f, |z|_1) lands on identical step times.  The
    trajectory carries the scalar diagnostics of w plus per-species mass, sup
    and cumulative gradient energy of the flux variable; decomposed runs also
    record the drift between sum(u) and the independently advanced w.
    """
    config = config or SolverConfig()
    grid, model = problem.grid, problem.model
    if config.regularize_eps is not None:
        model = model.regularize(config.regularize_eps)
    n = problem.n_species
    mode = problem.mode if problem.mode else config.mode

    g_data = problem.summed_dirichlet()
    g_sup = sup_over_time(g_data, problem.T)
    f_total = problem.summed_forcing()
    f_sup = forcing_sup(f_total, problem.T, grid)
    w0 = problem.u0.sum(axis=0)
    m_range = run_range_bound(model, float(np.max(w0)), g_sup, f_sup, problem.T)

    if config.dt is not None:
        dt0 = config.dt
        if m_range > 0 and dt0 > hard_dt_limit(model, m_range, grid) * (1.0 + 1e-9):
            raise CflError(f"dt override {dt0} exceeds the stability limit for this data")
    else:
        dt0 = cfl_dt(model, m_range, grid, config.safety) if m_range > 0 else config.safety * min(grid.h) ** 2
    steps, dt, stride = plan_steps(problem.T, dt0, config.n_snapshots)

    center = config.support_center if config.support_center is not None else grid.center()
    diag_keys = ["t", "mass", "sup_w", "inf_w", "energy_Psi", "cum_grad_energy", "support_radius"]
    for i in range(n):
        diag_keys += [f"mass_{i + 1}", f"sup_{i + 1}", f"grad_energy_rho_u{i + 1}"]
    if mode == "decomposed":
        diag_keys.append("decoupling_dev")
    traj = RunTrajectory(
        grid=grid, dt=dt, n_steps=steps, species=n, eps_supp=config.eps_supp,
        support_center=center, cauchy=problem.cauchy, problem=problem, model=model,
        u=[], diagnostics={k: [] for k in diag_keys},
    )

    neg_tol = 1e-14 * max(m_range, 1e-30)
    collar = np.flatnonzero(collar_mask(grid, config.abort_margin_cells)) if problem.cauchy else None
    dist = grid.distance_from(center)
    cum_grad_w = 0.0
    cum_grad_u = np.zeros(n)

    def record(t: float, u: np.ndarray, w_aux):
        w = u.sum(axis=0)
        if not np.all(np.isfinite(u)):
            raise InvariantError(f"non-finite state at t={t}")
        if float(np.min(u)) < -neg_tol:
            raise InvariantError(f"species negativity beyond roundoff at t={t}: {np.min(u)}")
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
        d["cum_grad_energy"].append(cum_grad_w)
        d["support_radius"].append(radius)
        for i in range(n):
            d[f"mass_{i + 1}"].append(integrate_values(grid, u[i]))
            d[f"sup_{i + 1}"].append(float(np.max(u[i])))
            d[f"grad_energy_rho_u{i + 1}"].append(float(cum_grad_u[i]))
        if mode == "decomposed":
            d["decoupling_dev"].append(
                0.0 if w_aux is None else float(np.max(np.abs(w - w_aux))))
        traj.times.append(t)
        traj.w.append(w)
        traj.u.append(u.copy())

    u = problem.u0.copy()
    w_aux = w0.copy() if mode == "decomposed" else None
    record(0.0, u, w_aux)
    for k in range(steps):
        t = k * dt
        z_t = _boundary_values(problem.boundary, n, t)
        w_src = u.sum(axis=0) if mode == "coupled" else w_aux
        flux = species_flux(model, u, w_src)
        cum_grad_w += dt * gradient_energy_values(grid, np.asarray(model.phi(np.maximum(w_src, 0.0))))
        for i in range(n):
            cum_grad_u[i] += dt * gradient_energy_values(grid, flux[i])
        f_res = _resolve_forcings(problem.forcing, t, grid)
        for i in range(n):
            f_i = f_res[i] if f_res is not None else 0.0
            u[i] = u[i] + dt * lap_values(grid, flux[i], float(z_t[i])) + dt * f_i
        if mode == "decomposed":
            f_sum = forcing_at(f_total, t, grid)
            w_aux = step_w_values(grid, model, w_aux, f_sum, float(z_t.sum()), dt)
        if collar is not None:
            w_now = u.sum(axis=0)
            if w_now.reshape(-1)[collar].max(initial=0.0) > config.eps_supp:
                traj.abort_reason = f"support reached the boundary collar at t={t + dt}"
                raise SupportBreachError(traj.abort_reason, trajectory=traj)
        if (k + 1) % stride == 0 or k + 1 == steps:
            record((k + 1) * dt, u, w_aux)
    return traj


def split_problem(problem: SystemProblem, k: int) -> tuple[SystemProblem, SystemProblem]:
    """Split an N-species problem into its first k and remaining species."""
    if not 1 <= k < problem.n_species:
        raise InvariantError(f"split index must be in [1, N-1], got {k}")
    if not problem.cauchy:
        raise InvariantError("splitting is defined for vacuum-box problems only")
    head = SystemProblem(
        grid=problem.grid, model=problem.model, u0=problem.u0[:k],
        forcing=tuple(problem.forcing[:k]), boundary=VacuumBox(), T=problem.T,
        bound=problem.bound, mode=problem.mode,
    )
    tail = SystemProblem(
        grid=problem.grid, model=problem.model, u0=problem.u0[k:],
        forcing=tuple(problem.forcing[k:]), boundary=VacuumBox(), T=problem.T,
        bound=problem.bound, mode=problem.mode,
    )
    return head, tail
