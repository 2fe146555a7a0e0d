"""Trajectory-level diagnostics: support tracking, growth-exponent fits,
persistence and separated-patch experiments, energy norms, weak-form
residuals, and sampled Hoelder moduli.

"Support" always means the eps_supp-superlevel set of a snapshot; exact zero
sets are meaningless in floating point, so every statement here is checked in
that thresholded sense and reports carry the threshold used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvariantError
from .grid import Grid, VacuumBox, gradient_energy_values, interior_mask
from .isotherm import IsothermModel
from .system import SystemProblem, solve_system, species_flux
from .trajectory import RunTrajectory, SolverConfig


# ---------------------------------------------------------------------------
# support tracking
# ---------------------------------------------------------------------------

@dataclass
class SupportSeries:
    """Per-snapshot support radius and cell count of w, plus per-species radii."""

    times: np.ndarray
    radii: np.ndarray
    cell_counts: np.ndarray
    eps_supp: float
    center: tuple
    species_radii: list[np.ndarray] | None = None


def support_series(traj: RunTrajectory, eps_supp: float, center) -> SupportSeries:
    """Radius and size of {w > eps_supp} at every snapshot.

    For system trajectories the per-species radii are computed as well and the
    containment supp u_i within supp w is asserted snapshot by snapshot.
    """
    dist = traj.grid.distance_from(center)
    times = np.asarray(traj.times)
    radii = np.empty(len(traj))
    counts = np.empty(len(traj), dtype=int)
    species_radii = None
    if traj.u is not None:
        species_radii = [np.empty(len(traj)) for _ in range(traj.species)]
    for k, w in enumerate(traj.w):
        mask = w > eps_supp
        counts[k] = int(mask.sum())
        radii[k] = float(np.max(dist[mask])) if mask.any() else 0.0
        if traj.u is not None:
            for i in range(traj.species):
                mi = traj.u[k][i] > eps_supp
                if np.any(mi & ~mask):
                    raise InvariantError(
                        f"species {i + 1} support escapes the w support at t={traj.times[k]}")
                species_radii[i][k] = float(np.max(dist[mi])) if mi.any() else 0.0
    return SupportSeries(times=times, radii=radii, cell_counts=counts,
                         eps_supp=eps_supp, center=tuple(np.atleast_1d(center)),
                         species_radii=species_radii)


def fit_growth_exponent(series: SupportSeries, r0: float) -> tuple[float, float]:
    """Least-squares fit of R(t) = r0 + C1 t**lam on the log-log scale.

    Only samples with radius strictly above r0 and t > 0 enter; the first 20%
    of those are discarded as early transient.  Raises ValueError when fewer
    than five samples remain.
    """
    usable = (series.radii > r0) & (series.times > 0)
    t = series.times[usable]
    r = series.radii[usable]
    skip = int(0.2 * len(t))
    t, r = t[skip:], r[skip:]
    if len(t) < 5:
        raise ValueError(f"need at least 5 growing samples to fit, have {len(t)}")
    slope, intercept = np.polyfit(np.log(t), np.log(r - r0), 1)
    return float(np.exp(intercept)), float(slope)


def check_persistence(traj: RunTrajectory, eps_supp: float) -> list[tuple[float, float, int]]:
    """Cells lost between consecutive snapshots; empty list means the support
    is non-contracting in time (in the thresholded sense)."""
    violations = []
    prev_mask = None
    prev_t = None
    for t, w in zip(traj.times, traj.w):
        mask = w > eps_supp
        if prev_mask is not None:
            lost = prev_mask & ~mask
            if lost.any():
                violations.append((prev_t, t, int(lost.sum())))
        prev_mask, prev_t = mask, t
    return violations


# ---------------------------------------------------------------------------
# separated-patch (divide-and-rule) experiment
# ---------------------------------------------------------------------------

@dataclass
class DivideRuleReport:
    """Outcome of the separated-patch experiment.

    ``touch_time`` is the first time the thresholded supports of the two
    block sums share a cell (math.inf when they never do); deviations compare
    the full-system species against the block solutions padded with zeros.
    ``post_touch_dev_series`` carries (t, deviation) pairs at full step
    resolution for the window right after touch, then at snapshot resolution.
    """

    touch_time: float
    pre_touch_max_dev: float
    post_touch_dev_series: list[tuple[float, float]]
    initial_distance: float
    eps_supp: float
    full: RunTrajectory
    hat: RunTrajectory
    check: RunTrajectory


def _masks_touch(w_a: np.ndarray, w_b: np.ndarray, eps: float) -> bool:
    return bool(np.any((w_a > eps) & (w_b > eps)))


def _support_distance(grid: Grid, w_a: np.ndarray, w_b: np.ndarray, eps: float) -> float:
    mask_a = w_a > eps
    mask_b = w_b > eps
    if not mask_a.any() or not mask_b.any():
        return math.inf
    meshes = grid.meshes()
    pts_a = np.stack([m[mask_a] for m in meshes], axis=1)
    pts_b = np.stack([m[mask_b] for m in meshes], axis=1)
    d2 = ((pts_a[:, None, :] - pts_b[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.min()))


def _pad_blocks(u_hat: np.ndarray, u_check: np.ndarray) -> np.ndarray:
    return np.concatenate([u_hat, u_check], axis=0)


def divide_rule_experiment(
    spec_hat: SystemProblem,
    spec_check: SystemProblem,
    T: float,
    config: SolverConfig | None = None,
    post_touch_steps: int = 50,
) -> DivideRuleReport:
    """Run the full system and its two separated blocks and compare them.

    Preconditions: both blocks live on the same grid with the same degenerate
    (slow-diffusion) model, vacuum boundaries, no forcing, and initially
    disjoint thresholded supports at positive distance.  All three solves use
    the time step of the full problem so trajectories are step-aligned.

    Touch is detected at snapshot resolution, then sharpened by re-running the
    two blocks step by step from the bracketing snapshot.  Right after touch
    the three solutions are stepped jointly for ``post_touch_steps`` steps to
    capture the deviation blow-up at full resolution.
    """
    config = config or SolverConfig()
    if spec_hat.grid != spec_check.grid:
        raise InvariantError("blocks must share one grid")
    if repr(spec_hat.model) != repr(spec_check.model):
        raise InvariantError("blocks must share one model")
    model = spec_hat.model
    if not model.is_degenerate:
        raise InvariantError("separated-patch experiment requires a degenerate model (phi'(0) = 0)")
    for spec in (spec_hat, spec_check):
        if not spec.cauchy:
            raise InvariantError("separated-patch experiment requires vacuum boundaries")
        if any(callable(f) or np.any(np.asarray(f, dtype=float) != 0.0) for f in spec.forcing):
            raise InvariantError("separated-patch experiment requires zero forcing")

    grid = spec_hat.grid
    eps = config.eps_supp
    w_hat0 = spec_hat.u0.sum(axis=0)
    w_check0 = spec_check.u0.sum(axis=0)
    if _masks_touch(w_hat0, w_check0, eps):
        raise InvariantError("initial supports overlap; they must be separated")
    d0 = _support_distance(grid, w_hat0, w_check0, eps)
    if not d0 > 0:
        raise InvariantError("initial supports must be at positive distance")

    full_problem = SystemProblem(
        grid=grid, model=model,
        u0=np.concatenate([spec_hat.u0, spec_check.u0], axis=0),
        boundary=VacuumBox(), T=T,
        bound=max(b for b in (spec_hat.bound, spec_check.bound, 0.0) if b is not None),
        mode="coupled",
    )
    if full_problem.bound == 0.0:
        full_problem.bound = None

    # one shared step size: the full problem's CFL step
    from .scalar import cfl_dt, plan_steps, run_range_bound

    m_range = run_range_bound(model, float(np.max(full_problem.u0.sum(axis=0))), 0.0, 0.0, T)
    dt_shared = config.dt or cfl_dt(model, m_range, grid, config.safety)
    cfg = replace(config, dt=dt_shared, mode="coupled")

    hat_T = replace_problem_horizon(spec_hat, T)
    check_T = replace_problem_horizon(spec_check, T)
    traj_full = solve_system(full_problem, cfg)
    traj_hat = solve_system(hat_T, cfg)
    traj_check = solve_system(check_T, cfg)

    n_hat = spec_hat.n_species
    devs = np.array([
        float(np.max(np.abs(traj_full.u[k] - _pad_blocks(traj_hat.u[k], traj_check.u[k]))))
        for k in range(len(traj_full))
    ])
    touched = [k for k in range(len(traj_full))
               if _masks_touch(traj_hat.w[k], traj_check.w[k], eps)]

    if not touched:
        return DivideRuleReport(
            touch_time=math.inf,
            pre_touch_max_dev=float(devs.max(initial=0.0)),
            post_touch_dev_series=[],
            initial_distance=d0, eps_supp=eps,
            full=traj_full, hat=traj_hat, check=traj_check,
        )

    k_touch = touched[0]
    k_from = max(0, k_touch - 1)
    dt = traj_full.dt

    # sharpen touch and record the post-touch window at step resolution
    u_full = traj_full.u[k_from].copy()
    u_hat = traj_hat.u[k_from].copy()
    u_check = traj_check.u[k_from].copy()
    t = traj_full.times[k_from]
    zeros_hat = np.zeros(n_hat)
    zeros_check = np.zeros(spec_check.n_species)
    zeros_full = np.zeros(full_problem.n_species)
    pre_devs = [devs[k] for k in range(k_from + 1)]
    touch_time = None
    post_series: list[tuple[float, float]] = []
    guard = 0
    from .system import step_species_values

    while guard < 10 * traj_full.n_steps:
        guard += 1
        u_full = step_species_values(grid, model, u_full, u_full.sum(axis=0), None, zeros_full, dt)
        u_hat = step_species_values(grid, model, u_hat, u_hat.sum(axis=0), None, zeros_hat, dt)
        u_check = step_species_values(grid, model, u_check, u_check.sum(axis=0), None, zeros_check, dt)
        t += dt
        dev = float(np.max(np.abs(u_full - _pad_blocks(u_hat, u_check))))
        if touch_time is None:
            if _masks_touch(u_hat.sum(axis=0), u_check.sum(axis=0), eps):
                touch_time = t
                post_series.append((t, dev))
            else:
                pre_devs.append(dev)
        else:
            post_series.append((t, dev))
            if len(post_series) > post_touch_steps:
                break
        if touch_time is None and t >= T:
            break

    if touch_time is None:
        # thresholded supports touched only at snapshot resolution boundary; treat
        # the bracketing snapshot time as touch
        touch_time = traj_full.times[k_touch]
    post_series.extend(
        (traj_full.times[k], float(devs[k]))
        for k in range(len(traj_full))
        if traj_full.times[k] > (post_series[-1][0] if post_series else touch_time)
    )
    return DivideRuleReport(
        touch_time=float(touch_time),
        pre_touch_max_dev=float(np.max(pre_devs)) if pre_devs else 0.0,
        post_touch_dev_series=post_series,
        initial_distance=d0, eps_supp=eps,
        full=traj_full, hat=traj_hat, check=traj_check,
    )


def replace_problem_horizon(problem: SystemProblem, T: float) -> SystemProblem:
    return SystemProblem(
        grid=problem.grid, model=problem.model, u0=problem.u0,
        forcing=problem.forcing, boundary=problem.boundary, T=T,
        bound=problem.bound, mode=problem.mode,
    )


# ---------------------------------------------------------------------------
# energy norms and weak residuals
# ---------------------------------------------------------------------------

@dataclass
class EnergyNorms:
    """Cumulative discrete L2 gradient norms over the run.

    The flux norm of w is global; the per-species norms are restricted to the
    window of cells at least ``margin_cells`` from the boundary.
    """

    w_norm: float
    species_norms: np.ndarray
    margin_cells: int


def energy_norms(traj: RunTrajectory, margin_cells: int) -> EnergyNorms:
    """Time-cumulative gradient norms from snapshots (left-endpoint rule)."""
    if margin_cells < 2:
        raise ValueError(f"interior margin must be >= 2 cells, got {margin_cells}")
    grid = traj.grid
    window = interior_mask(grid, margin_cells)
    if not window.any():
        raise ValueError("interior window is empty for this margin")
    model: IsothermModel = traj.model
    n = traj.species
    acc_w = 0.0
    acc_u = np.zeros(max(n, 1))
    for k in range(len(traj) - 1):
        dt_k = traj.times[k + 1] - traj.times[k]
        w = np.maximum(traj.w[k], 0.0)
        acc_w += dt_k * gradient_energy_values(grid, np.asarray(model.phi(w)))
        if traj.u is not None:
            flux = species_flux(model, traj.u[k], traj.w[k])
            for i in range(n):
                acc_u[i] += dt_k * gradient_energy_values(grid, flux[i], mask=window)
    return EnergyNorms(
        w_norm=float(np.sqrt(acc_w)),
        species_norms=np.sqrt(acc_u[:n]) if n else np.array([]),
        margin_cells=margin_cells,
    )


@dataclass
class SpaceTimeBump:
    """Smooth compactly supported test function phi(x, t) = g(|x-c|) q(t).

    The spatial factor is ((1 - (d/r)^2)_+)^3 (C^2 across the edge) and the
    temporal factor decays to zero at ``t_end`` with q(t) = ((1 - (t/t_end)^2)_+)^3,
    so the weak form needs no terminal-time term.
    """

    center: tuple
    radius: float
    t_end: float

    def _s(self, grid: Grid) -> np.ndarray:
        return (grid.distance_from(self.center) / self.radius) ** 2

    def _q(self, t: float) -> float:
        z = 1.0 - (t / self.t_end) ** 2
        return z**3 if z > 0 else 0.0

    def _q_dot(self, t: float) -> float:
        z = 1.0 - (t / self.t_end) ** 2
        return -6.0 * (t / self.t_end**2) * z**2 if z > 0 else 0.0

    def value(self, grid: Grid, t: float) -> np.ndarray:
        s = self._s(grid)
        return np.where(s < 1.0, (1.0 - s) ** 3, 0.0) * self._q(t)

    def dt(self, grid: Grid, t: float) -> np.ndarray:
        s = self._s(grid)
        return np.where(s < 1.0, (1.0 - s) ** 3, 0.0) * self._q_dot(t)

    def laplacian(self, grid: Grid, t: float) -> np.ndarray:
        s = self._s(grid)
        body = (1.0 - s) * (24.0 * s - 6.0 * grid.dim * (1.0 - s)) / self.radius**2
        return np.where(s < 1.0, body * (1.0 - s), 0.0) * self._q(t)

    def check_interior(self, grid: Grid) -> None:
        for axis in range(grid.dim):
            c = self.center[axis] if grid.dim > 1 or hasattr(self.center, "__len__") else self.center
            lo = grid.origin[axis] + grid.h[axis]
            hi = grid.origin[axis] + grid.extent[axis] - grid.h[axis]
            if c - self.radius < lo or c + self.radius > hi:
                raise ValueError("test function must be compactly supported in the interior")


def weak_residual(traj: RunTrajectory, test: SpaceTimeBump) -> np.ndarray:
    """Discrete residual of the very-weak form, one value per species.

    Quadrature is midpoint in space (cell centers) and trapezoidal in time
    over the stored snapshots:
        int int { u_i dphi/dt + rho u_i lap(phi) + f_i phi } + int u_i(0) phi(., 0).
    The test function must vanish before the final snapshot and be supported
    away from the boundary; the residual then tends to zero under grid, step
    and snapshot refinement.
    """
    grid = traj.grid
    test.check_interior(grid)
    if traj.u is None:
        raise ValueError("weak_residual needs a species trajectory")
    model: IsothermModel = traj.model
    problem: SystemProblem = traj.problem
    n = traj.species
    vol = grid.cell_volume
    times = np.asarray(traj.times)
    integrand = np.zeros((len(times), n))
    from .scalar import forcing_at

    for k, t in enumerate(times):
        phi_v = test.value(grid, t)
        phi_t = test.dt(grid, t)
        phi_lap = test.laplacian(grid, t)
        flux = species_flux(model, traj.u[k], traj.w[k])
        for i in range(n):
            f_i = forcing_at(problem.forcing[i], float(t), grid) if problem is not None else 0.0
            integrand[k, i] = float(
                np.sum(traj.u[k][i] * phi_t + flux[i] * phi_lap + f_i * phi_v) * vol)
    residual = np.trapezoid(integrand, x=times, axis=0)
    ic = np.array([float(np.sum(traj.u[0][i] * test.value(grid, 0.0)) * vol) for i in range(n)])
    return residual + ic


# ---------------------------------------------------------------------------
# Hoelder modulus and sup-bound monitor
# ---------------------------------------------------------------------------

@dataclass
class HolderEstimate:
    """Sampled parabolic difference quotient at a probed exponent."""

    alpha: float
    margin_cells: int
    tau: float
    quotient: float
    pairs: int


def holder_modulus(
    traj: RunTrajectory, alpha: float, margin_cells: int, tau: float,
    sample_pairs: int = 4000, seed: int = 0,
) -> HolderEstimate:
    """Max of |u(x,t) - u(y,s)| / (|x-y| + |t-s|^(1/2))^alpha over sampled pairs.

    The window keeps ``margin_cells`` away from the boundary and times >= tau.
    Half of the pairs share the same snapshot so purely spatial increments are
    always probed.  Sampling is deterministic for a given seed.
    """
    if tau <= 0 or margin_cells <= 0:
        raise ValueError("window must be strictly interior: tau > 0 and margin_cells > 0")
    grid = traj.grid
    window = interior_mask(grid, margin_cells)
    if not window.any():
        raise ValueError("interior window is empty")
    t_idx = [k for k, t in enumerate(traj.times) if t >= tau]
    if not t_idx:
        raise ValueError("no snapshots at or after tau")
    cells = np.flatnonzero(window.reshape(-1))
    meshes = [m.reshape(-1) for m in grid.meshes()]
    rng = np.random.default_rng(seed)
    ks = rng.choice(len(t_idx), size=(sample_pairs, 2))
    ks[: sample_pairs // 2, 1] = ks[: sample_pairs // 2, 0]  # same-time pairs
    cs = rng.choice(len(cells), size=(sample_pairs, 2))

    def state(k):
        if traj.u is not None:
            return traj.u[k].reshape(traj.species, -1)
        return traj.w[k].reshape(1, -1)

    best = 0.0
    for (ka, kb), (ca, cb) in zip(ks, cs):
        ta, tb = traj.times[t_idx[ka]], traj.times[t_idx[kb]]
        ia, ib = cells[ca], cells[cb]
        dx = math.sqrt(sum((m[ia] - m[ib]) ** 2 for m in meshes))
        denom = dx + math.sqrt(abs(ta - tb))
        if denom == 0.0:
            continue
        du = float(np.max(np.abs(state(t_idx[ka])[:, ia] - state(t_idx[kb])[:, ib])))
        best = max(best, du / denom**alpha)
    return HolderEstimate(alpha=alpha, margin_cells=margin_cells, tau=tau,
                          quotient=best, pairs=sample_pairs)


def comparison_monitor(traj: RunTrajectory, bound: float, T: float) -> bool:
    """True iff sup over the trajectory of w stays below bound*(1+T) + 1e-8."""
    sup = max(float(np.max(w)) for w in traj.w)
    return sup <= bound * (1.0 + T) + 1e-8


# ---------------------------------------------------------------------------
# closed-form self-similar benchmark (independent of the solvers)
# ---------------------------------------------------------------------------

def selfsim_exponent(m: float, n: int) -> float:
    """Radius growth exponent of the self-similar source solution: 1/(n(m-1)+2)."""
    return 1.0 / (n * (m - 1.0) + 2.0)


def _selfsim_params(m: float, n: int, mass: float) -> tuple[float, float, float]:
    alpha = n / (n * (m - 1.0) + 2.0)
    k = alpha * (m - 1.0) / (2.0 * m * n)
    gamma = 1.0 / (m - 1.0)
    if n == 1:
        shape = math.sqrt(math.pi) * math.gamma(gamma + 1.0) / math.gamma(gamma + 1.5)
        c = (mass * math.sqrt(k) / shape) ** (1.0 / (gamma + 0.5))
    elif n == 2:
        c = (mass * k * (gamma + 1.0) / math.pi) ** (1.0 / (gamma + 1.0))
    else:
        raise ValueError("self-similar benchmark supports n in {1, 2}")
    return alpha, k, c


def selfsim_profile(grid: Grid, t: float, m: float, mass: float, t0: float, center=None) -> np.ndarray:
    """Exact source-type solution of dw/dt = lap(w**m) sampled at cell centers.

    The profile has total mass ``mass`` and age ``t0 + t``; it solves the
    equation exactly, so it serves as an independent oracle for power-law
    models with exponent m > 1.
    """
    if m <= 1.0:
        raise ValueError("the self-similar profile needs m > 1")
    if t0 <= 0:
        raise ValueError("t0 must be positive")
    n = grid.dim
    alpha, k, c = _selfsim_params(m, n, mass)
    tt = t0 + t
    center = grid.center() if center is None else center
    d2 = grid.distance_from(center) ** 2
    core = c - k * d2 * tt ** (-2.0 * alpha / n)
    return tt ** (-alpha) * np.maximum(core, 0.0) ** (1.0 / (m - 1.0))


def selfsim_radius(t: float, m: float, mass: float, t0: float, n: int = 1) -> float:
    """Support radius of the self-similar profile at age t0 + t."""
    alpha, k, c = _selfsim_params(m, n, mass)
    return math.sqrt(c / k) * (t0 + t) ** (alpha / n)
