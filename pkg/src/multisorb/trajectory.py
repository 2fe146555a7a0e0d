"""Run configuration and the trajectory container shared by both solvers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grid import Grid

_MODES = ("coupled", "decomposed")


@dataclass
class SolverConfig:
    """Knobs common to every run.

    ``dt`` overrides the automatic CFL step (it is still validated against the
    hard stability limit); ``regularize_eps`` switches the solver to the
    globally Lipschitz surrogate nonlinearity, for experiments only.
    """

    safety: float = 0.5
    eps_supp: float = 1e-8
    inversion_tol: float = 1e-12
    n_snapshots: int = 50
    mode: str = "coupled"
    dt: float | None = None
    regularize_eps: float | None = None
    support_center: tuple | None = None
    abort_margin_cells: int = 3

    def __post_init__(self):
        if not 0.0 < self.safety <= 1.0:
            raise ValueError(f"safety must be in (0, 1], got {self.safety}")
        if self.eps_supp <= 0:
            raise ValueError("eps_supp must be positive")
        if self.n_snapshots < 1:
            raise ValueError("n_snapshots must be >= 1")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt override must be positive")

    def with_dt(self, dt: float) -> "SolverConfig":
        return replace(self, dt=dt)


@dataclass
class StepReport:
    """Introspection record for a single explicit step."""

    dt: float
    w_min: float
    w_max: float
    cfl_ratio: float
    mass_before: float
    mass_after: float


@dataclass
class RunTrajectory:
    """Timestamped snapshots plus diagnostic series for one solve.

    ``w`` holds one array per snapshot.  For system runs ``u`` additionally
    holds the stacked per-species arrays (shape (N, ...)); scalar runs leave
    it ``None`` and report ``species == 0``.
    """

    grid: Grid
    dt: float
    n_steps: int
    species: int
    eps_supp: float
    support_center: tuple
    cauchy: bool
    times: list[float] = field(default_factory=list)
    w: list[np.ndarray] = field(default_factory=list)
    u: list[np.ndarray] | None = None
    diagnostics: dict[str, list[float]] = field(default_factory=dict)
    abort_reason: str | None = None
    problem: object | None = None
    model: object | None = None

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final_time(self) -> float:
        return self.times[-1] if self.times else 0.0

    def snapshot(self, k: int):
        """(t, w, u) of the k-th snapshot (u is None for scalar runs)."""
        return self.times[k], self.w[k], None if self.u is None else self.u[k]
