"""Time grids, mean traces, and per-trajectory records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, NumericalError

DEFAULT_DT = 1e-3
MAX_DEFAULT_DT = 2e-3


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid [t0, T] with step dt; (T - t0)/dt must be an integer."""

    t0: float = 0.0
    T: float = 80.0
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError(f"dt={self.dt} must be > 0")
        if self.T <= self.t0:
            raise ConfigurationError(f"T={self.T} must exceed t0={self.t0}")
        n = (self.T - self.t0) / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigurationError(f"(T - t0)/dt = {n} is not an integer")

    @property
    def n_steps(self) -> int:
        return int(round((self.T - self.t0) / self.dt))

    def points(self) -> np.ndarray:
        """All n_steps + 1 grid points including both endpoints."""
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def left_points(self) -> np.ndarray:
        """Left endpoints of the n_steps intervals (where kernels are sampled)."""
        return self.t0 + self.dt * np.arange(self.n_steps)

    def coarsened(self, factor: int) -> "TimeGrid":
        if self.n_steps % factor:
            raise ConfigurationError(
                f"cannot coarsen a {self.n_steps}-step grid by {factor}"
            )
        return TimeGrid(self.t0, self.T, self.dt * factor)


@dataclass
class MeanTrace:
    """A (possibly complex) time series on a grid, with optional standard errors."""

    grid: TimeGrid
    values: np.ndarray
    label: str = ""
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if not np.all(np.isfinite(self.values.view(np.float64))):
            raise NumericalError(f"trace {self.label!r} contains non-finite entries")

    def real(self) -> np.ndarray:
        return np.ascontiguousarray(self.values.real)


@dataclass
class Diagnostics:
    """Per-trajectory health indicators."""

    final_norm_drift: float = 0.0
    max_norm_drift: float = 0.0
    max_top_level_population: float = 0.0
    max_jump_probability: float = 0.0
    flagged: bool = False
    flag_reason: str = ""


@dataclass
class TrajectoryRecord:
    """One stochastic run: stored current increments dQ_k = I_k dt per channel."""

    grid: TimeGrid
    currents: dict[str, np.ndarray]
    jump_times: np.ndarray
    seed: int
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def __post_init__(self):
        n = self.grid.n_steps
        for label, dq in self.currents.items():
            if dq.shape != (n,):
                raise ConfigurationError(
                    f"channel {label!r} has {dq.shape[0]} samples, expected {n}"
                )
