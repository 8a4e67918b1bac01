"""Monte-Carlo orchestration: seeded ensembles, decision statistics, reports.

Per-trajectory seeds come from the documented splitting function in
qtraj.seeding, so any single trajectory can be re-run in isolation.
Filtering (and the optional likelihood filter) runs inside the workers
right after each trajectory, so records never accumulate in memory
beyond the configured retention sample.  All reductions are fixed-order
(see dynamics.trajectory), making reports bit-identical across worker
counts.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import EnsembleConfig, config_to_dict, set_config_value, config_from_dict
from .detection import DecisionStats, FilterKernel, combine_two_channel, decide, matched_kernel
from .dynamics.engine import compile_sse
from .dynamics.trajectory import TraceRequest, default_workers, run_study
from .dynamics.types import Diagnostics, TimeGrid, TrajectoryRecord
from .errors import ConfigurationError, NumericalError
from .hypotest import compile_hypothesis_filter, posterior_one_photon
from .model import CascadeModel, build_single_unit, build_two_unit, initial_state
from .seeding import derive_sweep_seed, derive_trajectory_seed

FLAG_ABORT_FRACTION = 0.01


def build_model(cfg: EnsembleConfig) -> CascadeModel:
    if len(cfg.units) == 1:
        return build_single_unit(
            cfg.units[0], cfg.source, cfg.d_cavity, cfg.top_level_tolerance
        )
    return build_two_unit(
        cfg.units[0], cfg.units[1], cfg.source, cfg.d_cavity, cfg.top_level_tolerance
    )


@dataclass
class TrajectoryRow:
    """One line of the per-trajectory table."""

    traj_id: int
    hypothesis: int
    seed: int
    s: dict[str, float]
    s_ab: float | None
    jumps: int
    flagged: bool
    flag_reason: str = ""
    posterior: float | None = None


@dataclass
class EnsembleReport:
    """Deterministic study output; volatile runtime metadata lives elsewhere."""

    config: dict
    stats: DecisionStats
    kernels: dict[str, np.ndarray]
    orientation: float
    rows: list[TrajectoryRow]
    used: int
    flagged: int
    grid: TimeGrid
    channel_labels: list[str]
    hypothesis_test: dict | None = None
    sample_records: list = field(default_factory=list, repr=False)
    runtime_seconds: float = 0.0  # excluded from report.json

    def statistic_samples(self, hypothesis: int) -> np.ndarray:
        key = "s_ab" if len(self.kernels) == 2 else "cavA"
        vals = []
        for r in self.rows:
            if r.hypothesis == hypothesis and not r.flagged:
                vals.append(r.s_ab if key == "s_ab" else r.s["cavA"])
        return np.asarray(vals)


def _record_from_raw(raw, grid: TimeGrid, labels: list[str]) -> TrajectoryRecord:
    currents = {lab: np.ascontiguousarray(raw.dq[:, k]) for k, lab in enumerate(labels)}
    jump_steps = np.nonzero(raw.jump_mark)[0]
    return TrajectoryRecord(
        grid=grid,
        currents=currents,
        jump_times=grid.t0 + grid.dt * jump_steps,
        seed=raw.seed,
        diagnostics=raw.diagnostics,
    )


def run_ensemble(cfg: EnsembleConfig, kernel: FilterKernel | None = None) -> EnsembleReport:
    """Run n_traj trajectories per hypothesis and assemble the decision report."""
    t_start = time.perf_counter()
    if cfg.n_traj < 1:
        raise ConfigurationError("n_traj must be >= 1")
    if cfg.n_traj == 1:
        warnings.warn("n_traj=1 gives degenerate statistics", stacklevel=2)
    model = build_model(cfg)
    workers = cfg.parallelism or default_workers()
    compiled = compile_sse(model, cfg.grid.dt)
    if kernel is None:
        kernel = matched_kernel(
            model,
            cfg.grid,
            variant=cfg.kernel_variant,
            n_traj=cfg.kernel_estimator_M,
            smooth_width=cfg.kernel_smooth_width if model.n_units == 2 else 0.0,
            workers=workers,
        )
    cav_labels = model.cavity_channel_labels()
    h_arrays = [kernel.h[lab] for lab in cav_labels]

    hf = None
    if cfg.hypothesis_test:
        if model.n_units != 1:
            raise ConfigurationError("the hypothesis-testing filter supports single-unit models only")
        hf = compile_hypothesis_filter(model, cfg.grid, cfg.hypothesis_bin)

    keep_limit = {
        "all": cfg.n_traj,
        "sample": min(cfg.sample_per_hypothesis, cfg.n_traj),
        "none": 0,
    }[cfg.retention]

    all_rows: list[TrajectoryRow] = []
    sample_records: list[tuple[int, int, TrajectoryRecord]] = []

    for hyp in (0, 1):
        psi0 = initial_state(model, override_initial=f"fock{hyp}").data
        seeds = [derive_trajectory_seed(cfg.master_seed, hyp, i) for i in range(cfg.n_traj)]

        def per_traj(raw, _hyp=hyp):
            s = {
                lab: float(np.dot(h_arrays[k], raw.dq[:, k]))
                for k, lab in enumerate(cav_labels)
            }
            s_ab = (
                combine_two_channel(s[cav_labels[0]], s[cav_labels[1]])
                if len(cav_labels) == 2
                else None
            )
            post = None
            if hf is not None and not raw.diagnostics.flagged:
                post = posterior_one_photon(np.ascontiguousarray(raw.dq[:, 0]), hf)
            row = TrajectoryRow(
                traj_id=_hyp * cfg.n_traj + raw.index,
                hypothesis=_hyp,
                seed=raw.seed,
                s=s,
                s_ab=s_ab,
                jumps=int(raw.jump_mark.sum()),
                flagged=not raw.ok,
                flag_reason=raw.diagnostics.flag_reason,
                posterior=post,
            )
            rec = _record_from_raw(raw, cfg.grid, compiled.labels) if raw.index < keep_limit else None
            return (row, rec)

        results, _ = run_study(
            compiled,
            cfg.grid,
            psi0,
            seeds,
            per_traj=per_traj,
            traces=TraceRequest(x=False),
            workers=workers,
        )
        for row, rec in results:
            all_rows.append(row)
            if rec is not None:
                sample_records.append((row.traj_id, row.hypothesis, rec))

    flagged = sum(1 for r in all_rows if r.flagged)
    used = len(all_rows) - flagged
    if flagged > FLAG_ABORT_FRACTION * len(all_rows):
        raise NumericalError(
            f"{flagged}/{len(all_rows)} trajectories flagged (> {FLAG_ABORT_FRACTION:.0%}); aborting"
        )

    def stat(row: TrajectoryRow) -> float:
        return row.s_ab if len(cav_labels) == 2 else row.s[cav_labels[0]]

    s0 = np.asarray([stat(r) for r in all_rows if r.hypothesis == 0 and not r.flagged])
    s1 = np.asarray([stat(r) for r in all_rows if r.hypothesis == 1 and not r.flagged])

    orientation = 1.0
    if s0.size and s1.size and s1.mean() < s0.mean():
        orientation = -1.0
        kernel = kernel.flipped()
        for r in all_rows:
            r.s = {k: -v for k, v in r.s.items()}
            if r.s_ab is not None:
                r.s_ab = -r.s_ab
        s0, s1 = -s0, -s1

    stats = decide(s0, s1, orientation=orientation)

    ht = None
    if hf is not None:
        p0 = [r.posterior for r in all_rows if r.hypothesis == 0 and not r.flagged]
        p1 = [r.posterior for r in all_rows if r.hypothesis == 1 and not r.flagged]
        acc0 = float(np.mean([p <= 0.5 for p in p0])) if p0 else 0.0
        acc1 = float(np.mean([p > 0.5 for p in p1])) if p1 else 0.0
        ht = {
            "accuracy": 0.5 * (acc0 + acc1),
            "accuracy_n0": acc0,
            "accuracy_n1": acc1,
            "matched_filter_F_same_records": stats.F,
            "bin_factor": cfg.hypothesis_bin,
        }

    return EnsembleReport(
        config=config_to_dict(cfg),
        stats=stats,
        kernels={lab: kernel.h[lab] for lab in cav_labels},
        orientation=orientation,
        rows=all_rows,
        used=used,
        flagged=flagged,
        grid=cfg.grid,
        channel_labels=compiled.labels,
        hypothesis_test=ht,
        sample_records=sample_records,
        runtime_seconds=time.perf_counter() - t_start,
    )


def sweep(base: EnsembleConfig, parameter: str, values: list) -> list[tuple[float, EnsembleReport]]:
    """Independent run_ensemble per value; sub-master seeds per value index."""
    out = []
    base_dict = config_to_dict(base)
    for k, v in enumerate(values):
        d = set_config_value(base_dict, parameter, v)
        d["ensemble"]["master_seed"] = derive_sweep_seed(base.master_seed, k)
        cfg = config_from_dict(d)
        out.append((v, run_ensemble(cfg)))
    return out
