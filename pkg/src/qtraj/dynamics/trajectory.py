"""Trajectory execution: single runs and chunked parallel studies.

Parallelism is a thread pool over fixed-size chunks of trajectory
indices; the kernels are nogil.  All reductions happen serially inside
a chunk and then across chunks in chunk order, so every reported number
is independent of the worker count (bit-stable reductions).
"""

from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, NumericalError
from ..model import CascadeModel, initial_state
from ..operators import QuantumState
from ..seeding import trajectory_draws
from . import _kernels
from .engine import CompiledSse, compile_sse, _single_csr
from .types import Diagnostics, TimeGrid, TrajectoryRecord

CHUNK = 64

_EMPTY_CSR = (
    np.zeros(0, dtype=np.complex128),
    np.zeros(0, dtype=np.int32),
    np.zeros(1, dtype=np.int64),
)


def default_workers() -> int:
    env = os.environ.get("QTRAJ_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def aux_csr_from(op) -> tuple:
    """Pack an Operator (or scipy matrix) for per-step expectation recording."""
    import scipy.sparse as sp

    m = op.csr() if hasattr(op, "csr") else sp.csr_matrix(op)
    return _single_csr(m)


@dataclass
class RawTrajectory:
    """Kernel outputs for one trajectory, before any record bookkeeping."""

    index: int
    seed: int
    status: int
    bad_step: int
    dq: np.ndarray           # (n_steps, nchan)
    x: np.ndarray            # (n_steps, nchan) noise-free current parts
    jj: np.ndarray           # (n_steps,) <J†J>
    jexp: np.ndarray | None  # (n_steps, 2) Re/Im <J>
    aux: np.ndarray | None   # (n_steps, 2) Re/Im <aux op>
    c2: np.ndarray | None    # (n_steps,) <J2†J2>
    jump_mark: np.ndarray    # (n_steps,) uint8
    diagnostics: Diagnostics

    @property
    def ok(self) -> bool:
        return self.status == _kernels.STATUS_OK and not self.diagnostics.flagged


def run_raw(
    compiled: CompiledSse,
    psi0: np.ndarray,
    grid: TimeGrid,
    seed: int,
    index: int = 0,
    record_j: bool = False,
    record_c2: bool = False,
    aux_csr: tuple | None = None,
    zero_noise: bool = False,
) -> RawTrajectory:
    if abs(grid.dt - compiled.dt) > 1e-15:
        raise ConfigurationError(f"grid dt {grid.dt} != compiled dt {compiled.dt}")
    n_steps = grid.n_steps
    nchan = compiled.nchan
    if zero_noise:
        # deterministic branch: no Wiener increments, jumps never fire
        u = np.full(n_steps, 2.0)
        dW = np.zeros((n_steps, nchan))
    else:
        u, dW = trajectory_draws(seed, n_steps, nchan, grid.dt)
    dq = np.empty((n_steps, nchan))
    x = np.empty((n_steps, nchan))
    jj = np.empty(n_steps)
    record_aux = aux_csr is not None
    jexp = np.empty((n_steps, 2)) if record_j else np.empty((0, 2))
    aux = np.empty((n_steps, 2)) if record_aux else np.empty((0, 2))
    c2 = np.empty(n_steps) if record_c2 else np.empty(0)
    jump_mark = np.zeros(n_steps, dtype=np.uint8)
    ax_d, ax_i, ax_p = aux_csr if record_aux else _EMPTY_CSR

    status, bad_step, drift, max_drift, max_top, max_p, n_jumps = _kernels.run_sse_kernel(
        psi0.astype(np.complex128),
        grid.dt,
        n_steps,
        compiled.use_exact,
        compiled.M,
        compiled.ehalf,
        compiled.giv_i,
        compiled.giv_j,
        compiled.giv_c,
        compiled.giv_s,
        compiled.r_data,
        compiled.r_indices,
        compiled.r_indptr,
        compiled.ch_shift,
        compiled.ch_coef,
        compiled.ch_ptr,
        nchan,
        compiled.ch_phase,
        compiled.j_shift,
        compiled.j_coef,
        compiled.n_jterms,
        ax_d,
        ax_i,
        ax_p,
        compiled.top_idx,
        u,
        dW,
        dq,
        x,
        jj,
        record_j,
        jexp,
        record_aux,
        aux,
        record_c2,
        c2,
        jump_mark,
    )
    diag = Diagnostics(
        final_norm_drift=drift,
        max_norm_drift=max_drift,
        max_top_level_population=max_top,
        max_jump_probability=max_p,
    )
    if status == _kernels.STATUS_BLOWUP:
        diag.flagged, diag.flag_reason = True, f"norm blow-up at step {bad_step}"
    elif status == _kernels.STATUS_JUMP_PROB:
        diag.flagged, diag.flag_reason = True, f"jump probability > 0.1 at step {bad_step} (dt too large)"
    elif max_top > compiled.model.top_level_tolerance:
        diag.flagged = True
        diag.flag_reason = f"top Fock level population {max_top:.2e} exceeds tolerance"
    return RawTrajectory(
        index=index, seed=seed, status=status, bad_step=bad_step,
        dq=dq, x=x, jj=jj,
        jexp=jexp if record_j else None,
        aux=aux if record_aux else None,
        c2=c2 if record_c2 else None,
        jump_mark=jump_mark, diagnostics=diag,
    )


def run_trajectory(
    model: CascadeModel,
    psi0: QuantumState | None,
    grid: TimeGrid,
    seed: int,
    compiled: CompiledSse | None = None,
    backend: str | None = None,
) -> TrajectoryRecord:
    """One hybrid jump/diffusion trajectory; returns the stored record.

    Raises NumericalError on blow-up or an over-large per-step jump
    probability; truncation-tolerance violations only set the record's
    flagged diagnostic.
    """
    if compiled is None:
        compiled = compile_sse(model, grid.dt, backend)
    if psi0 is None:
        psi0 = initial_state(model)
    if psi0.kind != "pure":
        raise ConfigurationError("run_trajectory needs a pure initial state")
    raw = run_raw(compiled, psi0.data, grid, seed)
    if raw.status == _kernels.STATUS_BLOWUP:
        raise NumericalError(raw.diagnostics.flag_reason + " (suggest smaller dt)")
    if raw.status == _kernels.STATUS_JUMP_PROB:
        raise NumericalError(raw.diagnostics.flag_reason)
    currents = {lab: np.ascontiguousarray(raw.dq[:, k]) for k, lab in enumerate(compiled.labels)}
    jump_steps = np.nonzero(raw.jump_mark)[0]
    jump_times = grid.t0 + grid.dt * jump_steps
    return TrajectoryRecord(
        grid=grid, currents=currents, jump_times=jump_times,
        seed=seed, diagnostics=raw.diagnostics,
    )


@dataclass
class TraceRequest:
    """Which per-step ensemble traces a study should accumulate."""

    x: bool = True
    jj: bool = False
    jexp: bool = False
    aux: bool = False
    c2: bool = False
    per_chunk_jexp: bool = False


@dataclass
class StudyTraces:
    """Order-independent accumulated sums over the used trajectories."""

    n_used: int = 0
    x_sum: np.ndarray | None = None
    x_sumsq: np.ndarray | None = None
    jj_sum: np.ndarray | None = None
    jj_sumsq: np.ndarray | None = None
    jexp_sum: np.ndarray | None = None      # (n_steps, 2)
    jexp_sumsq: np.ndarray | None = None
    aux_sum: np.ndarray | None = None
    aux_sumsq: np.ndarray | None = None
    c2_sum: np.ndarray | None = None
    c2_sumsq: np.ndarray | None = None
    chunk_jexp: list = field(default_factory=list)  # (chunk_used, (n_steps,2) sums)

    def mean_se(self, which: str):
        s = getattr(self, f"{which}_sum")
        q = getattr(self, f"{which}_sumsq")
        m = s / self.n_used
        var = np.maximum(q / self.n_used - m * m, 0.0)
        se = np.sqrt(var / self.n_used)
        return m, se


class _ChunkResult:
    __slots__ = ("chunk_id", "per_traj", "used", "sums")

    def __init__(self, chunk_id):
        self.chunk_id = chunk_id
        self.per_traj = []
        self.used = 0
        self.sums = {}


def run_study(
    compiled: CompiledSse,
    grid: TimeGrid,
    psi0: np.ndarray,
    seeds: list[int],
    per_traj=None,
    traces: TraceRequest | None = None,
    aux_csr: tuple | None = None,
    workers: int | None = None,
    chunk: int = CHUNK,
):
    """Run len(seeds) trajectories, returning (per-trajectory list, StudyTraces).

    ``per_traj(raw) -> object`` runs in the worker right after each
    trajectory (records are not retained unless the callback keeps
    them).  Flagged trajectories are excluded from trace sums; their
    callback objects are still returned so callers can report them.
    """
    traces = traces or TraceRequest()
    if traces.aux and aux_csr is None:
        raise ConfigurationError("aux traces requested without an aux operator")
    workers = workers or default_workers()
    n = len(seeds)
    n_steps = grid.n_steps
    nchan = compiled.nchan
    chunk_ids = list(range(0, n, chunk))

    def new_sums():
        s = {}
        if traces.x:
            s["x_sum"] = np.zeros((n_steps, nchan))
            s["x_sumsq"] = np.zeros((n_steps, nchan))
        if traces.jj:
            s["jj_sum"] = np.zeros(n_steps)
            s["jj_sumsq"] = np.zeros(n_steps)
        if traces.jexp:
            s["jexp_sum"] = np.zeros((n_steps, 2))
            s["jexp_sumsq"] = np.zeros((n_steps, 2))
        if traces.aux:
            s["aux_sum"] = np.zeros((n_steps, 2))
            s["aux_sumsq"] = np.zeros((n_steps, 2))
        if traces.c2:
            s["c2_sum"] = np.zeros(n_steps)
            s["c2_sumsq"] = np.zeros(n_steps)
        return s

    def run_chunk(c0: int) -> _ChunkResult:
        res = _ChunkResult(c0)
        res.sums = new_sums()
        for idx in range(c0, min(c0 + chunk, n)):
            raw = run_raw(
                compiled, psi0, grid, seeds[idx], index=idx,
                record_j=traces.jexp or traces.per_chunk_jexp,
                record_c2=traces.c2,
                aux_csr=aux_csr if traces.aux else None,
            )
            if per_traj is not None:
                res.per_traj.append(per_traj(raw))
            if raw.ok:
                res.used += 1
                s = res.sums
                if traces.x:
                    s["x_sum"] += raw.x
                    s["x_sumsq"] += raw.x * raw.x
                if traces.jj:
                    s["jj_sum"] += raw.jj
                    s["jj_sumsq"] += raw.jj * raw.jj
                if traces.jexp:
                    s["jexp_sum"] += raw.jexp
                    s["jexp_sumsq"] += raw.jexp * raw.jexp
                if traces.aux:
                    s["aux_sum"] += raw.aux
                    s["aux_sumsq"] += raw.aux * raw.aux
                if traces.c2:
                    s["c2_sum"] += raw.c2
                    s["c2_sumsq"] += raw.c2 * raw.c2
        return res

    results: dict[int, _ChunkResult] = {}
    if chunk_ids:
        # first chunk synchronously: warms the JIT once before the pool
        results[chunk_ids[0]] = run_chunk(chunk_ids[0])
    rest = chunk_ids[1:]
    if rest:
        if workers > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
                for res in pool.map(run_chunk, rest):
                    results[res.chunk_id] = res
        else:
            for c0 in rest:
                results[c0] = run_chunk(c0)

    agg = StudyTraces()
    out = []
    sums_total = new_sums()
    for c0 in chunk_ids:
        res = results[c0]
        out.extend(res.per_traj)
        agg.n_used += res.used
        for key, arr in res.sums.items():
            sums_total[key] += arr
        if traces.per_chunk_jexp:
            if "jexp_sum" not in res.sums:
                raise ConfigurationError("per_chunk_jexp requires jexp traces")
            agg.chunk_jexp.append((res.used, res.sums["jexp_sum"].copy()))
    for key, arr in sums_total.items():
        setattr(agg, key, arr)
    return out, agg
