"""Diffusive stochastic master equation (single monitored cavity channel).

Retained for cross-validation of the pure-state unraveling: both must
reproduce the unconditional master equation in ensemble mean.  The
noise stream for a trajectory is a single block of n_steps standard
normals from the per-trajectory generator.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, NumericalError
from ..model import CascadeModel, initial_state
from ..operators import QuantumState
from ..seeding import derive_trajectory_seed, make_generator
from ._kernels import STATUS_OK, run_sme_kernel
from .engine import CompiledSme, compile_sme
from .types import TimeGrid


def h_superop(r: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """H[r] rho = r rho + rho r† - Tr(r rho + rho r†) rho."""
    s = r @ rho + rho @ r.conj().T
    return s - np.trace(s) * rho


def step_sme(
    model: CascadeModel,
    rho: QuantumState,
    dt: float,
    dW: float,
    compiled: CompiledSme | None = None,
) -> tuple[QuantumState, float]:
    """One SME step; returns (rho', I dt) with I dt = <x> dt + dW."""
    if compiled is None:
        compiled = compile_sme(model, dt)
    if abs(compiled.dt - dt) > 1e-15:
        raise ConfigurationError(f"compiled dt {compiled.dt} != requested dt {dt}")
    rho_d = rho.to_density()
    mat = np.ascontiguousarray(rho_d.data)
    dq_out = np.empty(1)
    a_out = np.empty((1, 2))
    status, _ = run_sme_kernel(
        mat, dt, 1,
        compiled.M, compiled.MH,
        compiled.ld_data, compiled.ld_indices, compiled.ld_indptr, compiled.n_lind,
        compiled.r_data, compiled.r_indices, compiled.r_indptr, compiled.phase_r,
        compiled.a_data, compiled.a_indices, compiled.a_indptr,
        np.array([dW]), dq_out, a_out,
    )
    if status != STATUS_OK:
        raise NumericalError("SME step produced a non-finite state (suggest smaller dt)")
    return QuantumState(model.dims, mat, "density"), float(dq_out[0])


@dataclass
class SmeTrajectory:
    seed: int
    dq: np.ndarray     # (n_steps,) current increments of the monitored channel
    a_exp: np.ndarray  # (n_steps, 2) Re/Im <a> at each step start
    ok: bool


def run_sme_trajectory(
    model: CascadeModel,
    grid: TimeGrid,
    seed: int,
    compiled: CompiledSme | None = None,
    rho0: QuantumState | None = None,
) -> SmeTrajectory:
    if compiled is None:
        compiled = compile_sme(model, grid.dt)
    if rho0 is None:
        rho0 = initial_state(model)
    mat = np.ascontiguousarray(rho0.to_density().data)
    n = grid.n_steps
    dW = make_generator(seed).standard_normal(n) * np.sqrt(grid.dt)
    dq = np.empty(n)
    a_out = np.empty((n, 2))
    status, _ = run_sme_kernel(
        mat, grid.dt, n,
        compiled.M, compiled.MH,
        compiled.ld_data, compiled.ld_indices, compiled.ld_indptr, compiled.n_lind,
        compiled.r_data, compiled.r_indices, compiled.r_indptr, compiled.phase_r,
        compiled.a_data, compiled.a_indices, compiled.a_indptr,
        dW, dq, a_out,
    )
    return SmeTrajectory(seed=seed, dq=dq, a_exp=a_out, ok=status == STATUS_OK)


def sme_ensemble_mean_a(
    model: CascadeModel,
    grid: TimeGrid,
    n_traj: int,
    master_seed: int,
    hypothesis: int = 1,
    workers: int = 1,
    chunk: int = 16,
):
    """Ensemble mean and standard error of <a>(t) over SME trajectories.

    Returns (mean complex (n_steps,), se (n_steps, 2), n_used).
    Reduction is chunked in fixed order (worker-count independent).
    """
    compiled = compile_sme(model, grid.dt)
    rho0 = initial_state(model, override_initial=f"fock{hypothesis}")
    seeds = [derive_trajectory_seed(master_seed, hypothesis, i) for i in range(n_traj)]
    n = grid.n_steps
    chunk_ids = list(range(0, n_traj, chunk))

    def run_chunk(c0):
        s = np.zeros((n, 2))
        q = np.zeros((n, 2))
        used = 0
        for idx in range(c0, min(c0 + chunk, n_traj)):
            tr = run_sme_trajectory(model, grid, seeds[idx], compiled=compiled, rho0=rho0)
            if tr.ok:
                used += 1
                s += tr.a_exp
                q += tr.a_exp * tr.a_exp
        return (c0, used, s, q)

    results = {}
    if chunk_ids:
        results[chunk_ids[0]] = run_chunk(chunk_ids[0])
    rest = chunk_ids[1:]
    if rest and workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(run_chunk, rest):
                results[res[0]] = res
    else:
        for c0 in rest:
            results[c0] = run_chunk(c0)

    s_tot = np.zeros((n, 2))
    q_tot = np.zeros((n, 2))
    used_tot = 0
    for c0 in chunk_ids:
        _, used, s, q = results[c0]
        used_tot += used
        s_tot += s
        q_tot += q
    mean = s_tot / used_tot
    var = np.maximum(q_tot / used_tot - mean * mean, 0.0)
    se = np.sqrt(var / used_tot)
    return mean[:, 0] + 1j * mean[:, 1], se, used_tot
