"""Hypothesis-conditioned currents, fluxes, and coherence traces.

Single-unit quantities are exact (master equation); two-unit
quantities are trajectory-ensemble estimates with standard errors
(the two-unit density matrix, 4608^2, is out of reach on a desk).
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.ndimage import uniform_filter1d

from ..errors import ConfigurationError
from ..model import CascadeModel, initial_state
from ..seeding import derive_trajectory_seed
from .engine import CompiledSse, compile_sse
from .master import (
    CoherenceResult,
    FluxResult,
    coherence_reference,
    coherence_trace_exact,
    expected_current_exact,
    output_flux_exact,
    retained_fraction,
)
from .trajectory import TraceRequest, run_study
from .types import MeanTrace, TimeGrid

# fixed default seed for ensemble *estimators* (kernels, fluxes); study
# seeds come from the run configuration instead
ESTIMATOR_SEED = 0x5EEDED0C


def _ensemble_seeds(master_seed: int, hypothesis: int, n: int) -> list[int]:
    return [derive_trajectory_seed(master_seed, hypothesis, i) for i in range(n)]


def smooth_trace(values: np.ndarray, width_steps: int) -> np.ndarray:
    """Centered moving average, edge-clamped; width in samples."""
    if width_steps <= 1:
        return values
    return uniform_filter1d(values, size=width_steps, axis=0, mode="nearest")


def expected_current(
    model: CascadeModel,
    n: int,
    grid: TimeGrid,
    method: str = "auto",
    n_traj: int = 1000,
    smooth_width: float = 0.0,
    master_seed: int = ESTIMATOR_SEED,
    workers: int | None = None,
    compiled: CompiledSse | None = None,
) -> list[MeanTrace]:
    """Noise-free homodyne current per monitored cavity channel, hypothesis n.

    Values are sampled at the n_steps left grid points (the convention
    the discrete filter uses).  For single-unit models this is exact;
    for two-unit models it is the mean over ``n_traj`` trajectories of
    the expectation parts of the records, optionally smoothed by a
    moving average of ``smooth_width`` time units.
    """
    if n not in (0, 1):
        raise ConfigurationError(f"photon-number hypothesis must be 0 or 1, got {n}")
    if method == "auto":
        method = "master" if model.n_units == 1 else "ensemble"
    if method == "master":
        traces = expected_current_exact(model, n, grid)
        for tr in traces:
            tr.values = tr.values[:-1]  # left endpoints
        return traces
    if n_traj < 100:
        warnings.warn(f"kernel estimated from only {n_traj} trajectories will be noisy", stacklevel=2)
    compiled = compiled or compile_sse(model, grid.dt)
    psi0 = initial_state(model, override_initial=f"fock{n}").data
    seeds = _ensemble_seeds(master_seed, n, n_traj)
    _, agg = run_study(compiled, grid, psi0, seeds, traces=TraceRequest(x=True), workers=workers)
    mean, se = agg.mean_se("x")
    labels = model.cavity_channel_labels()
    out = []
    width_steps = int(round(smooth_width / grid.dt)) if smooth_width else 0
    for k, lab in enumerate(labels):
        vals = smooth_trace(mean[:, k], width_steps)
        out.append(MeanTrace(grid, vals, label=lab, stderr=se[:, k]))
    return out


def output_flux(
    model: CascadeModel,
    source_n: int,
    grid: TimeGrid,
    method: str = "auto",
    n_traj: int = 1000,
    master_seed: int = ESTIMATOR_SEED,
    workers: int | None = None,
) -> FluxResult:
    """Unconditional <J†J>(t) and <J2†J2>(t) with the bare-source input reference."""
    if method == "auto":
        method = "master" if model.n_units == 1 else "ensemble"
    if method == "master":
        return output_flux_exact(model, source_n, grid)
    compiled = compile_sse(model, grid.dt)
    psi0 = initial_state(model, override_initial=f"fock{source_n}").data
    seeds = _ensemble_seeds(master_seed, source_n, n_traj)
    _, agg = run_study(
        compiled, grid, psi0, seeds,
        traces=TraceRequest(x=False, jj=True, c2=True), workers=workers,
    )
    jj_m, jj_se = agg.mean_se("jj")
    c2_m, c2_se = agg.mean_se("c2")
    gc = model.source_params.gamma_c
    t_left = grid.left_points()
    lgrid = grid
    ref = gc * source_n * np.exp(-gc * (t_left - grid.t0))
    # left-point sampled; pad the final grid point by repeating the last sample
    def pad(v):
        return np.concatenate([v, v[-1:]])
    return FluxResult(
        flux_j=MeanTrace(lgrid, pad(jj_m), label="flux_J", stderr=pad(jj_se)),
        flux_j2=MeanTrace(lgrid, pad(c2_m), label="flux_J2", stderr=pad(c2_se)),
        reference=MeanTrace(lgrid, pad(ref), label="input_flux"),
    )


def coherence_trace(
    model: CascadeModel,
    grid: TimeGrid,
    method: str = "auto",
    n_traj: int = 1000,
    master_seed: int = ESTIMATOR_SEED,
    workers: int | None = None,
) -> CoherenceResult:
    """|<J>|(t) for the superposition source against free decay, plus retained fraction.

    Two-unit fractions carry a jackknife standard error over trajectory
    chunks.
    """
    if model.source_params.initial != "superposition":
        raise ConfigurationError(
            "coherence_trace requires the source initialized to the superposition state"
        )
    if method == "auto":
        method = "master" if model.n_units == 1 else "ensemble"
    if method == "master":
        return coherence_trace_exact(model, grid)
    from ..model import D_SOURCE
    from ..operators import annihilation, embed
    from .trajectory import aux_csr_from

    compiled = compile_sse(model, grid.dt)
    psi0 = initial_state(model).data
    seeds = _ensemble_seeds(master_seed, 2, n_traj)
    c_op = embed(annihilation(D_SOURCE), 0, model.dims, sparse=True)
    _, agg = run_study(
        compiled, grid, psi0, seeds,
        traces=TraceRequest(x=False, jexp=True, aux=True, per_chunk_jexp=True),
        aux_csr=aux_csr_from(c_op), workers=workers,
    )
    mean, se = agg.mean_se("jexp")
    aux_mean, _ = agg.mean_se("aux")
    coh_vals = np.hypot(mean[:, 0], mean[:, 1])

    def pad(v):
        return np.concatenate([v, v[-1:]])

    frac = retained_fraction(pad(coh_vals), coherence_reference(model, grid), grid)
    # jackknife over chunks for the fraction's standard error
    fracs = []
    total = agg.jexp_sum.copy()
    n_used = agg.n_used
    for used, csum in agg.chunk_jexp:
        if n_used - used <= 0 or used == 0:
            continue
        m = (total - csum) / (n_used - used)
        v = np.hypot(m[:, 0], m[:, 1])
        fracs.append(retained_fraction(pad(v), coherence_reference(model, grid), grid))
    fracs = np.asarray(fracs)
    m_jk = len(fracs)
    fse = float(np.sqrt((m_jk - 1) / m_jk * np.sum((fracs - fracs.mean()) ** 2))) if m_jk > 1 else 0.0

    coh = MeanTrace(grid, pad(coh_vals), label="abs_mean_J",
                    stderr=pad(np.hypot(se[:, 0], se[:, 1])))
    return CoherenceResult(
        coherence=coh,
        reference=MeanTrace(grid, coherence_reference(model, grid), label="free_decay"),
        source_coherence=MeanTrace(
            grid, pad(np.hypot(aux_mean[:, 0], aux_mean[:, 1])), label="abs_mean_c"
        ),
        retained_fraction=frac,
        fraction_stderr=fse,
    )
