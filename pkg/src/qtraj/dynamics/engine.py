"""Compile a CascadeModel into kernel-ready arrays.

Two interchangeable drift treatments:

``exact``  -- one-step map M = expm(K dt) with K = -iH - (1/2)(sum_k
              L_k†L_k + J†J), stored dense.  Deterministic part of the
              step is exact and unconditionally stable.  Feasible up to
              a few hundred dimensions (the single-unit space is 96).

``split``  -- Strang composition exp(D dt/2) * exp(G dt) * exp(D dt/2)
              of the diagonal part D (detunings and decay rates, the
              stiff directions) and the transmon-cavity exchange part G
              (exact 2x2 rotations on the |1,n+1> <-> |2,n> pairs),
              with the weak remainder R (drives, cascade couplings,
              collective-decay cross terms, |coefficients| <~ 0.5)
              taken by an Euler term.  Works at any dimension; this is
              the two-unit path.

Every compilation is verified against the sparse operator-algebra
assembly of K on random vectors, so index bookkeeping errors cannot
pass silently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import expm

from ..errors import ConfigurationError, NumericalError
from ..model import D_TRANSMON, CascadeModel
from ..operators import annihilation, embed, transition

EXACT_DIM_LIMIT = 512


def drift_generator(model: CascadeModel) -> sp.csr_matrix:
    """K = -iH - (1/2)(sum_k L_k†L_k + J†J) as sparse CSR."""
    K = (-1j) * model.H.csr()
    for ch in model.diffusive_channels:
        L = ch.op.csr()
        K = K - 0.5 * (L.conj().T @ L)
    J = model.jump_channel.csr()
    K = K - 0.5 * (J.conj().T @ J)
    return K.tocsr()


def exchange_generator(model: CascadeModel) -> sp.csr_matrix:
    """The -i * (g-coupling part of H): sum_j -g_j (a_j s21_j - a_j† s12_j)."""
    dims = model.dims
    G = None
    for j, p in enumerate(model.unit_params):
        t_slot, c_slot = 1 + 2 * j, 2 + 2 * j
        a = embed(annihilation(model.d_cavity), c_slot, dims, sparse=True).csr()
        s21 = embed(transition(2, 1), t_slot, dims, sparse=True).csr()
        s12 = embed(transition(1, 2), t_slot, dims, sparse=True).csr()
        term = (-p.g) * (a @ s21 - a.conj().T @ s12)
        G = term if G is None else G + term
    return G.tocsr()


def _givens_tables(model: CascadeModel, dt: float):
    """Rotation tables realizing the exchange and drive exponentials.

    Factor order (as applied sequentially by the kernel):
      1. exp(G dt): transmon-cavity exchange, exact 2x2 rotations on the
         disjoint pairs (transmon=1, cav=n+1) <-> (transmon=2, cav=n),
         angle g sqrt(n+1) dt, per unit.
      2. exp(E_even dt), exp(E_odd dt): the cavity drive -iE(a - a†)
         split into even/odd ladder bonds (n, n+1), angle E sqrt(n+1) dt.
    The even/odd splitting error is O(dt^2 E^2), negligible at the weak
    drives used here; the exchange part is exact.

    Also returns the sparse factor generators for verification.
    """
    shape = model.dims.subsystem_dims
    n = model.dims.total_dim
    idx = np.arange(n).reshape(shape)
    factors: list[list] = []

    def pair_block(fac, t_ax, c_ax, lvl_i, lvl_j, cav_i, cav_j, theta):
        sl_i = [slice(None)] * len(shape)
        sl_j = [slice(None)] * len(shape)
        if t_ax is not None:
            sl_i[t_ax], sl_j[t_ax] = lvl_i, lvl_j
        sl_i[c_ax], sl_j[c_ax] = cav_i, cav_j
        i_block = idx[tuple(sl_i)].reshape(-1)
        j_block = idx[tuple(sl_j)].reshape(-1)
        fac.append((i_block, j_block,
                    np.full(i_block.size, np.cos(theta)),
                    np.full(i_block.size, np.sin(theta))))

    # exchange rotations, one factor per unit
    for j, p in enumerate(model.unit_params):
        if p.g == 0.0:
            continue
        fac: list = []
        t_ax, c_ax = 1 + 2 * j, 2 + 2 * j
        for nph in range(model.d_cavity - 1):
            pair_block(fac, t_ax, c_ax, 1, 2, nph + 1, nph, p.g * np.sqrt(nph + 1.0) * dt)
        factors.append(fac)
    # drive rotations, even bonds then odd bonds, per unit
    for parity in (0, 1):
        for j, p in enumerate(model.unit_params):
            if p.E == 0.0:
                continue
            fac = []
            c_ax = 2 + 2 * j
            for nph in range(parity, model.d_cavity - 1, 2):
                pair_block(fac, None, c_ax, 0, 0, nph + 1, nph, p.E * np.sqrt(nph + 1.0) * dt)
            factors.append(fac)

    gi, gj, gc, gs = [], [], [], []
    for fac in factors:
        fi = np.concatenate([b[0] for b in fac])
        fj = np.concatenate([b[1] for b in fac])
        fc = np.concatenate([b[2] for b in fac])
        fs = np.concatenate([b[3] for b in fac])
        # within one factor the pairs are disjoint: reorder them by index
        # so the sweep streams through memory instead of striding
        order = np.argsort(np.minimum(fi, fj), kind="stable")
        gi.append(fi[order])
        gj.append(fj[order])
        gc.append(fc[order])
        gs.append(fs[order])

    if gi:
        return (
            np.concatenate(gi).astype(np.int32),
            np.concatenate(gj).astype(np.int32),
            np.concatenate(gc),
            np.concatenate(gs),
        )
    return (
        np.zeros(0, np.int32), np.zeros(0, np.int32),
        np.zeros(0, np.float64), np.zeros(0, np.float64),
    )


def drive_generator(model: CascadeModel, parity: int | None = None) -> sp.csr_matrix:
    """-i * (drive part of H): sum_j -E_j (a_j - a_j†), optionally one bond parity."""
    dims = model.dims
    n = dims.total_dim
    out = sp.csr_matrix((n, n), dtype=np.complex128)
    for j, p in enumerate(model.unit_params):
        if p.E == 0.0:
            continue
        c_slot = 2 + 2 * j
        d = model.d_cavity
        a_local = np.zeros((d, d), dtype=np.complex128)
        ns = np.arange(d - 1)
        keep = ns if parity is None else ns[ns % 2 == parity]
        a_local[keep, keep + 1] = np.sqrt(keep + 1.0)
        from ..operators import Dims, Operator

        op = embed(Operator(Dims([d]), a_local), c_slot, dims, sparse=True).csr()
        out = out + (-p.E) * (op - op.conj().T.tocsr())
    return out.tocsr()


def _flat_csr_stack(mats: list[sp.csr_matrix]):
    n = mats[0].shape[0]
    data = np.concatenate([m.data.astype(np.complex128) for m in mats]) if mats else np.zeros(0, np.complex128)
    indices = np.concatenate([m.indices.astype(np.int32) for m in mats]) if mats else np.zeros(0, np.int32)
    indptr = np.empty(len(mats) * (n + 1), dtype=np.int64)
    off = 0
    for k, m in enumerate(mats):
        indptr[k * (n + 1):(k + 1) * (n + 1)] = m.indptr + off
        off += m.nnz
    return data, indices, indptr


def _single_csr(m: sp.csr_matrix):
    return (
        m.data.astype(np.complex128),
        m.indices.astype(np.int32),
        m.indptr.astype(np.int64),
    )


def shift_form(mat: sp.csr_matrix) -> tuple[np.ndarray, np.ndarray]:
    """Represent a sparse operator as diagonal-coefficient shifts.

    Returns (shifts (T,), coefs (T, n)) with
    (O psi)[i] = sum_t coefs[t, i] * psi[i + shifts[t]].  Exact for any
    operator whose nonzeros lie on a few diagonals, which covers every
    ladder/transition product used here.  Verified against the CSR form
    by the caller.
    """
    m = sp.coo_matrix(mat)
    n = m.shape[0]
    offsets = np.asarray(m.col, dtype=np.int64) - np.asarray(m.row, dtype=np.int64)
    uniq = np.unique(offsets)
    shifts = uniq.astype(np.int64)
    coefs = np.zeros((uniq.size, n), dtype=np.complex128)
    for t, d in enumerate(uniq):
        sel = offsets == d
        coefs[t, m.row[sel]] = m.data[sel]
    return shifts, coefs


def stacked_shift_form(mats: list[sp.csr_matrix]):
    """Shift forms of several operators packed with a term-pointer array."""
    n = mats[0].shape[0] if mats else 0
    all_shifts, all_coefs, ptr = [], [], [0]
    for m in mats:
        sh, cf = shift_form(m)
        all_shifts.append(sh)
        all_coefs.append(cf)
        ptr.append(ptr[-1] + sh.size)
    shifts = np.concatenate(all_shifts) if all_shifts else np.zeros(0, np.int64)
    coefs = np.concatenate(all_coefs) if all_coefs else np.zeros((0, n), np.complex128)
    return shifts, np.ascontiguousarray(coefs), np.asarray(ptr, dtype=np.int64)


def _verify_shift_form(mats, shifts, coefs, ptr, n):
    rng = np.random.default_rng(777)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    for k, m in enumerate(mats):
        ref = m @ v
        out = np.zeros(n, dtype=np.complex128)
        for t in range(ptr[k], ptr[k + 1]):
            d = shifts[t]
            lo, hi = max(0, -d), min(n, n - d)
            out[lo:hi] += coefs[t, lo:hi] * v[lo + d:hi + d]
        if np.max(np.abs(out - ref)) > 1e-12 * max(1.0, np.max(np.abs(ref))):
            raise NumericalError("shift-form operator failed verification")


def top_level_indices(model: CascadeModel) -> np.ndarray:
    """Flat indices of components with any probe cavity at its top Fock level."""
    shape = model.dims.subsystem_dims
    idx = np.arange(model.dims.total_dim).reshape(shape)
    tops = []
    for j in range(model.n_units):
        c_ax = 2 + 2 * j
        tops.append(np.take(idx, model.d_cavity - 1, axis=c_ax).reshape(-1))
    return np.unique(np.concatenate(tops)).astype(np.int32)


@dataclass
class CompiledSse:
    """Plain-array bundle consumed by the trajectory kernel."""

    model: CascadeModel
    dt: float
    backend: str
    n: int
    nchan: int
    labels: list
    use_exact: bool
    M: np.ndarray
    ehalf: np.ndarray
    giv_i: np.ndarray
    giv_j: np.ndarray
    giv_c: np.ndarray
    giv_s: np.ndarray
    r_data: np.ndarray
    r_indices: np.ndarray
    r_indptr: np.ndarray
    ch_shift: np.ndarray
    ch_coef: np.ndarray
    ch_ptr: np.ndarray
    ch_phase: np.ndarray
    j_shift: np.ndarray
    j_coef: np.ndarray
    n_jterms: int
    top_idx: np.ndarray


def _verify_split(model, K: sp.csr_matrix, kdiag: np.ndarray, G: sp.csr_matrix,
                  E: sp.csr_matrix, R: sp.csr_matrix, tables, dt: float, n: int) -> None:
    rng = np.random.default_rng(12345)
    gi, gj, gc, gs = tables
    E_even = drive_generator(model, parity=0)
    E_odd = drive_generator(model, parity=1)
    for _ in range(4):
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        v /= np.linalg.norm(v)
        lhs = kdiag * v + G @ v + E @ v + R @ v
        rhs = K @ v
        if np.max(np.abs(lhs - rhs)) > 1e-10:
            raise NumericalError("split decomposition failed to reproduce the drift generator")
        w = spla.expm_multiply(G * dt, v)
        w = spla.expm_multiply(E_even * dt, w)
        w = spla.expm_multiply(E_odd * dt, w)
        u = v.copy()
        # sequential application, exactly like the kernel: pairs overlap
        # across factors, which compose in table order
        for q in range(gi.size):
            xi, xj = u[gi[q]], u[gj[q]]
            u[gi[q]] = gc[q] * xi + gs[q] * xj
            u[gj[q]] = -gs[q] * xi + gc[q] * xj
        if np.max(np.abs(w - u)) > 1e-10:
            raise NumericalError("Givens tables failed to reproduce the rotation factors")


def compile_sse(model: CascadeModel, dt: float, backend: str | None = None) -> CompiledSse:
    """Precompute everything a trajectory worker needs for step size dt."""
    n = model.dims.total_dim
    if backend is None:
        backend = "exact" if n <= EXACT_DIM_LIMIT else "split"
    if backend not in ("exact", "split"):
        raise ConfigurationError(f"unknown SSE backend {backend!r}")
    if backend == "exact" and n > EXACT_DIM_LIMIT:
        raise ConfigurationError(f"exact backend limited to dim {EXACT_DIM_LIMIT}, model has {n}")

    K = drift_generator(model)
    ch_mats = [ch.op.csr() for ch in model.diffusive_channels]
    ch_shift, ch_coef, ch_ptr = stacked_shift_form(ch_mats)
    _verify_shift_form(ch_mats, ch_shift, ch_coef, ch_ptr, n)
    ch_phase = np.array([np.exp(-1j * ch.phase) for ch in model.diffusive_channels])
    j_mat = model.jump_channel.csr()
    j_shift, j_coef, j_ptr = stacked_shift_form([j_mat])
    _verify_shift_form([j_mat], j_shift, j_coef, j_ptr, n)

    empty_f = np.zeros(0, dtype=np.float64)
    empty_i = np.zeros(0, dtype=np.int32)
    empty_c = np.zeros(0, dtype=np.complex128)

    if backend == "exact":
        M = expm(K.toarray() * dt)
        return CompiledSse(
            model=model, dt=dt, backend=backend, n=n,
            nchan=len(ch_mats), labels=model.channel_labels(), use_exact=True,
            M=np.ascontiguousarray(M),
            ehalf=empty_c, giv_i=empty_i, giv_j=empty_i, giv_c=empty_f, giv_s=empty_f,
            r_data=empty_c, r_indices=empty_i, r_indptr=np.zeros(n + 1, np.int64),
            ch_shift=ch_shift, ch_coef=ch_coef, ch_ptr=ch_ptr, ch_phase=ch_phase,
            j_shift=j_shift, j_coef=j_coef, n_jterms=j_shift.size,
            top_idx=top_level_indices(model),
        )

    kdiag = np.asarray(K.diagonal())
    G = exchange_generator(model)
    E = drive_generator(model)
    R = (K - sp.diags(kdiag) - G - E).tocsr()
    R.data[np.abs(R.data) < 1e-15] = 0.0
    R.eliminate_zeros()
    tables = _givens_tables(model, dt)
    _verify_split(model, K, kdiag, G, E, R, tables, dt, n)
    r_data, r_indices, r_indptr = _single_csr(R)
    return CompiledSse(
        model=model, dt=dt, backend=backend, n=n,
        nchan=len(ch_mats), labels=model.channel_labels(), use_exact=False,
        M=np.zeros((1, 1), dtype=np.complex128),
        ehalf=np.exp(kdiag * dt / 2.0),
        giv_i=tables[0], giv_j=tables[1], giv_c=tables[2], giv_s=tables[3],
        r_data=r_data, r_indices=r_indices, r_indptr=r_indptr,
        ch_shift=ch_shift, ch_coef=ch_coef, ch_ptr=ch_ptr, ch_phase=ch_phase,
        j_shift=j_shift, j_coef=j_coef, n_jterms=j_shift.size,
        top_idx=top_level_indices(model),
    )


@dataclass
class CompiledSme:
    """Arrays for the density-matrix (SME) stepper, single monitored channel."""

    model: CascadeModel
    dt: float
    n: int
    M: np.ndarray
    MH: np.ndarray
    ld_data: np.ndarray
    ld_indices: np.ndarray
    ld_indptr: np.ndarray
    n_lind: int
    r_data: np.ndarray
    r_indices: np.ndarray
    r_indptr: np.ndarray
    phase_r: complex
    a_data: np.ndarray
    a_indices: np.ndarray
    a_indptr: np.ndarray


def compile_sme(model: CascadeModel, dt: float) -> CompiledSme:
    if model.n_units != 1:
        raise ConfigurationError("the SME stepper supports single-unit models only")
    n = model.dims.total_dim
    K = drift_generator(model)
    M = expm(K.toarray() * dt)
    cav = next(ch for ch in model.diffusive_channels if ch.label == "cavA")
    J2 = next(ch.op for ch in model.diffusive_channels if ch.label == "J2")
    ld = [model.jump_channel.csr(), J2.csr(), cav.op.csr()]
    ld_data, ld_indices, ld_indptr = _flat_csr_stack(ld)
    r_data, r_indices, r_indptr = _single_csr(cav.op.csr())
    a = embed(annihilation(model.d_cavity), 2, model.dims).csr()
    a_data, a_indices, a_indptr = _single_csr(a)
    return CompiledSme(
        model=model, dt=dt, n=n,
        M=np.ascontiguousarray(M), MH=np.ascontiguousarray(M.conj().T),
        ld_data=ld_data, ld_indices=ld_indices, ld_indptr=ld_indptr, n_lind=len(ld),
        r_data=r_data, r_indices=r_indices, r_indptr=r_indptr,
        phase_r=complex(np.exp(-1j * cav.phase)),
        a_data=a_data, a_indices=a_indices, a_indptr=a_indptr,
    )
