"""Numba inner loops for stochastic propagation.

All kernels are nogil so trajectory workers can run in threads.  CSR
arrays use int64 indices; channel CSRs are concatenated with a flat
(nchan*(n+1),) indptr whose entries are absolute offsets into the data
array.  Noise arrays are pre-generated (see qtraj.seeding for the
documented stream layout) and dW is pre-scaled by sqrt(dt).

Status codes: 0 ok, 1 norm blow-up / non-finite, 2 per-step jump
probability exceeded 0.1 (dt too large).
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_BLOWUP = 1
STATUS_JUMP_PROB = 2


@njit(cache=True, nogil=True, inline="always", fastmath=True)
def _csr_mv_flat(data, indices, indptr, k, n, x, out):
    base = k * (n + 1)
    for i in range(n):
        acc = 0.0 + 0.0j
        for t in range(indptr[base + i], indptr[base + i + 1]):
            acc += data[t] * x[indices[t]]
        out[i] = acc


@njit(cache=True, nogil=True, inline="always", fastmath=True)
def _csr_mv(data, indices, indptr, x, out):
    n = out.shape[0]
    for i in range(n):
        acc = 0.0 + 0.0j
        for t in range(indptr[i], indptr[i + 1]):
            acc += data[t] * x[indices[t]]
        out[i] = acc


@njit(cache=True, nogil=True, inline="always", fastmath=True)
def _dense_mv(M, x, out):
    n = M.shape[0]
    for i in range(n):
        acc = 0.0 + 0.0j
        for k in range(n):
            acc += M[i, k] * x[k]
        out[i] = acc


@njit(cache=True, nogil=True, inline="always", fastmath=True)
def _vdot(a, b):
    acc = 0.0 + 0.0j
    for i in range(a.shape[0]):
        acc += np.conj(a[i]) * b[i]
    return acc


@njit(cache=True, nogil=True, inline="always", fastmath=True)
def _norm_sq(a):
    acc = 0.0
    for i in range(a.shape[0]):
        acc += a[i].real * a[i].real + a[i].imag * a[i].imag
    return acc


@njit(cache=True, nogil=True, fastmath=True)
def run_sse_kernel(
    psi0,
    dt,
    n_steps,
    use_exact,
    M,
    ehalf,
    giv_i,
    giv_j,
    giv_c,
    giv_s,
    r_data,
    r_indices,
    r_indptr,
    ch_shift,
    ch_coef,
    ch_ptr,
    nchan,
    ch_phase,
    j_shift,
    j_coef,
    n_jterms,
    aux_data,
    aux_indices,
    aux_indptr,
    top_idx,
    u,
    dW,
    dq_out,
    x_out,
    jj_out,
    record_j,
    jexp_out,
    record_aux,
    aux_out,
    record_c2,
    c2_out,
    jump_mark,
):
    """Hybrid jump/diffusion pure-state trajectory.

    Channel and jump operators are applied in shift-stencil form:
    (O psi)[i] = sum_t coef_t[i] * psi[i + shift_t], which streams
    instead of gathering.  Per step: channel expectations from the
    current state, jump draw (uniform) against p = <J+J> dt, then either
    the jump update or the diffusive record-driven update, then
    renormalization.  Returns (status, bad_step, final_norm_drift,
    max_norm_drift, max_top_pop, max_jump_prob, n_jumps).
    """
    n = psi0.shape[0]
    psi = psi0.copy()
    V = np.empty((nchan, n), dtype=np.complex128)
    w = np.empty(n, dtype=np.complex128)
    tmp = np.empty(n, dtype=np.complex128)
    buf = np.empty(n, dtype=np.complex128)
    coef = np.empty(nchan, dtype=np.complex128)

    max_top = 0.0
    max_p = 0.0
    max_drift = 0.0
    drift = 0.0
    n_jumps = 0

    for step in range(n_steps):
        for k in range(nchan):
            row = V[k]
            z = 0.0 + 0.0j
            first = True
            for term in range(ch_ptr[k], ch_ptr[k + 1]):
                d = ch_shift[term]
                lo = 0 if d >= 0 else -d
                hi = n - d if d >= 0 else n
                cf = ch_coef[term]
                if first:
                    for i in range(0, lo):
                        row[i] = 0.0 + 0.0j
                    for i in range(lo, hi):
                        v = cf[i] * psi[i + d]
                        row[i] = v
                        z += np.conj(psi[i]) * v
                    for i in range(hi, n):
                        row[i] = 0.0 + 0.0j
                    first = False
                else:
                    for i in range(lo, hi):
                        v = cf[i] * psi[i + d]
                        row[i] += v
                        z += np.conj(psi[i]) * v
            if first:
                for i in range(n):
                    row[i] = 0.0 + 0.0j
            z *= ch_phase[k]
            x_out[step, k] = 2.0 * z.real

        first = True
        for term in range(n_jterms):
            d = j_shift[term]
            lo = 0 if d >= 0 else -d
            hi = n - d if d >= 0 else n
            cf = j_coef[term]
            if first:
                for i in range(0, lo):
                    w[i] = 0.0 + 0.0j
                for i in range(lo, hi):
                    w[i] = cf[i] * psi[i + d]
                for i in range(hi, n):
                    w[i] = 0.0 + 0.0j
                first = False
            else:
                for i in range(lo, hi):
                    w[i] += cf[i] * psi[i + d]
        jj = 0.0
        if record_j:
            zjr = 0.0
            zji = 0.0
            for i in range(n):
                jj += w[i].real * w[i].real + w[i].imag * w[i].imag
                zz = np.conj(psi[i]) * w[i]
                zjr += zz.real
                zji += zz.imag
            jexp_out[step, 0] = zjr
            jexp_out[step, 1] = zji
        else:
            for i in range(n):
                jj += w[i].real * w[i].real + w[i].imag * w[i].imag
        jj_out[step] = jj
        if record_c2:
            # J2 is the last diffusive channel by construction
            c2 = 0.0
            row = V[nchan - 1]
            for i in range(n):
                c2 += row[i].real * row[i].real + row[i].imag * row[i].imag
            c2_out[step] = c2
        if record_aux:
            _csr_mv(aux_data, aux_indices, aux_indptr, psi, buf)
            za = _vdot(psi, buf)
            aux_out[step, 0] = za.real
            aux_out[step, 1] = za.imag

        p = jj * dt
        if p > max_p:
            max_p = p
        if p > 0.1:
            return (STATUS_JUMP_PROB, step, drift, max_drift, max_top, max_p, n_jumps)

        for k in range(nchan):
            dq_out[step, k] = x_out[step, k] * dt + dW[step, k]
            coef[k] = ch_phase[k] * dq_out[step, k]

        if u[step] < p:
            inv = 1.0 / np.sqrt(jj)
            for i in range(n):
                psi[i] = w[i] * inv
            jump_mark[step] = 1
            n_jumps += 1
        else:
            if use_exact:
                if nchan == 2:
                    c0, c1 = coef[0], coef[1]
                    V0, V1 = V[0], V[1]
                    for i in range(n):
                        tmp[i] = psi[i] + c0 * V0[i] + c1 * V1[i]
                else:
                    for i in range(n):
                        t_acc = psi[i]
                        for k in range(nchan):
                            t_acc += coef[k] * V[k, i]
                        tmp[i] = t_acc
                _dense_mv(M, tmp, buf)
            else:
                _csr_mv(r_data, r_indices, r_indptr, psi, buf)
                if nchan == 3:
                    c0, c1, c2_ = coef[0], coef[1], coef[2]
                    V0, V1, V2 = V[0], V[1], V[2]
                    for i in range(n):
                        tmp[i] = ehalf[i] * (
                            psi[i] + dt * buf[i] + c0 * V0[i] + c1 * V1[i] + c2_ * V2[i]
                        )
                elif nchan == 2:
                    c0, c1 = coef[0], coef[1]
                    V0, V1 = V[0], V[1]
                    for i in range(n):
                        tmp[i] = ehalf[i] * (psi[i] + dt * buf[i] + c0 * V0[i] + c1 * V1[i])
                else:
                    for i in range(n):
                        t_acc = psi[i] + dt * buf[i]
                        for k in range(nchan):
                            t_acc += coef[k] * V[k, i]
                        tmp[i] = ehalf[i] * t_acc
                for q in range(giv_i.shape[0]):
                    ii = giv_i[q]
                    jj_ = giv_j[q]
                    xi = tmp[ii]
                    xj = tmp[jj_]
                    tmp[ii] = giv_c[q] * xi + giv_s[q] * xj
                    tmp[jj_] = -giv_s[q] * xi + giv_c[q] * xj
                for i in range(n):
                    buf[i] = ehalf[i] * tmp[i]
            nsq = 0.0
            for i in range(n):
                nsq += buf[i].real * buf[i].real + buf[i].imag * buf[i].imag
            if not np.isfinite(nsq) or nsq < 1e-12 or nsq > 1e12:
                return (STATUS_BLOWUP, step, drift, max_drift, max_top, max_p, n_jumps)
            nrm = np.sqrt(nsq)
            drift = abs(nrm - 1.0)
            if drift > max_drift:
                max_drift = drift
            inv = 1.0 / nrm
            for i in range(n):
                psi[i] = buf[i] * inv

        tp = 0.0
        for q in range(top_idx.shape[0]):
            c = psi[top_idx[q]]
            tp += c.real * c.real + c.imag * c.imag
        if tp > max_top:
            max_top = tp

    return (STATUS_OK, n_steps, drift, max_drift, max_top, max_p, n_jumps)


@njit(cache=True, nogil=True, inline="always")
def _csr_mm_left(data, indices, indptr, k, n, rho, out):
    """out = L @ rho for channel k of a flat CSR stack; rho, out are (n, n)."""
    base = k * (n + 1)
    for i in range(n):
        for j in range(n):
            out[i, j] = 0.0 + 0.0j
        for t in range(indptr[base + i], indptr[base + i + 1]):
            v = data[t]
            col = indices[t]
            for j in range(n):
                out[i, j] += v * rho[col, j]


@njit(cache=True, nogil=True)
def run_sme_kernel(
    rho0,
    dt,
    n_steps,
    M,
    MH,
    ld_data,
    ld_indices,
    ld_indptr,
    n_lind,
    r_data,
    r_indices,
    r_indptr,
    phase_r,
    a_data,
    a_indices,
    a_indptr,
    dW,
    dq_out,
    a_out,
):
    """Diffusive stochastic master equation, one monitored channel.

    Deterministic part: rho -> M rho M† + dt * sum_k L_k rho L_k† with
    M = expm((-iH - 1/2 sum L†L) dt), which is exact for the drift and
    unconditionally stable.  Innovation: dW * H[r] rho at the
    pre-update state.  Trace-renormalized every step.
    Returns (status, bad_step).
    """
    n = rho0.shape[0]
    rho = rho0.copy()
    G = np.empty((n, n), dtype=np.complex128)
    acc = np.empty((n, n), dtype=np.complex128)
    s1 = np.empty((n, n), dtype=np.complex128)

    for step in range(n_steps):
        # s1 = r rho,   H[r] rho = s1 + s1† - tr(s1 + s1†) rho  (rho Hermitian)
        for i in range(n):
            for j in range(n):
                s1[i, j] = 0.0 + 0.0j
            for t in range(r_indptr[i], r_indptr[i + 1]):
                v = phase_r * r_data[t]
                col = r_indices[t]
                for j in range(n):
                    s1[i, j] += v * rho[col, j]
        x = 0.0
        for i in range(n):
            x += 2.0 * s1[i, i].real
        dq = x * dt + dW[step]
        dq_out[step] = dq

        # <a> of the pre-update state
        za = 0.0 + 0.0j
        for i in range(n):
            for t in range(a_indptr[i], a_indptr[i + 1]):
                za += a_data[t] * rho[a_indices[t], i]
        a_out[step, 0] = za.real
        a_out[step, 1] = za.imag

        # deterministic: acc = M rho M†
        G[:] = np.dot(M, rho)
        acc[:] = np.dot(G, MH)

        # recycling terms dt * L rho L†
        for k in range(n_lind):
            base = k * (n + 1)
            for i in range(n):
                rs = ld_indptr[base + i]
                re = ld_indptr[base + i + 1]
                if rs == re:
                    continue
                for j in range(n):
                    rs2 = ld_indptr[base + j]
                    re2 = ld_indptr[base + j + 1]
                    if rs2 == re2:
                        continue
                    term = 0.0 + 0.0j
                    for t in range(rs, re):
                        vi = ld_data[t]
                        ci = ld_indices[t]
                        for t2 in range(rs2, re2):
                            term += vi * rho[ci, ld_indices[t2]] * np.conj(ld_data[t2])
                    acc[i, j] += dt * term

        # innovation
        for i in range(n):
            for j in range(n):
                acc[i, j] += dW[step] * (s1[i, j] + np.conj(s1[j, i]) - x * rho[i, j])

        tr = 0.0
        for i in range(n):
            tr += acc[i, i].real
        if not np.isfinite(tr) or tr < 1e-12 or tr > 1e12:
            return (STATUS_BLOWUP, step)
        inv = 1.0 / tr
        for i in range(n):
            for j in range(n):
                rho[i, j] = acc[i, j] * inv

    rho0[:] = rho
    return (STATUS_OK, n_steps)


@njit(cache=True, nogil=True)
def run_zakai_kernel(
    rho0,
    dt,
    n_steps,
    M,
    MH,
    ld_data,
    ld_indices,
    ld_indptr,
    n_lind,
    r_data,
    r_indices,
    r_indptr,
    phase_r,
    dq,
):
    """Linear (unnormalized) record-driven propagation for hypothesis testing.

    Kraus-style step B = (M + r dq) rho (M + r dq)† + dt sum_k L_k rho L_k†,
    renormalized each step with the log-scale accumulated.  The returned
    value is log Tr(rho_tilde(T)) relative to the Wiener reference
    measure, i.e. the log-likelihood of the record under this model.
    Returns (status, bad_step, loglik).
    """
    n = rho0.shape[0]
    rho = rho0.copy()
    G = np.empty((n, n), dtype=np.complex128)
    acc = np.empty((n, n), dtype=np.complex128)
    s1 = np.empty((n, n), dtype=np.complex128)
    loglik = 0.0

    for step in range(n_steps):
        # deterministic sandwich
        G[:] = np.dot(M, rho)
        acc[:] = np.dot(G, MH)
        # s1 = r rho M†  (record cross term, first order);  use r (rho M†) = r G2
        # with G2 = rho @ MH: reuse G for rho MH
        G[:] = np.dot(rho, MH)
        for i in range(n):
            for j in range(n):
                s1[i, j] = 0.0 + 0.0j
            for t in range(r_indptr[i], r_indptr[i + 1]):
                v = phase_r * r_data[t]
                col = r_indices[t]
                for j in range(n):
                    s1[i, j] += v * G[col, j]
        d = dq[step]
        for i in range(n):
            for j in range(n):
                acc[i, j] += d * (s1[i, j] + np.conj(s1[j, i]))
        # second-order record term d^2 * r rho r†
        for i in range(n):
            rs = r_indptr[i]
            re = r_indptr[i + 1]
            if rs == re:
                continue
            for j in range(n):
                rs2 = r_indptr[j]
                re2 = r_indptr[j + 1]
                if rs2 == re2:
                    continue
                term = 0.0 + 0.0j
                for t in range(rs, re):
                    vi = phase_r * r_data[t]
                    ci = r_indices[t]
                    for t2 in range(rs2, re2):
                        term += vi * rho[ci, r_indices[t2]] * np.conj(phase_r * r_data[t2])
                acc[i, j] += d * d * term
        # unobserved-channel recycling
        for k in range(n_lind):
            base = k * (n + 1)
            for i in range(n):
                rs = ld_indptr[base + i]
                re = ld_indptr[base + i + 1]
                if rs == re:
                    continue
                for j in range(n):
                    rs2 = ld_indptr[base + j]
                    re2 = ld_indptr[base + j + 1]
                    if rs2 == re2:
                        continue
                    term = 0.0 + 0.0j
                    for t in range(rs, re):
                        vi = ld_data[t]
                        ci = ld_indices[t]
                        for t2 in range(rs2, re2):
                            term += vi * rho[ci, ld_indices[t2]] * np.conj(ld_data[t2])
                    acc[i, j] += dt * term

        tr = 0.0
        for i in range(n):
            tr += acc[i, i].real
        if not np.isfinite(tr) or tr <= 0.0:
            return (STATUS_BLOWUP, step, loglik)
        loglik += np.log(tr)
        inv = 1.0 / tr
        for i in range(n):
            for j in range(n):
                rho[i, j] = acc[i, j] * inv

    return (STATUS_OK, n_steps, loglik)
