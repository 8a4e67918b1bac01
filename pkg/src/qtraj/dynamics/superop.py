"""Superoperator construction for the unconditional master equation.

Row-major vectorization: vec(rho)[i*n + j] = rho[i, j], so the matrix
of rho -> A rho B is kron(A, B^T).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..model import CascadeModel
from ..operators import Operator


def _csr(op) -> sp.csr_matrix:
    if isinstance(op, Operator):
        return op.csr()
    return sp.csr_matrix(op)


def sandwich(A, B) -> sp.csr_matrix:
    """Matrix of rho -> A rho B."""
    A, B = _csr(A), _csr(B)
    return sp.kron(A, B.T, format="csr")


def spre(A) -> sp.csr_matrix:
    A = _csr(A)
    n = A.shape[0]
    return sp.kron(A, sp.identity(n, dtype=np.complex128, format="csr"), format="csr")


def spost(B) -> sp.csr_matrix:
    B = _csr(B)
    n = B.shape[0]
    return sp.kron(sp.identity(n, dtype=np.complex128, format="csr"), B.T, format="csr")


def dissipator(L) -> sp.csr_matrix:
    """D[L]: rho -> L rho L† - (L†L rho + rho L†L)/2."""
    L = _csr(L)
    Ld = L.conj().T.tocsr()
    LdL = (Ld @ L).tocsr()
    return sandwich(L, Ld) - 0.5 * (spre(LdL) + spost(LdL))


def commutator_super(H) -> sp.csr_matrix:
    """rho -> -i [H, rho]."""
    return -1j * (spre(H) - spost(H))


def liouvillian(model: CascadeModel) -> sp.csr_matrix:
    """Full unconditional generator: -i[H, .] + D[J] + D[J2] + sum_j D[sqrt(k_j) a_j]."""
    L = commutator_super(model.H)
    L = L + dissipator(model.jump_channel)
    for ch in model.diffusive_channels:
        L = L + dissipator(ch.op)
    return L.tocsr()


def paper_form_single_unit(model: CascadeModel) -> sp.csr_matrix:
    """The printed single-unit generator: four dissipators plus the cascade cross term.

    sqrt(gc*g01) ([c rho, s10] + [s01, rho c†]) expands to
    c rho s10 - s10 c rho + s01 rho c† - rho c† s01.
    """
    import math

    from ..model import D_SOURCE
    from ..operators import annihilation, embed, transition

    if model.n_units != 1:
        raise ValueError("paper form is the single-unit reduction")
    p = model.unit_params[0]
    s = model.source_params
    dims = model.dims
    c = embed(annihilation(D_SOURCE), 0, dims).csr()
    s01 = embed(transition(0, 1), 1, dims).csr()
    s10 = embed(transition(1, 0), 1, dims).csr()
    s12 = embed(transition(1, 2), 1, dims).csr()
    a = embed(annihilation(model.d_cavity), 2, dims).csr()

    H_s = build_single_unit_hamiltonian_csr(model)
    L = commutator_super(H_s)
    L = L + dissipator(math.sqrt(s.gamma_c) * c)
    L = L + dissipator(math.sqrt(p.gamma01) * s01)
    L = L + dissipator(math.sqrt(p.gamma12) * s12)
    L = L + dissipator(math.sqrt(p.kappa) * a)
    root = math.sqrt(s.gamma_c * p.gamma01)
    cross = (
        sandwich(c, s10)
        - spre(s10 @ c)
        + sandwich(s01, c.conj().T.tocsr())
        - spost(c.conj().T.tocsr() @ s01)
    )
    return (L + root * cross).tocsr()


def build_single_unit_hamiltonian_csr(model: CascadeModel) -> sp.csr_matrix:
    """Eq.-(1)-only Hamiltonian (no cascade term), for the paper-form generator."""
    from ..model import build_hamiltonian_single

    return build_hamiltonian_single(model.unit_params[0], model.dims).csr()
