"""Cascaded source -> transmon-cavity model assembly.

A "unit" is a three-level transmon dispersively coupled to a driven
probe cavity.  The itinerant signal photon is modeled by a fictitious
two-level source cavity that leaks into the unidirectional waveguide
feeding the transmon(s).  The collective waveguide lowering operator

    J  = sqrt(gamma_c) c + sum_j sqrt(gamma01_j) sigma01_j

together with the cascade Hamiltonian H_cas reproduces, for a single
unit, the four-dissipator-plus-cross-term generator exactly (this is a
tested invariant).  J2 = sum_j sqrt(gamma12_j) sigma12_j collects the
2->1 transmon emission into the same line.

Tensor slot order is fixed: [source, transmonA, cavityA(, transmonB,
cavityB)].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError
from .operators import (
    Dims,
    Operator,
    QuantumState,
    annihilation,
    basis_state,
    coherent_state,
    embed,
    expectation,
    tensor_pure,
    transition,
)

D_SOURCE = 2
D_TRANSMON = 3
DEFAULT_D_CAVITY = 16
TOP_LEVEL_TOLERANCE = 1e-5

SOURCE_INITIALS = ("fock0", "fock1", "superposition")


@dataclass(frozen=True)
class UnitParams:
    """Parameters of one transmon-cavity unit (rates in units of gamma01)."""

    gamma01: float = 1.0
    gamma12: float = 0.1
    g: float = 2.45
    delta1: float = -0.8
    delta2: float = -18.0
    E: float = 0.032
    kappa: float = 0.037
    phi: float = math.pi / 2

    def __post_init__(self):
        for name in ("gamma01", "gamma12", "kappa"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ConfigurationError(f"unit parameter {name}={v} must be finite and >= 0")
        for name in ("g", "delta1", "delta2", "E", "phi"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigurationError(f"unit parameter {name} must be finite")


@dataclass(frozen=True)
class SourceParams:
    """Fictitious source cavity: decay rate and initial photon content."""

    gamma_c: float = 0.1
    initial: str = "fock1"

    def __post_init__(self):
        if not np.isfinite(self.gamma_c) or self.gamma_c <= 0:
            raise ConfigurationError(f"gamma_c={self.gamma_c} must be finite and > 0")
        if self.initial not in SOURCE_INITIALS:
            raise ConfigurationError(
                f"source initial {self.initial!r} not one of {SOURCE_INITIALS}"
            )


@dataclass(frozen=True)
class DiffusiveChannel:
    """A homodyne-monitored channel: operator, local-oscillator phase, label."""

    op: Operator
    phase: float
    label: str


@dataclass(frozen=True)
class CascadeModel:
    """Fully assembled system ready for integration."""

    dims: Dims
    H: Operator
    diffusive_channels: tuple[DiffusiveChannel, ...]
    jump_channel: Operator
    n_units: int
    unit_params: tuple[UnitParams, ...]
    source_params: SourceParams
    d_cavity: int
    top_level_tolerance: float = TOP_LEVEL_TOLERANCE
    # slot indices, for observable builders
    slots: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.H.is_hermitian(1e-12):
            raise DimensionError("assembled Hamiltonian failed the Hermiticity predicate")
        for ch in self.diffusive_channels:
            if ch.op.dims != self.dims:
                raise DimensionError(f"channel {ch.label} dims mismatch")
        if self.jump_channel.dims != self.dims:
            raise DimensionError("jump channel dims mismatch")

    def channel_labels(self) -> list[str]:
        return [ch.label for ch in self.diffusive_channels]

    def cavity_channel_labels(self) -> list[str]:
        return [ch.label for ch in self.diffusive_channels if ch.label.startswith("cav")]

    def embed_at(self, op: Operator, slot: int) -> Operator:
        return embed(op, slot, self.dims)


def _unit_dims(n_units: int, d_cavity: int) -> Dims:
    dims = [D_SOURCE]
    for _ in range(n_units):
        dims += [D_TRANSMON, d_cavity]
    return Dims(dims)


def build_hamiltonian_single(
    p: UnitParams, dims: Dims, transmon_slot: int = 1, cavity_slot: int = 2
) -> Operator:
    """Single-unit Hamiltonian embedded on the full space.

    H = delta1 s11 + (delta1+delta2) s22 - i g (a s21 - a† s12) - i E (a - a†),
    identity on every other slot.
    """
    d_cav = dims[cavity_slot]
    s11 = embed(transition(1, 1), transmon_slot, dims)
    s22 = embed(transition(2, 2), transmon_slot, dims)
    s21 = embed(transition(2, 1), transmon_slot, dims)
    s12 = embed(transition(1, 2), transmon_slot, dims)
    a = embed(annihilation(d_cav), cavity_slot, dims)
    ad = a.dag()
    H = (
        p.delta1 * s11
        + (p.delta1 + p.delta2) * s22
        + (-1j * p.g) * (a @ s21 - ad @ s12)
        + (-1j * p.E) * (a - ad)
    )
    if not H.is_hermitian(1e-12):
        raise DimensionError("single-unit Hamiltonian failed Hermiticity (internal error)")
    return H


def _collective_ops(dims: Dims, units: tuple[UnitParams, ...], s: SourceParams):
    """J and J2 for the given unit list, plus the source operator."""
    c = embed(annihilation(D_SOURCE), 0, dims)
    J = math.sqrt(s.gamma_c) * c
    J2 = None
    for j, p in enumerate(units):
        t_slot = 1 + 2 * j
        s01 = embed(transition(0, 1), t_slot, dims)
        s12 = embed(transition(1, 2), t_slot, dims)
        J = J + math.sqrt(p.gamma01) * s01
        term = math.sqrt(p.gamma12) * s12
        J2 = term if J2 is None else J2 + term
    return c, J, J2


def _cascade_hamiltonian(dims: Dims, units: tuple[UnitParams, ...], s: SourceParams) -> Operator:
    """H_cas = -(i/2)(sum_j sqrt(gc*g01_j) c s10_j + A->B transfer terms) + h.c."""
    c = embed(annihilation(D_SOURCE), 0, dims)
    terms = None

    def add(t):
        nonlocal terms
        terms = t if terms is None else terms + t

    for j, p in enumerate(units):
        s10 = embed(transition(1, 0), 1 + 2 * j, dims)
        add(math.sqrt(s.gamma_c * p.gamma01) * (c @ s10))
    if len(units) == 2:
        pA, pB = units
        s01A = embed(transition(0, 1), 1, dims)
        s12A = embed(transition(1, 2), 1, dims)
        s10B = embed(transition(1, 0), 3, dims)
        s21B = embed(transition(2, 1), 3, dims)
        add(math.sqrt(pA.gamma01 * pB.gamma01) * (s01A @ s10B))
        add(math.sqrt(pA.gamma12 * pB.gamma12) * (s12A @ s21B))
    H_cas = (-0.5j) * terms + ((-0.5j) * terms).dag()
    return H_cas


def _assemble(units: tuple[UnitParams, ...], s: SourceParams, d_cavity: int,
              top_level_tolerance: float) -> CascadeModel:
    n_units = len(units)
    dims = _unit_dims(n_units, d_cavity)
    H = _cascade_hamiltonian(dims, units, s)
    channels = []
    slots = {"source": 0}
    for j, p in enumerate(units):
        t_slot, c_slot = 1 + 2 * j, 2 + 2 * j
        H = H + build_hamiltonian_single(p, dims, t_slot, c_slot)
        a = embed(annihilation(d_cavity), c_slot, dims)
        label = "cav" + ("AB"[j] if n_units == 2 else "A")
        channels.append(DiffusiveChannel(math.sqrt(p.kappa) * a, p.phi, label))
        slots[f"transmon{'AB'[j]}"] = t_slot
        slots[f"cavity{'AB'[j]}"] = c_slot
    _, J, J2 = _collective_ops(dims, units, s)
    channels.append(DiffusiveChannel(J2, 0.0, "J2"))
    return CascadeModel(
        dims=dims,
        H=H,
        diffusive_channels=tuple(channels),
        jump_channel=J,
        n_units=n_units,
        unit_params=units,
        source_params=s,
        d_cavity=d_cavity,
        top_level_tolerance=top_level_tolerance,
        slots=slots,
    )


def build_single_unit(
    p: UnitParams,
    s: SourceParams,
    d_cavity: int = DEFAULT_D_CAVITY,
    top_level_tolerance: float = TOP_LEVEL_TOLERANCE,
) -> CascadeModel:
    """Single transmon-cavity unit fed by the fictitious source."""
    return _assemble((p,), s, d_cavity, top_level_tolerance)


def build_two_unit(
    pA: UnitParams,
    pB: UnitParams,
    s: SourceParams,
    d_cavity: int = DEFAULT_D_CAVITY,
    top_level_tolerance: float = TOP_LEVEL_TOLERANCE,
) -> CascadeModel:
    """Two cascaded units A -> B sharing the unidirectional waveguide."""
    return _assemble((pA, pB), s, d_cavity, top_level_tolerance)


def source_vector(initial: str) -> np.ndarray:
    if initial == "fock0":
        return basis_state(0, D_SOURCE)
    if initial == "fock1":
        return basis_state(1, D_SOURCE)
    if initial == "superposition":
        return (basis_state(0, D_SOURCE) + basis_state(1, D_SOURCE)) / math.sqrt(2.0)
    raise ConfigurationError(f"unknown source initial {initial!r}")


def steady_cavity_alpha(p: UnitParams) -> float:
    """Empty-transmon steady amplitude 2E/kappa of the driven linear cavity."""
    if p.E == 0.0:
        return 0.0
    if p.kappa <= 0.0:
        raise ConfigurationError("kappa must be > 0 when the probe drive E is nonzero")
    return 2.0 * p.E / p.kappa


def initial_state(model: CascadeModel, override_initial: str | None = None) -> QuantumState:
    """Source state x transmon ground x coherent(2E/kappa) per unit.

    The probe cavity starts in the analytic steady state of the
    empty-transmon (linear) dynamics; with the transmon in its ground
    state the probe couples only to the 1<->2 transition, so this is
    exact, not an approximation.
    """
    initial = override_initial or model.source_params.initial
    factors = [source_vector(initial)]
    for p in model.unit_params:
        factors.append(basis_state(0, D_TRANSMON))
        alpha = steady_cavity_alpha(p)
        factors.append(coherent_state(alpha, model.d_cavity).data)
    psi = tensor_pure(*factors)
    return QuantumState(model.dims, psi, "pure")


def quadrature_op(model: CascadeModel, channel_label: str) -> Operator:
    """sqrt(kappa)(e^{-i phi} a + e^{i phi} a†) for a monitored channel.

    This is the noise-free part of that channel's homodyne current.
    """
    for ch in model.diffusive_channels:
        if ch.label == channel_label:
            L = ch.op
            return np.exp(-1j * ch.phase) * L + (np.exp(-1j * ch.phase) * L).dag()
    raise ConfigurationError(f"no diffusive channel labeled {channel_label!r}")


def excitation_op(model: CascadeModel) -> Operator:
    """c†c + sum_j (s11_j + 2 s22_j + a_j† a_j), the excitation bookkeeping observable."""
    dims = model.dims
    c = embed(annihilation(D_SOURCE), 0, dims)
    total = c.dag() @ c
    for j in range(model.n_units):
        t_slot, c_slot = 1 + 2 * j, 2 + 2 * j
        total = total + embed(transition(1, 1), t_slot, dims)
        total = total + 2.0 * embed(transition(2, 2), t_slot, dims)
        a = embed(annihilation(model.d_cavity), c_slot, dims)
        total = total + a.dag() @ a
    return total


def reduced_source_density(state: QuantumState) -> np.ndarray:
    """Trace out everything but the source slot."""
    n_rest = state.dims.total_dim // D_SOURCE
    if state.kind == "pure":
        m = state.data.reshape(D_SOURCE, n_rest)
        return m @ m.conj().T
    rho = state.data.reshape(D_SOURCE, n_rest, D_SOURCE, n_rest)
    return np.trace(rho, axis1=1, axis2=3)
