import math

import numpy as np
import pytest

from qtraj.dynamics import TimeGrid, evolve_master, expected_current, output_flux
from qtraj.errors import ConfigurationError
from qtraj.model import (
    SourceParams,
    UnitParams,
    build_single_unit,
    build_two_unit,
    excitation_op,
    initial_state,
)
from qtraj.operators import annihilation, embed, identity, number_op

ALPHA_SS = 2 * 0.032 / 0.037


class TestEvolveMaster:
    def test_bare_source_decay(self):
        # all couplings off except the source output: <c†c>(t) = e^{-gamma_c t}
        p = UnitParams(g=0.0, E=0.0, gamma01=0.0, gamma12=0.0)
        m = build_single_unit(p, SourceParams(), d_cavity=2)
        grid = TimeGrid(0, 10.0, 1e-3)
        n_c = embed(number_op(2), 0, m.dims)
        (tr,) = evolve_master(m, initial_state(m), grid, [n_c])
        decay = tr.values.real
        t = grid.points()
        assert abs(decay[-1] - math.exp(-1.0)) < 1e-6
        assert np.max(np.abs(decay - np.exp(-0.1 * t))) < 1e-6

    def test_steady_state_holds_with_empty_source(self, unit_model):
        m = build_single_unit(UnitParams(), SourceParams(initial="fock0"))
        grid = TimeGrid(0, 8.0, 1e-3)
        a = embed(annihilation(16), 2, m.dims)
        from qtraj.model import quadrature_op

        x = quadrature_op(m, "cavA")
        tr_a, tr_x = evolve_master(m, initial_state(m), grid, [a, x])
        assert np.max(np.abs(tr_a.values - ALPHA_SS)) < 1e-4
        assert np.max(np.abs(tr_x.values.real)) < 1e-4

    def test_trace_preserved_via_identity_observable(self, unit_model):
        grid = TimeGrid(0, 4.0, 1e-3)
        ident = identity(0, unit_model.dims)
        (tr,) = evolve_master(unit_model, initial_state(unit_model), grid, [ident])
        assert np.max(np.abs(tr.values - 1.0)) <= 1e-8

    def test_excitation_nonincreasing_without_drive(self):
        p = UnitParams(E=0.0)
        m = build_single_unit(p, SourceParams(initial="fock1"), d_cavity=8)
        grid = TimeGrid(0, 20.0, 2e-3)
        (tr,) = evolve_master(m, initial_state(m), grid, [excitation_op(m)])
        exc = tr.values.real
        assert exc[0] == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.diff(exc) <= 1e-9)

    def test_two_unit_rejected(self, two_unit_model):
        grid = TimeGrid(0, 1.0, 1e-3)
        with pytest.raises(ConfigurationError):
            evolve_master(two_unit_model, initial_state(two_unit_model), grid, [])


class TestExpectedCurrent:
    def test_empty_hypothesis_current_vanishes(self, unit_model):
        grid = TimeGrid(0, 8.0, 1e-3)
        (tr,) = expected_current(unit_model, 0, grid)
        assert tr.values.size == grid.n_steps
        assert np.max(np.abs(tr.values)) < 1e-4

    def test_single_photon_response_departs_and_relaxes(self, unit_model):
        # transient response: leaves zero, peaks, heads back toward zero
        grid = TimeGrid(0, 80.0, 2e-3)
        (tr,) = expected_current(unit_model, 1, grid)
        v = np.abs(tr.values)
        peak = v.max()
        k = int(np.argmax(v))
        assert peak > 0.05
        assert k not in (0, v.size - 1)
        assert v[-1] < 0.5 * peak
        # declining tail: mean of the last tenth below mean of the peak tenth
        tail = v[-v.size // 10:].mean()
        assert tail < 0.6 * v[max(0, k - v.size // 20): k + v.size // 20].mean()

    def test_kernel_self_overlap_positive(self, unit_model):
        grid = TimeGrid(0, 8.0, 1e-3)
        (tr,) = expected_current(unit_model, 1, grid)
        assert np.sum(tr.values**2) * grid.dt > 0

    def test_invalid_hypothesis(self, unit_model):
        with pytest.raises(ConfigurationError):
            expected_current(unit_model, 2, TimeGrid(0, 1.0, 1e-3))


class TestOutputFlux:
    def test_vacuum_source_no_flux(self, unit_model):
        grid = TimeGrid(0, 4.0, 1e-3)
        res = output_flux(unit_model, 0, grid)
        assert np.max(np.abs(res.flux_j.values.real)) < 1e-10
        assert np.max(np.abs(res.reference.values)) == 0.0

    def test_decoupled_waveguide_bare_decay(self):
        p = UnitParams(gamma01=0.0, gamma12=0.0, g=0.0)
        m = build_single_unit(p, SourceParams(), d_cavity=2)
        grid = TimeGrid(0, 10.0, 1e-3)
        res = output_flux(m, 1, grid)
        t = grid.points()
        expected = 0.1 * np.exp(-0.1 * t)
        assert np.max(np.abs(res.flux_j.values.real - expected)) < 1e-6
        assert np.max(np.abs(res.reference.values - expected)) < 1e-12
