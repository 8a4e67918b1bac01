import numpy as np
import pytest
from scipy.integrate import solve_ivp

from qtraj.dynamics import TimeGrid, compile_sse, evolve_master, expected_current, run_trajectory
from qtraj.dynamics.engine import drift_generator
from qtraj.dynamics.trajectory import TraceRequest, aux_csr_from, run_raw, run_study
from qtraj.errors import NumericalError
from qtraj.model import SourceParams, UnitParams, build_single_unit, initial_state
from qtraj.operators import annihilation, embed, identity
from qtraj.seeding import derive_trajectory_seed


@pytest.fixture(scope="module")
def compiled_exact(unit_model):
    return compile_sse(unit_model, 1e-3, "exact")


@pytest.fixture(scope="module")
def compiled_split(unit_model):
    return compile_sse(unit_model, 1e-3, "split")


class TestReproducibility:
    def test_fixed_seed_replays_bit_identical(self, unit_model, compiled_exact):
        grid = TimeGrid(0, 2.0, 1e-3)
        r1 = run_trajectory(unit_model, None, grid, seed=99, compiled=compiled_exact)
        r2 = run_trajectory(unit_model, None, grid, seed=99, compiled=compiled_exact)
        for lab in r1.currents:
            assert np.array_equal(r1.currents[lab], r2.currents[lab])
        assert np.array_equal(r1.jump_times, r2.jump_times)

    def test_different_seeds_differ(self, unit_model, compiled_exact):
        grid = TimeGrid(0, 1.0, 1e-3)
        r1 = run_trajectory(unit_model, None, grid, seed=1, compiled=compiled_exact)
        r2 = run_trajectory(unit_model, None, grid, seed=2, compiled=compiled_exact)
        assert not np.array_equal(r1.currents["cavA"], r2.currents["cavA"])


class TestJumpChannel:
    def test_empty_source_never_jumps(self, compiled_exact, unit_model):
        # with the source in |0> and transmons in the ground state,
        # <J†J> vanishes identically, so no seed can produce a jump
        grid = TimeGrid(0, 2.0, 1e-3)
        psi0 = initial_state(unit_model, override_initial="fock0").data
        for seed in range(20):
            raw = run_raw(compiled_exact, psi0, grid, seed)
            assert raw.jump_mark.sum() == 0
            assert np.max(raw.jj) < 1e-20

    def test_single_photon_jumps_once_at_most(self, compiled_exact, unit_model):
        grid = TimeGrid(0, 20.0, 1e-3)
        psi0 = initial_state(unit_model, override_initial="fock1").data
        counts = [run_raw(compiled_exact, psi0, grid, s).jump_mark.sum() for s in range(12)]
        assert max(counts) <= 1

    def test_oversized_jump_probability_raises(self):
        m = build_single_unit(UnitParams(), SourceParams(gamma_c=200.0), d_cavity=4)
        grid = TimeGrid(0, 0.01, 1e-3)
        with pytest.raises(NumericalError, match="jump probability"):
            run_trajectory(m, None, grid, seed=0)


class TestNormalization:
    def test_state_norm_exact_after_every_step(self, unit_model, compiled_exact):
        # the identity expectation recorded per step is exactly 1 when the
        # state is renormalized after each update
        grid = TimeGrid(0, 1.0, 1e-3)
        psi0 = initial_state(unit_model).data
        aux = aux_csr_from(identity(0, unit_model.dims))
        raw = run_raw(compiled_exact, psi0, grid, seed=5, aux_csr=aux)
        assert np.max(np.abs(raw.aux[:, 0] - 1.0)) < 1e-12
        assert np.max(np.abs(raw.aux[:, 1])) < 1e-12


class TestDeterministicLimit:
    def test_zero_noise_matches_dark_steady_state(self, unit_model, compiled_exact):
        grid = TimeGrid(0, 2.0, 1e-3)
        psi0 = initial_state(unit_model, override_initial="fock0").data
        a_op = embed(annihilation(16), 2, unit_model.dims, sparse=True)
        raw = run_raw(compiled_exact, psi0, grid, seed=0, aux_csr=aux_csr_from(a_op), zero_noise=True)
        alpha = raw.aux[:, 0] + 1j * raw.aux[:, 1]
        # residual drift reflects the d=16 truncation of the coherent state
        assert np.max(np.abs(alpha - alpha[0])) < 1e-6

    def test_zero_noise_error_shrinks_with_dt(self, unit_model):
        # the zero-noise trajectory still carries the deterministic record
        # terms x_k e^{-i phi} L_k psi dt (dQ = x dt when dW = 0); the
        # reference integrates that nonlinear conditional equation adaptively
        K = drift_generator(unit_model).toarray()
        chans = [
            (np.exp(-1j * ch.phase), ch.op.dense())
            for ch in unit_model.diffusive_channels
        ]
        psi0 = initial_state(unit_model, override_initial="fock1").data
        T = 2.0

        def rhs(_t, y):
            nrm2 = np.vdot(y, y).real
            out = K @ y
            for phase, L in chans:
                Ly = L @ y
                x = 2.0 * (phase * np.vdot(y, Ly)).real / nrm2
                out += x * phase * Ly
            return out

        sol = solve_ivp(rhs, (0, T), psi0.astype(complex), method="DOP853",
                        rtol=1e-11, atol=1e-13)
        ref = sol.y[:, -1]
        ref = ref / np.linalg.norm(ref)
        a_full = embed(annihilation(16), 2, unit_model.dims).dense()
        alpha_ref = np.vdot(ref, a_full @ ref)
        a_csr = aux_csr_from(embed(annihilation(16), 2, unit_model.dims, sparse=True))

        def endpoint_alpha(backend, dt):
            compiled = compile_sse(unit_model, dt, backend)
            grid = TimeGrid(0, T, dt)
            raw = run_raw(compiled, psi0, grid, seed=0, aux_csr=a_csr, zero_noise=True)
            return raw.aux[-1, 0] + 1j * raw.aux[-1, 1]

        for backend in ("exact", "split"):
            err_coarse = abs(endpoint_alpha(backend, 2e-3) - alpha_ref)
            err_fine = abs(endpoint_alpha(backend, 1e-3) - alpha_ref)
            # first-order remainder: halving dt should roughly halve the
            # error (generous slack for higher-order components)
            assert err_fine < 0.75 * err_coarse, backend


class TestSplitVsExact:
    def test_same_seed_records_agree(self, unit_model, compiled_exact, compiled_split):
        grid = TimeGrid(0, 8.0, 1e-3)
        psi0 = initial_state(unit_model).data
        r_exact = run_raw(compiled_exact, psi0, grid, seed=3)
        r_split = run_raw(compiled_split, psi0, grid, seed=3)
        assert np.max(np.abs(r_exact.dq - r_split.dq)) < 1e-6
        assert np.array_equal(r_exact.jump_mark, r_split.jump_mark)


class TestCurrentStatistics:
    def test_vacuum_record_is_pure_shot_noise(self, unit_model, compiled_exact):
        # n=0 at the operating point: normalized increments dQ/sqrt(dt) are
        # standard normal
        grid = TimeGrid(0, 4.0, 1e-3)
        psi0 = initial_state(unit_model, override_initial="fock0").data
        seeds = [derive_trajectory_seed(7, 0, i) for i in range(50)]
        samples = []
        for s in seeds:
            raw = run_raw(compiled_exact, psi0, grid, s)
            samples.append(raw.dq[:, 0])
        z = np.concatenate(samples) / np.sqrt(grid.dt)
        n = z.size
        assert abs(z.mean()) < 5.0 / np.sqrt(n)
        assert abs(z.var() - 1.0) < 0.1

    def test_ensemble_mean_current_matches_master(self, unit_model, compiled_exact):
        # unraveling consistency at reduced scale (full scale in acceptance)
        grid = TimeGrid(0, 8.0, 1e-3)
        psi0 = initial_state(unit_model, override_initial="fock1").data
        seeds = [derive_trajectory_seed(11, 1, i) for i in range(400)]
        _, agg = run_study(compiled_exact, grid, psi0, seeds, traces=TraceRequest(x=True), workers=2)
        mean, se = agg.mean_se("x")
        (exact,) = expected_current(unit_model, 1, grid)
        resid = np.abs(mean[:, 0] - exact.values)
        bound = 5.0 * np.maximum(se[:, 0], 1e-4)
        assert np.all(resid <= bound)


class TestDiagnosticsFlags:
    def test_truncation_violation_flags(self):
        m = build_single_unit(UnitParams(), SourceParams(), d_cavity=6)
        grid = TimeGrid(0, 1.0, 1e-3)
        compiled = compile_sse(m, 1e-3)
        with pytest.warns(UserWarning):
            psi0 = initial_state(m).data
        raw = run_raw(compiled, psi0, grid, seed=0)
        assert raw.diagnostics.flagged
        assert "top Fock level" in raw.diagnostics.flag_reason
