import math

import numpy as np
import pytest

from qtraj.errors import DimensionError
from qtraj.operators import (
    Dims,
    Operator,
    QuantumState,
    annihilation,
    basis_state,
    coherent_state,
    embed,
    expectation,
    identity,
    number_op,
    transition,
)


class TestAnnihilation:
    def test_lowest_truncation(self):
        a = annihilation(2)
        assert np.array_equal(a.dense(), np.array([[0, 1], [0, 0]], dtype=complex))

    def test_ladder_action(self):
        a = annihilation(3)
        out = a.dense() @ basis_state(1, 3)
        assert np.allclose(out, basis_state(0, 3))

    def test_number_operator(self):
        a = annihilation(5)
        n = a.dag().dense() @ a.dense()
        assert np.allclose(n, np.diag([0, 1, 2, 3, 4]))

    def test_invalid_dimension(self):
        with pytest.raises(DimensionError):
            annihilation(1)

    @pytest.mark.parametrize("d", range(2, 9))
    def test_truncated_commutator(self, d):
        a = annihilation(d).dense()
        comm = a @ a.conj().T - a.conj().T @ a
        expected = np.diag([1.0] * (d - 1) + [-(d - 1.0)])
        assert np.max(np.abs(comm - expected)) <= 1e-12


class TestTransition:
    def test_lowering_action(self):
        s01 = transition(0, 1, 3)
        assert np.allclose(s01.dense() @ basis_state(1, 3), basis_state(0, 3))

    def test_projector_idempotent(self):
        p = transition(1, 1, 3)
        assert np.allclose(p.dense() @ p.dense(), p.dense())

    def test_adjoint_relation(self):
        assert np.array_equal(transition(1, 2, 3).dag().dense(), transition(2, 1, 3).dense())

    def test_out_of_range(self):
        with pytest.raises(DimensionError):
            transition(0, 3, 3)
        with pytest.raises(DimensionError):
            transition(-1, 0, 3)


class TestEmbed:
    def test_identity_embeds_to_identity(self):
        dims = Dims([2, 3, 4])
        for slot, d in enumerate(dims.subsystem_dims):
            out = embed(identity(d), slot, dims)
            assert np.allclose(out.dense(), np.eye(24))

    def test_disjoint_slots_commute(self):
        dims = Dims([2, 3, 4])
        A = embed(annihilation(3), 1, dims)
        B = embed(annihilation(4), 2, dims)
        comm = A.dense() @ B.dense() - B.dense() @ A.dense()
        assert np.max(np.abs(comm)) <= 1e-12

    def test_dimension_bookkeeping(self):
        out = embed(annihilation(4), 2, Dims([2, 3, 4]))
        assert out.dense().shape == (24, 24)

    def test_spectrum_preserved_with_multiplicity(self):
        dims = Dims([2, 3])
        op = transition(1, 1, 3) + 2.0 * transition(2, 2, 3)
        emb = embed(op, 1, dims)
        ev = np.sort(np.linalg.eigvals(emb.dense()).real)
        base = np.sort(np.linalg.eigvals(op.dense()).real)
        # each eigenvalue of op appears with multiplicity total_dim / d_slot
        expected = np.sort(np.concatenate([base, base]))
        assert np.allclose(ev, expected, atol=1e-12)

    def test_slot_and_dims_mismatch(self):
        dims = Dims([2, 3])
        with pytest.raises(DimensionError):
            embed(annihilation(4), 1, dims)
        with pytest.raises(DimensionError):
            embed(annihilation(3), 2, dims)

    def test_sparse_dense_agree(self):
        dims = Dims([2, 3, 4])
        sp_op = embed(annihilation(4), 2, dims, sparse=True)
        de_op = embed(annihilation(4), 2, dims, sparse=False)
        assert np.max(np.abs(sp_op.dense() - de_op.dense())) == 0.0


class TestCoherentState:
    def test_vacuum(self):
        st = coherent_state(0.0, 8)
        assert np.allclose(st.data, basis_state(0, 8))

    def test_mean_amplitude_vs_wide_truncation_oracle(self):
        # oracle: evaluate the same series at d=64, where truncation is lossless
        alpha = 1.7297
        wide = coherent_state(alpha, 64)
        a64 = annihilation(64)
        exact = expectation(a64, wide)
        st = coherent_state(alpha, 16)
        val = expectation(annihilation(16), st)
        assert abs(exact - alpha) < 1e-12
        assert abs(val - alpha) < 1e-3

    def test_truncation_norm_deficit_poisson_tail(self):
        # oracle: Poisson(|alpha|^2 = 3) tail mass beyond n = 15
        alpha = math.sqrt(3.0)
        n = np.arange(16)
        log_fact = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, 16)))))
        probs = np.exp(-3.0 + n * np.log(3.0) - log_fact)
        tail = 1.0 - probs.sum()
        assert tail < 1e-5
        amps = np.exp(-abs(alpha) ** 2 / 2) * alpha ** n / np.sqrt(np.exp(log_fact))
        deficit = 1.0 - np.linalg.norm(amps)
        assert 0 <= deficit < 1e-5

    def test_warns_when_truncation_too_tight(self):
        with pytest.warns(UserWarning):
            coherent_state(3.0, 6)


class TestExpectation:
    def test_number_on_vacuum(self):
        st = QuantumState(Dims([5]), basis_state(0, 5))
        assert expectation(number_op(5), st) == 0.0

    def test_coherent_eigenrelation(self):
        st = coherent_state(1.2, 24)
        assert abs(expectation(annihilation(24), st) - 1.2) < 1e-9

    def test_ground_state_population(self):
        st = QuantumState(Dims([3]), basis_state(0, 3))
        assert expectation(transition(1, 1, 3), st) == 0.0

    def test_linearity_and_conjugate_symmetry(self, rng):
        d = 6
        dims = Dims([d])
        for _ in range(20):
            m1 = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            m2 = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
            v /= np.linalg.norm(v)
            st = QuantumState(dims, v)
            o1, o2 = Operator(dims, m1), Operator(dims, m2)
            lhs = expectation(Operator(dims, 2.0 * m1 + 3.0j * m2), st)
            rhs = 2.0 * expectation(o1, st) + 3.0j * expectation(o2, st)
            assert abs(lhs - rhs) < 1e-12
            assert abs(expectation(o1.dag(), st) - np.conj(expectation(o1, st))) < 1e-12

    def test_dimension_mismatch(self):
        st = QuantumState(Dims([4]), basis_state(0, 4))
        with pytest.raises(DimensionError):
            expectation(number_op(5), st)

    def test_density_matrix_branch(self):
        st = coherent_state(0.8, 16).to_density()
        assert abs(expectation(annihilation(16), st) - 0.8) < 1e-9

    def test_hermitian_discard(self):
        st = coherent_state(0.5, 8)
        n_op = number_op(8)
        val = expectation(n_op, st, hermitian=True)
        assert isinstance(val, float)


class TestQuantumState:
    def test_pure_validation(self):
        st = QuantumState(Dims([3]), basis_state(1, 3))
        st.validate()

    def test_density_validation_rejects_negative(self):
        bad = np.diag([1.2, -0.2, 0.0]).astype(complex)
        st = QuantumState(Dims([3]), bad, "density")
        with pytest.raises(Exception):
            st.validate()

    def test_shape_checks(self):
        with pytest.raises(DimensionError):
            QuantumState(Dims([3]), np.zeros(4, complex))
        with pytest.raises(DimensionError):
            QuantumState(Dims([3]), np.zeros((2, 2), complex), "density")
