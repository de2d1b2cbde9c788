"""Operator algebra, Liouvillian machinery, and vectorization duality."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from opendicke import hilbert as hb


def random_density(rng, d):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = m @ m.conj().T
    return rho / np.trace(rho)


finite_c = st.complex_numbers(min_magnitude=0.0, max_magnitude=3.0,
                              allow_nan=False, allow_infinity=False)


def cmat(d):
    return arrays(np.complex128, (d, d), elements=finite_c)


class TestPauliAlgebra:
    def test_commutators(self):
        assert np.allclose(hb.SX @ hb.SY - hb.SY @ hb.SX, 2j * hb.SZ)
        assert np.allclose(hb.SY @ hb.SZ - hb.SZ @ hb.SY, 2j * hb.SX)
        assert np.allclose(hb.SZ @ hb.SX - hb.SX @ hb.SZ, 2j * hb.SY)

    def test_involutions(self):
        for s in (hb.SX, hb.SY, hb.SZ):
            assert np.allclose(s @ s, np.eye(2))
            assert np.allclose(hb.dag(s), s)


class TestLadder:
    def test_destroy_commutator_truncated(self):
        d = 7
        a = hb.destroy(d)
        comm = a @ hb.dag(a) - hb.dag(a) @ a
        # canonical up to the truncation edge
        assert np.allclose(np.diag(comm)[:-1], 1.0)
        assert np.isclose(np.diag(comm)[-1], 1.0 - d)

    def test_number_operator(self):
        a = hb.destroy(5)
        assert np.allclose(hb.dag(a) @ a, np.diag(np.arange(5.0)))


class TestLiftPartialTrace:
    @given(st.integers(0, 2))
    @settings(max_examples=6, deadline=None)
    def test_lift_acts_on_single_factor(self, which):
        dims = [2, 3, 2]
        rng = np.random.default_rng(3 + which)
        op = rng.normal(size=(dims[which], dims[which]))
        lifted = hb.lift(op, dims, which)
        rho = random_density(rng, int(np.prod(dims)))
        expect_full = np.trace(lifted @ rho)
        reduced = hb.partial_trace(rho, dims, keep=[which])
        assert np.isclose(np.trace(op @ reduced), expect_full)

    def test_partial_trace_product_state(self):
        rng = np.random.default_rng(5)
        pa = random_density(rng, 2)
        pb = random_density(rng, 3)
        joint = np.kron(pa, pb)
        assert np.allclose(hb.partial_trace(joint, [2, 3], keep=[0]), pa)
        assert np.allclose(hb.partial_trace(joint, [2, 3], keep=[1]), pb)

    def test_partial_trace_is_trace_preserving(self):
        rng = np.random.default_rng(6)
        rho = random_density(rng, 12)
        red = hb.partial_trace(rho, [3, 4], keep=[1])
        assert np.isclose(np.trace(red), 1.0)


class TestLiouvillian:
    def _spec(self, rng, d=3):
        h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        H = 0.5 * (h + h.conj().T)
        j1 = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        return hb.LiouvillianSpec(H=H, jumps=[(0.7, j1)])

    def test_trace_preservation(self):
        rng = np.random.default_rng(7)
        L = self._spec(rng)
        rho = random_density(rng, 3)
        assert abs(np.trace(hb.apply_liouvillian(L, rho))) < 1e-12

    def test_hermiticity_preservation(self):
        rng = np.random.default_rng(8)
        L = self._spec(rng)
        rho = random_density(rng, 3)
        out = hb.apply_liouvillian(L, rho)
        assert np.allclose(out, out.conj().T)

    def test_superop_matches_direct_action(self):
        """Dense superoperator (row-major vec) equals the direct action."""
        rng = np.random.default_rng(9)
        L = self._spec(rng)
        M = hb.superop_matrix(L)
        rho = random_density(rng, 3)
        direct = hb.apply_liouvillian(L, rho)
        via_matrix = (M @ rho.reshape(-1)).reshape(3, 3)
        assert np.max(np.abs(direct - via_matrix)) < 1e-10

    def test_adjoint_duality(self):
        """Tr[A L(rho)] = Tr[L^+(A) rho] to 1e-10 for random inputs."""
        rng = np.random.default_rng(10)
        L = self._spec(rng)
        for _ in range(5):
            rho = random_density(rng, 3)
            A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
            lhs = np.trace(A @ hb.apply_liouvillian(L, rho))
            rhs = np.trace(hb.apply_adjoint_liouvillian(L, A) @ rho)
            assert abs(lhs - rhs) < 1e-10

    def test_adjoint_superop_transpose_relation(self):
        rng = np.random.default_rng(11)
        L = self._spec(rng)
        M = hb.superop_matrix(L)
        Madj = hb.adjoint_superop_matrix(L)
        # duality in vec form: vec(A.T)^T M = (M^+ vec(A.T))^T up to conj
        A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        rho = random_density(rng, 3)
        lhs = A.T.reshape(-1) @ M @ rho.reshape(-1)
        rhs = (Madj @ A.reshape(-1)).reshape(3, 3).T.reshape(-1) @ (
            rho.reshape(-1))
        assert abs(lhs - rhs) < 1e-10


class TestDensityChecks:
    def test_herm_defect_zero_for_hermitian(self):
        rng = np.random.default_rng(12)
        rho = random_density(rng, 4)
        assert hb.herm_defect(rho) < 1e-14

    def test_check_density_matrix_flags_negative(self):
        # negativity is reported, not fatal (embedding truncation dips)
        report = hb.check_density_matrix(np.diag([1.2, -0.2]).astype(complex))
        assert report["positive"] is False

    def test_check_density_matrix_rejects_bad_trace(self):
        with pytest.raises(ValueError):
            hb.check_density_matrix(np.diag([0.9, 0.3]).astype(complex))

    def test_check_density_matrix_rejects_non_hermitian(self):
        bad = np.array([[0.5, 0.3], [0.0, 0.5]], dtype=complex)
        with pytest.raises(ValueError):
            hb.check_density_matrix(bad)

    def test_min_eigval_positive_state(self):
        rng = np.random.default_rng(13)
        rho = random_density(rng, 4)
        assert hb.min_eigval(rho) > -1e-12

    @given(cmat(3))
    @settings(max_examples=25, deadline=None)
    def test_herm_defect_bounded_by_construction(self, m):
        sym = 0.5 * (m + m.conj().T)
        assert hb.herm_defect(sym) < 1e-9
