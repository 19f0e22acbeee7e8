"""System construction, validation, bases, and structure-preserving reductions."""
import numpy as np
import pytest

from dhstab import (
    DHStructureError,
    ObliqueBreakdownError,
    dh_system,
    gen_dense,
    oblique_basis,
    orthonormal_extend,
    realify_block,
    reduce_dh,
    reduce_structured,
    validate_dh,
)


def seeded_system(n=10, seed=3):
    system, _ = gen_dense(n, seed)
    return system


class TestDhSystem:
    def test_roundoff_defects_are_repaired(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((5, 5))
        J = (A - A.T) / 2
        Q = (A + A.T) / 2 + 10 * np.eye(5)
        R = np.eye(5)
        noise = 1e-13 * rng.standard_normal((5, 5))
        system = dh_system(J + noise, R + noise, Q + noise)
        assert np.linalg.norm(system.J + system.J.conj().T) == 0.0
        assert np.linalg.norm(system.R - system.R.conj().T) == 0.0
        assert np.linalg.norm(system.Q - system.Q.conj().T) == 0.0

    def test_large_skew_defect_rejected(self):
        J = np.array([[0.0, 1.0], [1.0, 0.0]])  # symmetric, not skew
        with pytest.raises(DHStructureError, match="J is not skew"):
            dh_system(J, np.eye(2), np.eye(2))

    def test_large_hermitian_defect_rejected(self):
        R = np.array([[1.0, 1.0], [-1.0, 1.0]])
        with pytest.raises(DHStructureError, match="R is not Hermitian"):
            dh_system(np.zeros((2, 2)), R, np.eye(2))

    def test_definiteness_left_to_validate(self):
        # an indefinite R passes construction; validation reports it
        system = dh_system(np.zeros((2, 2)), np.diag([1.0, -1.0]), np.eye(2))
        report = validate_dh(system)
        assert not report.ok
        assert any("semidefinite" in str(i) for i in report.issues)


class TestValidateDh:
    def test_valid_generated_instance(self):
        report = validate_dh(seeded_system())
        assert report.ok
        assert report.asymptotically_stable is True
        assert report.spectral_abscissa < 0

    def test_zero_dissipation_is_not_asymptotically_stable(self):
        J = np.array([[0.0, 1.0], [-1.0, 0.0]])
        system = dh_system(J, np.zeros((2, 2)), np.eye(2))
        report = validate_dh(system)
        assert not report.ok
        assert report.asymptotically_stable is False
        assert report.spectral_abscissa == pytest.approx(0.0, abs=1e-12)

    def test_indefinite_q_reported(self):
        system = dh_system(np.zeros((2, 2)), np.eye(2), np.diag([1.0, -2.0]))
        report = validate_dh(system)
        assert any("Q positive definite" in str(i) for i in report.issues)

    def test_stability_check_can_be_skipped(self):
        report = validate_dh(seeded_system(), check_stability="never")
        assert report.ok
        assert report.asymptotically_stable is None


class TestOrthonormalExtend:
    def test_builds_orthonormal_basis(self):
        rng = np.random.default_rng(1)
        block = rng.standard_normal((8, 3))
        V, added = orthonormal_extend(None, block)
        assert added == 3
        assert np.allclose(V.conj().T @ V, np.eye(3), atol=1e-13)
        # span is preserved: the block projects onto itself
        assert np.allclose(V @ (V.conj().T @ block), block, atol=1e-12)

    def test_extension_keeps_existing_columns(self):
        rng = np.random.default_rng(2)
        V0, _ = orthonormal_extend(None, rng.standard_normal((8, 2)))
        V1, added = orthonormal_extend(V0, rng.standard_normal((8, 2)))
        assert added == 2
        assert V1.shape == (8, 4)
        assert np.allclose(V1[:, :2], V0)
        assert np.allclose(V1.conj().T @ V1, np.eye(4), atol=1e-13)

    def test_dependent_columns_are_deflated(self):
        rng = np.random.default_rng(3)
        base = rng.standard_normal((8, 2))
        V, _ = orthonormal_extend(None, base)
        _, added = orthonormal_extend(V, base @ rng.standard_normal((2, 2)))
        assert added == 0

    def test_zero_column_skipped(self):
        block = np.zeros((4, 1))
        V, added = orthonormal_extend(None, block)
        assert added == 0
        assert V.shape == (4, 0)


class TestRealifyBlock:
    def test_complex_block_splits(self):
        blk = np.array([[1.0 + 2.0j], [3.0 - 1.0j]])
        out = realify_block(blk)
        assert out.shape == (2, 2)
        assert not np.iscomplexobj(out)
        assert np.allclose(out[:, 0], [1.0, 3.0])
        assert np.allclose(out[:, 1], [2.0, -1.0])

    def test_real_block_passes_through(self):
        blk = np.array([[1.0], [2.0]])
        assert realify_block(blk) is blk

    def test_complex_dtype_with_zero_imag_collapses(self):
        blk = np.array([[1.0 + 0j], [2.0 + 0j]])
        out = realify_block(blk)
        assert out.shape == (2, 1)
        assert not np.iscomplexobj(out)


class TestObliqueBasis:
    def test_biorthogonality(self):
        system = seeded_system()
        rng = np.random.default_rng(4)
        V, _ = orthonormal_extend(None, rng.standard_normal((10, 4)))
        W = oblique_basis(system, V)
        assert np.linalg.norm(W.conj().T @ V - np.eye(4)) <= 1e-10

    def test_non_orthonormal_input_rejected(self):
        system = seeded_system()
        V = np.ones((10, 2))
        with pytest.raises(ObliqueBreakdownError, match="not orthonormal"):
            oblique_basis(system, V)


class TestReductions:
    @staticmethod
    def structure_defects(red):
        d = red.structure_defects()
        return d["skew"], d["r_min"], d["q_min"], d["biorth"]

    def test_rj_mode_preserves_structure(self):
        system = seeded_system(12, 5)
        rng = np.random.default_rng(5)
        B = rng.standard_normal((12, 2))
        C = rng.standard_normal((2, 12))
        V, _ = orthonormal_extend(None, rng.standard_normal((12, 5)))
        red = reduce_dh(system, B, C, V=V, mode="rj")
        skew, rmin, qmin, biorth = self.structure_defects(red)
        assert skew <= 1e-10
        assert rmin >= -1e-10 * np.linalg.norm(red.R)
        assert qmin > 0
        assert biorth <= 1e-10
        assert red.B.shape == (5, 2)
        assert red.C.shape == (2, 5)

    def test_q_mode_preserves_structure(self):
        system = seeded_system(12, 6)
        rng = np.random.default_rng(6)
        B = rng.standard_normal((12, 2))
        C = rng.standard_normal((2, 12))
        W, _ = orthonormal_extend(None, rng.standard_normal((12, 5)))
        red = reduce_dh(system, B, C, W=W, mode="q")
        skew, rmin, qmin, biorth = self.structure_defects(red)
        assert skew <= 1e-10
        assert rmin >= -1e-10 * np.linalg.norm(red.R)
        assert qmin > 0
        assert biorth <= 1e-10

    def test_full_basis_reproduces_system(self):
        # with V spanning the whole space the reduced transfer data is exact:
        # eigenvalues of the drift must coincide
        system = seeded_system(6, 7)
        rng = np.random.default_rng(7)
        B = rng.standard_normal((6, 2))
        V, _ = orthonormal_extend(None, rng.standard_normal((6, 6)))
        red = reduce_dh(system, B, B.T, V=V, mode="rj")
        lam_full = np.sort_complex(np.linalg.eigvals(system.drift()))
        lam_red = np.sort_complex(np.linalg.eigvals(red.drift()))
        assert np.allclose(lam_full, lam_red, atol=1e-9)

    def test_q_mode_breakdown_on_singular_projection(self):
        # (J - R) singular and W aligned with its kernel
        system = dh_system(np.zeros((2, 2)), np.diag([1.0, 0.0]), np.eye(2))
        W = np.array([[0.0], [1.0]])
        with pytest.raises(ObliqueBreakdownError):
            reduce_dh(system, np.eye(2), np.eye(2), W=W, mode="q")

    def test_structured_reduction(self):
        system = seeded_system(12, 8)
        rng = np.random.default_rng(8)
        B = rng.standard_normal((12, 2))
        V, _ = orthonormal_extend(None, rng.standard_normal((12, 4)))
        red = reduce_structured(system, B, V)
        assert red.mode == "structured"
        assert red.C is None
        assert red.B.shape == (4, 2)
        skew, rmin, qmin, biorth = self.structure_defects(red)
        assert skew <= 1e-10
        assert rmin >= -1e-10 * np.linalg.norm(red.R)
        assert qmin > 0
        assert biorth <= 1e-10

    def test_missing_basis_arguments(self):
        system = seeded_system()
        with pytest.raises(ValueError, match="needs the orthonormal basis V"):
            reduce_dh(system, np.eye(10), np.eye(10), mode="rj")
        with pytest.raises(ValueError, match="needs the orthonormal basis W"):
            reduce_dh(system, np.eye(10), np.eye(10), mode="q")
        with pytest.raises(ValueError, match="unknown reduction mode"):
            reduce_dh(system, np.eye(10), np.eye(10), V=np.eye(10), mode="x")
