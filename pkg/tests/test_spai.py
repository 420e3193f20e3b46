import numpy as np
import pytest

from saikit import (CscMatrix, SparseVector, SpaiConfig, spai,
                    spai_candidates, spai_column, spai_mu, spai_profitability)
from .conftest import random_dominant, tridiagonal, with_dense_column


def golden_section_rho(a_dense: np.ndarray, r: np.ndarray, j: int) -> float:
    """Oracle: minimize ||r + mu * A e_j|| by scalar golden-section search."""
    col = a_dense[:, j]

    def g(mu):
        return np.linalg.norm(r + mu * col)

    lo, hi = -1e3, 1e3
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - phi * (hi - lo)
    x2 = lo + phi * (hi - lo)
    for _ in range(200):
        if g(x1) < g(x2):
            hi = x2
        else:
            lo = x1
        x1 = hi - phi * (hi - lo)
        x2 = lo + phi * (hi - lo)
    return g((lo + hi) / 2.0)


class TestCandidates:
    def test_identity_single(self):
        a = CscMatrix.identity(5)
        r = SparseVector.from_dense(np.eye(5)[3])
        cand = spai_candidates(a, r, [0])
        assert list(cand) == [3]

    def test_dense_column_floods_candidates(self):
        n = 12
        a = with_dense_column(tridiagonal(n), 3, keep_diag=2.0)
        r = SparseVector.from_dense(np.ones(n))
        cand = spai_candidates(a, r, [5])
        # oracle: brute-force from the dense pattern
        dense = a.to_dense()
        expected = sorted(set(np.nonzero(dense[np.arange(n), :].any(axis=0))[0])
                          - {5})
        assert list(cand) == expected
        assert 3 in cand
        assert len(cand) == n - 1

    def test_zero_residual(self):
        a = CscMatrix.identity(3)
        r = SparseVector(3, [], [])
        assert len(spai_candidates(a, r, [0])) == 0


class TestProfitability:
    def test_orthogonal_column_cannot_help(self):
        a = CscMatrix.from_dense([[1.0, 0.0], [0.0, 1.0]])
        r = np.array([1.0, 0.0])
        rhos, _ = spai_profitability(a, r, [1])
        assert rhos == [(1, pytest.approx(1.0))]

    def test_parallel_column_zeroes_residual(self):
        a = CscMatrix.from_dense([[2.0, 1.0], [0.0, 0.5]])
        r = np.array([2.0, 1.0])  # parallel to column 1
        rhos, _ = spai_profitability(a, r, [1])
        assert rhos[0][1] == pytest.approx(0.0, abs=1e-12)

    def test_matches_golden_section_oracle(self):
        rng = np.random.default_rng(21)
        dense = rng.standard_normal((10, 10))
        a = CscMatrix.from_dense(dense)
        r = rng.standard_normal(10)
        rhos, _ = spai_profitability(a, r, list(range(10)))
        for j, rho in rhos:
            assert rho == pytest.approx(golden_section_rho(dense, r, j), abs=1e-8)

    def test_zero_column_skipped(self):
        a = CscMatrix.from_dense([[1.0, 0.0], [0.0, 0.0]])
        rhos, skipped = spai_profitability(a, np.array([1.0, 1.0]), [0, 1])
        assert [j for j, _ in rhos] == [0]
        assert skipped == [1]

    def test_mu_formula(self):
        rng = np.random.default_rng(4)
        dense = rng.standard_normal((6, 6))
        a = CscMatrix.from_dense(dense)
        r = rng.standard_normal(6)
        for j in range(6):
            expected = -(r @ dense[:, j]) / (dense[:, j] @ dense[:, j])
            assert spai_mu(a, r, j) == pytest.approx(expected, rel=1e-14)


class TestColumn:
    def test_identity(self):
        res = spai_column(CscMatrix.identity(6), 2, SpaiConfig())
        assert np.array_equal(res.m_k.to_dense(), np.eye(6)[2])
        assert res.residual_norm == 0.0
        assert res.loops_used == 0
        assert res.converged

    def test_2x2_stops_at_loose_delta(self):
        # with delta = 0.4 the single-entry pattern already satisfies the bound
        a = CscMatrix.from_dense([[2.0, 1.0], [0.0, 3.0]])
        res = spai_column(a, 1, SpaiConfig(delta=0.4))
        assert res.converged and res.loops_used == 0
        assert res.residual_norm == pytest.approx(np.sqrt(0.1), abs=1e-12)
        assert np.allclose(res.m_k.to_dense(), [0.0, 0.3], atol=1e-12)

    def test_2x2_exact_inverse_after_one_augmentation(self):
        a = CscMatrix.from_dense([[2.0, 1.0], [0.0, 3.0]])
        res = spai_column(a, 1, SpaiConfig(delta=0.3))
        assert res.converged and res.loops_used == 1
        assert np.allclose(res.m_k.to_dense(), [-1 / 6, 1 / 3], atol=1e-12)
        assert res.residual_norm <= 1e-12

    def test_dominant_matrix_all_columns_converge(self):
        a = random_dominant(30, seed=17)
        dense = a.to_dense()
        cfg = SpaiConfig(delta=0.4, mn=5, l_max=20)
        for k in range(30):
            res = spai_column(a, k, cfg)
            assert res.converged
            # oracle: recompute the residual from scratch
            e = np.zeros(30); e[k] = 1.0
            assert np.linalg.norm(dense @ res.m_k.to_dense() - e) <= 0.4 + 1e-12

    def test_residual_sequence_non_increasing(self):
        a = random_dominant(25, seed=5)
        for k in range(25):
            res = spai_column(a, k, SpaiConfig(delta=0.01, l_max=8))
            seq = res.profile.residual_norms
            assert all(b <= x + 1e-12 for x, b in zip(seq, seq[1:]))

    def test_nnz_bound(self):
        a = random_dominant(40, seed=29)
        cfg = SpaiConfig(delta=0.01, mn=3, l_max=4)
        for k in range(40):
            res = spai_column(a, k, cfg)
            assert res.m_k.nnz <= 1 + cfg.mn * cfg.l_max

    def test_rho_minimal_choices(self):
        a = random_dominant(30, seed=41)
        cfg = SpaiConfig(delta=0.005, mn=4, l_max=6, record_choices=True)
        checked = 0
        for k in range(30):
            res = spai_column(a, k, cfg)
            for rhos, chosen in zip(res.profile.choices, res.profile.chosen):
                chosen_set = set(chosen)
                worst_chosen = max(rho for j, rho in rhos if j in chosen_set)
                for j, rho in rhos:
                    if j not in chosen_set:
                        assert rho >= worst_chosen - 1e-15
                        checked += 1
        assert checked > 0

    def test_zero_column_raises_through_fallback(self):
        dense = np.eye(4)
        dense[3, 3] = 0.0
        a = CscMatrix.from_dense(dense)
        from saikit import DegeneratePatternError
        with pytest.raises(DegeneratePatternError):
            spai_column(a, 3, SpaiConfig())

    def test_caller_pattern_fallback_to_column_pattern(self):
        # supplied pattern hits a zero column; fallback must use col k's rows
        dense = np.array([[2.0, 0.0, 1.0],
                          [0.0, 0.0, 0.0],
                          [1.0, 0.0, 3.0]])
        a = CscMatrix.from_dense(dense)
        res = spai_column(a, 0, SpaiConfig(delta=0.4), s0=[1])
        assert res.m_k.nnz >= 1


class TestAssembly:
    def test_identity(self):
        m, report = spai(CscMatrix.identity(7))
        assert m.same_as(CscMatrix.identity(7))
        assert report.n_c == 0

    def test_scaled_identity(self):
        a = CscMatrix.from_dense(2.0 * np.eye(5))
        m, report = spai(a)
        assert np.allclose(m.to_dense(), 0.5 * np.eye(5))
        assert report.n_c == 0

    def test_frobenius_bound(self):
        a = random_dominant(40, seed=101)
        cfg = SpaiConfig(delta=0.4)
        m, report = spai(a, cfg)
        assert report.n_c == 0
        frob = np.linalg.norm(a.to_dense() @ m.to_dense() - np.eye(40), "fro")
        assert frob <= np.sqrt(40) * cfg.delta

    def test_zero_column_yields_best_effort(self):
        dense = np.eye(4)
        dense[2, 2] = 0.0
        a = CscMatrix.from_dense(dense)
        m, report = spai(a)
        assert report.n_c == 1
        assert report.errors and report.errors[0][0] == 2
        assert m.per_col_nnz[2] == 0

    def test_threads_deterministic(self):
        a = random_dominant(25, seed=77, planted=1)
        m1, _ = spai(a, SpaiConfig(), threads=1)
        m2, _ = spai(a, SpaiConfig(), threads=3)
        assert m1.same_as(m2)


class TestIrregularityCounters:
    def test_candidate_flood_on_dense_column(self):
        from saikit import split
        n = 150
        a = with_dense_column(tridiagonal(n, diag=2.2), 40, fill=1.0,
                              keep_diag=2.2)
        sys_ = split(a, factor=10.0)
        assert sys_.s == 1
        cfg = SpaiConfig(delta=0.4)
        _, rep_a = spai(a, cfg)
        _, rep_t = spai(sys_.a_tilde, cfg)
        assert rep_a.max_candidates >= 10 * max(rep_t.max_candidates, 1)
