"""Closed-form communication predictions and replication tuning."""

import math

import pytest
from hypothesis import given, strategies as hs

from distmm.costmodel import (
    ALL_COMBOS,
    TABLE_ROWS,
    CostQuery,
    check_combo,
    elision_ratio,
    optimal_c,
    optimal_c_continuous,
    predict,
    select_algorithm,
    valid_c_values,
)
from distmm.layout import AlgorithmId

DS = AlgorithmId.D15_DENSE_SHIFT
SS = AlgorithmId.D15_SPARSE_SHIFT
DR = AlgorithmId.D25_DENSE_REPL
SR = AlgorithmId.D25_SPARSE_REPL


class TestPredict:
    def test_reuse_words_frozen(self):
        rep = predict(DS, "reuse", 16, 4, 1024, 256, nnz=4096)
        assert rep.words == 180224
        assert rep.words_sparse == 0
        assert rep.messages == 11

    def test_fusion_words_frozen(self):
        rep = predict(DS, "fusion", 16, 2, 1024, 256, nnz=4096)
        assert rep.words == 163840
        assert rep.messages == 10

    def test_no_elision_pays_each_kernel_in_full(self):
        n, r, p, c = 2048, 64, 16, 4
        rep = predict(DS, "none", p, c, n, r)
        g = p // c
        cycle = g * n * r / p
        fiber = (c - 1) * n * r / p
        assert rep.words == 2 * cycle + 2 * fiber
        assert rep.messages == 2 * g + 2 * (c - 1)
        # reuse drops one fiber exchange, fusion drops one shift cycle
        assert predict(DS, "reuse", p, c, n, r).words == 2 * cycle + fiber
        assert predict(DS, "fusion", p, c, n, r).words == cycle + 2 * fiber

    def test_sparse_shift_payload_words(self):
        nnz = 8192
        rep = predict(SS, "reuse", 8, 4, 1024, 64, nnz=nnz)
        g = 8 // 4
        assert rep.words_sparse == 2 * g * 3 * nnz / 8
        assert rep.words_dense == (4 - 1) * 1024 * 64 / 8

    def test_replicated_sparse_counts(self):
        nnz = 4096
        rep = predict(SR, "none", 16, 4, 1024, 128, nnz=nnz)
        q = int(math.isqrt(16 // 4))
        assert rep.words_dense == 4 * q * 1024 * 128 / 16
        assert rep.words_sparse == 3 * (4 - 1) * nnz / 16
        assert rep.messages == 4 * q + 3 * (4 - 1)

    def test_phi_and_nnz_interchangeable(self):
        a = predict(SS, "none", 8, 2, 512, 32, nnz=2048)
        b = predict(SS, "none", 8, 2, 512, 32, phi=2048 / (512 * 32))
        assert a.words == b.words

    def test_local_dims_echo(self):
        rep = predict(DS, "none", 16, 4, 1024, 256)
        assert rep.local_s == (1024 * 4 / 16, 1024 / 16)
        assert rep.local_b == (1024 / 16, 256.0)
        rep = predict(SR, "none", 16, 4, 1024, 256, nnz=1)
        root = math.sqrt(4 / 16)
        assert rep.local_s == (1024 * root, 1024 * root)
        assert rep.local_b == (1024 / math.sqrt(16 * 4), 256 * root)

    def test_missing_sparsity_rejected(self):
        with pytest.raises(ValueError):
            predict(SS, "none", 8, 2, 512, 32)

    def test_invalid_combo_rejected(self):
        with pytest.raises(ValueError):
            predict(SR, "reuse", 16, 4, 512, 32, nnz=64)
        with pytest.raises(ValueError):
            check_combo(SS, "fusion")

    def test_invalid_c_rejected(self):
        with pytest.raises(ValueError):
            predict(DS, "none", 16, 3, 512, 32)
        with pytest.raises(ValueError):
            predict(DR, "none", 16, 8, 512, 32)  # p/c not a square


class TestCValues:
    def test_ring_family_takes_all_divisors(self):
        assert valid_c_values(DS, 16) == [1, 2, 4, 8, 16]
        assert valid_c_values(SS, 12) == [1, 2, 3, 4, 6, 12]

    def test_torus_family_needs_square_quotient(self):
        assert valid_c_values(DR, 16) == [1, 4, 16]
        assert valid_c_values(SR, 8) == [2, 8]
        assert valid_c_values(DR, 18) == [2, 18]


class TestOptimalC:
    def test_continuous_forms(self):
        p = 64
        assert optimal_c_continuous(DS, "none", p) == pytest.approx(math.sqrt(p))
        assert optimal_c_continuous(DS, "reuse", p) == pytest.approx(math.sqrt(2 * p))
        assert optimal_c_continuous(DS, "fusion", p) == pytest.approx(math.sqrt(p / 2))
        assert optimal_c_continuous(SS, "reuse", p, phi=0.125) == pytest.approx(
            math.sqrt(6 * p * 0.125)
        )

    def test_continuous_clamped_to_one(self):
        assert optimal_c_continuous(SS, "reuse", 4, phi=1 / 64) == 1.0

    def test_argmin_dominates_every_valid_c(self):
        best = optimal_c(DS, "none", 4, 1024, 64)
        for c in valid_c_values(DS, 4):
            assert best.words <= predict(DS, "none", 4, c, 1024, 64).words

    def test_tie_goes_to_smaller_c(self):
        # on p=2 the no-elision curve gives 4*w/p words at both c=1 and c=2
        best = optimal_c(DS, "none", 2, 1024, 64)
        assert best.query.c == 1
        assert best.words == predict(DS, "none", 2, 2, 1024, 64).words

    @given(
        hs.sampled_from([4, 16, 64, 256]),
        hs.sampled_from([1 / 32, 1 / 8, 1.0, 4.0]),
        hs.sampled_from(TABLE_ROWS),
    )
    def test_argmin_lands_in_continuous_bracket(self, p, phi, combo):
        alg, strat = combo
        cs = valid_c_values(alg, p)
        star = optimal_c_continuous(alg, strat, p, phi=phi)
        lo = max((c for c in cs if c <= star), default=cs[0])
        hi = min((c for c in cs if c >= star), default=cs[-1])
        best = optimal_c(alg, strat, p, 4096, 256, nnz=phi * 4096 * 256)
        assert best.query.c in {lo, hi}


class TestSelect:
    def test_ranks_all_table_rows(self):
        ranked = select_algorithm(256, 4096, 256, nnz=4096 * 256 / 8)
        assert len(ranked) == len(TABLE_ROWS)
        costs = [r.words for r in ranked]
        assert costs == sorted(costs)
        assert {(r.query.alg, r.query.strategy) for r in ranked} == set(TABLE_ROWS)

    def test_derived_row_priced_but_not_ranked(self):
        from distmm.algorithms import FusionStrategy

        assert (SS, FusionStrategy.NO_ELISION) in ALL_COMBOS
        assert (SS, FusionStrategy.NO_ELISION) not in TABLE_ROWS

    def test_deterministic(self):
        a = select_algorithm(128, 8192, 256, nnz=8192 * 32)
        b = select_algorithm(128, 8192, 256, nnz=8192 * 32)
        assert [(r.query.alg, r.query.strategy, r.query.c) for r in a] == [
            (r.query.alg, r.query.strategy, r.query.c) for r in b
        ]


class TestElision:
    def test_small_p(self):
        assert elision_ratio(4) == pytest.approx(0.7761423749, abs=1e-9)

    def test_asymptote(self):
        assert elision_ratio(2**20) == pytest.approx(0.7072079569467755, abs=1e-12)
        assert abs(elision_ratio(2**20) - 1 / math.sqrt(2)) / (1 / math.sqrt(2)) < 0.01


class TestQueryBasics:
    def test_phi_property(self):
        q = CostQuery(DS, "none", 16, 4, 1024, 64, 2048)
        assert q.phi == 2048 / (1024 * 64)

    def test_cost_latency_term(self):
        rep = predict(DS, "reuse", 16, 4, 1024, 256, nnz=4096)
        assert rep.cost(alpha=0.0, beta=1.0) == rep.words
        assert rep.cost(alpha=10.0, beta=0.0) == 10.0 * rep.messages
