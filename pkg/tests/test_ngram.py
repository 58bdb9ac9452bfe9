"""Max-count tables, clipped precision, smoothed scores, shaped increments.

The reference oracle here is deliberate brute force: per-reference clip
and max over full n-gram counts, recomputed from scratch for every query.
"""

import math
from collections import Counter

import numpy as np
import pytest

from bertgram import (
    FormatError,
    MaxCountTable,
    bleu,
    build_max_count_table,
    modified_precision,
    ngrams,
    read_ngram_table,
    shaped_increments,
    write_ngram_table,
)


def brute_force_precision(candidate, references, n):
    """Clip each candidate n-gram against every reference separately, keep the max."""
    cand = ngrams(candidate, n)
    matched = 0
    for gram, count in cand.items():
        best = 0
        for ref in references:
            best = max(best, min(count, Counter(ngrams(ref, n))[gram]))
        matched += best
    return matched, max(0, len(candidate) - n + 1)


def random_corpus(rng):
    n_refs = int(rng.integers(1, 11))
    v = int(rng.integers(2, 13))
    return [
        [int(w) for w in rng.integers(0, v, size=int(rng.integers(1, 9)))]
        for _ in range(n_refs)
    ], v


class TestMaxCountTable:
    def test_max_over_references(self):
        table = build_max_count_table([[0, 0, 1], [0, 2]], n_max=2)
        assert table.max_count((0,)) == 2
        assert table.max_count((1,)) == 1
        assert table.max_count((0, 0)) == 1
        assert table.max_count((0, 2)) == 1

    def test_absent_gram_counts_zero(self):
        table = build_max_count_table([[0, 1]], n_max=2)
        assert table.max_count((5,)) == 0
        assert table.max_count((1, 0)) == 0

    def test_order_outside_table_rejected(self):
        table = build_max_count_table([[0, 1]], n_max=2)
        with pytest.raises(ValueError):
            table.max_count((0, 1, 0))

    def test_reference_order_is_irrelevant(self):
        refs = [[0, 1, 2], [2, 1], [1, 1, 1]]
        forward = build_max_count_table(refs, 3)
        backward = build_max_count_table(refs[::-1], 3)
        assert forward.counts == backward.counts

    def test_empty_reference_set_rejected(self):
        with pytest.raises(ValueError):
            build_max_count_table([], 2)


class TestModifiedPrecision:
    def test_clipping_example(self):
        # candidate [0,0,0] against [0,0]: three unigram slots, clip at 2
        table = build_max_count_table([[0, 0]], 1)
        assert modified_precision([0, 0, 0], table, 1) == (2, 3)

    def test_values_are_exact_integers(self):
        table = build_max_count_table([[0, 1, 0]], 2)
        matched, total = modified_precision([0, 1], table, 2)
        assert isinstance(matched, int) and isinstance(total, int)
        assert (matched, total) == (1, 1)

    def test_order_past_candidate_gives_zero_total(self):
        table = build_max_count_table([[0, 1, 2]], 3)
        assert modified_precision([0], table, 3) == (0, 0)

    def test_matches_brute_force_on_random_corpora(self):
        rng = np.random.default_rng(1234)
        for _ in range(200):
            refs, v = random_corpus(rng)
            table = build_max_count_table(refs, 4)
            candidate = [int(w) for w in rng.integers(0, v, size=int(rng.integers(1, 9)))]
            for n in range(1, 5):
                assert modified_precision(candidate, table, n) == brute_force_precision(
                    candidate, refs, n
                )


class TestBleu:
    def test_perfect_candidate_scores_exactly_one(self):
        table = build_max_count_table([[3, 1, 4, 1, 5]], 4)
        assert bleu([3, 1, 4, 1, 5], table) == 1.0

    def test_two_order_example(self):
        # p1 = 2/3, p2 = 1/2, equal weights: sqrt(1/3)
        table = build_max_count_table([[0, 1]], 2)
        assert bleu([0, 1, 0], table, [0.5, 0.5]) == pytest.approx(math.sqrt(1 / 3))

    def test_disjoint_candidate_is_smoothed_not_zero(self):
        # no matches at either order: p1 = 1/(2*3), p2 = 1/(4*2)
        table = build_max_count_table([[5, 6, 7]], 2)
        score = bleu([0, 1, 2], table, [0.5, 0.5])
        assert score == pytest.approx(math.sqrt(1 / 48))
        assert score > 0.0

    def test_smoothing_counter_advances_per_smoothed_order(self):
        # p1 = 2/3 (the repeated 0 clips at 1); p2, p3 have no matches and
        # get denominators 2^1 and 2^2 in ascending order
        table = build_max_count_table([[0], [1]], 3)
        expected = math.exp(
            (math.log(2 / 3) + math.log(1 / (2 * 2)) + math.log(1 / (4 * 1))) / 3
        )
        assert bleu([0, 1, 0], table) == pytest.approx(expected)

    def test_short_candidate_drops_orders_and_renormalises(self):
        # T=1: only unigrams exist, weight renormalises to that order alone
        table = build_max_count_table([[0, 1, 2, 3]], 4)
        assert bleu([0], table) == 1.0

    def test_score_stays_in_unit_interval(self):
        rng = np.random.default_rng(99)
        for _ in range(100):
            refs, v = random_corpus(rng)
            table = build_max_count_table(refs, 4)
            candidate = [int(w) for w in rng.integers(0, v, size=int(rng.integers(1, 9)))]
            assert 0.0 <= bleu(candidate, table) <= 1.0

    def test_bad_weights_rejected(self):
        table = build_max_count_table([[0, 1]], 2)
        with pytest.raises(ValueError):
            bleu([0, 1], table, [0.9, 0.2])
        with pytest.raises(ValueError):
            bleu([0, 1], table, [1.0])

    def test_empty_candidate_rejected(self):
        table = build_max_count_table([[0, 1]], 2)
        with pytest.raises(ValueError):
            bleu([], table)


class TestShapedIncrements:
    def test_matching_unigram_puts_everything_on_step_one(self):
        table = build_max_count_table([[7, 8]], 1)
        assert shaped_increments([7], table) == [1.0]

    def test_prefix_scores_reconstruct(self):
        table = build_max_count_table([[1, 0]], 2)
        increments = shaped_increments([0, 1], table, [0.5, 0.5])
        assert increments[0] == bleu([0], table, [0.5, 0.5])
        assert increments[0] + increments[1] == bleu([0, 1], table, [0.5, 0.5])

    def test_telescopes_bitwise_under_sequential_sum(self):
        rng = np.random.default_rng(4321)
        for _ in range(200):
            refs, v = random_corpus(rng)
            table = build_max_count_table(refs, 4)
            candidate = [int(w) for w in rng.integers(0, v, size=int(rng.integers(1, 9)))]
            increments = shaped_increments(candidate, table)
            acc = 0.0
            for r in increments:
                acc += r
            assert acc == bleu(candidate, table)
            assert math.fsum(increments) == bleu(candidate, table)

    def test_increments_can_be_negative(self):
        # a matching prefix followed by garbage drives the score back down
        table = build_max_count_table([[0, 1]], 2)
        increments = shaped_increments([0, 1, 5, 5], table, [0.5, 0.5])
        assert increments[0] == 1.0
        assert min(increments) < 0.0


class TestNgramTableIO:
    def test_round_trip(self, tmp_path):
        table = build_max_count_table([[0, 0, 1], [1, 2, 3, 4]], 4)
        path = tmp_path / "refs.ngtb"
        write_ngram_table(table, path)
        loaded = read_ngram_table(path)
        assert loaded.n_max == table.n_max
        assert loaded.counts == table.counts

    def test_writer_is_byte_stable(self, tmp_path):
        table = build_max_count_table([[2, 0, 1], [1, 2]], 3)
        a, b = tmp_path / "a.ngtb", tmp_path / "b.ngtb"
        write_ngram_table(table, a)
        write_ngram_table(table, b)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        table = build_max_count_table([[0, 1]], 2)
        path = tmp_path / "refs.ngtb"
        write_ngram_table(table, path)
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="magic"):
            read_ngram_table(path)

    def test_truncation_reports_byte_offset(self, tmp_path):
        table = build_max_count_table([[0, 1]], 2)
        path = tmp_path / "refs.ngtb"
        write_ngram_table(table, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 3])
        with pytest.raises(FormatError, match=rf"byte {len(data) - 3}"):
            read_ngram_table(path)
