"""Reward arithmetic: multiset IoU, style mapping, warmup gating, groups."""

from collections import Counter

import numpy as np
import pytest

from pixelmot.rewards import (
    HashScorer,
    ResolutionCandidate,
    RewardGroup,
    composite_reward,
    difficulty_score,
    ocr_iou,
    reward_group_for_epoch,
    style_score_map,
    tokenize,
    warmup_gate,
)


def brute_force_iou(a, b):
    """Element-by-element multiset IoU over the explicit union of tokens."""
    inter = union = 0
    for token in set(a) | set(b):
        ca, cb = list(a).count(token), list(b).count(token)
        inter += min(ca, cb)
        union += max(ca, cb)
    return 1.0 if union == 0 else inter / union


class TestOcrIou:
    def test_identical(self):
        assert ocr_iou(["a", "b"], ["a", "b"]) == 1.0

    def test_disjoint(self):
        assert ocr_iou(["a"], ["b", "c"]) == 0.0

    def test_worked_example(self):
        pred = tokenize("hello world world")
        ref = tokenize("hello world")
        assert ocr_iou(pred, ref) == pytest.approx(2 / 3)

    def test_both_empty_is_one(self):
        assert ocr_iou([], []) == 1.0

    def test_matches_brute_force_on_random_pairs(self):
        g = np.random.default_rng(0)
        words = [f"w{i}" for i in range(8)]
        for _ in range(1000):
            a = [words[int(i)] for i in g.integers(0, 8, int(g.integers(0, 10)))]
            b = [words[int(i)] for i in g.integers(0, 8, int(g.integers(0, 10)))]
            assert ocr_iou(a, b) == brute_force_iou(a, b)

    def test_symmetry_and_range(self):
        g = np.random.default_rng(1)
        words = ["x", "y", "z"]
        for _ in range(200):
            a = [words[int(i)] for i in g.integers(0, 3, 5)]
            b = [words[int(i)] for i in g.integers(0, 3, 5)]
            assert ocr_iou(a, b) == ocr_iou(b, a)
            assert 0.0 <= ocr_iou(a, b) <= 1.0

    def test_tokenize_case_folds(self):
        assert tokenize("Hello WORLD hello") == Counter({"hello": 2, "world": 1})


class TestStyleScore:
    def test_endpoints(self):
        assert style_score_map(1) == 0.0
        assert style_score_map(4) == 1.0

    def test_interpolation(self):
        assert style_score_map(2) == pytest.approx(1 / 3)
        assert style_score_map(3) == pytest.approx(2 / 3)

    def test_strictly_increasing(self):
        values = [style_score_map(s) for s in (1, 2, 3, 4)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_out_of_range_rejected(self):
        for bad in (0, 5, 2.5):
            with pytest.raises(ValueError):
                style_score_map(bad)


class TestCompositeReward:
    def test_no_style(self):
        assert composite_reward(0.4, 0.0, 0.5) == 0.4

    def test_reference_coefficient(self):
        assert composite_reward(0.6, 0.8, 0.5) == pytest.approx(1.0)

    def test_zero(self):
        assert composite_reward(0.0, 0.0) == 0.0

    def test_range_validation(self):
        with pytest.raises(ValueError):
            composite_reward(1.5, 0.0)


def make_candidates(probs, difficulties):
    return [
        ResolutionCandidate(f"c{i}", 1536, 1536, p, d)
        for i, (p, d) in enumerate(zip(probs, difficulties))
    ]


class TestWarmupGate:
    def test_easy_candidate_keeps_base_probability_at_epoch_zero(self):
        # d=0 at e=0: clamp(0/delta + 1) = 1
        cands = make_candidates([0.5, 0.5], [0.0, 0.0])
        assert np.array_equal(warmup_gate(cands, 0, 10, 0.3), [0.5, 0.5])

    def test_hard_candidate_fully_gated_at_epoch_zero(self):
        # d=0.5, delta=0.3 at e=0: clamp(-0.5/0.3 + 1) = clamp(-2/3) = 0
        cands = make_candidates([0.5, 0.5], [0.0, 0.5])
        out = warmup_gate(cands, 0, 10, 0.3)
        assert np.array_equal(out, [1.0, 0.0])

    def test_past_warmup_returns_base_exactly(self):
        base = [0.2, 0.3, 0.1, 0.4]
        cands = make_candidates(base, [0.0, 0.4, 0.9, 1.0])
        for e in (10, 11, 100):
            assert np.array_equal(warmup_gate(cands, e, 10, 0.3), base)

    def test_hand_evaluated_midpoint(self):
        # e=5/E=10 -> progress 0.5; d=0.4, delta=0.3: clamp(0.1/0.3+1)=1 (clamped)
        # d=0.65: clamp(-0.15/0.3+1)=0.5
        cands = make_candidates([0.5, 0.5], [0.4, 0.65])
        out = warmup_gate(cands, 5, 10, 0.3)
        expected = np.array([0.5 * 1.0, 0.5 * 0.5])
        expected /= expected.sum()
        assert np.allclose(out, expected, atol=1e-15)

    def test_sums_to_one(self):
        cands = make_candidates([0.1, 0.2, 0.3, 0.4], [0.0, 0.2, 0.5, 0.8])
        for e in range(12):
            assert abs(warmup_gate(cands, e, 10, 0.3).sum() - 1.0) < 1e-12

    def test_monotone_in_epoch(self):
        cands = make_candidates([0.25] * 4, [0.0, 0.3, 0.6, 0.9])
        prev_support = 0
        for e in range(11):
            out = warmup_gate(cands, e, 10, 0.3)
            support = int((out > 0).sum())
            assert support >= prev_support
            prev_support = support

    def test_all_gated_zero_rejected(self):
        cands = make_candidates([0.5, 0.5], [1.0, 1.0])
        with pytest.raises(ValueError, match="epoch"):
            warmup_gate(cands, 0, 10, 0.3)

    def test_base_probs_must_sum_to_one(self):
        cands = make_candidates([0.5, 0.4], [0.0, 0.0])
        with pytest.raises(ValueError, match="sum"):
            warmup_gate(cands, 0, 10)


class TestDifficultyScore:
    def test_smallest_area_square_is_zero(self):
        dims = [(1024, 1024), (2048, 2048), (2048, 1152)]
        assert difficulty_score(1024, 1024, dims) == 0.0

    def test_largest_area_most_extreme_ratio_is_one(self):
        dims = [(1024, 1024), (2048, 1152)]
        assert difficulty_score(2048, 1152, dims) == 1.0

    def test_equal_area_buckets_score_by_ratio_only(self):
        # 2048x1152 and 1536^2 have identical pixel counts: only the
        # aspect-ratio half of the score separates them
        dims = [(1536, 1536), (2048, 1152)]
        assert difficulty_score(1536, 1536, dims) == 0.0
        assert difficulty_score(2048, 1152, dims) == 0.5

    def test_mid_area_square(self):
        dims = [(1024, 1024), (2048, 2048), (2048, 1024)]
        d = difficulty_score(1536, 1536, dims)
        frac = (1536 ** 2 - 1024 ** 2) / (2048 ** 2 - 1024 ** 2)
        assert d == pytest.approx(0.5 * frac, abs=1e-12)

    def test_degenerate_set_scores_zero(self):
        dims = [(1024, 1024), (1024, 1024)]
        assert difficulty_score(1024, 1024, dims) == 0.0

    def test_clamped_to_unit_interval(self):
        dims = [(1024, 1024), (2048, 2048)]
        assert 0.0 <= difficulty_score(4096, 1024, dims) <= 1.0


class TestRewardGroups:
    def test_epoch_zero_is_text_group(self):
        assert reward_group_for_epoch(0) is RewardGroup.TEXT_AND_STYLE

    def test_epoch_one_is_aesthetics(self):
        assert reward_group_for_epoch(1) is RewardGroup.AESTHETICS

    def test_parity_over_100_epochs(self):
        for e in range(100):
            expected = RewardGroup.TEXT_AND_STYLE if e % 2 == 0 else RewardGroup.AESTHETICS
            assert reward_group_for_epoch(e) is expected

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            reward_group_for_epoch(-1)


class TestHashScorer:
    def test_deterministic_from_inputs(self, tmp_path):
        scorer = HashScorer()
        a = scorer.score(str(tmp_path / "missing.ppm"), "a red square", "style")
        b = scorer.score(str(tmp_path / "missing.ppm"), "a red square", "style")
        assert a == b and a.valid

    def test_style_scores_discrete(self, tmp_path):
        scorer = HashScorer()
        seen = {
            scorer.score(str(tmp_path / f"i{i}.ppm"), f"prompt {i}", "style").score
            for i in range(40)
        }
        assert seen <= {1.0, 2.0, 3.0, 4.0}
        assert len(seen) > 1

    def test_file_content_feeds_hash(self, tmp_path):
        p = tmp_path / "img.ppm"
        scorer = HashScorer()
        p.write_bytes(b"AAAA")
        a = scorer.score(str(p), "x", "aesthetic")
        p.write_bytes(b"BBBB")
        b = scorer.score(str(p), "x", "aesthetic")
        assert a.score != b.score

    def test_aesthetic_in_unit_interval(self, tmp_path):
        s = HashScorer().score(str(tmp_path / "nope.ppm"), "p", "aesthetic")
        assert 0.0 <= s.score < 1.0
