"""Hybrid masks, the M-block plan, and blocked/reference equivalence."""

import numpy as np
import pytest

from pixelmot import ops
from pixelmot.attention import (
    KIND_NOISE_IMAGE,
    KIND_TEXT,
    BlockedStats,
    CleanImage,
    NoiseImage,
    Text,
    attend_blocked,
    attend_reference,
    build_block_plan,
    build_mask,
    layout_token_count,
    row_cutoffs,
    token_kinds,
)


def random_clean_layout(g, max_tokens=64):
    layout, total = [], 0
    for _ in range(int(g.integers(1, 6))):
        if g.random() < 0.5:
            seg = Text(int(g.integers(1, 8)))
        else:
            seg = CleanImage(int(g.integers(1, 4)), int(g.integers(1, 4)))
        if total + seg.size > max_tokens:
            break
        layout.append(seg)
        total += seg.size
    return layout or [Text(1)]


def random_mixed_layout(g, max_tokens=48):
    layout, total = [], 0
    for _ in range(int(g.integers(1, 6))):
        kind = int(g.integers(0, 3))
        if kind == 0:
            seg = Text(int(g.integers(1, 6)))
        elif kind == 1:
            seg = CleanImage(int(g.integers(1, 3)), int(g.integers(1, 3)))
        else:
            seg = NoiseImage(int(g.integers(1, 3)), int(g.integers(1, 3)))
        if total + seg.size > max_tokens:
            break
        layout.append(seg)
        total += seg.size
    return layout or [Text(1)]


class TestBuildMask:
    def test_single_token(self):
        assert build_mask([Text(1)]).tolist() == [[True]]

    def test_pure_text_is_lower_triangular(self):
        mask = build_mask([Text(4)])
        assert np.array_equal(mask, np.tril(np.ones((4, 4), dtype=bool)))

    def test_rule_by_rule_enumeration(self):
        # Text(1) + CleanImage(1x2) + NoiseImage(1x2), row-by-row oracle
        mask = build_mask([Text(1), CleanImage(1, 2), NoiseImage(1, 2)])
        expected = np.array([
            [1, 0, 0, 0, 0],
            [1, 1, 1, 0, 0],
            [1, 1, 1, 0, 0],
            [1, 1, 1, 1, 1],
            [1, 1, 1, 1, 1],
        ], dtype=bool)
        assert np.array_equal(mask, expected)

    def test_text_after_noise_skips_noise_columns(self):
        mask = build_mask([NoiseImage(1, 2), Text(2)])
        assert mask[2].tolist() == [False, False, True, False]
        assert mask[3].tolist() == [False, False, True, True]

    def test_noise_sees_only_clean_before_and_own_block(self):
        mask = build_mask([NoiseImage(1, 1), Text(1), NoiseImage(1, 2)])
        assert mask[2].tolist() == [False, True, True, True]
        assert mask[3].tolist() == [False, True, True, True]

    def test_noise_isolation_invariant(self):
        g = np.random.default_rng(0)
        for _ in range(100):
            layout = random_mixed_layout(g)
            mask = build_mask(layout)
            kinds = token_kinds(layout)
            clean = kinds != KIND_NOISE_IMAGE
            noise = ~clean
            if clean.any() and noise.any():
                assert not mask[np.ix_(clean, noise)].any()

    def test_diagonal_always_true(self):
        g = np.random.default_rng(1)
        for _ in range(50):
            mask = build_mask(random_mixed_layout(g))
            assert np.diagonal(mask).all()

    def test_text_monotonicity(self):
        g = np.random.default_rng(2)
        for _ in range(50):
            layout = random_mixed_layout(g)
            mask = build_mask(layout)
            kinds = token_kinds(layout)
            clean = kinds != KIND_NOISE_IMAGE
            for i in range(len(kinds) - 1):
                if kinds[i] == KIND_TEXT and kinds[i + 1] == KIND_TEXT:
                    a, b = mask[i] & clean, mask[i + 1] & clean
                    assert not (a & ~b).any()


class TestBlockPlan:
    def test_pure_text_all_causal_fast_path(self):
        plan = build_block_plan([Text(8)], 4)
        assert [b.extended for b in plan.blocks] == [False, False]
        assert [b.key_end for b in plan.blocks] == [4, 8]

    def test_text6_image2_membership(self):
        plan = build_block_plan([Text(6), CleanImage(1, 2)], 4)
        assert plan.image_token_end == 8
        assert (plan.blocks[0].extended, plan.blocks[0].key_end) == (False, 4)
        assert (plan.blocks[1].extended, plan.blocks[1].key_end) == (True, 8)

    def test_text4_image4(self):
        plan = build_block_plan([Text(4), CleanImage(1, 4)], 4)
        assert (plan.blocks[0].extended, plan.blocks[0].key_end) == (False, 4)
        assert (plan.blocks[1].extended, plan.blocks[1].key_end) == (True, 8)

    def test_trailing_text_in_extended_block_keeps_causal_coverage(self):
        # rows 4..7 hold the image end (5) and trailing text; the block must
        # still fetch keys far enough for the causal text rows
        plan = build_block_plan([Text(4), CleanImage(1, 1), Text(3)], 4)
        assert plan.image_token_end == 5
        assert plan.blocks[1].extended and plan.blocks[1].key_end == 8

    def test_noise_rejected(self):
        with pytest.raises(ValueError, match="noise"):
            build_block_plan([Text(2), NoiseImage(1, 1)], 4)

    def test_containment_invariant(self):
        g = np.random.default_rng(3)
        for _ in range(100):
            layout = random_clean_layout(g)
            mask = build_mask(layout)
            plan = build_block_plan(layout, int(g.integers(2, 7)))
            kinds = token_kinds(layout)
            cutoffs = row_cutoffs(layout)
            for blk in plan.blocks:
                for i in range(blk.start, blk.end):
                    allowed = np.nonzero(mask[i])[0]
                    assert allowed.max() < blk.key_end
                    if not blk.extended and kinds[i] == KIND_TEXT:
                        assert cutoffs[i] == i + 1


class TestAttendReference:
    def test_unmasked_standard_softmax(self):
        g = np.random.default_rng(4)
        q = g.standard_normal((3, 4))
        k = g.standard_normal((3, 4))
        out = attend_reference(q, k, k, np.ones((3, 3), dtype=bool), 0.5)
        expected = ops.softmax_last(q @ k.T * 0.5) @ k
        assert np.allclose(out, expected, atol=1e-14)

    def test_identity_mask_returns_values(self):
        g = np.random.default_rng(5)
        q, k, v = (g.standard_normal((4, 8)) for _ in range(3))
        out = attend_reference(q, k, v, np.eye(4, dtype=bool), 1.0)
        assert np.allclose(out, v, atol=1e-14)

    def test_three_token_causal_scalar_oracle(self):
        q = np.array([[1.0], [0.5], [-1.0]])
        k = np.array([[2.0], [1.0], [0.0]])
        v = np.array([[1.0], [2.0], [3.0]])
        out = attend_reference(q, k, v, np.tril(np.ones((3, 3), dtype=bool)), 1.0)
        expected = np.empty((3, 1))
        expected[0] = v[0]
        w1 = np.exp([0.5 * 2, 0.5 * 1])
        w1 /= w1.sum()
        expected[1] = w1 @ v[:2]
        w2 = np.exp([-1.0 * 2, -1.0 * 1, 0.0])
        w2 /= w2.sum()
        expected[2] = w2 @ v
        assert np.allclose(out, expected, atol=1e-14)

    def test_fully_masked_row_rejected_with_index(self):
        mask = np.ones((3, 3), dtype=bool)
        mask[1] = False
        with pytest.raises(ValueError, match="row 1"):
            attend_reference(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((3, 2)), mask, 1.0)


class TestAttendBlocked:
    def test_equivalence_on_random_clean_layouts(self):
        g = np.random.default_rng(6)
        worst = 0.0
        for _ in range(100):
            layout = random_clean_layout(g)
            n = layout_token_count(layout)
            q, k, v = (g.standard_normal((n, 8)) for _ in range(3))
            ref = attend_reference(q, k, v, build_mask(layout), 8 ** -0.5)
            plan = build_block_plan(layout, int(g.integers(2, 7)))
            out, _ = attend_blocked(q, k, v, plan, row_cutoffs(layout))
            worst = max(worst, float(np.abs(out - ref).max()))
        assert worst < 1e-10

    def test_pure_text_skip_count_matches_dense_causal(self):
        layout = [Text(16)]
        plan = build_block_plan(layout, 4)
        n, bm = 16, 4
        q, k, v = (np.random.default_rng(7).standard_normal((n, 4)) for _ in range(3))
        _, stats = attend_blocked(q, k, v, plan, row_cutoffs(layout))
        # dense causal oracle: key blocks fully above each block's causal end
        expected = sum(
            1
            for bs in range(0, n, bm)
            for kb in range(0, n, bm)
            if kb >= min(bs + bm, n)
        )
        assert stats.skipped_key_blocks == expected == 6

    def test_all_image_layout_skips_nothing(self):
        layout = [CleanImage(4, 4)]
        plan = build_block_plan(layout, 4)
        q, k, v = (np.random.default_rng(8).standard_normal((16, 4)) for _ in range(3))
        _, stats = attend_blocked(q, k, v, plan, row_cutoffs(layout))
        assert stats.skipped_key_blocks == 0

    def test_multi_head_shapes(self):
        layout = [Text(3), CleanImage(1, 3)]
        n = 6
        g = np.random.default_rng(9)
        q, k, v = (g.standard_normal((2, n, 4)) for _ in range(3))
        ref = attend_reference(q, k, v, build_mask(layout), 0.5)
        out, _ = attend_blocked(q, k, v, build_block_plan(layout, 2), row_cutoffs(layout))
        assert out.shape == (2, n, 4)
        assert np.abs(out - ref).max() < 1e-10

    def test_plan_length_mismatch_rejected(self):
        plan = build_block_plan([Text(4)], 2)
        with pytest.raises(ValueError, match="plan covers"):
            attend_blocked(np.zeros((6, 2)), np.zeros((6, 2)), np.zeros((6, 2)),
                           plan, np.arange(1, 7))

    def test_stats_type(self):
        layout = [Text(4)]
        _, stats = attend_blocked(np.zeros((4, 2)), np.zeros((4, 2)), np.zeros((4, 2)),
                                  build_block_plan(layout, 2), row_cutoffs(layout))
        assert isinstance(stats, BlockedStats)
        assert stats.total_key_blocks == 4


def test_row_cutoffs_reject_noise():
    with pytest.raises(ValueError, match="clean"):
        row_cutoffs([NoiseImage(1, 1)])


def test_segment_validation():
    with pytest.raises(ValueError):
        Text(0)
    with pytest.raises(ValueError):
        CleanImage(0, 3)
