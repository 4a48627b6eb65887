"""The executable invariant suite: clean pass, fault injection, report format."""

import numpy as np
import pytest

from pixelmot import autodiff as ad
from pixelmot.rope import PositionTriple, apply_rope
from pixelmot.verify import (
    CHECK_NAMES,
    format_report,
    parse_report,
    run_invariant_suite,
)


@pytest.fixture(scope="module")
def clean_results():
    return run_invariant_suite()


def test_fresh_checkout_passes_everything(clean_results):
    failed = [r.name for r in clean_results if not r.passed]
    assert failed == []


def test_every_module_represented(clean_results):
    prefixes = {name.split(".")[0] for name in CHECK_NAMES}
    assert prefixes >= {"numerics", "codec", "rope", "attention", "mot",
                        "flow", "sampler", "rewards"}
    assert len(clean_results) == len(CHECK_NAMES)


def test_filter_selects_subset():
    results = run_invariant_suite(name_filter="rope.")
    assert results and all(r.name.startswith("rope.") for r in results)


def test_unmatched_filter_rejected():
    with pytest.raises(ValueError, match="filter"):
        run_invariant_suite(name_filter="nonsense.")


def test_injected_rope_corruption_fails_by_name():
    """A theta corruption that warps positions nonlinearly must surface as a
    relative-position failure, named in the report."""

    def corrupted_apply_rope(vec, pos, cfg):
        warped = PositionTriple(pos.t * pos.t, pos.h, pos.w)  # breaks shift invariance
        return apply_rope(vec, warped, cfg)

    results = run_invariant_suite(name_filter="rope.",
                                  overrides={"apply_rope": corrupted_apply_rope})
    status = {r.name: r.passed for r in results}
    assert status["rope.relative_position"] is False
    report = format_report(results)
    assert "rope.relative_position fail" in report


def test_injected_mask_corruption_fails_noise_isolation():
    from pixelmot.attention import build_mask

    def leaky_mask(layout):
        mask = build_mask(layout)
        mask[:, :] |= np.eye(len(mask), dtype=bool)  # no-op, keep shape
        mask[0, :] = True  # row 0 sees everything, including noise
        return mask

    results = run_invariant_suite(name_filter="attention.noise_isolation",
                                  overrides={"build_mask": leaky_mask})
    assert results[0].passed is False


def test_unknown_override_rejected():
    with pytest.raises(ValueError, match="override"):
        run_invariant_suite(overrides={"not_a_target": lambda: None})


def test_report_round_trip(clean_results):
    text = format_report(clean_results)
    parsed = parse_report(text)
    assert [(r.name, r.passed) for r in parsed] == \
        [(r.name, r.passed) for r in clean_results]
    for a, b in zip(parsed, clean_results):
        assert a.measured == pytest.approx(b.measured, rel=1e-5, abs=1e-12)
        assert a.tolerance == pytest.approx(b.tolerance, rel=1e-5, abs=1e-12)


def test_report_lines_one_per_check(clean_results):
    lines = format_report(clean_results).strip().splitlines()
    assert len(lines) == len(clean_results)
    for line in lines:
        name, status, measured, tol = line.split()
        assert status in ("pass", "fail")
        assert measured.startswith("measured=") and tol.startswith("tol=")
