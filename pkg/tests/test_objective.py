"""Overlap measure, anchor matching, loss values and gradients."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from videoground import autodiff as ad
from videoground.autodiff import Tape, Tensor
from videoground.errors import InputError
from videoground.head import RawPredictions, generate_anchors
from videoground.objective import (MatchResult, Segment, example_loss, loss_all,
                                   loss_loc, loss_over, match_anchors, tiou)

RATIOS = (0.25, 0.5, 0.75, 1.0)


def segment_strategy():
    return st.tuples(st.floats(0, 0.98), st.floats(0.01, 1.0)).map(
        lambda p: Segment(p[0], min(1.0, p[0] + p[1])))


def test_tiou_identical():
    s = Segment(0.2, 0.7)
    assert tiou(s, s) == 1.0


def test_tiou_disjoint():
    assert tiou(Segment(0.0, 0.3), Segment(0.5, 0.9)) == 0.0


def test_tiou_worked_value():
    # intersection 0.2, union 0.6
    assert tiou(Segment(0.2, 0.6), Segment(0.4, 0.8)) == pytest.approx(1.0 / 3.0)


def test_degenerate_segment_rejected():
    with pytest.raises(InputError):
        Segment(0.5, 0.5)
    with pytest.raises(InputError):
        Segment(0.7, 0.2)


@given(segment_strategy(), segment_strategy())
@settings(max_examples=200, deadline=None)
def test_tiou_symmetric_and_bounded(a, b):
    v = tiou(a, b)
    assert v == tiou(b, a)
    assert 0.0 <= v <= 1.0


@given(segment_strategy(), segment_strategy())
@settings(max_examples=60, deadline=None)
def test_tiou_matches_grid_overlap_count(a, b):
    # brute-force oracle: count grid points inside both segments. The count
    # pins the overlap length to half a cell per endpoint (2e-4 total); the
    # overlap implied by the tested ratio is i = tiou*(|a|+|b|)/(1+tiou).
    grid = (np.arange(10_000) + 0.5) / 10_000
    in_both = (grid >= a.start) & (grid < a.end) & (grid >= b.start) & (grid < b.end)
    counted = in_both.sum() / 10_000
    v = tiou(a, b)
    implied = v * (a.width + b.width) / (1.0 + v)
    assert abs(implied - counted) < 2e-4


def anchor_grid():
    return generate_anchors([(1, 8), (2, 4), (3, 2), (4, 1)], RATIOS)


def test_match_exact_anchor_is_positive():
    anchors = anchor_grid()
    target = anchors.anchors[37]
    match = match_anchors(anchors, Segment(target.start, target.end))
    assert match.positive[37]
    assert match.g_over[37] == pytest.approx(1.0)


def test_whole_video_gt_matches_whole_video_anchor():
    anchors = generate_anchors([(4, 1)], (1.0,))
    match = match_anchors(anchors, Segment(0.0, 1.0))
    assert match.positive[0] and match.g_over[0] == 1.0


def test_match_counts_partition_the_anchors():
    anchors = anchor_grid()
    match = match_anchors(anchors, Segment(0.1, 0.43))
    assert match.n_pos + match.n_neg == len(anchors)
    assert match.n_pos == int(match.positive.sum())


def test_match_agrees_with_double_loop_recomputation():
    anchors = anchor_grid()
    rng = np.random.default_rng(0)
    for _ in range(25):
        start = rng.uniform(0, 0.8)
        gt = Segment(start, start + rng.uniform(0.05, 1.0 - start))
        match = match_anchors(anchors, gt)
        for i, a in enumerate(anchors.anchors):
            inter = max(0.0, min(a.end, gt.end) - max(a.start, gt.start))
            union = max(a.end, gt.end) - min(a.start, gt.start)
            overlap = inter / union if inter > 0 else 0.0
            assert match.g_over[i] == pytest.approx(overlap, abs=1e-12)
            assert match.positive[i] == (overlap > 0.5)


def _raw_from_probs(probs, dc=None, dw=None):
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.size
    logits = np.log(probs / (1 - probs))
    return RawPredictions(
        logits=Tensor(logits),
        p_over=Tensor(probs),
        dc=Tensor(np.zeros(n) if dc is None else np.asarray(dc, dtype=np.float64)),
        dw=Tensor(np.zeros(n) if dw is None else np.asarray(dw, dtype=np.float64)),
    )


def _match(positive, g_over, dc=None, dw=None):
    positive = np.asarray(positive, dtype=bool)
    m = positive.size
    return MatchResult(
        positive=positive,
        g_over=np.asarray(g_over, dtype=np.float64),
        target_dc=np.zeros(m) if dc is None else np.asarray(dc, dtype=np.float64),
        target_dw=np.zeros(m) if dw is None else np.asarray(dw, dtype=np.float64),
        n_pos=int(positive.sum()),
        n_neg=int((~positive).sum()),
    )


def test_perfect_positive_contributes_nothing():
    match = _match([True], [1.0])
    value = loss_over(match, _raw_from_probs([1 - 1e-12])).item()
    assert value < 1e-9


def test_soft_cross_entropy_hand_value():
    # g = p = 0.5 -> -(0.5 ln 0.5 + 0.5 ln 0.5) = ln 2
    match = _match([True], [0.5])
    value = loss_over(match, _raw_from_probs([0.5])).item()
    assert abs(value - math.log(2.0)) < 1e-9


def test_hard_targets_reduce_to_binary_cross_entropy():
    probs = np.array([0.8, 0.3, 0.6, 0.1])
    g = np.array([1.0, 0.0, 1.0, 0.0])
    match = _match(g > 0.5, g)
    value = loss_over(match, _raw_from_probs(probs)).item()
    pos = -np.log(probs[g == 1.0]).mean()
    neg = -np.log(1 - probs[g == 0.0]).mean()
    assert value == pytest.approx(pos + neg, abs=1e-12)


def test_overlap_loss_gradient_is_p_minus_g():
    g = 0.37
    logit_value = 0.4
    logit = Tensor(np.array([logit_value]), requires_grad=True, name="logit")
    match = _match([True], [g])
    with Tape() as tape:
        p = ad.clip(ad.sigmoid(logit), 1e-7, 1 - 1e-7)
        raw = RawPredictions(logits=logit, p_over=p, dc=Tensor([0.0]), dw=Tensor([0.0]))
        tape.backward(loss_over(match, raw))
    p_value = 1.0 / (1.0 + math.exp(-logit_value))
    np.testing.assert_allclose(logit.grad, [p_value - g], atol=1e-12)


def test_empty_group_contributes_zero():
    # all negatives: only the negative normalization term appears
    match = _match([False, False], [0.2, 0.0])
    value = loss_over(match, _raw_from_probs([0.2, 0.2])).item()
    expected = -0.5 * ((0.2 * math.log(0.2) + 0.8 * math.log(0.8))
                       + math.log(0.8))
    assert value == pytest.approx(expected, abs=1e-12)


def test_location_loss_zero_when_offsets_match():
    match = _match([True, False], [0.9, 0.1], dc=[0.7, 0.0], dw=[-0.3, 0.0])
    raw = _raw_from_probs([0.5, 0.5], dc=[0.7, 123.0], dw=[-0.3, -9.0])
    assert loss_loc(match, raw).item() == 0.0


def test_smooth_l1_branch_values():
    # SL1(0.5) = 0.125 (quadratic), SL1(2) = 1.5 (linear)
    match = _match([True, True], [0.9, 0.9], dc=[0.5, 2.0], dw=[0.0, 0.0])
    raw = _raw_from_probs([0.5, 0.5])
    value = loss_loc(match, raw).item()
    assert value == pytest.approx((0.125 + 1.5) / 2.0, abs=1e-12)


def test_no_positives_means_zero_location_loss():
    match = _match([False, False], [0.0, 0.1])
    raw = _raw_from_probs([0.5, 0.5], dc=[3.0, -2.0], dw=[1.0, 1.0])
    assert loss_loc(match, raw).item() == 0.0


def test_loss_all_values_and_linearity():
    zero = loss_all(Tensor(0.0), Tensor(0.0))
    assert zero.l_all.item() == 0.0
    combo = loss_all(Tensor(0.01), Tensor(0.1), lambda_over=100.0, eta_loc=10.0)
    assert combo.l_all.item() == pytest.approx(2.0, abs=1e-12)
    for c in (0.5, 3.0):
        scaled = loss_all(Tensor(0.01), Tensor(0.1),
                          lambda_over=100.0 * c, eta_loc=10.0 * c)
        assert scaled.l_all.item() == pytest.approx(2.0 * c, abs=1e-12)


def test_absolute_space_location_loss():
    anchors = generate_anchors([(1, 2)], (1.0,))
    gt = Segment(0.25, 0.75)
    match = match_anchors(anchors, gt)
    raw = _raw_from_probs([0.5, 0.5], dc=[0.3, -0.2], dw=[0.5, 0.1])
    value = loss_loc(match, raw, anchors=anchors, space="absolute", gt=gt).item()
    # independent recomputation
    expected = 0.0
    n_pos = match.n_pos
    for i, a in enumerate(anchors.anchors):
        if not match.positive[i]:
            continue
        pred_c = a.center + 0.1 * a.width * raw.dc.data[i]
        pred_w = a.width * math.exp(0.1 * raw.dw.data[i])
        for r in (gt.center - pred_c, gt.width - pred_w):
            expected += (0.5 * r * r if abs(r) < 1 else abs(r) - 0.5) / n_pos
    assert value == pytest.approx(expected, abs=1e-12)


def test_example_loss_combines_terms():
    anchors = anchor_grid()
    gt = Segment(0.2, 0.6)
    match = match_anchors(anchors, gt)
    rng = np.random.default_rng(1)
    raw = _raw_from_probs(rng.uniform(0.1, 0.9, size=len(anchors)),
                          dc=rng.normal(size=len(anchors)),
                          dw=rng.normal(size=len(anchors)))
    breakdown = example_loss(match, raw, lambda_over=100.0, eta_loc=10.0)
    assert breakdown.l_all.item() == pytest.approx(
        100.0 * breakdown.l_over.item() + 10.0 * breakdown.l_loc.item(), rel=1e-12)
