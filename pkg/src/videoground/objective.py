"""Matching and training losses.

Anchors whose overlap with the ground truth exceeds 0.5 are positives; all
others are negatives. The overlap loss is a soft-target cross-entropy (the
target is the actual overlap value) normalized separately inside each group,
and the location loss is a smooth-L1 penalty on the positive anchors'
offsets. The total is lambda * overlap + eta * location.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InputError
from .head import AnchorSet, RawPredictions, encode_targets

POSITIVE_TIOU = 0.5


@dataclass(frozen=True)
class Segment:
    start: float
    end: float

    def __post_init__(self):
        if not (self.end > self.start):
            raise InputError(f"segment needs end > start, got [{self.start}, {self.end}]")

    @property
    def center(self) -> float:
        return (self.start + self.end) / 2.0

    @property
    def width(self) -> float:
        return self.end - self.start

    @classmethod
    def from_center_width(cls, center: float, width: float) -> "Segment":
        return cls(center - width / 2.0, center + width / 2.0)


def tiou(a: Segment, b: Segment) -> float:
    """Interval intersection over union; zero when disjoint."""
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0.0:
        return 0.0
    union = max(a.end, b.end) - min(a.start, b.start)
    return inter / union


def overlap_1d(a_start: float, a_end: float, b_start: float, b_end: float) -> float:
    """tiou on raw interval endpoints; degenerate intervals score 0 instead of
    raising, which inference needs for clamped out-of-range candidates."""
    if a_end <= a_start or b_end <= b_start:
        return 0.0
    inter = min(a_end, b_end) - max(a_start, b_start)
    if inter <= 0.0:
        return 0.0
    return inter / (max(a_end, b_end) - min(a_start, b_start))


@dataclass
class MatchResult:
    positive: np.ndarray      # [M] bool
    g_over: np.ndarray        # [M] overlap with the ground truth
    target_dc: np.ndarray     # [M], zero for negatives
    target_dw: np.ndarray     # [M], zero for negatives
    n_pos: int
    n_neg: int


def match_anchors(anchors: AnchorSet, gt: Segment,
                  alpha_c: float = 0.1, alpha_w: float = 0.1) -> MatchResult:
    if len(anchors) == 0:
        raise InputError("cannot match against an empty anchor set")
    m = len(anchors)
    g_over = np.zeros(m)
    positive = np.zeros(m, dtype=bool)
    target_dc = np.zeros(m)
    target_dw = np.zeros(m)
    for i, anchor in enumerate(anchors.anchors):
        g_over[i] = tiou(Segment(anchor.start, anchor.end), gt)
        if g_over[i] > POSITIVE_TIOU:
            positive[i] = True
            target_dc[i], target_dw[i] = encode_targets(
                anchor, gt.center, gt.width, alpha_c, alpha_w)
    n_pos = int(positive.sum())
    return MatchResult(positive=positive, g_over=g_over, target_dc=target_dc,
                       target_dw=target_dw, n_pos=n_pos, n_neg=m - n_pos)


@dataclass
class LossBreakdown:
    l_over: Tensor
    l_loc: Tensor
    l_all: Tensor
    lambda_over: float
    eta_loc: float

    def values(self) -> dict[str, float]:
        return {"l_over": self.l_over.item(), "l_loc": self.l_loc.item(),
                "l_all": self.l_all.item()}


def loss_over(match: MatchResult, raw: RawPredictions) -> Tensor:
    """Soft-target cross-entropy, normalized per group; an empty group adds 0."""
    weights = np.zeros(len(raw))
    if match.n_pos > 0:
        weights[match.positive] = 1.0 / match.n_pos
    if match.n_neg > 0:
        weights[~match.positive] = 1.0 / match.n_neg
    g = Tensor(match.g_over)
    one_minus_g = Tensor(1.0 - match.g_over)
    p = raw.p_over
    ce = ad.neg(ad.add(ad.mul(g, ad.log(p)), ad.mul(one_minus_g, ad.log(ad.rsub(p, 1.0)))))
    return ad.sum_(ad.mul(ce, Tensor(weights)))


def loss_loc(match: MatchResult, raw: RawPredictions,
             anchors: AnchorSet | None = None,
             space: str = "offset",
             alpha_c: float = 0.1, alpha_w: float = 0.1,
             gt: Segment | None = None) -> Tensor:
    """Smooth-L1 over positive anchors, averaged by their count.

    `offset` space penalizes (target_dc - dc, target_dw - dw). `absolute`
    space decodes the prediction inside the graph and penalizes the raw
    center/width residuals; it needs the anchor set and the ground truth.
    """
    if match.n_pos == 0:
        return Tensor(0.0)
    pos = np.flatnonzero(match.positive)
    m = len(raw)
    dc = ad.reshape(ad.gather_rows(ad.reshape(raw.dc, (m, 1)), pos), (len(pos),))
    dw = ad.reshape(ad.gather_rows(ad.reshape(raw.dw, (m, 1)), pos), (len(pos),))
    if space == "offset":
        res_c = ad.sub(Tensor(match.target_dc[pos]), dc)
        res_w = ad.sub(Tensor(match.target_dw[pos]), dw)
    elif space == "absolute":
        if anchors is None or gt is None:
            raise InputError("absolute-space location loss needs anchors and gt")
        mu_c = np.array([anchors.anchors[i].center for i in pos])
        mu_w = np.array([anchors.anchors[i].width for i in pos])
        pred_c = ad.add(ad.mul(dc, Tensor(alpha_c * mu_w)), Tensor(mu_c))
        pred_w = ad.mul(ad.exp(ad.mul(dw, alpha_w)), Tensor(mu_w))
        res_c = ad.sub(Tensor(np.full(len(pos), gt.center)), pred_c)
        res_w = ad.sub(Tensor(np.full(len(pos), gt.width)), pred_w)
    else:
        raise InputError(f"unknown location-loss space {space!r}")
    penalty = ad.add(ad.smooth_l1(res_c), ad.smooth_l1(res_w))
    return ad.mul(ad.sum_(penalty), 1.0 / match.n_pos)


def loss_all(l_over: Tensor, l_loc: Tensor,
             lambda_over: float = 100.0, eta_loc: float = 10.0) -> LossBreakdown:
    total = ad.add(ad.mul(l_over, lambda_over), ad.mul(l_loc, eta_loc))
    return LossBreakdown(l_over=l_over, l_loc=l_loc, l_all=total,
                         lambda_over=lambda_over, eta_loc=eta_loc)


def example_loss(match: MatchResult, raw: RawPredictions,
                 lambda_over: float = 100.0, eta_loc: float = 10.0,
                 space: str = "offset", anchors: AnchorSet | None = None,
                 gt: Segment | None = None,
                 alpha_c: float = 0.1, alpha_w: float = 0.1) -> LossBreakdown:
    l_o = loss_over(match, raw)
    l_l = loss_loc(match, raw, anchors=anchors, space=space,
                   alpha_c=alpha_c, alpha_w=alpha_w, gt=gt)
    return loss_all(l_o, l_l, lambda_over, eta_loc)
