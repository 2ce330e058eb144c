"""Ranking, non-maximum suppression, and the recall-at-overlap metric."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError, InputError
from .objective import Segment, overlap_1d


@dataclass(frozen=True)
class ScoredSegment:
    start: float
    end: float
    score: float


def clamp_segment(start: float, end: float) -> tuple[float, float]:
    return max(0.0, min(1.0, start)), max(0.0, min(1.0, end))


def _sort_indices(segments: list[ScoredSegment]) -> list[int]:
    # score desc, then start asc, then width asc
    return sorted(range(len(segments)),
                  key=lambda i: (-segments[i].score, segments[i].start,
                                 segments[i].end - segments[i].start))


def nms(segments: list[ScoredSegment], overlap_threshold: float = 0.55,
        max_keep: int = 10) -> list[ScoredSegment]:
    """Greedy suppression: keep the best remaining segment, drop everything
    overlapping it by more than the threshold."""
    if not (0.0 < overlap_threshold <= 1.0):
        raise ConfigError(f"overlap threshold must lie in (0, 1], got {overlap_threshold}")
    order = _sort_indices(segments)
    kept: list[ScoredSegment] = []
    suppressed = [False] * len(segments)
    for i in order:
        if suppressed[i]:
            continue
        kept.append(segments[i])
        if len(kept) >= max_keep:
            break
        for j in order:
            if suppressed[j] or j == i:
                continue
            if overlap_1d(segments[i].start, segments[i].end,
                          segments[j].start, segments[j].end) > overlap_threshold:
                suppressed[j] = True
    return kept


def nms_reference(segments: list[ScoredSegment], overlap_threshold: float = 0.55,
                  max_keep: int = 10) -> list[ScoredSegment]:
    """O(n^2) check-against-all-kept formulation, used as the test oracle."""
    kept: list[ScoredSegment] = []
    for i in _sort_indices(segments):
        if len(kept) >= max_keep:
            break
        cand = segments[i]
        if all(overlap_1d(cand.start, cand.end, k.start, k.end) <= overlap_threshold
               for k in kept):
            kept.append(cand)
    return kept


@dataclass
class EvalReport:
    """Recall at (top_n, min_overlap) pairs over a query set.

    A query counts as hit when some top-n segment overlaps the ground truth
    STRICTLY above m (ties at exactly m do not count).
    """

    recalls: dict[tuple[int, float], float] = field(default_factory=dict)
    query_count: int = 0
    note: str = "hit criterion: overlap strictly greater than m"

    def format(self) -> str:
        lines = [f"# {self.note}; queries={self.query_count}"]
        for (n, m), value in sorted(self.recalls.items()):
            lines.append(f"R@{n},IoU@{m:g}: {value:.4f}")
        return "\n".join(lines)


def recall_at(results: list[list[ScoredSegment]], gts: list[Segment],
              n: int, m: float) -> float:
    """Fraction of queries whose top-n candidates contain an overlap > m."""
    if not results:
        raise InputError("recall over an empty query set")
    if len(results) != len(gts):
        raise InputError(f"{len(results)} result lists for {len(gts)} ground truths")
    hits = 0
    for ranked, gt in zip(results, gts):
        if not ranked:
            raise InputError("every query needs at least one ranked segment")
        best = max(overlap_1d(s.start, s.end, gt.start, gt.end) for s in ranked[:n])
        if best > m:
            hits += 1
    return hits / len(results)


def evaluate(results: list[list[ScoredSegment]], gts: list[Segment],
             top_ns: tuple[int, ...] = (1, 5),
             overlaps: tuple[float, ...] = (0.3, 0.5, 0.7)) -> EvalReport:
    report = EvalReport(query_count=len(results))
    for n in top_ns:
        for m in overlaps:
            report.recalls[(n, m)] = recall_at(results, gts, n, m)
    return report
