"""Threshold-swept precision-recall evaluation of loop-closure matches."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyCurveError,
    EmptyGroundTruthError,
    InvalidParamsError,
    UnknownQueryError,
)
from .matching import Match


@dataclass(frozen=True)
class GroundTruth:
    """True loop-closure pairs over ordered query and reference id lists."""

    pairs: frozenset[tuple[str, str]]
    query_ids: tuple[str, ...]
    reference_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", frozenset(self.pairs))
        object.__setattr__(self, "query_ids", tuple(self.query_ids))
        object.__setattr__(self, "reference_ids", tuple(self.reference_ids))
        qset = set(self.query_ids)
        rset = set(self.reference_ids)
        for q, r in self.pairs:
            if q not in qset:
                raise InvalidParamsError(f"pair query id {q!r} not in query list")
            if r not in rset:
                raise InvalidParamsError(f"pair reference id {r!r} not in reference list")

    @property
    def positive_queries(self) -> frozenset[str]:
        """Queries that have at least one true pair (the recall denominator)."""
        return frozenset(q for q, _ in self.pairs)


@dataclass(frozen=True)
class PrCurve:
    """(threshold, precision, recall) points plus the average precision."""

    points: tuple[tuple[float, float, float], ...]
    ap: float


def _ap_from_points(points: Iterable[tuple[float, float, float]]) -> float:
    """Mean over distinct positive recall levels of the best precision there."""
    best: dict[float, float] = {}
    for _, precision, recall in points:
        if recall > 0.0 and precision > best.get(recall, -1.0):
            best[recall] = precision
    if not best:
        return 0.0
    return float(sum(best.values()) / len(best))


def pr_curve(matches: Sequence[Match], gt: GroundTruth) -> PrCurve:
    """Sweep the acceptance threshold over the observed match distances.

    At each distinct distance t, matches with ``distance <= t`` are
    accepted; a match is correct when (query, matched) is a true pair.
    Precision is 1 by convention when nothing is accepted, and recall
    divides by the number of queries owning at least one true pair.
    """
    positives = gt.positive_queries
    if not positives:
        raise EmptyGroundTruthError("no query has a true pair")
    qset = set(gt.query_ids)
    for m in matches:
        if m.query_id not in qset:
            raise UnknownQueryError(f"match for unknown query {m.query_id!r}")
    if not matches:
        return PrCurve(points=(), ap=0.0)

    distances = np.array([m.distance for m in matches])
    correct = np.array([(m.query_id, m.matched_id) in gt.pairs for m in matches])
    order = np.argsort(distances, kind="stable")
    distances = distances[order]
    correct = correct[order]

    tp_cum = np.cumsum(correct)
    accepted = np.arange(1, len(matches) + 1)
    # threshold sweep: one point per distinct distance, taking all ties
    last_of_run = np.nonzero(np.diff(distances, append=np.inf))[0]
    n_pos = len(positives)

    points = []
    for i in last_of_run:
        tp = int(tp_cum[i])
        acc = int(accepted[i])
        precision = tp / acc if acc else 1.0
        recall = tp / n_pos
        points.append((float(distances[i]), precision, recall))
    return PrCurve(points=tuple(points), ap=_ap_from_points(points))


def average_precision(curve: PrCurve) -> float:
    """Recompute the average precision of a curve from its points."""
    if not curve.points:
        raise EmptyCurveError("curve has no points")
    return _ap_from_points(curve.points)


def load_ground_truth_csv(
    path: str | Path,
    query_ids: Sequence[str],
    reference_ids: Sequence[str],
) -> GroundTruth:
    """Read true pairs from a ``query_id,reference_id`` CSV (header required)."""
    pairs = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["query_id", "reference_id"]:
            raise InvalidParamsError(
                f"{path}: expected header 'query_id,reference_id'"
            )
        for row in reader:
            if not row:
                continue
            if len(row) < 2:
                raise InvalidParamsError(f"{path}: malformed row {row!r}")
            pairs.add((row[0].strip(), row[1].strip()))
    return GroundTruth(
        pairs=frozenset(pairs),
        query_ids=tuple(query_ids),
        reference_ids=tuple(reference_ids),
    )


def write_ground_truth_csv(path: str | Path, pairs: Iterable[tuple[str, str]]) -> None:
    """Write true pairs as a sorted ``query_id,reference_id`` CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "reference_id"])
        for q, r in sorted(pairs):
            writer.writerow([q, r])
