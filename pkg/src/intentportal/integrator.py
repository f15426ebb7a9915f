"""Fast local prediction: neighbor label averaging, confidence, routing.

Everything here is a pure function of its arguments.  The portal feeds
in retrieved neighbors; this module decides what the local answer is and
whether it is trustworthy enough to serve without asking the LLM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import AllZeroSimilarity, NoNeighbors
from .memory import Neighbor


class Route(str, Enum):
    LOCAL = "local"
    LLM = "llm"


@dataclass(frozen=True)
class RouteDecision:
    route: Route
    confidence: float
    threshold: float


@dataclass(frozen=True)
class LocalPrediction:
    scores: dict[str, float]
    confidence: float
    neighbor_ids: tuple[int, ...]


def _clamped(neighbors: list[Neighbor]) -> list[float]:
    # negative cosines would break the convex combination; clip both ends
    return [min(max(n.similarity, 0.0), 1.0) for n in neighbors]


def integrate(neighbors: list[Neighbor]) -> dict[str, float]:
    """Similarity-weighted average of neighbor labels.

    Returns a sparse distribution over the union of the neighbors' label
    keys; weights are the clamped similarities, normalized.
    """
    if not neighbors:
        raise NoNeighbors("integrate needs at least one neighbor")
    sims = _clamped(neighbors)
    total = sum(sims)
    if total <= 0.0:
        raise AllZeroSimilarity("all neighbor similarities clamp to zero")
    scores: dict[str, float] = {}
    for neighbor, sim in zip(neighbors, sims):
        if sim == 0.0:
            continue
        for fid, p in neighbor.record.label.items():
            scores[fid] = scores.get(fid, 0.0) + p * sim
    return {fid: v / total for fid, v in scores.items()}


def confidence(neighbors: list[Neighbor], k: int = 5) -> float:
    """Rank-weighted similarity mass, Σ sim_i·(k−i+1) / Σ i.

    Both sums run over the actual neighbor count when fewer than k
    exist, which keeps the score in [0, 1] on cold stores.
    """
    if not neighbors:
        raise NoNeighbors("confidence needs at least one neighbor")
    sims = _clamped(neighbors)
    if len(sims) > k:
        sims = sims[:k]
    n = len(sims)
    # fsum: equal similarities must reproduce themselves exactly
    # (five 0.9s are 0.9, not 0.9 plus an ulp of drift)
    numerator = math.fsum(sim * (n - i) for i, sim in enumerate(sims))
    denominator = n * (n + 1) / 2.0
    return numerator / denominator


def route(conf: float, threshold: float = 0.95) -> RouteDecision:
    """Local iff confidence strictly exceeds the threshold."""
    if conf < 0:
        raise ValueError(f"confidence must be >= 0, got {conf}")
    chosen = Route.LOCAL if conf > threshold else Route.LLM
    return RouteDecision(route=chosen, confidence=conf, threshold=threshold)


def decide(
    neighbors: list[Neighbor], k: int = 5, threshold: float = 0.95
) -> RouteDecision:
    """Route a retrieval result, covering the thin-store edge cases.

    Zero neighbors score a confidence of 0.  Fewer than k neighbors go
    to the LLM no matter the score, unless every similarity is exactly 1
    (then the weighted average is 1 and the local answer stands).
    """
    if not neighbors:
        return RouteDecision(route=Route.LLM, confidence=0.0, threshold=threshold)
    conf = confidence(neighbors, k)
    decision = route(conf, threshold)
    if len(neighbors) < k and decision.route is Route.LOCAL:
        if any(min(max(n.similarity, 0.0), 1.0) < 1.0 for n in neighbors):
            return RouteDecision(route=Route.LLM, confidence=conf, threshold=threshold)
    return decision


def rank_scores(
    scores: dict[str, float],
    last_used: dict[str, float] | None = None,
) -> list[tuple[str, float]]:
    """Scores to a deterministic ranked list.

    Ties break toward the function used most recently, then the smaller
    id, so identical state always serves an identical ranking.
    """
    last_used = last_used or {}
    return sorted(
        scores.items(),
        key=lambda kv: (-kv[1], -last_used.get(kv[0], float("-inf")), kv[0]),
    )
