"""Ranking metrics over replayed trials: Hit@k, MRR, per-day series."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from ..errors import EmptyTrials, InvalidTrial
from ..memory import UsageRecord  # noqa: F401  (re-exported for harness callers)


@dataclass
class Trial:
    """One replayed interaction and how the system answered it."""

    user_id: str
    day: int
    timestamp: str          # ISO instant of the query
    query: str
    truth: str
    served: tuple[str, ...]  # full candidate ranking, best first
    provenance: str          # local | llm | fallback_frequency | error
    latency_ms: float = 0.0
    confidence: float = 0.0
    error: str | None = None

    @property
    def rank(self) -> int | None:
        """1-based rank of the truth, None when it was never served."""
        try:
            return self.served.index(self.truth) + 1
        except ValueError:
            return None


@dataclass
class DayStats:
    day: int
    trials: int
    hit1: float
    hit5: float
    mrr: float
    local_fraction: float
    mean_latency_ms: float


@dataclass
class MetricsReport:
    hit1: float
    hit5: float
    mrr: float
    mean_latency_ms: float
    trials: int
    local_fraction: float
    days: list[DayStats] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "hit1": self.hit1,
            "hit5": self.hit5,
            "mrr": self.mrr,
            "mean_latency_ms": self.mean_latency_ms,
            "trials": self.trials,
            "local_fraction": self.local_fraction,
            "days": [vars(d) for d in self.days],
        }


def _is_local(trial: Trial) -> bool:
    # "local" here means served without an LLM round trip
    return trial.provenance != "llm"


def metrics(trials: Sequence[Trial]) -> MetricsReport:
    """Hit@1/Hit@5 over ranking prefixes, MRR over the full ranking.

    A trial that errored counts as a miss with reciprocal rank 0; a
    well-formed trial must rank the truth somewhere or it is rejected.
    """
    if not trials:
        raise EmptyTrials("cannot compute metrics over zero trials")
    for t in trials:
        if t.error is None and t.rank is None:
            raise InvalidTrial(
                f"truth {t.truth!r} missing from the served ranking "
                f"(user {t.user_id}, day {t.day})"
            )

    def over(subset: Sequence[Trial]) -> tuple[float, float, float, float, float]:
        n = len(subset)
        hit1 = sum(1 for t in subset if t.rank == 1) / n
        hit5 = sum(1 for t in subset if t.rank is not None and t.rank <= 5) / n
        mrr = sum(1.0 / t.rank for t in subset if t.rank is not None) / n
        local = sum(1 for t in subset if _is_local(t)) / n
        latency = sum(t.latency_ms for t in subset) / n
        return hit1, hit5, mrr, local, latency

    hit1, hit5, mrr, local, latency = over(trials)
    days = []
    for day in sorted({t.day for t in trials}):
        subset = [t for t in trials if t.day == day]
        d_hit1, d_hit5, d_mrr, d_local, d_latency = over(subset)
        days.append(
            DayStats(
                day=day,
                trials=len(subset),
                hit1=d_hit1,
                hit5=d_hit5,
                mrr=d_mrr,
                local_fraction=d_local,
                mean_latency_ms=d_latency,
            )
        )
    return MetricsReport(
        hit1=hit1,
        hit5=hit5,
        mrr=mrr,
        mean_latency_ms=latency,
        trials=len(trials),
        local_fraction=local,
        days=days,
    )
