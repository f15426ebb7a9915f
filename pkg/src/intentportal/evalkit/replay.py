"""Replay a synthetic stream through the engine or a baseline.

The harness plays every trial in clock order, scores the served ranking
against the truth, and (with feedback on) selects the truth so the next
trial sees the updated store.  Parameters retrain at every day boundary,
mirroring an overnight cycle.

Trial logs carry only deterministic fields; wall-clock latency lives in
the aggregate report, never in the JSONL, so two replays of the same
stream produce byte-identical logs.
"""

from __future__ import annotations

import json
from typing import Callable, Sequence

from ..config import PortalConfig
from ..errors import PortalError, UnknownVariant
from ..llm_bridge import ScriptedStubLlm
from ..portal import PortalEngine
from .baselines import HistoryEntry, baseline_bayes, baseline_mfu, baseline_mru
from .metrics import MetricsReport, Trial, metrics
from .stream import SyntheticStream, TrialInput

VARIANTS = ("full", "general", "nocontext", "llm_only", "bert_only")

SHARED_USER = "everyone"


def build_engine(
    stream: SyntheticStream,
    variant: str = "full",
    stub_accuracy: float = 0.65,
    stub_seed: int = 1,
    stub_latency_ms: float = 200.0,
) -> PortalEngine:
    """Engine plus scripted stub wired for one ablation variant."""
    if variant not in VARIANTS:
        raise UnknownVariant(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    config = PortalConfig()
    stub: ScriptedStubLlm | None = ScriptedStubLlm(
        accuracy=stub_accuracy,
        seed=stub_seed,
        script=stream.truth_script,
        simulated_latency_ms=stub_latency_ms,
    )
    if variant == "general":
        # one store for everybody, hotter threshold, no same-user boost
        config.retrieval.threshold = 0.97
        config.retrieval.user_weight = 1.0
    elif variant == "nocontext":
        config.encoder.zero_context = True
    elif variant == "llm_only":
        config.retrieval.threshold = 2.0  # confidence can never exceed this
        config.llm.random_few_shot = True
    elif variant == "bert_only":
        stub = None
    return PortalEngine(config=config, llm=stub, global_pool=stream.pool)


def _provision(engine: PortalEngine, stream: SyntheticStream, merged: bool) -> None:
    if merged:
        union: dict[str, object] = {}
        for fns in stream.collections.values():
            for fn in fns:
                union.setdefault(fn.id, fn)
        engine.provision_user(SHARED_USER, list(union.values()))
    else:
        for uid, fns in stream.collections.items():
            engine.provision_user(uid, fns)


def replay_engine(
    stream: SyntheticStream,
    engine: PortalEngine,
    feedback: bool = True,
    retrain_daily: bool = True,
    merged_store: bool = False,
) -> tuple[MetricsReport, list[Trial]]:
    _provision(engine, stream, merged_store)
    trials: list[Trial] = []
    current_day = 0
    for t in stream.trials:
        if retrain_daily and t.day > current_day:
            engine.retrain_all()
            current_day = t.day
        uid = SHARED_USER if merged_store else t.user_id
        try:
            result = engine.predict(uid, t.query, t.context)
        except PortalError as exc:
            trials.append(
                Trial(
                    user_id=t.user_id,
                    day=t.day,
                    timestamp=t.timestamp.isoformat(),
                    query=t.query,
                    truth=t.truth,
                    served=(),
                    provenance="error",
                    error=type(exc).__name__,
                )
            )
            continue
        trials.append(
            Trial(
                user_id=t.user_id,
                day=t.day,
                timestamp=t.timestamp.isoformat(),
                query=t.query,
                truth=t.truth,
                served=result.full_ranking,
                provenance=result.provenance,
                latency_ms=result.latency_ms,
                confidence=result.confidence,
            )
        )
        if feedback and t.truth in result.full_ranking:
            engine.select(uid, result.request_id, t.truth)
    return metrics(trials), trials


def replay_baseline(
    stream: SyntheticStream,
    name: str,
    window_seconds: float = 600.0,
) -> tuple[MetricsReport, list[Trial]]:
    """MFU / MRU / Bayes over the same incremental history as the engine."""
    rankers: dict[str, Callable] = {
        "mfu": lambda hist, ctx_apps, cands: baseline_mfu(hist, cands),
        "mru": lambda hist, ctx_apps, cands: baseline_mru(hist, cands),
        "bayes": baseline_bayes,
    }
    if name not in rankers:
        raise UnknownVariant(f"unknown baseline {name!r}, expected one of {sorted(rankers)}")
    ranker = rankers[name]
    histories: dict[str, list[HistoryEntry]] = {uid: [] for uid in stream.collections}
    candidates = {
        uid: [fn.id for fn in fns] for uid, fns in stream.collections.items()
    }
    trials: list[Trial] = []
    for t in stream.trials:
        ctx_apps = tuple(
            l.app
            for l in t.context.launches
            if 0 <= (t.context.now - l.timestamp).total_seconds() <= window_seconds
        )
        ranking = ranker(histories[t.user_id], ctx_apps, candidates[t.user_id])
        trials.append(
            Trial(
                user_id=t.user_id,
                day=t.day,
                timestamp=t.timestamp.isoformat(),
                query=t.query,
                truth=t.truth,
                served=tuple(ranking),
                provenance="local",
            )
        )
        histories[t.user_id].append(
            HistoryEntry(
                function_id=t.truth, timestamp=t.timestamp, context_apps=ctx_apps
            )
        )
    return metrics(trials), trials


def run_ablation(
    stream: SyntheticStream,
    variants: Sequence[str] | None = None,
    stub_accuracy: float = 0.65,
    stub_seed: int = 1,
) -> dict[str, MetricsReport]:
    """One report per variant, same stream, fresh engine and stub each."""
    chosen = list(variants) if variants is not None else list(VARIANTS)
    reports: dict[str, MetricsReport] = {}
    for variant in chosen:
        engine = build_engine(
            stream, variant, stub_accuracy=stub_accuracy, stub_seed=stub_seed
        )
        report, _ = replay_engine(
            stream, engine, merged_store=(variant == "general")
        )
        reports[variant] = report
    return reports


def write_trials(trials: Sequence[Trial], path: str) -> None:
    """Deterministic trial log: no latency, no wall-clock fields."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in trials:
            fh.write(
                json.dumps(
                    {
                        "user": t.user_id,
                        "day": t.day,
                        "ts": t.timestamp,
                        "query": t.query,
                        "truth": t.truth,
                        "served": list(t.served),
                        "provenance": t.provenance,
                        "confidence": t.confidence,
                        "error": t.error,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_trials(path: str) -> list[Trial]:
    out: list[Trial] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            out.append(
                Trial(
                    user_id=d["user"],
                    day=d["day"],
                    timestamp=d["ts"],
                    query=d["query"],
                    truth=d["truth"],
                    served=tuple(d["served"]),
                    provenance=d["provenance"],
                    confidence=d.get("confidence", 0.0),
                    error=d.get("error"),
                )
            )
    return out
