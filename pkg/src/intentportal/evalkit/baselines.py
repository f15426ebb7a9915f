"""Reference rankers the engine has to beat: MFU, MRU, Naive Bayes.

Each baseline is a pure function of (history, candidates) plus, for the
Bayes ranker, the query context.  History entries are (function id,
timestamp, context apps) tuples accumulated by the replay harness; the
candidate list arrives in the user's collection order, which doubles as
the cold-start prior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime
from typing import Sequence


@dataclass(frozen=True)
class HistoryEntry:
    function_id: str
    timestamp: datetime
    context_apps: tuple[str, ...]  # apps seen in the query's context window


def baseline_mfu(
    history: Sequence[HistoryEntry], candidates: Sequence[str]
) -> list[str]:
    """Most frequently used first; ties to the more recent, then input order."""
    counts: dict[str, int] = {}
    last: dict[str, datetime] = {}
    for entry in history:
        counts[entry.function_id] = counts.get(entry.function_id, 0) + 1
        last[entry.function_id] = entry.timestamp
    order = {fid: i for i, fid in enumerate(candidates)}
    return sorted(
        candidates,
        key=lambda fid: (
            -counts.get(fid, 0),
            -(last[fid].timestamp() if fid in last else float("-inf")),
            order[fid],
        ),
    )


def baseline_mru(
    history: Sequence[HistoryEntry], candidates: Sequence[str]
) -> list[str]:
    """Most recently used first; never-used functions keep input order."""
    last: dict[str, datetime] = {}
    for entry in history:
        last[entry.function_id] = entry.timestamp
    order = {fid: i for i, fid in enumerate(candidates)}
    return sorted(
        candidates,
        key=lambda fid: (
            -(last[fid].timestamp() if fid in last else float("-inf")),
            order[fid],
        ),
    )


def baseline_bayes(
    history: Sequence[HistoryEntry],
    context_apps: Sequence[str],
    candidates: Sequence[str],
) -> list[str]:
    """rank by P(f) * prod P(app | f), add-one smoothed.

    P(app | f) counts, per used function, how many of its interactions
    had the app present in context; the vocabulary for smoothing is
    every app seen anywhere in history.  With no context apps the
    likelihood is vacuous and the ranking degenerates to plain MFU.
    """
    apps = tuple(dict.fromkeys(context_apps))  # dedupe, keep order
    if not history or not apps:
        return baseline_mfu(history, candidates)

    counts: dict[str, int] = {}
    app_counts: dict[str, dict[str, int]] = {}
    vocab: set[str] = set()
    for entry in history:
        counts[entry.function_id] = counts.get(entry.function_id, 0) + 1
        per_fn = app_counts.setdefault(entry.function_id, {})
        for app in set(entry.context_apps):
            per_fn[app] = per_fn.get(app, 0) + 1
            vocab.add(app)
    vocab.update(apps)
    v = len(vocab)
    total = len(history)
    n_fn = len(candidates)

    def log_score(fid: str) -> float:
        c = counts.get(fid, 0)
        score = math.log((c + 1) / (total + n_fn))
        per_fn = app_counts.get(fid, {})
        for app in apps:
            score += math.log((per_fn.get(app, 0) + 1) / (c + v))
        return score

    order = {fid: i for i, fid in enumerate(candidates)}
    return sorted(candidates, key=lambda fid: (-log_score(fid), order[fid]))
