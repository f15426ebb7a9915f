"""Shared fixtures: the reference stream and one full-system replay.

The replay costs a few seconds, so it is session-scoped and lazy; runs
that only touch unit tests never pay for it.
"""

from __future__ import annotations

import time
from types import SimpleNamespace

import pytest

from intentportal.evalkit.replay import build_engine, replay_engine
from intentportal.evalkit.stream import StreamConfig, generate_stream


@pytest.fixture(scope="session")
def reference_stream():
    return generate_stream(StreamConfig())


@pytest.fixture(scope="session")
def reference_run(reference_stream):
    started = time.perf_counter()
    engine = build_engine(reference_stream, "full", stub_accuracy=0.65, stub_seed=1)
    report, trials = replay_engine(reference_stream, engine)
    elapsed = time.perf_counter() - started
    return SimpleNamespace(
        stream=reference_stream,
        engine=engine,
        report=report,
        trials=trials,
        elapsed_seconds=elapsed,
    )
