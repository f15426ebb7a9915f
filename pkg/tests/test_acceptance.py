"""Acceptance suite: one test per release criterion, in order.

Each test states its tolerance inline and runs against the public API,
with independent oracles where the criterion calls for one.  Keep these
green; they are the contract the rest of the suite refines.
"""

from __future__ import annotations

import math
import time
from datetime import datetime, timedelta, timezone
from random import Random

import numpy as np
import pytest

from intentportal.config import EncoderConfig, PortalConfig
from intentportal.encoder import AppLaunch, ContextSnapshot, FeatureEncoder
from intentportal.errors import LlmError, Unparseable
from intentportal.evalkit.metrics import Trial, metrics
from intentportal.evalkit.replay import (
    build_engine,
    replay_baseline,
    replay_engine,
    write_trials,
)
from intentportal.evalkit.stream import StreamConfig, generate_stream
from intentportal.integrator import Route, confidence, decide, integrate, route
from intentportal.llm_bridge import (
    LlmReply,
    ScriptedStubLlm,
    build_function_prompt,
    parse_ranking,
    render_ranking,
)
from intentportal.memory import (
    FunctionDescriptor,
    Neighbor,
    UsageRecord,
    UserStore,
    bootstrap,
)
from intentportal.portal import PortalEngine
from intentportal.trainer import (
    fuse_label,
    gate_loss_grad,
    head_loss_grad,
)

T0 = datetime(2026, 3, 2, 9, 0, 0, tzinfo=timezone.utc)


def neighbor(label: dict[str, float], sim: float, minute: int = 0) -> Neighbor:
    chosen = max(label, key=label.get)
    record = UsageRecord(
        user_id="u1", query="q", context=None, label=label, chosen=chosen,
        timestamp=T0 + timedelta(minutes=minute),
    )
    return Neighbor(record=record, similarity=sim)


# -- 1. integrator vs independent brute force -------------------------------------

def brute_force_integrate(cases: list[tuple[float, dict[str, float]]]) -> dict[str, float]:
    clamped = [(min(max(sim, 0.0), 1.0), label) for sim, label in cases]
    total = math.fsum(c for c, _ in clamped)
    fids = sorted({fid for _, label in clamped for fid in label})
    out = {}
    for fid in fids:
        mass = math.fsum(c * label.get(fid, 0.0) for c, label in clamped)
        if mass > 0.0:
            out[fid] = mass / total
    return out


def test_c01_integrator_matches_brute_force_oracle():
    rng = Random(2026)
    started = time.perf_counter()
    for _ in range(1000):
        n_fn = rng.randint(1, 10)
        fids = [f"f{i}" for i in range(n_fn)]
        cases = []
        for _ in range(rng.randint(1, 5)):
            support = rng.sample(fids, rng.randint(1, min(4, n_fn)))
            raw = [rng.random() + 0.05 for _ in support]
            mass = math.fsum(raw)
            label = {fid: w / mass for fid, w in zip(support, raw)}
            sim = rng.uniform(0.01, 1.3)  # > 1 exercises the clamp
            cases.append((sim, label))
        got = integrate([neighbor(label, sim) for sim, label in cases])
        want = brute_force_integrate(cases)
        for fid in set(got) | set(want):
            assert abs(got.get(fid, 0.0) - want.get(fid, 0.0)) < 1e-9
    assert time.perf_counter() - started < 5.0


# -- 2. confidence and gating fixtures ---------------------------------------------

def test_c02_confidence_gate_fixtures_are_exact():
    strong = [neighbor({"f0": 1.0}, sim) for sim in (1.0, 1.0, 1.0, 1.0, 0.5)]
    conf = confidence(strong, k=5)
    assert conf == (5 + 4 + 3 + 2 + 0.5) / 15.0  # 0.9666...
    assert route(conf, threshold=0.95).route is Route.LOCAL
    assert decide(strong, k=5, threshold=0.95).route is Route.LOCAL

    flat = [neighbor({"f0": 1.0}, 0.9) for _ in range(5)]
    assert confidence(flat, k=5) == 0.9
    assert route(0.9, threshold=0.95).route is Route.LLM
    assert route(0.95, threshold=0.95).route is Route.LLM  # boundary stays remote


# -- 3. analytic gradients vs central differences ----------------------------------

def _central_diff(fn, flat: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    out = np.zeros_like(flat)
    for i in range(flat.size):
        hi, lo = flat.copy(), flat.copy()
        hi[i] += eps
        lo[i] -= eps
        out[i] = (fn(hi) - fn(lo)) / (2 * eps)
    return out


def _max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-5)
    return float((np.abs(analytic - numeric) / denom).max())


def test_c03_gradients_match_finite_differences_on_50_instances():
    started = time.perf_counter()
    for case in range(50):
        rng = np.random.default_rng(1000 + case)
        dim = int(rng.integers(2, 21))     # d' <= 20
        n_fn = int(rng.integers(2, 9))     # N <= 8
        n_rec = int(rng.integers(1, 7))
        x = rng.normal(size=(n_rec, dim))
        if case % 2 == 0:
            y = rng.random(size=(n_rec, n_fn))
            y /= y.sum(axis=1, keepdims=True)
            w = rng.normal(scale=0.5, size=(n_fn, dim))
            b = rng.normal(scale=0.5, size=n_fn)
            _, gw, gb = head_loss_grad(w, b, x, y)
            analytic = np.concatenate([gw.ravel(), gb])
            flat = np.concatenate([w.ravel(), b])
            fn = lambda f: head_loss_grad(
                f[: n_fn * dim].reshape(n_fn, dim), f[n_fn * dim :], x, y
            )[0]
        else:
            y = (rng.random(n_rec) > 0.5).astype(float)
            w = rng.normal(scale=0.5, size=dim)
            b = float(rng.normal(scale=0.5))
            _, gw, gb = gate_loss_grad(w, b, x, y)
            analytic = np.concatenate([gw, [gb]])
            flat = np.concatenate([w, [b]])
            fn = lambda f: gate_loss_grad(f[:dim], float(f[dim]), x, y)[0]
        assert _max_rel_error(analytic, _central_diff(fn, flat)) < 1e-4
    assert time.perf_counter() - started < 10.0


# -- 4. metrics fixtures and independent recomputation ------------------------------

def _trial(rank: int, n: int = 10, day: int = 0, provenance: str = "local") -> Trial:
    fillers = [f"c{i}" for i in range(n - 1)]
    served = tuple(fillers[: rank - 1] + ["truth"] + fillers[rank - 1 :])
    return Trial(
        user_id="u1", day=day, timestamp=T0.isoformat(), query="q",
        truth="truth", served=served, provenance=provenance,
    )


def test_c04_metrics_match_hand_computation_and_recount():
    report = metrics([_trial(1), _trial(3), _trial(7)])
    assert abs(report.hit1 - 1 / 3) < 1e-12
    assert abs(report.hit5 - 2 / 3) < 1e-12
    assert abs(report.mrr - (1 + 1 / 3 + 1 / 7) / 3) < 1e-12

    rng = Random(404)
    for _ in range(100):
        n = rng.randint(1, 60)
        trials = [
            _trial(
                rng.randint(1, 12),
                n=12,
                day=rng.randint(0, 3),
                provenance=rng.choice(["local", "llm", "fallback_frequency"]),
            )
            for _ in range(n)
        ]
        got = metrics(trials)
        ranks = [t.rank for t in trials]
        assert abs(got.hit1 - math.fsum(r == 1 for r in ranks) / n) < 1e-12
        assert abs(got.hit5 - math.fsum(r <= 5 for r in ranks) / n) < 1e-12
        assert abs(got.mrr - math.fsum(1 / r for r in ranks) / n) < 1e-12
        local = math.fsum(t.provenance != "llm" for t in trials) / n
        assert abs(got.local_fraction - local) < 1e-12


# -- 5. learning curve on the reference stream --------------------------------------

def test_c05_learning_curve_improves_over_the_week(reference_run):
    days = reference_run.report.days
    first, last = days[0], days[-1]
    assert last.hit1 >= first.hit1 + 0.10
    assert last.local_fraction >= 0.50
    assert last.local_fraction >= first.local_fraction
    assert last.mean_latency_ms < first.mean_latency_ms
    assert reference_run.elapsed_seconds < 180.0


# -- 6. baseline ordering on the same run -------------------------------------------

def test_c06_full_system_beats_history_baselines(reference_run):
    full_hit1 = reference_run.report.hit1
    for name in ("mfu", "mru", "bayes"):
        baseline_report, _ = replay_baseline(reference_run.stream, name)
        assert full_hit1 >= baseline_report.hit1 + 0.05, name

    local_only = build_engine(
        reference_run.stream, "bert_only", stub_accuracy=0.65, stub_seed=1
    )
    local_report, _ = replay_engine(reference_run.stream, local_only)
    assert local_report.local_fraction == 1.0  # no LLM attached at all
    assert local_report.hit1 <= full_hit1


# -- 7. prompt and parse contracts ---------------------------------------------------

PARSE_POOL = [
    "maps-search", "maps-navigate", "notes-record", "notes-search",
    "mail-compose", "mail-search", "calendar-create", "music-play",
    "shopping-track", "files-open", "clock-alarm", "banking-transfer",
]

ADVERSARIAL_REPLIES = [
    "",
    "   ",
    "no idea",
    "???",
    "I cannot help with that request",
    "error: deadline exceeded",
    "1. 2. 3. 4. 5.",
    "the answer is unclear, sorry",
    "NULL",
    "try again later",
]


class GarbageLlm:
    def complete(self, prompt) -> LlmReply:
        return LlmReply(text="no idea", latency_ms=5.0)


def test_c07_prompt_block_count_and_parse_robustness():
    fns = (
        FunctionDescriptor("maps-search", "maps", "search"),
        FunctionDescriptor("notes-record", "notes", "record"),
    )
    store = UserStore("u1", fns, FeatureEncoder(EncoderConfig(dim=64)))
    for i in range(25):
        store.append(
            UsageRecord(
                user_id="u1", query=f"find place number {i}",
                context=ContextSnapshot.empty(T0 + timedelta(minutes=i)),
                label={"maps-search": 1.0}, chosen="maps-search",
                timestamp=T0 + timedelta(minutes=i),
            )
        )
    feature = store.encode("find place", ContextSnapshot.empty(T0 + timedelta(hours=1)))
    neighbors = store.top_k(feature, k=25)
    assert len(neighbors) >= 20
    prompt = build_function_prompt(
        "find place", ContextSnapshot.empty(T0), neighbors, list(fns), m=20
    )
    assert len(prompt.few_shot) == 20

    rng = Random(7)
    for _ in range(50):
        names = rng.sample(PARSE_POOL, rng.randint(1, 5))
        assert parse_ranking(render_ranking(names), PARSE_POOL).ranked == tuple(names)

    assert len(ADVERSARIAL_REPLIES) == 10
    for reply in ADVERSARIAL_REPLIES:
        with pytest.raises(Unparseable):
            parse_ranking(reply, PARSE_POOL)
    assert issubclass(Unparseable, LlmError)

    # end to end: an unparseable LLM answer degrades, never crashes
    engine = PortalEngine(
        config=PortalConfig(encoder=EncoderConfig(dim=64), warm_start=False),
        llm=GarbageLlm(),
    )
    result = engine.predict("u1", "sushi near me", ContextSnapshot.empty(T0))
    assert result.provenance == "fallback_frequency"


# -- 8. label fusion weights ---------------------------------------------------------

def test_c08_fusion_weights_are_exact():
    in_top = fuse_label("A", ["A", "B", "C", "D", "E"])
    assert in_top["B"] == 0.07 and in_top["C"] == 0.06
    assert in_top["D"] == 0.04 and in_top["E"] == 0.03
    assert in_top["A"] == 1.0 - math.fsum([0.07, 0.06, 0.04, 0.03])
    assert abs(in_top["A"] - 0.8) < 1e-15
    assert math.fsum(in_top.values()) == 1.0

    outside = fuse_label("X", ["B", "C", "D", "E", "F"])
    assert outside["B"] == 0.07 and outside["C"] == 0.06
    assert outside["D"] == 0.04 and outside["E"] == 0.03
    assert "F" not in outside
    assert abs(outside["X"] - 0.8) < 1e-15
    assert math.fsum(outside.values()) == 1.0


# -- 9. bootstrap arithmetic ----------------------------------------------------------

def test_c09_bootstrap_quotas_follow_largest_remainder():
    fns = (
        [FunctionDescriptor(f"s{i}-search", f"s{i}", "search") for i in range(8)]
        + [FunctionDescriptor(f"r{i}-record", f"r{i}", "record") for i in range(3)]
        + [FunctionDescriptor("t0-translate", "t0", "translate")]
    )
    out = bootstrap(fns, [], alpha=10)
    by_action: dict[str, int] = {}
    lookup = {fn.id: fn.action for fn in fns}
    for rec in out:
        by_action[lookup[rec.chosen]] = by_action.get(lookup[rec.chosen], 0) + 1
    assert by_action == {"search": 80, "record": 30, "translate": 10}
    assert len(out) == 120

    rng = Random(11)
    actions = ("search", "record", "translate", "compose")
    for case in range(200):
        n_fn = rng.randint(1, 25)
        collection = [
            FunctionDescriptor(f"a{case}x{i}-{act}", f"a{case}x{i}", act)
            for i, act in enumerate(rng.choice(actions) for _ in range(n_fn))
        ]
        alpha = rng.randint(1, 12)
        assert len(bootstrap(collection, [], alpha=alpha)) == alpha * n_fn


# -- 10. persistence and replay determinism -------------------------------------------

PROBE_FUNCTIONS = (
    FunctionDescriptor("maps-search", "maps", "search"),
    FunctionDescriptor("maps-navigate", "maps", "navigate"),
    FunctionDescriptor("notes-record", "notes", "record"),
    FunctionDescriptor("mail-compose", "mail", "compose"),
)

TRAINING_QUERIES = [
    ("sushi near me", "maps-search"),
    ("gas station open now", "maps-search"),
    ("route to the airport", "maps-navigate"),
    ("navigate home", "maps-navigate"),
    ("standup notes tuesday", "notes-record"),
    ("idea for the workshop", "notes-record"),
    ("draft reply to finance", "mail-compose"),
    ("send carlos the summary", "mail-compose"),
]

PROBE_QUERIES = [q for q, _ in TRAINING_QUERIES] + [
    "coffee place downtown", "trail parking", "directions to the venue",
    "grocery list monday", "follow up with legal", "sushi tonight",
    "note about the retro", "email the deck", "highway traffic",
    "pin the campsite", "summarize the call", "where to park",
]


def _probe_engine(data_dir: str) -> PortalEngine:
    config = PortalConfig(
        encoder=EncoderConfig(dim=64), warm_start=False, data_dir=data_dir
    )
    script = dict(TRAINING_QUERIES)
    return PortalEngine(
        config=config,
        llm=ScriptedStubLlm(accuracy=0.65, seed=7, script=script),
        default_collection=PROBE_FUNCTIONS,
    )


def _probe_predictions(engine: PortalEngine) -> list[tuple]:
    out = []
    for i, query in enumerate(PROBE_QUERIES):
        snapshot = ContextSnapshot(
            now=T0 + timedelta(hours=2, minutes=i),
            launches=(AppLaunch("maps", T0 + timedelta(hours=2, minutes=i - 2)),),
        )
        r = engine.predict("u1", query, snapshot)
        out.append(
            (r.full_ranking, tuple(e.score for e in r.entries),
             r.provenance, r.confidence)
        )
    return out


def test_c10_snapshots_and_replays_are_bit_stable(tmp_path, reference_run):
    assert len(PROBE_QUERIES) == 20
    data_dir = str(tmp_path / "stores")
    engine_a = _probe_engine(data_dir)
    for i, (query, truth) in enumerate(TRAINING_QUERIES):
        snapshot = ContextSnapshot.empty(T0 + timedelta(minutes=10 * i))
        result = engine_a.predict("u1", query, snapshot)
        engine_a.select("u1", result.request_id, truth)
    engine_a.retrain_user("u1")
    engine_a.save_all()

    engine_b = _probe_engine(data_dir)
    engine_b.load_user("u1")

    # identical fresh stubs on both sides keep the RNG draws aligned
    script = dict(TRAINING_QUERIES)
    engine_a.llm = ScriptedStubLlm(accuracy=0.65, seed=99, script=script)
    engine_b.llm = ScriptedStubLlm(accuracy=0.65, seed=99, script=script)
    assert _probe_predictions(engine_a) == _probe_predictions(engine_b)

    # second full replay of the reference stream, same seeds, same log bytes
    engine = build_engine(reference_run.stream, "full", stub_accuracy=0.65, stub_seed=1)
    _, second = replay_engine(reference_run.stream, engine)
    first_path = tmp_path / "first.jsonl"
    second_path = tmp_path / "second.jsonl"
    write_trials(reference_run.trials, str(first_path))
    write_trials(second, str(second_path))
    assert first_path.read_bytes() == second_path.read_bytes()


# -- 11. stream context calibration ----------------------------------------------------

def test_c11_target_app_lands_in_context_at_the_tuned_rate():
    stream = generate_stream(StreamConfig(n_days=84))  # 10,080 trials
    assert len(stream.trials) >= 10_000
    app_of = {
        uid: {fn.id: fn.app for fn in fns}
        for uid, fns in stream.collections.items()
    }
    hits = 0
    for t in stream.trials:
        target_app = app_of[t.user_id][t.truth]
        hits += any(
            launch.app == target_app
            and 0 <= (t.context.now - launch.timestamp).total_seconds() <= 60.0
            for launch in t.context.launches
        )
    rate = hits / len(stream.trials)
    assert abs(rate - 0.3362) <= 0.02
