"""The serving engine: gate, retrieve, integrate, route, fall back, learn.

One PortalEngine owns every user's store plus the shared encoder and LLM
client.  predict() walks the pipeline and always returns a ranking, no
matter which stages fail; select() turns the user's choice into a
training record that is retrievable immediately.

Request ids are a plain counter, and record timestamps come from the
request's own context clock, so a replayed stream reproduces the exact
same stored state and served rankings run after run.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Sequence

from .config import PortalConfig
from .defaults import DEFAULT_FUNCTIONS
from .encoder import ContextSnapshot, FeatureEncoder, chat_gate
from .errors import (
    DuplicateFunction,
    DuplicateSelection,
    EmptyInput,
    InvalidRequest,
    LastFunction,
    LlmError,
    NoNeighbors,
    AllZeroSimilarity,
    UnknownFunction,
    UnknownRequest,
    UnknownUser,
    Unparseable,
)
from .integrator import Route, decide, integrate, rank_scores
from .llm_bridge import (
    CompletionClient,
    HttpLlmClient,
    build_contact_prompt,
    build_function_prompt,
    generate_synthetic,
    parse_ranking,
)
from .memory import (
    FunctionDescriptor,
    Neighbor,
    UsageRecord,
    UserStore,
    bootstrap,
    load_pool,
    packaged_pool,
)
from .trainer import TrainReport, fuse_label, retrain_cycle


@dataclass(frozen=True)
class OverrideFilter:
    raw: str
    matched: tuple[str, ...]


def parse_override(text: str) -> tuple[str, str | None]:
    """Split "<input> *<filter>" at the last asterisk.

    Text before the split is the real input (an expression like "3*4"
    survives as long as a later asterisk starts the filter); no asterisk
    means no filter.
    """
    pos = text.rfind("*")
    if pos < 0:
        return text.strip(), None
    return text[:pos].strip(), text[pos + 1 :].strip()


def match_filter(
    filter_text: str, collection: Sequence[FunctionDescriptor]
) -> OverrideFilter:
    """Case-insensitive substring match over app, action, and description."""
    needle = filter_text.lower()
    matched = []
    for fn in collection:
        hay = [fn.app.lower(), fn.action.lower()]
        if fn.description:
            hay.append(fn.description.lower())
        if needle and any(needle in h for h in hay):
            matched.append(fn.id)
    return OverrideFilter(raw=filter_text, matched=tuple(matched))


@dataclass
class PredictionEntry:
    function_id: str
    score: float
    rank: int


@dataclass
class PredictionResult:
    request_id: str
    user_id: str
    entries: list[PredictionEntry]
    full_ranking: tuple[str, ...]
    provenance: str  # local | llm | fallback_frequency
    confidence: float
    latency_ms: float
    gate_probability: float
    chat_side: bool
    llm_ranking: tuple[str, ...] | None = None


@dataclass
class _ServedRequest:
    user_id: str
    query: str
    context: ContextSnapshot
    candidate_ids: tuple[str, ...]
    llm_ranking: tuple[str, ...] | None
    chat_side: bool
    selected: bool = False


class Telemetry:
    """Ring buffer of pipeline events, optionally mirrored to a JSONL file."""

    def __init__(self, path: str | None = None, capacity: int = 2000):
        self.path = path
        self.events: deque[dict] = deque(maxlen=capacity)
        self._lock = threading.Lock()

    def log(self, **event) -> None:
        event.setdefault("ts", time.time())
        with self._lock:
            self.events.append(event)
            if self.path:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(event, ensure_ascii=False) + "\n")

    def recent(self, n: int = 100) -> list[dict]:
        with self._lock:
            return list(self.events)[-n:]


class ExecutionAdapter:
    """Stand-in for on-device execution: records what would have run."""

    def __init__(self):
        self.executed: list[tuple[str, str]] = []

    def execute(self, fn: FunctionDescriptor, text: str) -> str:
        self.executed.append((fn.id, text))
        return f"would execute {fn.display_name} with input {text!r}"


class PortalEngine:
    def __init__(
        self,
        config: PortalConfig | None = None,
        llm: CompletionClient | None = None,
        default_collection: Sequence[FunctionDescriptor] | None = None,
        global_pool: Sequence[UsageRecord] | None = None,
    ):
        self.config = config or PortalConfig()
        self.encoder = FeatureEncoder(
            self.config.encoder,
            self.config.context,
            zero_context=self.config.encoder.zero_context,
        )
        self.telemetry = Telemetry(self.config.telemetry_path)
        self.execution = ExecutionAdapter()
        self.default_collection = tuple(
            default_collection if default_collection is not None else DEFAULT_FUNCTIONS
        )
        if llm is not None:
            self.llm: CompletionClient | None = llm
        elif self.config.llm.endpoint:
            self.llm = HttpLlmClient(self.config.llm)
        else:
            self.llm = None
        self.stores: dict[str, UserStore] = {}
        self.requests: dict[str, _ServedRequest] = {}
        self.satisfaction: list[dict] = []
        self._request_counter = 0
        self._pool = list(global_pool) if global_pool is not None else None
        self._few_shot_rng = random.Random(7)
        self._lock = threading.Lock()

    # -- users ---------------------------------------------------------------

    def _global_pool(self) -> list[UsageRecord]:
        if self._pool is None:
            path = self.config.bootstrap_pool
            if path:
                self._pool = load_pool(path) if os.path.exists(path) else []
            else:
                self._pool = packaged_pool()
        return self._pool

    def provision_user(
        self,
        user_id: str,
        collection: Sequence[FunctionDescriptor] | None = None,
        warm_start: bool | None = None,
    ) -> UserStore:
        """Create a store, seed it from the shared pool, fit initial params."""
        if user_id in self.stores:
            return self.stores[user_id]
        if warm_start is None:
            warm_start = self.config.warm_start
        functions = tuple(collection if collection is not None else self.default_collection)
        store = UserStore(user_id, functions, self.encoder, self.config.retrieval)
        if warm_start:
            synth = (
                (lambda fn, n: generate_synthetic(fn, n, self.llm))
                if self.llm is not None
                else None
            )
            seeds = bootstrap(
                list(functions),
                self._global_pool(),
                alpha=self.config.bootstrap_alpha,
                synthesize=synth,
            )
            for rec in seeds:
                store.append(rec)
            if store.records:
                retrain_cycle(
                    store,
                    lr=self.config.trainer.lr,
                    max_epochs=self.config.trainer.max_epochs,
                    tol=self.config.trainer.tol,
                )
        self.stores[user_id] = store
        return store

    def _store(self, user_id: str) -> UserStore:
        store = self.stores.get(user_id)
        if store is None:
            if not self.config.auto_provision:
                raise UnknownUser(f"no such user {user_id!r}")
            store = self.provision_user(user_id)
        return store

    # -- prediction ------------------------------------------------------------

    def _next_request_id(self) -> str:
        with self._lock:
            self._request_counter += 1
            return f"r{self._request_counter:08d}"

    def predict(
        self, user_id: str, text: str, context: ContextSnapshot
    ) -> PredictionResult:
        started = time.perf_counter()
        store = self._store(user_id)
        request_id = self._next_request_id()

        clean_text, filter_text = parse_override(text)
        override = (
            match_filter(filter_text, list(store.collection.values()))
            if filter_text
            else None
        )
        if filter_text is not None and (override is None or not override.matched):
            # the tail matched no function, so the asterisk was literal
            # input ("1299*0.85"), not a filter
            override = None
            clean_text = text.strip()
        if not clean_text and override is None:
            raise InvalidRequest("input is empty and no override filter matched")

        if not clean_text:
            return self._serve_filter_only(store, request_id, override, context, started)

        feature = store.encode(clean_text, context)
        gate_prob = chat_gate(feature, store.gate_params)
        has_chat = any(fn.is_chat for fn in store.collection.values())
        chat_side = gate_prob >= 0.5 and has_chat

        if override is not None:
            candidate_ids = override.matched
        else:
            candidate_ids = tuple(
                fn.id for fn in store.collection.values() if fn.is_chat == chat_side
            )
            if not candidate_ids:
                candidate_ids = tuple(store.collection.keys())

        neighbors = store.top_k(
            feature, k=self.config.retrieval.k, chat_filter=chat_side
        )
        decision = decide(
            neighbors, k=self.config.retrieval.k, threshold=self.config.retrieval.threshold
        )
        self.telemetry.log(
            stage="route", user=user_id, request_id=request_id,
            confidence=decision.confidence, route=decision.route.value,
            gate=gate_prob, neighbors=len(neighbors),
        )

        llm_ranking: tuple[str, ...] | None = None
        provenance = "local"
        llm_latency = 0.0
        if decision.route is Route.LLM and self.llm is not None:
            try:
                llm_ranking, llm_latency = self._ask_llm(
                    store, clean_text, context, feature,
                    neighbors, candidate_ids, chat_side,
                )
                provenance = "llm"
            except LlmError as exc:
                self.telemetry.log(
                    stage="llm", user=user_id, request_id=request_id,
                    error=type(exc).__name__,
                )

        if provenance == "llm" and llm_ranking:
            scores = self._positional_scores(llm_ranking)
        else:
            scores = self._local_scores(neighbors, candidate_ids)
            if scores is None:
                provenance = "fallback_frequency"
                scores = self._frequency_scores(store, candidate_ids)
            else:
                provenance = "local"

        full_ranking = self._full_ranking(store, scores, candidate_ids)
        entries = [
            PredictionEntry(function_id=fid, score=scores.get(fid, 0.0), rank=i + 1)
            for i, fid in enumerate(full_ranking[:5])
        ]
        latency_ms = (time.perf_counter() - started) * 1000.0 + llm_latency
        result = PredictionResult(
            request_id=request_id,
            user_id=user_id,
            entries=entries,
            full_ranking=full_ranking,
            provenance=provenance,
            confidence=decision.confidence,
            latency_ms=latency_ms,
            gate_probability=gate_prob,
            chat_side=chat_side,
            llm_ranking=llm_ranking,
        )
        self.requests[request_id] = _ServedRequest(
            user_id=user_id,
            query=clean_text,
            context=context,
            candidate_ids=candidate_ids,
            llm_ranking=llm_ranking,
            chat_side=chat_side,
        )
        self.telemetry.log(
            stage="serve", user=user_id, request_id=request_id,
            provenance=provenance, confidence=decision.confidence,
            latency_ms=latency_ms,
        )
        return result

    def _serve_filter_only(
        self,
        store: UserStore,
        request_id: str,
        override: OverrideFilter,
        context: ContextSnapshot,
        started: float,
    ) -> PredictionResult:
        scores = self._frequency_scores(store, override.matched)
        full_ranking = self._full_ranking(store, scores, override.matched)
        entries = [
            PredictionEntry(function_id=fid, score=scores.get(fid, 0.0), rank=i + 1)
            for i, fid in enumerate(full_ranking[:5])
        ]
        result = PredictionResult(
            request_id=request_id,
            user_id=store.user_id,
            entries=entries,
            full_ranking=full_ranking,
            provenance="fallback_frequency",
            confidence=0.0,
            latency_ms=(time.perf_counter() - started) * 1000.0,
            gate_probability=0.0,
            chat_side=False,
        )
        self.requests[request_id] = _ServedRequest(
            user_id=store.user_id,
            query="",
            context=context,
            candidate_ids=override.matched,
            llm_ranking=None,
            chat_side=False,
        )
        self.telemetry.log(
            stage="serve", user=store.user_id, request_id=request_id,
            provenance=result.provenance, confidence=0.0,
            latency_ms=result.latency_ms,
        )
        return result

    def _ask_llm(
        self,
        store: UserStore,
        text: str,
        context: ContextSnapshot,
        feature,
        neighbors: list[Neighbor],
        candidate_ids: tuple[str, ...],
        chat_side: bool,
    ) -> tuple[tuple[str, ...], float]:
        candidates = [store.collection[fid] for fid in candidate_ids if fid in store.collection]
        if chat_side and all(fn.is_chat for fn in candidates):
            return self._ask_llm_contacts(store, text, candidates)
        m = self.config.llm.few_shot_m
        if self.config.llm.random_few_shot:
            # diagnostics mode: examples sampled blind instead of by similarity
            side = [r for r in store.records if r.is_chat == chat_side]
            picks = (
                self._few_shot_rng.sample(side, m) if len(side) > m else list(side)
            )
            prompt_neighbors = [Neighbor(record=r, similarity=0.0) for r in picks]
        else:
            # prompt examples draw from a wider similarity pool than the top-K
            prompt_neighbors = neighbors
            if len(neighbors) < m and store.records:
                prompt_neighbors = store.top_k(
                    feature, k=m, chat_filter=chat_side
                )
        prompt = build_function_prompt(
            text,
            context,
            prompt_neighbors,
            candidates,
            m=self.config.llm.few_shot_m,
            window_seconds=self.config.context.window_seconds,
        )
        reply = self.llm.complete(prompt)
        ranking = parse_ranking(reply.text, list(prompt.candidate_options))
        return ranking.ranked, reply.latency_ms

    def _ask_llm_contacts(
        self, store: UserStore, text: str, candidates: list[FunctionDescriptor]
    ) -> tuple[tuple[str, ...], float]:
        """Chat side: rank contacts over their histories, then map each
        contact back to that contact's most-used chat function."""
        contacts: list[str] = []
        for fn in candidates:
            if fn.contact and fn.contact not in contacts:
                contacts.append(fn.contact)
        fn_by_contact: dict[str, list[FunctionDescriptor]] = {}
        for fn in candidates:
            if fn.contact:
                fn_by_contact.setdefault(fn.contact, []).append(fn)
        counts: dict[str, int] = {}
        histories: dict[str, list[str]] = {c: [] for c in contacts}
        for rec in sorted(store.records, key=lambda r: r.timestamp):
            if not rec.is_chat:
                continue
            counts[rec.chosen] = counts.get(rec.chosen, 0) + 1
            fn = store.collection.get(rec.chosen)
            if fn is not None and fn.contact in histories:
                histories[fn.contact].append(rec.query)
        prompt = build_contact_prompt(
            text, contacts, histories, budget=self.config.llm.chat_history_budget
        )
        reply = self.llm.complete(prompt)
        ranking = parse_ranking(reply.text, contacts)
        mapped: list[str] = []
        for contact in ranking.ranked:
            fns = fn_by_contact.get(contact, [])
            if not fns:
                continue
            best = max(enumerate(fns), key=lambda t: (counts.get(t[1].id, 0), -t[0]))
            if best[1].id not in mapped:
                mapped.append(best[1].id)
        if not mapped:
            raise Unparseable("contact ranking mapped to no known chat function")
        return tuple(mapped), reply.latency_ms

    @staticmethod
    def _positional_scores(ranking: Sequence[str]) -> dict[str, float]:
        # 5..1 positional weights, normalized, so local and llm scores
        # live on the same scale
        weights = [5.0, 4.0, 3.0, 2.0, 1.0][: len(ranking)]
        total = sum(weights)
        return {fid: w / total for fid, w in zip(ranking, weights)}

    def _local_scores(
        self, neighbors: list[Neighbor], candidate_ids: tuple[str, ...]
    ) -> dict[str, float] | None:
        if not neighbors:
            return None
        try:
            raw = integrate(neighbors)
        except (NoNeighbors, AllZeroSimilarity):
            return None
        allowed = set(candidate_ids)
        scores = {fid: v for fid, v in raw.items() if fid in allowed}
        return scores or None

    def _frequency_scores(
        self, store: UserStore, candidate_ids: tuple[str, ...]
    ) -> dict[str, float]:
        counts = {fid: 0 for fid in candidate_ids}
        for rec in store.records:
            if rec.chosen in counts:
                counts[rec.chosen] += 1
        total = sum(counts.values())
        if total == 0:
            # nothing used yet: collection order is the popularity prior
            order = {fid: i for i, fid in enumerate(store.collection.keys())}
            n = len(candidate_ids)
            return {
                fid: (n - order.get(fid, n)) / max(n, 1) for fid in candidate_ids
            }
        return {fid: c / total for fid, c in counts.items()}

    def _full_ranking(
        self,
        store: UserStore,
        scores: dict[str, float],
        candidate_ids: tuple[str, ...],
    ) -> tuple[str, ...]:
        last_used: dict[str, float] = {}
        for rec in store.records:
            ts = rec.timestamp.timestamp()
            if ts > last_used.get(rec.chosen, float("-inf")):
                last_used[rec.chosen] = ts
        padded = {fid: scores.get(fid, 0.0) for fid in candidate_ids}
        return tuple(fid for fid, _ in rank_scores(padded, last_used))

    # -- feedback ---------------------------------------------------------------

    def select(
        self,
        user_id: str,
        request_id: str,
        chosen: str,
        satisfaction: int | None = None,
    ) -> dict:
        served = self.requests.get(request_id)
        if served is None or served.user_id != user_id:
            raise UnknownRequest(f"no served prediction {request_id!r} for {user_id!r}")
        if served.selected:
            raise DuplicateSelection(f"{request_id!r} already has a selection")
        store = self._store(user_id)
        if chosen not in served.candidate_ids or chosen not in store.collection:
            raise UnknownFunction(f"{chosen!r} was not a candidate of {request_id!r}")
        if satisfaction is not None and not (1 <= satisfaction <= 5):
            raise InvalidRequest(f"satisfaction must be 1..5, got {satisfaction}")

        served.selected = True
        fn = store.collection[chosen]
        recorded = False
        if served.query:
            label = fuse_label(
                chosen, served.llm_ranking, known=set(store.collection.keys())
            )
            record = UsageRecord(
                user_id=user_id,
                query=served.query,
                context=served.context,
                label=label,
                chosen=chosen,
                timestamp=served.context.now,
                origin="live",
                is_chat=fn.is_chat,
            )
            store.append(record)
            recorded = True
        if satisfaction is not None:
            self.satisfaction.append(
                {"user": user_id, "request_id": request_id,
                 "function": chosen, "score": satisfaction}
            )
        echo = self.execution.execute(fn, served.query)
        self.telemetry.log(
            stage="select", user=user_id, request_id=request_id,
            function=chosen, recorded=recorded,
        )
        return {"recorded": recorded, "execution": echo}

    # -- collection management ----------------------------------------------------

    def list_functions(self, user_id: str) -> list[FunctionDescriptor]:
        return list(self._store(user_id).collection.values())

    def add_function(self, user_id: str, fn: FunctionDescriptor) -> list[FunctionDescriptor]:
        store = self._store(user_id)
        if fn.id in store.collection:
            raise DuplicateFunction(f"{fn.id!r} is already in the collection")
        store.collection[fn.id] = fn
        store.grow_vocab((fn.app,))
        if store.head_params is not None:
            store.head_params = store.head_params.with_function(fn.id)
        return list(store.collection.values())

    def remove_function(self, user_id: str, fid: str) -> list[FunctionDescriptor]:
        store = self._store(user_id)
        if fid not in store.collection:
            raise UnknownFunction(f"{fid!r} is not in the collection")
        if len(store.collection) == 1:
            raise LastFunction("cannot remove the only remaining function")
        del store.collection[fid]
        if store.head_params is not None:
            store.head_params = store.head_params.without_function(fid)
        return list(store.collection.values())

    # -- training -------------------------------------------------------------------

    def retrain_user(self, user_id: str) -> TrainReport:
        store = self._store(user_id)
        report = retrain_cycle(
            store,
            lr=self.config.trainer.lr,
            max_epochs=self.config.trainer.max_epochs,
            tol=self.config.trainer.tol,
        )
        self.telemetry.log(
            stage="retrain", user=user_id, epochs=report.epochs,
            final_loss=report.final_loss,
        )
        return report

    def retrain_all(self) -> dict[str, TrainReport]:
        return {uid: self.retrain_user(uid) for uid in list(self.stores.keys())}

    # -- persistence ------------------------------------------------------------------

    def save_all(self, root: str | None = None) -> None:
        root = root or self.config.data_dir
        if not root:
            raise ValueError("no data_dir configured")
        for uid, store in self.stores.items():
            store.save(os.path.join(root, uid))

    def load_user(self, user_id: str, root: str | None = None) -> UserStore:
        root = root or self.config.data_dir
        if not root:
            raise ValueError("no data_dir configured")
        store = UserStore.load(
            os.path.join(root, user_id), self.encoder, self.config.retrieval
        )
        self.stores[user_id] = store
        return store
