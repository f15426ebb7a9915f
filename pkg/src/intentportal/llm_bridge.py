"""Prompt construction, LLM transport, ranking parse, and the test stub.

Prompts are plain strings built from four parts: a task description, the
candidate names (no descriptions; shorter prompts rank better), a block
of past examples ordered most-similar-first, and the new input with the
ranking instruction.  One prompt, one completion, no multi-step chains.

Every failure a live endpoint can produce maps to a typed LlmError so
the portal can always fall back to the local prediction.
"""

from __future__ import annotations

import json
import math
import os
import random
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime
from typing import Protocol, Sequence

import httpx

from .config import LlmConfig
from .encoder import ContextSnapshot
from .errors import (
    LlmError,
    LlmTimeout,
    NoCandidates,
    NoContacts,
    RateLimited,
    TransportError,
    Unparseable,
)
from .memory import FunctionDescriptor, Neighbor, UsageRecord

WEEKDAYS = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday",
            "Saturday", "Sunday")

FUNCTION_TASK = (
    "A user typed raw text on their phone. The text is exactly what they "
    "would enter into the target app's text box, not a description of what "
    "they want. Decide which function the text is meant for."
)
CONTACT_TASK = (
    "A user typed a chat message on their phone. Decide which contact the "
    "message is meant for, based on their chat histories."
)
RANK_INSTRUCTION = (
    "Rank the top five candidates in order of likelihood, one per line, "
    "numbered, most likely first. Answer with names from the candidate "
    "list only."
)


def _render_clock(now: datetime) -> str:
    return f"{WEEKDAYS[now.weekday()]} {now.hour:02d}:{now.minute:02d}"


def _render_apps(context: ContextSnapshot, window_seconds: float = 600.0) -> str:
    entries = []
    for launch in sorted(context.launches, key=lambda l: l.timestamp, reverse=True):
        age = (context.now - launch.timestamp).total_seconds()
        if 0 <= age <= window_seconds:
            entries.append(f"{launch.app} ({int(round(age))}s ago)")
    return ", ".join(entries) if entries else "none"


@dataclass(frozen=True)
class FewShotBlock:
    input: str
    app_usage: str
    time: str
    output: str

    def render(self) -> str:
        return (
            f"Input: {self.input}\n"
            f"Recent apps: {self.app_usage}\n"
            f"Time: {self.time}\n"
            f"Output: {self.output}"
        )


@dataclass(frozen=True)
class FunctionPrompt:
    task_description: str
    candidate_options: tuple[str, ...]
    few_shot: tuple[FewShotBlock, ...]
    input_query: str  # rendered final section, instruction included
    query: str        # the raw text, for test doubles

    def render(self) -> str:
        parts = [self.task_description, ""]
        parts.append("Candidate functions:")
        parts.extend(f"- {name}" for name in self.candidate_options)
        if self.few_shot:
            parts.append("")
            parts.append("Past examples, most similar first:")
            for block in self.few_shot:
                parts.append("")
                parts.append(block.render())
        parts.append("")
        parts.append(self.input_query)
        return "\n".join(parts)


@dataclass(frozen=True)
class ContactPrompt:
    task_description: str
    contacts: tuple[str, ...]
    chat_histories: tuple[tuple[str, tuple[str, ...]], ...]
    input_query: str
    query: str

    def render(self) -> str:
        parts = [self.task_description, ""]
        parts.append("Contacts:")
        parts.extend(f"- {name}" for name in self.contacts)
        for name, history in self.chat_histories:
            parts.append("")
            parts.append(f"Chat history with {name} (most recent last):")
            if history:
                parts.extend(f"- {msg}" for msg in history)
            else:
                parts.append("(no history)")
        parts.append("")
        parts.append(self.input_query)
        return "\n".join(parts)


@dataclass(frozen=True)
class LlmRanking:
    ranked: tuple[str, ...]


def build_function_prompt(
    query: str,
    context: ContextSnapshot,
    neighbors: Sequence[Neighbor],
    candidates: Sequence[FunctionDescriptor],
    m: int = 20,
    window_seconds: float = 600.0,
) -> FunctionPrompt:
    """Four-part prompt over the given candidates.

    neighbors must arrive sorted by similarity descending; the first m
    become few-shot blocks.
    """
    if not candidates:
        raise NoCandidates("cannot build a prompt with no candidate functions")
    blocks = []
    for neighbor in neighbors[:m]:
        rec = neighbor.record
        blocks.append(
            FewShotBlock(
                input=rec.query,
                app_usage=_render_apps(rec.context, window_seconds),
                time=_render_clock(rec.context.now),
                output=rec.chosen,
            )
        )
    input_query = (
        "Now the new input.\n"
        f"Input: {query}\n"
        f"Recent apps: {_render_apps(context, window_seconds)}\n"
        f"Time: {_render_clock(context.now)}\n"
        f"{RANK_INSTRUCTION}"
    )
    return FunctionPrompt(
        task_description=FUNCTION_TASK,
        candidate_options=tuple(fn.id for fn in candidates),
        few_shot=tuple(blocks),
        input_query=input_query,
        query=query,
    )


def build_contact_prompt(
    query: str,
    contacts: Sequence[str],
    histories: dict[str, Sequence[str]],
    budget: int = 200,
) -> ContactPrompt:
    """Contact-ranking prompt; per-contact history capped at budget/n."""
    if not contacts:
        raise NoContacts("cannot build a contact prompt with no contacts")
    cap = budget // len(contacts)
    trimmed = []
    for name in contacts:
        history = list(histories.get(name, ()))
        kept = tuple(history[-cap:]) if cap > 0 else ()
        trimmed.append((name, kept))
    input_query = (
        f"Input: {query}\n"
        f"{RANK_INSTRUCTION}"
    )
    return ContactPrompt(
        task_description=CONTACT_TASK,
        contacts=tuple(contacts),
        chat_histories=tuple(trimmed),
        input_query=input_query,
        query=query,
    )


def render_ranking(names: Sequence[str]) -> str:
    return "\n".join(f"{i + 1}. {name}" for i, name in enumerate(names))


def _squash(text: str) -> tuple[str, list[int]]:
    # lowercase alphanumerics with a map back to source offsets
    chars: list[str] = []
    offsets: list[int] = []
    for i, ch in enumerate(text):
        if ch.isalnum():
            chars.append(ch.lower())
            offsets.append(i)
    return "".join(chars), offsets


def parse_ranking(raw: str, candidates: Sequence[str]) -> LlmRanking:
    """Recover a ranked candidate list from free-form model text.

    Exact name matches win; the fallback ignores case and punctuation.
    Order follows position in the text; names the model invented are
    dropped; an answer mentioning no candidate at all is Unparseable.
    """
    squashed_raw, offsets = _squash(raw)
    matches: list[tuple[int, int, str]] = []  # (start, end, candidate)
    for cand in candidates:
        pos = raw.find(cand)
        if pos >= 0:
            matches.append((pos, pos + len(cand), cand))
            continue
        squashed_cand, _ = _squash(cand)
        if not squashed_cand:
            continue
        spos = squashed_raw.find(squashed_cand)
        if spos >= 0:
            start = offsets[spos]
            end = offsets[spos + len(squashed_cand) - 1] + 1
            matches.append((start, end, cand))
    # a name that is a fragment of a longer matched name is noise, not a vote
    kept = [
        m
        for m in matches
        if not any(
            o is not m and o[0] <= m[0] and m[1] <= o[1] and (o[0], o[1]) != (m[0], m[1])
            for o in matches
        )
    ]
    kept.sort(key=lambda m: (m[0], -(m[1] - m[0])))
    ranked: list[str] = []
    for _, _, cand in kept:
        if cand not in ranked:
            ranked.append(cand)
        if len(ranked) == 5:
            break
    if not ranked:
        raise Unparseable(f"no candidate names found in: {raw[:120]!r}")
    return LlmRanking(ranked=tuple(ranked))


@dataclass(frozen=True)
class LlmReply:
    text: str
    latency_ms: float


class CompletionClient(Protocol):
    def complete(self, prompt) -> LlmReply: ...


class AuditLog:
    """Append-only JSONL trace of LLM traffic.  Credentials never enter."""

    def __init__(self, path: str | None):
        self.path = path
        self._lock = threading.Lock()

    def write(self, event: dict) -> None:
        if not self.path:
            return
        line = json.dumps(event, ensure_ascii=False)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


class HttpLlmClient:
    """OpenAI-style chat-completion caller with typed failure mapping."""

    def __init__(self, config: LlmConfig, transport: httpx.BaseTransport | None = None):
        if not config.endpoint:
            raise ValueError("LLM endpoint is not configured")
        self.config = config
        self.audit = AuditLog(config.audit_log)
        self._gate = threading.BoundedSemaphore(config.max_concurrent)
        self._client = httpx.Client(
            timeout=config.timeout_ms / 1000.0, transport=transport
        )

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt) -> LlmReply:
        text = prompt.render() if hasattr(prompt, "render") else str(prompt)
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": text}],
            "temperature": 0,
        }
        started = time.perf_counter()
        self.audit.write(
            {"ts": time.time(), "kind": "request", "model": self.config.model,
             "chars": len(text), "prompt": text}
        )
        try:
            with self._gate:
                response = self._client.post(
                    self.config.endpoint, json=body, headers=self._headers()
                )
        except httpx.TimeoutException as exc:
            self._audit_error("timeout", started, exc)
            raise LlmTimeout(f"no reply within {self.config.timeout_ms} ms") from exc
        except httpx.HTTPError as exc:
            self._audit_error("transport", started, exc)
            raise TransportError(str(exc)) from exc
        latency_ms = (time.perf_counter() - started) * 1000.0
        if response.status_code == 429:
            self._audit_error("rate_limited", started, None)
            raise RateLimited("endpoint returned 429")
        if response.status_code != 200:
            self._audit_error(f"http_{response.status_code}", started, None)
            raise TransportError(f"endpoint returned {response.status_code}")
        try:
            answer = response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            self._audit_error("bad_body", started, exc)
            raise TransportError(f"malformed completion body: {exc}") from exc
        self.audit.write(
            {"ts": time.time(), "kind": "response", "model": self.config.model,
             "latency_ms": latency_ms, "chars": len(answer), "text": answer}
        )
        return LlmReply(text=answer, latency_ms=latency_ms)

    def _audit_error(self, kind: str, started: float, exc: Exception | None) -> None:
        self.audit.write(
            {"ts": time.time(), "kind": "error", "error": kind,
             "latency_ms": (time.perf_counter() - started) * 1000.0,
             "detail": str(exc) if exc else ""}
        )


class ScriptedStubLlm:
    """Deterministic stand-in for a live endpoint.

    Knows the true answer for scripted queries and gets it right with
    probability `accuracy`; otherwise a random wrong candidate leads.
    Latency is simulated, not slept, so replays are fast and the latency
    numbers are stable.
    """

    def __init__(
        self,
        accuracy: float = 1.0,
        seed: int = 0,
        script: dict[str, str] | None = None,
        simulated_latency_ms: float = 200.0,
    ):
        self.accuracy = accuracy
        self.script = dict(script or {})
        self.rng = random.Random(seed)
        self.simulated_latency_ms = simulated_latency_ms
        self.calls: list[str] = []

    def teach(self, query: str, truth: str) -> None:
        self.script[query] = truth

    def _truth_for(self, query: str) -> str | None:
        if query in self.script:
            return self.script[query]
        for pattern, truth in self.script.items():
            if pattern and pattern in query:
                return truth
        return None

    def complete(self, prompt) -> LlmReply:
        if isinstance(prompt, FunctionPrompt):
            pool = list(prompt.candidate_options)
        elif isinstance(prompt, ContactPrompt):
            pool = list(prompt.contacts)
        else:
            raise TypeError(f"stub cannot answer a {type(prompt).__name__}")
        self.calls.append(prompt.query)
        truth = self._truth_for(prompt.query)
        ranked = self._rank(pool, truth)
        return LlmReply(text=render_ranking(ranked), latency_ms=self.simulated_latency_ms)

    def _rank(self, pool: list[str], truth: str | None) -> list[str]:
        if truth is None or truth not in pool:
            picks = list(pool)
            self.rng.shuffle(picks)
            return picks[:5]
        correct = self.rng.random() < self.accuracy
        others = [c for c in pool if c != truth]
        self.rng.shuffle(others)
        if correct or not others:
            ranked = [truth] + others
        else:
            ranked = [others[0]] + self._weave(others[1:], truth)
        return ranked[:5]

    def _weave(self, rest: list[str], truth: str) -> list[str]:
        slot = self.rng.randrange(len(rest) + 1)
        return rest[:slot] + [truth] + rest[slot:]


def generate_synthetic(
    fn: FunctionDescriptor,
    n: int,
    llm: CompletionClient | None = None,
) -> list[UsageRecord]:
    """Plausible warm-up queries for one function.

    With an LLM attached, asks the model for n short inputs and keeps
    whatever parses; templates cover the remainder and every failure.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    from .memory import SYNTH_EPOCH, template_synthesizer

    if llm is None:
        return template_synthesizer(fn, n)
    ask = (
        f"Write {n} short text inputs a user might type into {fn.app} when "
        f"they intend to {fn.action}. One per line, no numbering, no quotes."
    )
    try:
        reply = llm.complete(ask)
        texts = [ln.strip() for ln in reply.text.splitlines() if ln.strip()][:n]
    except (LlmError, TypeError):
        texts = []
    records = []
    for i, text in enumerate(texts):
        records.append(
            UsageRecord(
                user_id="synthetic",
                query=text,
                context=ContextSnapshot.empty(SYNTH_EPOCH),
                label={fn.id: 1.0},
                chosen=fn.id,
                timestamp=SYNTH_EPOCH,
                origin="synthetic",
                is_chat=fn.is_chat,
            )
        )
    if len(records) < n:
        records.extend(template_synthesizer(fn, n - len(records))[: n - len(records)])
    return records
