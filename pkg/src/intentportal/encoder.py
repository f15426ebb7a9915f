"""Feature extraction: query text, app-usage context, and the chat gate.

A query is turned into one flat vector: a unit-norm text embedding,
followed by per-app recency scores, followed by a 9-component time
encoding (sin/cos of the hour-of-day fraction plus a weekday one-hot).
Everything here is pure and deterministic, so the functions are safe to
call concurrently and identical inputs always produce identical vectors.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import urllib.request
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Sequence

import numpy as np

from .config import ContextConfig, EncoderConfig
from .errors import DimensionMismatch, EmptyInput

TIME_DIMS = 9  # sin, cos, and 7 weekday indicators


@dataclass(frozen=True)
class AppLaunch:
    app: str
    timestamp: datetime


@dataclass(frozen=True)
class ContextSnapshot:
    """Recent app launches plus the wall-clock instant of the query."""

    now: datetime
    launches: tuple[AppLaunch, ...] = ()

    @classmethod
    def empty(cls, now: datetime) -> "ContextSnapshot":
        return cls(now=now, launches=())


@dataclass(frozen=True)
class ContextVector:
    app_part: np.ndarray   # recency score per app-vocabulary slot, >= 0
    time_part: np.ndarray  # sin, cos, weekday one-hot

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([self.app_part, self.time_part])


@dataclass
class ChatGateParams:
    """Linear gate deciding whether an input is a chat message."""

    weights: np.ndarray
    bias: float

    @classmethod
    def initial(cls, dim: int, bias: float = -2.0) -> "ChatGateParams":
        # Negative prior: an untrained gate must not route to the chat
        # candidate set (sigmoid(0) = 0.5 would).
        return cls(weights=np.zeros(dim, dtype=np.float64), bias=bias)

    def padded_to(self, dim: int) -> "ChatGateParams":
        if dim < self.weights.shape[0]:
            raise DimensionMismatch(
                f"cannot shrink gate from {self.weights.shape[0]} to {dim}"
            )
        if dim == self.weights.shape[0]:
            return self
        weights = np.zeros(dim, dtype=np.float64)
        weights[: self.weights.shape[0]] = self.weights
        return ChatGateParams(weights=weights, bias=self.bias)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def _hash_bucket(gram: str, seed: int, dim: int) -> tuple[int, float]:
    digest = hashlib.blake2b(
        gram.encode("utf-8"), digest_size=9, key=seed.to_bytes(8, "little")
    ).digest()
    bucket = int.from_bytes(digest[:8], "little") % dim
    sign = 1.0 if digest[8] & 1 else -1.0
    return bucket, sign


def encode_text(text: str, dim: int = 256, seed: int = 9172) -> np.ndarray:
    """Embed text as signed character-trigram counts, L2-normalized.

    Deterministic for identical (text, dim, seed); raises EmptyInput when
    the text trims to nothing.
    """
    trimmed = text.strip()
    if not trimmed:
        raise EmptyInput("query text is empty after trimming")
    padded = f" {trimmed} "  # boundary markers; handles inputs shorter than 3
    vec = np.zeros(dim, dtype=np.float64)
    for i in range(len(padded) - 2):
        bucket, sign = _hash_bucket(padded[i : i + 3], seed, dim)
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # Astronomically unlikely signed-count cancellation; pin one bucket
        # so the unit-norm contract still holds.
        bucket, _ = _hash_bucket(padded, seed, dim)
        vec[bucket] = 1.0
        norm = 1.0
    return vec / norm


def encode_context(
    snapshot: ContextSnapshot,
    app_vocab: Sequence[str],
    now: datetime | None = None,
    tau_seconds: float = 300.0,
    window_seconds: float = 600.0,
) -> ContextVector:
    """Context features: exponential-decay app recency plus time-of-day.

    Each launch of a vocabulary app within the window contributes
    exp(-age/tau) to that app's slot; launches of unknown apps are
    ignored.  An empty snapshot is valid and yields a zero app part.
    """
    if now is None:
        now = snapshot.now
    index = {app: i for i, app in enumerate(app_vocab)}
    app_part = np.zeros(len(app_vocab), dtype=np.float64)
    for launch in snapshot.launches:
        slot = index.get(launch.app)
        if slot is None:
            continue
        age = (now - launch.timestamp).total_seconds()
        if age < 0:
            raise ValueError(
                f"launch of {launch.app!r} is {-age:.1f}s in the future"
            )
        if age <= window_seconds:
            app_part[slot] += math.exp(-age / tau_seconds)

    hour_fraction = (
        now.hour + now.minute / 60.0 + (now.second + now.microsecond / 1e6) / 3600.0
    ) / 24.0
    angle = 2.0 * math.pi * hour_fraction
    time_part = np.zeros(TIME_DIMS, dtype=np.float64)
    time_part[0] = math.sin(angle)
    time_part[1] = math.cos(angle)
    time_part[2 + now.weekday()] = 1.0  # Monday = slot 0
    return ContextVector(app_part=app_part, time_part=time_part)


def assemble_feature(text_vec: np.ndarray, context: ContextVector) -> np.ndarray:
    """Concatenate text, app-recency, and time parts, in that fixed order."""
    if text_vec.ndim != 1:
        raise DimensionMismatch(f"text vector must be 1-d, got shape {text_vec.shape}")
    if context.time_part.shape[0] != TIME_DIMS:
        raise DimensionMismatch(
            f"time part must have {TIME_DIMS} components, got {context.time_part.shape[0]}"
        )
    return np.concatenate([text_vec, context.app_part, context.time_part])


def chat_gate(feature: np.ndarray, params: ChatGateParams) -> float:
    """Probability that the input is a chat message; >= 0.5 means chat."""
    if feature.shape != params.weights.shape:
        raise DimensionMismatch(
            f"feature dim {feature.shape} != gate dim {params.weights.shape}"
        )
    return _sigmoid(float(np.dot(params.weights, feature)) + params.bias)


class HashTextEncoder:
    """Reference text encoder: seeded character-trigram feature hashing."""

    def __init__(self, dim: int = 256, seed: int = 9172):
        self.dim = dim
        self.seed = seed

    def encode(self, text: str) -> np.ndarray:
        return encode_text(text, dim=self.dim, seed=self.seed)


class ExternalTextEncoder:
    """Embedding provider behind an HTTP endpoint.

    POSTs {"text": ...} and expects {"vector": [...]}; the result is
    re-normalized so the unit-norm contract holds regardless of what the
    provider returns.
    """

    def __init__(self, url: str, dim: int, api_key_env: str, timeout_ms: int = 4000):
        self.url = url
        self.dim = dim
        self.api_key_env = api_key_env
        self.timeout_ms = timeout_ms

    def encode(self, text: str) -> np.ndarray:
        trimmed = text.strip()
        if not trimmed:
            raise EmptyInput("query text is empty after trimming")
        payload = json.dumps({"text": trimmed}).encode("utf-8")
        request = urllib.request.Request(
            self.url, data=payload, headers={"Content-Type": "application/json"}
        )
        key = os.environ.get(self.api_key_env)
        if key:
            request.add_header("Authorization", f"Bearer {key}")
        with urllib.request.urlopen(request, timeout=self.timeout_ms / 1000.0) as resp:
            body = json.loads(resp.read().decode("utf-8"))
        vec = np.asarray(body["vector"], dtype=np.float64)
        if vec.shape != (self.dim,):
            raise DimensionMismatch(
                f"external encoder returned dim {vec.shape}, expected ({self.dim},)"
            )
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ZeroDivisionError("external encoder returned a zero vector")
        return vec / norm


class FeatureEncoder:
    """Bundles the text encoder and context featurization behind one call."""

    def __init__(
        self,
        encoder_config: EncoderConfig | None = None,
        context_config: ContextConfig | None = None,
        zero_context: bool = False,
    ):
        self.encoder_config = encoder_config or EncoderConfig()
        self.context_config = context_config or ContextConfig()
        self.zero_context = zero_context
        if self.encoder_config.kind == "external":
            if not self.encoder_config.external_url:
                raise ValueError("external encoder selected but no URL configured")
            self.text_encoder = ExternalTextEncoder(
                self.encoder_config.external_url,
                self.encoder_config.dim,
                self.encoder_config.external_api_key_env,
                self.encoder_config.external_timeout_ms,
            )
        elif self.encoder_config.kind == "hash":
            self.text_encoder = HashTextEncoder(
                self.encoder_config.dim, self.encoder_config.hash_seed
            )
        else:
            raise ValueError(f"unknown encoder kind {self.encoder_config.kind!r}")

    @property
    def text_dim(self) -> int:
        return self.encoder_config.dim

    def feature_dim(self, app_vocab: Sequence[str]) -> int:
        return self.text_dim + len(app_vocab) + TIME_DIMS

    def encode_text(self, text: str) -> np.ndarray:
        return self.text_encoder.encode(text)

    def encode_context(
        self, snapshot: ContextSnapshot, app_vocab: Sequence[str]
    ) -> ContextVector:
        ctx = encode_context(
            snapshot,
            app_vocab,
            tau_seconds=self.context_config.tau_seconds,
            window_seconds=self.context_config.window_seconds,
        )
        if self.zero_context:
            ctx = ContextVector(
                app_part=np.zeros_like(ctx.app_part),
                time_part=np.zeros_like(ctx.time_part),
            )
        return ctx

    def feature(
        self, text: str, snapshot: ContextSnapshot, app_vocab: Sequence[str]
    ) -> np.ndarray:
        return assemble_feature(
            self.encode_text(text), self.encode_context(snapshot, app_vocab)
        )


def utc_now() -> datetime:
    return datetime.now(timezone.utc)
