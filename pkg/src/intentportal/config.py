"""Configuration for the engine and its subsystems.

All values have working defaults; a config file only needs the keys it
wants to override.  Secrets (API keys) are never stored here, only the
names of the environment variables that hold them.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


@dataclass
class EncoderConfig:
    kind: str = "hash"              # "hash" or "external"
    dim: int = 256
    hash_seed: int = 9172
    external_url: str | None = None
    external_api_key_env: str = "INTENTPORTAL_ENCODER_API_KEY"
    external_timeout_ms: int = 4000
    zero_context: bool = False      # drop app/time features (diagnostics)


@dataclass
class ContextConfig:
    tau_seconds: float = 300.0      # recency decay constant
    window_seconds: float = 600.0   # launches older than this are ignored


@dataclass
class RetrievalConfig:
    k: int = 5
    user_weight: float = 1.05       # same-user similarity boost
    threshold: float = 0.95         # confidence gate between local and LLM


@dataclass
class LlmConfig:
    endpoint: str | None = None     # full chat-completions URL; None disables
    model: str = "gpt-3.5-turbo"
    timeout_ms: int = 8000
    max_concurrent: int = 4
    api_key_env: str = "INTENTPORTAL_LLM_API_KEY"
    few_shot_m: int = 20            # few-shot example blocks per prompt
    chat_history_budget: int = 200  # total chat messages across all contacts
    audit_log: str | None = None    # JSONL request/response audit trail
    random_few_shot: bool = False   # sample examples at random (diagnostics)


@dataclass
class TrainerConfig:
    lr: float = 0.1
    max_epochs: int = 200
    tol: float = 1e-6
    retrain_hour: int = 3           # hour-of-day for the daily cycle


@dataclass
class PortalConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    context: ContextConfig = field(default_factory=ContextConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    llm: LlmConfig = field(default_factory=LlmConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    data_dir: str | None = None        # store snapshots live here
    telemetry_path: str | None = None  # JSONL pipeline telemetry
    auto_provision: bool = True
    warm_start: bool = True            # seed new users with bootstrap records
    bootstrap_alpha: int = 10
    bootstrap_pool: str | None = None  # JSONL global pool for new users

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "PortalConfig":
        kwargs: dict[str, Any] = {}
        nested = {
            "encoder": EncoderConfig,
            "context": ContextConfig,
            "retrieval": RetrievalConfig,
            "llm": LlmConfig,
            "trainer": TrainerConfig,
        }
        for key, value in raw.items():
            if key in nested:
                kwargs[key] = nested[key](**value)
            else:
                kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "PortalConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)
