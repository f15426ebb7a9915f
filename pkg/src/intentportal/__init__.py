"""Personalized routing from raw text input to the intended function.

The engine keeps a per-user memory of (text, context, choice) records.
A query is answered locally by similarity-weighted neighbor voting when
the retrieval confidence clears a threshold; otherwise an LLM is asked
to rank the candidates, with the user's history as few-shot examples.
Every selection feeds back into memory immediately, and a daily cycle
refits the linear head and chat gate.
"""

from .config import (
    ContextConfig,
    EncoderConfig,
    LlmConfig,
    PortalConfig,
    RetrievalConfig,
    TrainerConfig,
)
from .defaults import DEFAULT_FUNCTIONS
from .encoder import AppLaunch, ChatGateParams, ContextSnapshot, FeatureEncoder
from .integrator import Route, RouteDecision, confidence, decide, integrate, route
from .llm_bridge import (
    ScriptedStubLlm,
    build_contact_prompt,
    build_function_prompt,
    parse_ranking,
)
from .memory import (
    FunctionDescriptor,
    Neighbor,
    UsageRecord,
    UserStore,
    bootstrap,
    similarity,
)
from .portal import PortalEngine, PredictionResult, parse_override
from .trainer import HeadParams, TrainReport, fuse_label, retrain_cycle, train_head

__version__ = "0.1.0"

__all__ = [
    "ContextConfig",
    "EncoderConfig",
    "LlmConfig",
    "PortalConfig",
    "RetrievalConfig",
    "TrainerConfig",
    "DEFAULT_FUNCTIONS",
    "AppLaunch",
    "ChatGateParams",
    "ContextSnapshot",
    "FeatureEncoder",
    "Route",
    "RouteDecision",
    "confidence",
    "decide",
    "integrate",
    "route",
    "ScriptedStubLlm",
    "build_contact_prompt",
    "build_function_prompt",
    "parse_ranking",
    "FunctionDescriptor",
    "Neighbor",
    "UsageRecord",
    "UserStore",
    "bootstrap",
    "similarity",
    "PortalEngine",
    "PredictionResult",
    "parse_override",
    "HeadParams",
    "TrainReport",
    "fuse_label",
    "retrain_cycle",
    "train_head",
    "__version__",
]
