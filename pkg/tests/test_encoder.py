from __future__ import annotations

import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, strategies as st

from intentportal.encoder import (
    TIME_DIMS,
    AppLaunch,
    ChatGateParams,
    ContextSnapshot,
    ContextVector,
    assemble_feature,
    chat_gate,
    encode_context,
    encode_text,
)
from intentportal.errors import DimensionMismatch, EmptyInput

MONDAY_MIDNIGHT = datetime(2026, 3, 2, 0, 0, 0, tzinfo=timezone.utc)


def snap(now: datetime, *launches: tuple[str, float]) -> ContextSnapshot:
    return ContextSnapshot(
        now=now,
        launches=tuple(
            AppLaunch(app, now - timedelta(seconds=age)) for app, age in launches
        ),
    )


# Frozen by a standalone reimplementation of the trigram hash (blake2b,
# digest_size 9, key = seed as 8 little-endian bytes, bucket from the
# first 8 bytes, sign from the ninth), run once and pasted here.
REFERENCE_A_D8 = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
REFERENCE_SENTENCE_D8 = [
    0.22360679774997896, 0.0, 0.4472135954999579, -0.4472135954999579,
    0.22360679774997896, 0.0, 0.6708203932499369, -0.22360679774997896,
]

nonblank_text = st.text(min_size=1, max_size=40).filter(lambda s: s.strip())


def test_encode_text_is_deterministic():
    a = encode_text("abc")
    b = encode_text("abc")
    assert np.array_equal(a, b)


def test_encode_text_reference_vectors():
    assert encode_text("a", dim=8, seed=9172).tolist() == REFERENCE_A_D8
    assert (
        encode_text("restaurant near me", dim=8, seed=9172).tolist()
        == REFERENCE_SENTENCE_D8
    )


def test_encode_text_unit_norm():
    assert abs(np.linalg.norm(encode_text("restaurant near me")) - 1.0) < 1e-9


@given(nonblank_text)
def test_encode_text_unit_norm_everywhere(text):
    assert abs(np.linalg.norm(encode_text(text)) - 1.0) < 1e-9


@given(nonblank_text)
def test_encode_text_ignores_surrounding_whitespace(text):
    assert np.array_equal(encode_text(text), encode_text(f"  {text}\t "))


def test_encode_text_empty_raises():
    with pytest.raises(EmptyInput):
        encode_text("   ")


def test_encode_context_empty_snapshot():
    ctx = encode_context(ContextSnapshot.empty(MONDAY_MIDNIGHT), ["maps"])
    assert ctx.app_part.tolist() == [0.0]
    assert ctx.time_part[0] == pytest.approx(0.0, abs=1e-12)  # sin 0
    assert ctx.time_part[1] == pytest.approx(1.0)             # cos 0
    assert ctx.time_part[2] == 1.0                            # Monday slot
    assert ctx.time_part[3:].tolist() == [0.0] * 6


def test_encode_context_single_launch_decay():
    ctx = encode_context(snap(MONDAY_MIDNIGHT, ("maps", 60.0)), ["maps"])
    assert ctx.app_part[0] == pytest.approx(math.exp(-0.2), abs=1e-12)


def test_encode_context_two_launches_sum():
    ctx = encode_context(
        snap(MONDAY_MIDNIGHT, ("maps", 60.0), ("maps", 300.0)), ["maps"]
    )
    assert ctx.app_part[0] == pytest.approx(math.exp(-0.2) + math.exp(-1.0), abs=1e-12)


def test_encode_context_window_cutoff():
    ctx = encode_context(snap(MONDAY_MIDNIGHT, ("maps", 601.0)), ["maps"])
    assert ctx.app_part[0] == 0.0


def test_encode_context_unknown_app_ignored():
    ctx = encode_context(snap(MONDAY_MIDNIGHT, ("other", 10.0)), ["maps"])
    assert ctx.app_part[0] == 0.0


def test_encode_context_future_launch_raises():
    future = ContextSnapshot(
        now=MONDAY_MIDNIGHT,
        launches=(AppLaunch("maps", MONDAY_MIDNIGHT + timedelta(seconds=5)),),
    )
    with pytest.raises(ValueError):
        encode_context(future, ["maps"])


def test_recency_is_monotone():
    nearer = encode_context(snap(MONDAY_MIDNIGHT, ("maps", 30.0)), ["maps"])
    farther = encode_context(snap(MONDAY_MIDNIGHT, ("maps", 90.0)), ["maps"])
    assert nearer.app_part[0] > farther.app_part[0]


def test_hour_fraction_includes_minutes():
    half_past_noon = MONDAY_MIDNIGHT.replace(hour=12, minute=30)
    ctx = encode_context(ContextSnapshot.empty(half_past_noon), [])
    angle = 2.0 * math.pi * (12.5 / 24.0)
    assert ctx.time_part[0] == pytest.approx(math.sin(angle), abs=1e-12)
    assert ctx.time_part[1] == pytest.approx(math.cos(angle), abs=1e-12)


@given(
    st.datetimes(
        min_value=datetime(2020, 1, 1),
        max_value=datetime(2030, 1, 1),
    )
)
def test_time_part_invariants(now):
    ctx = encode_context(ContextSnapshot.empty(now), [])
    sin_v, cos_v = ctx.time_part[0], ctx.time_part[1]
    assert sin_v**2 + cos_v**2 == pytest.approx(1.0, abs=1e-9)
    weekday = ctx.time_part[2:]
    assert weekday.sum() == 1.0
    assert weekday[now.weekday()] == 1.0


def test_assemble_feature_concatenation_fixture():
    ctx = ContextVector(
        app_part=np.array([0.5]),
        time_part=np.array([0.0, 1.0, 1.0, 0, 0, 0, 0, 0, 0], dtype=np.float64),
    )
    out = assemble_feature(np.array([0.6, 0.8]), ctx)
    assert out.tolist() == [0.6, 0.8, 0.5, 0.0, 1.0, 1.0, 0, 0, 0, 0, 0, 0]


@given(st.integers(1, 64), st.integers(0, 12))
def test_assemble_feature_dimension(d, n_apps):
    ctx = encode_context(ContextSnapshot.empty(MONDAY_MIDNIGHT), [f"a{i}" for i in range(n_apps)])
    out = assemble_feature(np.zeros(d), ctx)
    assert out.shape == (d + n_apps + TIME_DIMS,)


def test_assemble_feature_rejects_bad_shapes():
    ctx = ContextVector(app_part=np.zeros(1), time_part=np.zeros(4))
    with pytest.raises(DimensionMismatch):
        assemble_feature(np.zeros(2), ctx)
    with pytest.raises(DimensionMismatch):
        assemble_feature(np.zeros((2, 2)), encode_context(ContextSnapshot.empty(MONDAY_MIDNIGHT), []))


def test_chat_gate_fixtures():
    v = np.zeros(4)
    assert chat_gate(v, ChatGateParams(weights=np.zeros(4), bias=0.0)) == 0.5
    # weights.v + bias = 2 and -2
    assert chat_gate(v, ChatGateParams(weights=np.zeros(4), bias=2.0)) == pytest.approx(
        1.0 / (1.0 + math.exp(-2.0)), abs=1e-12
    )
    assert chat_gate(v, ChatGateParams(weights=np.zeros(4), bias=-2.0)) == pytest.approx(
        1.0 / (1.0 + math.exp(2.0)), abs=1e-12
    )


@given(st.floats(-30, 30))
def test_chat_gate_symmetry(score):
    v = np.ones(1)
    plus = chat_gate(v, ChatGateParams(weights=np.array([score]), bias=0.0))
    minus = chat_gate(v, ChatGateParams(weights=np.array([-score]), bias=0.0))
    assert plus + minus == pytest.approx(1.0, abs=1e-12)


def test_chat_gate_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        chat_gate(np.zeros(3), ChatGateParams(weights=np.zeros(4), bias=0.0))


def test_gate_initial_prior_is_non_chat():
    gate = ChatGateParams.initial(6)
    assert chat_gate(np.ones(6), gate) < 0.5


def test_gate_padding_preserves_existing_weights():
    gate = ChatGateParams(weights=np.array([1.0, 2.0]), bias=0.5)
    grown = gate.padded_to(4)
    assert grown.weights.tolist() == [1.0, 2.0, 0.0, 0.0]
    assert grown.bias == 0.5
    with pytest.raises(DimensionMismatch):
        grown.padded_to(2)
