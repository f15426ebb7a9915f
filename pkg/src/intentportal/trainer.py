"""Label fusion and the linear head / chat gate training loop.

The head is a softmax layer over the frozen feature vector, trained by
full-batch gradient descent with a fixed schedule: start at lr, halve on
any loss increase, stop on max_epochs, a tiny loss delta, or too many
halvings.  No stochasticity anywhere, so retraining the same data from
the same initialization reproduces the same parameters bit for bit.

Predictions served to users come from the neighbor integrator or the
LLM; the trained head is kept for telemetry and for making the gate's
feature space discriminative, not as the primary ranker.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .encoder import ChatGateParams
from .errors import DimensionMismatch, EmptyTrainingSet, UnknownFunction
from .memory import UsageRecord, UserStore

FUSION_TAIL = (0.07, 0.06, 0.04, 0.03)


def fuse_label(
    selected: str,
    llm_top5: Sequence[str] | None = None,
    known: set[str] | None = None,
) -> dict[str, float]:
    """Training distribution from a selection plus the served LLM ranking.

    The chosen function gets 0.8; the LLM's other candidates take
    0.07/0.06/0.04/0.03 in rank order.  Any tail weight left unfilled
    returns to the chosen function, so the mass is exactly 1.  Without a
    ranking (local route) the label is one-hot.
    """
    if known is not None and selected not in known:
        raise UnknownFunction(f"selected function {selected!r} is not in the collection")
    if not llm_top5:
        return {selected: 1.0}
    label: dict[str, float] = {}
    slot = 0
    for fid in llm_top5:
        if slot >= len(FUSION_TAIL):
            break
        if fid == selected or fid in label:
            continue
        if known is not None and fid not in known:
            continue
        label[fid] = FUSION_TAIL[slot]
        slot += 1
    label[selected] = 1.0 - math.fsum(label.values())
    return label


@dataclass
class HeadParams:
    """Softmax layer: one weight row and bias per collection function."""

    functions: list[str]
    weights: np.ndarray  # (N, d)
    bias: np.ndarray     # (N,)

    @classmethod
    def initial(cls, functions: Sequence[str], dim: int) -> "HeadParams":
        n = len(functions)
        return cls(
            functions=list(functions),
            weights=np.zeros((n, dim), dtype=np.float64),
            bias=np.zeros(n, dtype=np.float64),
        )

    def index_of(self, fid: str) -> int | None:
        try:
            return self.functions.index(fid)
        except ValueError:
            return None

    def scores(self, feature: np.ndarray) -> dict[str, float]:
        logits = self.weights @ feature + self.bias
        probs = _softmax_rows(logits[None, :])[0]
        return {fid: float(p) for fid, p in zip(self.functions, probs)}

    def with_function(self, fid: str) -> "HeadParams":
        """Zero-initialized row for a new function; old rows untouched."""
        if fid in self.functions:
            return self
        return HeadParams(
            functions=self.functions + [fid],
            weights=np.vstack([self.weights, np.zeros((1, self.weights.shape[1]))]),
            bias=np.append(self.bias, 0.0),
        )

    def without_function(self, fid: str) -> "HeadParams":
        idx = self.index_of(fid)
        if idx is None:
            return self
        keep = [i for i in range(len(self.functions)) if i != idx]
        return HeadParams(
            functions=[self.functions[i] for i in keep],
            weights=self.weights[keep],
            bias=self.bias[keep],
        )

    def padded_for_vocab(self, text_dim: int, old_len: int, grown: int) -> "HeadParams":
        """Insert zero feature columns where new app-vocab slots appeared."""
        cut = text_dim + old_len
        w = self.weights
        return HeadParams(
            functions=list(self.functions),
            weights=np.hstack([w[:, :cut], np.zeros((w.shape[0], grown)), w[:, cut:]]),
            bias=self.bias.copy(),
        )

    def to_dict(self) -> dict:
        return {
            "functions": list(self.functions),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HeadParams":
        return cls(
            functions=list(d["functions"]),
            weights=np.asarray(d["weights"], dtype=np.float64),
            bias=np.asarray(d["bias"], dtype=np.float64),
        )


@dataclass
class TrainReport:
    epochs: int
    initial_loss: float
    final_loss: float
    wall_ms: float
    note: str = ""


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def head_loss_grad(
    weights: np.ndarray, bias: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy of softmax(Wx+b) against distribution targets."""
    n = x.shape[0]
    probs = _softmax_rows(x @ weights.T + bias)
    loss = float(-(y * np.log(np.clip(probs, 1e-300, None))).sum() / n)
    delta = (probs - y) / n
    return loss, delta.T @ x, delta.sum(axis=0)


def gate_loss_grad(
    weights: np.ndarray, bias: float, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, float]:
    """Mean binary cross-entropy of sigmoid(w.x+b) against 0/1 targets."""
    n = x.shape[0]
    z = x @ weights + bias
    # log(1+e^z) computed stably on both tails
    log1pexp = np.where(z > 0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(z)))
    loss = float((log1pexp - y * z).sum() / n)
    p = 1.0 / (1.0 + np.exp(-z))
    delta = (p - y) / n
    return loss, x.T @ delta, float(delta.sum())


MAX_HALVINGS = 10


def _descend(
    params: np.ndarray,
    loss_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    lr: float,
    max_epochs: int,
    tol: float,
) -> tuple[np.ndarray, int, float, float]:
    """Monotone full-batch descent over a flat parameter vector."""
    loss, grad = loss_grad(params)
    initial = loss
    halvings = 0
    epochs = 0
    while epochs < max_epochs:
        candidate = params - lr * grad
        new_loss, new_grad = loss_grad(candidate)
        if new_loss > loss:
            halvings += 1
            if halvings > MAX_HALVINGS:
                break
            lr *= 0.5
            continue
        epochs += 1
        done = abs(loss - new_loss) < tol
        params, loss, grad = candidate, new_loss, new_grad
        if done:
            break
    return params, epochs, initial, loss


def _target_matrix(
    records: Sequence[UsageRecord], functions: Sequence[str]
) -> tuple[np.ndarray, np.ndarray, int]:
    """Stack features and dense label rows; rows that lose all their mass
    to removed functions are dropped rather than trained on garbage."""
    index = {fid: i for i, fid in enumerate(functions)}
    rows_x, rows_y, dropped = [], [], 0
    for rec in records:
        if rec.feature is None:
            raise DimensionMismatch("record has no feature vector")
        y = np.zeros(len(functions), dtype=np.float64)
        for fid, p in rec.label.items():
            j = index.get(fid)
            if j is not None:
                y[j] += p
        mass = y.sum()
        if mass <= 0:
            dropped += 1
            continue
        rows_x.append(np.asarray(rec.feature, dtype=np.float64))
        rows_y.append(y / mass)
    if not rows_x:
        raise EmptyTrainingSet("no trainable records after label projection")
    return np.stack(rows_x), np.stack(rows_y), dropped


def train_head(
    records: Sequence[UsageRecord],
    params: HeadParams,
    lr: float = 0.1,
    max_epochs: int = 200,
    tol: float = 1e-6,
) -> tuple[HeadParams, TrainReport]:
    if not records:
        raise EmptyTrainingSet("train_head needs at least one record")
    x, y, dropped = _target_matrix(records, params.functions)
    if x.shape[1] != params.weights.shape[1]:
        raise DimensionMismatch(
            f"features have dim {x.shape[1]}, head expects {params.weights.shape[1]}"
        )
    n_fn, dim = params.weights.shape
    start = time.perf_counter()

    def loss_grad(flat: np.ndarray) -> tuple[float, np.ndarray]:
        w = flat[: n_fn * dim].reshape(n_fn, dim)
        b = flat[n_fn * dim :]
        loss, gw, gb = head_loss_grad(w, b, x, y)
        return loss, np.concatenate([gw.ravel(), gb])

    flat0 = np.concatenate([params.weights.ravel(), params.bias])
    flat, epochs, initial, final = _descend(flat0, loss_grad, lr, max_epochs, tol)
    trained = HeadParams(
        functions=list(params.functions),
        weights=flat[: n_fn * dim].reshape(n_fn, dim).copy(),
        bias=flat[n_fn * dim :].copy(),
    )
    report = TrainReport(
        epochs=epochs,
        initial_loss=initial,
        final_loss=final,
        wall_ms=(time.perf_counter() - start) * 1000.0,
        note=f"dropped {dropped} projected-out records" if dropped else "",
    )
    return trained, report


def train_chat_gate(
    records: Sequence[UsageRecord],
    params: ChatGateParams,
    lr: float = 0.1,
    max_epochs: int = 200,
    tol: float = 1e-6,
) -> tuple[ChatGateParams, TrainReport]:
    if not records:
        raise EmptyTrainingSet("train_chat_gate needs at least one record")
    x = np.stack([np.asarray(r.feature, dtype=np.float64) for r in records])
    y = np.asarray([1.0 if r.is_chat else 0.0 for r in records])
    if x.shape[1] != params.weights.shape[0]:
        raise DimensionMismatch(
            f"features have dim {x.shape[1]}, gate expects {params.weights.shape[0]}"
        )
    start = time.perf_counter()

    if y.min() == y.max():
        # one class only: nothing separates; encode the prior in the bias
        prior = min(max(float(y.mean()), 1e-3), 1.0 - 1e-3)
        gate = ChatGateParams(
            weights=np.zeros_like(params.weights),
            bias=math.log(prior / (1.0 - prior)),
        )
        return gate, TrainReport(
            epochs=0,
            initial_loss=0.0,
            final_loss=0.0,
            wall_ms=(time.perf_counter() - start) * 1000.0,
            note="single class, prior-only bias",
        )

    dim = x.shape[1]

    def loss_grad(flat: np.ndarray) -> tuple[float, np.ndarray]:
        loss, gw, gb = gate_loss_grad(flat[:dim], float(flat[dim]), x, y)
        return loss, np.concatenate([gw, [gb]])

    flat0 = np.concatenate([params.weights, [params.bias]])
    flat, epochs, initial, final = _descend(flat0, loss_grad, lr, max_epochs, tol)
    gate = ChatGateParams(weights=flat[:dim].copy(), bias=float(flat[dim]))
    return gate, TrainReport(
        epochs=epochs,
        initial_loss=initial,
        final_loss=final,
        wall_ms=(time.perf_counter() - start) * 1000.0,
    )


def retrain_cycle(
    store: UserStore,
    lr: float = 0.1,
    max_epochs: int = 200,
    tol: float = 1e-6,
) -> TrainReport:
    """Retrain head and gate on everything recorded, then swap atomically.

    Serving keeps reading the old parameters until both fits finish; a
    failure leaves them untouched.
    """
    records = list(store.records)  # snapshot; appends during the fit are ignored
    start = time.perf_counter()
    if not records:
        return TrainReport(0, 0.0, 0.0, 0.0, note="empty store, nothing to train")

    # always fit from the zero initialization: retraining the same data
    # twice must land on identical parameters, not a warm-started drift
    functions = list(store.collection.keys())
    head = HeadParams.initial(functions, store.feature_dim)
    new_head, head_report = train_head(records, head, lr, max_epochs, tol)
    new_gate, gate_report = train_chat_gate(
        records, ChatGateParams.initial(store.feature_dim), lr, max_epochs, tol
    )
    store.head_params = new_head
    store.gate_params = new_gate
    return TrainReport(
        epochs=head_report.epochs + gate_report.epochs,
        initial_loss=head_report.initial_loss,
        final_loss=head_report.final_loss,
        wall_ms=(time.perf_counter() - start) * 1000.0,
        note=gate_report.note,
    )
