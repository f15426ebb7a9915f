"""Per-user usage memory: records, similarity retrieval, bootstrap, snapshots.

A UserStore holds everything the engine knows about one user: the
function collection, the append-only record log with a float32 feature
matrix, the app vocabulary those features were encoded against, and the
trained head/gate parameters.  Retrieval is an exhaustive scan; stores
stay small (tens of thousands of rows at most) and an exact scan keeps
the ranking bit-for-bit reproducible.
"""

from __future__ import annotations

import importlib.resources
import json
import math
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import ContextConfig, EncoderConfig, RetrievalConfig
from .encoder import (
    AppLaunch,
    ChatGateParams,
    ContextSnapshot,
    FeatureEncoder,
    TIME_DIMS,
)
from .errors import (
    CorruptSnapshot,
    EmptyFunctionSet,
    InvalidLabel,
    VersionMismatch,
    ZeroVector,
)

FORMAT_VERSION = 1
VECTOR_MAGIC = b"IPVEC\x00\x00\x01"

CHAT_ACTION = "chat"


@dataclass(frozen=True)
class FunctionDescriptor:
    """One selectable capability: app + action, plus a contact for chat."""

    id: str
    app: str
    action: str
    contact: str | None = None
    description: str | None = None

    def __post_init__(self):
        if (self.action == CHAT_ACTION) != (self.contact is not None):
            raise ValueError(
                f"function {self.id!r}: contact must be present iff action is {CHAT_ACTION!r}"
            )

    @property
    def is_chat(self) -> bool:
        return self.contact is not None

    @property
    def display_name(self) -> str:
        if self.contact is not None:
            return f"{self.app}-{self.action}-{self.contact}"
        return f"{self.app}-{self.action}"

    def to_dict(self) -> dict:
        out = {"id": self.id, "app": self.app, "action": self.action}
        if self.contact is not None:
            out["contact"] = self.contact
        if self.description is not None:
            out["description"] = self.description
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FunctionDescriptor":
        return cls(
            id=d["id"],
            app=d["app"],
            action=d["action"],
            contact=d.get("contact"),
            description=d.get("description"),
        )


def function_id(app: str, action: str, contact: str | None = None) -> str:
    parts = [app.lower().replace(" ", "_"), action.lower().replace(" ", "_")]
    if contact is not None:
        parts.append(contact.lower().replace(" ", "_"))
    return "-".join(parts)


@dataclass
class UsageRecord:
    """One interaction: what was typed, in what context, what was chosen."""

    user_id: str
    query: str
    context: ContextSnapshot
    label: dict[str, float]
    chosen: str
    timestamp: datetime
    origin: str = "live"  # live | bootstrap | synthetic
    is_chat: bool = False
    feature: np.ndarray | None = None  # float32, set by the store on append
    record_id: int = -1

    def label_items(self) -> list[tuple[str, float]]:
        return sorted(self.label.items())


@dataclass(frozen=True)
class Neighbor:
    record: UsageRecord
    similarity: float


def validate_label(label: dict[str, float], chosen: str) -> None:
    if not label:
        raise InvalidLabel("label vector is empty")
    total = math.fsum(label.values())
    if abs(total - 1.0) > 1e-6:
        raise InvalidLabel(f"label mass {total} is not 1 within 1e-6")
    for fid, p in label.items():
        if p < 0:
            raise InvalidLabel(f"negative probability {p} for {fid!r}")
    if chosen not in label:
        raise InvalidLabel(f"chosen function {chosen!r} missing from label")
    peak = max(label.values())
    if label[chosen] < peak:
        raise InvalidLabel(
            f"chosen {chosen!r} weight {label[chosen]} below max {peak}"
        )


def similarity(
    query: np.ndarray,
    candidate: UsageRecord,
    same_user: bool,
    user_weight: float = 1.05,
) -> float:
    """Cosine similarity with the same-user boost, clipped above at 1.

    Negative cosines pass through; the boost never pushes a score past 1.
    """
    vec = candidate.feature
    if vec is None:
        raise ZeroVector(f"record {candidate.record_id} has no feature vector")
    qn = float(np.linalg.norm(query))
    vn = float(np.linalg.norm(np.asarray(vec, dtype=np.float64)))
    if qn == 0.0 or vn == 0.0:
        raise ZeroVector("cannot compare an all-zero vector")
    cos = float(np.dot(query, np.asarray(vec, dtype=np.float64))) / (qn * vn)
    alpha = user_weight if same_user else 1.0
    return min(cos * alpha, 1.0)


class UserStore:
    """The personal database: records, vocabulary, collection, parameters."""

    def __init__(
        self,
        user_id: str,
        collection: Sequence[FunctionDescriptor],
        encoder: FeatureEncoder,
        retrieval: RetrievalConfig | None = None,
    ):
        self.user_id = user_id
        self.encoder = encoder
        self.retrieval = retrieval or RetrievalConfig()
        self.collection: dict[str, FunctionDescriptor] = {}
        for fn in collection:
            if fn.id in self.collection:
                raise ValueError(f"duplicate function id {fn.id!r}")
            self.collection[fn.id] = fn
        self.app_vocab: list[str] = []
        self._vocab_index: dict[str, int] = {}
        for fn in collection:
            self._add_app(fn.app)
        self.records: list[UsageRecord] = []
        self._matrix: np.ndarray | None = None  # float32 cache, rebuilt lazily
        self._next_id = 0
        self.head_params = None  # assigned by the trainer; kept here for snapshots
        self.gate_params: ChatGateParams = ChatGateParams.initial(
            encoder.feature_dim(self.app_vocab)
        )

    # -- vocabulary ---------------------------------------------------------

    def _add_app(self, app: str) -> None:
        if app in self._vocab_index:
            return
        self._vocab_index[app] = len(self.app_vocab)
        self.app_vocab.append(app)

    def ensure_apps(self, snapshot: ContextSnapshot) -> None:
        """Grow the app vocabulary for unseen apps in a context."""
        self.grow_vocab(l.app for l in snapshot.launches)

    def grow_vocab(self, apps: Iterable[str]) -> int:
        """Add unseen apps and pad every row that was encoded without them.

        Existing feature rows get zero-filled slots, which leaves every
        stored cosine unchanged; the app part sits between the text and
        time parts, so the insert happens mid-row, not at the end.  The
        gate and head grow the same way, keeping their widths equal to
        feature_dim at all times.  Returns the number of slots added.
        """
        new = [app for app in apps if app not in self._vocab_index]
        if not new:
            return 0
        old_len = len(self.app_vocab)
        for app in new:
            self._add_app(app)
        grown = len(self.app_vocab) - old_len
        if self.records:
            cut = self.encoder.text_dim + old_len
            for rec in self.records:
                vec = rec.feature
                rec.feature = np.concatenate(
                    [vec[:cut], np.zeros(grown, dtype=np.float32), vec[cut:]]
                )
            self._matrix = None
        self.gate_params = self._pad_gate(self.gate_params, old_len, grown)
        if self.head_params is not None:
            self.head_params = self.head_params.padded_for_vocab(
                self.encoder.text_dim, old_len, grown
            )
        return grown

    def _pad_gate(self, gate: ChatGateParams, old_len: int, grown: int) -> ChatGateParams:
        cut = self.encoder.text_dim + old_len
        w = gate.weights
        return ChatGateParams(
            weights=np.concatenate([w[:cut], np.zeros(grown), w[cut:]]),
            bias=gate.bias,
        )

    @property
    def feature_dim(self) -> int:
        return self.encoder.feature_dim(self.app_vocab)

    # -- encoding -----------------------------------------------------------

    def encode(self, text: str, snapshot: ContextSnapshot) -> np.ndarray:
        """Feature vector for a query against the current vocabulary.

        Unseen context apps are added to the vocabulary first, so the
        query vector and any record appended for it line up.
        """
        self.ensure_apps(snapshot)
        return self.encoder.feature(text, snapshot, self.app_vocab)

    # -- records ------------------------------------------------------------

    def append(self, record: UsageRecord) -> int:
        """Validate, feature-encode, and add a record; visible immediately."""
        validate_label(record.label, record.chosen)
        self.ensure_apps(record.context)
        feature = self.encoder.feature(record.query, record.context, self.app_vocab)
        # float32 is the storage dtype; cast now so a snapshot round-trip
        # is the identity on retrieval behavior.
        record.feature = feature.astype(np.float32)
        record.record_id = self._next_id
        self._next_id += 1
        self.records.append(record)
        self._matrix = None
        return record.record_id

    def _feature_matrix(self) -> np.ndarray:
        if self._matrix is None or self._matrix.shape[0] != len(self.records):
            if self.records:
                self._matrix = np.stack([r.feature for r in self.records])
            else:
                self._matrix = np.zeros((0, self.feature_dim), dtype=np.float32)
        return self._matrix

    def feature_rows(self) -> np.ndarray:
        """All record features as one float64 matrix (training view)."""
        return self._feature_matrix().astype(np.float64)

    def top_k(
        self,
        query: np.ndarray,
        k: int | None = None,
        chat_filter: bool = False,
        query_user: str | None = None,
    ) -> list[Neighbor]:
        """The k most similar records, chat or non-chat side only.

        Sorted by similarity descending; ties go to the newer record,
        then the lower record id.
        """
        if k is None:
            k = self.retrieval.k
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if not self.records:
            return []
        qn = float(np.linalg.norm(query))
        if qn == 0.0:
            raise ZeroVector("query feature vector is all-zero")
        if query_user is None:
            query_user = self.user_id

        matrix = self._feature_matrix()
        if matrix.shape[1] != query.shape[0]:
            raise ValueError(
                f"query dim {query.shape[0]} != store dim {matrix.shape[1]}"
            )
        dots = matrix @ np.asarray(query, dtype=np.float64)
        norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
        scored: list[tuple[float, float, int, UsageRecord]] = []
        for i, rec in enumerate(self.records):
            if rec.is_chat != chat_filter:
                continue
            alpha = (
                self.retrieval.user_weight if rec.user_id == query_user else 1.0
            )
            sim = min(float(dots[i]) / (norms[i] * qn) * alpha, 1.0)
            scored.append((sim, rec.timestamp.timestamp(), rec.record_id, rec))
        scored.sort(key=lambda t: (-t[0], -t[1], t[2]))
        return [Neighbor(record=rec, similarity=sim) for sim, _, _, rec in scored[:k]]

    # -- bootstrap ----------------------------------------------------------
    # (module-level function below; kept out of the class because it only
    # produces records, it does not touch store state)

    # -- persistence ---------------------------------------------------------

    def save(self, path: str) -> None:
        """Write a snapshot directory: records.jsonl, vectors.bin, manifest.

        The manifest is written last and carries a CRC per segment, so a
        torn write is detected on load rather than silently served.
        """
        os.makedirs(path, exist_ok=True)
        records_bytes = self._render_records()
        vectors_bytes = self._render_vectors()
        manifest = {
            "format_version": FORMAT_VERSION,
            "user_id": self.user_id,
            "next_record_id": self._next_id,
            "app_vocab": self.app_vocab,
            "collection": [fn.to_dict() for fn in self.collection.values()],
            "gate": {
                "weights": [float(x) for x in self.gate_params.weights],
                "bias": float(self.gate_params.bias),
            },
            "head": None
            if self.head_params is None
            else self.head_params.to_dict(),
            "segments": {
                "records.jsonl": {
                    "bytes": len(records_bytes),
                    "crc32": zlib.crc32(records_bytes),
                },
                "vectors.bin": {
                    "bytes": len(vectors_bytes),
                    "crc32": zlib.crc32(vectors_bytes),
                },
            },
        }
        _atomic_write(os.path.join(path, "records.jsonl"), records_bytes)
        _atomic_write(os.path.join(path, "vectors.bin"), vectors_bytes)
        _atomic_write(
            os.path.join(path, "manifest.json"),
            json.dumps(manifest, indent=1).encode("utf-8"),
        )

    def _render_records(self) -> bytes:
        lines = []
        for rec in self.records:
            lines.append(
                json.dumps(
                    {
                        "id": rec.record_id,
                        "user": rec.user_id,
                        "query": rec.query,
                        "ts": rec.timestamp.isoformat(),
                        "chosen": rec.chosen,
                        "label": rec.label,
                        "origin": rec.origin,
                        "is_chat": rec.is_chat,
                        "context": _context_to_dict(rec.context),
                    },
                    ensure_ascii=False,
                )
            )
        return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")

    def _render_vectors(self) -> bytes:
        matrix = self._feature_matrix()
        header = VECTOR_MAGIC + struct.pack(
            "<III", FORMAT_VERSION, matrix.shape[0], matrix.shape[1]
        )
        body = np.ascontiguousarray(matrix, dtype="<f4").tobytes()
        return header + body

    @classmethod
    def load(
        cls,
        path: str,
        encoder: FeatureEncoder,
        retrieval: RetrievalConfig | None = None,
    ) -> "UserStore":
        manifest_path = os.path.join(path, "manifest.json")
        try:
            with open(manifest_path, "rb") as fh:
                manifest = json.loads(fh.read().decode("utf-8"))
        except FileNotFoundError:
            raise CorruptSnapshot(f"no manifest at {manifest_path}")
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CorruptSnapshot(f"manifest unreadable: {exc}")
        version = manifest.get("format_version")
        if version != FORMAT_VERSION:
            raise VersionMismatch(
                f"snapshot format {version!r}, this build reads {FORMAT_VERSION}"
            )

        segments = manifest.get("segments", {})
        blobs: dict[str, bytes] = {}
        for name, meta in segments.items():
            seg_path = os.path.join(path, name)
            try:
                with open(seg_path, "rb") as fh:
                    data = fh.read()
            except FileNotFoundError:
                raise CorruptSnapshot(f"missing segment {name}")
            if len(data) != meta["bytes"] or zlib.crc32(data) != meta["crc32"]:
                raise CorruptSnapshot(f"segment {name} failed its checksum")
            blobs[name] = data

        store = cls.__new__(cls)
        store.user_id = manifest["user_id"]
        store.encoder = encoder
        store.retrieval = retrieval or RetrievalConfig()
        store.collection = {}
        for d in manifest["collection"]:
            fn = FunctionDescriptor.from_dict(d)
            store.collection[fn.id] = fn
        store.app_vocab = list(manifest["app_vocab"])
        store._vocab_index = {a: i for i, a in enumerate(store.app_vocab)}
        store._next_id = manifest["next_record_id"]
        store.gate_params = ChatGateParams(
            weights=np.asarray(manifest["gate"]["weights"], dtype=np.float64),
            bias=float(manifest["gate"]["bias"]),
        )
        if manifest.get("head"):
            from .trainer import HeadParams

            store.head_params = HeadParams.from_dict(manifest["head"])
        else:
            store.head_params = None

        vectors = _parse_vectors(blobs["vectors.bin"])
        store.records = _parse_records(blobs["records.jsonl"], vectors)
        store._matrix = vectors if vectors.shape[0] else None
        if store._matrix is not None and store._matrix.shape[1] != store.encoder.feature_dim(
            store.app_vocab
        ):
            raise CorruptSnapshot(
                f"vector dim {store._matrix.shape[1]} does not match vocabulary"
            )
        return store


def _atomic_write(path: str, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _context_to_dict(snapshot: ContextSnapshot) -> dict:
    return {
        "now": snapshot.now.isoformat(),
        "launches": [
            {"app": l.app, "ts": l.timestamp.isoformat()} for l in snapshot.launches
        ],
    }


def context_from_dict(d: dict) -> ContextSnapshot:
    return ContextSnapshot(
        now=datetime.fromisoformat(d["now"]),
        launches=tuple(
            AppLaunch(app=l["app"], timestamp=datetime.fromisoformat(l["ts"]))
            for l in d.get("launches", [])
        ),
    )


def _parse_vectors(data: bytes) -> np.ndarray:
    head_len = len(VECTOR_MAGIC) + 12
    if len(data) < head_len:
        raise CorruptSnapshot("vector segment shorter than its header")
    if data[: len(VECTOR_MAGIC)] != VECTOR_MAGIC:
        raise CorruptSnapshot("vector segment has the wrong magic bytes")
    version, count, dim = struct.unpack_from("<III", data, len(VECTOR_MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"vector segment version {version}")
    expected = head_len + count * dim * 4
    if len(data) != expected:
        raise CorruptSnapshot(
            f"vector segment is {len(data)} bytes, expected {expected}"
        )
    flat = np.frombuffer(data, dtype="<f4", offset=head_len)
    return flat.reshape(count, dim).copy()


def _parse_records(data: bytes, vectors: np.ndarray) -> list[UsageRecord]:
    records: list[UsageRecord] = []
    lines = [ln for ln in data.decode("utf-8").splitlines() if ln.strip()]
    if len(lines) != vectors.shape[0]:
        raise CorruptSnapshot(
            f"{len(lines)} records but {vectors.shape[0]} vector rows"
        )
    for i, line in enumerate(lines):
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptSnapshot(f"record line {i + 1} unreadable: {exc}")
        records.append(
            UsageRecord(
                user_id=d["user"],
                query=d["query"],
                context=context_from_dict(d["context"]),
                label={k: float(v) for k, v in d["label"].items()},
                chosen=d["chosen"],
                timestamp=datetime.fromisoformat(d["ts"]),
                origin=d["origin"],
                is_chat=d["is_chat"],
                feature=vectors[i],
                record_id=d["id"],
            )
        )
    return records


# -- cold-start bootstrap ----------------------------------------------------

SYNTH_EPOCH = datetime(2000, 1, 1, tzinfo=timezone.utc)


def template_synthesizer(fn: FunctionDescriptor, n: int) -> list[UsageRecord]:
    """Offline stand-in for generated pre-training text."""
    out = []
    for i in range(n):
        out.append(
            UsageRecord(
                user_id="synthetic",
                query=f"{fn.action} {fn.app} sample {i + 1}",
                context=ContextSnapshot.empty(SYNTH_EPOCH),
                label={fn.id: 1.0},
                chosen=fn.id,
                timestamp=SYNTH_EPOCH,
                origin="synthetic",
                is_chat=fn.is_chat,
            )
        )
    return out


def largest_remainder(weights: Sequence[float], total: int) -> list[int]:
    """Integer quotas proportional to weights, summing to total exactly.

    All-zero weights fall back to a uniform split.  Fractional remainders
    are awarded largest-first, ties to the lower index, so the result is
    deterministic.
    """
    if total < 0:
        raise ValueError("total must be >= 0")
    if not weights:
        return []
    mass = math.fsum(weights)
    if mass <= 0:
        weights = [1.0] * len(weights)
        mass = float(len(weights))
    exact = [total * w / mass for w in weights]
    floors = [int(math.floor(x)) for x in exact]
    short = total - sum(floors)
    order = sorted(
        range(len(weights)), key=lambda i: (-(exact[i] - floors[i]), i)
    )
    for i in order[:short]:
        floors[i] += 1
    return floors


def bootstrap(
    user_functions: Sequence[FunctionDescriptor],
    global_pool: Sequence[UsageRecord],
    alpha: int = 10,
    synthesize: Callable[[FunctionDescriptor, int], list[UsageRecord]] | None = None,
) -> list[UsageRecord]:
    """Pick alpha x |functions| warm-up records for a brand-new user.

    Quota flows down two levels: each action gets alpha x (its function
    count), and within an action each function's share follows its global
    frequency in the pool.  Shortfalls are filled with synthetic records.
    """
    if not user_functions:
        raise EmptyFunctionSet("cannot bootstrap an empty collection")
    if synthesize is None:
        synthesize = template_synthesizer

    by_id: dict[str, list[UsageRecord]] = {}
    for rec in global_pool:
        by_id.setdefault(rec.chosen, []).append(rec)
    for pool in by_id.values():
        # newest first; stable within equal timestamps
        pool.sort(key=lambda r: r.timestamp, reverse=True)

    actions: dict[str, list[FunctionDescriptor]] = {}
    for fn in user_functions:
        actions.setdefault(fn.action, []).append(fn)

    total = alpha * len(user_functions)
    action_names = list(actions.keys())
    action_quotas = largest_remainder(
        [len(actions[a]) for a in action_names], total
    )

    selected: list[UsageRecord] = []
    for action, quota in zip(action_names, action_quotas):
        fns = actions[action]
        freqs = [float(len(by_id.get(fn.id, []))) for fn in fns]
        fn_quotas = largest_remainder(freqs, quota)
        for fn, want in zip(fns, fn_quotas):
            available = by_id.get(fn.id, [])[:want]
            for rec in available:
                selected.append(
                    replace(rec, origin="bootstrap", is_chat=fn.is_chat,
                            feature=None, record_id=-1)
                )
            deficit = want - len(available)
            if deficit > 0:
                selected.extend(synthesize(fn, deficit))

    selected.sort(key=lambda r: (r.timestamp, r.user_id, r.chosen, r.query))
    return selected


def load_pool(path: str) -> list[UsageRecord]:
    """Read a shared record pool in the snapshot JSONL schema (no vectors)."""
    out: list[UsageRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            d = json.loads(line)
            out.append(
                UsageRecord(
                    user_id=d["user"],
                    query=d["query"],
                    context=context_from_dict(d["context"]),
                    label={k: float(v) for k, v in d["label"].items()},
                    chosen=d["chosen"],
                    timestamp=datetime.fromisoformat(d["ts"]),
                    origin=d.get("origin", "live"),
                    is_chat=d.get("is_chat", False),
                    record_id=i,
                )
            )
    return out


def packaged_pool() -> list[UsageRecord]:
    """The starter pool that ships with the package.

    Synthetic traffic from fictional users covering the default
    collection; regenerate with scripts/make_global_pool.py.
    """
    ref = importlib.resources.files("intentportal").joinpath(
        "data/global_pool.jsonl"
    )
    with importlib.resources.as_file(ref) as path:
        return load_pool(str(path))
