"""Boundary-aware resolution over an ordered search path.

A :class:`BoundaryResolver` sits inside a private boundary and walks its
search path in order: local shards first, then outside registries, directly
or through a signing :class:`BridgeGateway`. Every request it sends across
its own boundary is recorded first in a hash-chained audit log.
"""

from __future__ import annotations

import enum
import json
import logging
from collections import Counter
from dataclasses import dataclass, replace
from typing import Any, Iterable, Mapping

from . import codec
from .agent_model import AgentFacts, AgentId, KeyPair, PolicyConstraints, validate_record, verify_signature, digest
from .attestation import AuditChain, AuditEvent, CapabilityToken
from .errors import AgentIndexError, ConfigError, NotFound, PolicyDenied, RecordValidationError
from .queries import AgentQuery, Query, encode_result, is_authoritative, select_providers
from .simnet import Message, SimNetwork, TraceEntry, is_private

log = logging.getLogger(__name__)

DEFAULT_BRIDGE_CACHE_TTL_MS = 1_000
DEFAULT_BRIDGE_MAX_PROVIDERS = 16


class RegistryKind(str, enum.Enum):
    UPGRADE = "upgrade-fabric"
    SWITCH = "switch-fabric"
    PRIVATE = "private-shard"


@dataclass(frozen=True)
class RegistryHandle:
    """One search-path entry. ``entry`` names the simnet node queries go to.

    With ``bridged`` set, ``entry`` is a bridge gateway that forwards to the
    registry and signs what it returns.
    """

    label: str
    kind: RegistryKind
    entry: str = ""
    bridged: bool = False

    def to_json(self) -> dict:
        out = {"label": self.label, "kind": self.kind.value}
        if self.entry:
            out["entry"] = self.entry
        if self.bridged:
            out["bridged"] = True
        return out


@dataclass(frozen=True)
class SearchPath:
    handles: tuple[RegistryHandle, ...]

    def __post_init__(self):
        problems = []
        if not self.handles:
            problems.append("search path must contain at least one registry")
        seen = set()
        for h in self.handles:
            if h.label in seen:
                problems.append(f"duplicate label {h.label!r}")
            seen.add(h.label)
        if problems:
            raise ConfigError(problems)

    @classmethod
    def of(cls, *handles: RegistryHandle) -> SearchPath:
        return cls(tuple(handles))

    @classmethod
    def from_json(cls, items: Iterable[Mapping[str, Any]]) -> SearchPath:
        problems, handles = [], []
        for i, item in enumerate(items):
            unknown = set(item) - {"label", "kind", "entry", "bridged"}
            if unknown:
                problems.append(f"search_path[{i}]: unknown keys {sorted(unknown)}")
            label = item.get("label")
            if not isinstance(label, str) or ":" not in label:
                problems.append(f"search_path[{i}]: label must look like 'scope:name'")
                continue
            try:
                kind = RegistryKind(item.get("kind"))
            except ValueError:
                problems.append(f"search_path[{i}]: kind must be one of {[k.value for k in RegistryKind]}")
                continue
            handles.append(RegistryHandle(label, kind, str(item.get("entry", "")), bool(item.get("bridged", False))))
        if problems:
            raise ConfigError(problems)
        return cls(tuple(handles))

    def to_json(self) -> list[dict]:
        return [h.to_json() for h in self.handles]

    def bind(self, entries: Mapping[str, str]) -> SearchPath:
        """Fill in entry node names by label."""
        return SearchPath(tuple(replace(h, entry=entries.get(h.label, h.entry)) for h in self.handles))

    def __iter__(self):
        return iter(self.handles)

    def __len__(self) -> int:
        return len(self.handles)


class PrivateShard:
    """An in-memory registry slice living inside one boundary."""

    def __init__(self, name: str, label: str, net: SimNetwork, processing_ms: int = 0):
        self.name = name
        self.label = label
        self.net = net
        self.records: dict[AgentId, AgentFacts] = {}
        self.tokens: dict[str, dict[AgentId, CapabilityToken]] = {}
        net.add_node(name, self._handle, boundary=label, processing_ms=processing_ms)

    def put(self, record: AgentFacts, tokens: Iterable[CapabilityToken] = ()) -> None:
        result = validate_record(record)
        if not result.ok:
            raise RecordValidationError(result.errors)
        current = self.records.get(record.agent_id)
        if current is None or record.version > current.version:
            self.records[record.agent_id] = record
        for token in tokens:
            self.tokens.setdefault(token.capability_path, {})[token.agent_id] = token

    def remove(self, agent_id: AgentId) -> None:
        self.records.pop(agent_id, None)
        for slot in self.tokens.values():
            slot.pop(agent_id, None)

    def answer(self, query: Query):
        if isinstance(query, AgentQuery):
            record = self.records.get(query.agent_id)
            if record is None:
                raise NotFound(f"{self.label}: no record for {query.agent_id.hex()}")
            return record
        candidates = [(tok, self.records[aid]) for aid, tok in self.tokens.get(query.path, {}).items() if aid in self.records]
        return select_providers(candidates, query.path, query.min_trust, self.net.engine.now)

    def _handle(self, msg: Message):
        if msg.kind != "registry.query":
            raise ValueError(f"{self.name}: unexpected message {msg.kind}")
        return self.answer(msg.body)


# -- bridge proofs ---------------------------------------------------------


@dataclass(frozen=True)
class ResolutionProof:
    bridge_key: bytes
    query_key: str
    result_digest: bytes
    timestamp_ms: int
    signature: bytes = b""

    def signing_payload(self) -> bytes:
        return codec.pack(b"resolution", self.bridge_key, codec.text(self.query_key), self.result_digest, codec.i64(self.timestamp_ms))

    def to_json(self) -> dict:
        return {
            "bridge_key": self.bridge_key.hex(),
            "query_key": self.query_key,
            "result_digest": self.result_digest.hex(),
            "timestamp_ms": self.timestamp_ms,
            "signature": self.signature.hex(),
        }


def result_digest(result) -> bytes:
    return digest(encode_result(result))


def sign_resolution(keypair: KeyPair, query_key: str, result, timestamp_ms: int) -> ResolutionProof:
    unsigned = ResolutionProof(keypair.public, query_key, result_digest(result), timestamp_ms)
    return replace(unsigned, signature=keypair.sign(unsigned.signing_payload()))


def verify_resolution_proof(proof: ResolutionProof, bridge_public_key: bytes, result=None, query_key: str | None = None) -> bool:
    """Signature check over (query, result digest, timestamp), optionally against a concrete answer."""
    if proof.bridge_key != bridge_public_key:
        return False
    if result is not None and result_digest(result) != proof.result_digest:
        return False
    if query_key is not None and query_key != proof.query_key:
        return False
    return verify_signature(bridge_public_key, proof.signature, proof.signing_payload())


@dataclass(frozen=True)
class CachedProof:
    result: Any
    proof: ResolutionProof
    cached_at_ms: int


@dataclass(frozen=True)
class BridgeAnswer:
    result: Any
    proof: ResolutionProof
    cached: bool


@dataclass(frozen=True)
class BridgeTraversal:
    result: Any
    proof: ResolutionProof
    latency_ms: int
    cached: bool


class BridgeGateway:
    """Caching, signing forwarder between two tiers.

    The gateway node sits on the ``to_label`` side; requests reaching it
    from the ``from_label`` side are therefore boundary crossings.
    """

    def __init__(self, name: str, net: SimNetwork, keypair: KeyPair, from_label: str, to_label: str, downstream: str, *,
                 cache_ttl_ms: int = DEFAULT_BRIDGE_CACHE_TTL_MS, max_providers: int = DEFAULT_BRIDGE_MAX_PROVIDERS,
                 processing_ms: int = 0, downstream_timeout_ms: int = 5_000):
        if cache_ttl_ms < 0 or max_providers < 1:
            raise ValueError("cache_ttl_ms must be >= 0 and max_providers >= 1")
        self.name = name
        self.net = net
        self.engine = net.engine
        self.keypair = keypair
        self.from_label = from_label
        self.to_label = to_label
        self.downstream = downstream
        self.cache_ttl_ms = cache_ttl_ms
        self.max_providers = max_providers
        self.downstream_timeout_ms = downstream_timeout_ms
        self.cache: dict[str, CachedProof] = {}
        self.hits = 0
        self.misses = 0
        net.add_node(name, self._handle, boundary=to_label, processing_ms=processing_ms)

    @property
    def public_key(self) -> bytes:
        return self.keypair.public

    def cached(self, query: Query) -> CachedProof | None:
        entry = self.cache.get(query.key())
        if entry is not None and self.engine.now - entry.cached_at_ms < self.cache_ttl_ms:
            return entry
        return None

    def _handle(self, msg: Message):
        if msg.kind != "bridge.query":
            raise ValueError(f"{self.name}: unexpected message {msg.kind}")
        entry = self.cached(msg.body)
        if entry is not None:
            self.hits += 1
            return BridgeAnswer(entry.result, entry.proof, True)
        self.misses += 1
        return self.engine.spawn(self._cold(msg.body))

    def _cold(self, query: Query):
        key = query.key()
        result = yield self.net.rpc(self.name, self.downstream, "registry.query", query, note=key,
                                    timeout_ms=self.downstream_timeout_ms)
        if isinstance(result, list):
            result = result[: self.max_providers]
        now = self.engine.now
        proof = sign_resolution(self.keypair, key, result, now)
        if is_authoritative(result):
            self.cache[key] = CachedProof(result, proof, now)
        return BridgeAnswer(result, proof, False)

    def traverse(self, client: str, query: Query, timeout_ms: int = 5_000):
        """Process: ``client`` asks through the bridge; resolves to a BridgeTraversal."""
        return self.engine.spawn(self._traverse(client, query, timeout_ms))

    def _traverse(self, client: str, query: Query, timeout_ms: int):
        start = self.engine.now
        answer = yield self.net.rpc(client, self.name, "bridge.query", query, note=query.key(), timeout_ms=timeout_ms)
        return BridgeTraversal(answer.result, answer.proof, self.engine.now - start, answer.cached)


def bridge_traverse(bridge: BridgeGateway, query: Query, t: int | None = None, client: str = "") -> BridgeTraversal:
    """Synchronous traversal from ``client``; raises NotFound when the downstream registry has no answer."""
    if t is not None:
        bridge.engine.run_until(t)
    return bridge.engine.run_process(bridge.traverse(client, query))


# -- resolver ----------------------------------------------------------------


@dataclass(frozen=True)
class Resolution:
    result: Any
    events: tuple[AuditEvent, ...]
    latency_ms: int
    position: int
    label: str
    proof: ResolutionProof | None = None
    hop_latency_ms: int = 0
    from_cache: bool = False


class BoundaryResolver:
    def __init__(self, name: str, home: str, net: SimNetwork, keypair: KeyPair, *,
                 bridges: Iterable[BridgeGateway] = (), timeout_ms: int = 5_000):
        if not is_private(home):
            raise ValueError("a boundary resolver must live in a private boundary")
        self.name = name
        self.home = home
        self.net = net
        self.engine = net.engine
        self.keypair = keypair
        self.chain = AuditChain(keypair.public)
        self.bridges = {b.name: b for b in bridges}
        self.timeout_ms = timeout_ms
        net.add_node(name, self._handle, boundary=home)

    def _handle(self, msg: Message):
        raise ValueError(f"{self.name}: resolvers do not accept {msg.kind}")

    def add_bridge(self, bridge: BridgeGateway) -> None:
        self.bridges[bridge.name] = bridge

    def permitted(self, policy: PolicyConstraints, label: str) -> bool:
        if label == self.home:
            return True
        if not is_private(label) and not policy.allow_external_resolution:
            return False
        return not policy.allowed_boundaries or label in policy.allowed_boundaries

    def resolve_async(self, path: SearchPath, query: Query, policy: PolicyConstraints, actor: AgentId | None = None):
        return self.engine.spawn(self._resolve(path, query, policy, actor or self.keypair.agent_id))

    def resolve(self, path: SearchPath, query: Query, policy: PolicyConstraints, t: int | None = None,
                actor: AgentId | None = None) -> Resolution:
        if t is not None:
            self.engine.run_until(t)
        return self.engine.run_process(self.resolve_async(path, query, policy, actor))

    def _resolve(self, path: SearchPath, query: Query, policy: PolicyConstraints, actor: AgentId):
        start = self.engine.now
        key = query.key()
        events: list[AuditEvent] = []
        for position, handle in enumerate(path):
            if not self.permitted(policy, handle.label):
                raise PolicyDenied(f"policy forbids resolving {key} at {handle.label}")
            if handle.label != self.home:
                events.append(self.chain.append(self.keypair, timestamp_ms=self.engine.now, actor=actor, query=key,
                                                from_boundary=self.home, to_boundary=handle.label))
            else:
                log.debug("%s: internal lookup at %s", self.name, handle.label)
            kind = "bridge.query" if handle.bridged else "registry.query"
            sent = self.engine.now
            fut = self.net.rpc(self.name, handle.entry, kind, query, note=key, timeout_ms=self.timeout_ms)
            try:
                answer = yield fut
            except AgentIndexError as exc:
                log.debug("%s: miss at %s (%s)", self.name, handle.label, exc)
                continue
            proof, cached = None, False
            if handle.bridged:
                bridge = self.bridges.get(handle.entry)
                if bridge is None or not verify_resolution_proof(answer.proof, bridge.public_key, answer.result, key):
                    log.warning("%s: discarding unverifiable bridge answer from %s", self.name, handle.entry)
                    continue
                answer, proof, cached = answer.result, answer.proof, answer.cached
            if self._authoritative(query, answer):
                return Resolution(answer, tuple(events), self.engine.now - start, position, handle.label, proof,
                                  self.engine.now - sent, cached)
        raise NotFound(f"{key} not found on any registry in the search path")

    @staticmethod
    def _authoritative(query: Query, answer) -> bool:
        if isinstance(query, AgentQuery):
            return isinstance(answer, AgentFacts) and answer.agent_id == query.agent_id and validate_record(answer).ok
        return isinstance(answer, list) and is_authoritative(answer)


# -- audit completeness ------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    unmatched_messages: tuple[TraceEntry, ...]
    unmatched_events: tuple[AuditEvent, ...]
    crossings: int
    events: int

    @property
    def ok(self) -> bool:
        return not self.unmatched_messages and not self.unmatched_events

    def to_json(self) -> dict:
        return {
            "crossings": self.crossings,
            "events": self.events,
            "unmatched_messages": [e.to_json() | {"note": e.note} for e in self.unmatched_messages],
            "unmatched_events": [e.to_json() for e in self.unmatched_events],
        }


def _event_key(ev: AuditEvent) -> tuple:
    return (ev.timestamp_ms, ev.from_boundary, ev.to_boundary, ev.query)


def _trace_key(entry: TraceEntry) -> tuple:
    return (entry.t_send, entry.src_boundary, entry.dst_boundary, entry.note)


def audit_completeness(chains: AuditChain | Iterable[AuditChain], trace: Iterable[TraceEntry]) -> AuditReport:
    """Pair boundary-crossing requests in ``trace`` with audit events, one to one."""
    if isinstance(chains, AuditChain):
        chains = [chains]
    events = [ev for chain in chains for ev in chain.events]
    crossing = [e for e in trace if e.crosses_boundary]
    remaining = Counter(_event_key(ev) for ev in events)
    unmatched_msgs = []
    for entry in crossing:
        k = _trace_key(entry)
        if remaining[k] > 0:
            remaining[k] -= 1
        else:
            unmatched_msgs.append(entry)
    spare = Counter({k: v for k, v in remaining.items() if v > 0})
    unmatched_events = []
    for ev in events:
        k = _event_key(ev)
        if spare[k] > 0:
            spare[k] -= 1
            unmatched_events.append(ev)
    return AuditReport(tuple(unmatched_msgs), tuple(unmatched_events), len(crossing), len(events))


def load_search_path(text: str) -> SearchPath:
    return SearchPath.from_json(json.loads(text))


__all__ = [
    "AuditReport", "BoundaryResolver", "BridgeAnswer", "BridgeGateway", "BridgeTraversal", "CachedProof",
    "PrivateShard", "RegistryHandle", "RegistryKind", "Resolution", "ResolutionProof", "SearchPath",
    "audit_completeness", "bridge_traverse", "load_search_path", "result_digest", "sign_resolution",
    "verify_resolution_proof",
]
