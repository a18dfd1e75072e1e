"""Hierarchical caching resolvers with TTL expiry and optional push refresh.

The root holds the authoritative store. Every other resolver caches what it
has fetched; a cache entry remembers when the root produced it, so a copy
handed down the tree ages from that moment rather than from the moment it
reached the child (the same countdown DNS applies to TTLs).

With push enabled, a publish sends the new record down every subscription
edge and each resolver on the way refreshes its cache.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .agent_model import AgentFacts, AgentId, HlcStamp, validate_record
from .attestation import CapabilityToken
from .errors import NotFound, PushUnavailable, RecordValidationError, StaleVersion
from .queries import AgentQuery, CapabilityQuery, Provider, Query, select_providers
from .simnet import Message, SimNetwork

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class UpgradeFabricConfig:
    tree_depth: int = 3
    fanout: int = 5
    resolver_count: int | None = None
    push_enabled: bool = False
    ttl_override_ms: int | None = None
    processing_ms: int = 1
    boundary: str = "public:dns"
    name_prefix: str = "res"

    def __post_init__(self):
        if self.tree_depth < 1:
            raise ValueError("tree_depth must be >= 1")
        if self.fanout < 1:
            raise ValueError("fanout must be >= 1")
        if self.resolver_count is not None:
            full = sum(self.fanout**i for i in range(self.tree_depth + 1))
            shallower = sum(self.fanout**i for i in range(self.tree_depth))
            if not (shallower < self.resolver_count <= full):
                raise ValueError(
                    f"resolver_count {self.resolver_count} does not give depth {self.tree_depth} at fanout {self.fanout}"
                )
        if self.processing_ms < 0:
            raise ValueError("processing_ms must be non-negative")


@dataclass
class CacheEntry:
    record: AgentFacts
    inserted_ms: int


@dataclass
class ResolverNode:
    node_id: str
    depth: int
    parent: ResolverNode | None = None
    children: list[ResolverNode] = field(default_factory=list)
    cache: dict[AgentId, CacheEntry] = field(default_factory=dict)
    subscriptions: dict[AgentId, int] = field(default_factory=dict)
    # agent -> children whose subtree holds a subscriber, in insertion order
    push_edges: dict[AgentId, dict[str, ResolverNode]] = field(default_factory=dict)

    @property
    def is_root(self) -> bool:
        return self.parent is None

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class PublicationReceipt:
    agent_id: AgentId
    version: HlcStamp
    published_ms: int
    pushes_scheduled: int


@dataclass(frozen=True)
class TtlResolution:
    record: AgentFacts
    latency_ms: int
    cache_depth_hit: int
    served_ms: int


@dataclass(frozen=True)
class ConvergenceSample:
    resolver_id: str
    depth: int
    converged_at_ms: int


class UpgradeFabric:
    """A resolver tree attached to ``net``; build with :func:`build_tree`."""

    def __init__(self, config: UpgradeFabricConfig, net: SimNetwork):
        self.config = config
        self.net = net
        self.engine = net.engine
        self.resolvers: list[ResolverNode] = []
        self.by_name: dict[str, ResolverNode] = {}
        self.authoritative: dict[AgentId, AgentFacts] = {}
        self.history: dict[AgentId, list[tuple[int, HlcStamp]]] = {}
        self.tokens: dict[str, dict[AgentId, CapabilityToken]] = {}
        self._next_sub = 0
        self._observers: list[Callable[[ResolverNode, AgentFacts], None]] = []
        self._build()

    # -- topology ---------------------------------------------------------

    def _build(self) -> None:
        cfg = self.config
        total = cfg.resolver_count or sum(cfg.fanout**i for i in range(cfg.tree_depth + 1))
        root = self._add(ResolverNode(f"{cfg.name_prefix}-0", 0))
        frontier = [root]
        while len(self.resolvers) < total:
            nxt = []
            for parent in frontier:
                for _ in range(cfg.fanout):
                    if len(self.resolvers) >= total:
                        break
                    child = self._add(ResolverNode(f"{cfg.name_prefix}-{len(self.resolvers)}", parent.depth + 1, parent))
                    parent.children.append(child)
                    nxt.append(child)
            frontier = nxt

    def _add(self, node: ResolverNode) -> ResolverNode:
        self.resolvers.append(node)
        self.by_name[node.node_id] = node
        self.net.add_node(node.node_id, lambda msg, n=node: self._handle(n, msg),
                          boundary=self.config.boundary, processing_ms=self.config.processing_ms)
        return node

    @property
    def root(self) -> ResolverNode:
        return self.resolvers[0]

    @property
    def leaves(self) -> list[ResolverNode]:
        return [r for r in self.resolvers if r.is_leaf]

    @property
    def depth(self) -> int:
        return max(r.depth for r in self.resolvers)

    def node(self, leaf: ResolverNode | str) -> ResolverNode:
        return leaf if isinstance(leaf, ResolverNode) else self.by_name[leaf]

    def add_observer(self, fn: Callable[[ResolverNode, AgentFacts], None]) -> None:
        """``fn(node, record)`` runs whenever a resolver starts serving ``record``."""
        self._observers.append(fn)

    def remove_observer(self, fn) -> None:
        self._observers.remove(fn)

    # -- cache ------------------------------------------------------------

    def ttl_for(self, record: AgentFacts) -> int:
        return self.config.ttl_override_ms if self.config.ttl_override_ms is not None else record.ttl_ms

    def _fresh(self, node: ResolverNode, agent_id: AgentId) -> CacheEntry | None:
        if node.is_root:
            rec = self.authoritative.get(agent_id)
            return CacheEntry(rec, self.engine.now) if rec is not None else None
        entry = node.cache.get(agent_id)
        if entry is not None and self.engine.now - entry.inserted_ms < self.ttl_for(entry.record):
            return entry
        return None

    def _store(self, node: ResolverNode, entry: CacheEntry) -> None:
        aid = entry.record.agent_id
        cur = node.cache.get(aid)
        if cur is not None:
            if cur.record.version > entry.record.version:
                return
            if cur.record.version == entry.record.version and cur.inserted_ms >= entry.inserted_ms:
                return
        node.cache[aid] = entry
        if cur is None or cur.record.version != entry.record.version:
            for fn in self._observers:
                fn(node, entry.record)

    # -- message handling ---------------------------------------------------

    def _handle(self, node: ResolverNode, msg: Message):
        if msg.kind == "upgrade.query":
            return self.engine.spawn(self._resolve_at(node, msg.body))
        if msg.kind == "upgrade.push":
            self._on_push(node, msg.body)
            return None
        if msg.kind == "registry.query":
            return self.engine.spawn(self._registry_query(node, msg.body))
        if msg.kind == "upgrade.capability":
            return self._capability_answer(msg.body)
        raise ValueError(f"{node.node_id}: unexpected message {msg.kind}")

    def _resolve_at(self, node: ResolverNode, agent_id: AgentId):
        entry = self._fresh(node, agent_id)
        if entry is not None:
            return entry, 0
        if node.is_root:
            raise NotFound(f"agent {agent_id.hex()} is not registered")
        entry, level = yield self.net.rpc(node.node_id, node.parent.node_id, "upgrade.query", agent_id, timeout_ms=60_000)
        self._store(node, entry)
        return entry, level + 1

    def _on_push(self, node: ResolverNode, entry: CacheEntry) -> None:
        self._store(node, entry)
        self._push_down(node, entry)

    def _push_down(self, node: ResolverNode, entry: CacheEntry) -> int:
        children = node.push_edges.get(entry.record.agent_id, {})
        for child in children.values():
            self.net.send(node.node_id, child.node_id, "upgrade.push", entry)
        return len(children)

    # -- operations ---------------------------------------------------------

    def publish(self, record: AgentFacts, t: int | None = None) -> PublicationReceipt:
        if t is not None:
            self.engine.run_until(t)
        result = validate_record(record)
        if not result.ok:
            raise RecordValidationError(result.errors)
        cur = self.authoritative.get(record.agent_id)
        if cur is not None and record.version <= cur.version:
            raise StaleVersion(f"version {record.version} does not exceed {cur.version}")
        now = self.engine.now
        self.authoritative[record.agent_id] = record
        self.history.setdefault(record.agent_id, []).append((now, record.version))
        for fn in self._observers:
            fn(self.root, record)
        pushes = 0
        if self.config.push_enabled:
            pushes = self._push_down(self.root, CacheEntry(record, now))
        return PublicationReceipt(record.agent_id, record.version, now, pushes)

    def register_token(self, token: CapabilityToken) -> None:
        """Attach a capability token to the authoritative zone (the SVCB-style capability hash)."""
        self.tokens.setdefault(token.capability_path, {})[token.agent_id] = token

    def query(self, leaf: ResolverNode | str, agent_id: AgentId):
        """Start a resolution at ``leaf``; the returned Process yields a TtlResolution."""
        return self.engine.spawn(self._query(self.node(leaf), agent_id))

    def _query(self, leaf: ResolverNode, agent_id: AgentId):
        start = self.engine.now
        entry, level = yield from self._resolve_at(leaf, agent_id)
        return TtlResolution(entry.record, self.engine.now - start, level, self.engine.now)

    def resolve_ttl(self, leaf: ResolverNode | str, agent_id: AgentId, t: int | None = None) -> TtlResolution:
        if t is not None:
            self.engine.run_until(t)
        return self.engine.run_process(self.query(leaf, agent_id))

    def subscribe_push(self, leaf: ResolverNode | str, agent_id: AgentId) -> int:
        """Install a push subscription along the ancestor path of ``leaf``."""
        if not self.config.push_enabled:
            raise PushUnavailable("push is disabled for this fabric")
        node = self.node(leaf)
        self._next_sub += 1
        node.subscriptions[agent_id] = self._next_sub
        child = node
        while child.parent is not None:
            child.parent.push_edges.setdefault(agent_id, {})[child.node_id] = child
            child = child.parent
        return self._next_sub

    def subscribe_all(self, agent_id: AgentId) -> list[int]:
        return [self.subscribe_push(leaf, agent_id) for leaf in self.leaves]

    def push_convergence(self, record: AgentFacts, t: int | None = None) -> list[ConvergenceSample]:
        """Publish ``record`` and return when each resolver first serves it."""
        if not self.config.push_enabled:
            raise PushUnavailable("push is disabled for this fabric")
        missing = [leaf.node_id for leaf in self.leaves if record.agent_id not in leaf.subscriptions]
        if missing:
            raise ValueError(f"{len(missing)} leaves are not subscribed to {record.agent_id.hex()}")
        if t is not None:
            self.engine.run_until(t)
        seen: dict[str, int] = {}

        def watch(node: ResolverNode, served: AgentFacts) -> None:
            if served.agent_id == record.agent_id and served.version >= record.version:
                seen.setdefault(node.node_id, self.engine.now)

        self.add_observer(watch)
        try:
            self.publish(record)
            total = len(self.resolvers)
            horizon = self.engine.now + 600_000
            self.engine.run_while(lambda: len(seen) < total, horizon)
        finally:
            self.remove_observer(watch)
        return [ConvergenceSample(r.node_id, r.depth, seen[r.node_id]) for r in self.resolvers if r.node_id in seen]

    # -- staleness accounting -------------------------------------------------

    def staleness_ms(self, agent_id: AgentId, served: HlcStamp, at_ms: int) -> int:
        """How long the authoritative store had held something newer than ``served`` at ``at_ms``."""
        for t_pub, version in self.history.get(agent_id, ()):
            if version > served:
                return max(0, at_ms - t_pub)
        return 0

    # -- registry adapter ---------------------------------------------------

    def _registry_query(self, node: ResolverNode, query: Query):
        if isinstance(query, AgentQuery):
            res = yield from self._query(node, query.agent_id)
            return res.record
        # capability lookups are answered by the authoritative zone, uncached
        if node.is_root:
            return self._capability_answer(query)
        return (yield self.net.rpc(node.node_id, self.root.node_id, "upgrade.capability", query, timeout_ms=60_000))

    def _capability_answer(self, query: CapabilityQuery) -> list[Provider]:
        candidates = [(token, self.authoritative[aid]) for aid, token in self.tokens.get(query.path, {}).items()
                      if aid in self.authoritative]
        return select_providers(candidates, query.path, query.min_trust, self.engine.now)


def build_tree(config: UpgradeFabricConfig, simnet: SimNetwork) -> UpgradeFabric:
    return UpgradeFabric(config, simnet)


def write_convergence_csv(samples: Iterable[ConvergenceSample], fp) -> None:
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(["resolver_id", "depth", "converged_at_ms"])
    for s in samples:
        w.writerow([s.resolver_id, s.depth, s.converged_at_ms])
