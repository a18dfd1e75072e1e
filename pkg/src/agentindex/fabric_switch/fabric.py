"""Kademlia-style DHT with gossip anti-entropy and a capability index.

Records are placed on the ``k`` nodes closest to their agent ID and then
spread to every replica by push-pull gossip. Capability announcements are
placed on the ``k`` nodes closest to the digest of the capability path;
a query looks that key up and filters the providers it finds.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable

from ..agent_model import AgentFacts, AgentId, validate_record
from ..attestation import CapabilityToken
from ..errors import EmptyNetwork, NotFound, RecordValidationError
from ..queries import AgentQuery, Provider, select_providers
from ..simnet import Message, SimNetwork
from .crdt import CrdtRecord, Tombstone, crdt_merge, newer
from .routing import ID_BITS, RoutingTable, closest

log = logging.getLogger(__name__)


def capability_key(path: str) -> int:
    return int.from_bytes(hashlib.sha256(b"capability:" + path.encode()).digest(), "big")


@dataclass(frozen=True)
class GossipConfig:
    fanout: int = 3
    period_ms: int = 10
    mode: str = "push-pull"

    def __post_init__(self):
        if self.fanout < 1:
            raise ValueError("gossip fanout must be >= 1")
        if self.period_ms < 1:
            raise ValueError("gossip period must be >= 1 ms")
        if self.mode != "push-pull":
            raise ValueError("only push-pull anti-entropy is supported")


@dataclass(frozen=True)
class SwitchFabricConfig:
    k: int = 20
    alpha: int = 3
    rpc_timeout_ms: int = 100
    processing_ms: int = 0
    boundary: str = "public:mesh"
    name_prefix: str = "sw"
    gossip: GossipConfig = field(default_factory=GossipConfig)

    def __post_init__(self):
        if self.k < 1 or self.alpha < 1:
            raise ValueError("k and alpha must be >= 1")


class DhtNode:
    __slots__ = ("name", "node_id", "table", "store", "providers", "rng", "_digest")

    def __init__(self, name: str, node_id: int, k: int, rng: random.Random):
        self.name = name
        self.node_id = node_id
        self.table = RoutingTable(node_id, k)
        self.store: dict[AgentId, CrdtRecord] = {}
        self.providers: dict[str, dict[AgentId, CapabilityToken]] = {}
        self.rng = rng
        self._digest: tuple[bytes, tuple] | None = None

    def digest(self) -> tuple[bytes, tuple]:
        """(summary hash, sorted ``(agent_id, stamp)`` pairs) for the record store."""
        if self._digest is None:
            entries = tuple(sorted((aid, rec.stamp) for aid, rec in self.store.items()))
            h = hashlib.sha256()
            for aid, stamp in entries:
                h.update(aid.raw)
                h.update(stamp.encode())
            self._digest = (h.digest(), entries)
        return self._digest

    def provider_entries(self, path: str) -> list[tuple[CapabilityToken, CrdtRecord | None]]:
        return [(tok, self.store.get(aid)) for aid, tok in self.providers.get(path, {}).items()]

    def __repr__(self) -> str:
        return f"DhtNode({self.name})"


@dataclass(frozen=True)
class LookupResult:
    contacts: list[int]
    hop_count: int
    latency_ms: int
    values: list = field(default_factory=list)


@dataclass(frozen=True)
class StoreReceipt:
    agent_id: AgentId
    holders: list[str]
    hop_count: int
    latency_ms: int


@dataclass(frozen=True)
class CapabilityResult:
    providers: list[Provider]
    latency_ms: int
    hop_count: int


@dataclass
class PropagationResult:
    t0: int
    period_ms: int
    live_nodes: int
    first_seen: dict[str, int]

    @property
    def complete(self) -> bool:
        return len(self.first_seen) >= self.live_nodes

    @property
    def all_node_ms(self) -> int | None:
        return max(self.first_seen.values()) - self.t0 if self.complete else None

    @property
    def first_peer_ms(self) -> int | None:
        times = sorted(self.first_seen.values())
        return times[1] - self.t0 if len(times) > 1 else (0 if times else None)

    @property
    def rounds(self) -> int | None:
        ms = self.all_node_ms
        return None if ms is None else math.ceil(ms / self.period_ms)


class SwitchFabric:
    def __init__(self, config: SwitchFabricConfig, net: SimNetwork):
        self.config = config
        self.net = net
        self.engine = net.engine
        self.nodes: dict[str, DhtNode] = {}
        self.by_id: dict[int, DhtNode] = {}
        self.live: list[DhtNode] = []
        self.protected: set[str] = set()
        self._id_rng = self.engine.rng("switch", config.name_prefix, "ids")
        self._observers: list[Callable[[DhtNode, CrdtRecord], None]] = []
        self._gossiping = False
        self._counter = 0

    # -- membership -------------------------------------------------------

    def add_node(self, name: str | None = None, node_id: int | None = None) -> DhtNode:
        """Create a node and attach it to the network without joining it."""
        if name is None:
            name = f"{self.config.name_prefix}-{self._counter:04d}"
        self._counter += 1
        if node_id is None:
            node_id = self._id_rng.getrandbits(ID_BITS)
            while node_id in self.by_id:
                node_id = self._id_rng.getrandbits(ID_BITS)
        node = DhtNode(name, node_id, self.config.k, self.engine.rng("gossip", name))
        self.nodes[name] = node
        self.by_id[node_id] = node
        self.live.append(node)
        self.net.add_node(name, lambda msg, n=node: self._handle(n, msg),
                          boundary=self.config.boundary, processing_ms=self.config.processing_ms)
        if self._gossiping:
            self._start_timer(node)
        return node

    def remove_node(self, node: DhtNode | str) -> None:
        node = self._node(node)
        if node.name in self.net.node_names:
            self.net.remove_node(node.name)
        if node in self.live:
            self.live.remove(node)

    def is_live(self, node: DhtNode) -> bool:
        return self.net.is_live(node.name)

    def _node(self, node: DhtNode | str) -> DhtNode:
        return node if isinstance(node, DhtNode) else self.nodes[node]

    def join(self, node: DhtNode, bootstrap: DhtNode | None):
        """Kademlia join: seed the table with ``bootstrap`` then look up our own ID."""
        if bootstrap is not None and bootstrap is not node:
            node.table.add(bootstrap.node_id)
        return self.engine.spawn(self._join(node))

    def _join(self, node: DhtNode):
        result = yield from self._lookup(node, node.node_id)
        return result

    def dht_join(self, node: DhtNode, bootstrap: DhtNode | None, t: int | None = None) -> DhtNode:
        if t is not None:
            self.engine.run_until(t)
        self.engine.run_process(self.join(node, bootstrap))
        return node

    def bootstrap(self, count: int, rng: random.Random | None = None) -> list[DhtNode]:
        """Grow the network to ``count`` live nodes by sequential joins."""
        rng = rng or self.engine.rng("switch", self.config.name_prefix, "bootstrap")
        created = []
        while len(self.live) < count:
            contact = rng.choice(self.live) if self.live else None
            node = self.add_node()
            self.dht_join(node, contact)
            created.append(node)
        return created

    # churn hooks used by simnet.apply_churn
    def churn_join(self):
        contact = self.live[0] if self.live else None
        if self.live:
            contact = self.live[self.engine.rng("churn-bootstrap", self._counter).randrange(len(self.live))]
        node = self.add_node()
        self.join(node, contact)
        return node

    def churn_leave(self, rng: random.Random):
        candidates = [n for n in self.live if n.name not in self.protected]
        if not candidates:
            return None
        victim = candidates[rng.randrange(len(candidates))]
        self.remove_node(victim)
        return victim

    def add_observer(self, fn: Callable[[DhtNode, CrdtRecord], None]) -> None:
        """``fn(node, value)`` runs whenever a node's stored value for an agent changes."""
        self._observers.append(fn)

    def remove_observer(self, fn) -> None:
        self._observers.remove(fn)

    # -- local state --------------------------------------------------------

    def merge_local(self, node: DhtNode, incoming: CrdtRecord) -> bool:
        """Merge ``incoming`` into ``node``'s store. Forged or invalid values are dropped."""
        current = node.store.get(incoming.agent_id)
        if not newer(incoming, current):
            return False
        if not incoming.is_valid():
            log.debug("%s dropped invalid value for %s", node.name, incoming.agent_id)
            return False
        merged = incoming if current is None else crdt_merge(current, incoming)
        node.store[incoming.agent_id] = merged
        node._digest = None
        for fn in self._observers:
            fn(node, merged)
        return True

    def _add_provider(self, node: DhtNode, path: str, value: CrdtRecord, token: CapabilityToken) -> None:
        self.merge_local(node, value)
        slot = node.providers.setdefault(path, {})
        cur = slot.get(token.agent_id)
        if cur is None or token.not_after_ms >= cur.not_after_ms:
            slot[token.agent_id] = token

    # -- message handling ---------------------------------------------------

    def _handle(self, node: DhtNode, msg: Message):
        kind = msg.kind
        if kind == "gossip.digest":
            return self._on_digest(node, msg)
        if kind == "gossip.reply":
            return self._on_gossip_reply(node, msg)
        if kind == "gossip.push":
            for value in msg.body:
                self.merge_local(node, value)
            return None
        caller = self.nodes.get(msg.src)
        if caller is not None:
            node.table.add(caller.node_id)
        if kind == "dht.find":
            key, want, path = msg.body
            contacts = node.table.closest(key, self.config.k)
            value = None
            if want == "record":
                value = node.store.get(AgentId.from_int(key))
            elif want == "providers":
                value = node.provider_entries(path) or None
            return contacts, value
        if kind == "dht.store":
            self.merge_local(node, msg.body)
            return True
        if kind == "dht.provide":
            path, value, token = msg.body
            self._add_provider(node, path, value, token)
            return True
        if kind == "registry.query":
            return self.engine.spawn(self._registry_query(node, msg.body))
        raise ValueError(f"{node.name}: unexpected message {kind}")

    # -- lookup ---------------------------------------------------------------

    def _lookup(self, origin: DhtNode, key: int, want: str | None = None, path: str | None = None):
        """Round-based iterative lookup.

        Each round queries the ``alpha`` closest unqueried candidates; a round
        that fails to get closer widens the next round to every unqueried
        member of the current closest-``k``. The lookup ends once every member
        of the closest-``k`` has answered (or, for value lookups, as soon as a
        round returns a value).
        """
        if not self.net.is_live(origin.name):
            raise EmptyNetwork(f"{origin.name} is not part of the network")
        k, alpha = self.config.k, self.config.alpha
        start = self.engine.now
        known = set(origin.table.closest(key, k))
        known.add(origin.node_id)
        queried = {origin.node_id}
        failed: set[int] = set()
        values = []
        hops = 0
        best = min(known, key=lambda i: i ^ key)
        broad = False
        while True:
            top = heapq.nsmallest(k, known, key=lambda i: i ^ key)
            pending = [i for i in top if i not in queried]
            if not pending:
                break
            batch = pending if broad else pending[:alpha]
            hops += 1
            queried.update(batch)
            futures = [
                self.net.rpc(origin.name, self.by_id[i].name, "dht.find", (key, want, path),
                             timeout_ms=self.config.rpc_timeout_ms, reply_size=_reply_size)
                for i in batch
            ]
            yield futures
            for i, fut in zip(batch, futures):
                if fut.ok:
                    contacts, value = fut.value
                    origin.table.add(i)
                    for c in contacts:
                        if c not in failed:
                            known.add(c)
                    if value is not None:
                        values.append((i, value))
                else:
                    failed.add(i)
                    known.discard(i)
                    origin.table.remove(i)
            if want is not None and values:
                break
            new_best = min(known, key=lambda i: i ^ key)
            broad = (new_best ^ key) >= (best ^ key)
            best = new_best
        contacts = heapq.nsmallest(k, known, key=lambda i: i ^ key)
        return LookupResult(contacts, hops, self.engine.now - start, values)

    def lookup(self, origin: DhtNode | str, key: int):
        return self.engine.spawn(self._lookup(self._node(origin), key))

    def dht_lookup(self, origin: DhtNode | str, key: int | AgentId, t: int | None = None) -> LookupResult:
        if t is not None:
            self.engine.run_until(t)
        return self.engine.run_process(self.lookup(origin, int(key)))

    def brute_force_closest(self, key: int, count: int | None = None) -> list[int]:
        return closest([n.node_id for n in self.live], key, count or self.config.k)

    # -- store ------------------------------------------------------------------

    def _store(self, origin: DhtNode, value: CrdtRecord):
        start = self.engine.now
        res = yield from self._lookup(origin, int(value.agent_id))
        holders = []
        futures = []
        for cid in res.contacts:
            target = self.by_id[cid]
            if target is origin:
                self.merge_local(origin, value)
                holders.append(origin.name)
            else:
                futures.append((target, self.net.rpc(origin.name, target.name, "dht.store", value,
                                                      timeout_ms=self.config.rpc_timeout_ms)))
        if futures:
            yield [f for _, f in futures]
        holders.extend(t.name for t, f in futures if f.ok)
        return StoreReceipt(value.agent_id, sorted(holders), res.hop_count, self.engine.now - start)

    def store(self, origin: DhtNode | str, value: AgentFacts | Tombstone | CrdtRecord):
        value = value if isinstance(value, CrdtRecord) else CrdtRecord.of(value)
        if not value.is_valid():
            if isinstance(value.record, AgentFacts):
                raise RecordValidationError(validate_record(value.record).errors)
            raise ValueError("tombstone signature does not verify")
        return self.engine.spawn(self._store(self._node(origin), value))

    def dht_store(self, origin: DhtNode | str, value, t: int | None = None) -> StoreReceipt:
        if t is not None:
            self.engine.run_until(t)
        return self.engine.run_process(self.store(origin, value))

    def _announce(self, origin: DhtNode, value: CrdtRecord, tokens: list[CapabilityToken]):
        receipts = [(yield from self._store(origin, value))]
        for token in tokens:
            res = yield from self._lookup(origin, capability_key(token.capability_path))
            futures = []
            for cid in res.contacts:
                target = self.by_id[cid]
                if target is origin:
                    self._add_provider(origin, token.capability_path, value, token)
                else:
                    futures.append(self.net.rpc(origin.name, target.name, "dht.provide",
                                                (token.capability_path, value, token), timeout_ms=self.config.rpc_timeout_ms))
            if futures:
                yield futures
        return receipts[0]

    def announce(self, origin: DhtNode | str, record: AgentFacts, tokens: Iterable[CapabilityToken]):
        """Store ``record`` and register it as a provider for each token's capability."""
        value = CrdtRecord.of(record)
        if not value.is_valid():
            raise RecordValidationError(validate_record(record).errors)
        return self.engine.spawn(self._announce(self._node(origin), value, list(tokens)))

    def revoke(self, origin: DhtNode | str, tombstone: Tombstone, paths: Iterable[str] = ()):
        """Write ``tombstone`` at the record's replicas and at each capability index it was listed in."""
        value = CrdtRecord.of(tombstone)
        if not value.is_valid():
            raise ValueError("tombstone signature does not verify")
        origin = self._node(origin)
        self.merge_local(origin, value)
        return self.engine.spawn(self._revoke(origin, value, list(paths)))

    def _revoke(self, origin: DhtNode, value: CrdtRecord, paths: list[str]):
        receipt = yield from self._store(origin, value)
        for path in paths:
            res = yield from self._lookup(origin, capability_key(path))
            futures = [self.net.rpc(origin.name, self.by_id[c].name, "dht.store", value, timeout_ms=self.config.rpc_timeout_ms)
                       for c in res.contacts if self.by_id[c] is not origin]
            if futures:
                yield futures
        return receipt

    # -- reads ------------------------------------------------------------------

    def _get(self, origin: DhtNode, agent_id: AgentId):
        local = origin.store.get(agent_id)
        if local is not None:
            return local, 0
        res = yield from self._lookup(origin, int(agent_id), want="record")
        best = None
        for _, value in res.values:
            best = value if best is None else crdt_merge(best, value)
        if best is not None:
            self.merge_local(origin, best)
        return best, res.hop_count

    def get(self, origin: DhtNode | str, agent_id: AgentId):
        """Process resolving to ``(CrdtRecord | None, hop_count)``."""
        return self.engine.spawn(self._get(self._node(origin), agent_id))

    def _capability_query(self, origin: DhtNode, path: str, min_trust: float, now_ms: int | None):
        start = self.engine.now
        entries = origin.provider_entries(path)
        hops = 0
        if not entries:
            res = yield from self._lookup(origin, capability_key(path), want="providers", path=path)
            hops = res.hop_count
            for _, found in res.values:
                entries.extend(found)
        now = self.engine.now if now_ms is None else now_ms
        candidates = []
        for token, value in entries:
            local = origin.store.get(token.agent_id)
            if value is None:
                value = local
            elif local is not None:
                value = crdt_merge(local, value)
            if value is None or value.is_tombstone or not validate_record(value.record).ok:
                continue
            candidates.append((token, value.record))
        providers = select_providers(candidates, path, min_trust, now)
        return CapabilityResult(providers, self.engine.now - start, hops)

    def capability_lookup(self, origin: DhtNode | str, path: str, min_trust: float = 0.0, now_ms: int | None = None):
        """Process resolving to a CapabilityResult."""
        return self.engine.spawn(self._capability_query(self._node(origin), path, min_trust, now_ms))

    def capability_query(self, origin: DhtNode | str, path: str, min_trust: float = 0.0, now_ms: int | None = None) -> list[Provider]:
        return self.engine.run_process(self.capability_lookup(origin, path, min_trust, now_ms)).providers

    def _registry_query(self, node: DhtNode, query):
        if isinstance(query, AgentQuery):
            value, _ = yield from self._get(node, query.agent_id)
            if value is None or value.is_tombstone:
                raise NotFound(f"agent {query.agent_id.hex()} not found")
            return value.record
        res = yield from self._capability_query(node, query.path, query.min_trust, None)
        return res.providers

    # -- gossip -------------------------------------------------------------------

    def start_gossip(self) -> None:
        if self._gossiping:
            return
        self._gossiping = True
        for node in self.live:
            self._start_timer(node)

    def stop_gossip(self) -> None:
        self._gossiping = False

    def _start_timer(self, node: DhtNode) -> None:
        self.engine.call_later(node.rng.randrange(self.config.gossip.period_ms), self._gossip_tick, node)

    def _gossip_tick(self, node: DhtNode) -> None:
        if not self._gossiping or not self.net.is_live(node.name):
            return
        self._gossip_from(node)
        self.engine.call_later(self.config.gossip.period_ms, self._gossip_tick, node)

    def _sample_peers(self, node: DhtNode, count: int) -> list[DhtNode]:
        pool = self.live
        if len(pool) <= 1:
            return []
        want = min(count, len(pool) - 1)
        picks = node.rng.sample(pool, min(want + 1, len(pool)))
        return [p for p in picks if p is not node][:want]

    def _gossip_from(self, node: DhtNode) -> int:
        root, entries = node.digest()
        peers = self._sample_peers(node, self.config.gossip.fanout)
        for peer in peers:
            self.net.send(node.name, peer.name, "gossip.digest", (root, entries), size=max(1, len(entries)))
        return len(peers)

    def gossip_round(self, t: int | None = None) -> int:
        """Have every live node start one digest exchange now; returns messages scheduled."""
        if t is not None:
            self.engine.run_until(t)
        return sum(self._gossip_from(node) for node in list(self.live))

    def _on_digest(self, node: DhtNode, msg: Message) -> None:
        root, entries = msg.body
        mine_root, _ = node.digest()
        if root == mine_root:
            return None
        theirs = dict(entries)
        push = [v for aid, v in node.store.items() if aid not in theirs or v.stamp > theirs[aid]]
        want = []
        for aid, stamp in entries:
            mine = node.store.get(aid)
            if mine is None or mine.stamp < stamp:
                want.append(aid)
        if push or want:
            self.net.send(node.name, msg.src, "gossip.reply", (push, want), size=max(1, len(push) + len(want)))
        return None

    def _on_gossip_reply(self, node: DhtNode, msg: Message) -> None:
        push, want = msg.body
        for value in push:
            self.merge_local(node, value)
        back = [node.store[aid] for aid in want if aid in node.store]
        if back:
            self.net.send(node.name, msg.src, "gossip.push", back, size=len(back))
        return None

    def propagation_time(self, write: AgentFacts | Tombstone | CrdtRecord, origin: DhtNode | str,
                         max_rounds: int = 200) -> PropagationResult:
        """Apply ``write`` at ``origin`` now and gossip until every live node holds it."""
        value = write if isinstance(write, CrdtRecord) else CrdtRecord.of(write)
        origin = self._node(origin)
        t0 = self.engine.now
        seen: dict[str, int] = {}
        for node in self.live:
            cur = node.store.get(value.agent_id)
            if cur is not None and cur.stamp >= value.stamp:
                seen[node.name] = t0

        def watch(node: DhtNode, merged: CrdtRecord) -> None:
            if merged.agent_id == value.agent_id and merged.stamp >= value.stamp:
                seen.setdefault(node.name, self.engine.now)

        self.add_observer(watch)
        try:
            self.merge_local(origin, value)
            self.start_gossip()
            live = len(self.live)
            self.engine.run_while(lambda: len(seen) < live, t0 + max_rounds * self.config.gossip.period_ms)
        finally:
            self.remove_observer(watch)
        return PropagationResult(t0, self.config.gossip.period_ms, len(self.live), dict(seen))

    # -- export ---------------------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "nodes": [
                {
                    "name": n.name,
                    "node_id": f"{n.node_id:064x}",
                    "live": self.net.is_live(n.name),
                    "contacts": [f"{c:064x}" for c in n.table.contacts()],
                    "records": {aid.hex(): rec.stamp.to_json() for aid, rec in sorted(n.store.items())},
                }
                for n in self.nodes.values()
            ]
        }

    def snapshot_json(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True)


def _reply_size(value) -> int:
    if not value:
        return 1
    contacts, found = value
    return max(1, len(contacts) + (len(found) if isinstance(found, list) else int(found is not None)))
