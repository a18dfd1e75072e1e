"""Peer-to-peer index: DHT placement, gossip replication, capability lookup."""

from .crdt import CrdtRecord, Tombstone, crdt_merge, make_tombstone, newer
from .fabric import (
    CapabilityResult,
    DhtNode,
    GossipConfig,
    LookupResult,
    PropagationResult,
    StoreReceipt,
    SwitchFabric,
    SwitchFabricConfig,
    capability_key,
)
from .routing import ID_BITS, RoutingTable, closest, shared_prefix_bits, xor_distance

__all__ = [
    "CapabilityResult", "CrdtRecord", "DhtNode", "GossipConfig", "ID_BITS", "LookupResult",
    "PropagationResult", "RoutingTable", "StoreReceipt", "SwitchFabric", "SwitchFabricConfig",
    "Tombstone", "capability_key", "closest", "crdt_merge", "make_tombstone", "newer",
    "shared_prefix_bits", "xor_distance",
]
