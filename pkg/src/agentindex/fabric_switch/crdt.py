"""Last-writer-wins register over AgentFacts, with signed tombstones."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

from .. import codec
from ..agent_model import AgentFacts, AgentId, HlcStamp, HybridClock, KeyPair, derive_agent_id, validate_record, verify_signature
from ..errors import InvalidKey, MergeDomainError, NotOwner


@dataclass(frozen=True)
class Tombstone:
    """Owner-signed deletion marker.

    Carries the owner's public key so any replica can check it without
    having seen the record it deletes.
    """

    agent_id: AgentId
    revoked_at: HlcStamp
    public_key: bytes
    signature: bytes = b""

    def signing_payload(self) -> bytes:
        return codec.pack(b"tombstone", self.agent_id.raw, self.revoked_at.encode(), self.public_key)

    def to_bytes(self) -> bytes:
        return codec.pack(self.signing_payload(), self.signature)

    def verify(self) -> bool:
        try:
            if derive_agent_id(self.public_key) != self.agent_id:
                return False
        except InvalidKey:
            return False
        return verify_signature(self.public_key, self.signature, self.signing_payload())

    def to_json(self) -> dict:
        return {
            "agent_id": self.agent_id.hex(),
            "revoked_at": self.revoked_at.to_json(),
            "public_key": self.public_key.hex(),
            "signature": self.signature.hex(),
        }


def make_tombstone(keypair: KeyPair, record: AgentFacts, clock: HybridClock) -> Tombstone:
    if keypair.agent_id != record.agent_id:
        raise NotOwner("only the record owner can revoke it")
    unsigned = Tombstone(record.agent_id, clock.observe(record.version), keypair.public)
    return replace(unsigned, signature=keypair.sign(unsigned.signing_payload()))


Payload = Union[AgentFacts, Tombstone]


@dataclass(frozen=True)
class CrdtRecord:
    record: Payload
    stamp: HlcStamp

    @classmethod
    def of(cls, payload: Payload) -> CrdtRecord:
        stamp = payload.revoked_at if isinstance(payload, Tombstone) else payload.version
        return cls(payload, stamp)

    @property
    def agent_id(self) -> AgentId:
        return self.record.agent_id

    @property
    def is_tombstone(self) -> bool:
        return isinstance(self.record, Tombstone)

    @property
    def facts(self) -> AgentFacts | None:
        return None if self.is_tombstone else self.record

    def _tiebreak(self) -> tuple[int, bytes]:
        # equal stamps only arise from a misbehaving writer; order deterministically anyway
        return (1 if self.is_tombstone else 0, self.record.to_bytes())

    def is_valid(self) -> bool:
        if self.is_tombstone:
            return self.record.verify()
        return validate_record(self.record).ok


def crdt_merge(a: CrdtRecord, b: CrdtRecord) -> CrdtRecord:
    """Keep the register value with the greater stamp (commutative, associative, idempotent)."""
    if a.agent_id != b.agent_id:
        raise MergeDomainError("cannot merge records for different agents")
    if a.stamp != b.stamp:
        return a if a.stamp > b.stamp else b
    if a is b or a == b:
        return a
    return a if a._tiebreak() >= b._tiebreak() else b


def newer(candidate: CrdtRecord, current: CrdtRecord | None) -> bool:
    """True iff merging ``candidate`` into ``current`` changes the stored value."""
    return current is None or crdt_merge(current, candidate) is not current
