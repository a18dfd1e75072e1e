"""Short-lived capability tokens, revocation staples and the audit hash chain.

All validity windows are half-open: a proof issued for ``[start, end)`` is
accepted at ``start`` and rejected at ``end``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from typing import Any, Iterable, Mapping

from . import codec
from .agent_model import (
    ID_BYTES,
    AgentId,
    CapabilityDescriptor,
    HlcStamp,
    KeyPair,
    derive_agent_id,
    digest,
    verify_signature,
)
from .errors import DecodeError, InvalidKey, InvalidWindow, NotOwner

DEFAULT_STAPLE_WINDOW_MS = 500
OCSP_MINUTE_STAPLE_WINDOW_MS = 60_000
ZERO_DIGEST = bytes(32)


class ProofStatus(enum.Enum):
    VALID = "Valid"
    EXPIRED = "Expired"
    NOT_YET_VALID = "NotYetValid"
    SIGNATURE_INVALID = "SignatureInvalid"

    @property
    def ok(self) -> bool:
        return self is ProofStatus.VALID


def _owned_by(agent_id: AgentId, public_key: bytes) -> bool:
    try:
        return derive_agent_id(public_key) == agent_id
    except InvalidKey:
        return False


# --------------------------------------------------------------------------
# capability tokens
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CapabilityToken:
    agent_id: AgentId
    capability_path: str
    manifest_digest: bytes
    not_before_ms: int
    not_after_ms: int
    signature: bytes = b""

    def signing_payload(self) -> bytes:
        return codec.pack(
            self.agent_id.raw,
            codec.text(self.capability_path),
            self.manifest_digest,
            codec.i64(self.not_before_ms),
            codec.i64(self.not_after_ms),
        )

    def to_bytes(self) -> bytes:
        return codec.pack(self.signing_payload(), self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> CapabilityToken:
        body, sig = codec.unpack(data, 2)
        aid, path, md, nb, na = codec.unpack(body, 5)
        if len(aid) != ID_BYTES:
            raise DecodeError("bad agent id width")
        return cls(AgentId(aid), codec.read_text(path), md, codec.read_i64(nb), codec.read_i64(na), sig)

    def to_json(self) -> dict:
        return {
            "agent_id": self.agent_id.hex(),
            "capability_path": self.capability_path,
            "manifest_digest": self.manifest_digest.hex(),
            "not_before_ms": self.not_before_ms,
            "not_after_ms": self.not_after_ms,
            "signature": self.signature.hex(),
        }


def issue_capability_token(keypair: KeyPair, descriptor: CapabilityDescriptor, window: tuple[int, int]) -> CapabilityToken:
    not_before, not_after = window
    if not_before >= not_after:
        raise InvalidWindow(f"window [{not_before}, {not_after}) is empty")
    unsigned = CapabilityToken(keypair.agent_id, descriptor.path, descriptor.manifest_digest, not_before, not_after)
    return replace(unsigned, signature=keypair.sign(unsigned.signing_payload()))


def verify_capability_token(token: CapabilityToken, public_key: bytes, now_ms: int) -> ProofStatus:
    if not _owned_by(token.agent_id, public_key):
        return ProofStatus.SIGNATURE_INVALID
    if not verify_signature(public_key, token.signature, token.signing_payload()):
        return ProofStatus.SIGNATURE_INVALID
    if now_ms < token.not_before_ms:
        return ProofStatus.NOT_YET_VALID
    if now_ms >= token.not_after_ms:
        return ProofStatus.EXPIRED
    return ProofStatus.VALID


# --------------------------------------------------------------------------
# revocation staples
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RevocationStaple:
    """Owner-signed assertion that ``record_version`` is live until ``expires_ms``."""

    agent_id: AgentId
    record_version: HlcStamp
    issued_ms: int
    valid_for_ms: int
    signature: bytes = b""

    @property
    def expires_ms(self) -> int:
        return self.issued_ms + self.valid_for_ms

    def signing_payload(self) -> bytes:
        return codec.pack(
            self.agent_id.raw,
            self.record_version.encode(),
            codec.i64(self.issued_ms),
            codec.i64(self.valid_for_ms),
        )


def issue_staple(keypair: KeyPair, record_version: HlcStamp, now_ms: int, valid_for_ms: int = DEFAULT_STAPLE_WINDOW_MS) -> RevocationStaple:
    if valid_for_ms <= 0:
        raise InvalidWindow("staple validity must be positive")
    unsigned = RevocationStaple(keypair.agent_id, record_version, now_ms, valid_for_ms)
    return replace(unsigned, signature=keypair.sign(unsigned.signing_payload()))


def verify_staple(staple: RevocationStaple, public_key: bytes, now_ms: int) -> ProofStatus:
    if not _owned_by(staple.agent_id, public_key):
        return ProofStatus.SIGNATURE_INVALID
    if not verify_signature(public_key, staple.signature, staple.signing_payload()):
        return ProofStatus.SIGNATURE_INVALID
    if now_ms < staple.issued_ms:
        return ProofStatus.NOT_YET_VALID
    if now_ms >= staple.expires_ms:
        return ProofStatus.EXPIRED
    return ProofStatus.VALID


# --------------------------------------------------------------------------
# audit chain
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    timestamp_ms: int
    actor: AgentId
    query: str
    from_boundary: str
    to_boundary: str
    prev_digest: bytes
    event_digest: bytes
    signature: bytes

    def preimage(self) -> bytes:
        return event_preimage(
            self.seq, self.timestamp_ms, self.actor, self.query, self.from_boundary, self.to_boundary, self.prev_digest
        )

    def to_bytes(self) -> bytes:
        return codec.pack(self.preimage(), self.event_digest, self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> AuditEvent:
        pre, ev, sig = codec.unpack(data, 3)
        seq, ts, actor, query, frm, to, prev = codec.unpack(pre, 7)
        if len(actor) != ID_BYTES:
            raise DecodeError("bad actor width")
        return cls(
            codec.read_i64(seq),
            codec.read_i64(ts),
            AgentId(actor),
            codec.read_text(query),
            codec.read_text(frm),
            codec.read_text(to),
            prev,
            ev,
            sig,
        )

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp_ms": self.timestamp_ms,
            "actor": self.actor.hex(),
            "query": self.query,
            "from_boundary": self.from_boundary,
            "to_boundary": self.to_boundary,
            "prev_digest": self.prev_digest.hex(),
            "event_digest": self.event_digest.hex(),
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> AuditEvent:
        return cls(
            int(obj["seq"]),
            int(obj["timestamp_ms"]),
            AgentId.from_hex(obj["actor"]),
            obj["query"],
            obj["from_boundary"],
            obj["to_boundary"],
            bytes.fromhex(obj["prev_digest"]),
            bytes.fromhex(obj["event_digest"]),
            bytes.fromhex(obj["signature"]),
        )


def event_preimage(seq, timestamp_ms, actor: AgentId, query, from_boundary, to_boundary, prev_digest) -> bytes:
    return codec.pack(
        codec.i64(seq),
        codec.i64(timestamp_ms),
        actor.raw,
        codec.text(query),
        codec.text(from_boundary),
        codec.text(to_boundary),
        prev_digest,
    )


@dataclass(frozen=True)
class ChainVerdict:
    valid: bool
    tampered_at: int | None = None

    def __bool__(self) -> bool:
        return self.valid

    def __repr__(self) -> str:
        return "Valid" if self.valid else f"TamperedAt({self.tampered_at})"


class AuditChain:
    """Append-only, hash-linked log signed by a single resolver key."""

    def __init__(self, signer_public_key: bytes, events: Iterable[AuditEvent] = ()):
        self.signer_public_key = signer_public_key
        self.events: list[AuditEvent] = list(events)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def head_digest(self) -> bytes:
        return self.events[-1].event_digest if self.events else ZERO_DIGEST

    def append(self, signer: KeyPair, *, timestamp_ms: int, actor: AgentId, query: str, from_boundary: str, to_boundary: str) -> AuditEvent:
        if signer.public != self.signer_public_key:
            raise NotOwner("only the chain's resolver key may append")
        seq = len(self.events)
        prev = self.head_digest
        ev_digest = digest(event_preimage(seq, timestamp_ms, actor, query, from_boundary, to_boundary, prev))
        event = AuditEvent(seq, timestamp_ms, actor, query, from_boundary, to_boundary, prev, ev_digest, signer.sign(ev_digest))
        self.events.append(event)
        return event

    def to_bytes(self) -> bytes:
        return codec.pack(self.signer_public_key, codec.pack(*(e.to_bytes() for e in self.events)))

    @classmethod
    def from_bytes(cls, data: bytes) -> AuditChain:
        pub, body = codec.unpack(data, 2)
        return cls(pub, [AuditEvent.from_bytes(b) for b in codec.unpack(body)])

    def to_json(self) -> dict:
        return {"signer_public_key": self.signer_public_key.hex(), "events": [e.to_json() for e in self.events]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> AuditChain:
        return cls(bytes.fromhex(obj["signer_public_key"]), [AuditEvent.from_json(e) for e in obj["events"]])


def append_audit(chain: AuditChain, signer: KeyPair, **fields) -> AuditChain:
    chain.append(signer, **fields)
    return chain


def verify_chain(chain: AuditChain) -> ChainVerdict:
    """Check sequence numbers, digest links and signatures.

    Structural checks run over the whole chain before any signature is
    verified, so the reported position is the earliest broken event.
    """
    prev = ZERO_DIGEST
    for i, ev in enumerate(chain.events):
        if ev.seq != i or ev.prev_digest != prev or digest(ev.preimage()) != ev.event_digest:
            broken = i
            break
        prev = ev.event_digest
    else:
        broken = None
    limit = len(chain.events) if broken is None else broken
    for i in range(limit):
        ev = chain.events[i]
        if not verify_signature(chain.signer_public_key, ev.signature, ev.event_digest):
            return ChainVerdict(False, i)
    if broken is not None:
        return ChainVerdict(False, broken)
    return ChainVerdict(True)
