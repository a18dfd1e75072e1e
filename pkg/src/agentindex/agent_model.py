"""Agent identity and the signed AgentFacts registry record.

Identity is self-certifying: an agent's ID is the SHA-256 digest of its
Ed25519 public key, so anyone holding a record can check that the key that
signed it is the key the ID was derived from.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Callable, Iterable, Mapping

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from . import codec
from .errors import (
    DecodeError,
    InvalidCapabilityPath,
    InvalidKey,
    InvalidSeed,
    NotOwner,
    RecordValidationError,
)

ID_BYTES = 32
DIGEST_BYTES = 32
PUBLIC_KEY_BYTES = 32
DEFAULT_MAX_TTL_MS = 86_400_000

_SEGMENT = re.compile(r"[a-z0-9-]+")


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


# --------------------------------------------------------------------------
# keys and identifiers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 signing key derived deterministically from a 32-byte seed."""

    secret: bytes = field(repr=False)
    public: bytes
    _key: Ed25519PrivateKey = field(repr=False, compare=False, hash=False)

    @property
    def agent_id(self) -> AgentId:
        return derive_agent_id(self.public)

    def sign(self, message: bytes) -> bytes:
        return self._key.sign(message)


def generate_keypair(seed: bytes) -> KeyPair:
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != 32:
        raise InvalidSeed("seed must be exactly 32 bytes")
    key = Ed25519PrivateKey.from_private_bytes(bytes(seed))
    public = key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return KeyPair(secret=bytes(seed), public=public, _key=key)


@lru_cache(maxsize=4096)
def _load_public(public_key: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(public_key)


@lru_cache(maxsize=1 << 16)
def verify_signature(public_key: bytes, signature: bytes, message: bytes) -> bool:
    """Return True iff ``signature`` is a valid Ed25519 signature of ``message``.

    Memoized: verification is a pure function of its three byte-string
    arguments, and simulations re-check the same record on every replica.
    """
    if len(public_key) != PUBLIC_KEY_BYTES or len(signature) != 64:
        return False
    try:
        _load_public(public_key).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


@dataclass(frozen=True, order=True)
class AgentId:
    """32-byte key digest. Orders by big-endian value, i.e. as a 256-bit integer."""

    raw: bytes

    def __post_init__(self):
        if len(self.raw) != ID_BYTES:
            raise ValueError("AgentId must be 32 bytes")

    @classmethod
    def from_hex(cls, text: str) -> AgentId:
        return cls(bytes.fromhex(text))

    @classmethod
    def from_int(cls, value: int) -> AgentId:
        return cls(value.to_bytes(ID_BYTES, "big"))

    def hex(self) -> str:
        return self.raw.hex()

    def __int__(self) -> int:
        return int.from_bytes(self.raw, "big")

    def __str__(self) -> str:
        return self.raw.hex()

    def __repr__(self) -> str:
        return f"AgentId({self.raw.hex()[:12]}…)"


def derive_agent_id(public_key: bytes) -> AgentId:
    if not isinstance(public_key, (bytes, bytearray)) or len(public_key) != PUBLIC_KEY_BYTES:
        raise InvalidKey("public key must be 32 raw Ed25519 bytes")
    try:
        _load_public(bytes(public_key))
    except ValueError as exc:
        raise InvalidKey(str(exc)) from exc
    return AgentId(digest(bytes(public_key)))


# --------------------------------------------------------------------------
# version stamps
# --------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class HlcStamp:
    """Hybrid logical clock stamp; field order is the comparison order."""

    physical_ms: int
    logical: int
    node_tiebreak: AgentId

    def encode(self) -> bytes:
        return codec.pack(codec.i64(self.physical_ms), codec.i64(self.logical), self.node_tiebreak.raw)

    @classmethod
    def decode(cls, data: bytes) -> HlcStamp:
        pm, lg, node = codec.unpack(data, 3)
        if len(node) != ID_BYTES:
            raise DecodeError("bad tiebreak width")
        return cls(codec.read_i64(pm), codec.read_i64(lg), AgentId(node))

    def to_json(self) -> dict:
        return {"physical_ms": self.physical_ms, "logical": self.logical, "node_tiebreak": self.node_tiebreak.hex()}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> HlcStamp:
        return cls(int(obj["physical_ms"]), int(obj["logical"]), AgentId.from_hex(obj["node_tiebreak"]))


class HybridClock:
    """Issues monotone HlcStamps for one node, reading physical time from ``time_source``."""

    def __init__(self, node: AgentId, time_source: Callable[[], int]):
        self.node = node
        self.time_source = time_source
        self._physical = 0
        self._logical = 0

    def now(self) -> HlcStamp:
        pt = self.time_source()
        if pt > self._physical:
            self._physical, self._logical = pt, 0
        else:
            self._logical += 1
        return HlcStamp(self._physical, self._logical, self.node)

    def observe(self, remote: HlcStamp) -> HlcStamp:
        """Merge a received stamp; the result is greater than both it and any prior local stamp."""
        pt = self.time_source()
        top = max(self._physical, remote.physical_ms, pt)
        if top == self._physical and top == remote.physical_ms:
            logical = max(self._logical, remote.logical) + 1
        elif top == self._physical:
            logical = self._logical + 1
        elif top == remote.physical_ms:
            logical = remote.logical + 1
        else:
            logical = 0
        self._physical, self._logical = top, logical
        return HlcStamp(top, logical, self.node)


# --------------------------------------------------------------------------
# capability descriptors and policy
# --------------------------------------------------------------------------


def normalize_capability(raw: str) -> str:
    """Fold ``raw`` into canonical capability-path form.

    Folding lowercases, strips surrounding whitespace, adds a leading slash,
    collapses repeated slashes and drops a trailing slash. Whatever remains
    must be segments of ``[a-z0-9-]``.

    >>> normalize_capability("/Optimize-Route/")
    '/optimize-route'
    """
    if not isinstance(raw, str) or not raw.strip():
        raise InvalidCapabilityPath("capability path is empty")
    segments = [s for s in raw.strip().lower().split("/") if s]
    if not segments:
        raise InvalidCapabilityPath(f"capability path {raw!r} has no segments")
    for seg in segments:
        if not _SEGMENT.fullmatch(seg):
            raise InvalidCapabilityPath(f"illegal characters in segment {seg!r} of {raw!r}")
    return "/" + "/".join(segments)


def is_canonical_path(path: str) -> bool:
    try:
        return normalize_capability(path) == path
    except InvalidCapabilityPath:
        return False


@dataclass(frozen=True)
class CapabilityDescriptor:
    path: str
    manifest_digest: bytes
    params: tuple[tuple[str, str], ...] = ()

    @classmethod
    def create(cls, path: str, manifest_digest: bytes, params: Mapping[str, str] | None = None) -> CapabilityDescriptor:
        """Build a descriptor with a normalized path and sorted params."""
        return cls(normalize_capability(path), bytes(manifest_digest), tuple(sorted((params or {}).items())))

    @property
    def params_dict(self) -> dict[str, str]:
        return dict(self.params)

    def encode(self) -> bytes:
        params = codec.pack(*(codec.pack(codec.text(k), codec.text(v)) for k, v in self.params))
        return codec.pack(codec.text(self.path), self.manifest_digest, params)

    @classmethod
    def decode(cls, data: bytes) -> CapabilityDescriptor:
        path, md, params = codec.unpack(data, 3)
        pairs = []
        for item in codec.unpack(params):
            k, v = codec.unpack(item, 2)
            pairs.append((codec.read_text(k), codec.read_text(v)))
        return cls(codec.read_text(path), md, tuple(pairs))

    def to_json(self) -> dict:
        return {"path": self.path, "manifest_digest": self.manifest_digest.hex(), "params": dict(self.params)}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> CapabilityDescriptor:
        return cls(obj["path"], bytes.fromhex(obj["manifest_digest"]), tuple(sorted(obj.get("params", {}).items())))


@dataclass(frozen=True)
class PolicyConstraints:
    allow_external_resolution: bool = True
    allowed_boundaries: frozenset[str] = frozenset()
    max_delegation_depth: int = 0

    def encode(self) -> bytes:
        labels = codec.pack(*(codec.text(b) for b in sorted(self.allowed_boundaries)))
        flag = b"\x01" if self.allow_external_resolution else b"\x00"
        return codec.pack(flag, labels, codec.i64(self.max_delegation_depth))

    @classmethod
    def decode(cls, data: bytes) -> PolicyConstraints:
        flag, labels, depth = codec.unpack(data, 3)
        if flag not in (b"\x00", b"\x01"):
            raise DecodeError("bad boolean")
        return cls(flag == b"\x01", frozenset(codec.read_text(b) for b in codec.unpack(labels)), codec.read_i64(depth))

    def to_json(self) -> dict:
        return {
            "allow_external_resolution": self.allow_external_resolution,
            "allowed_boundaries": sorted(self.allowed_boundaries),
            "max_delegation_depth": self.max_delegation_depth,
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> PolicyConstraints:
        return cls(
            bool(obj.get("allow_external_resolution", True)),
            frozenset(obj.get("allowed_boundaries", ())),
            int(obj.get("max_delegation_depth", 0)),
        )


# --------------------------------------------------------------------------
# AgentFacts
# --------------------------------------------------------------------------


class RecordError(enum.Enum):
    SIGNATURE_INVALID = "SignatureInvalid"
    AGENT_ID_MISMATCH = "AgentIdMismatch"
    INVALID_PUBLIC_KEY = "InvalidPublicKey"
    TRUST_SCORE_OUT_OF_RANGE = "TrustScoreOutOfRange"
    DUPLICATE_CAPABILITY = "DuplicateCapability"
    INVALID_CAPABILITY_PATH = "InvalidCapabilityPath"
    INVALID_MANIFEST_DIGEST = "InvalidManifestDigest"
    TTL_OUT_OF_RANGE = "TtlOutOfRange"
    INVALID_POLICY = "InvalidPolicy"
    INVALID_VERSION = "InvalidVersion"


@dataclass(frozen=True)
class ValidationResult:
    errors: tuple[RecordError, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok

    def __contains__(self, item: RecordError) -> bool:
        return item in self.errors


@dataclass(frozen=True)
class AgentFacts:
    agent_id: AgentId
    public_key: bytes
    capabilities: tuple[CapabilityDescriptor, ...]
    endpoints: tuple[str, ...]
    trust_score: float
    policy: PolicyConstraints
    version: HlcStamp
    ttl_ms: int
    signature: bytes = b""

    def _body_fields(self) -> list[bytes]:
        return [
            self.agent_id.raw,
            self.public_key,
            codec.pack(*(c.encode() for c in self.capabilities)),
            codec.pack(*(codec.text(e) for e in self.endpoints)),
            codec.f64(self.trust_score),
            self.policy.encode(),
            self.version.encode(),
            codec.i64(self.ttl_ms),
        ]

    def signing_payload(self) -> bytes:
        return codec.pack(*self._body_fields())

    def to_bytes(self) -> bytes:
        return codec.pack(*self._body_fields(), self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> AgentFacts:
        aid, pub, caps, eps, trust, policy, version, ttl, sig = codec.unpack(data, 9)
        if len(aid) != ID_BYTES:
            raise DecodeError("bad agent id width")
        return cls(
            agent_id=AgentId(aid),
            public_key=pub,
            capabilities=tuple(CapabilityDescriptor.decode(c) for c in codec.unpack(caps)),
            endpoints=tuple(codec.read_text(e) for e in codec.unpack(eps)),
            trust_score=codec.read_f64(trust),
            policy=PolicyConstraints.decode(policy),
            version=HlcStamp.decode(version),
            ttl_ms=codec.read_i64(ttl),
            signature=sig,
        )

    @property
    def capability_paths(self) -> tuple[str, ...]:
        return tuple(c.path for c in self.capabilities)

    def to_json(self) -> dict:
        return {
            "agent_id": self.agent_id.hex(),
            "public_key": self.public_key.hex(),
            "capabilities": [c.to_json() for c in self.capabilities],
            "endpoints": list(self.endpoints),
            "trust_score": self.trust_score,
            "policy": self.policy.to_json(),
            "version": self.version.to_json(),
            "ttl_ms": self.ttl_ms,
            "signature": self.signature.hex(),
        }

    def to_canonical_json(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> AgentFacts:
        return cls(
            agent_id=AgentId.from_hex(obj["agent_id"]),
            public_key=bytes.fromhex(obj["public_key"]),
            capabilities=tuple(CapabilityDescriptor.from_json(c) for c in obj["capabilities"]),
            endpoints=tuple(obj["endpoints"]),
            trust_score=float(obj["trust_score"]),
            policy=PolicyConstraints.from_json(obj["policy"]),
            version=HlcStamp.from_json(obj["version"]),
            ttl_ms=int(obj["ttl_ms"]),
            signature=bytes.fromhex(obj["signature"]),
        )


def validate_record(record: AgentFacts, max_ttl_ms: int = DEFAULT_MAX_TTL_MS) -> ValidationResult:
    """Check every AgentFacts invariant and report all failures."""
    errors: list[RecordError] = []

    key_ok = len(record.public_key) == PUBLIC_KEY_BYTES
    if key_ok:
        try:
            expected = derive_agent_id(record.public_key)
        except InvalidKey:
            key_ok = False
    if not key_ok:
        errors.append(RecordError.INVALID_PUBLIC_KEY)
    elif expected != record.agent_id:
        errors.append(RecordError.AGENT_ID_MISMATCH)

    if not verify_signature(record.public_key, record.signature, record.signing_payload()):
        errors.append(RecordError.SIGNATURE_INVALID)

    if not (0.0 <= record.trust_score <= 1.0):
        errors.append(RecordError.TRUST_SCORE_OUT_OF_RANGE)

    paths = [c.path for c in record.capabilities]
    if len(set(paths)) != len(paths):
        errors.append(RecordError.DUPLICATE_CAPABILITY)
    if not all(is_canonical_path(p) for p in paths):
        errors.append(RecordError.INVALID_CAPABILITY_PATH)
    if any(len(c.manifest_digest) != DIGEST_BYTES for c in record.capabilities):
        errors.append(RecordError.INVALID_MANIFEST_DIGEST)

    if not (0 <= record.ttl_ms <= max_ttl_ms):
        errors.append(RecordError.TTL_OUT_OF_RANGE)
    if record.policy.max_delegation_depth < 0:
        errors.append(RecordError.INVALID_POLICY)
    if record.version.physical_ms < 0 or record.version.logical < 0:
        errors.append(RecordError.INVALID_VERSION)

    return ValidationResult(tuple(errors))


def _sign(record: AgentFacts, keypair: KeyPair) -> AgentFacts:
    return replace(record, signature=keypair.sign(record.signing_payload()))


def new_record(
    keypair: KeyPair,
    capabilities: Iterable[CapabilityDescriptor],
    endpoints: Iterable[str],
    trust_score: float,
    policy: PolicyConstraints,
    ttl_ms: int,
    clock: HybridClock,
    max_ttl_ms: int = DEFAULT_MAX_TTL_MS,
) -> AgentFacts:
    unsigned = AgentFacts(
        agent_id=keypair.agent_id,
        public_key=keypair.public,
        capabilities=tuple(capabilities),
        endpoints=tuple(endpoints),
        trust_score=float(trust_score),
        policy=policy,
        version=clock.now(),
        ttl_ms=int(ttl_ms),
    )
    record = _sign(unsigned, keypair)
    result = validate_record(record, max_ttl_ms)
    if not result.ok:
        raise RecordValidationError(result.errors)
    return record


def bump_version(record: AgentFacts, keypair: KeyPair, clock: HybridClock, **changes: Any) -> AgentFacts:
    """Re-sign ``record`` under a strictly newer stamp, applying optional field ``changes``."""
    if keypair.public != record.public_key or keypair.agent_id != record.agent_id:
        raise NotOwner("key pair does not own this record")
    forbidden = {"agent_id", "public_key", "version", "signature"} & changes.keys()
    if forbidden:
        raise ValueError(f"cannot change {sorted(forbidden)} through bump_version")
    if "capabilities" in changes:
        changes["capabilities"] = tuple(changes["capabilities"])
    if "endpoints" in changes:
        changes["endpoints"] = tuple(changes["endpoints"])
    updated = replace(record, version=clock.observe(record.version), signature=b"", **changes)
    return _sign(updated, keypair)
