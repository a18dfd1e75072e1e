"""Query and answer types shared by every registry kind."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from . import codec
from .agent_model import AgentFacts, AgentId, normalize_capability
from .attestation import CapabilityToken, verify_capability_token


@dataclass(frozen=True)
class AgentQuery:
    agent_id: AgentId

    def key(self) -> str:
        return f"agent:{self.agent_id.hex()}"


@dataclass(frozen=True)
class CapabilityQuery:
    path: str
    min_trust: float = 0.0

    @classmethod
    def create(cls, path: str, min_trust: float = 0.0) -> CapabilityQuery:
        return cls(normalize_capability(path), min_trust)

    def key(self) -> str:
        return f"capability:{self.path}?min_trust={self.min_trust!r}"


Query = Union[AgentQuery, CapabilityQuery]


@dataclass(frozen=True)
class Provider:
    agent_id: AgentId
    trust_score: float
    token: CapabilityToken

    def encode(self) -> bytes:
        return codec.pack(self.agent_id.raw, codec.f64(self.trust_score), self.token.to_bytes())


def rank_providers(providers) -> list[Provider]:
    """Trust descending, then AgentId ascending."""
    return sorted(providers, key=lambda p: (-p.trust_score, p.agent_id))


def select_providers(candidates, path: str, min_trust: float, now_ms: int) -> list[Provider]:
    """Filter ``(token, AgentFacts)`` candidates for ``path`` and rank them.

    A provider survives when its token names ``path``, verifies under the
    record's key at ``now_ms``, and its trust score reaches ``min_trust``.
    Callers drop tombstoned agents before calling. When an agent appears more
    than once the token that stays valid longest is kept.
    """
    chosen: dict[AgentId, Provider] = {}
    for token, facts in candidates:
        if token.capability_path != path or token.agent_id != facts.agent_id:
            continue
        if facts.trust_score < min_trust:
            continue
        if not verify_capability_token(token, facts.public_key, now_ms).ok:
            continue
        prior = chosen.get(token.agent_id)
        if prior is None or token.not_after_ms > prior.token.not_after_ms:
            chosen[token.agent_id] = Provider(token.agent_id, facts.trust_score, token)
    return rank_providers(chosen.values())


def encode_result(result) -> bytes:
    if isinstance(result, AgentFacts):
        return codec.pack(b"record", result.to_bytes())
    return codec.pack(b"providers", codec.pack(*(p.encode() for p in result)))


def is_authoritative(result) -> bool:
    if result is None:
        return False
    if isinstance(result, AgentFacts):
        return True
    return len(result) > 0
