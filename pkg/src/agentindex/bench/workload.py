"""Simulated agents: key pairs, signed records and capability tokens."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from ..agent_model import (
    AgentFacts,
    CapabilityDescriptor,
    HybridClock,
    KeyPair,
    PolicyConstraints,
    bump_version,
    generate_keypair,
    new_record,
)
from ..attestation import CapabilityToken, issue_capability_token
from ..simnet import Engine

CAPABILITY_VOCABULARY = (
    "/translate-en-es",
    "/optimize-route",
    "/summarize-text",
    "/classify-image",
    "/schedule-meeting",
    "/extract-invoice",
    "/forecast-demand",
    "/transcribe-audio",
)

TOKEN_LIFETIME_MS = 3_600_000


@dataclass
class SimAgent:
    keypair: KeyPair
    clock: HybridClock
    record: AgentFacts
    tokens: tuple[CapabilityToken, ...] = field(default_factory=tuple)

    @property
    def agent_id(self):
        return self.keypair.agent_id

    def update(self, **changes) -> AgentFacts:
        self.record = bump_version(self.record, self.keypair, self.clock, **changes)
        return self.record


def agent_seed(seed: int, label: str, index: int) -> bytes:
    return hashlib.sha256(f"agent/{seed}/{label}/{index}".encode()).digest()


def make_agent(
    engine: Engine,
    seed: int,
    index: int,
    *,
    label: str = "agent",
    capabilities: tuple[str, ...] = ("/translate-en-es",),
    trust_score: float | None = None,
    ttl_ms: int = 60_000,
    policy: PolicyConstraints | None = None,
    token_lifetime_ms: int = TOKEN_LIFETIME_MS,
    max_ttl_ms: int | None = None,
) -> SimAgent:
    """Deterministic agent ``index`` of a population; trust defaults to a seeded draw in [0, 1]."""
    keypair = generate_keypair(agent_seed(seed, label, index))
    clock = HybridClock(keypair.agent_id, lambda: engine.now)
    if trust_score is None:
        trust_score = round(random.Random(agent_seed(seed, label + "/trust", index)).random(), 3)
    descriptors = [
        CapabilityDescriptor.create(path, hashlib.sha256(f"manifest{path}/{index}".encode()).digest())
        for path in capabilities
    ]
    kwargs = {} if max_ttl_ms is None else {"max_ttl_ms": max_ttl_ms}
    record = new_record(keypair, descriptors, [f"sim://{label}-{index}"], trust_score,
                        policy or PolicyConstraints(), ttl_ms, clock, **kwargs)
    now = engine.now
    tokens = tuple(issue_capability_token(keypair, d, (now, now + token_lifetime_ms)) for d in descriptors)
    return SimAgent(keypair, clock, record, tokens)


def make_population(engine: Engine, seed: int, count: int, *, label: str = "agent", per_agent: int = 2,
                    vocabulary: tuple[str, ...] = CAPABILITY_VOCABULARY, ttl_ms: int = 60_000) -> list[SimAgent]:
    rng = random.Random(agent_seed(seed, label + "/caps", count))
    agents = []
    for i in range(count):
        caps = tuple(sorted(rng.sample(vocabulary, min(per_agent, len(vocabulary)))))
        agents.append(make_agent(engine, seed, i, label=label, capabilities=caps, ttl_ms=ttl_ms))
    return agents
