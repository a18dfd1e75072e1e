from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentindex.agent_model import CapabilityDescriptor, HlcStamp, generate_keypair
from agentindex.attestation import (
    AuditChain,
    ProofStatus,
    CapabilityToken,
    append_audit,
    issue_capability_token,
    issue_staple,
    verify_capability_token,
    verify_chain,
    verify_staple,
)
from agentindex.errors import InvalidWindow, NotOwner

from conftest import seed_bytes

KP = generate_keypair(seed_bytes("owner"))
OTHER = generate_keypair(seed_bytes("other"))
DESC = CapabilityDescriptor.create("/translate-en-es", bytes(32))


# -- capability tokens ----------------------------------------------------------


def test_token_window_is_half_open():
    tok = issue_capability_token(KP, DESC, (100, 200))
    assert verify_capability_token(tok, KP.public, 99) is ProofStatus.NOT_YET_VALID
    assert verify_capability_token(tok, KP.public, 100) is ProofStatus.VALID
    assert verify_capability_token(tok, KP.public, 199) is ProofStatus.VALID
    assert verify_capability_token(tok, KP.public, 200) is ProofStatus.EXPIRED


@pytest.mark.parametrize("window", [(5, 5), (6, 5)])
def test_empty_window_rejected(window):
    with pytest.raises(InvalidWindow):
        issue_capability_token(KP, DESC, window)


def test_token_wrong_key_or_tamper():
    tok = issue_capability_token(KP, DESC, (0, 1000))
    assert verify_capability_token(tok, OTHER.public, 10) is ProofStatus.SIGNATURE_INVALID
    widened = dataclasses.replace(tok, not_after_ms=10**9)
    assert verify_capability_token(widened, KP.public, 10) is ProofStatus.SIGNATURE_INVALID
    moved = dataclasses.replace(tok, capability_path="/optimize-route")
    assert verify_capability_token(moved, KP.public, 10) is ProofStatus.SIGNATURE_INVALID


def test_token_bytes_roundtrip():
    tok = issue_capability_token(KP, DESC, (0, 1000))
    assert CapabilityToken.from_bytes(tok.to_bytes()) == tok


@settings(max_examples=50, deadline=None)
@given(start=st.integers(0, 10**6), length=st.integers(1, 10**6), probe=st.integers(-10, 3 * 10**6))
def test_token_validity_matches_window(start, length, probe):
    tok = issue_capability_token(KP, DESC, (start, start + length))
    status = verify_capability_token(tok, KP.public, probe)
    assert status.ok == (start <= probe < start + length)


# -- staples ----------------------------------------------------------------------


def test_staple_window():
    version = HlcStamp(1, 0, KP.agent_id)
    st_ = issue_staple(KP, version, now_ms=1000, valid_for_ms=500)
    assert st_.expires_ms == 1500
    assert verify_staple(st_, KP.public, 1000).ok
    assert verify_staple(st_, KP.public, 1499).ok
    assert verify_staple(st_, KP.public, 1500) is ProofStatus.EXPIRED
    assert verify_staple(st_, KP.public, 999) is ProofStatus.NOT_YET_VALID
    assert verify_staple(st_, OTHER.public, 1200) is ProofStatus.SIGNATURE_INVALID
    forged = dataclasses.replace(st_, valid_for_ms=10**6)
    assert verify_staple(forged, KP.public, 1200) is ProofStatus.SIGNATURE_INVALID


def test_staple_rejects_nonpositive_window():
    with pytest.raises(InvalidWindow):
        issue_staple(KP, HlcStamp(1, 0, KP.agent_id), 0, 0)


# -- audit chain ---------------------------------------------------------------------


def build_chain(n=10):
    chain = AuditChain(KP.public)
    for i in range(n):
        append_audit(chain, KP, timestamp_ms=i * 7, actor=KP.agent_id, query=f"q{i}",
                     from_boundary="private:acme-corp", to_boundary="public:global")
    return chain


def test_chain_links_and_verifies():
    chain = build_chain()
    assert verify_chain(chain).valid
    assert chain.events[0].prev_digest == bytes(32)
    for a, b in zip(chain.events, chain.events[1:]):
        assert b.prev_digest == a.event_digest
        assert b.seq == a.seq + 1


def test_empty_chain_is_valid():
    assert verify_chain(AuditChain(KP.public)).valid


def test_only_owner_appends():
    chain = build_chain(1)
    with pytest.raises(NotOwner):
        chain.append(OTHER, timestamp_ms=0, actor=OTHER.agent_id, query="x", from_boundary="a", to_boundary="b")


@pytest.mark.parametrize("field, value", [("query", "other"), ("timestamp_ms", 999), ("to_boundary", "public:x")])
def test_field_edit_reports_position(field, value):
    chain = build_chain()
    chain.events[4] = dataclasses.replace(chain.events[4], **{field: value})
    verdict = verify_chain(chain)
    assert not verdict.valid and verdict.tampered_at == 4


def test_deletion_and_reorder_detected():
    chain = build_chain()
    del chain.events[3]
    assert verify_chain(chain).tampered_at == 3
    chain = build_chain()
    chain.events[2], chain.events[5] = chain.events[5], chain.events[2]
    assert verify_chain(chain).tampered_at == 2


def test_rehashed_forgery_fails_on_signature():
    # an attacker who recomputes digests still cannot sign them
    chain = build_chain(3)
    forged = AuditChain(KP.public)
    for ev in chain.events[:2]:
        forged.events.append(ev)
    evil = AuditChain(OTHER.public)
    evil.events = list(forged.events)
    evil.append(OTHER, timestamp_ms=1, actor=OTHER.agent_id, query="evil", from_boundary="a", to_boundary="b")
    assert verify_chain(AuditChain(KP.public, evil.events)).tampered_at == 2


def test_chain_serialization_roundtrip():
    chain = build_chain(4)
    assert AuditChain.from_bytes(chain.to_bytes()).events == chain.events
    assert AuditChain.from_json(chain.to_json()).events == chain.events
