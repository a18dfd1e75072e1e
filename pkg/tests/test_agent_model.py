from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentindex.agent_model import (
    AgentFacts,
    AgentId,
    CapabilityDescriptor,
    HlcStamp,
    HybridClock,
    PolicyConstraints,
    RecordError,
    bump_version,
    derive_agent_id,
    generate_keypair,
    is_canonical_path,
    new_record,
    normalize_capability,
    validate_record,
    verify_signature,
)
from agentindex.errors import InvalidCapabilityPath, InvalidKey, InvalidSeed, NotOwner, RecordValidationError

from conftest import seed_bytes


# -- keys -------------------------------------------------------------------


def test_same_seed_same_keypair():
    a, b = generate_keypair(bytes(32)), generate_keypair(bytes(32))
    assert a.public == b.public and a.secret == b.secret


def test_adjacent_seeds_give_distinct_keys():
    assert generate_keypair(bytes(32)).public != generate_keypair(bytes(31) + b"\x01").public


@pytest.mark.parametrize("n", [0, 31, 33, 64])
def test_wrong_seed_length(n):
    with pytest.raises(InvalidSeed):
        generate_keypair(bytes(n))


def test_sign_verify_and_key_mismatch():
    a, b = generate_keypair(seed_bytes("a")), generate_keypair(seed_bytes("b"))
    sig = a.sign(b"hello")
    assert verify_signature(a.public, sig, b"hello")
    assert not verify_signature(b.public, sig, b"hello")
    assert not verify_signature(a.public, sig, b"hellp")


@settings(max_examples=50, deadline=None)
@given(seed=st.binary(min_size=32, max_size=32), msg=st.binary(max_size=256))
def test_sign_then_verify_roundtrips(seed, msg):
    kp = generate_keypair(seed)
    assert verify_signature(kp.public, kp.sign(msg), msg)


# -- identifiers ------------------------------------------------------------


def test_agent_id_is_stable_32_bytes():
    kp = generate_keypair(seed_bytes("x"))
    assert derive_agent_id(kp.public) == derive_agent_id(kp.public) == kp.agent_id
    assert len(kp.agent_id.raw) == 32
    assert AgentId.from_hex(kp.agent_id.hex()) == kp.agent_id
    assert AgentId.from_int(int(kp.agent_id)) == kp.agent_id


def test_thousand_keys_thousand_ids():
    ids = {generate_keypair(seed_bytes(f"k{i}")).agent_id for i in range(1000)}
    assert len(ids) == 1000


def test_ten_thousand_ids_no_collisions():
    # digest injectivity over derived keys; uses the raw key path to keep this fast
    keys = [generate_keypair(i.to_bytes(32, "big")).public for i in range(10_000)]
    assert len({derive_agent_id(k) for k in keys}) == 10_000


@pytest.mark.parametrize("bad", [b"", b"\x00" * 31, b"\x00" * 33, "not-bytes"])
def test_malformed_key(bad):
    with pytest.raises(InvalidKey):
        derive_agent_id(bad)


# -- capability paths -----------------------------------------------------


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("/translate-en-es", "/translate-en-es"),
        ("/Optimize-Route/", "/optimize-route"),
        ("translate-en-es", "/translate-en-es"),
        ("//a//b/", "/a/b"),
        ("  /X1/y-2  ", "/x1/y-2"),
    ],
)
def test_normalize(raw, expected):
    assert normalize_capability(raw) == expected


@pytest.mark.parametrize("raw", ["", "   ", "/", "/a b", "/a_b", "/é", "/a/../b", "/a\tb"])
def test_normalize_rejects(raw):
    with pytest.raises(InvalidCapabilityPath):
        normalize_capability(raw)


@given(st.text(alphabet="abcXYZ09-/ ", min_size=1, max_size=30))
def test_normalize_idempotent(raw):
    try:
        once = normalize_capability(raw)
    except InvalidCapabilityPath:
        return
    assert normalize_capability(once) == once
    assert is_canonical_path(once)


# -- HLC ------------------------------------------------------------------------

stamps = st.builds(
    HlcStamp,
    st.integers(0, 5),
    st.integers(0, 5),
    st.sampled_from([AgentId(bytes([i]) * 32) for i in range(3)]),
)


@given(stamps, stamps, stamps)
def test_hlc_total_order(a, b, c):
    assert sum([a < b, a == b, a > b]) == 1
    if a < b and b < c:
        assert a < c
    if a <= b and b <= a:
        assert a == b


def test_hlc_order_fields():
    n0, n1 = AgentId(bytes(32)), AgentId(b"\x01" * 32)
    assert HlcStamp(1, 9, n1) < HlcStamp(2, 0, n0)
    assert HlcStamp(1, 1, n1) < HlcStamp(1, 2, n0)
    assert HlcStamp(1, 1, n0) < HlcStamp(1, 1, n1)


def test_hybrid_clock_monotone(clock_source):
    node = AgentId(bytes(32))
    clock = HybridClock(node, clock_source)
    seen = [clock.now()]
    for t in [0, 0, 5, 3, 3, 10]:
        clock_source.t = t
        seen.append(clock.now())
    remote = HlcStamp(50, 7, AgentId(b"\xff" * 32))
    seen.append(clock.observe(remote))
    assert seen[-1] > remote
    seen.append(clock.now())
    assert all(a < b for a, b in zip(seen, seen[1:]))


def test_hlc_json_and_bytes_roundtrip():
    s = HlcStamp(12, 3, AgentId(b"\x07" * 32))
    assert HlcStamp.from_json(s.to_json()) == s
    assert HlcStamp.decode(s.encode()) == s


# -- records --------------------------------------------------------------------


def test_fresh_record_is_valid(make_record):
    _, _, rec = make_record()
    assert validate_record(rec).ok


def test_signature_byte_flip_detected(make_record):
    _, _, rec = make_record()
    sig = bytearray(rec.signature)
    sig[0] ^= 1
    result = validate_record(dataclasses.replace(rec, signature=bytes(sig)))
    assert RecordError.SIGNATURE_INVALID in result


def test_trust_out_of_range(make_record):
    kp, clock, rec = make_record()
    with pytest.raises(RecordValidationError) as exc:
        new_record(kp, rec.capabilities, rec.endpoints, 1.5, rec.policy, rec.ttl_ms, clock)
    assert RecordError.TRUST_SCORE_OUT_OF_RANGE in exc.value.issues


def test_validation_reports_every_failure(make_record):
    kp, clock, rec = make_record()
    bad_cap = CapabilityDescriptor("/Not Canonical", b"short")
    broken = dataclasses.replace(
        rec,
        capabilities=(bad_cap, bad_cap),
        trust_score=-0.1,
        ttl_ms=10**12,
        policy=PolicyConstraints(max_delegation_depth=-1),
    )
    errs = set(validate_record(broken).errors)
    assert {
        RecordError.SIGNATURE_INVALID,
        RecordError.TRUST_SCORE_OUT_OF_RANGE,
        RecordError.DUPLICATE_CAPABILITY,
        RecordError.INVALID_CAPABILITY_PATH,
        RecordError.INVALID_MANIFEST_DIGEST,
        RecordError.TTL_OUT_OF_RANGE,
        RecordError.INVALID_POLICY,
    } <= errs


def test_agent_id_mismatch(make_record):
    _, _, rec = make_record("a")
    _, _, other = make_record("b")
    assert RecordError.AGENT_ID_MISMATCH in validate_record(dataclasses.replace(rec, agent_id=other.agent_id))


def test_ttl_max_configurable(make_record):
    _, _, rec = make_record(ttl_ms=5_000)
    assert validate_record(rec, max_ttl_ms=5_000).ok
    assert RecordError.TTL_OUT_OF_RANGE in validate_record(rec, max_ttl_ms=4_999)


def test_every_single_byte_mutation_fails_validation(make_record):
    _, _, rec = make_record()
    data = rec.to_bytes()
    for i in range(len(data)):
        mutated = bytearray(data)
        mutated[i] ^= 0x01
        try:
            decoded = AgentFacts.from_bytes(bytes(mutated))
        except Exception:  # noqa: BLE001 - undecodable counts as rejected
            continue
        assert not validate_record(decoded).ok, f"byte {i} mutation accepted"


def test_bytes_and_json_roundtrip(make_record):
    _, _, rec = make_record(caps=("/a", "/b/c"))
    assert AgentFacts.from_bytes(rec.to_bytes()) == rec
    assert AgentFacts.from_json(rec.to_json()) == rec
    assert sorted(rec.to_json()) == sorted(f.name for f in dataclasses.fields(AgentFacts))


def test_bump_version(make_record, clock_source):
    kp, clock, rec = make_record()
    newer = bump_version(rec, kp, clock, trust_score=0.7)
    assert newer.version > rec.version and newer.trust_score == 0.7
    assert validate_record(newer).ok
    other = generate_keypair(seed_bytes("intruder"))
    with pytest.raises(NotOwner):
        bump_version(rec, other, clock)


@settings(max_examples=25, deadline=None)
@given(
    trust=st.floats(0, 1),
    ttl=st.integers(0, 86_400_000),
    caps=st.lists(st.sampled_from(["/a", "/b", "/translate-en-es", "/x/y"]), unique=True, max_size=4),
    endpoints=st.lists(st.text(max_size=10), max_size=3),
    t=st.integers(0, 10**9),
)
def test_new_record_always_validates(trust, ttl, caps, endpoints, t):
    kp = generate_keypair(seed_bytes("prop"))
    clock = HybridClock(kp.agent_id, lambda: t)
    descs = [CapabilityDescriptor.create(c, bytes(32)) for c in caps]
    rec = new_record(kp, descs, endpoints, trust, PolicyConstraints(), ttl, clock)
    assert validate_record(rec).ok
