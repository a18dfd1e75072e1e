from __future__ import annotations

import io

import pytest

from agentindex.agent_model import bump_version
from agentindex.attestation import issue_capability_token
from agentindex.errors import NotFound, PushUnavailable, RecordValidationError, StaleVersion
from agentindex.fabric_upgrade import UpgradeFabricConfig, build_tree, write_convergence_csv
from agentindex.queries import AgentQuery, CapabilityQuery
from agentindex.simnet import Engine, LinkModel, SimNetwork

from oracles import tree_cold_latency, tree_push_latency

HOP, PROC = 5, 1


def make_tree(push=False, depth=3, fanout=2, count=None, ttl=None, seed=0):
    net = SimNetwork(Engine(seed), LinkModel.fixed(HOP))
    cfg = UpgradeFabricConfig(tree_depth=depth, fanout=fanout, resolver_count=count, push_enabled=push,
                              processing_ms=PROC, ttl_override_ms=ttl)
    return build_tree(cfg, net)


def test_topology_sizes():
    full = make_tree(depth=3, fanout=5)
    assert len(full.resolvers) == 1 + 5 + 25 + 125 and full.depth == 3
    assert len(full.leaves) == 125
    trimmed = make_tree(depth=3, fanout=5, count=100)
    assert len(trimmed.resolvers) == 100 and trimmed.depth == 3
    assert all(leaf.is_leaf for leaf in trimmed.leaves)


@pytest.mark.parametrize("kwargs", [dict(tree_depth=0), dict(fanout=0), dict(resolver_count=31), dict(resolver_count=157),
                                    dict(processing_ms=-1)])
def test_bad_config(kwargs):
    base = dict(tree_depth=3, fanout=5)
    with pytest.raises(ValueError):
        UpgradeFabricConfig(**{**base, **kwargs})


def test_cold_then_warm(make_record):
    tree = make_tree()
    _, _, rec = make_record(ttl_ms=1000)
    tree.publish(rec)
    leaf = tree.leaves[0]
    cold = tree.resolve_ttl(leaf, rec.agent_id)
    assert cold.record == rec
    assert cold.latency_ms == tree_cold_latency(3, HOP, PROC)
    assert cold.cache_depth_hit == 3
    warm = tree.resolve_ttl(leaf, rec.agent_id)
    assert warm.latency_ms == 0 and warm.cache_depth_hit == 0


def test_sibling_hits_parent_cache(make_record):
    tree = make_tree()
    _, _, rec = make_record()
    tree.publish(rec)
    a, b = tree.leaves[0], tree.leaves[1]
    assert a.parent is b.parent
    tree.resolve_ttl(a, rec.agent_id)
    res = tree.resolve_ttl(b, rec.agent_id)
    assert res.cache_depth_hit == 1 and res.latency_ms == tree_cold_latency(1, HOP, PROC)


def test_unknown_agent_not_found(make_record):
    tree = make_tree()
    _, _, rec = make_record()
    with pytest.raises(NotFound):
        tree.resolve_ttl(tree.leaves[0], rec.agent_id)


def test_publish_rejects_invalid_and_stale(make_record):
    import dataclasses

    tree = make_tree()
    kp, clock, rec = make_record()
    tree.publish(rec)
    with pytest.raises(StaleVersion):
        tree.publish(rec)
    with pytest.raises(RecordValidationError):
        tree.publish(dataclasses.replace(bump_version(rec, kp, clock), trust_score=0.9))


def test_ttl_expiry_refetches(make_record, clock_source):
    tree = make_tree()
    kp, clock, rec = make_record(ttl_ms=1000)
    tree.publish(rec)
    leaf = tree.leaves[0]
    tree.resolve_ttl(leaf, rec.agent_id)
    clock_source.t = 100
    newer = bump_version(rec, kp, clock, trust_score=0.9)
    tree.publish(newer, t=100)
    stale = tree.resolve_ttl(leaf, rec.agent_id, t=500)
    assert stale.record.version == rec.version
    assert 0 < tree.staleness_ms(rec.agent_id, stale.record.version, stale.served_ms) < 1000
    # the leaf's copy ages from when the root produced it, not from when it arrived
    produced = leaf.cache[rec.agent_id].inserted_ms
    assert 0 < produced < tree_cold_latency(3, HOP, PROC)
    assert tree.resolve_ttl(leaf, rec.agent_id, t=produced + 999).record.version == rec.version
    fresh = tree.resolve_ttl(leaf, rec.agent_id, t=produced + 1000)
    assert fresh.record.version == newer.version
    assert tree.staleness_ms(rec.agent_id, fresh.record.version, fresh.served_ms) == 0


def test_inherited_age_bounds_staleness(make_record, clock_source):
    # a mid-tree cache refreshed late must not extend a leaf's staleness past one TTL
    tree = make_tree(ttl=1000)
    kp, clock, rec = make_record()
    tree.publish(rec)
    mid_leaf, other_leaf = tree.leaves[0], tree.leaves[1]
    tree.resolve_ttl(mid_leaf, rec.agent_id)
    clock_source.t = 10
    newer = bump_version(rec, kp, clock)
    tree.publish(newer, t=10)
    produced = mid_leaf.parent.cache[rec.agent_id].inserted_ms
    late = tree.resolve_ttl(other_leaf, rec.agent_id, t=990)
    assert late.record.version == rec.version
    assert other_leaf.cache[rec.agent_id].inserted_ms == produced
    later = tree.resolve_ttl(other_leaf, rec.agent_id, t=produced + 1000)
    assert later.record.version == newer.version


def test_push_requires_enable(make_record):
    tree = make_tree(push=False)
    _, _, rec = make_record()
    with pytest.raises(PushUnavailable):
        tree.subscribe_push(tree.leaves[0], rec.agent_id)


def test_push_convergence_matches_oracle(make_record, clock_source):
    tree = make_tree(push=True, depth=3, fanout=3)
    kp, clock, rec = make_record()
    tree.publish(rec)
    tree.subscribe_all(rec.agent_id)
    clock_source.t = 50
    newer = bump_version(rec, kp, clock)
    samples = tree.push_convergence(newer, t=50)
    assert len(samples) == len(tree.resolvers)
    for s in samples:
        assert s.converged_at_ms - 50 == tree_push_latency(s.depth, HOP, PROC)
    buf = io.StringIO()
    write_convergence_csv(samples, buf)
    assert buf.getvalue().splitlines()[0] == "resolver_id,depth,converged_at_ms"
    assert len(buf.getvalue().splitlines()) == len(samples) + 1


def test_push_convergence_needs_every_leaf(make_record):
    tree = make_tree(push=True)
    _, _, rec = make_record()
    tree.subscribe_push(tree.leaves[0], rec.agent_id)
    with pytest.raises(ValueError):
        tree.push_convergence(rec)


def test_registry_queries(make_record):
    tree = make_tree()
    kp, _, rec = make_record(caps=("/translate-en-es",), trust=0.8)
    tree.publish(rec)
    tree.register_token(issue_capability_token(kp, rec.capabilities[0], (0, 10_000)))
    leaf, eng = tree.leaves[0], tree.engine
    agent = eng.run_process(tree._registry_query(leaf, AgentQuery(rec.agent_id)))
    assert agent == rec
    providers = eng.run_process(tree._registry_query(leaf, CapabilityQuery.create("/translate-en-es")))
    assert [p.agent_id for p in providers] == [rec.agent_id]
    none = eng.run_process(tree._registry_query(leaf, CapabilityQuery.create("/translate-en-es", 0.9)))
    assert none == []
