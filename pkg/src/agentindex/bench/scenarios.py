"""Benchmark scenarios. Each one builds fresh simulations and fills a MetricsReport."""

from __future__ import annotations

import hashlib
import logging
import math
import time
from typing import Callable

from ..agent_model import AgentId, PolicyConstraints, generate_keypair
from ..attestation import AuditChain, issue_staple, verify_chain, verify_staple
from ..errors import AgentIndexError, NotFound, PolicyDenied
from ..fabric_switch import CrdtRecord, GossipConfig, SwitchFabric, SwitchFabricConfig, make_tombstone
from ..fabric_upgrade import UpgradeFabric, UpgradeFabricConfig
from ..queries import AgentQuery, CapabilityQuery
from ..resolver import BoundaryResolver, BridgeGateway, PrivateShard, RegistryHandle, RegistryKind, SearchPath, audit_completeness
from ..simnet import ChurnModel, Engine, SimNetwork, apply_churn, is_private
from .config import Budget, ScenarioConfig
from .report import MetricsReport
from .workload import CAPABILITY_VOCABULARY, make_agent, make_population

log = logging.getLogger(__name__)


def _keypair(seed: int, label: str):
    return generate_keypair(hashlib.sha256(f"infra/{seed}/{label}".encode()).digest())


def _switch_config(cfg: ScenarioConfig, **overrides) -> SwitchFabricConfig:
    sw = cfg.switch
    values = dict(k=sw.k, alpha=sw.alpha, rpc_timeout_ms=sw.rpc_timeout_ms, processing_ms=sw.processing_ms,
                  gossip=GossipConfig(fanout=sw.gossip.fanout, period_ms=sw.gossip.period_ms))
    values.update(overrides)
    return SwitchFabricConfig(**values)


def gossip_round_budget(nodes: int) -> int:
    return 2 * math.ceil(math.log2(nodes)) if nodes > 1 else 0


def _b(metric: str, stat: str, op: str, value: float) -> Budget:
    return Budget(metric=metric, stat=stat, op=op, value=value)


def default_budgets(cfg: ScenarioConfig) -> list[Budget]:
    name = cfg.scenario
    if name == "update_propagation":
        out = []
        for ttl in cfg.workload.ttl_ms:
            out.append(_b(f"ttl_{ttl}ms.staleness_ms", "max", "<=", ttl))
            out.append(_b(f"ttl_{ttl}ms.staleness_ms", "max", ">", 0.5 * ttl))
        rounds = gossip_round_budget(cfg.switch.nodes)
        out += [
            _b("push.convergence_ms", "p99", "<", 1000),
            _b("gossip.rounds", "max", "<=", rounds),
            _b("gossip.tombstone.rounds", "max", "<=", rounds),
        ]
        return out
    if name == "revocation_race":
        return [_b("revocation.violations", "max", "<=", 0)]
    if name == "discovery_latency":
        return [
            _b("discovery.latency_ms", "p99", "<", 250),
            _b("discovery.revoked_returned", "max", "<=", 0),
        ]
    if name == "boundary_audit":
        return [
            _b("boundary.bridge_warm_ms", "max", "<", 50),
            _b("boundary.bridge_warm_ms", "count", ">=", 1000),
            _b("boundary.audit_unmatched_messages", "max", "<=", 0),
            _b("boundary.audit_unmatched_events", "max", "<=", 0),
            _b("boundary.chain_valid", "min", ">=", 1),
            _b("boundary.tamper_missed", "max", "<=", 0),
            _b("boundary.policy_leaks", "max", "<=", 0),
            _b("boundary.order_violations", "max", "<=", 0),
        ]
    return []


# -- update_propagation ----------------------------------------------------------


def _ttl_staleness(cfg: ScenarioConfig, ttl: int) -> list[int]:
    up, wl = cfg.upgrade, cfg.workload
    engine = Engine(cfg.seed)
    net = SimNetwork(engine, up.link.build(), record_trace=False)
    fabric = UpgradeFabric(UpgradeFabricConfig(tree_depth=up.tree_depth, fanout=up.fanout, resolver_count=up.resolver_count,
                                               push_enabled=False, ttl_override_ms=ttl, processing_ms=up.processing_ms), net)
    agent = make_agent(engine, cfg.seed, 0, label="ttl", ttl_ms=ttl)
    fabric.publish(agent.record)
    update_every = max(1, ttl // wl.staleness_updates_per_ttl)
    query_every = max(1, ttl // wl.staleness_queries_per_ttl)
    horizon = wl.staleness_cycles * ttl
    rng = engine.rng("ttl-queries", ttl)
    leaves = fabric.leaves
    samples: list[int] = []

    def publish_next():
        fabric.publish(agent.update())

    for t in range(update_every, horizon, update_every):
        engine.call_at(t, publish_next)

    def record(proc):
        res = proc.value
        samples.append(fabric.staleness_ms(agent.agent_id, res.record.version, res.served_ms))

    def issue():
        fabric.query(leaves[rng.randrange(len(leaves))], agent.agent_id).add_done_callback(record)

    for t in range(query_every, horizon, query_every):
        engine.call_at(t, issue)
    engine.run_until(horizon + 10 * ttl)
    return samples


def _push_convergence(cfg: ScenarioConfig) -> list[int]:
    up, wl = cfg.upgrade, cfg.workload
    engine = Engine(cfg.seed)
    net = SimNetwork(engine, up.link.build(), record_trace=False)
    fabric = UpgradeFabric(UpgradeFabricConfig(tree_depth=up.tree_depth, fanout=up.fanout, resolver_count=up.resolver_count,
                                               push_enabled=True, processing_ms=up.processing_ms), net)
    agent = make_agent(engine, cfg.seed, 0, label="push")
    fabric.publish(agent.record)
    fabric.subscribe_all(agent.agent_id)
    out = []
    for _ in range(wl.updates):
        engine.run_until(engine.now + 100)
        t_pub = engine.now
        for s in fabric.push_convergence(agent.update()):
            out.append(s.converged_at_ms - t_pub)
    return out


def _gossip(cfg: ScenarioConfig, report: MetricsReport) -> None:
    wl = cfg.workload
    engine = Engine(cfg.seed)
    net = SimNetwork(engine, cfg.switch.link.build(), record_trace=False)
    fabric = SwitchFabric(_switch_config(cfg), net)
    for _ in range(cfg.switch.nodes):
        fabric.add_node()
    agent = make_agent(engine, cfg.seed, 0, label="gossip")
    rng = engine.rng("gossip-origins")
    for _ in range(wl.updates):
        res = fabric.propagation_time(agent.record, fabric.live[rng.randrange(len(fabric.live))])
        _report_propagation(report, "gossip", res)
        engine.run_until(engine.now + 50)
        agent.update()
    tomb = make_tombstone(agent.keypair, agent.record, agent.clock)
    res = fabric.propagation_time(tomb, fabric.live[rng.randrange(len(fabric.live))])
    _report_propagation(report, "gossip.tombstone", res)
    fabric.stop_gossip()


def _report_propagation(report: MetricsReport, prefix: str, res) -> None:
    if not res.complete:
        # an unfinished spread must fail any round budget
        report.add(f"{prefix}.incomplete_nodes", "count", res.live_nodes - len(res.first_seen))
        report.add(f"{prefix}.rounds", "rounds", float("inf"))
        return
    report.add(f"{prefix}.all_node_ms", "ms", res.all_node_ms)
    report.add(f"{prefix}.first_peer_ms", "ms", res.first_peer_ms)
    report.add(f"{prefix}.rounds", "rounds", res.rounds)


def update_propagation(cfg: ScenarioConfig, report: MetricsReport) -> None:
    for ttl in cfg.workload.ttl_ms:
        report.extend(f"ttl_{ttl}ms.staleness_ms", "ms", _ttl_staleness(cfg, ttl))
    report.extend("push.convergence_ms", "ms", _push_convergence(cfg))
    _gossip(cfg, report)


# -- revocation_race ---------------------------------------------------------------


def revocation_race(cfg: ScenarioConfig, report: MetricsReport) -> None:
    rv = cfg.revocation
    engine = Engine(cfg.seed)
    net = SimNetwork(engine, cfg.switch.link.build(), record_trace=False)
    fabric = SwitchFabric(_switch_config(cfg), net)
    for _ in range(rv.verifiers):
        fabric.add_node()
    agent = make_agent(engine, cfg.seed, 0, label="revoked", ttl_ms=60_000)
    home = fabric.live[0]
    fabric.merge_local(home, CrdtRecord.of(agent.record))
    fabric.start_gossip()

    # the helper agent hands its newest staple to anyone who asks
    state = {"staple": issue_staple(agent.keypair, agent.record.version, 0, rv.staple_window_ms), "stapling": True}
    net.add_node("helper", lambda msg: state["staple"], boundary=fabric.config.boundary)

    def restaple():
        if not state["stapling"]:
            return
        state["staple"] = issue_staple(agent.keypair, agent.record.version, engine.now, rv.staple_window_ms)
        engine.call_later(rv.restaple_interval_ms, restaple)

    engine.call_later(rv.restaple_interval_ms, restaple)

    end = rv.t0_ms + rv.observe_ms
    last_accept: dict[str, int] = {}
    aid = agent.agent_id

    def probe(name: str, local: Callable[[], CrdtRecord | None]):
        if engine.now >= end or not net.is_live(name):
            return
        fut = net.rpc(name, "helper", "staple.fetch", timeout_ms=rv.staple_window_ms)

        def judge(f):
            value = local()
            if not f.ok or value is None or value.is_tombstone:
                return
            staple = f.value
            if staple.record_version == value.stamp and verify_staple(staple, value.record.public_key, engine.now).ok:
                last_accept[name] = engine.now

        fut.add_done_callback(judge)
        engine.call_later(rv.probe_interval_ms, probe, name, local)

    phase = engine.rng("probe-phase")
    for node in fabric.live:
        engine.call_later(phase.randrange(rv.probe_interval_ms), probe, node.name,
                          lambda node=node: node.store.get(aid))
    # verifiers outside the gossip mesh keep their copy and rely on staple expiry alone
    isolated = CrdtRecord.of(agent.record)
    offline = [f"offline-{i:03d}" for i in range(rv.staple_only_verifiers)]
    for name in offline:
        net.add_node(name, lambda msg: None, boundary=fabric.config.boundary)
        engine.call_later(phase.randrange(rv.probe_interval_ms), probe, name, lambda: isolated)

    # a bridge in front of one replica shows how long its cache can mask the revocation
    bridge = BridgeGateway("bridge", net, _keypair(cfg.seed, "bridge"), "private:client", fabric.config.boundary,
                           downstream=fabric.live[-1].name, cache_ttl_ms=rv.bridge_cache_ttl_ms)
    net.add_node("bridge-client", lambda msg: None, boundary="private:client")
    bridge_last = {"t": None}

    def bridge_probe():
        if engine.now >= end:
            return
        proc = bridge.traverse("bridge-client", AgentQuery(aid))

        def seen(p):
            if p.ok and engine.now >= rv.t0_ms:
                bridge_last["t"] = engine.now

        proc.add_done_callback(seen)
        engine.call_later(5 * rv.probe_interval_ms, bridge_probe)

    engine.call_later(rv.probe_interval_ms, bridge_probe)

    tomb_seen: dict[str, int] = {}

    def watch(node, merged):
        if merged.agent_id == aid and merged.is_tombstone:
            tomb_seen.setdefault(node.name, engine.now)

    fabric.add_observer(watch)
    engine.run_until(rv.t0_ms)
    last_issue = state["staple"].issued_ms
    state["stapling"] = False
    tomb = make_tombstone(agent.keypair, agent.record, agent.clock)
    fabric.merge_local(home, CrdtRecord.of(tomb))
    engine.run_until(end)
    fabric.stop_gossip()
    engine.run_until(end + rv.staple_window_ms)

    live = [n.name for n in fabric.live]
    converged = all(name in tomb_seen for name in live)
    convergence = max(tomb_seen[name] for name in live) - rv.t0_ms if converged else None
    staple_deadline = last_issue + rv.staple_window_ms
    bound = rv.staple_window_ms + (convergence if convergence is not None else rv.observe_ms)
    violations = 0
    for metric, names in (("revocation.stale_acceptance_ms", live), ("revocation.staple_only_acceptance_ms", offline)):
        for name in names:
            t = last_accept.get(name)
            report.add(metric, "ms", max(0, t - rv.t0_ms) if t is not None else 0)
            if t is not None and (t - rv.t0_ms > bound or t >= staple_deadline):
                violations += 1
    if convergence is not None:
        report.add("revocation.tombstone_convergence_ms", "ms", convergence)
    else:
        report.add("revocation.tombstone_incomplete", "count", len(live) - len(tomb_seen))
    report.add("revocation.bound_ms", "ms", bound)
    report.add("revocation.violations", "count", violations)
    masked = bridge_last["t"] - rv.t0_ms if bridge_last["t"] is not None else 0
    report.add("revocation.bridge_masked_ms", "ms", masked)


# -- discovery_latency -------------------------------------------------------------


def _populate_switch(cfg: ScenarioConfig, engine: Engine, fabric: SwitchFabric, agents) -> None:
    rng = engine.rng("announce-origins")
    for agent in agents:
        origin = fabric.live[rng.randrange(len(fabric.live))]
        engine.run_process(fabric.announce(origin, agent.record, agent.tokens))


def discovery_latency(cfg: ScenarioConfig, report: MetricsReport) -> None:
    wl = cfg.workload
    engine = Engine(cfg.seed)
    net = SimNetwork(engine, cfg.switch.link.build(), record_trace=False)
    fabric = SwitchFabric(_switch_config(cfg), net)
    fabric.bootstrap(cfg.switch.nodes)
    agents = make_population(engine, cfg.seed, wl.agents, per_agent=wl.capabilities_per_agent)
    _populate_switch(cfg, engine, fabric, agents)
    revoked = set()
    rng = engine.rng("revocations")
    for agent in agents[: wl.revoked_agents]:
        tomb = make_tombstone(agent.keypair, agent.record, agent.clock)
        origin = fabric.live[rng.randrange(len(fabric.live))]
        engine.run_process(fabric.revoke(origin, tomb, agent.record.capability_paths))
        revoked.add(agent.agent_id)

    qrng = engine.rng("discovery-queries")
    latencies, hops, counts = [], [], []
    leaked = [0]

    def issue():
        origin = fabric.live[qrng.randrange(len(fabric.live))]
        path = CAPABILITY_VOCABULARY[qrng.randrange(len(CAPABILITY_VOCABULARY))]
        proc = fabric.capability_lookup(origin, path, wl.min_trust)

        def done(p):
            res = p.result()
            latencies.append(res.latency_ms)
            hops.append(res.hop_count)
            counts.append(len(res.providers))
            leaked[0] += sum(1 for prov in res.providers if prov.agent_id in revoked)

        proc.add_done_callback(done)

    start = engine.now
    for i in range(wl.queries):
        engine.call_at(start + i * wl.query_interval_ms, issue)
    engine.run()
    report.extend("discovery.latency_ms", "ms", latencies)
    report.extend("discovery.hops", "rounds", hops)
    report.extend("discovery.providers", "count", counts)
    report.add("discovery.revoked_returned", "count", leaked[0])
    for target in wl.latency_targets_ms:
        within = sum(1 for x in latencies if x <= target) / len(latencies) if latencies else 0.0
        report.add(f"discovery.within_{target}ms", "fraction", within)


# -- boundary_audit ------------------------------------------------------------------


def tamper_trials(chain: AuditChain) -> tuple[int, int]:
    """Flip every bit of the serialized chain; returns (trials, undetected)."""
    original = chain.to_bytes()
    missed = 0
    buf = bytearray(original)
    for i in range(len(buf)):
        for bit in range(8):
            buf[i] ^= 1 << bit
            try:
                verdict = verify_chain(AuditChain.from_bytes(bytes(buf)))
                if verdict.valid:
                    missed += 1
            except (AgentIndexError, ValueError):
                pass
            buf[i] ^= 1 << bit
    return len(original) * 8, missed


def boundary_audit(cfg: ScenarioConfig, report: MetricsReport) -> None:
    bd = cfg.boundary
    engine = Engine(cfg.seed)
    net = SimNetwork(engine, cfg.switch.link.build(), record_trace=True)
    home = bd.search_path[0].label
    resolver = BoundaryResolver("resolver", home, net, _keypair(cfg.seed, "resolver"))
    private_agents = [make_agent(engine, cfg.seed, i, label="private", capabilities=(CAPABILITY_VOCABULARY[i % 3],))
                      for i in range(bd.private_agents)]
    public_agents = make_population(engine, cfg.seed, bd.public_agents, label="public", per_agent=2)

    entries: dict[str, str] = {}
    for idx, item in enumerate(bd.search_path):
        kind = RegistryKind(item.kind)
        if kind is RegistryKind.PRIVATE:
            shard = PrivateShard(f"shard-{idx}", item.label, net)
            net.set_link(resolver.name, shard.name, bd.shard_link.build())
            if item.label == home:
                for a in private_agents:
                    shard.put(a.record, a.tokens)
            else:
                for a in public_agents:
                    shard.put(a.record, a.tokens)
            target = shard.name
        elif kind is RegistryKind.SWITCH:
            fabric = SwitchFabric(_switch_config(cfg, boundary=item.label, name_prefix=f"sw{idx}"), net)
            fabric.bootstrap(bd.fabric_nodes)
            _populate_switch(cfg, engine, fabric, public_agents)
            target = fabric.live[0].name
        else:
            up = cfg.upgrade
            fabric_u = UpgradeFabric(UpgradeFabricConfig(tree_depth=up.tree_depth, fanout=up.fanout, resolver_count=up.resolver_count,
                                                         processing_ms=up.processing_ms, boundary=item.label,
                                                         name_prefix=f"up{idx}"), net)
            for a in public_agents:
                fabric_u.publish(a.record)
                for tok in a.tokens:
                    fabric_u.register_token(tok)
            target = fabric_u.leaves[0].node_id
        if item.bridged:
            bridge = BridgeGateway(f"bridge-{idx}", net, _keypair(cfg.seed, f"bridge-{idx}"), home, item.label, target,
                                   cache_ttl_ms=bd.cache_ttl_ms, max_providers=bd.max_providers)
            net.set_link(resolver.name, bridge.name, bd.bridge_link.build())
            resolver.add_bridge(bridge)
            target = bridge.name
        elif not is_private(item.label):
            net.set_link(resolver.name, target, bd.bridge_link.build())
        entries[item.label] = target
    path = SearchPath(tuple(RegistryHandle(e.label, RegistryKind(e.kind), entries[e.label], e.bridged) for e in bd.search_path))
    labels = [h.label for h in path]

    engine.run_until(engine.now + 10)
    rng = engine.rng("boundary-queries")
    everyone = private_agents + public_agents
    stats = {"denied": 0, "not_found": 0, "leaks": 0, "order": 0}
    lat, warm, cold, pos = [], [], [], []

    def driver():
        for _ in range(bd.queries):
            roll = rng.random()
            if roll < bd.capability_fraction:
                query = CapabilityQuery(CAPABILITY_VOCABULARY[rng.randrange(len(CAPABILITY_VOCABULARY))])
            elif roll < bd.capability_fraction + bd.unknown_fraction or not everyone:
                query = AgentQuery(AgentId(rng.randbytes(32)))
            else:
                query = AgentQuery(everyone[rng.randrange(len(everyone))].agent_id)
            denied = rng.random() < bd.denied_fraction
            policy = PolicyConstraints(allow_external_resolution=not denied)
            actor = private_agents[rng.randrange(len(private_agents))].agent_id if private_agents else None
            mark = len(net.trace)
            try:
                res = yield resolver.resolve_async(path, query, policy, actor)
                lat.append(res.latency_ms)
                pos.append(res.position)
                if res.proof is not None:
                    (warm if res.from_cache else cold).append(res.hop_latency_ms)
            except PolicyDenied:
                stats["denied"] += 1
            except NotFound:
                stats["not_found"] += 1
            sent = [e for e in net.trace[mark:] if e.src == resolver.name]
            if denied:
                stats["leaks"] += sum(1 for e in sent if not is_private(e.dst_boundary))
            contacted = [e.dst_boundary for e in sent]
            if contacted != labels[: len(contacted)]:
                stats["order"] += 1
            yield bd.query_interval_ms

    engine.run_process(engine.spawn(driver()))
    audit = audit_completeness(resolver.chain, net.trace)
    report.extend("boundary.resolve_latency_ms", "ms", lat)
    report.extend("boundary.answer_position", "index", pos)
    report.extend("boundary.bridge_warm_ms", "ms", warm)
    report.extend("boundary.bridge_cold_ms", "ms", cold)
    report.add("boundary.policy_denied", "count", stats["denied"])
    report.add("boundary.not_found", "count", stats["not_found"])
    report.add("boundary.policy_leaks", "count", stats["leaks"])
    report.add("boundary.order_violations", "count", stats["order"])
    report.add("boundary.audit_events", "count", audit.events)
    report.add("boundary.boundary_crossings", "count", audit.crossings)
    report.add("boundary.audit_unmatched_messages", "count", len(audit.unmatched_messages))
    report.add("boundary.audit_unmatched_events", "count", len(audit.unmatched_events))
    report.add("boundary.chain_valid", "bool", int(verify_chain(resolver.chain).valid))
    if len(resolver.chain) >= bd.tamper_events:
        sub = AuditChain(resolver.chain.signer_public_key, resolver.chain.events[: bd.tamper_events])
        trials, missed = tamper_trials(sub)
        report.add("boundary.tamper_trials", "count", trials)
        report.add("boundary.tamper_missed", "count", missed)
    report.info["audit_chain_head"] = resolver.chain.head_digest.hex()


# -- churn_resilience --------------------------------------------------------------------


def churn_resilience(cfg: ScenarioConfig, report: MetricsReport) -> None:
    wl, churn = cfg.workload, cfg.churn
    engine = Engine(cfg.seed)
    net = SimNetwork(engine, cfg.switch.link.build(), record_trace=False)
    fabric = SwitchFabric(_switch_config(cfg), net)
    fabric.bootstrap(cfg.switch.nodes)
    agents = make_population(engine, cfg.seed, wl.agents, per_agent=1)
    rng = engine.rng("store-origins")
    for agent in agents:
        engine.run_process(fabric.store(fabric.live[rng.randrange(len(fabric.live))], agent.record))

    def phase(label: str, count: int, interval: int):
        qrng = engine.rng("churn-queries", label)
        outcome = {"ok": [], "hops": [], "lat": []}

        def issue():
            origin = fabric.live[qrng.randrange(len(fabric.live))]
            agent = agents[qrng.randrange(len(agents))]
            fabric.protected.add(origin.name)
            started = engine.now
            proc = fabric.get(origin, agent.agent_id)

            def done(p):
                fabric.protected.discard(origin.name)
                value, hops = p.value if p.ok else (None, 0)
                ok = value is not None and not value.is_tombstone and value.stamp == agent.record.version
                outcome["ok"].append(int(ok))
                outcome["hops"].append(hops)
                outcome["lat"].append(engine.now - started)

            proc.add_done_callback(done)

        start = engine.now
        for i in range(count):
            engine.call_at(start + i * interval, issue)
        return outcome

    base = phase("baseline", wl.queries, wl.query_interval_ms)
    engine.run()
    schedule = apply_churn(engine, ChurnModel(churn.join_rate, churn.leave_rate), fabric, churn.duration_ms)
    interval = max(1, churn.duration_ms // max(1, wl.queries))
    churned = phase("churn", wl.queries, interval)
    engine.run()

    for label, out in (("baseline", base), ("churn", churned)):
        report.extend(f"{label}.success", "bool", out["ok"])
        report.extend(f"{label}.hops", "rounds", out["hops"])
        report.extend(f"{label}.latency_ms", "ms", out["lat"])
        report.add(f"{label}.success_rate", "fraction", sum(out["ok"]) / len(out["ok"]) if out["ok"] else 0.0)
    base_hops = sum(base["hops"]) / len(base["hops"]) if base["hops"] else 0.0
    churn_hops = sum(churned["hops"]) / len(churned["hops"]) if churned["hops"] else 0.0
    report.add("churn.hop_inflation", "ratio", churn_hops / base_hops if base_hops else 0.0)
    report.add("churn.joins", "count", sum(1 for _, k in schedule if k == "join"))
    report.add("churn.leaves", "count", sum(1 for _, k in schedule if k == "leave"))
    report.add("churn.live_nodes_end", "count", len(fabric.live))


SCENARIO_FUNCS: dict[str, Callable[[ScenarioConfig, MetricsReport], None]] = {
    "update_propagation": update_propagation,
    "revocation_race": revocation_race,
    "discovery_latency": discovery_latency,
    "boundary_audit": boundary_audit,
    "churn_resilience": churn_resilience,
}


def run_scenario(cfg: ScenarioConfig) -> MetricsReport:
    budgets = cfg.budgets if cfg.budgets is not None else default_budgets(cfg)
    report = MetricsReport(cfg.scenario, cfg.seed, budgets)
    started = time.perf_counter()
    SCENARIO_FUNCS[cfg.scenario](cfg, report)
    log.info("%s seed=%d finished in %.2fs", cfg.scenario, cfg.seed, time.perf_counter() - started)
    return report
