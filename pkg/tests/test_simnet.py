from __future__ import annotations

import io
import json
import statistics

import pytest

from agentindex.errors import RpcTimeout
from agentindex.simnet import (
    ChurnModel,
    Engine,
    Future,
    LinkModel,
    SimNetwork,
    TraceEntry,
    all_of,
    apply_churn,
    derive_rng,
)


def test_events_fire_in_time_then_fifo_order():
    eng = Engine()
    seen = []
    eng.call_later(5, seen.append, "b")
    eng.call_later(1, seen.append, "a")
    eng.call_later(5, seen.append, "c")
    eng.run()
    assert seen == ["a", "b", "c"] and eng.now == 5


def test_run_until_advances_clock_to_end():
    eng = Engine()
    seen = []
    eng.call_later(3, seen.append, 1)
    eng.call_later(30, seen.append, 2)
    assert eng.run_until(10) == 1
    assert eng.now == 10 and seen == [1] and eng.pending() == 1


def test_negative_delay_rejected():
    with pytest.raises(ValueError):
        Engine().call_later(-1, print)


def test_processes_sleep_and_wait():
    eng = Engine()
    log = []

    def child(n):
        yield n
        return n * 10

    def parent():
        a = yield eng.spawn(child(3))
        log.append((eng.now, a))
        both = yield [eng.spawn(child(2)), eng.spawn(child(7))]
        log.append((eng.now, [f.value for f in both]))
        return "done"

    assert eng.run_process(parent()) == "done"
    assert log == [(3, 30), (10, [20, 70])]


def test_all_of_waits_for_failures_too():
    eng = Engine()
    a, b = Future(), Future()
    joined = all_of([a, b])
    eng.call_later(1, a.fail, ValueError("x"))
    eng.call_later(5, b.resolve, 2)
    eng.run_until(2)
    assert not joined.done
    eng.run()
    assert joined.done and [f.ok for f in joined.value] == [False, True]


def test_derived_streams_are_stable_and_independent():
    assert derive_rng(1, "a").random() == derive_rng(1, "a").random()
    assert derive_rng(1, "a").random() != derive_rng(1, "b").random()
    assert derive_rng(1, "a").random() != derive_rng(2, "a").random()


def test_link_models():
    rng = derive_rng(0, "t")
    assert LinkModel.fixed(5).sample(rng) == 5
    uni = LinkModel(base_ms=1, jitter="uniform", lo=2, hi=4)
    assert all(3 <= uni.sample(rng) <= 5 for _ in range(200))
    logn = LinkModel.lognormal_median(10, 0.5)
    draws = [logn.sample(rng) for _ in range(4000)]
    assert 9 <= statistics.median(draws) <= 11
    with pytest.raises(ValueError):
        LinkModel(loss_rate=1.0)
    with pytest.raises(ValueError):
        LinkModel(jitter="pareto")


def _echo_net(link=LinkModel.fixed(5), processing=0):
    eng = Engine(7)
    net = SimNetwork(eng, link)
    inbox = []
    net.add_node("a", inbox.append, boundary="private:acme")
    net.add_node("b", lambda m: ("echo", m.body), boundary="public:global", processing_ms=processing)
    return eng, net, inbox


def test_rpc_round_trip_latency():
    eng, net, _ = _echo_net(processing=2)
    fut = net.rpc("a", "b", "ping", 1)
    eng.run()
    assert fut.value == ("echo", 1)
    # request link + processing + reply link; the reply is not processed again
    kinds = [(e.kind, e.t_send, e.t_deliver) for e in net.trace]
    assert kinds == [("ping", 0, 5), ("ping.reply", 7, 12)]


def test_rpc_timeout_when_peer_crashes():
    eng, net, _ = _echo_net()
    net.remove_node("b")
    fut = net.rpc("a", "b", "ping", timeout_ms=50)
    eng.run()
    assert isinstance(fut.error, RpcTimeout)
    assert net.totals().lost == 1


def test_rpc_handler_error_propagates():
    eng = Engine()
    net = SimNetwork(eng)
    net.add_node("a", lambda m: None)

    def boom(m):
        raise KeyError("nope")

    net.add_node("b", boom)
    fut = net.rpc("a", "b", "x")
    eng.run()
    assert isinstance(fut.error, KeyError)


def test_lossy_link_rate():
    eng = Engine(3)
    net = SimNetwork(eng, LinkModel.fixed(1, loss_rate=0.25), record_trace=False)
    got = []
    net.add_node("a", lambda m: None)
    net.add_node("b", got.append)
    for _ in range(4000):
        net.send("a", "b", "x")
    eng.run()
    assert 0.22 < 1 - len(got) / 4000 < 0.28


def test_crosses_boundary_rule():
    def entry(src, dst, kind="q"):
        return TraceEntry(0, 1, "s", "d", kind, 1, src, dst)

    assert entry("private:a", "public:g").crosses_boundary
    assert entry("private:a", "private:b").crosses_boundary
    assert not entry("private:a", "private:a").crosses_boundary
    assert not entry("public:g", "public:h").crosses_boundary
    assert not entry("private:a", "public:g", "q.reply").crosses_boundary


def test_trace_export_jsonl():
    eng, net, _ = _echo_net()
    net.rpc("a", "b", "ping")
    eng.run()
    buf = io.StringIO()
    assert net.export_trace(buf) == 2
    rows = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert rows[0]["kind"] == "ping" and rows[1]["kind"] == "ping.reply"


class _Counter:
    def __init__(self):
        self.joins = self.leaves = 0

    def churn_join(self):
        self.joins += 1

    def churn_leave(self, rng):
        self.leaves += 1


def test_poisson_churn_rates():
    eng = Engine(11)
    target = _Counter()
    schedule = apply_churn(eng, ChurnModel(join_rate=5, leave_rate=2), target, 100_000)
    eng.run()
    assert target.joins == sum(k == "join" for _, k in schedule)
    assert 400 <= target.joins <= 600 and 140 <= target.leaves <= 260
    assert schedule == sorted(schedule)


def test_same_seed_same_trace():
    def run(seed):
        eng = Engine(seed)
        net = SimNetwork(eng, LinkModel.lognormal_median(10))
        net.add_node("a", lambda m: None)
        net.add_node("b", lambda m: m.body)
        for i in range(50):
            net.rpc("a", "b", "x", i)
        eng.run()
        return [(e.t_send, e.t_deliver, e.kind) for e in net.trace]

    assert run(5) == run(5)
    assert run(5) != run(6)
