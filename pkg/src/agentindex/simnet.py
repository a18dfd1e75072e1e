"""Deterministic discrete-event simulation kernel.

The engine keeps an integer-millisecond virtual clock and a heap of events
ordered by ``(fire_at_ms, seq)``. Protocol code runs either as plain
callbacks or as generator processes that yield:

* an ``int`` -- sleep that many milliseconds,
* a :class:`Future` -- resume with its value (or have its exception thrown in),
* a list of futures -- resume with the list once every one is done.

:class:`SimNetwork` layers latency-modelled links, seeded loss, crash-stop
nodes, request/reply RPCs and a full message trace on top of the engine.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import json
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Protocol

from .errors import RpcTimeout

log = logging.getLogger(__name__)


def derive_rng(seed: int, *labels: object) -> random.Random:
    """Return an independent stream keyed by ``seed`` and a stable label path."""
    h = hashlib.sha256(str(seed).encode())
    for label in labels:
        h.update(b"\x00")
        h.update(str(label).encode())
    return random.Random(int.from_bytes(h.digest()[:16], "big"))


# --------------------------------------------------------------------------
# futures and processes
# --------------------------------------------------------------------------


class Future:
    __slots__ = ("done", "value", "error", "_callbacks")

    def __init__(self):
        self.done = False
        self.value = None
        self.error: BaseException | None = None
        self._callbacks: list[Callable[[Future], None]] | None = []

    @property
    def ok(self) -> bool:
        return self.done and self.error is None

    def resolve(self, value=None) -> None:
        if self.done:
            return
        self.done, self.value = True, value
        self._fire()

    def fail(self, error: BaseException) -> None:
        if self.done:
            return
        self.done, self.error = True, error
        self._fire()

    def result(self):
        if not self.done:
            raise RuntimeError("future is not done")
        if self.error is not None:
            raise self.error
        return self.value

    def add_done_callback(self, fn: Callable[[Future], None]) -> None:
        if self.done:
            fn(self)
        else:
            self._callbacks.append(fn)

    def _fire(self) -> None:
        callbacks, self._callbacks = self._callbacks, None
        for fn in callbacks:
            fn(self)


def all_of(futures: Iterable[Future]) -> Future:
    futures = list(futures)
    out = Future()
    remaining = [len(futures)]
    if not futures:
        out.resolve([])
        return out

    def _one(_):
        remaining[0] -= 1
        if remaining[0] == 0:
            out.resolve(futures)

    for f in futures:
        f.add_done_callback(_one)
    return out


class Process(Future):
    """A generator driven by the engine; resolves with the generator's return value."""

    __slots__ = ("engine", "_gen")

    def __init__(self, engine: Engine, gen):
        super().__init__()
        self.engine = engine
        self._gen = gen
        self._step(None, None)

    def _step(self, value, error) -> None:
        try:
            cmd = self._gen.throw(error) if error is not None else self._gen.send(value)
        except StopIteration as stop:
            self.resolve(stop.value)
            return
        except Exception as exc:  # noqa: BLE001 - surfaced through the future
            self.fail(exc)
            return
        if isinstance(cmd, int):
            self.engine.call_later(cmd, self._step, None, None)
        elif isinstance(cmd, Future):
            cmd.add_done_callback(self._resume)
        elif isinstance(cmd, list):
            all_of(cmd).add_done_callback(self._resume)
        else:
            self._step(None, TypeError(f"process yielded unsupported {cmd!r}"))

    def _resume(self, fut: Future) -> None:
        if fut.error is not None:
            self._step(None, fut.error)
        else:
            self._step(fut.value, None)


# --------------------------------------------------------------------------
# engine
# --------------------------------------------------------------------------


@dataclass(order=True)
class SimEvent:
    fire_at_ms: int
    seq: int
    target: Any = field(compare=False)
    payload: Any = field(compare=False)
    args: tuple = field(compare=False, default=())


class SimClock:
    __slots__ = ("now_ms",)

    def __init__(self):
        self.now_ms = 0


class Engine:
    """Single-threaded event loop with a seeded random source."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.clock = SimClock()
        self._queue: list[SimEvent] = []
        self._seq = itertools.count()
        self._handlers: dict[Any, Callable[[Any], None]] = {}
        self.processed = 0

    @property
    def now(self) -> int:
        return self.clock.now_ms

    def rng(self, *labels: object) -> random.Random:
        return derive_rng(self.seed, *labels)

    def register(self, target, handler: Callable[[Any], None]) -> None:
        self._handlers[target] = handler

    def unregister(self, target) -> None:
        self._handlers.pop(target, None)

    def schedule(self, delay_ms: int, target, payload) -> int:
        """Deliver ``payload`` to the handler registered for ``target`` after ``delay_ms``."""
        if delay_ms < 0:
            raise ValueError("delay_ms must be non-negative")
        seq = next(self._seq)
        heapq.heappush(self._queue, (self.clock.now_ms + int(delay_ms), seq, target, payload, ()))
        return seq

    def call_later(self, delay_ms: int, fn: Callable, *args) -> int:
        if delay_ms < 0:
            raise ValueError("delay_ms must be non-negative")
        seq = next(self._seq)
        heapq.heappush(self._queue, (self.clock.now_ms + int(delay_ms), seq, None, fn, args))
        return seq

    def call_at(self, t_ms: int, fn: Callable, *args) -> int:
        return self.call_later(max(0, t_ms - self.clock.now_ms), fn, *args)

    def _dispatch(self, target, payload, args) -> None:
        if target is None:
            payload(*args)
            return
        handler = self._handlers.get(target)
        if handler is not None:
            handler(payload)

    def step(self) -> bool:
        if not self._queue:
            return False
        fire_at, _, target, payload, args = heapq.heappop(self._queue)
        self.clock.now_ms = fire_at
        self.processed += 1
        self._dispatch(target, payload, args)
        return True

    def run_until(self, t_end: int) -> int:
        """Process every event due at or before ``t_end``; the clock then reads ``t_end``."""
        count = 0
        queue = self._queue
        clock = self.clock
        dispatch = self._dispatch
        pop = heapq.heappop
        while queue and queue[0][0] <= t_end:
            fire_at, _, target, payload, args = pop(queue)
            clock.now_ms = fire_at
            dispatch(target, payload, args)
            count += 1
        self.processed += count
        if t_end > clock.now_ms:
            clock.now_ms = t_end
        return count

    def run(self, max_events: int | None = None) -> int:
        count = 0
        while self._queue and (max_events is None or count < max_events):
            self.step()
            count += 1
        return count

    def pending(self) -> int:
        return len(self._queue)

    def next_event_time(self) -> int | None:
        return self._queue[0][0] if self._queue else None

    def pending_events(self) -> list[SimEvent]:
        return [SimEvent(f, q, t, p, a) for f, q, t, p, a in sorted(self._queue)]

    def spawn(self, gen) -> Process:
        return Process(self, gen)

    def run_process(self, proc, deadline_ms: int | None = None):
        """Run events until ``proc`` (a Process or generator) finishes; return its result."""
        if not isinstance(proc, Future):
            proc = self.spawn(proc)
        while not proc.done:
            if not self._queue:
                raise RuntimeError("event queue drained before process finished")
            if deadline_ms is not None and self._queue[0][0] > deadline_ms:
                raise TimeoutError(f"process not finished by t={deadline_ms}")
            self.step()
        return proc.result()

    def run_while(self, predicate: Callable[[], bool], t_limit: int) -> None:
        """Step while ``predicate()`` holds and the next event is due by ``t_limit``."""
        queue = self._queue
        while predicate() and queue and queue[0][0] <= t_limit:
            self.step()


# --------------------------------------------------------------------------
# links
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LinkModel:
    """One-way latency model: ``base_ms`` plus a jitter draw, rounded to whole ms."""

    base_ms: float = 0.0
    jitter: str = "fixed"
    lo: float = 0.0
    hi: float = 0.0
    mu: float = 0.0
    sigma: float = 0.0
    loss_rate: float = 0.0

    def __post_init__(self):
        if self.base_ms < 0:
            raise ValueError("base_ms must be non-negative")
        if self.jitter not in ("fixed", "uniform", "lognormal"):
            raise ValueError(f"unknown jitter kind {self.jitter!r}")
        if self.jitter == "uniform" and not (0 <= self.lo <= self.hi):
            raise ValueError("uniform jitter needs 0 <= lo <= hi")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not (0.0 <= self.loss_rate < 1.0):
            raise ValueError("loss_rate must be in [0, 1)")

    @classmethod
    def fixed(cls, ms: float, loss_rate: float = 0.0) -> LinkModel:
        return cls(base_ms=ms, loss_rate=loss_rate)

    @classmethod
    def lognormal_median(cls, median_ms: float, sigma: float = 0.5, base_ms: float = 0.0, loss_rate: float = 0.0) -> LinkModel:
        return cls(base_ms=base_ms, jitter="lognormal", mu=math.log(median_ms), sigma=sigma, loss_rate=loss_rate)

    def sample(self, rng: random.Random) -> int:
        return sample_latency(self, rng)


def sample_latency(link: LinkModel, rng: random.Random) -> int:
    if link.jitter == "fixed":
        extra = 0.0
    elif link.jitter == "uniform":
        extra = rng.uniform(link.lo, link.hi)
    else:
        extra = rng.lognormvariate(link.mu, link.sigma)
    return max(0, int(round(link.base_ms + extra)))


@dataclass(frozen=True)
class ChurnModel:
    join_rate: float = 0.0
    leave_rate: float = 0.0

    def __post_init__(self):
        if self.join_rate < 0 or self.leave_rate < 0:
            raise ValueError("churn rates must be non-negative")


class ChurnTarget(Protocol):
    def churn_join(self) -> Any: ...

    def churn_leave(self, rng: random.Random) -> Any: ...


def apply_churn(engine: Engine, churn: ChurnModel, fabric: ChurnTarget, duration_ms: int) -> list[tuple[int, str]]:
    """Schedule Poisson join and leave events over the next ``duration_ms``.

    Returns the schedule as ``(time_ms, "join" | "leave")`` pairs in time order.
    """
    start = engine.now
    schedule: list[tuple[int, str]] = []
    for kind, rate in (("join", churn.join_rate), ("leave", churn.leave_rate)):
        if rate <= 0:
            continue
        rng = engine.rng("churn", kind)
        t = start
        while True:
            t += rng.expovariate(rate / 1000.0)
            if t >= start + duration_ms:
                break
            schedule.append((int(t), kind))
    schedule.sort()
    leave_rng = engine.rng("churn", "victims")
    for t, kind in schedule:
        if kind == "join":
            engine.call_at(t, fabric.churn_join)
        else:
            engine.call_at(t, fabric.churn_leave, leave_rng)
    return schedule


# --------------------------------------------------------------------------
# network
# --------------------------------------------------------------------------


def is_private(boundary: str | None) -> bool:
    return bool(boundary) and boundary.startswith("private:")


@dataclass
class TraceEntry:
    t_send: int
    t_deliver: int | None
    src: str
    dst: str
    kind: str
    size: int
    src_boundary: str = ""
    dst_boundary: str = ""
    note: str = ""

    @property
    def crosses_boundary(self) -> bool:
        """A request leaving a private boundary for any other boundary.

        RPC replies travel back over a crossing that was already counted.
        """
        return (is_private(self.src_boundary) and self.dst_boundary != self.src_boundary
                and not self.kind.endswith(".reply"))

    def to_json(self) -> dict:
        return {
            "t_send": self.t_send,
            "t_deliver": self.t_deliver,
            "src": self.src,
            "dst": self.dst,
            "kind": self.kind,
            "size": self.size,
        }


@dataclass
class Message:
    src: str
    dst: str
    kind: str
    body: Any
    sent_at: int
    size: int = 1
    note: str = ""


@dataclass
class LinkStats:
    sent: int = 0
    delivered: int = 0
    lost: int = 0


@dataclass
class _Node:
    handler: Callable[[Message], Any]
    boundary: str
    processing_ms: int
    rng: random.Random


class _RpcReply:
    __slots__ = ("value", "error")

    def __init__(self, value=None, error=None):
        self.value = value
        self.error = error


class SimNetwork:
    """Named nodes joined by latency-modelled links over one engine.

    A node handler receives each delivered :class:`Message` after the node's
    processing delay. For RPCs the handler's return value is the reply; it
    may return a Future (or Process) to reply once asynchronous work ends.
    """

    def __init__(self, engine: Engine, default_link: LinkModel | None = None, *, record_trace: bool = True, rpc_timeout_ms: int = 1000):
        self.engine = engine
        self.default_link = default_link or LinkModel.fixed(1)
        self.record_trace = record_trace
        self.rpc_timeout_ms = rpc_timeout_ms
        self.trace: list[TraceEntry] = []
        self.stats: dict[tuple[str, str], LinkStats] = {}
        self._nodes: dict[str, _Node] = {}
        self._links: dict[tuple[str, str], LinkModel] = {}
        self._node_links: dict[str, LinkModel] = {}

    # -- membership -------------------------------------------------------

    def add_node(self, name: str, handler: Callable[[Message], Any], *, boundary: str = "public:global", processing_ms: int = 0) -> None:
        if name in self._nodes:
            raise ValueError(f"duplicate node {name!r}")
        self._nodes[name] = _Node(handler, boundary, processing_ms, self.engine.rng("link", name))

    def remove_node(self, name: str) -> None:
        """Crash-stop: in-flight messages to ``name`` are lost on arrival."""
        self._nodes.pop(name, None)

    def is_live(self, name: str) -> bool:
        return name in self._nodes

    def boundary_of(self, name: str) -> str:
        node = self._nodes.get(name)
        return node.boundary if node else ""

    @property
    def node_names(self) -> list[str]:
        return list(self._nodes)

    # -- links ------------------------------------------------------------

    def set_link(self, a: str, b: str, link: LinkModel, symmetric: bool = True) -> None:
        self._links[(a, b)] = link
        if symmetric:
            self._links[(b, a)] = link

    def set_node_link(self, name: str, link: LinkModel) -> None:
        """Use ``link`` for every message sent by or to ``name`` without a pair override."""
        self._node_links[name] = link

    def link_for(self, src: str, dst: str) -> LinkModel:
        link = self._links.get((src, dst))
        if link is not None:
            return link
        return self._node_links.get(src) or self._node_links.get(dst) or self.default_link

    # -- messaging --------------------------------------------------------

    def _stats(self, src: str, dst: str) -> LinkStats:
        st = self.stats.get((src, dst))
        if st is None:
            st = self.stats[(src, dst)] = LinkStats()
        return st

    def send(self, src: str, dst: str, kind: str, body: Any = None, *, size: int = 1, note: str = "",
             on_delivered: Callable[[Message], None] | None = None, processed: bool = True) -> TraceEntry | None:
        """Send a one-way message. Returns its trace entry when tracing is on.

        ``processed=False`` skips the receiver's processing delay (used for
        RPC replies, which are consumed by the waiting caller).
        """
        now = self.engine.now
        sender = self._nodes.get(src)
        link = self.link_for(src, dst)
        rng = sender.rng if sender is not None else self.engine.rng("link", src)
        latency = sample_latency(link, rng)
        lost = link.loss_rate > 0 and rng.random() < link.loss_rate
        st = self._stats(src, dst)
        st.sent += 1
        entry = None
        if self.record_trace:
            entry = TraceEntry(now, None if lost else now + latency, src, dst, kind, size,
                               sender.boundary if sender else "", self.boundary_of(dst), note)
            self.trace.append(entry)
        if lost:
            st.lost += 1
            return entry
        msg = Message(src, dst, kind, body, now, size, note)
        self.engine.call_later(latency, self._arrive, msg, st, entry, on_delivered, processed)
        return entry

    def _arrive(self, msg: Message, st: LinkStats, entry: TraceEntry | None, on_delivered, processed: bool) -> None:
        node = self._nodes.get(msg.dst)
        if node is None:
            st.lost += 1
            if entry is not None:
                entry.t_deliver = None
            return
        st.delivered += 1
        if processed and node.processing_ms:
            self.engine.call_later(node.processing_ms, self._handle, msg, on_delivered)
        else:
            self._handle(msg, on_delivered)

    def _handle(self, msg: Message, on_delivered) -> None:
        node = self._nodes.get(msg.dst)
        if node is None:
            return
        if on_delivered is not None:
            on_delivered(msg)
        else:
            node.handler(msg)

    def rpc(self, src: str, dst: str, kind: str, body: Any = None, *, size: int = 1, note: str = "",
            timeout_ms: int | None = None, reply_size: Callable[[Any], int] | None = None) -> Future:
        """Request/reply exchange; the future fails with RpcTimeout if no reply arrives in time."""
        fut = Future()

        def on_request(msg: Message) -> None:
            node = self._nodes.get(dst)
            try:
                out = node.handler(msg)
            except Exception as exc:  # noqa: BLE001 - returned to the caller
                self._reply(dst, src, kind, _RpcReply(error=exc), fut, 1)
                return
            if isinstance(out, Future):
                out.add_done_callback(lambda f: self._reply(
                    dst, src, kind, _RpcReply(f.value, f.error), fut, reply_size(f.value) if reply_size and f.ok else 1))
            else:
                self._reply(dst, src, kind, _RpcReply(out), fut, reply_size(out) if reply_size else 1)

        self.send(src, dst, kind, body, size=size, note=note, on_delivered=on_request)
        timeout = self.rpc_timeout_ms if timeout_ms is None else timeout_ms

        def on_timeout():
            if not fut.done:
                fut.fail(RpcTimeout(f"{kind} {src}->{dst} timed out"))

        self.engine.call_later(timeout, on_timeout)
        return fut

    def _reply(self, src: str, dst: str, kind: str, reply: _RpcReply, fut: Future, size: int) -> None:
        if src not in self._nodes:
            return

        def on_reply(_msg: Message) -> None:
            if reply.error is not None:
                fut.fail(reply.error)
            else:
                fut.resolve(reply.value)

        self.send(src, dst, kind + ".reply", reply, size=size, on_delivered=on_reply, processed=False)

    # -- export -----------------------------------------------------------

    def export_trace(self, fp) -> int:
        """Write the trace as JSON lines; returns the number of lines."""
        for entry in self.trace:
            fp.write(json.dumps(entry.to_json(), sort_keys=True) + "\n")
        return len(self.trace)

    def totals(self) -> LinkStats:
        out = LinkStats()
        for st in self.stats.values():
            out.sent += st.sent
            out.delivered += st.delivered
            out.lost += st.lost
        return out
