from __future__ import annotations

import hashlib

import pytest

from agentindex.agent_model import (
    CapabilityDescriptor,
    HybridClock,
    PolicyConstraints,
    generate_keypair,
    new_record,
)

_ACCEPTANCE: dict[int, dict] = {}


def seed_bytes(label: str) -> bytes:
    return hashlib.sha256(label.encode()).digest()


class Clock:
    """Settable millisecond time source for clock-driven tests."""

    def __init__(self, t: int = 0):
        self.t = t

    def __call__(self) -> int:
        return self.t


@pytest.fixture
def clock_source():
    return Clock()


@pytest.fixture
def make_record(clock_source):
    """Factory: ``make_record(label, caps=..., trust=...)`` returns (keypair, clock, record)."""

    def build(label="agent", caps=("/translate-en-es",), trust=0.5, ttl_ms=60_000, policy=None, endpoints=("sim://a",)):
        kp = generate_keypair(seed_bytes(label))
        clock = HybridClock(kp.agent_id, clock_source)
        descriptors = [CapabilityDescriptor.create(c, hashlib.sha256(c.encode()).digest()) for c in caps]
        rec = new_record(kp, descriptors, endpoints, trust, policy or PolicyConstraints(), ttl_ms, clock)
        return kp, clock, rec

    return build


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion reproduced by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "passed": True, "ran": False, "measured": []})
    if report.when == "call":
        entry["ran"] = True
        entry["measured"].extend(v for k, v in report.user_properties if k == "measured")
    if report.failed:
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        status = "PASS" if e["passed"] and e["ran"] else ("FAIL" if e["ran"] or not e["passed"] else "SKIP")
        detail = "; ".join(e["measured"])
        terminalreporter.write_line(f"criterion {number:>2} {status}  {e['title']}" + (f"  [{detail}]" if detail else ""))
