"""Scenario configuration: one JSON document, validated strictly."""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Literal, Mapping

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..errors import ConfigError
from ..simnet import LinkModel

ScenarioName = Literal["update_propagation", "revocation_race", "discovery_latency", "boundary_audit", "churn_resilience"]
SCENARIOS: tuple[str, ...] = ScenarioName.__args__


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LinkConfig(Strict):
    kind: Literal["fixed", "uniform", "lognormal"] = "fixed"
    base_ms: float = Field(5.0, ge=0)
    lo: float = Field(0.0, ge=0)
    hi: float = Field(0.0, ge=0)
    median_ms: float = Field(10.0, gt=0)
    sigma: float = Field(0.5, ge=0)
    loss_rate: float = Field(0.0, ge=0, lt=1)

    @model_validator(mode="after")
    def _range(self):
        if self.kind == "uniform" and self.hi < self.lo:
            raise ValueError("uniform link needs lo <= hi")
        return self

    def build(self) -> LinkModel:
        if self.kind == "fixed":
            return LinkModel.fixed(self.base_ms, loss_rate=self.loss_rate)
        if self.kind == "uniform":
            return LinkModel(base_ms=self.base_ms, jitter="uniform", lo=self.lo, hi=self.hi, loss_rate=self.loss_rate)
        return LinkModel.lognormal_median(self.median_ms, self.sigma, self.base_ms, self.loss_rate)


class UpgradeSection(Strict):
    tree_depth: int = Field(3, ge=1, le=8)
    fanout: int = Field(5, ge=1, le=64)
    resolver_count: int | None = Field(100, ge=1, le=100_000)
    processing_ms: int = Field(1, ge=0, le=10_000)
    link: LinkConfig = LinkConfig(kind="lognormal", base_ms=0.0, median_ms=10.0, sigma=0.5)


class GossipSection(Strict):
    fanout: int = Field(3, ge=1, le=64)
    period_ms: int = Field(10, ge=1, le=60_000)


class SwitchSection(Strict):
    nodes: int = Field(1000, ge=1, le=20_000)
    k: int = Field(20, ge=1, le=256)
    alpha: int = Field(3, ge=1, le=64)
    rpc_timeout_ms: int = Field(100, ge=1, le=60_000)
    processing_ms: int = Field(0, ge=0, le=10_000)
    link: LinkConfig = LinkConfig()
    gossip: GossipSection = GossipSection()


class ChurnSection(Strict):
    join_rate: float = Field(0.0, ge=0)
    leave_rate: float = Field(0.0, ge=0)
    duration_ms: int = Field(10_000, ge=0)


class WorkloadSection(Strict):
    agents: int = Field(50, ge=1, le=100_000)
    capabilities_per_agent: int = Field(2, ge=1, le=8)
    queries: int = Field(1000, ge=0, le=1_000_000)
    query_interval_ms: int = Field(5, ge=1)
    updates: int = Field(5, ge=1, le=10_000)
    ttl_ms: list[int] = Field(default_factory=lambda: [1_000, 60_000])
    staleness_updates_per_ttl: int = Field(4, ge=1, le=1000)
    staleness_queries_per_ttl: int = Field(50, ge=1, le=100_000)
    staleness_cycles: int = Field(6, ge=1, le=1000)
    min_trust: float = Field(0.0, ge=0, le=1)
    revoked_agents: int = Field(5, ge=0)
    latency_targets_ms: list[int] = Field(default_factory=lambda: [5, 50, 500])

    @field_validator("ttl_ms")
    @classmethod
    def _ttls(cls, v):
        if not v or any(t <= 0 or t > 86_400_000 for t in v):
            raise ValueError("ttl_ms entries must be in (0, 86400000]")
        return v


class RevocationSection(Strict):
    verifiers: int = Field(200, ge=1, le=20_000)
    staple_only_verifiers: int = Field(20, ge=0, le=20_000)
    staple_window_ms: int = Field(500, ge=1)
    restaple_interval_ms: int = Field(100, ge=1)
    probe_interval_ms: int = Field(10, ge=1)
    t0_ms: int = Field(1_000, ge=0)
    observe_ms: int = Field(2_000, ge=1)
    bridge_cache_ttl_ms: int = Field(1_000, ge=0)

    @model_validator(mode="after")
    def _cadence(self):
        if self.restaple_interval_ms >= self.staple_window_ms:
            raise ValueError("restaple_interval_ms must be shorter than staple_window_ms")
        return self


class SearchPathEntry(Strict):
    label: str = Field(pattern=r"^[a-z]+:[a-z0-9.-]+$")
    kind: Literal["upgrade-fabric", "switch-fabric", "private-shard"]
    bridged: bool = False


class BoundarySection(Strict):
    search_path: list[SearchPathEntry] = Field(default_factory=lambda: [
        SearchPathEntry(label="private:acme-corp", kind="private-shard"),
        SearchPathEntry(label="public:global", kind="switch-fabric", bridged=True),
    ])
    bridge_link: LinkConfig = LinkConfig(base_ms=5.0)
    shard_link: LinkConfig = LinkConfig(base_ms=1.0)
    cache_ttl_ms: int = Field(1_000, ge=0)
    max_providers: int = Field(16, ge=1)
    private_agents: int = Field(20, ge=0)
    public_agents: int = Field(20, ge=0)
    fabric_nodes: int = Field(100, ge=1, le=20_000)
    queries: int = Field(5_000, ge=0)
    query_interval_ms: int = Field(5, ge=1)
    capability_fraction: float = Field(0.2, ge=0, le=1)
    unknown_fraction: float = Field(0.05, ge=0, le=1)
    denied_fraction: float = Field(0.1, ge=0, le=1)
    tamper_events: int = Field(10, ge=1, le=1000)

    @model_validator(mode="after")
    def _path(self):
        labels = [e.label for e in self.search_path]
        if not labels:
            raise ValueError("search_path must list at least one registry")
        if len(set(labels)) != len(labels):
            raise ValueError("search_path labels must be unique")
        if not labels[0].startswith("private:"):
            raise ValueError("search_path must start with the resolver's private shard")
        return self


class Budget(Strict):
    metric: str
    stat: Literal["count", "min", "median", "mean", "p99", "max"]
    op: Literal["<", "<=", ">", ">=", "=="]
    value: float

    @property
    def key(self) -> str:
        return f"{self.metric}.{self.stat}"

    def check(self, observed: float) -> bool:
        return {
            "<": observed < self.value,
            "<=": observed <= self.value,
            ">": observed > self.value,
            ">=": observed >= self.value,
            "==": observed == self.value,
        }[self.op]

    def describe(self) -> str:
        return f"{self.key} {self.op} {self.value:g}"


class OutputSection(Strict):
    out_dir: str = "bench-out"
    format: Literal["csv", "json"] = "csv"


class ScenarioConfig(Strict):
    scenario: ScenarioName
    seed: int = Field(0, ge=0)
    upgrade: UpgradeSection = UpgradeSection()
    switch: SwitchSection = SwitchSection()
    churn: ChurnSection = ChurnSection()
    workload: WorkloadSection = WorkloadSection()
    revocation: RevocationSection = RevocationSection()
    boundary: BoundarySection = BoundarySection()
    budgets: list[Budget] | None = None
    output: OutputSection = OutputSection()


# desk-scale defaults that differ per scenario
SCENARIO_DEFAULTS: dict[str, dict[str, Any]] = {
    "update_propagation": {"workload": {"updates": 5}},
    "revocation_race": {},
    "discovery_latency": {"switch": {"nodes": 1000}, "workload": {"agents": 50, "queries": 1000}},
    "boundary_audit": {},
    "churn_resilience": {
        "switch": {"nodes": 300},
        "churn": {"join_rate": 5.0, "leave_rate": 5.0, "duration_ms": 10_000},
        "workload": {"agents": 50, "queries": 500, "query_interval_ms": 20},
    },
}


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    out = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _violations(err: ValidationError) -> list[str]:
    return [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in err.errors()]


def load_config(data: Mapping[str, Any] | None = None, **overrides: Any) -> ScenarioConfig:
    """Validate ``data`` with per-scenario defaults; every problem is reported at once."""
    raw = deep_merge(data or {}, {k: v for k, v in overrides.items() if v is not None})
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError([f"scenario: must be one of {list(SCENARIOS)}, got {scenario!r}"])
    merged = deep_merge(SCENARIO_DEFAULTS[scenario], raw)
    try:
        return ScenarioConfig.model_validate(merged)
    except ValidationError as err:
        raise ConfigError(_violations(err)) from None


def read_config_file(path: str | Path) -> dict[str, Any]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})"]) from None
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a JSON object"])
    return data
