from __future__ import annotations

import json
import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from agentindex.bench import cli
from agentindex.bench.config import Budget, load_config, read_config_file
from agentindex.bench.report import MetricsReport, merge_csv, percentile, read_csv, summarize
from agentindex.bench.scenarios import default_budgets, run_scenario
from agentindex.bench.workload import make_population
from agentindex.errors import ConfigError
from agentindex.simnet import Engine

from oracles import median, nearest_rank

SMALL = {
    "discovery_latency": {"switch": {"nodes": 30}, "workload": {"agents": 5, "queries": 20, "revoked_agents": 1}},
    "churn_resilience": {"switch": {"nodes": 30}, "workload": {"agents": 5, "queries": 20},
                         "churn": {"join_rate": 2, "leave_rate": 2, "duration_ms": 1000}},
    "boundary_audit": {"boundary": {"fabric_nodes": 20, "queries": 60, "private_agents": 4, "public_agents": 4}},
}


# -- config ----------------------------------------------------------------------


def test_defaults_per_scenario():
    assert load_config({"scenario": "discovery_latency"}).switch.nodes == 1000
    churn = load_config({"scenario": "churn_resilience"})
    assert churn.switch.nodes == 300 and churn.churn.join_rate == 5
    assert load_config({"scenario": "update_propagation"}).upgrade.resolver_count == 100


def test_every_violation_reported():
    with pytest.raises(ConfigError) as exc:
        load_config({"scenario": "discovery_latency", "switch": {"nodes": 0, "k": 0, "bogus": 1},
                     "workload": {"ttl_ms": [-5]}, "extra": True})
    text = "\n".join(exc.value.violations)
    for fragment in ("switch.nodes", "switch.k", "switch.bogus", "workload.ttl_ms", "extra"):
        assert fragment in text
    assert len(exc.value.violations) >= 5


def test_unknown_scenario():
    with pytest.raises(ConfigError) as exc:
        load_config({"scenario": "nope"})
    assert "scenario" in exc.value.violations[0]


@pytest.mark.parametrize("section", [
    {"revocation": {"restaple_interval_ms": 600, "staple_window_ms": 500}},
    {"boundary": {"search_path": [{"label": "public:global", "kind": "switch-fabric"}]}},
    {"boundary": {"search_path": [{"label": "private:a", "kind": "private-shard"}] * 2}},
    {"switch": {"link": {"kind": "uniform", "lo": 5, "hi": 1}}},
])
def test_cross_field_rules(section):
    with pytest.raises(ConfigError):
        load_config({"scenario": "boundary_audit", **section})


def test_overrides_win():
    cfg = load_config({"scenario": "discovery_latency", "seed": 1}, seed=9, output={"format": "json"})
    assert cfg.seed == 9 and cfg.output.format == "json"


def test_read_config_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError):
        read_config_file(bad)
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "missing.json")
    arr = tmp_path / "arr.json"
    arr.write_text("[]")
    with pytest.raises(ConfigError):
        read_config_file(arr)


# -- report ------------------------------------------------------------------------


@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=300), st.floats(1, 100))
def test_percentile_matches_oracle(values, q):
    assert percentile(values, q) == nearest_rank(values, q)


@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=100))
def test_summary_recomputable(values):
    s = summarize(values)
    assert (s.count, s.min, s.max) == (len(values), min(values), max(values))
    assert s.median == median(values)
    assert s.mean == pytest.approx(statistics.fmean(values))
    assert s.p99 == nearest_rank(values, 99)


def test_verdicts_are_pure_functions_of_samples():
    budgets = [Budget(metric="lat", stat="p99", op="<", value=50), Budget(metric="gone", stat="max", op="<=", value=1)]
    r = MetricsReport("x", 0, budgets)
    r.extend("lat", "ms", range(100))
    v = r.verdicts()
    assert v[0].observed == 98 and not v[0].passed
    assert v[1].observed is None and not v[1].passed
    again = MetricsReport("x", 0, budgets)
    for s in read_csv(r.to_csv()):
        again.add(s.metric, s.unit, s.value)
    assert [x.to_json() for x in again.verdicts()] == [x.to_json() for x in v]


def test_csv_and_json_outputs(tmp_path):
    r = MetricsReport("demo", 4)
    r.add("a", "ms", 1)
    r.add("a", "ms", 2.5)
    assert r.to_csv() == "scenario,seed,metric,unit,value\ndemo,4,a,ms,1\ndemo,4,a,ms,2.5\n"
    paths = r.write(tmp_path, "csv")
    assert [p.name for p in paths] == ["demo-seed4.csv", "demo-seed4.json"]
    doc = json.loads(paths[1].read_text())
    assert doc["summary"]["a"]["max"] == 2.5 and doc["passed"] is True
    assert [p.name for p in r.write(tmp_path / "j", "json")] == ["demo-seed4.json"]
    other = MetricsReport("demo", 5)
    other.add("a", "ms", 3)
    assert merge_csv([r, other]).count("\n") == 4


def test_default_budgets_match_targets():
    upd = {b.key: b for b in default_budgets(load_config({"scenario": "update_propagation"}))}
    assert upd["push.convergence_ms.p99"].value == 1000
    assert upd["gossip.rounds.max"].value == 20
    disc = {b.key: b for b in default_budgets(load_config({"scenario": "discovery_latency"}))}
    assert disc["discovery.latency_ms.p99"].value == 250


# -- workload and scenarios ----------------------------------------------------------


def test_population_is_seeded():
    a = make_population(Engine(0), 1, 5)
    b = make_population(Engine(0), 1, 5)
    assert [x.record for x in a] == [y.record for y in b]
    assert [x.agent_id for x in make_population(Engine(0), 2, 5)] != [x.agent_id for x in a]


@pytest.mark.parametrize("scenario", sorted(SMALL))
def test_small_scenarios_run_and_repeat(scenario):
    cfg = load_config({"scenario": scenario, "seed": 2, **SMALL[scenario]})
    first, second = run_scenario(cfg), run_scenario(cfg)
    assert first.samples and first.to_csv() == second.to_csv()


# -- CLI --------------------------------------------------------------------------------


def _write(tmp_path, doc) -> str:
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_cli_ok_and_multi_seed(tmp_path, capsys):
    cfg = _write(tmp_path, {"scenario": "discovery_latency", **SMALL["discovery_latency"]})
    out = tmp_path / "out"
    assert cli.main(["--config", cfg, "--seed", "1", "--seed", "2", "--out-dir", str(out)]) == cli.EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == ["discovery_latency-seed1.csv", "discovery_latency-seed1.json", "discovery_latency-seed2.csv",
                     "discovery_latency-seed2.json", "discovery_latency.csv"]
    merged = read_csv((out / "discovery_latency.csv").read_text())
    assert {s.seed for s in merged} == {1, 2}
    assert "PASS" in capsys.readouterr().out


def test_cli_budget_violation_exit_1(tmp_path, capsys):
    doc = {"scenario": "discovery_latency", **SMALL["discovery_latency"],
           "budgets": [{"metric": "discovery.latency_ms", "stat": "max", "op": "<", "value": 0}]}
    assert cli.main(["--config", _write(tmp_path, doc), "--out-dir", str(tmp_path / "o"), "--format", "json"]) == cli.EXIT_BUDGET
    assert "FAIL" in capsys.readouterr().out
    assert [p.suffix for p in (tmp_path / "o").iterdir()] == [".json"]


def test_cli_config_error_exit_2(tmp_path, capsys):
    doc = {"scenario": "discovery_latency", "switch": {"nodes": -1, "alpha": 0}}
    assert cli.main(["--config", _write(tmp_path, doc)]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "switch.nodes" in err and "switch.alpha" in err


def test_cli_needs_scenario(capsys):
    assert cli.main([]) == cli.EXIT_CONFIG
