"""``agentindex`` command: run benchmark scenarios and check their budgets.

Exit status: 0 when every budget holds, 1 on a budget violation, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..errors import ConfigError
from .config import SCENARIOS, ScenarioConfig, load_config, read_config_file
from .report import MetricsReport, merge_csv
from .scenarios import run_scenario

EXIT_OK, EXIT_BUDGET, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agentindex", description="Run agent-registry benchmark scenarios.")
    p.add_argument("--scenario", choices=SCENARIOS, help="scenario to run (overrides the config file)")
    p.add_argument("--config", type=Path, help="JSON scenario configuration")
    p.add_argument("--seed", type=int, action="append", help="simulation seed; repeat to sweep several seeds")
    p.add_argument("--out-dir", help="directory for CSV/JSON output")
    p.add_argument("--format", choices=("csv", "json"), help="csv writes samples plus a JSON report; json writes only the report")
    p.add_argument("--jobs", type=int, default=1, help="run seeds in parallel worker processes")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def resolve_configs(args: argparse.Namespace) -> list[ScenarioConfig]:
    data = read_config_file(args.config) if args.config else {}
    output = {}
    if args.out_dir is not None:
        output["out_dir"] = args.out_dir
    if args.format is not None:
        output["format"] = args.format
    seeds = args.seed or [None]
    return [load_config(data, scenario=args.scenario, seed=seed, output=output or None) for seed in seeds]


def _run(cfg: ScenarioConfig) -> MetricsReport:
    return run_scenario(cfg)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        configs = resolve_configs(args)
    except ConfigError as err:
        print("configuration error:", file=sys.stderr)
        for v in err.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_run, configs))
    else:
        reports = [_run(cfg) for cfg in configs]

    ok = True
    for cfg, report in zip(configs, reports):
        paths = report.write(cfg.output.out_dir, cfg.output.format)
        print(f"{report.scenario} seed={report.seed}: {'PASS' if report.passed else 'FAIL'}")
        for verdict in report.verdicts():
            print(f"  {verdict.line()}")
        for path in paths:
            print(f"  wrote {path}")
        ok = ok and report.passed
    if len(reports) > 1 and configs[0].output.format == "csv":
        merged = Path(configs[0].output.out_dir) / f"{configs[0].scenario}.csv"
        merged.write_text(merge_csv(reports))
        print(f"wrote {merged}")
    return EXIT_OK if ok else EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
