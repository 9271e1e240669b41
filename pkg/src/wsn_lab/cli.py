"""Scenario configuration, batch execution, and the command-line interface.

A scenario is one JSON file; every field has a default, so `{"seeds": [42]}`
is a complete configuration. Each (strategy, seed) pair becomes one run whose
round series and summary land in the output directory, followed by the
aggregate comparison table and per-figure plot data.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import metrics
from .game import UtilityWeights
from .learning import LearningParams
from .network import EnergyModel, NetworkConfig
from .strategies import RunResult, StrategyKind, simulate

log = logging.getLogger("wsn_lab")

STRATEGY_ORDER = [StrategyKind.FULL_RL, StrategyKind.FULL_GT,
                  StrategyKind.GT_RL, StrategyKind.RL_GT,
                  StrategyKind.BASELINE]


class ConfigError(Exception):
    """Configuration problem, message prefixed with the offending field path."""


class IoError(Exception):
    """File could not be read or written."""


@dataclass
class ScenarioSpec:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    energy: EnergyModel = field(default_factory=EnergyModel)
    learning: LearningParams = field(default_factory=LearningParams)
    weights: UtilityWeights = field(default_factory=UtilityWeights)
    strategies: list = field(default_factory=lambda: list(STRATEGY_ORDER))
    seeds: list = field(default_factory=lambda: [42])
    output_dir: str = "out"


_TUPLE_FIELDS = {"stage_target_sizes", "sink_position"}


def _build_section(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown field")
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_scenario(data: dict) -> ScenarioSpec:
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    known = {"network", "energy", "learning", "weights", "strategies",
             "seeds", "output_dir"}
    for key in data:
        if key not in known:
            raise ConfigError(f"{key}: unknown field")

    spec = ScenarioSpec()
    if "network" in data:
        spec.network = _build_section(NetworkConfig, data["network"], "network")
    if "energy" in data:
        spec.energy = _build_section(EnergyModel, data["energy"], "energy")
    if "learning" in data:
        spec.learning = _build_section(LearningParams, data["learning"],
                                       "learning")
    if "weights" in data:
        spec.weights = _build_section(UtilityWeights, data["weights"],
                                      "weights")
    if "strategies" in data:
        raw = data["strategies"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("strategies: expected a non-empty list")
        parsed = []
        for i, name in enumerate(raw):
            try:
                parsed.append(StrategyKind(name))
            except ValueError:
                valid = ", ".join(s.value for s in StrategyKind)
                raise ConfigError(
                    f"strategies[{i}]: unknown strategy {name!r} "
                    f"(valid: {valid})") from None
        spec.strategies = parsed
    if "seeds" in data:
        raw = data["seeds"]
        if (not isinstance(raw, list) or not raw
                or not all(isinstance(s, int) and not isinstance(s, bool)
                           for s in raw)):
            raise ConfigError("seeds: expected a non-empty list of integers")
        spec.seeds = list(raw)
    if "output_dir" in data:
        if not isinstance(data["output_dir"], str):
            raise ConfigError("output_dir: expected a string")
        spec.output_dir = data["output_dir"]
    return spec


def load_scenario(path) -> ScenarioSpec:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from exc
    return parse_scenario(data)


def _run_paths(out_dir: Path, strategy: StrategyKind, seed: int):
    stem = f"{strategy.value}_{seed}"
    return out_dir / f"{stem}_rounds.csv", out_dir / f"{stem}_summary.json"


def _execute_run(args):
    """Worker for one (strategy, seed) run; must stay picklable."""
    strategy, network, energy, learning, weights, out_dir = args
    result = simulate(strategy, network, energy, learning, weights)
    rounds_path, summary_path = _run_paths(Path(out_dir), strategy,
                                           network.rng_seed)
    try:
        metrics.write_rounds_csv(rounds_path, result.series)
        metrics.write_summary_json(summary_path, result.summary)
    except OSError as exc:
        raise IoError(f"cannot write run output in {out_dir}: {exc}") from exc
    return result.summary


def run_scenario(spec: ScenarioSpec, jobs: int = 1):
    """Execute every (strategy, seed) pair; returns (summaries, failures).

    Results merge in (strategy, seed) request order regardless of job count,
    so parallel runs produce identical artifacts.
    """
    out_dir = Path(spec.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output dir {out_dir}: {exc}") from exc

    jobs_list = []
    for strategy in spec.strategies:
        for seed in spec.seeds:
            cfg = replace(spec.network, rng_seed=seed)
            jobs_list.append((strategy, cfg, spec.energy, spec.learning,
                              spec.weights, str(out_dir)))

    summaries = []
    failures = []
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = [ex.submit(_execute_run, jb) for jb in jobs_list]
            for jb, fut in zip(jobs_list, futures):
                strategy, cfg = jb[0], jb[1]
                try:
                    summaries.append(fut.result())
                except Exception as exc:
                    failures.append((strategy.value, cfg.rng_seed, str(exc)))
                    log.error("run %s seed %d failed: %s", strategy.value,
                              cfg.rng_seed, exc)
    else:
        for jb in jobs_list:
            strategy, cfg = jb[0], jb[1]
            try:
                summaries.append(_execute_run(jb))
            except Exception as exc:
                failures.append((strategy.value, cfg.rng_seed, str(exc)))
                log.error("run %s seed %d failed: %s", strategy.value,
                          cfg.rng_seed, exc)

    if failures:
        manifest = [{"strategy": s, "seed": sd, "error": err}
                    for s, sd, err in failures]
        with open(out_dir / "errors.json", "w") as fh:
            json.dump(manifest, fh, indent=2)
    if summaries:
        write_aggregates(out_dir, summaries)
    return summaries, failures


def _group_by_strategy(summaries):
    groups = {}
    for s in summaries:
        groups.setdefault(s.strategy, []).append(s)
    ordered = [k.value for k in STRATEGY_ORDER if k.value in groups]
    for value in groups:
        if value not in ordered:
            ordered.append(value)
    return ordered, groups


def compare_table(summaries) -> str:
    """Fixed-width table of alive count, SoC variance, and cumulative reward
    per strategy at each sampled time fraction, averaged over seeds."""
    if not summaries:
        raise metrics.EmptySeries("no summaries to compare")
    ordered, groups = _group_by_strategy(summaries)
    fractions = summaries[0].table_fractions

    def col(value):
        runs = groups[value]
        rows = []
        for fi in range(len(fractions)):
            alive = sum(r.alive_at_fractions[fi] for r in runs) / len(runs)
            var = sum(r.variance_at_fractions[fi] for r in runs) / len(runs)
            rew = sum(r.reward_at_fractions[fi] for r in runs) / len(runs)
            rows.append((alive, var, rew))
        return rows

    columns = {value: col(value) for value in ordered}
    header = "time% |"
    rule = "------+"
    for value in ordered:
        header += f" {value:>26} |"
        rule += "-" * 28 + "+"
    sub = "      |" + "".join(f"{'alive':>10}{'var':>8}{'reward':>9} |"
                              for _ in ordered)
    lines = [header, sub, rule]
    for fi, frac in enumerate(fractions):
        line = f"{int(frac * 100):>5} |"
        for value in ordered:
            alive, var, rew = columns[value][fi]
            line += f"{alive:>10.1f}{var:>8.4f}{rew:>9.1f} |"
        lines.append(line)
    return "\n".join(lines)


def write_comparison_csv(path, summaries) -> None:
    ordered, groups = _group_by_strategy(summaries)
    fractions = summaries[0].table_fractions
    import csv as _csv
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        header = ["time_pct"]
        for value in ordered:
            header += [f"{value}_alive", f"{value}_variance", f"{value}_reward"]
        writer.writerow(header)
        for fi, frac in enumerate(fractions):
            row = [int(frac * 100)]
            for value in ordered:
                runs = groups[value]
                row.append(repr(sum(r.alive_at_fractions[fi]
                                    for r in runs) / len(runs)))
                row.append(repr(sum(r.variance_at_fractions[fi]
                                    for r in runs) / len(runs)))
                row.append(repr(sum(r.reward_at_fractions[fi]
                                    for r in runs) / len(runs)))
            writer.writerow(row)


_FIGURES = {
    "avg_energy": lambda rm: rm.mean_soc_pct,
    "energy_variance": lambda rm: rm.soc_variance,
    "active_sensors": lambda rm: float(rm.alive_count),
    "cumulative_reward": lambda rm: rm.cumulative_reward,
    "convergence": lambda rm: rm.max_q_delta,
}


def write_figdata(out_dir: Path, summaries) -> None:
    """Per-figure plot series: round index vs per-strategy seed means.

    Runs that ended early (network death) hold their last value, except the
    success series, which counts a dead network as a failed round.
    """
    ordered, groups = _group_by_strategy(summaries)
    series_map = {}
    horizon = 0
    for value in ordered:
        for s in groups[value]:
            path = out_dir / f"{value}_{s.seed}_rounds.csv"
            series = metrics.read_rounds_csv(path)
            series_map[(value, s.seed)] = series
            horizon = max(horizon, len(series))

    import csv as _csv
    for fig, extract in _FIGURES.items():
        with open(out_dir / f"figdata_{fig}.csv", "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["round"] + ordered)
            for t in range(horizon):
                row = [t + 1]
                for value in ordered:
                    vals = []
                    for s in groups[value]:
                        series = series_map[(value, s.seed)]
                        rm = series[min(t, len(series) - 1)]
                        vals.append(extract(rm))
                    row.append(repr(sum(vals) / len(vals)))
                writer.writerow(row)

    with open(out_dir / "figdata_success_rate.csv", "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["round"] + ordered)
        running = {value: [0.0] * len(groups[value]) for value in ordered}
        for t in range(horizon):
            row = [t + 1]
            for value in ordered:
                rates = []
                for si, s in enumerate(groups[value]):
                    series = series_map[(value, s.seed)]
                    if t < len(series) and series[t].success:
                        running[value][si] += 1.0
                    rates.append(running[value][si] / (t + 1))
                row.append(repr(sum(rates) / len(rates)))
            writer.writerow(row)


def write_aggregates(out_dir: Path, summaries) -> None:
    try:
        write_comparison_csv(out_dir / "comparison.csv", summaries)
        write_figdata(out_dir, summaries)
    except OSError as exc:
        raise IoError(f"cannot write aggregates in {out_dir}: {exc}") from exc


def load_output_dir(out_dir: Path):
    """Re-read the summaries a previous run left behind."""
    paths = sorted(out_dir.glob("*_summary.json"))
    if not paths:
        raise IoError(f"no *_summary.json files in {out_dir}")
    return [metrics.read_summary_json(p) for p in paths]


def _setup_logging(quiet: bool) -> None:
    level_name = os.environ.get("WSN_LAB_LOG", "INFO" if not quiet else "ERROR")
    level = getattr(logging, level_name.upper(), logging.INFO)
    logging.basicConfig(level=level,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wsn-lab",
        description="Discrete-round sensor-network strategy comparison")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--strategy", action="append",
                       choices=[s.value for s in StrategyKind])
    p_run.add_argument("--seed", action="append", type=int)
    p_run.add_argument("--out")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--quiet", action="store_true")

    p_cmp = sub.add_parser("compare", help="aggregate an output directory")
    p_cmp.add_argument("--in", dest="in_dir", required=True)
    p_cmp.add_argument("--quiet", action="store_true")

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("--config", required=True)
    p_val.add_argument("--quiet", action="store_true")

    args = parser.parse_args(argv)
    _setup_logging(getattr(args, "quiet", False))

    try:
        if args.command == "validate":
            spec = load_scenario(args.config)
            runs = len(spec.strategies) * len(spec.seeds)
            print(f"ok: {len(spec.strategies)} strategies x "
                  f"{len(spec.seeds)} seeds = {runs} runs, "
                  f"{spec.network.node_count} nodes, "
                  f"{spec.network.round_count} rounds, "
                  f"output -> {spec.output_dir}")
            return 0

        if args.command == "compare":
            out_dir = Path(args.in_dir)
            summaries = load_output_dir(out_dir)
            write_aggregates(out_dir, summaries)
            print(compare_table(summaries))
            return 0

        spec = load_scenario(args.config)
        if args.strategy:
            spec.strategies = [StrategyKind(s) for s in args.strategy]
        if args.seed:
            spec.seeds = args.seed
        if args.out:
            spec.output_dir = args.out
        summaries, failures = run_scenario(spec, jobs=args.jobs or 1)
        if summaries and not args.quiet:
            print(compare_table(summaries))
        if failures:
            log.error("%d run(s) failed; see errors.json", len(failures))
            return 1
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IoError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
