"""``samplevote`` command line: ``run``, ``synth`` and ``analyze``.

Exit codes: 0 success, 2 configuration or input error, 3 backend error,
4 some tasks failed (per-task notes go to stderr and ``meta.json``).

Settings are resolved as flags > ``--config`` file > ``SAMPLEVOTE_*``
environment variables > defaults. The config file is INI with a single
``[samplevote]`` section whose keys are the long flag names with
underscores, e.g. ``top_p = 0.9``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as dt
import itertools
import json
import logging
import math
import os
import re
import sys
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .backends import (
    Backend,
    BackendConfig,
    BackendError,
    HttpConfig,
    SimAgentModel,
    build_backend,
)
from .core import RunRecord, SamplingParams, Task, ValidationError, iter_records, load_tasks, write_tasks
from .ensemble import run_vanilla
from .pipelines import ZERO_SHOT_COT, ComposedMethod, HierarchySpec, StepFailure, run_composed, run_hierarchical, run_stepwise
from .stats import AnovaUndefined, curve, one_way_anova, read_curve_csv, run_accuracies, write_curve_csv
from .synth import (
    DegeneratePartition,
    GainCell,
    SyntheticSpec,
    gain_matrix,
    generate,
    read_gain_csv,
    task_from_meta,
    write_gain_csv,
)
from .sweeps import gain_sweep

log = logging.getLogger("samplevote")

EXIT_OK, EXIT_CONFIG, EXIT_BACKEND, EXIT_PARTIAL = 0, 2, 3, 4
METHODS = ("vanilla", "zs-cot", "debate", "stepwise", "hierarchical")

DEFAULTS: dict[str, Any] = {
    "backend": "sim",
    "base_url": "https://api.openai.com/v1",
    "model": "gpt-3.5-turbo",
    "api_key_env": "OPENAI_API_KEY",
    "timeout_ms": 60_000,
    "max_retries": 3,
    "n": 40,
    "runs": 10,
    "temperature": 1.0,
    "top_p": 1.0,
    "seed": 0,
    "out": "out",
    "method": "vanilla",
    "stages": "",
    "curve_sizes": "",
    "max_in_flight": 8,
    "cache_dir": ".samplevote-cache",
    "replay_inner": "sim",
    "sim_mode": "flat",
    "p_correct": 0.5,
    "k_wrong": 3,
    "base_skill": 1.0,
    "alpha": 1.0,
    "beta": 0.25,
    "prior_weight": 0.0,
    "per_step_p": 0.5,
}
_TYPES = {k: type(v) for k, v in DEFAULTS.items()}


class CliError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# --------------------------------------------------------------------------- settings


def resolve_settings(args: argparse.Namespace) -> dict[str, Any]:
    settings = dict(DEFAULTS)
    for key in DEFAULTS:
        env = os.environ.get(f"SAMPLEVOTE_{key.upper()}")
        if env is not None:
            settings[key] = env
    if getattr(args, "config", None):
        parser = configparser.ConfigParser()
        if not parser.read(args.config):
            raise CliError(EXIT_CONFIG, f"cannot read config file {args.config}")
        section = parser["samplevote"] if parser.has_section("samplevote") else {}
        for key, value in section.items():
            if key not in DEFAULTS:
                raise CliError(EXIT_CONFIG, f"unknown config key {key!r}")
            settings[key] = value
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    try:
        return {k: _TYPES[k](v) if not isinstance(v, _TYPES[k]) else v for k, v in settings.items()}
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"bad setting: {exc}") from None


def sim_model(s: dict[str, Any]) -> SimAgentModel:
    return SimAgentModel(
        mode=s["sim_mode"],
        p_correct=s["p_correct"],
        k_wrong=s["k_wrong"],
        base_skill=s["base_skill"],
        alpha=s["alpha"],
        beta=s["beta"],
        prior_weight=s["prior_weight"],
        per_step_p_correct=s["per_step_p"],
    )


def backend_config(s: dict[str, Any]) -> BackendConfig:
    def http() -> BackendConfig:
        return BackendConfig(
            "openai", "http",
            http=HttpConfig(s["base_url"], s["model"], s["api_key_env"], s["timeout_ms"], s["max_retries"]),
        )

    def sim() -> BackendConfig:
        return BackendConfig("sim", "simulated", simulated=sim_model(s))

    kind = s["backend"]
    if kind == "openai":
        return http()
    if kind == "sim":
        return sim()
    if kind == "replay":
        inner = http() if s["replay_inner"] == "openai" else sim()
        return BackendConfig(f"replay:{inner.backend_id}", "replay", cache_dir=s["cache_dir"], inner=inner)
    raise CliError(EXIT_CONFIG, f"unknown backend {kind!r}")


def _needs_key(config: BackendConfig) -> str | None:
    if config.variant == "http":
        assert config.http is not None
        return config.http.api_key_env
    if config.variant == "replay" and config.inner is not None:
        return _needs_key(config.inner)
    return None


# --------------------------------------------------------------------------- run


@dataclass
class RunOutcome:
    records: list[RunRecord] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    backend_failures: int = 0


def _run_one(method: str, backend: Backend, task: Task, params: SamplingParams, run_id: str, stages: list[int]) -> RunRecord:
    if method == "vanilla":
        return run_vanilla(backend, task, params, run_id=run_id)[1]
    if method == "zs-cot":
        return run_composed(ZERO_SHOT_COT, backend, task, params, run_id=run_id)[1]
    if method == "debate":
        return run_composed(ComposedMethod("debate"), backend, task, params, run_id=run_id)[1]
    if method == "stepwise":
        target = task_from_meta(task) if not task.steps else task
        return run_stepwise(backend, target, params, run_id=run_id).record
    st = task_from_meta(task)
    spec = HierarchySpec(tuple(stages or task.stages or (st.spec.K,)))
    return run_hierarchical(spec, st, params, backend=backend, run_id=run_id).record


def execute_runs(backend: Backend, tasks: Sequence[Task], params: SamplingParams, runs: int, method: str, stages: list[int]) -> RunOutcome:
    out = RunOutcome()
    for r in range(runs):
        run_params = SamplingParams(params.n, params.temperature, params.top_p, params.max_in_flight, (params.seed + r) % 2**64)
        for task in sorted(tasks, key=lambda t: t.id):
            try:
                rec = _run_one(method, backend, task, run_params, str(r), stages)
            except BackendError as exc:
                out.failures.append(f"run {r} task {task.id}: backend error: {exc}")
                out.backend_failures += 1
                continue
            except (StepFailure, ValidationError) as exc:
                out.failures.append(f"run {r} task {task.id}: {exc}")
                continue
            log.info("run %d task %s correct=%s", r, task.id, rec.correct_at_full)
            out.records.append(rec)
    return out


def cmd_run(args: argparse.Namespace) -> int:
    s = resolve_settings(args)
    if s["method"] not in METHODS:
        raise CliError(EXIT_CONFIG, f"unknown method {s['method']!r}")
    try:
        config = backend_config(s)
        params = SamplingParams(s["n"], s["temperature"], s["top_p"], s["max_in_flight"], s["seed"])
        tasks = load_tasks(s.get("tasks") or args.tasks)
    except (ValidationError, OSError) as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    if s["runs"] < 1:
        raise CliError(EXIT_CONFIG, "runs must be >= 1")
    sizes = int_list(s["curve_sizes"]) or list(range(1, params.n + 1))
    if any(not 1 <= m <= params.n for m in sizes):
        raise CliError(EXIT_CONFIG, f"curve sizes must lie in 1..{params.n}")
    key_env = _needs_key(config)
    if key_env and s["backend"] == "openai" and not os.environ.get(key_env):
        raise CliError(EXIT_BACKEND, f"API key env var {key_env} is not set")

    backend = build_backend(config)
    started = dt.datetime.now(dt.timezone.utc)
    outcome = execute_runs(backend, tasks, params, s["runs"], s["method"], int_list(s["stages"]))

    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "records.jsonl", "w", encoding="utf-8") as fh:
        for rec in outcome.records:
            fh.write(rec.to_json() + "\n")
    if outcome.records:
        usable = [m for m in sizes if all(any(e.m == m for e in r.vote_curve) for r in outcome.records)]
        try:
            write_curve_csv(curve(outcome.records, usable), out / "summary.csv")
        except ValidationError as exc:
            outcome.failures.append(f"summary: {exc}")
    meta = {
        "started": started.isoformat(),
        "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
        "method": s["method"],
        "backend_id": config.backend_id,
        "settings": {k: v for k, v in s.items()},
        "wall_ms": {f"{r.run_id}/{r.task_id}": r.wall_ms for r in outcome.records},
        "failures": outcome.failures,
    }
    if hasattr(backend, "hits"):
        meta["cache"] = {"hits": backend.hits, "misses": backend.misses}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, default=str), encoding="utf-8")

    for note in outcome.failures:
        print(note, file=sys.stderr)
    if not outcome.failures:
        return EXIT_OK
    if not outcome.records and outcome.backend_failures:
        raise CliError(EXIT_BACKEND, outcome.failures[0])
    raise CliError(EXIT_PARTIAL, f"{len(outcome.failures)} task run(s) failed")


# --------------------------------------------------------------------------- synth


def cmd_synth(args: argparse.Namespace) -> int:
    s = resolve_settings(args)
    out = Path(args.out or s["out"])
    out.mkdir(parents=True, exist_ok=True)
    cells = list(itertools.product(args.I, args.S, args.K))
    errors = []
    good_cells = []
    for I, S, K in cells:
        try:
            tasks = [generate(SyntheticSpec(I, S, K, (s["seed"] + j) % 2**64)) for j in range(args.tasks_per_cell)]
        except (DegeneratePartition, ValidationError) as exc:
            errors.append(f"cell I={I} S={S} K={K}: {exc}")
            continue
        stem = out / f"synth_I{I}_S{S}_K{K}"
        write_tasks([t.to_task() for t in tasks], stem.with_suffix(".jsonl"))
        sidecar = {
            "spec": {"I": I, "S": S, "K": K},
            "boundaries": list(tasks[0].boundaries),
            "interval_probs": list(tasks[0].interval_probs),
            "max_prob_deviation": tasks[0].max_prob_deviation,
            "tasks": [t.sidecar() for t in tasks],
        }
        stem.with_suffix(".json").write_text(json.dumps(sidecar, indent=1), encoding="utf-8")
        good_cells.append((I, S, K))
    if args.simulate and good_cells:
        gains, _ = gain_sweep(
            good_cells, sim_model(s), runs=s["runs"], tasks_per_run=args.tasks_per_cell,
            n=s["n"], seed=s["seed"], temperature=s["temperature"],
        )
        write_gain_csv(gains, out / "gains.csv")
    for e in errors:
        print(e, file=sys.stderr)
    if errors:
        raise CliError(EXIT_PARTIAL if good_cells else EXIT_CONFIG, f"{len(errors)} cell(s) failed")
    return EXIT_OK


# --------------------------------------------------------------------------- analyze


def _method_for(path: Path) -> str:
    meta = path.parent / "meta.json"
    if meta.exists():
        try:
            return json.loads(meta.read_text(encoding="utf-8")).get("method", "unknown")
        except json.JSONDecodeError:
            pass
    return "unknown"


def _stddev(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    mean = sum(values) / len(values)
    return math.sqrt(sum((v - mean) ** 2 for v in values) / (len(values) - 1))


_SYNTH_ID = re.compile(r"^synth-I(\d+)-S(\d+)-K(\d+)-")


def gain_report(records: Sequence[RunRecord], m_single: int, m_multi: int) -> list[GainCell]:
    """Relative gain per synthetic cell; other tasks pool into an ``I=S=K=0`` row."""
    groups: dict[tuple[int, int, int], list[RunRecord]] = defaultdict(list)
    for rec in records:
        hit = _SYNTH_ID.match(rec.task_id)
        groups[tuple(int(g) for g in hit.groups()) if hit else (0, 0, 0)].append(rec)
    rows = []
    for cell, recs in sorted(groups.items()):
        singles, multis = run_accuracies(recs, m_single), run_accuracies(recs, m_multi)
        runs = sorted(singles.keys() & multis.keys())
        if runs:
            rows.append((cell, [singles[r] for r in runs], [multis[r] for r in runs]))
    return gain_matrix(rows)


def anova_report(records: Sequence[RunRecord], sizes: Sequence[int]) -> str:
    groups = []
    lines = ["one-way ANOVA of per-run accuracy across ensemble sizes"]
    for m in sizes:
        accs = list(run_accuracies(records, m).values())
        groups.append(accs)
        lines.append(f"m={m}: runs={len(accs)} mean={sum(accs) / len(accs):.4f}" if accs else f"m={m}: no runs")
    try:
        res = one_way_anova(groups)
    except AnovaUndefined as exc:
        lines.append(f"result: {exc}")
        return "\n".join(lines) + "\n"
    except ValidationError as exc:
        lines.append(f"result: not computed ({exc})")
        return "\n".join(lines) + "\n"
    lines.append(f"F={res.f_stat:.6g} df_between={res.df_between} df_within={res.df_within} p={res.p_value:.6g}")
    lines.append("significant at 0.05" if res.p_value < 0.05 else "not significant at 0.05")
    return "\n".join(lines) + "\n"


def cmd_analyze(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records: list[RunRecord] = []
    tokens: dict[tuple[str, str], list[int]] = defaultdict(list)
    for raw in args.paths:
        path = Path(raw)
        try:
            if path.suffix == ".csv":
                _reemit_csv(path, out)
                continue
            method = _method_for(path)
            for rec in iter_records(path):
                records.append(rec)
                for s in rec.per_sample:
                    tokens[(method, rec.task_id)].append(s.prompt_tokens + s.completion_tokens)
        except (ValidationError, OSError) as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from None
    if not records:
        return EXIT_OK
    common = set.intersection(*({e.m for e in r.vote_curve} for r in records))
    sizes = args.curve_sizes or sorted(common)
    missing = [m for m in sizes if m not in common]
    if missing:
        raise CliError(EXIT_CONFIG, f"records lack votes at m={missing}")
    write_curve_csv(curve(records, sizes), out / "curve.csv")

    lo, hi = min(common), max(common)
    gains = gain_report(records, lo, hi)
    write_gain_csv(gains, out / "gains.csv")
    anova_sizes = [m for m in (args.anova_sizes or [1, 10, 20, 30, 40]) if m in common]
    (out / "anova.txt").write_text(anova_report(records, anova_sizes), encoding="utf-8")

    if args.token_report:
        with open(out / "tokens.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "task", "mean_tokens", "stddev"])
            for (method, task_id), vals in sorted(tokens.items()):
                w.writerow([method, task_id, f"{sum(vals) / len(vals):.4f}", f"{_stddev(vals):.4f}"])
    return EXIT_OK


def _reemit_csv(path: Path, out: Path) -> None:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
    if header.startswith("m,"):
        write_curve_csv(read_curve_csv(path), out / "curve.csv")
    elif header.startswith("I,"):
        write_gain_csv(read_gain_csv(path), out / "gains.csv")
    else:
        raise ValidationError(f"{path}: unrecognised CSV header {header!r}")


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="samplevote", description="Sampling-and-voting ensembles.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--temperature", type=float)
        p.add_argument("--sim-mode", dest="sim_mode", choices=("flat", "synthetic-aware", "stepwise"))
        p.add_argument("--p-correct", dest="p_correct", type=float)
        p.add_argument("--k-wrong", dest="k_wrong", type=int)
        p.add_argument("--base-skill", dest="base_skill", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--prior-weight", dest="prior_weight", type=float)
        p.add_argument("--per-step-p", dest="per_step_p", type=float)

    run = sub.add_parser("run", help="run ensembles over a task file")
    common(run)
    run.add_argument("--backend", choices=("openai", "sim", "replay"))
    run.add_argument("--base-url", dest="base_url")
    run.add_argument("--model")
    run.add_argument("--api-key-env", dest="api_key_env")
    run.add_argument("--timeout-ms", dest="timeout_ms", type=int)
    run.add_argument("--max-retries", dest="max_retries", type=int)
    run.add_argument("--tasks", required=True)
    run.add_argument("--top-p", dest="top_p", type=float)
    run.add_argument("--out")
    run.add_argument("--method", choices=METHODS)
    run.add_argument("--stages")
    run.add_argument("--curve-sizes", dest="curve_sizes")
    run.add_argument("--max-in-flight", dest="max_in_flight", type=int)
    run.add_argument("--cache-dir", dest="cache_dir")
    run.add_argument("--replay-inner", dest="replay_inner", choices=("openai", "sim"))
    run.set_defaults(func=cmd_run)

    syn = sub.add_parser("synth", help="generate synthetic interval tasks")
    common(syn)
    syn.add_argument("--I", dest="I", type=int_list, required=True)
    syn.add_argument("--S", dest="S", type=int_list, required=True)
    syn.add_argument("--K", dest="K", type=int_list, required=True)
    syn.add_argument("--tasks-per-cell", dest="tasks_per_cell", type=int, default=10)
    syn.add_argument("--simulate", action="store_true", help="also run the simulated agent and write gains.csv")
    syn.add_argument("--out")
    syn.set_defaults(func=cmd_synth)

    ana = sub.add_parser("analyze", help="curves, gain and ANOVA from run records")
    ana.add_argument("paths", nargs="+")
    ana.add_argument("--out", default="analysis")
    ana.add_argument("--curve-sizes", dest="curve_sizes", type=int_list)
    ana.add_argument("--anova-sizes", dest="anova_sizes", type=int_list)
    ana.add_argument("--token-report", action="store_true")
    ana.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"samplevote: {exc}", file=sys.stderr)
        return exc.code
    except BackendError as exc:
        print(f"samplevote: backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ValidationError, OSError) as exc:
        print(f"samplevote: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
