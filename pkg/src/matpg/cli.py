"""Command line: train, validate, analyze, export, env-check.

Run directories follow ``<out>/<algo>_<selection>/<tasks>/<seed>/`` and hold
``manifest.json``, ``stats.csv``, ``validation.csv``, ``checkpoints/`` and
``champion/``. Everything written under a run directory is a function of the
manifest, so repeating a command reproduces the same bytes.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import re
import statistics
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .environments import OBSERVATION_DIM, ConfigError, PointMassConfig, Task, make_suite
from .evolution import (
    CheckpointError,
    EvolutionConfig,
    EvolutionState,
    derive_seed,
    evaluate_agent,
    init_state,
    load_checkpoint,
    run,
    validate,
)
from .graph import Root, RootKind, store_to_dict
from .interpret import expression_listing, prune, to_dot
from .metrics import (
    MetricError,
    TrainingCurve,
    auc_difficulty,
    bonferroni,
    cohens_d,
    cross_task_matrix,
    normalize_difficulty,
    welch_t,
)

log = logging.getLogger("matpg")

ALGOS = {"maple": 1.0, "matpg": 2.0 / 3.0}
SELECTIONS = ("tournament", "lexicase")
CROSS = 3  # episode-seed purpose for env-check cross evaluation
_TOP_KEYS = {"algo", "selection", "tasks", "seed", "seeds", "generations", "agents", "workers",
             "checkpoint_every", "evolution", "environment"}


class ConfigFileError(ValueError):
    pass


# -- configuration -------------------------------------------------------------------


def _line_of(text: str, key: str) -> int:
    pattern = re.compile(r'"%s"\s*:' % re.escape(key))
    for n, line in enumerate(text.splitlines(), 1):
        if pattern.search(line):
            return n
    return 1


def load_config_file(path: str | Path) -> dict:
    """Read a JSON run config; every error names ``path:line``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigFileError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigFileError(f"{path}:1: top level must be an object")
    for key in data:
        if key not in _TOP_KEYS:
            raise ConfigFileError(f"{path}:{_line_of(text, key)}: unknown key {key!r}")
    for section, cls in (("evolution", EvolutionConfig), ("environment", PointMassConfig)):
        try:
            _build(cls, data.get(section, {}))
        except (TypeError, ValueError) as exc:
            raise ConfigFileError(f"{path}:{_anchor(text, str(exc))}: {section}: {exc}") from None
    return data


def _anchor(text: str, message: str) -> int:
    for word in re.findall(r"[A-Za-z_][A-Za-z0-9_]*", message):
        if re.search(r'"%s"\s*:' % re.escape(word), text):
            return _line_of(text, word)
    return 1


def _build(cls, values: dict):
    if not isinstance(values, dict):
        raise TypeError(f"{cls.__name__} settings must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise TypeError(f"unknown field {unknown[0]}")
    if cls is PointMassConfig and "center_interval" in values:
        values = dict(values, center_interval=tuple(values["center_interval"]))
    return cls(**values)


@dataclasses.dataclass
class RunSpec:
    algo: str
    selection: str
    tasks: list[int]
    seed: int
    evolution: EvolutionConfig
    environment: PointMassConfig
    workers: int = 1
    checkpoint_every: int = 10

    def run_dir(self, out: Path) -> Path:
        return out / f"{self.algo}_{self.selection}" / tasks_label(self.tasks) / str(self.seed)

    def manifest(self) -> dict:
        return {
            "algo": self.algo,
            "selection": self.selection,
            "tasks": self.tasks,
            "seed": self.seed,
            "config": {
                "evolution": self.evolution.to_dict(),
                "environment": dataclasses.asdict(self.environment),
            },
            "engine_hash": engine_hash(),
            "layout": {"stats": "stats.csv", "validation": "validation.csv",
                       "checkpoints": "checkpoints/", "champion": "champion/"},
        }


def tasks_label(tasks: Sequence[int]) -> str:
    return "-".join(str(t) for t in tasks)


def parse_tasks(text: str) -> list[int]:
    try:
        tasks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--tasks expects comma-separated integers, got {text!r}") from None
    if not tasks:
        raise ConfigError("--tasks is empty")
    return tasks


def engine_hash() -> str:
    """Git-style digest over the package sources (blob hashes, sorted by name)."""
    outer = hashlib.sha1()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        data = path.read_bytes()
        blob = hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
        outer.update(f"{path.name} {blob}\n".encode())
    return outer.hexdigest()


def resolve_specs(args: argparse.Namespace) -> list[RunSpec]:
    """CLI flag > config file > built-in default."""
    file = load_config_file(args.config) if args.config else {}

    def pick(flag, key, default):
        value = getattr(args, flag, None)
        if value is not None:
            return value
        return file.get(key, default)

    algo = pick("algo", "algo", "matpg")
    selection = pick("selection", "selection", "lexicase")
    if algo not in ALGOS:
        raise ConfigError(f"unknown --algo {algo!r} (choose from {', '.join(ALGOS)})")
    if selection not in SELECTIONS:
        raise ConfigError(f"unknown --selection {selection!r}")
    tasks = args.tasks if args.tasks is not None else file.get("tasks", [0, 1, 2])
    tasks = parse_tasks(tasks) if isinstance(tasks, str) else [int(t) for t in tasks]

    if args.seeds is not None:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    elif args.seed is not None:
        seeds = [args.seed]
    else:
        seeds = [int(s) for s in file.get("seeds", [file.get("seed", 0)])]

    evo = dict(file.get("evolution", {}))
    generations = pick("generations", "generations", None)
    agents = pick("agents", "agents", None)
    if generations is not None:
        evo["n_generations"] = int(generations)
    if agents is not None:
        evo["n_agents"] = int(agents)
    evo["maple_proportion"] = ALGOS[algo]
    evo["selection"] = dict(evo.get("selection", {}), method=selection)
    env = _build(PointMassConfig, dict(file.get("environment", {})))
    workers = int(pick("workers", "workers", 1))
    every = int(file.get("checkpoint_every", 10))
    specs = []
    for seed in seeds:
        cfg = _build(EvolutionConfig, dict(evo, seed=seed))
        specs.append(RunSpec(algo, selection, tasks, seed, cfg, env, workers, every))
    return specs


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# -- train / validate / export -----------------------------------------------------


def latest_checkpoint(run_dir: Path) -> Path | None:
    best, best_gen = None, -1
    for path in sorted((run_dir / "checkpoints").glob("*.json")):
        try:
            gen = json.loads(path.read_text())["generation"]
        except (OSError, ValueError, KeyError, TypeError):
            continue
        if gen >= best_gen:  # last.json sorts after gen_*.json and wins ties
            best, best_gen = path, gen
    return best


def train_one(spec: RunSpec, out: Path, resume: bool = False) -> Path:
    run_dir = spec.run_dir(out)
    manifest = spec.manifest()
    suite = make_suite(spec.tasks, spec.environment)
    state = None
    if resume and (run_dir / "manifest.json").exists():
        previous = json.loads((run_dir / "manifest.json").read_text())
        if previous["config"] != json.loads(json.dumps(manifest["config"])):
            raise ConfigError(f"{run_dir}: --resume with a different config than the manifest")
        ckpt = latest_checkpoint(run_dir)
        if ckpt is not None:
            state = load_checkpoint(ckpt)
            log.info("resuming %s at generation %d", run_dir, state.generation)
    if state is None:
        for stale in (run_dir / "checkpoints").glob("*.json"):
            stale.unlink()
        meta = {"algo": spec.algo, "selection": spec.selection, "tasks": spec.tasks,
                "environment": dataclasses.asdict(spec.environment)}
        state = init_state(spec.evolution, OBSERVATION_DIM, spec.environment.action_dim, meta)
    _write_json(run_dir / "manifest.json", manifest)
    run(state, suite, run_dir, workers=spec.workers, checkpoint_every=spec.checkpoint_every)
    export_champion(state, run_dir / "champion")
    return run_dir


def export_champion(state: EvolutionState, out: Path, root_id: int | None = None,
                    digits: int | None = 6) -> Root:
    roots = {r.vertex: r for r in state.roots()}
    if root_id is None:
        root_id = state.champion_id if state.champion_id in roots else state.roots()[0].vertex
    if root_id not in roots:
        raise CheckpointError(f"vertex {root_id} is not a root of this population")
    root = roots[root_id]
    agent = prune(root, state.store)
    out.mkdir(parents=True, exist_ok=True)
    (out / "agent.dot").write_text(to_dot(agent))
    (out / "programs.txt").write_text(expression_listing(agent, digits))
    _write_json(out / "agent.json", {
        "root": [root.kind.value, root.vertex],
        "generation": state.generation,
        "labels": {str(k): v for k, v in sorted(agent.labels.items())},
        "store": store_to_dict(agent.store),
    })
    return root


def suite_from_state(state: EvolutionState):
    meta = state.meta
    if "tasks" not in meta:
        raise CheckpointError("checkpoint has no task metadata")
    env = _build(PointMassConfig, dict(meta.get("environment", {})))
    return make_suite(meta["tasks"], env)


def cmd_train(args) -> int:
    specs = resolve_specs(args)
    out = Path(args.out)
    for spec in specs:
        try:
            run_dir = train_one(spec, out, resume=args.resume)
        except KeyboardInterrupt:
            print(f"interrupted; resume with --resume (checkpoints in "
                  f"{spec.run_dir(out) / 'checkpoints'})", file=sys.stderr)
            return 130
        print(run_dir)
    return 0


def _resolve_checkpoint(target: Path) -> Path:
    if target.is_dir():
        ckpt = latest_checkpoint(target)
        if ckpt is None:
            raise CheckpointError(f"no checkpoint under {target}")
        return ckpt
    return target


def cmd_validate(args) -> int:
    target = Path(args.run)
    state = load_checkpoint(_resolve_checkpoint(target))
    suite = suite_from_state(state)
    result = validate(state, suite, args.workers or 1)
    k = result.champion_row()
    report = {
        "generation": result.generation,
        "champion_id": result.champion_id,
        "tasks": {name: float(result.task_scores[k, t]) for t, name in enumerate(suite.names)},
        "population_best": {name: float(result.task_scores[:, t].max())
                            for t, name in enumerate(suite.names)},
        "combined": float(result.combined[k]),
    }
    for name, score in report["tasks"].items():
        print(f"{name:10s} champion={score:.3f} population_best={report['population_best'][name]:.3f}")
    print(f"{'combined':10s} champion={report['combined']:.3f} (id {result.champion_id})")
    if target.is_dir():
        _write_json(target / "champion" / "validation.json", report)
    return 0


def cmd_export(args) -> int:
    state = load_checkpoint(_resolve_checkpoint(Path(args.checkpoint)))
    out = Path(args.out) if args.out else Path(args.checkpoint).with_suffix("") / "export"
    root = export_champion(state, out, args.root, None if args.exact else args.digits)
    print(f"exported root {root.vertex} ({root.kind.value}) to {out}")
    return 0


# -- analyze ------------------------------------------------------------------------


@dataclasses.dataclass
class RunRecord:
    config: str
    tasks: str
    seed: str
    task_names: list[str]
    curves: dict[str, list[float]]  # task -> best per generation
    final_best: dict[str, float]  # task -> population-best at final validation
    final_champion: dict[str, float]  # task/"combined" -> champion score


def _read_csv(path: Path) -> list[dict]:
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def load_run(run_dir: Path) -> RunRecord | None:
    stats, valid = run_dir / "stats.csv", run_dir / "validation.csv"
    if not stats.exists() or not valid.exists():
        return None
    curves: dict[str, list[float]] = {}
    for row in _read_csv(stats):
        curves.setdefault(row["task"], []).append(float(row["best"]))
    rows = _read_csv(valid)
    if not rows:
        return None
    last = max(int(r["gen"]) for r in rows)
    final = [r for r in rows if int(r["gen"]) == last]
    names = [r["task"] for r in final if r["task"] != "combined"]
    return RunRecord(
        run_dir.parent.parent.name, run_dir.parent.name, run_dir.name, names, curves,
        {r["task"]: float(r["population_best"]) for r in final},
        {r["task"]: float(r["champion_score"]) for r in final},
    )


def discover(results: Path) -> list[RunRecord]:
    records = []
    for cfg_dir in sorted(p for p in results.iterdir() if p.is_dir() and "_" in p.name):
        for task_dir in sorted(p for p in cfg_dir.iterdir() if p.is_dir()):
            for seed_dir in sorted((p for p in task_dir.iterdir() if p.is_dir()),
                                   key=lambda p: (len(p.name), p.name)):
                record = load_run(seed_dir)
                if record is not None:
                    records.append(record)
    return records


def _fmt(x: float) -> str:
    return "nan" if x != x else f"{x:.4g}"


def analyze(results: Path, reference: str = "matpg_lexicase", alpha: float = 0.05) -> tuple[str, int]:
    records = discover(results)
    if not records:
        return f"no completed runs under {results}\n", 1
    groups: dict[tuple[str, str], list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.tasks, r.config), []).append(r)
    task_sets = sorted({r.tasks for r in records})
    configs = sorted({r.config for r in records})
    lines: list[str] = []
    gaps: list[str] = []

    difficulty_rows = [["config", "tasks", "task", "auc", "normalized"]]
    lines.append("## Difficulty (training-curve AUC, higher is easier)")
    for (tasks, config), runs in sorted(groups.items()):
        names = runs[0].task_names
        aucs = []
        for name in names:
            length = min(len(r.curves.get(name, [])) for r in runs)
            if length == 0:
                aucs.append(float("nan"))
                continue
            curve = TrainingCurve.from_runs([r.curves[name][:length] for r in runs])
            try:
                aucs.append(auc_difficulty(curve))
            except MetricError:
                aucs.append(float("nan"))
        finite = [a for a in aucs if a == a]
        try:
            norm = normalize_difficulty([a if a == a else -np.inf for a in aucs]) if finite else []
        except MetricError:
            norm = []
        for i, name in enumerate(names):
            n = norm[i] if norm else float("nan")
            difficulty_rows.append([config, tasks, name, _fmt(aucs[i]), _fmt(n)])
            lines.append(f"{config:20s} {tasks:10s} {name:10s} auc={_fmt(aucs[i]):>8s} "
                         f"normalized={_fmt(n)}")

    best_rows = [["config", "tasks", "task", "median_population_best", "median_champion", "seeds"]]
    lines.append("")
    lines.append("## Final validation (median over seeds)")
    for (tasks, config), runs in sorted(groups.items()):
        for name in runs[0].task_names + ["combined"]:
            pb = statistics.median(r.final_best[name] for r in runs)
            ch = statistics.median(r.final_champion[name] for r in runs)
            best_rows.append([config, tasks, name, _fmt(pb), _fmt(ch), len(runs)])
            lines.append(f"{config:20s} {tasks:10s} {name:10s} population_best={_fmt(pb):>8s} "
                         f"champion={_fmt(ch):>8s} (n={len(runs)})")

    for tasks in task_sets:
        seeds = {c: {r.seed for r in groups.get((tasks, c), [])} for c in configs}
        every = set().union(*seeds.values())
        for c in configs:
            for s in sorted(every - seeds[c]):
                gaps.append(f"missing run {c}/{tasks}/{s}")

    comparisons = []
    for tasks in task_sets:
        ref = groups.get((tasks, reference))
        if ref is None:
            gaps.append(f"no reference {reference} runs for tasks {tasks}")
            continue
        for config in configs:
            if config == reference or (tasks, config) not in groups:
                continue
            comparisons.append((tasks, config, groups[(tasks, config)], ref))
    sig_rows = [["tasks", "config", "reference", "t", "df", "p", "d", "alpha_corr", "significant"]]
    lines.append("")
    lines.append(f"## Significance vs {reference} (combined champion score, Welch, two-tailed)")
    if comparisons:
        a_corr = bonferroni(alpha, len(comparisons))
        lines.append(f"alpha={alpha} comparisons={len(comparisons)} alpha_corr={a_corr:.6g}")
        for tasks, config, runs, ref in comparisons:
            a = [r.final_champion["combined"] for r in runs]
            b = [r.final_champion["combined"] for r in ref]
            if len(a) < 2 or len(b) < 2:
                gaps.append(f"{config}/{tasks}: fewer than two seeds, no test")
                continue
            res = welch_t(a, b)
            d = cohens_d(a, b)
            verdict = "yes" if res.p < a_corr else "no"
            sig_rows.append([tasks, config, reference, _fmt(res.t), _fmt(res.df), _fmt(res.p),
                             _fmt(d), repr(a_corr), verdict])
            lines.append(f"{config:20s} {tasks:10s} t={_fmt(res.t):>8s} df={_fmt(res.df):>7s} "
                         f"p={_fmt(res.p):>9s} d={_fmt(d):>8s} significant={verdict}")
    else:
        lines.append("no comparisons available")
    if gaps:
        lines.append("")
        lines.append("## Gaps")
        lines.extend(gaps)

    for name, rows in (("difficulty.csv", difficulty_rows), ("final_scores.csv", best_rows),
                       ("significance.csv", sig_rows)):
        with (results / name).open("w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    text = "\n".join(lines) + "\n"
    (results / "analysis.txt").write_text(text)
    return text, 0


@dataclasses.dataclass
class DirectionalClaims:
    seeds: list[str]
    combined: dict[str, tuple[float, float]]  # seed -> (candidate, baseline) champion scores
    wins: int
    task_medians: dict[str, tuple[float, float]]  # task -> (lexicase, tournament) medians
    dominated: int


def directional_claims(records: Sequence[RunRecord], tasks: str,
                       candidate: str = "matpg_lexicase", baseline: str = "maple_tournament",
                       tournament: str = "matpg_tournament") -> DirectionalClaims:
    """Paired-seed champion comparison plus per-task population-best medians.

    ``wins`` counts seeds where the candidate's final combined champion
    score is at least the baseline's; ``dominated`` counts tasks where the
    median final population-best under ``candidate`` strictly exceeds the
    one under ``tournament``.
    """
    by = {(r.config, r.seed): r for r in records if r.tasks == tasks}
    seeds = sorted({s for c, s in by if c == candidate} & {s for c, s in by if c == baseline},
                   key=lambda s: (len(s), s))
    combined = {s: (by[(candidate, s)].final_champion["combined"],
                    by[(baseline, s)].final_champion["combined"]) for s in seeds}
    wins = sum(a >= b for a, b in combined.values())
    lex = [r for (c, _), r in by.items() if c == candidate]
    tour = [r for (c, _), r in by.items() if c == tournament]
    medians = {}
    if lex and tour:
        for name in lex[0].task_names:
            medians[name] = (statistics.median(r.final_best[name] for r in lex),
                             statistics.median(r.final_best[name] for r in tour))
    dominated = sum(a > b for a, b in medians.values())
    return DirectionalClaims(seeds, combined, wins, medians, dominated)


def cmd_analyze(args) -> int:
    results = Path(args.results)
    if not results.is_dir():
        print(f"error: {results} is not a directory", file=sys.stderr)
        return 2
    text, code = analyze(results, args.reference, args.alpha)
    print(text, end="")
    return code


# -- env-check ---------------------------------------------------------------------


@dataclasses.dataclass
class EnvCheckResult:
    tasks: list[int]
    raw: np.ndarray
    normalized: np.ndarray
    auc: list[float]
    difficulty: list[float]
    threshold: float

    @property
    def passed(self) -> bool:
        off = self.normalized[~np.eye(len(self.tasks), dtype=bool)]
        return bool(np.all(np.isfinite(off)) and np.all(off < self.threshold))


def env_check(tasks: Sequence[int], seeds: Sequence[int], n_agents: int = 120,
              n_generations: int = 150, episodes: int = 10, threshold: float = 0.3,
              env_cfg: PointMassConfig | None = None, evo: dict | None = None,
              workers: int = 1) -> EnvCheckResult:
    """Train a MAPLE population on each task alone; score its champion on every task.

    Cells are normalized by the score of the population trained on the
    evaluated task (the diagonal).
    """
    env_cfg = env_cfg or PointMassConfig()
    tasks = list(tasks)
    full = make_suite(tasks, env_cfg, combined=False)
    raw = np.zeros((len(tasks), len(tasks)))
    curves = {t: [] for t in tasks}
    for i, task in enumerate(tasks):
        for seed in seeds:
            settings = dict(evo or {})
            settings.setdefault("mutation", {"init_program_size": 10})
            settings.setdefault("train_episodes_per_task", 2)
            cfg = _build(EvolutionConfig, dict(
                settings, n_agents=n_agents, n_generations=n_generations,
                maple_proportion=1.0, seed=seed + task,
                selection=dict(settings.get("selection", {}), method="tournament")))
            state = init_state(cfg, OBSERVATION_DIM, env_cfg.action_dim)
            suite = make_suite([task], env_cfg)
            history = run(state, suite, workers=workers)
            curves[task].append([s.best[0] for s in history])
            ep_seeds = [[derive_seed(seed, CROSS, t, e) for e in range(episodes)] for t in tasks]
            scores, _ = evaluate_agent(Root(RootKind.MAPLE, state.champion_id), state.store,
                                       full, ep_seeds)
            raw[i] += np.asarray(scores) / len(seeds)
            log.info("env-check task %d seed %d: %s", task, seed, np.round(scores, 2))
    matrix = cross_task_matrix(raw, np.diag(raw))
    aucs = [auc_difficulty(TrainingCurve.from_runs(curves[t])) for t in tasks]
    return EnvCheckResult(tasks, raw, matrix.normalized, aucs, normalize_difficulty(aucs), threshold)


def format_env_check(res: EnvCheckResult) -> str:
    names = [Task(t).name for t in res.tasks]
    head = "trained\\eval " + " ".join(f"{n:>9s}" for n in names)
    lines = ["## Cross-task scores (normalized by the trained-task score)", head]
    for i, name in enumerate(names):
        lines.append(f"{name:12s} " + " ".join(f"{v:9.3f}" for v in res.normalized[i]))
    lines.append("")
    lines.append("## Raw champion scores")
    lines.append(head)
    for i, name in enumerate(names):
        lines.append(f"{name:12s} " + " ".join(f"{v:9.3f}" for v in res.raw[i]))
    lines.append("")
    lines.append("## Difficulty (AUC, normalized; higher is easier)")
    for name, a, d in zip(names, res.auc, res.difficulty):
        lines.append(f"{name:12s} auc={a:8.3f} normalized={d:.3f}")
    lines.append("")
    off = res.normalized[~np.eye(len(res.tasks), dtype=bool)]
    lines.append(f"max off-diagonal {off.max():.3f} (threshold {res.threshold}): "
                 f"{'PASS' if res.passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


def cmd_env_check(args) -> int:
    file = load_config_file(args.config) if args.config else {}
    tasks = parse_tasks(args.tasks) if args.tasks else list(range(len(Task)))
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",")]
    else:
        seeds = [args.seed if args.seed is not None else 0]
    env_cfg = _build(PointMassConfig, dict(file.get("environment", {})))
    evo = {k: v for k, v in file.get("evolution", {}).items()
           if k not in ("n_agents", "n_generations", "maple_proportion", "seed")}
    res = env_check(tasks, seeds, args.agents or 120, args.generations or 150, args.episodes,
                    args.threshold, env_cfg, evo, args.workers or 1)
    text = format_env_check(res)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "env_check.txt").write_text(text)
        with (out / "cross_task.csv").open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["trained", "evaluated", "raw", "normalized"])
            for i, a in enumerate(res.tasks):
                for j, b in enumerate(res.tasks):
                    writer.writerow([a, b, repr(float(res.raw[i, j])),
                                     repr(float(res.normalized[i, j]))])
    return 0 if res.passed else 1


# -- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="matpg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="evolve one configuration for one or more seeds")
    p.add_argument("--algo", choices=sorted(ALGOS))
    p.add_argument("--selection", choices=SELECTIONS)
    p.add_argument("--tasks", help="comma-separated task ids, e.g. 0,1,2")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", help="comma-separated seeds (overrides --seed)")
    p.add_argument("--generations", type=int)
    p.add_argument("--agents", type=int)
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--out", default="results")
    p.add_argument("--workers", type=int)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("validate", help="re-validate a run directory or checkpoint")
    p.add_argument("run")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", help="difficulty, final-score and significance tables")
    p.add_argument("results")
    p.add_argument("--reference", default="matpg_lexicase")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("export", help="DOT topology and expression listing for one root")
    p.add_argument("checkpoint", help="checkpoint file or run directory")
    p.add_argument("--root", type=int, help="root vertex id (default: champion)")
    p.add_argument("--out")
    p.add_argument("--digits", type=int, default=6)
    p.add_argument("--exact", action="store_true", help="print constants with full precision")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("env-check", help="single-task training and cross-task transfer matrix")
    p.add_argument("--tasks")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds")
    p.add_argument("--generations", type=int)
    p.add_argument("--agents", type=int)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_env_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigFileError, ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
