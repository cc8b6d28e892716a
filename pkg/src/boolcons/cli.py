"""Command line front end: experiment pipelines, manifests, logs and reports."""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

from . import analysis
from .boolfun import is_balanced, nonlinearity, write_table
from .config import ConfigError, ExperimentConfig, load_config, read_json, write_json
from .construction import (BEST_KNOWN_NL, BootstrapError, SeedError, apply_construction,
                           bootstrap_chain, default_target, load_seed_groups,
                           make_seed_groups, save_seed_groups, test_generality)
from .evolver import PAPER_SCALE, EvolverConfig, run_batch
from .fitness import (NL_ONLY, NL_WITH_SPECTRUM, ConstructionEvaluator,
                      FunctionEvaluator)
from .gp import GpError, TerminalContext, read_trees, serialize_tree, write_trees

log = logging.getLogger("boolcons")

MANIFEST = "manifest.json"
OUT_ENV = "BOOLCONS_OUT"
FORMAT_VERSION = 1

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --- small helpers ---------------------------------------------------------


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _out_dir(out: str | None, command: str) -> Path:
    if out:
        d = Path(out)
    else:
        d = Path(os.environ.get(OUT_ENV, "boolcons-runs")) / command
    d.mkdir(parents=True, exist_ok=True)
    return d


class JsonlLog:
    """Line-delimited structured records; one writer per file."""

    def __init__(self, path: Path):
        self.fh = open(path, "w")

    def __call__(self, event: str, **fields) -> None:
        self.fh.write(json.dumps({"event": event, **fields}, sort_keys=True) + "\n")

    def close(self) -> None:
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _write_manifest(out: Path, command: str, params: dict, started: str,
                    artifacts: dict, **extra) -> None:
    manifest = {"format": FORMAT_VERSION, "command": command, "params": params,
                "started": started, "finished": _now(), "artifacts": artifacts, **extra}
    write_json(out / MANIFEST, manifest)


def _log_history(logger: JsonlLog, results) -> None:
    for i, r in enumerate(results):
        for ev, best, size in r.fitness_history:
            logger("improvement", run=i, evaluation=ev, best=best, size=size)
        logger("run_end", run=i, seed=r.rng_seed, evaluations=r.evaluations_used,
               best=float(r.best_fitness.value), size=r.best_tree.size)


def _evolver_from(params: dict) -> EvolverConfig:
    base = dict(PAPER_SCALE) if params.get("paper_scale") else {}
    for key, name in (("budget", "budget"), ("runs", "runs"),
                      ("population", "population_size")):
        if params.get(key) is not None and not (params.get("paper_scale") and name in PAPER_SCALE):
            base[name] = params[key]
    base["rng_seed"] = params.get("seed") or 0
    if params.get("stop_early") and params.get("target_nl") is not None:
        base["stop_at"] = params["target_nl"]
    return EvolverConfig(**base)


# --- evolve-fn -------------------------------------------------------------


def cmd_evolve_fn(params: dict, out: Path, workers: int = 1) -> int:
    """Plain GP on ``n`` variables; min, average and max NL over runs."""
    started = _now()
    n = params["n"]
    if n < 1:
        raise UsageError("n must be positive")
    if params.get("target_nl") is None:
        params["target_nl"] = BEST_KNOWN_NL.get(n, 0)
    target = params["target_nl"]
    obj = params.get("objective") or NL_WITH_SPECTRUM
    cfg = _evolver_from(params)
    ev = FunctionEvaluator(n, obj)
    results = run_batch(cfg, TerminalContext(n, 0, ()), ev, workers)

    rows, nls = [], []
    best = None
    with open(out / "runs.jsonl", "w") as fh:
        for i, r in enumerate(results):
            f = ev.table(r.best_tree)
            bal, nl = is_balanced(f), nonlinearity(f)
            row = {"run": i, "seed": r.rng_seed, "balanced": bal, "nl": nl,
                   "fitness": float(r.best_fitness.value), "evaluations": r.evaluations_used,
                   "tree": serialize_tree(r.best_tree), "table": f.to_hex()}
            fh.write(json.dumps(row, sort_keys=True) + "\n")
            rows.append(row)
            if bal:
                nls.append(nl)
            if best is None or r.best_fitness.value > best[0].best_fitness.value:
                best = (r, f)
    write_table(out / "best.tt", best[1])
    with JsonlLog(out / "log.jsonl") as logger:
        _log_history(logger, results)

    hits = sum(1 for r in rows if r["balanced"] and r["nl"] >= target)
    summary = {"n": n, "target_nl": target, "objective": obj, "runs": len(rows),
               "balanced_runs": len(nls), "hits": hits,
               "min": min(nls) if nls else None, "max": max(nls) if nls else None,
               "avg": sum(nls) / len(nls) if nls else None,
               "count_max": nls.count(max(nls)) if nls else 0}
    write_json(out / "summary.json", summary)
    _write_manifest(out, "evolve-fn", params, started,
                    {"best": "best.tt", "runs": "runs.jsonl", "log": "log.jsonl",
                     "summary": "summary.json"},
                    evolver=_jsonable(cfg))
    print(format_fn_summary(summary))
    return EXIT_OK if hits else EXIT_FAIL


def format_fn_summary(s: dict) -> str:
    if not s["balanced_runs"]:
        body = "no balanced function found"
    else:
        body = (f"min {s['min']}  avg {s['avg']:.2f}  max {s['max']}  "
                f"#max {s['count_max']}/{s['runs']}")
    return (f"n = {s['n']}: {body}\n"
            f"target NL {s['target_nl']} reached in {s['hits']} of {s['runs']} runs")


def _jsonable(cfg: EvolverConfig) -> dict:
    d = dict(vars(cfg))
    d["crossover_kinds"] = list(cfg.crossover_kinds)
    return d


# --- evolve-cons -----------------------------------------------------------


def _training_groups(cfg: ExperimentConfig, out: Path):
    if cfg.seed_source == "file":
        groups = load_seed_groups(cfg.seed_dir)
        if any(g.s != cfg.s or g.n != cfg.n for g in groups):
            raise SeedError(f"{cfg.seed_dir}: groups do not match s={cfg.s}, n={cfg.n}")
        return groups[:cfg.groups], str(Path(cfg.seed_dir).resolve())
    groups = make_seed_groups(cfg.s, cfg.n, cfg.nl, cfg.groups, cfg.seed_source,
                              seed=cfg.evolver.rng_seed, budget=cfg.seed_budget)
    save_seed_groups(out / "seeds", groups)
    return groups, "seeds"


def locally_optimal(t, groups, target: int, k: int) -> bool:
    for g in groups:
        f = apply_construction(t, g, k)
        if not is_balanced(f) or nonlinearity(f) < target:
            return False
    return True


def cmd_evolve_cons(params: dict, out: Path, workers: int = 1) -> int:
    started = _now()
    cfg = ExperimentConfig.from_dict(params["config"])
    groups, seed_ref = _training_groups(cfg, out)
    ev = ConstructionEvaluator(groups, cfg.obj, cfg.fitness_kind, cfg.k)
    ctx = TerminalContext(cfg.k, cfg.s)
    results = run_batch(cfg.evolver, ctx, ev, workers)

    trees = [r.best_tree for r in results]
    write_trees(out / "trees.txt", trees)
    flagged = 0
    with open(out / "runs.jsonl", "w") as fh:
        for i, r in enumerate(results):
            outs = [apply_construction(r.best_tree, g, cfg.k) for g in groups]
            ok = locally_optimal(r.best_tree, groups, cfg.target, cfg.k)
            flagged += ok
            row = {"run": i, "seed": r.rng_seed, "fitness": float(r.best_fitness.value),
                   "evaluations": r.evaluations_used, "size": r.best_tree.size,
                   "group_nl": [nonlinearity(f) for f in outs],
                   "balanced": all(is_balanced(f) for f in outs),
                   "locally_optimal": ok, "tree": serialize_tree(r.best_tree)}
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    with JsonlLog(out / "log.jsonl") as logger:
        _log_history(logger, results)
    summary = {"experiment": cfg.tuple_label, "k": cfg.k, "size": cfg.size,
               "target": cfg.target, "runs": len(results), "locally_optimal": flagged}
    write_json(out / "summary.json", summary)
    _write_manifest(out, "evolve-cons", params, started,
                    {"trees": "trees.txt", "runs": "runs.jsonl", "log": "log.jsonl",
                     "summary": "summary.json"},
                    experiment=[cfg.s, cfg.n, cfg.nl, cfg.ev], seed_groups=seed_ref,
                    rng_seed=cfg.evolver.rng_seed)
    print(format_cons_summary(summary))
    return EXIT_OK if flagged else EXIT_FAIL


def format_cons_summary(s: dict) -> str:
    return (f"experiment {s['experiment']}, k={s['k']}: {s['locally_optimal']} of "
            f"{s['runs']} runs locally optimal (NL >= {s['target']} at size {s['size']})")


# --- test-cons -------------------------------------------------------------


def load_test_sets(directory, k: int) -> dict:
    """Seed groups by resulting size from a directory of seed-group directories."""
    d = Path(directory)
    if not d.is_dir():
        raise SeedError(f"{d}: not a directory")
    dirs = [d] if (d / MANIFEST).exists() else sorted(p for p in d.iterdir()
                                                      if (p / MANIFEST).exists())
    if not dirs:
        raise SeedError(f"{d}: no seed groups found")
    sets: dict = {}
    for sub in dirs:
        groups = load_seed_groups(sub)
        sets.setdefault(groups[0].n + k, []).extend(groups)
    return sets


def _pick_tree(path, index: int):
    trees = read_trees(path)
    if not trees:
        raise GpError(f"{path}: no trees")
    if not 0 <= index < len(trees):
        raise UsageError(f"{path} holds {len(trees)} trees; index {index} out of range")
    return trees[index]


def cmd_test_cons(params: dict, out: Path, workers: int = 1) -> int:
    started = _now()
    k = params.get("k", 2)
    t = _pick_tree(params["tree"], params.get("index", 0))
    sets = load_test_sets(params["test_dir"], k)
    targets = {}
    for size, groups in sets.items():
        targets[size] = default_target(groups[0].n, groups[0].declared_nl, k)
    for spec in params.get("targets") or []:
        size, nl = spec
        targets[size] = nl
    targets = {s: v for s, v in targets.items() if v is not None}
    report = test_generality(t, sets, targets, k)
    text = f"tree: {serialize_tree(t)}\n" + report.format() + "\n"
    (out / "report.txt").write_text(text)
    write_json(out / "report.json", report.to_dict())
    _write_manifest(out, "test-cons", params, started,
                    {"report": "report.txt", "table": "report.json"})
    print(text, end="")
    return EXIT_OK if report.general else EXIT_FAIL


# --- analyze ---------------------------------------------------------------

RELATIONS = {"within": analysis.WITHIN_KIND, "joint": analysis.JOINT,
             "extended": analysis.EXTENDED}


def _collect_trees(path) -> tuple[list, int | None]:
    """Trees from a file or a directory; ``s`` from an evolve-cons manifest if present."""
    p = Path(path)
    s = None
    if p.is_dir():
        if (p / MANIFEST).exists():
            m = read_json(p / MANIFEST)
            if m.get("command") == "evolve-cons":
                s = m["params"]["config"]["s"]
        files = [p / "trees.txt"] if (p / "trees.txt").exists() else sorted(p.glob("*.txt"))
    else:
        files = [p]
    trees = []
    for f in files:
        trees.extend(read_trees(f))
    if not trees:
        raise GpError(f"{p}: no trees")
    return trees, s


def cmd_analyze(params: dict, out: Path, workers: int = 1) -> int:
    started = _now()
    trees, s = _collect_trees(params["trees"])
    k = params.get("k", 2)
    s = params.get("s") or s or max(max(analysis.tree_shape(t)[1] for t in trees), 1)
    artifacts = {"sizes": "sizes.json", "simplified": "simplified.txt",
                 "summary": "summary.json"}
    stats = analysis.size_stats(trees)
    write_json(out / "sizes.json", stats)
    simplified = [analysis.simplify(t) for t in trees]
    write_trees(out / "simplified.txt", simplified)
    abstract = [analysis.abstractize(t, s, k) for t in simplified]
    used = [analysis.seeds_used(a) for a in abstract]
    summary = {"trees": len(trees), "s": s, "k": k, "sizes": {x: stats[x] for x in
               ("min", "q1", "median", "q3", "max")},
               "seeds_used": max(used), "seeds_used_per_tree": used,
               "essential": [sorted(analysis.essential_terminals(a)) for a in abstract]}
    pick = analysis.select_simplest(trees)
    summary["simplest"] = None if pick is None else {
        "index": pick, "tree": serialize_tree(trees[pick]),
        "simplified": serialize_tree(simplified[pick])}
    if len(trees) >= 2:
        rel = RELATIONS[params.get("relation", "within")]
        restrict = params.get("restrict", False)
        g = analysis.equivalence_graph(abstract, rel, restrict=restrict)
        (out / "adjacency.txt").write_text(g.grid() + "\n")
        write_json(out / "adjacency.json", {"rows": g.adjacency.astype(int).tolist(),
                                            "classes": g.classes})
        artifacts.update(adjacency="adjacency.txt", graph="adjacency.json")
        summary.update(relation=params.get("relation", "within"), restrict=restrict,
                       classes=g.n_classes, max_size=g.max_size)
    else:
        log.warning("fewer than two trees: equivalence graph skipped")
    write_json(out / "summary.json", summary)
    _write_manifest(out, "analyze", params, started, artifacts)
    print(format_analysis(summary))
    return EXIT_OK


def format_analysis(s: dict) -> str:
    z = s["sizes"]
    lines = [f"{s['trees']} trees; size min {z['min']} q1 {z['q1']:g} median "
             f"{z['median']:g} q3 {z['q3']:g} max {z['max']}"]
    if "classes" in s:
        lines.append("#classes  max_size  seeds_used")
        lines.append(f"{s['classes']:>8}  {s['max_size']:>8}  {s['seeds_used']:>10}")
    else:
        lines.append(f"seeds_used {s['seeds_used']}")
    if s.get("simplest"):
        lines.append(f"simplest: {s['simplest']['tree']}")
    return "\n".join(lines)


# --- bootstrap -------------------------------------------------------------


def cmd_bootstrap(params: dict, out: Path, workers: int = 1) -> int:
    started = _now()
    k = params.get("k", 2)
    levels = params["levels"]
    if levels < 0:
        raise UsageError("levels must be non-negative")
    t = _pick_tree(params["tree"], params.get("index", 0))
    base = load_seed_groups(params["seeds"])
    halted = None
    try:
        chain = bootstrap_chain(t, base, levels, k)
    except BootstrapError as exc:
        chain, halted = exc.chain, str(exc)
    artifacts = {"report": "report.txt", "table": "report.json"}
    for i, groups in enumerate(chain):
        save_seed_groups(out / f"level_{i:02d}", groups)
        artifacts[f"level_{i}"] = f"level_{i:02d}"
    rows = [{"level": i, "size": chain[i][0].n, "seed_nl": chain[i - 1][0].declared_nl,
             "resulting_nl": min(g.declared_nl for g in chain[i])}
            for i in range(1, len(chain))]
    table = {"base": {"size": base[0].n, "nl": base[0].declared_nl}, "rows": rows,
             "levels_requested": levels, "levels_completed": len(chain) - 1,
             "halted": halted}
    text = format_bootstrap(table)
    (out / "report.txt").write_text(text + "\n")
    write_json(out / "report.json", table)
    _write_manifest(out, "bootstrap", params, started, artifacts)
    print(text)
    if halted:
        print(f"bootstrap halted: {halted}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def format_bootstrap(table: dict) -> str:
    rows = table["rows"]
    b = table["base"]
    if not rows:
        lines = [f"base: n = {b['size']}, NL {b['nl']} (no levels applied)"]
    else:
        lines = ["size         " + " ".join(f"{r['size']:>8}" for r in rows),
                 "seed NL      " + " ".join(f"{r['seed_nl']:>8}" for r in rows),
                 "resulting NL " + " ".join(f"{r['resulting_nl']:>8}" for r in rows)]
    if table["halted"]:
        lines.append(f"halted after level {table['levels_completed']}: {table['halted']}")
    return "\n".join(lines)


# --- report / rerun --------------------------------------------------------


def cmd_report(directory) -> int:
    d = Path(directory)
    if not (d / MANIFEST).exists():
        raise UsageError(f"{d}: no {MANIFEST}")
    m = read_json(d / MANIFEST)
    command = m["command"]
    if command == "evolve-fn":
        print(format_fn_summary(read_json(d / "summary.json")))
    elif command == "evolve-cons":
        print(format_cons_summary(read_json(d / "summary.json")))
    elif command == "analyze":
        print(format_analysis(read_json(d / "summary.json")))
    elif command in ("test-cons", "bootstrap"):
        print((d / "report.txt").read_text(), end="")
    else:
        raise UsageError(f"unknown command {command!r} in manifest")
    print(f"[{command}] started {m['started']}, finished {m['finished']}")
    return EXIT_OK


COMMANDS = {"evolve-fn": cmd_evolve_fn, "evolve-cons": cmd_evolve_cons,
            "test-cons": cmd_test_cons, "analyze": cmd_analyze,
            "bootstrap": cmd_bootstrap}


def rerun(manifest_path, out, workers: int = 1) -> int:
    m = read_json(manifest_path)
    if m.get("command") not in COMMANDS:
        raise UsageError(f"{manifest_path}: not a run manifest")
    params = m["params"]
    if m["command"] == "evolve-cons":
        cfg = params["config"]
        if cfg.get("seed_source") == "file" and not Path(cfg["seed_dir"]).is_absolute():
            cfg["seed_dir"] = str(Path(manifest_path).parent / cfg["seed_dir"])
    return COMMANDS[m["command"]](params, _out_dir(out, m["command"]), workers)


# --- argument parsing ------------------------------------------------------


def _size_target(text: str) -> tuple[int, int]:
    try:
        size, nl = text.split("=")
        return int(size), int(nl)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected SIZE=NL, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<command>)")
    common.add_argument("--workers", type=int, default=1, help="parallel runs")
    common.add_argument("-v", "--verbose", action="store_true")

    evo = argparse.ArgumentParser(add_help=False)
    evo.add_argument("--seed", type=int, default=None, help="RNG seed")
    evo.add_argument("--budget", type=int, help="evaluations per run")
    evo.add_argument("--runs", type=int)
    evo.add_argument("--population", type=int)
    evo.add_argument("--paper-scale", action="store_true",
                     help="population 500, 500000 evaluations, 30 runs")

    p = argparse.ArgumentParser(prog="boolcons",
                                description="Evolve and study secondary constructions "
                                            "of balanced Boolean functions.")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("evolve-fn", parents=[common, evo],
                       help="plain GP for balanced highly nonlinear functions")
    q.add_argument("--n", type=int, required=True, help="number of variables")
    q.add_argument("--target-nl", type=int, help="nonlinearity counted as a hit")
    q.add_argument("--objective", choices=["nonlinearity", "spectrum"], default="spectrum")
    q.add_argument("--stop-early", action="store_true",
                   help="end a run once the target is reached")

    q = sub.add_parser("evolve-cons", parents=[common, evo], help="evolve constructions")
    q.add_argument("--config", required=True, help="flat key = value experiment file")

    q = sub.add_parser("test-cons", parents=[common], help="test a construction's generality")
    q.add_argument("tree", help="tree file")
    q.add_argument("test_dir", help="directory of seed-group directories")
    q.add_argument("--index", type=int, default=0, help="which tree in the file")
    q.add_argument("--k", type=int, default=2, choices=[1, 2])
    q.add_argument("--target", action="append", type=_size_target, default=[],
                   metavar="SIZE=NL", help="override the target at one size")

    q = sub.add_parser("analyze", parents=[common], help="sizes, equivalence, simplification")
    q.add_argument("trees", help="tree file or run directory")
    q.add_argument("--s", type=int, help="seed count (default: from manifest or trees)")
    q.add_argument("--k", type=int, default=2, choices=[1, 2])
    q.add_argument("--relation", choices=sorted(RELATIONS), default="within")
    q.add_argument("--restrict", action="store_true",
                   help="compare on essential terminals only")

    q = sub.add_parser("bootstrap", parents=[common], help="feed outputs back as seeds")
    q.add_argument("tree", help="tree file")
    q.add_argument("--seeds", required=True, help="base seed-group directory")
    q.add_argument("--levels", type=int, required=True)
    q.add_argument("--index", type=int, default=0)
    q.add_argument("--k", type=int, default=2, choices=[1, 2])

    q = sub.add_parser("report", help="print the summary of a finished run directory")
    q.add_argument("directory")

    q = sub.add_parser("rerun", parents=[common], help="repeat a run from its manifest")
    q.add_argument("manifest")
    return p


def _abs(path: str) -> str:
    return str(Path(path).resolve())


def _params(args) -> dict:
    c = args.command
    if c == "evolve-fn":
        return {"n": args.n, "target_nl": args.target_nl,
                "objective": NL_ONLY if args.objective == "nonlinearity" else NL_WITH_SPECTRUM,
                "seed": args.seed or 0, "budget": args.budget, "runs": args.runs,
                "population": args.population, "paper_scale": args.paper_scale,
                "stop_early": args.stop_early}
    if c == "evolve-cons":
        cfg, extra = load_config(args.config, args.paper_scale)
        evo = vars(cfg.evolver)
        overrides = {"rng_seed": args.seed, "budget": args.budget, "runs": args.runs,
                     "population_size": args.population}
        for key, value in overrides.items():
            if value is not None:
                evo[key] = value
        try:
            cfg.evolver = EvolverConfig(**evo)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if cfg.seed_dir:
            cfg.seed_dir = str((Path(args.config).parent / cfg.seed_dir).resolve())
        if args.out is None and "output_dir" in extra:
            args.out = extra["output_dir"]
        return {"config": cfg.to_dict()}
    if c == "test-cons":
        return {"tree": _abs(args.tree), "test_dir": _abs(args.test_dir),
                "index": args.index, "k": args.k,
                "targets": [list(t) for t in args.target]}
    if c == "analyze":
        return {"trees": _abs(args.trees), "s": args.s, "k": args.k,
                "relation": args.relation, "restrict": args.restrict}
    if c == "bootstrap":
        return {"tree": _abs(args.tree), "seeds": _abs(args.seeds),
                "levels": args.levels, "index": args.index, "k": args.k}
    raise UsageError(c)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args.directory)
        if args.command == "rerun":
            return rerun(args.manifest, args.out, args.workers)
        params = _params(args)
        out = _out_dir(args.out, args.command)
        return COMMANDS[args.command](params, out, args.workers)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"boolcons: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SeedError, GpError, analysis.AnalysisError, ValueError) as exc:
        print(f"boolcons: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
