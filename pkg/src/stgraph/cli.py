"""Command-line pipeline orchestrator.

Subcommands: adapt, train-ngram, generate, expand, eval, consistency,
augment, zeroshot, graph-export. Every run writes a resolved-config
snapshot and a run manifest (input hashes, seed, version, outputs) next to
its outputs, and is replayable from that manifest alone: same inputs, same
seed, byte-identical outputs.

Option precedence: flags > config file > defaults, except the two CI
environment overrides (STGRAPH_BACKEND_URL and STGRAPH_TIMEOUT), which
outrank flags so CI can redirect committed invocations; they cover only
the remote backend URL and timeout.

Exit codes: 0 success, 1 pipeline error, 2 usage error. Logs go to stderr
as "LEVEL stage message" lines; machine-readable outputs only under --out.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .adapters import StExample, group_examples, load_split, reference_graph
from .backends import (
    GenerationConfig,
    NGramBackend,
    NGramModel,
    oracle_from_file,
    remote_backend,
    train_ngram,
)
from .downstream import QaItem, ZeroShotItem, augment, export_training_file, zero_shot_eval
from .generation import (
    ExpansionPolicy,
    R_FWD,
    R_REV,
    RelationSchedule,
    build_query,
    iterative_graph_gen,
    recursive_expand,
)
from .graph import StGraph
from .metrics import Criterion, EXACT, consistency_rate, eval_graphs
from .rand import derive_seed

logger = logging.getLogger("stgraph.cli")

ENV_BACKEND_URL = "STGRAPH_BACKEND_URL"
ENV_TIMEOUT = "STGRAPH_TIMEOUT"


class UsageError(Exception):
    """Bad invocation (missing required options); maps to exit code 2."""


def _write_json(path: Path, payload) -> None:
    path.write_text(
        json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2, allow_nan=False)
        + "\n",
        encoding="utf-8",
    )


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def build_backend(spec: str, timeout: float, retries: int):
    kind, _, rest = spec.partition(":")
    if kind == "oracle" and rest:
        return oracle_from_file(rest)
    if kind == "ngram" and rest:
        return NGramBackend(NGramModel.load(rest))
    if kind == "remote" and rest:
        return remote_backend(rest, timeout=timeout, retries=retries)
    raise ValueError(
        f"backend must be oracle:PATH, ngram:PATH, or remote:URL, got {spec!r}"
    )


def _backend_input_path(spec: str) -> str | None:
    kind, _, rest = spec.partition(":")
    return rest if kind in ("oracle", "ngram") else None


def resolve_schedule(spec: str) -> RelationSchedule | None:
    """None means per-group: derive the schedule from each group's examples."""
    if spec in ("from-group", "default"):
        return None
    if spec == "fwd":
        return R_FWD
    if spec == "rev":
        return R_REV
    return RelationSchedule.parse(spec)


class _Run:
    """Collects inputs and outputs for the run manifest."""

    def __init__(self, command: str, options: dict, out_dir: Path):
        self.command = command
        self.options = options
        self.out_dir = out_dir
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def track_input(self, path) -> Path:
        path = Path(path)
        self.inputs[str(path)] = _sha256(path)
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        self.outputs.append(name)
        return path

    def write_json(self, name: str, payload) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        _write_json(path, payload)
        self.outputs.append(name)
        return path

    def finish(self) -> None:
        self.write_json("resolved_config.json", self.options)
        manifest = {
            "command": self.command,
            "inputs": dict(sorted(self.inputs.items())),
            "options": self.options,
            "outputs": sorted(self.outputs),
            "version": __version__,
        }
        _write_json(self.out_dir / "run_manifest.json", manifest)


# -- subcommand option tables -------------------------------------------------

_COMMON = {
    "out": dict(type=str, required=True, help="output directory"),
    "config": dict(type=str, default=None, help="JSON config file"),
}

_BACKEND_OPTS = {
    "backend": dict(type=str, required=True,
                    help="oracle:PATH | ngram:PATH | remote:URL"),
    "timeout": dict(type=float, default=10.0, help="remote call timeout (s)"),
    "retries": dict(type=int, default=3, help="remote attempt budget"),
}

_GEN_OPTS = {
    "top_p": dict(type=float, default=1.0, help="nucleus sampling mass"),
    "max_tokens": dict(type=int, default=32, help="decode token cap"),
    "seed": dict(type=int, default=0, help="master random seed"),
}

_SPECS: dict[str, dict[str, dict]] = {
    "adapt": {
        **_COMMON,
        "dataset": dict(type=str, required=True, choices=["wiqa", "quarel", "defeasible"]),
        "in": dict(type=str, required=True, help="raw JSONL input"),
        "split": dict(type=str, default="train", choices=["train", "dev", "test"]),
        "expected": dict(type=int, default=None,
                         help="expected record count (fixture manifest value)"),
    },
    "train-ngram": {
        **_COMMON,
        "in": dict(type=str, required=True, help="adapted examples JSONL"),
        "order": dict(type=int, default=3),
        "backoff": dict(type=float, default=0.4),
    },
    "generate": {
        **_COMMON,
        **_BACKEND_OPTS,
        **_GEN_OPTS,
        "in": dict(type=str, required=True, help="adapted examples JSONL"),
        "schedule": dict(type=str, default="from-group",
                         help="from-group | fwd | rev | rel:eff,rel:eff,..."),
        "jobs": dict(type=int, default=1, help="parallel generation workers"),
    },
    "expand": {
        **_COMMON,
        **_BACKEND_OPTS,
        **_GEN_OPTS,
        "in": dict(type=str, required=True, help="graph directory with index.json"),
        "schedule": dict(type=str, default="fwd", help="per-node schedule"),
        "max_depth": dict(type=int, default=2),
        "max_nodes": dict(type=int, default=16),
        "frontier": dict(type=str, default="leaves", choices=["leaves", "root"]),
    },
    "eval": {
        **_COMMON,
        "generated": dict(type=str, required=True, help="graph directory with index.json"),
        "references": dict(type=str, required=True,
                           help="examples JSONL or graph directory"),
    },
    "consistency": {
        **_COMMON,
        **_BACKEND_OPTS,
        **_GEN_OPTS,
        "cases": dict(type=str, required=True, help="JSONL of {context, situation}"),
        "schedule": dict(type=str, default="helps:imminent"),
        "max_depth": dict(type=int, default=2),
        "max_nodes": dict(type=int, default=16),
        "theta": dict(type=float, default=0.8, help="token-F1 threshold"),
    },
    "augment": {
        **_COMMON,
        **_BACKEND_OPTS,
        **_GEN_OPTS,
        "in": dict(type=str, required=True, help="QA items JSONL"),
        "alpha": dict(type=float, default=1.0),
        "beta": dict(type=float, default=0.9),
    },
    "zeroshot": {
        **_COMMON,
        **_BACKEND_OPTS,
        "in": dict(type=str, required=True, help="zero-shot items JSONL"),
        "length_normalize": dict(type=bool, default=False, flag=True),
    },
    "graph-export": {
        **_COMMON,
        "in": dict(type=str, required=True, help="graph JSON file"),
        "format": dict(type=str, default="dot", choices=["dot", "json"]),
    },
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stgraph", description="Situational-reasoning graph pipeline"
    )
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command, spec in _SPECS.items():
        sub = subparsers.add_parser(command)
        for name, opts in spec.items():
            opts = dict(opts)
            opts.pop("default", None)
            opts.pop("required", None)  # enforced after config-file resolution
            if opts.pop("flag", False):
                opts.pop("type", None)
                sub.add_argument(f"--{name.replace('_', '-')}", dest=name,
                                 action="store_true", default=argparse.SUPPRESS,
                                 help=opts.get("help"))
            else:
                sub.add_argument(f"--{name.replace('_', '-')}", dest=name,
                                 default=argparse.SUPPRESS, **opts)
    return parser


def _resolve_options(command: str, namespace: argparse.Namespace) -> dict:
    spec = _SPECS[command]
    resolved = {name: opts.get("default") for name, opts in spec.items()}
    explicit = {k: v for k, v in vars(namespace).items() if k != "command"}
    config_path = explicit.get("config")
    if config_path:
        with open(config_path, "r", encoding="utf-8") as handle:
            config = json.load(handle)
        section = config.get(command, config)
        for key, value in section.items():
            key = key.replace("-", "_")
            if key in resolved:
                resolved[key] = value
    resolved.update(explicit)
    if "backend" in spec:
        # CI overrides outrank flags: they exist to redirect committed
        # invocations at a different server.
        url = os.environ.get(ENV_BACKEND_URL)
        if url and str(resolved.get("backend", "")).startswith("remote:"):
            resolved["backend"] = f"remote:{url}"
        timeout = os.environ.get(ENV_TIMEOUT)
        if timeout:
            resolved["timeout"] = float(timeout)
    missing = [name for name, opts in spec.items()
               if opts.get("required") and resolved.get(name) is None]
    if missing:
        raise UsageError(f"missing required options: {', '.join(missing)}")
    return resolved


# -- subcommand implementations ------------------------------------------------


def _cmd_adapt(opts: dict) -> None:
    run = _Run("adapt", opts, Path(opts["out"]))
    path = run.track_input(opts["in"])
    stream, manifest = load_split(path, opts["dataset"], opts["split"],
                                  expected_count=opts["expected"])
    written = 0
    out_path = run.out_dir / "examples.jsonl"
    with open(out_path, "w", encoding="utf-8", newline="\n") as handle:
        for example in stream:  # line-at-a-time: full-size dumps stay bounded
            handle.write(example.to_json_line() + "\n")
            written += 1
    run.outputs.append("examples.jsonl")
    run.write_json("split_manifest.json", {**manifest.to_dict(), "examples_written": written})
    logger.info("adapt wrote %d examples from %d records", written, manifest.observed_count)
    run.finish()


def _load_examples(path: Path) -> list[StExample]:
    return [StExample.from_dict(rec) for rec in _read_jsonl(path)]


def _cmd_train_ngram(opts: dict) -> None:
    run = _Run("train-ngram", opts, Path(opts["out"]))
    examples = _load_examples(run.track_input(opts["in"]))
    pairs = [
        (build_query(ex.context, ex.situation, ex.relation, ex.effect).surface, ex.answer)
        for ex in examples
    ]
    model = train_ngram(pairs, opts["order"], opts["backoff"])
    model.save(run.out_dir / "model.json")
    run.outputs.append("model.json")
    run.write_json("train_manifest.json", {
        "order": model.n,
        "pairs": model.trained_pairs,
        "vocab_size": len(model.vocab),
    })
    run.finish()


def _cmd_generate(opts: dict) -> None:
    run = _Run("generate", opts, Path(opts["out"]))
    backend_input = _backend_input_path(opts["backend"])
    if backend_input:
        run.track_input(backend_input)
    backend = build_backend(opts["backend"], opts["timeout"], opts["retries"])
    examples = _load_examples(run.track_input(opts["in"]))
    groups = group_examples(examples)
    fixed_schedule = resolve_schedule(opts["schedule"])
    config = GenerationConfig(top_p=opts["top_p"], max_tokens=opts["max_tokens"],
                              seed=opts["seed"])

    def one(task):
        index, (key, members) = task
        schedule = fixed_schedule or RelationSchedule(
            [(ex.relation, ex.effect) for ex in members]
        )
        graph = iterative_graph_gen(
            backend, members[0].context, members[0].situation, schedule,
            config.with_seed(derive_seed(config.seed, index)),
        )
        return key, graph

    tasks = list(enumerate(groups.items()))
    if opts["jobs"] > 1:
        with ThreadPoolExecutor(max_workers=opts["jobs"]) as pool:
            results = list(pool.map(one, tasks))
    else:
        results = [one(task) for task in tasks]

    index_rows = []
    for key, graph in results:
        name = f"{key}.json"
        run.write_text(name, graph.to_json())
        index_rows.append({
            "context": graph.context,
            "file": name,
            "group_key": key,
            "situation": graph.situation,
        })
    run.write_json("index.json", sorted(index_rows, key=lambda r: r["group_key"]))
    logger.info("generate wrote %d graphs", len(results))
    run.finish()


def _load_graph_dir(path: Path) -> list[tuple[str, StGraph]]:
    index = json.loads((path / "index.json").read_text(encoding="utf-8"))
    return [
        (row["group_key"], StGraph.from_json((path / row["file"]).read_text(encoding="utf-8")))
        for row in index
    ]


def _cmd_expand(opts: dict) -> None:
    run = _Run("expand", opts, Path(opts["out"]))
    backend_input = _backend_input_path(opts["backend"])
    if backend_input:
        run.track_input(backend_input)
    backend = build_backend(opts["backend"], opts["timeout"], opts["retries"])
    in_dir = Path(opts["in"])
    run.track_input(in_dir / "index.json")
    schedule = resolve_schedule(opts["schedule"])
    if schedule is None:
        raise ValueError("expand needs an explicit per-node schedule")
    policy = ExpansionPolicy(opts["max_depth"], opts["max_nodes"], schedule)
    config = GenerationConfig(top_p=opts["top_p"], max_tokens=opts["max_tokens"],
                              seed=opts["seed"])
    index_rows = []
    for i, (key, graph) in enumerate(_load_graph_dir(in_dir)):
        run.track_input(in_dir / f"{key}.json")
        if opts["frontier"] == "root":
            frontier = [graph.root.id]
        else:
            with_out = {e.src for e in graph.edges}
            frontier = [n.id for n in graph.nodes if n.id not in with_out]
        recursive_expand(backend, graph, frontier, policy,
                         config.with_seed(derive_seed(config.seed, i)))
        name = f"{key}.json"
        run.write_text(name, graph.to_json())
        index_rows.append({
            "context": graph.context,
            "file": name,
            "group_key": key,
            "situation": graph.situation,
        })
    run.write_json("index.json", sorted(index_rows, key=lambda r: r["group_key"]))
    run.finish()


def _cmd_eval(opts: dict) -> None:
    run = _Run("eval", opts, Path(opts["out"]))
    gen_dir = Path(opts["generated"])
    run.track_input(gen_dir / "index.json")
    generated = _load_graph_dir(gen_dir)
    ref_path = Path(opts["references"])
    if ref_path.is_dir():
        run.track_input(ref_path / "index.json")
        references = dict(_load_graph_dir(ref_path))
    else:
        run.track_input(ref_path)
        groups = group_examples(_load_examples(ref_path))
        references = {key: reference_graph(members) for key, members in groups.items()}
    gen_graphs = []
    ref_graphs = []
    for key, graph in generated:
        if key not in references:
            raise ValueError(f"no reference graph for group {key}")
        gen_graphs.append(graph)
        ref_graphs.append(references[key])
    report = eval_graphs(gen_graphs, ref_graphs)
    run.write_json("report.json", report.to_dict())
    print(f"{'metric':<12}{'value':>10}")
    print(f"{'BLEU-4':<12}{report.bleu:>10.2f}")
    print(f"{'ROUGE-L-F':<12}{report.rouge_l_f:>10.2f}")
    print(f"{'pairs':<12}{report.n_pairs:>10d}")
    run.finish()


def _cmd_consistency(opts: dict) -> None:
    run = _Run("consistency", opts, Path(opts["out"]))
    backend_input = _backend_input_path(opts["backend"])
    if backend_input:
        run.track_input(backend_input)
    backend = build_backend(opts["backend"], opts["timeout"], opts["retries"])
    cases = [
        (rec["context"], rec["situation"])
        for rec in _read_jsonl(run.track_input(opts["cases"]))
    ]
    schedule = resolve_schedule(opts["schedule"])
    if schedule is None:
        raise ValueError("consistency needs an explicit schedule")
    policy = ExpansionPolicy(opts["max_depth"], opts["max_nodes"], schedule)
    config = GenerationConfig(top_p=opts["top_p"], max_tokens=opts["max_tokens"],
                              seed=opts["seed"])
    by_f1 = consistency_rate(backend, cases, schedule, policy,
                             Criterion("token_f1", opts["theta"]), config)
    by_exact = consistency_rate(backend, cases, schedule, policy, EXACT, config)
    run.write_json("report.json", {"exact": by_exact.to_dict(), "token_f1": by_f1.to_dict()})
    run.finish()


def _cmd_augment(opts: dict) -> None:
    run = _Run("augment", opts, Path(opts["out"]))
    backend_input = _backend_input_path(opts["backend"])
    if backend_input:
        run.track_input(backend_input)
    backend = build_backend(opts["backend"], opts["timeout"], opts["retries"])
    items = [QaItem.from_dict(rec) for rec in _read_jsonl(run.track_input(opts["in"]))]
    config = GenerationConfig(top_p=opts["top_p"], max_tokens=opts["max_tokens"],
                              seed=opts["seed"])
    augmented = []
    for i, item in enumerate(items):
        aug = augment(backend, item, config.with_seed(derive_seed(config.seed, i)),
                      alpha=opts["alpha"], beta=opts["beta"])
        run.write_text(f"graphs/item{i}_cause.json", aug.graphs[0].to_json())
        run.write_text(f"graphs/item{i}_ending.json", aug.graphs[1].to_json())
        augmented.append(aug)
    manifest = export_training_file(augmented, run.out_dir / "augmented.jsonl")
    run.outputs.append("augmented.jsonl")
    run.write_json("aug_manifest.json", manifest)
    run.finish()


def _cmd_zeroshot(opts: dict) -> None:
    run = _Run("zeroshot", opts, Path(opts["out"]))
    backend_input = _backend_input_path(opts["backend"])
    if backend_input:
        run.track_input(backend_input)
    backend = build_backend(opts["backend"], opts["timeout"], opts["retries"])
    items = [ZeroShotItem.from_dict(rec) for rec in _read_jsonl(run.track_input(opts["in"]))]
    report = zero_shot_eval(backend, items, length_normalize=opts["length_normalize"])
    run.write_json("report.json", report.to_dict())
    logger.info("zeroshot accuracy %.4f on %d items", report.accuracy, report.n_items)
    run.finish()


def _cmd_graph_export(opts: dict) -> None:
    run = _Run("graph-export", opts, Path(opts["out"]))
    path = run.track_input(opts["in"])
    graph = StGraph.from_json(Path(path).read_text(encoding="utf-8"))
    stem = Path(path).stem
    if opts["format"] == "dot":
        run.write_text(f"{stem}.dot", graph.to_dot())
    else:
        run.write_text(f"{stem}.json", graph.to_json())
    run.finish()


_HANDLERS = {
    "adapt": _cmd_adapt,
    "train-ngram": _cmd_train_ngram,
    "generate": _cmd_generate,
    "expand": _cmd_expand,
    "eval": _cmd_eval,
    "consistency": _cmd_consistency,
    "augment": _cmd_augment,
    "zeroshot": _cmd_zeroshot,
    "graph-export": _cmd_graph_export,
}


def run(argv: list[str]) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s %(message)s"
    )
    parser = _build_parser()
    try:
        namespace = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        opts = _resolve_options(namespace.command, namespace)
        _HANDLERS[namespace.command](opts)
    except UsageError as exc:
        logger.error("%s usage error: %s", namespace.command, exc)
        return 2
    except Exception as exc:
        logger.error("%s failed: %s", namespace.command, exc)
        return 1
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
