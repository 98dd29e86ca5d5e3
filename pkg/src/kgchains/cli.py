"""Command-line pipeline: benchmark | extract | train | eval | export-rules.

All machine-readable outputs are tab-separated with a schema comment line;
identical inputs and seeds reproduce them byte for byte. Exit codes:
0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import benchmark as bench
from . import chains, checkpoint, evaluate, game, graph
from .errors import DataError, NumericError, UsageError

log = logging.getLogger(__name__)

EVAL_SCHEMA = "# kgchains eval report v1"
STATS_SCHEMA = "# kgchains extract stats v1"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are exit 1
        raise UsageError(message)


def _read_config_file(path: str) -> list[str]:
    """key=value lines become leading flags; explicit flags override them."""
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    injected: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            injected.append(f"--{key.strip()}")
            value = value.strip()
            if value:
                injected.append(value)
    return injected


def _apply_config(argv: list[str]) -> list[str]:
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        raise UsageError("--config requires a path")
    injected = _read_config_file(argv[at + 1])
    rest = argv[:at] + argv[at + 2 :]
    if not rest:
        raise UsageError("--config cannot supply the subcommand")
    return [rest[0]] + injected + rest[1:]


# -- artifact layout -------------------------------------------------------


def _relation_dir(artifacts: str, relation: str) -> str:
    return os.path.join(artifacts, relation)


def _vocab_path(artifacts: str, relation: str) -> str:
    return os.path.join(_relation_dir(artifacts, relation), "vocab.tsv")


def _instances_path(artifacts: str, relation: str, split: str) -> str:
    return os.path.join(_relation_dir(artifacts, relation), f"{split}.inst")


def _meta_path(artifacts: str, relation: str) -> str:
    return os.path.join(_relation_dir(artifacts, relation), "meta.txt")


def _checkpoint_path(artifacts: str, relation: str, mode: str, d: int) -> str:
    return os.path.join(_relation_dir(artifacts, relation), f"checkpoint.{mode}.d{d}.txt")


def _trainlog_path(artifacts: str, relation: str, mode: str, d: int) -> str:
    return os.path.join(_relation_dir(artifacts, relation), f"trainlog.{mode}.d{d}.tsv")


def _write_meta(path: str, meta: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(meta):
            fh.write(f"{key} = {meta[key]}\n")


def _read_meta(path: str) -> dict:
    if not os.path.exists(path):
        raise DataError(f"extraction metadata not found: {path}")
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            key, _, value = line.rstrip("\n").partition(" = ")
            meta[key] = value
    return meta


def _load_encoded_task(artifacts: str, relation: str) -> tuple[chains.EncodedTask, dict]:
    meta = _read_meta(_meta_path(artifacts, relation))
    size = int(meta["vocab_size"])
    splits = {
        split: chains.read_instances(_instances_path(artifacts, relation, split), size)
        for split in ("train", "dev", "test")
    }
    data = chains.EncodedTask(relation=relation, size=size, **splits)
    return data, meta


# -- subcommands ------------------------------------------------------------


def cmd_benchmark(args) -> int:
    spec = bench.BenchmarkSpec(
        entities=args.entities,
        relations=args.relations,
        rule=args.kind.replace("-", "_"),
        noise=args.noise,
        seed=args.seed,
        max_hops=args.max_hops,
        train_groups=args.train_groups,
        test_groups=args.test_groups,
        negatives_per_group=args.negatives_per_group,
        distractor_rate=args.distractor_rate,
        weak_pos_rate=args.weak_pos_rate,
        weak_neg_rate=args.weak_neg_rate,
    )
    os.makedirs(args.out, exist_ok=True)
    graph_path, tasks_dir = bench.write_benchmark(spec, args.out)
    print(f"benchmark written: graph={graph_path} tasks={tasks_dir} relation={spec.target_name}")
    return 0


def cmd_extract(args) -> int:
    kg = graph.load_triples(args.graph, add_inverses=not args.no_inverses)
    stats_rows = []
    for relation in args.relation:
        task = graph.load_task(args.tasks, relation, kg, args.split_ratio, args.seed)
        train_pairs = task.train
        if args.neg_ratio is not None:
            train_pairs = graph.downsample_negatives(train_pairs, args.neg_ratio, args.seed)
            task = graph.TaskDataset(task.target, task.relation, train_pairs, task.dev, task.test)
        positives = [
            (kg.entity_id(p.head), kg.entity_id(p.tail)) for p in train_pairs if p.label == 1
        ]
        vocab = chains.build_vocabulary(kg, positives, task.target, args.max_hops, args.max_chains)
        data = chains.encode_task(vocab, kg, task)

        rel_dir = _relation_dir(args.out, relation)
        os.makedirs(rel_dir, exist_ok=True)
        chains.write_vocabulary(_vocab_path(args.out, relation), vocab, kg)
        for split in ("train", "dev", "test"):
            chains.write_instances(
                _instances_path(args.out, relation, split), getattr(data, split), kg
            )
        _write_meta(
            _meta_path(args.out, relation),
            {
                "relation": relation,
                "vocab_size": vocab.size,
                "max_hops": args.max_hops,
                "max_chains": args.max_chains,
                "split_ratio": args.split_ratio,
                "seed": args.seed,
                "neg_ratio": args.neg_ratio if args.neg_ratio is not None else "none",
            },
        )
        everything = data.train + data.dev + data.test
        total, mean = chains.chain_statistics(vocab, everything)
        stats_rows.append((relation, total, mean))
        print(f"extracted {relation}: chains={total} mean_per_instance={mean:.2f}")

    with open(os.path.join(args.out, "stats.tsv"), "w", encoding="utf-8") as fh:
        fh.write(STATS_SCHEMA + "\n")
        fh.write("relation\tchains\tmean_chains_per_instance\n")
        for relation, total, mean in stats_rows:
            fh.write(f"{relation}\t{total}\t{mean:.6f}\n")
    return 0


def _train_config(args) -> game.TrainConfig:
    return game.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        baseline_momentum=args.baseline_momentum,
        mc_samples_per_instance=args.mc_samples,
    )


def cmd_train(args) -> int:
    out = args.out or args.artifacts
    for relation in args.relation:
        data, meta = _load_encoded_task(args.artifacts, relation)
        config = _train_config(args)
        result = evaluate.train_mode(data, config, args.mode, args.d, args.lambda_s)

        os.makedirs(_relation_dir(out, relation), exist_ok=True)
        ck_path = _checkpoint_path(out, relation, args.mode, args.d)
        checkpoint.save_checkpoint(
            ck_path,
            result.model,
            {
                "relation": relation,
                "run_mode": args.mode,
                "seed": args.seed,
                "epochs": args.epochs,
                "best_epoch": result.best_epoch,
                "best_dev_map": f"{result.best_dev_map:.6f}",
                "max_hops": meta.get("max_hops", ""),
                "vocab": os.path.basename(_vocab_path(args.artifacts, relation)),
            },
        )
        log_path = _trainlog_path(out, relation, args.mode, args.d)
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("# kgchains train log v1\n")
            fh.write("epoch\tloss_p\tloss_c\tmean_reward\tmean_selected\tdev_map\n")
            for stats in result.log:
                fh.write(stats.as_line() + "\n")
        print(
            f"trained {relation} mode={args.mode} d={args.d}: "
            f"best_dev_map={result.best_dev_map:.4f} (epoch {result.best_epoch}) -> {ck_path}"
        )
    return 0


def _load_model_checked(artifacts: str, relation: str, path: str) -> game.GameModel:
    model, _ = checkpoint.load_checkpoint(path)
    names, _ = chains.read_vocabulary_names(_vocab_path(artifacts, relation))
    if len(names) != model.input_dim:
        raise DataError(
            f"checkpoint/vocabulary mismatch for {relation}: "
            f"model expects {model.input_dim} chains, vocabulary has {len(names)}"
        )
    return model


def cmd_eval(args) -> int:
    columns = []
    for mode, d in zip(args.mode, args.d):
        per_relation = {}
        for relation in args.relation:
            data, _ = _load_encoded_task(args.artifacts, relation)
            ck_path = args.checkpoint or _checkpoint_path(args.artifacts, relation, mode, d)
            model = _load_model_checked(args.artifacts, relation, ck_path)
            instances = data.dev if args.split == "dev" else data.test
            report = evaluate.evaluate_task(model, instances, group_by=args.group_by)
            per_relation[relation] = report
        columns.append((f"{mode}.d{d}", per_relation))

    header = ["relation"] + [name for name, _ in columns]
    rows = []
    for relation in args.relation:
        row = [relation] + [f"{col[relation].map:.6f}" for _, col in columns]
        rows.append(row)
    averages = ["Average"] + [
        f"{sum(col[r].map for r in args.relation) / len(args.relation):.6f}"
        for _, col in columns
    ]

    width = max(len(cell) for row in [header] + rows + [averages] for cell in row) + 2
    for row in [header] + rows + [averages]:
        print("".join(cell.ljust(width) for cell in row).rstrip())
    skipped = sum(col[r].skipped for _, col in columns for r in args.relation)
    if skipped:
        print(f"(skipped {skipped} group(s) without positives)")

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(EVAL_SCHEMA + "\n")
            fh.write("\t".join(header) + "\n")
            for row in rows:
                fh.write("\t".join(row) + "\n")
            fh.write("\t".join(averages) + "\n")
    return 0


def cmd_export_rules(args) -> int:
    relation = args.relation
    data, _ = _load_encoded_task(args.artifacts, relation)
    ck_path = args.checkpoint or _checkpoint_path(args.artifacts, relation, args.mode, args.d)
    model = _load_model_checked(args.artifacts, relation, ck_path)
    names, _ = chains.read_vocabulary_names(_vocab_path(args.artifacts, relation))
    top_n = min(args.top_n, model.input_dim)

    lines: list[str] = []
    if args.aggregate:
        import numpy as np

        weight = np.zeros(model.input_dim)
        count = np.zeros(model.input_dim)
        for inst in data.test:
            if model.generator is not None:
                weight += game.generator_probs(model, inst)
            else:
                weight += inst.availability
            count += inst.availability
        mean = np.divide(weight, count, out=np.zeros_like(weight), where=count > 0)
        order = np.argsort(-mean, kind="stable")[:top_n]
        lines.append(f"{relation}: top {top_n} chains by mean selection probability")
        for rank, j in enumerate(order, start=1):
            lines.append(f"  {rank}. {names[j]} (mean_p={mean[j]:.4f}, seen={int(count[j])})")
    else:
        for inst in data.test:
            confidence = game.predict(model, inst)
            lines.append(
                f"{inst.head} -> {inst.tail} label={inst.label} confidence={confidence:.4f}"
            )
            if inst.n_available == 0:
                lines.append("  (no chains)")
                continue
            if model.generator is not None:
                probs = game.generator_probs(model, inst)
                mask = game.select_top_d(probs, inst.availability, top_n)
                chosen = [(probs[j], j) for j in range(model.input_dim) if mask.selected[j] > 0]
                chosen.sort(key=lambda item: (-item[0], item[1]))
            else:
                chosen = [(1.0, j) for j in range(model.input_dim) if inst.availability[j] > 0][:top_n]
            for rank, (p, j) in enumerate(chosen, start=1):
                lines.append(f"  {rank}. {names[j]} (p={p:.4f})")

    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


def cmd_adapt_deeppath(args) -> int:
    """Convert a DeepPath-style dataset layout into the task format."""
    entities = set()
    triples = []
    with open(args.kb, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split("\t") if "\t" in line else line.split()
            if len(fields) != 3:
                raise DataError(f"{args.kb}:{lineno}: expected 3 fields")
            triples.append(fields)
            entities.add(fields[0])
            entities.add(fields[2])

    def convert_pairs(path: str) -> tuple[list[str], int]:
        out_lines, skipped = [], 0
        with open(path, encoding="utf-8") as fh:
            for raw in fh:
                line = raw.strip()
                if not line:
                    continue
                body, _, sign = line.rpartition(":")
                sign = sign.strip()
                head, _, tail = body.partition(",")
                head = head.strip().removeprefix("thing$")
                tail = tail.strip().removeprefix("thing$")
                if sign not in ("+", "-") or not head or not tail:
                    raise DataError(f"{path}: malformed pair line: {line!r}")
                if head not in entities or tail not in entities:
                    skipped += 1
                    continue
                out_lines.append(f"{head}\t{tail}\t{1 if sign == '+' else 0}")
        return out_lines, skipped

    test_file = os.path.join(args.task_dir, "sort_test.pairs")
    if not os.path.exists(test_file):
        test_file = os.path.join(args.task_dir, "test.pairs")
    train_lines, train_skipped = convert_pairs(os.path.join(args.task_dir, "train.pairs"))
    test_lines, test_skipped = convert_pairs(test_file)
    if train_skipped or test_skipped:
        log.info("skipped %d train / %d test pairs with unknown entities", train_skipped, test_skipped)

    task_dir = os.path.join(args.out, "tasks", args.relation)
    os.makedirs(task_dir, exist_ok=True)
    with open(os.path.join(args.out, "graph.tsv"), "w", encoding="utf-8") as fh:
        for h, r, t in triples:
            fh.write(f"{h}\t{r}\t{t}\n")
    for name, lines in (("train.pairs", train_lines), ("test.pairs", test_lines)):
        with open(os.path.join(task_dir, name), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
    print(f"adapted: graph.tsv + tasks/{args.relation} under {args.out}")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="kgchains", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("benchmark", help="generate a synthetic planted-rule dataset")
    p.add_argument("--kind", choices=["single", "conjunction", "noisy-weak"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--entities", type=int, default=300)
    p.add_argument("--relations", type=int, default=26)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--max-hops", type=int, default=2)
    p.add_argument("--train-groups", type=int, default=50)
    p.add_argument("--test-groups", type=int, default=25)
    p.add_argument("--negatives-per-group", type=int, default=3)
    p.add_argument("--distractor-rate", type=float, default=0.3)
    p.add_argument("--weak-pos-rate", type=float, default=0.75)
    p.add_argument("--weak-neg-rate", type=float, default=0.25)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("extract", help="build chain vocabularies and encoded instances")
    p.add_argument("--graph", required=True)
    p.add_argument("--tasks", required=True)
    p.add_argument("--relation", action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-hops", type=int, default=3)
    p.add_argument("--max-chains", type=int, default=10000)
    p.add_argument("--split-ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--neg-ratio", type=float, default=None)
    p.add_argument("--no-inverses", action="store_true")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a model on extracted artifacts")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--relation", action="append", required=True)
    p.add_argument("--mode", choices=list(evaluate.ALL_MODES), default=evaluate.MODE_GAME_MLP)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--lambda-s", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline-momentum", type=float, default=0.9)
    p.add_argument("--mc-samples", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints and report MAP")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--relation", action="append", required=True)
    p.add_argument("--mode", action="append", default=None)
    p.add_argument("--d", type=int, action="append", default=None)
    p.add_argument("--checkpoint", default=None, help="explicit checkpoint path (single relation/mode)")
    p.add_argument("--split", choices=["test", "dev"], default="test")
    p.add_argument("--group-by", choices=["head", "global"], default="head")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-rules", help="write the selected chains per test instance")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--relation", required=True)
    p.add_argument("--mode", default=evaluate.MODE_GAME_MLP)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--top-n", type=int, default=5)
    p.add_argument("--aggregate", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export_rules)

    p = sub.add_parser("adapt-deeppath", help="convert a DeepPath-style dataset layout")
    p.add_argument("--kb", required=True)
    p.add_argument("--task-dir", required=True)
    p.add_argument("--relation", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_adapt_deeppath)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        argv = _apply_config(argv)
        args = build_parser().parse_args(argv)
        if args.command == "eval":
            args.mode = args.mode or [evaluate.MODE_GAME_MLP]
            args.d = args.d or [5]
            if len(args.d) == 1 and len(args.mode) > 1:
                args.d = args.d * len(args.mode)
            if len(args.d) != len(args.mode):
                raise UsageError("--d must be given once or once per --mode")
            if args.checkpoint and (len(args.relation) > 1 or len(args.mode) > 1):
                raise UsageError("--checkpoint only applies to a single relation and mode")
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 2
    except NumericError as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
