"""Command-line surface: train, test, explain, retrain, compare, report, synth."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import engine as engine_mod
from .core import RunMetrics
from .data import (
    Dataset,
    load_schema,
    load_tabular,
    load_text,
    save_schema,
    save_tabular,
    train_test_split,
)
from .engine import EngineConfig, Explainer, SensitivityResolver, auto_epsilon
from .errors import (
    AdapterDown,
    ConfigError,
    EmptyCorpus,
    FairgaError,
    MalformedRow,
    MalformedTriple,
    ProtocolViolation,
)
from .explain import ExplainerConfig, fit_surrogate
from .knowledge import (
    DEFAULT_EMBEDDINGS_PATH,
    DEFAULT_GRAPH_PATH,
    EmbeddingStore,
    load_graph,
)
from .model import TrainConfig, external_predictor, load_model, save_model, train
from .records import read_records, reverify_records, write_records
from .report import write_comparison, write_report
from .retrain import RetrainConfig, retrain_and_evaluate, split_for_retraining
from .synth import census_shaped_benchmark, planted_benchmark

log = logging.getLogger(__name__)

EXIT_CONFIG = 1
EXIT_IO = 2


def _load_dataset(data_path: str, schema) -> Dataset:
    if schema.is_text:
        return load_text(data_path, schema)
    return load_tabular(data_path, schema)


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", default="logistic", choices=["logistic", "mlp", "bow"])
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--learning-rate", type=float, default=0.1)
    parser.add_argument("--layers", type=int, default=2)
    parser.add_argument("--neurons", type=int, default=32)
    parser.add_argument("--vocab-size", type=int, default=2000)


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(
        kind=args.model,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        rng_seed=seed,
        layers=args.layers,
        neurons=args.neurons,
        vocab_size=args.vocab_size,
    )


def cmd_train(args) -> int:
    schema = load_schema(args.schema)
    dataset = _load_dataset(args.data, schema)
    model = train(dataset, _train_config(args, args.seed))
    save_model(model, args.out)
    print(f"trained {args.model} model: training accuracy {model.train_accuracy:.4f}")
    print(f"model written to {args.out}")
    return 0


def _effective_test_config(args) -> dict:
    """Resolve flags and per-mode defaults into the run_config mapping."""
    if args.run_config:
        with open(args.run_config, encoding="utf-8") as fh:
            return json.load(fh)
    schema = load_schema(args.schema)
    is_text = schema.is_text
    cr = args.cr if args.cr is not None else (0.5 if is_text else 0.9)
    mr = args.mr if args.mr is not None else 0.05
    generations = args.generations
    budget_seconds = args.budget_seconds
    budget_checks = args.budget_checks
    if generations is None and budget_seconds is None and budget_checks is None:
        if is_text:
            generations = 20
        else:
            budget_seconds = 3600.0
    protected = args.protected.split(",") if args.protected else sorted(schema.protected)
    return {
        "data": args.data,
        "schema": args.schema,
        "model_file": args.model_file,
        "external": args.external,
        "protected": protected,
        "epsilon": args.epsilon,
        "seed_num": args.seed_num,
        "cr": cr,
        "mr": mr,
        "generations": generations,
        "budget_seconds": budget_seconds,
        "budget_checks": budget_checks,
        "k": args.k,
        "mode": args.mode,
        "seed": args.seed,
        "workers": args.workers,
        "graph": args.graph,
        "embeddings": args.embeddings,
        "n_perturb": args.n_perturb,
    }


def cmd_test(args) -> int:
    config = _effective_test_config(args)
    schema = load_schema(config["schema"])
    dataset = _load_dataset(config["data"], schema)
    graph = load_graph(config["graph"]) if config.get("graph") else load_graph(DEFAULT_GRAPH_PATH)
    store = None
    if schema.is_text:
        path = config.get("embeddings") or str(DEFAULT_EMBEDDINGS_PATH)
        store = EmbeddingStore.from_file(path)

    if config.get("model_file"):
        model = load_model(config["model_file"], schema)
    elif config.get("external"):
        model = external_predictor(config["external"], schema, workers=config.get("workers", 1))
    else:
        raise ConfigError("one of --model-file / --external is required")

    config.setdefault("protected", sorted(schema.protected))
    config.setdefault("epsilon", "auto")
    config.setdefault("mode", "ga")
    resolver = SensitivityResolver(schema, config["protected"], graph)
    explainer = Explainer(
        schema,
        ExplainerConfig(n_perturb=config.get("n_perturb", 1000), rng_seed=config.get("seed", 0)),
    )

    epsilon = config["epsilon"]
    if epsilon == "auto":
        epsilon = auto_epsilon(dataset, model, explainer, resolver, rng_seed=config["seed"])
        log.info("auto epsilon resolved to %d", epsilon)
        print(f"epsilon (auto): {epsilon}")
        config["epsilon_was_auto"] = True
    else:
        epsilon = int(epsilon)
    config["epsilon"] = epsilon

    engine_config = EngineConfig(
        epsilon=epsilon,
        seed_num=config.get("seed_num", 100),
        max_generations=config.get("generations"),
        time_budget=config.get("budget_seconds"),
        max_checks=config.get("budget_checks"),
        cr=config.get("cr", 0.9),
        mr=config.get("mr", 0.05),
        k=config.get("k", 20),
        rng_seed=config.get("seed", 0),
        mode=config.get("mode", "ga"),
    )
    records, metrics = engine_mod.run(
        dataset, config["protected"], model, explainer, engine_config, resolver, store
    )
    model.close()

    out = Path(args.out)
    config["out"] = str(out)
    out.mkdir(parents=True, exist_ok=True)
    write_records(records, schema, out / "records.csv")
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "tsn": metrics.tsn,
                "dsn": metrics.dsn,
                "elapsed": metrics.elapsed,
                "dss": metrics.dss,
                "sur": metrics.sur,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    with open(out / "run_config.json", "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2)
        fh.write("\n")
    dss_text = f"{metrics.dss:.4f}" if metrics.dss is not None else "-"
    print(
        f"mode={config['mode']} tsn={metrics.tsn} dsn={metrics.dsn} "
        f"sur={metrics.sur:.4f} dss={dss_text} elapsed={metrics.elapsed:.2f}s"
    )
    print(f"run artifacts written to {out}")
    return 0


def cmd_verify(args) -> int:
    schema = load_schema(args.schema)
    graph = load_graph(args.graph) if args.graph else load_graph(DEFAULT_GRAPH_PATH)
    protected = args.protected.split(",") if args.protected else sorted(schema.protected)
    resolver = SensitivityResolver(schema, protected, graph)
    model = load_model(args.model_file, schema)
    records = read_records(args.records, schema, resolver)
    failures = reverify_records(records, model, schema, resolver)
    if failures:
        for failure in failures:
            print(failure, file=sys.stderr)
        print(f"{len(failures)} verification failures in {len(records)} records")
        return EXIT_CONFIG
    print(f"all {len(records)} records re-verified")
    return 0


def cmd_explain(args) -> int:
    schema = load_schema(args.schema)
    dataset = _load_dataset(args.data, schema)
    model = load_model(args.model_file, schema)
    if not 0 <= args.index < len(dataset):
        raise ConfigError(f"--index {args.index} outside dataset of {len(dataset)} rows")
    sample = dataset.samples[args.index]
    label = int(np.argmax(model.predict_proba(sample)))
    explanation = fit_surrogate(
        sample, model, label, schema, ExplainerConfig(rng_seed=args.seed), stream=args.index
    )
    print(f"sample {args.index}: predicted label {model.labels[label]}")
    for rank, (position, score) in enumerate(explanation.entries, start=1):
        name = sample.values[position] if schema.is_text else schema.features[position].name
        print(f"{rank:3d}  {name:<24} {score:+.6f}")
    return 0


def cmd_retrain(args) -> int:
    schema = load_schema(args.schema)
    dataset = _load_dataset(args.data, schema)
    graph = load_graph(args.graph) if args.graph else load_graph(DEFAULT_GRAPH_PATH)
    protected = args.protected.split(",") if args.protected else sorted(schema.protected)
    resolver = SensitivityResolver(schema, protected, graph)
    store = None
    if schema.is_text:
        path = args.embeddings or str(DEFAULT_EMBEDDINGS_PATH)
        store = EmbeddingStore.from_file(path)
    records = read_records(args.records, schema, resolver)
    train_rows = len(train_test_split(dataset, args.test_fraction, args.seed)[0])
    aug_records, holdout = split_for_retraining(
        train_rows, records, args.fraction, schema.is_text, rng_seed=args.seed
    )
    config = RetrainConfig(
        fraction=args.fraction,
        train=_train_config(args, args.seed),
        engine=EngineConfig(
            epsilon=args.epsilon,
            seed_num=args.seed_num,
            max_generations=args.generations,
            max_checks=args.budget_checks,
            rng_seed=args.seed,
        ),
        explainer=ExplainerConfig(n_perturb=args.n_perturb, rng_seed=args.seed),
        test_fraction=args.test_fraction,
        rng_seed=args.seed,
    )
    report = retrain_and_evaluate(dataset, aug_records, holdout, config, resolver, store)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "fairness_report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    d = report.to_dict()
    print(
        f"accuracy {d['normal_accuracy']['before']:.4f} -> {d['normal_accuracy']['after']:.4f}; "
        f"holdout discriminatory {d['discriminatory_percentage']['before']:.2%} -> "
        f"{d['discriminatory_percentage']['after']:.2%}; "
        f"sur {d['sur']['before']:.4f} -> {d['sur']['after']:.4f}"
    )
    print(f"fairness report written to {out / 'fairness_report.json'}")
    return 0


def cmd_compare(args) -> int:
    written = write_comparison(args.runs_a, args.runs_b, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_report(args) -> int:
    written = write_report(args.runs, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.benchmark == "planted":
        schema, dataset, model = planted_benchmark(rng_seed=args.seed, n_samples=args.n_samples)
        save_model(model, out / "model.json")
    else:
        schema, dataset = census_shaped_benchmark(rng_seed=args.seed, n_samples=args.n_samples)
    save_schema(schema, out / "schema.json")
    save_tabular(dataset, out / "data.csv")
    print(f"synthetic {args.benchmark} benchmark written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairga",
        description="Individual-fairness testing: explanation-guided genetic search "
        "for discriminatory inputs of black-box classifiers.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a built-in classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("test", help="search a model for discriminatory inputs")
    p.add_argument("--data")
    p.add_argument("--schema")
    p.add_argument("--model-file")
    p.add_argument("--external", help="adapter command line or host:port")
    p.add_argument("--protected", help="comma-separated protected attributes")
    p.add_argument("--epsilon", default="auto", help="rank threshold, or 'auto'")
    p.add_argument("--seed-num", type=int, default=100)
    p.add_argument("--cr", type=float, default=None)
    p.add_argument("--mr", type=float, default=None)
    p.add_argument("--generations", type=int, default=None)
    p.add_argument("--budget-seconds", type=float, default=None)
    p.add_argument("--budget-checks", type=int, default=None)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--mode", default="ga", choices=["ga", "random"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--graph")
    p.add_argument("--embeddings")
    p.add_argument("--n-perturb", type=int, default=1000)
    p.add_argument("--run-config", help="replay a recorded run_config.json")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("verify", help="re-verify a records.csv against a model file")
    p.add_argument("--records", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--model-file", required=True)
    p.add_argument("--protected")
    p.add_argument("--graph")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("explain", help="print the ranked explanation of one row")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--model-file", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("retrain", help="augment with found records and retrain")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--fraction", type=float, default=0.1)
    _add_train_flags(p)
    p.add_argument("--protected")
    p.add_argument("--graph")
    p.add_argument("--embeddings")
    p.add_argument("--epsilon", type=int, default=5)
    p.add_argument("--seed-num", type=int, default=100)
    p.add_argument("--generations", type=int, default=20)
    p.add_argument("--budget-checks", type=int, default=None)
    p.add_argument("--n-perturb", type=int, default=1000)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("compare", help="statistical comparison of two run groups")
    p.add_argument("--runs-a", nargs="+", required=True)
    p.add_argument("--runs-b", nargs="+", required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="aggregate tables and figures for run dirs")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a synthetic benchmark")
    p.add_argument("--benchmark", choices=["planted", "census"], default="planted")
    p.add_argument("--n-samples", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (AdapterDown, ProtocolViolation, MalformedRow, MalformedTriple, EmptyCorpus) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FairgaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
