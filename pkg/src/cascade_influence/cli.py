"""Command line interface: one binary, subcommand per pipeline stage.

stdout carries machine-readable payloads only (JSON objects, key=value
summary lines); human-facing progress goes to stderr. Exit codes: 0 ok,
2 usage, 3 data validation, 4 numeric failure.

The environment variable CASCADE_INFLUENCE_SEED overrides the default
master seed of every subcommand that takes one.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import cascade_io, degrade, experiments, influence_tests, netgraph, ranker
from .exceptions import ConfigError, DataValidationError, NumericError
from .hawkes import HawkesParams, branching_proxy, simulate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

SEED_ENV_VAR = "CASCADE_INFLUENCE_SEED"


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise DataValidationError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from exc


def _fmt(x: float) -> str:
    return np.format_float_positional(float(x), unique=True, trim="0")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascade-influence",
        description=(
            "Simulate network event cascades, train next-node rankers, and "
            "run social-influence tests. Set " + SEED_ENV_VAR + " to override "
            "the default seed of any subcommand."
        ),
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser(
        "gen-net", help="generate a synthetic directed network", formatter_class=fmt
    )
    p.add_argument("--kind", default="erdos_renyi_directed",
                   choices=["erdos_renyi_directed", "preferential_attachment"],
                   help="generator family")
    p.add_argument("--nodes", type=int, default=300, help="number of nodes before pruning")
    p.add_argument("--param", type=float, default=0.01,
                   help="edge probability (ER) or attachment count (PA)")
    p.add_argument("--seed", type=int, default=None,
                   help="generator seed (default: env or 0)")
    p.add_argument("--out", required=True, help="edge list output path")

    p = sub.add_parser(
        "simulate", help="draw a Hawkes cascade over a network", formatter_class=fmt
    )
    p.add_argument("--net", required=True, help="edge list path")
    p.add_argument("--a", type=float, default=0.0, help="self-excitation")
    p.add_argument("--b", type=float, default=0.0, help="social excitation on edges")
    p.add_argument("--beta", type=float, default=0.0, help="homophily strength")
    p.add_argument("--eta", type=float, default=-5.0, help="base-rate offset")
    p.add_argument("--omega", type=float, default=1.0, help="kernel bandwidth")
    p.add_argument("--length", type=int, default=1500, help="number of events to draw")
    p.add_argument("--seed", type=int, default=None, help="simulation seed (default: env or 0)")
    p.add_argument("--embedding-dim", type=int, default=8, help="spectral embedding size")
    p.add_argument("--allow-supercritical", action="store_true", default=False,
                   help="simulate even when the branching proxy is >= 1")
    p.add_argument("--out", required=True, help="cascade CSV output path")

    p = sub.add_parser(
        "embed", help="write Laplacian spectral embeddings", formatter_class=fmt
    )
    p.add_argument("--net", required=True, help="edge list path")
    p.add_argument("--dim", type=int, default=8, help="number of eigenvectors")
    p.add_argument("--out", required=True, help="embedding CSV output path")

    p = sub.add_parser(
        "train", help="train a next-node ranker on a cascade", formatter_class=fmt
    )
    p.add_argument("--net", required=True, help="edge list path")
    p.add_argument("--cascade", required=True, help="cascade CSV path")
    p.add_argument("--omega", type=float, default=1.0, help="kernel bandwidth")
    p.add_argument("--social", action=argparse.BooleanOptionalAction, default=True,
                   help="include the social exposure feature (m1 vs m0)")
    p.add_argument("--self-feature", action=argparse.BooleanOptionalAction, default=True,
                   help="include the self-excitation feature")
    p.add_argument("--per-node-bias", action="store_true", default=False,
                   help="learn a per-node bias term")
    p.add_argument("--covariates", default=None, help="optional covariates CSV path")
    p.add_argument("--match-attrs", default="",
                   help="comma list of covariate names used as match features")
    p.add_argument("--learning-rate", type=float, default=0.05, help="SGD step size")
    p.add_argument("--hidden", type=int, default=16, help="MLP hidden width")
    p.add_argument("--embedding-dim", type=int, default=8, help="spectral embedding size")
    p.add_argument("--train-fraction", type=float, default=1.0,
                   help="leading fraction of the cascade used for training")
    p.add_argument("--seed", type=int, default=None, help="training seed (default: env or 0)")
    p.add_argument("--out", required=True, help="model checkpoint output path")

    p = sub.add_parser(
        "rank-eval", help="evaluate a trained ranker with MRR", formatter_class=fmt
    )
    p.add_argument("--model", required=True, help="model checkpoint path")
    p.add_argument("--net", required=True, help="edge list path")
    p.add_argument("--cascade", required=True, help="cascade CSV path")
    p.add_argument("--test-start", type=float, default=0.7,
                   help="fraction of the cascade where the test range starts")
    p.add_argument("--per-event-out", default=None,
                   help="optional CSV path for per-event reciprocal ranks")

    p = sub.add_parser(
        "test-influence", help="run one social-influence test", formatter_class=fmt
    )
    p.add_argument("--method", required=True, choices=["ranker", "hp", "shuffle"],
                   help="which hypothesis test to run")
    p.add_argument("--net", required=True, help="edge list path")
    p.add_argument("--cascade", required=True, help="cascade CSV path")
    p.add_argument("--omega", type=float, default=1.0, help="kernel bandwidth used by the test")
    p.add_argument("--split", type=float, default=0.7,
                   help="train fraction for the ranker test")
    p.add_argument("--n-resamples", type=int, default=None,
                   help="permutations / shuffles (default: 2000 ranker, 1000 shuffle)")
    p.add_argument("--embedding-dim", type=int, default=8, help="spectral embedding size")
    p.add_argument("--learning-rate", type=float, default=0.05,
                   help="ranker-test SGD step size")
    p.add_argument("--seed", type=int, default=None, help="test seed (default: env or 0)")

    p = sub.add_parser(
        "experiment", help="run one of the four synthetic studies", formatter_class=fmt
    )
    p.add_argument("--config", required=True, help="config file path")
    p.add_argument("--which", required=True,
                   choices=list(experiments.EXPERIMENTS), help="which study to run")
    p.add_argument("--resume", action="store_true", default=False,
                   help="skip cells already present in the journal")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel workers (default: config value)")
    p.add_argument("--output-dir", default=None,
                   help="override the config output directory")

    p = sub.add_parser(
        "degrade", help="apply a missing-data transform to a cascade", formatter_class=fmt
    )
    p.add_argument("--cascade", required=True, help="cascade CSV path")
    p.add_argument("--mode", required=True, choices=["random", "doubly_censored"],
                   help="drop events at random or censor both ends")
    p.add_argument("--rate", type=float, default=0.99, help="fraction of events removed")
    p.add_argument("--seed", type=int, default=None,
                   help="seed for random drops (default: env or 0)")
    p.add_argument("--out", required=True, help="degraded cascade output path")

    return parser


def _seed_or_env(value) -> int:
    return _default_seed() if value is None else int(value)


def _load_net_and_embedding(net_path: str, dim: int):
    net = netgraph.load_network(net_path)
    embedding = netgraph.spectral_embedding(net, min(dim, net.node_count - 1))
    return net, embedding


def _cmd_gen_net(args) -> int:
    net = netgraph.generate_network(
        args.kind, args.nodes, args.param, _seed_or_env(args.seed)
    )
    netgraph.save_network(net, args.out)
    print(f"nodes={net.node_count} edges={net.edge_count}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    net, embedding = _load_net_and_embedding(args.net, args.embedding_dim)
    params = HawkesParams(a=args.a, b=args.b, beta=args.beta, eta=args.eta,
                          omega=args.omega)
    cascade = simulate(
        params, net, embedding, args.length, _seed_or_env(args.seed),
        allow_supercritical=args.allow_supercritical,
    )
    cascade_io.write_cascade(cascade, args.out)
    ratio = branching_proxy(params, net)
    print(f"events={len(cascade)} horizon={_fmt(cascade.horizon)} branching={_fmt(ratio)}")
    return EXIT_OK


def _cmd_embed(args) -> int:
    net, embedding = _load_net_and_embedding(args.net, args.dim)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("node," + ",".join(f"e{k}" for k in range(embedding.dim)) + "\n")
        for node in range(net.node_count):
            row = ",".join(_fmt(x) for x in embedding.vectors[node])
            fh.write(f"{node},{row}\n")
    print(f"nodes={net.node_count} dim={embedding.dim}")
    return EXIT_OK


def _cmd_train(args) -> int:
    net, embedding = _load_net_and_embedding(args.net, args.embedding_dim)
    if args.covariates:
        net = cascade_io.attach_covariates(net, cascade_io.read_covariates(args.covariates))
    match_attrs = tuple(a for a in args.match_attrs.split(",") if a)
    cfg = ranker.FeatureConfig(
        use_social=args.social,
        use_self=args.self_feature,
        covariate_match_attrs=match_attrs,
        use_per_node_bias=args.per_node_bias,
        omega=args.omega,
    )
    cascade = cascade_io.read_cascade(args.cascade)
    if not 0.0 < args.train_fraction <= 1.0:
        raise DataValidationError("train fraction must be in (0, 1]")
    train_len = max(1, int(args.train_fraction * len(cascade)))
    seed = _seed_or_env(args.seed)
    model = ranker.init_model(embedding, cfg, seed=seed, hidden=args.hidden)
    schedule = ranker.TrainSchedule(learning_rate=args.learning_rate, seed=seed)
    trained = ranker.train(model, cfg, net, cascade.slice(0, train_len), schedule)
    ranker.save_model(trained, cfg, args.out)
    print(f"trained_events={train_len} seed={seed}")
    return EXIT_OK


def _cmd_rank_eval(args) -> int:
    model, cfg = ranker.load_model(args.model)
    net = netgraph.load_network(args.net)
    cascade = cascade_io.read_cascade(args.cascade)
    if not 0.0 <= args.test_start < 1.0:
        raise DataValidationError("test start fraction must be in [0, 1)")
    start = int(args.test_start * len(cascade))
    rr = ranker.evaluate_mrr(model, cfg, net, cascade, (start, len(cascade)))
    if args.per_event_out:
        with open(args.per_event_out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("event_index,reciprocal_rank\n")
            for offset, value in enumerate(rr):
                fh.write(f"{start + offset},{_fmt(value)}\n")
    print(json.dumps({"mrr": float(rr.mean()), "n_test_events": int(rr.size)}))
    return EXIT_OK


def _cmd_test_influence(args) -> int:
    cascade = cascade_io.read_cascade(args.cascade)
    seed = _seed_or_env(args.seed)
    if args.method == "shuffle":
        # no embedding needed; edgeless networks are fine here
        net = netgraph.load_network(args.net)
        n_shuffles = args.n_resamples or influence_tests.DEFAULT_N_SHUFFLES
        report = influence_tests.shuffle_test(
            net, cascade, n_shuffles=n_shuffles, seed=seed
        )
    elif args.method == "ranker":
        net, embedding = _load_net_and_embedding(args.net, args.embedding_dim)
        n_perm = args.n_resamples or influence_tests.DEFAULT_N_PERM
        report = influence_tests.ranker_influence_test(
            net, embedding, cascade, split=args.split, seed=seed,
            n_perm=n_perm, omega=args.omega, learning_rate=args.learning_rate,
        )
    else:
        net, embedding = _load_net_and_embedding(args.net, args.embedding_dim)
        report = influence_tests.hp_influence_test(net, embedding, cascade, args.omega)
    print(report.to_json())
    return EXIT_OK


def _cmd_experiment(args) -> int:
    cfg = cascade_io.load_config(args.config)
    if os.environ.get(SEED_ENV_VAR) is not None:
        cfg = replace(cfg, master_seed=_default_seed())
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    if args.output_dir is not None:
        cfg = replace(cfg, output_dir=args.output_dir)
    table = experiments.run_experiment(
        cfg, args.which, resume=args.resume, write_outputs=True,
        progress=lambda msg: print(msg, file=sys.stderr),
    )
    out_dir = os.path.join(cfg.output_dir, args.which)
    print(json.dumps({
        "experiment": args.which,
        "rows": len(table.rows),
        "detail": os.path.join(out_dir, "detail.csv"),
        "summary": os.path.join(out_dir, "summary.csv"),
    }))
    return EXIT_OK


def _cmd_degrade(args) -> int:
    cascade = cascade_io.read_cascade(args.cascade)
    if args.mode == "random":
        result = degrade.drop_random(cascade, args.rate, _seed_or_env(args.seed))
    else:
        result = degrade.censor(cascade, args.rate)
    cascade_io.write_cascade(result, args.out)
    print(f"events={len(result)} horizon={_fmt(result.horizon)}")
    return EXIT_OK


_HANDLERS = {
    "gen-net": _cmd_gen_net,
    "simulate": _cmd_simulate,
    "embed": _cmd_embed,
    "train": _cmd_train,
    "rank-eval": _cmd_rank_eval,
    "test-influence": _cmd_test_influence,
    "experiment": _cmd_experiment,
    "degrade": _cmd_degrade,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "details": exc.errors}), file=sys.stderr)
        return EXIT_DATA
    except (DataValidationError, OSError) as exc:
        print(json.dumps({"error": "data", "details": str(exc)}), file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(json.dumps({"error": "numeric", "details": str(exc)}), file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
