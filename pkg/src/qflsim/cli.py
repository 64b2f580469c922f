"""Command-line driver for dataset generation and the training experiments.

Commands:
    gen-data        write a federated dataset file
    train           one federated training run on an existing dataset
    sweep-clients   client-count series (1 centralized, 6, 12, 18, 24, 30)
    sweep-datasize  per-client dataset-size series, federated vs centralized
    compare-iid     same run on an IID and a half-truncated-normal dataset
    error-bars      repeat one run across seeds, report spread

Every command appends line-delimited JSON rows to its --out file (see
qflsim.metrics) and is fully determined by its flags and seeds, apart
from wall_time. Exit codes: 0 success, 2 configuration error, 3 I/O or
dataset-format error, 4 training error.
"""

import argparse
import sys
import time

import numpy as np

from . import metrics
from .datagen import GenConfig, generate_federated_dataset
from .errors import ConfigError, DatasetFormatError, QflError, TrainingError
from .federated import (
    OptimizerConfig,
    TrainConfig,
    centralized_train,
    run_training,
)
from .model import build_architecture
from .store import read_dataset, write_dataset

CLIENT_SWEEP_SPLITS = ((1, 1, 0), (6, 4, 2), (12, 9, 3), (18, 14, 4),
                       (24, 19, 5), (30, 25, 5))
DEFAULT_DATASIZES = (40, 80, 160, 320)

# Seed-derivation namespace for per-sweep-point datasets.
_DERIVE_NS = 2


def _derived_seed(base_seed: int, *keys: int) -> int:
    ss = np.random.SeedSequence([int(base_seed), _DERIVE_NS, *map(int, keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _add_gen_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--clients", type=int, default=30)
    parser.add_argument("--samples-per-client", type=int, default=160)
    parser.add_argument("--qubits", type=int, default=8)
    parser.add_argument("--sigma", type=float, default=None,
                        help="truncated-normal sigma in radians")
    parser.add_argument("--threshold", type=float, default=None,
                        help="excitation threshold in radians")


def _add_train_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--optimizer", default="adam",
                        choices=("sgd", "adam", "rmsprop"))
    parser.add_argument("--lr", type=float, default=0.02)
    parser.add_argument("--rounds", type=int, default=30)
    parser.add_argument("--epochs", type=int, default=1)
    parser.add_argument("--batch-size", type=int, default=16)


def _gen_config(args, n_clients=None, samples=None, seed=None) -> GenConfig:
    kwargs = {}
    if getattr(args, "sigma", None) is not None:
        kwargs["trunc_normal_sigma"] = args.sigma
    if getattr(args, "threshold", None) is not None:
        kwargs["excitation_threshold"] = args.threshold
    return GenConfig(
        n_clients=n_clients if n_clients is not None else args.clients,
        n_qubits=args.qubits,
        samples_per_client=samples if samples is not None else args.samples_per_client,
        seed=seed if seed is not None else args.seed,
        **kwargs,
    )


def _opt_config(args) -> OptimizerConfig:
    return OptimizerConfig(kind=args.optimizer, learning_rate=args.lr)


def _split_ids(dataset, n_train: int, n_test: int) -> tuple[tuple, tuple]:
    ids = dataset.client_ids()
    if n_train < 1 or n_test < 1:
        raise ConfigError("need at least one training and one testing client")
    if n_train + n_test > len(ids):
        raise ConfigError(
            f"split {n_train}/{n_test} needs more clients than the dataset "
            f"has ({len(ids)})"
        )
    return ids[:n_train], ids[len(ids) - n_test:]


def _round_row(experiment: str, seed: int, record, t0: float, context: dict) -> dict:
    row = {
        "kind": "round",
        "experiment": experiment,
        "seed": seed,
        "round": record.round,
        "test_accuracy": record.test_accuracy,
        "test_mse": record.test_mse,
        "wall_time": time.perf_counter() - t0,
    }
    if record.train_accuracy is not None:
        row["train_accuracy"] = record.train_accuracy
        row["train_mse"] = record.train_mse
    row.update(context)
    return row


def _run_logged(dataset, cfg: TrainConfig, out_path, experiment: str,
                context: dict, centralized_client=None):
    t0 = time.perf_counter()

    def on_round(record, _server):
        metrics.append_rows(out_path, [_round_row(
            experiment, cfg.seed, record, t0, context)])

    if centralized_client is None:
        return run_training(dataset, cfg, on_round=on_round)
    return centralized_train(centralized_client, dataset, cfg, on_round=on_round)


def cmd_gen_data(args) -> int:
    config = _gen_config(args)
    dataset = generate_federated_dataset(config, args.non_iid_fraction)
    info = write_dataset(dataset, args.out)
    n_samples = sum(info.sample_counts)
    n_excited = sum(
        s.label for client in dataset.clients for s in client.samples
    )
    balance = n_excited / n_samples if n_samples else 0.0
    print(f"wrote {args.out}: {info.n_clients} clients x "
          f"{config.samples_per_client} samples, "
          f"label balance {balance:.3f}, checksum {info.checksum}")
    return 0


def cmd_train(args) -> int:
    dataset = read_dataset(args.dataset)
    train_ids, test_ids = _split_ids(dataset, args.train_clients, args.test_clients)
    arch = None
    if args.stages is not None or args.readout_qubit is not None or args.fc:
        arch = build_architecture(dataset.gen_config.n_qubits, args.stages,
                                  args.readout_qubit, include_fc=args.fc)
    cfg = TrainConfig(
        rounds=args.rounds, train_clients=train_ids, test_clients=test_ids,
        epochs=args.epochs, batch_size=args.batch_size, opt=_opt_config(args),
        seed=args.seed, arch=arch,
    )
    experiment = (f"train-seed{args.seed}-{args.optimizer}-lr{args.lr:g}"
                  f"-r{args.rounds}")
    context = {
        "optimizer": args.optimizer, "lr": args.lr,
        "train_clients": len(train_ids), "test_clients": len(test_ids),
        "rounds": args.rounds, "epochs": args.epochs,
        "batch_size": args.batch_size,
    }
    t0 = time.perf_counter()
    records = _run_logged(dataset, cfg, args.out, experiment, context)
    final = records[-1]
    metrics.append_rows(args.out, [{
        "kind": "summary", "experiment": experiment, "seed": args.seed,
        "final_test_accuracy": final.test_accuracy,
        "final_test_mse": final.test_mse,
        "wall_time": time.perf_counter() - t0,
        **context,
    }])
    print(f"final round={final.round} test_accuracy={final.test_accuracy:.4f} "
          f"test_mse={final.test_mse:.6f}")
    return 0


def cmd_sweep_clients(args) -> int:
    dataset = read_dataset(args.dataset)
    ids = dataset.client_ids()
    max_k = max(total for total, _tr, _te in CLIENT_SWEEP_SPLITS)
    if len(ids) < max_k:
        raise ConfigError(
            f"sweep needs {max_k} clients, dataset has {len(ids)}"
        )
    experiment = f"sweep-clients-seed{args.seed}-{args.optimizer}-lr{args.lr:g}"
    for total, n_train, n_test in CLIENT_SWEEP_SPLITS:
        centralized = total == 1
        if centralized:
            # Single-client baseline: train on the first client, evaluate
            # on the standard 5-client test block of the 30-client split.
            train_ids = ids[:1]
            test_ids = ids[25:30]
        else:
            train_ids = ids[:n_train]
            test_ids = ids[total - n_test:total]
        cfg = TrainConfig(
            rounds=args.rounds, train_clients=train_ids, test_clients=test_ids,
            epochs=args.epochs, batch_size=args.batch_size,
            opt=_opt_config(args), seed=args.seed,
        )
        context = {
            "n_clients": total, "train_clients": len(train_ids),
            "test_clients": len(test_ids), "optimizer": args.optimizer,
            "lr": args.lr, "centralized": centralized,
        }
        t0 = time.perf_counter()
        records = _run_logged(
            dataset, cfg, args.out, experiment, context,
            centralized_client=dataset.clients[0] if centralized else None,
        )
        final = records[-1]
        metrics.append_rows(args.out, [{
            "kind": "summary", "experiment": experiment, "seed": args.seed,
            "final_test_accuracy": final.test_accuracy,
            "final_test_mse": final.test_mse,
            "wall_time": time.perf_counter() - t0,
            **context,
        }])
        print(f"clients={total:2d} train={len(train_ids):2d} "
              f"test={len(test_ids)} final_accuracy={final.test_accuracy:.4f}")
    return 0


def cmd_sweep_datasize(args) -> int:
    sizes = tuple(int(s) for s in args.sizes.split(","))
    experiment = f"sweep-datasize-seed{args.seed}-{args.optimizer}-lr{args.lr:g}"
    for size in sizes:
        if size % args.qubits != 0:
            raise ConfigError(
                f"per-client size {size} is not divisible by {args.qubits} qubits"
            )
        seed = _derived_seed(args.seed, size)
        dataset = generate_federated_dataset(
            _gen_config(args, samples=size, seed=seed))
        train_ids, test_ids = _split_ids(dataset, args.train_clients,
                                         args.test_clients)
        for centralized in (False, True):
            cfg = TrainConfig(
                rounds=args.rounds,
                train_clients=train_ids[:1] if centralized else train_ids,
                test_clients=test_ids,
                epochs=args.epochs, batch_size=args.batch_size,
                opt=_opt_config(args), seed=seed,
            )
            context = {
                "samples_per_client": size, "centralized": centralized,
                "optimizer": args.optimizer, "lr": args.lr,
                "train_clients": len(cfg.train_clients),
                "test_clients": len(test_ids),
            }
            t0 = time.perf_counter()
            records = _run_logged(
                dataset, cfg, args.out, experiment, context,
                centralized_client=dataset.clients[0] if centralized else None,
            )
            final = records[-1]
            metrics.append_rows(args.out, [{
                "kind": "summary", "experiment": experiment, "seed": seed,
                "final_test_accuracy": final.test_accuracy,
                "final_test_mse": final.test_mse,
                "wall_time": time.perf_counter() - t0,
                **context,
            }])
            mode = "centralized" if centralized else "federated"
            print(f"size={size:4d} {mode:11s} "
                  f"final_accuracy={final.test_accuracy:.4f}")
    return 0


def cmd_compare_iid(args) -> int:
    config = _gen_config(args)
    experiment = f"compare-iid-seed{args.seed}-{args.optimizer}-lr{args.lr:g}"
    for tag, fraction in (("iid", 0.0), ("non_iid", args.non_iid_fraction)):
        dataset = generate_federated_dataset(config, fraction)
        train_ids, test_ids = _split_ids(dataset, args.train_clients,
                                         args.test_clients)
        cfg = TrainConfig(
            rounds=args.rounds, train_clients=train_ids, test_clients=test_ids,
            epochs=args.epochs, batch_size=args.batch_size,
            opt=_opt_config(args), seed=args.seed,
        )
        context = {"dataset": tag, "non_iid_fraction": fraction,
                   "optimizer": args.optimizer, "lr": args.lr}
        t0 = time.perf_counter()
        records = _run_logged(dataset, cfg, args.out, experiment, context)
        final = records[-1]
        metrics.append_rows(args.out, [{
            "kind": "summary", "experiment": experiment, "seed": args.seed,
            "final_test_accuracy": final.test_accuracy,
            "final_test_mse": final.test_mse,
            "final_test_mse_x100": 100.0 * final.test_mse,
            "wall_time": time.perf_counter() - t0,
            **context,
        }])
        print(f"{tag:8s} accuracy={final.test_accuracy:.4f} "
              f"mse={final.test_mse:.6f} mse_x100={100 * final.test_mse:.3f}")
    return 0


def cmd_error_bars(args) -> int:
    seeds = tuple(int(s) for s in args.seeds.split(","))
    if len(seeds) < 3:
        raise ConfigError(f"need at least 3 seeds, got {len(seeds)}")
    experiment = f"error-bars-{args.optimizer}-lr{args.lr:g}"
    finals = []
    for seed in seeds:
        dataset = generate_federated_dataset(_gen_config(args, seed=seed))
        train_ids, test_ids = _split_ids(dataset, args.train_clients,
                                         args.test_clients)
        cfg = TrainConfig(
            rounds=args.rounds, train_clients=train_ids, test_clients=test_ids,
            epochs=args.epochs, batch_size=args.batch_size,
            opt=_opt_config(args), seed=seed, eval_train=True,
        )
        context = {"optimizer": args.optimizer, "lr": args.lr}
        t0 = time.perf_counter()
        records = _run_logged(dataset, cfg, args.out, experiment, context)
        final = records[-1]
        finals.append(final)
        metrics.append_rows(args.out, [{
            "kind": "summary", "experiment": experiment, "seed": seed,
            "final_test_accuracy": final.test_accuracy,
            "final_test_mse": final.test_mse,
            "wall_time": time.perf_counter() - t0,
            **context,
        }])
        print(f"seed={seed} test_accuracy={final.test_accuracy:.4f} "
              f"train_accuracy={final.train_accuracy:.4f}")
    aggregate = {"kind": "summary", "experiment": experiment,
                 "wall_time": time.perf_counter() - t0,
                 "optimizer": args.optimizer, "lr": args.lr}
    for prefix, getter in (
        ("test_accuracy", lambda r: r.test_accuracy),
        ("test_mse", lambda r: r.test_mse),
        ("train_accuracy", lambda r: r.train_accuracy),
        ("train_mse", lambda r: r.train_mse),
    ):
        vals = [getter(r) for r in finals]
        aggregate[f"{prefix}_mean"] = float(np.mean(vals))
        aggregate[f"{prefix}_min"] = float(np.min(vals))
        aggregate[f"{prefix}_max"] = float(np.max(vals))
        aggregate[f"{prefix}_spread"] = float(np.max(vals) - np.min(vals))
    metrics.append_rows(args.out, [aggregate])
    print(f"test_accuracy spread={aggregate['test_accuracy_spread']:.4f} "
          f"(mean {aggregate['test_accuracy_mean']:.4f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qflsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a federated dataset file")
    _add_gen_flags(p)
    p.add_argument("--non-iid-fraction", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default="dataset.qfd")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="one federated training run")
    p.add_argument("--dataset", required=True)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--train-clients", type=int, default=25)
    p.add_argument("--test-clients", type=int, default=5)
    p.add_argument("--stages", type=int, default=None)
    p.add_argument("--readout-qubit", type=int, default=None)
    p.add_argument("--fc", action="store_true",
                   help="append the 3-parameter fully connected layer")
    p.add_argument("--out", default="train_metrics.jsonl")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep-clients", help="client-count series")
    p.add_argument("--dataset", required=True)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default="sweep_clients_metrics.jsonl")
    p.set_defaults(func=cmd_sweep_clients)

    p = sub.add_parser("sweep-datasize", help="dataset-size series")
    _add_gen_flags(p)
    _add_train_flags(p)
    p.add_argument("--sizes", default=",".join(str(s) for s in DEFAULT_DATASIZES))
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--train-clients", type=int, default=25)
    p.add_argument("--test-clients", type=int, default=5)
    p.add_argument("--out", default="sweep_datasize_metrics.jsonl")
    p.set_defaults(func=cmd_sweep_datasize)

    p = sub.add_parser("compare-iid", help="IID vs non-IID comparison")
    _add_gen_flags(p)
    _add_train_flags(p)
    p.add_argument("--non-iid-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--train-clients", type=int, default=25)
    p.add_argument("--test-clients", type=int, default=5)
    p.add_argument("--out", default="compare_iid_metrics.jsonl")
    p.set_defaults(func=cmd_compare_iid)

    p = sub.add_parser("error-bars", help="repeat one run across seeds")
    _add_gen_flags(p)
    _add_train_flags(p)
    p.add_argument("--seeds", default="1,2,3,4,5")
    p.add_argument("--train-clients", type=int, default=25)
    p.add_argument("--test-clients", type=int, default=5)
    p.add_argument("--out", default="error_bars_metrics.jsonl")
    p.set_defaults(func=cmd_error_bars)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DatasetFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (TrainingError, QflError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
