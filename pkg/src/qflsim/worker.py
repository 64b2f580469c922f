"""Subprocess entry point for a wire-protocol client.

Loads its own slice of a dataset file, connects to the given server and
trains whenever a round is broadcast:

    python -m qflsim.worker --host 127.0.0.1 --port 5000 \
        --dataset data.qfd --client-id client_003 --seed 7
"""

import argparse

import numpy as np

from .federated import ClientState, OptimizerConfig, OptimizerState
from .model import ModelEvaluator, build_model, default_architecture, init_params, parameter_names
from .store import read_dataset
from .transport import run_socket_client


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qflsim-worker", description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, required=True)
    parser.add_argument("--dataset", required=True)
    parser.add_argument("--client-id", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=1)
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--optimizer", default="adam",
                        choices=("sgd", "adam", "rmsprop"))
    parser.add_argument("--lr", type=float, default=0.02)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    dataset = read_dataset(args.dataset)
    client_data = dataset.client(args.client_id)
    ordinal = dataset.client_ids().index(args.client_id)
    arch = default_architecture(dataset.gen_config.n_qubits)
    model = build_model(arch)
    names = parameter_names(arch)
    params0 = init_params(arch, args.seed)
    client = ClientState(
        client_id=args.client_id,
        seed_key=ordinal,
        dataset=client_data,
        params=params0,
        opt_state=OptimizerState.zeros(len(names)),
        evaluator=ModelEvaluator(model, names),
        base_seed=args.seed,
    )
    opt = OptimizerConfig(kind=args.optimizer, learning_rate=args.lr)
    run_socket_client(args.host, args.port, client, args.epochs,
                      args.batch_size, opt)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
