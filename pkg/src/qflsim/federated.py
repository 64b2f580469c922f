"""Federated training loop: broadcast, local optimization, weighted averaging.

Each round the server broadcasts its parameters, every client resets to
them and runs seeded mini-batch gradient steps on its own data, and the
server replaces its parameters with the weighted mean of the returned
vectors (a unit-step move toward that mean is the mean itself, so no
separate server optimizer exists). Client optimizer moments persist
across rounds, which makes single-client federated training coincide
exactly with plain centralized training.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .datagen import ClientDataset, FederatedDataset
from .errors import ConfigError, TrainingError
from .model import (
    ArchitectureSpec,
    Model,
    ModelEvaluator,
    ParamVector,
    Sample,
    build_model,
    default_architecture,
    init_params,
    parameter_names,
)
from .store import params_checksum

OPTIMIZER_KINDS = ("sgd", "adam", "rmsprop")

# Seed-derivation namespaces; init_params uses 0.
_SHUFFLE_NS = 1


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 0.02
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    epsilon: float = 1e-7
    rmsprop_decay: float = 0.9

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer {self.kind!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


@dataclass
class OptimizerState:
    """Per-parameter moment accumulators plus the step counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n_params: int) -> "OptimizerState":
        return cls(np.zeros(n_params), np.zeros(n_params), 0)


def optimizer_step(state: OptimizerState, params: np.ndarray, grads: np.ndarray,
                   config: OptimizerConfig) -> tuple[np.ndarray, OptimizerState]:
    """One update step; returns the new parameter values and moments."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ConfigError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"moments {state.m.shape}"
        )
    lr = config.learning_rate
    t = state.step + 1
    if config.kind == "sgd":
        new = params - lr * grads
        return new, OptimizerState(state.m, state.v, t)
    if config.kind == "adam":
        m = config.adam_beta1 * state.m + (1 - config.adam_beta1) * grads
        v = config.adam_beta2 * state.v + (1 - config.adam_beta2) * grads**2
        m_hat = m / (1 - config.adam_beta1**t)
        v_hat = v / (1 - config.adam_beta2**t)
        new = params - lr * m_hat / (np.sqrt(v_hat) + config.epsilon)
        return new, OptimizerState(m, v, t)
    v = config.rmsprop_decay * state.v + (1 - config.rmsprop_decay) * grads**2
    new = params - lr * grads / np.sqrt(v + config.epsilon)
    return new, OptimizerState(state.m, v, t)


@dataclass
class ClientState:
    """One client's identity, data, parameters and optimizer moments.

    ``seed_key`` is the client's stable ordinal in the dataset; together
    with the run seed and a cumulative epoch counter it determines every
    batch shuffle, so runs are reproducible regardless of transport.
    """

    client_id: str
    seed_key: int
    dataset: ClientDataset
    params: ParamVector
    opt_state: OptimizerState
    evaluator: ModelEvaluator
    base_seed: int
    epochs_done: int = 0
    prep_states: np.ndarray = field(repr=False, default=None)
    labels: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.prep_states is None:
            self.prep_states = self.evaluator.prep_states(self.dataset.samples)
        if self.labels is None:
            self.labels = np.array(
                [s.label for s in self.dataset.samples], dtype=float
            )


@dataclass(frozen=True)
class ClientUpdate:
    client_id: str
    round: int
    params: ParamVector
    num_samples: int
    local_loss: float


@dataclass(frozen=True)
class ServerState:
    params: ParamVector
    round: int
    client_weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.client_weights, dtype=float)
        object.__setattr__(self, "client_weights", weights)
        if np.any(weights < 0):
            raise ConfigError("client weights must be nonnegative")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ConfigError("client weights must sum to 1")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    server_params_checksum: str
    client_losses: dict[str, float]
    test_accuracy: float
    test_mse: float
    train_accuracy: float | None = None
    train_mse: float | None = None


@dataclass(frozen=True)
class TrainConfig:
    rounds: int
    train_clients: tuple[str, ...]
    test_clients: tuple[str, ...]
    epochs: int = 1
    batch_size: int = 16
    opt: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    weights: tuple[float, ...] | None = None
    eval_train: bool = False
    arch: ArchitectureSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "train_clients", tuple(self.train_clients))
        object.__setattr__(self, "test_clients", tuple(self.test_clients))
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


def _shuffle_rng(base_seed: int, seed_key: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([int(base_seed), _SHUFFLE_NS, int(seed_key), int(epoch)])
    )


def local_train(client: ClientState, global_params: ParamVector, epochs: int,
                batch_size: int, opt: OptimizerConfig,
                round_index: int = 0) -> ClientUpdate:
    """Reset to the broadcast parameters, then run seeded mini-batch steps.

    Mutates the client's parameters, moments and epoch counter; returns
    the final parameters with the mean per-batch loss.
    """
    if epochs < 1:
        raise ConfigError("epochs must be >= 1")
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    n_samples = len(client.dataset.samples)
    if n_samples == 0:
        raise ConfigError(f"client {client.client_id} has no data")
    values = np.array(global_params.values, dtype=float)
    opt_state = client.opt_state
    losses = []
    for _ in range(epochs):
        order = _shuffle_rng(
            client.base_seed, client.seed_key, client.epochs_done
        ).permutation(n_samples)
        for start in range(0, n_samples, batch_size):
            idx = order[start:start + batch_size]
            loss, grad = client.evaluator.loss_and_gradient(
                client.prep_states[idx], client.labels[idx], values
            )
            values, opt_state = optimizer_step(opt_state, values, grad, opt)
            losses.append(loss)
        client.epochs_done += 1
    client.params = global_params.with_values(values)
    client.opt_state = opt_state
    return ClientUpdate(
        client_id=client.client_id,
        round=round_index,
        params=client.params,
        num_samples=n_samples,
        local_loss=float(np.mean(losses)),
    )


def federated_average(updates: Sequence, weights) -> ParamVector:
    """Coordinate-wise weighted mean of the clients' parameter vectors."""
    if len(updates) == 0:
        raise ConfigError("cannot average zero updates")
    vectors = [u.params if isinstance(u, ClientUpdate) else u for u in updates]
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(vectors),):
        raise ConfigError(
            f"{len(vectors)} updates but {weights.shape} weights"
        )
    if abs(float(weights.sum()) - 1.0) > 1e-9:
        raise ConfigError(f"weights sum to {weights.sum()}, expected 1")
    names = vectors[0].names
    n = len(vectors[0])
    for vec in vectors:
        if vec.names != names or len(vec) != n:
            raise ConfigError("updates carry inconsistent parameter vectors")
    stacked = np.stack([vec.values for vec in vectors])
    return ParamVector(names, weights @ stacked)


def evaluate(params: ParamVector, test_clients: Sequence[ClientDataset],
             model: Model) -> tuple[float, float]:
    """(binary accuracy at threshold 0.5, mean squared error) over the
    pooled samples of the given clients. Ties at p = 0.5 count as label 0."""
    samples = [s for c in test_clients for s in c.samples]
    if not samples:
        raise ConfigError("evaluation needs at least one sample")
    ev = ModelEvaluator(model, params.names)
    labels = np.array([s.label for s in samples], dtype=float)
    preds = np.empty(len(samples))
    for start in range(0, len(samples), 512):
        chunk = samples[start:start + 512]
        prep = ev.prep_states(chunk)
        preds[start:start + len(chunk)] = ev.predictions(prep, params.values)
    accuracy = float(np.mean((preds > 0.5) == (labels == 1)))
    mse = float(np.sum((labels - preds) ** 2) / (2 * len(samples)))
    return accuracy, mse


@dataclass
class EvalContext:
    """Evaluation inputs shared by every round of one training run."""

    model: Model
    test_clients: tuple[ClientDataset, ...]
    train_clients: tuple[ClientDataset, ...] | None = None

    def record(self, round_index: int, params: ParamVector,
               client_losses: dict[str, float]) -> RoundRecord:
        test_acc, test_mse = evaluate(params, self.test_clients, self.model)
        train_acc = train_mse = None
        if self.train_clients is not None:
            train_acc, train_mse = evaluate(params, self.train_clients, self.model)
        return RoundRecord(
            round=round_index,
            server_params_checksum=params_checksum(params.values),
            client_losses=client_losses,
            test_accuracy=test_acc,
            test_mse=test_mse,
            train_accuracy=train_acc,
            train_mse=train_mse,
        )


def run_round(server: ServerState, clients: Sequence[ClientState],
              cfg: TrainConfig, ctx: EvalContext) -> tuple[ServerState, RoundRecord]:
    """One broadcast -> local train -> aggregate -> evaluate cycle."""
    round_index = server.round + 1
    updates = []
    for client in clients:
        try:
            updates.append(
                local_train(client, server.params, cfg.epochs, cfg.batch_size,
                            cfg.opt, round_index=round_index)
            )
        except Exception as exc:
            raise TrainingError(
                f"client {client.client_id} failed in round {round_index}: {exc}"
            ) from exc
    new_params = federated_average(updates, server.client_weights)
    new_server = ServerState(new_params, round_index, server.client_weights)
    record = ctx.record(
        round_index, new_params, {u.client_id: u.local_loss for u in updates}
    )
    return new_server, record


def normalized_weights(weights, n_clients: int) -> np.ndarray:
    """Uniform 1/K when unspecified; otherwise scaled to sum to one."""
    if weights is None:
        return np.full(n_clients, 1.0 / n_clients)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n_clients,):
        raise ConfigError(f"expected {n_clients} weights, got {weights.shape}")
    total = float(weights.sum())
    if total <= 0 or np.any(weights < 0):
        raise ConfigError("weights must be nonnegative with positive sum")
    return weights / total


def _split_datasets(dataset: FederatedDataset, cfg: TrainConfig):
    by_id = {c.client_id: c for c in dataset.clients}
    for cid in cfg.train_clients + cfg.test_clients:
        if cid not in by_id:
            raise ConfigError(f"unknown client {cid!r}")
    overlap = set(cfg.train_clients) & set(cfg.test_clients)
    if overlap:
        raise ConfigError(f"train/test clients overlap: {sorted(overlap)}")
    if not cfg.train_clients or not cfg.test_clients:
        raise ConfigError("train and test client sets must both be nonempty")
    train = tuple(by_id[cid] for cid in cfg.train_clients)
    test = tuple(by_id[cid] for cid in cfg.test_clients)
    return train, test


def build_run(dataset: FederatedDataset, cfg: TrainConfig):
    """Model, evaluator, initial server state, client states and context."""
    train_data, test_data = _split_datasets(dataset, cfg)
    arch = cfg.arch or default_architecture(dataset.gen_config.n_qubits)
    model = build_model(arch)
    names = parameter_names(arch)
    evaluator = ModelEvaluator(model, names)
    params0 = init_params(arch, cfg.seed)
    weights = normalized_weights(cfg.weights, len(train_data))
    server = ServerState(params0, 0, weights)
    ordinals = {c.client_id: i for i, c in enumerate(dataset.clients)}
    clients = [
        ClientState(
            client_id=c.client_id,
            seed_key=ordinals[c.client_id],
            dataset=c,
            params=params0,
            opt_state=OptimizerState.zeros(len(params0)),
            evaluator=evaluator,
            base_seed=cfg.seed,
        )
        for c in train_data
    ]
    ctx = EvalContext(model, test_data, train_data if cfg.eval_train else None)
    return model, server, clients, ctx


def run_training(dataset: FederatedDataset, cfg: TrainConfig,
                 on_round: Callable[[RoundRecord, ServerState], None] | None = None,
                 transport=None) -> list[RoundRecord]:
    """Full federated run; returns one record per round plus the round-0
    evaluation of the initial parameters.

    With ``transport`` set, the broadcast/update exchange goes through it
    (see qflsim.transport) instead of calling the local clients directly.
    """
    model, server, clients, ctx = build_run(dataset, cfg)
    records = [ctx.record(0, server.params, {})]
    if on_round:
        on_round(records[0], server)
    for _ in range(cfg.rounds):
        if transport is None:
            server, record = run_round(server, clients, cfg, ctx)
        else:
            round_index = server.round + 1
            updates = transport.round_trip(
                round_index, server.params, list(cfg.train_clients)
            )
            new_params = federated_average(updates, server.client_weights)
            server = ServerState(new_params, round_index, server.client_weights)
            record = ctx.record(
                round_index, new_params,
                {u.client_id: u.local_loss for u in updates},
            )
        records.append(record)
        if on_round:
            on_round(record, server)
    return records


def centralized_train(client_data: ClientDataset, dataset: FederatedDataset,
                      cfg: TrainConfig,
                      on_round: Callable[[RoundRecord, ServerState], None] | None = None,
                      ) -> list[RoundRecord]:
    """Plain (non-federated) training on a single client's data.

    Runs rounds * epochs epochs of mini-batch optimization with the same
    seed schedule as federated training, evaluating on cfg.test_clients
    after every ``epochs`` epochs so the records line up round for round.
    """
    if client_data.client_id in cfg.test_clients:
        raise ConfigError("centralized training client overlaps the test set")
    arch = cfg.arch or default_architecture(dataset.gen_config.n_qubits)
    model = build_model(arch)
    evaluator = ModelEvaluator(model, parameter_names(arch))
    params = init_params(arch, cfg.seed)
    by_id = {c.client_id: c for c in dataset.clients}
    test_data = tuple(by_id[cid] for cid in cfg.test_clients)
    ordinals = {c.client_id: i for i, c in enumerate(dataset.clients)}
    client = ClientState(
        client_id=client_data.client_id,
        seed_key=ordinals.get(client_data.client_id, 0),
        dataset=client_data,
        params=params,
        opt_state=OptimizerState.zeros(len(params)),
        evaluator=evaluator,
        base_seed=cfg.seed,
    )
    ctx = EvalContext(model, test_data,
                      (client_data,) if cfg.eval_train else None)
    records = [ctx.record(0, params, {})]
    if on_round:
        on_round(records[0], ServerState(params, 0, np.array([1.0])))
    for block in range(1, cfg.rounds + 1):
        update = local_train(client, params, cfg.epochs, cfg.batch_size,
                             cfg.opt, round_index=block)
        params = update.params
        record = ctx.record(block, params, {update.client_id: update.local_loss})
        records.append(record)
        if on_round:
            on_round(record, ServerState(params, block, np.array([1.0])))
    return records
