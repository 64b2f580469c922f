"""Per-client generation of cluster-state excitation datasets.

Each sample prepares a ring cluster state (Hadamard on every qubit, CZ
between ring neighbors) and applies one RX excitation to a single qubit,
cycling the target across samples. The sample is labeled 1 (excited) when
the rotation magnitude exceeds the threshold, else 0.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import ConfigError
from .model import Sample
from .sim import Circuit, GateOp, cz, h, rx


class AngleDistribution(str, Enum):
    UNIFORM_PI = "uniform_pi"
    TRUNCATED_NORMAL = "truncated_normal"


@dataclass(frozen=True)
class GenConfig:
    n_clients: int
    n_qubits: int = 8
    samples_per_client: int = 160
    angle_distribution: AngleDistribution = AngleDistribution.UNIFORM_PI
    trunc_normal_sigma: float = math.pi / 2
    excitation_threshold: float = math.pi / 2
    seed: int = 0

    def __post_init__(self):
        if self.n_clients < 0:
            raise ConfigError(f"n_clients must be >= 0, got {self.n_clients}")
        if self.n_qubits < 2:
            raise ConfigError(f"n_qubits must be >= 2, got {self.n_qubits}")
        if self.samples_per_client % self.n_qubits != 0:
            raise ConfigError(
                f"samples_per_client ({self.samples_per_client}) must be "
                f"divisible by n_qubits ({self.n_qubits})"
            )
        if not 0.0 < self.excitation_threshold < math.pi:
            raise ConfigError("excitation_threshold must be in (0, pi)")
        if self.trunc_normal_sigma <= 0:
            raise ConfigError("trunc_normal_sigma must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        object.__setattr__(
            self, "angle_distribution", AngleDistribution(self.angle_distribution)
        )


@dataclass(frozen=True)
class ClientDataset:
    client_id: str
    samples: tuple[Sample, ...]
    distribution_tag: AngleDistribution

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        sizes = {s.prep_circuit.n_qubits for s in self.samples}
        if len(sizes) > 1:
            raise ConfigError("all samples of a client must share a qubit count")


@dataclass(frozen=True)
class FederatedDataset:
    clients: tuple[ClientDataset, ...]
    gen_config: GenConfig
    format_version: int = 1

    def __post_init__(self):
        object.__setattr__(self, "clients", tuple(self.clients))
        ids = [c.client_id for c in self.clients]
        if len(set(ids)) != len(ids):
            raise ConfigError("client ids must be unique")

    def client_ids(self) -> tuple[str, ...]:
        return tuple(c.client_id for c in self.clients)

    def client(self, client_id: str) -> ClientDataset:
        for c in self.clients:
            if c.client_id == client_id:
                return c
        raise ConfigError(f"no client {client_id!r} in dataset")


def cluster_state_circuit(n_qubits: int) -> Circuit:
    """Hadamard on every qubit, then CZ around the ring.

    The wraparound pair (n-1, 0) duplicates (0, 1) for n = 2, so the
    degenerate ring keeps a single CZ.
    """
    if n_qubits < 2:
        raise ConfigError(f"cluster state needs >= 2 qubits, got {n_qubits}")
    ops: list[GateOp] = [h(q) for q in range(n_qubits)]
    ops += [cz(q, q + 1) for q in range(n_qubits - 1)]
    if n_qubits > 2:
        ops.append(cz(n_qubits - 1, 0))
    return Circuit(n_qubits, tuple(ops))


def draw_angle(rng: np.random.Generator, config: GenConfig) -> float:
    """One excitation angle in [-pi, pi] from the configured distribution."""
    if config.angle_distribution is AngleDistribution.UNIFORM_PI:
        return float(rng.uniform(-math.pi, math.pi))
    while True:
        x = float(rng.normal(0.0, config.trunc_normal_sigma))
        if -math.pi <= x <= math.pi:
            return x


def label_rule(angle: float, threshold: float) -> int:
    """1 (excited) iff |angle| strictly exceeds the threshold."""
    return int(abs(angle) > threshold)


def generate_sample(rng: np.random.Generator, config: GenConfig,
                    target_qubit: int) -> Sample:
    """Cluster state plus one RX excitation on ``target_qubit``."""
    if not 0 <= target_qubit < config.n_qubits:
        raise ConfigError(
            f"target qubit {target_qubit} out of range for {config.n_qubits} qubits"
        )
    angle = draw_angle(rng, config)
    base = cluster_state_circuit(config.n_qubits)
    prep = Circuit(config.n_qubits, base.ops + (rx(target_qubit, angle),))
    return Sample(prep, label_rule(angle, config.excitation_threshold))


def client_rng(seed: int, client_index: int) -> np.random.Generator:
    """Independent per-client generator derived from (seed, client index)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(client_index)]))


def generate_client_dataset(config: GenConfig, client_index: int,
                            distribution: AngleDistribution | None = None
                            ) -> ClientDataset:
    dist = AngleDistribution(distribution) if distribution is not None \
        else config.angle_distribution
    cfg = replace(config, angle_distribution=dist)
    rng = client_rng(config.seed, client_index)
    samples = tuple(
        generate_sample(rng, cfg, m % cfg.n_qubits)
        for m in range(cfg.samples_per_client)
    )
    return ClientDataset(f"client_{client_index:03d}", samples, dist)


def generate_federated_dataset(config: GenConfig,
                               non_iid_fraction: float = 0.0) -> FederatedDataset:
    """K per-client datasets; the first ceil(fraction * K) clients draw
    excitation angles from the truncated normal, the rest uniformly."""
    if config.n_clients < 1:
        raise ConfigError("dataset generation needs at least one client")
    if not 0.0 <= non_iid_fraction <= 1.0:
        raise ConfigError("non_iid_fraction must be in [0, 1]")
    n_trunc = math.ceil(non_iid_fraction * config.n_clients)
    clients = []
    for k in range(config.n_clients):
        dist = AngleDistribution.TRUNCATED_NORMAL if k < n_trunc \
            else AngleDistribution.UNIFORM_PI
        clients.append(generate_client_dataset(config, k, dist))
    return FederatedDataset(tuple(clients), config)
