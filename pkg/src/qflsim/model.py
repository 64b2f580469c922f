"""Quantum convolutional classifier: architecture, forward pass, loss, gradients.

The network alternates convolution layers (one shared 15-parameter
two-qubit unit swept over adjacent pairs of the active qubits) with
pooling layers (a 6-parameter controlled unit that halves the active
set), ending in a single-qubit Z readout mapped to a prediction
p = (1 + <Z>)/2 in [0, 1].

Gradients follow the shift rule for gates of the form exp(-i*theta/2*G)
with G^2 = I: each occurrence of a parameter contributes
( <Z>(theta + pi/2) - <Z>(theta - pi/2) ) / 2, and shared symbols sum
their occurrences. The evaluation engine factors the shared prefix and
suffix of the shifted circuits, which yields the identical values in
O(depth) work per sample instead of re-simulating per occurrence.
"""

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _fused
from .errors import ConfigError
from .sim import (
    Circuit,
    GateOp,
    PARAMETRIZED_GATES,
    PAULI_GENERATORS,
    apply_circuit,
    apply_matrix,
    cnot,
    expectation_z_many,
    gate_matrix,
    new_zero_state,
    resolve_matrix,
    rotation_matrix,
    rx,
    ry,
    rz,
    xx,
    yy,
    zz,
)

CONV_PARAMS = 15
POOL_PARAMS = 6
FC_PARAMS = 3

_LAYER_KINDS = ("conv", "pool", "fc")
_LAYER_PARAMS = {"conv": CONV_PARAMS, "pool": POOL_PARAMS, "fc": FC_PARAMS}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    active_qubits: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in _LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        active = tuple(int(q) for q in self.active_qubits)
        object.__setattr__(self, "active_qubits", active)
        if len(set(active)) != len(active):
            raise ConfigError("active qubits must be distinct")
        if self.kind == "conv" and len(active) < 2:
            raise ConfigError("conv layer needs at least 2 active qubits")
        if self.kind == "pool" and len(active) % 2 != 0:
            raise ConfigError("pool layer needs an even number of active qubits")
        if self.kind == "fc" and len(active) != 1:
            raise ConfigError("fc layer acts on exactly one qubit")


@dataclass(frozen=True)
class ArchitectureSpec:
    n_qubits: int
    layers: tuple[LayerSpec, ...]
    readout_qubit: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        active = tuple(range(self.n_qubits))
        fc_seen = False
        for layer in self.layers:
            if fc_seen:
                raise ConfigError("fc layer must be last")
            if layer.kind == "fc":
                fc_seen = True
                continue
            if layer.active_qubits != active:
                raise ConfigError(
                    f"{layer.kind} layer active set {layer.active_qubits} is "
                    f"inconsistent with pooling reduction (expected {active})"
                )
            if layer.kind == "pool":
                active = active[1::2]
        if self.readout_qubit not in active:
            raise ConfigError(
                f"readout qubit {self.readout_qubit} does not survive pooling"
            )


def param_count(arch: ArchitectureSpec) -> int:
    return sum(_LAYER_PARAMS[layer.kind] for layer in arch.layers)


def parameter_names(arch: ArchitectureSpec) -> tuple[str, ...]:
    """Symbol names in layer-major order: c0_*, p0_*, c1_*, ..., f_*."""
    names: list[str] = []
    counters = {"conv": 0, "pool": 0}
    for layer in arch.layers:
        if layer.kind == "conv":
            names += [f"c{counters['conv']}_{j}" for j in range(CONV_PARAMS)]
            counters["conv"] += 1
        elif layer.kind == "pool":
            names += [f"p{counters['pool']}_{j}" for j in range(POOL_PARAMS)]
            counters["pool"] += 1
        else:
            names += [f"f_{j}" for j in range(FC_PARAMS)]
    return tuple(names)


def build_architecture(n_qubits: int, n_stages: int | None = None,
                       readout_qubit: int | None = None,
                       include_fc: bool = False) -> ArchitectureSpec:
    """Alternating conv/pool stages that halve the active qubit set.

    ``n_qubits`` must be a power of two in [2, 16]. The default stage
    count halves all the way down to one surviving qubit; with fewer
    stages the readout may be any surviving qubit (default: the last).
    """
    if n_qubits < 2 or n_qubits > 16 or (n_qubits & (n_qubits - 1)) != 0:
        raise ConfigError(
            f"n_qubits must be a power of two in [2, 16], got {n_qubits}"
        )
    max_stages = n_qubits.bit_length() - 1
    if n_stages is None:
        n_stages = max_stages
    if not 1 <= n_stages <= max_stages:
        raise ConfigError(
            f"n_stages must be in [1, {max_stages}] for {n_qubits} qubits"
        )
    layers: list[LayerSpec] = []
    active = tuple(range(n_qubits))
    for _ in range(n_stages):
        layers.append(LayerSpec("conv", active))
        layers.append(LayerSpec("pool", active))
        active = active[1::2]
    if readout_qubit is None:
        readout_qubit = active[-1]
    if include_fc:
        layers.append(LayerSpec("fc", (readout_qubit,)))
    return ArchitectureSpec(n_qubits, tuple(layers), readout_qubit)


def default_architecture(n_qubits: int) -> ArchitectureSpec:
    return build_architecture(n_qubits)


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Ordered learnable angles with stable, unique symbol names."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(set(names)) != len(names):
            raise ConfigError("parameter names must be unique")
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.shape[0] != len(names):
            raise ConfigError(
                f"expected {len(names)} values, got shape {values.shape}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.names)

    def bindings(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))

    def with_values(self, values) -> "ParamVector":
        return ParamVector(self.names, values)


@dataclass(frozen=True)
class Sample:
    """One labeled input: its state-preparation circuit and a binary label."""

    prep_circuit: Circuit
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ConfigError(f"label must be 0 or 1, got {self.label}")


def conv_unit(q_a: int, q_b: int, symbols: Sequence[str]) -> tuple[GateOp, ...]:
    """15-parameter two-qubit convolution unit.

    Rotation triples on each qubit, ZZ/YY/XX couplers, then rotation
    triples on each qubit again.
    """
    sy = tuple(symbols)
    if len(sy) != CONV_PARAMS or len(set(sy)) != CONV_PARAMS:
        raise ConfigError(f"conv unit needs {CONV_PARAMS} distinct symbols")
    if q_a == q_b:
        raise ConfigError("conv unit qubits must be distinct")
    return (
        rx(q_a, symbol=sy[0]), ry(q_a, symbol=sy[1]), rz(q_a, symbol=sy[2]),
        rx(q_b, symbol=sy[3]), ry(q_b, symbol=sy[4]), rz(q_b, symbol=sy[5]),
        zz(q_a, q_b, symbol=sy[6]),
        yy(q_a, q_b, symbol=sy[7]),
        xx(q_a, q_b, symbol=sy[8]),
        rx(q_a, symbol=sy[9]), ry(q_a, symbol=sy[10]), rz(q_a, symbol=sy[11]),
        rx(q_b, symbol=sy[12]), ry(q_b, symbol=sy[13]), rz(q_b, symbol=sy[14]),
    )


def pool_unit(source: int, sink: int, symbols: Sequence[str]) -> tuple[GateOp, ...]:
    """6-parameter pooling unit retiring ``source`` into ``sink``.

    Rotation triple on the sink, triple on the source, CNOT(source, sink),
    then the exact inverse of the sink triple (negated angles, reversed
    order). Later layers must never address the source again.
    """
    sy = tuple(symbols)
    if len(sy) != POOL_PARAMS or len(set(sy)) != POOL_PARAMS:
        raise ConfigError(f"pool unit needs {POOL_PARAMS} distinct symbols")
    if source == sink:
        raise ConfigError("pool unit qubits must be distinct")
    return (
        rx(sink, symbol=sy[0]), ry(sink, symbol=sy[1]), rz(sink, symbol=sy[2]),
        rx(source, symbol=sy[3]), ry(source, symbol=sy[4]), rz(source, symbol=sy[5]),
        cnot(source, sink),
        rz(sink, symbol=sy[2], sign=-1),
        ry(sink, symbol=sy[1], sign=-1),
        rx(sink, symbol=sy[0], sign=-1),
    )


def fc_unit(q: int, symbols: Sequence[str]) -> tuple[GateOp, ...]:
    """3-parameter rotation triple on the readout qubit."""
    sy = tuple(symbols)
    if len(sy) != FC_PARAMS or len(set(sy)) != FC_PARAMS:
        raise ConfigError(f"fc unit needs {FC_PARAMS} distinct symbols")
    return (rx(q, symbol=sy[0]), ry(q, symbol=sy[1]), rz(q, symbol=sy[2]))


def _conv_pairs(active: tuple[int, ...]) -> list[tuple[int, int]]:
    # Even-offset adjacent pairs, then odd-offset pairs with cyclic wrap;
    # on two qubits the wrap pair would duplicate the even pair.
    n = len(active)
    pairs = [(active[i], active[i + 1]) for i in range(0, n - 1, 2)]
    if n > 2:
        pairs += [(active[i], active[(i + 1) % n]) for i in range(1, n, 2)]
    return pairs


def _pool_pairs(active: tuple[int, ...]) -> list[tuple[int, int]]:
    return [(active[i], active[i + 1]) for i in range(0, len(active), 2)]


def build_model_circuit(arch: ArchitectureSpec) -> Circuit:
    """Symbolic model circuit with translational weight sharing.

    All conv units of one layer reference the same 15 symbols; all pool
    units of one layer share their 6 symbols. Symbol order matches
    parameter_names(arch).
    """
    ops: list[GateOp] = []
    counters = {"conv": 0, "pool": 0}
    for layer in arch.layers:
        if layer.kind == "conv":
            sy = [f"c{counters['conv']}_{j}" for j in range(CONV_PARAMS)]
            for a, b in _conv_pairs(layer.active_qubits):
                ops += conv_unit(a, b, sy)
            counters["conv"] += 1
        elif layer.kind == "pool":
            sy = [f"p{counters['pool']}_{j}" for j in range(POOL_PARAMS)]
            for source, sink in _pool_pairs(layer.active_qubits):
                ops += pool_unit(source, sink, sy)
            counters["pool"] += 1
        else:
            ops += fc_unit(layer.active_qubits[0], [f"f_{j}" for j in range(FC_PARAMS)])
    return Circuit(arch.n_qubits, tuple(ops))


@dataclass(frozen=True)
class Model:
    """Architecture plus its built symbolic circuit."""

    arch: ArchitectureSpec
    circuit: Circuit

    @property
    def readout_qubit(self) -> int:
        return self.arch.readout_qubit

    @property
    def n_qubits(self) -> int:
        return self.arch.n_qubits


def build_model(arch: ArchitectureSpec) -> Model:
    return Model(arch, build_model_circuit(arch))


INIT_ANGLE_SCALE = 0.5


def init_params(arch: ArchitectureSpec, seed: int,
                scale: float = INIT_ANGLE_SCALE) -> ParamVector:
    """Uniform initial angles on [-scale, scale) from a seeded generator.

    The default half-radian spread matters: near-identity starts (0.1 rad
    or less) leave training stuck on an accuracy plateau around 0.85 on
    the excitation task, while 0.5 rad trains to ~0.99 under the same
    optimizer budget.
    """
    names = parameter_names(arch)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    return ParamVector(names, rng.uniform(-scale, scale, size=len(names)))


class ModelEvaluator:
    """Batched forward and gradient evaluation of one model.

    Compiles the model circuit once against a fixed parameter-name order;
    sample preparation states are parameter-independent and can be cached
    by the caller across optimization steps.
    """

    def __init__(self, model: Model, param_names: Sequence[str]):
        self.model = model
        self.n_qubits = model.n_qubits
        self.readout = model.readout_qubit
        name_to_idx = {name: i for i, name in enumerate(param_names)}
        self.n_params = len(name_to_idx)
        if len(name_to_idx) != len(tuple(param_names)):
            raise ConfigError("parameter names must be unique")
        steps = []
        for op in model.circuit.ops:
            if op.symbol is not None:
                if op.symbol not in name_to_idx:
                    raise ConfigError(f"model symbol {op.symbol!r} not in parameters")
                steps.append((op.kind, op.targets, name_to_idx[op.symbol],
                              float(op.sign), None))
            else:
                steps.append((op.kind, op.targets, -1, 1.0, gate_matrix(op)))
        self._steps = steps
        ops = model.circuit.ops
        self._codes = np.array([_fused.KIND_CODES[op.kind] for op in ops],
                               dtype=np.int64)
        self._qas = np.array([op.targets[0] for op in ops], dtype=np.int64)
        self._qbs = np.array(
            [op.targets[1] if len(op.targets) == 2 else -1 for op in ops],
            dtype=np.int64,
        )
        self._param_idx = np.array([s[2] for s in steps], dtype=np.int64)
        self._signs = np.array([s[3] for s in steps], dtype=float)
        self._base_angles = np.array(
            [op.angle if op.angle is not None else 0.0 for op in ops], dtype=float
        )
        self._use_fused = _fused.AVAILABLE

    def _resolved_angles(self, values: np.ndarray) -> np.ndarray:
        angles = self._base_angles.copy()
        bound = self._param_idx >= 0
        angles[bound] = self._signs[bound] * values[self._param_idx[bound]]
        return angles

    def _matrices(self, values: np.ndarray) -> list[np.ndarray]:
        mats = []
        for kind, _targets, idx, sign, const in self._steps:
            if idx < 0:
                mats.append(const)
            else:
                mats.append(rotation_matrix(kind, sign * values[idx]))
        return mats

    def prep_states(self, samples: Sequence[Sample]) -> np.ndarray:
        """(n_samples, 2^n) array of each sample's prepared input state."""
        dim = 1 << self.n_qubits
        out = np.empty((len(samples), dim), dtype=complex)
        for i, sample in enumerate(samples):
            if sample.prep_circuit.n_qubits != self.n_qubits:
                raise ConfigError(
                    f"sample on {sample.prep_circuit.n_qubits} qubits, "
                    f"model expects {self.n_qubits}"
                )
            out[i] = apply_circuit(new_zero_state(self.n_qubits), sample.prep_circuit)
        return out

    def readout_z(self, prep_states: np.ndarray, values: np.ndarray) -> np.ndarray:
        if self._use_fused:
            return _fused.forward_z(
                np.ascontiguousarray(prep_states, dtype=np.complex128),
                self._codes, self._qas, self._qbs,
                self._resolved_angles(values), self.readout,
            )
        return self._readout_z_numpy(prep_states, values)

    def _readout_z_numpy(self, prep_states: np.ndarray, values: np.ndarray) -> np.ndarray:
        psi = prep_states
        for (kind, targets, _idx, _sign, _const), mat in zip(
                self._steps, self._matrices(values)):
            psi = apply_matrix(psi, mat, targets, self.n_qubits)
        return expectation_z_many(psi, self.readout, self.n_qubits)

    def predictions(self, prep_states: np.ndarray, values: np.ndarray) -> np.ndarray:
        return 0.5 * (1.0 + self.readout_z(prep_states, values))

    def loss(self, prep_states: np.ndarray, labels: np.ndarray,
             values: np.ndarray) -> float:
        p = self.predictions(prep_states, values)
        return float(np.sum((labels - p) ** 2) / (2 * len(labels)))

    def readout_z_and_gradient(self, prep_states: np.ndarray,
                               values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample <Z> and its exact derivative for every parameter.

        Returns (z, dz) with z of shape (batch,) and dz of shape
        (n_params, batch). Forward states are recorded once; an adjoint
        vector carrying the remaining circuit and the Z observable is
        swept backwards, so each parameter occurrence costs one Pauli
        application and one inner product while producing exactly the
        shift-rule value (E(+pi/2) - E(-pi/2)) / 2.
        """
        if self._use_fused:
            return _fused.forward_z_and_grad(
                np.ascontiguousarray(prep_states, dtype=np.complex128),
                self._codes, self._qas, self._qbs,
                self._resolved_angles(values), self._param_idx, self._signs,
                self.readout, self.n_params,
            )
        return self._readout_z_and_gradient_numpy(prep_states, values)

    def _readout_z_and_gradient_numpy(self, prep_states: np.ndarray,
                                      values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_qubits
        batch, dim = prep_states.shape
        mats = self._matrices(values)
        n_steps = len(self._steps)
        fwd = np.empty((n_steps + 1, batch, dim), dtype=complex)
        fwd[0] = prep_states
        for t, ((_kind, targets, _idx, _sign, _const), mat) in enumerate(
                zip(self._steps, mats)):
            fwd[t + 1] = apply_matrix(fwd[t], mat, targets, n)

        bits = (np.arange(dim) >> self.readout) & 1
        z_signs = 1.0 - 2.0 * bits
        z = (np.abs(fwd[n_steps]) ** 2) @ z_signs

        lam = fwd[n_steps] * z_signs
        dz = np.zeros((self.n_params, batch))
        for t in range(n_steps - 1, -1, -1):
            kind, targets, idx, sign, _const = self._steps[t]
            if idx >= 0:
                pv = apply_matrix(fwd[t + 1], PAULI_GENERATORS[kind], targets, n)
                overlap = np.einsum("bi,bi->b", pv.conj(), lam)
                dz[idx] -= sign * overlap.imag
            lam = apply_matrix(lam, mats[t].conj().T, targets, n)
        return z, dz

    def loss_and_gradient(self, prep_states: np.ndarray, labels: np.ndarray,
                          values: np.ndarray) -> tuple[float, np.ndarray]:
        z, dz = self.readout_z_and_gradient(prep_states, values)
        p = 0.5 * (1.0 + z)
        m = len(labels)
        loss = float(np.sum((labels - p) ** 2) / (2 * m))
        grad = dz @ (p - labels) / (2 * m)
        return loss, grad


def _check_batch(batch: Sequence[Sample]):
    if len(batch) == 0:
        raise ConfigError("batch must be nonempty")


def predict(sample_prep: Circuit, model: Model, params: ParamVector) -> float:
    """p = (1 + <Z>_readout)/2 for |0...0> -> sample_prep -> model."""
    ev = ModelEvaluator(model, params.names)
    prep = ev.prep_states([Sample(sample_prep, 0)])
    return float(ev.predictions(prep, params.values)[0])


def mse_loss(params: ParamVector, batch: Sequence[Sample], model: Model) -> float:
    """Mean squared error with 1/(2M) normalization."""
    _check_batch(batch)
    ev = ModelEvaluator(model, params.names)
    prep = ev.prep_states(batch)
    labels = np.array([s.label for s in batch], dtype=float)
    return ev.loss(prep, labels, params.values)


def gradient(params: ParamVector, batch: Sequence[Sample], model: Model) -> np.ndarray:
    """Exact shift-rule gradient of mse_loss with respect to every parameter."""
    _check_batch(batch)
    ev = ModelEvaluator(model, params.names)
    prep = ev.prep_states(batch)
    labels = np.array([s.label for s in batch], dtype=float)
    return ev.loss_and_gradient(prep, labels, params.values)[1]


def readout_gradient(params: ParamVector, sample: Sample, model: Model) -> np.ndarray:
    """d<Z>/d(theta_j) for one sample, one entry per parameter."""
    ev = ModelEvaluator(model, params.names)
    prep = ev.prep_states([sample])
    _z, dz = ev.readout_z_and_gradient(prep, params.values)
    return dz[:, 0]
