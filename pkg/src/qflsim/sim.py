"""Dense statevector simulation of small qubit circuits.

Conventions, fixed for serialization and tests:
  * qubit 0 is the least significant bit of the basis-state index, so the
    basis state |b_{n-1} ... b_1 b_0> lives at index sum_q b_q * 2**q;
  * every rotation gate is exp(-i * angle/2 * G) with G the generating
    Pauli (X, Y, Z) or two-qubit Pauli product (XX, YY, ZZ);
  * for a two-qubit gate on targets (a, b), the first target selects the
    high bit of the 4x4 matrix index (CNOT control comes first).

States are plain complex128 numpy arrays of length 2**n, treated as
immutable: every operation returns a fresh array.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from . import _kernels
from .errors import ConfigError, SimulationError, UnresolvedParameterError

StateVector = np.ndarray

MAX_QUBITS = 16

GATE_ARITY = {
    "H": 1, "CZ": 2, "CNOT": 2,
    "RX": 1, "RY": 1, "RZ": 1,
    "XX": 2, "YY": 2, "ZZ": 2,
}
PARAMETRIZED_GATES = frozenset(("RX", "RY", "RZ", "XX", "YY", "ZZ"))

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)

# Generating Pauli for each rotation kind.
PAULI_GENERATORS = {
    "RX": _X,
    "RY": _Y,
    "RZ": _Z,
    "XX": np.kron(_X, _X),
    "YY": np.kron(_Y, _Y),
    "ZZ": np.kron(_Z, _Z),
}

_FIXED_MATRICES = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    "CZ": np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex),
    "CNOT": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
}


@dataclass(frozen=True)
class GateOp:
    """One gate application: a kind, target qubits, and (if parametrized)
    either a concrete angle in radians or a named symbol reference.

    ``sign`` applies only to symbol references; the effective angle is
    ``sign * bound_value``, which lets a circuit contain the exact inverse
    of a symbolic rotation.
    """

    kind: str
    targets: tuple[int, ...]
    angle: float | None = None
    symbol: str | None = None
    sign: int = 1

    def __post_init__(self):
        if self.kind not in GATE_ARITY:
            raise ConfigError(f"unknown gate kind {self.kind!r}")
        targets = tuple(int(q) for q in self.targets)
        object.__setattr__(self, "targets", targets)
        arity = GATE_ARITY[self.kind]
        if len(targets) != arity:
            raise ConfigError(
                f"{self.kind} takes {arity} target(s), got {len(targets)}"
            )
        if any(q < 0 for q in targets):
            raise ConfigError(f"negative qubit index in {targets}")
        if arity == 2 and targets[0] == targets[1]:
            raise ConfigError(f"{self.kind} targets must be distinct, got {targets}")
        if self.kind in PARAMETRIZED_GATES:
            if (self.angle is None) == (self.symbol is None):
                raise ConfigError(
                    f"{self.kind} needs exactly one of angle or symbol"
                )
            if self.angle is not None:
                object.__setattr__(self, "angle", float(self.angle))
                if self.sign != 1:
                    raise ConfigError("sign applies only to symbol references")
            if self.sign not in (1, -1):
                raise ConfigError(f"sign must be +1 or -1, got {self.sign}")
        else:
            if self.angle is not None or self.symbol is not None:
                raise ConfigError(f"{self.kind} takes no angle or symbol")


@dataclass(frozen=True)
class Circuit:
    """An ordered gate sequence on ``n_qubits`` indexed qubits."""

    n_qubits: int
    ops: tuple[GateOp, ...] = ()

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ConfigError(
                f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}"
            )
        ops = tuple(self.ops)
        object.__setattr__(self, "ops", ops)
        for op in ops:
            if any(q >= self.n_qubits for q in op.targets):
                raise ConfigError(
                    f"{op.kind} targets {op.targets} out of range for "
                    f"{self.n_qubits} qubits"
                )

    def symbols(self) -> tuple[str, ...]:
        """Distinct symbol names in first-appearance order."""
        seen: dict[str, None] = {}
        for op in self.ops:
            if op.symbol is not None and op.symbol not in seen:
                seen[op.symbol] = None
        return tuple(seen)


def h(q: int) -> GateOp:
    return GateOp("H", (q,))


def cz(a: int, b: int) -> GateOp:
    return GateOp("CZ", (a, b))


def cnot(control: int, target: int) -> GateOp:
    return GateOp("CNOT", (control, target))


def rx(q, angle=None, symbol=None, sign=1) -> GateOp:
    return GateOp("RX", (q,), angle, symbol, sign)


def ry(q, angle=None, symbol=None, sign=1) -> GateOp:
    return GateOp("RY", (q,), angle, symbol, sign)


def rz(q, angle=None, symbol=None, sign=1) -> GateOp:
    return GateOp("RZ", (q,), angle, symbol, sign)


def xx(a, b, angle=None, symbol=None, sign=1) -> GateOp:
    return GateOp("XX", (a, b), angle, symbol, sign)


def yy(a, b, angle=None, symbol=None, sign=1) -> GateOp:
    return GateOp("YY", (a, b), angle, symbol, sign)


def zz(a, b, angle=None, symbol=None, sign=1) -> GateOp:
    return GateOp("ZZ", (a, b), angle, symbol, sign)


def rotation_matrix(kind: str, angle: float) -> np.ndarray:
    """exp(-i*angle/2 * G) for the generating Pauli of ``kind``."""
    gen = PAULI_GENERATORS[kind]
    half = 0.5 * angle
    return math.cos(half) * np.eye(gen.shape[0], dtype=complex) - 1j * math.sin(half) * gen


def gate_matrix(op: GateOp) -> np.ndarray:
    """The 2x2 or 4x4 unitary of a gate with a bound angle."""
    if op.kind in PARAMETRIZED_GATES:
        if op.angle is None:
            raise UnresolvedParameterError(
                f"gate {op.kind} has unbound symbol {op.symbol!r}"
            )
        return rotation_matrix(op.kind, op.angle)
    return _FIXED_MATRICES[op.kind].copy()


def resolve_matrix(op: GateOp, bindings: Mapping[str, float] | None = None) -> np.ndarray:
    """Like gate_matrix but resolves symbol references through ``bindings``."""
    if op.symbol is not None:
        if bindings is None or op.symbol not in bindings:
            raise UnresolvedParameterError(f"no binding for symbol {op.symbol!r}")
        return rotation_matrix(op.kind, op.sign * float(bindings[op.symbol]))
    return gate_matrix(op)


def new_zero_state(n_qubits: int) -> StateVector:
    """|0...0> on ``n_qubits`` qubits."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigError(
            f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}"
        )
    psi = np.zeros(1 << n_qubits, dtype=complex)
    psi[0] = 1.0
    return psi


def _infer_n_qubits(state: np.ndarray) -> int:
    size = state.shape[-1]
    n = size.bit_length() - 1
    if size <= 0 or (1 << n) != size:
        raise SimulationError(f"state length {size} is not a power of two")
    return n


def apply_matrix(states: np.ndarray, mat: np.ndarray, targets: tuple[int, ...],
                 n_qubits: int) -> np.ndarray:
    """Apply a 2^k x 2^k unitary on ``targets`` of a (batch, 2^n) state array."""
    k = len(targets)
    if mat.shape != (1 << k, 1 << k):
        raise SimulationError(
            f"matrix shape {mat.shape} does not match {k} target(s)"
        )
    fast = _kernels.apply_fast(states, mat, targets)
    if fast is not None:
        return fast
    t = states.reshape((-1,) + (2,) * n_qubits)
    src = [1 + (n_qubits - 1 - q) for q in targets]
    dst = list(range(1, 1 + k))
    t = np.moveaxis(t, src, dst)
    permuted_shape = t.shape
    t = t.reshape(t.shape[0], 1 << k, -1)
    t = np.matmul(mat, t)
    t = t.reshape(permuted_shape)
    t = np.moveaxis(t, dst, src)
    return t.reshape(states.shape)


def _check_targets(op: GateOp, n_qubits: int):
    if any(q >= n_qubits for q in op.targets):
        raise ConfigError(
            f"{op.kind} targets {op.targets} out of range for {n_qubits} qubits"
        )


def apply_gate(state: StateVector, op: GateOp) -> StateVector:
    """State after one gate; the input state is left untouched."""
    n = _infer_n_qubits(state)
    _check_targets(op, n)
    return apply_matrix(state[None, :], gate_matrix(op), op.targets, n)[0]


def apply_circuit(state: StateVector, circuit: Circuit,
                  bindings: Mapping[str, float] | None = None) -> StateVector:
    """State after all gates of ``circuit``, applied in order.

    Every symbol appearing in the circuit must have an entry in
    ``bindings``; the effective angle of a reference is sign * value.
    """
    n = _infer_n_qubits(state)
    if n != circuit.n_qubits:
        raise SimulationError(
            f"state is on {n} qubits but circuit declares {circuit.n_qubits}"
        )
    psi = np.array(state[None, :], dtype=complex)
    for op in circuit.ops:
        psi = apply_matrix(psi, resolve_matrix(op, bindings), op.targets, n)
    return psi[0]


def expectation_z(state: StateVector, qubit: int) -> float:
    """<Z> on one qubit: +1 weight where its bit is 0, -1 where it is 1."""
    n = _infer_n_qubits(state)
    if not 0 <= qubit < n:
        raise ConfigError(f"qubit {qubit} out of range for {n} qubits")
    return float(expectation_z_many(state[None, :], qubit, n)[0])


def expectation_z_many(states: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    """Per-row <Z> of a (batch, 2^n) state array."""
    bits = (np.arange(states.shape[-1]) >> qubit) & 1
    signs = 1.0 - 2.0 * bits
    return (np.abs(states) ** 2) @ signs
