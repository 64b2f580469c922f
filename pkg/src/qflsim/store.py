"""On-disk container for federated datasets and the circuit text grammar.

Circuit grammar (one op per line, angles printed with 17 significant
digits so doubles round-trip exactly):

    QFLCIRC v1 qubits=<n>
    H <q>
    CZ <a> <b>
    CNOT <control> <target>
    RX <q> <angle|$name|-$name>     (same for RY, RZ, XX, YY, ZZ)

``$name`` references a learnable symbol; ``-$name`` is the negated
reference used by inverse rotations.

Container layout (UTF-8 text, '\\n' line endings):

    QFLDATA v1
    checksum=<16 hex chars>
    format_version=<int>
    n_clients=<int>
    gen_config <key>=<value> ...
    client <id> <distribution> <n_samples>
    s <label> <circuit with ';' in place of newlines>
    ...

The checksum is the first 64 bits (16 hex chars) of SHA-256 over every
byte after the checksum line. Clients and samples are written in dataset
order, so serializing the same dataset twice is byte-identical.
"""

import hashlib
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .datagen import AngleDistribution, ClientDataset, FederatedDataset, GenConfig
from .errors import (
    CircuitParseError,
    ConfigError,
    DatasetCorruptionError,
    DatasetFormatError,
    DatasetVersionError,
)
from .model import Sample
from .sim import GATE_ARITY, Circuit, GateOp, PARAMETRIZED_GATES

CIRCUIT_MAGIC = "QFLCIRC v1"
DATA_MAGIC = "QFLDATA v1"
FORMAT_VERSION = 1


def format_angle(x: float) -> str:
    return format(float(x), ".17g")


def checksum_bytes(data: bytes) -> str:
    """First 64 bits of SHA-256, as 16 hex characters."""
    return hashlib.sha256(data).hexdigest()[:16]


def _angle_token(op: GateOp) -> str:
    if op.symbol is not None:
        return ("-$" if op.sign < 0 else "$") + op.symbol
    return format_angle(op.angle)


def serialize_circuit(c: Circuit) -> str:
    lines = [f"{CIRCUIT_MAGIC} qubits={c.n_qubits}"]
    for op in c.ops:
        parts = [op.kind] + [str(q) for q in op.targets]
        if op.kind in PARAMETRIZED_GATES:
            parts.append(_angle_token(op))
        lines.append(" ".join(parts))
    return "\n".join(lines)


def _parse_angle_token(token: str, lineno: int) -> tuple[float | None, str | None, int]:
    sign = 1
    if token.startswith("-$"):
        sign = -1
        token = token[1:]
    if token.startswith("$"):
        name = token[1:]
        if not name:
            raise CircuitParseError(f"line {lineno}: empty symbol name")
        return None, name, sign
    try:
        angle = float(token)
    except ValueError:
        raise CircuitParseError(f"line {lineno}: malformed angle {token!r}") from None
    if not (angle == angle and abs(angle) != float("inf")):
        raise CircuitParseError(f"line {lineno}: non-finite angle {token!r}")
    return angle, None, 1


def parse_circuit(text: str) -> Circuit:
    """Inverse of serialize_circuit; errors carry a 1-based line number."""
    lines = text.split("\n")
    header = lines[0].strip() if lines else ""
    if not header.startswith(CIRCUIT_MAGIC + " qubits="):
        raise CircuitParseError(f"line 1: bad header {header!r}")
    try:
        n_qubits = int(header[len(CIRCUIT_MAGIC + " qubits="):])
    except ValueError:
        raise CircuitParseError(f"line 1: bad qubit count in {header!r}") from None
    ops = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        kind = tokens[0]
        if kind not in GATE_ARITY:
            raise CircuitParseError(f"line {lineno}: unknown gate {kind!r}")
        arity = GATE_ARITY[kind]
        n_tokens = 1 + arity + (1 if kind in PARAMETRIZED_GATES else 0)
        if len(tokens) != n_tokens:
            raise CircuitParseError(
                f"line {lineno}: {kind} expects {n_tokens - 1} argument(s)"
            )
        try:
            targets = tuple(int(t) for t in tokens[1:1 + arity])
        except ValueError:
            raise CircuitParseError(f"line {lineno}: bad qubit index") from None
        angle, symbol, sign = (None, None, 1)
        if kind in PARAMETRIZED_GATES:
            angle, symbol, sign = _parse_angle_token(tokens[1 + arity], lineno)
        try:
            op = GateOp(kind, targets, angle, symbol, sign)
        except ConfigError as exc:
            raise CircuitParseError(f"line {lineno}: {exc}") from None
        if any(q >= n_qubits for q in targets):
            raise CircuitParseError(
                f"line {lineno}: qubit out of range for qubits={n_qubits}"
            )
        ops.append(op)
    try:
        return Circuit(n_qubits, tuple(ops))
    except ConfigError as exc:
        raise CircuitParseError(f"line 1: {exc}") from None


@dataclass(frozen=True)
class DatasetFile:
    """Summary of a written container, as returned by write_dataset."""

    path: Path
    checksum: str
    n_clients: int
    sample_counts: tuple[int, ...]


def _gen_config_line(cfg: GenConfig) -> str:
    fields = [
        f"n_clients={cfg.n_clients}",
        f"n_qubits={cfg.n_qubits}",
        f"samples_per_client={cfg.samples_per_client}",
        f"angle_distribution={cfg.angle_distribution.value}",
        f"trunc_normal_sigma={format_angle(cfg.trunc_normal_sigma)}",
        f"excitation_threshold={format_angle(cfg.excitation_threshold)}",
        f"seed={cfg.seed}",
    ]
    return "gen_config " + " ".join(fields)


def _parse_gen_config(line: str) -> GenConfig:
    kv = {}
    for token in line.split()[1:]:
        if "=" not in token:
            raise DatasetFormatError(f"bad gen_config token {token!r}")
        key, value = token.split("=", 1)
        kv[key] = value
    try:
        return GenConfig(
            n_clients=int(kv["n_clients"]),
            n_qubits=int(kv["n_qubits"]),
            samples_per_client=int(kv["samples_per_client"]),
            angle_distribution=AngleDistribution(kv["angle_distribution"]),
            trunc_normal_sigma=float(kv["trunc_normal_sigma"]),
            excitation_threshold=float(kv["excitation_threshold"]),
            seed=int(kv["seed"]),
        )
    except (KeyError, ValueError, ConfigError) as exc:
        raise DatasetFormatError(f"bad gen_config line: {exc}") from None


def _client_id_ok(client_id: str) -> bool:
    return bool(client_id) and all(
        ch.isalnum() or ch in "_-" for ch in client_id
    )


def _render_body(ds: FederatedDataset) -> str:
    lines = [
        f"format_version={ds.format_version}",
        f"n_clients={len(ds.clients)}",
        _gen_config_line(ds.gen_config),
    ]
    for client in ds.clients:
        if not _client_id_ok(client.client_id):
            raise ConfigError(f"client id {client.client_id!r} not storable")
        lines.append(
            f"client {client.client_id} {client.distribution_tag.value} "
            f"{len(client.samples)}"
        )
        for sample in client.samples:
            circ = serialize_circuit(sample.prep_circuit)
            if ";" in circ:
                raise ConfigError("circuit text may not contain ';'")
            lines.append(f"s {sample.label} {circ.replace(chr(10), ';')}")
    return "\n".join(lines) + "\n"


def write_dataset(ds: FederatedDataset, path) -> DatasetFile:
    """Write atomically (temp file, then rename) and return a summary."""
    path = Path(path)
    body = _render_body(ds)
    checksum = checksum_bytes(body.encode("utf-8"))
    blob = f"{DATA_MAGIC}\nchecksum={checksum}\n{body}"
    fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(blob)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return DatasetFile(
        path=path,
        checksum=checksum,
        n_clients=len(ds.clients),
        sample_counts=tuple(len(c.samples) for c in ds.clients),
    )


def _parse_sample(line: str, lineno: int, n_qubits: int) -> Sample:
    parts = line.split(" ", 2)
    if len(parts) != 3 or parts[0] != "s":
        raise DatasetFormatError(f"line {lineno}: bad sample line")
    try:
        label = int(parts[1])
    except ValueError:
        raise DatasetFormatError(f"line {lineno}: bad label {parts[1]!r}") from None
    if label not in (0, 1):
        raise DatasetFormatError(f"line {lineno}: label must be 0 or 1")
    circuit = parse_circuit(parts[2].replace(";", "\n"))
    if circuit.n_qubits != n_qubits:
        raise DatasetFormatError(
            f"line {lineno}: sample qubit count {circuit.n_qubits} does not "
            f"match dataset ({n_qubits})"
        )
    return Sample(circuit, label)


def read_dataset(path) -> FederatedDataset:
    """Parse and checksum-verify a container written by write_dataset."""
    raw = Path(path).read_bytes()
    head, sep, rest = raw.partition(b"\n")
    magic = head.decode("utf-8", errors="replace")
    if not sep or not magic.startswith("QFLDATA v"):
        raise DatasetFormatError(f"{path}: not a dataset container")
    if magic != DATA_MAGIC:
        raise DatasetVersionError(f"{path}: unsupported container {magic!r}")
    checksum_line, sep, body = rest.partition(b"\n")
    if not sep or not checksum_line.startswith(b"checksum="):
        raise DatasetFormatError(f"{path}: missing checksum line")
    declared = checksum_line[len(b"checksum="):].decode("ascii", errors="replace")
    actual = checksum_bytes(body)
    if declared != actual:
        raise DatasetCorruptionError(
            f"{path}: checksum mismatch (declared {declared}, actual {actual})"
        )

    lines = body.decode("utf-8").split("\n")
    if len(lines) < 3:
        raise DatasetFormatError(f"{path}: truncated body")
    if not lines[0].startswith("format_version="):
        raise DatasetFormatError(f"{path}: missing format_version")
    version = int(lines[0].split("=", 1)[1])
    if version > FORMAT_VERSION:
        raise DatasetVersionError(f"{path}: format_version {version} unsupported")
    if not lines[1].startswith("n_clients="):
        raise DatasetFormatError(f"{path}: missing n_clients")
    n_clients = int(lines[1].split("=", 1)[1])
    if not lines[2].startswith("gen_config "):
        raise DatasetFormatError(f"{path}: missing gen_config")
    gen_config = _parse_gen_config(lines[2])

    clients: list[ClientDataset] = []
    i = 3
    lineno = i + 3  # account for magic + checksum lines in reported numbers
    while i < len(lines):
        line = lines[i]
        if not line:
            i += 1
            continue
        parts = line.split()
        if parts[0] != "client" or len(parts) != 4:
            raise DatasetFormatError(f"line {i + 3}: expected client header")
        client_id = parts[1]
        try:
            dist = AngleDistribution(parts[2])
        except ValueError:
            raise DatasetFormatError(
                f"line {i + 3}: unknown distribution {parts[2]!r}"
            ) from None
        count = int(parts[3])
        samples = []
        for j in range(count):
            idx = i + 1 + j
            if idx >= len(lines):
                raise DatasetFormatError(f"{path}: truncated client {client_id}")
            samples.append(_parse_sample(lines[idx], idx + 3, gen_config.n_qubits))
        clients.append(ClientDataset(client_id, tuple(samples), dist))
        i += 1 + count
    if len(clients) != n_clients:
        raise DatasetFormatError(
            f"{path}: header declares {n_clients} clients, found {len(clients)}"
        )
    try:
        return FederatedDataset(tuple(clients), gen_config, version)
    except ConfigError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None


def params_checksum(values) -> str:
    """Checksum of a parameter vector's canonical decimal rendering."""
    text = ",".join(format_angle(v) for v in values)
    return checksum_bytes(text.encode("ascii"))
