"""Circuit text grammar and the dataset container round trip."""

import math

import numpy as np
import pytest

import oracles
from qflsim.datagen import (
    AngleDistribution,
    ClientDataset,
    FederatedDataset,
    GenConfig,
    generate_federated_dataset,
)
from qflsim.errors import (
    CircuitParseError,
    DatasetCorruptionError,
    DatasetFormatError,
    DatasetVersionError,
)
from qflsim.model import Sample
from qflsim.sim import Circuit, cz, h, rx, ry, rz
from qflsim.store import (
    parse_circuit,
    read_dataset,
    serialize_circuit,
    write_dataset,
)


def _tiny_dataset(n_clients=2, samples=16, seed=1):
    return generate_federated_dataset(
        GenConfig(n_clients=n_clients, samples_per_client=samples, seed=seed))


class TestSerializeCircuit:
    def test_single_hadamard(self):
        assert serialize_circuit(Circuit(1, (h(0),))) == "QFLCIRC v1 qubits=1\nH 0"

    def test_angle_printed_with_17_digits(self):
        text = serialize_circuit(Circuit(4, (rx(3, math.pi),)))
        assert text.split("\n")[1] == "RX 3 3.1415926535897931"

    def test_symbolic_and_negated_references(self):
        circuit = Circuit(2, (ry(0, symbol="c0_1"), rz(1, symbol="c0_1", sign=-1)))
        lines = serialize_circuit(circuit).split("\n")
        assert lines[1] == "RY 0 $c0_1"
        assert lines[2] == "RZ 1 -$c0_1"

    def test_round_trip_many_random_circuits(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            n = int(rng.integers(1, 6))
            circuit = oracles.random_circuit(rng, n, int(rng.integers(0, 9)))
            assert parse_circuit(serialize_circuit(circuit)) == circuit

    def test_round_trip_symbolic_circuit(self):
        circuit = Circuit(3, (h(0), rx(1, symbol="a"), ry(2, symbol="b", sign=-1),
                              cz(0, 2), rz(0, 0.123456789012345)))
        assert parse_circuit(serialize_circuit(circuit)) == circuit

    def test_angles_survive_bit_exactly(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            angle = float(rng.uniform(-10, 10))
            restored = parse_circuit(serialize_circuit(Circuit(1, (rx(0, angle),))))
            assert restored.ops[0].angle == angle


class TestParseCircuit:
    def test_minimal(self):
        assert parse_circuit("QFLCIRC v1 qubits=1\nH 0") == Circuit(1, (h(0),))

    def test_qubit_out_of_range_reports_line(self):
        with pytest.raises(CircuitParseError, match="line 2"):
            parse_circuit("QFLCIRC v1 qubits=2\nH 5")

    def test_unknown_gate(self):
        with pytest.raises(CircuitParseError, match="QZ"):
            parse_circuit("QFLCIRC v1 qubits=1\nQZ 0")

    def test_bad_arity(self):
        with pytest.raises(CircuitParseError, match="line 2"):
            parse_circuit("QFLCIRC v1 qubits=2\nCZ 0")

    def test_malformed_angle(self):
        with pytest.raises(CircuitParseError, match="angle"):
            parse_circuit("QFLCIRC v1 qubits=1\nRX 0 abc")

    def test_non_finite_angle(self):
        with pytest.raises(CircuitParseError):
            parse_circuit("QFLCIRC v1 qubits=1\nRX 0 nan")

    def test_bad_header(self):
        with pytest.raises(CircuitParseError, match="line 1"):
            parse_circuit("CIRCUIT qubits=1\nH 0")

    def test_duplicate_targets_rejected(self):
        with pytest.raises(CircuitParseError, match="line 2"):
            parse_circuit("QFLCIRC v1 qubits=2\nCZ 1 1")


class TestDatasetContainer:
    def test_round_trip_equality(self, tmp_path):
        ds = _tiny_dataset()
        path = tmp_path / "data.qfd"
        write_dataset(ds, path)
        assert read_dataset(path) == ds

    def test_round_trip_thirty_clients(self, tmp_path):
        ds = generate_federated_dataset(
            GenConfig(n_clients=30, samples_per_client=8, seed=3), 0.5)
        path = tmp_path / "data.qfd"
        info = write_dataset(ds, path)
        assert info.n_clients == 30
        back = read_dataset(path)
        assert back == ds
        assert back.clients[0].distribution_tag is AngleDistribution.TRUNCATED_NORMAL

    def test_byte_determinism(self, tmp_path):
        ds = _tiny_dataset()
        a = tmp_path / "a.qfd"
        b = tmp_path / "b.qfd"
        write_dataset(ds, a)
        write_dataset(ds, b)
        assert a.read_bytes() == b.read_bytes()

    def test_flipped_byte_detected(self, tmp_path):
        ds = _tiny_dataset()
        path = tmp_path / "data.qfd"
        write_dataset(ds, path)
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0x01
        path.write_bytes(bytes(blob))
        with pytest.raises(DatasetCorruptionError):
            read_dataset(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "data.qfd"
        path.write_text("QFLDATA v9\nchecksum=0000000000000000\n")
        with pytest.raises(DatasetVersionError):
            read_dataset(path)

    def test_not_a_container(self, tmp_path):
        path = tmp_path / "data.qfd"
        path.write_text("hello world\n")
        with pytest.raises(DatasetFormatError):
            read_dataset(path)

    def test_empty_dataset_round_trip(self, tmp_path):
        ds = FederatedDataset((), GenConfig(n_clients=0), 1)
        path = tmp_path / "empty.qfd"
        info = write_dataset(ds, path)
        assert info.n_clients == 0
        back = read_dataset(path)
        assert back.clients == ()
        assert back.gen_config == ds.gen_config

    def test_labels_and_angles_bit_exact(self, tmp_path):
        ds = _tiny_dataset(seed=17)
        path = tmp_path / "data.qfd"
        write_dataset(ds, path)
        back = read_dataset(path)
        for ca, cb in zip(ds.clients, back.clients):
            for sa, sb in zip(ca.samples, cb.samples):
                assert sa.label == sb.label
                assert sa.prep_circuit == sb.prep_circuit

    def test_gen_config_floats_round_trip(self, tmp_path):
        cfg = GenConfig(n_clients=1, samples_per_client=8,
                        trunc_normal_sigma=1.2345678901234567,
                        excitation_threshold=0.9876543210987654, seed=123)
        ds = generate_federated_dataset(cfg)
        path = tmp_path / "data.qfd"
        write_dataset(ds, path)
        assert read_dataset(path).gen_config == cfg

    def test_client_count_mismatch_detected(self, tmp_path):
        ds = _tiny_dataset()
        path = tmp_path / "data.qfd"
        write_dataset(ds, path)
        text = path.read_text()
        # Drop the last client block but fix the checksum so only the
        # header/body count check can catch it.
        head, body = text.split("\n", 2)[0], text.split("\n", 2)[2]
        lines = body.split("\n")
        cut = next(i for i in range(len(lines) - 1, -1, -1)
                   if lines[i].startswith("client "))
        new_body = "\n".join(lines[:cut]) + "\n"
        from qflsim.store import checksum_bytes
        blob = f"{head}\nchecksum={checksum_bytes(new_body.encode())}\n{new_body}"
        path.write_text(blob)
        with pytest.raises(DatasetFormatError):
            read_dataset(path)

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            read_dataset(tmp_path / "nope.qfd")
