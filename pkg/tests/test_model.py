"""Architecture construction, forward pass, loss and gradients."""

import math

import numpy as np
import pytest

import oracles
from qflsim.datagen import GenConfig, cluster_state_circuit, generate_client_dataset
from qflsim.errors import ConfigError, UnresolvedParameterError
from qflsim.model import (
    ArchitectureSpec,
    LayerSpec,
    Model,
    ModelEvaluator,
    ParamVector,
    Sample,
    build_architecture,
    build_model,
    build_model_circuit,
    conv_unit,
    default_architecture,
    fc_unit,
    gradient,
    init_params,
    mse_loss,
    param_count,
    parameter_names,
    pool_unit,
    predict,
    readout_gradient,
)
from qflsim.sim import Circuit, apply_circuit, cnot, h, new_zero_state, rx
from qflsim.store import serialize_circuit

# Dense-oracle values for the seed-0 client-0 batch under seed-0 parameters,
# computed with tests/oracles.py before wiring the assertions.
GOLDEN_P0 = 0.49489352353996441
GOLDEN_MSE4 = 0.12614316816246679


def _sample_batch(n=4, seed=0):
    return generate_client_dataset(GenConfig(n_clients=1, seed=seed), 0).samples[:n]


def _rand_state(rng, n):
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return psi / np.linalg.norm(psi)


class TestArchitecture:
    def test_default_eight_qubits(self):
        arch = default_architecture(8)
        assert param_count(arch) == 63
        assert [l.kind for l in arch.layers] == ["conv", "pool"] * 3
        assert arch.layers[2].active_qubits == (1, 3, 5, 7)
        assert arch.layers[4].active_qubits == (3, 7)
        assert arch.readout_qubit == 7

    def test_two_qubits(self):
        arch = default_architecture(2)
        assert param_count(arch) == 21
        assert arch.readout_qubit == 1

    @pytest.mark.parametrize("n", [1, 6, 12, 32])
    def test_rejects_non_power_of_two(self, n):
        with pytest.raises(ConfigError):
            default_architecture(n)

    def test_fully_connected_adds_three(self):
        arch = build_architecture(8, include_fc=True)
        assert param_count(arch) == 66
        assert arch.layers[-1].kind == "fc"
        assert parameter_names(arch)[-3:] == ("f_0", "f_1", "f_2")

    def test_partial_stages(self):
        arch = build_architecture(8, n_stages=2, readout_qubit=3)
        assert param_count(arch) == 42
        assert arch.readout_qubit == 3

    def test_readout_must_survive_pooling(self):
        with pytest.raises(ConfigError):
            build_architecture(8, readout_qubit=0)

    def test_layer_consistency_enforced(self):
        with pytest.raises(ConfigError):
            ArchitectureSpec(4, (LayerSpec("conv", (0, 1)),), 3)

    def test_parameter_names_unique_and_layer_major(self):
        names = parameter_names(default_architecture(8))
        assert len(names) == len(set(names)) == 63
        assert names[0] == "c0_0"
        assert names[15] == "p0_0"
        assert names[21] == "c1_0"


class TestConvUnit:
    def test_zero_angles_is_identity(self):
        ops = conv_unit(0, 1, [f"s{i}" for i in range(15)])
        bindings = {f"s{i}": 0.0 for i in range(15)}
        rng = np.random.default_rng(0)
        psi = _rand_state(rng, 2)
        out = apply_circuit(psi, Circuit(2, ops), bindings)
        assert np.allclose(out, psi, atol=1e-14)

    def test_wrong_symbol_count(self):
        with pytest.raises(ConfigError):
            conv_unit(0, 1, [f"s{i}" for i in range(14)])

    def test_random_angles_give_unitary(self):
        rng = np.random.default_rng(4)
        names = [f"s{i}" for i in range(15)]
        ops = conv_unit(0, 1, names)
        bindings = {n: float(rng.uniform(-math.pi, math.pi)) for n in names}
        u = oracles.circuit_unitary(Circuit(2, ops), bindings)
        assert np.max(np.abs(u.conj().T @ u - np.eye(4))) < 1e-12


class TestPoolUnit:
    def test_zero_angles_is_bare_cnot(self):
        ops = pool_unit(0, 1, [f"s{i}" for i in range(6)])
        bindings = {f"s{i}": 0.0 for i in range(6)}
        rng = np.random.default_rng(1)
        psi = _rand_state(rng, 2)
        got = apply_circuit(psi, Circuit(2, ops), bindings)
        want = apply_circuit(psi, Circuit(2, (cnot(0, 1),)))
        assert np.allclose(got, want, atol=1e-14)

    def test_sink_triple_with_inverse_is_identity(self):
        ops = pool_unit(0, 1, [f"s{i}" for i in range(6)])
        no_cnot = tuple(op for op in ops if op.kind != "CNOT" and op.targets == (1,))
        rng = np.random.default_rng(2)
        bindings = {f"s{i}": float(rng.uniform(-3, 3)) for i in range(6)}
        psi = _rand_state(rng, 2)
        out = apply_circuit(psi, Circuit(2, no_cnot), bindings)
        assert np.allclose(out, psi, atol=1e-13)

    def test_random_angles_match_dense_oracle(self):
        rng = np.random.default_rng(3)
        ops = pool_unit(0, 1, [f"s{i}" for i in range(6)])
        bindings = {f"s{i}": float(rng.uniform(-3, 3)) for i in range(6)}
        circuit = Circuit(2, ops)
        got = apply_circuit(new_zero_state(2), circuit, bindings)
        want = oracles.run_circuit(circuit, bindings)
        assert np.max(np.abs(got - want)) < 1e-12

    def test_wrong_symbol_count(self):
        with pytest.raises(ConfigError):
            pool_unit(0, 1, ["a", "b"])


class TestModelCircuit:
    def test_default_symbol_set(self):
        circuit = build_model_circuit(default_architecture(8))
        assert len(set(circuit.symbols())) == 63

    def test_weight_sharing_repeats_conv_symbols(self):
        circuit = build_model_circuit(default_architecture(8))
        uses = sum(1 for op in circuit.ops if op.symbol == "c0_0")
        assert uses == 8  # one per conv pair of the first layer

    def test_two_qubit_arch_has_single_conv_instance(self):
        circuit = build_model_circuit(default_architecture(2))
        conv_ops = [op for op in circuit.ops if op.symbol and op.symbol.startswith("c0_")]
        assert len(conv_ops) == 15

    def test_build_is_deterministic(self):
        arch = default_architecture(8)
        a = serialize_circuit(build_model_circuit(arch))
        b = serialize_circuit(build_model_circuit(arch))
        assert a == b


class TestPredict:
    def test_zero_params_on_bare_prep_gives_one(self):
        model = build_model(default_architecture(8))
        params = ParamVector(parameter_names(model.arch), np.zeros(63))
        bare = Circuit(8)  # |0...0>, no cluster circuit
        assert predict(bare, model, params) == pytest.approx(1.0, abs=1e-12)

    def test_prediction_in_unit_interval(self):
        model = build_model(default_architecture(8))
        rng = np.random.default_rng(8)
        for seed in range(3):
            params = init_params(model.arch, seed)
            sample = _sample_batch(1, seed=seed)[0]
            p = predict(sample.prep_circuit, model, params)
            assert 0.0 <= p <= 1.0

    def test_golden_value_against_dense_oracle(self):
        model = build_model(default_architecture(8))
        params = init_params(model.arch, 0)
        sample = _sample_batch(1)[0]
        assert predict(sample.prep_circuit, model, params) == pytest.approx(
            GOLDEN_P0, abs=1e-10)

    def test_pooled_out_qubits_outside_readout_cone(self):
        arch = default_architecture(8)
        model = build_model(arch)
        params = init_params(arch, 1)
        sample = _sample_batch(1)[0]
        base = predict(sample.prep_circuit, model, params)
        # Junk on retired source qubits after the full model circuit.
        junk = build_model_circuit(arch).ops + (h(0), rx(2, 1.1), h(4), rx(6, -0.7))
        noisy = Model(arch, Circuit(8, junk))
        assert predict(sample.prep_circuit, noisy, params) == pytest.approx(
            base, abs=1e-12)


class TestMseLoss:
    def test_zero_when_predictions_equal_labels(self):
        model = build_model(default_architecture(8))
        params = ParamVector(parameter_names(model.arch), np.zeros(63))
        batch = [Sample(Circuit(8), 1)]
        assert mse_loss(params, batch, model) == pytest.approx(0.0, abs=1e-12)

    def test_half_predictions_give_eighth(self):
        # H on the readout qubit makes <Z> = 0 exactly, so p = 0.5.
        model = build_model(default_architecture(8))
        params = ParamVector(parameter_names(model.arch), np.zeros(63))
        batch = [Sample(Circuit(8, (h(7),)), lab) for lab in (0, 1, 1)]
        assert mse_loss(params, batch, model) == pytest.approx(0.125, abs=1e-12)

    def test_empty_batch_rejected(self):
        model = build_model(default_architecture(8))
        params = init_params(model.arch, 0)
        with pytest.raises(ConfigError):
            mse_loss(params, [], model)

    def test_loss_nonnegative(self):
        model = build_model(default_architecture(8))
        batch = _sample_batch(6)
        for seed in range(3):
            assert mse_loss(init_params(model.arch, seed), batch, model) >= 0.0

    def test_golden_batch_value(self):
        model = build_model(default_architecture(8))
        params = init_params(model.arch, 0)
        assert mse_loss(params, _sample_batch(4), model) == pytest.approx(
            GOLDEN_MSE4, abs=1e-12)


class TestGradient:
    def test_zero_at_optimum(self):
        arch = ArchitectureSpec(1, (), 0)
        model = Model(arch, Circuit(1, (rx(0, symbol="t"),)))
        params = ParamVector(("t",), np.zeros(1))
        g = gradient(params, [Sample(Circuit(1), 1)], model)
        assert g == pytest.approx([0.0], abs=1e-15)

    @pytest.mark.parametrize("theta", [0.5, 1.3])
    def test_rx_readout_derivative_is_minus_sine(self, theta):
        arch = ArchitectureSpec(1, (), 0)
        model = Model(arch, Circuit(1, (rx(0, symbol="t"),)))
        params = ParamVector(("t",), np.array([theta]))
        dz = readout_gradient(params, Sample(Circuit(1), 0), model)
        assert dz[0] == pytest.approx(-math.sin(theta), abs=1e-12)

    def test_default_arch_matches_finite_differences(self):
        model = build_model(default_architecture(8))
        params = init_params(model.arch, 0)
        batch = _sample_batch(4)
        g = gradient(params, batch, model)

        def loss_fn(values):
            return mse_loss(params.with_values(values), batch, model)

        fd = oracles.finite_difference_gradient(loss_fn, np.array(params.values))
        denom = np.maximum(np.abs(fd), 1e-3)
        assert np.max(np.abs(g - fd) / denom) <= 1e-5

    def test_matches_literal_shift_evaluations(self):
        arch = default_architecture(2)
        model = build_model(arch)
        params = init_params(arch, 3)
        cfg = GenConfig(n_clients=1, n_qubits=2, samples_per_client=2, seed=5)
        sample = generate_client_dataset(cfg, 0).samples[0]
        dz = readout_gradient(params, sample, model)
        literal = oracles.shift_rule_gradient(
            sample.prep_circuit, model.circuit.ops, params.bindings(),
            params.names, arch.readout_qubit, 2)
        assert np.max(np.abs(dz - literal)) < 1e-12

    def test_fused_and_numpy_paths_agree(self):
        model = build_model(default_architecture(8))
        ev = ModelEvaluator(model, parameter_names(model.arch))
        params = init_params(model.arch, 2)
        batch = _sample_batch(3, seed=2)
        prep = ev.prep_states(batch)
        z_a, dz_a = ev.readout_z_and_gradient(prep, params.values)
        z_b, dz_b = ev._readout_z_and_gradient_numpy(prep, params.values)
        assert np.max(np.abs(z_a - z_b)) < 1e-13
        assert np.max(np.abs(dz_a - dz_b)) < 1e-13
        assert np.max(np.abs(ev.readout_z(prep, params.values)
                             - ev._readout_z_numpy(prep, params.values))) < 1e-13

    def test_shared_symbol_sums_occurrences(self):
        # Two RX gates sharing one symbol: d<Z>/dt of RX(2t) is -2 sin(2t).
        arch = ArchitectureSpec(1, (), 0)
        model = Model(arch, Circuit(1, (rx(0, symbol="t"), rx(0, symbol="t"))))
        theta = 0.4
        params = ParamVector(("t",), np.array([theta]))
        dz = readout_gradient(params, Sample(Circuit(1), 0), model)
        assert dz[0] == pytest.approx(-2 * math.sin(2 * theta), abs=1e-12)

    def test_unknown_symbol_rejected(self):
        arch = ArchitectureSpec(1, (), 0)
        model = Model(arch, Circuit(1, (rx(0, symbol="t"),)))
        with pytest.raises(ConfigError):
            gradient(ParamVector(("other",), np.zeros(1)),
                     [Sample(Circuit(1), 0)], model)


class TestParamVector:
    def test_lengths_must_match(self):
        with pytest.raises(ConfigError):
            ParamVector(("a", "b"), np.zeros(3))

    def test_names_must_be_unique(self):
        with pytest.raises(ConfigError):
            ParamVector(("a", "a"), np.zeros(2))

    def test_values_are_read_only(self):
        pv = ParamVector(("a",), np.zeros(1))
        with pytest.raises(ValueError):
            pv.values[0] = 1.0

    def test_init_params_seeded_and_bounded(self):
        arch = default_architecture(8)
        a = init_params(arch, 9)
        b = init_params(arch, 9)
        assert np.array_equal(a.values, b.values)
        assert np.all(np.abs(a.values) <= 0.5)
        assert not np.array_equal(a.values, init_params(arch, 10).values)
