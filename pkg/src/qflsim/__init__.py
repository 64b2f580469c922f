"""Desk-scale simulator of federated training of quantum convolutional
classifiers on locally generated cluster-state excitation data."""

from .datagen import (
    AngleDistribution,
    ClientDataset,
    FederatedDataset,
    GenConfig,
    cluster_state_circuit,
    generate_federated_dataset,
)
from .federated import (
    ClientState,
    ClientUpdate,
    OptimizerConfig,
    RoundRecord,
    ServerState,
    TrainConfig,
    centralized_train,
    evaluate,
    federated_average,
    local_train,
    optimizer_step,
    run_round,
    run_training,
)
from .model import (
    ArchitectureSpec,
    Model,
    ParamVector,
    Sample,
    build_architecture,
    build_model,
    build_model_circuit,
    conv_unit,
    default_architecture,
    gradient,
    init_params,
    mse_loss,
    param_count,
    parameter_names,
    pool_unit,
    predict,
)
from .sim import (
    Circuit,
    GateOp,
    StateVector,
    apply_circuit,
    apply_gate,
    expectation_z,
    gate_matrix,
    new_zero_state,
)
from .store import parse_circuit, read_dataset, serialize_circuit, write_dataset

__version__ = "0.1.0"
