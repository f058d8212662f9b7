"""Measurement-aware grouping of Pauli-word Hamiltonians.

Partition a qubit Hamiltonian into simultaneously measurable fragments via
conflict-graph coloring: greedy baselines, an exact small-instance search,
and a trainable flow-network sampler whose reward balances group count
against the estimated measurement budget.
"""
from .gflownet import (
    ColoringMDP,
    ColoringState,
    TrainConfig,
    TrainedSampler,
    Trajectory,
    encode_state,
    flow_matching_loss,
    forward_policy,
    legal_actions,
    sample_trajectory,
    train,
)
from .graphs import (
    CompatGraph,
    Coloring,
    Grouping,
    build_complement_graph,
    coloring_to_dot,
    coloring_to_grouping,
    exact_min_colors,
    greedy_color,
    validate_coloring,
)
from .hamio import (
    bundled_path,
    dump_hamiltonian,
    load_hamiltonian,
    loads_hamiltonian,
    write_hamiltonian,
)
from .measurement import MeasurementConfig, estimate_measurements, reward
from .nn import AdamState, DenseNet, adam_accumulate_and_step, load_checkpoint, save_checkpoint
from .pauli import PauliWord, QubitHamiltonian, commutes_fc, commutes_qwc

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Coloring",
    "ColoringMDP",
    "ColoringState",
    "CompatGraph",
    "DenseNet",
    "Grouping",
    "MeasurementConfig",
    "PauliWord",
    "QubitHamiltonian",
    "TrainConfig",
    "TrainedSampler",
    "Trajectory",
    "adam_accumulate_and_step",
    "build_complement_graph",
    "bundled_path",
    "coloring_to_dot",
    "coloring_to_grouping",
    "commutes_fc",
    "commutes_qwc",
    "dump_hamiltonian",
    "encode_state",
    "estimate_measurements",
    "exact_min_colors",
    "flow_matching_loss",
    "forward_policy",
    "greedy_color",
    "legal_actions",
    "load_checkpoint",
    "load_hamiltonian",
    "loads_hamiltonian",
    "reward",
    "sample_trajectory",
    "save_checkpoint",
    "train",
    "validate_coloring",
    "write_hamiltonian",
]
