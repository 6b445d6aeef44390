from .cavity import (
    helmholtz_dirichlet,
    poisson_dirichlet,
    solve_cavity,
    streamfunction_from_velocity,
    velocity_from_streamfunction,
)
from .dataset import CaseRecord, Dataset, generate_dataset, load_dataset, persist_dataset
from .signals import (
    ControlPoints,
    InputSignal,
    gaussian_rbf_interpolant,
    sample_control_points,
    sample_control_signal,
)
from .solids import amplitude_map, dogbone_mask, synth_masked_stress, von_mises_field
from .types import DomainMask, FieldVideo

__all__ = [
    "CaseRecord",
    "ControlPoints",
    "Dataset",
    "DomainMask",
    "FieldVideo",
    "InputSignal",
    "amplitude_map",
    "dogbone_mask",
    "gaussian_rbf_interpolant",
    "generate_dataset",
    "helmholtz_dirichlet",
    "load_dataset",
    "persist_dataset",
    "poisson_dirichlet",
    "sample_control_points",
    "sample_control_signal",
    "solve_cavity",
    "streamfunction_from_velocity",
    "synth_masked_stress",
    "velocity_from_streamfunction",
    "von_mises_field",
]
