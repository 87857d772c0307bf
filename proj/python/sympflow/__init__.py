"""Symplectic neural flow maps for Hamiltonian systems."""

from ._core import (
    Baseline,
    CheckpointError,
    NumericalError,
    SympFlow,
    System,
    TrainingConfig,
    UnsupportedError,
    check,
    load_checkpoint,
    registered_systems,
    rk45,
    save_checkpoint,
    stormer_verlet,
    symplecticity_defect,
    train,
)

__all__ = [
    "Baseline",
    "CheckpointError",
    "NumericalError",
    "SympFlow",
    "System",
    "TrainingConfig",
    "UnsupportedError",
    "check",
    "load_checkpoint",
    "registered_systems",
    "rk45",
    "save_checkpoint",
    "stormer_verlet",
    "symplecticity_defect",
    "train",
]
