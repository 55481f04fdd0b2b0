"""Volume-preserving neural networks for learning source-free dynamics."""

from ._core import (
    FormatError,
    Network,
    NotEmbeddableError,
    ShapeError,
    build_lavpnet,
    build_rvpnet,
    check_volume,
    factor_volume_preserving,
    gradcheck,
    load_checkpoint,
    make_dataset,
    planar_energy,
    preset_names,
    preset_state,
    randomize,
    reference_trajectory,
    save_network,
    train,
    volterra_product,
    volterra_sum,
)

__all__ = [
    "FormatError",
    "Network",
    "NotEmbeddableError",
    "ShapeError",
    "build_lavpnet",
    "build_rvpnet",
    "check_volume",
    "factor_volume_preserving",
    "gradcheck",
    "load_checkpoint",
    "make_dataset",
    "planar_energy",
    "preset_names",
    "preset_state",
    "randomize",
    "reference_trajectory",
    "save_network",
    "train",
    "volterra_product",
    "volterra_sum",
]
