"""LITE / LITEMV time series classifiers implemented in NumPy."""

__version__ = "0.1.0"

from .architectures import (  # noqa: E402
    ARCHITECTURES,
    FCNConfig,
    LiteConfig,
    ModelState,
    build_fcn,
    build_lite,
    build_model,
    count_mults,
    count_params,
    forward,
    load_model,
    receptive_field,
    save_model,
)
from .data import Dataset, load_dataset, make_synthetic, znormalize  # noqa: E402
from .trainer import TrainConfig, train  # noqa: E402
