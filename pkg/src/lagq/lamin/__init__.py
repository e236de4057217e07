"""Q-models, smoothed-Lagrangian gradient estimators and training."""

from .estimators import (DemoBlock, UpdateResult, bc_update, boltzmann_coefficients,
                         boltzmann_policy, boltzmann_value, boltzmann_value_gradient,
                         central_difference, gradient_check, lamin1_update, lamin2_successor_gradient,
                         lamin2_update, relative_error, smoothed_lagrangian_1state, td_error)
from .models import LinearQModel, MlpQModel, QModel, TabularQModel
from .training import (ElpDemoSource, RunRecord, TrainConfig, TrainingDiverged, train)

__all__ = [
    "DemoBlock", "UpdateResult", "bc_update", "boltzmann_coefficients", "boltzmann_policy",
    "boltzmann_value", "boltzmann_value_gradient", "central_difference", "gradient_check",
    "lamin1_update", "lamin2_successor_gradient", "lamin2_update", "relative_error",
    "smoothed_lagrangian_1state", "td_error", "LinearQModel", "MlpQModel", "QModel",
    "TabularQModel", "ElpDemoSource", "RunRecord", "TrainConfig", "TrainingDiverged", "train",
]
