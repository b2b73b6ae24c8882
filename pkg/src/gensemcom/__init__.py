"""Multi-task generative semantic communication: image reconstruction and segmentation over a noisy channel."""

from .config import ExperimentConfig, desk_config, load_config, full_config
from .pipeline import SemComSystem

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "SemComSystem", "desk_config", "load_config", "full_config", "__version__"]
