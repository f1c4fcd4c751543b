"""A simulator of small base stations learning to allocate resources to virtual reality users with correlated data."""

from .config import ExperimentConfig, LearnerSettings, ConfigError, load_config
from .network import NetworkConfig
from .correlation import ContentParams
from .learner import Learner
from .simulator import Simulator, LEARNERS
