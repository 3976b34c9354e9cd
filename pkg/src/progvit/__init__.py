"""Progressive and automated progressive training of small vision transformers."""
from .config import RunConfig, load_config
from .growth import GrowthKind, grow
from .model import ModelConfig, SubNetSpec, build_model, forward
from .schedule import GrowthSchedule, StagePlan
from .train import evaluate, run, train_autoprog, train_baseline, train_prog

__version__ = "0.1.0"
