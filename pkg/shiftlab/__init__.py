from .config import ExperimentConfig, parse_config, serialize_config
from .config_key import ConfigKey
from .config_schema import ConfigSchema
from .config_warning import ConfigWarning
from .model import Mode, TrainConfig
from .normalization import NormKind
from .active_learning import ALConfig, StrategyKind
from .version import __version__
