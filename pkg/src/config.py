"""
Configuration Manager for mcrec

Holds every training hyperparameter in one JSON-backed dictionary.
Precedence is DEFAULT_CONFIG < config file < command-line overrides.
The default config file lives in ~/.mcrec/config.json.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from src.core.errors import ConfigError

# Application Constants
APP_NAME = "mcrec"
CONFIG_DIR = Path.home() / f".{APP_NAME}"
CONFIG_FILE = CONFIG_DIR / "config.json"
LOG_ENV_VAR = "MCREC_LOG"

LOG_FORMAT = "[%(asctime)s.%(msecs)03d][%(levelname)s] %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"

VARIANTS = ("full", "mc_only", "no_cp", "no_f", "reduced")
NEGATIVE_MODES = ("any", "overall")

# Default Configuration (same keys as TrainConfig; the CLI uses every core by default)
DEFAULT_CONFIG = {
    "layers": 3,
    "dim": 64,
    "lr": 1e-3,
    "reg_lambda": 1e-3,
    "alpha": 1.5,
    "scale": 1.0,
    "pairnorm": True,
    "pairnorm_layer0": True,
    "batch_size": 1024,
    "max_batches_per_epoch": 16,
    "max_epochs": 100,
    "patience": 10,
    "seed": 2023,
    "variant": "full",
    "negative_mode": "any",
    "use_rating_weights": False,
    "k_values": [5, 10],
    "exclude_valid": True,
    "threads": os.cpu_count() or 1,
}


@dataclass(frozen=True)
class TrainConfig:
    """
    All hyperparameters of one training run.

    Defaults: d=64, lr=1e-3, lambda=1e-3, alpha=1.5, s=1, mini-batch 1024.
    An epoch takes at most max_batches_per_epoch steps; on large graphs the
    batches grow past batch_size so every epoch still covers |E| triples.
    """

    layers: int = 3
    dim: int = 64
    lr: float = 1e-3
    reg_lambda: float = 1e-3
    alpha: float = 1.5
    scale: float = 1.0
    pairnorm: bool = True
    pairnorm_layer0: bool = True
    batch_size: int = 1024
    max_batches_per_epoch: int = 16
    max_epochs: int = 100
    patience: int = 10
    seed: int = 2023
    variant: str = "full"
    negative_mode: str = "any"
    use_rating_weights: bool = False
    k_values: Tuple[int, ...] = field(default=(5, 10))
    exclude_valid: bool = True
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        for name in ("lr", "reg_lambda", "alpha", "scale"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("layers", "dim", "batch_size", "max_batches_per_epoch", "max_epochs",
                     "threads"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.patience < 0:
            raise ConfigError(f"patience must be >= 0, got {self.patience}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got '{self.variant}'")
        if self.negative_mode not in NEGATIVE_MODES:
            raise ConfigError(
                f"negative_mode must be one of {NEGATIVE_MODES}, got '{self.negative_mode}'"
            )
        if not self.k_values or min(self.k_values) < 1:
            raise ConfigError(f"k_values must be positive, got {self.k_values}")

    @property
    def uses_pairnorm(self) -> bool:
        """PairNorm is active unless disabled or an ablation without it is chosen"""
        return self.pairnorm and self.variant not in ("no_f", "reduced")

    def replace(self, **changes: Any) -> "TrainConfig":
        """Copy with some fields changed (validated again)"""
        values = self.to_dict()
        values.update(changes)
        return TrainConfig(**values)

    def to_dict(self) -> Dict[str, Any]:
        """JSON-friendly echo of the config"""
        values = asdict(self)
        values["k_values"] = list(self.k_values)
        return values

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "TrainConfig":
        unknown = set(values) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(str(e)) from e


class ConfigManager:
    """
    Loads run configuration from JSON files.

    Features:
    - Auto-creates the home config directory and file with defaults
    - Loads an explicit config file when one is given (--config)
    - Applies command-line overrides on top without persisting them
    """

    def __init__(self, path: Optional[Path] = None):
        """
        Initialize configuration manager

        Args:
            path: Explicit JSON config file; None uses ~/.mcrec/config.json
        """
        if path is None:
            self._ensure_config_exists()
            self.path = CONFIG_FILE
        else:
            self.path = Path(path)
            if not self.path.exists():
                raise ConfigError(f"config file not found: {self.path}")
        self.config = self._load_config()

    def _ensure_config_exists(self):
        """Create config directory and file if they don't exist"""
        try:
            if not CONFIG_DIR.exists():
                CONFIG_DIR.mkdir(parents=True, exist_ok=True)
                logging.getLogger(__name__).info("Created config directory: %s", CONFIG_DIR)

            if not CONFIG_FILE.exists():
                with open(CONFIG_FILE, "w") as f:
                    json.dump(DEFAULT_CONFIG, f, indent=4)
                logging.getLogger(__name__).info("Created default config file: %s", CONFIG_FILE)
        except OSError as e:
            raise ConfigError(f"cannot create config: {e}") from e

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from JSON file, merged over the defaults"""
        try:
            with open(self.path, "r") as f:
                loaded_config = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {self.path}: {e}") from e
        if not isinstance(loaded_config, dict):
            raise ConfigError(f"config {self.path} must hold a JSON object")
        unknown = set(loaded_config) - set(DEFAULT_CONFIG)
        if unknown:
            raise ConfigError(f"unknown config keys in {self.path}: {sorted(unknown)}")
        return {**DEFAULT_CONFIG, **loaded_config}

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get a configuration value

        Args:
            key: Configuration key
            default: Default value if key not found

        Returns:
            Configuration value or default
        """
        return self.config.get(key, default)

    def apply_overrides(self, overrides: Dict[str, Any]) -> None:
        """
        Apply command-line overrides in memory only

        Args:
            overrides: Flag values keyed by config key; None means "not given"
        """
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in DEFAULT_CONFIG:
                raise ConfigError(f"unknown config key: {key}")
            self.config[key] = value

    def to_train_config(self) -> TrainConfig:
        """Validated TrainConfig built from the current values"""
        return TrainConfig.from_dict(self.config)


def setup_logging(level: Optional[str] = None) -> int:
    """
    Configure root logging from MCREC_LOG (or an explicit level)

    Args:
        level: Level name; None reads the MCREC_LOG environment variable

    Returns:
        The numeric level that was applied
    """
    name = (level or os.environ.get(LOG_ENV_VAR) or "INFO").upper()
    numeric = getattr(logging, name, None)
    if not isinstance(numeric, int):
        numeric = logging.INFO
    logging.basicConfig(format=LOG_FORMAT, datefmt=LOG_DATEFMT, level=numeric, force=True)
    return numeric
