"""
Pipeline configuration: defaults, JSON config files, environment and flag overrides.
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Mapping, Optional, Union

from .errors import InvalidArgumentError, SignalIOError
from .tf import WINDOW_KINDS, WindowSpec

config_logger = logging.getLogger(__name__)


def env_int(name: str, default: int) -> int:
    """Positive integer from the environment; unset or malformed values fall back to the default"""
    raw = os.environ.get(name)
    if raw in (None, ''):
        return default
    try:
        value = int(raw)
    except ValueError:
        config_logger.warning(f"{name}={raw!r} is not an integer; using {default}")
        return default
    if value < 1:
        config_logger.warning(f"{name}={value} must be positive; using {default}")
        return default
    return value


# Process-level settings, read once at import
DEFAULT_THREADS = env_int('BSS_THREADS', os.cpu_count() or 1)
DEFAULT_OUT_DIR = os.environ.get('BSS_OUT_DIR', os.path.join(os.getcwd(), 'out'))
MAX_UPLOAD_MB = env_int('BSS_MAX_UPLOAD_MB', 64)

PERM_METHODS = ('method1', 'method2', 'method3', 'method4', 'method5', 'method6')
ICA_INITS = ('canonical', 'random')


@dataclass(frozen=True)
class PipelineConfig:
    fft_size: int = 1024
    window_kind: str = 'hamming'
    overlap: float = 0.65
    # Small enough that regularized whitening stays near-white in bins one source dominates
    reg_m: float = 1e-6
    max_iter: int = 100
    conv_tol: float = 1e-6
    perm_method: str = 'method5'
    profile_tf: Union[int, str] = 'all'
    seed: int = 0
    filter_len_eval: int = 1024
    ica_init: str = 'canonical'
    record_timing: bool = True

    def __post_init__(self) -> None:
        if self.fft_size < 4 or self.fft_size % 2:
            raise InvalidArgumentError(f"fft_size must be even and >= 4, got {self.fft_size}")
        if self.window_kind not in WINDOW_KINDS:
            raise InvalidArgumentError(f"window_kind must be one of {WINDOW_KINDS}, got {self.window_kind!r}")
        if self.reg_m < 0:
            raise InvalidArgumentError(f"reg_m must be >= 0, got {self.reg_m}")
        if self.max_iter < 1:
            raise InvalidArgumentError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.conv_tol > 0:
            raise InvalidArgumentError(f"conv_tol must be > 0, got {self.conv_tol}")
        if self.perm_method not in PERM_METHODS:
            raise InvalidArgumentError(f"perm_method must be one of {PERM_METHODS}, got {self.perm_method!r}")
        if self.profile_tf != 'all' and (not isinstance(self.profile_tf, int) or self.profile_tf < 1):
            raise InvalidArgumentError(f"profile_tf must be 'all' or a positive integer, got {self.profile_tf!r}")
        if self.filter_len_eval < 1:
            raise InvalidArgumentError(f"filter_len_eval must be >= 1, got {self.filter_len_eval}")
        if self.ica_init not in ICA_INITS:
            raise InvalidArgumentError(f"ica_init must be one of {ICA_INITS}, got {self.ica_init!r}")
        # Validates overlap and the resulting shift
        self.window

    @property
    def window(self) -> WindowSpec:
        return WindowSpec(kind=self.window_kind, length=self.fft_size, overlap=self.overlap)

    def to_dict(self) -> Dict[str, Any]:
        """Flat, key-sorted snapshot embedded in reports"""
        return dict(sorted(asdict(self).items()))

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'PipelineConfig':
        cleaned = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **_coerce(cleaned))


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(values: Mapping[str, Any]) -> Dict[str, Any]:
    """Check keys against PipelineConfig and convert string values from forms and flags"""
    out: Dict[str, Any] = {}
    for key, value in values.items():
        if key not in _FIELD_TYPES:
            raise InvalidArgumentError(f"unknown configuration key: {key!r}")
        default = getattr(PipelineConfig, key)
        try:
            if key == 'profile_tf':
                out[key] = value if value == 'all' else int(value)
            elif isinstance(default, bool):
                out[key] = value if isinstance(value, bool) else str(value).lower() in ('1', 'true', 'yes', 'on')
            elif isinstance(default, int):
                out[key] = int(value)
            elif isinstance(default, float):
                out[key] = float(value)
            else:
                out[key] = str(value)
        except (TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"invalid value for {key}: {value!r}") from exc
    return out


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> PipelineConfig:
    """Resolve defaults < JSON file < overrides (flags)"""
    config = PipelineConfig()
    if path:
        try:
            with open(path, 'r', encoding='utf-8') as fh:
                data = json.load(fh)
        except OSError as exc:
            raise SignalIOError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidArgumentError(f"config file {path} must hold a JSON object")
        config = config.with_overrides(data)
    if overrides:
        config = config.with_overrides(overrides)
    return config
