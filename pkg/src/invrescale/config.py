"""Training configuration and its flat ``key = value`` text form."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .backbone import BackboneConfig, EncodingMode
from .losses import LossWeights
from .resample import ResampleMethod


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 4
    patch_size: int = 48
    iterations: int = 1000
    base_lr: float = 2e-4
    lr_halving_period: int = 500
    scale_min: float = 1.0
    scale_max: float = 4.0
    asymmetric: bool = False
    seed: int = 0
    method: ResampleMethod = ResampleMethod.NEAREST
    channel_split: bool = True
    hflip: bool = True
    zhat: str = "zero"
    grad_clip: float = 5.0
    min_lr_side: int = 8
    weights: LossWeights = field(default_factory=LossWeights)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)

    def __post_init__(self):
        self.method = ResampleMethod.parse(self.method)
        if self.zhat not in ("zero", "gaussian"):
            raise ConfigError(f"zhat must be 'zero' or 'gaussian', got {self.zhat!r}")
        if not (0 < self.scale_min <= self.scale_max):
            raise ConfigError("need 0 < scale_min <= scale_max")
        if self.batch_size < 1 or self.patch_size < 1 or self.iterations < 0:
            raise ConfigError("batch_size and patch_size must be positive, iterations non-negative")
        if self.lr_halving_period < 1:
            raise ConfigError("lr_halving_period must be >= 1")
        if self.patch_size / self.scale_min < self.min_lr_side:
            raise ConfigError(f"patch_size {self.patch_size} cannot give an LR side >= {self.min_lr_side}")


# flat key -> (owner, attribute)
_KEYS: dict[str, tuple[str, str]] = {}
for _f in fields(TrainConfig):
    if _f.name not in ("weights", "backbone"):
        _KEYS[_f.name] = ("train", _f.name)
for _name in ("num_blocks", "atrous_layers", "feature_width", "clamp", "use_atrous", "encoding_mode"):
    _KEYS[_name] = ("backbone", _name)
for _name, _attr in (("lambda_r", "recon"), ("lambda_g", "guide"), ("lambda_d", "latent"), ("lambda_i", "invert")):
    _KEYS[_name] = ("weights", _attr)


def _owner(cfg: TrainConfig, owner: str):
    return {"train": cfg, "backbone": cfg.backbone, "weights": cfg.weights}[owner]


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (ResampleMethod, EncodingMode)):
        return v.value
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(current, text: str, key: str):
    try:
        if isinstance(current, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(current, ResampleMethod):
            return ResampleMethod.parse(text)
        if isinstance(current, EncodingMode):
            return EncodingMode.parse(text)
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def to_flat(cfg: TrainConfig) -> dict[str, str]:
    return {key: _format_value(getattr(_owner(cfg, o), a)) for key, (o, a) in _KEYS.items()}


def apply_overrides(cfg: TrainConfig, pairs: dict[str, str]) -> TrainConfig:
    """Return a new config with ``pairs`` applied; unknown keys are errors."""
    flat = to_flat(cfg)
    for key, value in pairs.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        flat[key] = value
    return from_flat(flat)


def from_flat(pairs: dict[str, str]) -> TrainConfig:
    defaults = TrainConfig(backbone=BackboneConfig(), weights=LossWeights())
    train_kw, bb_kw, w_kw = {}, {}, {}
    for key, value in pairs.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        owner, attr = _KEYS[key]
        current = getattr(_owner(defaults, owner), attr)
        parsed = _parse_value(current, value, key)
        {"train": train_kw, "backbone": bb_kw, "weights": w_kw}[owner][attr] = parsed
    try:
        return TrainConfig(backbone=BackboneConfig(**bb_kw), weights=LossWeights(**w_kw), **train_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_text(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        pairs[key] = value
    return pairs


def format_text(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in to_flat(cfg).items())


def load_config(path) -> TrainConfig:
    return from_flat(parse_text(Path(path).read_text(encoding="utf-8")))
