"""Run configuration: model dimensions, scene scale, optimizer settings.

Defaults are desk scale (hidden dim 64, 20-step history / 30-step future at
10 Hz, 30 epochs); the full-scale reference settings are hidden dim 128,
80 epochs with a 10-epoch warmup. Exactly one coordinate mode is active:

* ``polar``          -- polar I/O with (dr, cos dth, sin dth) relative features
* ``cartesian-ori``  -- Cartesian I/O, still polar relative features
* ``cartesian-mod``  -- Cartesian I/O with (dx, dy) relative features
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

COORDINATE_MODES = ("polar", "cartesian-ori", "cartesian-mod")
LOSS_BRANCHES = ("polar", "cartesian", "both")
AGENT_ENCODERS = ("ssm", "gru")
ENSEMBLE_SPACES = ("full", "endpoint")


class ConfigError(ValueError):
    """Configuration value out of range or inconsistent."""


@dataclass
class RunConfig:
    # model
    hidden_dim: int = 64
    num_modes: int = 6
    num_heads: int = 1
    encoder_ret_layers: int = 3
    decoder_layers: int = 2
    refine_depth: int = 2
    refine_ret_layers: int = 2
    agent_encoder_blocks: int = 3
    dropout: float = 0.2
    coordinate_mode: str = "polar"
    use_lane_change: bool = True
    use_relative_transformer: bool = True
    ret_relative_self_attention: bool = True
    share_refine_params: bool = False
    agent_encoder: str = "ssm"
    # losses
    loss_branches: str = "both"
    sum_refine_losses: bool = True
    smooth_l1_beta: float = 1.0
    # scene
    history_steps: int = 20
    future_steps: int = 30
    dt: float = 0.1
    max_agents: int = 8
    max_lanes: int = 16
    lane_points: int = 10
    noise_std: float = 0.05
    # optimization
    epochs: int = 30
    warmup_epochs: int = 3
    batch_size: int = 4
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    seed: int = 0
    # evaluation
    ensemble_space: str = "full"

    def __post_init__(self):
        self.validate()

    def validate(self):
        positive = (
            "hidden_dim", "num_modes", "num_heads", "encoder_ret_layers",
            "decoder_layers", "refine_ret_layers", "agent_encoder_blocks",
            "history_steps", "future_steps", "max_agents", "max_lanes",
            "lane_points", "epochs", "batch_size",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.refine_depth < 0:
            raise ConfigError(f"refine_depth must be >= 0, got {self.refine_depth}")
        if self.coordinate_mode not in COORDINATE_MODES:
            raise ConfigError(
                f"coordinate_mode must be one of {COORDINATE_MODES}, got {self.coordinate_mode!r}"
            )
        if self.loss_branches not in LOSS_BRANCHES:
            raise ConfigError(
                f"loss_branches must be one of {LOSS_BRANCHES}, got {self.loss_branches!r}"
            )
        if self.agent_encoder not in AGENT_ENCODERS:
            raise ConfigError(
                f"agent_encoder must be one of {AGENT_ENCODERS}, got {self.agent_encoder!r}"
            )
        if self.ensemble_space not in ENSEMBLE_SPACES:
            raise ConfigError(
                f"ensemble_space must be one of {ENSEMBLE_SPACES}, got {self.ensemble_space!r}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.hidden_dim % self.num_heads != 0:
            raise ConfigError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}"
            )
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {unknown}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        """Load from a JSON or TOML file (by extension)."""
        text = open(path, "rb").read()
        if str(path).endswith(".toml"):
            import tomllib

            data = tomllib.loads(text.decode())
        else:
            try:
                data = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: not valid JSON: {e}") from e
        return cls.from_dict(data)

    def with_overrides(self, overrides: dict) -> "RunConfig":
        data = self.to_dict()
        for key, value in overrides.items():
            if key not in data:
                raise ConfigError(f"unknown config field {key!r}")
            data[key] = value
        return RunConfig.from_dict(data)


def parse_override(text: str, reference: RunConfig | None = None) -> tuple[str, object]:
    """Parse a ``field=value`` CLI override, typed per the dataclass field."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like field=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    fields = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    if key not in fields:
        raise ConfigError(f"unknown config field {key!r}")
    current = getattr(reference or RunConfig(), key)
    if isinstance(current, bool):
        if raw.lower() in ("1", "true", "yes"):
            return key, True
        if raw.lower() in ("0", "false", "no"):
            return key, False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(current, int):
        return key, int(raw)
    if isinstance(current, float):
        return key, float(raw)
    return key, raw


# fields that must match between a checkpoint and the evaluating model
MODEL_FIELDS = (
    "hidden_dim", "num_modes", "num_heads", "encoder_ret_layers", "decoder_layers",
    "refine_depth", "refine_ret_layers", "agent_encoder_blocks", "coordinate_mode",
    "use_lane_change", "use_relative_transformer", "ret_relative_self_attention",
    "share_refine_params", "agent_encoder", "future_steps",
)


def check_model_compat(checkpoint_config: dict, config: RunConfig):
    """Raise :class:`ConfigError` naming every model field that differs."""
    mismatches = []
    for name in MODEL_FIELDS:
        if name in checkpoint_config and checkpoint_config[name] != getattr(config, name):
            mismatches.append(
                f"{name}: checkpoint={checkpoint_config[name]!r} config={getattr(config, name)!r}"
            )
    if mismatches:
        raise ConfigError("checkpoint/config mismatch: " + "; ".join(mismatches))
