"""Training configuration and its canonical plain-text form.

The file format is INI-style `key = value` under fixed sections. The
serialized form is canonical (fixed section order, sorted keys), so the
same configuration always produces byte-identical text; checkpoints
embed exactly this text.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .losses import LossWeights
from .networks import DiscriminatorConfig, GeneratorConfig, ModelConfig


@dataclass
class TrainConfig:
    # [train]
    scale: int = 2
    batch_size: int = 16
    lr_g: float = 1e-4
    lr_d: float = 5e-4
    lr_idwt: float = 1e-4
    iterations: int = 500
    eval_every: int = 100
    seed: int = 0
    hr_size: int = 64
    manifest: str = ""
    # [loss]
    loss: LossWeights = field(default_factory=LossWeights)
    # [generator]
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    # [discriminator]
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    # [ablation]
    use_attention: bool = True
    use_instance_norm: bool = True
    use_wavelet_loss: bool = True
    learnable_idwt: bool = True

    def validate(self):
        if self.scale not in (2, 4, 8):
            raise ConfigError(f"scale must be 2, 4 or 8, got {self.scale}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        for name in ("lr_g", "lr_d", "lr_idwt"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.hr_size % (2 * self.scale):
            raise ConfigError(f"hr_size {self.hr_size} must be divisible by "
                              f"2*scale={2 * self.scale}")
        self.loss.validate()
        self.generator.scale_factor = self.scale
        self.generator.validate()
        self.discriminator.use_instance_norm = self.use_instance_norm
        self.discriminator.validate()
        return self

    def model_config(self):
        self.validate()
        return ModelConfig(
            generator=self.generator,
            discriminator=self.discriminator,
            hr_band_size=self.hr_size // 2,
            use_attention=self.use_attention,
            learnable_idwt=self.learnable_idwt,
        ).validate()


_SECTIONS = {
    "train": [("scale", int), ("batch_size", int), ("lr_g", float),
              ("lr_d", float), ("lr_idwt", float), ("iterations", int),
              ("eval_every", int), ("seed", int), ("hr_size", int),
              ("manifest", str)],
    "loss": [("lambda1", float), ("lambda2", float), ("lambda3", float),
             ("lambda4", float), ("alpha", float), ("beta", float),
             ("epsilon", float)],
    "generator": [("num_rrdb", int), ("base_channels", int),
                  ("growth_channels", int), ("residual_scale", float)],
    "discriminator": [("num_conv", int), ("fc_hidden", int),
                      ("base_channels", int)],
    "ablation": [("use_attention", bool), ("use_instance_norm", bool),
                 ("use_wavelet_loss", bool), ("learnable_idwt", bool)],
}


def _get(cfg: TrainConfig, section, key):
    if section == "train" or section == "ablation":
        return getattr(cfg, key)
    if section == "loss":
        return getattr(cfg.loss, key)
    if section == "generator":
        return getattr(cfg.generator, key)
    if section == "discriminator":
        if key == "fc_hidden":
            return cfg.discriminator.fc_sizes[0]
        return getattr(cfg.discriminator, key)
    raise ConfigError(f"unknown section {section}")


def _set(cfg: TrainConfig, section, key, value):
    if section == "train" or section == "ablation":
        setattr(cfg, key, value)
    elif section == "loss":
        setattr(cfg.loss, key, value)
    elif section == "generator":
        setattr(cfg.generator, key, value)
    elif section == "discriminator":
        if key == "fc_hidden":
            cfg.discriminator.fc_sizes = (value, 1)
        else:
            setattr(cfg.discriminator, key, value)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_text(cfg: TrainConfig) -> str:
    """Canonical textual form; stable byte-for-byte for equal configs."""
    out = io.StringIO()
    for section, keys in _SECTIONS.items():
        out.write(f"[{section}]\n")
        for key, _typ in sorted(keys):
            out.write(f"{key} = {_fmt(_get(cfg, section, key))}\n")
        out.write("\n")
    return out.getvalue()


def _parse_bool(s):
    sl = s.strip().lower()
    if sl in ("true", "1", "yes", "on"):
        return True
    if sl in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"invalid boolean {s!r}")


def from_text(text: str) -> TrainConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg = TrainConfig()
    known = {s: dict(keys) for s, keys in _SECTIONS.items()}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in known[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            typ = known[section][key]
            try:
                value = _parse_bool(raw) if typ is bool else typ(raw)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
            _set(cfg, section, key, value)
    return cfg.validate()


def load_file(path) -> TrainConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return from_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def apply_overrides(cfg: TrainConfig, overrides) -> TrainConfig:
    """Apply `section.key=value` strings (CLI flags beat file values)."""
    known = {s: dict(keys) for s, keys in _SECTIONS.items()}
    for spec in overrides:
        if "=" not in spec or "." not in spec.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {spec!r}")
        target, raw = spec.split("=", 1)
        section, key = target.split(".", 1)
        section, key, raw = section.strip(), key.strip(), raw.strip()
        if section not in known or key not in known[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        typ = known[section][key]
        try:
            value = _parse_bool(raw) if typ is bool else typ(raw)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
        _set(cfg, section, key, value)
    return cfg.validate()
