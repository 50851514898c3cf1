"""Pipeline configuration and the flat ``key = value`` config file format."""
import dataclasses
from dataclasses import dataclass, field, fields

from .errors import ConfigError


@dataclass(frozen=True)
class BackboneConfig:
    in_channels: int = 3
    stem_channels: int = 16
    level_channels: tuple = (32, 64, 128)
    blocks: int = 1

    def validate(self):
        c3, c4, c5 = self.level_channels
        if not (0 < c3 < c4 < c5):
            raise ConfigError(f"level channels must increase strictly, got {self.level_channels}")
        if min(self.in_channels, self.stem_channels, self.blocks + 1) <= 0 or self.blocks < 0:
            raise ConfigError("backbone extents must be positive")
        if any(c % 2 for c in self.level_channels):
            raise ConfigError("level channels must be even (channel swap splits them in half)")


@dataclass(frozen=True)
class PipelineConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    image_size: int = 640
    wavelet: bool = True
    embed_dim: int = 256
    d_model: int = 256
    heads: int = 8
    decoder_layers: int = 6
    queries: int = 300
    sampling_points: int = 4
    repblocks: int = 3
    num_classes: int = 3
    eca_kernel: int = 3
    lambda_cls: float = 2.0
    lambda_l1: float = 5.0
    lambda_giou: float = 2.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    seed: int = 0
    step_size: float = 1e-3
    steps: int = 200
    clip_norm: float = 10.0

    def validate(self):
        self.backbone.validate()
        positive = ("image_size", "embed_dim", "d_model", "heads", "decoder_layers", "queries",
                    "sampling_points", "num_classes", "eca_kernel")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.repblocks < 0 or self.steps < 0:
            raise ConfigError("repblocks and steps must be non-negative")
        if self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} not divisible by heads={self.heads}")
        if self.backbone.level_channels[2] % self.heads:
            raise ConfigError(
                f"level-5 channels {self.backbone.level_channels[2]} not divisible by heads={self.heads}")
        if self.image_size % 64:
            raise ConfigError(f"image_size={self.image_size} must be divisible by 64")
        if self.eca_kernel % 2 == 0:
            raise ConfigError("eca_kernel must be odd")
        if self.step_size <= 0 or self.clip_norm <= 0:
            raise ConfigError("step_size and clip_norm must be positive")
        return self

    def replace(self, **changes):
        bb = {k[len("backbone_"):]: changes.pop(k) for k in list(changes) if k.startswith("backbone_")}
        out = dataclasses.replace(self, **changes)
        if bb:
            out = dataclasses.replace(out, backbone=dataclasses.replace(out.backbone, **bb))
        return out


PROFILES = {
    "full": PipelineConfig(),
    "test": PipelineConfig(image_size=64, embed_dim=32, d_model=32, heads=2, decoder_layers=2,
                           queries=10, repblocks=1, num_classes=2, step_size=0.01),
}


def profile(name):
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None


def _parse_bool(text):
    low = text.lower()
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise ValueError(text)


_SCALAR_KEYS = {f.name: f.type for f in fields(PipelineConfig) if f.name != "backbone"}
_BACKBONE_KEYS = {
    "backbone.stem_channels": "stem_channels",
    "backbone.blocks": "blocks",
    "backbone.in_channels": "in_channels",
}


def parse_config(text):
    """Parse flat ``key = value`` lines; ``profile`` picks the base, unknown keys fail."""
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        entries.append((lineno, key, value))

    base = "full"
    for lineno, key, value in entries:
        if key == "profile":
            base = value
    cfg = profile(base)
    changes = {}
    seen = set()
    for lineno, key, value in entries:
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        if key == "profile":
            continue
        try:
            if key in _SCALAR_KEYS:
                kind = _SCALAR_KEYS[key]
                if kind in (bool, "bool"):
                    changes[key] = _parse_bool(value)
                elif kind in (float, "float"):
                    changes[key] = float(value)
                else:
                    changes[key] = int(value)
            elif key in _BACKBONE_KEYS:
                changes["backbone_" + _BACKBONE_KEYS[key]] = int(value)
            elif key == "backbone.level_channels":
                changes["backbone_level_channels"] = tuple(int(v) for v in value.split(","))
                if len(changes["backbone_level_channels"]) != 3:
                    raise ValueError(value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {value!r} for {key!r}") from None
    return cfg.replace(**changes).validate()


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def dump_config(cfg):
    lines = []
    for f in fields(PipelineConfig):
        v = getattr(cfg, f.name)
        if f.name == "backbone":
            lines.append(f"backbone.in_channels = {v.in_channels}")
            lines.append(f"backbone.stem_channels = {v.stem_channels}")
            lines.append("backbone.level_channels = " + ",".join(str(c) for c in v.level_channels))
            lines.append(f"backbone.blocks = {v.blocks}")
        elif isinstance(v, bool):
            lines.append(f"{f.name} = {'on' if v else 'off'}")
        else:
            lines.append(f"{f.name} = {v!r}")
    return "\n".join(lines) + "\n"
