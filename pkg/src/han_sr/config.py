"""Line-oriented `key = value` run configuration.

Blank lines and `#` comments are ignored. Unknown keys are rejected so typos
fail loudly. Defaults follow the reference training recipe (patch 64, batch
16, Adam 1e-5 with betas 0.9/0.999 and eps 1e-8, 10 residual groups); desk
runs override them downward.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .data import BD, BI
from .model import ConfigError, ModelConfig


@dataclass
class RunConfig:
    # model
    n_groups: int = 10
    n_blocks: int = 2
    channels: int = 16
    reduction: int = 4
    scale: int = 2
    csam_count: int = 1
    use_lam: bool = True
    use_csam: bool = True
    rgb_range: float = 1.0
    # optimizer
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16
    steps: int = 100
    # data
    dataset_dir: str = ""
    degradation: str = BI
    blur_ksize: int = 7
    blur_sigma: float = 1.6
    patch_size: int = 64
    num_patches: int = 64
    augment: bool = True
    # run
    seed: int = 0
    checkpoint: str = "han.ckpt"
    checkpoint_every: int = 0
    loss_log: str = ""

    def validate(self) -> "RunConfig":
        self.model_config().validate()
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.degradation not in (BI, BD):
            raise ConfigError(f"degradation must be '{BI}' or '{BD}'")
        if self.patch_size < 8:
            raise ConfigError("patch_size must be >= 8")
        if self.num_patches < 1:
            raise ConfigError("num_patches must be >= 1")
        if not self.checkpoint:
            raise ConfigError("checkpoint path must be set")
        return self

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            n_groups=self.n_groups, n_blocks=self.n_blocks,
            channels=self.channels, reduction=self.reduction,
            scale=self.scale, csam_count=self.csam_count,
            use_lam=self.use_lam, use_csam=self.use_csam,
            rgb_range=self.rgb_range)


_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False,
               "yes": True, "no": False}


def _convert(name: str, kind: type, raw: str):
    if kind is bool:
        try:
            return _BOOL_WORDS[raw.lower()]
        except KeyError:
            raise ConfigError(f"{name}: expected a boolean, got {raw!r}") from None
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{name}: expected {kind.__name__}, got {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    kinds = {f.name: f.type for f in fields(RunConfig)}
    # dataclass field types arrive as strings under `from __future__ import annotations`
    named = {"int": int, "float": float, "bool": bool, "str": str}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kind = named[kinds[key]] if isinstance(kinds[key], str) else kinds[key]
        values[key] = _convert(key, kind, raw)
    return RunConfig(**values).validate()


def config_text(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
