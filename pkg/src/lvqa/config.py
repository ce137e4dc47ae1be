"""Run configuration: line-oriented ``section.key=value`` with strict keys.

Defaults below are the single source of truth for key names and types;
unknown keys are rejected and every command writes its resolved
configuration beside its outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .answerer import LossWeights
from .consolidation import FtcConfig
from .errors import ConfigError
from .synthbench import GenSpec

DEFAULTS: dict[str, object] = {
    "run.seed": 0,
    "pipeline.use_ftc": True,
    "pipeline.use_tg": True,
    "pipeline.use_pi": True,

    "ftc.patch_t": 2,
    "ftc.patch_s": 8,
    "ftc.layers": 2,
    "ftc.channels": (32, 32),
    "ftc.embed_dim": 32,
    "ftc.mask_fraction": 0.3,
    "ftc.sample_fraction": 0.25,

    "tms.w": 8,
    "tms.budget": 8,
    "tms.grounder": "noisy_oracle",
    "tms.delta": 4,
    "tms.policy_fixed": "",
    "tms.top_units": 3,
    "tms.sigma_ratio": 0.5,
    "tms.ushape_exponent": 2.0,
    "tms.ushape_floor": 0.05,
    "tms.instructor_embed": 16,
    "tms.instructor_hidden": 32,
    "tms.grounder_steps": 150,
    "tms.grounder_lr": 0.05,
    "tms.grounder_examples": 200,

    "answerer.hidden": 64,
    "answerer.max_answer_len": 12,
    "answerer.lambda_ret": 0.5,
    "answerer.lambda_policy": 0.5,
    "answerer.epochs": 3,
    "answerer.batch_size": 2,
    "answerer.grad_accum": 8,
    "answerer.lr": 5e-4,
    "answerer.weight_decay": 0.01,
    "answerer.optimizer": "adamw",

    "synthbench.train_instances": 144,
    "synthbench.val_instances": 16,
    "synthbench.test_instances": 32,
    "synthbench.episode_frames": 68,
    "synthbench.episodes_per_instance": 2,
    "synthbench.fps": 4.0,
    "synthbench.height": 16,
    "synthbench.width": 16,
    "synthbench.channels": 3,
    "synthbench.event_amplitude": 2.0,
    "synthbench.noise_std": 0.05,
    "synthbench.fluid_frames": 5,
    "synthbench.motion_frames": 5,
    "synthbench.instrument_frames": 2,
    "synthbench.phase_frames": 4,

    "metrics.oracle_answers": False,

    "bench.frames": (64, 128, 256, 512, 1024),
    "bench.samples": 8,
}


def _coerce(key: str, raw: str, default) -> object:
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            return tuple(int(part) for part in raw.split(",") if part.strip())
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"cannot parse {key}={raw!r}") from None


@dataclass
class RunConfig:
    values: dict[str, object] = field(default_factory=dict)

    def __getitem__(self, key: str):
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"unknown config key {key!r}") from None

    def with_overrides(self, **overrides) -> "RunConfig":
        """Copy with dotted keys overridden (e.g. pipeline_use_ftc -> pipeline.use_ftc)."""
        out = dict(self.values)
        for key, value in overrides.items():
            dotted = key.replace("__", ".")
            if dotted not in out:
                raise ConfigError(f"unknown config key {dotted!r}")
            out[dotted] = value
        return RunConfig(out)

    # typed views over the flat keys -------------------------------------

    def ftc_config(self) -> FtcConfig:
        if self["pipeline.use_ftc"]:
            return FtcConfig(patch_t=self["ftc.patch_t"], patch_s=self["ftc.patch_s"],
                             layers=self["ftc.layers"], channels=self["ftc.channels"],
                             embed_dim=self["ftc.embed_dim"],
                             mask_fraction=self["ftc.mask_fraction"],
                             sample_fraction=self["ftc.sample_fraction"])
        # consolidation disabled: identity patching, one token per pixel-frame
        return FtcConfig(patch_t=1, patch_s=1, layers=self["ftc.layers"],
                         channels=self["ftc.channels"],
                         embed_dim=self["ftc.embed_dim"],
                         mask_fraction=self["ftc.mask_fraction"],
                         sample_fraction=self["ftc.sample_fraction"])

    def gen_spec(self) -> GenSpec:
        return GenSpec(episode_frames=self["synthbench.episode_frames"],
                       episodes_per_instance=self["synthbench.episodes_per_instance"],
                       fps=self["synthbench.fps"],
                       height=self["synthbench.height"],
                       width=self["synthbench.width"],
                       channels=self["synthbench.channels"],
                       event_amplitude=self["synthbench.event_amplitude"],
                       noise_std=self["synthbench.noise_std"],
                       fluid_frames=self["synthbench.fluid_frames"],
                       motion_frames=self["synthbench.motion_frames"],
                       instrument_frames=self["synthbench.instrument_frames"],
                       phase_frames=self["synthbench.phase_frames"],
                       patch_t=self["ftc.patch_t"],
                       patch_s=self["ftc.patch_s"])

    def loss_weights(self) -> LossWeights:
        lam_ret = self["answerer.lambda_ret"] if self["pipeline.use_ftc"] else 0.0
        lam_policy = self["answerer.lambda_policy"] if self["pipeline.use_pi"] else 0.0
        return LossWeights(lam_ret, lam_policy)


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected section.key=value")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def resolve(config_path=None, seed: int | None = None) -> RunConfig:
    """Defaults, overridden by the config file, overridden by CLI flags."""
    values = dict(DEFAULTS)
    if config_path is not None:
        raw = parse_config_text(Path(config_path).read_text())
        for key, text in raw.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _coerce(key, text, DEFAULTS[key])
    if seed is not None:
        values["run.seed"] = int(seed)
    cfg = RunConfig(values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    cfg.ftc_config()
    cfg.gen_spec()
    cfg.loss_weights()
    if cfg["tms.budget"] < cfg.ftc_config().patch_t:
        raise ConfigError("tms.budget must cover at least one temporal unit")
    if cfg["tms.w"] < 0:
        raise ConfigError("tms.w must be non-negative")
    if cfg["tms.grounder"] not in ("oracle", "noisy_oracle", "learned"):
        raise ConfigError(f"unknown grounder {cfg['tms.grounder']!r}")
    fixed = cfg["tms.policy_fixed"]
    if fixed and fixed not in ("gaussian", "uniform", "dense", "ushape"):
        raise ConfigError(f"unknown fixed policy {fixed!r}")
    if cfg["answerer.optimizer"] not in ("adamw", "sgd"):
        raise ConfigError(f"unknown optimizer {cfg['answerer.optimizer']!r}")


def write_resolved(cfg: RunConfig, path) -> None:
    with open(path, "w") as f:
        for key in sorted(cfg.values):
            value = cfg.values[key]
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            f.write(f"{key}={value}\n")
