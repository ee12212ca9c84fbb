"""Run configuration: sectioned ``key = value`` text files.

Unknown keys are rejected so typos surface as errors instead of silently
falling back to defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..audio import FrontendConfig
from ..model import ModelConfig
from ..numerics import ScheduleConfig

TASKS = ("pretrain", "tag", "seq2seq")

# warmup schedule constants per task: (k, warmup_n)
TASK_SCHEDULES = {"pretrain": (0.5, 8000), "tag": (0.5, 8000), "seq2seq": (2.5, 25000)}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    task: str = "pretrain"
    seed: int = 0
    batch_size: int = 256
    epochs: int = 50
    max_steps: int = 0
    train_manifest: str = ""
    valid_manifest: str = ""
    checkpoint_dir: str = "checkpoints"
    feature_cache: str = ""
    eval_every: int = 0
    keep_best: int = 5
    select_metric: str = ""
    speed_perturb: tuple = ()
    mask_rate: float = 0.15
    loss_mode: str = "masked"
    label_smoothing: float = 0.1
    beam: int = 10
    max_len: int = 50
    vocab: str = "bpe"
    bpe_size: int = 8000
    classes: tuple = ()
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    base_dir: str = "."

    @property
    def metric(self) -> str:
        if self.select_metric:
            return self.select_metric
        return {"pretrain": "masked_l1", "tag": "uar", "seq2seq": "loss"}[self.task]

    @property
    def metric_direction(self) -> str:
        return "min" if self.metric in ("masked_l1", "loss") else "max"

    def path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["speed_perturb"] = list(self.speed_perturb)
        d["classes"] = list(self.classes)
        return d

    def validate(self, check_paths: bool = True) -> "RunConfig":
        problems = []
        if self.task not in TASKS:
            problems.append(f"[run] task: must be one of {', '.join(TASKS)}, got {self.task!r}")
        if self.batch_size < 1:
            problems.append(f"[run] batch_size: must be >= 1, got {self.batch_size}")
        if self.epochs < 1 and self.max_steps < 1:
            problems.append("[run] epochs/max_steps: one of them must be positive")
        if self.keep_best < 1:
            problems.append(f"[run] keep_best: must be >= 1, got {self.keep_best}")
        if not 0.0 <= self.mask_rate <= 1.0:
            problems.append(f"[pretrain] mask_rate: must lie in [0, 1], got {self.mask_rate}")
        if self.loss_mode not in ("masked", "all"):
            problems.append(f"[pretrain] loss_mode: must be 'masked' or 'all', got {self.loss_mode!r}")
        if self.vocab not in ("bpe", "words"):
            problems.append(f"[seq2seq] vocab: must be 'bpe' or 'words', got {self.vocab!r}")
        if self.metric not in ("masked_l1", "loss", "uar", "macro_f1", "bleu"):
            problems.append(f"[run] select_metric: unknown metric {self.metric!r}")
        if any(f <= 0 for f in self.speed_perturb):
            problems.append(f"[run] speed_perturb: factors must be positive, got {list(self.speed_perturb)}")
        if self.schedule.d_model != self.model.d_model:
            problems.append("[schedule] d_model must equal [model] d_model")
        if check_paths:
            if not self.train_manifest:
                problems.append("[run] train_manifest: required")
            elif not self.path(self.train_manifest).is_file():
                problems.append(f"[run] train_manifest: file not found: {self.path(self.train_manifest)}")
            if self.valid_manifest and not self.path(self.valid_manifest).is_file():
                problems.append(f"[run] valid_manifest: file not found: {self.path(self.valid_manifest)}")
        if problems:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
        return self


_SECTIONS = {
    "run": ("task", "seed", "batch_size", "epochs", "max_steps", "train_manifest", "valid_manifest",
            "checkpoint_dir", "feature_cache", "eval_every", "keep_best", "select_metric",
            "speed_perturb", "classes"),
    "pretrain": ("mask_rate", "loss_mode"),
    "seq2seq": ("label_smoothing", "beam", "max_len", "vocab", "bpe_size"),
}


def _coerce(section: str, key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int) or (default is None and key in ("vocab_size", "n_classes")):
            return int(raw) if raw.strip() else None
        if isinstance(default, float) or (default is None and key == "fmax"):
            return float(raw) if raw.strip() else None
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            return tuple(float(x) for x in items) if key == "speed_perturb" else tuple(items)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {type(default).__name__}") from None


def _section_values(parser, section: str, cls_defaults: dict) -> dict:
    out = {}
    if not parser.has_section(section):
        return out
    for key, raw in parser.items(section):
        if key not in cls_defaults:
            raise ConfigError(f"[{section}] {key}: unknown key")
        out[key] = _coerce(section, key, raw, cls_defaults[key])
    return out


def _defaults(cls) -> dict:
    return {f.name: getattr(cls(), f.name) for f in fields(cls)}


def parse_config(text: str, base_dir: str | Path = ".") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"malformed config: {err}") from None
    known = set(_SECTIONS) | {"frontend", "model", "schedule"}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"[{section}]: unknown section")
    run_defaults = _defaults(RunConfig)
    values: dict = {}
    for section, keys in _SECTIONS.items():
        vals = _section_values(parser, section, {k: run_defaults[k] for k in keys})
        values.update(vals)
    task = values.get("task", "pretrain")
    try:
        frontend = FrontendConfig(**_section_values(parser, "frontend", _defaults(FrontendConfig)))
        model = ModelConfig(**_section_values(parser, "model", _defaults(ModelConfig)))
        k, warm = TASK_SCHEDULES.get(task, TASK_SCHEDULES["pretrain"])
        sched_vals = {"k": k, "warmup_n": warm, "d_model": model.d_model}
        sched_vals.update(_section_values(parser, "schedule", _defaults(ScheduleConfig)))
        schedule = ScheduleConfig(**sched_vals)
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"invalid configuration: {err}") from None
    if "speed_perturb" not in values and task in ("tag", "seq2seq"):
        values["speed_perturb"] = (0.9, 1.1)
    return RunConfig(frontend=frontend, model=model, schedule=schedule, base_dir=str(base_dir), **values)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"{path}: cannot read config ({err.strerror})") from None
    return parse_config(text, path.parent)


def config_from_dict(d: dict) -> RunConfig:
    d = dict(d)
    frontend = FrontendConfig(**d.pop("frontend"))
    model = ModelConfig(**d.pop("model"))
    schedule = ScheduleConfig(**d.pop("schedule"))
    d["speed_perturb"] = tuple(d.get("speed_perturb", ()))
    d["classes"] = tuple(d.get("classes", ()))
    return RunConfig(frontend=frontend, model=model, schedule=schedule, **d)


def with_seed(cfg: RunConfig, seed: int | None) -> RunConfig:
    return cfg if seed is None else replace(cfg, seed=seed)


DEFAULT_CONFIG = """\
# Full-size experiment values; shrink [model] and [run] for desk-scale runs.
[run]
task = pretrain
seed = 0
batch_size = 256          # experiments: 256 pre-train, 64 SER, 128 SED, 512 ST
epochs = 50               # experiments: 50 (25 for SER)
train_manifest = train.tsv
checkpoint_dir = checkpoints
keep_best = 5             # average of the best 5 checkpoints
# speed_perturb = 0.9, 1.1  (default for tag/seq2seq fine-tuning)

[pretrain]
mask_rate = 0.15
loss_mode = masked

[seq2seq]
label_smoothing = 0.1
beam = 10
vocab = bpe
bpe_size = 8000

[frontend]
window_ms = 25
hop_ms = 10
n_mels = 40

[model]
d_model = 256
ffn = 2048
heads = 4
dropout = 0.1
enc_layers = 12
dec_layers = 6
downsample = 4

[schedule]
k = 0.5                   # 0.3 for SED, 2.5 for ST
warmup_n = 8000           # 25000 for ST
"""
