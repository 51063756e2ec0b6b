"""Experiment configuration and the flat ``key = value`` config file format."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .audio import DEMAND_ENVIRONMENTS, DEFAULT_SNRS_DB, SYNTHETIC_ENVIRONMENTS
from .cl import CLConfig
from .errors import UsageError
from .quant import confidence_threshold_q


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "synthetic"  # "synthetic" or "gscd"
    gscd_dir: str | None = None
    demand_dir: str | None = None
    environments: tuple[str, ...] = ()
    snrs_db: tuple[float, ...] = DEFAULT_SNRS_DB
    seed: int = 0
    output_dir: str = "runs"
    n_intervals: int = 25
    n_yes: int = 64
    n_no: int = 64
    n_train_per_class: int = 400
    n_test_per_class: int = 200
    eval_per_class: int = 200
    noise_duration_s: float = 300.0
    train_epochs: int = 15
    train_learning_rate: float = 0.001
    train_optimizer: str = "adam"
    train_batch_size: int = 32
    qat_epochs: int = 0
    train_noise_clips: int = 400  # noise-only clips with target 0.5 in initial training
    jobs: int = 1
    cl: CLConfig = field(default_factory=CLConfig)

    def __post_init__(self):
        if self.dataset not in ("synthetic", "gscd"):
            raise UsageError(f"unknown dataset {self.dataset!r}")
        if not self.environments:
            envs = SYNTHETIC_ENVIRONMENTS if self.dataset == "synthetic" else DEMAND_ENVIRONMENTS
            object.__setattr__(self, "environments", tuple(envs))
        if self.n_yes + self.n_no > self.cl.interval:
            raise UsageError("keywords per interval exceed the interval length")

    @property
    def n_noise(self) -> int:
        return self.cl.interval - self.n_yes - self.n_no

    def with_cl(self, **changes) -> "ExperimentConfig":
        return replace(self, cl=replace(self.cl, **changes))


# config-file key -> (target, attribute, parser)
def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {s!r}")


def _list(conv):
    return lambda s: tuple(conv(x.strip()) for x in s.split(",") if x.strip())


def _opt_str(s):
    return s or None


KEYS = {
    "dataset": ("exp", "dataset", str),
    "gscd_dir": ("exp", "gscd_dir", _opt_str),
    "demand_dir": ("exp", "demand_dir", _opt_str),
    "environments": ("exp", "environments", _list(str)),
    "snrs_db": ("exp", "snrs_db", _list(float)),
    "seed": ("exp", "seed", int),
    "output_dir": ("exp", "output_dir", str),
    "n_intervals": ("exp", "n_intervals", int),
    "n_train_per_class": ("exp", "n_train_per_class", int),
    "n_test_per_class": ("exp", "n_test_per_class", int),
    "eval_per_class": ("exp", "eval_per_class", int),
    "noise_duration_s": ("exp", "noise_duration_s", float),
    "jobs": ("exp", "jobs", int),
    "stream.n_yes": ("exp", "n_yes", int),
    "stream.n_no": ("exp", "n_no", int),
    "train.epochs": ("exp", "train_epochs", int),
    "train.learning_rate": ("exp", "train_learning_rate", float),
    "train.optimizer": ("exp", "train_optimizer", str),
    "train.batch_size": ("exp", "train_batch_size", int),
    "train.qat_epochs": ("exp", "qat_epochs", int),
    "train.noise_clips": ("exp", "train_noise_clips", int),
    "denoise.alpha": ("cl", "alpha", float),
    "denoise.wavelet": ("cl", "wavelet", _bool),
    "denoise.spectral": ("cl", "spectral", _bool),
    "prototypes.n_sigma": ("cl", "n_sigma", float),
    "cl.confidence_threshold": ("cl", "confidence_threshold_q", lambda s: confidence_threshold_q(float(s))),
    "cl.confidence_threshold_q": ("cl", "confidence_threshold_q", int),
    "cl.interval": ("cl", "interval", int),
    "cl.rehearsal_per_class": ("cl", "rehearsal_per_class", int),
    "cl.epochs_per_update": ("cl", "epochs_per_update", int),
    "cl.learning_rate": ("cl", "learning_rate", float),
    "cl.optimizer": ("cl", "optimizer", str),
    "cl.batch_size": ("cl", "batch_size", int),
    "cl.effective_cap": ("cl", "effective_cap", int),
    "cl.recalibrate": ("cl", "recalibrate", _bool),
}


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise UsageError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def from_mapping(values: dict[str, str], base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    exp_changes, cl_changes = {}, {}
    for key, raw in values.items():
        if key not in KEYS:
            raise UsageError(f"unknown key {key!r}")
        target, attr, conv = KEYS[key]
        try:
            value = conv(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise UsageError(f"{key}: {exc}") from exc
        (exp_changes if target == "exp" else cl_changes)[attr] = value
    cl = replace(base.cl, **cl_changes)
    if "environments" not in exp_changes and "dataset" in exp_changes:
        exp_changes["environments"] = ()
    return replace(base, cl=cl, **exp_changes)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return from_mapping(parse_config_text(Path(path).read_text()), base)


def to_mapping(cfg: ExperimentConfig) -> dict:
    """Flat dict of every documented key (used in run metadata)."""
    out = {}
    cl = asdict(cfg.cl)
    for key, (target, attr, _) in KEYS.items():
        if key == "cl.confidence_threshold":
            continue
        value = getattr(cfg, attr) if target == "exp" else cl[attr]
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in to_mapping(cfg).items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif value is None:
            value = ""
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def exp_field_names() -> list[str]:
    return [f.name for f in fields(ExperimentConfig)]
