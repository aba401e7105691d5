import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


VARIANTS = ("full", "A", "B", "C", "D")
BETA_TERMS = ("user_source", "item_source", "user_target", "item_target", "domain_source", "domain_target")

# Ranges searched when tuning; advisory only, nothing iterates over them.
SEARCH_GRIDS = {
    "model.dim": (16, 32, 64, 128),
    "model.warmup": (10, 20, 30, 40, 50),
    "model.beta": (0.5, 1.0, 1.5, 2.0, 2.5, 3.0),
    "model.group_size": (64, 128, 256, 512, 1024),
    "model.dropout": (0.0, 0.1, 0.2, 0.3, 0.4, 0.5),
}


class ConfigError(ValueError):
    """Invalid or unknown configuration entry, identified by its dotted key path."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


def _require(condition: bool, key: str, message: str):
    if not condition:
        raise ConfigError(key, message)


@dataclass
class HyperParams:
    """
    Model and optimizer hyperparameters.

    :param layers: Encoder depth K (default: 3).
    :param dim: Embedding width d (default: 32).
    :param group_size: Users N sampled per domain for the level-2 path (default: 256).
    :param beta: Shared Lagrangian multiplier of every compression term (default: 1.0).
    :param beta_overrides: Per-term multipliers, keyed by BETA_TERMS.
    :param warmup: Epochs before the matching loss joins the objective (default: 10).
    :param batch_size: Training edges per optimizer step (default: 1024).
    :param negatives: Sampled negatives per positive pair (default: 4).
    """
    layers: int = 3
    dim: int = 32
    group_size: int = 256
    beta: float = 1.0
    beta_overrides: dict[str, float] = field(default_factory=dict)
    heads: int = 2
    dropout: float = 0.3
    warmup: int = 10
    lr: float = 1e-3
    weight_decay: float = 1e-6
    batch_size: int = 1024
    negatives: int = 4
    seed: int | None = None

    @property
    def width(self) -> int:
        return self.layers * self.dim

    def beta_for(self, term: str) -> float:
        if term not in BETA_TERMS:
            raise KeyError(f"unknown beta term '{term}'")
        return float(self.beta_overrides.get(term, self.beta))

    def validate(self, prefix: str = "model"):
        _require(self.layers >= 1, f"{prefix}.layers", "must be >= 1")
        _require(self.dim >= 1, f"{prefix}.dim", "must be >= 1")
        _require(self.group_size >= 1, f"{prefix}.group_size", "must be >= 1")
        _require(self.beta >= 0, f"{prefix}.beta", "must be >= 0")
        for term, value in self.beta_overrides.items():
            _require(term in BETA_TERMS, f"{prefix}.beta_overrides.{term}", f"unknown term, expected one of {BETA_TERMS}")
            _require(float(value) >= 0, f"{prefix}.beta_overrides.{term}", "must be >= 0")
        _require(self.heads >= 1 and self.width % self.heads == 0, f"{prefix}.heads",
                 f"must be >= 1 and divide layers * dim = {self.width}")
        _require(0.0 <= self.dropout < 1.0, f"{prefix}.dropout", "must be in [0, 1)")
        _require(self.warmup >= 0, f"{prefix}.warmup", "must be >= 0")
        _require(self.lr > 0, f"{prefix}.lr", "must be > 0")
        _require(self.weight_decay >= 0, f"{prefix}.weight_decay", "must be >= 0")
        _require(self.batch_size >= 1, f"{prefix}.batch_size", "must be >= 1")
        _require(self.negatives >= 1, f"{prefix}.negatives", "must be >= 1")
        _require(self.seed is None or self.seed >= 0, f"{prefix}.seed", "must be a non-negative integer")


@dataclass
class DataConfig:
    """Interaction files, or synthetic generator settings, plus the split protocol."""
    source: str | None = None
    target: str | None = None
    synthetic: dict | None = None
    delimiter: str = ","
    min_user_interactions: int = 5
    min_item_interactions: int = 10
    normalization: str = "symmetric"
    overlap_fraction: float = 0.0
    eval_fraction: float = 0.2

    def validate(self, prefix: str = "data"):
        has_files = self.source is not None or self.target is not None
        _require(has_files or self.synthetic is not None, prefix, "needs source/target paths or a synthetic section")
        _require(not (has_files and self.synthetic is not None), prefix, "give either files or synthetic, not both")
        if has_files:
            _require(self.source is not None, f"{prefix}.source", "missing")
            _require(self.target is not None, f"{prefix}.target", "missing")
        _require(self.min_user_interactions >= 1, f"{prefix}.min_user_interactions", "must be >= 1")
        _require(self.min_item_interactions >= 1, f"{prefix}.min_item_interactions", "must be >= 1")
        _require(self.normalization in ("symmetric", "row", "none"), f"{prefix}.normalization",
                 "must be 'symmetric', 'row' or 'none'")
        _require(0.0 <= self.overlap_fraction <= 1.0, f"{prefix}.overlap_fraction", "must be in [0, 1]")
        _require(0.0 < self.eval_fraction < 1.0, f"{prefix}.eval_fraction", "must be in (0, 1)")


@dataclass
class TrainSettings:
    max_epochs: int = 70
    patience: int = 10
    eval_every: int = 1
    output_dir: str = "runs/latest"
    exact_reconstruction: bool = False
    cross_block_negatives: bool = True

    def validate(self, prefix: str = "train"):
        _require(self.max_epochs >= 1, f"{prefix}.max_epochs", "must be >= 1")
        _require(self.patience >= 1, f"{prefix}.patience", "must be >= 1")
        _require(self.eval_every >= 1, f"{prefix}.eval_every", "must be >= 1")


@dataclass
class EvalSettings:
    ks: list[int] = field(default_factory=lambda: [10, 20, 30])
    workers: int = 1
    bidirectional: bool = True
    split: str = "test"

    def validate(self, prefix: str = "eval"):
        _require(len(self.ks) > 0 and all(int(k) >= 1 for k in self.ks), f"{prefix}.ks", "must be positive cutoffs")
        _require(self.workers >= 1, f"{prefix}.workers", "must be >= 1")
        _require(self.split in ("validation", "test"), f"{prefix}.split", "must be 'validation' or 'test'")


@dataclass
class AblationSettings:
    """
    :param variant: 'full', or 'A' (encoder only), 'B' (+ level-1 identifier and user
                    objective), 'C' (matching loss only), 'D' (all but the domain objective).
    """
    variant: str = "full"
    reaggregate_per_layer: bool = False
    sigma1_activation: str = "softmax"
    sigma1_scale: float | None = None
    learned_prior: bool = False
    mean_activation: str = "leaky_relu"

    def validate(self, prefix: str = "ablation"):
        _require(self.variant in VARIANTS, f"{prefix}.variant", f"must be one of {VARIANTS}")
        _require(self.sigma1_activation in ("softmax", "softplus"), f"{prefix}.sigma1_activation",
                 "must be 'softmax' or 'softplus'")
        _require(self.sigma1_scale is None or self.sigma1_scale > 0, f"{prefix}.sigma1_scale", "must be > 0")
        _require(self.mean_activation in ("leaky_relu", "relu"), f"{prefix}.mean_activation",
                 "must be 'leaky_relu' or 'relu'")


SECTIONS = {
    "data": DataConfig,
    "model": HyperParams,
    "train": TrainSettings,
    "eval": EvalSettings,
    "ablation": AblationSettings,
}


def _build_section(name: str, cls, values) -> object:
    if not isinstance(values, dict):
        raise ConfigError(name, "must be a JSON object")
    known = {f.name for f in fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown key")
    try:
        return cls(**values)
    except TypeError as error:
        raise ConfigError(name, str(error)) from None


@dataclass
class TrainConfig:
    """Complete run configuration; JSON files use the top-level keys of SECTIONS."""
    data: DataConfig = field(default_factory=DataConfig)
    model: HyperParams = field(default_factory=HyperParams)
    train: TrainSettings = field(default_factory=TrainSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    ablation: AblationSettings = field(default_factory=AblationSettings)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        for key in raw:
            if key not in SECTIONS:
                raise ConfigError(key, f"unknown top-level key, expected one of {tuple(SECTIONS)}")
        sections = {name: _build_section(name, cls_, raw.get(name, {})) for name, cls_ in SECTIONS.items()}
        return cls(**sections)

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as error:
            raise ConfigError(str(path), f"invalid JSON ({error.msg} at line {error.lineno})") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)

    def override(self, key: str, value) -> "TrainConfig":
        """Set one dotted key such as 'model.dim'; unknown keys raise ConfigError."""
        section_name, _, attribute = key.partition(".")
        if section_name not in SECTIONS or not attribute:
            raise ConfigError(key, "unknown key")
        section = getattr(self, section_name)
        if attribute not in {f.name for f in fields(section)}:
            raise ConfigError(key, "unknown key")
        setattr(section, attribute, value)
        return self

    def validate(self) -> "TrainConfig":
        self.data.validate()
        self.model.validate()
        self.train.validate()
        self.eval.validate()
        self.ablation.validate()
        return self
