"""Run configuration: presets, JSON files and command-line overrides."""
import json
from dataclasses import asdict, dataclass, fields

from .decoder import AnswerHeadConfig
from .errors import ConfigError
from .graph import GraphConfig
from .model import ModelConfig
from .synth import TASK_HEAD, TASKS

ABLATIONS = ("word_attention", "object_attention", "relative", "absolute", "disentangle")


@dataclass
class RunConfig:
    preset: str = "desk"
    task: str = "frame_relpos"
    data: str = ""
    out: str = "runs/default"
    T: int = 4
    K: int = 4
    C: int = 64
    C_s: int = 64
    C_o: int = 64
    C_w: int = 64
    H: int = 2
    alpha_spatial: float = 0.6
    alpha_temporal: float = 0.8
    pooling_spatial: str = "max"
    pooling_aggregation: str = "max"
    pooling_temporal: str = "sum"
    batch_size: int = 32
    epochs: int = 30
    lr: float = 1e-3
    dropout: float = 0.1
    seed: int = 0
    word_attention: bool = True
    object_attention: bool = True
    relative: bool = True
    absolute: bool = True
    disentangle: bool = True
    two_stream: bool = True
    count_range: tuple = ()
    n_train: int = 2000
    n_val: int = 200
    n_test: int = 500
    n_categories: int = 8
    noise: float = 0.1
    M: int = 5

    def validate(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.batch_size < 1 or self.epochs < 0 or not self.lr > 0:
            raise ConfigError("batch_size >= 1, epochs >= 0 and lr > 0 required")
        self.graph_config().validate()
        return self

    @property
    def head_kind(self):
        return TASK_HEAD[self.task]

    def graph_config(self):
        return GraphConfig(
            alpha_spatial=self.alpha_spatial,
            alpha_temporal=self.alpha_temporal,
            H=self.H,
            pooling_spatial=self.pooling_spatial,
            pooling_aggregation=self.pooling_aggregation,
            pooling_temporal=self.pooling_temporal,
            relative_enabled=self.relative,
            absolute_enabled=self.absolute,
            disentangled=self.disentangle,
        )

    def model_config(self, vocab_size, n_answers, count_range):
        head = AnswerHeadConfig(
            task=self.head_kind,
            M=self.M,
            answer_vocab_size=n_answers,
            count_range=tuple(self.count_range) if self.count_range else tuple(count_range),
        )
        return ModelConfig(
            vocab_size=vocab_size,
            T=self.T,
            K=self.K,
            C=self.C,
            C_s=self.C_s,
            C_o=self.C_o,
            C_w=self.C_w,
            dropout=self.dropout,
            two_stream=self.two_stream,
            word_attention=self.word_attention,
            object_attention=self.object_attention,
            graph=self.graph_config(),
            head=head,
        ).validate()

    def to_dict(self):
        d = asdict(self)
        d["count_range"] = list(self.count_range)
        return d

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return RunConfig(**d)


PRESETS = {
    "desk": {},
    "paper": {
        "T": 20,
        "K": 10,
        "C": 512,
        "C_s": 512,
        "C_o": 512,
        "C_w": 512,
        "H": 2,
        "alpha_spatial": 0.6,
        "alpha_temporal": 0.8,
        "dropout": 0.3,
        "lr": 1e-4,
        "epochs": 30,
        "count_range": (1, 10),
    },
}


def paper_batch_size(task):
    return 64 if TASK_HEAD[task] == "multichoice" else 128


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name, value):
    kind = type(getattr(RunConfig(), name))
    if kind is bool and isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if kind is tuple:
        return tuple(value)
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config field {name!r}: cannot read {value!r} as {kind.__name__}") from None


def build_config(path=None, overrides=None, preset=None):
    """Preset defaults, then the JSON file, then explicit overrides."""
    file_values = {}
    if path:
        try:
            with open(path) as fh:
                file_values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    chosen = preset or overrides.get("preset") or file_values.get("preset") or "desk"
    if chosen not in PRESETS:
        raise ConfigError(f"unknown preset {chosen!r}")
    values = {"preset": chosen, **PRESETS[chosen]}
    task = overrides.get("task") or file_values.get("task") or RunConfig.task
    if chosen == "paper":
        values["batch_size"] = paper_batch_size(task)
    for source in (file_values, overrides):
        for k, v in source.items():
            if k not in _FIELDS:
                raise ConfigError(f"unknown config field {k!r}")
            values[k] = _coerce(k, v)
    values["preset"] = chosen
    return RunConfig(**values).validate()


def apply_ablation(cfg, name):
    if name not in ABLATIONS:
        raise ConfigError(f"unknown ablation {name!r}; expected one of {ABLATIONS}")
    return cfg.replace(**{name: False}).validate()
