"""Experiment configuration (JSON) and its schema.

Every key is optional; unknown keys are rejected. Example::

    {
      "experiment": "fig5",
      "seed": 7,
      "layout": {"n_links": 100, "side_length": 600, "d_min": 2, "d_max": 80},
      "channel": {"tx_power": 0.1, "pathloss_exp": 3, "capture_ratio": 1, "noise_power": 1e-12},
      "traffic": {"arrival_rate": 0.5, "slot_duration": 1},
      "lambdas": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
      "methods": ["uniform", "coordinate_descent", "gli_net"],
      "weights": "out/train/weights.bin",
      "n_eval_layouts": 100,
      "sim_slots": 0
    }
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .gli.net import NetConfig
from .model import ChannelParams, TrafficParams
from .schedulers import OptimizerConfig

METHODS = ("uniform", "coordinate_descent", "projected_gradient", "gli_net")
METHOD_ALIASES = {"cd": "coordinate_descent", "pg": "projected_gradient", "gli": "gli_net", "gli-net": "gli_net"}


@dataclass(frozen=True)
class LayoutDefaults:
    n_links: int = 100
    side_length: float = 600.0
    d_min: float = 2.0
    d_max: float = 80.0


@dataclass(frozen=True)
class DatasetConfig:
    n_train: int = 10000
    n_test: int = 5000


@dataclass(frozen=True)
class BenchConfig:
    n_values: tuple[int, ...] = (25, 50, 100, 200, 400)
    reps: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "default"
    seed: int = 0
    out_dir: str = "out"
    threads: int = 1
    layout: LayoutDefaults = field(default_factory=LayoutDefaults)
    channel: ChannelParams = field(default_factory=ChannelParams)
    traffic: TrafficParams = field(default_factory=TrafficParams)
    lambdas: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    methods: tuple[str, ...] = ("uniform", "coordinate_descent")
    uniform_p: float = 0.5
    weights: str | None = None
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    eval_dataset: str | None = None
    n_eval_layouts: int = 100
    n_cdf_layouts: int = 1000
    cdf_lambda: float = 0.2
    sim_slots: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    net: NetConfig = field(default_factory=NetConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def __post_init__(self):
        methods = tuple(METHOD_ALIASES.get(m, m) for m in self.methods)
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
        if not methods:
            raise ValueError("at least one method is required")
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        if any(x <= 0 for x in self.lambdas):
            raise ValueError("lambda values must be > 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


_NESTED = {
    "layout": LayoutDefaults,
    "channel": ChannelParams,
    "traffic": TrafficParams,
    "dataset": DatasetConfig,
    "optimizer": OptimizerConfig,
    "net": NetConfig,
    "bench": BenchConfig,
}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ValueError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ValueError(f"{where}: unknown keys {sorted(extra)}")
    kwargs = {}
    for k, v in data.items():
        if cls is ExperimentConfig and k in _NESTED:
            v = _build(_NESTED[k], v, f"{where}.{k}")
        elif isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "config")


def load_config(path=None, **overrides) -> ExperimentConfig:
    data = {}
    if path is not None:
        with open(path) as f:
            data = json.load(f)
    cfg = config_from_dict(data)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **overrides) if overrides else cfg


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
