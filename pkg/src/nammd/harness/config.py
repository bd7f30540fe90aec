"""Experiment configuration: one JSON file plus ``KEY=VALUE`` overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from nammd.errors import ConfigError

KINDS = (
    "power_dct",
    "power_tst",
    "type1_dct",
    "type1_tst",
    "closeness_sweep",
    "figure1_sweep",
    "oracle_check",
)
DATASETS = ("blob", "hdgm", "csv")
FORMATS = ("csv", "json")

# desk-scale defaults per kind; each finishes in a few minutes on one core
KIND_DEFAULTS = {
    "power_dct": dict(repetitions=200, epsilons=[0.1, 0.3, 0.5, 0.7], sample_sizes=[]),
    "power_tst": dict(repetitions=100, sample_sizes=[25, 50, 100], dataset="hdgm"),
    "type1_dct": dict(repetitions=500, epsilons=[0.2, 0.5, 0.8], sample_sizes=[200]),
    "type1_tst": dict(repetitions=500, sample_sizes=[100], dataset="blob"),
    "closeness_sweep": dict(repetitions=200, epsilons=[0.1, 0.3, 0.5], sample_sizes=[100, 200, 400]),
    "figure1_sweep": dict(repetitions=1, sample_sizes=[]),
    "oracle_check": dict(repetitions=3, sample_sizes=[10000]),
}


@dataclass
class ExperimentConfig:
    """Everything a run depends on. ``(config, master_seed)`` fixes every output byte.

    ``params`` carries kind-specific knobs, for example ``levels`` for
    ``type1_dct``, ``variances`` for ``figure1_sweep`` or ``path`` for CSV data.
    """

    kind: str
    repetitions: int = 100
    sample_sizes: list = field(default_factory=list)
    alpha: float = 0.05
    epsilons: list = field(default_factory=list)
    kernel: str = "gaussian"
    bandwidth: float | None = None
    dataset: str = "blob"
    params: dict = field(default_factory=dict)
    master_seed: int = 0
    B: int = 200
    outer_repeats: int = 1
    threads: int = 1
    include_timing: bool = False
    out: str | None = None
    format: str = "csv"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not (isinstance(self.repetitions, int) and self.repetitions >= 1):
            raise ConfigError("repetitions must be an integer >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not (isinstance(self.B, int) and self.B >= 1):
            raise ConfigError("B must be an integer >= 1")
        if not (isinstance(self.outer_repeats, int) and 1 <= self.outer_repeats <= self.repetitions):
            raise ConfigError("outer_repeats must be an integer in [1, repetitions]")
        if not (isinstance(self.threads, int) and self.threads >= 1):
            raise ConfigError("threads must be an integer >= 1")
        if self.kernel not in ("gaussian", "laplace"):
            raise ConfigError("kernel must be 'gaussian' or 'laplace'")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigError("bandwidth must be positive (or null for the median heuristic)")
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        if not isinstance(self.sample_sizes, list) or any(
            not isinstance(m, int) or m < 4 for m in self.sample_sizes
        ):
            raise ConfigError("sample_sizes must be a list of integers >= 4")
        needs_m = self.kind in ("power_tst", "type1_tst", "type1_dct", "closeness_sweep", "oracle_check")
        if needs_m and not self.sample_sizes:
            raise ConfigError(f"{self.kind} needs a nonempty sample_sizes grid")
        if self.kind in ("power_dct", "type1_dct", "closeness_sweep"):
            if not self.epsilons:
                raise ConfigError(f"{self.kind} needs a nonempty epsilons grid")
            if any(not 0.0 < e < 1.0 for e in self.epsilons):
                raise ConfigError("epsilons must lie in (0, 1)")
        if self.dataset == "csv" and "path" not in self.params:
            raise ConfigError("dataset 'csv' needs params.path")
        if not isinstance(self.params, dict):
            raise ConfigError("params must be a mapping")

    @classmethod
    def for_kind(cls, kind, **overrides):
        if kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
        values = dict(KIND_DEFAULTS[kind])
        values.update(overrides)
        return cls.from_dict({"kind": kind, **values})

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        if "kind" not in data:
            raise ConfigError("configuration needs a 'kind'")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        kind = data.get("kind")
        if kind in KIND_DEFAULTS:
            data = {**KIND_DEFAULTS[kind], **data}
        return cls.from_dict(data)

    def to_dict(self):
        return dataclasses.asdict(self)

    def with_overrides(self, pairs):
        """Apply ``KEY=VALUE`` strings; values parse as JSON, else stay strings.

        ``params.NAME=VALUE`` sets one entry of ``params``.
        """
        data = self.to_dict()
        for item in pairs:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not KEY=VALUE")
            key, raw = item.split("=", 1)
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            if key.startswith("params."):
                data["params"] = {**data["params"], key[len("params."):]: value}
            else:
                data[key] = value
        return ExperimentConfig.from_dict(data)
