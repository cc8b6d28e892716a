"""Experiment configuration: flat ``key = value`` files and run manifests."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .construction import SEED_NL, default_target
from .evolver import PAPER_SCALE, EvolverConfig
from .fitness import (EV_LABELS, FIRST_GROUP, NL_ONLY, NL_WITH_SPECTRUM,
                      FitnessKind)

OBJECTIVE_NAMES = {"nonlinearity": NL_ONLY, "spectrum": NL_WITH_SPECTRUM,
                   NL_ONLY.lower(): NL_ONLY, NL_WITH_SPECTRUM.lower(): NL_WITH_SPECTRUM}
FITNESS_NAMES = {"first": "A", "sum": "B", "min": "C", "a": "A", "b": "B", "c": "C"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    s: int = 2
    n: int = 4
    nl: int | None = None
    ev: str = "B"
    k: int = 2
    obj: str = NL_WITH_SPECTRUM
    seed_type: str = "balanced"
    groups: int = 4
    seed_source: str = "evolved"
    seed_dir: str | None = None
    seed_budget: int = 20_000
    target: int | None = None  # locally-optimal threshold at size n + k
    target_val: int | None = None  # FIRST_GROUP trigger
    exact_trigger: bool = False
    evolver: EvolverConfig = field(default_factory=EvolverConfig)

    def __post_init__(self):
        if self.k not in (1, 2):
            raise ConfigError(f"independent_variables must be 1 or 2, got {self.k}")
        if self.s < 1:
            raise ConfigError("seed_functions must be positive")
        if self.n < 1:
            raise ConfigError("seed variable count must be positive")
        if self.ev not in EV_LABELS:
            raise ConfigError(f"fitness must be one of A/B/C, got {self.ev!r}")
        if self.obj not in (NL_ONLY, NL_WITH_SPECTRUM):
            raise ConfigError(f"unknown objective {self.obj!r}")
        if self.seed_type not in ("balanced", "bent"):
            raise ConfigError(f"seed_type must be balanced or bent, got {self.seed_type!r}")
        if self.seed_type == "bent":
            if self.n % 2:
                raise ConfigError("bent seeds need an even number of variables")
            if self.seed_source == "evolved":
                self.seed_source = "bent"
            self.nl = (1 << (self.n - 1)) - (1 << (self.n // 2 - 1))
        if self.seed_source not in ("evolved", "bent", "file"):
            raise ConfigError(f"unknown seed_source {self.seed_source!r}")
        if self.seed_source == "file" and not self.seed_dir:
            raise ConfigError("seed_source = file needs seed_dir")
        if self.nl is None:
            if self.n not in SEED_NL:
                raise ConfigError(f"no default seed nonlinearity for n={self.n}; set seed_nl")
            self.nl = SEED_NL[self.n]
        if self.groups < 1:
            raise ConfigError("seed_groups must be positive")
        if self.target is None:
            self.target = default_target(self.n, self.nl, self.k)
        if self.target is None:
            raise ConfigError(f"no default target for size {self.size}; set target")
        if self.target_val is None:
            self.target_val = self.target
        if self.fitness_kind.variant == FIRST_GROUP and not self.target_val:
            raise ConfigError("first-group fitness needs target_val")

    @property
    def size(self) -> int:
        return self.n + self.k

    @property
    def tuple_label(self) -> str:
        return f"({self.s},{self.n},{self.nl},{self.ev})"

    @property
    def fitness_kind(self) -> FitnessKind:
        variant = EV_LABELS[self.ev]
        return FitnessKind(variant, self.target_val if variant == FIRST_GROUP else None,
                           exact_trigger=self.exact_trigger)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["evolver"]["crossover_kinds"] = list(self.evolver.crossover_kinds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        ev = EvolverConfig(**d.pop("evolver", {}))
        return cls(evolver=ev, **d)


_KEYS = {
    # key: (target, converter); target "evolver.x" goes into EvolverConfig
    "variables": ("variables", int),
    "independent_variables": ("k", int),
    "seed_functions": ("s", int),
    "seed_variables": ("n", int),
    "seed_groups": ("groups", int),
    "seed_type": ("seed_type", str),
    "seed_nl": ("nl", int),
    "seed_source": ("seed_source", str),
    "seed_dir": ("seed_dir", str),
    "seed_budget": ("seed_budget", int),
    "objective": ("obj", lambda v: OBJECTIVE_NAMES[v.lower()]),
    "fitness": ("ev", lambda v: FITNESS_NAMES[v.lower()]),
    "target": ("target", int),
    "target_val": ("target_val", int),
    "exact_trigger": ("exact_trigger", lambda v: v.lower() in ("1", "true", "yes")),
    "population": ("evolver.population_size", int),
    "max_depth": ("evolver.max_depth", int),
    "mutation_prob": ("evolver.mutation_prob", float),
    "budget": ("evolver.budget", int),
    "runs": ("evolver.runs", int),
    "rng_seed": ("evolver.rng_seed", int),
    "count_initial": ("evolver.count_initial", lambda v: v.lower() in ("1", "true", "yes")),
    "crossover": ("evolver.crossover_kinds", lambda v: tuple(x.strip() for x in v.split(","))),
    "output_dir": ("output_dir", str),
}


def parse_config_text(text: str, paper_scale: bool = False) -> tuple[ExperimentConfig, dict]:
    """Parse a flat config; returns the config and the engineering extras."""
    top, evo, extra = {}, {}, {}
    if paper_scale:
        evo.update(PAPER_SCALE)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        key = key.lower()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        target, conv = _KEYS[key]
        try:
            value = conv(value)
        except (KeyError, ValueError):
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
        if target.startswith("evolver."):
            if not (paper_scale and target[8:] in PAPER_SCALE):
                evo[target[8:]] = value
        elif target in ("variables", "output_dir"):
            extra[target] = value
        else:
            top[target] = value
    if "variables" in extra:
        k = top.get("k", 2)
        if "n" in top and top["n"] + k != extra["variables"]:
            raise ConfigError(
                f"variables={extra['variables']} disagrees with seed_variables + "
                f"independent_variables = {top['n'] + k}")
        top.setdefault("n", extra["variables"] - k)
    try:
        return ExperimentConfig(evolver=EvolverConfig(**evo), **top), extra
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, paper_scale: bool = False) -> tuple[ExperimentConfig, dict]:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} not found")
    return parse_config_text(p.read_text(), paper_scale)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
