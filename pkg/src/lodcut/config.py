"""Experiment configuration: flat ``key = value`` files, one experiment each.

Example::

    [experiment]
    experiment = fractal
    m = 1, 2, 3, 4, 5
    n = 7
    levels = 3
    kappa = 10

Unknown keys are rejected so typos do not silently fall back to defaults.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

EXPERIMENTS = ("fractal", "corner", "slit", "sawtooth", "cut_table", "decay", "pf")


class ConfigError(ValueError):
    pass


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _strs(text: str) -> tuple[str, ...]:
    return tuple(t for t in text.replace(",", " ").split())


def _layers(text: str) -> int | None:
    return None if text.strip().lower() in ("auto", "") else int(text)


@dataclass
class ExperimentConfig:
    experiment: str
    m: tuple[int, ...] = (1, 2, 3, 4, 5)
    n: int = 7
    k: int = 2
    L: int | None = None  # None: ceil(c2 * log2(1/H))
    c2: float = 1.5
    f: float = 1.0
    enrichment: str = ""  # empty: experiment default
    box_halfwidth: float | None = None  # in units of H; default 4
    # shape parameters
    levels: int = 3
    kappa: float = 10.0
    teeth_exponent: int = 6
    tooth_length: float = 0.25
    teeth_bc: tuple[str, ...] = ("D", "N")
    bc: tuple[str, ...] = ("DD", "DN", "ND")
    cuts: tuple[str, ...] = ("1a", "1b", "1c", "2a", "2b", "2c")
    nodes: tuple[str, ...] = ("0.5:0.625", "0.625:0.625")  # decay nodes as x:y
    L_max: int = 5
    pf_levels: tuple[int, ...] = (1, 2, 3)
    pf_teeth: tuple[int, ...] = (3, 4, 5, 6)
    pf_necks: tuple[float, ...] = (0.125, 0.0625, 0.03125)
    baseline: bool = True
    free_rule: str = "support"  # or "interior"
    strict_assumption: bool = False
    export_solutions: bool = False
    workers: int = 1
    out: str = "results"
    source: str = field(default="", repr=False)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if any(self.n < m for m in self.m):
            raise ConfigError("every coarse level m must satisfy m <= n")
        if self.free_rule not in ("support", "interior"):
            raise ConfigError(f"free_rule must be 'support' or 'interior', got {self.free_rule!r}")
        if self.k < 0 or self.workers < 1:
            raise ConfigError("k must be >= 0 and workers >= 1")


_PARSERS = {
    "experiment": str.strip,
    "m": _ints,
    "n": int,
    "k": int,
    "L": _layers,
    "c2": float,
    "f": float,
    "enrichment": str.strip,
    "box_halfwidth": float,
    "levels": int,
    "kappa": float,
    "teeth_exponent": int,
    "tooth_length": float,
    "teeth_bc": _strs,
    "bc": _strs,
    "cuts": _strs,
    "nodes": _strs,
    "L_max": int,
    "pf_levels": _ints,
    "pf_teeth": _ints,
    "pf_necks": _floats,
    "baseline": _bool,
    "free_rule": str.strip,
    "strict_assumption": _bool,
    "export_solutions": _bool,
    "workers": int,
    "out": str.strip,
}
assert set(_PARSERS) == {f.name for f in fields(ExperimentConfig)} - {"source"}


# per-experiment defaults applied before the file's own values
EXPERIMENT_DEFAULTS = {
    "fractal": {"m": (1, 2, 3, 4, 5), "n": 7},
    "corner": {"m": (2, 3, 4, 5), "n": 7},
    "slit": {"m": (2, 3, 4, 5), "n": 7},
    "sawtooth": {"m": (2, 3, 4, 5), "n": 7},
    "cut_table": {"m": (3,), "n": 6},
    "decay": {"m": (3,), "n": 5},
    "pf": {"m": (3,), "n": 6},
}


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep key case (``L``, ``L_max``)
    if not text.lstrip().startswith("["):
        text = "[experiment]\n" + text
    cp.read_string(text)
    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    values = {}
    for key, raw in cp.items("experiment"):
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            values[key] = _PARSERS[key](raw)
        except ValueError as err:
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from err
    if "experiment" not in values:
        raise ConfigError("config must set 'experiment'")
    merged = dict(EXPERIMENT_DEFAULTS.get(values["experiment"], {}))
    merged.update(values)
    return ExperimentConfig(**merged, source=text)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())
