"""Experiment configs: named constructions and testers, seeded trial runs,
and the records written by the CLI."""
from __future__ import annotations

import copy
import csv
import hashlib
import inspect
import io
import itertools
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .constructions import (
    DensitySource,
    LowerBoundParams,
    RepeatedStringSource,
    ShiftedPairwiseSource,
    UniformSource,
    epsilon_perturbed_family,
    pairwise_density,
    psi_j_density,
    lower_bound_density,
)
from .cube_fourier import Density, EXPLICIT_N_MAX
from .seeding import trial_seed
from .testers import (
    DEFAULT_CONSTANTS,
    Constants,
    EstimationParams,
    RateRow,
    empirical_error_rate,
    estimation_test,
    filter_test,
    kwise_test,
    overall_algorithm,
)

__all__ = [
    "SCHEMA",
    "ConfigError",
    "TrialError",
    "ExperimentConfig",
    "RunRecord",
    "CONSTRUCTIONS",
    "TESTERS",
    "build_construction",
    "build_density",
    "run_config",
    "rows_to_csv",
    "config_hash",
    "KNOBS",
]

SCHEMA = "kwise-experiment/1"
# knobs accepted by --override besides the Constants fields
TESTER_KNOBS = ("t", "m1", "m2")
KNOBS = tuple(f for f in Constants.__dataclass_fields__) + TESTER_KNOBS


class ConfigError(ValueError):
    """An experiment config refers to unknown names or has invalid values."""


class TrialError(RuntimeError):
    """A trial raised; ``index`` is its position and ``cause`` the original error."""

    def __init__(self, index, point, cause):
        super().__init__(f"trial {index} (sweep point {point}) failed: {type(cause).__name__}: {cause}")
        self.index = index
        self.point = point
        self.cause = cause


# --------------------------------------------------------------------------
# constructions

def _mask(S, n):
    if isinstance(S, int):
        return S
    mask = 0
    for i in S:
        if not 1 <= int(i) <= n:
            raise ConfigError(f"coordinate {i} outside 1..{n}")
        mask |= 1 << (int(i) - 1)
    return mask


def _bias_density(n, eps, S=(1,)):
    if n > EXPLICIT_N_MAX:
        raise ConfigError(f"bias construction needs n <= {EXPLICIT_N_MAX}")
    x = np.arange(1 << n, dtype=np.uint64)
    chi = 1 - 2 * (np.bitwise_count(x & np.uint64(_mask(S, n))).astype(np.int64) & 1)
    return Density.explicit(1.0 + eps * chi)


def _density_source(d, name):
    return DensitySource(d, name)


CONSTRUCTIONS = {
    "uniform": lambda n, mode="auto": (
        DensitySource(Density.uniform(n), "uniform") if (mode == "explicit" or (mode == "auto" and n <= 20))
        else UniformSource(n)),
    "bias": lambda n, eps, S=(1,): _density_source(_bias_density(n, eps, S), "bias"),
    "lower_bound": lambda n, k=2, C=4.0, explicit=False: _density_source(
        _maybe_explicit(lower_bound_density(LowerBoundParams(n, k, C)), explicit), "lower_bound"),
    "pairwise": lambda n, delta, explicit=False: _density_source(
        _maybe_explicit(pairwise_density(n, delta), explicit), "pairwise"),
    "pairwise_shift": lambda n, delta: ShiftedPairwiseSource(n, delta),
    "epsilon_family": lambda n, k, eps, shape="single-set", seed=0, S=1, points=4: _density_source(
        epsilon_perturbed_family(n, k, eps, shape, seed, S=S, points=points), shape),
    "psi_j": lambda n, j: _density_source(psi_j_density(n, j), "psi_j"),
    "point_mass": lambda n, x=0: _density_source(Density.point_mass(n, x), "point_mass"),
    "identical": lambda n: RepeatedStringSource(n),
    "file": lambda path: _density_source(_read_density(path), "file"),
}


def _maybe_explicit(d, explicit):
    return d.to_explicit() if explicit else d


def _read_density(path):
    with open(path) as fh:
        return Density.from_json(fh.read())


def build_construction(spec: dict):
    """Sample source for ``{"name": ..., "params": {...}}``."""
    name = spec.get("name")
    if name not in CONSTRUCTIONS:
        raise ConfigError(f"unknown construction {name!r}; choose from {sorted(CONSTRUCTIONS)}")
    try:
        return CONSTRUCTIONS[name](**spec.get("params", {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for construction {name!r}: {exc}") from None


def build_density(spec: dict) -> Density:
    src = build_construction(spec)
    if not hasattr(src, "density"):
        raise ConfigError(f"construction {spec.get('name')!r} is a sampler, not a density")
    return src.density


# --------------------------------------------------------------------------
# testers

def _kwise(src, seed, c, k, delta, m=None, enforce_bound=True, method="auto", sharp=False):
    return kwise_test(src, src.n, k, delta, seed, m=m, constants=c, enforce_bound=enforce_bound,
                      method=method, sharp=sharp)


def _estimation(src, seed, c, k, theta, A=1.0, m=None, enforce_bound=True, method="auto"):
    if m is None:
        m = EstimationParams.required_m(src.n, k, theta, A, c)
    return estimation_test(src, EstimationParams(k, theta, A, m), seed, enforce_bound, c, method)


def _filter(src, seed, c, t, m1):
    return filter_test(src, src.n, t, m1, seed)


def _overall(src, seed, c, k, delta, alpha=4, mode="alpha-k-wise", t=None, m1=None, m2=None, max_samples=1e8):
    return overall_algorithm(src, src.n, k, alpha, delta, seed, mode=mode, constants=c,
                             t=t, m1=m1, m2=m2, max_samples=max_samples)


TESTERS = {
    "kwise_test": _kwise,
    "estimation_test": _estimation,
    "filter_test": _filter,
    "overall": _overall,
}


# --------------------------------------------------------------------------
# configs and records

def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj: dict) -> str:
    return hashlib.sha256(_canonical(obj).encode()).hexdigest()


@dataclass
class ExperimentConfig:
    command: str
    construction: dict
    tester: dict
    trials: int = 1
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    schema: str = SCHEMA

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        schema = obj.get("schema")
        if schema != SCHEMA:
            raise ConfigError(f"unsupported config schema {schema!r}; expected {SCHEMA!r}")
        allowed = {"schema", "command", "construction", "tester", "trials", "seed", "overrides", "sweep", "output"}
        extra = sorted(set(obj) - allowed)
        if extra:
            raise ConfigError(f"unknown config field(s) {extra}")
        try:
            cfg = cls(command=obj.get("command", "test"), construction=obj["construction"], tester=obj["tester"],
                      trials=int(obj.get("trials", 1)), seed=int(obj.get("seed", 0)),
                      overrides=dict(obj.get("overrides", {})), sweep=dict(obj.get("sweep", {})),
                      output=dict(obj.get("output", {})), schema=schema)
        except KeyError as exc:
            raise ConfigError(f"config is missing field {exc}") from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        return cls.from_dict(obj)

    def validate(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.construction.get("name") not in CONSTRUCTIONS:
            raise ConfigError(f"unknown construction {self.construction.get('name')!r}; choose from {sorted(CONSTRUCTIONS)}")
        if self.tester.get("name") not in TESTERS:
            raise ConfigError(f"unknown tester {self.tester.get('name')!r}; choose from {sorted(TESTERS)}")
        bad = sorted(set(self.overrides) - set(KNOBS))
        if bad:
            raise ConfigError(f"override(s) {bad} are not declared knobs; known: {sorted(KNOBS)}")
        for key, values in self.sweep.items():
            where, _, _ = key.partition(".")
            if where not in ("construction", "tester") or "." not in key:
                raise ConfigError(f"sweep key {key!r} must look like 'tester.<param>' or 'construction.<param>'")
            if not isinstance(values, list) or not values:
                raise ConfigError(f"sweep {key!r} needs a non-empty list")

    def to_dict(self) -> dict:
        return {"schema": self.schema, "command": self.command, "construction": self.construction,
                "tester": self.tester, "trials": self.trials, "seed": self.seed,
                "overrides": self.overrides, "sweep": self.sweep, "output": self.output}

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def expand(self):
        """One ``(construction, tester)`` pair per point of the sweep grid."""
        keys = sorted(self.sweep)
        grids = [self.sweep[k] for k in keys] or [[]]
        for combo in itertools.product(*grids) if keys else [()]:
            cons = copy.deepcopy(self.construction)
            test = copy.deepcopy(self.tester)
            for key, val in zip(keys, combo):
                where, _, name = key.partition(".")
                target = cons if where == "construction" else test
                target.setdefault("params", {})[name] = val
            yield cons, test


@dataclass
class RunRecord:
    config_hash: str
    rows: list
    verdicts: list
    wall_clock_s: float
    version: str = __version__

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {"config_hash": self.config_hash, "version": self.version,
               "aggregates": [dict(zip(RateRow.COLUMNS, r.as_list())) for r in self.rows],
               "verdicts": self.verdicts}
        if include_timing:
            out["wall_clock_s"] = self.wall_clock_s
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True, indent=1, default=_jsonable)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, tuple):
        return list(v)
    return repr(v)


def _statistic(v):
    s = v.statistic
    if isinstance(s, float):
        return s if math.isfinite(s) else repr(s)
    if isinstance(s, tuple):
        return list(s)
    return s


def run_config(cfg: ExperimentConfig, workers=None) -> RunRecord:
    """Run every sweep point for ``cfg.trials`` seeded trials."""
    constants = DEFAULT_CONSTANTS.with_overrides({k: v for k, v in cfg.overrides.items() if k not in TESTER_KNOBS})
    knob_params = {k: v for k, v in cfg.overrides.items() if k in TESTER_KNOBS}
    start = time.perf_counter()
    rows, verdicts = [], []
    for point, (cons, test) in enumerate(cfg.expand()):
        src = build_construction(cons)
        tparams = dict(test.get("params", {}))
        tparams.update(knob_params)
        fn = TESTERS[test["name"]]

        index = {trial_seed(cfg.seed, i): i for i in range(cfg.trials)}

        def one(seed, fn=fn, src=src, tparams=tparams, point=point):
            try:
                return fn(src, seed, constants, **tparams)
            except Exception as exc:
                raise TrialError(index[seed], point, exc) from exc

        try:
            inspect.signature(fn).bind(src, 0, constants, **tparams)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for tester {test['name']!r}: {exc}") from None
        row, vs = empirical_error_rate(
            one, cfg.trials, cfg.seed, construction=cons["name"], tester=test["name"], n=src.n,
            k=int(tparams.get("k", 0)), delta=float(tparams.get("delta", tparams.get("theta", 0.0))),
            workers=workers)
        rows.append(row)
        verdicts.append({"point": point, "decisions": [v.decision for v in vs],
                         "statistics": [_statistic(v) for v in vs]})
    return RunRecord(cfg.hash(), rows, verdicts, time.perf_counter() - start)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RateRow.COLUMNS)
    for r in rows:
        w.writerow([_fmt(v) for v in r.as_list()])
    return buf.getvalue()
