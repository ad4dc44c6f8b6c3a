"""Declarative experiment configuration (YAML) with field-level validation."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .costs import CostFunctionSpec
from .errors import ConfigError
from .montecarlo import EstimatorConfig
from .onoff import OnOffSpec
from .skorokhod import ModelSpec, PositiveFunction

#: Tolerances used by ``selftest``; every key can be overridden in the config.
SELFTEST_DEFAULTS = {
    "u_star_abs": 0.03,
    "value_rel": 0.05,
    "zu_mean_rel": 0.05,
}

#: Defaults of the task block, one entry per subcommand family.
TASK_DEFAULTS = {
    "u_grid": [0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
    "m_grid": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0, 2.0, 10.0],
    "alpha": 0.05,
    "T": 100.0,
    "alpha_seq": [0.2, 0.05, 0.0125],
    "T_seq": [25.0, 100.0, 400.0],
    "fixed_u": None,
    "search_range": [1e-3, 50.0],
    "search_points": 25,
    "simulate": {"u": 1.0, "n_out": 3},
    "zu": {"u_values": [0.5, 1.0, 2.0], "quantiles": [0.5, 0.995]},
    "onoff": {"alpha1": 1.4, "alpha2": 1.4, "m1": 1.0, "m2": 1.0, "n_sources": 200,
              "tau": 500.0, "u": 1.0, "x0": 0.0, "horizon": 20.0, "dt": 0.01,
              "n_replicas": 8, "burn_in_factor": 10.0},
    "selftest": SELFTEST_DEFAULTS,
}

_MODEL_KEYS = {"H", "sigma", "drift_b", "x", "p"}
_FUNC_KEYS = {"c0", "c1", "beta"}
_COST_KEYS = {f.name for f in fields(CostFunctionSpec)}
_EST_KEYS = {f.name for f in fields(EstimatorConfig)}


def _merge(base: dict, extra: dict, prefix: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if k not in base:
            raise ConfigError(f"{prefix}{k}", "unknown field")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{prefix}{k}", "must be a mapping")
            out[k] = _merge(base[k], v, f"{prefix}{k}.")
        else:
            out[k] = v
    return out


def _check_keys(data, allowed, prefix):
    if not isinstance(data, dict):
        raise ConfigError(prefix.rstrip("."), "must be a mapping")
    for k in data:
        if k not in allowed:
            raise ConfigError(f"{prefix}{k}", "unknown field")


def _number(data, key, prefix, required=False, default=None):
    if key not in data:
        if required:
            raise ConfigError(f"{prefix}{key}", "required field is missing")
        return default
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{prefix}{key}", f"must be a number, got {v!r}")
    return float(v)


@dataclass
class ExperimentConfig:
    """Model, costs, estimator settings and task parameters of one run."""

    model: dict
    costs: dict
    estimator: dict = field(default_factory=dict)
    tasks: dict = field(default_factory=dict)
    output_dir: str = "results"
    label: str = "run"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a mapping")
        _check_keys(data, {"model", "costs", "estimator", "tasks", "output_dir", "label"}, "")
        if "model" not in data:
            raise ConfigError("model", "required section is missing")
        if "costs" not in data:
            raise ConfigError("costs", "required section is missing")
        cfg = cls(model=copy.deepcopy(data["model"]), costs=copy.deepcopy(data["costs"]),
                  estimator=copy.deepcopy(data.get("estimator") or {}),
                  tasks=_merge(TASK_DEFAULTS, data.get("tasks") or {}, "tasks."),
                  output_dir=str(data.get("output_dir", "results")),
                  label=str(data.get("label", "run")))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, overrides=()) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"not valid YAML: {exc}") from None
        return cls.from_dict(apply_overrides(data, overrides))

    def to_dict(self) -> dict:
        return {"model": copy.deepcopy(self.model), "costs": copy.deepcopy(self.costs),
                "estimator": copy.deepcopy(self.estimator), "tasks": copy.deepcopy(self.tasks),
                "output_dir": self.output_dir, "label": self.label}

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def sha256(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    # builders ---------------------------------------------------------------

    def validate(self) -> None:
        self.build_model()
        self.build_costs()
        self.build_estimator()
        self.build_onoff()

    def build_model(self) -> ModelSpec:
        m = self.model
        _check_keys(m, _MODEL_KEYS, "model.")
        H = _number(m, "H", "model.", required=True)
        funcs = {}
        for name in ("sigma", "drift_b"):
            if name in m:
                _check_keys(m[name], _FUNC_KEYS, f"model.{name}.")
                try:
                    funcs[name] = PositiveFunction(**{k: float(v) for k, v in m[name].items()})
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"model.{name}", str(exc)) from None
        x = _number(m, "x", "model.", default=0.0)
        p = _number(m, "p", "model.", default=0.0)
        for key, val, ok, why in (("H", H, 0 < H < 1, "must lie in (0, 1)"),
                                  ("x", x, x >= 0, "must be >= 0"),
                                  ("p", p, p >= 0, "must be >= 0")):
            if not ok:
                raise ConfigError(f"model.{key}", f"{why}, got {val}")
        return ModelSpec(H=H, x=x, p=p, **funcs)

    def build_costs(self) -> tuple[CostFunctionSpec, CostFunctionSpec]:
        _check_keys(self.costs, {"h", "C"}, "costs.")
        out = []
        for name in ("h", "C"):
            if name not in self.costs:
                raise ConfigError(f"costs.{name}", "required field is missing")
            spec = self.costs[name]
            _check_keys(spec, _COST_KEYS, f"costs.{name}.")
            try:
                out.append(CostFunctionSpec.from_dict(spec))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"costs.{name}", str(exc)) from None
        return tuple(out)

    def build_estimator(self) -> EstimatorConfig:
        _check_keys(self.estimator, _EST_KEYS, "estimator.")
        try:
            return EstimatorConfig(**self.estimator)
        except (TypeError, ValueError) as exc:
            first = str(exc).split(" ", 1)[0]
            where = f"estimator.{first}" if first in _EST_KEYS else "estimator"
            raise ConfigError(where, str(exc)) from None

    def build_onoff(self) -> OnOffSpec:
        block = {k: v for k, v in self.tasks["onoff"].items()
                 if k not in ("horizon", "dt", "n_replicas")}
        try:
            return OnOffSpec(**block)
        except (TypeError, ValueError) as exc:
            raise ConfigError("tasks.onoff", str(exc)) from None


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` overrides; values are parsed as YAML scalars or lists."""
    data = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key.path=value")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigError(key, f"cannot parse value {raw!r}") from None
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "path runs through a non-mapping value")
        node[parts[-1]] = value
    return data


def default_config() -> ExperimentConfig:
    """Quadratic example at H = 1/2: h(u) = u^2, C(x) = x, p = 1."""
    return ExperimentConfig.from_dict({
        "model": {"H": 0.5, "p": 1.0},
        "costs": {"h": {"kind": "power", "a": 1.0, "gamma": 2.0},
                  "C": {"kind": "power", "a": 1.0, "gamma": 1.0}},
        "label": "selftest",
    })

