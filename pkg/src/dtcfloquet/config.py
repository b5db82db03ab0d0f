"""Run configuration for the batch front end.

A config file (YAML or JSON) has the sections ``model``, ``probe``,
``grids``, ``ensemble``, ``floquet`` and ``trace`` plus a few top-level run
settings.  Frequencies are in units of kappa.  Drive frequency grids are in
units of ``2 omega_res`` and probe grids are offsets ``(omega_pr - omega/2)``
in units of ``omega_res``.  Example::

    task: floquet-sweep
    model: {g0_ratio: 0.5, g1_ratio: 0.6, omega_ratio: 1.0, n_atoms: 1.0e4}
    grids:
      omega: {start: 0.7, stop: 1.2, count: 61}
      g1_ratio: {start: 0.0, stop: 1.0, count: 41}
    workers: 4
"""

from __future__ import annotations

import copy
import enum
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, SupercriticalCoupling
from .model import ModelParams, ProbeParams, critical_coupling
from .wigner import EnsembleSpec


class Task(str, enum.Enum):
    TRACE = "Trace"
    ATTRACTOR = "Attractor"
    FLOQUET_SWEEP = "FloquetSweep"
    PROBE_MAP = "ProbeMap"
    LINESHAPE = "Lineshape"
    NP_SPECTRUM = "NpSpectrum"
    PHASE_SCAN = "PhaseScan"
    HYSTERESIS = "Hysteresis"

    @property
    def slug(self):
        return {
            "Trace": "trace", "Attractor": "attractor", "FloquetSweep": "floquet-sweep",
            "ProbeMap": "probe-map", "Lineshape": "lineshape", "NpSpectrum": "np-spectrum",
            "PhaseScan": "phase-scan", "Hysteresis": "hysteresis",
        }[self.value]

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        key = str(text).replace("-", "").replace("_", "").lower()
        for t in cls:
            if t.value.lower() == key:
                return t
        raise ConfigError(f"unknown task {text!r}; choose from {[t.slug for t in cls]}")


@dataclass(frozen=True)
class AxisSpec:
    """Inclusive linear axis ``linspace(start, stop, count)`` or explicit ``values``."""

    start: float = 0.0
    stop: float = 0.0
    count: int = 1
    values: tuple | None = None

    def grid(self) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        if self.count == 1:
            return np.array([float(self.start)])
        return np.linspace(self.start, self.stop, self.count)

    def problems(self, name):
        out = []
        if self.values is not None:
            v = np.asarray(self.values, dtype=float)
            if v.size < 1:
                out.append(f"grid {name}: no values")
            elif not np.all(np.isfinite(v)):
                out.append(f"grid {name}: non-finite values")
            elif v.size > 1 and not np.all(np.diff(v) > 0):
                out.append(f"grid {name}: values must be strictly increasing")
            return out
        if int(self.count) != self.count or self.count < 1:
            out.append(f"grid {name}: count must be an integer >= 1")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            out.append(f"grid {name}: non-finite bounds")
        elif self.count > 1 and not self.stop > self.start:
            out.append(f"grid {name}: stop must exceed start")
        return out

    @classmethod
    def from_obj(cls, obj):
        if isinstance(obj, cls):
            return obj
        if isinstance(obj, (list, tuple)):
            return cls(values=tuple(float(v) for v in obj))
        if isinstance(obj, (int, float)):
            return cls(start=float(obj), stop=float(obj), count=1)
        if not isinstance(obj, dict):
            raise ConfigError(f"cannot read axis from {obj!r}")
        unknown = set(obj) - {"start", "stop", "count", "values"}
        if unknown:
            raise ConfigError(f"unknown axis keys {sorted(unknown)}")
        if "values" in obj:
            return cls(values=tuple(float(v) for v in obj["values"]))
        start = float(obj.get("start", 0.0))
        return cls(start=start, stop=float(obj.get("stop", start)),
                   count=int(obj.get("count", 1)))


# grid defaults per task (units described in the module docstring)
DEFAULT_GRIDS = {
    "omega": {"start": 0.7, "stop": 1.2, "count": 61},
    "g1_ratio": {"start": 0.0, "stop": 1.0, "count": 41},
    "offset": {"start": -0.4, "stop": 0.4, "count": 41},
    "phi": {"values": [k * math.pi / 4 for k in range(8)]},
}
TASK_GRIDS = {
    Task.FLOQUET_SWEEP: ("omega", "g1_ratio"),
    Task.PROBE_MAP: ("omega", "offset"),
    Task.LINESHAPE: ("offset",),
    Task.NP_SPECTRUM: ("omega",),
    Task.PHASE_SCAN: ("phi", "offset"),
    Task.HYSTERESIS: ("omega",),
}

_MODEL_KEYS = {"kappa", "delta_c", "delta", "g0", "g0_ratio", "g1", "g1_ratio",
               "omega", "omega_ratio", "n_atoms", "regime_factor"}
_PROBE_KEYS = {"eta0", "omega_pr", "offset", "phi", "enabled"}
_FLOQUET_KEYS = {"n_cut", "refine_tol", "max_n_cut", "tol", "relax_periods", "tilt", "seeds"}
_TRACE_KEYS = {"periods", "n_cut", "with_probe", "seed", "relax"}
_TOP_KEYS = {"task", "model", "probe", "grids", "ensemble", "floquet", "trace",
             "output_dir", "workers", "reproducible", "plot", "method"}


def _defaults():
    return {
        "model": {"kappa": 1.0, "delta_c": 1.0, "delta": 0.1, "g0_ratio": 0.5,
                  "g1_ratio": 0.6, "omega_ratio": 1.0, "n_atoms": 1.0e4},
        "probe": {"eta0": 0.1, "offset": 0.19, "phi": 0.0, "enabled": False},
        "grids": {},
        "ensemble": {},
        "floquet": {"n_cut": 4096, "refine_tol": 1e-8, "max_n_cut": 2**16, "tol": 1e-6,
                    "relax_periods": None, "tilt": 1e-3, "seeds": ["np", "tilted", "large"]},
        "trace": {"periods": 8, "n_cut": 512, "with_probe": False, "seed": "tilted",
                  "relax": True},
        "output_dir": "out",
        "workers": 1,
        "reproducible": False,
        "plot": False,
        "method": "wigner",
    }


def merge(base, over):
    """Recursive in-place update of nested mappings."""
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            merge(base[key], value)
        else:
            base[key] = value
    return base


@dataclass
class RunConfig:
    task: Task
    model: ModelParams
    grids: dict = field(default_factory=dict)
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    output_dir: Path = Path("out")
    workers: int = 1
    reproducible: bool = False
    plot: bool = False
    probe: dict = field(default_factory=dict)
    floquet: dict = field(default_factory=dict)
    trace: dict = field(default_factory=dict)
    method: str = "wigner"
    raw: dict = field(default_factory=dict, repr=False)

    def axis(self, name) -> np.ndarray:
        return self.grids[name].grid()

    def echo(self) -> dict:
        """Fully resolved settings in the file format (round-trips through ``from_dict``)."""
        out = copy.deepcopy(self.raw)
        out["task"] = self.task.slug
        out["output_dir"] = str(self.output_dir)
        out["workers"] = self.workers
        out["reproducible"] = self.reproducible
        out["plot"] = self.plot
        out["ensemble"] = {k: v for k, v in asdict(self.ensemble).items()}
        out["grids"] = {}
        for name, ax in self.grids.items():
            if ax.values is not None:
                out["grids"][name] = {"values": list(ax.values)}
            else:
                out["grids"][name] = {"start": ax.start, "stop": ax.stop, "count": ax.count}
        return out

    def result_hash(self) -> str:
        """Hash of the settings that determine results (not workers, paths or plotting)."""
        from .io import config_hash

        echo = self.echo()
        for key in ("output_dir", "workers", "plot"):
            echo.pop(key, None)
        return config_hash(echo)

    @classmethod
    def from_dict(cls, data: dict, task=None) -> RunConfig:
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        raw = merge(_defaults(), copy.deepcopy(data))
        name = task if task is not None else raw.get("task")
        if name is None:
            raise ConfigError("no task given")
        t = Task.parse(name)
        raw["task"] = t.slug
        for section, keys in (("model", _MODEL_KEYS), ("probe", _PROBE_KEYS),
                              ("floquet", _FLOQUET_KEYS), ("trace", _TRACE_KEYS)):
            if not isinstance(raw[section], dict):
                raise ConfigError(f"section {section!r} must be a mapping")
            bad = set(raw[section]) - keys
            if bad:
                raise ConfigError(f"unknown {section} keys {sorted(bad)}")
        try:
            model = _build_model(raw["model"], raw["probe"])
            ens_fields = set(EnsembleSpec.__dataclass_fields__)
            bad = set(raw["ensemble"]) - ens_fields
            if bad:
                raise ConfigError(f"unknown ensemble keys {sorted(bad)}")
            ensemble = EnsembleSpec(**raw["ensemble"])
        except ConfigError:
            raise
        except SupercriticalCoupling as exc:
            raise ConfigError(f"supercritical coupling: {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        grids = {}
        for gname, obj in raw["grids"].items():
            if gname not in DEFAULT_GRIDS:
                raise ConfigError(f"unknown grid {gname!r}")
            default = DEFAULT_GRIDS[gname]
            if isinstance(obj, dict) and "values" not in obj and "values" not in default:
                # partial axis entries (e.g. from --set grids.omega.count=11)
                obj = {**default, **obj}
            grids[gname] = AxisSpec.from_obj(obj)
        for gname in TASK_GRIDS.get(t, ()):
            grids.setdefault(gname, AxisSpec.from_obj(DEFAULT_GRIDS[gname]))
        method = str(raw.get("method", "wigner"))
        if method not in ("wigner", "meanfield"):
            raise ConfigError(f"method must be 'wigner' or 'meanfield', got {method!r}")
        workers = raw.get("workers", 1)
        if not isinstance(workers, int) or workers < 1:
            raise ConfigError(f"workers must be a positive integer, got {workers!r}")
        return cls(task=t, model=model, grids=grids, ensemble=ensemble,
                   output_dir=Path(raw["output_dir"]), workers=workers,
                   reproducible=bool(raw["reproducible"]), plot=bool(raw["plot"]),
                   probe=dict(raw["probe"]), floquet=dict(raw["floquet"]),
                   trace=dict(raw["trace"]), method=method, raw=raw)

    def validate(self) -> tuple[list[str], list[str]]:
        """Return ``(warnings, errors)`` without raising."""
        return validate(self)


def _build_model(m, probe):
    kappa = float(m.get("kappa", 1.0))
    delta_c = float(m.get("delta_c", 1.0))
    delta = float(m.get("delta", 0.1))
    if not (kappa > 0 and delta_c > 0 and delta > 0):
        raise ConfigError("kappa, delta_c and delta must be positive")
    g_c = critical_coupling(kappa, delta_c, delta)
    g0 = float(m["g0"]) if m.get("g0") is not None else float(m["g0_ratio"]) * g_c
    if g0 >= g_c:
        raise SupercriticalCoupling(f"g0/g_c = {g0 / g_c:g} >= 1 (no normal phase)")
    g1 = float(m["g1"]) if m.get("g1") is not None else float(m["g1_ratio"]) * g0
    omega_res = delta * math.sqrt(1.0 - (g0 / g_c) ** 2)
    if m.get("omega") is not None:
        omega = float(m["omega"])
    else:
        omega = 2.0 * float(m["omega_ratio"]) * omega_res
    pr = None
    if probe.get("enabled"):
        if probe.get("omega_pr") is not None:
            om_pr = float(probe["omega_pr"])
        else:
            om_pr = 0.5 * omega + float(probe.get("offset", 0.0)) * omega_res
        pr = ProbeParams(eta0=float(probe.get("eta0", 0.1)), omega_pr=om_pr,
                         phi=float(probe.get("phi", 0.0)))
    kwargs = {}
    if m.get("regime_factor") is not None:
        kwargs["regime_factor"] = float(m["regime_factor"])
    return ModelParams(kappa=kappa, delta_c=delta_c, delta=delta, g0=g0, g1=g1,
                       omega=omega, n_atoms=float(m.get("n_atoms", 1.0e4)), probe=pr,
                       **kwargs)


def validate_dict(data: dict, task=None) -> tuple[list[str], list[str]]:
    """Diagnostics for a raw config mapping; construction failures become errors."""
    try:
        cfg = RunConfig.from_dict(data, task=task)
    except ConfigError as exc:
        return [], [str(exc)]
    return validate(cfg)


def validate(cfg: RunConfig) -> tuple[list[str], list[str]]:
    warnings, errors = list(cfg.model.regime_warnings()), []
    for name, ax in cfg.grids.items():
        errors.extend(ax.problems(name))
    p = cfg.model
    if cfg.task in (Task.PROBE_MAP, Task.LINESHAPE, Task.PHASE_SCAN):
        # the largest drive frequency on the grid sets the tightest regime bound
        top = p
        if "omega" in cfg.grids and not cfg.grids["omega"].problems("omega"):
            g_c = critical_coupling(p.kappa, p.delta_c, p.delta)
            w = p.delta * math.sqrt(1 - (p.g0 / g_c) ** 2)
            top = p.replace(omega=2 * w * float(cfg.axis("omega").max()))
        try:
            _, dt, *_ = cfg.ensemble.resolve(top)
        except ValueError as exc:
            errors.append(f"ensemble: {exc}")
        else:
            bound = min(0.05 / top.kappa, top.period / 256.0)
            if cfg.ensemble.dt > bound:
                warnings.append(f"ensemble dt {cfg.ensemble.dt:g} exceeds the step bound "
                                f"min(0.05/kappa, T/256); using {dt:g}")
    n_cut = cfg.floquet.get("n_cut", 4096)
    if not isinstance(n_cut, int) or n_cut < 256:
        errors.append(f"floquet n_cut must be an integer >= 256, got {n_cut!r}")
    periods = cfg.trace.get("periods", 8)
    if not isinstance(periods, int) or periods < 1:
        errors.append(f"trace periods must be a positive integer, got {periods!r}")
    try:
        out = Path(cfg.output_dir)
        probe_dir = out if out.exists() else next(
            (q for q in out.parents if q.exists()), Path("."))
        if not os.access(probe_dir, os.W_OK):
            errors.append(f"output_dir {out} is not writable")
    except OSError as exc:
        errors.append(f"output_dir: {exc}")
    return warnings, errors


def parse_override(text):
    """``a.b=value`` into ``({"a": {"b": value}})`` with YAML typing of the value."""
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, _, value = text.partition("=")
    keys = [k for k in key.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"empty key in {text!r}")
    try:
        parsed = yaml.safe_load(value) if value.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value in {text!r}: {exc}") from exc
    if isinstance(parsed, str):
        # YAML 1.1 reads "1e3" as a string
        try:
            parsed = float(parsed)
        except ValueError:
            pass
    out = parsed
    for k in reversed(keys):
        out = {k: out}
    return out


def load_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    # a manifest carries the echoed config under "config"
    if isinstance(data, dict) and "config" in data and "versions" in data:
        data = data["config"]
    return data or {}


def load(path=None, overrides=(), task=None) -> RunConfig:
    data = load_file(path) if path is not None else {}
    for item in overrides:
        data = merge(data, parse_override(item))
    return RunConfig.from_dict(data, task=task)
