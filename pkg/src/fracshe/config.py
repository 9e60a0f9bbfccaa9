"""Experiment configuration: schema validation, physics rules, defaults and hashing."""
from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .grid import GridSpec
from .noise import CovarianceModel
from .solver import SigmaSpec, SolverConfig, SpectralStepper

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KINDS = ("kernel", "noise-validate", "simulate", "constants", "clt", "fclt", "tightness",
         "inequalities", "all")
# kinds that cannot fall back to a built-in battery
NEEDS_SOLVER = ("simulate", "clt", "fclt")
NEEDS_RADII = ("clt", "fclt")
# fields that do not change any result, left out of the hash
NON_SEMANTIC = ("output_dir", "workers")
DEFAULTS = {"schema_version": SCHEMA_VERSION, "replicas": 1, "seed": 0, "workers": 1,
            "output_dir": None, "scale": "full", "tolerances": {}}
MAX_INCREMENT_SD = 0.2


class ConfigError(ValueError):
    """Raised with every violation found, not only the first."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.violations))


def load_schema(version: int = SCHEMA_VERSION) -> dict:
    text = resources.files("fracshe").joinpath(f"schema/experiment-v{version}.json").read_text()
    return json.loads(text)


def _schema_errors(raw: dict) -> list:
    validator = jsonschema.Draft202012Validator(load_schema())
    out = []
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path)):
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(f"schema: {where}: {err.message}")
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, normalized experiment description."""

    data: dict

    @property
    def kind(self) -> str:
        return self.data["kind"]

    @property
    def hash(self) -> str:
        return config_hash(self.data)

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)

    @property
    def grid(self) -> GridSpec | None:
        g = self.data.get("grid")
        return GridSpec(g["dim"], g["half_length"], g["points"]) if g else None

    @property
    def model(self) -> CovarianceModel | None:
        m = self.data.get("model")
        return CovarianceModel.from_dict(m) if m else None

    def solver_config(self, replicas: int | None = None, output_times=None) -> SolverConfig:
        s = self.data["solver"]
        return SolverConfig(s["alpha"], s["dt"], s["T"], self.grid, SigmaSpec.from_dict(s["sigma"]),
                            self.model, scheme=s["scheme"],
                            replicas=replicas or self.data["replicas"], seed=self.data["seed"],
                            output_times=tuple(output_times or self.data.get("times") or (s["T"],)))

    def tolerance(self, name: str, default: float) -> float:
        return float(self.data["tolerances"].get(name, default))


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(data: dict) -> str:
    semantic = {k: v for k, v in data.items() if k not in NON_SEMANTIC}
    return hashlib.sha256(canonical_json(semantic).encode()).hexdigest()


def normalize(raw: dict) -> dict:
    """Fill defaults and coerce numbers, so equal content gives equal hashes."""
    d = copy.deepcopy(raw)
    for k, v in DEFAULTS.items():
        d.setdefault(k, copy.deepcopy(v))
    if "solver" in d:
        d["solver"].setdefault("scheme", "exponential-euler")
        for k in ("alpha", "dt", "T"):
            d["solver"][k] = float(d["solver"][k])
        d["solver"]["sigma"]["params"] = [float(p) for p in d["solver"]["sigma"]["params"]]
    if "grid" in d:
        d["grid"]["half_length"] = float(d["grid"]["half_length"])
    if "model" in d:
        d["model"] = CovarianceModel.from_dict(d["model"]).to_dict()
    for k in ("radii", "times"):
        if k in d:
            d[k] = sorted(float(x) for x in d[k])
    d["tolerances"] = {k: float(v) for k, v in d["tolerances"].items()}
    return d


def _on_lattice(t, dt):
    k = t / dt
    return abs(k - round(k)) <= 1e-6


def physics_violations(d: dict) -> list:
    """Cross-field rules; each message names the rule it enforces."""
    out = []
    kind = d["kind"]
    for block in ("grid", "model", "solver"):
        if kind in NEEDS_SOLVER and block not in d:
            out.append(f"kind {kind!r} requires a {block!r} block")
    if kind in NEEDS_RADII and "radii" not in d:
        out.append(f"kind {kind!r} requires 'radii'")
    if kind == "tightness" and "model" in d and "radii" not in d:
        out.append("kind 'tightness' with a model block requires 'radii'")
    if kind in ("clt", "fclt") and "times" not in d:
        out.append(f"kind {kind!r} requires 'times'")
    if kind == "fclt" and len(d.get("times", [])) < 2:
        out.append("fclt needs at least two record times")

    grid = model = None
    if "grid" in d:
        g = d["grid"]
        n = g["points"]
        if n & (n - 1):
            out.append(f"grid rule: points per axis must be a power of two (got {n})")
        else:
            grid = GridSpec(g["dim"], g["half_length"], n)
    if "model" in d:
        try:
            model = CovarianceModel.from_dict(d["model"])
        except ValueError as e:
            out.append(f"model: {e}")
    if grid is not None and model is not None and grid.dim != model.dim:
        out.append(f"dimension rule: model d = {model.dim} differs from grid d = {grid.dim}")

    s = d.get("solver")
    if s is None:
        if model is not None and kind == "tightness":
            out.append("tightness needs a 'solver' block for alpha")
        return out
    alpha, dt, T = s["alpha"], s["dt"], s["T"]
    try:
        sigma = SigmaSpec.from_dict(s["sigma"])
    except ValueError as e:
        out.append(f"sigma: {e}")
        sigma = None
    if model is not None:
        out.extend(model.violations(alpha))
    if dt > T:
        out.append("dt rule: dt must not exceed T")
    elif not _on_lattice(T, dt):
        out.append("dt rule: T must be an integer multiple of dt")
    for t in d.get("times", []):
        if t > T + 1e-12:
            out.append(f"time rule: record time {t} exceeds T = {T}")
        elif not _on_lattice(t, dt):
            out.append(f"dt rule: record time {t} is not a multiple of dt = {dt}")
    if sigma is not None and kind in ("clt", "fclt", "constants") and sigma.sigma_at_one == 0:
        out.append("sigma rule: sigma(1) must be nonzero (otherwise u stays identically 1)")
    if grid is not None and "radii" in d and 0 < alpha <= 2:
        horizon = max(d.get("times", [T]) + [T])
        limit = grid.half_length - 4.0 * horizon ** (1.0 / alpha)
        if max(d["radii"]) > limit:
            out.append(f"truncation rule: largest radius {max(d['radii'])} exceeds "
                       f"L - 4 T^(1/alpha) = {limit:.6g}")
    if not out and grid is not None and sigma is not None and model is not None and kind != "tightness":
        cfg = SolverConfig(alpha, dt, T, grid, sigma, model, scheme=s.get("scheme", "exponential-euler"))
        out.extend(f"solver: {v}" for v in cfg.violations())
        if not out:
            sd = SpectralStepper(cfg).step_increment_sd()
            if sigma.lipschitz_constant > 0 and sd > MAX_INCREMENT_SD:
                out.append(f"dt rule: per-step increment sd {sd:.3g} exceeds {MAX_INCREMENT_SD} "
                           f"(reduce dt)")
    return out


def validate(raw: dict) -> ExperimentConfig:
    """Schema check, then physics rules; raises :class:`ConfigError` listing all violations."""
    errors = _schema_errors(raw)
    if errors:
        raise ConfigError(errors)
    d = normalize(raw)
    errors = physics_violations(d)
    if errors:
        raise ConfigError(errors)
    for k, v in d["tolerances"].items():
        log.warning("tolerance override %s = %g (pre-registered value replaced)", k, v)
    return ExperimentConfig(d)


def load_and_validate(source) -> ExperimentConfig:
    """Validate a config given as a path, a JSON string or a dict."""
    if isinstance(source, dict):
        raw = source
    else:
        text = str(source)
        try:
            if not text.lstrip().startswith("{"):
                text = Path(source).read_text()
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError([f"parse: {e}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["schema: <root>: config must be a JSON object"])
    return validate(raw)

