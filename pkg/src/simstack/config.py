"""Experiment configuration: a flat key-value text format with sections.

The format is INI-style so experiment recipes diff cleanly::

    [experiment]
    kind = convergence
    modes = EE,SE
    monte_carlo_runs = 20
    seed = 1234

    [geometry]
    frequency_ghz = 28
    n_y = 6
    n_z = 6
    layer_count = 3

Every key is optional and falls back to a documented default (see
docs/config-schema.md). Validation reports all violations, not just the
first.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, fields, replace

from .medium import PROVIDERS, ArrayGeometry, wavelength_from_hz
from .optimizer import OptimizerSettings

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "load_config",
           "validate_config", "KINDS", "MODES", "INIT_MODES"]

KINDS = ("convergence", "layer-sweep", "custom")
MODES = ("EE", "SE", "SS")
INIT_MODES = ("simplified-mrt", "zeros", "random")
SWEEP_LAYERS = (2, 3, 4, 6)


class ConfigError(Exception):
    """Invalid experiment configuration; ``errors`` lists every violation."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "custom"
    modes: tuple = ("EE", "SE", "SS")
    monte_carlo_runs: int = 20
    seed: int = 1234
    cases: tuple = (1, 2, 3, 4)
    layers: tuple = SWEEP_LAYERS
    frequency_ghz: float = 28.0
    n_y: int = 6
    n_z: int = 6
    layer_count: int = 3
    spacing_x_wl: float = 0.5
    spacing_y_wl: float = 0.5
    spacing_z_wl: float = 0.5
    element_length_wl: float = 0.25
    element_radius_wl: float = 0.002
    provider: str = "dipole"
    users: int = 2
    noise_psd: float = 1.0
    p_max: float = 2.0
    max_iters: int = 60
    step0: float = 1.0
    backtrack: float = 0.5
    armijo_c: float = 1e-4
    fd_step: float = 1e-5
    tol: float = 0.0
    step_policy: str = "restart"
    init: str = "simplified-mrt"
    out_dir: str = "results"
    out_format: str = "csv"

    @property
    def wavelength(self) -> float:
        return wavelength_from_hz(self.frequency_ghz * 1e9)

    def geometry(self, *, spacings_wl=None, layer_count=None) -> ArrayGeometry:
        """Build the configured geometry, optionally overriding the spacings
        (in wavelengths) or the layer count."""
        lam = self.wavelength
        sx, sy, sz = spacings_wl if spacings_wl is not None else (
            self.spacing_x_wl, self.spacing_y_wl, self.spacing_z_wl)
        return ArrayGeometry(
            n_y=self.n_y,
            n_z=self.n_z,
            l_x=sx * lam,
            l_y=sy * lam,
            l_z=sz * lam,
            dipole_length=self.element_length_wl * lam,
            dipole_radius=self.element_radius_wl * lam,
            wavelength=lam,
            layer_count=layer_count if layer_count is not None else self.layer_count,
        )

    def optimizer_settings(self, channel_model: str) -> OptimizerSettings:
        return OptimizerSettings(
            max_iters=self.max_iters, step0=self.step0, backtrack=self.backtrack,
            armijo_c=self.armijo_c, fd_step=self.fd_step, tol=self.tol,
            step_policy=self.step_policy, channel_model=channel_model)

    def config_hash(self) -> str:
        """Digest over every field that affects the produced numbers (output
        location and format are excluded)."""
        skip = {"out_dir", "out_format"}
        lines = [f"{f.name}={getattr(self, f.name)!r}"
                 for f in fields(self) if f.name not in skip]
        return hashlib.sha256("\n".join(sorted(lines)).encode()).hexdigest()[:12]

    def echo(self) -> str:
        """Single-line canonical echo of every field, for output headers."""
        return " ".join(f"{f.name}={getattr(self, f.name)}" for f in fields(self))


def _parse_int(raw):
    return int(raw.strip())


def _parse_float(raw):
    return float(raw.strip())


def _parse_str(raw):
    return raw.strip()


def _parse_modes(raw):
    return tuple(m.strip().upper() for m in raw.split(",") if m.strip())


def _parse_int_list(raw):
    return tuple(int(x.strip()) for x in raw.split(",") if x.strip())


# (section, key) -> (field name, converter)
_SCHEMA = {
    ("experiment", "kind"): ("kind", _parse_str),
    ("experiment", "modes"): ("modes", _parse_modes),
    ("experiment", "monte_carlo_runs"): ("monte_carlo_runs", _parse_int),
    ("experiment", "seed"): ("seed", _parse_int),
    ("experiment", "cases"): ("cases", _parse_int_list),
    ("experiment", "layers"): ("layers", _parse_int_list),
    ("geometry", "frequency_ghz"): ("frequency_ghz", _parse_float),
    ("geometry", "n_y"): ("n_y", _parse_int),
    ("geometry", "n_z"): ("n_z", _parse_int),
    ("geometry", "layer_count"): ("layer_count", _parse_int),
    ("geometry", "spacing_x_wl"): ("spacing_x_wl", _parse_float),
    ("geometry", "spacing_y_wl"): ("spacing_y_wl", _parse_float),
    ("geometry", "spacing_z_wl"): ("spacing_z_wl", _parse_float),
    ("geometry", "element_length_wl"): ("element_length_wl", _parse_float),
    ("geometry", "element_radius_wl"): ("element_radius_wl", _parse_float),
    ("medium", "provider"): ("provider", _parse_str),
    ("system", "users"): ("users", _parse_int),
    ("system", "noise_psd"): ("noise_psd", _parse_float),
    ("system", "p_max"): ("p_max", _parse_float),
    ("optimizer", "max_iters"): ("max_iters", _parse_int),
    ("optimizer", "step0"): ("step0", _parse_float),
    ("optimizer", "backtrack"): ("backtrack", _parse_float),
    ("optimizer", "armijo_c"): ("armijo_c", _parse_float),
    ("optimizer", "fd_step"): ("fd_step", _parse_float),
    ("optimizer", "tol"): ("tol", _parse_float),
    ("optimizer", "step_policy"): ("step_policy", _parse_str),
    ("optimizer", "init"): ("init", _parse_str),
    ("output", "directory"): ("out_dir", _parse_str),
    ("output", "format"): ("out_format", _parse_str),
}


def _validate(cfg: ExperimentConfig) -> list:
    errors = []
    if cfg.kind not in KINDS:
        errors.append(f"experiment.kind: {cfg.kind!r} not one of {KINDS}")
    bad_modes = [m for m in cfg.modes if m not in MODES]
    if bad_modes or not cfg.modes:
        errors.append(f"experiment.modes: expected a nonempty subset of {MODES}, "
                      f"got {cfg.modes}")
    if cfg.monte_carlo_runs < 1:
        errors.append("experiment.monte_carlo_runs: must be at least 1")
    if cfg.kind == "convergence":
        bad_cases = [c for c in cfg.cases if c not in (1, 2, 3, 4)]
        if bad_cases or not cfg.cases:
            errors.append(f"experiment.cases: expected a nonempty subset of "
                          f"(1, 2, 3, 4), got {cfg.cases}")
    if cfg.kind == "layer-sweep":
        bad_layers = [x for x in cfg.layers if x not in SWEEP_LAYERS]
        if bad_layers or not cfg.layers:
            errors.append(f"experiment.layers: layer sweeps hold the element "
                          f"budget at 72, so layer counts must come from "
                          f"{SWEEP_LAYERS}; got {cfg.layers}")
    if cfg.frequency_ghz <= 0:
        errors.append("geometry.frequency_ghz: must be positive")
    if cfg.n_y < 1 or cfg.n_z < 1:
        errors.append("geometry.n_y/n_z: element counts must be at least 1")
    if cfg.layer_count < 1:
        errors.append("geometry.layer_count: must be at least 1")
    for name in ("spacing_x_wl", "spacing_y_wl", "spacing_z_wl",
                 "element_length_wl", "element_radius_wl"):
        if getattr(cfg, name) <= 0:
            errors.append(f"geometry.{name}: must be positive")
    if cfg.element_radius_wl >= cfg.element_length_wl:
        errors.append("geometry.element_radius_wl: must be below element_length_wl")
    if cfg.provider not in PROVIDERS:
        errors.append(f"medium.provider: {cfg.provider!r} not one of {tuple(PROVIDERS)}")
    if cfg.users < 1:
        errors.append("system.users: must be at least 1")
    if cfg.noise_psd <= 0:
        errors.append("system.noise_psd: must be positive")
    if cfg.p_max <= 0:
        errors.append("system.p_max: must be positive")
    if cfg.max_iters < 0:
        errors.append("optimizer.max_iters: must be nonnegative")
    if cfg.step0 <= 0:
        errors.append("optimizer.step0: must be positive")
    if not 0 < cfg.backtrack < 1:
        errors.append("optimizer.backtrack: must be in (0, 1)")
    if not 0 < cfg.armijo_c < 1:
        errors.append("optimizer.armijo_c: must be in (0, 1)")
    if cfg.fd_step <= 0:
        errors.append("optimizer.fd_step: must be positive")
    if cfg.tol < 0:
        errors.append("optimizer.tol: must be nonnegative")
    if cfg.step_policy not in ("fixed", "restart", "carryover"):
        errors.append(f"optimizer.step_policy: {cfg.step_policy!r} not one of "
                      "('fixed', 'restart', 'carryover')")
    if cfg.init not in INIT_MODES:
        errors.append(f"optimizer.init: {cfg.init!r} not one of {INIT_MODES}")
    if cfg.out_format not in ("csv", "json"):
        errors.append(f"output.format: {cfg.out_format!r} not one of ('csv', 'json')")
    return errors


def parse_config(text: str):
    """Parse config text. Returns ``(config, errors)``; ``config`` is None
    when parsing failed structurally, and ``errors`` collects every
    violation found."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    errors = []
    try:
        parser.read_string(text)
    except configparser.Error as e:
        return None, [f"parse error: {e}"]
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            spec = _SCHEMA.get((section, key))
            if spec is None:
                errors.append(f"unknown key {section}.{key}")
                continue
            name, convert = spec
            try:
                values[name] = convert(raw)
            except ValueError:
                errors.append(f"{section}.{key}: cannot parse {raw!r}")
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as e:
        return None, errors + [str(e)]
    errors.extend(_validate(cfg))
    return cfg, errors


def validate_config(path) -> list:
    """All violations in the config file at ``path`` (empty list = valid)."""
    with open(path, "r", encoding="utf-8") as fh:
        _cfg, errors = parse_config(fh.read())
    return errors


def load_config(path, **overrides) -> ExperimentConfig:
    """Load and validate; raises ConfigError listing every violation.
    Keyword overrides (e.g. seed=..., modes=...) are applied before the
    final validation pass."""
    with open(path, "r", encoding="utf-8") as fh:
        cfg, errors = parse_config(fh.read())
    if cfg is not None and overrides:
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
        errors = _validate(cfg)
    if cfg is None or errors:
        raise ConfigError(errors)
    return cfg
