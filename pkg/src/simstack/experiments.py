"""Seeded Monte-Carlo experiment runners and record emission.

Two canned studies plus a free-form one:

* ``run_convergence`` - ascent traces at fixed geometry (three layers of
  6 x 6 elements) over four element-spacing cases, emitting the per-iteration
  sum rate for every requested run mode.
* ``run_layer_sweep`` - final sum rate against the layer count with the
  total element budget held at 72, averaged over realizations downstream.
* ``run_custom`` - final sum rates for the configured geometry as-is.

Run modes pair an optimization channel model with an evaluation model:
EE optimizes and evaluates on the exact chain model, SE optimizes on the
simplified model and evaluates on the exact one, SS uses the simplified
model for both. The exact-model runs follow a two-fidelity protocol: the
cheap forward-only surrogate is ascended first (exploring with the
configured step policy), then the exact model refines that solution with
the plain constant-initial-step ascent. The refinement is monotone in the
exact metric from the surrogate's endpoint, so the EE result never falls
below the SE result of the same realization.

Every realization derives its own generator from (seed, scenario, index),
so results do not depend on how work is distributed across processes.
Linear-algebra thread pools are pinned to one thread per process; the
matrices here are far too small to gain from threaded kernels, and
realization-level process parallelism is the intended scaling axis.
"""

from __future__ import annotations

import csv
import io
import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .channel import (
    ChannelRealization,
    RisLayer,
    SimStack,
    channel_exact_t,
    channel_simplified,
)
from .config import ExperimentConfig
from .medium import PROVIDERS, RsValidityWarning, external_segments, sweep_geometry
from .multiport import SolveCounter
from .optimizer import gda_optimize, init_phases, sum_rate, uniform_power

__all__ = ["RunRecord", "COLUMNS", "run_convergence", "run_layer_sweep",
           "run_custom", "run_experiment", "emit", "CASE_SPACINGS_WL",
           "MODE_MODELS"]

#: (l_x, l_y, l_z) in wavelengths for the four convergence cases
CASE_SPACINGS_WL = {
    1: (0.5, 0.5, 0.5),
    2: (1 / 3, 1 / 3, 1 / 3),
    3: (1 / 3, 0.5, 0.5),
    4: (0.5, 1 / 3, 1 / 3),
}

#: mode -> (optimization model, evaluation model)
MODE_MODELS = {
    "EE": ("exact-t", "exact-t"),
    "SE": ("simplified", "exact-t"),
    "SS": ("simplified", "simplified"),
}

COLUMNS = ("experiment", "mode", "L", "N", "realization", "iteration",
           "sum_rate_bps_hz", "wallclock_ms", "seed", "config_hash")


@dataclass(frozen=True)
class RunRecord:
    """One emitted data point. ``iteration`` indexes the ascent trace for
    convergence runs and reports the iterations performed for final-value
    runs. ``factorizations`` is the per-evaluation factorization count of
    the evaluation model (not emitted; kept for auditing)."""

    experiment: str
    mode: str
    layer_count: int
    n: int
    realization: int
    iteration: int
    sum_rate: float
    wallclock_ms: float
    seed: int
    config_hash: str
    factorizations: int = 0

    def as_row(self):
        return (self.experiment, self.mode, self.layer_count, self.n,
                self.realization, self.iteration, repr(float(self.sum_rate)),
                f"{self.wallclock_ms:.3f}", self.seed, self.config_hash)


def _realization_rng(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _build_media(provider, geometry):
    """All inter-layer media for a geometry; diffraction-validity warnings
    are collected instead of raised so the caller can surface them once."""
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RsValidityWarning)
        media = tuple(provider.scattering(geometry, pair)
                      for pair in range(1, geometry.layer_count))
    for w in caught:
        if issubclass(w.category, RsValidityWarning):
            notes.append(str(w.message))
        else:
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    return media, notes


def _evaluate(model: str, stack: SimStack, ch: ChannelRealization, power,
              counter: SolveCounter | None = None) -> float:
    if model == "exact-t":
        return sum_rate(channel_exact_t(stack, ch, counter), power, ch.noise_psd)
    return sum_rate(channel_simplified(stack, ch), power, ch.noise_psd)


@dataclass(frozen=True)
class _ModeOutcome:
    values: list          # evaluation-model value per iteration (or final only)
    iterations: int
    wallclock_ms: float
    factorizations: int   # per-evaluation count of the evaluation model


def _run_modes(cfg: ExperimentConfig, stack0: SimStack, ch: ChannelRealization,
               modes, *, trace: bool):
    """Optimize from a common initialization under each requested mode.

    The simplified-model ascent is run once and shared: it is the SS result,
    its iterates evaluated exactly are the SE result, and its endpoint seeds
    the exact-model ascent when it outscores the initialization under the
    exact model. Wall clock per mode includes that shared stage.
    """
    power = uniform_power(ch.users, cfg.p_max)
    # with reflection-free media the forward-only model IS the exact channel,
    # so the surrogate ascent already is exact-model ascent and the exact
    # stage would only repeat it
    reflection_free = all(not m.b11.any() and not m.b22.any() for m in stack0.media)
    start = time.perf_counter()
    surrogate = gda_optimize(stack0, ch, power,
                             cfg.optimizer_settings("simplified"),
                             record_iterates=trace and modes != ("SS",))
    surrogate_ms = (time.perf_counter() - start) * 1e3

    results = {}
    for mode in modes:
        eval_model = MODE_MODELS[mode][1]
        start = time.perf_counter()
        final_stack = stack0.with_phases(surrogate.design.phi)
        iterations = len(surrogate.trace) - 1
        if mode == "SS":
            values = list(surrogate.trace) if trace else [float(surrogate.trace[-1])]
        elif mode == "SE" or (mode == "EE" and reflection_free):
            if trace:
                values = [_evaluate("exact-t", stack0.with_phases(phi), ch, power)
                          for phi in surrogate.iterates]
            else:
                values = [_evaluate("exact-t", final_stack, ch, power)]
        else:  # EE: plain-step exact refinement of the surrogate solution
            exact_settings = replace(cfg.optimizer_settings("exact-t"),
                                     step_policy="fixed")
            outcome = gda_optimize(final_stack, ch, power, exact_settings)
            values = list(outcome.trace) if trace else [float(outcome.trace[-1])]
            iterations = len(outcome.trace) - 1
            final_stack = stack0.with_phases(outcome.design.phi)
        counter = SolveCounter()
        _evaluate(eval_model, final_stack, ch, power, counter)
        elapsed_ms = surrogate_ms + (time.perf_counter() - start) * 1e3
        results[mode] = _ModeOutcome(values, iterations, elapsed_ms, counter.count)
    return results


def _zero_stack(geometry, media) -> SimStack:
    layers = tuple(RisLayer(np.zeros(geometry.n)) for _ in range(geometry.layer_count))
    return SimStack(layers, media, geometry)


def _realization_records(cfg: ExperimentConfig, experiment: str, geometry, media,
                         realization: int, rng_key, *, trace: bool):
    rng = _realization_rng(cfg.seed, *rng_key)
    h_it, h_ri = external_segments(geometry, cfg.users, rng)
    ch = ChannelRealization(h_it, h_ri, cfg.noise_psd, cfg.p_max)
    base = _zero_stack(geometry, media)
    start = init_phases(base, ch, cfg.init, seed=rng)
    stack0 = base.with_phases(start.phi)
    results = _run_modes(cfg, stack0, ch, cfg.modes, trace=trace)
    records = []
    config_hash = cfg.config_hash()
    for mode in cfg.modes:
        out = results[mode]
        if trace:
            for i, value in enumerate(out.values):
                records.append(RunRecord(experiment, mode, geometry.layer_count,
                                         geometry.n, realization, i, value,
                                         out.wallclock_ms, cfg.seed, config_hash,
                                         out.factorizations))
        else:
            records.append(RunRecord(experiment, mode, geometry.layer_count,
                                     geometry.n, realization, out.iterations,
                                     out.values[0], out.wallclock_ms, cfg.seed,
                                     config_hash, out.factorizations))
    return records


def _scenario_tasks(cfg: ExperimentConfig):
    """(experiment label, geometry, media, scenario key, trace flag) per
    scenario, plus collected medium-validity notes."""
    provider = _provider(cfg)
    scenarios = []
    notes = []
    if cfg.kind == "convergence":
        for case in cfg.cases:
            geometry = cfg.geometry(spacings_wl=CASE_SPACINGS_WL[case])
            media, case_notes = _build_media(provider, geometry)
            scenarios.append((f"convergence-case{case}", geometry, media, (case,), True))
            notes.extend(case_notes)
    elif cfg.kind == "layer-sweep":
        for layer_count in cfg.layers:
            geometry = sweep_geometry(
                layer_count, cfg.wavelength,
                dipole_length=cfg.element_length_wl * cfg.wavelength,
                dipole_radius=cfg.element_radius_wl * cfg.wavelength)
            media, sweep_notes = _build_media(provider, geometry)
            scenarios.append(("layer-sweep", geometry, media, (layer_count,), False))
            notes.extend(sweep_notes)
    else:
        geometry = cfg.geometry()
        media, custom_notes = _build_media(provider, geometry)
        scenarios.append(("custom", geometry, media, (0,), False))
        notes.extend(custom_notes)
    return scenarios, notes


def _provider(cfg: ExperimentConfig):
    return PROVIDERS[cfg.provider]()


def _task(args):
    cfg, experiment, geometry, media, realization, key, trace = args
    with threadpool_limits(limits=1, user_api="blas"):
        return _realization_records(cfg, experiment, geometry, media, realization,
                                    key, trace=trace)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1):
    """Run the configured experiment; returns ``(records, notes)`` with
    records ordered by scenario, then realization, then mode."""
    with threadpool_limits(limits=1, user_api="blas"):
        scenarios, notes = _scenario_tasks(cfg)
    tasks = [(cfg, experiment, geometry, media, realization,
              key + (realization,), trace)
             for experiment, geometry, media, key, trace in scenarios
             for realization in range(cfg.monte_carlo_runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_task, tasks))
    else:
        chunks = [_task(t) for t in tasks]
    records = [record for chunk in chunks for record in chunk]
    return records, notes


def run_convergence(cfg: ExperimentConfig, jobs: int = 1):
    if cfg.kind != "convergence":
        raise ValueError("config kind is not 'convergence'")
    return run_experiment(cfg, jobs)


def run_layer_sweep(cfg: ExperimentConfig, jobs: int = 1):
    if cfg.kind != "layer-sweep":
        raise ValueError("config kind is not 'layer-sweep'")
    return run_experiment(cfg, jobs)


def run_custom(cfg: ExperimentConfig, jobs: int = 1):
    if cfg.kind != "custom":
        raise ValueError("config kind is not 'custom'")
    return run_experiment(cfg, jobs)


def _header_lines(cfg: ExperimentConfig, stamp: str):
    return [
        f"# simstack {__version__}",
        f"# generated_at: {stamp}",
        f"# seed: {cfg.seed}",
        f"# config_hash: {cfg.config_hash()}",
        f"# config: {cfg.echo()}",
    ]


def emit(records, cfg: ExperimentConfig, directory, fmt: str | None = None) -> Path:
    """Write records under ``directory`` as ``<kind>.csv`` or ``<kind>.json``.

    The column order is fixed; the header carries the artifact version, the
    seed, the config hash and a full config echo. Apart from the
    ``generated_at`` stamp and the measured wall-clock column, output bytes
    are a pure function of (config, seed).
    """
    fmt = fmt or cfg.out_format
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    path = directory / f"{cfg.kind}.{fmt}"
    if fmt == "csv":
        buf = io.StringIO()
        for line in _header_lines(cfg, stamp):
            buf.write(line + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for record in records:
            writer.writerow(record.as_row())
        path.write_text(buf.getvalue(), encoding="utf-8")
    elif fmt == "json":
        payload = {
            "version": __version__,
            "generated_at": stamp,
            "seed": cfg.seed,
            "config_hash": cfg.config_hash(),
            "config": cfg.echo(),
            "columns": list(COLUMNS),
            "records": [dict(zip(COLUMNS, r.as_row())) for r in records],
        }
        path.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    return path
