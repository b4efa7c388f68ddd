"""Monte Carlo rate experiments: sample, measure distances, aggregate, fit."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..decomp import (
    ExactDoubling,
    GridGibbsMarkov,
    TrigPoly,
    flow_decomposition,
    induced_sigma,
    primary_decomposition,
)
from ..dynsys import RNG_ALGORITHM, MapSystem, OrbitSampler, make_rng
from ..otmetrics import pairwise_sup, prokhorov_cost, wasserstein1_cost
from ..pathspace import birkhoff_paths, brownian_paths, flow_paths
from ..suspension import (
    DEFAULT_DT,
    FlowObservable,
    RoofFunction,
    SuspensionFlow,
    sample_flow_starts,
)
from .config import ExperimentConfig
from .fitting import confidence_interval, fit_loglog, fit_loglog_fixed
from .theory import OutOfRegime, exponent_source, theoretical_exponent

__all__ = [
    "ExperimentError",
    "CosObservable",
    "Model",
    "CellSummary",
    "RateReport",
    "build_model",
    "decompose",
    "simulate_cell",
    "measure_cell",
    "run_rate_experiment",
    "write_outputs",
    "distances_csv",
]

ESTIMATOR_CAVEATS = (
    "distances are between M-atom empirical measures, an upward-biased estimate of the distance between laws",
    "paths are compared after linear interpolation on the comparison grid i/d",
    "fitted slopes are compared with theory; absolute values are not",
)


class ExperimentError(RuntimeError):
    """A simulation or solver failure inside one (n, seed) cell."""

    def __init__(self, n: int, seed: int, cause: BaseException):
        super().__init__(f"cell n={n}, seed={seed} failed: {type(cause).__name__}: {cause}")
        self.n = n
        self.seed = seed
        self.cause = cause


@dataclass(frozen=True)
class CosObservable:
    """x -> amp * cos(2 pi f_i x) - shift_i for each frequency f_i."""

    freqs: Tuple[int, ...]
    amp: float = 1.0
    shift: Tuple[float, ...] = ()

    def __call__(self, x):
        x = np.asarray(x, float)
        f = np.asarray(self.freqs, float)
        out = self.amp * np.cos(2.0 * np.pi * x[..., None] * f)
        if self.shift:
            out = out - np.asarray(self.shift)
        return out


@dataclass(frozen=True)
class _BaseOnly:
    g: Any

    def __call__(self, x, u):
        return self.g(x)


@dataclass(frozen=True)
class _Zero:
    dim: int

    def __call__(self, x):
        return np.zeros(np.shape(x) + (self.dim,))


@dataclass
class Model:
    """Everything derived from a config before sampling starts."""

    kind: str
    dim: int
    sigma: np.ndarray
    shift: Tuple[float, ...] = ()
    decomposition: Dict[str, Any] = field(default_factory=dict)


def _observable(cfg: ExperimentConfig, shift=()):
    if cfg.is_zero:
        return _Zero(cfg.dim)
    obs = cfg.observable
    return CosObservable(tuple(int(f) for f in obs["freqs"]), float(obs.get("amp", 1.0)), tuple(shift))


def _flow(cfg: ExperimentConfig) -> SuspensionFlow:
    a, b = cfg.system.get("roof", [1.0, 0.5])
    return SuspensionFlow(MapSystem.doubling(), RoofFunction.affine(float(a), float(b)))


def _map(cfg: ExperimentConfig) -> MapSystem:
    if cfg.system["kind"] == "lsv":
        return MapSystem.lsv(cfg.system["gamma"])
    return MapSystem.doubling()


def decompose(cfg: ExperimentConfig):
    """Decomposition behind the limit covariance, with the resulting model.

    Doubling maps decompose the trigonometric observable exactly; LSV maps
    decompose the induced observable on the first-return map; flows
    decompose the lap integral v_X over the doubling base.
    """
    kind = cfg.system["kind"]
    dim = cfg.dim
    if cfg.is_zero:
        return None, Model(kind, dim, np.zeros((dim, dim)), (), {"note": "zero observable"})
    if kind == "doubling":
        amp = float(cfg.observable.get("amp", 1.0))
        v = TrigPoly.stack([TrigPoly.cos(int(f), amp) for f in cfg.observable["freqs"]])
        dec = primary_decomposition(ExactDoubling(cfg.decomposition_grid), v)
        return dec, Model(kind, dim, dec.sigma, (), _dec_info(dec))
    if kind == "lsv":
        op = GridGibbsMarkov(cfg.system["gamma"], grid_size=cfg.decomposition_grid)
        sigma, mean_v, dec = induced_sigma(op, _observable(cfg))
        shift = tuple(float(m) for m in np.atleast_1d(mean_v))
        info = _dec_info(dec)
        info["induced_sigma"] = dec.sigma.tolist()
        info["mean_return_time"] = float(op.mean_return_time())
        return dec, Model(kind, dim, sigma, shift, info)
    flow = _flow(cfg)
    dt = float(cfg.system.get("dt", DEFAULT_DT))
    vobs = FlowObservable(_BaseOnly(_observable(cfg)), dim=dim, declared_mean_zero=True)
    fdec = flow_decomposition(flow, vobs, cfg.decomposition_grid, dt)
    info = _dec_info(fdec.base)
    info.update(mean_roof=fdec.mean_roof, base_sigma=fdec.base.sigma.tolist())
    return fdec.base, Model(kind, dim, fdec.sigma, (), info)


def _dec_info(dec) -> Dict[str, Any]:
    return {"residual": dec.residual, "truncation_K": dec.truncation_K, "operator": dec.operator}


def build_model(cfg: ExperimentConfig) -> Model:
    """Limit covariance (and LSV centring) for the configured system."""
    return decompose(cfg)[1]


def _restrict(vals: np.ndarray, n: int, d: int) -> np.ndarray:
    """Linear interpolation of node values at k/n onto the grid i/d."""
    pos = np.arange(d + 1) * (n / d)
    lo = np.minimum(np.floor(pos).astype(np.int64), n - 1)
    frac = (pos - lo)[None, :, None]
    return vals[:, lo] + frac * (vals[:, lo + 1] - vals[:, lo])


def simulate_cell(cfg: ExperimentConfig, model: Model, n: int, seed: int):
    """M process paths and M Brownian paths at i/d, each of shape (M, d + 1, N)."""
    kind = cfg.system["kind"]
    sampler_seed = [seed, n, 0]
    if kind == "flow":
        flow = _flow(cfg)
        dt = float(cfg.system.get("dt", DEFAULT_DT))
        vobs = FlowObservable(_BaseOnly(_observable(cfg)), dim=model.dim, declared_mean_zero=True)
        sampler = OrbitSampler(MapSystem.doubling(), seed=sampler_seed)
        laps = int(math.ceil(n / flow.roof.r_min)) + 2
        orbits, heights = sample_flow_starts(flow, sampler, cfg.M, laps)
        process = flow_paths(flow, vobs, orbits, heights, n, cfg.d, dt)
    else:
        burn_in = int(cfg.system.get("burn_in", 10_000))
        sampler = OrbitSampler(_map(cfg), burn_in=burn_in, seed=sampler_seed)
        orbits = sampler.orbits(cfg.M, n)
        v = _observable(cfg, model.shift)
        process = _restrict(birkhoff_paths(orbits, v, n), n, cfg.d)
    brownian = brownian_paths(model.sigma, cfg.d, cfg.M, make_rng([seed, n, 1]))
    return process, brownian


def measure_cell(cfg: ExperimentConfig, model: Model, n: int, seed: int) -> Dict[str, float]:
    process, brownian = simulate_cell(cfg, model, n, seed)
    cost = pairwise_sup(process, brownian)
    out = {}
    if "W1" in cfg.metrics:
        out["W1"] = wasserstein1_cost(cost)
    if "Pi" in cfg.metrics:
        out["Pi"] = prokhorov_cost(cost)
    return out


def _cell_job(args):
    cfg_dict, model, n, seed = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        return n, seed, measure_cell(cfg, model, n, seed)
    except Exception as exc:  # re-raised with the cell attached
        raise ExperimentError(n, seed, exc) from exc


@dataclass
class CellSummary:
    n: int
    metric: str
    median: float
    q25: float
    q75: float
    values: List[float]


@dataclass
class RateReport:
    experiment: str
    cells: List[CellSummary]
    fits: Dict[str, Dict[str, Any]]
    metadata: Dict[str, Any]
    rows: List[Tuple[int, int, Dict[str, float]]] = field(repr=False, default_factory=list)
    output_dir: Optional[str] = None

    def summary(self, metric: str) -> List[CellSummary]:
        return [c for c in self.cells if c.metric == metric]

    def medians(self, metric: str) -> np.ndarray:
        return np.array([c.median for c in self.summary(metric)])

    def to_json(self) -> str:
        payload = {
            "experiment": self.experiment,
            "cells": [asdict(c) for c in self.cells],
            "fits": self.fits,
            "metadata": self.metadata,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _setting(cfg: ExperimentConfig, model: Model):
    if cfg.system["kind"] == "lsv":
        return {"gamma": float(cfg.system["gamma"]), "N": model.dim}
    return {"p": math.inf, "N": model.dim}


def _fit_metric(cfg, model, metric, cells) -> Dict[str, Any]:
    setting = _setting(cfg, model)
    try:
        rate = theoretical_exponent(metric, **setting)
        theory = {
            "exponent": rate.exponent,
            "log_power": rate.log_power,
            "source": exponent_source(metric, **setting),
        }
    except OutOfRegime as exc:
        rate = None
        theory = {"exponent": None, "log_power": None, "source": f"out of regime: {exc}"}
    result: Dict[str, Any] = {"theory": theory, "slope": None, "stderr": None, "ci95": None}
    if len(cells) < 4:
        result["note"] = "fewer than 4 grid points; no slope"
        return result
    points = [(c.n, c.median) for c in cells]
    meds = np.array([c.median for c in cells])
    if np.all(meds == 0.0):
        result.update(slope=0.0, stderr=0.0, ci95=[0.0, 0.0], note="all distances vanish")
        return result
    if np.any(meds <= 0.0):
        result["note"] = "some median distances vanish; log-log fit skipped"
        return result
    raw = fit_loglog(points)
    result.update(slope=raw.slope, stderr=raw.stderr, ci95=[float(x) for x in confidence_interval(raw, len(points))])
    if rate is not None:
        fixed = fit_loglog_fixed(points, rate.log_power)
        result["log_corrected"] = {
            "slope": fixed.slope,
            "stderr": fixed.stderr,
            "ci95": [float(x) for x in confidence_interval(fixed, len(points))],
            "log_power": rate.log_power,
        }
    return result


def run_rate_experiment(
    cfg: ExperimentConfig,
    jobs: int = 1,
    out: Optional[str] = None,
    model: Optional[Model] = None,
) -> RateReport:
    """Distances for every (n, seed) cell, medians per n and log-log fits.

    Writes CSV and JSON outputs when ``out`` (or ``cfg.out``) is set and
    records the directory in ``report.output_dir``.
    """
    if model is None:
        model = build_model(cfg)
    items = [(cfg.to_dict(), model, n, s) for n in cfg.n_grid for s in cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell_job, items))
    else:
        results = [_cell_job(it) for it in items]
    results.sort(key=lambda r: (r[0], r[1]))

    cells: List[CellSummary] = []
    for metric in cfg.metrics:
        for n in cfg.n_grid:
            vals = [r[2][metric] for r in results if r[0] == n]
            vals_sorted = sorted(vals)
            q25, med, q75 = np.percentile(vals_sorted, [25, 50, 75])
            cells.append(CellSummary(n, metric, float(med), float(q25), float(q75), vals_sorted))
    fits = {m: _fit_metric(cfg, model, m, [c for c in cells if c.metric == m]) for m in cfg.metrics}
    metadata = {
        "config": cfg.to_dict(),
        "M": cfg.M,
        "d": cfg.d,
        "seeds": sorted(cfg.seeds),
        "replicates": len(cfg.seeds),
        "sigma": np.asarray(model.sigma).tolist(),
        "centring_shift": list(model.shift),
        "decomposition": model.decomposition,
        "rng": RNG_ALGORITHM,
        "cell_seeding": "SeedSequence([seed, n, 0]) for the process, [seed, n, 1] for Brownian paths",
        "solvers": {
            "W1": "dense shortest-augmenting-path assignment",
            "Pi": "Hopcroft-Karp feasibility, bisection over exact candidate values",
        },
        "aggregation": "median and quartiles over seed replicates",
        "estimator_caveats": list(ESTIMATOR_CAVEATS),
    }
    report = RateReport(cfg.experiment, cells, fits, metadata, results)
    target = out if out is not None else cfg.out
    if target is not None:
        report.output_dir = write_outputs(report, cfg, target)
    return report


def distances_csv(report: RateReport, metrics) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "seed"] + list(metrics))
    for n, seed, vals in report.rows:
        writer.writerow([n, seed] + [repr(float(vals[m])) for m in metrics])
    return buf.getvalue()


def write_outputs(report: RateReport, cfg: ExperimentConfig, root: str) -> str:
    """Write config.toml, distances.csv, summary.csv and report.json into {root}/{experiment}/{timestamp}/."""
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    base = os.path.join(root, cfg.experiment, stamp)
    path, k = base, 1
    while os.path.exists(path):
        path = f"{base}-{k}"
        k += 1
    os.makedirs(path)
    with open(os.path.join(path, "config.toml"), "w") as fh:
        fh.write(cfg.to_toml())
    with open(os.path.join(path, "distances.csv"), "w") as fh:
        fh.write(distances_csv(report, cfg.metrics))
    with open(os.path.join(path, "summary.csv"), "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "n", "median", "q25", "q75"])
        for c in report.cells:
            writer.writerow([c.metric, c.n, repr(c.median), repr(c.q25), repr(c.q75)])
    with open(os.path.join(path, "report.json"), "w") as fh:
        fh.write(report.to_json())
    return path
