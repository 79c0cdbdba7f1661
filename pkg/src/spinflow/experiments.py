"""Batch experiment pipeline: disorder scans over seeds, sizes and variants.

Each sample is a pure function of (variant, locality, observable mode, seed),
so scans parallelize over a process pool without shared state; results are
merged in task order, making outputs independent of the worker count.
Per-sample failures are recorded and excluded from aggregates; a scan only
fails when more than 10% of its samples do.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dynamics import equilibration_time, max_magnetisation_state
from .ensembles import (
    EnsembleSpec,
    ScalingFits,
    WeightModel,
    fit_scalings,
    fit_weight_model,
    observable_for,
    sample,
)
from .errors import SpinflowError, ValidationError
from .flow import capacity_graph, max_flow
from .spin_model import LocalitySpec

THREAD_ENV = "SPINFLOW_THREADS"
FAILURE_BUDGET = 0.10

REFERENCE_SIZES = (4, 5, 6, 7, 8)
REFERENCE_SAMPLES = 40


def teq_scan_samples(L: int) -> int:
    """Sample schedule of the size-dependence scans: 2^(18-L), at least 1."""
    return max(1, 2 ** (18 - L))


def flow_fit_samples(L: int) -> int:
    """Sample schedule of the flow-fit scans: 2^(14-L), at least 1."""
    return max(1, 2 ** (14 - L))


def correlation_samples(L: int, n: int) -> int:
    """Sample schedule of the fixed-size correlation scan: 2^(L-n) + 1."""
    return 2 ** max(0, L - n) + 1


def extrapolation_samples(L: int) -> int:
    """Sample schedule of the extrapolation scans: max(4, 2^(18-L))."""
    return max(4, 2 ** (18 - L))


def worker_count(jobs: int | None = None) -> int:
    if jobs is not None:
        return max(1, int(jobs))
    env = os.environ.get(THREAD_ENV)
    return max(1, int(env)) if env else 1


def reference_inputs(locality: LocalitySpec, seed: int = 0,
                     sizes=REFERENCE_SIZES,
                     samples_per_size: int = REFERENCE_SAMPLES,
                     cache_path=None) -> tuple[WeightModel, ScalingFits]:
    """Weight model and scaling fits for a locality, cached on disk by (n, d)."""
    from . import io as io_mod

    key = (locality.n, locality.d)
    if cache_path is not None and os.path.exists(cache_path):
        cached = io_mod.read_fit_cache(cache_path)
        if key in cached:
            fits, weights = cached[key][0], cached[key][1]
            return weights, fits
    weights = fit_weight_model(locality, sizes, samples_per_size, seed)
    fits = fit_scalings(locality, sizes, samples_per_size, seed)
    if cache_path is not None:
        entries = {}
        if os.path.exists(cache_path):
            entries = {k: v for k, v in io_mod.read_fit_cache(cache_path).items()}
        entries[key] = (fits, weights)
        prov = io_mod.provenance({"sizes": sizes, "samples": samples_per_size}, seed)
        io_mod.write_fit_cache(cache_path, entries, prov)
    return weights, fits


@dataclass(frozen=True)
class SampleTask:
    """One unit of scan work; all fields picklable for the process pool."""

    spec: EnsembleSpec
    weights: WeightModel | None
    fits: ScalingFits | None
    measure_teq: bool = True
    measure_flow: bool = True
    margin: float = 0.10
    horizon: float | None = None
    propagate_tol: float = 1e-9


def equilibrium_node(obs, diag_avg: float) -> int:
    """Node whose eigenvalue sits closest to the equilibrium value."""
    return int(np.argmin(np.abs(obs.o - diag_avg)))


def run_sample(task: SampleTask) -> dict:
    """Build one ensemble sample and measure T_eq and/or f_max.

    Always returns a record; failures are captured in the 'error' field.
    """
    spec = task.spec
    loc = spec.locality
    rec = {"variant": spec.variant, "L": loc.L, "n": loc.n, "d": loc.d,
           "seed": spec.seed, "T_eq": None, "reached": False, "diag_O": None,
           "diag_O2": None, "f_max": None, "source": None, "sink": None,
           "error": None}
    try:
        H = sample(spec, task.weights, task.fits)
        obs = observable_for(spec)
        source = obs.dim - 1
        diag_avg = 0.0
        if task.measure_teq:
            res = equilibration_time(H, obs, margin=task.margin,
                                     horizon=task.horizon,
                                     tol=task.propagate_tol)
            rec["T_eq"] = res.T_eq
            rec["reached"] = res.reached
            rec["diag_O"] = res.diag_O
            rec["diag_O2"] = res.diag_O2
            diag_avg = res.diag_O
        if task.measure_flow:
            if spec.obs_mode == "homogeneous":
                sink = 0
            else:
                sink = equilibrium_node(obs, diag_avg)
                if sink == source:
                    sink = equilibrium_node(obs, diag_avg) - 1
            rec["source"] = source
            rec["sink"] = sink
            rec["f_max"] = max_flow(capacity_graph(H, source, sink))
    except SpinflowError as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def run_tasks(tasks: list[SampleTask], jobs: int | None = None) -> list[dict]:
    """Execute tasks, in order, optionally over a process pool."""
    workers = worker_count(jobs)
    if workers == 1 or len(tasks) <= 1:
        return [run_sample(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_sample, tasks, chunksize=4))


def check_failures(records: list[dict]) -> list[dict]:
    """Enforce the failure budget; returns the successful records."""
    failed = [r for r in records if r["error"] is not None]
    if records and len(failed) / len(records) > FAILURE_BUDGET:
        examples = "; ".join(r["error"] for r in failed[:3])
        raise SpinflowError(
            f"{len(failed)}/{len(records)} samples failed ({examples})"
        )
    return [r for r in records if r["error"] is None]


def scan_tasks(variants, sizes, n: int, d: int, samples_for, seed0: int,
               obs_mode: str = "randomised", measure_teq: bool = True,
               measure_flow: bool = True, margin: float = 0.10,
               horizon: float | None = None,
               reference: dict | None = None) -> list[SampleTask]:
    """Task grid over (variant, L, sample index).

    samples_for maps L to the per-size sample count; reference maps (n, d)
    to (weights, fits) and may omit entries when only exh is scanned.
    """
    tasks = []
    for variant in variants:
        for L in sizes:
            loc = LocalitySpec(L, n, d)
            if variant == "exh":
                weights = fits = None
            else:
                if reference is None or (n, d) not in reference:
                    raise ValidationError(
                        f"variant {variant} at (n={n}, d={d}) needs reference fits"
                    )
                weights, fits = reference[(n, d)]
            for i in range(samples_for(L)):
                spec = EnsembleSpec(variant, loc, obs_mode, seed0 + i)
                tasks.append(SampleTask(spec, weights, fits,
                                        measure_teq=measure_teq,
                                        measure_flow=measure_flow,
                                        margin=margin, horizon=horizon))
    return tasks


def summarize(records: list[dict], keys=("variant", "L")) -> list[dict]:
    """Per-group mean and standard error of T_eq and f_max."""
    groups: dict[tuple, list[dict]] = {}
    for rec in records:
        groups.setdefault(tuple(rec[k] for k in keys), []).append(rec)
    out = []
    for group_key in sorted(groups):
        recs = groups[group_key]
        row = dict(zip(keys, group_key))
        teqs = np.array([r["T_eq"] for r in recs if r["T_eq"] is not None])
        fmaxs = np.array([r["f_max"] for r in recs if r["f_max"] is not None])
        row["samples"] = len(recs)
        row["teq_count"] = len(teqs)
        row["teq_mean"] = float(teqs.mean()) if len(teqs) else None
        row["teq_se"] = (float(teqs.std(ddof=1) / np.sqrt(len(teqs)))
                         if len(teqs) > 1 else None)
        row["fmax_count"] = len(fmaxs)
        row["fmax_mean"] = float(fmaxs.mean()) if len(fmaxs) else None
        row["fmax_se"] = (float(fmaxs.std(ddof=1) / np.sqrt(len(fmaxs)))
                          if len(fmaxs) > 1 else None)
        out.append(row)
    return out
