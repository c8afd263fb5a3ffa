"""Glue between the simulator, the EM fit and the miss-probability report."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, rig
from .dmp import build_report, render_table
from .em import EmConfig, RigMixtureModel, e_step, fit_mixture, select_k
from .errors import DegenerateLevel, RtigError, ValidationError
from .sim import ResponseTrace, SimConfig, simulate_rm
from .taskset import TaskSet, level_stats, save_taskset

PLOT_HEADER = ("task_id", "u", "u_max", "delta_emp", "delta_ig", "delta_hoeffding", "ll_ok")


def fit_task(ts: TaskSet, trace: ResponseTrace, task_id, cfg: Optional[EmConfig] = None, k=None,
             discard=0) -> RigMixtureModel:
    """Fit the response times of ``task_id`` with the statistics of the level above it.

    ``k=None`` selects the number of components by BIC.
    """
    cfg = cfg or EmConfig()
    p = ts.priority_of(task_id)
    stats = level_stats(ts)
    u, lam = stats.u[p - 1], stats.lam[p - 1]
    if lam is None:
        raise ValidationError(f"level {p - 1} has utilization >= 1; variability undefined")
    if lam == 0:
        raise DegenerateLevel(f"task {task_id} has the highest priority: level has zero variability; "
                              "response time equals execution time")
    r = trace[task_id].response[discard:]
    if k is None:
        model = select_k(r, u, lam, cfg, level=p - 1)
    else:
        model = fit_mixture(r, u, lam, k, cfg, level=p - 1)
    model.task_id = str(task_id)
    return model


def _fit_one(args):
    ts, trace, tid, cfg, k = args
    try:
        return tid, fit_task(ts, trace, tid, cfg, k), None
    except RtigError as e:
        return tid, None, f"{e.code}: {e}"


def fit_all(ts: TaskSet, trace: ResponseTrace, cfg: Optional[EmConfig] = None, k=None, workers=1):
    """Models for every fittable task, keyed by id in priority order; failures go to ``notes``."""
    cfg = cfg or EmConfig()
    jobs = [(ts, trace, tk.id, cfg, k) for tk in ts.tasks[1:] if tk.id in trace.tasks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_one, jobs))
    else:
        results = [_fit_one(j) for j in jobs]
    models, notes = {}, {}
    for tid, model, note in results:
        if model is not None:
            models[tid] = model
        else:
            notes[tid] = note
    return models, notes


# --- diagnostics -------------------------------------------------------------

def qq_data(model: RigMixtureModel, responses):
    """Chi-squared(1) QQ points per component after max-responsibility classification.

    Returns ``(rows, notes)``; rows are ``(component, rank, g_value, chi2_quantile)``
    with plotting positions ``(rank - 0.5) / n_k``.
    """
    r = np.asarray(responses, dtype=float)
    if r.size == 0:
        raise ValidationError("empty trace")
    labels = np.argmax(e_step(r, model), axis=1)
    rows, notes = [], []
    for j, theta in enumerate(model.thetas):
        if model.weights[j] == 0:
            notes.append(f"component {j + 1}: zero weight, skipped")
            continue
        rj = r[labels == j]
        if rj.size == 0:
            notes.append(f"component {j + 1}: no observations after classification, skipped")
            continue
        g = np.sort(rig.chi2_stat(rj, theta, model.u, model.lam))
        q = rig.chi2_ppf_1df((np.arange(1, g.size + 1) - 0.5) / g.size)
        rows.extend((j + 1, rank, float(gv), float(qv)) for rank, (gv, qv) in enumerate(zip(g, q), start=1))
    return rows, notes


def l2_distance(model: RigMixtureModel, responses) -> float:
    """Root-mean-square gap between the empirical and model CDFs at the sample points.

    The empirical CDF is right-continuous, ``F_n(x_(j)) = j / n``.
    """
    r = np.sort(np.asarray(responses, dtype=float))
    if r.size == 0:
        raise ValidationError("empty trace")
    ecdf = np.arange(1, r.size + 1) / r.size
    return float(math.sqrt(np.mean((ecdf - model.cdf(r)) ** 2)))


# --- serialization -------------------------------------------------------------

def _num(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    return repr(float(x))


def plot_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_HEADER)
    for r in rows:
        w.writerow((r.task_id, _num(r.u), _num(r.u_max), _num(r.delta_emp), _num(r.delta_ig),
                    _num(r.delta_hoeffding), _num(r.liu_layland)))
    return buf.getvalue()


def report_json(ts: TaskSet, rows, **meta) -> str:
    doc = {"unit": ts.unit, "priority_order": ts.priority_order, **meta,
           "tasks": [r.to_dict() for r in rows]}
    return json.dumps(doc, indent=2) + "\n"


def run_report(ts: TaskSet, outdir, *, jobs=10000, seed=0, discard=0, em_cfg: Optional[EmConfig] = None,
               k=None, workers=1, taskset_path=None):
    """Simulate, fit and report every task; all outputs land in ``outdir``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "models").mkdir(exist_ok=True)
    em_cfg = em_cfg or EmConfig(seed=seed)
    sim_cfg = SimConfig(jobs_per_task=jobs, seed=seed, discard_warmup=discard)

    save_taskset(ts, out / "taskset.json")
    trace = simulate_rm(ts, sim_cfg)
    trace.to_csv(out / "trace.csv")
    models, notes = fit_all(ts, trace, em_cfg, k=k, workers=workers)
    model_files = []
    for tid, model in models.items():
        path = out / "models" / f"{tid}.json"
        model.save(path)
        model_files.append(str(Path("models") / f"{tid}.json"))
    rows = build_report(ts, trace, models)
    (out / "report.json").write_text(report_json(ts, rows, fit_notes=notes))
    (out / "report.txt").write_text(render_table(rows))
    (out / "dmp_vs_utilization.csv").write_text(plot_csv(rows))
    manifest = {
        "tool": "rtig",
        "version": __version__,
        "inputs": {"taskset": None if taskset_path is None else str(taskset_path)},
        "outputs": {"taskset": "taskset.json", "trace": "trace.csv", "models": model_files,
                    "report": "report.json", "table": "report.txt", "plot_data": "dmp_vs_utilization.csv"},
        "config": {"simulation": asdict(sim_cfg), "em": asdict(em_cfg), "k": k},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return rows
