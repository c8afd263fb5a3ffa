"""Deadline-miss probabilities: empirical rate, IG-mixture estimate, Hoeffding bound."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import rig
from .em import RigMixtureModel
from .errors import NotApplicable, ValidationError
from .taskset import TaskSet, level_stats, liu_layland_bound


def dmp_empirical(responses, deadline) -> float:
    """Fraction of responses strictly greater than ``deadline``."""
    r = np.asarray(responses, dtype=float)
    if r.size == 0:
        raise ValidationError("empty trace")
    return float(np.count_nonzero(r > deadline)) / r.size


def dmp_ig(model: RigMixtureModel, deadline) -> float:
    """Mixture miss probability through the chi-squared(1) link.

    Each component contributes ``|1{t > mean_k} - F(g(t))|`` where ``F`` is the
    chi-squared(1) CDF and ``g(t) = (t - mean_k)^2 / (lam t)``.  The indicator is
    strict, so the value jumps at ``t = mean_k``.  Above the mean the term is
    evaluated as an upper tail (``erfc``) to keep tiny probabilities.
    """
    if not deadline > 0:
        raise ValidationError("deadline must be > 0")
    g = rig.chi2_stat(deadline, model.thetas, model.u, model.lam)
    above = deadline > model.means
    terms = np.where(above, rig.chi2_sf_1df(g), rig.chi2_cdf_1df(g))
    return float(np.clip(np.dot(model.weights, terms), 0.0, 1.0))


def dmp_hoeffding(u, v_max, sum_means, deadline) -> float:
    """``exp(-t (1 - u)^2 / v_max)`` for level statistics of the task's own level.

    Raises :class:`NotApplicable` when the bound's precondition
    ``t > sum_means / (1 - u)`` fails or the statistics are unavailable.
    """
    if v_max is None:
        raise NotApplicable("unbounded-support")
    if u >= 1.0:
        raise NotApplicable("overloaded-level")
    if v_max == 0:
        raise NotApplicable("zero-deviation", "deterministic execution times: miss probability is 0 or 1")
    if not deadline > sum_means / (1.0 - u):
        raise NotApplicable("precondition-violated")
    return math.exp(-deadline * (1.0 - u) ** 2 / v_max)


class Verdict(str, enum.Enum):
    PROVEN = "proven"
    PROBABILISTIC = "probabilistic"
    VIOLATED = "violated"
    UNKNOWN = "unknown"


def verdict(alpha, delta_ig: Optional[float], ll_flag: Optional[bool]) -> Verdict:
    if ll_flag:
        return Verdict.PROVEN
    if delta_ig is None:
        return Verdict.UNKNOWN
    return Verdict.PROBABILISTIC if delta_ig <= alpha else Verdict.VIOLATED


@dataclass
class DmpRow:
    task_id: str
    priority: int
    deadline: float
    alpha: float
    n: int
    u: float
    u_max: Optional[float]
    delta_emp: Optional[float]
    delta_ig: Optional[float] = None
    delta_hoeffding: Optional[float] = None
    liu_layland: Optional[bool] = None
    verdict: str = Verdict.UNKNOWN.value
    k: Optional[int] = None
    na: dict = field(default_factory=dict)      # column -> reason
    flags: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def task_report(ts: TaskSet, priority: int, responses, model: Optional[RigMixtureModel], stats=None) -> DmpRow:
    """All three estimates and the verdict for the task at 1-based ``priority``."""
    stats = stats or level_stats(ts)
    tk = ts.tasks[priority - 1]
    r = np.asarray(responses, dtype=float)
    row = DmpRow(task_id=tk.id, priority=priority, deadline=tk.deadline, alpha=tk.alpha, n=int(r.size),
                 u=stats.u[priority], u_max=stats.u_max[priority], delta_emp=None)

    if r.size:
        row.delta_emp = dmp_empirical(r, tk.deadline)
    else:
        row.na["delta_emp"] = "empty-trace"

    if stats.lam[priority - 1] is None:
        row.na["delta_ig"] = "overloaded-level"
    elif stats.lam[priority - 1] == 0:
        row.na["delta_ig"] = "degenerate-level"
    elif model is None:
        row.na["delta_ig"] = "no-model"
    else:
        row.delta_ig = dmp_ig(model, tk.deadline)
        row.k = model.k
        means = model.means
        if np.any(np.abs(tk.deadline - means) <= 0.01 * means):
            row.flags.append("deadline-near-component-mean")
        if tk.deadline <= means.max():
            row.flags.append("deadline-below-largest-mean")

    try:
        row.delta_hoeffding = dmp_hoeffding(stats.u[priority], stats.v_max[priority],
                                            stats.sum_means[priority], tk.deadline)
    except NotApplicable as e:
        row.na["delta_hoeffding"] = e.reason

    if stats.u_max[priority] is None:
        row.na["liu_layland"] = "unbounded-support"
    else:
        row.liu_layland = stats.u_max[priority] < liu_layland_bound(priority)

    row.verdict = verdict(tk.alpha, row.delta_ig, row.liu_layland).value
    if row.verdict == Verdict.UNKNOWN.value:
        row.na["verdict"] = next(iter(row.na.values()), "unknown")
    return row


def build_report(ts: TaskSet, trace, models: dict) -> list:
    """Rows for every task of ``ts`` present in ``trace``; ``models`` maps id -> model."""
    stats = level_stats(ts)
    rows = []
    for p, tk in enumerate(ts.tasks, start=1):
        r = trace.tasks[tk.id].response if tk.id in trace.tasks else np.empty(0)
        rows.append(task_report(ts, p, r, models.get(tk.id), stats))
    return rows


def _fmt(x, na=False):
    if x is None or na:
        return "-"
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, int):
        return str(x)
    if x == 0:
        return "0.0"
    if abs(x) < 1e-4:
        return f"{x:.1e}"
    return f"{x:.4f}".rstrip("0").rstrip(".") if abs(x) < 1 else f"{x:.4g}"


def render_table(rows) -> str:
    """Aligned text table, one column per task."""
    lines = [
        ("Task", [r.task_id for r in rows]),
        ("Priority", [str(r.priority) for r in rows]),
        ("Number of components", [_fmt(r.k) for r in rows]),
        ("Deadline", [_fmt(r.deadline) for r in rows]),
        ("Mean utilization", [_fmt(r.u) for r in rows]),
        ("Maximum utilization", [_fmt(r.u_max) for r in rows]),
        ("Empirical deadline miss probability", [_fmt(r.delta_emp) for r in rows]),
        ("IG deadline miss probability", [_fmt(r.delta_ig) for r in rows]),
        ("Hoeffding bound", [_fmt(r.delta_hoeffding) for r in rows]),
        ("Liu-Layland", [_fmt(r.liu_layland) for r in rows]),
        ("Verdict", [r.verdict for r in rows]),
    ]
    head = max(len(label) for label, _ in lines)
    widths = [max(len(vals[c]) for _, vals in lines) for c in range(len(rows))]
    out = []
    for label, vals in lines:
        out.append(label.ljust(head) + "  " + "  ".join(v.rjust(w) for v, w in zip(vals, widths)))
    return "\n".join(out) + "\n"
