"""Event-driven preemptive Rate-Monotonic simulator and random task-set generation."""

from __future__ import annotations

import csv
import heapq
import io
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import PersistentOverload, ValidationError
from .taskset import ExecDistribution, TaskSet, TaskSpec

TRACE_HEADER = ("task_id", "job_index", "release", "response", "execution")
_BLOCK = 4096


@dataclass
class SimConfig:
    """Exactly one of ``jobs_per_task`` and ``horizon`` must be set.

    ``discard_warmup`` drops that many initial jobs of every task from the
    returned trace (jobs are still simulated).
    """

    jobs_per_task: Optional[int] = None
    horizon: Optional[float] = None
    seed: int = 0
    discard_warmup: int = 0
    record_schedule: bool = False
    max_pending: int = 1_000_000

    def __post_init__(self):
        if (self.jobs_per_task is None) == (self.horizon is None):
            raise ValidationError("set exactly one of jobs_per_task and horizon")
        if self.jobs_per_task is not None:
            if self.jobs_per_task < 1:
                raise ValidationError("jobs_per_task must be >= 1")
            if not 0 <= self.discard_warmup < self.jobs_per_task:
                raise ValidationError("discard_warmup must be in [0, jobs_per_task)")
        elif self.discard_warmup < 0:
            raise ValidationError("discard_warmup must be >= 0")


@dataclass
class TaskTrace:
    job_index: np.ndarray
    release: np.ndarray
    response: np.ndarray
    execution: Optional[np.ndarray] = None

    def __len__(self):
        return self.response.size


@dataclass
class ResponseTrace:
    tasks: dict  # task id -> TaskTrace, in priority order
    seed: Optional[int] = None
    horizon: Optional[float] = None
    stats: dict = field(default_factory=dict)
    schedule: Optional[list] = None

    def __getitem__(self, task_id) -> TaskTrace:
        try:
            return self.tasks[str(task_id)]
        except KeyError:
            raise ValidationError(f"trace has no task {task_id!r}") from None

    def responses(self, task_id) -> np.ndarray:
        return self[task_id].response

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for tid, tr in self.tasks.items():
            ex = tr.execution
            for k in range(len(tr)):
                w.writerow((tid, int(tr.job_index[k]), repr(float(tr.release[k])),
                            repr(float(tr.response[k])), "" if ex is None else repr(float(ex[k]))))
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def read_trace(path) -> ResponseTrace:
    """Load a trace CSV; the ``execution`` column may be absent or empty."""
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise ValidationError(f"cannot read trace {path}: {e}") from None
    rows = {}
    with fh:
        reader = csv.DictReader(fh)
        missing = {"task_id", "release", "response"} - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"trace missing columns: {', '.join(sorted(missing))}")
        for lineno, row in enumerate(reader, start=2):
            try:
                tid = row["task_id"]
                rows.setdefault(tid, []).append((
                    int(row.get("job_index") or len(rows[tid]) + 1),
                    float(row["release"]),
                    float(row["response"]),
                    float(row["execution"]) if row.get("execution") not in (None, "") else math.nan,
                ))
            except ValueError as e:
                raise ValidationError(f"trace line {lineno}: {e}") from None
    tasks = {}
    for tid, recs in rows.items():
        arr = np.array(recs, dtype=float)
        arr = arr[np.argsort(arr[:, 0], kind="stable")]
        ex = arr[:, 3]
        tasks[tid] = TaskTrace(arr[:, 0].astype(int), arr[:, 1], arr[:, 2],
                               None if np.all(np.isnan(ex)) else ex)
        if np.any(tasks[tid].response <= 0):
            raise ValidationError(f"task {tid}: responses must be > 0")
    return ResponseTrace(tasks)


def task_streams(seed, n_tasks):
    """One generator per priority index, derived from ``seed`` by spawn key."""
    return [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,))) for i in range(n_tasks)]


class _Sampler:
    def __init__(self, dist: ExecDistribution, rng):
        self.dist, self.rng = dist, rng
        self.buf, self.pos = np.empty(0), 0

    def __call__(self):
        if self.pos == self.buf.size:
            self.buf = np.asarray(self.dist.sample(self.rng, _BLOCK), dtype=float)
            self.pos = 0
        c = self.buf[self.pos]
        self.pos += 1
        return float(c)


def simulate_rm(ts: TaskSet, cfg: SimConfig) -> ResponseTrace:
    """Single-core preemptive fixed-priority schedule of ``ts`` (index order = priority).

    At equal instants completions are handled before releases. Jobs that miss
    their deadline keep running; a task's jobs execute in FIFO order.
    """
    n = len(ts)
    periods = [tk.period for tk in ts.tasks]
    if cfg.horizon is not None and not cfg.horizon > max(periods):
        raise ValidationError("horizon must exceed the largest period")
    samplers = [_Sampler(tk.exec, rng) for tk, rng in zip(ts.tasks, task_streams(cfg.seed, n))]
    target = cfg.jobs_per_task
    horizon = math.inf if cfg.horizon is None else float(cfg.horizon)

    queues = [deque() for _ in range(n)]
    ready = []                      # heap of priority indices with pending jobs
    releases = [(0.0, i, 0) for i in range(n)]
    heapq.heapify(releases)
    out = [[] for _ in range(n)]
    done = [0] * n
    remaining_tasks = n if target is not None else -1
    busy = 0.0
    executed_done = 0.0
    schedule = [] if cfg.record_schedule else None
    t = 0.0

    while True:
        if ready:
            i = ready[0]
            job = queues[i][0]      # [release, demand, remaining, job_index]
            t_rel = releases[0][0]
            finish = t + job[2]
            if finish <= t_rel:
                if finish > horizon:
                    if schedule is not None and horizon > t:
                        schedule.append((t, horizon, i, job[3]))
                    busy += horizon - t
                    job[2] -= horizon - t
                    t = horizon
                    break
                if schedule is not None:
                    schedule.append((t, finish, i, job[3]))
                busy += job[2]
                t = finish
                job[2] = 0.0
                queues[i].popleft()
                if not queues[i]:
                    heapq.heappop(ready)
                executed_done += job[1]
                done[i] += 1
                if target is None or done[i] <= target:
                    out[i].append((job[3], job[0], t - job[0], job[1]))
                    if target is not None and done[i] == target:
                        remaining_tasks -= 1
                        if remaining_tasks == 0:
                            break
                continue
            if t_rel >= horizon:
                busy += horizon - t
                job[2] -= horizon - t
                if schedule is not None:
                    schedule.append((t, horizon, i, job[3]))
                t = horizon
                break
            if schedule is not None and t_rel > t:
                schedule.append((t, t_rel, i, job[3]))
            job[2] -= t_rel - t
            busy += t_rel - t
            t = t_rel
        else:
            t = releases[0][0]
            if t >= horizon:
                t = horizon
                break
        while releases and releases[0][0] == t:
            _, i, j = heapq.heappop(releases)
            c = samplers[i]()
            if not queues[i]:
                heapq.heappush(ready, i)
            queues[i].append([t, c, c, j + 1])
            if len(queues[i]) > cfg.max_pending:
                raise PersistentOverload(f"persistent overload: task {ts.tasks[i].id} has more than "
                                         f"{cfg.max_pending} pending jobs")
            heapq.heappush(releases, ((j + 1) * periods[i], i, j + 1))

    partial = math.fsum(job[1] - job[2] for q in queues for job in q)
    stats = {"end_time": t, "busy_time": busy, "idle_time": t - busy,
             "executed_completed": executed_done, "executed_partial": partial}

    tasks = {}
    for i, tk in enumerate(ts.tasks):
        recs = out[i][cfg.discard_warmup:]
        arr = np.array(recs, dtype=float).reshape(-1, 4)
        tasks[tk.id] = TaskTrace(arr[:, 0].astype(int), arr[:, 1], arr[:, 2], arr[:, 3])
    return ResponseTrace(tasks, seed=cfg.seed, horizon=None if cfg.horizon is None else horizon,
                         stats=stats, schedule=schedule)


# --- task-set generation ------------------------------------------------------

def uunifast(n, total, rng) -> np.ndarray:
    """Split ``total`` into ``n`` shares uniformly distributed on the simplex."""
    shares = np.empty(n)
    rest = total
    for i in range(n - 1):
        nxt = rest * rng.uniform() ** (1.0 / (n - 1 - i))
        shares[i] = rest - nxt
        rest = nxt
    shares[n - 1] = rest
    return shares


def generate_taskset(n_tasks, total_mean_utilization, period_range=(100, 300), family="uniform",
                     seed=0, unit="ms") -> TaskSet:
    """Random implicit-deadline task set with UUnifast utilization shares.

    Periods are integers drawn uniformly from ``period_range`` (inclusive).
    ``family="uniform"`` gives uniform-integer execution times on
    ``{1, ..., 2m - 1}``; the integer rounding of each mean carries its
    utilization error forward to the next task so the total stays within
    one rounding step of the request.  ``family="exp"`` gives exponential
    execution times with the exact mean.
    """
    if n_tasks < 1:
        raise ValidationError("n_tasks must be >= 1")
    if not 0 < total_mean_utilization < 1:
        raise ValidationError("total mean utilization must lie in (0, 1)")
    lo, hi = int(period_range[0]), int(period_range[1])
    if not 0 < lo <= hi:
        raise ValidationError("period range must satisfy 0 < min <= max")
    if family not in ("uniform", "exp"):
        raise ValidationError(f"unknown family {family!r}")
    rng = np.random.default_rng(seed)
    shares = uunifast(n_tasks, total_mean_utilization, rng)
    periods = np.sort(rng.integers(lo, hi + 1, size=n_tasks))

    tasks = []
    carry = 0.0
    for k, (share, t) in enumerate(zip(shares, periods), start=1):
        t = int(t)
        if family == "exp":
            dist = ExecDistribution.exponential(1.0 / (share * t))
        else:
            s = int(round(2.0 * (share + carry) * t))   # c_min + c_max
            if s < 2:
                s = 2
            if s / (2.0 * t) >= 1.0:
                raise ValidationError(f"task {k}: mean execution time does not fit its period")
            carry += share - s / (2.0 * t)
            dist = ExecDistribution.uniform_integer(1, s - 1)
        tasks.append(TaskSpec(id=f"t{k}", period=float(t), exec=dist))
    return TaskSet(tuple(tasks), unit=unit)
