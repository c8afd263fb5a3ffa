"""Periodic task sets under Rate-Monotonic priorities and their level statistics.

Level ``i`` aggregates the ``i`` highest-priority tasks; level 0 is empty.
Priorities are 1-based: ``ts.tasks[0]`` is priority 1.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import NotApplicable, ValidationError

log = logging.getLogger(__name__)

LOG2 = math.log(2.0)  # asymptotic Liu-Layland bound, documentation only

KINDS = ("discrete", "uniform-integer", "exponential")


@dataclass(frozen=True)
class ExecDistribution:
    """Execution-time distribution of one task.

    Build instances with :meth:`discrete`, :meth:`uniform_integer`,
    :meth:`exponential` or :meth:`deterministic` rather than the raw
    constructor.
    """

    kind: str
    values: tuple = ()
    probs: tuple = ()
    lo: Optional[int] = None
    hi: Optional[int] = None
    rate: Optional[float] = None

    def __post_init__(self):
        if self.kind == "discrete":
            v = np.asarray(self.values, dtype=float)
            p = np.asarray(self.probs, dtype=float)
            if v.ndim != 1 or v.size == 0 or v.shape != p.shape:
                raise ValidationError("discrete: values and probs must be nonempty and of equal length")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValidationError("discrete: probabilities must be nonnegative and sum to 1")
            if np.any(v <= 0) or np.any(np.diff(v) <= 0):
                raise ValidationError("discrete: support must be positive and strictly increasing")
        elif self.kind == "uniform-integer":
            if self.lo is None or self.hi is None or not (0 < self.lo <= self.hi):
                raise ValidationError("uniform-integer: need 0 < c_min <= c_max")
        elif self.kind == "exponential":
            if self.rate is None or not self.rate > 0:
                raise ValidationError("exponential: rate must be > 0")
        else:
            raise ValidationError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def discrete(cls, values, probs):
        return cls("discrete", values=tuple(float(x) for x in values), probs=tuple(float(x) for x in probs))

    @classmethod
    def deterministic(cls, c):
        return cls.discrete([c], [1.0])

    @classmethod
    def uniform_integer(cls, c_min, c_max):
        if int(c_min) != c_min or int(c_max) != c_max:
            raise ValidationError("uniform-integer: bounds must be integers")
        return cls("uniform-integer", lo=int(c_min), hi=int(c_max))

    @classmethod
    def exponential(cls, rate):
        return cls("exponential", rate=float(rate))

    @property
    def mean(self) -> float:
        if self.kind == "discrete":
            return float(np.dot(self.values, self.probs))
        if self.kind == "uniform-integer":
            return 0.5 * (self.lo + self.hi)
        return 1.0 / self.rate

    @property
    def std(self) -> float:
        if self.kind == "discrete":
            v = np.asarray(self.values)
            p = np.asarray(self.probs)
            m = float(np.dot(v, p))
            return math.sqrt(max(float(np.dot(p, (v - m) ** 2)), 0.0))
        if self.kind == "uniform-integer":
            w = self.hi - self.lo + 1
            return math.sqrt((w * w - 1) / 12.0)
        return 1.0 / self.rate

    @property
    def bounded(self) -> bool:
        return self.kind != "exponential"

    @property
    def c_min(self) -> Optional[float]:
        if self.kind == "discrete":
            return self.values[0]
        return None if self.kind == "exponential" else float(self.lo)

    @property
    def c_max(self) -> Optional[float]:
        if self.kind == "discrete":
            return self.values[-1]
        return None if self.kind == "exponential" else float(self.hi)

    def sample(self, rng: np.random.Generator, size=None):
        if self.kind == "discrete":
            if len(self.values) == 1:
                return np.full(size, self.values[0]) if size is not None else self.values[0]
            return rng.choice(np.asarray(self.values), size=size, p=np.asarray(self.probs))
        if self.kind == "uniform-integer":
            out = rng.integers(self.lo, self.hi + 1, size=size)
            return out.astype(float) if size is not None else float(out)
        return rng.exponential(1.0 / self.rate, size=size)

    def to_dict(self) -> dict:
        if self.kind == "discrete":
            return {"kind": "discrete", "values": list(self.values), "probs": list(self.probs)}
        if self.kind == "uniform-integer":
            return {"kind": "uniform-integer", "c_min": self.lo, "c_max": self.hi}
        return {"kind": "exponential", "rate": self.rate}

    @classmethod
    def from_dict(cls, d: dict) -> "ExecDistribution":
        kind = d.get("kind")
        try:
            if kind == "discrete":
                return cls.discrete(d["values"], d["probs"])
            if kind == "deterministic":
                return cls.deterministic(d["value"])
            if kind == "uniform-integer":
                return cls.uniform_integer(d["c_min"], d["c_max"])
            if kind == "exponential":
                return cls.exponential(d["rate"])
        except KeyError as e:
            raise ValidationError(f"{kind}: missing parameter {e.args[0]!r}") from None
        raise ValidationError(f"unknown distribution kind {kind!r}")


def sample_execution(dist: ExecDistribution, rng: np.random.Generator) -> float:
    """One execution-time draw."""
    return float(dist.sample(rng))


@dataclass(frozen=True)
class TaskSpec:
    id: str
    period: float
    exec: ExecDistribution
    deadline: Optional[float] = None
    alpha: float = 0.0

    def __post_init__(self):
        if not self.period > 0:
            raise ValidationError(f"task {self.id}: period must be > 0")
        if self.deadline is None:
            object.__setattr__(self, "deadline", self.period)
        if not self.deadline > 0:
            raise ValidationError(f"task {self.id}: deadline must be > 0")
        if not 0.0 <= self.alpha < 1.0:
            raise ValidationError(f"task {self.id}: alpha must lie in [0, 1)")

    @property
    def mean(self):
        return self.exec.mean

    @property
    def std(self):
        return self.exec.std


@dataclass(frozen=True)
class TaskSet:
    """Tasks in RM priority order (stable sort by period)."""

    tasks: tuple
    unit: str = "ms"

    def __post_init__(self):
        tasks = tuple(sorted(self.tasks, key=lambda tk: tk.period))
        ids = [tk.id for tk in tasks]
        if len(set(ids)) != len(ids):
            raise ValidationError("task ids must be distinct")
        if not tasks:
            raise ValidationError("task set is empty")
        object.__setattr__(self, "tasks", tasks)

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, i):
        return self.tasks[i]

    @property
    def priority_order(self) -> list:
        return [tk.id for tk in self.tasks]

    def priority_of(self, task_id) -> int:
        """1-based priority of ``task_id``."""
        for i, tk in enumerate(self.tasks, start=1):
            if tk.id == str(task_id):
                return i
        raise ValidationError(f"unknown task id {task_id!r}")

    def to_dict(self) -> dict:
        return {
            "unit": self.unit,
            "tasks": [
                {"id": tk.id, "period": tk.period, "deadline": tk.deadline,
                 "alpha": tk.alpha, "dist": tk.exec.to_dict()}
                for tk in self.tasks
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSet":
        if not isinstance(d, dict) or "tasks" not in d:
            raise ValidationError("task-set document needs a 'tasks' array")
        tasks = []
        for k, raw in enumerate(d["tasks"]):
            try:
                tasks.append(TaskSpec(
                    id=str(raw.get("id", k)),
                    period=float(raw["period"]),
                    deadline=None if raw.get("deadline") is None else float(raw["deadline"]),
                    alpha=float(raw.get("alpha", 0.0)),
                    exec=ExecDistribution.from_dict(raw["dist"]),
                ))
            except KeyError as e:
                raise ValidationError(f"task #{k}: missing field {e.args[0]!r}") from None
        return cls(tuple(tasks), unit=str(d.get("unit", "ms")))


def load_taskset(path) -> TaskSet:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"cannot read task set {path}: {e}") from None
    ts = TaskSet.from_dict(doc)
    log.info("priority order: %s", " > ".join(ts.priority_order))
    return ts


def save_taskset(ts: TaskSet, path) -> None:
    Path(path).write_text(json.dumps(ts.to_dict(), indent=2) + "\n")


# --- level statistics -------------------------------------------------------

def _check_level(ts, i):
    if not 0 <= i <= len(ts):
        raise ValidationError(f"level {i} out of range 0..{len(ts)}")


def level_utilization(ts: TaskSet, i: int) -> float:
    _check_level(ts, i)
    return math.fsum(tk.mean / tk.period for tk in ts.tasks[:i])


def level_deviation(ts: TaskSet, i: int) -> float:
    _check_level(ts, i)
    return math.sqrt(math.fsum(tk.std ** 2 / tk.period for tk in ts.tasks[:i]))


def variability_coefficient(ts: TaskSet, i: int) -> float:
    u = level_utilization(ts, i)
    if u >= 1.0:
        raise ValidationError("variability undefined: level utilization >= 1")
    return level_deviation(ts, i) ** 2 / (1.0 - u) ** 2


def max_level_stats(ts: TaskSet, i: int):
    """``(u_max_i, v_max_i)``; ``v_max`` is the un-rooted sum of squared ranges over periods."""
    _check_level(ts, i)
    prefix = ts.tasks[:i]
    if any(not tk.exec.bounded for tk in prefix):
        raise NotApplicable("unbounded-support", "maximal statistics unavailable")
    u_max = math.fsum(tk.exec.c_max / tk.period for tk in prefix)
    v_max = math.fsum((tk.exec.c_max - tk.exec.c_min) ** 2 / tk.period for tk in prefix)
    return u_max, v_max


def liu_layland_bound(i: int) -> float:
    return i * (2.0 ** (1.0 / i) - 1.0)


def liu_layland_check(ts: TaskSet, i: int) -> bool:
    """Sufficient RM test on the ``i`` highest-priority tasks (worst-case supports)."""
    if i < 1:
        raise ValidationError("Liu-Layland check needs a level >= 1")
    u_max, _ = max_level_stats(ts, i)
    return u_max < liu_layland_bound(i)


@dataclass(frozen=True)
class LevelStats:
    """Per-level aggregates for levels 0..n; undefined entries are ``None``."""

    u: tuple
    v: tuple
    lam: tuple
    u_max: tuple
    v_max: tuple
    sum_means: tuple

    def __len__(self):
        return len(self.u)


def level_stats(ts: TaskSet) -> LevelStats:
    cols = {k: [] for k in ("u", "v", "lam", "u_max", "v_max", "sum_means")}
    for i in range(len(ts) + 1):
        u = level_utilization(ts, i)
        v = level_deviation(ts, i)
        cols["u"].append(u)
        cols["v"].append(v)
        cols["lam"].append(v * v / (1.0 - u) ** 2 if u < 1.0 else None)
        try:
            um, vm = max_level_stats(ts, i)
        except NotApplicable:
            um = vm = None
        cols["u_max"].append(um)
        cols["v_max"].append(vm)
        cols["sum_means"].append(math.fsum(tk.mean for tk in ts.tasks[:i]))
    return LevelStats(**{k: tuple(v) for k, v in cols.items()})


def reference_taskset() -> TaskSet:
    """Bundled 29-task set with the means, periods and worst cases of the reference experiment."""
    from importlib.resources import files

    return TaskSet.from_dict(json.loads(files("rtig").joinpath("data/reference_taskset.json").read_text()))
