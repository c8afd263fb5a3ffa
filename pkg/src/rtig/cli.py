"""``rtig`` command line: generate, simulate, fit, dmp, qq, l2, report.

Errors are printed as one ``error-code: message`` line on stderr.  Exit codes:
0 ok, 2 validation error, 3 numeric failure, 4 degenerate level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .dmp import build_report, render_table
from .em import EmConfig, RigMixtureModel
from .errors import RtigError, ValidationError
from .pipeline import fit_task, l2_distance, qq_data, report_json, run_report
from .sim import SimConfig, generate_taskset, read_trace, simulate_rm
from .taskset import load_taskset, save_taskset


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message.replace("\n", " "))


def _em_config(args) -> EmConfig:
    return EmConfig(epsilon=args.tol, max_iter=args.max_iter, k_max=args.kmax, seed=args.seed)


def _add_em_flags(p):
    p.add_argument("--kmax", type=int, default=10, help="largest k tried by BIC selection")
    p.add_argument("--tol", type=float, default=1e-8, help="Aitken stopping tolerance")
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)


def cmd_generate(args):
    ts = generate_taskset(args.n_tasks, args.util, (args.period_min, args.period_max), args.family,
                          seed=args.seed, unit=args.unit)
    save_taskset(ts, args.output)


def cmd_simulate(args):
    ts = load_taskset(args.taskset)
    if args.horizon is not None:
        cfg = SimConfig(horizon=args.horizon, seed=args.seed, discard_warmup=args.discard)
    else:
        cfg = SimConfig(jobs_per_task=args.jobs, seed=args.seed, discard_warmup=args.discard)
    simulate_rm(ts, cfg).to_csv(args.output)


def cmd_fit(args):
    ts = load_taskset(args.taskset)
    trace = read_trace(args.trace)
    ts.priority_of(args.task)
    model = fit_task(ts, trace, args.task, _em_config(args), k=args.k, discard=args.discard)
    text = json.dumps(model.to_dict(), indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _load_models(directory, ts):
    models = {}
    if directory is None:
        return models
    d = Path(directory)
    if not d.is_dir():
        raise ValidationError(f"models directory {d} not found")
    for tk in ts.tasks:
        path = d / f"{tk.id}.json"
        if path.exists():
            models[tk.id] = RigMixtureModel.load(path)
    return models


def cmd_dmp(args):
    ts = load_taskset(args.taskset)
    trace = read_trace(args.trace)
    rows = build_report(ts, trace, _load_models(args.models, ts))
    table = render_table(rows)
    if args.output:
        out = Path(args.output)
        out.write_text(report_json(ts, rows))
        out.with_suffix(".txt").write_text(table)
    sys.stdout.write(table)


def cmd_qq(args):
    trace = read_trace(args.trace)
    model = RigMixtureModel.load(args.model)
    task = args.task or model.task_id
    if task is None:
        raise ValidationError("--task is required when the model does not name its task")
    rows, notes = qq_data(model, trace[task].response)
    for note in notes:
        print(f"note: {note}", file=sys.stderr)
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("component", "rank", "g_value", "chi2_quantile"))
        for c, rank, g, q in rows:
            w.writerow((c, rank, repr(g), repr(q)))
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_l2(args):
    trace = read_trace(args.trace)
    model = RigMixtureModel.load(args.model)
    task = args.task or model.task_id
    if task is None:
        raise ValidationError("--task is required when the model does not name its task")
    print(repr(l2_distance(model, trace[task].response)))


def cmd_report(args):
    ts = load_taskset(args.taskset)
    rows = run_report(ts, args.output, jobs=args.jobs, seed=args.seed, discard=args.discard,
                      em_cfg=_em_config(args), k=args.k, workers=args.workers, taskset_path=args.taskset)
    sys.stdout.write(render_table(rows))


def build_parser():
    p = _Parser(prog="rtig", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rtig {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="random task set with UUnifast utilizations")
    g.add_argument("--n-tasks", type=int, required=True)
    g.add_argument("--util", type=float, required=True, help="total mean utilization in (0, 1)")
    g.add_argument("--period-min", type=int, default=100)
    g.add_argument("--period-max", type=int, default=300)
    g.add_argument("--family", choices=("uniform", "exp"), default="uniform")
    g.add_argument("--unit", default="ms")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", help="RM schedule -> response-time trace CSV")
    s.add_argument("--taskset", required=True)
    s.add_argument("--jobs", type=int, default=10000, help="completed jobs per task")
    s.add_argument("--horizon", type=float, help="simulate until this time instead of --jobs")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--discard", type=int, default=0, help="initial jobs per task to drop")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit one task's response times")
    f.add_argument("--trace", required=True)
    f.add_argument("--taskset", required=True)
    f.add_argument("--task", required=True)
    f.add_argument("--k", type=int, help="fixed number of components (default: BIC selection)")
    f.add_argument("--discard", type=int, default=0, help="initial jobs to ignore")
    _add_em_flags(f)
    f.add_argument("-o", "--output")
    f.set_defaults(func=cmd_fit)

    d = sub.add_parser("dmp", help="deadline-miss report")
    d.add_argument("--taskset", required=True)
    d.add_argument("--trace", required=True)
    d.add_argument("--models", help="directory of <task_id>.json models")
    d.add_argument("-o", "--output", help="JSON report path; the text table goes next to it (.txt)")
    d.set_defaults(func=cmd_dmp)

    q = sub.add_parser("qq", help="chi-squared(1) QQ data per mixture component")
    q.add_argument("--trace", required=True)
    q.add_argument("--model", required=True)
    q.add_argument("--task")
    q.add_argument("-o", "--output")
    q.set_defaults(func=cmd_qq)

    l2 = sub.add_parser("l2", help="RMS distance between empirical and model CDFs")
    l2.add_argument("--trace", required=True)
    l2.add_argument("--model", required=True)
    l2.add_argument("--task")
    l2.set_defaults(func=cmd_l2)

    r = sub.add_parser("report", help="simulate, fit and report every task")
    r.add_argument("--taskset", required=True)
    r.add_argument("--jobs", type=int, default=10000)
    r.add_argument("--discard", type=int, default=0)
    r.add_argument("--k", type=int)
    r.add_argument("--workers", type=int, default=1)
    _add_em_flags(r)
    r.add_argument("-o", "--output", required=True, help="output directory")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except RtigError as e:
        print(f"{e.code}: {str(e).splitlines()[0] if str(e) else e.code}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
