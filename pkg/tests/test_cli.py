import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from rtig import rig
from rtig.cli import main
from rtig.em import RigMixtureModel, closed_form_theta
from rtig.pipeline import PLOT_HEADER, l2_distance, qq_data
from rtig.taskset import ExecDistribution, TaskSet, TaskSpec, level_stats, load_taskset, save_taskset


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def small(tmp_path):
    ts = TaskSet((
        TaskSpec("a", 10.0, ExecDistribution.uniform_integer(1, 3)),
        TaskSpec("b", 15.0, ExecDistribution.uniform_integer(1, 5)),
        TaskSpec("c", 40.0, ExecDistribution.uniform_integer(2, 10)),
    ))
    path = tmp_path / "ts.json"
    save_taskset(ts, path)
    return ts, path


def test_generate_single_task(tmp_path, capsys):
    out = tmp_path / "one.json"
    assert run(capsys, "generate", "--n-tasks", 1, "--util", 0.5, "-o", out)[0] == 0
    ts = load_taskset(out)
    assert len(ts) == 1 and level_stats(ts).u[1] == pytest.approx(0.5, abs=1e-12)


def test_generate_is_deterministic(tmp_path, capsys):
    for name in ("x.json", "y.json"):
        run(capsys, "generate", "--n-tasks", 28, "--util", 0.9381, "--period-min", 100, "--period-max", 315,
            "--seed", 7, "-o", tmp_path / name)
    assert (tmp_path / "x.json").read_bytes() == (tmp_path / "y.json").read_bytes()
    assert len(load_taskset(tmp_path / "x.json")) == 28


def test_simulate_fit_dmp_chain(small, tmp_path, capsys):
    ts, path = small
    trace = tmp_path / "trace.csv"
    assert run(capsys, "simulate", "--taskset", path, "--jobs", 2000, "--seed", 3, "-o", trace)[0] == 0
    models = tmp_path / "models"
    models.mkdir()
    for tid in ("b", "c"):
        code, _, err = run(capsys, "fit", "--trace", trace, "--taskset", path, "--task", tid, "--kmax", 3,
                           "-o", models / f"{tid}.json")
        assert code == 0, err
        m = RigMixtureModel.load(models / f"{tid}.json")
        assert math.isfinite(m.loglik) and m.task_id == tid
    code, out, _ = run(capsys, "dmp", "--taskset", path, "--trace", trace, "--models", models,
                       "-o", tmp_path / "report.json")
    assert code == 0 and "IG deadline miss probability" in out
    doc = json.loads((tmp_path / "report.json").read_text())
    assert [r["task_id"] for r in doc["tasks"]] == ["a", "b", "c"]
    assert (tmp_path / "report.txt").read_text() == out


def test_fit_fixed_k1_matches_closed_form_and_refit(small, tmp_path, capsys):
    ts, path = small
    trace = tmp_path / "trace.csv"
    run(capsys, "simulate", "--taskset", path, "--jobs", 1000, "-o", trace)
    outs = []
    for name in ("m1.json", "m2.json"):
        run(capsys, "fit", "--trace", trace, "--taskset", path, "--task", "c", "--k", 1, "-o", tmp_path / name)
        outs.append(RigMixtureModel.load(tmp_path / name))
    from rtig.sim import read_trace

    s = level_stats(ts)
    ref = closed_form_theta(read_trace(trace)["c"].response, s.u[2], s.lam[2])
    assert outs[0].thetas[0] == pytest.approx(ref, rel=1e-6)
    assert np.allclose(outs[0].thetas, outs[1].thetas, rtol=1e-9, atol=0)


def test_fit_highest_priority_is_degenerate(small, tmp_path, capsys):
    _, path = small
    trace = tmp_path / "trace.csv"
    run(capsys, "simulate", "--taskset", path, "--jobs", 100, "-o", trace)
    code, _, err = run(capsys, "fit", "--trace", trace, "--taskset", path, "--task", "a")
    assert code == 4
    assert err.startswith("degenerate-level:") and "response time equals execution time" in err
    assert len(err.strip().splitlines()) == 1


def test_golden_set_second_task_sits_on_degenerate_level(tmp_path, capsys):
    ts = TaskSet((TaskSpec("t1", 4.0, ExecDistribution.deterministic(1)),
                  TaskSpec("t2", 6.0, ExecDistribution.deterministic(2))))
    path, trace = tmp_path / "g.json", tmp_path / "g.csv"
    save_taskset(ts, path)
    run(capsys, "simulate", "--taskset", path, "--jobs", 50, "-o", trace)
    assert run(capsys, "fit", "--trace", trace, "--taskset", path, "--task", "t2")[0] == 4
    # with a random first task the same layout fits with a finite likelihood
    ts = TaskSet((TaskSpec("t1", 4.0, ExecDistribution.uniform_integer(1, 2)),
                  TaskSpec("t2", 6.0, ExecDistribution.deterministic(2))))
    save_taskset(ts, path)
    run(capsys, "simulate", "--taskset", path, "--jobs", 500, "-o", trace)
    code, out, _ = run(capsys, "fit", "--trace", trace, "--taskset", path, "--task", "t2", "--kmax", 3)
    assert code == 0 and math.isfinite(json.loads(out)["loglik"])


@pytest.mark.parametrize("argv,code", [
    (["simulate", "--taskset", "missing.json", "-o", "x.csv"], 2),
    (["generate", "--n-tasks", "3", "--util", "1.5", "-o", "x.json"], 2),
    (["fit", "--bogus"], 2),
    (["nosuchcommand"], 2),
])
def test_errors_are_single_line(argv, code, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    c, _, err = run(capsys, *argv)
    assert c == code
    lines = err.strip().splitlines()
    assert len(lines) == 1 and lines[0].split(":")[0] == "validation-error"


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "rtig", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("rtig ")


# --- diagnostics --------------------------------------------------------------------

def test_qq_cli_and_self_consistency(tmp_path, capsys):
    # well-separated components; heavy overlap truncates tails under hard classification
    model = RigMixtureModel(u=0.3, lam=0.2, weights=[0.4, 0.6], thetas=[1.0, 6.0], task_id="x")
    r = model.sample(20_000, seed=1)
    trace = tmp_path / "t.csv"
    trace.write_text("task_id,release,response\n" + "".join(f"x,{i},{float(v)!r}\n" for i, v in enumerate(r)))
    model.save(tmp_path / "m.json")
    code, out, _ = run(capsys, "qq", "--trace", trace, "--model", tmp_path / "m.json")
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert rows[0].keys() == {"component", "rank", "g_value", "chi2_quantile"}
    for comp in ("1", "2"):
        g = np.array([float(x["g_value"]) for x in rows if x["component"] == comp])
        q = np.array([float(x["chi2_quantile"]) for x in rows if x["component"] == comp])
        top = slice(int(0.9 * g.size), None)
        slope = np.polyfit(q[top], g[top], 1)[0]
        assert 0.8 <= slope <= 1.25


def test_qq_edge_cases():
    m = RigMixtureModel(u=0.0, lam=1.0, weights=[1.0, 0.0], thetas=[2.0, 9.0])
    rows, notes = qq_data(m, [2.5])
    assert len(rows) == 1 and rows[0][3] == pytest.approx(rig.chi2_ppf_1df(0.5))
    assert any("zero weight" in n for n in notes)


def test_l2_single_observation_baseline(tmp_path, capsys):
    m = RigMixtureModel(u=0.0, lam=1.0, weights=[1.0], thetas=[2.0], task_id="x")
    lp = m.components()[0]
    from scipy.optimize import brentq

    median = brentq(lambda v: rig.ig_cdf(v, lp) - 0.5, 0.1, 20.0, xtol=1e-14)
    assert l2_distance(m, [median]) == pytest.approx(0.5, abs=1e-9)
    m.save(tmp_path / "m.json")
    trace = tmp_path / "t.csv"
    trace.write_text(f"task_id,release,response\nx,0,{median!r}\n")
    code, out, _ = run(capsys, "l2", "--trace", trace, "--model", tmp_path / "m.json")
    assert code == 0 and float(out) == pytest.approx(0.5, abs=1e-9)


def test_l2_shrinks_with_sample_size():
    m = RigMixtureModel(u=0.2, lam=0.5, weights=[0.5, 0.5], thetas=[1.0, 3.0])
    medians = [np.median([l2_distance(m, m.sample(n, seed=s)) for s in range(10)]) for n in (100, 1000, 10_000)]
    assert medians[0] > medians[1] > medians[2]


# --- report bundle ------------------------------------------------------------------

def test_report_is_byte_identical(small, tmp_path, capsys):
    _, path = small
    for d in ("r1", "r2"):
        code, _, err = run(capsys, "report", "--taskset", path, "--jobs", 800, "--seed", 1, "--kmax", 3,
                           "-o", tmp_path / d)
        assert code == 0, err
    files = sorted(p.relative_to(tmp_path / "r1") for p in (tmp_path / "r1").rglob("*") if p.is_file())
    assert {"dmp_vs_utilization.csv", "manifest.json", "report.json", "trace.csv"} <= {str(f) for f in files}
    for f in files:
        assert (tmp_path / "r1" / f).read_bytes() == (tmp_path / "r2" / f).read_bytes()
    plot = (tmp_path / "r1" / "dmp_vs_utilization.csv").read_text().splitlines()
    assert tuple(plot[0].split(",")) == PLOT_HEADER
    assert len(plot) == 4 and "nan" not in "".join(plot).lower()
    manifest = json.loads((tmp_path / "r1" / "manifest.json").read_text())
    assert manifest["config"]["simulation"]["seed"] == 1
    assert manifest["outputs"]["models"] == ["models/b.json", "models/c.json"]
