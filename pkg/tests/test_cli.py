import csv
import math

import numpy as np
import pytest

from nsasym.cli import main
from nsasym.config import ConfigError, load_preset, parse_config
from nsasym.expansion import read_expansion
from nsasym.field import read_field, write_field
from nsasym.forces import read_plan
from nsasym.modes import enumerate_modes
from nsasym.solver import ContinuationRun, SteadyState, sinusoidal_force

SHORT = """
dimension = 3
lambda_cut = 9
force = sinusoidal
alpha_start = 1
alpha_end = 50
spacing = geometric
n_points = {n}
"""


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    assert main(["continue", "--preset", "paper-4.1", "--out", str(root / "branch")]) == 0
    assert main(["expand", str(root / "branch"), "--depth", "2", "--out", str(root / "exp")]) == 0
    assert main(["classify", str(root / "branch"), str(root / "exp"), "--out", str(root / "cls")]) == 0
    return root


def test_continue_outputs(pipeline):
    table = rows(pipeline / "branch" / "branch.csv")
    assert table[0] == ["alpha", "znorm", "hnorm", "residual", "newton_iters"]
    run = ContinuationRun.read(pipeline / "branch")
    assert run.check_invariants() == []
    assert run.alphas[0] == 1 and run.alphas[-1] == 2e5
    assert len(table) - 1 == len(run.states)


def test_expand_outputs(pipeline):
    table = rows(pipeline / "exp" / "gamma.csv")
    assert table[0] == ["n", "alpha", "gamma1", "gamma2"]
    exp = read_expansion(pipeline / "exp")
    assert exp.depth == 2
    assert all(abs(w.znorm() - 1) <= 1e-12 for w in exp.directions)


def test_classify_outputs(pipeline):
    report = (pipeline / "cls" / "case_report.txt").read_text()
    assert report.startswith("scenario = limit:iii-c\n")
    assert ("chain = sigma0,0 > sigma0 ~ sigma0,1 > sigma1 ~ sigma0,2 ~ sigma1,1 "
            "> sigma2 ~ sigma1,2 > sigma2,2") in report
    assert "FAILED" not in report
    ratios = rows(pipeline / "cls" / "ratios.csv")
    assert ratios[0] == ["n", "alpha", "sigma1/sigma0,1", "sigma1/sigma0,2", "sigma1,1/sigma0,2",
                         "sigma2/sigma1,1", "sigma1,2/sigma2"]
    sigma = rows(pipeline / "cls" / "sigma.csv")
    assert "sigma0,0" in sigma[0] and len(sigma) == len(ratios)
    vals = np.array([[float(x) for x in r[2:]] for r in sigma[1:]])
    assert np.all(vals > 0)
    avg = float(next(l for l in report.splitlines() if l.startswith("evidence[|Av-g|_Z]")).split("=")[1])
    assert 0.56 <= avg <= 0.76


def test_two_point_schedule(tmp_path):
    cfg = write_cfg(tmp_path, SHORT.format(n=2))
    assert main(["continue", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    assert len(rows(tmp_path / "b" / "branch.csv")) == 3


def test_continue_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, SHORT.format(n=12))
    for d in ("a", "b"):
        assert main(["continue", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("branch.csv", "state_5.sf", "run.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_force_from_file(tmp_path):
    ms = enumerate_modes(3, 9)
    write_field(tmp_path / "g.sf", sinusoidal_force(ms).g)
    cfg = write_cfg(tmp_path, SHORT.format(n=3).replace("force = sinusoidal", "force = file:g.sf"))
    assert main(["continue", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    assert ContinuationRun.read(tmp_path / "b").check_invariants() == []


def test_bad_force_file(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SHORT.format(n=3).replace("force = sinusoidal", "force = file:missing.sf"))
    assert main(["continue", "--config", cfg, "--out", str(tmp_path / "b")]) == 2
    assert "does not exist" in capsys.readouterr().err


def test_missing_key_is_config_error(tmp_path):
    cfg = write_cfg(tmp_path, SHORT.format(n=3).replace("alpha_end = 50", ""))
    assert main(["continue", "--config", cfg, "--out", str(tmp_path / "b")]) == 2


def test_constant_branch_and_depth_zero(tmp_path, capsys):
    ms = enumerate_modes(3, 4)
    g = sinusoidal_force(ms).g
    v = sinusoidal_force(ms).v_start
    run = ContinuationRun(g, [SteadyState(a, v, 0.0, 0) for a in np.geomspace(1, 10, 12)])
    run.write(tmp_path / "br")
    assert main(["expand", str(tmp_path / "br"), "--out", str(tmp_path / "e")]) == 0
    assert "trivial expansion" in capsys.readouterr().out
    assert main(["expand", str(tmp_path / "br"), "--depth", "0", "--out", str(tmp_path / "e0")]) == 0
    assert rows(tmp_path / "e0" / "gamma.csv")[0] == ["n", "alpha"]
    assert read_expansion(tmp_path / "e0").depth == 0


def test_missing_expansion_dir(pipeline, tmp_path):
    code = main(["classify", str(pipeline / "branch"), str(tmp_path / "nope"), "--out", str(tmp_path / "c")])
    assert code == 2


def test_construct_case1(tmp_path):
    out = tmp_path / "c1"
    assert main(["construct", "--preset", "case1-plan", "--out", str(out)]) == 0
    balance = rows(out / "plan" / "balance.csv")
    assert balance[0] == ["m", "residual"]
    assert max(float(r[1]) for r in balance[1:]) <= 1e-10
    ev = rows(out / "evaluation.csv")
    assert ev[0] == ["n", "alpha", "residual", "tail_bound"] and len(ev) == 22
    plan = read_plan(out / "plan")
    assert plan.case_tag == "Case1" and plan.check_invariants() == []
    trunc = rows(out / "truncation.csv")
    assert all(float(r[4]) <= float(r[5]) for r in trunc[1:])
    assert "N0 = 0" in (out / "evaluation.txt").read_text()


def test_construct_case2(tmp_path):
    out = tmp_path / "c2"
    assert main(["construct", "--preset", "case2-plan", "--out", str(out)]) == 0
    assert read_plan(out / "plan").case_tag == "Case2"
    assert "max_defect" in (out / "zero_bs.txt").read_text()


def test_construct_vanishing(tmp_path):
    out = tmp_path / "v"
    assert main(["construct", "--preset", "thm-6.10", "--out", str(out)]) == 0
    g = read_field(out / "g.sf")
    assert g.hnorm() == pytest.approx(math.pi * math.sqrt(10 * math.pi), rel=1e-12)
    pairs = rows(out / "pairs.csv")
    assert pairs[0] == ["n", "alpha", "residual", "v_hnorm", "g_hnorm"]
    assert max(float(r[2]) for r in pairs[1:]) <= 1e-12 * (1 + g.hnorm())


def test_construct_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["construct", "--preset", "case1-plan", "--out", str(tmp_path / d)]) == 0
    for name in ("evaluation.csv", "truncation.csv", "plan/w_3.sf", "plan/plan.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert main(["construct", "--preset", "case1-plan", "--seed", "3", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "a" / "plan/w_3.sf").read_bytes() != (tmp_path / "c" / "plan/w_3.sf").read_bytes()


def test_invalid_w0(tmp_path, capsys):
    text = load_preset("case1-plan")
    body = "\n".join(f"{k} = {v}" for k, v in text.values.items() if k != "w0")
    cfg = write_cfg(tmp_path, body + "\nw0 = 1 0 0  0 0 1 0 0 0; 0 1 0  0 0 0 0 1 0\n")
    assert main(["construct", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    assert "B(w0, w0) = 0" in capsys.readouterr().err


def test_config_and_preset_are_exclusive(tmp_path):
    cfg = write_cfg(tmp_path, SHORT.format(n=2))
    assert main(["continue", "--config", cfg, "--preset", "paper-4.1", "--out", str(tmp_path / "b")]) == 2
    assert main(["continue", "--out", str(tmp_path / "b")]) == 2


def test_unknown_preset_rejected_by_parser(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["continue", "--preset", "nope", "--out", str(tmp_path)])
    assert info.value.code == 2


def test_config_parsing():
    cfg = parse_config("dimension = 3  # comment\nM = 4\nK3 = 0 1 1; 0 -1 -1\n")
    assert cfg.integer("dimension") == 3 and cfg.number("M") == 4.0
    assert cfg.vectors("K3") == [(0, 1, 1), (0, -1, -1)]
    with pytest.raises(ConfigError):
        cfg.number("missing")
    with pytest.raises(ConfigError):
        parse_config("tol = abc").positive("tol")
    with pytest.raises(ConfigError):
        parse_config("spacing = random").step_policy()
