import json
import os
import subprocess
import sys

import numpy as np
import pytest

from tdcmm import io as tio
from tdcmm.cli import build_parser, main, resolve
from tdcmm.errors import IndexOutOfRange, ParseError
from tdcmm.evaluation import ScenarioSpec, generate_scenario
from tdcmm.model import DcmmParams, build_probability_matrix

from conftest import planted_params


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _write_truth(path, params):
    tio.write_json(path, {"theta": params.theta.tolist(), "pi": params.pi.tolist(),
                          "p_mat": params.p_mat.tolist()})


# ---- edge lists

def test_edge_list_examples(tmp_path):
    f = tmp_path / "e.txt"
    f.write_text("")
    assert not tio.load_edge_list(str(f), 4).any()
    f.write_text("0 1\n")
    x = tio.load_edge_list(str(f), 4)
    assert x[0, 1] == x[1, 0] == 1 and x.sum() == 2
    f.write_text("0 1\n1 0\n# comment\n\n0 1 0.7\n")
    np.testing.assert_array_equal(tio.load_edge_list(str(f), 4), x)


def test_edge_list_errors(tmp_path):
    f = tmp_path / "e.txt"
    f.write_text("0 1\n2 x\n")
    with pytest.raises(ParseError) as info:
        tio.load_edge_list(str(f), 4)
    assert info.value.line == 2 and ":2:" in str(info.value)
    f.write_text("0 9\n")
    with pytest.raises(IndexOutOfRange):
        tio.load_edge_list(str(f), 4)
    f.write_text("3 3\n")
    with pytest.raises(ParseError):
        tio.load_edge_list(str(f), 4)


def test_csv_round_trip(tmp_path):
    a = np.random.default_rng(0).uniform(size=(5, 5))
    a = a + a.T
    tio.save_matrix(str(tmp_path / "a.csv"), a)
    assert np.array_equal(tio.load_network(str(tmp_path / "a.csv")), a)


def test_asymmetric_rejected(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    tio.save_matrix(str(path), np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ParseError):
        tio.load_network(str(path))
    assert main(["estimate", "--target", str(path), "--out", str(tmp_path / "o"), "--k", "1"]) == 2
    assert "bad.csv" in capsys.readouterr().err


# ---- simulate

def test_simulate_files_and_determinism(tmp_path):
    args = ["simulate", "--scenario", "s1", "--m", "3", "--d", "20", "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == ["source_001.csv", "source_002.csv", "target.csv", "truth.json"]
    for n in names:
        assert _read(tmp_path / "a" / n) == _read(tmp_path / "b" / n)


def test_simulate_truth_round_trip(tmp_path):
    assert main(["simulate", "--m", "3", "--d", "20", "--seed", "2", "--out", str(tmp_path)]) == 0
    t = tio.read_json(str(tmp_path / "truth.json"))
    h = build_probability_matrix(DcmmParams(t["theta"], t["pi"], t["p_mat"]))
    spec = ScenarioSpec(**t["spec"])
    ref = generate_scenario(spec).h_target
    assert np.abs(h - ref).max() < 1e-12


# ---- estimate

def test_estimate_noiseless(tmp_path, capsys):
    params = planted_params(d=40, k=3, seed=1)
    h = build_probability_matrix(params)
    tio.save_matrix(str(tmp_path / "h.csv"), h)
    _write_truth(str(tmp_path / "truth.json"), params)
    rc = main(["estimate", "--target", str(tmp_path / "h.csv"), "--k", "3",
               "--truth", str(tmp_path / "truth.json"), "--out", str(tmp_path / "est")])
    assert rc == 0
    err = tio.read_json(str(tmp_path / "est" / "error.json"))["error_h"]
    assert err < 1e-6
    for name in ("theta.csv", "pi.csv", "p.csv", "h_hat.csv", "diagnostics.json", "timings.json"):
        assert (tmp_path / "est" / name).exists()


def test_estimate_k1(tmp_path):
    h = build_probability_matrix(DcmmParams(np.linspace(0.3, 0.9, 12), np.ones((12, 1)), [[0.7]]))
    tio.save_matrix(str(tmp_path / "h.csv"), h)
    assert main(["estimate", "--target", str(tmp_path / "h.csv"), "--k", "1",
                 "--out", str(tmp_path / "e")]) == 0
    h_hat = tio.load_matrix(str(tmp_path / "e" / "h_hat.csv"))
    assert np.linalg.matrix_rank(h_hat, tol=1e-10) == 1


def test_missing_file(tmp_path, capsys):
    missing = str(tmp_path / "nope.csv")
    assert main(["estimate", "--target", missing, "--out", str(tmp_path / "o")]) == 2
    assert missing in capsys.readouterr().err


def test_estimation_failure_exit_1(tmp_path):
    x = np.zeros((10, 10))
    x[0, 1] = x[1, 0] = 1
    tio.save_matrix(str(tmp_path / "x.csv"), x)
    assert main(["estimate", "--target", str(tmp_path / "x.csv"), "--k", "3",
                 "--out", str(tmp_path / "o")]) == 1


# ---- transfer / select

@pytest.fixture
def noiseless_dir(tmp_path):
    params = planted_params(d=40, k=4, seed=3)
    h = build_probability_matrix(params)
    tio.save_matrix(str(tmp_path / "target.csv"), h)
    for m in range(1, 4):
        tio.save_matrix(str(tmp_path / f"source_{m:03d}.csv"), h)
    _write_truth(str(tmp_path / "truth.json"), params)
    return tmp_path


def test_transfer_oracle_noiseless(noiseless_dir):
    d = noiseless_dir
    rc = main(["transfer", "--target", str(d / "target.csv"), "--sources", str(d / "source_*.csv"),
               "--mode", "oracle", "--k", "4", "--k-shared", "2", "--truth", str(d / "truth.json"),
               "--out", str(d / "out")])
    assert rc == 0
    assert tio.read_json(str(d / "out" / "error.json"))["error_h"] < 1e-6
    assert tio.load_matrix(str(d / "out" / "shared.csv")).shape == (40, 2)
    assert tio.load_matrix(str(d / "out" / "private.csv")).shape == (40, 2)


def test_non_oracle_near_ks_keeps_all(noiseless_dir, capsys):
    d = noiseless_dir
    rc = main(["transfer", "--target", str(d / "target.csv"), "--sources", str(d / "source_*.csv"),
               "--mode", "non-oracle", "--tau", "3.9", "--k", "4", "--k-shared", "4",
               "--out", str(d / "out")])
    assert rc == 0
    trace = tio.read_json(str(d / "out" / "trace.json"))
    assert trace["selected"] == [1, 2, 3]


def test_non_oracle_without_sources_matches_estimate(tmp_path):
    scen = generate_scenario(ScenarioSpec("s1", d=40, m_total=2, seed=5))
    tio.save_matrix(str(tmp_path / "t.csv"), scen.target)
    assert main(["estimate", "--target", str(tmp_path / "t.csv"), "--out", str(tmp_path / "a")]) == 0
    assert main(["transfer", "--mode", "non-oracle", "--target", str(tmp_path / "t.csv"),
                 "--out", str(tmp_path / "b")]) == 0
    for name in ("theta.csv", "pi.csv", "p.csv", "h_hat.csv", "diagnostics.json"):
        assert _read(tmp_path / "a" / name) == _read(tmp_path / "b" / name)


def test_select_with_cv(tmp_path):
    assert main(["simulate", "--scenario", "s3", "--d", "40", "--m", "7", "--out", str(tmp_path)]) == 0
    rc = main(["select", "--target", str(tmp_path / "target.csv"),
               "--sources", str(tmp_path / "source_*.csv"), "--cv-tau", "0.5,1,1.5",
               "--out", str(tmp_path / "sel")])
    assert rc == 0
    cv = tio.read_json(str(tmp_path / "sel" / "cv_tau.json"))
    assert cv["tau"] in (0.5, 1.0, 1.5)
    assert "selected" in tio.read_json(str(tmp_path / "sel" / "trace.json"))


def test_oracle_needs_sources(tmp_path):
    scen = generate_scenario(ScenarioSpec("s1", d=30, m_total=2, seed=0))
    tio.save_matrix(str(tmp_path / "t.csv"), scen.target)
    assert main(["transfer", "--target", str(tmp_path / "t.csv"), "--out", str(tmp_path / "o")]) == 2


def test_bad_sketch_settings_are_usage_errors(noiseless_dir):
    d = noiseless_dir
    rc = main(["transfer", "--target", str(d / "target.csv"), "--sources", str(d / "source_*.csv"),
               "--sketch-pprime", "3", "--out", str(d / "o")])
    assert rc == 2


# ---- eval

def test_eval_rows_and_bytes(tmp_path):
    base = ["eval", "--scenario", "s1", "--d", "30", "--m", "4", "--reps", "1", "--seed", "3"]
    assert main(base + ["--out", str(tmp_path / "a")]) == 0
    assert main(base + ["--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    lines = (tmp_path / "a" / "report.csv").read_text().splitlines()
    assert 2 <= len(lines) <= 4
    for name in ("report.csv", "summary.json"):
        assert _read(tmp_path / "a" / name) == _read(tmp_path / "b" / name)


def test_eval_s1_monotone_in_m(tmp_path):
    assert main(["eval", "--scenario", "s1", "--d", "50", "--m", "20,40", "--reps", "30",
                 "--methods", "oracle_tdcmm", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    mean = {c["M"]: c["mean"] for c in summary}
    assert mean[40] <= mean[20]


# ---- parser surface

@pytest.mark.parametrize("cmd", ["simulate", "estimate", "transfer", "select", "eval"])
def test_help_exits_zero(cmd):
    r = subprocess.run([sys.executable, "-m", "tdcmm", cmd, "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "usage" in r.stdout


def test_invalid_flag_exits_two():
    r = subprocess.run([sys.executable, "-m", "tdcmm", "eval", "--bogus"], capture_output=True, text=True)
    assert r.returncode == 2 and "usage" in r.stderr


def test_dump_config_round_trip(tmp_path):
    conf = str(tmp_path / "run.conf")
    argv = ["transfer", "--k", "5", "--k-shared", "3", "--tau", "1.25", "--split",
            "--target", "t.csv", "--dump-config", conf]
    assert main(argv) == 0
    parser = build_parser()
    first = resolve(parser.parse_args(argv))
    again = resolve(parser.parse_args(["transfer", "--config", conf]))
    assert again == first


def test_flags_override_config(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("k=6\nseed=9\n")
    cfg = resolve(build_parser().parse_args(["eval", "--config", str(conf), "--seed", "1"]))
    assert cfg["k"] == 6 and cfg["seed"] == 1


def test_transfer_threads_do_not_change_bytes(tmp_path):
    assert main(["simulate", "--scenario", "s3", "--d", "40", "--m", "7", "--out", str(tmp_path)]) == 0
    outs = []
    for threads in ("1", "3"):
        out = tmp_path / f"t{threads}"
        assert main(["transfer", "--mode", "non-oracle", "--target", str(tmp_path / "target.csv"),
                     "--sources", str(tmp_path / "source_*.csv"), "--threads", threads,
                     "--out", str(out)]) == 0
        outs.append(out)
    for name in ("h_hat.csv", "shared.csv", "private.csv", "trace.json", "diagnostics.json"):
        assert _read(outs[0] / name) == _read(outs[1] / name)
