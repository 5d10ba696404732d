import csv
import json

import numpy as np
import pytest

from jointdisp.cli import main
from jointdisp.io import parse_dataset, read_chains
from jointdisp.model import Baseline, Linking, ModelSpec, VarianceModel, read_spec, write_spec

V, L, B = VarianceModel, Linking, Baseline

SAMPLER = ["--iters", "60", "--burnin", "30", "--thin", "3"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    root = tmp_path_factory.mktemp("cohort")
    spec = ModelSpec(V.EXCHANGEABLE, L.SHARED_SIGMA, B.PSPLINE)
    write_spec(spec, root / "model.ini")
    assert main(["simulate", "--spec", str(root / "model.ini"), "--n", "25", "--seed", "3",
                 "--log-sigma-sd", "0.4", "--out", str(root / "sim")]) == 0
    return root


def test_simulate_outputs(cohort):
    sim = cohort / "sim"
    data = parse_dataset(sim / "longitudinal.csv", sim / "survival.csv")
    assert data.N == 25
    spec = read_spec(sim / "spec.ini")
    truth = read_chains(spec, sim / "truth.csv")[0]
    assert truth.S == 1 and truth.N == 25


def test_simulate_is_deterministic(cohort, tmp_path):
    assert main(["simulate", "--spec", str(cohort / "model.ini"), "--n", "25", "--seed", "3",
                 "--log-sigma-sd", "0.4", "--out", str(tmp_path)]) == 0
    for name in ("longitudinal.csv", "survival.csv", "truth.csv"):
        assert (tmp_path / name).read_bytes() == (cohort / "sim" / name).read_bytes()


def _fit(cohort, out, *extra):
    sim = cohort / "sim"
    return main(["fit", "--spec", str(sim / "spec.ini"), "--long", str(sim / "longitudinal.csv"),
                 "--surv", str(sim / "survival.csv"), *SAMPLER, "--out", str(out), *extra])


def test_fit_summarize_curves(cohort, tmp_path):
    run = tmp_path / "run"
    assert _fit(cohort, run, "--chains", "2", "--seed", "7") == 0
    for name in ("spec.ini", "draws.csv", "loglik.csv", "waic.csv", "diagnostics.json"):
        assert (run / name).exists()
    draws = _rows(run / "draws.csv")
    assert len(draws) == 1 + 2 * 10
    assert {r[0] for r in draws[1:]} == {"0", "1"}
    diag = json.loads((run / "diagnostics.json").read_text())
    assert len(diag["chains"]) == 2 and "split_rhat" in diag

    assert main(["summarize", "--run", str(run)]) == 0
    summary = _rows(run / "summary.csv")
    assert summary[0] == ["parameter", "mean", "lo2.5", "hi97.5"]
    names = [r[0] for r in summary[1:]]
    assert "beta1_0" in names and "sigma_b_12" in names

    assert main(["curves", "--run", str(run), "--grid", "0:5:0.5"]) == 0
    curves = _rows(run / "curves.csv")
    assert curves[0] == ["g", "label", "t", "mean", "lo2.5", "hi97.5"]
    assert len(curves) == 1 + 5 * 11
    hr = [r for r in curves[1:] if r[1] == "hazard_ratio"]
    assert len(hr) == 11 and all(float(r[3]) > 0 for r in hr)


def test_fit_is_byte_deterministic(cohort, tmp_path):
    assert _fit(cohort, tmp_path / "a", "--seed", "11") == 0
    assert _fit(cohort, tmp_path / "b", "--seed", "11") == 0
    assert _fit(cohort, tmp_path / "c", "--seed", "12") == 0
    a, b, c = ((tmp_path / d / "draws.csv").read_bytes() for d in "abc")
    assert a == b and a != c


def test_parallel_chains_match_serial(cohort, tmp_path):
    assert _fit(cohort, tmp_path / "s", "--chains", "2") == 0
    assert _fit(cohort, tmp_path / "p", "--chains", "2", "--jobs", "2") == 0
    assert (tmp_path / "s" / "draws.csv").read_bytes() == (tmp_path / "p" / "draws.csv").read_bytes()


def test_compare_subset(cohort, tmp_path):
    sim = cohort / "sim"
    labels = "COMMON+SLOPES_ONLY+PIECEWISE,EXCHANGEABLE+SHARED_SIGMA+PSPLINE"
    assert main(["compare", "--spec", str(sim / "spec.ini"), "--long", str(sim / "longitudinal.csv"),
                 "--surv", str(sim / "survival.csv"), "--models", labels, *SAMPLER,
                 "--out", str(tmp_path)]) == 0
    table = _rows(tmp_path / "waic.csv")
    assert sorted(r[0] for r in table[1:]) == sorted(labels.split(","))
    assert (tmp_path / "COMMON+SLOPES_ONLY+PIECEWISE" / "draws.csv").exists()


def test_compare_unknown_label(cohort, tmp_path, capsys):
    sim = cohort / "sim"
    code = main(["compare", "--long", str(sim / "longitudinal.csv"), "--surv", str(sim / "survival.csv"),
                 "--models", "NOPE", *SAMPLER, "--out", str(tmp_path)])
    assert code == 2
    assert "unknown model label(s): NOPE" in capsys.readouterr().err


def test_basis_export(tmp_path):
    assert main(["basis", "--tmin", "0", "--tmax", "5", "--s", "4", "--grid", "0,2.5,5", "--out", str(tmp_path)]) == 0
    basis = np.array([[float(v) for v in r] for r in _rows(tmp_path / "basis.csv")[1:]])
    assert basis.shape == (3, 1 + 7)
    np.testing.assert_allclose(basis[:, 1:].sum(axis=1), 1.0, atol=1e-12)
    D = np.array([[float(v) for v in r] for r in _rows(tmp_path / "difference.csv")])
    P = np.array([[float(v) for v in r] for r in _rows(tmp_path / "penalty.csv")])
    assert D.shape == (6, 7)
    np.testing.assert_array_equal(P, D.T @ D)


def test_errors_exit_with_status_two(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\nvariance_model = COMMON\nlinking = SHARED_B2\nbaseline = WEIBULL\n")
    assert main(["simulate", "--spec", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "SHARED_B2" in capsys.readouterr().err
