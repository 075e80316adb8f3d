import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from qeflow import io as qio
from qeflow.cli import (
    EXIT_DIVERGENCE,
    EXIT_OK,
    EXIT_S_FLOOR,
    EXIT_TOLERANCE,
    EXIT_TOPOLOGY,
    EXIT_USAGE,
    TOL_ENV,
    Tolerances,
    main,
)
from qeflow.model_spaces import space_form_operator
from qeflow.profile import flat_disk, round_sphere
from qeflow.quasi_einstein import QEStructure


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    rep = json.loads(out)
    # a report and its exit status never disagree
    assert rep["exit_code"] == code
    assert rep["passed"] == all(c["pass"] for c in rep["checks"]) == (code == EXIT_OK)
    assert rep["failed"] == [c["name"] for c in rep["checks"] if not c["pass"]]
    assert rep["schema_version"] == qio.SCHEMA_VERSION
    return code, rep


@pytest.fixture(scope="module")
def s3_json(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "einstein_s3.json"
    assert main(["qe", "solve", "--n", "3", "--lambda", "2", "--npts", "201", "--order", "6",
                 "--output", str(path), "--report", str(path.with_suffix(".report"))]) == EXIT_OK
    return path


class TestCatalogAndVerify:
    def test_catalog(self, capsys):
        code, rep = run_json(capsys, "catalog", "--space", "sphere:n=5,k=1", "--matrix")
        assert code == 0 and rep["spaces"][0]["einstein_constant"] == 4.0
        assert np.array(rep["spaces"][0]["matrix"]).shape == (10, 10)

    def test_einstein_identity(self, capsys):
        code, rep = run_json(capsys, "verify", "einstein-identity", "--space", "sphere:n=5,k=1")
        assert code == 0 and rep["checks"][0]["value"] <= 1e-10
        code, rep = run_json(capsys, "verify", "einstein-identity")
        assert code == 0 and len(rep["checks"]) >= 12

    def test_non_einstein_space_is_a_usage_error(self, capsys):
        code, _, err = run(capsys, "verify", "einstein-identity", "--space", "product:sphere(2,1)xsphere(3,1)")
        assert code == EXIT_USAGE and "not Einstein" in err

    def test_sharp_n2(self, capsys):
        code, rep = run_json(capsys, "verify", "sharp", "--n", "2", "--samples", "5")
        assert code == 0 and any(c["name"] == "n=2 sharp vanishes" for c in rep["checks"])

    def test_sharp_n6(self, capsys):
        code, rep = run_json(capsys, "verify", "sharp", "--n", "6", "--samples", "100")
        assert code == 0 and rep["timings"]["6"]["speedup"] > 1

    def test_trace_identities_random_and_from_file(self, capsys, tmp_path):
        code, rep = run_json(capsys, "verify", "trace-identities", "--samples", "20")
        assert code == 0 and rep["factor_audit"]["scal_tensor_unit_S3"] == 6.0
        path = tmp_path / "R.json"
        qio.save_operator(space_form_operator(4, 1.0), path)
        capsys.readouterr()
        code, rep = run_json(capsys, "verify", "trace-identities", "--input", str(path))
        assert code == 0 and len(rep["checks"]) == 2

    def test_bochner_default(self, capsys):
        code, rep = run_json(capsys, "verify", "bochner")
        assert code == 0 and rep["npts"] == [200, 400, 800]
        assert rep["orders"]["bochner"]["pairwise"][-1] >= 1.8

    def test_bochner_from_structure(self, capsys, s3_json):
        code, rep = run_json(capsys, "verify", "bochner", "--input", str(s3_json))
        assert code == 0 and rep["npts"] == [51, 101, 201]
        assert any(c["name"] == "weighted_bochner_max" for c in rep["checks"])

    def test_flow_evolution(self, capsys):
        code, rep = run_json(capsys, "verify", "flow-evolution")
        assert code == 0
        assert rep["orders"]["evolution"]["pairwise"][-1] == pytest.approx(2.0, abs=0.2)

    def test_tolerance_failure_is_enumerated(self, capsys):
        code, rep = run_json(capsys, "verify", "bochner", "--npts", "50", "100", "--tol", "bochner=1e-30")
        assert code == EXIT_TOLERANCE and rep["failed"] == ["bochner_max"]

    def test_text_and_csv_formats(self, capsys):
        code, out, _ = run(capsys, "verify", "einstein-identity", "--space", "sphere:n=3,k=1", "--format", "text")
        assert code == 0 and out.startswith("verify einstein-identity: PASS")
        code, out, _ = run(capsys, "verify", "einstein-identity", "--space", "sphere:n=3,k=1", "--format", "csv")
        rows = list(csv.reader(io.StringIO(out)))
        assert rows[0] == ["name", "value", "relation", "tol", "pass"] and rows[1][-1] == "1"


class TestQE:
    def test_solve_report_is_certified(self, s3_json):
        rep = json.loads(s3_json.with_suffix(".report").read_text())
        assert rep["passed"] and rep["certificate"]["certified"]
        body = qio.read_json(s3_json)
        assert body["topology"] == "closed_sphere" and body["order"] == 6 and "extended" in body

    def test_solve_gaussian_to_stdout(self, capsys):
        code, rep = run_json(capsys, "qe", "solve", "--n", "3", "--m", "inf", "--lambda", "0.5",
                             "--target", "interval", "--r-max", "2")
        assert code == 0
        r = np.array(rep["structure"]["r"])
        assert np.max(np.abs(np.array(rep["structure"]["f"]) - r ** 2 / 4)) <= 1e-4

    def test_rigidity(self, capsys, s3_json):
        code, rep = run_json(capsys, "qe", "rigidity", "--input", str(s3_json), "--h", "induced")
        assert code == 0 and rep["verdict"] == "rigid"
        assert abs(rep["rigidity"]["lhs"]) <= 1e-8

    def test_rigidity_inconclusive_h(self, capsys, s3_json):
        code, rep = run_json(capsys, "qe", "rigidity", "--input", str(s3_json), "--h", "4.1")
        assert code == EXIT_TOLERANCE and rep["verdict"] == "inconclusive" and rep["failed"] == ["h_compatibility"]

    def test_residual(self, capsys, s3_json):
        code, rep = run_json(capsys, "qe", "residual", "--input", str(s3_json))
        assert code == 0 and rep["m"] == "inf" and "mu0" not in rep
        assert rep["orders"]["qe_residual"]["h"] == sorted(rep["orders"]["qe_residual"]["h"], reverse=True)

    def test_cf_check(self, capsys, s3_json):
        code, rep = run_json(capsys, "qe", "cf-check", "--input", str(s3_json), "--h", "a*f^k", "--a", "1", "--k", "2")
        assert code == 0 and rep["verdict"] == "rigid-by-CF"

    def test_cf_not_applicable(self, capsys, tmp_path):
        path = tmp_path / "p.json"
        qio.save_structure(QEStructure(round_sphere(3, 101, f=np.cos), 2, 2.0), path)
        code, rep = run_json(capsys, "qe", "cf-check", "--input", str(path), "--h", "a*sin(f^k)+b*cos(f^k)",
                             "--a", "1", "--b", "0", "--k", "1")
        # sin(cos r) is monotone in f, so the predicate applies and the bound holds
        assert code == 0 and rep["verdict"] == "rigid-by-CF"

    def test_s_floor_exit(self, capsys, tmp_path):
        path = tmp_path / "s3.json"
        qio.save_structure(QEStructure(round_sphere(3, 41), 2, 2.0), path)
        # s = 6 everywhere, so a floor above it rejects every point
        code, _, err = run(capsys, "qe", "rigidity", "--input", str(path), "--tol", "s_floor=100")
        assert code == EXIT_S_FLOOR and "s_floor" in err

    def test_topology_exit(self, capsys, tmp_path):
        path = tmp_path / "disk.json"
        qio.save_structure(QEStructure(flat_disk(3, 41), "inf", 0.0), path)
        code, _, err = run(capsys, "qe", "rigidity", "--input", str(path))
        assert code == EXIT_TOPOLOGY and "closed_sphere" in err

    def test_divergence_exit(self, capsys):
        code, _, err = run(capsys, "qe", "solve", "--n", "3", "--m", "2", "--lambda", "-2",
                           "--target", "interval", "--r-max", "2", "--f2-0", "0.5")
        assert code == EXIT_DIVERGENCE and "blows up" in err

    def test_missing_lambda_is_usage_error(self, capsys, tmp_path):
        path = tmp_path / "bare.json"
        qio.write_json(round_sphere(3, 81).to_json(), path)
        code, _, err = run(capsys, "qe", "residual", "--input", str(path))
        assert code == EXIT_USAGE and "lambda" in err
        code, rep = run_json(capsys, "qe", "residual", "--input", str(path), "--lambda", "2", "--m", "3")
        assert code == 0 and rep["mu0"] == pytest.approx(2.0, abs=1e-6)


class TestFlow:
    def test_einstein(self, capsys, tmp_path):
        out = tmp_path / "trace.csv"
        code, rep = run_json(capsys, "flow", "einstein", "--lambda", "2", "--T", "0.2", "--output", str(out))
        assert code == 0 and not rep["blowup"]
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["t", "alpha_0", "blowup"]
        assert float(rows[-1][1]) == pytest.approx(1 - 4 * 0.2, abs=1e-12)

    def test_einstein_blowup_is_not_an_error(self, capsys):
        code, rep = run_json(capsys, "flow", "einstein", "--lambda", "2", "--T", "1")
        assert code == 0 and rep["blowup"] and abs(rep["blowup_time"] - 0.25) <= 1e-6

    def test_flat_is_constant(self, capsys):
        code, rep = run_json(capsys, "flow", "einstein", "--lambda", "0", "--T", "5")
        assert code == 0 and rep["final_alpha"] == [1.0]

    def test_product_with_evolution(self, capsys, tmp_path):
        res = tmp_path / "res.csv"
        code, rep = run_json(capsys, "flow", "product-spheres", "--p", "2", "--q", "3", "--a0", "1", "--b0", "1",
                             "--T", "0.2", "--check-evolution", "--residual-output", str(res))
        assert code == 0
        vals = [float(r[1]) for r in list(csv.reader(res.open()))[1:]]
        assert max(vals) <= 1e-6 and len(vals) == rep["steps"] - 1

    @pytest.mark.parametrize("argv", [
        ["flow", "product-spheres", "--p", "1", "--q", "3", "--T", "0.1"],
        ["flow", "product-spheres", "--p", "2", "--q", "3", "--T", "0.1", "--dt", "0"],
        ["flow", "einstein", "--T", "0.1"],
        ["verify", "nonsense"],
        ["frobnicate"],
    ])
    def test_bad_parameters(self, capsys, argv):
        assert run(capsys, *argv)[0] == EXIT_USAGE


class TestTolerances:
    def test_environment_override(self, capsys, monkeypatch):
        monkeypatch.setenv(TOL_ENV, "bochner=1e-30, order=1.5")
        code, rep = run_json(capsys, "verify", "bochner", "--npts", "50", "100")
        assert code == EXIT_TOLERANCE and rep["tolerances"]["bochner"] == 1e-30 and rep["tolerances"]["order"] == 1.5

    def test_flag_beats_environment(self, capsys, monkeypatch):
        monkeypatch.setenv(TOL_ENV, "bochner=1e-30")
        code, rep = run_json(capsys, "verify", "bochner", "--npts", "50", "100", "--tol", "bochner=1")
        assert code == 0

    @pytest.mark.parametrize("text", ["nope=1", "bochner", "bochner=abc", "bochner=-1"])
    def test_bad_environment(self, capsys, monkeypatch, text):
        monkeypatch.setenv(TOL_ENV, text)
        assert run(capsys, "verify", "sharp", "--n", "3", "--samples", "1")[0] == EXIT_USAGE

    def test_defaults(self):
        assert Tolerances.from_env({}) == Tolerances()


def test_module_entry_point(tmp_path):
    rep = tmp_path / "r.json"
    proc = subprocess.run([sys.executable, "-m", "qeflow", "verify", "sharp", "--n", "3", "--samples", "3",
                           "--report", str(rep)], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(rep.read_text())["passed"]
