import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fedosovkit.cli import EXIT_DOMAIN, EXIT_FAIL, EXIT_OK, EXIT_USAGE, main, run
from fedosovkit.grid import GridFunction
from fedosovkit.oscillator import OscillatorEigenstate
from fedosovkit.prefix import parse
from fedosovkit.symbolic import expr_equal

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = sorted(FIXTURES.glob("*.json"))


def _lookup(doc, dotted):
    for key in dotted.split("."):
        doc = doc[key]
    return doc


def _stable(doc):
    doc = json.loads(json.dumps(doc))
    doc.pop("seconds", None)
    return doc


@pytest.fixture(scope="module")
def manifests(tmp_path_factory):
    # W0, (W0 + W1)/2 and 2 W0 on the default grid at hbar = 1
    d = tmp_path_factory.mktemp("grids")
    w0 = OscillatorEigenstate(0, 1.0).grid(8.0, 256)
    w1 = OscillatorEigenstate(1, 1.0).grid(8.0, 256)
    return {"pure": w0.save(d / "w0.json"),
            "mixed": w0.with_data(0.5 * (w0.data + w1.data)).save(d / "mix.json"),
            "unnormalized": w0.with_data(2 * w0.data).save(d / "twice.json")}


class TestGolden:
    @pytest.mark.parametrize("path", GOLDEN, ids=[p.stem for p in GOLDEN])
    def test_fixture(self, path):
        spec = json.loads(path.read_text())
        doc, code = run(spec["argv"])
        assert code == spec["exit_code"] == doc["exit_code"]
        for dotted, want in spec["expect"].items():
            got = _lookup(doc, dotted)
            got = got["prefix"] if isinstance(got, dict) else got
            assert expr_equal(parse(got), parse(want)), (dotted, got)

    def test_config_echo(self):
        doc, _ = run(["star", "q", "p", "--chart", "flat2d", "--order", "4", "--seed", "7"])
        assert doc["config"]["order"] == 4 and doc["config"]["seed"] == 7
        assert doc["config"]["args"] == {"a": "q", "b": "p"}


class TestExitCodes:
    @pytest.mark.parametrize("argv", [
        [],
        ["star", "q", "p", "--chart", "nowhere"],
        ["star", "q", "(+ q", "--chart", "flat2d"],
        ["star", "q", "zz", "--chart", "flat2d"],
        ["star", "q", "p", "--chart", "flat2d", "--order", "3"],
        ["oscillator", "--n", "0", "--grid", "8:4"],
        ["purity", "/nonexistent/manifest.json"],
    ])
    def test_usage(self, argv):
        doc, code = run(argv)
        assert code == EXIT_USAGE and doc["error"]["kind"] == "usage"

    def test_parse_error_position(self):
        doc, _ = run(["star", "q", "(+ q", "--chart", "flat2d"])
        assert "position" in doc["error"]

    def test_domain_turning_point(self):
        doc, code = run(["chart", "--chart", "timeEnergy:(/ (^ q 2) 2)", "--point", "0,0"])
        assert code == EXIT_DOMAIN and doc["error"]["kind"] == "domain"

    def test_curvature_flat(self):
        doc, code = run(["curvature", "--chart", "polar4d"])
        assert code == EXIT_OK and doc["flat"]

    def test_curvature_generic_fails(self, tmp_path):
        from fedosovkit.connection import generic_connection
        from fedosovkit.symbolic import coordinates

        path = tmp_path / "c.json"
        path.write_text(json.dumps(generic_connection(coordinates("T H")).to_json()))
        _, code = run(["curvature", "--connection", str(path)])
        assert code == EXIT_FAIL


class TestPurity:
    def test_pure(self, manifests):
        doc, code = run(["purity", str(manifests["pure"])])
        assert code == EXIT_OK and doc["verdict"] == "pure"
        assert_allclose(doc["normalization"], 1.0, atol=1e-10)

    def test_mixed(self, manifests):
        doc, code = run(["purity", str(manifests["mixed"])])
        assert code == EXIT_FAIL and doc["verdict"] == "mixed"
        assert_allclose(doc["l2"], 1 / (4 * np.pi), rtol=1e-8)

    def test_unnormalized(self, manifests):
        doc, code = run(["purity", str(manifests["unnormalized"])])
        assert code == EXIT_DOMAIN and doc["error"]["type"] == "NormalizationError"


class TestCommands:
    def test_oscillator(self, tmp_path):
        doc, code = run(["oscillator", "--n", "2", "--hbar", "0.5",
                         "--grid-file", str(tmp_path / "w2.json")])
        assert code == EXIT_OK and doc["ode_residual"] == "0"
        assert_allclose(doc["energy"], 1.25)
        g = GridFunction.load(tmp_path / "w2.json")
        assert_allclose(g.integral(), 1.0, atol=1e-10)

    def test_chart_point(self):
        doc, code = run(["chart", "--chart", "oscillatorTH", "--point", "0.4,1.1"])
        assert code == EXIT_OK
        assert_allclose(doc["image"][1], (0.4 ** 2 + 1.1 ** 2) / 2)
        assert doc["roundtrip_error"] < 1e-12

    def test_theta(self):
        doc, code = run(["theta", "--chart", "oscillatorTH", "--order", "6"])
        table = {tuple(t["rst"]): parse(t["expr"]) for t in doc["theta"]}
        assert code == EXIT_OK and expr_equal(table[(1, 1, 0)], 1)

    def test_perturb_quartic(self):
        doc, code = run(["perturb", "--h1", "(^ q 4)", "--n", "1"])
        assert code == EXIT_OK
        assert_allclose(doc["E1"], 0.75 * 5, rtol=1e-8)
        assert any(w.startswith("SecularTermWarning") for w in doc["warnings"])

    def test_wigner_transform_csv(self, tmp_path):
        csv = tmp_path / "w.csv"
        doc, code = run(["wigner-transform", "--n", "1", "--grid", "8:128", "--csv", str(csv)])
        assert code == EXIT_OK and doc["properties"]["normalization_ok"]
        rows = np.loadtxt(csv, delimiter=",", skiprows=1)
        assert rows.shape == (128 * 128, 3)


class TestOutput:
    def test_deterministic(self):
        argv = ["eigencheck", "H", "(* (exp (* -2 (/ H hbar))) (cos T))", "(/ hbar 2)",
                "--chart", "oscillatorTH", "--order", "8", "--seed", "3"]
        assert _stable(run(argv)[0]) == _stable(run(argv)[0])

    def test_out_file(self, tmp_path, capsys):
        out = tmp_path / "r.json"
        code = main(["star", "q", "p", "--chart", "flat2d", "--out", str(out)])
        printed = json.loads(capsys.readouterr().out)
        assert code == EXIT_OK and json.loads(out.read_text()) == printed

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "fedosovkit.cli", "star", "q", "q",
                               "--chart", "flat2d"], capture_output=True, text=True, timeout=300)
        assert proc.returncode == EXIT_OK
        assert json.loads(proc.stdout)["imag"]["prefix"] == "0"
