import json
import subprocess
import sys

import numpy as np
import pytest

from sphereforge import records
from sphereforge.cli import main
from sphereforge.design_weighted import evenly_spaced_circle


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def circle5(tmp_path):
    path = tmp_path / "circle5.json"
    path.write_text(records.dumps(records.wrap("design", evenly_spaced_circle(5).to_record())))
    return path


def read(path):
    return json.loads(path.read_text())


class TestDesignUniform:
    def test_antipodal_start(self, tmp_path):
        start = tmp_path / "start.txt"
        start.write_text("1 0\n-1 0\n")
        out = tmp_path / "d.json"
        assert run("design-uniform", "--d", 2, "--t", 1, "--start", start, "--out", out) == 0
        rec = read(out)
        assert rec["kind"] == "design" and rec["format_version"] == 1
        assert rec["solve_report"]["converged"]
        assert max(rec["solve_report"]["residuals"].values()) == 0.0
        assert rec["config"]["d"] == 2 and "start_sha256" in rec["inputs"]

    def test_random_start_and_report(self, tmp_path):
        out, rep = tmp_path / "d.json", tmp_path / "r.json"
        assert run("design-uniform", "--d", 3, "--t", 3, "--r", 500, "--seed", 2, "--out", out, "--report", rep) == 0
        assert read(out)["seed"] == 2
        assert read(rep)["kind"] == "solve-report"
        assert run("verify", out, "--out", tmp_path / "v.json") == 0

    def test_even_t(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run("design-uniform", "--d", 3, "--t", 2, "--r", 50, "--out", tmp_path / "x")
        assert exc.value.code == 2

    def test_nonconvergence_exit(self, tmp_path):
        args = ("design-uniform", "--d", 3, "--t", 3, "--r", 60, "--max-iterations", 0, "--no-gauss-newton")
        assert run(*args, "--out", tmp_path / "x.json") == 1
        assert not read(tmp_path / "x.json")["solve_report"]["converged"]


class TestDesignWeighted:
    def test_antipodal(self, tmp_path):
        pts = tmp_path / "p.txt"
        pts.write_text("# antipodal\n1, 0\n-1, 0\n")
        out = tmp_path / "w.json"
        assert run("design-weighted", "--points", pts, "--k", 2, "--out", out) == 0
        rec = read(out)
        assert rec["kind"] == "design"
        np.testing.assert_allclose(rec["weights"], [0.5, 0.5], atol=1e-12)

    def test_certificate(self, tmp_path):
        pts = tmp_path / "p.txt"
        pts.write_text("1 0\n0 1\n")
        out = tmp_path / "c.json"
        assert run("design-weighted", "--points", pts, "--k", 2, "--out", out) == 0
        rec = read(out)
        assert rec["kind"] == "certificate"
        assert sorted((tuple(a), c) for a, c in rec["terms"]) == [((0, 1), 1.0), ((1, 0), 1.0)]
        assert run("verify", out, "--out", tmp_path / "v.json") == 0

    @pytest.mark.parametrize("text", ["1 0\n0 1 0\n", "1 zero\n", "", "1 0\n0 0.5\n"])
    def test_malformed(self, tmp_path, capsys, text):
        pts = tmp_path / "bad.txt"
        pts.write_text(text)
        assert run("design-weighted", "--points", pts, "--k", 2, "--out", tmp_path / "o") == 2
        assert "error" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert run("design-weighted", "--points", tmp_path / "nope", "--k", 2, "--out", tmp_path / "o") == 2


class TestVerify:
    def test_circle_passes_at_three(self, circle5, tmp_path):
        out = tmp_path / "v.json"
        assert run("verify", circle5, "--t", 3, "--out", out) == 0
        rec = read(out)
        assert rec["passed"] and set(rec["sphere_residuals"]) == {"1", "3"}

    def test_circle_fails_at_five(self, circle5, tmp_path):
        out = tmp_path / "v.json"
        assert run("verify", circle5, "--t", 5, "--out", out) == 1
        rec = read(out)
        assert rec["sphere_residuals"]["5"] > 1e-3 and rec["gaussian_residuals"]["5"] > 1e-3

    def test_inconsistent_dimension(self, circle5, tmp_path):
        rec = json.loads(circle5.read_text())
        rec["d"] = 3
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(rec))
        assert run("verify", bad, "--t", 3) == 2

    def test_unknown_kind(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text(records.dumps(records.wrap("mystery", {})))
        assert run("verify", path) == 2

    def test_both_degrees(self, circle5):
        with pytest.raises(SystemExit) as exc:
            run("verify", circle5, "--t", 3, "--k", 4)
        assert exc.value.code == 2


class TestInstanceAndSample:
    def test_header_only(self, circle5, tmp_path):
        meta, csv = tmp_path / "i.json", tmp_path / "s.csv"
        assert run("instance", "--design", circle5, "--n", 10, "--seed", 1, "--count", 0, "--out", meta, "--samples", csv) == 0
        assert csv.read_text() == ",".join(f"x_{i}" for i in range(1, 11)) + ",y\n"
        assert run("verify", meta, "--out", tmp_path / "v.json") == 0

    def test_samples(self, circle5, tmp_path):
        meta, csv = tmp_path / "i.json", tmp_path / "s.csv"
        assert run("instance", "--design", circle5, "--n", 4, "--count", 100, "--out", meta, "--samples", csv) == 0
        data = np.loadtxt(csv, delimiter=",", skiprows=1)
        assert data.shape == (100, 5)
        assert set(np.unique(data[:, -1])) <= {-1.0, 1.0}
        out = tmp_path / "t.csv"
        assert run("sample", "--instance", meta, "--count", 100, "--out", out) == 0
        assert out.read_text() == csv.read_text()

    def test_null(self, tmp_path):
        out = tmp_path / "n.csv"
        assert run("sample", "--null", "--n", 3, "--count", 10, "--out", out) == 0
        assert len(out.read_text().splitlines()) == 11
        with pytest.raises(SystemExit):
            run("sample", "--null", "--count", 10, "--out", out)

    def test_small_n(self, circle5, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run("instance", "--design", circle5, "--n", 1, "--out", tmp_path / "i.json")
        assert exc.value.code == 2


class TestSq:
    @pytest.fixture
    def instance(self, circle5, tmp_path):
        meta = tmp_path / "inst.json"
        assert run("instance", "--design", circle5, "--n", 4, "--seed", 3, "--out", meta) == 0
        return meta

    def test_low_and_top_degree(self, instance, tmp_path):
        out = tmp_path / "p.csv"
        assert run("sq", "--instance", instance, "--degrees", "1-3,5", "--budget", 300_000, "--runs", 2, "--out", out) == 0
        rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
        detections = {int(r[1]): int(r[3]) for r in rows}
        assert detections == {1: 0, 2: 0, 3: 0, 5: 2}

    def test_adversarial_hides_low_degrees(self, instance, tmp_path):
        out, q = tmp_path / "p.csv", tmp_path / "q.csv"
        assert run("sq", "--instance", instance, "--degrees", "1-3", "--mode", "adversarial", "--out", out, "--queries", q) == 0
        assert all(line.split(",")[3] == "0" for line in out.read_text().splitlines()[1:])
        assert all(float(line.split(",")[2]) == 0.0 for line in q.read_text().splitlines()[1:] if "*" not in line)

    def test_unknown_mode(self, instance, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run("sq", "--instance", instance, "--degrees", "1", "--mode", "psychic", "--out", tmp_path / "o")
        assert exc.value.code == 2

    def test_power_null(self, tmp_path):
        out = tmp_path / "p.csv"
        assert run("power", "--n", 4, "--degrees", "1,2", "--budget", 2000, "--runs", 3, "--out", out) == 0
        assert out.read_text().splitlines()[0] == "design,degree,runs,detections,rate"


class TestReproducibility:
    def _artifacts(self, tmp_path, tag, circle5, threads_args, env=None):
        d = tmp_path / tag
        d.mkdir()
        cmds = [
            ["design-uniform", "--d", "3", "--t", "3", "--r", "300", "--seed", "4", "--out", d / "u.json", "--report", d / "ur.json"],
            ["design-weighted", "--points", circle5, "--k", "4", "--out", d / "w.json"],
            ["verify", circle5, "--t", "5", "--out", d / "v.json"],
            ["instance", "--design", circle5, "--n", "6", "--seed", "7", "--count", "70000", "--out", d / "i.json", "--samples", d / "s.csv"],
            ["sample", "--null", "--n", "3", "--count", "70000", "--seed", "2", "--out", d / "n.csv"],
            ["sq", "--instance", d / "i.json", "--degrees", "1-3", "--budget", "3000", "--runs", "3", "--out", d / "sq.csv", "--queries", d / "q.csv", "--report", d / "sq.json"],
            ["power", "--design", circle5, "--n", "6", "--degrees", "1,3", "--budget", "3000", "--runs", "3", "--out", d / "pw.csv"],
        ]
        for c in cmds:
            argv = [sys.executable, "-m", "sphereforge", *map(str, c), *threads_args]
            code = subprocess.run(argv, env=env, capture_output=True, text=True).returncode
            assert code in (0, 1)
        return {p.name: p.read_bytes() for p in sorted(d.iterdir())}

    def test_byte_identical(self, tmp_path, circle5, monkeypatch):
        import os

        base = dict(os.environ)
        base.pop("SPHEREFORGE_THREADS", None)
        one = self._artifacts(tmp_path, "a", circle5, ["--threads", "1"], base)
        three = self._artifacts(tmp_path, "b", circle5, ["--threads", "3"], base)
        env = dict(base, SPHEREFORGE_THREADS="2")
        viaenv = self._artifacts(tmp_path, "c", circle5, [], env)
        assert len(one) == 11
        assert one == three == viaenv


def test_version_and_module_entry():
    out = subprocess.run([sys.executable, "-m", "sphereforge", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("sphereforge ")


def test_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SPHEREFORGE_THREADS", "many")
    assert run("sample", "--null", "--n", 2, "--count", 1, "--out", tmp_path / "x.csv") == 2
