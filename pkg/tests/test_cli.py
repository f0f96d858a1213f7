import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from photocount import io
from photocount.channels import apply_forward, composed_matrix
from photocount.cli import run
from photocount.distributions import DetectorModel, coherent_source


def _json(path):
    return json.loads(path.read_text())


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


class TestSimulate:
    def test_conservation_and_replay(self, tmp_path):
        args = ["simulate", "--coherent", "1", "--truncation", "20", "--efficiency", "0.2", "--trials", "10000", "--seed", "42"]
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run(args + ["--out", str(a)]) == 0
        assert run(args + ["--out", str(b), "--workers", "3"]) == 0
        assert sum(_json(a)["counts"]) == 10_000
        assert a.read_bytes() == b.read_bytes()
        jsonschema.validate(_json(a), io.HISTOGRAM_SCHEMA)

    def test_manifest(self, tmp_path):
        out = tmp_path / "h.json"
        det = _write(tmp_path / "det.json", {"efficiency": 0.5, "dark_mean": 0.1})
        assert run(["simulate", "--fock", "2", "--truncation", "5", "--detector", det, "--trials", "100", "--seed", "7", "--out", str(out)]) == 0
        manifest = _json(tmp_path / "h.manifest.json")
        assert manifest["command"] == "simulate"
        assert manifest["seed"] == 7
        assert manifest["inputs"] == [det]
        assert manifest["outputs"] == [str(out)]
        assert manifest["parameters"]["detector"] == {"efficiency": 0.5, "dark_mean": 0.1}
        assert manifest["duration_seconds"] >= 0
        # the manifest is enough to re-run the command
        again = tmp_path / "again.json"
        argv = manifest["argv"]
        argv[argv.index("--out") + 1] = str(again)
        assert run(argv) == 0
        assert again.read_bytes() == out.read_bytes()

    def test_flags_override_detector_file(self, tmp_path):
        det = _write(tmp_path / "det.json", {"efficiency": 0.5})
        out = tmp_path / "h.json"
        assert run(["simulate", "--fock", "2", "--truncation", "4", "--detector", det, "--efficiency", "1", "--trials", "50", "--out", str(out)]) == 0
        assert _json(out)["counts"][2] == 50


class TestExitCodes:
    def test_malformed_detector(self, tmp_path, capsys):
        bad = tmp_path / "det.json"
        bad.write_text("{efficiency: 0.5")
        assert run(["simulate", "--fock", "1", "--truncation", "3", "--detector", str(bad), "--trials", "10"]) == 2
        assert "input error" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert run(["forward", "--coherent", "1", "--truncation", "5", "--detector", str(tmp_path / "nope.json")]) == 2

    def test_bad_flags(self):
        with pytest.raises(SystemExit) as info:
            run(["simulate", "--trials", "ten"])
        assert info.value.code == 2

    def test_schema_violation(self, tmp_path):
        det = _write(tmp_path / "det.json", {"efficiency": "high"})
        assert run(["forward", "--coherent", "1", "--truncation", "5", "--detector", det]) == 3
        det = _write(tmp_path / "det2.json", {"efficiency": 0.5, "extra": 1})
        assert run(["forward", "--coherent", "1", "--truncation", "5", "--detector", det]) == 3

    def test_invariant_violation(self):
        assert run(["forward", "--coherent", "1", "--truncation", "5", "--efficiency", "1.5"]) == 4
        assert run(["posterior", "--fock", "1", "--truncation", "5", "--efficiency", "1", "--k", "3"]) == 4

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "photocount", "diagnose", "--efficiency", "0.5", "--truncation", "3"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["forward"]["role"] == "composed"
        assert json.loads(proc.stderr.strip().splitlines()[-1])["command"] == "diagnose"


class TestCommands:
    def test_forward_table(self, tmp_path):
        out = tmp_path / "f.json"
        assert run(["forward", "--coherent", "2", "--truncation", "30", "--efficiency", "0.5", "--out", str(out)]) == 0
        result = _json(out)
        jsonschema.validate(result, io.DISTRIBUTION_SCHEMA)
        expected = apply_forward(composed_matrix(DetectorModel(0.5), 30), coherent_source(2.0, 30)).probs
        np.testing.assert_allclose(result["probs"], expected, rtol=1e-15)
        lines = (tmp_path / "f.table.txt").read_text().splitlines()
        assert lines[0].startswith("#")
        rows = np.loadtxt(lines[1:])
        np.testing.assert_array_equal(rows[:, 0], np.arange(31))
        np.testing.assert_allclose(rows[:, 1], expected, rtol=1e-15)

    def test_posterior_delta_at_unit_efficiency(self, tmp_path):
        out = tmp_path / "q.json"
        assert run(["posterior", "--coherent", "1", "--truncation", "15", "--efficiency", "1", "--k", "3", "--out", str(out)]) == 0
        probs = np.array(_json(out)["probs"])
        assert probs[3] == pytest.approx(1.0, abs=1e-12)
        assert np.abs(np.delete(probs, 3)).max() <= 1e-12
        assert _json(out)["metadata"]["k"] == 3

    def test_invert_round_trip(self, tmp_path, capsys):
        det = DetectorModel(0.6, 0.1)
        exact = apply_forward(composed_matrix(det, 40), coherent_source(1.5, 40))
        data = _write(tmp_path / "p.json", exact.to_json())
        out = tmp_path / "s.json"
        assert run(["invert", "--input", data, "--efficiency", "0.6", "--dark-mean", "0.1", "--truncation", "10", "--out", str(out)]) == 0
        result = _json(out)
        assert result["diagnostics"]["physical"] is True
        np.testing.assert_allclose(result["candidate"], coherent_source(1.5, 10).probs, atol=1e-9)
        assert "WARNING" not in capsys.readouterr().err

    def test_invert_warns_on_noise(self, tmp_path, capsys):
        counts = [30, 25, 20, 10, 5, 5, 3, 1, 1]
        data = _write(tmp_path / "h.json", {"counts": counts})
        assert run(["invert", "--input", data, "--efficiency", "0.1", "--truncation", "12"]) == 0
        assert "WARNING: unphysical" in capsys.readouterr().err

    def test_diagnose_monotone(self, tmp_path):
        conds = []
        for eta in (0.9, 0.5, 0.2, 0.1):
            out = tmp_path / f"d{eta}.json"
            assert run(["diagnose", "--efficiency", str(eta), "--truncation", "20", "--out", str(out)]) == 0
            conds.append(_json(out)["condition_estimate"])
        assert all(a <= b for a, b in zip(conds, conds[1:]))

    def test_pipeline_closure(self, tmp_path):
        hist = tmp_path / "h.json"
        rec = tmp_path / "r.json"
        assert run(["simulate", "--coherent", "3", "--truncation", "30", "--efficiency", "0.5", "--trials", "20000", "--seed", "3", "--out", str(hist)]) == 0
        cfg = _write(tmp_path / "cfg.json", {"generations": 200, "population_size": 32})
        assert run(["reconstruct", "--input", str(hist), "--efficiency", "0.5", "--truncation", "25", "--config", cfg, "--seed", "3", "--out", str(rec)]) == 0
        result = _json(rec)
        jsonschema.validate(result["distribution"], io.DISTRIBUTION_SCHEMA)
        assert {"chi2", "chi2_threshold", "entropy", "converged", "seed"} <= set(result)
        assert result["seed"] == 3
        assert (tmp_path / "r.table.txt").exists()
        manifest = _json(tmp_path / "r.manifest.json")
        assert manifest["parameters"]["config"]["generations"] == 200
