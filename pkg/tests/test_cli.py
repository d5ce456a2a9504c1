import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from covmatch.cli import main, parse_grid
from covmatch.modelfile import dumps, format_float, load_model, parse_model
from covmatch.prob import ModelError

MODELS = Path(__file__).resolve().parents[1] / "models"
PERFECT = str(MODELS / "perfect_gender.json")
NOISY = str(MODELS / "noisy_gender.json")
FLAT = str(MODELS / "uninformative.json")
THREE = str(MODELS / "three_ethnicity.json")


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def run_json(argv, capsys):
    code, out, err = run(argv, capsys)
    assert code == 0, err
    return json.loads(out), out


class TestModelFile:
    def test_round_trip_exact(self, tmp_path):
        doc = json.loads(Path(THREE).read_text())
        doc["probe_prior"] = [0.1 + 0.2, 0.3, 0.4 - 1e-10]
        mf = parse_model(doc)
        back = json.loads(dumps(mf.raw))
        assert back == doc
        assert mf.model.probe_prior.probs.sum() == pytest.approx(1.0, abs=1e-15)

    def test_names_failing_invariant(self):
        doc = json.loads(Path(PERFECT).read_text())
        doc["gallery_channel"][1] = [0.5, 0.6]
        with pytest.raises(ModelError, match="gallery_channel: channel row 'M'"):
            parse_model(doc)

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.pop("labels"),
            lambda d: d.update(probe_prior=[1.0]),
            lambda d: d.update(labels=["F", "F"]),
            lambda d: d.update(imposter_prior=["a", "b"]),
            lambda d: d.update(probe_channel=[[1.0, 0.0]]),
        ],
    )
    def test_schema_violations(self, mutate):
        doc = json.loads(Path(PERFECT).read_text())
        mutate(doc)
        with pytest.raises(ModelError):
            parse_model(doc)

    def test_name(self):
        assert load_model(PERFECT).name == "perfect gender classifiers"

    def test_float_format(self):
        assert format_float(1 / 3) == "0.33333333333333331"
        assert format_float(0.0) == "0.0"
        assert format_float(1e-20) == "9.9999999999999995e-21"
        assert float(format_float(0.1 + 0.2)) == 0.1 + 0.2


class TestRetrievalCommand:
    def test_perfect_n2(self, capsys):
        rep, _ = run_json(["retrieval", PERFECT, "--n", "2"], capsys)
        assert rep["analytic_error"] == 0.25
        assert rep["policy"]["rule"] == [[1.0, 0.0], [0.0, 1.0]]
        assert rep["per_probe_correct"] == {"F": 0.75, "M": 0.75}

    def test_n1(self, capsys):
        rep, out = run_json(["retrieval", PERFECT, "--n", "1"], capsys)
        assert rep["analytic_error"] == 0.0
        assert '"analytic_error": 0.0' in out

    def test_uniform_policy(self, capsys):
        rep, _ = run_json(["retrieval", PERFECT, "--n", "2", "--policy", "uniform"], capsys)
        assert rep["analytic_error"] == pytest.approx(0.625)

    def test_policy_file(self, tmp_path, capsys):
        pf = tmp_path / "p.json"
        pf.write_text(json.dumps({"labels": ["F", "M"], "rule": [[1, 0], [0, 1]]}))
        rep, _ = run_json(
            ["retrieval", NOISY, "--n", "2", "--policy", "file", "--policy-file", str(pf), "--empty-choice", "uniform"],
            capsys,
        )
        assert rep["analytic_error"] == pytest.approx(0.38, abs=1e-12)

    def test_simulate_repeatable(self, capsys):
        argv = ["retrieval", PERFECT, "--n", "2", "--simulate", "1000000", "--seed", "7"]
        rep, first = run_json(argv, capsys)
        _, second = run_json(argv, capsys)
        assert first == second
        assert rep["simulation"]["within_ci"] is True
        assert rep["simulation"]["trials"] == 1_000_000

    def test_schema_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"labels": ["F"]}')
        code, _, err = run(["retrieval", str(bad), "--n", "2"], capsys)
        assert code == 2 and "missing keys" in err
        bad.write_text("{not json")
        assert run(["retrieval", str(bad), "--n", "2"], capsys)[0] == 2

    def test_domain_exit_code(self, capsys):
        assert run(["retrieval", PERFECT, "--n", "0"], capsys)[0] == 3

    def test_io_exit_code(self, tmp_path, capsys):
        assert run(["retrieval", str(tmp_path / "missing.json"), "--n", "2"], capsys)[0] == 4


class TestVerifyCommand:
    def test_perfect(self, capsys):
        rep, _ = run_json(["verify", PERFECT], capsys)
        assert rep["eer"] == pytest.approx(1 / 3, abs=1e-15)
        assert sum(rep["accept"], []) == pytest.approx([2 / 3, 0.0, 0.0, 2 / 3], abs=1e-12)
        assert rep["joint_match"] == [[0.5, 0.0], [0.0, 0.5]]

    def test_uninformative(self, capsys):
        assert run_json(["verify", FLAT], capsys)[0]["eer"] == pytest.approx(0.5, abs=1e-12)

    def test_noisy(self, capsys):
        assert run_json(["verify", NOISY], capsys)[0]["eer"] == pytest.approx(0.403226, abs=1e-6)

    def test_beta(self, capsys):
        rep, _ = run_json(["verify", THREE, "--beta", "2"], capsys)
        assert rep["far"] == pytest.approx(2 * rep["frr"], abs=1e-12)

    def test_simulate(self, capsys):
        rep, _ = run_json(["verify", PERFECT, "--simulate", "100000", "--seed", "3"], capsys)
        sim = rep["simulation"]
        assert sim["far"]["analytic"] == pytest.approx(1 / 3)
        assert sim["far"]["within_ci"] and sim["frr"]["within_ci"]

    def test_bad_beta(self, capsys):
        assert run(["verify", PERFECT, "--beta", "-1"], capsys)[0] == 3


class TestGenderCommand:
    def test_verify(self, capsys):
        rep, _ = run_json(["gender", "verify", "0", "0"], capsys)
        assert rep["eer"] == pytest.approx(1 / 3) and rep["p_accept"] == pytest.approx(2 / 3)

    def test_match1n(self, capsys):
        rep, _ = run_json(["gender", "match1n", "--n", "1", "--check"], capsys)
        assert rep["error"] == 0.0 and rep["check"]["abs_diff"] == 0.0

    def test_match12(self, capsys):
        rep, _ = run_json(["gender", "match12", "0.1", "0.2", "--check"], capsys)
        assert rep["p_same"] == 1.0 and rep["error"] == pytest.approx(0.38)
        assert rep["check"]["abs_diff"] <= 1e-9

    def test_errors(self, capsys):
        assert run(["gender", "match12", "1.5", "0"], capsys)[0] == 3
        assert run(["gender", "match1n"], capsys)[0] == 3
        assert run(["gender", "match1n", "0.1", "0", "--n", "3"], capsys)[0] == 3


class TestSweep:
    def read(self, path):
        raw = Path(path).read_bytes()
        assert b"\r" not in raw
        return list(csv.reader(raw.decode("utf-8").splitlines()))

    def test_n_sweep(self, tmp_path, capsys):
        out = tmp_path / "n.csv"
        code, _, _ = run(["sweep", "n", "--model", PERFECT, "--n", "1:12", "--out", str(out)], capsys)
        assert code == 0
        rows = self.read(out)
        assert rows[0] == ["n", "analytic_error"]
        for n_s, err in rows[1:]:
            n = int(n_s)
            assert float(err) == pytest.approx(1 - (2 - 0.5 ** (n - 1)) / n, abs=1e-12)
        assert len(rows) == 13

    def test_noise_sweep(self, tmp_path, capsys):
        out = tmp_path / "e.csv"
        assert run(["sweep", "noise", "--out", str(out)], capsys)[0] == 0
        rows = self.read(out)
        assert rows[0] == ["e_f", "e_v", "eer", "far", "frr"]
        assert len(rows) == 37
        first = dict(zip(rows[0], rows[1]))
        assert float(first["e_f"]) == 0 and float(first["eer"]) == pytest.approx(1 / 3, abs=1e-15)
        assert first["eer"] == "0.33333333333333331"

    def test_retrieval_noise_sweep_with_sim(self, tmp_path, capsys):
        out = tmp_path / "r.csv"
        argv = ["sweep", "noise", "--task", "retrieval", "--n", "2", "--e-f", "0.1", "--e-v", "0.2",
                "--empty-choice", "uniform", "--simulate", "20000", "--out", str(out)]
        assert run(argv, capsys)[0] == 0
        rows = self.read(out)
        assert rows[0] == ["e_f", "e_v", "n", "analytic_error", "simulated_error", "std_error"]
        assert float(rows[1][3]) == pytest.approx(0.38, abs=1e-12)

    def test_empty_grid(self, tmp_path, capsys):
        out = tmp_path / "empty.csv"
        assert run(["sweep", "n", "--model", PERFECT, "--n", "", "--out", str(out)], capsys)[0] == 0
        assert out.read_text() == "n,analytic_error\n"

    def test_unwritable(self, tmp_path, capsys):
        out = tmp_path / "no" / "such" / "dir.csv"
        assert run(["sweep", "noise", "--out", str(out)], capsys)[0] == 4

    def test_bad_grid(self, tmp_path, capsys):
        assert run(["sweep", "noise", "--e-f", "x:y", "--out", str(tmp_path / "a.csv")], capsys)[0] == 2


def test_parse_grid():
    assert parse_grid("0:0.5:0.1") == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
    assert parse_grid("1:4", integer=True) == [1, 2, 3, 4]
    assert parse_grid("0.1, 0.3") == [0.1, 0.3]
    assert parse_grid("  ") == []


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "covmatch", "gender", "verify", "0", "0"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["eer"] == pytest.approx(1 / 3)
