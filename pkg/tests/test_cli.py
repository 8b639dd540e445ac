import io
import json
import shlex
import subprocess
import sys
from pathlib import Path

import pytest
from numpy.testing import assert_allclose

from oneshot_ea import cli
from oneshot_ea import entropy as en
from oneshot_ea import lemmas
from oneshot_ea.channels import identity_channel
from oneshot_ea.errors import SolverError
from oneshot_ea.states import max_entangled


@pytest.fixture
def files(tmp_path):
    paths = {
        "identity2": tmp_path / "identity2.json",
        "mes2": tmp_path / "mes2.json",
        "deph": tmp_path / "deph.json",
        "depol": tmp_path / "depol.json",
    }
    paths["identity2"].write_text(json.dumps(identity_channel(2).to_json()))
    paths["mes2"].write_text(json.dumps(max_entangled(2).to_json()))
    paths["deph"].write_text(json.dumps({"kind": "dephasing", "dim": 2, "param": 0.5}))
    paths["depol"].write_text(json.dumps({"kind": "depolarizing", "dim": 2, "param": 0.25}))
    return {k: str(v) for k, v in paths.items()}


README = Path(__file__).resolve().parent.parent / "README.md"


def readme_commands():
    """Every ``oneshot-ea ...`` line in the README, without trailing comments."""
    out = []
    for line in README.read_text(encoding="utf-8").splitlines():
        if line.startswith("oneshot-ea "):
            out.append(shlex.split(line, comments=True)[1:])
    return out


def run(argv):
    buf = io.StringIO()
    code = cli.main(argv, buf)
    return code, buf.getvalue()


class TestDocExamples:
    def test_entropy_hmin_mes(self, files):
        code, out = run(["entropy", "--state", files["mes2"], "--split", "A;B", "--kind", "hmin", "--eps", "0"])
        assert code == 0
        doc = json.loads(out)
        assert_allclose(doc["value"], -1.0, atol=1e-6)
        assert doc["validity"] == "ok"

    def test_bounds_eac(self, files):
        code, out = run(["bounds", "--channel", files["identity2"], "--mode", "eac", "--eps", "1e-4"])
        assert code == 0
        doc = json.loads(out)
        assert {"lower", "upper", "validity", "components", "derived_params"} <= set(doc)
        assert set(doc["validity"]) == {"lower", "upper"}

    def test_check_quick(self):
        code, out = run(["check", "--quick"])
        assert code == 0
        assert out.strip().endswith(f"{len(lemmas.SUITE)}/{len(lemmas.SUITE)}")

    def test_asymptotic(self, files):
        code, out = run(["asymptotic", "--channel", files["identity2"], "--budget", "100"])
        assert code == 0
        doc = json.loads(out)
        assert_allclose([doc["C_ea"], doc["Q_ea"]], [2.0, 1.0], atol=1e-4)

    def test_sweep_csv(self, files):
        code, out = run(["sweep-n", "--channel", files["deph"], "--nmax", "2"])
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "n,core_per_use,lower_per_use,upper_per_use,mutual_information"
        assert [ln.split(",")[0] for ln in lines[1:]] == ["1", "2"]
        assert_allclose(float(lines[1].split(",")[1]), 1.207799222, atol=1e-6)

    def test_decouple(self, files, tmp_path):
        summary = tmp_path / "summary.json"
        code, out = run(["decouple", "--channel", files["deph"], "--eps", "0.05", "--trials", "10",
                         "--seed", "11", "--summary", str(summary)])
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "trial,error,bound,decoder_fidelity"
        assert len(lines) == 11
        doc = json.loads(summary.read_text())
        assert doc["channel_uses"] == 2
        assert doc["min_within_bound"]

    def test_decouple_trailing_summary(self, files):
        code, out = run(["decouple", "--channel", files["deph"], "--trials", "3", "--seed", "1"])
        assert code == 0
        last = out.strip().splitlines()[-1]
        assert last.startswith("# summary: ")
        assert json.loads(last[len("# summary: "):])["trials"] == 3


class TestReadmeExamples:
    @pytest.mark.parametrize("argv", readme_commands(), ids=lambda a: " ".join(a[:3]))
    def test_runs(self, argv, files, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code, out = run(argv)
        assert code == 0
        if argv[0] == "check":
            n = len(lemmas.SUITE)
            lines = out.strip().splitlines()
            assert lines[-1] == f"ALL PASS: {n}/{n}"
            assert all(" PASS " in ln for ln in lines[:-1])

    def test_all_subcommands_documented(self):
        assert {a[0] for a in readme_commands()} == set(cli.COMMANDS)


class TestOutputFormat:
    def test_twelve_digits(self, files):
        _, out = run(["entropy", "--state", files["mes2"], "--split", "A;B", "--kind", "vn"])
        doc = json.loads(out)
        assert len(repr(doc["value"]).lstrip("-").replace(".", "").lstrip("0")) <= 12

    def test_fmt(self):
        assert cli._fmt(1 / 3) == 0.333333333333
        assert cli._fmt(float("inf")) == "inf"
        assert cli._fmt(float("nan")) == "nan"
        assert cli._fmt({"a": (1, 2.0)}) == {"a": [1, 2.0]}

    def test_deterministic(self, files):
        argv = ["decouple", "--channel", files["deph"], "--trials", "4", "--seed", "7"]
        assert run(argv)[1] == run(argv)[1]
        argv = ["bounds", "--channel", files["depol"], "--mode", "eaq", "--eps", "0.1",
                "--optimize", "--budget", "20", "--seed", "3"]
        assert run(argv)[1] == run(argv)[1]


class TestExitCodes:
    def test_invalid_eps(self, files):
        code, out = run(["entropy", "--state", files["mes2"], "--split", "A;B", "--kind", "hmin", "--eps", "1.5"])
        assert code == 2
        assert json.loads(out)["validity"] == "smoothing_out_of_range"

    def test_missing_file(self, capsys):
        code, out = run(["entropy", "--state", "no_such.json", "--split", "A;B", "--kind", "hmin"])
        assert code == 2
        assert out == ""
        assert "error" in capsys.readouterr().err

    def test_bad_split(self, files):
        assert run(["entropy", "--state", files["mes2"], "--split", "Q;B", "--kind", "hmin"])[0] == 2

    def test_argparse_error(self, capsys):
        assert run(["bounds", "--mode", "eaq"])[0] == 2
        assert run(["frobnicate"])[0] == 2

    def test_help(self, capsys):
        assert run(["--help"])[0] == 0

    def test_solver_failure(self, files, monkeypatch):
        def boom(*a, **k):
            raise SolverError("did not converge")

        monkeypatch.setattr(en, "h_min_smooth", boom)
        assert run(["entropy", "--state", files["mes2"], "--split", "A;B", "--kind", "hmin"])[0] == 3

    def test_check_failure(self, monkeypatch):
        fake = [lemmas.LemmaCheck("chain_rule", False, 3, -0.1)]
        monkeypatch.setattr(lemmas, "run_suite", lambda *a, **k: fake)
        code, out = run(["check", "--quick"])
        assert code == 1
        assert "FAILURES: 0/1" in out


class TestRunConfig:
    def test_round_trip(self):
        ns = cli.build_parser().parse_args(["bounds", "--channel", "c.json", "--mode", "eac", "--eps", "0.01"])
        cfg = cli.RunConfig.from_args(ns)
        back = cli.RunConfig.from_json(json.loads(json.dumps(cfg.to_json())))
        assert back == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            cli.RunConfig.from_json({"command": "check", "colour": "blue"})


class TestEntryPoint:
    def test_module_invocation(self, files):
        proc = subprocess.run([sys.executable, "-m", "oneshot_ea", "entropy", "--state", files["mes2"],
                               "--split", "A;", "--kind", "vn"], capture_output=True, text=True, check=False)
        assert proc.returncode == 0
        assert_allclose(json.loads(proc.stdout)["value"], 1.0, atol=1e-12)
