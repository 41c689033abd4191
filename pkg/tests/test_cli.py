import subprocess
import sys

import pytest

from ghdag.cli import EXIT_DATA, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def generated(tmp_path, capsys):
    code, _, _ = run(capsys, "generate", "--model", "poisson", "--p", 6, "--n", 500, "--seed", 3, "--out", tmp_path / "m")
    assert code == EXIT_OK
    return tmp_path


def test_round_trip(generated, capsys):
    t = generated
    code, _, _ = run(capsys, "learn", "--data", t / "m.csv", "--skeleton", "oracle", "--skeleton-file", t / "m.edges",
                     "--families", "true", "--out", t / "est.edges", "--trace", t / "trace.csv")
    assert code == EXIT_OK
    assert "# family[0]=poisson" in (t / "trace.csv").read_text()
    for mode in ("dag", "mec"):
        code, out, _ = run(capsys, "eval", "--true", t / "m.edges", "--est", t / "est.edges", "--mode", mode)
        assert code == EXIT_OK
        metrics = dict(line.split("=") for line in out.splitlines())
        assert 0 <= float(metrics["precision"]) <= 1 and 0 <= float(metrics["recall"]) <= 1
        assert len(metrics["precision"].split(".")[1]) == 6


def test_eval_examples(tmp_path, capsys):
    (tmp_path / "a").write_text("0\t1\n1\t2\n")
    (tmp_path / "b").write_text("2\t1\n1\t0\n")
    assert run(capsys, "eval", "--true", tmp_path / "a", "--est", tmp_path / "a")[1].startswith("precision=1.000000")
    assert run(capsys, "eval", "--true", tmp_path / "a", "--est", tmp_path / "b", "--mode", "mec")[1].startswith("precision=1.000000")
    assert run(capsys, "eval", "--true", tmp_path / "a", "--est", tmp_path / "b")[1].startswith("precision=0.000000")


def test_learn_defaults_and_skeleton_file(generated, capsys):
    t = generated
    (t / "skel.edges").write_text("0\t1\n2\t3\n")
    code, _, _ = run(capsys, "learn", "--data", t / "m.csv", "--skeleton", "file", "--skeleton-file", t / "skel.edges",
                     "--out", t / "e.edges", "--trace", t / "tr.csv")
    assert code == EXIT_OK
    text = (t / "tr.csv").read_text()
    assert "# r=2\n# n_min=1\n" in text
    edges = {tuple(sorted(map(int, l.split("\t")))) for l in (t / "e.edges").read_text().splitlines() if not l.startswith("#")}
    assert edges == {(0, 1), (2, 3)}


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["generate", "--p", "5"],
        ["generate", "--model", "gauss", "--p", "5", "--n", "10", "--out", "x"],
        ["bench", "--p", "a,b", "--out", "x"],
    ],
)
def test_usage_errors(argv, capsys):
    assert run(capsys, *argv)[0] == EXIT_USAGE


def test_learn_usage_errors(generated, capsys):
    t = generated
    base = ["learn", "--data", t / "m.csv", "--out", t / "e.edges"]
    assert run(capsys, *base, "--r", 1)[0] == EXIT_USAGE
    assert run(capsys, *base, "--nmin", 0)[0] == EXIT_USAGE
    assert run(capsys, *base, "--families", "bogus")[0] == EXIT_USAGE
    assert run(capsys, *base, "--skeleton", "oracle")[0] == EXIT_USAGE


def test_data_errors(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("a,b\n1,-2\n")
    code, _, err = run(capsys, "learn", "--data", tmp_path / "bad.csv", "--out", tmp_path / "e")
    assert code == EXIT_DATA and "bad.csv:2" in err
    assert run(capsys, "learn", "--data", tmp_path / "missing.csv", "--out", tmp_path / "e")[0] == EXIT_DATA
    (tmp_path / "g").write_text("0\t1\n1\t0\n")
    assert run(capsys, "eval", "--true", tmp_path / "g", "--est", tmp_path / "g")[0] == EXIT_DATA


def test_sweep_spec_error_before_work(tmp_path, capsys):
    (tmp_path / "s.spec").write_text("model = poisson\np = 5\n")
    assert run(capsys, "sweep", tmp_path / "s.spec")[0] == EXIT_USAGE
    assert not (tmp_path / "out.csv").exists()


def test_internal_error_code(monkeypatch, generated, capsys):
    from ghdag import experiments

    def boom(*a, **k):
        raise experiments.InvariantError("broken")

    monkeypatch.setattr(experiments, "cmd_eval", boom)
    t = generated
    code, _, err = run(capsys, "eval", "--true", t / "m.edges", "--est", t / "m.edges")
    assert code == EXIT_INTERNAL and "internal error" in err


def test_ingest(tmp_path, capsys):
    names = [f"v{i}" for i in range(24)]
    (tmp_path / "r.csv").write_text(",".join(names) + "\n" + ",".join(["1"] * 24) + "\n")
    code, out, _ = run(capsys, "ingest", "--data", tmp_path / "r.csv", "--drop", ",".join(names[:6]), "--out", tmp_path / "o.csv")
    assert code == EXIT_OK and out == "n=1\np=18\n"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ghdag.cli", "generate", "--p", "3", "--n", "20", "--out", str(tmp_path / "g")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "g.csv").read_text().startswith("X0,X1,X2\n")
