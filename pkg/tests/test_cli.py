import json
import shutil
import subprocess
import sys

import pytest

from lsbd.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def perfect_csv(tmp_path, capsys):
    path = str(tmp_path / "perfect.csv")
    assert run(capsys, "gen", "--grid", "16,16", "--oracle", "perfect", "--omega", "1,3", "--seed", "1",
               "--out", path)[0] == 0
    return path


def test_gen_writes_csv_and_manifest(tmp_path, capsys):
    out = tmp_path / "g.csv"
    code, _, _ = run(capsys, "gen", "--grid", "4,4", "--oracle", "perfect", "--omega", "1,1", "--out", str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[:2] == ["# lsbd-grid: 4,4", "# dim: 4"]
    assert len(lines) == 18
    manifest = json.loads((tmp_path / "g.csv.manifest.json").read_text())
    assert manifest["command"] == "gen"
    assert manifest["seed"] == 0
    assert manifest["argv"][-2:] == ["--seed", "0"]
    for key in ("params", "version", "inputs", "outputs", "duration_s"):
        assert key in manifest


def test_gen_seed_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LSBD_SEED", "17")
    run(capsys, "gen", "--grid", "4", "--oracle", "random", "--out", str(tmp_path / "r.csv"))
    assert json.loads((tmp_path / "r.csv.manifest.json").read_text())["seed"] == 17


@pytest.mark.parametrize(
    "argv",
    [
        ["gen", "--grid", "4,x", "--oracle", "perfect", "--out", "o.csv"],
        ["gen", "--grid", "4", "--oracle", "bogus", "--out", "o.csv"],
        ["gen", "--grid", "64", "--oracle", "sum_coupled", "--out", "o.csv"],
        ["learn", "--grid", "8,8", "--pairs", "0", "--out-dir", "d"],
        ["learn", "--grid", "8,8", "--out-dir", "d"],
        ["metric", "--out", "r.json"],
    ],
)
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    code, _, err = run(capsys, *argv)
    assert code == 2
    if "sum_coupled" in argv:
        assert "sum_coupled requires K=2" in err
    if "0" in argv:
        assert "no constraints" in err


def test_gen_is_byte_identical_for_same_seed(tmp_path, capsys):
    args = ["gen", "--grid", "8,8", "--oracle", "noisy", "--noise", "0.1", "--seed", "3"]
    run(capsys, *args, "--out", str(tmp_path / "a.csv"))
    run(capsys, *args, "--out", str(tmp_path / "b.csv"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_metric_perfect_fixture(perfect_csv, tmp_path, capsys):
    out = tmp_path / "r.json"
    code, stdout, _ = run(capsys, "metric", perfect_csv, "--out", str(out))
    assert code == 0
    report = json.loads(out.read_text())
    assert report["d_lsbd"] <= 1e-9
    assert float(stdout.splitlines()[-1]) == report["d_lsbd"]
    assert [abs(s["omega_star"]) for s in report["per_subgroup"]] == [1, 3]


def test_metric_sum_coupled_fixture(tmp_path, capsys):
    csv = str(tmp_path / "sc.csv")
    run(capsys, "gen", "--grid", "64,64", "--oracle", "sum_coupled", "--out", csv)
    code, stdout, _ = run(capsys, "metric", csv, "--out", str(tmp_path / "r.json"))
    assert code == 0
    assert float(stdout.splitlines()[-1]) == pytest.approx(0.5, abs=1e-6)


def test_metric_restricted_omega_range(tmp_path, capsys):
    csv = str(tmp_path / "w3.csv")
    run(capsys, "gen", "--grid", "32", "--oracle", "perfect", "--omega", "3", "--out", csv)
    _, full, _ = run(capsys, "metric", csv, "--out", str(tmp_path / "a.json"))
    _, narrow, _ = run(capsys, "metric", csv, "--omega-range", "0:0", "--out", str(tmp_path / "b.json"))
    assert float(narrow.splitlines()[-1]) > 0
    assert float(narrow.splitlines()[-1]) > float(full.splitlines()[-1])
    assert json.loads((tmp_path / "b.json").read_text())["omega_range"] == [0, 0]


def test_metric_pretty_and_lambda(perfect_csv, tmp_path, capsys):
    code, stdout, _ = run(capsys, "metric", perfect_csv, "--normalize", "lambda", "--pretty",
                          "--out", str(tmp_path / "r.json"))
    assert code == 0
    assert "omega*" in stdout
    assert json.loads((tmp_path / "r.json").read_text())["normalization"] == "lambda"


def test_metric_partial_grid_exits_3(perfect_csv, tmp_path, capsys):
    lines = open(perfect_csv).read().splitlines()
    partial = tmp_path / "partial.csv"
    partial.write_text("\n".join(lines[:-1]) + "\n")
    code, _, err = run(capsys, "metric", str(partial), "--out", str(tmp_path / "r.json"))
    assert code == 3
    assert "incomplete factorial grid" in err


def test_metric_parse_error_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("# lsbd-grid: 2\n# dim: 2\n0,1.0,oops\n1,0.0,1.0\n")
    code, _, err = run(capsys, "metric", str(bad), "--out", str(tmp_path / "r.json"))
    assert code == 2
    assert "line 3" in err
    assert run(capsys, "metric", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "r.json"))[0] == 2


def test_metric_collection(tmp_path, capsys):
    coll = tmp_path / "objects"
    coll.mkdir()
    for seed in (1, 2):
        run(capsys, "gen", "--grid", "8,8", "--oracle", "noisy", "--noise", "0.1", "--seed", str(seed),
            "--out", str(coll / f"obj{seed}.csv"))
    code, stdout, _ = run(capsys, "metric", "--collection", str(coll), "--out", str(tmp_path / "c.json"))
    assert code == 0
    payload = json.loads((tmp_path / "c.json").read_text())
    assert [o["name"] for o in payload["objects"]] == ["obj1.csv", "obj2.csv"]
    mean = sum(o["d_lsbd"] for o in payload["objects"]) / 2
    assert payload["d_lsbd"] == pytest.approx(mean)
    assert float(stdout.splitlines()[-1]) == payload["d_lsbd"]


def test_replay_gen_and_metric_byte_identical(perfect_csv, tmp_path, capsys):
    saved = tmp_path / "saved.csv"
    shutil.copy(perfect_csv, saved)
    assert run(capsys, "replay", perfect_csv + ".manifest.json")[0] == 0
    assert saved.read_bytes() == open(perfect_csv, "rb").read()

    report = str(tmp_path / "r.json")
    run(capsys, "metric", perfect_csv, "--out", report)
    first = open(report, "rb").read()
    assert run(capsys, "replay", report + ".manifest.json")[0] == 0
    assert open(report, "rb").read() == first


def test_learn_paths_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    code, stdout, _ = run(capsys, "learn", "--grid", "8,8", "--paths", "4", "--path-len", "40", "--step", "1",
                          "--epochs", "300", "--seed", "2", "--out-dir", str(out))
    assert code == 0
    for name in ("embeddings.csv", "train_log.jsonl", "metric.json", "manifest.json"):
        assert (out / name).exists()
    metric = json.loads((out / "metric.json").read_text())
    assert metric["n_components"] == 1
    assert float(stdout.splitlines()[-1]) == metric["d_lsbd"] < 1e-3
    log_lines = (out / "train_log.jsonl").read_text().splitlines()
    assert len(log_lines) == 300
    assert set(json.loads(log_lines[0])) == {"epoch", "mean_loss", "skipped_batches"}


def test_learn_disconnected_paths_exit_4(tmp_path, capsys):
    code, _, err = run(capsys, "learn", "--grid", "16,16", "--paths", "2", "--path-len", "10", "--step", "1",
                       "--no-bridge", "--epochs", "5", "--out-dir", str(tmp_path / "run"))
    assert code == 4
    assert "components" in err


def test_learn_single_pair_warns(tmp_path, capsys, caplog):
    code, stdout, _ = run(capsys, "learn", "--grid", "8,8", "--pairs", "1", "--epochs", "50",
                            "--out-dir", str(tmp_path / "run"))
    assert code == 0
    assert "63 components" in caplog.text
    assert float(stdout.splitlines()[-1]) > 0.1


def test_learn_pairs_with_bridge_connects(tmp_path, capsys):
    out = tmp_path / "run"
    code, _, _ = run(capsys, "learn", "--grid", "8,8", "--pairs", "4", "--bridge", "--epochs", "20",
                     "--out-dir", str(out))
    assert code == 0
    assert json.loads((out / "metric.json").read_text())["n_components"] == 1


def test_learn_replay_reproduces_score(tmp_path, capsys):
    out = tmp_path / "run"
    run(capsys, "learn", "--grid", "8,8", "--paths", "2", "--path-len", "30", "--step", "1", "--epochs", "50",
        "--out-dir", str(out))
    first = json.loads((out / "metric.json").read_text())["d_lsbd"]
    assert run(capsys, "replay", str(out / "manifest.json"))[0] == 0
    assert json.loads((out / "metric.json").read_text())["d_lsbd"] == first


def test_negative_omega_range_syntax(perfect_csv, tmp_path, capsys):
    code, _, _ = run(capsys, "metric", perfect_csv, "--omega-range", "-3:-1", "--out", str(tmp_path / "r.json"))
    assert code == 0
    assert json.loads((tmp_path / "r.json").read_text())["omega_range"] == [-3, -1]


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "lsbd", "gen", "--grid", "4", "--oracle", "perfect", "--out", str(tmp_path / "x.csv")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
