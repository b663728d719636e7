import json

import pytest

import manage_games
import run_automated_pipeline
from utils import settings
from utils.agent_logic import ResponseDistribution

LEVEL0 = settings.data_path("models", "level0.json")
LEVELK = settings.data_path("models", "levelk_mixture.json")


@pytest.fixture(autouse=True)
def _restore_offline(monkeypatch):
    monkeypatch.setattr(settings, "OFFLINE", settings.OFFLINE)


def test_game_variant(capsys):
    assert manage_games.main(["game", "variant", "basic"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["actions"] == list(range(11, 21))
    assert data["payoff"][0][0] == 11


def test_eq_select_basic(tmp_path):
    out = tmp_path / "basic.json"
    assert manage_games.main(["eq", "select", "--variant", "basic", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["provenance"] == "UniqueSymmetric"
    assert data["selected"]["row"] == ["0", "0", "0", "0", "1/4", "1/4", "1/5", "3/20", "1/10", "1/20"]


def test_run_check_passes(capsys):
    assert manage_games.main(["run", "--check"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "PASS  mixture_apportionment" in out


def test_run_without_work_fails():
    assert manage_games.main(["run"]) == 1


def test_errors_become_exit_code(tmp_path):
    humans = tmp_path / "humans.csv"
    humans.write_text("game,subject,action\nbasic,a,17\n")
    argv = ["eval", "compare", "--humans", str(humans), "--model-a", LEVEL0, "--model-b", LEVELK]
    assert manage_games.main(argv) == 1


def test_eval_compare(tmp_path):
    humans = tmp_path / "humans.csv"
    humans.write_text("game_id,subject_id,action\nbasic,a,17\nbasic,b,18\ncycle,a,20\ncycle,b,12\n")
    out = tmp_path / "report.json"
    argv = ["eval", "compare", "--humans", str(humans), "--model-a", LEVELK, "--model-b", LEVEL0,
            "--bootstrap", "200", "--permutations", "200", "--offline", "--out", str(out)]
    assert manage_games.main(argv) == 0
    report = json.loads(out.read_text())
    assert report["n_games"] == 2
    assert report["epsilon"] == settings.HEADLINE_EPSILON
    assert settings.OFFLINE is True


def test_optimize_select(tmp_path):
    candidates = tmp_path / "candidates"
    candidates.mkdir()
    for name, probs in (("always_left", [1.0, 0.0]), ("always_right", [0.0, 1.0])):
        dist = ResponseDistribution.from_probs("s", ("Left", "Right"), probs)
        (candidates / f"{name}.json").write_text(json.dumps({"distributions": {"s": dist.to_dict()}}))
    target = tmp_path / "target.json"
    dist = ResponseDistribution.from_probs("s", ("Left", "Right"), [0.3, 0.7])
    target.write_text(json.dumps({"distributions": {"s": dist.to_dict()}}))
    out = tmp_path / "fit.json"
    argv = ["optimize", "select", "--candidates", str(candidates), "--target", str(target), "--measure", "mae",
            "--restarts", "4", "--out", str(out)]
    assert manage_games.main(argv) == 0
    fit = json.loads(out.read_text())
    assert fit["candidates"] == ["always_left", "always_right"]
    assert fit["weights"] == pytest.approx([0.3, 0.7], abs=1e-6)


def test_demo_sequence():
    steps = run_automated_pipeline.steps()
    assert [cmd[2:4] for cmd, _ in steps] == [["run", "--check"], ["eq", "select"], ["eq", "select"],
                                              ["run", "--manifest"]]
    assert len(run_automated_pipeline.steps(full_family=True)) == 5
