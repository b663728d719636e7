import json
import shutil

import numpy as np
import pytest

from utils import settings
from utils.agent_logic import Setting, Uniform, predicted_distribution
from utils.errors import InputUnavailable, MissingModelDistribution
from utils.game_logic import BonusRule, GameSpec, PointsRule
from utils.pipeline_logic import (
    RunManifest,
    published_table_checks,
    resolve_inputs,
    run_evaluation,
    short_term,
    write_reports,
)
from utils.settings import RunConfig, derive_seed

LEVEL0 = settings.data_path("models", "level0.json")
LEVELK = settings.data_path("models", "levelk_mixture.json")


def quick_config(**overrides):
    values = {"epsilons": (0.1, 0.2), "bootstrap_draws": 200, "permutation_iterations": 500, "trace_steps": 50}
    values.update(overrides)
    return RunConfig(**values)


def manifest_for(inputs, references=("baseline", "uniform", "random_pure"), **config):
    return RunManifest(config=quick_config(**config), inputs=inputs, references=tuple(references), name="test")


def test_derive_seed_is_stable():
    assert derive_seed(7, "pipeline", "stats") == derive_seed(7, "pipeline", "stats")
    assert derive_seed(7, "pipeline", "stats") != derive_seed(8, "pipeline", "stats")
    assert 0 <= derive_seed(7, "pipeline", "stats") < 2 ** 63


def test_manifest_hash_ignores_created_time():
    a = manifest_for({"humans": "bundled:money_request_ar", "optimized": LEVEL0})
    b = manifest_for({"humans": "bundled:money_request_ar", "optimized": LEVEL0})
    a.created, b.created = "2025-01-01T00:00:00", "2026-06-30T12:00:00"
    b.output_dir = "elsewhere"
    assert a.hash == b.hash
    assert a.hash != manifest_for({"humans": "bundled:money_request_ar", "optimized": LEVEL0}, root_seed=1).hash


def test_manifest_hash_follows_input_contents(tmp_path):
    humans = tmp_path / "humans.csv"
    humans.write_text("game_id,subject_id,action\nbasic,a,17\ncycle,a,18\n")
    manifest = manifest_for({"humans": str(humans), "optimized": LEVEL0})
    resolve_inputs(manifest)
    before = manifest.hash
    humans.write_text("game_id,subject_id,action\nbasic,a,19\ncycle,a,18\n")
    resolve_inputs(manifest)
    assert manifest.hash != before


def test_manifest_round_trip(tmp_path):
    manifest = RunManifest.load(settings.data_path("manifests", "demo_levelk.json"))
    assert manifest.config.bootstrap_draws == 2000
    path = manifest.write(str(tmp_path / "manifest.json"))
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    assert data["hash"] == manifest.hash
    assert data["created"] is not None
    assert RunManifest.from_dict(data).hash == manifest.hash


def test_identical_models_tie_everywhere():
    manifest = manifest_for({"humans": "bundled:money_request_ar", "optimized": LEVEL0, "baseline": LEVEL0},
                            references=("baseline",))
    bundle = run_evaluation(manifest)
    for eps in (0.1, 0.2):
        report = bundle.reports[eps]["baseline"]
        assert report.mean_llr == pytest.approx(0.0, abs=1e-12)
        assert report.proportion.proportion == 0.0
        assert report.permutation_p == 1.0
        assert report.wilcoxon_p == 1.0
        assert report.n_games == 3


def test_levelk_run_is_reproducible(tmp_path):
    manifest = manifest_for({"humans": "bundled:money_request_ar", "optimized": LEVELK, "baseline": LEVEL0},
                            references=("baseline", "hs_nash", "uniform", "random_pure"))
    first = write_reports(run_evaluation(manifest), str(tmp_path / "first"))
    bundle = run_evaluation(manifest)
    second = write_reports(bundle, str(tmp_path / "second"))
    for kind in ("json", "markdown", "csv"):
        with open(first[kind], "rb") as a, open(second[kind], "rb") as b:
            assert a.read() == b.read()

    assert {"baseline", "uniform", "random_pure"} <= set(bundle.reports[0.2])
    assert "hs_nash" in bundle.exclusions
    assert set(bundle.coverage) >= {"optimized", "baseline"}
    with open(first["json"], "r", encoding="utf-8") as f:
        report = json.load(f)
    assert report["manifest_hash"] == manifest.hash
    assert report["humans"]["responses"] == 108 + 72 + 53
    with open(first["csv"], "r", encoding="utf-8") as f:
        assert f.readline().strip() == "manifest_hash,epsilon,reference,game_id,n,llr"


def test_unresolved_games_are_excluded_and_reported():
    manifest = manifest_for({"humans": "bundled:money_request_ar", "optimized": LEVEL0},
                            references=("hs_nash", "uniform"), eq_action_cap=1)
    bundle = run_evaluation(manifest)
    assert bundle.exclusions["hs_nash"]["count"] == 3
    assert bundle.exclusions["hs_nash"]["games"] == ["basic", "costless", "cycle"]
    assert set(bundle.provenance.values()) == {"Unresolved"}
    assert "hs_nash" not in bundle.reports[0.1]
    assert "uniform" in bundle.reports[0.1]


def _write_table(path, distributions):
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"distributions": {g: d.to_dict() for g, d in distributions.items()}}, f)
    return str(path)


def test_missing_model_distribution(tmp_path):
    basic = Setting.from_variant("basic")
    table = _write_table(tmp_path / "optimized.json", {"basic": predicted_distribution(Uniform(), basic)})
    manifest = manifest_for({"humans": "bundled:money_request_ar", "optimized": table}, references=("uniform",))
    with pytest.raises(MissingModelDistribution):
        run_evaluation(manifest)


def test_baseline_reference_needs_an_input():
    manifest = manifest_for({"humans": "bundled:money_request_ar", "optimized": LEVEL0}, references=("baseline",))
    with pytest.raises(MissingModelDistribution):
        run_evaluation(manifest)


def test_shares_only_data_cannot_be_evaluated():
    manifest = manifest_for({"humans": "bundled:two_stage_allocation", "optimized": LEVEL0}, references=("uniform",))
    with pytest.raises(InputUnavailable):
        run_evaluation(manifest)


def test_regression_on_family_games(tmp_path):
    specs = [GameSpec(11, 20, 1, 20, p, r)
             for p in (PointsRule.N, PointsRule.NPlus1, PointsRule.NMinus1)
             for r in (BonusRule.CoordinateLow, BonusRule.Equal, BonusRule.SumEven)]
    frame = {"population_digest": "test", "seed": 0, "scheme": "uniform",
             "draws": [{"spec": s.to_dict(), "weight": 1 / len(specs)} for s in specs]}
    games = tmp_path / "frame.json"
    games.write_text(json.dumps(frame))
    rng = np.random.default_rng(3)
    rows = ["game_id,subject_id,action"]
    for spec in specs:
        rows += [f"{spec.spec_id},s{i},{rng.integers(11, 21)}" for i in range(6)]
    humans = tmp_path / "humans.csv"
    humans.write_text("\n".join(rows) + "\n")

    manifest = manifest_for({"humans": str(humans), "games": str(games), "optimized": LEVEL0},
                            references=("uniform",))
    bundle = run_evaluation(manifest)
    regression = bundle.reports[0.2]["uniform"].regression
    assert regression is not None
    assert regression.n == 9
    assert [short_term(t) for t in regression.terms] == [
        "Intercept", "points_rule:NMinus1", "points_rule:NPlus1", "bonus_rule:Equal", "bonus_rule:SumEven",
    ]
    assert regression.cov_type == "HC1"


def test_short_term():
    assert short_term("C(points_rule, Treatment(reference='N'))[T.NMinus1]") == "points_rule:NMinus1"
    assert short_term("C(bonus_rule)[T.Equal]") == "bonus_rule:Equal"
    assert short_term("Intercept") == "Intercept"


def test_published_tables_are_consistent():
    checks = published_table_checks()
    assert [c.name for c in checks if not c.passed] == []
    names = {c.name.split("[")[0] for c in checks}
    assert {"proportion_se", "proportion_stars", "exp_mean", "kl_reduction", "regression_stars", "coverage_order",
            "mixture_apportionment", "nash_row", "reconstructed_basic_counts", "two_stage_shares"} <= names


def test_tampered_table_is_caught(tmp_path, monkeypatch):
    data_dir = tmp_path / "data"
    shutil.copytree(settings.DATA_DIR, data_dir)
    path = data_dir / "published" / "headline.json"
    headline = json.loads(path.read_text())
    headline["mixture_weights"]["counts"][0] += 1
    path.write_text(json.dumps(headline))
    monkeypatch.setattr(settings, "DATA_DIR", str(data_dir))
    failed = [c.name for c in published_table_checks() if not c.passed]
    assert failed == ["mixture_apportionment"]
