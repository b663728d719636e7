import itertools

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from utils.errors import ActionOutOfRange, InvalidSpec, MalformedInput, SampleTooLarge
from utils.game_logic import (
    BonusRule,
    FamilyConfig,
    GameSpec,
    PointsRule,
    bonus_indicator,
    dedup_family,
    dedup_full_family,
    enumerate_family,
    family_counts,
    family_frame,
    guaranteed_points,
    money_request_variant,
    payoff_matrix,
    population_weights,
    read_population_ldjson,
    render_instructions,
    sample_frame_from_json,
    sample_frame_to_json,
    sample_games,
    variant_instructions,
    write_population_ldjson,
)

SMALL = FamilyConfig(lower_bounds=(1, 2, 3, 4, 5, 6), offsets=(4, 5), bonus_sizes=(1, 2, 3))
WORKED = GameSpec(5, 14, 6, 10, PointsRule.NMinus2, BonusRule.GapAbsolute)
AR_BASIC = GameSpec(11, 20, 1, 20, PointsRule.N, BonusRule.GapLower)

specs = st.tuples(
    st.integers(1, 20),
    st.integers(4, 19),
    st.integers(1, 4),
    st.integers(1, 20),
    st.sampled_from(list(PointsRule)),
    st.sampled_from(list(BonusRule)),
).map(lambda t: GameSpec(t[0], t[0] + t[1], t[2], t[3], t[4], t[5]))


# enumeration

def test_default_family_raw_count():
    config = FamilyConfig()
    assert config.raw_count == 1_689_600
    assert FamilyConfig.preset("4-20").raw_count == 1_795_200
    assert len(family_frame(config)) == 1_689_600


def test_single_block_gap_free_rules_give_seven_specs():
    gap_free = tuple(r for r in BonusRule if not r.uses_gap)
    config = FamilyConfig(lower_bounds=(3,), offsets=(5,), gaps=(1,), bonus_sizes=(4,), points_rules=(PointsRule.N,), bonus_rules=gap_free)
    assert len(list(enumerate_family(config))) == 7


def test_rule_one_share_of_default_family():
    frame = family_frame(FamilyConfig())
    assert (frame["bonus_rule"] == "GapLower").sum() == 1_689_600 // 11


def test_enumeration_is_reproducible_and_matches_frame():
    first = list(enumerate_family(SMALL))
    second = list(enumerate_family(SMALL))
    assert first == second
    frame = family_frame(SMALL)
    assert [s.to_dict() for s in first] == frame.to_dict("records")


def test_unknown_preset_is_rejected():
    with pytest.raises(InvalidSpec):
        FamilyConfig.preset("4-21")


# payoffs

def test_guaranteed_points_rules():
    assert guaranteed_points(GameSpec(1, 10, 1, 1, PointsRule.N, BonusRule.Equal), 7) == 7
    assert guaranteed_points(GameSpec(5, 14, 1, 1, PointsRule.CostlessMinus2, BonusRule.Equal), 9) == 12
    assert guaranteed_points(GameSpec(5, 14, 1, 1, PointsRule.CostlessMinus2, BonusRule.Equal), 14) == 14
    assert guaranteed_points(GameSpec(1, 10, 1, 1, PointsRule.NMinus2, BonusRule.Equal), 1) == -1


def test_guaranteed_points_rejects_out_of_range_action():
    with pytest.raises(ActionOutOfRange):
        guaranteed_points(AR_BASIC, 21)


def test_invalid_spec_rejected():
    with pytest.raises(InvalidSpec):
        GameSpec(10, 10, 1, 1, PointsRule.N, BonusRule.Equal)


@pytest.mark.parametrize("lower, upper", [(0, 10), (21, 30), (-3, 5), (1, 22)])
def test_out_of_range_bounds_are_malformed(lower, upper):
    with pytest.raises(MalformedInput):
        GameSpec(lower, upper, 1, 1, PointsRule.N, BonusRule.Equal)


def test_widest_offset_is_accepted():
    assert GameSpec(20, 40, 1, 1, PointsRule.N, BonusRule.Equal).offset == 20


def test_loaded_spec_is_range_checked():
    with pytest.raises(MalformedInput):
        GameSpec.from_dict({**AR_BASIC.to_dict(), "lower_bound": 0})


def test_ar_basic_entries():
    game = payoff_matrix(AR_BASIC)
    assert game.payoff[game.index_of(19), game.index_of(20)] == 39
    assert game.payoff[game.index_of(20), game.index_of(19)] == 20
    assert np.array_equal(game.column_payoff, game.payoff.T)


def test_coordinate_low_entries():
    game = payoff_matrix(GameSpec(5, 10, 1, 7, PointsRule.N, BonusRule.CoordinateLow))
    assert game.payoff[0, 0] == 12
    assert game.payoff[0, 1] == 5


def test_worked_example_entry():
    game = payoff_matrix(WORKED)
    assert game.payoff[game.index_of(5), game.index_of(11)] == 13


@given(specs)
@hyp_settings(max_examples=60, deadline=None)
def test_entries_are_guaranteed_plus_zero_or_bonus(spec):
    game = payoff_matrix(spec)
    g = np.array([guaranteed_points(spec, a) for a in spec.actions])
    extra = game.payoff - g[:, None]
    assert set(np.unique(extra)) <= {0, spec.bonus_size}


@given(st.integers(1, 20), st.integers(4, 19))
@hyp_settings(max_examples=30, deadline=None)
def test_complementary_rule_pairs(lower, offset):
    upper = lower + offset
    ones = np.ones((offset + 1, offset + 1), dtype=int)
    assert np.array_equal(bonus_indicator(BonusRule.Equal, lower, upper) + bonus_indicator(BonusRule.Unequal, lower, upper), ones)
    assert np.array_equal(bonus_indicator(BonusRule.SumEven, lower, upper) + bonus_indicator(BonusRule.SumOdd, lower, upper), ones)


@given(specs)
@hyp_settings(max_examples=40, deadline=None)
def test_gap_free_rules_ignore_gap(spec):
    if spec.bonus_rule.uses_gap:
        return
    base = payoff_matrix(spec).payoff
    for gap in (1, 2, 3, 4):
        other = GameSpec(spec.lower_bound, spec.upper_bound, gap, spec.bonus_size, spec.points_rule, spec.bonus_rule)
        assert np.array_equal(payoff_matrix(other).payoff, base)


# variants

def test_variant_basic_equals_family_member():
    assert np.array_equal(money_request_variant("basic").payoff, payoff_matrix(AR_BASIC).payoff)


def test_cycle_differs_from_basic_only_at_twenty_vs_eleven():
    basic = money_request_variant("basic").payoff
    cycle = money_request_variant("cycle").payoff
    diff = np.argwhere(basic != cycle)
    assert diff.tolist() == [[9, 0]]
    assert cycle[9, 0] == 40


def test_costless_entries():
    game = money_request_variant("costless")
    assert game.payoff[9, 3] == 20
    assert game.payoff[3, 4] == 37
    assert game.payoff[3, 3] == 17


@pytest.mark.parametrize("name", ["basic_1_10", "cycle_1_10", "costless_1_10", "game_1_7"])
def test_small_variants_have_points_bonus_of_ten(name):
    game = money_request_variant(name)
    assert game.actions[0] == 1
    assert game.payoff[0, 1] - game.payoff[0, 0] == 10
    assert variant_instructions(name).startswith("You are going to play a game")


# instructions

def test_worked_example_rendering():
    text = render_instructions(WORKED)
    assert text == (
        "You are going to play a game where you must select a whole number between 5 and 14. "
        "A player will receive a number of points equivalent to that number minus two. "
        "After you tell us your number, we will randomly pair you with another Prolific worker who is also "
        "playing this same game. They will also have chosen a number between 5 and 14. "
        "Both players will receive an additional 10 points if their requested numbers differ from each other "
        "by exactly 6. What number would you request?"
    )


def test_rendering_is_deterministic_and_mentions_bounds():
    first = render_instructions(AR_BASIC)
    assert first == render_instructions(AR_BASIC)
    assert "between 11 and 20" in first


def test_single_point_bonus_is_singular():
    spec = GameSpec(1, 6, 1, 1, PointsRule.N, BonusRule.Equal)
    assert "an additional 1 point " in render_instructions(spec)


@given(specs)
@hyp_settings(max_examples=40, deadline=None)
def test_every_spec_renders_without_placeholders(spec):
    text = render_instructions(spec)
    assert "{" not in text and "}" not in text


# dedup

def test_equal_rule_collapses_over_gap():
    a = GameSpec(2, 8, 1, 5, PointsRule.N, BonusRule.Equal)
    b = GameSpec(2, 8, 3, 5, PointsRule.N, BonusRule.Equal)
    population = dedup_family([a, b])
    assert len(population) == 1
    assert population.spec(0) == a


def test_unattainable_bonus_collapses_over_bonus_size():
    specs_ = [GameSpec(3, 7, 4, b, PointsRule.N, BonusRule.MoreThan) for b in range(1, 21)]
    assert not bonus_indicator(BonusRule.MoreThan, 3, 7, 4).any()
    assert len(dedup_family(specs_)) == 1


def test_both_dedup_paths_agree():
    streamed = dedup_family(enumerate_family(SMALL), SMALL)
    vectorized = dedup_full_family(SMALL)
    assert streamed.frame.equals(vectorized.frame)
    assert np.array_equal(streamed.inverse, vectorized.inverse)
    assert streamed.digest == vectorized.digest


def test_small_family_unique_count():
    counts = family_counts(SMALL)
    assert counts["raw"] == 6 * 2 * 4 * 3 * 6 * 11
    assert counts["gap_collapsed"] == 4968
    assert counts["unique"] == 4584


def test_dedup_is_idempotent():
    population = dedup_full_family(SMALL)
    again = dedup_family(population.specs())
    assert again.digest == population.digest
    assert len(again) == len(population)


@pytest.mark.slow
def test_default_family_unique_count():
    counts = family_counts(FamilyConfig())
    assert counts["gap_collapsed"] == 883_200
    assert counts["unique"] == 840_930


# sampling

def test_exhaustive_uniform_draw_is_whole_population():
    population = dedup_full_family(SMALL)
    frame = sample_games(population, len(population), "uniform", seed=3)
    assert {s.to_json() for s in frame.specs} == {s.to_json() for s in population.specs()}


def test_sample_too_large():
    population = dedup_full_family(SMALL)
    with pytest.raises(SampleTooLarge):
        sample_games(population, len(population) + 1, "uniform", seed=0)


def test_paper_weights_are_positive_and_normalized():
    population = dedup_full_family(SMALL)
    weights = population_weights(population, "paper")
    assert (weights > 0).all()
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    gap_using = population.frame["bonus_rule"].isin(["GapLower", "GapHigher", "GapAbsolute", "MoreThan"]).to_numpy()
    # rule 4 with gap 4 never fires at offset 4; in three blocks that mass joins a gap-free representative
    assert weights[gap_using].sum() == pytest.approx(0.398 - 3 / 12 * 1 / 4 * 199 / 2000, abs=1e-9)
    costless = (population.frame["points_rule"] == "CostlessMinus2").to_numpy()
    assert weights[costless].sum() == pytest.approx(0.095, abs=1e-9)


def test_paper_scheme_monte_carlo_share():
    population = dedup_full_family(SMALL)
    weights = population_weights(population, "paper")
    rng = np.random.default_rng(11)
    draws = rng.choice(len(population), size=100_000, p=weights)
    gap_using = population.frame["bonus_rule"].isin(["GapLower", "GapHigher", "GapAbsolute", "MoreThan"]).to_numpy()
    assert gap_using[draws].mean() == pytest.approx(0.3918, abs=0.01)


def test_sampling_is_seeded():
    population = dedup_full_family(SMALL)
    a = sample_games(population, 50, "paper", seed=5)
    b = sample_games(population, 50, "paper", seed=5)
    assert a.specs == b.specs
    assert len({s.to_json() for s in a.specs}) == 50
    restored = sample_frame_from_json(sample_frame_to_json(a))
    assert restored.specs == a.specs and restored.population_digest == population.digest


def test_population_file_keeps_digest_and_config(tmp_path):
    population = dedup_full_family(SMALL)
    path = str(tmp_path / "population.ldjson")
    manifest = write_population_ldjson(population, path, seed=1)
    restored = read_population_ldjson(path)
    assert manifest["digest"] == restored.digest == population.digest
    assert restored.config == SMALL
    np.testing.assert_allclose(population_weights(restored, "paper"), population_weights(population, "paper"))


def test_spec_id_is_stable():
    assert WORKED.spec_id == GameSpec.from_dict(WORKED.to_dict()).spec_id
    assert len({s.spec_id for s in itertools.islice(enumerate_family(SMALL), 100)}) == 100
