import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from utils import equilibria_logic
from utils.equilibria_logic import (
    EquilibriumComponent,
    EquilibriumProfile,
    NashResult,
    Provenance,
    enumerate_nash,
    equilibrium_components,
    hs_select,
    logit_trace,
    mixed_strategy,
    outcome_from_json,
    outcome_to_json,
    pareto_survivors,
    profile_from_json,
    profile_to_json,
    risk_dominance_index,
    select_or_unresolved,
    selection_statistics,
    solve_nash,
    symmetric_equilibria,
    trace_logit_path,
    verify_equilibrium,
)
from utils.errors import NoConvergence, Unresolved
from utils.game_logic import SymmetricGame

F = Fraction
AR_NASH = mixed_strategy(["0", "0", "0", "0", "1/4", "1/4", "1/5", "3/20", "1/10", "1/20"])
COSTLESS_NASH = mixed_strategy(["0", "0", "0", "1/10", "3/20", "3/20", "3/20", "3/20", "3/20", "3/20"])


# independent oracle: vertex enumeration of {z >= 0, U'z <= 1} with exact arithmetic

def _gauss(matrix, rhs):
    n = len(matrix)
    a = [row[:] + [r] for row, r in zip(matrix, rhs)]
    for c in range(n):
        p = next((r for r in range(c, n) if a[r][c] != 0), None)
        if p is None:
            return None
        a[c], a[p] = a[p], a[c]
        for r in range(n):
            if r != c and a[r][c] != 0:
                f = a[r][c] / a[c][c]
                a[r] = [x - f * y for x, y in zip(a[r], a[c])]
    return [a[i][n] / a[i][i] for i in range(n)]


def _polytope_vertices(U):
    n = len(U)
    low = min(min(row) for row in U)
    shifted = [[F(v - low + 1) for v in row] for row in U]
    constraints = [([F(int(i == j)) for j in range(n)], F(0)) for i in range(n)]
    constraints += [(shifted[i], F(1)) for i in range(n)]
    found = {}
    for chosen in itertools.combinations(range(2 * n), n):
        z = _gauss([constraints[c][0] for c in chosen], [constraints[c][1] for c in chosen])
        if z is None or any(v < 0 for v in z) or sum(z) == 0:
            continue
        loads = [sum(a * b for a, b in zip(shifted[i], z)) for i in range(n)]
        if any(v > 1 for v in loads):
            continue
        found[tuple(z)] = loads
    return found


def oracle_equilibria(U):
    vertices = _polytope_vertices(U)
    n = len(U)
    result = set()
    for x, load_x in vertices.items():
        for y, load_y in vertices.items():
            if all(x[i] == 0 or load_y[i] == 1 for i in range(n)) and all(y[j] == 0 or load_x[j] == 1 for j in range(n)):
                sx, sy = sum(x), sum(y)
                result.add((tuple(v / sx for v in x), tuple(v / sy for v in y)))
    return result


def _random_games(count, seed):
    rng = np.random.default_rng(seed)
    games = []
    for k in range(count):
        n = int(rng.integers(2, 6))
        games.append(SymmetricGame.from_matrix(rng.integers(0, 10, size=(n, n)), name=f"random-{k}"))
    return games


# ground truth

def test_basic_game_unique_symmetric_equilibrium(basic_game):
    equilibria = enumerate_nash(basic_game)
    assert [e.row for e in symmetric_equilibria(equilibria)] == [AR_NASH]


def test_cycle_game_shares_the_equilibrium(cycle_game):
    assert [e.row for e in symmetric_equilibria(enumerate_nash(cycle_game))] == [AR_NASH]


def test_costless_game_equilibrium(costless_game):
    assert [e.row for e in symmetric_equilibria(enumerate_nash(costless_game))] == [COSTLESS_NASH]


def test_coordination_game_has_three_equilibria(coordination_game):
    equilibria = enumerate_nash(coordination_game)
    assert {(e.row, e.col) for e in equilibria} == {
        ((F(1), F(0)), (F(1), F(0))),
        ((F(0), F(1)), (F(0), F(1))),
        ((F(1, 2), F(1, 2)), (F(1, 2), F(1, 2))),
    }


def test_oracle_equivalence_on_random_games():
    for game in _random_games(200, seed=2024):
        found = enumerate_nash(game)
        assert {(e.row, e.col) for e in found} == oracle_equilibria(game.payoff.tolist()), game.payoff.tolist()
        assert all(verify_equilibrium(e, game) for e in found)


def test_affine_shift_leaves_equilibria_unchanged():
    for game in _random_games(40, seed=7):
        shifted = SymmetricGame.from_matrix(game.payoff + 13)
        assert {(e.row, e.col) for e in enumerate_nash(game)} == {(e.row, e.col) for e in enumerate_nash(shifted)}


def test_degenerate_game_is_flagged_and_connected():
    game = SymmetricGame.from_matrix(np.ones((2, 2), dtype=int))
    result = solve_nash(game)
    assert result.degenerate
    assert len(result.equilibria) == 4
    assert len(equilibrium_components(result.equilibria)) == 1


def test_dominated_actions_are_eliminated():
    game = SymmetricGame.from_matrix(np.array([[3, 3, 3], [0, 0, 0], [1, 5, 2]]))
    result = solve_nash(game)
    assert 1 in result.eliminated
    assert all(e.row[1] == 0 for e in result.equilibria)


def test_budget_exhaustion_is_unresolved(basic_game):
    with pytest.raises(Unresolved):
        solve_nash(basic_game, system_budget=5)
    outcome = select_or_unresolved(basic_game, system_budget=5)
    assert outcome.provenance is Provenance.Unresolved
    assert outcome.selected is None


def test_verify_rejects_non_equilibrium(stag_hunt):
    bad = EquilibriumProfile((F(1), F(0)), (F(0), F(1)), (F(0), F(3)))
    assert not verify_equilibrium(bad, stag_hunt)


# components

def test_single_equilibrium_is_one_component(basic_game):
    components = equilibrium_components(enumerate_nash(basic_game))
    assert len(components) >= 1
    assert any(c.contains_symmetric for c in components)


def test_shared_row_strategy_joins_components():
    a = EquilibriumProfile((F(1), F(0)), (F(1), F(0)), (F(2), F(2)))
    b = EquilibriumProfile((F(1), F(0)), (F(0), F(1)), (F(1), F(3)))
    components = equilibrium_components([a, b])
    assert len(components) == 1
    assert components[0].security == (F(1), F(2))
    assert components[0].contains_symmetric


def test_pareto_filter_protects_symmetric_components():
    symmetric = EquilibriumProfile((F(1), F(0)), (F(1), F(0)), (F(1), F(1)))
    asymmetric = EquilibriumProfile((F(0), F(1)), (F(1, 2), F(1, 2)), (F(5), F(5)))
    components = [
        EquilibriumComponent([symmetric], (F(1), F(1)), True),
        EquilibriumComponent([asymmetric], (F(5), F(5)), False),
    ]
    survivors, trace = pareto_survivors(components)
    assert 0 in survivors
    assert all(not (step["deleted"] == 0 and step["by"] == 1) for step in trace)


# risk dominance

def test_risk_index_examples():
    U = SymmetricGame.from_matrix(np.array([[2, 0], [1, 1]]))
    assert risk_dominance_index((F(1, 2), F(1, 2)), U) == F(1, 2)
    assert risk_dominance_index((F(1), F(0)), U) == 0


@given(st.lists(st.integers(0, 9), min_size=9, max_size=9), st.integers(1, 5), st.lists(st.integers(0, 5), min_size=3, max_size=3))
@hyp_settings(max_examples=50, deadline=None)
def test_risk_index_scales_quadratically(entries, c, weights):
    if sum(weights) == 0:
        weights = [1, 0, 0]
    sigma = tuple(F(w, sum(weights)) for w in weights)
    game = SymmetricGame.from_matrix(np.array(entries).reshape(3, 3))
    scaled = SymmetricGame.from_matrix(np.array(entries).reshape(3, 3) * c)
    assert risk_dominance_index(sigma, scaled) == c * c * risk_dominance_index(sigma, game)


@given(st.lists(st.integers(-9, 9), min_size=16, max_size=16), st.integers(0, 3))
@hyp_settings(max_examples=30, deadline=None)
def test_pure_strategy_risk_index_is_zero(entries, k):
    game = SymmetricGame.from_matrix(np.array(entries).reshape(4, 4))
    sigma = tuple(F(int(i == k)) for i in range(4))
    assert risk_dominance_index(sigma, game) == 0


# selection

def test_basic_game_selection(basic_game):
    outcome = hs_select(basic_game)
    assert outcome.provenance is Provenance.UniqueSymmetric
    assert outcome.selected.row == outcome.selected.col == AR_NASH


def test_stag_hunt_selects_payoff_dominant(stag_hunt):
    outcome = hs_select(stag_hunt)
    assert outcome.provenance is Provenance.PayoffDominant
    assert outcome.selected.row == (F(1), F(0))
    assert outcome.selected.payoffs == (F(4), F(4))
    deleted = {step["deleted"] for step in outcome.diagnostics["pareto_trace"]}
    assert len(deleted) == 2


def test_stag_hunt_tracing_finds_risk_dominant(stag_hunt):
    profile = logit_trace(stag_hunt)
    assert profile.row == profile.col == (F(0), F(1))


def test_tie_game_is_traced():
    game = SymmetricGame.from_matrix(np.ones((2, 2), dtype=int))
    outcome = hs_select(game)
    assert outcome.provenance is Provenance.Traced
    assert outcome.selected.row == outcome.selected.col


def test_trace_endpoint_is_symmetric(stag_hunt, coordination_game):
    for game in (stag_hunt, coordination_game):
        x, y = trace_logit_path(game)
        assert np.max(np.abs(x - y)) < 1e-8


def test_selection_is_deterministic():
    for game in _random_games(10, seed=99):
        outcomes = [outcome_to_json(hs_select(game)) for _ in range(3)]
        assert outcomes[0] == outcomes[1] == outcomes[2]
        assert outcomes[0]["selected"]["row"] == outcomes[0]["selected"]["col"]


@pytest.mark.slow
def test_selection_is_deterministic_over_many_runs():
    games = _random_games(50, seed=100)
    first = [outcome_to_json(hs_select(g)) for g in games]
    for _ in range(99):
        assert [outcome_to_json(hs_select(g)) for g in games] == first


def test_selected_profiles_verify():
    for game in _random_games(30, seed=5):
        outcome = hs_select(game)
        assert verify_equilibrium(outcome.selected, game)
        assert outcome.selected.is_symmetric


# serialization and summaries

def test_profile_json_uses_rational_strings(basic_game):
    outcome = hs_select(basic_game)
    data = profile_to_json(outcome.selected)
    assert data["row"][4] == "1/4"
    assert profile_from_json(data) == outcome.selected
    assert outcome_from_json(outcome_to_json(outcome)).provenance is outcome.provenance


def test_selection_statistics(basic_game, stag_hunt):
    outcomes = [hs_select(basic_game), hs_select(stag_hunt), select_or_unresolved(basic_game, system_budget=5)]
    stats = selection_statistics(outcomes)
    assert stats["unique_symmetric"] == 1
    assert stats["payoff_dominant"] == 1
    assert stats["unresolved"] == 1
    assert stats["pure"] == 1 and stats["mixed"] == 1


# fallbacks when tracing fails or lands off the diagonal

def _weak_game():
    # action 1 weakly dominates 0; equilibria (0,1), (1,0), (1,1) form one component
    return SymmetricGame.from_matrix(np.array([[0, 1], [2, 1]]), name="weak")


def _stalled_trace(*args, **kwargs):
    raise NoConvergence("logit path stalled", steps=kwargs.get("steps"))


def test_failed_trace_falls_back_to_first_symmetric(monkeypatch):
    monkeypatch.setattr(equilibria_logic, "logit_trace", _stalled_trace)
    game = _weak_game()
    assert [(e.row, e.col) for e in enumerate_nash(game)] == [
        ((F(1), F(0)), (F(0), F(1))),
        ((F(0), F(1)), (F(1), F(0))),
        ((F(0), F(1)), (F(0), F(1))),
    ]
    outcome = hs_select(game)
    assert outcome.provenance is Provenance.FallbackFirst
    assert outcome.diagnostics["fallback"] == "first_symmetric"
    assert outcome.selected.row == outcome.selected.col == (F(0), F(1))
    assert verify_equilibrium(outcome.selected, game)


def test_failed_trace_uses_winner_row_strategy(monkeypatch):
    monkeypatch.setattr(equilibria_logic, "logit_trace", _stalled_trace)
    game = SymmetricGame.from_matrix(np.ones((2, 2), dtype=int))
    outcome = hs_select(game)
    assert outcome.provenance is Provenance.FallbackFirst
    assert outcome.diagnostics["fallback"] == "row_strategy"
    assert outcome.selected.row == outcome.selected.col == (F(1), F(0))


def test_asymmetric_trace_endpoint_is_coerced(monkeypatch):
    monkeypatch.setattr(equilibria_logic, "logit_trace",
                        lambda game, prior, equilibria, steps: equilibria[1])
    game = SymmetricGame.from_matrix(np.ones((2, 2), dtype=int))
    outcome = hs_select(game)
    assert outcome.provenance is Provenance.TracedCoerced
    assert outcome.selected.row == outcome.selected.col == (F(1), F(0))
    assert verify_equilibrium(outcome.selected, game)


def test_coercion_falls_back_to_nearest_symmetric(monkeypatch):
    monkeypatch.setattr(equilibria_logic, "logit_trace",
                        lambda game, prior, equilibria, steps: equilibria[0])
    game = _weak_game()
    outcome = hs_select(game)
    assert outcome.provenance is Provenance.TracedCoerced
    assert outcome.selected.row == outcome.selected.col == (F(0), F(1))


def test_no_symmetric_equilibrium_is_unresolved():
    game = SymmetricGame.from_matrix(np.array([[0, 3], [1, 2]]), name="hawk_dove")
    with pytest.raises(Unresolved):
        hs_select(game, nash=NashResult([], False, (), 0))
    asymmetric = [
        EquilibriumProfile((F(1), F(0)), (F(0), F(1)), (F(3), F(1))),
        EquilibriumProfile((F(0), F(1)), (F(1), F(0)), (F(1), F(3))),
    ]
    with pytest.raises(Unresolved):
        hs_select(game, nash=NashResult(asymmetric, False, (), 2))


# exact singularity test behind the float determinant filter

def test_modular_singularity_test():
    rng = np.random.default_rng(11)
    ones = np.ones((1, 3, 3))
    unimodular = np.triu(rng.integers(0, 41, size=(20, 20))).astype(float)
    np.fill_diagonal(unimodular, 1.0)
    repeated = rng.integers(0, 41, size=(20, 20)).astype(float)
    repeated[-1] = repeated[0]
    batch = np.stack([unimodular, repeated, np.eye(20)])
    assert not equilibria_logic._nonsingular_mod_p(ones)[0]
    assert equilibria_logic._nonsingular_mod_p(batch).tolist() == [True, False, True]


def test_near_threshold_rejections_are_confirmed(monkeypatch, coordination_game):
    # with no float slack at all, only the exact re-check keeps vertices
    monkeypatch.setattr(equilibria_logic, "FLOAT_TOL", -1.0)
    assert len(enumerate_nash(coordination_game)) == 3
