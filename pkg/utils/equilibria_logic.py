"""
Nash equilibria of symmetric bimatrix games and deterministic selection.

Enumeration is exact: floating point is only used to discard hopeless
candidate systems before they are re-solved with Fractions. Selection runs a
modified Harsanyi-Selten procedure (components, Pareto filter on security
vectors, risk dominance, logit tracing).
"""

import itertools
import time
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from math import comb

import networkx as nx
import numpy as np
from scipy import optimize
from scipy.special import log_softmax

from utils import settings
from utils.error_logger import get_error_tracker
from utils.errors import NoConvergence, Unresolved

BATCH_SIZE = 4096
FLOAT_TOL = 1e-7
# float rejections this close to the threshold are re-solved exactly
NEAR_TOL = 1e-3
MOD_PRIME = 2_147_483_647


class Provenance(Enum):
    UniqueSymmetric = "UniqueSymmetric"
    PayoffDominant = "PayoffDominant"
    RiskDominant = "RiskDominant"
    Traced = "Traced"
    TracedCoerced = "TracedCoerced"
    FallbackFirst = "FallbackFirst"
    Unresolved = "Unresolved"


def mixed_strategy(probs):
    """Exact mixed strategy from any sequence of numbers or "p/q" strings."""
    strategy = tuple(Fraction(p) for p in probs)
    if any(p < 0 for p in strategy) or sum(strategy) != 1:
        raise ValueError(f"not a probability vector: {[str(p) for p in strategy]}")
    return strategy


def support(strategy):
    return tuple(i for i, p in enumerate(strategy) if p != 0)


@dataclass(frozen=True)
class EquilibriumProfile:
    row: tuple
    col: tuple
    payoffs: tuple

    @property
    def is_symmetric(self):
        return self.row == self.col

    @property
    def is_pure(self):
        return len(support(self.row)) == 1 and len(support(self.col)) == 1

    def as_floats(self):
        return np.array([float(p) for p in self.row]), np.array([float(p) for p in self.col])


@dataclass
class EquilibriumComponent:
    members: list
    security: tuple
    contains_symmetric: bool
    indices: tuple = ()

    @property
    def first_symmetric(self):
        return next((m for m in self.members if m.is_symmetric), None)


@dataclass
class NashResult:
    equilibria: list
    degenerate: bool
    eliminated: tuple
    systems_solved: int

    def __iter__(self):
        return iter(self.equilibria)

    def __len__(self):
        return len(self.equilibria)


@dataclass
class SelectionOutcome:
    selected: EquilibriumProfile
    provenance: Provenance
    diagnostics: dict = field(default_factory=dict)


# --- exact helpers --------------------------------------------------------

def _exact_matrix(payoff):
    return [[Fraction(int(v)) for v in row] for row in np.asarray(payoff)]


def _solve_exact(matrix, rhs):
    """Gauss-Jordan elimination over Fractions; None when singular."""
    n = len(matrix)
    aug = [list(matrix[i]) + [rhs[i]] for i in range(n)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            return None
        aug[col], aug[pivot] = aug[pivot], aug[col]
        pv = aug[col][col]
        aug[col] = [v / pv for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                factor = aug[r][col]
                aug[r] = [a - factor * b for a, b in zip(aug[r], aug[col])]
    return [aug[i][n] for i in range(n)]


def _mat_vec(U, vec):
    return [sum(u * p for u, p in zip(row, vec) if p) for row in U]


def _profile(U, x, y):
    Uy = _mat_vec(U, y)
    Ux = _mat_vec(U, x)
    u1 = sum(p * v for p, v in zip(x, Uy))
    u2 = sum(p * v for p, v in zip(y, Ux))
    return EquilibriumProfile(tuple(x), tuple(y), (u1, u2))


def verify_equilibrium(profile, game):
    """Exact no-profitable-deviation check for both players."""
    U = _exact_matrix(game.payoff)
    x, y = profile.row, profile.col
    if len(x) != game.n_actions or len(y) != game.n_actions:
        return False
    if any(p < 0 for p in x + y) or sum(x) != 1 or sum(y) != 1:
        return False
    Uy = _mat_vec(U, y)
    Ux = _mat_vec(U, x)
    u1 = sum(p * v for p, v in zip(x, Uy))
    u2 = sum(p * v for p, v in zip(y, Ux))
    if (u1, u2) != tuple(profile.payoffs):
        return False
    if max(Uy) > u1 or max(Ux) > u2:
        return False
    return all(Uy[i] == u1 for i in support(x)) and all(Ux[j] == u2 for j in support(y))


# --- enumeration ----------------------------------------------------------

def eliminate_dominated(payoff):
    """Iterated strict dominance, pure by pure. Returns surviving action indices."""
    U = np.asarray(payoff)
    alive = list(range(U.shape[0]))
    changed = True
    while changed and len(alive) > 1:
        changed = False
        sub = U[np.ix_(alive, alive)]
        dominated = (sub[:, None, :] > sub[None, :, :]).all(axis=2).any(axis=0)
        if dominated.any():
            alive = [a for a, d in zip(alive, dominated) if not d]
            changed = True
    return alive


def _vertex_strategies(U, system_budget, deadline, name=""):
    """
    Normalized vertices of {z >= 0 : Uz <= v} shared by both players.

    Each vertex is found as the unique solution of an equal-size
    (support, binding-rows) system and confirmed exactly. Returns a list of
    (strategy, best_response_set) in discovery order plus the system count.
    """
    m = U.shape[0]
    U_exact = _exact_matrix(U)
    vertices = {}
    order = []
    systems = 0
    scale = 1.0 + float(np.abs(U).max())
    for k in range(1, m + 1):
        for J in itertools.combinations(range(m), k):
            if time.monotonic() > deadline:
                raise Unresolved("equilibrium time budget exhausted", game=name, systems=systems)
            cols = list(J)
            UJ = U[:, cols]
            beaten = (UJ[:, None, :] > UJ[None, :, :]).all(axis=2).any(axis=0)
            rows = [i for i in range(m) if not beaten[i]]
            if len(rows) < k:
                continue
            needed = comb(len(rows), k)
            if systems + needed > system_budget:
                raise Unresolved("equilibrium system budget exhausted", game=name, systems=systems, budget=system_budget)
            systems += needed
            K_iter = itertools.combinations(rows, k)
            while True:
                chunk = list(itertools.islice(K_iter, BATCH_SIZE))
                if not chunk:
                    break
                Kidx = np.array(chunk, dtype=np.int64)
                M = np.zeros((len(chunk), k + 1, k + 1))
                M[:, :k, :k] = UJ[Kidx]
                M[:, :k, k] = -1.0
                M[:, k, :k] = 1.0
                # integer systems: any nonzero determinant has magnitude >= 1
                keep = np.abs(np.linalg.det(M)) >= 0.5
                exact = np.zeros(len(Kidx), dtype=bool)
                if not keep.all():
                    # a small float determinant is only trusted when the
                    # determinant also vanishes mod a large prime
                    exact[~keep] = _nonsingular_mod_p(M[~keep])
                if keep.any():
                    Mk = M[keep]
                    rhs = np.zeros((len(Mk), k + 1, 1))
                    rhs[:, k, 0] = 1.0
                    sol = np.linalg.solve(Mk, rhs)[:, :, 0]
                    y, v = sol[:, :k], sol[:, k]
                    finite = np.isfinite(sol).all(axis=1)
                    slack = np.where(finite, (UJ @ np.nan_to_num(y).T).max(axis=0) - v, np.inf)
                    low = np.where(finite, np.nan_to_num(y).min(axis=1), -np.inf)
                    ok = finite & (low >= -FLOAT_TOL) & (slack <= FLOAT_TOL * scale)
                    # rejections inside the wider band go to the exact check
                    near = ~ok & finite & (low >= -NEAR_TOL) & (slack <= NEAR_TOL * scale)
                    exact[keep] = ok | near
                for K in Kidx[exact]:
                    found = _confirm_vertex(U_exact, cols, [int(r) for r in K])
                    if found is None:
                        continue
                    z, br = found
                    if z not in vertices:
                        vertices[z] = br
                        order.append(z)
    return [(z, vertices[z]) for z in order], systems


def _modpow(base, exp, p):
    result = np.ones_like(base)
    base = base % p
    while exp:
        if exp & 1:
            result = result * base % p
        base = base * base % p
        exp >>= 1
    return result


def _nonsingular_mod_p(M, p=MOD_PRIME):
    """
    True where an integer matrix has a nonzero determinant mod p.

    Batched Gaussian elimination over GF(p); entries stay below p < 2**31 so
    every product fits in int64. A True entry proves the determinant is
    nonzero. A False one with a float determinant below 0.5 would need a
    nonzero multiple of p to be computed as near zero, which integer payoffs
    up to 40 on at most 21 actions do not produce.
    """
    A = np.mod(np.rint(M).astype(np.int64), p)
    batch, n, _ = A.shape
    alive = np.ones(batch, dtype=bool)
    idx = np.arange(batch)
    for col in range(n):
        nonzero = A[:, col:, col] != 0
        alive &= nonzero.any(axis=1)
        pivot = col + np.argmax(nonzero, axis=1)
        top = A[idx, col].copy()
        A[idx, col] = A[idx, pivot]
        A[idx, pivot] = top
        inv = _modpow(A[:, col, col], p - 2, p)
        factors = A[:, col + 1:, col] * inv[:, None] % p
        A[:, col + 1:, :] = (A[:, col + 1:, :] - factors[:, :, None] * A[:, col:col + 1, :] % p) % p
    return alive


def _confirm_vertex(U_exact, cols, K):
    k = len(cols)
    matrix = [[U_exact[r][c] for c in cols] + [Fraction(-1)] for r in K]
    matrix.append([Fraction(1)] * k + [Fraction(0)])
    rhs = [Fraction(0)] * k + [Fraction(1)]
    sol = _solve_exact(matrix, rhs)
    if sol is None:
        return None
    y, v = sol[:k], sol[k]
    if any(p < 0 for p in y):
        return None
    z = [Fraction(0)] * len(U_exact)
    for c, p in zip(cols, y):
        z[c] = p
    Uz = _mat_vec(U_exact, z)
    if max(Uz) != v:
        return None
    br = frozenset(i for i, u in enumerate(Uz) if u == v)
    return tuple(z), br


def solve_nash(game, action_cap=None, system_budget=None, time_budget=None):
    """
    All extreme Nash equilibria of a symmetric game.

    The equilibria are the pairs of vertex strategies that are mutual best
    responses, ordered by the discovery index of the row strategy, then of
    the column strategy. Raises Unresolved when a budget is exceeded.
    """
    action_cap = action_cap or settings.EQ_ACTION_CAP
    system_budget = system_budget or settings.EQ_SYSTEM_BUDGET
    time_budget = time_budget or settings.EQ_TIME_BUDGET
    deadline = time.monotonic() + time_budget

    alive = eliminate_dominated(game.payoff)
    eliminated = tuple(a for a in range(game.n_actions) if a not in alive)
    if len(alive) > action_cap:
        raise Unresolved("too many undominated actions", game=game.name, actions=len(alive), cap=action_cap)
    reduced = np.asarray(game.payoff)[np.ix_(alive, alive)].astype(np.float64)

    vertices, systems = _vertex_strategies(reduced, system_budget, deadline, game.name)
    degenerate = any(len(br) > len(support(z)) for z, br in vertices)

    U_exact = _exact_matrix(game.payoff)
    equilibria = []
    for x, br_x in vertices:
        sx = set(support(x))
        for y, br_y in vertices:
            if sx <= br_y and set(support(y)) <= br_x:
                full_x = [Fraction(0)] * game.n_actions
                full_y = [Fraction(0)] * game.n_actions
                for a, p in zip(alive, x):
                    full_x[a] = p
                for a, p in zip(alive, y):
                    full_y[a] = p
                profile = _profile(U_exact, full_x, full_y)
                if not verify_equilibrium(profile, game):
                    raise Unresolved("candidate failed exact verification", game=game.name)
                equilibria.append(profile)
    return NashResult(equilibria, degenerate, eliminated, systems)


def enumerate_nash(game, action_cap=None, system_budget=None, time_budget=None):
    return solve_nash(game, action_cap, system_budget, time_budget).equilibria


def symmetric_equilibria(equilibria):
    return [e for e in equilibria if e.is_symmetric]


# --- selection ------------------------------------------------------------

def equilibrium_components(equilibria):
    """Connected components under "same row strategy or same column strategy"."""
    graph = nx.Graph()
    graph.add_nodes_from(range(len(equilibria)))
    for a, b in itertools.combinations(range(len(equilibria)), 2):
        if equilibria[a].row == equilibria[b].row or equilibria[a].col == equilibria[b].col:
            graph.add_edge(a, b)
    components = []
    for nodes in sorted((sorted(c) for c in nx.connected_components(graph)), key=lambda c: c[0]):
        members = [equilibria[i] for i in nodes]
        security = (min(m.payoffs[0] for m in members), min(m.payoffs[1] for m in members))
        components.append(
            EquilibriumComponent(members, security, any(m.is_symmetric for m in members), tuple(nodes))
        )
    return components


def risk_dominance_index(sigma, game):
    """R(s) = sum over i != j of s_i s_j (U_ii - U_ji)(U_ii - U_ij), exactly."""
    U = np.asarray(game.payoff)
    sigma = [Fraction(p) for p in sigma]
    total = Fraction(0)
    for i, si in enumerate(sigma):
        if si == 0:
            continue
        for j, sj in enumerate(sigma):
            if j == i or sj == 0:
                continue
            total += si * sj * int(U[i, i] - U[j, i]) * int(U[i, i] - U[i, j])
    return total


def pareto_survivors(components):
    """
    Drop components whose security vector is strictly beaten in both
    coordinates. A component holding a symmetric equilibrium can only be
    dropped by another component that also holds one.
    """
    survivors = []
    trace = []
    for a, comp in enumerate(components):
        killer = None
        for b, other in enumerate(components):
            if a == b:
                continue
            if comp.contains_symmetric and not other.contains_symmetric:
                continue
            if other.security[0] > comp.security[0] and other.security[1] > comp.security[1]:
                killer = b
                break
        if killer is None:
            survivors.append(a)
        else:
            trace.append({"deleted": a, "by": killer})
    return survivors, trace


def hs_select(game, pareto_filter=True, trace_grid=200, nash=None, **budgets):
    """
    Pick one symmetric equilibrium deterministically.

    Unresolved from enumeration propagates to the caller, as does a game
    with no symmetric equilibrium to report.
    """
    if nash is None:
        nash = solve_nash(game, **budgets)
    equilibria = nash.equilibria
    components = equilibrium_components(equilibria)
    sym_all = symmetric_equilibria(equilibria)
    diagnostics = {
        "n_equilibria": len(equilibria),
        "n_symmetric": len(sym_all),
        "n_components": len(components),
        "degenerate": nash.degenerate,
        "eliminated": list(nash.eliminated),
        "systems_solved": nash.systems_solved,
    }
    if not sym_all:
        raise Unresolved("no symmetric equilibrium to select", game=game.name, equilibria=len(equilibria))

    if pareto_filter:
        survivors, trace = pareto_survivors(components)
    else:
        survivors, trace = list(range(len(components))), []
    diagnostics["pareto_trace"] = trace
    diagnostics["pareto_survivors"] = survivors

    symmetric_survivors = [c for c in survivors if components[c].contains_symmetric]
    diagnostics["symmetric_survivors"] = symmetric_survivors
    if symmetric_survivors:
        risks = [risk_dominance_index(components[c].first_symmetric.row, game) for c in symmetric_survivors]
        diagnostics["risk_indices"] = [str(r) for r in risks]
        best = min(range(len(risks)), key=lambda i: (risks[i], i))
        winner = components[symmetric_survivors[best]]
        diagnostics["winner"] = symmetric_survivors[best]

        if len(winner.members) == 1:
            if len(sym_all) == 1:
                provenance = Provenance.UniqueSymmetric
            elif len(symmetric_survivors) == 1:
                provenance = Provenance.PayoffDominant
            else:
                provenance = Provenance.RiskDominant
            return SelectionOutcome(winner.members[0], provenance, diagnostics)
    else:
        # first Pareto survivor goes on to tracing
        winner = components[survivors[0]]
        diagnostics["winner"] = survivors[0]

    try:
        snapped = logit_trace(game, None, equilibria, steps=trace_grid)
    except NoConvergence as e:
        get_error_tracker().log_error("trace_fallback", e.to_log(), component="equilibria")
        return SelectionOutcome(_fallback_first(winner, sym_all, game, diagnostics), Provenance.FallbackFirst,
                                diagnostics)

    if snapped.is_symmetric:
        return SelectionOutcome(snapped, Provenance.Traced, diagnostics)
    return SelectionOutcome(_coerce_symmetric(snapped, sym_all, game), Provenance.TracedCoerced, diagnostics)


def _fallback_first(winner, symmetric, game, diagnostics):
    """The winner's first equilibrium with both players on its row strategy."""
    first = winner.members[0]
    U = _exact_matrix(game.payoff)
    candidate = _profile(U, list(first.row), list(first.row))
    if verify_equilibrium(candidate, game):
        diagnostics["fallback"] = "row_strategy"
        return candidate
    get_error_tracker().log_error("fallback_not_equilibrium", {"game": game.name, "row": [str(p) for p in first.row]},
                                  component="equilibria")
    diagnostics["fallback"] = "first_symmetric"
    return winner.first_symmetric or symmetric[0]


def _coerce_symmetric(profile, symmetric, game):
    """Both players on the row strategy, or the nearest symmetric equilibrium."""
    U = _exact_matrix(game.payoff)
    candidate = _profile(U, list(profile.row), list(profile.row))
    if verify_equilibrium(candidate, game):
        return candidate
    row = np.array([float(p) for p in profile.row])
    distances = [0.5 * np.abs(row - e.as_floats()[0]).sum() for e in symmetric]
    return symmetric[int(np.argmin(distances))]


# --- logit tracing --------------------------------------------------------

def _trace_grids(steps):
    alphas = np.concatenate([[0.0], np.geomspace(1e-3, 1.0, steps - 1)])
    lambdas = np.geomspace(1.0, 1e4, steps)
    return alphas, lambdas


def _damped_fixed_point(response, z0, damping=0.5, iterations=2000, tol=1e-10):
    z = z0.copy()
    for _ in range(iterations):
        target = response(z)
        step = target - z
        if np.all(np.abs(step) <= tol * (1 + np.abs(z))):
            return target
        z = z + damping * step
    return None


def trace_logit_path(game, prior=None, steps=200, symmetric=True):
    """
    Raw endpoint (x, y) of the logit tracing path at alpha = 1.

    Both players start from the same prior, so by default only the shared
    strategy is solved for and the endpoint is exactly symmetric.
    """
    U = np.asarray(game.payoff, dtype=np.float64)
    n = U.shape[0]
    span = U.max() - U.min()
    Un = (U - U.min()) / span if span > 0 else np.zeros_like(U)
    p = np.full(n, 1.0 / n) if prior is None else np.array([float(v) for v in prior])
    against_prior = Un @ p
    alphas, lambdas = _trace_grids(steps)

    start = log_softmax(lambdas[0] * against_prior)
    z = start if symmetric else np.concatenate([start, start])
    for alpha, lam in zip(alphas, lambdas):

        def response(z_):
            if symmetric:
                return log_softmax(lam * ((1 - alpha) * against_prior + alpha * (Un @ np.exp(z_))))
            x, y = np.exp(z_[:n]), np.exp(z_[n:])
            ux = (1 - alpha) * against_prior + alpha * (Un @ y)
            uy = (1 - alpha) * against_prior + alpha * (Un @ x)
            return np.concatenate([log_softmax(lam * ux), log_softmax(lam * uy)])

        result = optimize.root(lambda z_: z_ - response(z_), z, method="hybr")
        if np.all(np.isfinite(result.x)) and np.all(np.abs(result.x - response(result.x)) <= 1e-7 * (1 + np.abs(result.x))):
            z = result.x
            continue
        fallback = _damped_fixed_point(response, z)
        if fallback is None:
            raise NoConvergence("logit fixed point failed", alpha=float(alpha), precision=float(lam), game=game.name)
        z = fallback
    if symmetric:
        x = np.exp(z)
        x = x / x.sum()
        return x, x.copy()
    x, y = np.exp(z[:n]), np.exp(z[n:])
    return x / x.sum(), y / y.sum()


def logit_trace(game, prior=None, equilibria=None, steps=200):
    """Trace from the prior and snap the endpoint to the nearest enumerated equilibrium."""
    if equilibria is None:
        equilibria = enumerate_nash(game)
    x, y = trace_logit_path(game, prior, steps)
    best, best_distance = None, None
    for e in equilibria:
        ex, ey = e.as_floats()
        distance = max(0.5 * np.abs(x - ex).sum(), 0.5 * np.abs(y - ey).sum())
        if best_distance is None or distance < best_distance - 1e-12:
            best, best_distance = e, distance
    return best


# --- serialization and summaries ------------------------------------------

def profile_to_json(profile):
    return {
        "row": [str(p) for p in profile.row],
        "col": [str(p) for p in profile.col],
        "payoffs": [str(u) for u in profile.payoffs],
    }


def profile_from_json(data):
    return EquilibriumProfile(
        tuple(Fraction(p) for p in data["row"]),
        tuple(Fraction(p) for p in data["col"]),
        tuple(Fraction(u) for u in data["payoffs"]),
    )


def outcome_to_json(outcome):
    return {
        "selected": profile_to_json(outcome.selected) if outcome.selected else None,
        "provenance": outcome.provenance.value,
        "diagnostics": outcome.diagnostics,
    }


def outcome_from_json(data):
    selected = profile_from_json(data["selected"]) if data.get("selected") else None
    return SelectionOutcome(selected, Provenance(data["provenance"]), data.get("diagnostics", {}))


def select_or_unresolved(game, **kwargs):
    """hs_select that turns Unresolved into an outcome and logs it."""
    try:
        return hs_select(game, **kwargs)
    except Unresolved as e:
        get_error_tracker().log_error("unresolved", e.to_log(), component="equilibria")
        return SelectionOutcome(None, Provenance.Unresolved, {"reason": str(e)})


def selection_statistics(outcomes):
    counts = Counter(o.provenance.value for o in outcomes)
    resolved = [o for o in outcomes if o.selected is not None]
    pure = sum(1 for o in resolved if o.selected.is_pure)
    return {
        "games": len(outcomes),
        "unique_symmetric": counts.get(Provenance.UniqueSymmetric.value, 0),
        "payoff_dominant": counts.get(Provenance.PayoffDominant.value, 0),
        "risk_dominant": counts.get(Provenance.RiskDominant.value, 0),
        "traced": counts.get(Provenance.Traced.value, 0) + counts.get(Provenance.TracedCoerced.value, 0),
        "fallback": counts.get(Provenance.FallbackFirst.value, 0),
        "unresolved": counts.get(Provenance.Unresolved.value, 0),
        "pure": pure,
        "mixed": len(resolved) - pure,
        "pure_share": pure / len(resolved) if resolved else 0.0,
    }
