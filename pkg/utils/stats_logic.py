"""
Inference on agent-vs-agent predictive performance.

Both models are smoothed toward uniform, compared game by game through the
mean log-likelihood ratio of the human responses, and the per-game ratios
are aggregated with a bootstrap over games, an exact best-predictor
interval, a signed-rank test and a random-sign permutation test.
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import statsmodels.formula.api as smf
from scipy import stats

from utils import settings
from utils.error_logger import get_error_tracker
from utils.errors import AllZeros, MismatchedSettings, RankDeficient, ZeroLikelihood
from utils.settings import derive_seed

EPSILON_GRID = settings.EPSILON_GRID
REFERENCE_LEVELS = {"points_rule": "N", "bonus_rule": "CoordinateLow"}
EXACT_WILCOXON_MAX = 25


@dataclass
class SmoothedModel:
    base: object
    epsilon: float
    probs: np.ndarray = field(init=False)

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ValueError(f"epsilon must be in [0, 1), got {self.epsilon}")
        base = np.asarray(self.base.probs, dtype=np.float64)
        self.probs = (1 - self.epsilon) * base + self.epsilon / len(base)

    @property
    def actions(self):
        return self.base.actions

    @property
    def setting_id(self):
        return self.base.setting_id

    def prob_of(self, action):
        try:
            return float(self.probs[self.actions.index(action)])
        except ValueError:
            raise MismatchedSettings(f"action {action!r} is not in the model's action set",
                                     setting=self.setting_id) from None


def smooth(P, epsilon, K=None):
    if K is not None and K != len(P.actions):
        raise MismatchedSettings("K must equal the number of actions", setting=P.setting_id)
    return SmoothedModel(P, epsilon)


def _as_smoothed(model):
    return model if isinstance(model, SmoothedModel) else SmoothedModel(model, 0.0)


@dataclass
class GameComparison:
    game_id: str
    responses: list
    llr: float
    terms: np.ndarray

    def to_dict(self):
        return {"game_id": self.game_id, "responses": list(self.responses), "llr": self.llr,
                "n": len(self.responses)}


def game_llr(responses, model_a, model_b, game_id=None):
    """Mean of log A(y) - log B(y) over the human responses; positive favours A."""
    model_a, model_b = _as_smoothed(model_a), _as_smoothed(model_b)
    if tuple(model_a.actions) != tuple(model_b.actions):
        raise MismatchedSettings("models cover different action sets", game=game_id)
    if not responses:
        raise ValueError(f"no responses for game {game_id}")
    pa = np.array([model_a.prob_of(y) for y in responses])
    pb = np.array([model_b.prob_of(y) for y in responses])
    if (pa <= 0).any() or (pb <= 0).any():
        missing = sorted({y for y, a, b in zip(responses, pa, pb) if a <= 0 or b <= 0})
        get_error_tracker().log_error("zero_likelihood", {"game": game_id, "actions": missing}, component="stats")
        raise ZeroLikelihood("an observed action has zero model probability; smooth the models",
                             game=game_id, actions=missing)
    terms = np.log(pa) - np.log(pb)
    return GameComparison(game_id or model_a.setting_id, list(responses), float(terms.mean()), terms)


# --- proportions ----------------------------------------------------------

def binomial_se(p, n):
    return float(np.sqrt(p * (1 - p) / n))


def proportion_pvalue(successes, n, null=0.5):
    return float(stats.binomtest(int(successes), int(n), null).pvalue)


def clopper_pearson(successes, n, level=0.95, alternative="two-sided"):
    """Exact binomial interval from beta quantiles."""
    alpha = 1 - level
    tail = alpha / 2 if alternative == "two-sided" else alpha
    low = 0.0 if successes == 0 or alternative == "less" else float(stats.beta.ppf(tail, successes, n - successes + 1))
    high = 1.0 if successes == n or alternative == "greater" else float(stats.beta.ppf(1 - tail, successes + 1, n - successes))
    return low, high


@dataclass
class ProportionEstimate:
    successes: int
    n: int
    proportion: float
    low: float
    high: float
    se: float
    pvalue: float

    def to_dict(self):
        return dict(self.__dict__)


def best_predictor_proportion(comparisons, level=0.95, alternative="two-sided"):
    """Share of games where A beats B strictly; ties count against A."""
    values = np.array([c.llr if isinstance(c, GameComparison) else c for c in comparisons], dtype=np.float64)
    if values.size == 0:
        raise ValueError("at least one comparison is required")
    n = int(values.size)
    successes = int((values > 0).sum())
    p = successes / n
    low, high = clopper_pearson(successes, n, level, alternative)
    return ProportionEstimate(successes, n, p, low, high, binomial_se(p, n), proportion_pvalue(successes, n))


# --- rank and permutation tests -------------------------------------------

def _signed_rank_null(ranks):
    """Null distribution of W+ (in half-rank units) by dynamic programming."""
    doubled = np.rint(2 * ranks).astype(np.int64)
    dist = np.zeros(int(doubled.sum()) + 1)
    dist[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[:len(dist) - r]
        dist = 0.5 * (dist + shifted)
    return dist


def wilcoxon_signed_rank(values):
    """Two-sided signed-rank p-value; zeros dropped, mid-ranks for ties."""
    values = np.asarray(values, dtype=np.float64)
    nonzero = values[values != 0]
    if nonzero.size == 0:
        raise AllZeros("every difference is zero")
    if nonzero.size > EXACT_WILCOXON_MAX:
        return float(stats.wilcoxon(nonzero, zero_method="wilcox", correction=True, method="approx").pvalue)
    ranks = stats.rankdata(np.abs(nonzero))
    w_plus = int(np.rint(2 * ranks[nonzero > 0].sum()))
    dist = _signed_rank_null(ranks)
    lower = dist[:w_plus + 1].sum()
    upper = dist[w_plus:].sum()
    return float(min(1.0, 2 * min(lower, upper)))


def sign_permutation_test(values, iterations=100_000, seed=0, exact=False, chunk=10_000):
    """
    Two-sided random-sign test on the mean.

    Monte-Carlo p-values use the add-one correction; `exact=True` enumerates
    all 2^n sign patterns instead.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("at least one value is required")
    if not values.any():
        return 1.0
    observed = abs(values.mean()) - 1e-12
    if exact:
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=values.size)))
        return float((np.abs(signs @ values / values.size) >= observed).mean())
    hits = 0
    done = 0
    index = 0
    while done < iterations:
        size = min(chunk, iterations - done)
        rng = np.random.default_rng(derive_seed(seed, "stats", "sign_permutation", index))
        signs = rng.choice((-1.0, 1.0), size=(size, values.size))
        hits += int((np.abs(signs @ values / values.size) >= observed).sum())
        done += size
        index += 1
    return (hits + 1) / (iterations + 1)


STAR_THRESHOLDS = (0.001, 0.01, 0.05)


def significance_stars(p, thresholds=STAR_THRESHOLDS):
    if p is None:
        return ""
    return "*" * sum(p < t for t in thresholds)


# --- aggregation ----------------------------------------------------------

@dataclass
class ComparisonReport:
    mean_llr: float
    n_games: int
    bootstrap_se: float
    ci: tuple
    sample_se: float
    proportion: ProportionEstimate
    wilcoxon_p: float
    permutation_p: float
    between_game_var: float
    within_game_var: float
    bootstrap_draws: int
    epsilon: float = None
    label: str = ""
    regression: object = None

    @property
    def ratio(self):
        """Per-observation likelihood ratio exp(mean llr)."""
        return float(np.exp(self.mean_llr))

    def to_dict(self):
        return {
            "label": self.label,
            "epsilon": self.epsilon,
            "mean_llr": self.mean_llr,
            "ratio": self.ratio,
            "n_games": self.n_games,
            "bootstrap_se": self.bootstrap_se,
            "ci": list(self.ci),
            "sample_se": self.sample_se,
            "proportion": self.proportion.to_dict(),
            "wilcoxon_p": self.wilcoxon_p,
            "permutation_p": self.permutation_p,
            "between_game_var": self.between_game_var,
            "within_game_var": self.within_game_var,
            "bootstrap_draws": self.bootstrap_draws,
            "regression": self.regression.to_dict() if self.regression is not None else None,
        }


def _bootstrap_means(values, draws, seed, chunk, max_workers):
    starts = list(range(0, draws, chunk))

    def run(i):
        rng = np.random.default_rng(derive_seed(seed, "stats", "bootstrap", i))
        size = min(chunk, draws - starts[i])
        idx = rng.integers(0, values.size, size=(size, values.size))
        return values[idx].mean(axis=1)

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        parts = list(executor.map(run, range(len(starts))))
    return np.concatenate(parts)


def aggregate(comparisons, bootstrap_draws=10_000, seed=0, level=0.95, permutation_iterations=100_000,
              chunk=1_000, max_workers=None, label="", epsilon=None):
    """Mean per-game llr with a bootstrap over games and the companion tests."""
    if len(comparisons) < 2:
        raise ValueError("aggregation needs at least two games")
    values = np.array([c.llr for c in comparisons], dtype=np.float64)
    S = values.size
    means = _bootstrap_means(values, bootstrap_draws, seed, chunk, max_workers or settings.MAX_IN_FLIGHT)
    alpha = 1 - level
    ci = (float(np.quantile(means, alpha / 2)), float(np.quantile(means, 1 - alpha / 2)))

    within = [float(np.var(c.terms, ddof=1) / len(c.terms)) if len(c.terms) > 1 else 0.0 for c in comparisons]
    try:
        wilcoxon_p = wilcoxon_signed_rank(values)
    except AllZeros:
        wilcoxon_p = 1.0

    report = ComparisonReport(
        mean_llr=float(values.mean()),
        n_games=S,
        bootstrap_se=float(np.std(means, ddof=1)),
        ci=ci,
        sample_se=float(np.std(values, ddof=1) / np.sqrt(S)),
        proportion=best_predictor_proportion(values, level),
        wilcoxon_p=wilcoxon_p,
        permutation_p=sign_permutation_test(values, permutation_iterations, seed),
        between_game_var=float(np.var(values, ddof=1)),
        within_game_var=float(np.mean(within)),
        bootstrap_draws=bootstrap_draws,
        epsilon=epsilon,
        label=label,
    )
    get_error_tracker().log_success("aggregate")
    return report


def compare_models(responses, models_a, models_b, epsilon=settings.HEADLINE_EPSILON, bootstrap_draws=10_000,
                   seed=0, permutation_iterations=100_000, label=""):
    """
    smooth -> game_llr -> aggregate over every game in `responses`.

    `responses` maps game id to the list of human actions; the model maps
    carry one unsmoothed ResponseDistribution per game id.
    """
    comparisons = []
    for game_id, ys in responses.items():
        a = smooth(models_a[game_id], epsilon)
        b = smooth(models_b[game_id], epsilon)
        comparisons.append(game_llr(ys, a, b, game_id=game_id))
    report = aggregate(comparisons, bootstrap_draws, seed, permutation_iterations=permutation_iterations,
                       label=label, epsilon=epsilon)
    return report, comparisons


def epsilon_grid(responses, models_a, models_b, epsilons=EPSILON_GRID, **kwargs):
    return {eps: compare_models(responses, models_a, models_b, epsilon=eps, **kwargs)[0] for eps in epsilons}


# --- regressions ----------------------------------------------------------

@dataclass
class RegressionTable:
    terms: list
    coef: list
    se: list
    pvalues: list
    n: int
    r_squared: float
    cov_type: str

    def to_frame(self):
        frame = pd.DataFrame({"term": self.terms, "coef": self.coef, "se": self.se, "pvalue": self.pvalues})
        frame["stars"] = frame["pvalue"].map(significance_stars)
        return frame

    def to_dict(self):
        return {"terms": self.terms, "coef": self.coef, "se": self.se, "pvalues": self.pvalues, "n": self.n,
                "r_squared": self.r_squared, "cov_type": self.cov_type}


def _term(column, frame, references):
    ref = references.get(column)
    if ref is not None and ref in set(frame[column].astype(str)):
        return f"C({column}, Treatment(reference={ref!r}))"
    return f"C({column})"


def ols_robust(frame, outcome, categorical=(), continuous=(), cov_type="HC1", references=None):
    """Least squares with heteroskedasticity-robust standard errors."""
    references = {**REFERENCE_LEVELS, **(references or {})}
    frame = frame.copy()
    for column in categorical:
        frame[column] = frame[column].astype(str)
    rhs = [_term(c, frame, references) for c in categorical] + list(continuous)
    formula = f"{outcome} ~ {' + '.join(rhs) if rhs else '1'}"
    model = smf.ols(formula, data=frame)
    rank = np.linalg.matrix_rank(model.exog)
    if rank < model.exog.shape[1]:
        get_error_tracker().log_error("rank_deficient", {"formula": formula, "rank": int(rank),
                                                         "columns": model.exog.shape[1]}, component="stats")
        raise RankDeficient("design matrix is not full rank", formula=formula)
    result = model.fit(cov_type=cov_type)
    return RegressionTable(
        terms=list(result.params.index),
        coef=[float(v) for v in result.params],
        se=[float(v) for v in result.bse],
        pvalues=[float(v) for v in result.pvalues],
        n=int(result.nobs),
        r_squared=float(result.rsquared),
        cov_type=cov_type,
    )


def llr_frame(comparisons, specs):
    """One row per game: llr plus the game's rule columns, for `ols_robust`."""
    rows = []
    for c in comparisons:
        spec = specs.get(c.game_id)
        if spec is None:
            continue
        rows.append({"llr": c.llr, "points_rule": spec.points_rule.value, "bonus_rule": spec.bonus_rule.name,
                     "bonus_size": spec.bonus_size, "game_id": c.game_id})
    return pd.DataFrame(rows)


# --- support coverage -----------------------------------------------------

@dataclass
class CoverageSummary:
    argmax: float
    top3: float
    positive: float
    any_in_support: float
    all_in_support: float
    n_responses: int
    n_games: int

    def to_dict(self):
        return dict(self.__dict__)


def _ranked(probs):
    # descending probability, ties toward the higher action index
    return sorted(range(len(probs)), key=lambda i: (-probs[i], -i))


def support_coverage(responses, models):
    """Shares of humans (and games) falling on the model's mode, top three and support."""
    on_argmax = on_top3 = on_support = 0
    any_games = all_games = 0
    total = 0
    for game_id, ys in responses.items():
        model = models[game_id]
        probs = np.asarray(model.probs)
        order = _ranked(probs)
        top3 = {model.actions[i] for i in order[:3]}
        mode = model.actions[order[0]]
        inside = [model.prob_of(y) > 0 for y in ys]
        on_argmax += sum(y == mode for y in ys)
        on_top3 += sum(y in top3 for y in ys)
        on_support += sum(inside)
        any_games += any(inside)
        all_games += all(inside)
        total += len(ys)
    n_games = len(responses)
    return CoverageSummary(
        argmax=100 * on_argmax / total,
        top3=100 * on_top3 / total,
        positive=100 * on_support / total,
        any_in_support=100 * any_games / n_games,
        all_in_support=100 * all_games / n_games,
        n_responses=total,
        n_games=n_games,
    )
