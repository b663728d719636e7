"""
Fitting agent populations to human data.

Two methods: selecting mixture weights over a fixed candidate set (projected
gradient on the simplex, exact LP polish for the piecewise-linear measures),
and constructing integer prompt parameters with a Gaussian-process surrogate.
"""

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import optimize
from scipy.stats import norm, qmc
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import ConstantKernel, Matern, WhiteKernel
from tqdm.auto import tqdm

from utils.error_logger import get_error_tracker
from utils.errors import BudgetExhausted, MismatchedSettings, SupportViolation


class DistanceKind(Enum):
    ForwardKL = "forward-kl"
    CdfAbsolute = "cdf-abs"
    MeanAbsoluteError = "mae"
    EarthMover1D = "emd"


PIECEWISE_LINEAR = (DistanceKind.CdfAbsolute, DistanceKind.MeanAbsoluteError, DistanceKind.EarthMover1D)


@dataclass(frozen=True)
class DistanceMeasure:
    kind: DistanceKind = DistanceKind.CdfAbsolute
    smoothing: float = None

    @classmethod
    def parse(cls, text, smoothing=None):
        return cls(DistanceKind(text), smoothing)

    def to_dict(self):
        return {"kind": self.kind.value, "smoothing": self.smoothing}


def _probs(dist):
    return np.asarray(getattr(dist, "probs", dist), dtype=np.float64)


def _spacing(actions, k):
    if actions is not None and all(isinstance(a, (int, np.integer)) for a in actions):
        return np.diff(np.asarray(actions, dtype=np.float64))
    return np.ones(k - 1)


def _check_same_actions(P, Q):
    a, b = getattr(P, "actions", None), getattr(Q, "actions", None)
    if a is not None and b is not None and tuple(a) != tuple(b):
        raise MismatchedSettings("distributions cover different action sets")
    if len(_probs(P)) != len(_probs(Q)):
        raise MismatchedSettings("distributions have different lengths")
    return a if a is not None else b


def distance(P, Q, measure):
    """d(P, Q) with P the reference (human) distribution."""
    actions = _check_same_actions(P, Q)
    p, q = _probs(P), _probs(Q)
    kind = measure.kind
    if kind is DistanceKind.ForwardKL:
        if measure.smoothing:
            q = (1 - measure.smoothing) * q + measure.smoothing / len(q)
        mask = p > 0
        if np.any(q[mask] <= 0):
            raise SupportViolation("model puts zero mass on an action the reference uses",
                                   cells=np.flatnonzero(mask & (q <= 0)).tolist())
        return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))
    if kind is DistanceKind.CdfAbsolute:
        return float(np.abs(np.cumsum(p) - np.cumsum(q)).sum())
    if kind is DistanceKind.MeanAbsoluteError:
        return float(np.abs(p - q).mean())
    if kind is DistanceKind.EarthMover1D:
        gaps = np.abs(np.cumsum(p) - np.cumsum(q))[:-1]
        return float(np.sum(gaps * _spacing(actions, len(p))))
    raise ValueError(f"unknown distance {kind}")


def mean_distance(targets, models, measure):
    if len(targets) != len(models):
        raise MismatchedSettings("one model distribution per target is required")
    return float(np.mean([distance(t, m, measure) for t, m in zip(targets, models)]))


def improvement_over_baseline(target, fitted, baseline, measure):
    """d(target, baseline) - d(target, fitted); positive when the fit is closer."""
    return distance(target, baseline, measure) - distance(target, fitted, measure)


# --- mixture selection ----------------------------------------------------

def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u) - 1.0
    ind = np.arange(1, len(v) + 1)
    rho = np.count_nonzero(u - cssv / ind > 0)
    theta = cssv[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


@dataclass
class MixtureFit:
    weights: np.ndarray
    objective: float
    trace: list = field(default_factory=list)
    restarts: int = 0
    polished: bool = False
    measure: DistanceMeasure = None

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "objective": self.objective,
            "trace": self.trace,
            "restarts": self.restarts,
            "polished": self.polished,
            "measure": self.measure.to_dict() if self.measure else None,
        }


class _MixtureProblem:
    """Objective and subgradient of w -> mean_s d(P_s, sum_j w_j C_js)."""

    def __init__(self, candidates, targets, measure):
        self.measure = measure
        self.blocks = []
        for cand, target in zip(candidates, targets):
            C = np.vstack([_probs(c) for c in cand])
            for c in cand:
                _check_same_actions(target, c)
            self.blocks.append((C, _probs(target), getattr(target, "actions", None)))
        self.n_candidates = self.blocks[0][0].shape[0]

    def value(self, w):
        total = 0.0
        for C, p, actions in self.blocks:
            try:
                total += distance(p, w @ C, self.measure) if actions is None else distance(
                    _Dist(actions, p), _Dist(actions, w @ C), self.measure)
            except SupportViolation:
                return np.inf
        return total / len(self.blocks)

    def gradient(self, w):
        grad = np.zeros(self.n_candidates)
        kind = self.measure.kind
        for C, p, actions in self.blocks:
            q = w @ C
            if kind is DistanceKind.ForwardKL:
                eps = self.measure.smoothing or 0.0
                qs = (1 - eps) * q + eps / len(q)
                mask = p > 0
                grad -= (1 - eps) * (C[:, mask] @ (p[mask] / np.maximum(qs[mask], 1e-300)))
            elif kind is DistanceKind.MeanAbsoluteError:
                grad += C @ np.sign(q - p) / len(p)
            else:
                signs = np.sign(np.cumsum(q) - np.cumsum(p))
                weights = np.ones(len(p)) if kind is DistanceKind.CdfAbsolute else np.append(_spacing(actions, len(p)), 0.0)
                grad += np.cumsum(C, axis=1) @ (signs * weights)
        return grad / len(self.blocks)

    def linprog_polish(self):
        """Exact minimiser for the piecewise-linear measures."""
        J = self.n_candidates
        rows, rhs, costs = [], [], []
        n_aux = sum(C.shape[1] for C, _, _ in self.blocks)
        offset = 0
        for C, p, actions in self.blocks:
            K = C.shape[1]
            if self.measure.kind is DistanceKind.MeanAbsoluteError:
                A, b, c = C.T, p, np.full(K, 1.0 / K)
            else:
                A, b = np.cumsum(C, axis=1).T, np.cumsum(p)
                c = np.ones(K) if self.measure.kind is DistanceKind.CdfAbsolute else np.append(_spacing(actions, K), 0.0)
            for k in range(K):
                aux = np.zeros(n_aux)
                aux[offset + k] = -1.0
                rows.append(np.concatenate([A[k], aux]))
                rhs.append(b[k])
                rows.append(np.concatenate([-A[k], aux]))
                rhs.append(-b[k])
            costs.append(c / len(self.blocks))
            offset += K
        cost = np.concatenate([np.zeros(J)] + costs)
        result = optimize.linprog(
            cost,
            A_ub=np.vstack(rows),
            b_ub=np.array(rhs),
            A_eq=np.concatenate([np.ones(J), np.zeros(n_aux)])[None, :],
            b_eq=[1.0],
            bounds=[(0, None)] * (J + n_aux),
            method="highs",
        )
        if not result.success:
            return None
        return project_simplex(result.x[:J])


@dataclass
class _Dist:
    actions: tuple
    probs: np.ndarray


def _descend(problem, w, max_iter, tol, armijo=1e-4):
    f = problem.value(w)
    trace = [f]
    step = 1.0
    for _ in range(max_iter):
        g = problem.gradient(w)
        accepted = False
        eta = step
        for _ in range(40):
            candidate = project_simplex(w - eta * g)
            f_new = problem.value(candidate)
            if f_new <= f + armijo * g @ (candidate - w) and f_new <= f:
                accepted = True
                break
            eta *= 0.5
        if not accepted or f - f_new <= tol:
            if accepted:
                w, f = candidate, f_new
                trace.append(f)
            break
        w, f = candidate, f_new
        trace.append(f)
        step = min(eta * 2.0, 1e6)
    return w, f, trace


def select_mixture(candidates, target, measure, restarts=64, seed=0, max_iter=500, tol=1e-12):
    """
    Simplex weights over candidate distributions minimising d(target, mixture).

    `candidates` is a list of distributions over the target's actions. For
    several training settings at once pass a list of targets and, per target,
    the list of candidate distributions in the same candidate order.
    """
    if isinstance(target, (list, tuple)):
        targets, per_setting = list(target), list(candidates)
    else:
        targets, per_setting = [target], [list(candidates)]
    problem = _MixtureProblem(per_setting, targets, measure)
    J = problem.n_candidates
    if J == 1:
        w = np.ones(1)
        value = problem.value(w)
        return MixtureFit(w, value, [value], 1, False, measure)

    rng = np.random.default_rng(seed)
    starts = [np.eye(J)[j] for j in range(J)] + [np.full(J, 1.0 / J)]
    starts += list(rng.dirichlet(np.ones(J), size=max(restarts - len(starts), 0)))

    if measure.kind is DistanceKind.ForwardKL and not np.isfinite(problem.value(np.full(J, 1.0 / J))):
        raise SupportViolation("no mixture covers the reference support; set a smoothing epsilon")

    best_w, best_f, trace = None, np.inf, []
    for start in starts:
        if not np.isfinite(problem.value(start)):
            start = 0.5 * start + 0.5 / J
        w, f, path = _descend(problem, start, max_iter, tol)
        trace.extend(min(best_f, value) for value in path)
        if f < best_f:
            best_w, best_f = w, f

    polished = False
    if measure.kind in PIECEWISE_LINEAR:
        exact = problem.linprog_polish()
        if exact is not None:
            value = problem.value(exact)
            if value <= best_f:
                best_w, best_f, polished = exact, value, True
                trace.append(best_f)
    get_error_tracker().log_success("select_mixture")
    return MixtureFit(best_w, float(best_f), [float(v) for v in trace], len(starts), polished, measure)


def grid_scan(candidates, target, measure, resolution=100):
    """Best weights on the simplex lattice with step 1/resolution (test oracle for small J)."""
    problem = _MixtureProblem([list(candidates)], [target], measure)
    J = problem.n_candidates
    best_w, best_f = None, np.inf
    for head in itertools.product(range(resolution + 1), repeat=J - 1):
        if sum(head) > resolution:
            continue
        w = np.array(list(head) + [resolution - sum(head)], dtype=np.float64) / resolution
        f = problem.value(w)
        if f < best_f:
            best_w, best_f = w, f
    return best_w, best_f


# --- parameter construction -----------------------------------------------

@dataclass
class ParamFit:
    best: list
    best_objective: float
    log: list = field(default_factory=list)
    budget_used: int = 0

    def to_dict(self):
        return {"best": self.best, "best_objective": self.best_objective, "log": self.log,
                "budget_used": self.budget_used}


def _box_bounds(names, box, slots):
    low = np.array([box[n][0] for n in names] * slots, dtype=np.int64)
    high = np.array([box[n][1] for n in names] * slots, dtype=np.int64)
    return low, high


def _to_assignment(point, names, slots):
    per = len(names)
    return [{n: int(point[s * per + i]) for i, n in enumerate(names)} for s in range(slots)]


def expected_improvement(mu, sigma, best, xi=0.0):
    """EI for minimisation."""
    sigma = np.maximum(sigma, 1e-12)
    improvement = best - mu - xi
    z = improvement / sigma
    return improvement * norm.cdf(z) + sigma * norm.pdf(z)


def construct_params(template, slots, box, targets, measure, budget, evaluator, seed=0,
                     target_value=None, candidate_pool=4096, progress=False):
    """
    Search integer prompt parameters for `slots` agents.

    `evaluator(assignment)` receives one dict of parameter values per slot
    and returns the model distributions over `targets`. The first
    budget[0] points come from a Latin hypercube, the next budget[1] from
    expected improvement under a Matern-2.5 Gaussian process.
    """
    names = list(box or template.parameters)
    box = dict(box or template.parameters)
    init, guided = budget
    low, high = _box_bounds(names, box, slots)
    sizes = high - low + 1
    box_size = int(np.prod(sizes.astype(object)))
    rng = np.random.default_rng(seed)
    tracker = get_error_tracker()

    evaluated = {}
    log = []

    def evaluate(point, phase):
        key = tuple(int(v) for v in point)
        assignment = _to_assignment(key, names, slots)
        objective = mean_distance(targets, evaluator(assignment), measure)
        evaluated[key] = objective
        log.append({"index": len(log), "phase": phase, "params": assignment, "objective": objective})
        return objective

    def random_unevaluated():
        for _ in range(10_000):
            point = tuple(int(v) for v in rng.integers(low, high + 1))
            if point not in evaluated:
                return point
        remaining = [p for p in itertools.product(*[range(a, b + 1) for a, b in zip(low, high)]) if p not in evaluated]
        return remaining[0] if remaining else None

    sampler = qmc.LatinHypercube(d=len(low), seed=rng)
    unit = sampler.random(init) if init else np.empty((0, len(low)))
    steps = tqdm(range(init + guided), desc="construct") if progress else range(init + guided)
    unit_iter = iter(unit)
    for step in steps:
        if len(evaluated) >= box_size:
            break
        if step < init:
            u = next(unit_iter)
            point = tuple(int(v) for v in np.clip(np.floor(low + u * sizes), low, high))
            if point in evaluated:
                point = random_unevaluated()
            evaluate(point, "init")
            continue

        X = (np.array(list(evaluated.keys()), dtype=np.float64) - low) / np.maximum(high - low, 1)
        y = np.array(list(evaluated.values()))
        kernel = ConstantKernel(1.0) * Matern(length_scale=np.ones(len(low)), nu=2.5) + WhiteKernel(1e-4)
        gp = GaussianProcessRegressor(kernel=kernel, normalize_y=True, n_restarts_optimizer=2,
                                      random_state=int(rng.integers(2**31)))
        gp.fit(X, y)

        if box_size <= candidate_pool:
            pool = [p for p in itertools.product(*[range(a, b + 1) for a, b in zip(low, high)]) if p not in evaluated]
        else:
            pool = {tuple(int(v) for v in row) for row in rng.integers(low, high + 1, size=(candidate_pool, len(low)))}
            pool = sorted(p for p in pool if p not in evaluated)
        if not pool:
            break
        P = (np.array(pool, dtype=np.float64) - low) / np.maximum(high - low, 1)
        mu, sigma = gp.predict(P, return_std=True)
        ei = expected_improvement(mu, sigma, y.min())
        evaluate(pool[int(np.argmax(ei))], "guided")

    best_entry = min(log, key=lambda e: (e["objective"], e["index"]))
    fit = ParamFit(best_entry["params"], best_entry["objective"], log, len(log))
    if target_value is not None and fit.best_objective > target_value:
        tracker.log_error("budget_exhausted", {"best": fit.best_objective, "target": target_value,
                                               "evaluations": len(log)}, component="optimize")
        raise BudgetExhausted("construction budget spent before reaching the target value", best=fit,
                              best_objective=fit.best_objective, target=target_value)
    return fit
