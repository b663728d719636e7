"""
End-to-end evaluation runs.

A run is described by a JSON manifest: the run config, the inputs (human
responses, game settings, model distributions), and the reference models to
compare against. `run_evaluation` turns a manifest into an EvaluationBundle
and `write_reports` renders it as JSON, Markdown and CSV. Every report
embeds the manifest hash and nothing time-dependent, so a replay against
warm caches rewrites the same bytes.
"""

import datetime
import glob
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats as sps
from tqdm.auto import tqdm

from utils import settings
from utils.agent_logic import (
    BackendPersona,
    Mixture,
    RandomPure,
    ResponseDistribution,
    Setting,
    Uniform,
    elicit_distribution,
    load_settings,
    model_from_dict,
    predicted_distribution,
    scale_mixture_to_population,
)
from utils.data_prep import (
    fetch_input,
    file_sha256,
    ingest_human_csv,
    load_ar_basic_reconstructed,
    load_ar_dataset,
    load_two_stage_dataset,
    published_nash_percent,
)
from utils.equilibria_logic import Provenance, select_or_unresolved, solve_nash, symmetric_equilibria
from utils.error_logger import get_error_tracker
from utils.errors import InputUnavailable, MissingModelDistribution, RankDeficient
from utils.game_logic import GameSpec, money_request_variant, sample_frame_from_json
from utils.openai_logic import ResponseCache, make_backend
from utils.settings import RunConfig, derive_seed
from utils.stats_logic import (
    STAR_THRESHOLDS,
    binomial_se,
    compare_models,
    llr_frame,
    ols_robust,
    proportion_pvalue,
    significance_stars,
    support_coverage,
)

REFERENCES = ("baseline", "hs_nash", "uniform", "random_pure")
BUNDLED_HUMANS = {
    "bundled:money_request_ar": ("money_request_ar.json", load_ar_dataset),
    "bundled:ar_basic_reconstructed": ("ar_basic_reconstructed.csv", load_ar_basic_reconstructed),
    "bundled:two_stage_allocation": ("two_stage_allocation.json", load_two_stage_dataset),
}


# --- manifest -------------------------------------------------------------

def _canonical(data):
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)


@dataclass
class RunManifest:
    """What a run reads and how it is configured. `created` is not hashed."""

    config: RunConfig = field(default_factory=RunConfig)
    inputs: dict = field(default_factory=dict)
    references: tuple = REFERENCES
    output_dir: str = "reports"
    name: str = "run"
    tool_version: str = settings.TOOL_VERSION
    input_hashes: dict = field(default_factory=dict)
    created: str = None
    base_dir: str = None

    @property
    def seeds(self):
        root = self.config.root_seed
        return {
            "stats": derive_seed(root, "pipeline", "stats"),
            "random_pure": derive_seed(root, "pipeline", "random_pure"),
            "elicit": derive_seed(root, "pipeline", "elicit"),
        }

    def hashable(self):
        return {
            "name": self.name,
            "config": self.config.to_dict(),
            "inputs": self.inputs,
            "input_hashes": self.input_hashes,
            "references": list(self.references),
            "seeds": self.seeds,
            "tool_version": self.tool_version,
        }

    @property
    def hash(self):
        return hashlib.sha256(_canonical(self.hashable()).encode("utf-8")).hexdigest()

    def to_dict(self):
        return {**self.hashable(), "output_dir": self.output_dir, "created": self.created, "hash": self.hash}

    @classmethod
    def from_dict(cls, data):
        return cls(
            config=RunConfig.from_dict(data.get("config")),
            inputs=dict(data.get("inputs", {})),
            references=tuple(data.get("references", REFERENCES)),
            output_dir=data.get("output_dir", "reports"),
            name=data.get("name", "run"),
            tool_version=data.get("tool_version", settings.TOOL_VERSION),
            input_hashes=dict(data.get("input_hashes", {})),
            created=data.get("created"),
        )

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            manifest = cls.from_dict(json.load(f))
        manifest.base_dir = os.path.dirname(os.path.abspath(path))
        return manifest

    def resolve_path(self, path):
        if self.base_dir is None or os.path.isabs(path):
            return path
        return os.path.join(self.base_dir, path)

    def write(self, path):
        if self.created is None:
            self.created = datetime.datetime.now().strftime("%Y-%m-%dT%H:%M:%S")
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
        return path


def _rebase_inputs(inputs, base):
    def rebase(value):
        if isinstance(value, dict):
            return {k: rebase(v) if k in ("path", "model", "fixtures") else v for k, v in value.items()}
        if isinstance(value, str) and not value.startswith(("http://", "https://", "bundled:")) and not os.path.isabs(value):
            return os.path.join(base, value)
        return value

    return {role: rebase(value) for role, value in inputs.items()}


def _path_hash(path):
    if os.path.isdir(path):
        h = hashlib.sha256()
        for name in sorted(glob.glob(os.path.join(path, "**", "*.json"), recursive=True)):
            h.update(os.path.relpath(name, path).encode("utf-8"))
            h.update(file_sha256(name).encode("utf-8"))
        return h.hexdigest()
    return file_sha256(path)


def resolve_inputs(manifest, cache_dir=None):
    """Download URL inputs, then record a content hash for every input."""
    resolved, hashes = {}, {}
    inputs = _rebase_inputs(manifest.inputs, manifest.base_dir) if manifest.base_dir else manifest.inputs
    for role, value in sorted(inputs.items()):
        if isinstance(value, dict):
            entry = dict(value)
            for key in ("path", "model", "fixtures"):
                if key in entry:
                    entry[key] = fetch_input(entry[key], cache_dir)
                    hashes[f"{role}.{key}"] = _path_hash(entry[key])
            resolved[role] = entry
        elif isinstance(value, str) and value.startswith("bundled:"):
            if value not in BUNDLED_HUMANS:
                raise InputUnavailable(f"unknown bundled dataset {value!r}", choices=sorted(BUNDLED_HUMANS))
            resolved[role] = value
            hashes[role] = file_sha256(settings.data_path("humans", BUNDLED_HUMANS[value][0]))
        else:
            resolved[role] = fetch_input(value, cache_dir)
            hashes[role] = _path_hash(resolved[role])
    manifest.input_hashes = hashes
    return resolved


# --- loading inputs ---------------------------------------------------------

def load_game_settings(path):
    """Settings keyed by game id from a sample frame or a settings file."""
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if isinstance(data, dict) and "draws" in data:
        specs = sample_frame_from_json(data).specs
        return {spec.spec_id: Setting.from_spec(spec) for spec in specs}
    return {s.name or s.id: s for s in load_settings(path)}


def _load_humans(value, game_settings):
    if isinstance(value, str) and value.startswith("bundled:"):
        return BUNDLED_HUMANS[value][1]()
    return ingest_human_csv(value, game_settings or None)


def _needs_backend(model):
    if isinstance(model, BackendPersona):
        return True
    if isinstance(model, Mixture):
        return any(_needs_backend(c) for c in model.components)
    return False


def read_distributions(path):
    if os.path.isdir(path):
        table = {}
        for name in sorted(glob.glob(os.path.join(path, "*.json"))):
            with open(name, "r", encoding="utf-8") as f:
                table[os.path.splitext(os.path.basename(name))[0]] = ResponseDistribution.from_dict(json.load(f))
        return table, None
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if "type" in data:
        return None, model_from_dict(data)
    data = data.get("distributions", data)
    return {game_id: ResponseDistribution.from_dict(d) for game_id, d in data.items()}, None


def load_model_distributions(role, spec, game_settings, seed, offline=None, progress=False):
    """
    One distribution per game for a model input.

    `spec` is a path (distribution table, directory, or model JSON) or a dict
    with `path`/`model`, `draws`, `backend` and `fixtures`.
    """
    spec = {"path": spec} if isinstance(spec, str) else dict(spec)
    table, model = read_distributions(spec.get("path") or spec["model"])
    if table is not None:
        for game_id, setting in game_settings.items():
            if game_id in table and tuple(table[game_id].actions) != tuple(setting.actions):
                raise MissingModelDistribution("distribution covers a different action set", game=game_id, model=role)
        return table

    backend = cache = None
    if _needs_backend(model):
        kwargs = {"fixture_path": spec["fixtures"]} if spec.get("fixtures") else {}
        backend = make_backend(spec.get("backend", "openai"), offline=offline, **kwargs)
        cache = ResponseCache()
    draws = int(spec.get("draws", 50))
    table = {}
    items = sorted(game_settings.items())
    for game_id, setting in tqdm(items, desc=f"model {role}") if progress else items:
        if backend is None:
            table[game_id] = predicted_distribution(model, setting)
        else:
            table[game_id] = elicit_distribution(model, setting, draws, derive_seed(seed, "elicit", role, game_id),
                                                 backend, cache)
    return table


def _nash_distributions(game_settings, config):
    """HS-selected equilibrium per game; Unresolved games are left out."""
    table, outcomes = {}, {}
    for game_id, setting in sorted(game_settings.items()):
        game = setting.game()
        if game is None:
            continue
        outcome = select_or_unresolved(game, trace_grid=config.trace_steps, action_cap=config.eq_action_cap,
                                       system_budget=config.eq_system_budget, time_budget=config.eq_time_budget)
        outcomes[game_id] = outcome
        if outcome.provenance is Provenance.Unresolved:
            continue
        probs = np.array([float(p) for p in outcome.selected.row])
        table[game_id] = ResponseDistribution.from_probs(setting.id, setting.actions, probs)
    return table, outcomes


def _require(table, game_ids, model):
    for game_id in game_ids:
        if game_id not in table:
            get_error_tracker().log_error("missing_model_distribution", {"game": game_id, "model": model},
                                          component="pipeline")
            raise MissingModelDistribution(f"no {model} distribution for game {game_id}", game=game_id, model=model)


# --- evaluation -----------------------------------------------------------

@dataclass
class EvaluationBundle:
    manifest: RunManifest
    reports: dict
    comparisons: dict
    coverage: dict
    exclusions: dict
    humans: dict
    provenance: dict = field(default_factory=dict)

    @property
    def manifest_hash(self):
        return self.manifest.hash

    def to_dict(self):
        return {
            "manifest_hash": self.manifest_hash,
            "manifest": self.manifest.hashable(),
            "humans": self.humans,
            "exclusions": self.exclusions,
            "equilibrium_provenance": self.provenance,
            "coverage": {name: c.to_dict() for name, c in sorted(self.coverage.items())},
            "reports": {
                f"{eps:g}": {ref: report.to_dict() for ref, report in sorted(by_ref.items())}
                for eps, by_ref in sorted(self.reports.items())
            },
        }


def run_evaluation(manifest, offline=None, cache_dir=None, progress=False):
    """
    Compare the optimized model against every reference on the human data.

    For each epsilon in the grid: smooth -> per-game llr -> aggregate and
    tests, plus HC1 regressions on the game rules where game specs exist.
    Coverage is computed on the unsmoothed models.
    """
    print(f"Start: Evaluation run {manifest.name}")
    tracker = get_error_tracker()
    config = manifest.config
    inputs = resolve_inputs(manifest, cache_dir)
    if "humans" not in inputs or "optimized" not in inputs:
        raise InputUnavailable("a manifest needs at least `humans` and `optimized` inputs",
                               given=sorted(inputs))

    declared = load_game_settings(inputs.get("games"))
    humans = _load_humans(inputs["humans"], declared)
    game_settings = {**humans.settings, **{g: s for g, s in declared.items() if g in humans.responses}}
    responses = {g: ys for g, ys in sorted(humans.responses.items()) if ys}
    game_ids = sorted(responses)
    if not game_ids:
        raise InputUnavailable("the human input has no individual responses", source=humans.source)
    seeds = manifest.seeds

    models = {"optimized": load_model_distributions("optimized", inputs["optimized"], game_settings,
                                                    seeds["elicit"], offline, progress)}
    _require(models["optimized"], game_ids, "optimized")
    references = {}
    exclusions = {}
    outcomes = {}
    for ref in manifest.references:
        if ref == "baseline":
            if "baseline" not in inputs:
                raise MissingModelDistribution("baseline reference requested without a baseline input", model="baseline")
            references[ref] = load_model_distributions("baseline", inputs["baseline"], game_settings, seeds["elicit"],
                                                       offline, progress)
            _require(references[ref], game_ids, "baseline")
        elif ref == "uniform":
            references[ref] = {g: predicted_distribution(Uniform(), game_settings[g]) for g in game_ids}
        elif ref == "random_pure":
            model = RandomPure(seed=seeds["random_pure"])
            references[ref] = {g: predicted_distribution(model, game_settings[g]) for g in game_ids}
        elif ref == "hs_nash":
            table, outcomes = _nash_distributions({g: game_settings[g] for g in game_ids}, config)
            unresolved = sorted(g for g, o in outcomes.items() if o.provenance is Provenance.Unresolved)
            not_games = sorted(set(game_ids) - set(outcomes))
            exclusions["hs_nash"] = {"count": len(unresolved), "games": unresolved, "not_a_game": not_games}
            if unresolved or not_games:
                tracker.log_error("excluded_games", {"reference": "hs_nash", "unresolved": unresolved,
                                                     "not_a_game": not_games}, component="pipeline")
            references[ref] = table
            pure = {g for g, o in outcomes.items() if o.selected is not None and o.selected.is_pure}
            references["hs_nash_pure"] = {g: d for g, d in table.items() if g in pure}
            references["hs_nash_mixed"] = {g: d for g, d in table.items() if g not in pure}
        else:
            raise ValueError(f"unknown reference {ref!r}; choose from {REFERENCES}")

    specs = {g: GameSpec.from_dict(s.payoff_semantics["game_spec"])
             for g, s in game_settings.items() if (s.payoff_semantics or {}).get("game_spec")}
    reports, comparisons = {}, {}
    for eps in config.epsilons:
        reports[eps], comparisons[eps] = {}, {}
        for ref, table in references.items():
            subset = {g: responses[g] for g in game_ids if g in table}
            if len(subset) < 2:
                tracker.log_error("too_few_games", {"reference": ref, "epsilon": eps, "games": len(subset)},
                                  component="pipeline")
                continue
            report, per_game = compare_models(
                subset, models["optimized"], table, epsilon=eps, bootstrap_draws=config.bootstrap_draws,
                seed=derive_seed(seeds["stats"], "compare", ref, f"{eps:g}"),
                permutation_iterations=config.permutation_iterations, label=ref,
            )
            report.regression = _regression(per_game, specs, config, ref, eps)
            reports[eps][ref] = report
            comparisons[eps][ref] = per_game
        print(f"Done: epsilon={eps:g}, {len(reports[eps])} comparisons")

    coverage = {"optimized": support_coverage(responses, models["optimized"])}
    for ref in ("baseline", "hs_nash"):
        if ref in references:
            covered = {g: ys for g, ys in responses.items() if g in references[ref]}
            if covered:
                coverage[ref] = support_coverage(covered, references[ref])

    bundle = EvaluationBundle(
        manifest=manifest,
        reports=reports,
        comparisons=comparisons,
        coverage=coverage,
        exclusions=exclusions,
        humans=humans.summary(),
        provenance={g: o.provenance.value for g, o in sorted(outcomes.items())},
    )
    print(f"Done: Evaluation run {manifest.name} ({manifest.hash[:12]})")
    return bundle


def _regression(per_game, specs, config, ref, eps):
    frame = llr_frame(per_game, specs)
    if len(frame) < 3:
        return None
    categorical = [c for c in ("points_rule", "bonus_rule") if frame[c].nunique() > 1]
    if not categorical:
        return None
    try:
        return ols_robust(frame, "llr", categorical, cov_type=config.cov_type)
    except RankDeficient as e:
        get_error_tracker().log_error("regression_skipped", {"reference": ref, "epsilon": eps, **e.to_log()},
                                      component="pipeline")
        return None


# --- reports --------------------------------------------------------------

def short_term(term):
    """`C(points_rule, Treatment(reference='N'))[T.NMinus1]` -> `points_rule:NMinus1`."""
    if not term.startswith("C("):
        return term
    column = term[2:].split(",")[0].split(")")[0]
    level = term.rsplit("[T.", 1)[-1].rstrip("]")
    return f"{column}:{level}"


def _fmt(value, digits=3):
    return "" if value is None else f"{value:.{digits}f}"


def render_markdown(bundle):
    lines = [
        f"# Evaluation report: {bundle.manifest.name}",
        "",
        f"Manifest hash: `{bundle.manifest_hash}`",
        "",
        f"Human data: {bundle.humans['source']}, {bundle.humans['games']} games, "
        f"{bundle.humans['responses']} responses.",
        "",
    ]
    for eps, by_ref in sorted(bundle.reports.items()):
        lines += [f"## Optimized vs references (epsilon = {eps:g})", "",
                  "| Reference | Games | Mean LLR (SE) | exp(mean) | Best predictor (SE) | 95% CI | Wilcoxon p | Permutation p |",
                  "|---|---|---|---|---|---|---|---|"]
        for ref, r in sorted(by_ref.items()):
            p = r.proportion
            lines.append(
                f"| {ref} | {r.n_games} | {_fmt(r.mean_llr)} ({_fmt(r.bootstrap_se)}) | {_fmt(r.ratio, 2)} | "
                f"{_fmt(p.proportion)}{significance_stars(p.pvalue)} ({_fmt(p.se)}) | "
                f"[{_fmt(r.ci[0])}, {_fmt(r.ci[1])}] | {r.wilcoxon_p:.3g} | {r.permutation_p:.3g} |"
            )
        lines.append("")
        for ref, r in sorted(by_ref.items()):
            if r.regression is None:
                continue
            frame = r.regression.to_frame()
            lines += [f"### Regression of LLR on game rules: {ref} (n = {r.regression.n}, "
                      f"R² = {r.regression.r_squared:.3f})", "", "| Term | Coef | SE |", "|---|---|---|"]
            lines += [f"| {short_term(t)} | {c:.3f}{s} | ({se:.3f}) |"
                      for t, c, se, s in zip(frame["term"], frame["coef"], frame["se"], frame["stars"])]
            lines.append("")
    if bundle.coverage:
        lines += ["## Support coverage (epsilon = 0)", "",
                  "| Model | Argmax % | Top-3 % | Positive % | Any in support % | All in support % |",
                  "|---|---|---|---|---|---|"]
        for name, c in sorted(bundle.coverage.items()):
            lines.append(f"| {name} | {c.argmax:.1f} | {c.top3:.1f} | {c.positive:.1f} | {c.any_in_support:.1f} | "
                         f"{c.all_in_support:.1f} |")
        lines.append("")
    for ref, info in sorted(bundle.exclusions.items()):
        lines.append(f"Excluded from {ref}: {info['count']} games with unresolved equilibria.")
    lines.append("Significance: " + ", ".join(f"{'*' * (i + 1)} p<{t:g}"
                                              for i, t in enumerate(sorted(STAR_THRESHOLDS, reverse=True))))
    return "\n".join(lines) + "\n"


def comparisons_frame(bundle):
    rows = [
        {"epsilon": eps, "reference": ref, "game_id": c.game_id, "n": len(c.responses), "llr": c.llr}
        for eps, by_ref in sorted(bundle.comparisons.items())
        for ref, per_game in sorted(by_ref.items())
        for c in per_game
    ]
    frame = pd.DataFrame(rows, columns=["epsilon", "reference", "game_id", "n", "llr"])
    frame.insert(0, "manifest_hash", bundle.manifest_hash)
    return frame


def write_reports(bundle, out_dir=None):
    """report.json, report.md and comparisons.csv; returns their paths."""
    out_dir = out_dir or bundle.manifest.resolve_path(bundle.manifest.output_dir)
    print(f"Start: Writing reports to {out_dir}")
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "json": os.path.join(out_dir, "report.json"),
        "markdown": os.path.join(out_dir, "report.md"),
        "csv": os.path.join(out_dir, "comparisons.csv"),
    }
    with open(paths["json"], "w", encoding="utf-8") as f:
        json.dump(bundle.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    with open(paths["markdown"], "w", encoding="utf-8") as f:
        f.write(render_markdown(bundle))
    comparisons_frame(bundle).to_csv(paths["csv"], index=False, float_format="%.12g")
    print("Done: Writing reports")
    return paths


# --- published table checks -------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def _load_published(name):
    with open(settings.data_path("published", name), "r", encoding="utf-8") as f:
        return json.load(f)


def _near_threshold(p, thresholds=STAR_THRESHOLDS, band=(0.8, 1.25)):
    return any(band[0] <= p / t <= band[1] for t in thresholds)


def _proportion_checks(table):
    checks = []
    for eps, rows in table["epsilons"].items():
        for ref, row in rows.items():
            n = table["n_games"][ref]
            se = binomial_se(row["proportion"], n)
            checks.append(Check(f"proportion_se[{eps}][{ref}]", abs(round(se, 3) - row["proportion_se"]) < 1e-9,
                                f"sqrt(p(1-p)/{n}) = {se:.4f}, printed {row['proportion_se']:.3f}"))
            pvalue = proportion_pvalue(round(row["proportion"] * n), n)
            if not _near_threshold(pvalue):
                stars = significance_stars(pvalue)
                checks.append(Check(f"proportion_stars[{eps}][{ref}]", stars == row["stars"],
                                    f"binomial p = {pvalue:.3g} -> '{stars}', printed '{row['stars']}'"))
    return checks


def _exponential_checks(table, headline):
    checks = []
    for entry in headline["likelihood_ratios"]:
        mean = table["epsilons"][f"{entry['epsilon']:g}"][entry["reference"]]["mean"]
        # the printed mean is rounded to 3 decimals, the ratio to 2
        low, high = np.exp(mean - 0.0005) - 0.005, np.exp(mean + 0.0005) + 0.005
        checks.append(Check(f"exp_mean[{entry['reference']}]", low <= entry["exp_mean"] <= high,
                            f"exp({mean}) = {np.exp(mean):.3f}, printed {entry['exp_mean']}"))
    for entry in headline["kl_reductions"]:
        pct = 100 * (entry["baseline"] - entry["optimized"]) / entry["baseline"]
        checks.append(Check(f"kl_reduction[{entry['setting']}]", round(pct) == entry["percent"],
                            f"{pct:.1f}% vs printed {entry['percent']}%"))
    return checks


def _regression_checks(regressions):
    checks = []
    df = regressions["n"] - len(regressions["terms"])
    for eps, columns in regressions["epsilons"].items():
        for ref, column in columns.items():
            mismatched = []
            for term, coef, se, stars in zip(regressions["terms"], column["coef"], column["se"], column["stars"]):
                pvalue = 2 * sps.t.sf(abs(coef / se), df)
                if not _near_threshold(pvalue) and significance_stars(pvalue) != stars:
                    mismatched.append(term)
            checks.append(Check(f"regression_stars[{eps}][{ref}]", not mismatched,
                                f"mismatched terms: {mismatched}" if mismatched else "t = coef/se agrees"))
    return checks


def _coverage_checks(headline):
    checks = []
    columns = headline["coverage_percent"]["columns"]
    for model in ("optimized", "baseline", "hs_nash"):
        c = dict(zip(columns, headline["coverage_percent"][model]))
        ok = c["argmax"] <= c["top3"] and c["argmax"] <= c["positive"] and c["all_in_support"] <= c["any_in_support"]
        checks.append(Check(f"coverage_order[{model}]", ok, str(c)))
    return checks


def _nash_checks():
    checks = []
    for variant, percent in sorted(published_nash_percent().items()):
        game = money_request_variant(variant)
        symmetric = symmetric_equilibria(solve_nash(game).equilibria)
        solved = [[round(100 * float(p)) for p in e.row] for e in symmetric]
        checks.append(Check(f"nash_row[{variant}]", solved == [percent],
                            f"solver {solved}, printed {percent}"))
    return checks


def _weights_check(headline):
    mix = headline["mixture_weights"]
    counts = [c for _, c in scale_mixture_to_population(mix["weights"], mix["population"])]
    return Check("mixture_apportionment", counts == mix["counts"], f"{counts} vs printed {mix['counts']}")


def _data_checks():
    ar = load_ar_dataset()
    reconstructed = load_ar_basic_reconstructed()
    checks = [Check("reconstructed_basic_counts",
                    reconstructed.counts["basic"].counts.tolist() == ar.counts["basic"].counts.tolist(),
                    f"{reconstructed.counts['basic'].counts.tolist()}")]
    two_stage = load_two_stage_dataset()
    bad = [g for g, d in two_stage.counts.items() if abs(d.probs.sum() - 1) > 1e-9]
    checks.append(Check("two_stage_shares", not bad and len(two_stage.counts) == 40, f"{len(two_stage.counts)} settings"))
    return checks


def published_table_checks():
    """Internal-consistency checks of the bundled published numbers."""
    print("Start: Checking published tables")
    table = _load_published("statistical_tests.json")
    headline = _load_published("headline.json")
    checks = (
        _proportion_checks(table)
        + _exponential_checks(table, headline)
        + _regression_checks(_load_published("regressions.json"))
        + _coverage_checks(headline)
        + [_weights_check(headline)]
        + _nash_checks()
        + _data_checks()
    )
    failed = [c for c in checks if not c.passed]
    for c in failed:
        get_error_tracker().log_error("published_check_failed", c.to_dict(), component="pipeline")
    print(f"Done: {len(checks) - len(failed)}/{len(checks)} published table checks passed")
    return checks
