#!/usr/bin/env python
"""
Money-request games toolkit

Sub-commands:
  family    enumerate | dedup | sample      the parametric game family
  game      render | matrix | variant       one game
  eq        solve | select | stats          Nash equilibria and HS selection
  elicit                                    response distributions of an agent model
  optimize  select | construct              mixture weights and prompt parameters
  eval      compare | grid | coverage | regress
  run       --manifest FILE [--check]       a full evaluation run

Usage:
  python manage_games.py family dedup --offsets 4-19 --out data/population.ldjson
  python manage_games.py eq select --variant basic
  python manage_games.py run --check
"""

import argparse
import json
import os
import sys

import numpy as np
from tqdm.auto import tqdm

from utils import settings
from utils.agent_logic import BackendPersona, Mixture, PromptSpec, elicit_distribution, load_model, load_settings
from utils.data_prep import ingest_human_csv
from utils.equilibria_logic import (
    hs_select,
    outcome_to_json,
    profile_to_json,
    select_or_unresolved,
    selection_statistics,
    solve_nash,
)
from utils.error_logger import get_error_tracker
from utils.errors import MoneyGamesError
from utils.game_logic import (
    FamilyConfig,
    GameSpec,
    SymmetricGame,
    dedup_full_family,
    enumerate_family,
    money_request_variant,
    payoff_matrix,
    read_population_ldjson,
    render_instructions,
    sample_frame_from_json,
    sample_frame_to_json,
    sample_games,
    write_population_ldjson,
)
from utils.openai_logic import ResponseCache, make_backend
from utils.optimize_logic import DistanceMeasure, construct_params, select_mixture
from utils.pipeline_logic import (
    RunManifest,
    load_game_settings,
    load_model_distributions,
    published_table_checks,
    read_distributions,
    run_evaluation,
    write_reports,
)
from utils.settings import derive_seed
from utils.stats_logic import compare_models, epsilon_grid, llr_frame, ols_robust, support_coverage


def _dump(data, out=None):
    text = json.dumps(data, indent=2, sort_keys=True, default=str)
    if out:
        os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
        with open(out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
        print(f"Wrote {out}")
    else:
        print(text)


def _read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _load_game(args):
    """SymmetricGame from --variant NAME or --game FILE (a game spec or a payoff matrix)."""
    if getattr(args, "variant", None):
        return money_request_variant(args.variant)
    data = _read_json(args.game)
    if "payoff" in data:
        return SymmetricGame.from_dict(data)
    return payoff_matrix(GameSpec.from_dict(data))


# --- family ---------------------------------------------------------------

def family_enumerate(args):
    config = FamilyConfig.preset(args.offsets)
    print(f"Start: Enumerating {config.raw_count} game specs")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            for spec in tqdm(enumerate_family(config), total=config.raw_count, desc="specs", mininterval=2.0):
                f.write(spec.to_json() + "\n")
    print(f"Done: {config.raw_count} raw specs")
    return True


def family_dedup(args):
    config = FamilyConfig.preset(args.offsets)
    population = dedup_full_family(config)
    if args.out:
        write_population_ldjson(population, args.out)
    _dump({"raw": config.raw_count, "unique": len(population), "digest": population.digest})
    return True


def family_sample(args):
    population = read_population_ldjson(args.population)
    frame = sample_games(population, args.n, scheme=args.scheme, seed=args.seed)
    _dump(sample_frame_to_json(frame), args.out)
    return True


# --- game -----------------------------------------------------------------

def game_render(args):
    print(render_instructions(GameSpec.from_dict(_read_json(args.spec))))
    return True


def game_matrix(args):
    _dump(payoff_matrix(GameSpec.from_dict(_read_json(args.spec))).to_dict(), args.out)
    return True


def game_variant(args):
    _dump(money_request_variant(args.name).to_dict(), args.out)
    return True


# --- eq -------------------------------------------------------------------

def eq_solve(args):
    nash = solve_nash(_load_game(args))
    _dump({
        "equilibria": [profile_to_json(p) for p in nash.equilibria],
        "degenerate": nash.degenerate,
        "eliminated": list(nash.eliminated),
        "systems_solved": nash.systems_solved,
    }, args.out)
    return True


def eq_select(args):
    outcome = hs_select(_load_game(args), pareto_filter=not args.no_pareto, trace_grid=args.trace_grid)
    _dump(outcome_to_json(outcome), args.out)
    return True


def eq_stats(args):
    if args.population.endswith(".json"):
        specs = sample_frame_from_json(_read_json(args.population)).specs
    else:
        specs = list(read_population_ldjson(args.population).specs())
    print(f"Start: Selecting equilibria for {len(specs)} games")
    outcomes = [select_or_unresolved(payoff_matrix(spec), trace_grid=args.trace_grid)
                for spec in tqdm(specs, desc="games")]
    print("Done: Selecting equilibria")
    _dump(selection_statistics(outcomes), args.out)
    return True


# --- elicit ---------------------------------------------------------------

def _backend(args):
    kwargs = {"fixture_path": args.fixtures} if getattr(args, "fixtures", None) else {}
    return make_backend(args.backend, offline=args.offline or None, **kwargs)


def elicit(args):
    model = load_model(args.model)
    targets = load_settings(args.settings)
    backend = _backend(args)
    cache = ResponseCache(args.cache_dir)
    table = {}
    for setting in tqdm(targets, desc="settings"):
        seed = derive_seed(args.seed, "elicit", setting.name or setting.id)
        table[setting.name or setting.id] = elicit_distribution(model, setting, args.n, seed, backend, cache).to_dict()
    print(f"Cache hits {cache.hits}, misses {cache.misses}")
    _dump({"distributions": table}, args.out)
    return True


# --- optimize -------------------------------------------------------------

def _table(path):
    table, model = read_distributions(path)
    if table is None:
        raise ValueError(f"{path} holds a model, not distributions")
    return table


def optimize_select(args):
    target_table = _table(args.target)
    names, candidate_tables = [], []
    for name in sorted(os.listdir(args.candidates)):
        if name.endswith(".json"):
            names.append(os.path.splitext(name)[0])
            candidate_tables.append(_table(os.path.join(args.candidates, name)))
    keys = sorted(target_table)
    targets = [target_table[k] for k in keys]
    candidates = [[table[k] for table in candidate_tables] for k in keys]
    measure = DistanceMeasure.parse(args.measure, args.smoothing)
    if len(keys) == 1:
        fit = select_mixture(candidates[0], targets[0], measure, restarts=args.restarts, seed=args.seed)
    else:
        fit = select_mixture(candidates, targets, measure, restarts=args.restarts, seed=args.seed)
    _dump({"candidates": names, "settings": keys, **fit.to_dict()}, args.out)
    return True


def optimize_construct(args):
    template = PromptSpec.from_dict(_read_json(args.template))
    box = {k: tuple(v) for k, v in _read_json(args.box).items()} if args.box else None
    target_table = _table(args.targets)
    by_name = {s.name or s.id: s for s in load_settings(args.settings)}
    keys = sorted(target_table)
    targets = [target_table[k] for k in keys]
    backend = _backend(args)
    cache = ResponseCache(args.cache_dir)
    init, guided = (int(part) for part in args.budget.split("+"))

    def evaluator(assignment):
        personas = [BackendPersona(template, values=values, name=f"slot{i}") for i, values in enumerate(assignment)]
        model = Mixture(personas, np.full(len(personas), 1.0 / len(personas)), name="constructed")
        return [elicit_distribution(model, by_name[k], args.draws, derive_seed(args.seed, "construct", k), backend, cache)
                for k in keys]

    fit = construct_params(template, args.slots, box, targets, DistanceMeasure.parse(args.measure, args.smoothing),
                           (init, guided), evaluator, seed=args.seed, target_value=args.target_value, progress=True)
    _dump(fit.to_dict(), args.out)
    return True


# --- eval -----------------------------------------------------------------

def _eval_inputs(args, *roles):
    declared = load_game_settings(args.games) if args.games else {}
    if args.settings:
        declared.update({s.name or s.id: s for s in load_settings(args.settings)})
    humans = ingest_human_csv(args.humans, declared or None)
    game_settings = {**humans.settings, **{g: s for g, s in declared.items() if g in humans.responses}}
    tables = [load_model_distributions(role, getattr(args, role), game_settings, args.seed, args.offline or None)
              for role in roles]
    return humans, game_settings, tables


def eval_compare(args):
    humans, _, (a, b) = _eval_inputs(args, "model_a", "model_b")
    report, _ = compare_models(humans.responses, a, b, epsilon=args.epsilon, bootstrap_draws=args.bootstrap,
                               seed=args.seed, permutation_iterations=args.permutations, label="a_vs_b")
    _dump(report.to_dict(), args.out)
    return True


def eval_grid(args):
    humans, _, (a, b) = _eval_inputs(args, "model_a", "model_b")
    epsilons = tuple(float(e) for e in args.epsilons.split(","))
    reports = epsilon_grid(humans.responses, a, b, epsilons=epsilons, bootstrap_draws=args.bootstrap, seed=args.seed,
                           permutation_iterations=args.permutations)
    _dump({f"{eps:g}": r.to_dict() for eps, r in reports.items()}, args.out)
    return True


def eval_coverage(args):
    humans, _, (model,) = _eval_inputs(args, "model_a")
    _dump(support_coverage(humans.responses, model).to_dict(), args.out)
    return True


def eval_regress(args):
    humans, game_settings, (a, b) = _eval_inputs(args, "model_a", "model_b")
    _, comparisons = compare_models(humans.responses, a, b, epsilon=args.epsilon, bootstrap_draws=args.bootstrap,
                                    seed=args.seed, permutation_iterations=args.permutations)
    specs = {g: GameSpec.from_dict(s.payoff_semantics["game_spec"])
             for g, s in game_settings.items() if (s.payoff_semantics or {}).get("game_spec")}
    table = ols_robust(llr_frame(comparisons, specs), "llr", categorical=args.by.split(","))
    print(table.to_frame().to_string(index=False))
    _dump(table.to_dict(), args.out)
    return True


# --- run ------------------------------------------------------------------

def run(args):
    ok = True
    if args.check:
        checks = published_table_checks()
        for check in checks:
            print(f"{'PASS' if check.passed else 'FAIL'}  {check.name}: {check.detail}")
        ok = all(check.passed for check in checks)
    if args.manifest:
        manifest = RunManifest.load(args.manifest)
        bundle = run_evaluation(manifest, offline=args.offline or None, progress=True)
        paths = write_reports(bundle, args.out)
        for kind, path in sorted(paths.items()):
            print(f"- {kind}: {path}")
    elif not args.check:
        print("Nothing to do: give --manifest FILE and/or --check")
        return False
    return ok


# --- argument parsing -------------------------------------------------------

def _add_eval_args(parser, roles=("model_a", "model_b")):
    parser.add_argument("--humans", required=True, help="CSV with game_id,subject_id,action")
    parser.add_argument("--settings", help="Settings JSON for non-variant games")
    parser.add_argument("--games", help="Sample frame JSON (family games, needed for regressions)")
    for role in roles:
        parser.add_argument(f"--{role.replace('_', '-')}", dest=role, required=True,
                            help="Distribution table, directory of distributions, or model JSON")
    parser.add_argument("--bootstrap", type=int, default=10_000, help="Bootstrap draws (default: 10000)")
    parser.add_argument("--permutations", type=int, default=100_000, help="Sign permutations (default: 100000)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--offline", action="store_true")
    parser.add_argument("--out", help="Write JSON here instead of printing")


def _add_backend_args(parser):
    parser.add_argument("--backend", choices=["fixture", "http", "openai"], default="openai")
    parser.add_argument("--fixtures", help="Recorded transcripts for the fixture backend")
    parser.add_argument("--cache-dir", default=settings.CACHE_DIR)
    parser.add_argument("--offline", action="store_true", help="Forbid network access")


def build_parser():
    parser = argparse.ArgumentParser(description="Money-request games toolkit")
    commands = parser.add_subparsers(dest="command", required=True)

    family = commands.add_parser("family", help="The parametric game family").add_subparsers(dest="action", required=True)
    p = family.add_parser("enumerate")
    p.add_argument("--offsets", choices=FamilyConfig.PRESETS, default="4-19")
    p.add_argument("--out", help="LDJSON file for the raw specs")
    p.set_defaults(handler=family_enumerate)
    p = family.add_parser("dedup")
    p.add_argument("--offsets", choices=FamilyConfig.PRESETS, default="4-19")
    p.add_argument("--out", help="LDJSON file for the unique games")
    p.set_defaults(handler=family_dedup)
    p = family.add_parser("sample")
    p.add_argument("--population", required=True, help="LDJSON written by `family dedup`")
    p.add_argument("--n", type=int, default=1500)
    p.add_argument("--scheme", choices=["uniform", "paper"], default="uniform")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(handler=family_sample)

    game = commands.add_parser("game", help="One game").add_subparsers(dest="action", required=True)
    for name, handler in (("render", game_render), ("matrix", game_matrix)):
        p = game.add_parser(name)
        p.add_argument("--spec", required=True, help="GameSpec JSON")
        p.add_argument("--out")
        p.set_defaults(handler=handler)
    p = game.add_parser("variant")
    p.add_argument("name")
    p.add_argument("--out")
    p.set_defaults(handler=game_variant)

    eq = commands.add_parser("eq", help="Equilibria").add_subparsers(dest="action", required=True)
    for name, handler in (("solve", eq_solve), ("select", eq_select)):
        p = eq.add_parser(name)
        source = p.add_mutually_exclusive_group(required=True)
        source.add_argument("--game", help="GameSpec or payoff-matrix JSON")
        source.add_argument("--variant", help="Named money-request variant")
        p.add_argument("--out")
        p.set_defaults(handler=handler)
        if name == "select":
            p.add_argument("--trace-grid", type=int, default=200)
            p.add_argument("--no-pareto", action="store_true")
    p = eq.add_parser("stats")
    p.add_argument("--population", required=True, help="Population LDJSON or sample frame JSON")
    p.add_argument("--trace-grid", type=int, default=200)
    p.add_argument("--out")
    p.set_defaults(handler=eq_stats)

    p = commands.add_parser("elicit", help="Response distributions of an agent model")
    p.add_argument("--model", required=True)
    p.add_argument("--settings", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_backend_args(p)
    p.set_defaults(handler=elicit)

    optimize = commands.add_parser("optimize", help="Selection and construction").add_subparsers(dest="action", required=True)
    p = optimize.add_parser("select")
    p.add_argument("--candidates", required=True, help="Directory with one distribution table per candidate")
    p.add_argument("--target", required=True, help="Distribution table of the human data")
    p.add_argument("--measure", default="cdf-abs", choices=["forward-kl", "cdf-abs", "mae", "emd"])
    p.add_argument("--smoothing", type=float)
    p.add_argument("--restarts", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(handler=optimize_select)
    p = optimize.add_parser("construct")
    p.add_argument("--template", required=True, help="PromptSpec JSON with integer parameters")
    p.add_argument("--box", help="JSON {parameter: [low, high]} (default: the template's ranges)")
    p.add_argument("--targets", required=True, help="Distribution table of the human data")
    p.add_argument("--settings", required=True)
    p.add_argument("--slots", type=int, default=1)
    p.add_argument("--draws", type=int, default=20)
    p.add_argument("--budget", default="5+15", help="init+guided evaluations (default: 5+15)")
    p.add_argument("--measure", default="mae", choices=["forward-kl", "cdf-abs", "mae", "emd"])
    p.add_argument("--smoothing", type=float)
    p.add_argument("--target-value", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_backend_args(p)
    p.set_defaults(handler=optimize_construct)

    evaluate = commands.add_parser("eval", help="Statistical comparison").add_subparsers(dest="action", required=True)
    p = evaluate.add_parser("compare")
    _add_eval_args(p)
    p.add_argument("--epsilon", type=float, default=settings.HEADLINE_EPSILON)
    p.set_defaults(handler=eval_compare)
    p = evaluate.add_parser("grid")
    _add_eval_args(p)
    p.add_argument("--epsilons", default=",".join(f"{e:g}" for e in settings.EPSILON_GRID))
    p.set_defaults(handler=eval_grid)
    p = evaluate.add_parser("coverage")
    _add_eval_args(p, roles=("model_a",))
    p.set_defaults(handler=eval_coverage)
    p = evaluate.add_parser("regress")
    _add_eval_args(p)
    p.add_argument("--epsilon", type=float, default=settings.HEADLINE_EPSILON)
    p.add_argument("--by", default="points_rule,bonus_rule")
    p.set_defaults(handler=eval_regress)

    p = commands.add_parser("run", help="Evaluation run from a manifest")
    p.add_argument("--manifest")
    p.add_argument("--check", action="store_true", help="Check the bundled published tables")
    p.add_argument("--offline", action="store_true")
    p.add_argument("--out", help="Report directory (default: the manifest's output_dir)")
    p.set_defaults(handler=run)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "offline", False):
        settings.OFFLINE = True
    try:
        ok = args.handler(args)
    except (MoneyGamesError, ValueError, OSError) as e:
        details = e.to_log() if isinstance(e, MoneyGamesError) else {"error": type(e).__name__, "message": str(e)}
        get_error_tracker().log_error("command_failed", {"command": args.command, **details}, component="pipeline")
        print(f"Error: {e}")
        return 1
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
