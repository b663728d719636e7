"""
Predictive agents and response elicitation.

An agent model maps a setting (rendered instructions plus an action set) to
a distribution over actions. Backend personas are sampled through a chat
backend with a two-turn chain of thought; the mechanical models (level-k,
uniform, random pure, tabulated) are computed directly.
"""

import hashlib
import json
import re
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from tqdm.auto import tqdm

from utils import settings
from utils.error_logger import get_error_tracker
from utils.errors import (
    AllResponsesInvalid,
    BackendUnavailable,
    InvalidSpec,
    MismatchedSettings,
    MissingModelDistribution,
    MissingSetting,
)
from utils.game_logic import GameSpec, money_request_variant, payoff_matrix, render_instructions, variant_instructions
from utils.openai_logic import add_prompt_messages, prompt_hash


@lru_cache(maxsize=4)
def load_prompt_templates(version="v1"):
    with open(settings.data_path("templates", f"prompts_{version}.json"), "r", encoding="utf-8") as f:
        return json.load(f)


# --- settings -------------------------------------------------------------

@dataclass(frozen=True)
class Setting:
    """One decision problem as shown to an agent."""

    instruction_text: str
    actions: tuple
    payoff_semantics: dict = None
    question: str = "What amount of money would you request?"
    name: str = ""

    def __post_init__(self):
        actions = tuple(self.actions)
        if not actions:
            raise InvalidSpec("setting needs at least one action", name=self.name)
        if len(set(actions)) != len(actions):
            raise InvalidSpec("setting actions must be distinct", name=self.name)
        object.__setattr__(self, "actions", actions)

    @property
    def id(self):
        canonical = json.dumps(
            {
                "instruction_text": self.instruction_text,
                "actions": list(self.actions),
                "payoff_semantics": self.payoff_semantics,
                "question": self.question,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    @property
    def is_numeric(self):
        return all(isinstance(a, (int, np.integer)) for a in self.actions)

    def game(self):
        """The SymmetricGame behind a money-request setting, or None."""
        semantics = self.payoff_semantics or {}
        if "game_spec" in semantics:
            return payoff_matrix(GameSpec.from_dict(semantics["game_spec"]))
        if "variant" in semantics:
            return money_request_variant(semantics["variant"])
        return None

    def to_dict(self):
        return {
            "name": self.name,
            "instruction_text": self.instruction_text,
            "actions": list(self.actions),
            "payoff_semantics": self.payoff_semantics,
            "question": self.question,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["instruction_text"],
            tuple(data["actions"]),
            data.get("payoff_semantics"),
            data.get("question", "What amount of money would you request?"),
            data.get("name", ""),
        )

    @classmethod
    def from_spec(cls, spec):
        return cls(
            render_instructions(spec),
            spec.actions,
            {"game_spec": spec.to_dict()},
            load_prompt_templates()["questions"]["family"],
            spec.spec_id,
        )

    @classmethod
    def from_variant(cls, name):
        game = money_request_variant(name)
        return cls(
            variant_instructions(name),
            game.actions,
            {"variant": name},
            load_prompt_templates()["questions"]["money_request"],
            name,
        )


def allocation_setting(kind, payoffs, name=""):
    """
    Binary allocation decision.

    kind is "dictator" (Left/Right for Person B), "two_stage_a" (Out/Enter)
    or "two_stage_b" (Left/Right). `payoffs` holds left_a, left_b, right_a,
    right_b and, for two-stage games, out_a and out_b.
    """
    templates = load_prompt_templates()
    if kind not in templates["allocation"]:
        raise InvalidSpec(f"unknown allocation kind {kind!r}", choices=list(templates["allocation"]))
    needed = {"left_a", "left_b", "right_a", "right_b"} | ({"out_a", "out_b"} if kind != "dictator" else set())
    missing = needed - set(payoffs)
    if missing:
        raise InvalidSpec("allocation payoffs incomplete", missing=sorted(missing))
    text = templates["allocation"][kind].format(**payoffs)
    if kind == "two_stage_a":
        actions, question = ("Out", "Enter"), templates["questions"]["out_enter"]
    else:
        actions, question = ("Left", "Right"), templates["questions"]["left_right"]
    semantics = {"allocation": kind, **{k: int(v) for k, v in payoffs.items()}}
    return Setting(text, actions, semantics, question, name)


def load_settings(path):
    """Settings from a JSON file: a list of setting dicts, game specs or variant names."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if isinstance(data, dict):
        data = data.get("settings", [])
    result = []
    for item in data:
        if isinstance(item, str):
            result.append(Setting.from_variant(item))
        elif "instruction_text" in item:
            result.append(Setting.from_dict(item))
        else:
            result.append(Setting.from_spec(GameSpec.from_dict(item)))
    return result


# --- prompts and distributions ---------------------------------------------

@dataclass(frozen=True)
class PromptSpec:
    """System prompt: shared preamble, persona text, optional level-k explanation."""

    persona_text: str
    preamble: str = ""
    explanation: str = ""
    parameters: dict = field(default_factory=dict)
    name: str = ""

    def render(self, values=None):
        values = dict(values or {})
        for key, (low, high) in self.parameters.items():
            if key not in values:
                raise InvalidSpec(f"missing prompt parameter {key!r}", prompt=self.name)
            if not (low <= int(values[key]) <= high) or int(values[key]) != values[key]:
                raise InvalidSpec(f"parameter {key}={values[key]} outside [{low}, {high}]", prompt=self.name)
        persona = self.persona_text.format(**{k: int(v) for k, v in values.items()}) if self.parameters else self.persona_text
        return " ".join(part for part in (self.preamble, persona, self.explanation) if part)

    def to_dict(self):
        return {
            "name": self.name,
            "persona_text": self.persona_text,
            "preamble": self.preamble,
            "explanation": self.explanation,
            "parameters": {k: list(v) for k, v in self.parameters.items()},
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["persona_text"],
            data.get("preamble", ""),
            data.get("explanation", ""),
            {k: tuple(v) for k, v in data.get("parameters", {}).items()},
            data.get("name", ""),
        )


def trait_prompt(name="social_preferences", version="v1"):
    template = load_prompt_templates(version)["traits"][name]
    return PromptSpec(template["text"], parameters={k: tuple(v) for k, v in template["parameters"].items()}, name=name)


@dataclass(eq=False)
class ResponseDistribution:
    setting_id: str
    actions: tuple
    probs: np.ndarray
    n: float

    def __post_init__(self):
        self.actions = tuple(self.actions)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (len(self.actions),):
            raise MismatchedSettings("probabilities do not match the action set", setting=self.setting_id)
        if (self.probs < 0).any() or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"not a probability vector: {self.probs.tolist()}")

    @classmethod
    def from_counts(cls, setting_id, actions, counts):
        counts = np.asarray(counts, dtype=np.int64)
        if (counts < 0).any() or counts.sum() == 0:
            raise ValueError("counts must be nonnegative with a positive total")
        total = int(counts.sum())
        dist = cls(setting_id, actions, counts / total, total)
        dist._counts = counts
        return dist

    @classmethod
    def from_probs(cls, setting_id, actions, probs, n=1):
        probs = np.asarray(probs, dtype=np.float64)
        return cls(setting_id, actions, probs / probs.sum(), n)

    @property
    def counts(self):
        stored = getattr(self, "_counts", None)
        if stored is not None:
            return stored
        return np.rint(self.probs * self.n).astype(np.int64)

    def prob_of(self, action):
        return float(self.probs[self.actions.index(action)])

    def to_dict(self):
        return {
            "setting_id": self.setting_id,
            "actions": list(self.actions),
            "probs": self.probs.tolist(),
            "counts": self.counts.tolist(),
            "n": self.n,
        }

    @classmethod
    def from_dict(cls, data):
        counts, n = data.get("counts"), data.get("n", 1)
        if counts and sum(counts) == n and np.allclose(np.asarray(counts) / n, data["probs"], rtol=0, atol=1e-12):
            return cls.from_counts(data["setting_id"], data["actions"], counts)
        return cls.from_probs(data["setting_id"], data["actions"], data["probs"], data.get("n", 1))


# --- agent models ---------------------------------------------------------

@dataclass
class BackendPersona:
    prompt: PromptSpec
    values: dict = None
    temperature: float = 1.0
    chain_of_thought: bool = True
    name: str = ""


@dataclass
class Mixture:
    components: list
    weights: np.ndarray
    name: str = "mixture"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if len(self.weights) != len(self.components):
            raise ValueError("one weight per component")
        if (self.weights < -1e-12).any() or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixture weights must lie on the simplex: {self.weights.tolist()}")


@dataclass
class MechanicalLevelK:
    k: int
    level0_rule: str = "MaxGuaranteed"
    tie_mode: str = "highest"
    name: str = ""


@dataclass
class Uniform:
    name: str = "uniform"


@dataclass
class RandomPure:
    seed: int = 0
    name: str = "random_pure"


@dataclass
class Tabulated:
    table: dict
    name: str = "tabulated"


def baseline_persona(temperature=1.0):
    """Off-the-shelf model: no system prompt, a single answer turn."""
    return BackendPersona(PromptSpec("", name="baseline"), temperature=temperature, chain_of_thought=False, name="baseline")


def load_persona_library(name, version="v1"):
    """BackendPersona models of a bundled library and their published weights."""
    with open(settings.data_path("personas", f"{name}.json"), "r", encoding="utf-8") as f:
        library = json.load(f)
    templates = load_prompt_templates(version)
    models, weights = [], []
    for persona in library["personas"]:
        prompt = PromptSpec(
            persona["text"],
            preamble=templates["preamble"] if library.get("preamble") else "",
            explanation=templates["levelk_explanation"] if persona.get("levelk_explanation") else "",
            name=persona["name"],
        )
        models.append(BackendPersona(prompt, name=persona["name"]))
        weights.append(persona["published_weight"])
    return models, np.array(weights, dtype=np.float64)


def model_to_dict(model):
    if isinstance(model, BackendPersona):
        return {"type": "BackendPersona", "name": model.name, "prompt": model.prompt.to_dict(), "values": model.values,
                "temperature": model.temperature, "chain_of_thought": model.chain_of_thought}
    if isinstance(model, Mixture):
        return {"type": "Mixture", "name": model.name, "weights": model.weights.tolist(),
                "components": [model_to_dict(c) for c in model.components]}
    if isinstance(model, MechanicalLevelK):
        return {"type": "MechanicalLevelK", "name": model.name, "k": model.k, "level0_rule": model.level0_rule,
                "tie_mode": model.tie_mode}
    if isinstance(model, Uniform):
        return {"type": "Uniform", "name": model.name}
    if isinstance(model, RandomPure):
        return {"type": "RandomPure", "name": model.name, "seed": model.seed}
    if isinstance(model, Tabulated):
        return {"type": "Tabulated", "name": model.name, "table": {k: v.to_dict() for k, v in model.table.items()}}
    raise TypeError(f"unknown agent model {type(model).__name__}")


def model_from_dict(data):
    kind = data["type"]
    if kind == "BackendPersona":
        return BackendPersona(PromptSpec.from_dict(data["prompt"]), data.get("values"), data.get("temperature", 1.0),
                              data.get("chain_of_thought", True), data.get("name", ""))
    if kind == "Mixture":
        return Mixture([model_from_dict(c) for c in data["components"]], data["weights"], data.get("name", "mixture"))
    if kind == "MechanicalLevelK":
        return MechanicalLevelK(data["k"], data.get("level0_rule", "MaxGuaranteed"), data.get("tie_mode", "highest"),
                                data.get("name", ""))
    if kind == "Uniform":
        return Uniform(data.get("name", "uniform"))
    if kind == "RandomPure":
        return RandomPure(data.get("seed", 0), data.get("name", "random_pure"))
    if kind == "Tabulated":
        return Tabulated({k: ResponseDistribution.from_dict(v) for k, v in data["table"].items()},
                         data.get("name", "tabulated"))
    if kind == "PersonaLibrary":
        models, weights = load_persona_library(data["library"])
        if data.get("weights") is not None:
            weights = np.asarray(data["weights"], dtype=np.float64)
        return Mixture(models, weights / weights.sum(), data.get("name", data["library"]))
    raise ValueError(f"unknown agent model type {kind!r}")


def load_model(path):
    with open(path, "r", encoding="utf-8") as f:
        return model_from_dict(json.load(f))


# --- parsing --------------------------------------------------------------

_NUMBER = re.compile(r"(?<![\w.])-?\d+(?:\.\d+)?(?![\w])")


def parse_response(raw_text, setting):
    """
    Action named by a model answer, or None when the answer is invalid.

    Numeric settings: the last numeric token must be a whole number and the
    last integer token inside the action set wins. Label settings: the label
    mentioned last wins.
    """
    text = raw_text or ""
    if setting.is_numeric:
        tokens = _NUMBER.findall(text.replace(",", ""))
        if not tokens:
            return None
        if "." in tokens[-1] and float(tokens[-1]) != int(float(tokens[-1])):
            return None
        allowed = set(int(a) for a in setting.actions)
        for token in reversed(tokens):
            value = float(token)
            if value == int(value) and int(value) in allowed:
                return int(value)
        return None

    best, best_pos = None, -1
    for label in setting.actions:
        for match in re.finditer(rf"\b{re.escape(str(label))}\b", text, flags=re.IGNORECASE):
            if match.start() > best_pos:
                best, best_pos = label, match.start()
    return best


# --- mechanical models ----------------------------------------------------

def mixture_distribution(components, weights):
    weights = np.asarray(weights, dtype=np.float64)
    if not components:
        raise ValueError("mixture needs at least one component")
    first = components[0]
    for c in components[1:]:
        if c.setting_id != first.setting_id or c.actions != first.actions:
            raise MismatchedSettings("mixture components cover different settings",
                                     settings=[first.setting_id, c.setting_id])
    if len(weights) != len(components) or (weights < -1e-12).any() or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"mixture weights must lie on the simplex: {weights.tolist()}")
    weights = np.clip(weights, 0.0, None)
    weights = weights / weights.sum()
    probs = np.sum([w * c.probs for w, c in zip(weights, components)], axis=0)
    n = float(np.sum([w * c.n for w, c in zip(weights, components)]))
    return ResponseDistribution.from_probs(first.setting_id, first.actions, probs, n)


def _level0_vector(game, rule):
    n = game.n_actions
    if rule == "Uniform":
        return np.full(n, 1.0 / n)
    if rule != "MaxGuaranteed":
        raise ValueError(f"unknown level-0 rule {rule!r}")
    # guaranteed points: what an action earns whatever the other player does
    guaranteed = np.asarray(game.payoff).min(axis=1)
    best = np.flatnonzero(guaranteed == guaranteed.max())
    point = np.zeros(n)
    point[best[-1]] = 1.0
    return point


def _best_response(game, belief, tie_mode):
    expected = np.asarray(game.payoff, dtype=np.float64) @ belief
    ties = np.flatnonzero(np.isclose(expected, expected.max(), rtol=0, atol=1e-12))
    response = np.zeros(game.n_actions)
    if tie_mode == "uniform":
        response[ties] = 1.0 / len(ties)
    else:
        response[ties[-1]] = 1.0
    return response


def mechanical_levelk(game, k, level0_rule="MaxGuaranteed", tie_mode="highest", setting_id=None, n=1):
    """Level-k play: level 0 by rule, level j best-responds to level j-1."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    belief = _level0_vector(game, level0_rule)
    for _ in range(k):
        belief = _best_response(game, belief, tie_mode)
    return ResponseDistribution.from_probs(setting_id or game.name, game.actions, belief, n)


def scale_mixture_to_population(weights, n, names=None):
    """Largest-remainder apportionment of n agents; equal remainders go to the lower index."""
    weights = np.asarray(weights, dtype=np.float64)
    if n < 1:
        raise ValueError("n must be at least 1")
    quotas = np.round(weights / weights.sum() * n, 9)
    counts = np.floor(quotas).astype(np.int64)
    remainders = quotas - counts
    order = np.lexsort((np.arange(len(weights)), -remainders))
    for i in order[: n - counts.sum()]:
        counts[i] += 1
    names = list(names) if names is not None else list(range(len(weights)))
    return list(zip(names, counts.tolist()))


def predicted_distribution(model, setting):
    """Exact distribution of a non-backend model on one setting."""
    if isinstance(model, Uniform):
        k = len(setting.actions)
        return ResponseDistribution.from_probs(setting.id, setting.actions, np.full(k, 1.0 / k))
    if isinstance(model, RandomPure):
        rng = np.random.default_rng(settings.derive_seed(model.seed, "random_pure", setting.id))
        probs = np.zeros(len(setting.actions))
        probs[rng.integers(len(setting.actions))] = 1.0
        return ResponseDistribution.from_probs(setting.id, setting.actions, probs)
    if isinstance(model, MechanicalLevelK):
        game = setting.game()
        if game is None:
            raise MissingModelDistribution("level-k needs a money-request setting", setting=setting.id)
        return mechanical_levelk(game, model.k, model.level0_rule, model.tie_mode, setting.id)
    if isinstance(model, Tabulated):
        if setting.id not in model.table:
            raise MissingSetting("tabulated model does not cover setting", setting=setting.id, model=model.name)
        return model.table[setting.id]
    if isinstance(model, Mixture):
        parts = [predicted_distribution(c, setting) for c in model.components]
        return mixture_distribution(parts, model.weights)
    raise MissingModelDistribution("backend personas have no closed-form distribution; elicit them",
                                   setting=setting.id, model=getattr(model, "name", ""))


# --- elicitation ----------------------------------------------------------

def persona_messages(model, setting, reasoning=None):
    """Chat messages for the reasoning turn, or the answer turn when `reasoning` is given."""
    templates = load_prompt_templates()["chain_of_thought"]
    messages = []
    system = model.prompt.render(model.values)
    if system:
        add_prompt_messages("system", system, messages)
    if not model.chain_of_thought:
        return add_prompt_messages("user", setting.instruction_text, messages)
    if reasoning is None:
        text = templates["reason"].format(instructions=setting.instruction_text)
    else:
        text = templates["answer"].format(
            instructions=setting.instruction_text, reasoning=reasoning, question=setting.question
        )
    return add_prompt_messages("user", text, messages)


def _draw(model, setting, index, seed, backend, cache):
    first = persona_messages(model, setting)
    key = None
    if cache is not None:
        key = cache.key(backend.backend_id, prompt_hash(first), setting.id, index)
        record = cache.get(key)
        if record is not None:
            return record
    draw_seed = settings.derive_seed(seed, "elicit", setting.id, index)
    turns = []
    if model.chain_of_thought:
        reasoning = backend.complete(first, seed=draw_seed, draw_index=index)
        turns.append({"messages": first, "response": reasoning})
        second = persona_messages(model, setting, reasoning)
        answer = backend.complete(second, seed=draw_seed, draw_index=index)
        turns.append({"messages": second, "response": answer})
    else:
        answer = backend.complete(first, seed=draw_seed, draw_index=index)
        turns.append({"messages": first, "response": answer})
    parsed = parse_response(answer, setting)
    record = {"backend": backend.backend_id, "setting_id": setting.id, "draw_index": index,
              "turns": turns, "answer": answer, "parsed": parsed}
    if cache is not None:
        cache.put(key, record)
    return record


def elicit_persona(model, setting, n, seed, backend, cache=None, max_in_flight=None, progress=False):
    """Sample n two-turn transcripts and count the valid answers."""
    if backend is None:
        raise BackendUnavailable("backend persona needs a backend", model=model.name)
    max_in_flight = max_in_flight or settings.MAX_IN_FLIGHT
    records = [None] * n
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = {pool.submit(_draw, model, setting, i, seed, backend, cache): i for i in range(n)}
        done = as_completed(futures)
        if progress:
            done = tqdm(done, total=n, desc=f"elicit {model.name or 'persona'}")
        for future in done:
            records[futures[future]] = future.result()

    tracker = get_error_tracker()
    counts = np.zeros(len(setting.actions), dtype=np.int64)
    invalid = 0
    for record in records:
        # parsed values are re-read from the answer so old cache entries follow the current parser
        action = parse_response(record["answer"], setting)
        if action is None:
            invalid += 1
            tracker.log_error("invalid_response", {"setting": setting.id, "draw": record["draw_index"],
                                                   "answer": record["answer"][-200:]}, component="backend")
            continue
        counts[setting.actions.index(action)] += 1
    if counts.sum() == 0:
        raise AllResponsesInvalid("every draw was invalid", setting=setting.id, n=n, model=model.name)
    tracker.log_success("elicit_persona")
    return ResponseDistribution.from_counts(setting.id, setting.actions, counts)


def elicit_distribution(model, setting, n, seed, backend=None, cache=None, max_in_flight=None, progress=False):
    """Draw n responses of `model` on `setting`. Invalid backend draws are dropped, not resampled."""
    if n < 1:
        raise ValueError("n must be at least 1")
    k = len(setting.actions)
    if isinstance(model, BackendPersona):
        return elicit_persona(model, setting, n, seed, backend, cache, max_in_flight, progress)
    if isinstance(model, Mixture):
        counts = np.zeros(k, dtype=np.int64)
        apportioned = scale_mixture_to_population(model.weights, n)
        for j, (component, (_, count)) in enumerate(zip(model.components, apportioned)):
            if count == 0:
                continue
            part = elicit_distribution(component, setting, count, settings.derive_seed(seed, "mixture", model.name, j),
                                       backend, cache, max_in_flight, progress)
            counts += part.counts
        return ResponseDistribution.from_counts(setting.id, setting.actions, counts)
    if isinstance(model, Uniform):
        rng = np.random.default_rng(settings.derive_seed(seed, "uniform", setting.id))
        draws = rng.integers(0, k, size=n)
        return ResponseDistribution.from_counts(setting.id, setting.actions, np.bincount(draws, minlength=k))
    if isinstance(model, Tabulated):
        return predicted_distribution(model, setting)
    exact = predicted_distribution(model, setting)
    return ResponseDistribution.from_probs(setting.id, setting.actions, exact.probs, n)
