"""
The symmetric money-request game family.

A game is described by six parameters (bounds, gap, bonus size, points rule,
bonus rule). Every game pays a player guaranteed points for their own request
plus a bonus whenever the bonus rule fires for the (own, other) pair.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from fractions import Fraction
from functools import lru_cache

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from utils import settings
from utils.errors import ActionOutOfRange, InvalidSpec, MalformedInput, SampleTooLarge


class PointsRule(Enum):
    NMinus2 = "NMinus2"
    NMinus1 = "NMinus1"
    N = "N"
    NPlus1 = "NPlus1"
    NPlus2 = "NPlus2"
    CostlessMinus2 = "CostlessMinus2"


class BonusRule(IntEnum):
    GapLower = 1
    GapHigher = 2
    GapAbsolute = 3
    MoreThan = 4
    Equal = 5
    Unequal = 6
    SumEven = 7
    SumOdd = 8
    SumUpper = 9
    LessUpper = 10
    CoordinateLow = 11

    @property
    def uses_gap(self):
        return self.value <= 4


POINTS_SHIFT = {
    PointsRule.NMinus2: -2,
    PointsRule.NMinus1: -1,
    PointsRule.N: 0,
    PointsRule.NPlus1: 1,
    PointsRule.NPlus2: 2,
}

# Sampling masses of the published experiment. The four gap-using rules
# share what the seven gap-free ones leave over. How the printed shares were
# normalized: DESIGN.md, Open Question decisions, "Rule-sampling constants".
PAPER_RULE_WEIGHTS = {rule: (Fraction(199, 2000) if rule.uses_gap else Fraction(43, 500)) for rule in BonusRule}
PAPER_POINTS_WEIGHTS = {
    rule: (Fraction(19, 200) if rule is PointsRule.CostlessMinus2 else Fraction(181, 1000)) for rule in PointsRule
}

LOWER_BOUNDS = range(1, 21)
# widest offset preset
MAX_OFFSET = 20

SPEC_FIELDS = ("lower_bound", "upper_bound", "gap", "bonus_size", "points_rule", "bonus_rule")


@dataclass(frozen=True)
class GameSpec:
    lower_bound: int
    upper_bound: int
    gap: int
    bonus_size: int
    points_rule: PointsRule
    bonus_rule: BonusRule

    def __post_init__(self):
        object.__setattr__(self, "points_rule", PointsRule(self.points_rule))
        rule = self.bonus_rule
        if isinstance(rule, str):
            rule = BonusRule[rule]
        object.__setattr__(self, "bonus_rule", BonusRule(rule))
        if self.upper_bound <= self.lower_bound:
            raise InvalidSpec("upper_bound must exceed lower_bound", lower=self.lower_bound, upper=self.upper_bound)
        if self.gap < 1:
            raise InvalidSpec("gap must be at least 1", gap=self.gap)
        if self.bonus_size < 1:
            raise InvalidSpec("bonus_size must be at least 1", bonus=self.bonus_size)
        if self.lower_bound not in LOWER_BOUNDS:
            raise MalformedInput("lower_bound outside 1..20", lower=self.lower_bound)
        if self.offset > MAX_OFFSET:
            raise MalformedInput(f"upper_bound - lower_bound exceeds {MAX_OFFSET}", lower=self.lower_bound,
                                 upper=self.upper_bound)

    @property
    def offset(self):
        return self.upper_bound - self.lower_bound

    @property
    def actions(self):
        return tuple(range(self.lower_bound, self.upper_bound + 1))

    def canonical(self):
        """Gap-free rules ignore the gap, so it is pinned to 1."""
        if not self.bonus_rule.uses_gap and self.gap != 1:
            return replace(self, gap=1)
        return self

    def to_dict(self):
        return {
            "lower_bound": int(self.lower_bound),
            "upper_bound": int(self.upper_bound),
            "gap": int(self.gap),
            "bonus_size": int(self.bonus_size),
            "points_rule": self.points_rule.value,
            "bonus_rule": self.bonus_rule.name,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data):
        return cls(
            lower_bound=int(data["lower_bound"]),
            upper_bound=int(data["upper_bound"]),
            gap=int(data["gap"]),
            bonus_size=int(data["bonus_size"]),
            points_rule=PointsRule(data["points_rule"]),
            bonus_rule=BonusRule[data["bonus_rule"]] if isinstance(data["bonus_rule"], str) else BonusRule(int(data["bonus_rule"])),
        )

    @property
    def spec_id(self):
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]

    def in_family(self, config):
        return (
            self.lower_bound in config.lower_bounds
            and self.offset in config.offsets
            and self.gap in config.gaps
            and self.bonus_size in config.bonus_sizes
            and self.points_rule in config.points_rules
            and self.bonus_rule in config.bonus_rules
        )


@dataclass(frozen=True, eq=False)
class SymmetricGame:
    """Row-player payoff matrix of a symmetric two-player game."""

    actions: tuple
    payoff: np.ndarray
    name: str = ""
    spec: GameSpec = None

    def __post_init__(self):
        payoff = np.asarray(self.payoff)
        if payoff.ndim != 2 or payoff.shape[0] != payoff.shape[1]:
            raise InvalidSpec("payoff matrix must be square", shape=payoff.shape)
        if len(self.actions) != payoff.shape[0]:
            raise InvalidSpec("action labels do not match the payoff matrix", n_actions=len(self.actions))
        if not np.issubdtype(payoff.dtype, np.integer):
            rounded = np.rint(payoff)
            if not np.array_equal(rounded, payoff):
                raise InvalidSpec("payoffs must be integers")
            payoff = rounded
        payoff = payoff.astype(np.int64)
        payoff.setflags(write=False)
        object.__setattr__(self, "payoff", payoff)
        object.__setattr__(self, "actions", tuple(self.actions))

    @property
    def n_actions(self):
        return len(self.actions)

    @property
    def column_payoff(self):
        return self.payoff.T

    def index_of(self, action):
        try:
            return self.actions.index(action)
        except ValueError:
            raise ActionOutOfRange(f"action {action} is not in the game", action=action)

    def payoff_digest(self):
        return hashlib.blake2b(
            repr(self.actions).encode("utf-8") + self.payoff.tobytes(), digest_size=16
        ).hexdigest()

    def to_dict(self):
        return {
            "name": self.name,
            "actions": list(self.actions),
            "payoff": self.payoff.tolist(),
            "spec": self.spec.to_dict() if self.spec else None,
        }

    @classmethod
    def from_dict(cls, data):
        spec = GameSpec.from_dict(data["spec"]) if data.get("spec") else None
        return cls(tuple(data["actions"]), np.array(data["payoff"], dtype=np.int64), data.get("name", ""), spec)

    @classmethod
    def from_matrix(cls, matrix, actions=None, name=""):
        matrix = np.asarray(matrix)
        if actions is None:
            actions = tuple(range(matrix.shape[0]))
        return cls(tuple(actions), matrix, name)


@dataclass(frozen=True)
class FamilyConfig:
    lower_bounds: tuple = tuple(range(1, 21))
    offsets: tuple = tuple(range(4, 20))
    gaps: tuple = (1, 2, 3, 4)
    bonus_sizes: tuple = tuple(range(1, 21))
    points_rules: tuple = tuple(PointsRule)
    bonus_rules: tuple = tuple(BonusRule)

    PRESETS = ("4-19", "4-20")

    @classmethod
    def preset(cls, name="4-19"):
        if name == "4-19":
            return cls()
        if name == "4-20":
            return cls(offsets=tuple(range(4, 21)))
        raise InvalidSpec(f"unknown offset preset {name!r}", choices=cls.PRESETS)

    @property
    def shape(self):
        return (
            len(self.lower_bounds),
            len(self.offsets),
            len(self.gaps),
            len(self.bonus_sizes),
            len(self.points_rules),
            len(self.bonus_rules),
        )

    @property
    def raw_count(self):
        return int(np.prod(self.shape))

    def to_dict(self):
        return {
            "lower_bounds": list(self.lower_bounds),
            "offsets": list(self.offsets),
            "gaps": list(self.gaps),
            "bonus_sizes": list(self.bonus_sizes),
            "points_rules": [rule.value for rule in self.points_rules],
            "bonus_rules": [rule.name for rule in self.bonus_rules],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            lower_bounds=tuple(int(v) for v in data["lower_bounds"]),
            offsets=tuple(int(v) for v in data["offsets"]),
            gaps=tuple(int(v) for v in data["gaps"]),
            bonus_sizes=tuple(int(v) for v in data["bonus_sizes"]),
            points_rules=tuple(PointsRule(v) for v in data["points_rules"]),
            bonus_rules=tuple(BonusRule[v] for v in data["bonus_rules"]),
        )


def enumerate_family(config=None):
    """Yield every raw GameSpec of the family, lexicographic over the field order."""
    config = config or FamilyConfig()
    for lower in config.lower_bounds:
        for offset in config.offsets:
            for gap in config.gaps:
                for bonus in config.bonus_sizes:
                    for points in config.points_rules:
                        for rule in config.bonus_rules:
                            yield GameSpec(lower, lower + offset, gap, bonus, points, rule)


def family_frame(config=None):
    """The raw family as a DataFrame, rows in `enumerate_family` order."""
    config = config or FamilyConfig()
    grids = np.meshgrid(
        np.array(config.lower_bounds),
        np.array(config.offsets),
        np.array(config.gaps),
        np.array(config.bonus_sizes),
        np.arange(len(config.points_rules)),
        np.arange(len(config.bonus_rules)),
        indexing="ij",
    )
    lower, offset, gap, bonus, points_idx, rule_idx = (g.reshape(-1) for g in grids)
    return pd.DataFrame(
        {
            "lower_bound": lower,
            "upper_bound": lower + offset,
            "gap": gap,
            "bonus_size": bonus,
            "points_rule": np.array([r.value for r in config.points_rules], dtype=object)[points_idx],
            "bonus_rule": np.array([r.name for r in config.bonus_rules], dtype=object)[rule_idx],
        }
    )


def guaranteed_points(spec, action):
    if not spec.lower_bound <= action <= spec.upper_bound:
        raise ActionOutOfRange(
            f"action {action} outside [{spec.lower_bound}, {spec.upper_bound}]",
            action=action,
            spec=spec.to_json(),
        )
    if spec.points_rule is PointsRule.CostlessMinus2:
        return spec.upper_bound if action == spec.upper_bound else spec.upper_bound - 2
    return action + POINTS_SHIFT[spec.points_rule]


def _guaranteed_vector(points_rule, lower, upper):
    actions = np.arange(lower, upper + 1, dtype=np.int64)
    if points_rule is PointsRule.CostlessMinus2:
        return np.where(actions == upper, upper, upper - 2).astype(np.int64)
    return actions + POINTS_SHIFT[points_rule]


def bonus_indicator(bonus_rule, lower, upper, gap=1):
    """Boolean matrix: entry (i, j) is True when the rule fires for own=i, other=j."""
    actions = np.arange(lower, upper + 1, dtype=np.int64)
    own = actions[:, None]
    other = actions[None, :]
    rule = BonusRule(bonus_rule)
    if rule is BonusRule.GapLower:
        fires = own == other - gap
    elif rule is BonusRule.GapHigher:
        fires = own == other + gap
    elif rule is BonusRule.GapAbsolute:
        fires = np.abs(own - other) == gap
    elif rule is BonusRule.MoreThan:
        fires = np.abs(own - other) > gap
    elif rule is BonusRule.Equal:
        fires = own == other
    elif rule is BonusRule.Unequal:
        fires = own != other
    elif rule is BonusRule.SumEven:
        fires = (own + other) % 2 == 0
    elif rule is BonusRule.SumOdd:
        fires = (own + other) % 2 == 1
    elif rule is BonusRule.SumUpper:
        fires = own + other == upper
    elif rule is BonusRule.LessUpper:
        fires = own + other < upper
    else:
        fires = (own == lower) & (other == lower)
    return np.broadcast_to(fires, (len(actions), len(actions))).copy()


def _spec_label(spec):
    return f"{spec.points_rule.value}/{spec.bonus_rule.name} [{spec.lower_bound},{spec.upper_bound}] gap={spec.gap} bonus={spec.bonus_size}"


def payoff_matrix(spec):
    g = _guaranteed_vector(spec.points_rule, spec.lower_bound, spec.upper_bound)
    indicator = bonus_indicator(spec.bonus_rule, spec.lower_bound, spec.upper_bound, spec.gap)
    payoff = g[:, None] + spec.bonus_size * indicator.astype(np.int64)
    return SymmetricGame(spec.actions, payoff, _spec_label(spec), spec)


# --- historical variants --------------------------------------------------

VARIANT_NAMES = ("basic", "cycle", "costless", "basic_1_10", "cycle_1_10", "costless_1_10", "game_1_7")

VARIANT_SPECS = {
    "basic": GameSpec(11, 20, 1, 20, PointsRule.N, BonusRule.GapLower),
    "basic_1_10": GameSpec(1, 10, 1, 10, PointsRule.N, BonusRule.GapLower),
    "game_1_7": GameSpec(1, 7, 1, 10, PointsRule.N, BonusRule.GapLower),
}


def money_request_variant(name):
    """Build one of the named historical money-request games."""
    if name not in VARIANT_NAMES:
        raise InvalidSpec(f"unknown variant {name!r}", choices=VARIANT_NAMES)
    if name in VARIANT_SPECS:
        game = payoff_matrix(VARIANT_SPECS[name])
        return SymmetricGame(game.actions, game.payoff, name, game.spec)

    lower, upper, bonus = (11, 20, 20) if not name.endswith("_1_10") else (1, 10, 10)
    actions = np.arange(lower, upper + 1)
    own = actions[:, None]
    other = actions[None, :]
    undercut = (own == other - 1).astype(np.int64)
    if name.startswith("cycle"):
        undercut = undercut + ((own == upper) & (other == lower)).astype(np.int64)
        payoff = own + bonus * undercut
    else:
        kept = np.where(actions == upper, upper, upper - 3)[:, None]
        payoff = kept + bonus * undercut
    payoff = np.broadcast_to(payoff, (len(actions), len(actions)))
    return SymmetricGame(tuple(int(a) for a in actions), payoff, name)


@lru_cache(maxsize=4)
def load_variant_instructions(version="v1"):
    with open(settings.data_path("templates", f"variants_{version}.json"), "r", encoding="utf-8") as f:
        return json.load(f)


def variant_instructions(name, version="v1"):
    texts = load_variant_instructions(version)["variants"]
    if name not in texts:
        raise InvalidSpec(f"no instructions for variant {name!r}")
    return texts[name]


# --- instructions ---------------------------------------------------------

@lru_cache(maxsize=4)
def load_instruction_template(version="v1"):
    with open(settings.data_path("templates", f"instructions_{version}.json"), "r", encoding="utf-8") as f:
        return json.load(f)


def render_instructions(spec, version="v1"):
    """Fill the versioned instruction template for one game."""
    template = load_instruction_template(version)
    noun = "point" if spec.bonus_size == 1 else "points"
    values = {
        "lower": spec.lower_bound,
        "upper": spec.upper_bound,
        "upper_minus_2": spec.upper_bound - 2,
        "gap": spec.gap,
        "bonus_phrase": f"an additional {spec.bonus_size} {noun}",
    }
    parts = [
        template["opening"],
        template["points"][spec.points_rule.value],
        template["pairing"],
        template["bonus"][spec.bonus_rule.name],
        template["closing"],
    ]
    return " ".join(part.format(**values) for part in parts)


# --- deduplication --------------------------------------------------------

@dataclass
class GamePopulation:
    """Deduplicated family: one representative spec per distinct payoff matrix."""

    frame: pd.DataFrame
    inverse: np.ndarray = None
    config: FamilyConfig = None
    _digest: str = field(default=None, repr=False)

    def __len__(self):
        return len(self.frame)

    @property
    def digest(self):
        if self._digest is None:
            self._digest = hashlib.sha256(population_ldjson(self.frame).encode("utf-8")).hexdigest()
        return self._digest

    def spec(self, index):
        return GameSpec.from_dict(self.frame.iloc[int(index)])

    def specs(self):
        for row in self.frame[list(SPEC_FIELDS)].itertuples(index=False):
            yield GameSpec(row.lower_bound, row.upper_bound, row.gap, row.bonus_size, PointsRule(row.points_rule), BonusRule[row.bonus_rule])


def population_ldjson(frame):
    lines = [
        f'{{"lower_bound":{lo},"upper_bound":{up},"gap":{g},"bonus_size":{b},"points_rule":"{p}","bonus_rule":"{r}"}}\n'
        for lo, up, g, b, p, r in zip(
            frame["lower_bound"], frame["upper_bound"], frame["gap"], frame["bonus_size"], frame["points_rule"], frame["bonus_rule"]
        )
    ]
    return "".join(lines)


def _frame_from_specs(specs):
    return pd.DataFrame([spec.to_dict() for spec in specs], columns=list(SPEC_FIELDS))


class _MatrixKeyer:
    """Digests payoff matrices, caching per-block guaranteed vectors and indicators."""

    def __init__(self):
        self._guaranteed = {}
        self._indicators = {}

    def key(self, spec):
        lower, upper = spec.lower_bound, spec.upper_bound
        g = self._guaranteed.get((spec.points_rule, lower, upper))
        if g is None:
            g = self._guaranteed[(spec.points_rule, lower, upper)] = _guaranteed_vector(spec.points_rule, lower, upper)
        gap = spec.gap if spec.bonus_rule.uses_gap else 1
        ind = self._indicators.get((spec.bonus_rule, gap, lower, upper))
        if ind is None:
            ind = self._indicators[(spec.bonus_rule, gap, lower, upper)] = bonus_indicator(spec.bonus_rule, lower, upper, gap).astype(np.int64)
        payoff = g[:, None] + spec.bonus_size * ind
        h = hashlib.blake2b(digest_size=16)
        h.update(np.array([lower, upper], dtype=np.int64).tobytes())
        h.update(payoff.tobytes())
        return h.digest()


def dedup_family(specs, config=None):
    """Keep the enumeration-order-first spec of every payoff-matrix class."""
    print("Start: Deduplicating game specs")
    keyer = _MatrixKeyer()
    seen = {}
    representatives = []
    inverse = []
    for spec in tqdm(specs, desc="dedup", mininterval=2.0):
        key = keyer.key(spec)
        idx = seen.get(key)
        if idx is None:
            idx = len(representatives)
            seen[key] = idx
            representatives.append(spec.canonical())
        inverse.append(idx)
    population = GamePopulation(_frame_from_specs(representatives), np.asarray(inverse, dtype=np.int64), config)
    print(f"Done: {len(inverse)} specs -> {len(population)} unique games")
    return population


def dedup_full_family(config=None):
    """Vectorized dedup of a whole FamilyConfig, one (lower, upper) block at a time."""
    config = config or FamilyConfig()
    print("Start: Deduplicating full family")
    gaps = np.array(config.gaps, dtype=np.int64)
    bonuses = np.array(config.bonus_sizes, dtype=np.int64)
    block_shape = (len(config.gaps), len(config.bonus_sizes), len(config.points_rules), len(config.bonus_rules))
    block_size = int(np.prod(block_shape))
    uses_gap = np.array([rule.uses_gap for rule in config.bonus_rules])

    columns = {name: [] for name in ("lower_bound", "upper_bound", "gap_idx", "bonus_idx", "points_idx", "rule_idx")}
    inverse = np.empty(config.raw_count, dtype=np.int64)
    found = 0
    blocks = [(lo, off) for lo in config.lower_bounds for off in config.offsets]
    for block_index, (lower, offset) in enumerate(tqdm(blocks, desc="blocks")):
        upper = lower + offset
        n = offset + 1
        guaranteed = np.stack([_guaranteed_vector(p, lower, upper) for p in config.points_rules])
        indicators = np.stack(
            [np.stack([bonus_indicator(rule, lower, upper, int(gap)) for rule in config.bonus_rules]) for gap in gaps]
        ).astype(np.int64)
        # (gap, bonus, points, rule, n, n)
        payoff = (
            guaranteed[None, None, :, None, :, None]
            + bonuses[None, :, None, None, None, None] * indicators[:, None, None, :, :, :]
        )
        flat = np.ascontiguousarray(payoff.reshape(block_size, n * n))
        _, first, local_inverse = np.unique(flat, axis=0, return_index=True, return_inverse=True)
        local_inverse = np.asarray(local_inverse).reshape(-1)
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        start = block_index * block_size
        inverse[start:start + block_size] = rank[local_inverse] + found
        found += len(order)

        gi, bi, pi, ri = np.unravel_index(first[order], block_shape)
        columns["lower_bound"].append(np.full(len(order), lower))
        columns["upper_bound"].append(np.full(len(order), upper))
        columns["gap_idx"].append(gi)
        columns["bonus_idx"].append(bi)
        columns["points_idx"].append(pi)
        columns["rule_idx"].append(ri)

    cols = {name: np.concatenate(parts) for name, parts in columns.items()}
    gap_values = np.where(uses_gap[cols["rule_idx"]], gaps[cols["gap_idx"]], 1)
    frame = pd.DataFrame(
        {
            "lower_bound": cols["lower_bound"].astype(np.int64),
            "upper_bound": cols["upper_bound"].astype(np.int64),
            "gap": gap_values.astype(np.int64),
            "bonus_size": bonuses[cols["bonus_idx"]],
            "points_rule": np.array([r.value for r in config.points_rules], dtype=object)[cols["points_idx"]],
            "bonus_rule": np.array([r.name for r in config.bonus_rules], dtype=object)[cols["rule_idx"]],
        }
    )
    print(f"Done: {config.raw_count} specs -> {len(frame)} unique games")
    return GamePopulation(frame, inverse, config)


def family_counts(config=None):
    config = config or FamilyConfig()
    gap_free = sum(1 for rule in config.bonus_rules if not rule.uses_gap)
    gap_using = len(config.bonus_rules) - gap_free
    per_block = len(config.bonus_sizes) * len(config.points_rules) * (gap_using * len(config.gaps) + gap_free)
    population = dedup_full_family(config)
    return {
        "raw": config.raw_count,
        "gap_collapsed": len(config.lower_bounds) * len(config.offsets) * per_block,
        "unique": len(population),
        "digest": population.digest,
    }


# --- sampling -------------------------------------------------------------

@dataclass
class GameSampleFrame:
    population_digest: str
    draws: list
    seed: int
    scheme: str

    @property
    def specs(self):
        return [spec for spec, _ in self.draws]


def _raw_probabilities(config, scheme):
    """Probability of every raw spec, in enumeration order."""
    factors = [
        np.full(len(config.lower_bounds), 1.0 / len(config.lower_bounds)),
        np.full(len(config.offsets), 1.0 / len(config.offsets)),
        np.full(len(config.gaps), 1.0 / len(config.gaps)),
        np.full(len(config.bonus_sizes), 1.0 / len(config.bonus_sizes)),
    ]
    if scheme == "paper":
        points = np.array([float(PAPER_POINTS_WEIGHTS[p]) for p in config.points_rules])
        rules = np.array([float(PAPER_RULE_WEIGHTS[r]) for r in config.bonus_rules])
        factors += [points / points.sum(), rules / rules.sum()]
    else:
        factors += [
            np.full(len(config.points_rules), 1.0 / len(config.points_rules)),
            np.full(len(config.bonus_rules), 1.0 / len(config.bonus_rules)),
        ]
    probs = factors[0]
    for factor in factors[1:]:
        probs = np.multiply.outer(probs, factor)
    return probs.reshape(-1)


def population_weights(population, scheme="uniform"):
    """Sampling weight π(x) of every representative; positive and summing to 1."""
    n = len(population)
    if scheme == "uniform":
        return np.full(n, 1.0 / n)
    if scheme != "paper":
        raise InvalidSpec(f"unknown sampling scheme {scheme!r}", choices=("uniform", "paper"))
    if population.config is None:
        raise InvalidSpec("the 'paper' scheme needs the population's family config")
    if population.inverse is None:
        rebuilt = dedup_full_family(population.config)
        if rebuilt.digest != population.digest:
            raise InvalidSpec("population does not match its family config", digest=population.digest)
        inverse = rebuilt.inverse
    else:
        inverse = population.inverse
    weights = np.bincount(inverse, weights=_raw_probabilities(population.config, "paper"), minlength=n)
    return weights / weights.sum()


def sample_games(population, n, scheme="uniform", seed=0):
    """Draw n distinct representatives under the named weighting scheme."""
    if n > len(population):
        raise SampleTooLarge(f"cannot draw {n} games from a population of {len(population)}", n=n, size=len(population))
    weights = population_weights(population, scheme)
    rng = np.random.default_rng(seed)
    if scheme == "uniform":
        chosen = rng.choice(len(population), size=n, replace=False)
    else:
        chosen = rng.choice(len(population), size=n, replace=False, p=weights)
    draws = [(population.spec(i), float(weights[i])) for i in chosen]
    return GameSampleFrame(population.digest, draws, seed, scheme)


# --- serialization --------------------------------------------------------

def write_population_ldjson(population, path, seed=None):
    text = population_ldjson(population.frame)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    manifest = {
        "digest": population.digest,
        "count": len(population),
        "config": population.config.to_dict() if population.config else None,
        "seed": seed,
    }
    with open(f"{path}.manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest


def read_population_ldjson(path):
    frame = pd.read_json(path, lines=True, dtype=False)
    if frame.empty:
        frame = pd.DataFrame(columns=list(SPEC_FIELDS))
    frame = frame[list(SPEC_FIELDS)]
    config = None
    manifest_path = f"{path}.manifest.json"
    if os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        if manifest.get("config"):
            config = FamilyConfig.from_dict(manifest["config"])
    return GamePopulation(frame.reset_index(drop=True), None, config)


def sample_frame_to_json(frame):
    return {
        "population_digest": frame.population_digest,
        "seed": frame.seed,
        "scheme": frame.scheme,
        "draws": [{"spec": spec.to_dict(), "weight": weight} for spec, weight in frame.draws],
    }


def sample_frame_from_json(data):
    draws = [(GameSpec.from_dict(d["spec"]), float(d["weight"])) for d in data["draws"]]
    return GameSampleFrame(data["population_digest"], draws, data["seed"], data["scheme"])
