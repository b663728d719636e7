"""
Human response data.

Ingests `(game_id, subject_id, action)` CSVs with the optional range and
whole-number filters, writes them back out, fetches inputs referenced by
URL, and loads the published datasets bundled under `data/humans/`.
"""

import hashlib
import json
import os
import re
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import requests

from utils import settings
from utils.agent_logic import ResponseDistribution, Setting, allocation_setting, scale_mixture_to_population
from utils.error_logger import get_error_tracker
from utils.errors import DuplicateResponse, InputUnavailable, MalformedInput, MissingSetting
from utils.game_logic import VARIANT_NAMES

HEADER = ("game_id", "subject_id", "action")
FILTERS = ("whole", "range")


@dataclass
class HumanDataset:
    """Responses per game plus the settings they were given in."""

    source: str
    settings: dict
    counts: dict
    responses: dict
    notes: str = ""
    filter_report: dict = field(default_factory=dict)
    subjects: dict = field(default_factory=dict)

    @property
    def game_ids(self):
        return sorted(self.counts)

    @property
    def n_responses(self):
        return sum(len(ys) for ys in self.responses.values())

    def distribution(self, game_id):
        if game_id not in self.counts:
            raise MissingSetting(f"no responses for game {game_id!r}", game=game_id, source=self.source)
        return self.counts[game_id]

    def to_frame(self):
        rows = []
        for game_id in self.game_ids:
            subjects = self.subjects.get(game_id) or [f"s{i + 1:03d}" for i in range(len(self.responses[game_id]))]
            rows.extend((game_id, s, a) for s, a in zip(subjects, self.responses[game_id]))
        return pd.DataFrame(rows, columns=list(HEADER))

    def summary(self):
        return {
            "source": self.source,
            "games": len(self.counts),
            "responses": self.n_responses,
            "filter_report": dict(self.filter_report),
            "notes": self.notes,
        }


def _settings_lookup(settings_map, game_ids):
    resolved = {}
    for game_id in game_ids:
        if settings_map and game_id in settings_map:
            resolved[game_id] = settings_map[game_id]
        elif game_id in VARIANT_NAMES:
            resolved[game_id] = Setting.from_variant(game_id)
        else:
            raise MissingSetting(f"no setting declared for game {game_id!r}", game=game_id)
    return resolved


def _coerce_settings(settings_map):
    if settings_map is None:
        return {}
    if isinstance(settings_map, dict):
        return dict(settings_map)
    return {s.name or s.id: s for s in settings_map}


def _read_rows(path):
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.ParserError as e:
        lines = [int(n) for n in re.findall(r"line (\d+)", str(e))]
        raise MalformedInput(f"could not parse {path}: {e}", lines=lines, path=path) from e
    except pd.errors.EmptyDataError as e:
        raise MalformedInput(f"{path} is empty", lines=[1], path=path) from e
    frame = frame.fillna("")
    if tuple(c.strip() for c in frame.columns) != HEADER:
        raise MalformedInput(f"header must be {','.join(HEADER)}, got {','.join(frame.columns)}", lines=[1], path=path)
    frame.columns = list(HEADER)
    # header is line 1
    frame["line"] = frame.index + 2
    return frame


def ingest_human_csv(path, settings=None, filters=FILTERS, source=None):
    """
    Read a human response CSV into a HumanDataset.

    Rows failing an enabled filter are dropped and counted in
    `filter_report`; rows failing a disabled filter are malformed.
    Duplicate (game_id, subject_id) pairs are a hard failure.
    """
    print(f"Start: Ingesting human responses from {path}")
    tracker = get_error_tracker()
    filters = set(filters or ())
    unknown = filters - set(FILTERS)
    if unknown:
        raise ValueError(f"unknown filters {sorted(unknown)}; choose from {FILTERS}")

    frame = _read_rows(path)
    empty = frame[(frame[list(HEADER)].apply(lambda col: col.str.strip()) == "").any(axis=1)]
    if not empty.empty:
        raise MalformedInput("rows with empty cells", lines=empty["line"].tolist(), path=path)
    for column in HEADER:
        frame[column] = frame[column].str.strip()

    dup_mask = frame.duplicated(["game_id", "subject_id"], keep=False)
    if dup_mask.any():
        dups = frame[dup_mask]
        tracker.log_error("duplicate_response", {"path": path, "lines": dups["line"].tolist()}, component="ingest")
        raise DuplicateResponse("a subject answered the same game twice", path=path, lines=dups["line"].tolist(),
                                pairs=sorted(set(zip(dups["game_id"], dups["subject_id"]))))

    game_settings = _settings_lookup(_coerce_settings(settings), sorted(frame["game_id"].unique()))
    removed = {name: 0 for name in FILTERS if name in filters}
    keep, bad_lines = [], []
    for row in frame.itertuples(index=False):
        setting = game_settings[row.game_id]
        action, verdict = _check_action(row.action, setting)
        if verdict is None:
            keep.append((row.game_id, row.subject_id, action))
        elif verdict in filters:
            removed[verdict] += 1
        else:
            bad_lines.append(row.line)
    if bad_lines:
        raise MalformedInput("actions outside the declared action set", lines=bad_lines, path=path)
    if any(removed.values()):
        tracker.log_error("filtered_rows", {"path": path, **removed}, component="ingest")

    responses, subjects = {}, {}
    for game_id, subject_id, action in keep:
        responses.setdefault(game_id, []).append(action)
        subjects.setdefault(game_id, []).append(subject_id)
    counts = {}
    for game_id, ys in responses.items():
        setting = game_settings[game_id]
        tally = [sum(1 for y in ys if y == a) for a in setting.actions]
        counts[game_id] = ResponseDistribution.from_counts(setting.id, setting.actions, tally)

    dataset = HumanDataset(
        source=source or os.path.basename(path),
        settings={g: game_settings[g] for g in responses},
        counts=counts,
        responses=responses,
        filter_report=removed,
        subjects=subjects,
    )
    print(f"Done: {dataset.n_responses} responses over {len(counts)} games, removed {removed}")
    return dataset


def _check_action(raw, setting):
    """(action, None) if valid, else (None, name of the failed filter)."""
    if not setting.is_numeric:
        return (raw, None) if raw in setting.actions else (None, "range")
    try:
        value = float(raw)
    except ValueError:
        return None, "whole"
    if not np.isfinite(value) or value != int(value):
        return None, "whole"
    value = int(value)
    return (value, None) if value in setting.actions else (None, "range")


def write_human_csv(dataset, path):
    frame = dataset.to_frame()
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False)
    return len(frame)


# --- inputs by path or URL -------------------------------------------------

def fetch_input(uri, cache_dir=None, timeout=60):
    """
    Local path for a manifest input; http(s) URLs are downloaded once into
    the cache under their content hash.
    """
    if not uri.startswith(("http://", "https://")):
        if not os.path.exists(uri):
            raise InputUnavailable(f"input file does not exist: {uri}", uri=uri)
        return uri
    if settings.OFFLINE:
        raise InputUnavailable("offline mode forbids downloading inputs", uri=uri)
    cache_dir = os.path.join(cache_dir or settings.CACHE_DIR, "inputs")
    index_path = os.path.join(cache_dir, hashlib.sha256(uri.encode("utf-8")).hexdigest() + ".json")
    if os.path.exists(index_path):
        with open(index_path, "r", encoding="utf-8") as f:
            cached = json.load(f)["path"]
        if os.path.exists(cached):
            return cached

    print(f"Start: Downloading {uri}")
    try:
        response = requests.get(uri, timeout=timeout)
    except requests.exceptions.RequestException as e:
        get_error_tracker().log_error("download_failed", {"uri": uri, "message": str(e)}, component="pipeline")
        raise InputUnavailable(f"could not download {uri}: {e}", uri=uri) from e
    if response.status_code != 200:
        get_error_tracker().log_error("download_failed", {"uri": uri, "status": response.status_code},
                                      component="pipeline")
        raise InputUnavailable(f"download failed with HTTP {response.status_code}", uri=uri)

    digest = hashlib.sha256(response.content).hexdigest()
    suffix = os.path.splitext(uri.split("?")[0])[1]
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(cache_dir, digest + suffix)
    with open(path, "wb") as f:
        f.write(response.content)
    with open(index_path, "w", encoding="utf-8") as f:
        json.dump({"uri": uri, "path": path, "sha256": digest}, f)
    print(f"Done: {len(response.content)} bytes from {uri}")
    return path


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


# --- bundled published data --------------------------------------------------

def _load_humans_json(name):
    with open(settings.data_path("humans", name), "r", encoding="utf-8") as f:
        return json.load(f)


def load_ar_dataset(variants=("basic", "cycle", "costless")):
    """Money-request variants as counts recovered from published percentages."""
    data = _load_humans_json("money_request_ar.json")
    counts, responses, game_settings = {}, {}, {}
    for name in variants:
        row = data["variants"][name]
        setting = Setting.from_variant(name)
        tally = [c for _, c in scale_mixture_to_population(row["percent"], row["n"])]
        counts[name] = ResponseDistribution.from_counts(setting.id, setting.actions, tally)
        responses[name] = [a for a, c in zip(setting.actions, tally) for _ in range(c)]
        game_settings[name] = setting
    return HumanDataset("money_request_ar", game_settings, counts, responses, data["notes"])


def load_ar_basic_reconstructed():
    path = settings.data_path("humans", _load_humans_json("money_request_ar.json")["reconstructed_csv"])
    dataset = ingest_human_csv(path, {"basic": Setting.from_variant("basic")}, source="ar_basic_reconstructed")
    dataset.notes = "reconstructed from published percentages; subject ids are synthetic"
    return dataset


def published_nash_percent():
    return {name: list(row) for name, row in _load_humans_json("money_request_ar.json")["nash_percent"].items()}


def two_stage_settings(game):
    """The Person A (Out/Enter) and Person B (Left/Right) settings of one two-stage game."""
    payoffs = {
        "out_a": game["out"][0], "out_b": game["out"][1],
        "left_a": game["left"][0], "left_b": game["left"][1],
        "right_a": game["right"][0], "right_b": game["right"][1],
    }
    return (allocation_setting("two_stage_a", payoffs, name=f"{game['name']}:A"),
            allocation_setting("two_stage_b", payoffs, name=f"{game['name']}:B"))


def load_two_stage_dataset(panels=("A", "B", "C")):
    """
    Published two-stage allocation shares.

    Only shares were printed, so the counts are probability vectors with
    n=1 and there are no individual responses.
    """
    data = _load_humans_json("two_stage_allocation.json")
    counts, game_settings = {}, {}
    for game in data["games"]:
        if game["panel"] not in panels:
            continue
        for setting in two_stage_settings(game):
            probs = [game["shares"][a] for a in setting.actions]
            counts[setting.name] = ResponseDistribution.from_probs(setting.id, setting.actions, probs)
            game_settings[setting.name] = setting
    return HumanDataset("two_stage_allocation", game_settings, counts, {}, data["notes"])
