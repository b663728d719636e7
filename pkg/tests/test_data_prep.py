from types import SimpleNamespace

import pytest

from utils import data_prep, settings
from utils.agent_logic import Setting, allocation_setting
from utils.data_prep import (
    fetch_input,
    ingest_human_csv,
    load_ar_basic_reconstructed,
    load_ar_dataset,
    load_two_stage_dataset,
    published_nash_percent,
    write_human_csv,
)
from utils.errors import DuplicateResponse, InputUnavailable, MalformedInput, MissingSetting


def write_csv(tmp_path, text, name="humans.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_bundled_basic_has_108_responses():
    dataset = load_ar_basic_reconstructed()
    assert dataset.n_responses == 108
    assert set(dataset.responses["basic"]) <= set(range(11, 21))
    assert dataset.counts["basic"].counts.tolist() == [4, 0, 3, 7, 1, 7, 35, 32, 13, 6]
    assert dataset.filter_report == {"whole": 0, "range": 0}


def test_ar_percentages_become_counts():
    dataset = load_ar_dataset()
    assert {g: int(d.counts.sum()) for g, d in dataset.counts.items()} == {"basic": 108, "cycle": 72, "costless": 53}
    assert len(dataset.responses["cycle"]) == 72
    assert dataset.settings["costless"].actions == tuple(range(11, 21))


def test_out_of_range_action_is_filtered(tmp_path):
    path = write_csv(tmp_path, "game_id,subject_id,action\nbasic,a,17\nbasic,b,25\nbasic,c,20\n")
    dataset = ingest_human_csv(path)
    assert dataset.responses["basic"] == [17, 20]
    assert dataset.filter_report == {"whole": 0, "range": 1}


def test_fractional_action_is_filtered(tmp_path):
    path = write_csv(tmp_path, "game_id,subject_id,action\nbasic,a,17.5\nbasic,b,18.0\n")
    dataset = ingest_human_csv(path)
    assert dataset.responses["basic"] == [18]
    assert dataset.filter_report["whole"] == 1


def test_disabled_filter_makes_bad_rows_malformed(tmp_path):
    path = write_csv(tmp_path, "game_id,subject_id,action\nbasic,a,17\nbasic,b,25\n")
    with pytest.raises(MalformedInput) as excinfo:
        ingest_human_csv(path, filters=("whole",))
    assert excinfo.value.lines == [3]


def test_header_is_checked(tmp_path):
    path = write_csv(tmp_path, "game,subject,choice\nbasic,a,17\n")
    with pytest.raises(MalformedInput) as excinfo:
        ingest_human_csv(path)
    assert excinfo.value.lines == [1]


def test_empty_cells_are_reported_with_line_numbers(tmp_path):
    path = write_csv(tmp_path, "game_id,subject_id,action\nbasic,a,17\nbasic,,18\nbasic,c\n")
    with pytest.raises(MalformedInput) as excinfo:
        ingest_human_csv(path)
    assert excinfo.value.lines == [3, 4]


def test_unparseable_row_is_reported(tmp_path):
    path = write_csv(tmp_path, "game_id,subject_id,action\nbasic,a,17\nbasic,b,18,extra\n")
    with pytest.raises(MalformedInput) as excinfo:
        ingest_human_csv(path)
    assert 3 in excinfo.value.lines


def test_duplicate_subject_is_a_hard_failure(tmp_path):
    path = write_csv(tmp_path, "game_id,subject_id,action\nbasic,a,17\ncycle,a,18\nbasic,a,19\n")
    with pytest.raises(DuplicateResponse):
        ingest_human_csv(path)


def test_unknown_game_needs_a_setting(tmp_path):
    path = write_csv(tmp_path, "game_id,subject_id,action\nmystery,a,17\n")
    with pytest.raises(MissingSetting):
        ingest_human_csv(path)


def test_label_actions(tmp_path):
    setting = allocation_setting("dictator", {"left_a": 400, "left_b": 400, "right_a": 750, "right_b": 375})
    path = write_csv(tmp_path, "game_id,subject_id,action\ng1,a,Left\ng1,b,Right\ng1,c,Up\n")
    dataset = ingest_human_csv(path, {"g1": setting})
    assert dataset.counts["g1"].counts.tolist() == [1, 1]
    assert dataset.filter_report["range"] == 1


def test_round_trip_keeps_counts(tmp_path):
    original = load_ar_dataset(("basic", "costless"))
    path = str(tmp_path / "out" / "humans.csv")
    assert write_human_csv(original, path) == 161
    again = ingest_human_csv(path)
    for game_id in original.game_ids:
        assert again.counts[game_id].counts.tolist() == original.counts[game_id].counts.tolist()


def test_two_stage_dataset():
    dataset = load_two_stage_dataset()
    assert len(dataset.counts) == 40
    assert dataset.distribution("Berk18:A").probs.tolist() == [0.0, 1.0]
    assert dataset.settings["Barc7:B"].actions == ("Left", "Right")
    assert dataset.n_responses == 0
    assert len(load_two_stage_dataset(panels=("A",)).counts) == 8


def test_published_nash_rows():
    rows = published_nash_percent()
    assert sum(rows["basic"]) == 100
    assert rows["costless"][3] == 10


def test_settings_can_be_given_as_a_list(tmp_path):
    path = write_csv(tmp_path, "game_id,subject_id,action\nbasic,a,17\n")
    dataset = ingest_human_csv(path, [Setting.from_variant("basic")])
    assert dataset.responses == {"basic": [17]}


# inputs by path or URL

def test_local_inputs(tmp_path):
    path = write_csv(tmp_path, "x")
    assert fetch_input(path) == path
    with pytest.raises(InputUnavailable):
        fetch_input(str(tmp_path / "missing.csv"))


def test_download_is_cached(tmp_path, monkeypatch):
    calls = []

    def fake_get(url, timeout):
        calls.append(url)
        return SimpleNamespace(status_code=200, content=b"game_id,subject_id,action\n")

    monkeypatch.setattr(settings, "OFFLINE", False)
    monkeypatch.setattr(data_prep.requests, "get", fake_get)
    first = fetch_input("https://data.example.test/humans.csv", cache_dir=str(tmp_path))
    second = fetch_input("https://data.example.test/humans.csv", cache_dir=str(tmp_path))
    assert first == second and first.endswith(".csv")
    assert calls == ["https://data.example.test/humans.csv"]
    with open(first, "rb") as f:
        assert f.read() == b"game_id,subject_id,action\n"


def test_failed_download(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "OFFLINE", False)
    monkeypatch.setattr(data_prep.requests, "get", lambda url, timeout: SimpleNamespace(status_code=404, content=b""))
    with pytest.raises(InputUnavailable):
        fetch_input("https://data.example.test/missing.csv", cache_dir=str(tmp_path))


def test_offline_blocks_downloads(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "OFFLINE", True)
    with pytest.raises(InputUnavailable):
        fetch_input("https://data.example.test/humans.csv", cache_dir=str(tmp_path))
