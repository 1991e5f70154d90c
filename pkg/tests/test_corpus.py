import json

import pytest

from stratrec.corpus import (
    RawDialogue,
    RawTurn,
    extract_sft_pairs,
    generate_synthetic_corpus,
    load_corpus,
    load_strategy_aliases,
    save_normalized,
)
from stratrec.dialogue import Speaker


def test_empty_file_loads_empty(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text("")
    assert load_corpus(path, "normalized") == []


def test_unknown_schema_rejected(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text("")
    with pytest.raises(ValueError):
        load_corpus(path, "mystery")


def test_missing_file_rejected(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_corpus(tmp_path / "absent.jsonl", "normalized")


def test_normalized_round_trip(tmp_path):
    dialogues, _ = generate_synthetic_corpus(seed=3, n_dialogues=6)
    path = tmp_path / "corpus.jsonl"
    save_normalized(dialogues, path)
    assert load_corpus(path, "normalized") == dialogues


def test_unknown_role_skipped_with_diagnostic(tmp_path, caplog):
    path = tmp_path / "c.jsonl"
    rows = [
        {"dialogue_id": "d1", "turn_index": 1, "role": "seeker", "text": "hi"},
        {"dialogue_id": "d1", "turn_index": 2, "role": "wizard", "text": "zap"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows))
    with caplog.at_level("WARNING"):
        dialogues = load_corpus(path, "normalized")
    assert len(dialogues) == 1
    assert len(dialogues[0].turns) == 1
    assert any("skipped" in r.message for r in caplog.records)


def test_inspired_like_loader(tmp_path):
    path = tmp_path / "inspired.tsv"
    path.write_text(
        "dialog_id\tspeaker\ttext\tstrategy\tmovies\n"
        "d1\tSEEKER\thi there\t\t\n"
        "d1\tRECOMMENDER\ttry this one\tcredibility\tSome Movie\n"
        "d1\tBYSTANDER\tnot a role\t\t\n"
    )
    dialogues = load_corpus(path, "inspired")
    assert len(dialogues) == 1
    assert dialogues[0].turns[1].strategy == "credibility"
    assert dialogues[0].turns[1].items == ("Some Movie",)
    assert len(dialogues[0].turns) == 2  # bystander row skipped


def test_redial_like_loader(tmp_path):
    path = tmp_path / "redial.jsonl"
    conv = {
        "conversationId": 77,
        "initiatorWorkerId": 1,
        "respondentWorkerId": 2,
        "movieMentions": {"111": "Static Horizon"},
        "messages": [
            {"senderWorkerId": 1, "text": "hi, any scifi?"},
            {"senderWorkerId": 2, "text": "watch @111 tonight"},
        ],
    }
    path.write_text(json.dumps(conv))
    dialogues = load_corpus(path, "redial")
    assert dialogues[0].dialogue_id == "77"
    assert dialogues[0].turns[0].role == "seeker"
    assert dialogues[0].turns[1].text == "watch Static Horizon tonight"
    assert dialogues[0].turns[1].items == ("Static Horizon",)
    # no strategy annotations in this schema: zero supervised pairs by design
    from stratrec.strategies import default_catalog

    pairs, unmapped = extract_sft_pairs(dialogues, default_catalog())
    assert pairs == [] and unmapped == []


def test_consecutive_same_role_turns_merged(tmp_path):
    path = tmp_path / "c.jsonl"
    rows = [
        {"dialogue_id": "d", "turn_index": 1, "role": "seeker", "text": "one"},
        {"dialogue_id": "d", "turn_index": 2, "role": "seeker", "text": "two"},
        {"dialogue_id": "d", "turn_index": 3, "role": "recommender", "text": "three"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows))
    dialogues = load_corpus(path, "normalized")
    assert len(dialogues[0].turns) == 2
    assert dialogues[0].turns[0].text == "one\ntwo"


# ---------------------------------------------------------------------------
# supervised pairs
# ---------------------------------------------------------------------------


def test_direct_annotation_mapping(catalog):
    d = RawDialogue(
        "d",
        (
            RawTurn("seeker", "hi"),
            RawTurn("recommender", "facts!", strategy="credibility"),
        ),
    )
    pairs, unmapped = extract_sft_pairs([d], catalog)
    assert unmapped == []
    assert len(pairs) == 1
    assert catalog.by_id(pairs[0].gold).name == "Credibility"
    assert pairs[0].state.history[-1].speaker is Speaker.USER


def test_unmapped_annotation_surfaces(catalog):
    d = RawDialogue(
        "d",
        (
            RawTurn("seeker", "hi"),
            RawTurn("recommender", "blah", strategy="chit_chat"),
        ),
    )
    pairs, unmapped = extract_sft_pairs([d], catalog)
    assert pairs == []
    assert unmapped == ["chit_chat"]


def test_alias_table_maps_dataset_spellings(catalog):
    aliases = load_strategy_aliases()
    assert aliases["preference_confirmation"] == "Transparency"
    d = RawDialogue(
        "d",
        (
            RawTurn("seeker", "hi"),
            RawTurn("recommender", "so you like drama?", strategy="preference_confirmation"),
        ),
    )
    pairs, unmapped = extract_sft_pairs([d], catalog)
    assert unmapped == []
    assert catalog.by_id(pairs[0].gold).name == "Transparency"


def test_pair_accounting(catalog):
    dialogues, manifest = generate_synthetic_corpus(seed=11, n_dialogues=15)
    pairs, unmapped = extract_sft_pairs(dialogues, catalog)
    assert len(pairs) + len(unmapped) == manifest["n_annotated_recommender_turns"]
    assert unmapped == []  # construction guarantee


def test_states_never_end_with_system_turn(catalog):
    dialogues, _ = generate_synthetic_corpus(seed=12, n_dialogues=10)
    pairs, _ = extract_sft_pairs(dialogues, catalog)
    for p in pairs:
        assert not p.state.history or p.state.history[-1].speaker is Speaker.USER


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------


def test_generator_deterministic(tmp_path):
    a, ma = generate_synthetic_corpus(seed=7, n_dialogues=20)
    b, mb = generate_synthetic_corpus(seed=7, n_dialogues=20)
    assert a == b and ma == mb
    pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_normalized(a, pa)
    save_normalized(b, pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_manifest_counts_match_recount():
    dialogues, manifest = generate_synthetic_corpus(seed=9, n_dialogues=20)
    assert manifest["n_dialogues"] == len(dialogues) == 20
    assert manifest["n_utterances"] == sum(len(d.turns) for d in dialogues)
    annotated = sum(1 for d in dialogues for t in d.turns if t.strategy)
    assert manifest["n_annotated_recommender_turns"] == annotated
    assert sum(manifest["strategy_counts"].values()) == annotated


def test_gold_items_exist_in_bundled_kg():
    from stratrec.corpus import bundled_kg_paths
    from stratrec.retrieval import load_triples

    triples_path, profiles_path = bundled_kg_paths()
    heads = {t.head for t in load_triples(triples_path)}
    dialogues, _ = generate_synthetic_corpus(seed=2, n_dialogues=12)
    for d in dialogues:
        assert d.gold_item in heads
