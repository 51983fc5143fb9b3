import pytest

from ehr_surprisal.vocabulary import (
    SPECIAL_TOKENS,
    Vocabulary,
    VocabularyError,
    token_type,
)


def test_preset_has_208_contiguous_bijective_entries(vocab):
    assert len(vocab) == 208
    assert len(set(vocab.tokens)) == 208
    for i, tok in enumerate(vocab.tokens):
        assert vocab.id_of(tok) == i
        assert vocab.token_of(i) == tok


def test_preset_listing_order_and_specials(vocab):
    assert vocab.tokens[:10] == tuple(f"Q{i}" for i in range(10))
    assert vocab.tokens[10:16] == ("TL_START", "TL_END", "PAD", "TRUNC", "None", "nan")
    assert vocab.tokens[16] == "RACE_white"
    assert vocab.tokens[-1] == "POSN_prone"


@pytest.mark.parametrize(
    "token",
    [
        "LAB_hemoglobin",
        "VTL_temp_c",
        "MED_sodium_bicarbonate",
        "ASMT_cat_cam_loc",
        "ASMT_val_no_(less_than_3_errors_-_stop_-_not_delirious)",
        "RESP_mode_None",
        "RESP_devc_trach_collar",
        "DSCG_skilled_nursing_facility_(snf)",
        "ADT_l&d",
        "ADMN_ew_emer.",
    ],
)
def test_preset_contains_expected_strings(vocab, token):
    assert token in vocab


def test_unknown_token_and_id_raise(vocab):
    with pytest.raises(VocabularyError):
        vocab.id_of("LAB_nonexistent")
    with pytest.raises(VocabularyError):
        vocab.token_of(208)


def test_duplicate_tokens_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        Vocabulary(["a", "b", "a"])


def test_save_load_roundtrip(tmp_path, vocab):
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "Q0" and lines[207] == "POSN_prone"
    assert Vocabulary.load(path) == vocab


def test_builder_assigns_first_seen_after_specials():
    b = Vocabulary.seeded()
    b.add("LAB_x")
    b.add("VTL_y")
    b.add("LAB_x")
    v = b.build()
    assert v.id_of("Q0") == 0
    assert v.id_of("nan") == 15
    assert v.id_of("LAB_x") == 16
    assert v.id_of("VTL_y") == 17


def test_token_type_families():
    assert token_type("Q7") == "Q"
    assert token_type("TL_START") == "SPECIAL"
    assert token_type("nan") == "SPECIAL"
    assert token_type("LAB_hemoglobin") == "LAB"
    assert token_type("ASMT_cat_cam_loc") == "ASMT"
    assert token_type("POSN_prone") == "POSN"


def test_every_special_token_present(vocab):
    for tok in SPECIAL_TOKENS:
        assert tok in vocab
