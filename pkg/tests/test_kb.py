import json

import pytest

from socketgeo.kb import (
    KB_V1_CARDINALITIES,
    ClfClass,
    DetClass,
    KBError,
    KnowledgeBase,
    PlugType,
    check_v1_cardinalities,
    default_kb,
    is_valid_country_code,
    load_kb,
)


def test_enum_sizes():
    assert len(PlugType) == 12
    assert len(ClfClass) == 13
    assert {t.value for t in PlugType} | {"NOISE"} == {c.value for c in ClfClass}
    # merged classes only: no bare D, M, J, N anywhere
    assert not {"D", "M", "J", "N"} & {t.value for t in PlugType}
    assert DetClass.NA_SWITCHBOARD == 0 and DetClass.SOCKET == 1
    assert len(DetClass) == 2


def test_v1_cardinalities(kb):
    check_v1_cardinalities(kb)
    assert [kb.cardinalities()[t] for t in PlugType] == [46, 28, 65, 21, 24, 35, 32, 1, 11, 9, 6, 9]


def test_h_maps_to_israel_only(kb):
    assert kb.countries_for(PlugType.H) == {"IL"}


def test_k_has_six_countries(kb):
    assert len(kb.countries_for(PlugType.K)) == 6


def test_known_pairs(kb):
    assert kb.is_valid_pair(ClfClass.G, "GB")
    assert not kb.is_valid_pair(ClfClass.H, "US")
    assert PlugType.JN in kb.types_for_country("BR")


def test_noise_never_valid(kb):
    for code in ("US", "GB", "IL", "BR"):
        assert not kb.is_valid_pair(ClfClass.NOISE, code)


def test_inverse_index_consistency_exhaustive(kb):
    for t in PlugType:
        for c in kb.countries_for(t):
            assert t in kb.types_for_country(c)
    # reverse direction
    seen = {c for t in PlugType for c in kb.countries_for(t)}
    for c in seen:
        for t in kb.types_for_country(c):
            assert c in kb.countries_for(t)


def test_valid_pair_matches_membership_exhaustive(kb):
    for t in PlugType:
        countries = kb.countries_for(t)
        for c in sorted(seen_countries(kb)):
            assert kb.is_valid_pair(t, c) == (c in countries)


def seen_countries(kb):
    return {c for t in PlugType for c in kb.countries_for(t)}


def test_absent_country_empty_types(kb):
    # valid ISO code that no plug-type entry contains
    assert is_valid_country_code("AQ")
    assert kb.types_for_country("AQ") == frozenset()


def test_all_entries_have_provenance(kb):
    for t in PlugType:
        for c in kb.countries_for(t):
            assert kb.provenance[(t, c)]


def test_round_trip(kb, tmp_path):
    p = tmp_path / "kb.json"
    p.write_text(kb.to_json(), encoding="utf-8")
    kb2 = load_kb(p)
    assert kb2.entries == kb.entries
    assert kb2.to_json() == kb.to_json()


def test_load_missing_type(kb, tmp_path):
    doc = json.loads(kb.to_json())
    del doc["entries"]["L"]
    p = tmp_path / "kb.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(KBError, match="missing entry: L"):
        load_kb(p)


def test_load_unknown_country(kb, tmp_path):
    doc = json.loads(kb.to_json())
    doc["entries"]["A"].append({"country": "XX", "source": "bogus"})
    p = tmp_path / "kb.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(KBError, match="unknown country code"):
        load_kb(p)


def test_load_bad_json(tmp_path):
    p = tmp_path / "kb.json"
    p.write_text("{not json")
    with pytest.raises(KBError, match="not valid JSON"):
        load_kb(p)


def test_cardinality_check_reports_type(kb):
    entries = dict(kb.entries)
    entries[PlugType.K] = entries[PlugType.K][:-1]
    smaller = KnowledgeBase(version="test", entries=entries, provenance=kb.provenance)
    with pytest.raises(KBError, match="cardinality mismatch for K"):
        check_v1_cardinalities(smaller)


def test_default_kb_is_cached():
    assert default_kb() is default_kb()
