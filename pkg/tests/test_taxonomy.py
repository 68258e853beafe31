import pytest

from nomenflow.taxonomy import (
    DEFAULT_EXCLUDED,
    LEVEL1_LABELS,
    ExclusionPolicy,
    TaxonomyError,
    continent_of,
    load_countries,
    load_taxonomy,
    parse_taxonomy,
)


def test_label_counts(taxonomy):
    assert len(taxonomy.labels(3)) == 175
    assert len(taxonomy.labels(2)) == 30
    assert len(taxonomy.labels(1)) == 12
    assert set(taxonomy.labels(1)) == LEVEL1_LABELS


def test_rollups(taxonomy):
    assert taxonomy.rollup("JP", 3) == "JP"
    assert taxonomy.rollup("JP", 2) == "Japanese"
    assert taxonomy.rollup("DE", 1) == "German"
    assert taxonomy.rollup("BR", 1) == "Hispanic"
    with pytest.raises(KeyError, match="unknown_country"):
        taxonomy.rollup("XX", 1)
    with pytest.raises(ValueError):
        taxonomy.rollup("JP", 4)


def test_rollup_composes(taxonomy):
    for c in taxonomy.labels(3):
        assert taxonomy.level1[taxonomy.rollup(c, 2)] == taxonomy.rollup(c, 1)


def test_excluded_countries_absent(taxonomy):
    assert not DEFAULT_EXCLUDED & taxonomy.level3


def test_taxonomy_countries_are_iso(taxonomy):
    iso = load_countries()
    assert taxonomy.level3 <= set(iso)
    assert all(taxonomy.continent[c] == continent_of(c) for c in taxonomy.level3)


def test_iso_table():
    iso = load_countries()
    assert len(iso) == 249
    assert iso["DE"].alpha3 == "DEU"
    assert continent_of("MX") == "North America"
    assert continent_of("BR") == "South America"


GOOD = "JP\tJapanese\tEast Asian\tAsia\nDE\tGerman\tGerman\tEurope\n"


def test_parse_minimal():
    t = parse_taxonomy(GOOD)
    assert t.labels(2) == ["German", "Japanese"]


@pytest.mark.parametrize("text,kind", [
    (GOOD + "JP\tJapanese\tEast Asian\tAsia\n", "duplicate_country"),
    (GOOD + "XX\tNowhere\tGerman\tEurope\n", "unknown_country_code"),
    (GOOD + "AT\t\tGerman\tEurope\n", "missing_parent"),
    (GOOD + "AT\tGerman\tTeutonic\tEurope\n", "unknown_level1_label"),
    (GOOD + "AT\tGerman\tSlavic\tEurope\n", "conflicting_parent"),
    (GOOD + "AT German\n", "parse_error"),
    ("# nothing here\n", "parse_error"),
    ("#! expect level3=3\n" + GOOD, "count_mismatch"),
])
def test_violations(text, kind):
    with pytest.raises(TaxonomyError) as info:
        parse_taxonomy(text)
    assert kind in info.value.kinds


def test_all_violations_reported():
    text = GOOD + "XX\ta\tGerman\tEurope\nJP\tJapanese\tEast Asian\tAsia\n"
    with pytest.raises(TaxonomyError) as info:
        parse_taxonomy(text)
    assert info.value.kinds == {"unknown_country_code", "duplicate_country"}
    assert [v.line for v in info.value.violations] == [3, 4]


def test_load_from_path(tmp_path):
    p = tmp_path / "t.tsv"
    p.write_text(GOOD, encoding="utf-8")
    assert "JP" in load_taxonomy(p)
    with pytest.raises(OSError):
        load_taxonomy(tmp_path / "missing.tsv")


def test_exclusion_policy():
    assert ExclusionPolicy().excluded_countries == DEFAULT_EXCLUDED
    assert ExclusionPolicy.from_codes(["us", "fr"], 5).excluded_countries == {"US", "FR"}
    with pytest.raises(ValueError):
        ExclusionPolicy(min_class_size=0)
