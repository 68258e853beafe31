import json
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from nomenflow.migration import (
    ACADEMIC,
    EMIGRATION,
    NAME,
    RETURN,
    AuthorRecord,
    CareerTimeline,
    ClassifiedEvent,
    EmptyTimelineError,
    FlowKey,
    FlowTable,
    MigrationEvent,
    NameRejectedError,
    Period,
    PlantedPattern,
    RecordFormatError,
    SyntheticSpec,
    aggregate,
    analyze,
    assign_name_origin,
    build_timeline,
    censor_trim,
    classify_event,
    composition,
    default_synthetic_spec,
    detect_academic_origin,
    detect_moves,
    generate_synthetic_corpus,
    parse_periods,
    read_records,
    trim_timeline,
    write_records,
)


def timeline(countries, start=2000, author="a"):
    return CareerTimeline(author, tuple(range(start, start + len(countries))), tuple(countries))


def record(obs, name="anna smith", gender="unknown", author="a"):
    return AuthorRecord(author, name, tuple(obs), gender)


def test_build_timeline_modal_and_ties():
    assert build_timeline(record([(2000, "US"), (2001, "US")])).countries == ("US", "US")
    assert build_timeline(record([(2001, "US"), (2001, "US"), (2001, "CN")])).countries == ("US",)
    t = build_timeline(record([(2000, "US"), (2001, "CN"), (2001, "US")]))
    assert t.countries == ("US", "US")
    # no previous year among the tied: lexicographic
    assert build_timeline(record([(2001, "US"), (2001, "CN")])).countries == ("CN",)
    t = build_timeline(record([(2000, "DE"), (2001, "US"), (2001, "CN")]))
    assert t.countries == ("DE", "CN")


def test_build_timeline_keeps_gaps():
    t = build_timeline(record([(2005, "FR"), (2000, "US")]))
    assert t.years == (2000, 2005) and t.countries == ("US", "FR")


def test_censor_trim():
    t = timeline(["US"] * 25, start=1996)
    (trimmed,) = censor_trim([t], (1996, 2020))
    assert trimmed.years[0] == 1998 and trimmed.years[-1] == 2018
    assert not {1996, 1997, 2019, 2020} & set(trimmed.years)
    edge = CareerTimeline("e", (1996, 1997, 2019), ("US", "US", "CN"))
    assert len(trim_timeline(edge, (1996, 2020))) == 0


def test_academic_origin():
    assert detect_academic_origin(timeline(["US", "US", "CN", "CN"])) == "US"
    assert detect_academic_origin(timeline(["CN"])) == "CN"
    tied = build_timeline(record([(2000, "US"), (2000, "CN")]))
    assert detect_academic_origin(tied) == "CN"
    with pytest.raises(EmptyTimelineError, match="empty_timeline"):
        detect_academic_origin(timeline([]))


@pytest.mark.parametrize("seq,expected", [
    ("US US CN CN", [(2002, "US", "CN")]),
    ("US CN US US", []),
    ("US US CN CN DE DE", [(2002, "US", "CN"), (2004, "CN", "DE")]),
    ("US US CN", [(2002, "US", "CN")]),
    ("US CN DE DE", [(2002, "US", "DE")]),
    ("US CN US CN", [(2003, "US", "CN")]),
    ("US", []),
    ("", []),
])
def test_detect_moves(seq, expected):
    events = detect_moves(timeline(seq.split()))
    assert [(e.year, e.source, e.destination) for e in events] == expected


def test_detect_moves_uses_entries_across_gaps():
    t = CareerTimeline("a", (2000, 2001, 2005, 2009), ("US", "US", "CN", "CN"))
    assert [(e.year, e.destination) for e in detect_moves(t)] == [(2005, "CN")]


def test_persistence_window():
    t = timeline("US CN CN US US".split())
    assert len(detect_moves(t, persistence=3)) == 0
    assert len(detect_moves(t, persistence=1)) == 2
    with pytest.raises(ValueError):
        detect_moves(t, persistence=0)


def scan_oracle(countries, persistence=2):
    """Independent restatement: find each onset by looking ahead."""
    out, cur = [], countries[0] if countries else None
    i = 1
    while i < len(countries):
        c = countries[i]
        run = 1
        while i + run < len(countries) and countries[i + run] == c:
            run += 1
        if c != cur and (run >= persistence or i + run == len(countries)):
            out.append((i, cur, c))
            cur = c
        i += 1
    return out


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["US", "CN", "DE"]), max_size=14))
def test_detect_moves_properties(seq):
    events = detect_moves(timeline(seq))
    assert [(e.year - 2000, e.source, e.destination) for e in events] == scan_oracle(seq)
    assert all(e.source != e.destination for e in events)
    assert [e.year for e in events] == sorted(e.year for e in events)
    for a, b in zip(events, events[1:]):
        assert a.destination == b.source
    assert detect_moves(timeline(seq)) == events


def test_trimming_can_add_events():
    # a one-year excursion at the window edge becomes the first or last
    # resolved country once the censored years are dropped
    head = CareerTimeline("a", (1997, 1998, 1999, 2000), ("DE", "US", "DE", "DE"))
    assert detect_moves(head) == []
    assert len(detect_moves(trim_timeline(head, (1996, 2020)))) == 1
    tail = CareerTimeline("b", (2016, 2017, 2018, 2019), ("DE", "DE", "US", "DE"))
    assert detect_moves(tail) == []
    assert len(detect_moves(trim_timeline(tail, (1996, 2020)))) == 1


def test_classify_event(taxonomy):
    e = MigrationEvent("a", 2005, "US", "CN")
    assert classify_event(e, "CN") == RETURN
    assert classify_event(e, "US") == EMIGRATION
    assert classify_event(MigrationEvent("a", 2005, "US", "DE"), "CN") == EMIGRATION
    tw = MigrationEvent("a", 2005, "US", "TW")
    assert classify_event(tw, "CN") == EMIGRATION
    assert classify_event(tw, "CN", match_level=2, taxonomy=taxonomy) == RETURN
    assert classify_event(e, "US", match_level=2, taxonomy=taxonomy) == EMIGRATION
    with pytest.raises(ValueError):
        classify_event(e, "CN", match_level=2)
    with pytest.raises(ValueError):
        MigrationEvent("a", 2005, "US", "US")


def test_parse_periods():
    assert parse_periods("2005-2011, 1998-2004") == [Period(1998, 2004), Period(2005, 2011)]
    assert Period(1998, 2004).label == "1998-2004"
    for bad in ("1998", "2004-1998", "1998-2004,2004-2010", "a-b"):
        with pytest.raises(ValueError):
            parse_periods(bad)


def classified(src, dst, cls, year=2005, origin=ACADEMIC, gender="unknown"):
    return ClassifiedEvent(MigrationEvent("a", year, src, dst), origin, cls, gender)


def test_single_event_table():
    t = aggregate([classified("US", "CN", RETURN)])
    assert t.rows() == [("US", "CN", "all", RETURN, ACADEMIC, 1)]
    assert aggregate([]) == FlowTable() and len(aggregate([])) == 0


def test_periods_bucket_and_drop():
    periods = parse_periods("2000-2004,2005-2009")
    t = aggregate([classified("US", "CN", RETURN, 2003), classified("US", "CN", RETURN, 2007),
                   classified("US", "CN", RETURN, 2012)], periods)
    assert {r[2]: r[5] for r in t.rows()} == {"2000-2004": 1, "2005-2009": 1}


def test_return_proportion_exact():
    events = [classified("DE", "CN", RETURN)] * 70 + [classified("DE", "US", EMIGRATION)] * 30
    share = aggregate(events).return_proportion(ACADEMIC)["DE"]
    assert (share.returns, share.total, share.proportion) == (70, 100, 0.7)


def test_views():
    events = ([classified("US", "CN", RETURN, gender="female")] * 3
              + [classified("US", "IN", RETURN, gender="male")] * 1
              + [classified("US", "GB", EMIGRATION, gender="male")] * 2
              + [classified("US", "DE", EMIGRATION, gender="female")] * 2
              + [classified("US", "CA", EMIGRATION)] * 4)
    t = aggregate(events)
    assert t.top_destinations("US", EMIGRATION, ACADEMIC, k=2) == [("CA", 4, 0.5), ("DE", 2, 0.25)]
    assert t.top_destinations("US", RETURN, ACADEMIC) == [("CN", 3, 0.75), ("IN", 1, 0.25)]
    by_gender = t.return_proportion(ACADEMIC, split_gender=True)
    assert by_gender[("US", "female")].proportion == 3 / 5
    assert by_gender[("US", "male")].proportion == 1 / 3
    cont = t.return_proportion(ACADEMIC, by="continent")
    assert cont["North America"] == (4, 12)
    with pytest.raises(ValueError):
        t.return_proportion(ACADEMIC, by="planet")
    summary = t.summary()
    json.dumps(summary)
    assert summary["by_definition"][ACADEMIC]["events"] == 12


def test_csv_round_trip_and_merge():
    a = aggregate([classified("US", "CN", RETURN)] * 2)
    b = aggregate([classified("GB", "IN", EMIGRATION, origin=NAME)])
    c = aggregate([classified("US", "CN", RETURN, gender="female")])
    assert a.to_csv().splitlines()[0] == "source,destination,period,classification,origin_definition,count"
    assert FlowTable.from_csv(a.to_csv()) == a
    assert a.merge(b).merge(c).counts() == a.merge(b.merge(c)).counts()
    assert a.merge(c).counts()[FlowKey("US", "CN", "all", RETURN, ACADEMIC)] == 3


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["US", "CN", "DE"]), st.sampled_from(["GB", "IN"]),
                          st.sampled_from([EMIGRATION, RETURN]), st.sampled_from([ACADEMIC, NAME]),
                          st.integers(1998, 2018)), max_size=40))
def test_conservation(items):
    evs = [classified(s, d, c, y, o) for s, d, c, o, y in items]
    periods = parse_periods("1998-2007,2008-2018")
    t = aggregate(evs, periods)
    for src in ("US", "CN", "DE"):
        for o in (ACADEMIC, NAME):
            for p in periods:
                want = sum(1 for s, _, _, oo, y in items if s == src and oo == o and y in p)
                got = (t.total(source=src, period=p.label, origin_definition=o, classification=RETURN)
                       + t.total(source=src, period=p.label, origin_definition=o, classification=EMIGRATION))
                assert got == want


def test_composition():
    tls = [timeline(["CN", "US"], author="a"), timeline(["US"], author="b"), timeline(["DE"], author="c"),
           timeline(["US"], author="d")]
    groups = {"a": "Chinese", "b": "Chinese", "c": "German"}
    assert composition(tls, groups, "US") == Counter({"Chinese": 2})


def test_assign_name_origin(name_models):
    m3, m2 = name_models
    rec = record([(2000, "US"), (2001, "US")], name="Dr. Abcd Eabc")
    o = assign_name_origin(rec, m3, m2)
    assert (o.academic_origin, o.name_origin_l3, o.name_origin_l2) == ("US", "CN", "Chinese")
    assert 0 < o.name_origin_confidence <= 1
    with pytest.raises(NameRejectedError, match="name_rejected"):
        assign_name_origin(record([(2000, "US")], name="x123"), m3, m2)


def test_record_validation(tmp_path):
    with pytest.raises(ValueError):
        AuthorRecord("a", "n", ())
    with pytest.raises(ValueError):
        record([(2000, "US")], gender="other")
    recs = [record([(2000, "US"), (2001, "CN")], gender="female")]
    write_records(recs, tmp_path / "r.jsonl")
    assert read_records(tmp_path / "r.jsonl") == recs


def test_read_records_lists_bad_lines(tmp_path):
    p = tmp_path / "r.jsonl"
    good = record([(2000, "US")]).to_json()
    p.write_text("\n".join([good, "{not json", good,
                            '{"author_id": "x", "name": "n", "observations": [{"year": 2000, "country": "ZZ"}]}',
                            '{"author_id": "x", "name": "n", "observations": [{"year": 1990, "country": "US"}]}',
                            ]) + "\n")
    with pytest.raises(RecordFormatError) as info:
        read_records(p, (1996, 2020))
    assert [n for n, _ in info.value.errors] == [2, 4, 5]


def small_spec(**kw):
    patterns = (
        PlantedPattern(("US", "CN"), "CN", 70, "female"),
        PlantedPattern(("US", "DE"), "CN", 30, "male"),
        PlantedPattern(("DE", "US", "DE"), "DE", 20),
        PlantedPattern(("IN",), "IN", 10),
        PlantedPattern(("US", "CN"), None, 5),
    )
    return SyntheticSpec(patterns, {"CN": "abcde", "DE": "fghij", "IN": "klmno"}, **kw)


def test_generator_deterministic_and_planted():
    recs1, truth1 = generate_synthetic_corpus(small_spec(), seed=5)
    recs2, truth2 = generate_synthetic_corpus(small_spec(), seed=5)
    assert recs1 == recs2 and truth1.flows == truth2.flows
    assert len(recs1) == 135
    # from US under name origin: 70 US->CN returns, 30 US->DE emigrations,
    # 20 US->DE returns of the DE-named round trippers
    share = truth1.flows.return_proportion(NAME)["US"]
    assert (share.returns, share.total) == (90, 120)
    # academic origin also counts the 5 rejected-name authors; only the
    # round trippers' US->DE moves return to their first country
    share = truth1.flows.return_proportion(ACADEMIC)["US"]
    assert (share.returns, share.total) == (20, 125)
    recs3, _ = generate_synthetic_corpus(small_spec(), seed=6)
    assert recs3 != recs1


def test_generator_zero_moves():
    spec = SyntheticSpec((PlantedPattern(("US",), "CN", 10),), {"CN": "abc"})
    _, truth = generate_synthetic_corpus(spec)
    assert len(truth.flows) == 0


@pytest.mark.parametrize("spec", [
    SyntheticSpec((PlantedPattern(("US", "CN"), "JP", 1),), {"CN": "abc"}),
    SyntheticSpec((PlantedPattern(("US",), "CN", 1),), {"CN": "abc", "DE": "cde"}),
    SyntheticSpec((PlantedPattern(("US", "CN") * 6, "CN", 1),), {"CN": "abc"}),
    SyntheticSpec((PlantedPattern(("US", "ZZ"), "CN", 1),), {"CN": "abc"}),
    SyntheticSpec((PlantedPattern(("US",), "CN", 1),), {"CN": "ab1"}),
])
def test_infeasible_specs(spec):
    with pytest.raises(ValueError, match="infeasible_spec"):
        generate_synthetic_corpus(spec)


def test_pattern_validation():
    with pytest.raises(ValueError, match="infeasible_spec"):
        PlantedPattern(("US", "US"), "CN", 1)
    with pytest.raises(ValueError, match="infeasible_spec"):
        PlantedPattern((), "CN", 1)


@pytest.mark.parametrize("seed", [0, 1])
def test_pipeline_recovers_planted_truth(name_models, taxonomy, seed):
    m3, m2 = name_models
    periods = parse_periods("1998-2006,2007-2018")
    spec = small_spec(periods=tuple(periods))
    recs, truth = generate_synthetic_corpus(spec, seed=seed)
    res = analyze(recs, spec.dataset_range, m3, m2, taxonomy, periods)
    assert res.flows == truth.flows
    assert res.events == truth.events
    assert len(res.name_rejected) == 5
    assert res.consistency.consistency == 1.0
    assert {a: o.name_origin_l3 for a, o in res.name_origin.items()} == {
        a: c for a, c in truth.name_origin.items() if c is not None}
    assert res.composition("US") == Counter({"Chinese": 100, "German": 20})
    json.dumps(res.summary())


def test_pipeline_academic_only_and_all_rejected():
    recs = [record([(2000, "US"), (2001, "US"), (2002, "CN"), (2003, "CN")], name="x1", author=f"a{i}")
            for i in range(3)]
    res = analyze(recs, (1996, 2020), origin=ACADEMIC)
    assert res.flows.total(origin_definition=ACADEMIC) == 3
    assert res.flows.total(origin_definition=NAME) == 0
    with pytest.raises(ValueError):
        analyze(recs, (1996, 2020), origin=NAME)


def test_pipeline_name_rejected_counts(name_models, taxonomy):
    m3, m2 = name_models
    recs = [record([(2000, "US"), (2001, "US"), (2002, "CN"), (2003, "CN")], name="x1", author=f"a{i}")
            for i in range(3)]
    recs.append(record([(2019, "US")], author="edge"))
    res = analyze(recs, (1996, 2020), m3, m2, taxonomy)
    assert res.name_rejected == ["a0", "a1", "a2"] and res.empty_after_trim == ["edge"]
    assert res.flows.total(origin_definition=NAME) == 0
    assert res.summary()["names_rejected"] == 3


def test_default_spec_shape():
    spec = default_synthetic_spec()
    assert sum(p.count for p in spec.patterns) == 10_200
    kinds = Counter(len(p.path) for p in spec.patterns)
    assert set(kinds) == {1, 2, 3}
