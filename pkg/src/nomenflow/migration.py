"""Emigration vs return migration in author affiliation histories.

An author's affiliation observations are reduced to one country per year
(:func:`build_timeline`), the first and last years of the data window are
trimmed against censoring (:func:`censor_trim`), and persistent country
changes become :class:`MigrationEvent` objects (:func:`detect_moves`). Each
event is then labeled ``return`` when its destination is the author's
origin and ``emigration`` otherwise, under two origin definitions:

``academic``
    country of the first resolved year of the career;
``name``
    country predicted from the author's full name by a level-3 model.

Counts are collected in a :class:`FlowTable` keyed by source, destination,
period, classification and origin definition.
"""

from __future__ import annotations

import csv
import io
import json
import string
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from nomenflow.classifier import NgramModel, predict_batch
from nomenflow.corpus import LabeledName
from nomenflow.evaluation import ConsistencyReport, hierarchy_consistency
from nomenflow.normalize import default_affixes, preprocess
from nomenflow.taxonomy import TaxonomyTable, continent_of, is_country_code

EMIGRATION = "emigration"
RETURN = "return"
ACADEMIC = "academic"
NAME = "name"
ORIGIN_DEFINITIONS = (ACADEMIC, NAME)
GENDERS = ("female", "male", "unknown")


# --------------------------------------------------------------------------
# records and timelines


@dataclass(frozen=True)
class AuthorRecord:
    author_id: str
    name: str
    observations: tuple[tuple[int, str], ...]
    gender: str = "unknown"

    def __post_init__(self):
        object.__setattr__(self, "observations", tuple((int(y), c) for y, c in self.observations))
        if not self.observations:
            raise ValueError(f"author {self.author_id!r} has no observations")
        if self.gender not in GENDERS:
            raise ValueError(f"gender must be one of {GENDERS}, got {self.gender!r}")

    def to_json(self) -> str:
        return json.dumps({
            "author_id": self.author_id,
            "name": self.name,
            "gender": self.gender,
            "observations": [{"year": y, "country": c} for y, c in self.observations],
        }, ensure_ascii=False)


class RecordFormatError(ValueError):
    """Invalid author-record lines; ``errors`` holds ``(line_number, message)`` pairs."""

    def __init__(self, errors: list[tuple[int, str]], source: str = "<records>"):
        self.errors = errors
        shown = "\n".join(f"  {source}:{n}: {msg}" for n, msg in errors[:20])
        more = f"\n  ... {len(errors) - 20} more" if len(errors) > 20 else ""
        super().__init__(f"{len(errors)} invalid record line(s)\n{shown}{more}")


def _parse_record(obj: object, year_range: tuple[int, int] | None) -> AuthorRecord:
    if not isinstance(obj, dict):
        raise ValueError("expected a JSON object")
    for key in ("author_id", "name", "observations"):
        if key not in obj:
            raise ValueError(f"missing field {key!r}")
    obs = []
    if not isinstance(obj["observations"], list):
        raise ValueError("'observations' must be a list")
    for o in obj["observations"]:
        if not isinstance(o, dict) or "year" not in o or "country" not in o:
            raise ValueError("each observation needs 'year' and 'country'")
        year, country = o["year"], o["country"]
        if not isinstance(year, int) or isinstance(year, bool):
            raise ValueError(f"year must be an integer, got {year!r}")
        if not isinstance(country, str) or not is_country_code(country):
            raise ValueError(f"country must be an ISO 3166 alpha-2 code, got {country!r}")
        if year_range and not year_range[0] <= year <= year_range[1]:
            raise ValueError(f"year {year} outside the dataset range {year_range[0]}-{year_range[1]}")
        obs.append((year, country))
    return AuthorRecord(str(obj["author_id"]), str(obj["name"]), tuple(obs), obj.get("gender") or "unknown")


def read_records(path: str | Path, year_range: tuple[int, int] | None = None) -> list[AuthorRecord]:
    """Read JSON-lines author records.

    Raises:
        RecordFormatError: listing every offending line number.
    """
    records, errors = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(_parse_record(json.loads(line), year_range))
            except (ValueError, TypeError) as exc:
                errors.append((lineno, str(exc)))
    if errors:
        raise RecordFormatError(errors, str(path))
    return records


def write_records(records: Iterable[AuthorRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


@dataclass(frozen=True)
class CareerTimeline:
    author_id: str
    years: tuple[int, ...]
    countries: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.years)

    def __iter__(self) -> Iterator[tuple[int, str]]:
        return iter(zip(self.years, self.countries))


def build_timeline(record: AuthorRecord) -> CareerTimeline:
    """One country per observed year: the most frequent one.

    Ties go to the previous resolved year's country when it is among the
    tied ones, otherwise to the alphabetically first code. Years without
    observations are left out.
    """
    by_year: dict[int, Counter] = defaultdict(Counter)
    for year, country in record.observations:
        by_year[year][country] += 1
    years, countries = [], []
    prev = None
    for year in sorted(by_year):
        counts = by_year[year]
        top = max(counts.values())
        tied = sorted(c for c, n in counts.items() if n == top)
        chosen = prev if prev in tied else tied[0]
        years.append(year)
        countries.append(chosen)
        prev = chosen
    return CareerTimeline(record.author_id, tuple(years), tuple(countries))


def trim_timeline(timeline: CareerTimeline, dataset_range: tuple[int, int], margin: int = 2) -> CareerTimeline:
    lo, hi = dataset_range[0] + margin, dataset_range[1] - margin
    keep = [(y, c) for y, c in timeline if lo <= y <= hi]
    return CareerTimeline(timeline.author_id, tuple(y for y, _ in keep), tuple(c for _, c in keep))


def censor_trim(timelines: Iterable[CareerTimeline], dataset_range: tuple[int, int],
                margin: int = 2) -> list[CareerTimeline]:
    """Drop the first and last ``margin`` years of ``dataset_range`` from each
    timeline. A timeline may come back empty."""
    return [trim_timeline(t, dataset_range, margin) for t in timelines]


class EmptyTimelineError(ValueError):
    pass


def detect_academic_origin(timeline: CareerTimeline) -> str:
    """Country of the earliest resolved year."""
    if not timeline.countries:
        raise EmptyTimelineError(f"empty_timeline: author {timeline.author_id!r}")
    return timeline.countries[0]


# --------------------------------------------------------------------------
# events


@dataclass(frozen=True)
class MigrationEvent:
    author_id: str
    year: int
    source: str
    destination: str

    def __post_init__(self):
        if self.source == self.destination:
            raise ValueError("a migration event needs distinct source and destination")


def detect_moves(timeline: CareerTimeline, persistence: int = 2) -> list[MigrationEvent]:
    """Persistent affiliation changes.

    A change from the current country A to B at entry ``t`` is a move when B
    holds for ``persistence`` consecutive resolved entries starting at ``t``,
    or from ``t`` to the end of the timeline. Shorter excursions are ignored
    and do not change the current country, so moves chain (A to B, then B
    to C).
    """
    if persistence < 1:
        raise ValueError("persistence must be >= 1")
    cs, ys = timeline.countries, timeline.years
    events = []
    if not cs:
        return events
    current = cs[0]
    for t in range(1, len(cs)):
        b = cs[t]
        if b == current:
            continue
        window = cs[t:t + persistence]
        if (len(window) == persistence and all(c == b for c in window)) or all(c == b for c in cs[t:]):
            events.append(MigrationEvent(timeline.author_id, ys[t], current, b))
            current = b
    return events


def classify_event(event: MigrationEvent, origin: str, match_level: int = 3,
                   taxonomy: TaxonomyTable | None = None) -> str:
    """``return`` when the destination is the origin, else ``emigration``.

    With ``match_level=2`` both countries are first mapped to their level-2
    group (countries outside ``taxonomy`` stand for themselves).
    """
    if match_level == 3:
        return RETURN if event.destination == origin else EMIGRATION
    if match_level != 2 or taxonomy is None:
        raise ValueError("level-2 matching needs match_level=2 and a taxonomy")

    def group(c: str) -> str:
        return taxonomy.rollup(c, 2) if c in taxonomy else c

    return RETURN if group(event.destination) == group(origin) else EMIGRATION


# --------------------------------------------------------------------------
# name origin


class NameRejectedError(ValueError):
    pass


@dataclass(frozen=True)
class OriginAssignment:
    academic_origin: str
    name_origin_l3: str
    name_origin_l2: str
    name_origin_confidence: float
    name_origin_l2_confidence: float = float("nan")

    def __post_init__(self):
        if not 0.0 <= self.name_origin_confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


def assign_name_origin(record: AuthorRecord, level3_model: NgramModel, level2_model: NgramModel,
                       timeline: CareerTimeline | None = None) -> OriginAssignment:
    """Predict the name origin of one author and pair it with the academic origin.

    ``timeline`` defaults to the untrimmed timeline of ``record``.

    Raises:
        NameRejectedError: the name does not survive preprocessing.
    """
    outcome = preprocess(record.name)
    if not outcome.ok:
        raise NameRejectedError(f"name_rejected: {record.name!r} ({outcome.status.value})")
    p3, = predict_batch(level3_model, [outcome.text])
    p2, = predict_batch(level2_model, [outcome.text])
    timeline = timeline if timeline is not None else build_timeline(record)
    return OriginAssignment(detect_academic_origin(timeline), p3.label, p2.label, p3.probability, p2.probability)


# --------------------------------------------------------------------------
# aggregation


class Period(NamedTuple):
    start: int
    end: int

    @property
    def label(self) -> str:
        return f"{self.start}-{self.end}"

    def __contains__(self, year: object) -> bool:
        return isinstance(year, int) and self.start <= year <= self.end


ALL_YEARS = "all"


def parse_periods(text: str) -> list[Period]:
    """``"1998-2004,2005-2011"`` -> sorted, non-overlapping inclusive periods."""
    periods = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        a, sep, b = part.partition("-")
        if not sep or not a.strip().isdigit() or not b.strip().isdigit():
            raise ValueError(f"bad period {part!r}; expected START-END")
        p = Period(int(a), int(b))
        if p.start > p.end:
            raise ValueError(f"period {part!r} ends before it starts")
        periods.append(p)
    periods.sort()
    for x, y in zip(periods, periods[1:]):
        if y.start <= x.end:
            raise ValueError(f"periods {x.label} and {y.label} overlap")
    return periods


def period_of(year: int, periods: Sequence[Period] | None) -> str | None:
    if not periods:
        return ALL_YEARS
    for p in periods:
        if year in p:
            return p.label
    return None


@dataclass(frozen=True)
class ClassifiedEvent:
    event: MigrationEvent
    origin_definition: str
    classification: str
    gender: str = "unknown"


class FlowKey(NamedTuple):
    source: str
    destination: str
    period: str
    classification: str
    origin_definition: str


class ReturnShare(NamedTuple):
    returns: int
    total: int

    @property
    def proportion(self) -> float:
        return self.returns / self.total if self.total else 0.0


@dataclass
class FlowTable:
    """Event counts keyed by :class:`FlowKey` plus gender.

    Gender is kept internally for the gender breakdown; :meth:`counts` and
    the CSV export sum over it.
    """

    by_gender: Counter = field(default_factory=Counter)

    def add(self, key: FlowKey, gender: str = "unknown", n: int = 1) -> None:
        self.by_gender[(*key, gender)] += n

    def merge(self, other: "FlowTable") -> "FlowTable":
        return FlowTable(self.by_gender + other.by_gender)

    def counts(self) -> Counter:
        out: Counter = Counter()
        for k, n in self.by_gender.items():
            out[FlowKey(*k[:5])] += n
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FlowTable):
            return NotImplemented
        return +self.by_gender == +other.by_gender

    def __len__(self) -> int:
        return len(+self.counts())

    @property
    def periods(self) -> list[str]:
        return sorted({k[2] for k in self.by_gender})

    def total(self, **match: str) -> int:
        """Sum of counts whose key fields equal ``match`` (any of source,
        destination, period, classification, origin_definition, gender)."""
        names = (*FlowKey._fields, "gender")
        idx = [(names.index(k), v) for k, v in match.items()]
        return sum(n for k, n in self.by_gender.items() if all(k[i] == v for i, v in idx))

    def top_destinations(self, source: str, classification: str, origin_definition: str,
                         period: str | None = None, k: int = 5) -> list[tuple[str, int, float]]:
        """The ``k`` most common destinations from ``source`` among events of one
        classification, with each one's share of that classification's events."""
        dest: Counter = Counter()
        for key, n in self.by_gender.items():
            s, d, p, c, o, _ = key
            if s == source and c == classification and o == origin_definition and (period is None or p == period):
                dest[d] += n
        total = sum(dest.values())
        ranked = sorted(dest.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        return [(d, n, n / total) for d, n in ranked]

    def return_proportion(self, origin_definition: str, by: str = "country", split_gender: bool = False,
                          period: str | None = None) -> dict:
        """Share of events from each source (country or continent) that are returns.

        Keys are the source, or ``(source, gender)`` when ``split_gender``.
        """
        if by not in ("country", "continent"):
            raise ValueError("by must be 'country' or 'continent'")
        acc: dict = defaultdict(lambda: [0, 0])
        for (s, d, p, c, o, g), n in self.by_gender.items():
            if o != origin_definition or (period is not None and p != period) or n == 0:
                continue
            key = s if by == "country" else continent_of(s)
            if split_gender:
                key = (key, g)
            acc[key][1] += n
            if c == RETURN:
                acc[key][0] += n
        return {k: ReturnShare(r, t) for k, (r, t) in sorted(acc.items())}

    def rows(self) -> list[tuple]:
        return [(*k, n) for k, n in sorted(self.counts().items()) if n]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*FlowKey._fields, "count"])
        w.writerows(self.rows())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FlowTable":
        table = cls()
        for row in csv.DictReader(io.StringIO(text)):
            key = FlowKey(row["source"], row["destination"], row["period"],
                          row["classification"], row["origin_definition"])
            table.add(key, "unknown", int(row["count"]))
        return table

    def summary(self, k: int = 5, sources: Sequence[str] | None = None) -> dict:
        """JSON-ready digest: totals, return proportions and top-k destinations."""
        defs = sorted({key[4] for key in self.by_gender})
        if sources is None:
            per_source = Counter()
            for key, n in self.by_gender.items():
                per_source[key[0]] += n
            sources = [s for s, _ in sorted(per_source.items(), key=lambda kv: (-kv[1], kv[0]))[:10]]
        out: dict = {"origin_definitions": defs, "periods": self.periods, "by_definition": {}}
        for o in defs:
            sect: dict = {
                "events": self.total(origin_definition=o),
                "returns": self.total(origin_definition=o, classification=RETURN),
                "return_proportion_by_country": {
                    s: {"returns": r.returns, "total": r.total, "proportion": r.proportion}
                    for s, r in self.return_proportion(o).items()},
                "return_proportion_by_continent_gender": {
                    f"{cont}|{g}": {"returns": r.returns, "total": r.total, "proportion": r.proportion}
                    for (cont, g), r in self.return_proportion(o, by="continent", split_gender=True).items()},
                "top_destinations": {},
            }
            for s in sources:
                sect["top_destinations"][s] = {
                    p: {c: [{"destination": d, "count": n, "share": sh}
                            for d, n, sh in self.top_destinations(s, c, o, p, k)]
                        for c in (EMIGRATION, RETURN)}
                    for p in self.periods}
            out["by_definition"][o] = sect
        return out


def aggregate(events: Iterable[ClassifiedEvent], periods: Sequence[Period] | None = None) -> FlowTable:
    """Count classified events per (source, destination, period, classification,
    origin definition). Events outside every period are left out; with no
    periods all events fall in the period ``"all"``."""
    table = FlowTable()
    for ce in events:
        p = period_of(ce.event.year, periods)
        if p is None:
            continue
        e = ce.event
        table.add(FlowKey(e.source, e.destination, p, ce.classification, ce.origin_definition), ce.gender)
    return table


def composition(timelines: Iterable[CareerTimeline], name_groups: Mapping[str, str],
                country: str) -> Counter:
    """Level-2 name-origin counts of authors with at least one resolved year in
    ``country``. Authors absent from ``name_groups`` (rejected names) are skipped."""
    out: Counter = Counter()
    for t in timelines:
        if country in t.countries and t.author_id in name_groups:
            out[name_groups[t.author_id]] += 1
    return out


# --------------------------------------------------------------------------
# end-to-end


@dataclass
class MigrationAnalysis:
    flows: FlowTable
    events: dict[str, list[MigrationEvent]]
    academic_origin: dict[str, str]
    name_origin: dict[str, OriginAssignment]
    timelines: list[CareerTimeline]
    name_rejected: list[str]
    empty_after_trim: list[str]
    consistency: ConsistencyReport | None

    def composition(self, country: str) -> Counter:
        groups = {a: o.name_origin_l2 for a, o in self.name_origin.items()}
        return composition(self.timelines, groups, country)

    def summary(self, k: int = 5, sources: Sequence[str] | None = None,
                composition_countries: Sequence[str] | None = None) -> dict:
        out = self.flows.summary(k, sources)
        out["authors"] = len(self.timelines) + len(self.empty_after_trim)
        out["authors_empty_after_trim"] = len(self.empty_after_trim)
        out["names_rejected"] = len(self.name_rejected)
        out["names_assigned"] = len(self.name_origin)
        if self.consistency is not None:
            out["level3_vs_level2_consistency"] = self.consistency.to_dict()
        if composition_countries is None:
            per = Counter(c for t in self.timelines for c in set(t.countries))
            composition_countries = [c for c, _ in sorted(per.items(), key=lambda kv: (-kv[1], kv[0]))[:6]]
        comp = {}
        for c in composition_countries:
            counts = self.composition(c)
            n = sum(counts.values())
            comp[c] = {"scholars": n, "shares": {g: v / n for g, v in counts.most_common()} if n else {}}
        out["composition_level2"] = comp
        return out


def analyze(records: Sequence[AuthorRecord], dataset_range: tuple[int, int],
            level3_model: NgramModel | None = None, level2_model: NgramModel | None = None,
            taxonomy: TaxonomyTable | None = None, periods: Sequence[Period] | None = None,
            origin: str = "both", margin: int = 2, persistence: int = 2,
            match_level: int = 3) -> MigrationAnalysis:
    """Run the full pipeline over author records.

    Timelines are trimmed before origins or moves are derived. The name-origin
    definition needs ``level3_model`` (and ``level2_model`` for compositions);
    authors whose names are rejected by the normalizer are left out of it
    and listed in ``name_rejected``.
    """
    if origin not in ("both", ACADEMIC, NAME):
        raise ValueError("origin must be 'academic', 'name' or 'both'")
    defs = ORIGIN_DEFINITIONS if origin == "both" else (origin,)
    if NAME in defs and level3_model is None:
        raise ValueError("the name-origin definition needs a level-3 model")

    timelines, empty = [], []
    for rec in records:
        t = trim_timeline(build_timeline(rec), dataset_range, margin)
        (timelines if len(t) else empty).append(t if len(t) else rec.author_id)
    kept_ids = {t.author_id for t in timelines}
    by_id = {r.author_id: r for r in records if r.author_id in kept_ids}

    events = {t.author_id: detect_moves(t, persistence) for t in timelines}
    academic = {t.author_id: detect_academic_origin(t) for t in timelines}

    name_origin: dict[str, OriginAssignment] = {}
    rejected: list[str] = []
    consistency = None
    if level3_model is not None:
        affixes = default_affixes()
        ids, names = [], []
        for t in timelines:
            outcome = preprocess(by_id[t.author_id].name, affixes)
            if outcome.ok:
                ids.append(t.author_id)
                names.append(outcome.text)
            else:
                rejected.append(t.author_id)
        p3 = predict_batch(level3_model, names)
        p2 = predict_batch(level2_model, names) if level2_model is not None else None
        for i, a in enumerate(ids):
            l2 = p2[i].label if p2 is not None else (taxonomy.rollup(p3[i].label, 2) if taxonomy else "")
            l2p = p2[i].probability if p2 is not None else float("nan")
            name_origin[a] = OriginAssignment(academic[a], p3[i].label, l2, p3[i].probability, l2p)
        if p2 is not None and taxonomy is not None:
            consistency = hierarchy_consistency([p.label for p in p3], [p.label for p in p2], taxonomy, level=2)

    classified = []
    for t in timelines:
        a = t.author_id
        gender = by_id[a].gender
        for e in events[a]:
            if ACADEMIC in defs:
                classified.append(ClassifiedEvent(e, ACADEMIC, classify_event(e, academic[a], match_level, taxonomy), gender))
            if NAME in defs and a in name_origin:
                cls = classify_event(e, name_origin[a].name_origin_l3, match_level, taxonomy)
                classified.append(ClassifiedEvent(e, NAME, cls, gender))
    return MigrationAnalysis(
        flows=aggregate(classified, periods),
        events=events,
        academic_origin=academic,
        name_origin=name_origin,
        timelines=timelines,
        name_rejected=rejected,
        empty_after_trim=empty,
        consistency=consistency,
    )


# --------------------------------------------------------------------------
# synthetic corpora with planted truth


@dataclass(frozen=True)
class PlantedPattern:
    """``count`` authors whose careers visit ``path`` in order (first entry is
    the academic origin) and whose names are drawn from the alphabet of
    ``name_origin``; ``None`` plants a name the normalizer rejects."""

    path: tuple[str, ...]
    name_origin: str | None
    count: int
    gender: str = "unknown"

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(self.path))
        if not self.path:
            raise ValueError("infeasible_spec: empty path")
        if any(a == b for a, b in zip(self.path, self.path[1:])):
            raise ValueError(f"infeasible_spec: consecutive repeat in {self.path}")
        if self.count < 0:
            raise ValueError("infeasible_spec: negative count")


@dataclass(frozen=True)
class SyntheticSpec:
    patterns: tuple[PlantedPattern, ...]
    alphabets: Mapping[str, str]
    dataset_range: tuple[int, int] = (1996, 2020)
    margin: int = 2
    periods: tuple[Period, ...] | None = None
    noise: bool = True

    def validate(self) -> None:
        lo, hi = self.dataset_range[0] + self.margin, self.dataset_range[1] - self.margin
        letters = [set(a) for a in self.alphabets.values()]
        if any(not a or not a <= set(string.ascii_lowercase) for a in letters):
            raise ValueError("infeasible_spec: alphabets must be non-empty sets of a-z")
        if sum(len(a) for a in letters) != len(set().union(*letters)):
            raise ValueError("infeasible_spec: alphabets overlap")
        for p in self.patterns:
            if p.name_origin is not None and p.name_origin not in self.alphabets:
                raise ValueError(f"infeasible_spec: no alphabet for {p.name_origin}")
            if 2 * len(p.path) > hi - lo + 1:
                raise ValueError(f"infeasible_spec: path {p.path} does not fit in {lo}-{hi}")
            for c in p.path:
                if not is_country_code(c):
                    raise ValueError(f"infeasible_spec: {c!r} is not an ISO code")


@dataclass
class GroundTruth:
    flows: FlowTable
    events: dict[str, list[MigrationEvent]]
    academic_origin: dict[str, str]
    name_origin: dict[str, str | None]


def _forbidden_tokens() -> frozenset[str]:
    a = default_affixes()
    return a.prefixes | a.suffixes


def _make_token(rng: np.random.Generator, alphabet: str, lo: int = 3, hi: int = 8) -> str:
    bad = _forbidden_tokens()
    letters = list(alphabet)
    while True:
        tok = "".join(rng.choice(letters, size=int(rng.integers(lo, hi + 1))))
        if tok not in bad:
            return tok


def synthetic_name(rng: np.random.Generator, alphabet: str, decorate: bool = False) -> str:
    """Two-token name over ``alphabet``. With ``decorate`` the raw form may be
    title-cased, carry a title, a middle initial or a trailing nickname."""
    toks = [_make_token(rng, alphabet), _make_token(rng, alphabet)]
    if not decorate:
        return " ".join(toks)
    if rng.random() < 0.3:
        toks.insert(1, rng.choice(list(alphabet)).upper() + ".")
    name = " ".join(t.capitalize() for t in toks)
    r = rng.random()
    if r < 0.15:
        name = "Dr. " + name
    elif r < 0.25:
        name = f'{name} ("{_make_token(rng, alphabet).capitalize()}")'
    return name


def synthetic_names(alphabets: Mapping[str, str], n_per_label: int, seed: int = 0) -> list[LabeledName]:
    """Clean training names, ``n_per_label`` per alphabet key, interleaved."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_per_label):
        for country in sorted(alphabets):
            rows.append(LabeledName(synthetic_name(rng, alphabets[country]), country))
    return rows


def _career(rng: np.random.Generator, path: Sequence[str], lo: int, hi: int, noise: bool):
    """Planted per-year (year, country, is_excursion) entries and move years."""
    m = len(path)
    span = hi - lo + 1
    lengths = [int(rng.integers(2, 6)) for _ in range(m)]
    while sum(lengths) > span:
        i = int(np.argmax(lengths))
        lengths[i] -= 1
    entries = []
    for stage, (country, n) in enumerate(zip(path, lengths)):
        for k in range(n):
            entries.append([country, stage, False])
        # a new stage must hold for two entries from its onset before an excursion
        first = 1 if stage == 0 else 2
        if noise and n - 1 > first and rng.random() < 0.4:
            k = int(rng.integers(first, n - 1))
            others = sorted(set(_EXCURSION_POOL) - {country})
            entries[len(entries) - n + k][0] = others[int(rng.integers(len(others)))]
            entries[len(entries) - n + k][2] = True
    gaps_allowed = span - len(entries)
    start = lo + int(rng.integers(0, gaps_allowed + 1))
    years = []
    y = start
    budget = hi - start - (len(entries) - 1)
    for i in range(len(entries)):
        if i and noise and budget > 0 and rng.random() < 0.1:
            y += 1
            budget -= 1
        years.append(y)
        y += 1
    out = [(years[i], e[0], e[2]) for i, e in enumerate(entries)]
    move_years = [years[i] for i in range(1, len(entries)) if entries[i][1] != entries[i - 1][1]]
    return out, move_years


_EXCURSION_POOL = ("BR", "FR", "KR", "NL", "SE", "ES", "CH", "MX")


def _observations(rng: np.random.Generator, entries, dataset_range, margin, noise):
    obs = []
    prev = None
    pool = sorted(set(_EXCURSION_POOL) | {"US", "GB", "DE"})
    for year, country, excursion in entries:
        if not noise:
            obs.append((year, country))
        else:
            k = int(rng.integers(1, 4))
            obs.extend([(year, country)] * k)
            other = [c for c in pool if c != country]
            extra = other[int(rng.integers(len(other)))]
            if k >= 2 and rng.random() < 0.3:
                obs.append((year, extra))
            elif k == 1 and prev == country and not excursion and rng.random() < 0.3:
                obs.append((year, extra))  # tie, resolved by the previous year
        prev = country
    if noise and rng.random() < 0.3:
        lo, hi = dataset_range
        censored = list(range(lo, lo + margin)) + list(range(hi - margin + 1, hi + 1))
        for _ in range(int(rng.integers(1, 3))):
            obs.append((int(rng.choice(censored)), pool[int(rng.integers(len(pool)))]))
    order = rng.permutation(len(obs))
    return tuple(obs[i] for i in order)


def generate_synthetic_corpus(spec: SyntheticSpec, seed: int = 0) -> tuple[list[AuthorRecord], GroundTruth]:
    """Author records realizing ``spec`` exactly, plus the planted truth.

    Careers sit inside the trimmed window. With ``spec.noise`` the records
    also carry one-year excursions, extra minority affiliations, ties that
    the previous year resolves, gaps, and stray observations in the censored
    edge years; none of these change the planted moves.

    Raises:
        ValueError: ``infeasible_spec``.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    lo = spec.dataset_range[0] + spec.margin
    hi = spec.dataset_range[1] - spec.margin
    records: list[AuthorRecord] = []
    truth_events: dict[str, list[MigrationEvent]] = {}
    academic: dict[str, str] = {}
    name_origin: dict[str, str | None] = {}
    classified: list[ClassifiedEvent] = []
    serial = 0
    for pattern in spec.patterns:
        for _ in range(pattern.count):
            author = f"A{serial:07d}"
            serial += 1
            entries, move_years = _career(rng, pattern.path, lo, hi, spec.noise)
            obs = _observations(rng, entries, spec.dataset_range, spec.margin, spec.noise)
            if pattern.name_origin is None:
                name = f"{_make_token(rng, 'xyz').capitalize()} {int(rng.integers(100, 999))}"
            else:
                name = synthetic_name(rng, spec.alphabets[pattern.name_origin], decorate=spec.noise)
            records.append(AuthorRecord(author, name, obs, pattern.gender))
            evs = [MigrationEvent(author, y, a, b)
                   for y, a, b in zip(move_years, pattern.path, pattern.path[1:])]
            truth_events[author] = evs
            academic[author] = pattern.path[0]
            name_origin[author] = pattern.name_origin
            for e in evs:
                classified.append(ClassifiedEvent(
                    e, ACADEMIC, RETURN if e.destination == pattern.path[0] else EMIGRATION, pattern.gender))
                if pattern.name_origin is not None:
                    classified.append(ClassifiedEvent(
                        e, NAME, RETURN if e.destination == pattern.name_origin else EMIGRATION, pattern.gender))
    truth = GroundTruth(aggregate(classified, spec.periods), truth_events, academic, name_origin)
    return records, truth


DEFAULT_ALPHABETS = {
    "CN": "abcde",
    "DE": "fghij",
    "IN": "klmno",
    "IT": "pqrst",
    "JP": "uvwxy",
}


def default_synthetic_spec(scale: int = 1, periods: Sequence[Period] | None = None,
                           noise: bool = True) -> SyntheticSpec:
    """Mixed stay / emigrate / return / onward corpus of ``10_200 * scale`` authors."""
    base = [
        (("US",), "CN", 1000), (("CN",), "CN", 800), (("DE",), "DE", 800), (("US",), "DE", 500),
        (("DE", "US"), "DE", 700), (("IN", "GB"), "IN", 600), (("IT", "DE"), "IT", 400),
        (("US", "CN"), "CN", 1200), (("US", "IN"), "IN", 700), (("GB", "JP"), "JP", 300),
        (("CA", "IT"), "IT", 300),
        (("DE", "US", "DE"), "DE", 500), (("CN", "US", "CN"), "CN", 600),
        (("US", "GB", "DE"), "CN", 400), (("IN", "US", "CA"), "IN", 400), (("JP", "US", "GB"), "JP", 300),
        (("US", "GB"), "DE", 500), (("US", "CN"), None, 200),
    ]
    patterns = []
    for path, origin, n in base:
        n *= scale
        female = (2 * n) // 5
        patterns.append(PlantedPattern(path, origin, female, "female"))
        patterns.append(PlantedPattern(path, origin, n - female, "male"))
    return SyntheticSpec(tuple(patterns), dict(DEFAULT_ALPHABETS),
                         periods=tuple(periods) if periods else None, noise=noise)
