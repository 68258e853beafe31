"""Labeled name corpora: ingestion, filtering, splitting, diagnostics.

Corpus files are UTF-8 TSV with two columns, ``name<TAB>country``, and an
optional ``name<TAB>country`` header. The country column may hold any name
or code that :func:`nomenflow.normalize.normalize_country` understands.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from nomenflow.normalize import Affixes, UnknownCountryError, normalize_country, preprocess
from nomenflow.taxonomy import ExclusionPolicy, TaxonomyTable

__all__ = [
    "ClassTooSmallWarning",
    "CorpusFormatError",
    "CorpusStats",
    "LabeledName",
    "SplitSpec",
    "allocate",
    "apply_exclusions",
    "ingest",
    "labels_at_level",
    "ngram_entropy",
    "read_corpus",
    "split",
    "write_corpus",
]


class LabeledName(NamedTuple):
    name: str
    country: str


class CorpusFormatError(ValueError):
    """A corpus file could not be read as UTF-8 TSV."""


class ClassTooSmallWarning(UserWarning):
    """Some countries are too small to populate every split proportionally."""


@dataclass
class CorpusStats:
    """Bookkeeping for one ingest; ``reconciles()`` checks that every input row
    is accounted for exactly once."""

    ingested: int = 0
    kept: int = 0
    duplicates: int = 0
    excluded: int = 0
    rejected: dict[str, int] = field(default_factory=dict)
    per_country: dict[str, int] = field(default_factory=dict)

    @property
    def rejected_total(self) -> int:
        return sum(self.rejected.values())

    def reconciles(self) -> bool:
        return self.kept + self.duplicates + self.rejected_total + self.excluded == self.ingested

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rejected_total"] = self.rejected_total
        d["rejected_fraction"] = self.rejected_total / self.ingested if self.ingested else 0.0
        d["per_country"] = dict(sorted(self.per_country.items()))
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _reject(stats: CorpusStats, reason: str) -> None:
    stats.rejected[reason] = stats.rejected.get(reason, 0) + 1


def _read_lines(path: Path) -> list[str]:
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusFormatError(f"{path}: not valid UTF-8 (byte {exc.start})") from exc
    if "\x00" in text:
        raise CorpusFormatError(f"{path}: contains NUL bytes, not a text file")
    return text.splitlines()


def ingest(paths: Iterable[str | Path], affixes: Affixes | None = None,
           aliases: dict[str, str] | None = None) -> tuple[list[LabeledName], CorpusStats]:
    """Read, clean and deduplicate name-country rows from TSV files.

    Names go through :func:`~nomenflow.normalize.preprocess`, countries
    through :func:`~nomenflow.normalize.normalize_country`. Rows that fail
    either are counted under ``stats.rejected`` by reason; exact duplicate
    ``(name, country)`` pairs after cleaning are dropped and counted. Output
    order follows input file order, then row order.

    Excluded and off-taxonomy countries are still valid here; see
    :func:`apply_exclusions`.

    Raises:
        CorpusFormatError: a file is not UTF-8 text.
        OSError: a file cannot be read.
    """
    stats = CorpusStats()
    seen: set[LabeledName] = set()
    rows: list[LabeledName] = []
    for path in paths:
        lines = _read_lines(Path(path))
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            parts = line.split("\t")
            if i == 0 and [p.strip().lower() for p in parts] == ["name", "country"]:
                continue
            stats.ingested += 1
            if len(parts) != 2:
                _reject(stats, "malformed_row")
                continue
            outcome = preprocess(parts[0], affixes)
            if not outcome.ok:
                _reject(stats, outcome.status.value)
                continue
            try:
                country = normalize_country(parts[1], aliases)
            except UnknownCountryError:
                _reject(stats, "unknown_country")
                continue
            row = LabeledName(outcome.text, country)
            if row in seen:
                stats.duplicates += 1
                continue
            seen.add(row)
            rows.append(row)
    stats.kept = len(rows)
    stats.per_country = dict(Counter(r.country for r in rows))
    return rows, stats


def apply_exclusions(rows: Sequence[LabeledName], policy: ExclusionPolicy | None = None,
                     taxonomy: TaxonomyTable | None = None,
                     stats: CorpusStats | None = None) -> list[LabeledName]:
    """Drop excluded countries, countries outside ``taxonomy`` (if given) and
    countries with fewer than ``policy.min_class_size`` rows. Order-stable.

    When ``stats`` is given, dropped rows move from ``kept`` to ``excluded``.
    """
    policy = policy or ExclusionPolicy()
    counts = Counter(r.country for r in rows)

    def keep(country: str) -> bool:
        if country in policy.excluded_countries:
            return False
        if taxonomy is not None and country not in taxonomy:
            return False
        return counts[country] >= policy.min_class_size

    out = [r for r in rows if keep(r.country)]
    if stats is not None:
        dropped = len(rows) - len(out)
        stats.excluded += dropped
        stats.kept -= dropped
        stats.per_country = dict(Counter(r.country for r in out))
    return out


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.65
    val_frac: float = 0.15
    test_frac: float = 0.20
    seed: int = 0

    def __post_init__(self):
        fr = self.fractions
        if min(fr) <= 0:
            raise ValueError(f"split fractions must be positive, got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fr)!r}")

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.train_frac, self.val_frac, self.test_frac)


def allocate(n: int, fractions: Sequence[float]) -> tuple[list[int], bool]:
    """Integer split sizes for ``n`` items.

    Minimizes the squared deviation from the quotas ``n * f`` subject to every
    part getting at least one item when ``n`` allows it. Without that floor
    this is largest-remainder rounding. The flag is True when the floor costs
    something, i.e. no proportional rounding fills every part.
    """
    k = len(fractions)
    quotas = [n * f for f in fractions]
    plain = [math.floor(q) for q in quotas]
    _greedy_fill(plain, quotas, n)
    if min(plain) > 0:
        return plain, False
    if n < k:
        return plain, True
    start = [max(1, math.floor(q)) for q in quotas]
    if sum(start) > n:
        start = [1] * k
    _greedy_fill(start, quotas, n)
    return start, _cost(start, quotas) > _cost(plain, quotas) + 1e-9


def _cost(sizes: Sequence[int], quotas: Sequence[float]) -> float:
    return sum((s - q) ** 2 for s, q in zip(sizes, quotas))


def _greedy_fill(alloc: list[int], quotas: list[float], n: int) -> None:
    # each unit goes to the part furthest below quota; ties to the earliest part
    while sum(alloc) < n:
        gaps = [q - a for q, a in zip(quotas, alloc)]
        alloc[gaps.index(max(gaps))] += 1


def split(rows: Sequence[LabeledName], spec: SplitSpec | None = None,
          ) -> tuple[list[LabeledName], list[LabeledName], list[LabeledName]]:
    """Stratified train/validation/test partition.

    Each country is split on its own with :func:`allocate`; which rows land
    where is decided by a permutation drawn from ``spec.seed`` (countries are
    visited in sorted order). Each part keeps the input order. Emits one
    :class:`ClassTooSmallWarning` listing countries that could not be split
    proportionally.

    Raises:
        ValueError: on an empty corpus.
    """
    spec = spec or SplitSpec()
    if not rows:
        raise ValueError("cannot split an empty corpus")
    by_country: dict[str, list[int]] = defaultdict(list)
    for i, r in enumerate(rows):
        by_country[r.country].append(i)
    rng = np.random.default_rng(spec.seed)
    part = np.empty(len(rows), dtype=np.int8)
    small = []
    for country in sorted(by_country):
        idx = by_country[country]
        sizes, flagged = allocate(len(idx), spec.fractions)
        if flagged:
            small.append(f"{country}({len(idx)})")
        perm = rng.permutation(len(idx))
        bounds = np.cumsum([0] + sizes)
        for p in range(3):
            part[[idx[j] for j in perm[bounds[p]:bounds[p + 1]]]] = p
    if small:
        warnings.warn(f"class_too_small: {', '.join(small)}", ClassTooSmallWarning, stacklevel=2)
    out: tuple[list, list, list] = ([], [], [])
    for r, p in zip(rows, part.tolist()):
        out[p].append(r)
    return out


def labels_at_level(rows: Sequence[LabeledName], taxonomy: TaxonomyTable, level: int) -> list[str]:
    return [taxonomy.rollup(r.country, level) for r in rows]


def _ngrams(name: str, n: int, pad: bool) -> list[str]:
    s = f"^{name}$" if pad else name
    return [s[i:i + n] for i in range(len(s) - n + 1)]


def ngram_entropy(rows: Sequence[LabeledName], country: str, n: int = 3, pad: bool = True,
                  normalizer: str = "country") -> float:
    """Normalized Shannon entropy of a country's character n-gram distribution.

    Names are padded with ``^``/``$``. With ``normalizer="country"`` the
    entropy is divided by the log of the number of distinct n-grams of that
    country; ``"global"`` divides by the log of the distinct n-grams across
    all ``rows``, which makes values comparable between countries. A support
    of at most one n-gram gives 0.

    Raises:
        ValueError: ``country`` has no names (``empty_country``), or bad args.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if normalizer not in ("country", "global"):
        raise ValueError(f"normalizer must be 'country' or 'global', got {normalizer!r}")
    counts: Counter[str] = Counter()
    found = False
    for r in rows:
        if r.country == country:
            found = True
            counts.update(_ngrams(r.name, n, pad))
    if not found:
        raise ValueError(f"empty_country: no names for {country!r}")
    total = sum(counts.values())
    if len(counts) <= 1:
        return 0.0
    p = np.array(list(counts.values()), dtype=np.float64) / total
    h = float(-(p * np.log(p)).sum())
    if normalizer == "country":
        support = len(counts)
    else:
        support = len({g for r in rows for g in _ngrams(r.name, n, pad)})
    return min(1.0, max(0.0, h / math.log(support)))


def read_corpus(path: str | Path) -> list[LabeledName]:
    """Read an already-clean ``name<TAB>country`` file without re-normalizing."""
    rows = []
    for i, line in enumerate(_read_lines(Path(path))):
        if not line.strip():
            continue
        parts = line.split("\t")
        if i == 0 and [p.strip().lower() for p in parts] == ["name", "country"]:
            continue
        if len(parts) != 2:
            raise CorpusFormatError(f"{path}:{i + 1}: expected 'name<TAB>country'")
        rows.append(LabeledName(parts[0], parts[1].strip()))
    return rows


def write_corpus(rows: Iterable[LabeledName], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("name\tcountry\n")
        for r in rows:
            fh.write(f"{r.name}\t{r.country}\n")
