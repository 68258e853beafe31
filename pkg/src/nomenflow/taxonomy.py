"""Three-level name-origin taxonomy and the ISO 3166 country table.

The taxonomy file is tab separated, one country per row::

    # comment
    #! expect level3=175 level2=30 level1=12
    JP	Japanese	East Asian	Asia

Columns are ``country_code``, level-2 group, level-1 group and continent.
The optional ``#! expect`` directive declares label counts that the loader
enforces.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple

__all__ = [
    "DEFAULT_EXCLUDED",
    "LEVEL1_LABELS",
    "CountryInfo",
    "ExclusionPolicy",
    "TaxonomyError",
    "TaxonomyTable",
    "Violation",
    "continent_of",
    "default_taxonomy",
    "load_countries",
    "load_taxonomy",
    "parse_taxonomy",
]

LEVEL1_LABELS = frozenset({
    "African", "East Asian", "English", "German", "Greek", "Hispanic",
    "Jewish", "Muslim", "Nordic-Baltic", "Romance", "Slavic", "South Asian",
})

# Multicultural countries kept out of training but valid affiliation countries.
DEFAULT_EXCLUDED = frozenset({"US", "CA", "AU", "NZ", "ZA"})


class CountryInfo(NamedTuple):
    alpha2: str
    alpha3: str
    name: str
    continent: str


@lru_cache(maxsize=1)
def load_countries() -> dict[str, CountryInfo]:
    """Bundled ISO 3166-1 table keyed by alpha-2 code."""
    text = resources.files("nomenflow.data").joinpath("countries.tsv").read_text("utf-8")
    out = {}
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        a2, a3, name, continent = line.split("\t")
        out[a2] = CountryInfo(a2, a3, name, continent)
    return out


def continent_of(code: str) -> str:
    return load_countries()[code].continent


def is_country_code(code: str) -> bool:
    return code in load_countries()


class Violation(NamedTuple):
    kind: str
    line: int
    message: str


class TaxonomyError(ValueError):
    """Taxonomy file failed to parse or validate; ``violations`` lists every problem."""

    def __init__(self, violations: list[Violation], source: str = "<taxonomy>"):
        self.violations = violations
        self.source = source
        lines = "\n".join(f"  {source}:{v.line}: {v.kind}: {v.message}" for v in violations)
        super().__init__(f"{len(violations)} taxonomy violation(s)\n{lines}")

    @property
    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


@dataclass(frozen=True)
class TaxonomyTable:
    level2: dict[str, str]
    level1: dict[str, str]
    continent: dict[str, str]
    source: str = "<memory>"

    @property
    def level3(self) -> frozenset[str]:
        return frozenset(self.level2)

    def labels(self, level: int) -> list[str]:
        """Sorted label set at ``level``."""
        if level == 3:
            return sorted(self.level2)
        if level == 2:
            return sorted(set(self.level2.values()))
        if level == 1:
            return sorted(set(self.level1.values()))
        raise ValueError(f"level must be 1, 2 or 3, got {level!r}")

    def rollup(self, country: str, level: int) -> str:
        """Label of ``country`` at taxonomy ``level`` (3 is the country itself).

        Raises:
            KeyError: ``country`` is not a level-3 member.
        """
        if country not in self.level2:
            raise KeyError(f"unknown_country: {country!r} is not in the taxonomy")
        if level == 3:
            return country
        if level == 2:
            return self.level2[country]
        if level == 1:
            return self.level1[self.level2[country]]
        raise ValueError(f"level must be 1, 2 or 3, got {level!r}")

    def __contains__(self, country: object) -> bool:
        return country in self.level2


_EXPECT_RE = re.compile(r"#!\s*expect\s+(.*)$")


def parse_taxonomy(text: str, source: str = "<taxonomy>") -> TaxonomyTable:
    violations: list[Violation] = []
    expect: dict[str, int] = {}
    level2: dict[str, str] = {}
    level1: dict[str, str] = {}
    l1_line: dict[str, int] = {}
    continent: dict[str, str] = {}
    seen_line: dict[str, int] = {}
    iso = load_countries()

    rows = 0
    for lineno, line in enumerate(text.splitlines(), 1):
        m = _EXPECT_RE.match(line.strip())
        if m:
            for item in m.group(1).split():
                key, _, val = item.partition("=")
                if key not in ("level1", "level2", "level3") or not val.isdigit():
                    violations.append(Violation("parse_error", lineno, f"bad expect item {item!r}"))
                else:
                    expect[key] = int(val)
            continue
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        rows += 1
        parts = [p.strip() for p in line.split("\t")]
        if len(parts) != 4:
            violations.append(Violation("parse_error", lineno, f"expected 4 tab-separated fields, got {len(parts)}"))
            continue
        code, l2, l1, cont = parts
        if code in seen_line:
            violations.append(Violation("duplicate_country", lineno, f"{code} already defined on line {seen_line[code]}"))
            continue
        seen_line[code] = lineno
        if code not in iso:
            violations.append(Violation("unknown_country_code", lineno, f"{code!r} is not an ISO 3166 alpha-2 code"))
            continue
        if not l2 or not l1:
            violations.append(Violation("missing_parent", lineno, f"{code} lacks a level-{2 if not l2 else 1} parent"))
            continue
        if l1 not in LEVEL1_LABELS:
            violations.append(Violation("unknown_level1_label", lineno, f"{l1!r} is not a level-1 label"))
            continue
        if l2 in level1 and level1[l2] != l1:
            violations.append(Violation(
                "conflicting_parent", lineno,
                f"{l2!r} maps to {l1!r} here but to {level1[l2]!r} on line {l1_line[l2]}"))
            continue
        level1.setdefault(l2, l1)
        l1_line.setdefault(l2, lineno)
        level2[code] = l2
        continent[code] = cont

    if rows == 0:
        violations.append(Violation("parse_error", 0, "no taxonomy rows"))
    counts = {
        "level3": len(level2),
        "level2": len(set(level2.values())),
        "level1": len(set(level1.values())),
    }
    for key, want in sorted(expect.items()):
        if counts[key] != want:
            violations.append(Violation("count_mismatch", 0, f"{key} has {counts[key]} labels, expected {want}"))
    if violations:
        raise TaxonomyError(violations, source)
    return TaxonomyTable(level2=level2, level1=level1, continent=continent, source=source)


def load_taxonomy(path: str | Path | None = None) -> TaxonomyTable:
    """Load and validate a taxonomy file; ``None`` loads the bundled one.

    Raises:
        TaxonomyError: listing every violation found.
        OSError: if the file cannot be read.
    """
    if path is None:
        text = resources.files("nomenflow.data").joinpath("taxonomy.tsv").read_text("utf-8")
        return parse_taxonomy(text, "taxonomy.tsv")
    return parse_taxonomy(Path(path).read_text(encoding="utf-8"), str(path))


@lru_cache(maxsize=1)
def default_taxonomy() -> TaxonomyTable:
    return load_taxonomy()


@dataclass(frozen=True)
class ExclusionPolicy:
    excluded_countries: frozenset[str] = field(default=DEFAULT_EXCLUDED)
    min_class_size: int = 100

    def __post_init__(self):
        if self.min_class_size < 1:
            raise ValueError("min_class_size must be >= 1")
        object.__setattr__(self, "excluded_countries", frozenset(self.excluded_countries))

    @classmethod
    def from_codes(cls, codes: Iterable[str], min_class_size: int = 100) -> "ExclusionPolicy":
        return cls(frozenset(c.upper() for c in codes), min_class_size)
