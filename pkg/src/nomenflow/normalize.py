"""Person-name cleaning and country-name canonicalization.

The name pipeline turns an arbitrary Unicode string into a lowercase ASCII
name made of single-space separated ``[a-z]+`` tokens, or rejects it::

    >>> preprocess("Rupert König").text
    'rupert konig'
    >>> preprocess("R2-D2").status
    <Status.INVALID_CHARS: 'invalid_chars'>

Stages run in a fixed order: :func:`strip_metadata`, :func:`fold_unicode`,
lowercasing, punctuation to space, :func:`strip_affixes`, whitespace collapse
and validation. Every stage is a pure function.
"""

from __future__ import annotations

import enum
import json
import re
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

__all__ = [
    "Affixes",
    "NormalizationOutcome",
    "Status",
    "UnknownCountryError",
    "fold_unicode",
    "load_affixes",
    "load_country_aliases",
    "normalize_country",
    "preprocess",
    "strip_affixes",
    "strip_metadata",
]

CLEAN_NAME_RE = re.compile(r"[a-z]+( [a-z]+)*")


class Status(str, enum.Enum):
    OK = "ok"
    INVALID_CHARS = "invalid_chars"
    EMPTY = "empty_after_cleaning"


@dataclass(frozen=True)
class NormalizationOutcome:
    """Result of :func:`preprocess`. ``text`` is ``None`` for rejections."""

    raw: str
    text: str | None
    status: Status

    @property
    def ok(self) -> bool:
        return self.status is Status.OK


# --------------------------------------------------------------------------
# metadata removal

_BRACKETED = re.compile(r"\([^)]*(?:\)|$)|\[[^\]]*(?:\]|$)|\{[^}]*(?:\}|$)")
_QUOTED = re.compile(r'"[^"]*"|“[^”]*”|„[^“”]*[“”]|«[^»]*»|‹[^›]*›|「[^」]*」')
_DELIMITER = re.compile(r"[,;/，；、]")


def strip_metadata(raw: str) -> str:
    """Remove nicknames, pronunciations and trailing metadata.

    Bracketed and quoted spans are deleted (an unclosed bracket runs to the
    end of the string), then everything from the first comma, semicolon or
    slash onward is cut.

    >>> strip_metadata('Mary "Molly" Smith')
    'Mary  Smith'
    >>> strip_metadata("Li Wei / 李伟")
    'Li Wei '
    """
    text = _BRACKETED.sub("", raw)
    text = _QUOTED.sub("", text)
    m = _DELIMITER.search(text)
    if m:
        text = text[: m.start()]
    return text


# --------------------------------------------------------------------------
# unicode folding


def _build_mojibake_table() -> dict[str, str]:
    # UTF-8 bytes of Latin-1 supplement and Latin Extended-A/B letters,
    # mis-decoded as Latin-1 or Windows-1252.
    table: dict[str, str] = {}
    for cp in range(0xA0, 0x250):
        ch = chr(cp)
        raw = ch.encode("utf-8")
        for codec in ("latin-1", "cp1252"):
            try:
                garbled = raw.decode(codec)
            except UnicodeDecodeError:
                continue
            table.setdefault(garbled, ch)
    return table


_MOJIBAKE = _build_mojibake_table()
_MOJIBAKE_RE = re.compile("|".join(re.escape(k) for k in sorted(_MOJIBAKE, key=len, reverse=True)))


def repair_mojibake(text: str) -> str:
    return _MOJIBAKE_RE.sub(lambda m: _MOJIBAKE[m.group(0)], text)


def fold_unicode(raw: str) -> str:
    """Repair mojibake, strip diacritics and delete non-ASCII letters.

    Letters with no compatibility decomposition (``ø``, ``ł``, ``ß``) are
    deleted rather than transliterated. Non-letters such as punctuation,
    digits and symbols are kept for the later stages to handle.

    >>> fold_unicode("JÃ¼rgen HÃ¼holdt")
    'Jurgen Huholdt'
    >>> fold_unicode("Søren Hess-Olesen")
    'Sren Hess-Olesen'
    """
    text = unicodedata.normalize("NFKD", repair_mojibake(raw))
    out = []
    for ch in text:
        if ch.isascii():
            out.append(ch)
            continue
        cat = unicodedata.category(ch)
        if cat in ("Mn", "Mc", "Me", "Cf") or cat[0] == "L":
            continue
        out.append(ch)
    return "".join(out)


# --------------------------------------------------------------------------
# punctuation and affixes

_APOSTROPHE_LIKE = frozenset("`´")
_PUNCT_CATEGORIES = frozenset({"Pd", "Ps", "Pe", "Pi", "Pf"})
_PUNCT_OTHER = frozenset(".,;:!?'\"/·‧‚¡¿،")


def _is_punctuation(ch: str) -> bool:
    if ch in _PUNCT_OTHER or ch in _APOSTROPHE_LIKE:
        return True
    return unicodedata.category(ch) in _PUNCT_CATEGORIES


def punctuation_to_space(text: str) -> str:
    """Replace name punctuation (periods, commas, quotes, hyphens, apostrophes)
    with spaces; symbols such as ``@`` or ``+`` are left for validation."""
    return "".join(" " if _is_punctuation(ch) else ch for ch in text)


@dataclass(frozen=True)
class Affixes:
    prefixes: frozenset[str]
    suffixes: frozenset[str]


def load_affixes(path: str | Path | None = None) -> Affixes:
    """Load honorific prefix / generational suffix lists from a JSON file
    with ``prefixes`` and ``suffixes`` arrays (defaults ship with the package)."""
    if path is None:
        data = json.loads(resources.files("nomenflow.data").joinpath("affixes.json").read_text("utf-8"))
    else:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    return Affixes(
        prefixes=frozenset(s.lower() for s in data.get("prefixes", [])),
        suffixes=frozenset(s.lower() for s in data.get("suffixes", [])),
    )


@lru_cache(maxsize=1)
def default_affixes() -> Affixes:
    return load_affixes()


def strip_affixes(text: str, affixes: Affixes | None = None) -> str:
    """Drop leading honorifics and trailing generational/degree suffixes.

    Expects lowercased input. Affixes are stripped repeatedly from each end so
    ``dr prof x`` loses both titles.

    >>> strip_affixes("dr john smith jr")
    'john smith'
    >>> strip_affixes("junior silva")
    'junior silva'
    """
    affixes = affixes or default_affixes()
    tokens = text.split()
    i, j = 0, len(tokens)
    while i < j and tokens[i] in affixes.prefixes:
        i += 1
    while j > i and tokens[j - 1] in affixes.suffixes:
        j -= 1
    return " ".join(tokens[i:j])


def preprocess(raw: str, affixes: Affixes | None = None) -> NormalizationOutcome:
    """Clean one raw person name.

    Returns an outcome whose ``status`` is ``ok`` with a valid clean name,
    ``invalid_chars`` if a digit or symbol survives cleaning, or
    ``empty_after_cleaning`` if no token is left.
    """
    text = strip_metadata(raw)
    text = fold_unicode(text)
    text = text.lower()
    text = punctuation_to_space(text)
    text = strip_affixes(text, affixes)
    text = " ".join(text.split())
    if not text:
        return NormalizationOutcome(raw, None, Status.EMPTY)
    if not CLEAN_NAME_RE.fullmatch(text):
        return NormalizationOutcome(raw, None, Status.INVALID_CHARS)
    return NormalizationOutcome(raw, text, Status.OK)


def is_clean_name(text: str) -> bool:
    return CLEAN_NAME_RE.fullmatch(text) is not None


# --------------------------------------------------------------------------
# countries


class UnknownCountryError(KeyError):
    """Raised when a country string has no ISO 3166 alpha-2 mapping."""

    def __init__(self, raw: str):
        super().__init__(raw)
        self.raw = raw

    def __str__(self) -> str:
        return f"unknown_country: {self.raw!r}"


def _country_key(text: str) -> str:
    text = fold_unicode(text).lower()
    return " ".join(punctuation_to_space(text).split())


def load_country_aliases(path: str | Path | None = None) -> dict[str, str]:
    """Read a ``variant<TAB>alpha2`` alias file into a lookup keyed by folded
    lowercase variant. ISO alpha-2/alpha-3 codes and short names from the
    bundled country table are always included."""
    from nomenflow.taxonomy import load_countries

    table: dict[str, str] = {}
    for info in load_countries().values():
        table[_country_key(info.alpha2)] = info.alpha2
        table[_country_key(info.alpha3)] = info.alpha2
        table[_country_key(info.name)] = info.alpha2
    if path is None:
        text = resources.files("nomenflow.data").joinpath("country_aliases.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path or 'country_aliases.tsv'}:{lineno}: expected 'variant<TAB>code'")
        table[_country_key(parts[0])] = parts[1].strip().upper()
    return table


@lru_cache(maxsize=1)
def _default_aliases() -> dict[str, str]:
    return load_country_aliases()


def normalize_country(raw: str, aliases: dict[str, str] | None = None) -> str:
    """Map a country name, variant or code to its ISO 3166 alpha-2 code.

    >>> normalize_country("Deutschland")
    'DE'

    Raises:
        UnknownCountryError: if no mapping exists.
    """
    table = aliases if aliases is not None else _default_aliases()
    code = table.get(_country_key(raw))
    if code is None:
        raise UnknownCountryError(raw)
    return code
