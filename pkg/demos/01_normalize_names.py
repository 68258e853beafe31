"""
Cleaning raw names
==================

Raw names arrive with titles, nicknames, alternate scripts and mis-decoded
bytes. ``preprocess`` reduces them to lowercase ASCII tokens or says why it
could not.
"""

from nomenflow.normalize import fold_unicode, normalize_country, preprocess, strip_metadata

raw = [
    "JÃ¼rgen HÃ¼holdt",            # UTF-8 read as Latin-1
    "Søren Hess-Olesen",           # ø has no decomposition, so it is dropped
    'Prof. Mary "Molly" Smith Jr.',
    "Jean Dupont (politician)",
    "Li Wei / 李伟",
    "R2-D2",
    "李伟",
]

for name in raw:
    out = preprocess(name)
    print(f"{name!r:34} -> {out.text!r:22} {out.status.value}")

# the individual stages are available too
print(strip_metadata("Jean Dupont (politician)"))
print(fold_unicode("Miladin Ševarlić"))

# country labels are canonicalized to ISO 3166 alpha-2
for c in ["Germany", "Deutschland", "DEU", "United Kingdom", "Côte d'Ivoire"]:
    print(c, "->", normalize_country(c))
