"""
How mixed are a country's names?
================================

Normalized character n-gram entropy is close to 1 when a country's names use
many n-grams evenly, which tends to go with names shared across many origins.
"""

import numpy as np

from nomenflow.corpus import LabeledName, ngram_entropy
from nomenflow.migration import synthetic_name

rng = np.random.default_rng(0)
rows = []
# "XA" draws from a small alphabet, "XB" from the whole one
rows += [LabeledName(synthetic_name(rng, "aeiklmn"), "XA") for _ in range(500)]
rows += [LabeledName(synthetic_name(rng, "abcdefghijklmnopqrstuvwxyz"), "XB") for _ in range(500)]
# "XC" repeats a handful of names
rows += [LabeledName(["anna berg", "anna lind", "erik berg"][i % 3], "XC") for i in range(500)]

for country in ("XA", "XB", "XC"):
    local = ngram_entropy(rows, country)
    shared = ngram_entropy(rows, country, normalizer="global")
    print(f"{country}: {local:.3f} (own support)  {shared:.3f} (shared support)")

# the textbook case: {ab, ab, ac} has H = 0.918 bits over 2 outcomes
hand = [LabeledName("ab", "X"), LabeledName("ab", "X"), LabeledName("ac", "X")]
print(round(ngram_entropy(hand, "X", n=2, pad=False), 3))
