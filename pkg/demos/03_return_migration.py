"""
Emigration or return?
=====================

A move is a *return* when its destination is the scholar's origin. Two
origins are compared: the country of the first affiliation, and the country
suggested by the scholar's name. We plant careers with known moves, run the
pipeline, and check that it recovers them.
"""

from nomenflow.classifier import FeatureConfig, TrainConfig, train
from nomenflow.migration import (
    ACADEMIC,
    NAME,
    CareerTimeline,
    analyze,
    default_synthetic_spec,
    detect_moves,
    generate_synthetic_corpus,
    parse_periods,
    synthetic_names,
)
from nomenflow.taxonomy import default_taxonomy

# move detection on a toy career: the one-year stay in CN is ignored
t = CareerTimeline("demo", (2000, 2001, 2002, 2003, 2004, 2005), ("US", "US", "CN", "US", "DE", "DE"))
print(detect_moves(t))

tax = default_taxonomy()
periods = parse_periods("1998-2007,2008-2018")
spec = default_synthetic_spec(periods=periods)
records, truth = generate_synthetic_corpus(spec, seed=0)
print(len(records), "authors;", records[0])

# name models for level 3 (countries) and level 2 (groups)
names = synthetic_names(spec.alphabets, 1000, seed=1)
feats, cfg = FeatureConfig(bucket_count=2 ** 17), TrainConfig(dim=32, epochs=4)
m3, _ = train([r.name for r in names], [r.country for r in names], feats, cfg, level=3)
m2, _ = train([r.name for r in names], [tax.rollup(r.country, 2) for r in names], feats, cfg, level=2)

result = analyze(records, spec.dataset_range, m3, m2, tax, periods)
print("recovered flows equal planted truth:", result.flows == truth.flows)
print("names rejected:", len(result.name_rejected))

for origin in (ACADEMIC, NAME):
    share = result.flows.return_proportion(origin)["US"]
    print(f"{origin:8} origin: {share.returns}/{share.total} moves out of the US are returns "
          f"({share.proportion:.1%})")
    print("   top return destinations:", result.flows.top_destinations("US", "return", origin, k=3))

# who works in the US, by name group
print(result.composition("US").most_common())
print(result.flows.to_csv()[:400])
