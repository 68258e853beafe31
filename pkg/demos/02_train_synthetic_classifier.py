"""
Training a name classifier on synthetic data
============================================

Five made-up "origins" each draw their names from a private set of letters,
so a character n-gram model should separate them perfectly. The same steps
apply to a real name-nationality corpus.
"""

import time

import numpy as np

from nomenflow.classifier import FeatureConfig, TrainConfig, load_model, predict_batch, save_model, train
from nomenflow.corpus import SplitSpec, split
from nomenflow.evaluation import evaluate
from nomenflow.migration import DEFAULT_ALPHABETS, synthetic_names
from nomenflow.taxonomy import default_taxonomy

rows = synthetic_names(DEFAULT_ALPHABETS, 2000, seed=0)
print(rows[:5])

# stratified 65/15/20 split, one allocation per country
train_rows, val_rows, test_rows = split(rows, SplitSpec(seed=0))
print(len(train_rows), len(val_rows), len(test_rows))

# a smaller hash table than the 2^21 default keeps the demo light
features = FeatureConfig(bucket_count=2 ** 18)
t0 = time.perf_counter()
model, losses = train([r.name for r in train_rows], [r.country for r in train_rows],
                      features, TrainConfig(dim=50, epochs=5, seed=0), level=3)
print(f"trained in {time.perf_counter() - t0:.1f}s, epoch losses {np.round(losses, 4)}")

preds = predict_batch(model, [r.name for r in test_rows])
report = evaluate([r.country for r in test_rows], [p.label for p in preds])
print(report.to_text())
print(report.confusion.to_csv())

# the same model can answer at a coarser taxonomy level by rolling up
tax = default_taxonomy()
print({c: tax.rollup(c, 1) for c in model.labels})

save_model(model, "/tmp/demo_model.bin")
assert load_model("/tmp/demo_model.bin").equals(model)
print("saved and reloaded bit for bit")
