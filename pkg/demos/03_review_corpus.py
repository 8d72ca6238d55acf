"""
Movie-review snippets at desk scale
===================================

Uses ``data/rt_snippets.tsv`` (build it with ``scripts/prepare_rt_snippets.py``).
One held-out fold is enough to see the model work; the full 10-fold run lives
in the acceptance suite.  Set ``QPDN_GLOVE`` to a 50-d GloVe text file to
start amplitudes from it.
"""

# %%
import os
from pathlib import Path

import numpy as np

from qpdn.data import cv_splits, load_dataset, load_pretrained
from qpdn.neighbors import nearest_words
from qpdn.train import TrainConfig, evaluate, train_model

root = Path(__file__).resolve().parents[1]
ds = load_dataset(root / "data" / "rt_snippets.tsv")
print(len(ds), "snippets,", len(ds.vocab), "vocabulary entries")

init = None
if os.environ.get("QPDN_GLOVE"):
    init = load_pretrained(os.environ["QPDN_GLOVE"], ds.vocab, 50)
    print(f"GloVe covers {init.coverage:.1%} of the vocabulary")

# %%
folds = cv_splits(len(ds), 10, seed=0)
train, test = ds.subset(np.flatnonzero(folds != 0)), ds.subset(np.flatnonzero(folds == 0))
config = TrainConfig(n=50, k=50, lr=1e-3, l2=1e-6, batch_size=32, epochs=12, patience=3)
params, report = train_model(config, train, test=test, init=init)
for e in report.epochs:
    print(f"epoch {e['epoch']:2d}  loss {e['train_loss']:.4f}  dev {e['dev_accuracy']:.4f}")
print(f"held-out fold accuracy {report.test_accuracy:.4f} ({report.param_count} parameters)")

# %%
result = evaluate(params, "full", test)
print("confusion (rows true, columns predicted)", ds.label_names)
print(result.confusion)

# %% [markdown]
# Nearest words of a few measurement states.  Many of them line up with one
# polarity.

# %%
for item in nearest_words(params, ds.vocab.itos, top=10)[:5]:
    print(item.measurement, " ".join(nb.word for nb in item.neighbors))
