"""
Training a tiny classifier end to end
=====================================

Sixteen short sentences, two labels, one polarity word each.  The model has to
learn word phases and amplitudes, term weights, measurement states and the
dense head.
"""

# %%
from pathlib import Path

import numpy as np

from qpdn.data import load_dataset
from qpdn.grad import finite_difference_check
from qpdn.model import Variant, forward, init_params
from qpdn.neighbors import nearest_words
from qpdn.train import TrainConfig, format_ablation, run_ablation, train_model

ds = load_dataset(Path(__file__).resolve().parents[1] / "tests" / "data" / "separable.tsv")
print(len(ds), "sentences,", len(ds.vocab), "vocabulary entries, labels", ds.label_names)

# %% [markdown]
# Before training anything, check the hand-written gradients against central
# differences on a small random model, one variant at a time.

# %%
for variant in Variant:
    idf = np.linspace(1, 2, 10) if variant is Variant.IDF_WEIGHTS else None
    params = init_params(4, 3, 10, 2, variant, rng=0, idf=idf, init_scale=0.5)
    report = finite_difference_check(params, ([[1, 2, 3], [4, 5]], [0, 1]), variant=variant, l2=1e-3)
    print(f"{variant.value:28s} max relative error {report.max_rel_error:.1e}")

# %% [markdown]
# Full-batch training.  The training set doubles as the dev set here.

# %%
config = TrainConfig(n=8, k=4, lr=0.05, l2=0.0, batch_size=16, epochs=50, patience=50, dev_fraction=0.0, init_scale=0.5)
losses = []
params, report = train_model(config, ds, on_step=lambda step, loss, grads: losses.append(loss))
print("train accuracy", report.train_accuracy)
print("mean loss per 10 steps", np.round(np.array(losses).reshape(-1, 10).mean(axis=1), 3))

# %% [markdown]
# Sentence features are measurement probabilities.

# %%
for text_ids, label in zip(ds.sentences[:4], ds.labels[:4]):
    cache = forward(text_ids, params)
    words = " ".join(ds.vocab.itos[t] for t in text_ids)
    print(f"{words:22s} q={np.round(cache.q[0], 2)}  p({ds.label_names[label]})={cache.probs[0, label]:.3f}")

# %% [markdown]
# Which words sit closest to each learned measurement state?

# %%
for item in nearest_words(params, ds.vocab.itos, top=4):
    print(item.measurement, [(nb.word, round(nb.distance, 3)) for nb in item.neighbors])

# %% [markdown]
# The ablation runner trains every variant with the same seed and budget.

# %%
rows = run_ablation(config.with_(epochs=20), ds, ds)
print(format_ablation(rows))
