"""
Five-fold cross-validation
==========================

Some benchmarks ship without a test split and report the mean score over
stratified folds instead.  ``crossvalidate`` accepts any fit function, so the
same harness scores a neural network or a trivial baseline.
"""

import tempfile
from collections import Counter
from pathlib import Path

from votestack import embed, evalkit, models, synthetic

examples, labels = synthetic.keyword_corpus(300, n_classes=3, seed=4)
vec_file = Path(tempfile.mkdtemp()) / "vectors.vec"
embed.write_embeddings(vec_file, synthetic.random_vectors(synthetic.corpus_vocabulary(3), dim=16, seed=11))
table = embed.load_embeddings(vec_file)


# A baseline that always answers with the most frequent training label.
def majority_baseline(train, validation, seed):
    top = Counter(ex.label for ex in train).most_common(1)[0][0]
    return lambda batch: [top] * len(batch)


# A small CNN.  Each fold gets its own encoder, fitted on that fold's training part.
def cnn(train, validation, seed):
    enc = models.TextEncoder.fit([ex.text for ex in train], table)
    clf = models.train_classifier(
        enc.encode(train), [ex.label for ex in train], enc.encode(validation), [ex.label for ex in validation],
        models.model_config("cnn", conv_blocks=3, filters_per_width=32),
        models.TrainConfig(epochs=8, lr=1e-2, seed=seed), labels)
    return lambda batch: clf.predict(enc.encode(batch)).labels


for name, fit in [("majority", majority_baseline), ("cnn", cnn)]:
    result = evalkit.crossvalidate(examples, labels, 5, fit, metric="macro_f1", seed=0)
    print(f"== {name}")
    print(result.to_text())
