"""
Training the four member networks
=================================

A synthetic corpus where each class has its own keyword hidden among filler
words is perfectly separable, so every architecture should get close to
100% test accuracy.  That makes it a quick check of the whole training loop.
"""

import tempfile
from pathlib import Path

from votestack import corpus, embed, evalkit, models, synthetic

examples, labels = synthetic.keyword_corpus(500, n_classes=3, seed=1)
print("classes:", labels.labels)
print("sample :", examples[0].text, "->", labels.name(examples[0].label))

split = corpus.stratified_split(examples, (0.7, 0.1, 0.2), seed=3)

# Small random word vectors stand in for pre-trained fastText embeddings.
vec_file = Path(tempfile.mkdtemp()) / "vectors.vec"
embed.write_embeddings(vec_file, synthetic.random_vectors(synthetic.corpus_vocabulary(3), dim=16, seed=11))
table = embed.load_embeddings(vec_file)

# The encoder fixes preprocessing, vocabulary and max_len.  Its fingerprint
# travels with every model so mismatched inference pipelines are rejected.
encoder = models.TextEncoder.fit([ex.text for ex in split.train], table)
train, val, test = (encoder.encode(part) for part in (split.train, split.validation, split.test))
print("max_len:", encoder.max_len)

gold = [ex.label for ex in split.test]
train_cfg = models.TrainConfig(epochs=20, lr=1e-2, seed=0, early_stop_patience=5)
architectures = {
    "cnn": models.model_config("cnn", conv_blocks=5, filters_per_width=32),
    "lstm": models.model_config("lstm", hidden_size=32),
    "bilstm": models.model_config("bilstm", hidden_size=32),
    "gru": models.model_config("gru", hidden_size=32),
}

scores = {}
for name, cfg in architectures.items():
    clf = models.train_classifier(train, [e.label for e in split.train], val, [e.label for e in split.validation],
                                  cfg, train_cfg, labels, name=name)
    report = evalkit.evaluate(gold, clf.predict(test).labels, labels)
    scores[name] = {"accuracy": report.accuracy, "weighted_f1": report.weighted_f1}
    print(f"{name:7s} best epoch {clf.best_epoch:2d} of {len(clf.history)}")

print()
print(evalkit.score_table(scores))
