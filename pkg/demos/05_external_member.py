"""
Adding a transformer without running one
========================================

A fine-tuned BERT is usually trained elsewhere.  Its predictions can join the
ensemble as a plain TSV file, ``id<TAB>label[<TAB>probabilities]``, and take
part in voting exactly like a locally trained network.
"""

import json
import random
import tempfile
from pathlib import Path

from votestack import cli, corpus, embed, synthetic

work = Path(tempfile.mkdtemp())

# A small project: synthetic dataset, word vectors and a run configuration.
examples, labels = synthetic.keyword_corpus(300, n_classes=3, seed=2)
corpus.write_dataset(work / "data.tsv", examples, labels)
embed.write_embeddings(work / "vectors.vec", synthetic.random_vectors(synthetic.corpus_vocabulary(3), dim=16, seed=11))
config = {
    "dataset": {"path": "data.tsv", "format": "tsv"},
    "embeddings": "vectors.vec",
    "models": [{"kind": "cnn", "conv_blocks": 5, "filters_per_width": 32}, {"kind": "gru", "hidden_size": 32}],
    "output_dir": "out",
    "split": {"ratios": [0.7, 0.1, 0.2]},
    "train": {"epochs": 12, "lr": 0.01},
}
(work / "config.json").write_text(json.dumps(config))

# Pretend predictions from an external model: right 80% of the time.  The
# file must cover the validation ids (used to rank members) and the test ids.
run = cli.Run(cli.load_config(work / "config.json", env={}))
rnd = random.Random(0)
with open(work / "bert.tsv", "w", encoding="utf-8") as fh:
    fh.write("# predictions exported from a fine-tuned model\n")
    for ex in run.split.validation + run.split.test:
        guess = ex.label if rnd.random() < 0.8 else rnd.randrange(len(labels))
        fh.write(f"{ex.id}\t{labels.name(guess)}\n")

# Declare the file as an ensemble member next to the two local networks.
config["ensemble"] = {"members": ["cnn", "gru", "bert"], "external": {"bert": "bert.tsv"}}
(work / "config.json").write_text(json.dumps(config))
cfg = cli.load_config(work / "config.json", env={})
cli.cmd_train(cfg)
cli.cmd_ensemble(cfg)

# The audit trail records every member's vote, the external one included.
for line in (work / "out" / "ensemble" / "votes.jsonl").read_text(encoding="utf-8").splitlines()[:5]:
    print(line)
