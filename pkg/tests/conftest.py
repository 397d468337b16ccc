import json

import numpy as np
import pytest

from votestack import corpus, embed, models, synthetic


@pytest.fixture(scope="session")
def keyword_data():
    return synthetic.keyword_corpus(500, n_classes=3, seed=1)


@pytest.fixture(scope="session")
def vec_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("emb") / "synthetic.vec"
    embed.write_embeddings(path, synthetic.random_vectors(synthetic.corpus_vocabulary(3), dim=16, seed=11))
    return path


@pytest.fixture(scope="session")
def table(vec_path):
    return embed.load_embeddings(vec_path)


@pytest.fixture(scope="session")
def keyword_split(keyword_data):
    examples, _ = keyword_data
    return corpus.stratified_split(examples, (0.7, 0.1, 0.2), seed=3)


@pytest.fixture(scope="session")
def encoder(keyword_split, table):
    return models.TextEncoder.fit([ex.text for ex in keyword_split.train], table)


@pytest.fixture(scope="session")
def encoded(keyword_split, encoder):
    return tuple(encoder.encode(part) for part in (keyword_split.train, keyword_split.validation, keyword_split.test))


def labels_of(examples):
    return np.array([ex.label for ex in examples])


FAST_CONFIGS = {
    "cnn": dict(conv_blocks=5, filters_per_width=32),
    "lstm": dict(hidden_size=32),
    "bilstm": dict(hidden_size=32),
    "gru": dict(hidden_size=32),
}


@pytest.fixture(scope="session")
def trained(keyword_data, keyword_split, encoded):
    """One small trained classifier per kind, shared across test modules."""
    _, label_space = keyword_data
    train, val, _ = encoded
    tc = models.TrainConfig(epochs=20, lr=1e-2, seed=0, early_stop_patience=5)
    return {
        kind: models.train_classifier(train, labels_of(keyword_split.train), val, labels_of(keyword_split.validation),
                                      models.model_config(kind, **cfg), tc, label_space, name=kind)
        for kind, cfg in FAST_CONFIGS.items()
    }


CLI_MODELS = [
    {"kind": "cnn", **FAST_CONFIGS["cnn"]},
    {"kind": "lstm", **FAST_CONFIGS["lstm"]},
    {"kind": "gru", **FAST_CONFIGS["gru"]},
]


def write_project(root, n=300, seed=2, model_specs=None, **overrides):
    """Synthetic dataset, embedding file and JSON run config under ``root``; returns the config path."""
    root.mkdir(parents=True, exist_ok=True)
    examples, space = synthetic.keyword_corpus(n, n_classes=3, seed=seed)
    corpus.write_dataset(root / "data.tsv", examples, space)
    embed.write_embeddings(root / "vectors.vec", synthetic.random_vectors(synthetic.corpus_vocabulary(3), dim=16, seed=11))
    cfg = {
        "dataset": {"path": "data.tsv", "format": "tsv"},
        "embeddings": "vectors.vec",
        "models": model_specs if model_specs is not None else CLI_MODELS,
        "output_dir": "out",
        "seed": 0,
        "split": {"ratios": [0.7, 0.1, 0.2]},
        "train": {"epochs": 12, "lr": 0.01, "early_stop_patience": 4},
        "ensemble": {"members": ["cnn", "lstm", "gru"]},
        "kfold": {"k": 5, "stratify": True, "model": "cnn"},
    }
    cfg.update(overrides)
    path = root / "config.json"
    path.write_text(json.dumps(cfg, ensure_ascii=False, indent=2), encoding="utf-8")
    return path
