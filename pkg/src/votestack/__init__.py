"""Vietnamese social-media text classification with priority-voting ensembles."""

from .corpus import DatasetSplit, LabeledExample, LabelSpace, kfold_partitions, load_dataset, stratified_split
from .embed import EmbeddingTable, EncodedSequence, encode_sequence, load_embeddings, suggest_max_len
from .ensemble import EnsembleConfig, VoteRecord, derive_priority, ensemble_predict, vote
from .evalkit import ConfusionMatrix, MetricsReport, confusion_matrix, crossvalidate, evaluate, f1_report
from .models import (
    CnnConfig,
    EncodedBatch,
    ExternalClassifier,
    RnnConfig,
    TextEncoder,
    TrainConfig,
    TrainedClassifier,
    deserialize_model,
    load_external_predictions,
    model_config,
    predict,
    serialize_model,
    train_classifier,
)
from .textprep import NormalizationDictionary, PreprocessOptions, apply_dictionary, normalize_text, tokenize

__version__ = "0.1.0"
