"""CNN and recurrent classifiers over frozen embeddings, plus the external-predictions adapter.

A :class:`TextEncoder` fixes the whole preprocessing pipeline (normalization
options, dictionary, lexicon, embedding file, ``max_len``) and stamps every
batch it produces with a fingerprint.  Classifiers remember the fingerprint
they were trained under and refuse batches encoded any other way.
"""

from __future__ import annotations

import copy
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from . import nnkernel as nk
from .corpus import LabelSpace
from .embed import EncodedSequence, encode_sequence, suggest_max_len
from .errors import ArgumentError, ContractError, CoverageError, DivergenceError, FormatError, ModelLoadError
from .evalkit import METRICS, evaluate
from .textprep import PreprocessOptions, preprocess

MODEL_MAGIC = b"VSTKMDL\x00"
MODEL_VERSION = 1


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class CnnConfig:
    conv_blocks: int = 3
    base_width: Optional[int] = None
    filters_per_width: int = 128
    dropout: float = 0.5

    kind = "cnn"

    @property
    def widths(self):
        # 3 blocks -> widths 2,3,4 ; 5 blocks -> widths 1..5
        base = self.base_width if self.base_width is not None else (2 if self.conv_blocks <= 3 else 1)
        return tuple(range(base, base + self.conv_blocks))

    def validate(self, max_len):
        if self.conv_blocks < 1 or self.filters_per_width < 1:
            raise ArgumentError("conv_blocks and filters_per_width must be positive")
        if min(self.widths) < 1 or max(self.widths) > max_len:
            raise ArgumentError(f"filter widths {self.widths} must lie in [1, max_len={max_len}]")
        if not 0.0 <= self.dropout < 1.0:
            raise ArgumentError(f"dropout must lie in [0, 1), got {self.dropout}")


@dataclass(frozen=True)
class RnnConfig:
    cell: str = "lstm"
    hidden_size: int = 128
    bidirectional: bool = False
    dropout: float = 0.5

    @property
    def kind(self):
        return ("bi" if self.bidirectional else "") + self.cell

    def validate(self, max_len):
        if self.cell not in ("lstm", "gru"):
            raise ArgumentError(f"cell must be 'lstm' or 'gru', got {self.cell!r}")
        if self.hidden_size < 1:
            raise ArgumentError("hidden_size must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ArgumentError(f"dropout must lie in [0, 1), got {self.dropout}")


def model_config(kind, **overrides):
    """Build the config for one of ``cnn``, ``lstm``, ``bilstm``, ``gru`` (or ``bigru``)."""
    if kind == "cnn":
        return CnnConfig(**overrides)
    if kind in ("lstm", "bilstm", "gru", "bigru"):
        return RnnConfig(cell=kind.removeprefix("bi"), bidirectional=kind.startswith("bi"), **overrides)
    raise ArgumentError(f"unknown model kind {kind!r}")


def config_to_dict(cfg):
    return {"kind": cfg.kind, **{k: v for k, v in asdict(cfg).items() if k not in ("cell", "bidirectional")}}


def config_from_dict(d):
    d = dict(d)
    return model_config(d.pop("kind"), **d)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    early_stop_patience: int = 3
    validation_metric: str = "weighted_f1"
    max_loss: float = 1e4  # a mean loss beyond this counts as divergence

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1 or self.early_stop_patience < 0:
            raise ArgumentError("epochs and batch_size must be >= 1 and patience >= 0")
        if self.validation_metric not in METRICS:
            raise ArgumentError(f"validation_metric must be one of {METRICS}")


# -- encoding pipeline --------------------------------------------------------

def _canonical(obj):
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def fingerprint_id(fp):
    return hashlib.sha256(_canonical(fp).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class EncodedBatch:
    ids: np.ndarray
    indices: np.ndarray  # (n, max_len) embedding rows, PAD beyond each length
    lengths: np.ndarray
    fingerprint: dict
    table: object = field(repr=False, compare=False)

    def __len__(self):
        return len(self.ids)

    def subset(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return EncodedBatch(self.ids[rows], self.indices[rows], self.lengths[rows], self.fingerprint, self.table)

    def vectors(self, rows=None):
        idx = self.indices if rows is None else self.indices[rows]
        return self.table.matrix[idx]

    def sequences(self):
        return [EncodedSequence(tuple(int(i) for i in row), int(n)) for row, n in zip(self.indices, self.lengths)]


class TextEncoder:
    """Preprocess, segment and index texts under one fixed, fingerprinted pipeline."""

    def __init__(self, table, max_len, options=None, dictionary=None, lexicon=None):
        if max_len < 1:
            raise ArgumentError(f"max_len must be at least 1, got {max_len}")
        self.table = table
        self.max_len = int(max_len)
        self.options = options or PreprocessOptions()
        self.dictionary = dictionary
        self.lexicon = lexicon

    @classmethod
    def fit(cls, texts, table, percentile=0.95, options=None, dictionary=None, lexicon=None):
        """Choose ``max_len`` from the token lengths of ``texts``."""
        enc = cls(table, 1, options, dictionary, lexicon)
        enc.max_len = suggest_max_len([enc.tokens(t) for t in texts], percentile)
        return enc

    @property
    def fingerprint(self):
        return {
            "preprocess": self.options.to_dict(),
            "dictionary_sha256": self.dictionary.sha256() if self.dictionary is not None else None,
            "lexicon_sha256": self.lexicon.sha256() if self.lexicon is not None else None,
            "embedding_sha256": self.table.sha256,
            "max_len": self.max_len,
        }

    def tokens(self, text):
        return preprocess(text, self.options, self.dictionary, self.lexicon)

    def encode(self, examples):
        """Encode ``LabeledExample`` objects (or plain strings, numbered from 0)."""
        ids, rows, lengths = [], [], []
        for pos, ex in enumerate(examples):
            text = ex if isinstance(ex, str) else ex.text
            seq = encode_sequence(self.tokens(text), self.table, self.max_len)
            ids.append(pos if isinstance(ex, str) else ex.id)
            rows.append(seq.indices)
            lengths.append(seq.true_length)
        indices = np.asarray(rows, dtype=np.int64).reshape(len(rows), self.max_len)
        return EncodedBatch(np.asarray(ids, dtype=np.int64), indices, np.asarray(lengths, dtype=np.int64),
                            self.fingerprint, self.table)


# -- networks -----------------------------------------------------------------

def init_params(cfg, dim, n_classes, rng):
    params = {}
    if cfg.kind == "cnn":
        F = cfg.filters_per_width
        for w in cfg.widths:
            params[f"conv{w}.filters"] = nk.glorot_uniform(rng, (F, w, dim), w * dim, w * F)
            params[f"conv{w}.bias"] = np.zeros(F)
        features = F * len(cfg.widths)
    else:
        cls = nk.LstmParams if cfg.cell == "lstm" else nk.GruParams
        params.update(nk.params_to_dict(cls.init(dim, cfg.hidden_size, rng), "fwd."))
        if cfg.bidirectional:
            params.update(nk.params_to_dict(cls.init(dim, cfg.hidden_size, rng), "bwd."))
        features = cfg.hidden_size * (2 if cfg.bidirectional else 1)
    params["out.W"] = nk.glorot_uniform(rng, (features, n_classes), features, n_classes)
    params["out.b"] = np.zeros(n_classes)
    return params


def network_forward(cfg, params, x, lengths, train=False, rng=None):
    """Encoder -> dropout -> dense.  Returns ``(logits, cache)``."""
    if cfg.kind == "cnn":
        feats, caches = [], []
        for w in cfg.widths:
            f, c = nk.conv1d_maxpool_forward(x, params[f"conv{w}.filters"], params[f"conv{w}.bias"], lengths)
            feats.append(f)
            caches.append(c)
        h = np.concatenate(feats, axis=1)
        enc_cache = caches
    else:
        cls = nk.LstmParams if cfg.cell == "lstm" else nk.GruParams
        fwd = nk.params_from_dict(cls, params, "fwd.")
        if cfg.bidirectional:
            bwd = nk.params_from_dict(cls, params, "bwd.")
            h, enc_cache = nk.bidirectional_forward(x, fwd, bwd, lengths, cell=cfg.cell)
        else:
            run = nk.lstm_forward if cfg.cell == "lstm" else nk.gru_forward
            h, enc_cache = run(x, fwd, lengths)
    hd, mask = nk.dropout_forward(h, cfg.dropout, rng, train=train)
    logits, dense_cache = nk.dense_forward(hd, params["out.W"], params["out.b"])
    return logits, (enc_cache, mask, dense_cache)


def network_backward(cfg, params, dlogits, cache):
    """Gradients for every trainable parameter (embeddings stay frozen)."""
    enc_cache, mask, dense_cache = cache
    grads = {}
    dh, grads["out.W"], grads["out.b"] = nk.dense_backward(dlogits, dense_cache)
    dh = nk.dropout_backward(dh, mask)
    if cfg.kind == "cnn":
        F = cfg.filters_per_width
        for j, (w, c) in enumerate(zip(cfg.widths, enc_cache)):
            _, grads[f"conv{w}.filters"], grads[f"conv{w}.bias"] = nk.conv1d_maxpool_backward(dh[:, j * F:(j + 1) * F], c)
    elif cfg.bidirectional:
        _, gf, gb = nk.bidirectional_backward(dh, enc_cache)
        grads.update(nk.params_to_dict(gf, "fwd."))
        grads.update(nk.params_to_dict(gb, "bwd."))
    else:
        back = nk.lstm_backward if cfg.cell == "lstm" else nk.gru_backward
        _, g = back(dh, enc_cache)
        grads.update(nk.params_to_dict(g, "fwd."))
    return grads


# -- classifiers ----------------------------------------------------------------

class Predictions(NamedTuple):
    labels: np.ndarray
    probabilities: np.ndarray


@dataclass
class TrainedClassifier:
    name: str
    kind: str
    config: object
    label_space: LabelSpace
    fingerprint: dict
    params: dict
    history: list = field(default_factory=list)
    train_config: Optional[TrainConfig] = None
    best_epoch: int = 0

    def check_fingerprint(self, fingerprint):
        if fingerprint != self.fingerprint:
            raise ContractError(
                f"model {self.name!r} expects inputs encoded under fingerprint {fingerprint_id(self.fingerprint)} "
                f"{_canonical(self.fingerprint)} but got {fingerprint_id(fingerprint)} {_canonical(fingerprint)}"
            )

    def predict(self, batch):
        return predict(self, batch)


@dataclass
class ExternalClassifier:
    """Predictions computed elsewhere (for instance a fine-tuned BERT), served by id lookup."""

    name: str
    label_space: LabelSpace
    table: dict  # id -> (label index, probability vector)
    kind: str = "external"
    fingerprint: Optional[dict] = None

    def check_fingerprint(self, fingerprint):
        pass

    def predict(self, batch):
        return predict(self, batch)


def _forward_probs(clf, batch, chunk=256):
    probs = []
    for start in range(0, len(batch), chunk):
        rows = np.arange(start, min(start + chunk, len(batch)))
        logits, _ = network_forward(clf.config, clf.params, batch.vectors(rows), batch.lengths[rows], train=False)
        probs.append(nk.softmax(logits))
    k = len(clf.label_space)
    return np.concatenate(probs) if probs else np.zeros((0, k))


def predict(classifier, batch):
    """Label (argmax, lowest index on ties) and probability vector per encoded example."""
    if isinstance(classifier, ExternalClassifier):
        ids = [int(i) for i in batch.ids]
        missing = [i for i in ids if i not in classifier.table]
        if missing:
            raise CoverageError(f"external member {classifier.name!r} has no prediction for ids {missing}")
        labels = np.asarray([classifier.table[i][0] for i in ids], dtype=np.int64)
        probs = np.asarray([classifier.table[i][1] for i in ids], dtype=np.float64).reshape(len(ids), len(classifier.label_space))
        return Predictions(labels, probs)
    classifier.check_fingerprint(batch.fingerprint)
    probs = _forward_probs(classifier, batch)
    return Predictions(np.argmax(probs, axis=1), probs)


def train_classifier(train, train_labels, validation, validation_labels, model_cfg, train_cfg, label_space, name=None):
    """Mini-batch Adam training with per-epoch validation and early stopping.

    ``train`` and ``validation`` are :class:`EncodedBatch` objects from the
    same encoder.  The returned classifier holds the parameters of the best
    validation epoch.
    """
    train_cfg.validate()
    if len(train) == 0 or len(validation) == 0:
        raise ArgumentError("train and validation sets must be non-empty")
    if train.fingerprint != validation.fingerprint:
        raise ContractError("train and validation batches were encoded under different pipelines")
    k = len(label_space)
    y = np.asarray(train_labels, dtype=np.int64)
    y_val = np.asarray(validation_labels, dtype=np.int64)
    for arr in (y, y_val):
        if arr.min() < 0 or arr.max() >= k:
            raise ArgumentError(f"labels must lie in [0, {k})")
    model_cfg.validate(train.indices.shape[1])

    rng = np.random.default_rng(train_cfg.seed)
    params = init_params(model_cfg, train.table.dim, k, rng)
    adam = nk.AdamState(lr=train_cfg.lr)
    clf = TrainedClassifier(name or model_cfg.kind, model_cfg.kind, model_cfg, label_space, train.fingerprint,
                            params, [], train_cfg)

    best_score, best_params, best_epoch, stale = -np.inf, None, 0, 0
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(len(train))
        total, seen = 0.0, 0
        for start in range(0, len(order), train_cfg.batch_size):
            rows = order[start:start + train_cfg.batch_size]
            logits, cache = network_forward(model_cfg, params, train.vectors(rows), train.lengths[rows], True, rng)
            loss, dlogits = nk.softmax_crossentropy(logits, y[rows])
            if not np.isfinite(loss) or loss > train_cfg.max_loss:
                raise DivergenceError(f"training diverged in epoch {epoch} (batch loss {loss})")
            grads = network_backward(model_cfg, params, dlogits, cache)
            nk.adam_step(params, grads, adam)
            total += loss * len(rows)
            seen += len(rows)
        clf.params = params
        report = evaluate(y_val, predict(clf, validation).labels, label_space)
        score = report.metric(train_cfg.validation_metric)
        clf.history.append({"epoch": epoch, "train_loss": total / seen, train_cfg.validation_metric: score})
        if score > best_score:
            best_score, best_params, best_epoch, stale = score, copy.deepcopy(params), epoch, 0
        else:
            stale += 1
            if stale > train_cfg.early_stop_patience:
                break
    # store what the float32 container can represent so a save/load round trip is exact
    clf.params = {n: p.astype("<f4").astype(np.float64) for n, p in best_params.items()}
    clf.best_epoch = best_epoch
    return clf


# -- external predictions ---------------------------------------------------------

def load_external_predictions(path, label_space, expected_ids, name="external"):
    """Read ``id<TAB>label[<TAB>p_1 ... p_k]`` rows; ``#`` lines are comments."""
    k = len(label_space)
    table = {}
    duplicates = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise FormatError("expected 'id<TAB>label[<TAB>probabilities]'", line=lineno)
            try:
                ex_id = int(cols[0])
            except ValueError:
                raise FormatError(f"id {cols[0]!r} is not an integer", line=lineno) from None
            if cols[1] not in label_space.labels:
                raise FormatError(f"unknown label {cols[1]!r}", line=lineno)
            label = label_space.index(cols[1])
            if len(cols) > 2:
                probs = cols[2].split() if len(cols) == 3 else cols[2:]
                if len(probs) != k:
                    raise FormatError(f"expected {k} probabilities, found {len(probs)}", line=lineno)
                try:
                    vec = tuple(float(p) for p in probs)
                except ValueError:
                    raise FormatError("non-numeric probability", line=lineno) from None
            else:
                vec = tuple(1.0 if j == label else 0.0 for j in range(k))
            if ex_id in table:
                duplicates.append(ex_id)
            table[ex_id] = (label, vec)
    expected = {int(i) for i in expected_ids}
    missing = sorted(expected - set(table))
    extra = sorted(set(table) - expected)
    if missing or duplicates or extra:
        parts = []
        if missing:
            parts.append(f"missing ids {missing}")
        if duplicates:
            parts.append(f"duplicate ids {sorted(set(duplicates))}")
        if extra:
            parts.append(f"unexpected ids {extra}")
        raise CoverageError(f"{path}: " + "; ".join(parts))
    return ExternalClassifier(name, label_space, table)


def write_predictions(path, ids, labels, probabilities, label_space, header=None):
    """Write the ``id<TAB>label<TAB>p_1 ... p_k`` schema the external adapter reads."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(f"# {header}\n")
        for i, lab, p in zip(ids, labels, probabilities):
            probs = "\t".join(f"{float(x):.6f}" for x in p)
            fh.write(f"{int(i)}\t{label_space.name(int(lab))}\t{probs}\n")


# -- serialization ------------------------------------------------------------------

def serialize_model(classifier, path):
    names = sorted(classifier.params)
    arrays = [np.ascontiguousarray(classifier.params[n], dtype="<f4") for n in names]
    payload = b"".join(a.tobytes() for a in arrays)
    header = {
        "format": "votestack-model",
        "version": MODEL_VERSION,
        "name": classifier.name,
        "kind": classifier.kind,
        "config": config_to_dict(classifier.config),
        "train_config": asdict(classifier.train_config) if classifier.train_config else None,
        "label_space": list(classifier.label_space.labels),
        "fingerprint": classifier.fingerprint,
        "history": classifier.history,
        "best_epoch": classifier.best_epoch,
        "params": [{"name": n, "shape": list(a.shape)} for n, a in zip(names, arrays)],
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    head = _canonical(header).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", MODEL_VERSION, len(head)))
        fh.write(head)
        fh.write(payload)


def deserialize_model(path):
    raw = Path(path).read_bytes()
    if len(raw) < len(MODEL_MAGIC) + 8 or not raw.startswith(MODEL_MAGIC):
        raise ModelLoadError(f"{path}: not a votestack model file")
    version, head_len = struct.unpack_from("<II", raw, len(MODEL_MAGIC))
    if version != MODEL_VERSION:
        raise ModelLoadError(f"{path}: model format version {version}, expected {MODEL_VERSION}")
    start = len(MODEL_MAGIC) + 8
    try:
        header = json.loads(raw[start:start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ModelLoadError(f"{path}: corrupted header") from None
    payload = raw[start + head_len:]
    if len(payload) != header.get("payload_bytes") or hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise ModelLoadError(f"{path}: parameter payload is truncated or corrupted")
    params, offset = {}, 0
    for spec in header["params"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(spec["shape"])
        params[spec["name"]] = arr.astype(np.float64)
        offset += 4 * count
    tc = header.get("train_config")
    return TrainedClassifier(
        name=header["name"],
        kind=header["kind"],
        config=config_from_dict(header["config"]),
        label_space=LabelSpace(tuple(header["label_space"])),
        fingerprint=header["fingerprint"],
        params=params,
        history=header["history"],
        train_config=TrainConfig(**tc) if tc else None,
        best_epoch=header.get("best_epoch", 0),
    )
