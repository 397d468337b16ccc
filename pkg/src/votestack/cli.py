"""Command-line front end: ``votestack {preprocess,train,predict,ensemble,kfold,evaluate}``.

Every subcommand reads the same JSON run configuration.  Exit codes: 0 on
success, 1 for invalid configuration or inputs, 2 for runtime failures
such as diverging training.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import corpus, embed, ensemble, evalkit, models, textprep
from .errors import ArgumentError, ConfigError, DivergenceError, VotestackError

log = logging.getLogger("votestack")

SEED_ENV = "VOTESTACK_SEED"
AUTO_PREPROCESS_MIN_EXAMPLES = 10_000
MODEL_SUFFIX = ".vsm"


@dataclass
class RunConfig:
    dataset: dict
    embeddings: str
    models: list
    output_dir: str
    seed: int = 0
    split: dict = field(default_factory=lambda: {"ratios": [0.8, 0.1, 0.1]})
    preprocess: object = "auto"
    dictionary: object = None
    lexicon: object = None
    max_len: object = None
    max_len_percentile: float = 0.95
    oov_init: str = "mean"
    train: dict = field(default_factory=dict)
    ensemble: dict = field(default_factory=dict)
    metric: str = "weighted_f1"
    kfold: dict = field(default_factory=lambda: {"k": 5, "stratify": True})
    base_dir: str = field(default=".", repr=False)

    def path(self, p):
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        return d

    @property
    def sha256(self):
        return hashlib.sha256(models._canonical(self.to_dict()).encode("utf-8")).hexdigest()

    @property
    def out(self):
        return self.path(self.output_dir)

    def train_config(self):
        opts = {"seed": self.seed, **self.train}
        return models.TrainConfig(**opts)

    def model_configs(self):
        out = {}
        for spec in self.models:
            spec = dict(spec)
            name = spec.pop("name", spec["kind"])
            out[name] = models.model_config(spec.pop("kind"), **spec)
        return out

    def externals(self):
        return dict(self.ensemble.get("external") or {})


def load_config(path, env=None):
    """Parse and validate a run configuration, reporting every problem at once."""
    env = os.environ if env is None else env
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError([f"config: file {path} not found"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: invalid JSON ({exc.msg} at line {exc.lineno})"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["config: top level must be a JSON object"])
    problems = []
    known = {f.name for f in fields(RunConfig)} - {"base_dir"}
    for key in raw:
        if key not in known:
            problems.append(f"{key}: unknown field")
    for key in ("dataset", "embeddings", "models", "output_dir"):
        if key not in raw:
            problems.append(f"{key}: required field missing")
    if problems:
        raise ConfigError(problems)
    if SEED_ENV in env:
        try:
            raw["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError([f"seed: environment {SEED_ENV}={env[SEED_ENV]!r} is not an integer"]) from None
    cfg = RunConfig(**raw, base_dir=str(path.parent))
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    problems = []

    def need_file(value, where):
        if not isinstance(value, str) or not cfg.path(value).is_file():
            problems.append(f"{where}: file {value!r} does not exist")

    ds = cfg.dataset if isinstance(cfg.dataset, dict) else {}
    if not isinstance(cfg.dataset, dict):
        problems.append("dataset: must be an object with 'path' and 'format'")
    else:
        need_file(ds.get("path"), "dataset.path")
        if ds.get("format", "tsv") not in ("tsv", "jsonl"):
            problems.append(f"dataset.format: expected 'tsv' or 'jsonl', got {ds.get('format')!r}")
    need_file(cfg.embeddings, "embeddings")
    if cfg.dictionary not in (None, "builtin"):
        need_file(cfg.dictionary, "dictionary")
    if cfg.lexicon is not None:
        need_file(cfg.lexicon, "lexicon")
    if not isinstance(cfg.seed, int):
        problems.append("seed: must be an integer")
    if cfg.preprocess not in ("auto", True, False) and not isinstance(cfg.preprocess, dict):
        problems.append("preprocess: expected 'auto', true, false or an options object")
    elif isinstance(cfg.preprocess, dict):
        try:
            textprep.PreprocessOptions.from_dict(cfg.preprocess)
        except TypeError as exc:
            problems.append(f"preprocess: {exc}")
    if cfg.max_len is not None and (not isinstance(cfg.max_len, int) or cfg.max_len < 1):
        problems.append("max_len: must be a positive integer or null")
    if not 0 < cfg.max_len_percentile <= 1:
        problems.append("max_len_percentile: must lie in (0, 1]")
    if cfg.oov_init not in ("mean", "uniform"):
        problems.append("oov_init: expected 'mean' or 'uniform'")
    ratios = cfg.split.get("ratios", [])
    if len(ratios) != 3 or any(not isinstance(r, (int, float)) or r <= 0 for r in ratios) or abs(sum(ratios) - 1) > 1e-9:
        problems.append("split.ratios: must be three positive fractions summing to 1")
    if cfg.metric not in evalkit.METRICS:
        problems.append(f"metric: expected one of {list(evalkit.METRICS)}")

    names = []
    if not isinstance(cfg.models, list) or not cfg.models:
        problems.append("models: must be a non-empty list")
    else:
        for i, spec in enumerate(cfg.models):
            where = f"models[{i}]"
            if not isinstance(spec, dict) or "kind" not in spec:
                problems.append(f"{where}.kind: required")
                continue
            spec = dict(spec)
            name = spec.pop("name", spec["kind"])
            if name in names:
                problems.append(f"{where}.name: duplicate model name {name!r}")
            names.append(name)
            try:
                mc = models.model_config(spec.pop("kind"), **spec)
                mc.validate(cfg.max_len or 10**9)
            except (ArgumentError, TypeError) as exc:
                problems.append(f"{where}: {exc}")
    try:
        cfg.train_config().validate()
    except (ArgumentError, TypeError) as exc:
        problems.append(f"train: {exc}")

    externals = cfg.ensemble.get("external") or {}
    for name, p in externals.items():
        need_file(p, f"ensemble.external.{name}")
        if name in names:
            problems.append(f"ensemble.external.{name}: clashes with a model name")
    for i, member in enumerate(cfg.ensemble.get("members", [])):
        if member not in names and member not in externals:
            problems.append(f"ensemble.members[{i}]: {member!r} is neither a declared model nor an external file")
    k = cfg.kfold.get("k", 5)
    if not isinstance(k, int):
        problems.append("kfold.k: must be an integer")
    if cfg.kfold.get("model") is not None and cfg.kfold["model"] not in names:
        problems.append(f"kfold.model: {cfg.kfold['model']!r} is not a declared model")
    if problems:
        raise ConfigError(problems)


# -- shared pipeline pieces ----------------------------------------------------------

class Run:
    """Everything derived deterministically from a config: data, split, encoder."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.examples, self.label_space = corpus.load_dataset(cfg.path(cfg.dataset["path"]), cfg.dataset.get("format", "tsv"))
        self.split = corpus.stratified_split(self.examples, cfg.split["ratios"], cfg.seed, self.label_space)
        self.options = self._options()
        self.dictionary = self._dictionary()
        self.lexicon = textprep.Lexicon(textprep.load_lexicon(cfg.path(cfg.lexicon))) if cfg.lexicon else None
        self.table = embed.load_embeddings(cfg.path(cfg.embeddings), oov=cfg.oov_init, seed=cfg.seed)
        self.encoder = self.make_encoder([ex.text for ex in self.split.train])

    def _options(self):
        p = self.cfg.preprocess
        if isinstance(p, dict):
            return textprep.PreprocessOptions.from_dict(p)
        if p == "auto":
            p = len(self.examples) >= AUTO_PREPROCESS_MIN_EXAMPLES
        return textprep.PreprocessOptions() if p else textprep.PreprocessOptions.off()

    def _dictionary(self):
        d = self.cfg.dictionary
        if d is None or not self.options.apply_dictionary:
            return None
        return textprep.NormalizationDictionary.builtin() if d == "builtin" else textprep.NormalizationDictionary.load(self.cfg.path(d))

    def make_encoder(self, texts):
        if self.cfg.max_len is not None:
            return models.TextEncoder(self.table, self.cfg.max_len, self.options, self.dictionary, self.lexicon)
        return models.TextEncoder.fit(texts, self.table, self.cfg.max_len_percentile, self.options, self.dictionary, self.lexicon)

    def model_path(self, name):
        return self.cfg.out / "models" / f"{name}{MODEL_SUFFIX}"


def _labels(examples):
    return [ex.label for ex in examples]


def _write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _file_sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _ids_sha(examples):
    return hashlib.sha256(",".join(str(ex.id) for ex in examples).encode()).hexdigest()


# -- subcommands --------------------------------------------------------------------

def cmd_preprocess(cfg, args=None):
    run = Run(cfg)
    out = cfg.out / "preprocessed.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"config_sha256": cfg.sha256, "fingerprint": run.encoder.fingerprint}, ensure_ascii=False) + "\n")
        for ex in run.examples:
            fh.write(json.dumps({"id": ex.id, "tokens": run.encoder.tokens(ex.text),
                                 "label": run.label_space.name(ex.label)}, ensure_ascii=False) + "\n")
    print(f"wrote {len(run.examples)} preprocessed examples to {out} (max_len {run.encoder.max_len})")
    return out


def cmd_train(cfg, args=None):
    run = Run(cfg)
    tc = cfg.train_config()
    train = run.encoder.encode(run.split.train)
    val = run.encoder.encode(run.split.validation)
    manifest = {
        "config": cfg.to_dict(),
        "config_sha256": cfg.sha256,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "label_space": list(run.label_space.labels),
        "fingerprint": run.encoder.fingerprint,
        "split": {part: {"size": len(getattr(run.split, part)), "ids_sha256": _ids_sha(getattr(run.split, part))}
                  for part in ("train", "validation", "test")},
        "models": {},
    }
    for name, mc in cfg.model_configs().items():
        log.info("training %s", name)
        try:
            clf = models.train_classifier(train, _labels(run.split.train), val, _labels(run.split.validation),
                                          mc, tc, run.label_space, name=name)
        except DivergenceError as exc:
            raise DivergenceError(f"model {name!r}: {exc}") from exc
        path = run.model_path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        models.serialize_model(clf, path)
        manifest["models"][name] = {"file": str(path.relative_to(cfg.out)), "sha256": _file_sha(path),
                                    "best_epoch": clf.best_epoch, "history": clf.history}
        print(f"{name}: best epoch {clf.best_epoch}, saved {path}")
    _write_json(cfg.out / "train_manifest.json", manifest)
    return manifest


def _load_member(run, name, path=None):
    clf = models.deserialize_model(path or run.model_path(name))
    clf.check_fingerprint(run.encoder.fingerprint)
    return clf


def cmd_predict(cfg, args):
    run = Run(cfg)
    name = args.model or next(iter(cfg.model_configs()))
    clf = _load_member(run, name, getattr(args, "model_file", None))
    test = run.encoder.encode(run.split.test)
    pred = models.predict(clf, test)
    out = cfg.out / "predictions" / f"{name}.tsv"
    out.parent.mkdir(parents=True, exist_ok=True)
    models.write_predictions(out, test.ids, pred.labels, pred.probabilities, run.label_space,
                             header=f"config_sha256={cfg.sha256} model={name}")
    print(f"wrote {len(test)} predictions to {out}")
    return out


def cmd_ensemble(cfg, args=None):
    run = Run(cfg)
    member_names = list(cfg.ensemble.get("members") or [])
    if len(member_names) < 2:
        raise ArgumentError(f"an ensemble needs at least 2 members, got {member_names}")
    overrides = {}
    for path in getattr(args, "model_files", None) or []:
        overrides[models.deserialize_model(path).name] = path
    val = run.encoder.encode(run.split.validation)
    test = run.encoder.encode(run.split.test)
    externals = cfg.externals()
    expected = [int(i) for i in np.concatenate([val.ids, test.ids])]
    members = []
    for name in member_names:
        if name in externals:
            members.append(models.load_external_predictions(cfg.path(externals[name]), run.label_space, expected, name=name))
        else:
            members.append(_load_member(run, name, overrides.get(name)))
    econf = ensemble.derive_priority(members, val, _labels(run.split.validation), run.label_space, cfg.metric)
    labels, records = ensemble.ensemble_predict(members, test, econf)
    gold = _labels(run.split.test)
    report = evalkit.evaluate(gold, labels, run.label_space)
    single = {m.name: evalkit.evaluate(gold, models.predict(m, test).labels, run.label_space).metric(cfg.metric)
              for m in members}
    single["ensemble"] = report.metric(cfg.metric)

    out = cfg.out / "ensemble"
    out.mkdir(parents=True, exist_ok=True)
    onehot = np.eye(len(run.label_space))[labels]
    models.write_predictions(out / "predictions.tsv", test.ids, labels, onehot, run.label_space,
                             header=f"config_sha256={cfg.sha256} model=ensemble")
    ensemble.write_vote_records(out / "votes.jsonl", records, run.label_space)
    econf.save(out / "ensemble_config.json", run.label_space)
    _write_json(out / "report.json", {"config_sha256": cfg.sha256, "metric": cfg.metric,
                                      "ensemble": report.to_dict(), "members": single,
                                      "priority": list(econf.members)})
    table = evalkit.score_table({m: {cfg.metric: s} for m, s in single.items()})
    (out / "report.txt").write_text(report.to_text() + "\n\n" + table + "\n", encoding="utf-8")
    print(table)
    return report


def cmd_kfold(cfg, args=None):
    run = Run(cfg)
    k = args.k if args is not None and getattr(args, "k", None) is not None else cfg.kfold.get("k", 5)
    name = cfg.kfold.get("model") or next(iter(cfg.model_configs()))
    mc = cfg.model_configs()[name]
    tc = cfg.train_config()
    metric = cfg.kfold.get("metric", cfg.metric)

    def fit(train, val, fold_seed):
        enc = run.make_encoder([ex.text for ex in train])
        clf = models.train_classifier(enc.encode(train), _labels(train), enc.encode(val), _labels(val), mc,
                                      models.TrainConfig(**{**asdict(tc), "seed": fold_seed}), run.label_space, name)
        return lambda examples: models.predict(clf, enc.encode(examples)).labels

    result = evalkit.crossvalidate(run.examples, run.label_space, k, fit, metric=metric, seed=cfg.seed,
                                   stratify=cfg.kfold.get("stratify", True))
    out = cfg.out / "kfold"
    _write_json(out / "report.json", {"config_sha256": cfg.sha256, "model": name, "k": k, "metric": metric,
                                      "fold_scores": list(result.fold_scores), "mean": result.mean, "std": result.std})
    (out / "report.txt").write_text(result.to_text() + "\n", encoding="utf-8")
    print(result.to_text())
    return result


def read_prediction_header(path):
    with Path(path).open(encoding="utf-8") as fh:
        first = fh.readline()
    meta = {}
    if first.startswith("#"):
        for part in first[1:].split():
            key, _, value = part.partition("=")
            meta[key] = value
    return meta


def cmd_evaluate(cfg, args):
    meta = read_prediction_header(args.predictions)
    if meta.get("config_sha256") != cfg.sha256:
        raise ArgumentError(f"{args.predictions} was produced under config {meta.get('config_sha256')}, "
                            f"not {cfg.sha256}; refusing to evaluate a mismatched pair")
    run = Run(cfg)
    ids = [ex.id for ex in run.split.test]
    preds = models.load_external_predictions(args.predictions, run.label_space, ids)
    report = evalkit.evaluate(_labels(run.split.test), [preds.table[i][0] for i in ids], run.label_space)
    print(report.to_text())
    _write_json(cfg.out / "evaluation" / (Path(args.predictions).stem + ".json"),
                {"config_sha256": cfg.sha256, "predictions": str(args.predictions), "report": report.to_dict()})
    return report


COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "predict": cmd_predict,
    "ensemble": cmd_ensemble,
    "kfold": cmd_kfold,
    "evaluate": cmd_evaluate,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="votestack", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        if name == "predict":
            p.add_argument("--model", help="model name from the config (default: first)")
            p.add_argument("--model-file", help="explicit model file instead of output_dir/models/<name>.vsm")
        if name == "ensemble":
            p.add_argument("--model-files", nargs="*", help="explicit member model files")
        if name == "kfold":
            p.add_argument("--k", type=int)
            p.add_argument("--no-stratify", action="store_true", help="plain shuffled folds")
        if name == "evaluate":
            p.add_argument("--predictions", required=True, help="predictions TSV written by predict/ensemble")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if getattr(args, "no_stratify", False):
            cfg.kfold = {**cfg.kfold, "stratify": False}
        COMMANDS[args.command](cfg, args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VotestackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.exception("runtime failure")
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
