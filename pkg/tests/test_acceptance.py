"""Acceptance suite: one PASS/FAIL line per criterion, printed even under capture."""

import itertools
import json
import random
import time

import numpy as np
import pytest

from conftest import labels_of, write_project
from test_ensemble import config as vote_config
from test_ensemble import reference_vote
from test_nnkernel import bilstm_loss, conv_loss, dense_loss, jitter, recurrent_loss
from votestack import cli, corpus, ensemble, evalkit, models, synthetic
from votestack import nnkernel as nk
from votestack.corpus import LabeledExample, LabelSpace
from votestack.embed import load_embeddings, write_embeddings
from votestack.textprep import NormalizationDictionary, apply_dictionary

vote = ensemble.vote


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        assert ok, detail
    return emit


# -- 1. gradient integrity

SEEDS = range(10)


def dense_case(rng, n, d_in, d_out):
    p = {"x": rng.normal(size=(n, d_in)), "W": rng.normal(size=(d_in, d_out)), "b": rng.normal(size=d_out)}
    return dense_loss(rng.normal(size=(n, d_out))), p


def conv_case(rng, n, length, dim, filters, width):
    lengths = rng.integers(width, length + 1, size=n)
    p = {"seq": rng.normal(size=(n, length, dim)), "filters": rng.normal(size=(filters, width, dim)),
         "bias": rng.normal(size=filters)}
    return conv_loss(rng.normal(size=(n, filters)), lengths), p


def recurrent_case(cell, rng, n, length, dim, hidden):
    cls = nk.LstmParams if cell == "lstm" else nk.GruParams
    p = jitter(rng, nk.params_to_dict(cls.init(dim, hidden, rng)))
    p["seq"] = rng.normal(size=(n, length, dim))
    lengths = rng.integers(1, length + 1, size=n)
    return recurrent_loss(cell, rng.normal(size=(n, hidden)), lengths), p


def bilstm_case(rng, n, length, dim, hidden):
    p = {**nk.params_to_dict(nk.LstmParams.init(dim, hidden, rng), "f."),
         **nk.params_to_dict(nk.LstmParams.init(dim, hidden, rng), "b.")}
    p = jitter(rng, p)
    p["seq"] = rng.normal(size=(n, length, dim))
    lengths = rng.integers(1, length + 1, size=n)
    return bilstm_loss(rng.normal(size=(n, 2 * hidden)), lengths), p


GRADIENT_CASES = {
    "dense": (dense_case, [(1, 2, 1), (3, 4, 2), (5, 3, 6)]),
    "conv1d+maxpool": (conv_case, [(1, 5, 4, 3, 2), (2, 6, 3, 2, 3), (3, 4, 2, 4, 1)]),
    "lstm": (lambda rng, *s: recurrent_case("lstm", rng, *s), [(1, 4, 3, 2), (2, 5, 2, 3), (3, 3, 4, 2)]),
    "bilstm": (bilstm_case, [(1, 4, 3, 2), (2, 5, 2, 3), (3, 3, 2, 2)]),
    "gru": (lambda rng, *s: recurrent_case("gru", rng, *s), [(1, 4, 3, 2), (2, 5, 2, 3), (3, 3, 4, 2)]),
}


def offending_elements(forward, params, h=1e-5, tol=1e-5):
    """(name, index, analytic, numeric) for every element whose relative error exceeds ``tol``."""
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    _, analytic = forward(params, None)
    out = []
    for name, arr in params.items():
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            fp, _ = forward(params, None)
            arr[idx] = orig - h
            fm, _ = forward(params, None)
            arr[idx] = orig
            a, n = analytic[name][idx], (fp - fm) / (2 * h)
            if abs(a - n) / max(abs(a), abs(n), 1e-8) >= tol:
                out.append((name, idx, a, n))
    return out


def test_criterion_1_gradient_integrity(report):
    start = time.perf_counter()
    worst, elements, failing = {}, 0, []
    for layer, (make, shapes) in GRADIENT_CASES.items():
        for seed, shape in itertools.product(SEEDS, shapes):
            loss, params = make(np.random.default_rng(1000 * seed + sum(shape)), *shape)
            err = nk.gradient_check(loss, params, h=1e-5)
            worst[layer] = max(worst.get(layer, 0.0), err)
            elements += sum(v.size for v in params.values())
            if err >= 1e-5:
                failing.append((layer, seed, shape, loss, params))
    elapsed = time.perf_counter() - start
    ok = all(v < 1e-5 for v in worst.values()) and elapsed < 30
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    line = f"max relative error ({detail}) over 10 seeds x 3 shapes, {elements} elements, {elapsed:.1f}s"
    if failing:
        # say which elements miss and by how much in absolute terms
        bad = [(layer, seed, shape, *e) for layer, seed, shape, loss, params in failing
               for e in offending_elements(loss, params)]
        line += f"; {len(bad)} element(s) over tolerance: " + "; ".join(
            f"{layer} seed {seed} shape {shape} {name}{list(idx)} analytic {a:.3e} numeric {n:.3e} |diff| {abs(a - n):.1e}"
            for layer, seed, shape, name, idx, a, n in bad)
    report(1, ok, line)


# -- 2. voting oracle

def test_criterion_2_voting_oracle(report):
    start = time.perf_counter()
    checked = mismatches = 0
    for m, k, with_f1 in itertools.product((2, 3, 4, 5), (2, 3, 4), (False, True)):
        cfg = vote_config(m, k if with_f1 else None, seed=7 * m + k)
        for labels in itertools.product(range(k), repeat=m):
            rec = vote(labels, cfg)
            checked += 1
            mismatches += (rec.chosen, rec.resolution) != reference_vote(list(labels), cfg.members, cfg.per_label_f1)
    elapsed = time.perf_counter() - start
    report(2, mismatches == 0 and elapsed < 5, f"{checked} tuples, {mismatches} disagreements, {elapsed:.2f}s")


# -- 3. strict majority and unanimity

def test_criterion_3_majority_invariants(report):
    rnd = random.Random(3)
    violations = 0
    for trial in range(10_000):
        m, k = rnd.randint(2, 7), rnd.randint(2, 5)
        cfg = vote_config(m, k if rnd.random() < 0.5 else None, seed=trial, quantized=rnd.random() < 0.5)
        labels = [rnd.randrange(k) for _ in range(m)]
        chosen = vote(labels, cfg).chosen
        for label in set(labels):
            if labels.count(label) > m / 2 and chosen != label:
                violations += 1
        if vote([labels[0]] * m, cfg).chosen != labels[0]:
            violations += 1
    report(3, violations == 0, f"10000 random vote tuples, {violations} violations")


# -- 4. metrics fixtures

def test_criterion_4_metrics(report):
    space = LabelSpace(("A", "B", "C"))
    r = evalkit.evaluate([0, 0, 1, 1, 2], [0, 1, 1, 1, 2], space)
    fixture = abs(r.macro_f1 - 0.8222) <= 1e-4 and abs(r.weighted_f1 - 0.7867) <= 1e-4 and abs(r.micro_f1 - 0.8) <= 1e-4
    rng = np.random.default_rng(4)
    micro_mismatch = 0
    for _ in range(1000):
        k = int(rng.integers(2, 7))
        n = int(rng.integers(1, 80))
        rep = evalkit.evaluate(rng.integers(0, k, n), rng.integers(0, k, n), LabelSpace(tuple(map(str, range(k)))))
        micro_mismatch += abs(rep.micro_f1 - rep.accuracy) > 1e-12
    perfect = evalkit.evaluate([0, 1, 2, 2], [0, 1, 2, 2], space)
    ones = all(v == 1.0 for v in (perfect.macro_f1, perfect.micro_f1, perfect.weighted_f1, perfect.accuracy, *perfect.f1))
    report(4, fixture and micro_mismatch == 0 and ones,
           f"macro {r.macro_f1:.4f}, weighted {r.weighted_f1:.4f}, micro {r.micro_f1:.4f}; "
           f"micro != accuracy on {micro_mismatch}/1000; perfect all-ones {ones}")


# -- 5. k-fold contract

def kfold_violations(examples, k, seed, stratify):
    folds = corpus.kfold_partitions(examples, k, seed=seed, stratify=stratify)
    problems = []
    tests = [[e.id for e in t] for _, t in folds]
    flat = [i for t in tests for i in t]
    if sorted(flat) != sorted(e.id for e in examples) or len(set(flat)) != len(flat):
        problems.append("not a disjoint cover")
    for train, test in folds:
        if {e.id for e in train} & {e.id for e in test} or len(train) + len(test) != len(examples):
            problems.append("train is not the complement")
    sizes = [len(t) for t in tests]
    if max(sizes) - min(sizes) > 1:
        problems.append(f"fold sizes {sizes}")
    if stratify:
        for label in {e.label for e in examples}:
            per = [sum(e.label == label for e in t) for _, t in folds]
            if max(per) - min(per) > 1:
                problems.append(f"class {label} sizes {per}")
    again = corpus.kfold_partitions(examples, k, seed=seed, stratify=stratify)
    if [[e.id for e in t] for _, t in again] != tests:
        problems.append("not deterministic")
    return problems


def test_criterion_5_kfold_contract(report):
    rnd = random.Random(5)
    checked, failures = 0, []
    for n in range(10, 201):
        k = rnd.randint(2, min(10, n // 2))
        n_classes = rnd.randint(1, max(1, min(4, n // k)))
        # every class gets at least k members so stratification is feasible
        cuts = sorted(rnd.sample(range(1, n - n_classes * k + n_classes), n_classes - 1)) if n_classes > 1 else []
        bounds = [0, *cuts, n - n_classes * k + n_classes]
        sizes = [b - a + k - 1 for a, b in zip(bounds, bounds[1:])]
        labels = [c for c, s in enumerate(sizes) for _ in range(s)]
        rnd.shuffle(labels)
        examples = [LabeledExample(i, f"t{i}", lab) for i, lab in enumerate(labels)]
        for stratify in (True, False):
            problems = kfold_violations(examples, k, rnd.randrange(1 << 16), stratify)
            checked += 1
            if problems:
                failures.append((n, k, stratify, problems))
    report(5, not failures, f"{checked} (size, k, stratify) settings over sizes 10-200, {len(failures)} failing {failures[:2]}")


# -- 6. end-to-end synthetic run

def test_criterion_6_end_to_end(report, tmp_path):
    start = time.perf_counter()
    examples, space = synthetic.keyword_corpus(500, n_classes=3, seed=1)
    split = corpus.stratified_split(examples, (0.7, 0.1, 0.2), seed=3)
    write_embeddings(tmp_path / "v.vec", synthetic.random_vectors(synthetic.corpus_vocabulary(3), dim=16, seed=11))
    encoder = models.TextEncoder.fit([e.text for e in split.train], load_embeddings(tmp_path / "v.vec"))
    train, val, test = (encoder.encode(p) for p in (split.train, split.validation, split.test))
    # library defaults throughout: 128 filters or units, lr 1e-3, batch 32, patience 3
    tc = models.TrainConfig(epochs=20)
    accuracy, clfs = {}, {}
    for kind in ("cnn", "lstm", "bilstm", "gru"):
        clfs[kind] = models.train_classifier(train, labels_of(split.train), val, labels_of(split.validation),
                                             models.model_config(kind), tc, space, name=kind)
        pred = clfs[kind].predict(test).labels
        accuracy[kind] = evalkit.evaluate(labels_of(split.test), pred, space).accuracy
    members = [clfs[k] for k in ("cnn", "lstm", "gru")]
    econf = ensemble.derive_priority(members, val, labels_of(split.validation), space)
    _, records = ensemble.ensemble_predict(members, test, econf)
    broken = 0
    for rec in records:
        for label, count in rec.tally.items():
            if count > len(members) / 2 and rec.chosen != label:
                broken += 1
    elapsed = time.perf_counter() - start
    ok = all(a >= 0.95 for a in accuracy.values()) and broken == 0 and elapsed < 120
    detail = ", ".join(f"{k} {a:.3f}" for k, a in accuracy.items())
    report(6, ok, f"test accuracy ({detail}); ensemble majority violations {broken}/{len(records)}; {elapsed:.1f}s")


# -- 7. dictionary fidelity

def test_criterion_7_dictionary_fidelity(report):
    canonical = {"chờiiii": "trời", "vklllll": "vkl", "chetme": "chết mẹ", "kbh": "không bao giờ"}
    d = NormalizationDictionary.builtin()
    got = {v: " ".join(apply_dictionary([v], d)) for v in canonical}
    report(7, got == canonical, f"{sum(got[v] == c for v, c in canonical.items())}/4 variants map to their canonical forms")


# -- 8. determinism

def run_pipeline(root):
    config = write_project(root)
    cfg = cli.load_config(config, env={})
    cli.cmd_train(cfg)
    cli.cmd_ensemble(cfg)
    out = root / "out" / "ensemble"
    return {name: (out / name).read_bytes() for name in ("predictions.tsv", "votes.jsonl", "ensemble_config.json")}


def test_criterion_8_determinism(report, tmp_path):
    first, second = run_pipeline(tmp_path / "a"), run_pipeline(tmp_path / "b")
    same = [name for name in first if first[name] == second[name]]
    report(8, len(same) == len(first), f"identical across two train+ensemble runs: {same}")


# -- 9. external member splice

def test_criterion_9_external_splice(report, tmp_path):
    config = write_project(tmp_path)
    cfg = cli.load_config(config, env={})
    cli.cmd_train(cfg)
    run = cli.Run(cfg)
    names = run.label_space.labels
    rnd = random.Random(9)
    rows = {ex.id: rnd.choice(names) for ex in run.split.validation + run.split.test}
    (tmp_path / "bert.tsv").write_text("# fine-tuned elsewhere\n" + "".join(f"{i}\t{l}\n" for i, l in rows.items()),
                                       encoding="utf-8")
    raw = json.loads(config.read_text(encoding="utf-8"))
    raw["ensemble"] = {"members": ["cnn", "lstm", "bert"], "external": {"bert": "bert.tsv"}}
    config.write_text(json.dumps(raw), encoding="utf-8")
    cfg = cli.load_config(config, env={})
    rep = cli.cmd_ensemble(cfg)
    out = tmp_path / "out" / "ensemble"
    votes = [json.loads(l) for l in (out / "votes.jsonl").read_text(encoding="utf-8").splitlines()]
    verbatim = sum(v["members"]["bert"] == rows[v["id"]] for v in votes)
    evaluated = (out / "report.json").is_file() and 0.0 <= rep.weighted_f1 <= 1.0
    report(9, verbatim == len(votes) == len(run.split.test) and evaluated,
           f"external labels verbatim in {verbatim}/{len(votes)} audit records; evaluation written {evaluated}")
