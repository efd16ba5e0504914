"""End-to-end acceptance checks, one test per criterion.

Each test records a ``criterion N: PASS|FAIL`` line; the lines are printed
in the terminal summary. Run directly (``python tests/test_acceptance.py``)
to get only those lines.
"""

import json
import math
import time

import numpy as np
import pytest

from milqt import SynthRule, TrainConfig, gen_synthetic, load_dataset, write_dataset
from milqt.data import DatasetBundle, SampleRecord, Vocabulary
from milqt.diffcore import Tensor, check_gradients
from milqt.interaction import InteractionWeights, mix
from milqt.losses import vqa_loss, weight_targets
from milqt.metrics import build_report, mpt
from milqt.model import make_batch
from milqt.prior import PriorMatrix, awareness, compute_prior, export_prior, import_prior
from milqt.trainer import evaluate, init_model, load_checkpoint, readout, save_checkpoint, train

RESULTS: list[str] = []


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _bundle(qtypes, answers, P, A):
    vocab = Vocabulary(["q"])
    feats = np.zeros((2, 2))
    samples = [SampleRecord(f"s{i}", "q", (2,), int(p), ((int(a), 1.0),), None, feats)
               for i, (p, a) in enumerate(zip(qtypes, answers))]
    return DatasetBundle(samples, vocab, [f"a{a}" for a in range(A)], [f"t{p}" for p in range(P)], max_q_len=1)


def _counting_oracle(qtypes, answers, P, A):
    out = np.empty((P, A))
    for a in range(A):
        column = [sum(1 for q, x in zip(qtypes, answers) if q == p and x == a) for p in range(P)]
        total = sum(column)
        for p in range(P):
            out[p, a] = column[p] / total if total else 1.0 / P
    return out


def test_criterion_1_prior_oracle():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    mismatches, worst_sum = 0, 0.0
    for _ in range(100):
        P, A = int(rng.integers(2, 5)), int(rng.integers(2, 9))
        Q = int(rng.integers(1, 51))
        qt, ans = rng.integers(0, P, Q).tolist(), rng.integers(0, A, Q).tolist()
        m = compute_prior(_bundle(qt, ans, P, A)).m
        mismatches += not np.array_equal(m, _counting_oracle(qt, ans, P, A))
        worst_sum = max(worst_sum, float(np.abs(m.sum(axis=0) - 1).max()))
    elapsed = time.perf_counter() - start
    record(1, mismatches == 0 and worst_sum <= 1e-12 and elapsed < 5,
           f"mismatches={mismatches}/100 max|colsum-1|={worst_sum:.1e} time={elapsed:.2f}s")


def test_criterion_2_worked_examples():
    errs = {}
    prior = PriorMatrix(np.array([[0.6, 0.5, 0.4], [0.4, 0.5, 0.6]]), ["a", "b"], ["x", "y", "z"])
    errs["awareness"] = np.abs(awareness(Tensor([1.0, 0.0]), prior).values - [0.6, 0.5, 0.4]).max()
    y_hat, _ = weight_targets(Tensor([0.6, 0.5, 0.4]), Tensor([0.0, 1.0, 0.0]), Tensor(np.zeros(3)))
    errs["weighted target"] = np.abs(y_hat.values - [0, 0.5, 0]).max()
    # the quoted 0.693147 is ln 2 to six places
    errs["soft bce"] = abs(vqa_loss(Tensor([[1.0]]), Tensor([[0.0]])).item() - math.log(2.0))
    eye = PriorMatrix(np.eye(2), ["a", "b"], ["x", "y"])
    rho = mix(Tensor([[0.8, 0.2], [0.1, 0.9]]), InteractionWeights(Tensor(np.eye(2))), eye)
    errs["mix"] = np.abs(rho.values - [0.8, 0.9]).max()
    ok = all(e <= 1e-9 for e in errs.values())
    record(2, ok, " ".join(f"{k}={e:.1e}" for k, e in errs.items()))


@pytest.mark.parametrize("kinds", [("topdown", "bilinear_lowrank"), ("stacked2", "topdown")])
def test_criterion_3_full_graph_gradients(kinds):
    start = time.perf_counter()
    bundle = gen_synthetic(5, 4, 3, 5, 4, 3)
    cfg = TrainConfig(seed=1, d_w=3, d_h=4, d_f=6, rank=3, hypotheses=kinds)
    model = init_model(cfg, bundle)
    rng = np.random.default_rng(9)
    for p in model.parameters().values():
        p._assign(p.values + rng.normal(0, 0.3, size=p.shape))
    batch = make_batch(bundle, range(len(bundle)))
    res = check_gradients(lambda: model.loss(batch)[0].total, model.parameters())
    elapsed = time.perf_counter() - start
    record(3, res.max_rel_error < 1e-4 and elapsed < 60,
           f"{'+'.join(kinds)}: max_rel={res.max_rel_error:.2e} over {res.n_coords} coords "
           f"time={elapsed:.1f}s")


def test_criterion_4_degeneracy_identities():
    rng = np.random.default_rng(4)
    P, A, failures = 3, 7, []
    uniform = PriorMatrix.uniform([f"t{p}" for p in range(P)], [f"a{a}" for a in range(A)])
    for _ in range(200):
        h = rng.dirichlet(np.ones(P))
        s = rng.uniform(size=A)
        if np.argmax(awareness(Tensor(h), uniform).values * s) != np.argmax(s):
            failures.append("argmax")
        g = rng.normal(size=(A, 1))
        prior = PriorMatrix(rng.dirichlet(np.ones(P), size=A).T, uniform.qtype_names, uniform.answer_names)
        # unit gate equals the prior's column sums, which are 1 only up to rounding
        rho = mix(Tensor(g), InteractionWeights(Tensor(np.ones((P, 1)))), prior).values
        if np.abs(rho - g[:, 0]).max() > 4 * np.finfo(float).eps * np.abs(g).max():
            failures.append("single hypothesis gate")
        y, logits = rng.uniform(size=(2, A)), rng.normal(0, 3, size=(2, A))
        y_hat, g_hat = weight_targets(Tensor(np.ones((2, A))), Tensor(y), Tensor(logits))
        if vqa_loss(y_hat, g_hat).item() != vqa_loss(Tensor(y), Tensor(logits)).item():
            failures.append("unit weighting")
    # a one-hypothesis model passes its logits through untouched
    bundle = gen_synthetic(1, 20, 3, 5, 4, 3)
    model = init_model(TrainConfig(seed=0, d_w=3, d_h=4, d_f=5, rank=2, hypotheses=("topdown",)), bundle)
    out = model.forward(make_batch(bundle, range(len(bundle))))
    if not np.array_equal(out.rho.values, out.hyps[0].logits.values):
        failures.append("single hypothesis model")
    record(4, not failures, f"601 checks, failures={sorted(set(failures)) or 'none'}")


def test_criterion_5_synthetic_learnability():
    start = time.perf_counter()
    tr = gen_synthetic(7, 2000, 3, 6, 4, 8)
    te = gen_synthetic(8, 1000, 3, 6, 4, 8, split="test")
    acc = {}
    for prior in (True, False):
        cfg = TrainConfig(seed=0, epochs=30, prior=prior, fusion="EWM", log_every=10_000)
        acc[prior] = evaluate(train(cfg, tr).model, te).overall_accuracy
    elapsed = time.perf_counter() - start
    record(5, acc[True] >= 0.95 and acc[True] >= acc[False] and elapsed < 600,
           f"prior on={acc[True]:.4f} prior off={acc[False]:.4f} time={elapsed:.0f}s")


SPECIALIZATION_ORACLE = {"type0": "hyp0_topdown", "type1": "hyp1_bilinear_lowrank", "type2": "hyp0_topdown"}


def test_criterion_6_interaction_specialization():
    # type1 plants its signal in dims 4-7, seen only by the second hypothesis
    rule = SynthRule(dim_offsets=(0, 4, 0))
    matched, learned_ok, parts = [], [], []
    for seed in range(3):
        tr = gen_synthetic(100 + seed, 900, 3, 6, 4, 8, rule)
        te = gen_synthetic(200 + seed, 600, 3, 6, 4, 8, rule, split="test")
        cfg = TrainConfig(seed=seed, epochs=15, hypotheses=("topdown", "bilinear_lowrank"),
                          hypothesis_views=((0, 1, 2, 3), (4, 5, 6, 7)), log_every=10_000)
        model = train(cfg, tr).model
        table = readout(model)
        hits = sum(max(row, key=row.get) == SPECIALIZATION_ORACLE[q] for q, row in table.items())
        learned = evaluate(model, te).overall_accuracy
        averaged = evaluate(train(cfg.replace(interaction="averaging"), tr).model, te).overall_accuracy
        matched.append(hits)
        learned_ok.append(learned >= averaged)
        parts.append(f"seed{seed}: {hits}/3 learned={learned:.3f} avg={averaged:.3f}")
    record(6, all(h >= 2 for h in matched) and all(learned_ok), "; ".join(parts))


def test_criterion_7_metrics():
    a, h = mpt([1.0, 0.5])
    rng = np.random.default_rng(7)
    ordered = all(np.subtract(*mpt(rng.uniform(size=int(rng.integers(1, 13))))) >= 0 for _ in range(1000))
    types = rng.integers(0, 3, 300)
    report = build_report(rng.integers(0, 6, 300), rng.integers(0, 3, 300),
                          [[(int(x), 1.0)] for x in rng.integers(0, 6, 300)], types, ["x", "y", "z"])
    reconciled = list(report.counts.values()) == np.bincount(types, minlength=3).tolist()
    record(7, a == 0.75 and abs(h - 2 / 3) <= 1e-4 and ordered and reconciled,
           f"mpt=({a}, {h:.4f}) hm<=am on 1000 draws={ordered} counts reconcile={reconciled}")


def _run_artifacts(tmp, bundle, cfg):
    model = train(cfg, bundle, tmp).model
    export_prior(compute_prior(bundle), tmp / "prior.csv")
    (tmp / "report.json").write_text(evaluate(tmp / "checkpoint", bundle).to_json())
    return model


def test_criterion_8_determinism_and_round_trips(tmp_path):
    bundle = gen_synthetic(3, 40, 3, 5, 4, 6)
    cfg = TrainConfig(seed=2, epochs=2, d_w=4, d_h=5, d_f=6, rank=3, batch_size=8)
    _run_artifacts(tmp_path / "a", bundle, cfg)
    model = _run_artifacts(tmp_path / "b", bundle, cfg)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    differing = [str(f) for f in files if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]

    write_dataset(bundle, tmp_path / "d.tsv", feature_path="d.features.txt")
    back = load_dataset(tmp_path / "d.tsv")
    fields = [(s.id, s.question, s.tokens, s.qtype, s.answer_scores) for s in bundle.samples]
    data_ok = ([(s.id, s.question, s.tokens, s.qtype, s.answer_scores) for s in back.samples] == fields
               and all(np.array_equal(back.visual(i).values, bundle.visual(i).values) for i in range(len(bundle)))
               and back.vocab == bundle.vocab and back.answer_names == bundle.answer_names)
    prior_ok = import_prior(tmp_path / "a" / "prior.csv").equals(compute_prior(bundle))
    save_checkpoint(model, tmp_path / "ck")
    loaded = load_checkpoint(tmp_path / "ck")
    ck_ok = all(p.values.tobytes() == loaded.parameters()[k].values.tobytes()
                for k, p in model.parameters().items())
    ck_ok = ck_ok and json.loads((tmp_path / "ck" / "manifest.json").read_text())["config"] == cfg.to_dict()
    record(8, not differing and data_ok and prior_ok and ck_ok,
           f"{len(files)} files compared, differing={differing or 'none'} dataset={data_ok} "
           f"prior={prior_ok} checkpoint={ck_ok}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
