import numpy as np
import pytest

from milqt import diffcore as dc
from milqt import gen_synthetic
from milqt.data import DataError, write_dataset, load_dataset
from milqt.diffcore import Tensor, backward
from milqt.model import make_batch
from milqt.prior import PriorMatrix
from milqt.trainer import (
    CheckpointMismatchError,
    DivergenceError,
    OptimizerState,
    Prediction,
    adamax_step,
    adamax_update,
    clip_global_norm,
    evaluate,
    init_model,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)


def test_adamax_zero_gradient_is_noop():
    theta = np.array([1.0, -2.0])
    out, m, u = adamax_update(theta, np.zeros(2), np.zeros(2), np.zeros(2), 1, 0.1)
    np.testing.assert_array_equal(out, theta)
    assert not m.any() and not u.any()


def test_adamax_first_step():
    theta, m, u = adamax_update(np.zeros(1), np.ones(1), np.zeros(1), np.zeros(1), 1, 0.1)
    assert m[0] == pytest.approx(0.1, abs=1e-15)
    assert u[0] == 1.0
    assert theta[0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-14)


def test_adamax_minimises_quadratic():
    x = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    state = OptimizerState()
    losses = []
    for _ in range(300):
        x.grad = None
        loss = dc.reduce_sum(dc.mul(x, x))
        losses.append(loss.item())
        backward(loss)
        adamax_step({"x": x}, {"x": x.grad}, state, 0.05)
    assert losses[-1] < 1e-2 * losses[0]
    assert state.t == 300


def test_clip_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_global_norm(grads, 1.0) == 5.0
    assert np.hypot(grads["a"][0], grads["b"][0]) == pytest.approx(1.0)
    small = {"a": np.array([0.1])}
    clip_global_norm(small, 1.0)
    assert small["a"][0] == 0.1


def test_training_is_deterministic(toy_config, toy_bundle, tmp_path):
    train(toy_config, toy_bundle, tmp_path / "a")
    train(toy_config, toy_bundle, tmp_path / "b")
    for f in sorted((tmp_path / "a" / "checkpoint" / "tensors").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / "checkpoint" / "tensors" / f.name).read_bytes()
    assert (tmp_path / "a" / "train.log").read_text() == (tmp_path / "b" / "train.log").read_text()


def test_training_writes_artifacts(toy_config, toy_bundle, tmp_path):
    train(toy_config.replace(epochs=2, log_every=1), toy_bundle, tmp_path)
    assert (tmp_path / "checkpoints" / "epoch_001" / "manifest.json").exists()
    assert (tmp_path / "checkpoints" / "epoch_002" / "manifest.json").exists()
    assert (tmp_path / "checkpoint" / "prior.csv").exists()
    assert (tmp_path / "w_mil.csv").read_text().startswith("qtype,hyp0_topdown,hyp1_stacked2")
    assert len((tmp_path / "train.log").read_text().splitlines()) == 4


def test_qtype_only_loss_leaves_other_params(toy_config, toy_bundle):
    cfg = toy_config.replace(alpha=(0.0, 0.0, 1.0), epochs=2)
    before = {k: v.values.copy() for k, v in init_model(cfg, toy_bundle).parameters().items()}
    after = train(cfg, toy_bundle).model.parameters()
    for name, value in before.items():
        changed = not np.array_equal(value, after[name].values)
        assert changed == (name.split(".")[0] in ("embed", "gru", "qt")), name


def test_stop_gradient_blocks_head_path(toy_config, toy_bundle):
    # only the answer loss contributes
    for stop, expect_zero in ((False, False), (True, True)):
        cfg = toy_config.replace(alpha=(0.0, 1.0, 0.0), stop_gradient_h=stop)
        model = init_model(cfg, toy_bundle)
        breakdown, _ = model.loss(make_batch(toy_bundle, range(len(toy_bundle))))
        backward(breakdown.total)
        g = model.head.w2.grad
        assert (g is None or not g.any()) == expect_zero


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises(toy_config, toy_bundle):
    with pytest.raises(DivergenceError):
        train(toy_config.replace(learning_rate=float("inf"), epochs=3), toy_bundle)


def test_eval_counts_match_histogram(toy_config, toy_bundle):
    model = train(toy_config, toy_bundle).model
    report = evaluate(model, toy_bundle)
    hist = np.bincount(toy_bundle.qtype_labels(), minlength=toy_bundle.P)
    assert report.counts == dict(zip(toy_bundle.qtype_names, hist.tolist()))


def test_uniform_prior_makes_weighting_irrelevant(toy_config, toy_bundle):
    model = train(toy_config, toy_bundle).model
    model.prior = PriorMatrix.uniform(toy_bundle.qtype_names, toy_bundle.answer_names)
    on = evaluate(model, toy_bundle)
    model.config = model.config.replace(prior=False)
    assert evaluate(model, toy_bundle) == on


def test_untrained_model_is_at_chance(toy_config):
    bundle = gen_synthetic(8, 1000, 3, 6, 4, 8, split="test")
    cfg = toy_config.replace(d_w=8, d_h=8, d_f=8, rank=4, hypotheses=("topdown", "bilinear_lowrank"))
    accs = [evaluate(init_model(cfg.replace(seed=s), bundle), bundle).overall_accuracy for s in range(12)]
    assert abs(np.mean(accs) - 1 / 6) <= 0.05


def test_checkpoint_round_trip(toy_config, toy_bundle, tmp_path):
    model = train(toy_config, toy_bundle).model
    save_checkpoint(model, tmp_path / "ck")
    loaded = load_checkpoint(tmp_path / "ck")
    assert evaluate(loaded, toy_bundle) == evaluate(model, toy_bundle)
    assert loaded.prior.equals(model.prior)
    for name, p in model.parameters().items():
        assert p.values.tobytes() == loaded.parameters()[name].values.tobytes()


def test_checkpoint_mismatch(toy_config, toy_bundle, tmp_path):
    model = init_model(toy_config, toy_bundle)
    other = gen_synthetic(11, 6, 3, 6, 4, 5)
    with pytest.raises(CheckpointMismatchError):
        evaluate(model, other)
    wide = gen_synthetic(11, 6, 3, 5, 4, 7)
    with pytest.raises(CheckpointMismatchError):
        evaluate(model, wide)
    with pytest.raises(CheckpointMismatchError):
        load_checkpoint(tmp_path)


def test_evaluation_leaves_parameters(toy_config, toy_bundle):
    model = init_model(toy_config, toy_bundle)
    before = {k: v.values.copy() for k, v in model.parameters().items()}
    evaluate(model, toy_bundle)
    for k, v in model.parameters().items():
        np.testing.assert_array_equal(v.values, before[k])


def test_predict_lines_round_trip(toy_config, toy_bundle):
    model = train(toy_config, toy_bundle).model
    preds = predict(model, toy_bundle, top_k=3)
    assert [p.id for p in preds] == [s.id for s in toy_bundle.samples]
    for p in preds:
        back = Prediction.from_line(p.to_line())
        assert back == p
        assert back.answer == back.top[0][0] and len(back.top) == 3
        assert back.qtype in toy_bundle.qtype_names


def test_predict_reports_missing_features(toy_config, toy_bundle, tmp_path):
    model = init_model(toy_config, toy_bundle)
    write_dataset(toy_bundle, tmp_path / "d.tsv", feature_path="d.features.txt")
    lines = (tmp_path / "d.tsv").read_text().splitlines()
    fields = lines[2].split("\t")
    fields[4] = "d.features.txt#99"
    lines[2] = "\t".join(fields)
    (tmp_path / "d.tsv").write_text("\n".join(lines) + "\n")
    bundle = load_dataset(tmp_path / "d.tsv")
    preds = predict(model, bundle)
    assert preds[2].error is not None and "99" in preds[2].error
    assert Prediction.from_line(preds[2].to_line()).error == preds[2].error
    assert all(p.error is None for i, p in enumerate(preds) if i != 2)
    with pytest.raises(DataError):
        evaluate(model, bundle)
