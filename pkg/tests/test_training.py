import csv
import io
import json
import math

import numpy as np
import pytest

from polytrain.errors import ParameterError
from polytrain.losses import cross_entropy
from polytrain.numeric import SeededRng
from polytrain.training import TrainingConfig, detect_divergence, train, write_run


def small_config(**kw):
    base = dict(
        hidden=[8, 8],
        epochs=3,
        batch_size=32,
        dataset={"kind": "blobs", "n": 400, "classes": 3, "dim": 6, "separation": 6.0},
    )
    base.update(kw)
    return TrainingConfig.from_dict(base)


def rows(report):
    return list(csv.DictReader(io.StringIO(report.to_csv())))


def test_divergence_examples():
    assert not detect_divergence([0.5, 1.2], [np.ones(3)])
    assert detect_divergence([math.inf])
    assert detect_divergence([math.nan])
    assert detect_divergence([0.1], [np.array([1e7])])
    assert not detect_divergence([0.1], [np.array([-1e6])])


def test_config_rejects_unknown_keys_and_modes():
    with pytest.raises(ParameterError):
        TrainingConfig.from_dict({"lamda": 1.0})
    with pytest.raises(ParameterError):
        TrainingConfig(clip_mode="sometimes")


def test_csv_columns_and_loss_identity():
    report, _ = train(small_config(hidden=[8, 8, 8]))
    header = report.to_csv().splitlines()[0].split(",")
    assert header[:8] == [
        "epoch", "train_total_loss", "train_ce_loss", "train_boundary_loss_weighted",
        "val_loss", "val_accuracy", "lr", "grad_norm_preclip",
    ]
    assert header[8:] == ["max_abs_preact_l1", "max_abs_preact_l2", "max_abs_preact_l3", "diverged"]
    for r in rows(report):
        assert float(r["train_total_loss"]) == float(r["train_ce_loss"]) + float(r["train_boundary_loss_weighted"])


def test_epoch_losses_match_independent_recomputation():
    # lr = 0 freezes the model, so each batch loss can be recomputed from the initial weights
    cfg = small_config(lr=0.0, batchnorm=False, epochs=1, bound=0.5, alpha=0.5, lam=3.0)
    report, model = train(cfg)
    from polytrain.training import load_dataset
    from polytrain.losses import boundary_loss

    splits = load_dataset(cfg.dataset, cfg.seed)
    shuffle = SeededRng(cfg.seed).spawn(3)[1]
    order = shuffle.permutation(len(splits.train))
    ce, bnd = [], []
    for i in range(0, len(order), cfg.batch_size):
        idx = order[i : i + cfg.batch_size]
        logits, pre = model.forward(splits.train.x[idx], "eval")
        ce.append(cross_entropy(logits, splits.train.y[idx])[0])
        bnd.append(cfg.lam * sum(boundary_loss(p, cfg.bound, cfg.alpha)[0] for p in pre))
    row = report.epochs[0]
    assert row["train_ce_loss"] == pytest.approx(np.mean(ce), rel=1e-12)
    assert row["train_boundary_loss_weighted"] == pytest.approx(np.mean(bnd), rel=1e-12)
    assert row["train_boundary_loss_weighted"] > 0


def test_boundary_term_zero_inside_threshold():
    cfg = small_config(epochs=4, bound=12.0, alpha=1.0)
    cfg.dataset["scale"] = 0.1
    report, _ = train(cfg)
    assert not report.diverged
    for r in report.epochs:
        assert max(r["max_abs_preact"]) < 12.0
        assert r["train_boundary_loss_weighted"] == 0.0
    assert all(float(r["train_boundary_loss_weighted"]) == 0.0 for r in rows(report))


def test_degree2_without_penalty_learns_easy_blobs():
    cfg = small_config(
        lam=0.0, boundary_loss=False, clip_mode="none", degree=2, epochs=60, hidden=[16, 16],
        dataset={"kind": "blobs", "n": 600, "classes": 3, "dim": 6, "separation": 8.0},
    )
    report, _ = train(cfg)
    assert not report.diverged
    assert max(r["val_accuracy"] for r in report.epochs) >= 0.95


def test_divergence_ends_run_gracefully():
    cfg = small_config(
        degree=8, bound=35.0, alpha=0.5, batchnorm=False, scaled_coeffs=False,
        boundary_loss=False, clip_mode="none", epochs=5,
    )
    cfg.dataset["scale"] = 10.0
    report, _ = train(cfg)
    assert report.diverged
    assert report.test_accuracy is None and report.final_val_accuracy is None
    last = rows(report)[-1]
    assert last["diverged"] == "1" and int(last["epoch"]) == report.divergence_epoch


def test_arms_share_initialization_and_data():
    cfg = small_config(epochs=0)
    models = [train(cfg.with_arm(b, c))[1] for b, c in [(False, "none"), (True, "selective"), (False, "all")]]
    ref = models[0].parameters()
    for m in models[1:]:
        for k, p in m.parameters().items():
            assert p.value.tobytes() == ref[k].value.tobytes()


def test_plateau_lr_reaches_csv():
    cfg = small_config(epochs=8, plateau_patience=1, plateau_min_delta=10.0)
    lrs = [r["lr"] for r in train(cfg)[0].epochs]
    assert lrs[0] == 1e-3 and lrs[-1] < lrs[0]


def test_same_config_gives_identical_csv():
    cfg = small_config(dropout=0.2, epochs=3)
    assert train(cfg)[0].to_csv() == train(cfg)[0].to_csv()


def test_write_run_outputs(tmp_path):
    report, model = train(small_config(epochs=2))
    write_run(report, model, tmp_path)
    assert (tmp_path / "epochs.csv").read_text() == report.to_csv()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["rng"] == "PCG64" and summary["epochs_completed"] == 2
    assert summary["optimizer"]["groups"]["poly_coeff"]["lr"] == pytest.approx(1e-4)
    assert (tmp_path / "model.json").exists() and (tmp_path / "training.png").stat().st_size > 0
