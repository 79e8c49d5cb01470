import json

import numpy as np
import pytest

from conftest import make_dataset
from i2drnn.datagen import Sample, SequenceDataset
from i2drnn.model import (ARCH_I2DRNN, ARCH_STACKED, ModelConfig, forward_sample,
                          forward_sequence, init_params)
from i2drnn.numerics import Rng
from i2drnn.training import (AdamState, Hyper, TrainingDivergedError,
                             adam_init, adam_step, bptt_gradients,
                             clip_gradients, evaluate, gradient_norm,
                             save_loss_csv, save_report, sequence_loss, train)

REL_TOL = 1e-4
ABS_FLOOR = 1e-8


def finite_difference_check(params, same, targets, coarse=None, fine=None,
                            eps=1e-6):
    """Central finite differences against the analytic gradients, every entry."""
    trace = forward_sample(params, same, coarse, fine)
    grads = bptt_gradients(params, trace, targets)
    for name, arr in params.named_arrays():
        _, g = next((n, a) for n, a in grads.named_arrays() if n == name)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            up = sequence_loss(
                forward_sample(params, same, coarse, fine).outputs, targets)
            arr[idx] = orig - eps
            dn = sequence_loss(
                forward_sample(params, same, coarse, fine).outputs, targets)
            arr[idx] = orig
            want = (up - dn) / (2.0 * eps)
            got = g[idx]
            denom = max(abs(want), abs(got), ABS_FLOOR)
            assert abs(want - got) / denom <= REL_TOL or \
                abs(want - got) <= ABS_FLOOR, \
                f"{name}{idx}: analytic {got} vs numeric {want}"


def test_sequence_loss_hand_value():
    out = np.array([[1.0, 2.0], [0.0, -1.0]])
    tgt = np.array([[0.0, 2.0], [1.0, 1.0]])
    # (1-0)^2 + (2-2)^2 + (0-1)^2 + (-1-1)^2 = 1 + 0 + 1 + 4
    assert sequence_loss(out, tgt) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        sequence_loss(out, tgt[:1])


class TestGradients:
    def test_hierarchical_two_layer(self):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(3, 2), input_dim=2,
                          output_dim=2)
        p = init_params(cfg, Rng(10))
        r = Rng(11)
        finite_difference_check(p, r.split("x").normal((5, 2)),
                                r.split("y").normal((5, 2)))

    def test_stacked_three_layer(self):
        cfg = ModelConfig(arch=ARCH_STACKED, layer_dims=(2, 3, 2), input_dim=2,
                          output_dim=1)
        p = init_params(cfg, Rng(12))
        r = Rng(13)
        finite_difference_check(p, r.split("x").normal((4, 2)),
                                r.split("y").normal((4, 1)))

    def test_single_layer(self):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(4,), input_dim=3,
                          output_dim=2)
        p = init_params(cfg, Rng(14))
        r = Rng(15)
        finite_difference_check(p, r.split("x").normal((6, 3)),
                                r.split("y").normal((6, 2)))

    def test_encoder_path(self):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(3,), input_dim=4,
                          output_dim=1, encoder_dim=2, fine_dim=2)
        p = init_params(cfg, Rng(16))
        r = Rng(17)
        finite_difference_check(p, r.split("x").normal((3, 1)),
                                r.split("y").normal((3, 1)),
                                coarse=r.split("c").normal((3, 1)),
                                fine=r.split("f").normal((3, 4, 2)))

    def test_nonzero_initial_state(self):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(2, 2), input_dim=2,
                          output_dim=1)
        p = init_params(cfg, Rng(18))
        r = Rng(19)
        X = r.split("x").normal((3, 2))
        Y = r.split("y").normal((3, 1))
        init = [r.split("i1").normal(2), r.split("i2").normal(2)]
        trace = forward_sequence(p, X, init=init)
        grads = bptt_gradients(p, trace, Y)
        eps = 1e-6
        arr = p.rec[(2, 1)]
        arr[0, 0] += eps
        up = sequence_loss(forward_sequence(p, X, init=init).outputs, Y)
        arr[0, 0] -= 2 * eps
        dn = sequence_loss(forward_sequence(p, X, init=init).outputs, Y)
        arr[0, 0] += eps
        want = (up - dn) / (2 * eps)
        assert grads.rec[(2, 1)][0, 0] == pytest.approx(want, rel=REL_TOL)


class TestAdam:
    def test_single_step_closed_form(self):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(2,), input_dim=1,
                          output_dim=1)
        p = init_params(cfg, Rng(0))
        g = p.zeros_like()
        for _, arr in g.named_arrays():
            arr[...] = 0.5
        before = {n: a.copy() for n, a in p.named_arrays()}
        hyper = Hyper(step_size=0.01, beta1=0.9, beta2=0.999, eps=1e-8)
        state = adam_init(p)
        adam_step(p, g, state, hyper)
        # first step: m_hat = g, v_hat = g^2, update = lr * g/(|g|+eps)
        for n, arr in p.named_arrays():
            want = before[n] - 0.01 * 0.5 / (0.5 + 1e-8)
            np.testing.assert_allclose(arr, want, atol=1e-12)
        assert state.t == 1

    def test_two_steps_track_moments(self):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(1,), input_dim=1,
                          output_dim=1)
        p = init_params(cfg, Rng(1))
        hyper = Hyper(step_size=0.1)
        state = adam_init(p)
        m = v = 0.0
        x = float(p.feed[1][0, 0])
        for t, gval in enumerate((0.3, -0.2), start=1):
            g = p.zeros_like()
            g.feed[1][0, 0] = gval
            adam_step(p, g, state, hyper)
            m = 0.9 * m + 0.1 * gval
            v = 0.999 * v + 0.001 * gval * gval
            mh = m / (1 - 0.9 ** t)
            vh = v / (1 - 0.999 ** t)
            x -= 0.1 * mh / (np.sqrt(vh) + 1e-8)
        assert p.feed[1][0, 0] == pytest.approx(x, abs=1e-12)


class TestClipping:
    def test_noop_below_threshold(self):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(2,), input_dim=1,
                          output_dim=1)
        g = init_params(cfg, Rng(2)).zeros_like()
        g.feed[1][0, 0] = 3.0
        assert clip_gradients(g, 5.0) == 1.0
        assert g.feed[1][0, 0] == 3.0

    def test_scales_to_threshold(self):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(2,), input_dim=1,
                          output_dim=1)
        g = init_params(cfg, Rng(2)).zeros_like()
        g.feed[1][:, 0] = [3.0, 4.0]  # norm 5
        scale = clip_gradients(g, 1.0)
        assert scale == pytest.approx(0.2)
        assert gradient_norm(g) == pytest.approx(1.0)

    def test_disabled_with_zero(self):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(2,), input_dim=1,
                          output_dim=1)
        g = init_params(cfg, Rng(2)).zeros_like()
        g.feed[1][0, 0] = 100.0
        assert clip_gradients(g, 0.0) == 1.0
        assert g.feed[1][0, 0] == 100.0


def constant_echo_dataset():
    """Inputs equal targets: learnable by a readout in a few steps."""
    r = Rng(21)
    xs = r.normal((10, 30, 1)) * 0.5
    samples = [Sample(same=x, targets=x) for x in xs]
    return SequenceDataset(samples=samples, train_idx=list(range(7)),
                           val_idx=[7], test_idx=[8, 9])


class TestTrain:
    def test_loss_decreases(self):
        ds = constant_echo_dataset()
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(4,), input_dim=1,
                          output_dim=1)
        _, report = train(ds, cfg, Hyper(max_epochs=30, patience=30), Rng(31))
        assert report.train_losses[-1] < report.train_losses[0]
        assert report.best_val_loss <= report.val_losses[0]

    def test_early_stopping_respects_patience(self):
        ds = constant_echo_dataset()
        cfg = ModelConfig(arch=ARCH_STACKED, layer_dims=(2,), input_dim=1,
                          output_dim=1)
        _, report = train(ds, cfg, Hyper(max_epochs=500, patience=3,
                                         step_size=0.5), Rng(32))
        assert report.epochs_run < 500
        # after the best epoch, no more than patience+1 further epochs ran
        assert report.epochs_run - (report.best_epoch + 1) <= 4

    def test_deterministic(self):
        ds = constant_echo_dataset()
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(3,), input_dim=1,
                          output_dim=1)
        p1, r1 = train(ds, cfg, Hyper(max_epochs=5, patience=5), Rng(33))
        p2, r2 = train(ds, cfg, Hyper(max_epochs=5, patience=5), Rng(33))
        assert r1.train_losses == r2.train_losses
        for (_, a), (_, b) in zip(p1.named_arrays(), p2.named_arrays()):
            np.testing.assert_array_equal(a, b)

    def test_update_every_epoch_mode(self):
        ds = constant_echo_dataset()
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(3,), input_dim=1,
                          output_dim=1)
        _, report = train(ds, cfg, Hyper(max_epochs=10, patience=10,
                                         update_every="epoch"), Rng(34))
        assert report.train_losses[-1] < report.train_losses[0]

    def test_resume_continues_epoch_numbering(self):
        ds = constant_echo_dataset()
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(2,), input_dim=1,
                          output_dim=1)
        p1, r1 = train(ds, cfg, Hyper(max_epochs=4, patience=4), Rng(35))
        p2, r2 = train(ds, cfg, Hyper(max_epochs=4, patience=4), Rng(35),
                       init=p1, start_epoch=r1.epochs_run)
        assert r2.start_epoch == 4
        assert r2.best_epoch >= 4
        assert r2.val_losses[-1] <= r1.val_losses[0]

    def test_divergence_raises(self):
        ds = constant_echo_dataset()
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(2,), input_dim=1,
                          output_dim=1)
        bad = init_params(cfg, Rng(36))
        bad.out[1][...] = np.nan
        with pytest.raises(TrainingDivergedError):
            train(ds, cfg, Hyper(max_epochs=2, patience=2), Rng(36), init=bad)

    def test_empty_train_split_rejected(self):
        ds = constant_echo_dataset()
        ds.train_idx = []
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(2,), input_dim=1,
                          output_dim=1)
        with pytest.raises(ValueError):
            train(ds, cfg, Hyper(max_epochs=1), Rng(37))


class TestEvaluate:
    def test_perfect_model_scores_zero(self):
        # readout-only identity: one unit passes tanh(x) through, target tanh
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(1,), input_dim=1,
                          output_dim=1)
        p = init_params(cfg, Rng(40))
        p.feed[1][...] = 1.0
        p.rec[(1, 1)][...] = 0.0
        p.bias[1][...] = 0.0
        p.out[1][...] = 1.0
        x = np.linspace(-1, 1, 9).reshape(-1, 1)
        ds = make_dataset(x, np.tanh(x))
        m = evaluate(p, ds, "test")
        assert m["rmse"] == pytest.approx(0.0, abs=1e-12)
        assert m["mae"] == pytest.approx(0.0, abs=1e-12)
        assert m["steps"] == 9

    def test_rmse_mae_hand_values(self):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(1,), input_dim=1,
                          output_dim=1)
        p = init_params(cfg, Rng(41))
        for _, arr in p.named_arrays():
            arr[...] = 0.0
        x = np.zeros((4, 1))
        y = np.array([[1.0], [-1.0], [2.0], [0.0]])
        ds = make_dataset(x, y)
        m = evaluate(p, ds, "test")  # predictions all zero
        assert m["rmse"] == pytest.approx(np.sqrt(6.0 / 4.0))
        assert m["mae"] == pytest.approx(1.0)

    def test_adjusted_mse_requires_metadata(self, tiny_copy_dataset):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(2,), input_dim=2,
                          output_dim=2)
        p = init_params(cfg, Rng(42))
        m = evaluate(p, tiny_copy_dataset, "test")
        assert "adjusted_mse" in m  # t1 == t2 so the gap length is recorded
        factor = (3 + 2) / (3 + 2 + 2)
        assert m["adjusted_mse"] == pytest.approx(m["rmse"] ** 2 / factor)

    def test_adjusted_mse_absent_without_metadata(self):
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(1,), input_dim=1,
                          output_dim=1)
        p = init_params(cfg, Rng(44))
        ds = make_dataset(np.zeros((4, 1)), np.zeros((4, 1)))
        assert "adjusted_mse" not in evaluate(p, ds, "test")

    def test_empty_split_rejected(self):
        ds = make_dataset(np.zeros((3, 1)), np.zeros((3, 1)))
        ds.val_idx = []
        cfg = ModelConfig(arch=ARCH_I2DRNN, layer_dims=(1,), input_dim=1,
                          output_dim=1)
        p = init_params(cfg, Rng(43))
        with pytest.raises(ValueError):
            evaluate(p, ds, "val")


class TestReports:
    def test_report_json_excludes_timing_by_default(self, tmp_path):
        from i2drnn.training import TrainReport
        rep = TrainReport(train_losses=[1.0, 0.5], val_losses=[1.1, 0.6],
                          best_epoch=1, best_val_loss=0.6, wall_time=123.0)
        save_report(rep, tmp_path / "r.json")
        doc = json.loads((tmp_path / "r.json").read_text())
        assert "wall_time_seconds" not in doc
        assert doc["best_epoch"] == 1
        save_report(rep, tmp_path / "rt.json", include_timing=True)
        assert "wall_time_seconds" in json.loads((tmp_path / "rt.json").read_text())

    def test_loss_csv_rows(self, tmp_path):
        from i2drnn.training import TrainReport
        rep = TrainReport(train_losses=[0.25, 0.125], val_losses=[0.3, 0.2],
                          start_epoch=10)
        save_loss_csv(rep, tmp_path / "l.csv")
        lines = (tmp_path / "l.csv").read_text().strip().splitlines()
        assert lines[0] == "epoch,loss"
        assert lines[1] == "10,0.25"
        assert lines[2] == "11,0.125"
