"""Optimizer, learning-rate schedule, and the training loop itself."""

import math

import numpy as np
import pytest
import torch

from mammopos.errors import NonFinite
from mammopos.losses import LawWeights, WingParams, law_loss_torch
from mammopos.models import ModelConfig, ModelVariant, build_model, init_params, load_store
from mammopos.training import (
    AdamState,
    EpochStats,
    TrainConfig,
    adam_step,
    cyclic_lr,
    init_adam,
    train,
    write_history_csv,
)

BASE, MAX = 1e-5, 5e-4


# small enough that a full train() call takes well under a second
TINY = ModelConfig(
    variant=ModelVariant.COORD_ATT_UNET,
    input_size=16,
    base_channels=4,
    depth=2,
    pool_size=4,
)


def tiny_data(n: int, seed: int):
    rng = np.random.default_rng(seed)
    images = rng.random((n, 1, 16, 16), dtype=np.float32)
    targets = rng.uniform(2.0, 14.0, size=(n, 6)).astype(np.float32)
    return images, targets


class TestCyclicLr:
    def test_anchor_points_exact(self):
        s = 40
        assert cyclic_lr(0, s, BASE, MAX) == BASE
        assert cyclic_lr(s, s, BASE, MAX) == MAX
        assert cyclic_lr(2 * s, s, BASE, MAX) == BASE

    def test_stays_inside_band(self):
        s = 17
        for it in range(6 * s + 1):
            lr = cyclic_lr(it, s, BASE, MAX)
            assert BASE <= lr <= MAX, it

    def test_periodic_with_period_two_step_sizes(self):
        s = 23
        for it in range(2 * s):
            assert cyclic_lr(it, s, BASE, MAX) == pytest.approx(
                cyclic_lr(it + 2 * s, s, BASE, MAX), abs=1e-18
            )

    def test_rising_leg_is_linear(self):
        s = 50
        for it in range(s + 1):
            expected = BASE + (MAX - BASE) * it / s
            assert cyclic_lr(it, s, BASE, MAX) == pytest.approx(expected, rel=1e-12)

    def test_triangle_is_symmetric_about_peak(self):
        s = 36
        for off in range(s + 1):
            up = cyclic_lr(s - off, s, BASE, MAX)
            down = cyclic_lr(s + off, s, BASE, MAX)
            assert up == pytest.approx(down, rel=1e-12)

    def test_midpoint_halfway(self):
        s = 10
        assert cyclic_lr(5, s, BASE, MAX) == pytest.approx((BASE + MAX) / 2, rel=1e-12)

    def test_rejects_bad_step_size(self):
        with pytest.raises(ValueError):
            cyclic_lr(0, 0, BASE, MAX)


class TestAdamStep:
    def test_zero_gradient_leaves_parameters_alone(self):
        p = torch.tensor([1.0, -2.0, 3.0])
        params = {"p": p}
        state = init_adam(params)
        adam_step(params, {"p": torch.zeros(3)}, state, lr=0.1)
        assert torch.equal(p, torch.tensor([1.0, -2.0, 3.0]))
        assert state.step == 1

    def test_missing_gradient_skips_parameter(self):
        p = torch.tensor([4.0])
        q = torch.tensor([4.0])
        params = {"p": p, "q": q}
        state = init_adam(params)
        adam_step(params, {"p": torch.ones(1)}, state, lr=0.1)
        assert torch.equal(q, torch.tensor([4.0]))
        assert not torch.equal(p, torch.tensor([4.0]))

    def test_first_step_moves_by_roughly_lr(self):
        # after bias correction m_hat = g, v_hat = g^2, so the step is
        # -lr * g / (|g| + eps): magnitude ~lr regardless of gradient scale
        # (eps shaves off up to eps/|g| relative, 1e-5 at the smallest g here)
        for g in (1.0, 100.0, 1e-3):
            p = torch.tensor([0.0])
            state = init_adam({"p": p})
            adam_step({"p": p}, {"p": torch.tensor([g])}, state, lr=0.1)
            assert float(p) == pytest.approx(-0.1, rel=1e-4)

    def test_descends_against_gradient_sign(self):
        p = torch.tensor([0.0, 0.0])
        state = init_adam({"p": p})
        adam_step({"p": p}, {"p": torch.tensor([2.0, -2.0])}, state, lr=0.05)
        assert p[0] < 0 < p[1]

    def test_constant_gradient_reaches_steady_unit_steps(self):
        p = torch.tensor([0.0])
        g = {"p": torch.tensor([3.0])}
        state = init_adam({"p": p})
        lr = 0.01
        for _ in range(200):
            adam_step({"p": p}, g, state, lr=lr)
        before = float(p)
        for _ in range(10):
            adam_step({"p": p}, g, state, lr=lr)
        assert (before - float(p)) == pytest.approx(10 * lr, rel=1e-3)

    def test_updates_are_in_place(self):
        p = torch.tensor([1.0])
        ptr = p.data_ptr()
        state = init_adam({"p": p})
        adam_step({"p": p}, {"p": torch.ones(1)}, state, lr=0.1)
        assert p.data_ptr() == ptr

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        grads = [torch.from_numpy(rng.normal(size=4).astype(np.float32)) for _ in range(20)]

        def run():
            p = torch.zeros(4)
            state = init_adam({"p": p})
            for g in grads:
                adam_step({"p": p}, {"p": g}, state, lr=0.02)
            return p

        assert torch.equal(run(), run())

    def test_non_finite_gradient_raises(self):
        for bad in (float("nan"), float("inf"), -float("inf")):
            p = torch.tensor([0.0])
            state = init_adam({"p": p})
            with pytest.raises(NonFinite):
                adam_step({"p": p}, {"p": torch.tensor([bad])}, state, lr=0.1)

    def test_state_tracks_moments(self):
        p = torch.tensor([0.0])
        state = init_adam({"p": p})
        g = torch.tensor([2.0])
        adam_step({"p": p}, {"p": g}, state, lr=0.1, beta1=0.9, beta2=0.999)
        assert float(state.m["p"]) == pytest.approx(0.2, rel=1e-6)
        assert float(state.v["p"]) == pytest.approx(0.004, rel=1e-6)


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.epochs == 300 and cfg.batch_size == 8
        assert cfg.base_lr == 1e-5 and cfg.max_lr == 5e-4
        assert cfg.half_cycle_epochs == 5
        assert isinstance(cfg.wing, WingParams) and isinstance(cfg.weights, LawWeights)

    def test_toy_shortens_schedule(self):
        assert TrainConfig.toy().epochs == 30
        assert TrainConfig.toy(epochs=3).epochs == 3

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(base_lr=1e-3, max_lr=1e-4)
        with pytest.raises(ValueError):
            TrainConfig(base_lr=0.0)


class TestOverfitOneBatch:
    def test_loss_halves_on_a_memorisable_batch(self):
        # Sanity check that model, loss and optimizer actually co-operate:
        # 50 plain Adam steps at a fixed healthy rate on one small batch
        # must cut the loss by at least half.
        torch.manual_seed(0)
        model = build_model(TINY)
        load_store(model, init_params(TINY, seed=1))
        model.train()
        images, targets = tiny_data(4, seed=9)
        x = torch.from_numpy(images)
        y = torch.from_numpy(targets)
        params = dict(model.named_parameters())
        state = init_adam(params)
        wing, weights = WingParams(), LawWeights()

        first = None
        last = None
        for _ in range(50):
            out = model(x)
            loss = law_loss_torch(out, y, wing, weights)
            model.zero_grad(set_to_none=True)
            loss.backward()
            adam_step(params, {k: p.grad for k, p in params.items()}, state, lr=1e-2)
            last = float(loss.detach())
            if first is None:
                first = last
        assert last < 0.5 * first, f"loss went {first:.3f} -> {last:.3f}"


class TestTrainLoop:
    def run_small(self, epochs=4, seed=5, checkpoint=None, resume=False):
        images, targets = tiny_data(8, seed=2)
        val_images, val_targets = tiny_data(4, seed=7)
        cfg = TrainConfig(
            epochs=epochs, batch_size=4, half_cycle_epochs=2, seed=seed
        )
        return train(
            TINY, images, targets, val_images, val_targets, cfg,
            checkpoint_path=checkpoint, resume=resume,
        )

    def test_history_covers_every_epoch(self):
        result = self.run_small(epochs=4)
        assert [h.epoch for h in result.history] == [0, 1, 2, 3]
        for h in result.history:
            assert math.isfinite(h.train_loss) and h.train_loss > 0
            assert math.isfinite(h.val_loss) and h.val_loss > 0

    def test_best_epoch_is_val_argmin(self):
        result = self.run_small(epochs=5)
        vals = [h.val_loss for h in result.history]
        assert result.best_val_loss == min(vals)
        assert result.best_epoch == vals.index(min(vals))

    def test_history_lr_follows_schedule(self):
        # 8 samples, batch 4 -> 2 iterations per epoch; half cycle = 2 epochs
        result = self.run_small(epochs=4)
        step_size = 2 * 2
        for h in result.history:
            last_iter = 2 * (h.epoch + 1) - 1
            assert h.lr == pytest.approx(cyclic_lr(last_iter, step_size, BASE, MAX), rel=1e-12)

    def test_deterministic_across_runs(self):
        a = self.run_small(epochs=3)
        b = self.run_small(epochs=3)
        assert [h.train_loss for h in a.history] == [h.train_loss for h in b.history]
        assert [h.val_loss for h in a.history] == [h.val_loss for h in b.history]
        for k in a.params:
            assert torch.equal(a.params[k], b.params[k]), k

    def test_seed_changes_the_run(self):
        a = self.run_small(epochs=2, seed=5)
        b = self.run_small(epochs=2, seed=6)
        assert a.history[-1].train_loss != b.history[-1].train_loss

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        ckpt = tmp_path / "ckpt.pt"
        straight = self.run_small(epochs=6)
        self.run_small(epochs=3, checkpoint=ckpt)
        resumed = self.run_small(epochs=6, checkpoint=ckpt, resume=True)
        assert len(resumed.history) == 6
        for ha, hb in zip(straight.history, resumed.history):
            assert ha.train_loss == hb.train_loss, ha.epoch
            assert ha.val_loss == hb.val_loss, ha.epoch
        assert straight.best_epoch == resumed.best_epoch
        for k in straight.params:
            assert torch.equal(straight.params[k], resumed.params[k]), k

    def test_checkpoint_records_progress(self, tmp_path):
        ckpt = tmp_path / "ckpt.pt"
        self.run_small(epochs=3, checkpoint=ckpt)
        saved = torch.load(ckpt, weights_only=False)
        assert saved["next_epoch"] == 3
        assert saved["iteration"] == 3 * 2
        assert len(saved["history"]) == 3

    def test_resume_flag_without_file_starts_fresh(self, tmp_path):
        result = self.run_small(epochs=2, checkpoint=tmp_path / "none.pt", resume=True)
        assert [h.epoch for h in result.history] == [0, 1]

    def test_log_fn_sees_each_epoch(self):
        images, targets = tiny_data(8, seed=2)
        seen = []
        cfg = TrainConfig(epochs=3, batch_size=4, half_cycle_epochs=2, seed=5)
        train(TINY, images, targets, images, targets, cfg, log_fn=seen.append)
        assert len(seen) == 3
        assert all(isinstance(s, EpochStats) for s in seen)

    def test_nan_input_aborts_with_non_finite(self):
        images, targets = tiny_data(8, seed=2)
        images[0, 0, 0, 0] = np.nan
        cfg = TrainConfig(epochs=1, batch_size=8, seed=5)
        with pytest.raises(NonFinite):
            train(TINY, images, targets, images, targets, cfg)

    def test_empty_sets_rejected(self):
        images, targets = tiny_data(4, seed=2)
        empty_x = np.zeros((0, 1, 16, 16), np.float32)
        empty_y = np.zeros((0, 6), np.float32)
        with pytest.raises(ValueError):
            train(TINY, empty_x, empty_y, images, targets, TrainConfig(epochs=1))
        with pytest.raises(ValueError):
            train(TINY, images, targets, empty_x, empty_y, TrainConfig(epochs=1))

    def test_returned_params_are_the_best_snapshot(self):
        result = self.run_small(epochs=5)
        model = build_model(TINY)
        load_store(model, result.params)
        val_images, val_targets = tiny_data(4, seed=7)
        model.eval()
        with torch.no_grad():
            out = model(torch.from_numpy(val_images))
            loss = float(law_loss_torch(out, torch.from_numpy(val_targets),
                                        WingParams(), LawWeights()))
        assert loss == pytest.approx(result.best_val_loss, rel=1e-6)


class TestHistoryCsv:
    def test_round_trip(self, tmp_path):
        history = [
            EpochStats(epoch=0, train_loss=1.25, val_loss=1.5, lr=1e-5),
            EpochStats(epoch=1, train_loss=0.75, val_loss=0.9, lr=2.5e-4),
        ]
        path = tmp_path / "history.csv"
        write_history_csv(path, history)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,lr"
        assert len(lines) == 3
        fields = lines[2].split(",")
        assert int(fields[0]) == 1
        assert float(fields[1]) == pytest.approx(0.75)
        assert float(fields[3]) == pytest.approx(2.5e-4)
