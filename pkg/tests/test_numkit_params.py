"""ParamSet, sgd_step, and the learning-rate schedule."""

import numpy as np
import pytest

from t2v.numkit import LrSchedule, ParamSet, lr_at, sgd_step


class TestParamSet:
    def test_insert_copies_and_freezes(self):
        src = np.ones(3, dtype=np.float32)
        ps = ParamSet({"w": src})
        src[0] = 99.0
        assert ps["w"][0] == 1.0
        with pytest.raises(ValueError):
            ps["w"][0] = 5.0  # read-only array

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            ParamSet({"w": np.array([1.0, np.inf])})

    def test_rejects_int_dtype(self):
        with pytest.raises(TypeError):
            ParamSet({"w": np.arange(3)})

    def test_order_preserved(self):
        ps = ParamSet()
        for name in ["b", "a", "c"]:
            ps[name] = np.zeros(1)
        assert ps.names() == ["b", "a", "c"]


class TestSgdStep:
    def test_basic_update(self):
        ps = ParamSet({"w": np.array([1.0, 2.0], dtype=np.float32)})
        gs = ParamSet({"w": np.array([0.5, -1.0], dtype=np.float32)})
        out = sgd_step(ps, gs, 0.1)
        np.testing.assert_allclose(out["w"], [0.95, 2.1], rtol=1e-6)
        np.testing.assert_allclose(ps["w"], [1.0, 2.0])  # input untouched

    def test_missing_grad_leaves_param(self):
        ps = ParamSet({"w": np.ones(2), "v": np.ones(2)})
        gs = ParamSet({"w": np.ones(2)})
        out = sgd_step(ps, gs, 1.0)
        np.testing.assert_allclose(out["w"], 0.0)
        np.testing.assert_allclose(out["v"], 1.0)

    def test_shape_mismatch_names_param(self):
        ps = ParamSet({"w": np.ones(2)})
        gs = ParamSet({"w": np.ones(3)})
        with pytest.raises(ValueError, match="'w'"):
            sgd_step(ps, gs, 1.0)

    def test_bitwise_deterministic(self):
        rng = np.random.default_rng(7)
        ps = ParamSet({"w": rng.normal(size=64).astype(np.float32)})
        gs = ParamSet({"w": rng.normal(size=64).astype(np.float32)})
        a = sgd_step(ps, gs, 0.001)["w"].tobytes()
        b = sgd_step(ps, gs, 0.001)["w"].tobytes()
        assert a == b


class TestSchedule:
    SCHED = LrSchedule(base_lr=0.001, warmup_steps=1000, decay_epochs=(40, 80),
                       decay_factor=0.1, steps_per_epoch=100)

    def test_frozen_examples(self):
        assert lr_at(self.SCHED, 0) == 0.0
        assert lr_at(self.SCHED, 500) == pytest.approx(0.0005)
        assert lr_at(self.SCHED, 1000) == pytest.approx(0.001)
        assert lr_at(self.SCHED, 4000) == pytest.approx(0.0001)
        assert lr_at(self.SCHED, 8000) == pytest.approx(0.00001)

    def test_monotone_shape(self):
        # non-decreasing through warmup, non-increasing afterwards
        ramp = [lr_at(self.SCHED, s) for s in range(0, 1001)]
        assert all(b >= a for a, b in zip(ramp, ramp[1:]))
        tail = [lr_at(self.SCHED, s) for s in range(1000, 12000, 37)]
        assert all(b <= a for a, b in zip(tail, tail[1:]))

    def test_zero_steps_per_epoch_rejected(self):
        with pytest.raises(ValueError):
            lr_at(LrSchedule(0.1, steps_per_epoch=0), 1)

    def test_no_warmup(self):
        s = LrSchedule(base_lr=0.5, warmup_steps=0, steps_per_epoch=10)
        assert lr_at(s, 0) == 0.5
