"""RMSProp updates, the alternating training loop and lambda selection."""

import hashlib
import math

import numpy as np
import pytest

from nnmf.baselines import init_pmf
from nnmf.data import DataSplit, ObservationSet, SplitSpec, make_splits
from nnmf.errors import NumericalError, SweepError, TrainingDivergedError
from nnmf.evaluation import rmse
from nnmf.model import InitSpec, NnmfModel, init_model
from nnmf.optimizer import (
    LambdaGrid,
    RmspropConfig,
    RmspropState,
    TrainSchedule,
    rmsprop_step,
    select_lambda,
    sgd_step,
    train,
)

from conftest import dense_observations, low_rank_observations, random_observations


def tiny_split(seed=0, n_rows=6, n_cols=6, n_obs=24):
    data = random_observations(seed, n_rows, n_cols, n_obs)
    return make_splits(data, SplitSpec(0.2, 0.25, 1, seed))[0]


def tiny_nnmf(seed=0, n_rows=6, n_cols=6):
    net, state = init_model((n_rows, n_cols, 2, 3, 1), [7, 5, 1], InitSpec(seed=seed))
    return NnmfModel(net, state)


class TestRmspropStep:
    def test_hand_computed_single_step(self):
        p = np.array([1.0])
        g = np.array([1.0])
        st = RmspropState.zeros_like([p], RmspropConfig(0.001, 0.9, 1e-8))
        rmsprop_step([p], [g], st)
        assert st.mean_square[0][0] == pytest.approx(0.1, abs=1e-15)
        assert 1.0 - p[0] == pytest.approx(0.001 / math.sqrt(0.1 + 1e-8), abs=1e-12)

    def test_zero_gradient_keeps_parameters(self):
        p = np.array([2.0, -3.0])
        st = RmspropState([np.array([0.4, 0.8])], RmspropConfig(0.01, 0.9, 1e-8))
        rmsprop_step([p], [np.zeros(2)], st)
        assert p.tolist() == [2.0, -3.0]
        np.testing.assert_allclose(st.mean_square[0], [0.36, 0.72])

    def test_constant_gradient_reaches_signed_step(self):
        p = np.array([0.0])
        g = np.array([0.3])
        cfg = RmspropConfig(0.001, 0.9, 1e-8)
        st = RmspropState.zeros_like([p], cfg)
        prev = p[0]
        for _ in range(500):
            prev = p[0]
            rmsprop_step([p], [g], st)
        assert st.mean_square[0][0] == pytest.approx(0.09, rel=1e-6)
        assert prev - p[0] == pytest.approx(0.001, rel=1e-3)

    def test_non_finite_gradient_rejected(self):
        p = np.array([0.0])
        st = RmspropState.zeros_like([p], RmspropConfig())
        with pytest.raises(NumericalError):
            rmsprop_step([p], [np.array([np.nan])], st)


class TestLambdaGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            LambdaGrid(())
        with pytest.raises(ValueError):
            LambdaGrid((0.1, 0.1))
        with pytest.raises(ValueError):
            LambdaGrid((-1.0, 0.0))
        assert list(LambdaGrid((0.0, 1.0))) == [0.0, 1.0]


class TestTrain:
    def test_deterministic_trace(self):
        split = tiny_split(1)
        sched = TrainSchedule(max_epochs=30, patience=30)
        a_model, a_trace = train(tiny_nnmf(1), split, 0.1, sched)
        b_model, b_trace = train(tiny_nnmf(1), split, 0.1, sched)
        assert a_trace.epochs == b_trace.epochs
        assert a_trace.train_rmse == b_trace.train_rmse
        assert a_trace.val_rmse == b_trace.val_rmse
        assert a_trace.objectives == b_trace.objectives
        for x, y in zip(a_model.net.weights, b_model.net.weights):
            assert np.array_equal(x, y)
        assert np.array_equal(a_model.state.U, b_model.state.U)

    def test_returns_best_validation_epoch(self):
        split = tiny_split(2)
        model, trace = train(tiny_nnmf(2), split, 0.0,
                             TrainSchedule(max_epochs=60, patience=60))
        returned_val = rmse(
            model.predict_batch(split.validation.rows, split.validation.cols),
            split.validation.values,
        )
        assert returned_val == pytest.approx(min(trace.val_rmse), abs=1e-15)
        assert returned_val <= min(trace.val_rmse) + 1e-15
        assert trace.best_epoch == int(np.argmin(trace.val_rmse))

    def test_early_stopping_respects_patience(self):
        split = tiny_split(3)
        sched = TrainSchedule(max_epochs=2000, patience=8, min_delta=1e-3)
        _, trace = train(tiny_nnmf(3), split, 0.0, sched)
        assert len(trace.epochs) < 2000
        assert len(trace.epochs) >= trace.best_epoch + 1

    def test_frozen_blocks_by_phase(self):
        """During a network phase all feature bits stay put, and vice versa."""

        class SpyModel:
            def __init__(self, inner):
                self.inner = inner
                self.kind = inner.kind
                self.phases = inner.phases
                self.snapshots = []

            def _digest(self):
                h = {}
                for phase in self.phases:
                    h[phase] = [
                        hashlib.sha256(b.tobytes()).hexdigest()
                        for b in self.inner.param_blocks(phase)
                    ]
                return h

            def param_blocks(self, phase):
                return self.inner.param_blocks(phase)

            def gradient(self, obs, lam):
                self.snapshots.append(self._digest())
                return self.inner.gradient(obs, lam)

            def predict_batch(self, rows, cols):
                return self.inner.predict_batch(rows, cols)

            def clone(self):
                return self.inner.clone()

        split = tiny_split(4)
        spy = SpyModel(tiny_nnmf(4))
        train(spy, split, 0.05, TrainSchedule(max_epochs=10, patience=10))
        # snapshots alternate: network-phase start, features-phase start, ...
        assert len(spy.snapshots) == 20
        for i in range(len(spy.snapshots) - 1):
            before, after = spy.snapshots[i], spy.snapshots[i + 1]
            if i % 2 == 0:
                # network phase ran in between: features must be untouched
                assert before["features"] == after["features"]
                assert before["network"] != after["network"]
            else:
                # features phase ran in between: network must be untouched
                assert before["network"] == after["network"]
                assert before["features"] != after["features"]

    def test_plain_gd_small_step_non_increasing(self):
        split = tiny_split(5)
        model = tiny_nnmf(5)
        values = []
        for _ in range(100):
            for phase in model.phases:
                value, grads = model.gradient(split.train, 0.1)
                sgd_step(model.param_blocks(phase), grads[phase], 1e-6)
            values.append(value)
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    def test_huge_lambda_drives_features_to_zero(self):
        split = tiny_split(6)
        model, _ = train(tiny_nnmf(6), split, 1e6,
                         TrainSchedule(max_epochs=300, patience=300))
        zeroed = model.clone()
        zeroed.state.U[:] = 0.0
        zeroed.state.V[:] = 0.0
        zeroed.state.Uprime[:] = 0.0
        zeroed.state.Vprime[:] = 0.0
        assert float(np.max(np.abs(model.state.U))) < 0.02
        preds = model.predict_batch(split.train.rows, split.train.cols)
        zero_preds = zeroed.predict_batch(split.train.rows, split.train.cols)
        np.testing.assert_allclose(preds, zero_preds, atol=0.05)

    def test_divergence_raises_with_context(self):
        split = tiny_split(7)
        model = tiny_nnmf(7)
        # squared residuals overflow to inf with an astronomically large
        # output weight (hidden sigmoids alone would saturate gracefully)
        model.net.weights[-1][0, 0] = 1e308
        with pytest.raises(TrainingDivergedError) as err:
            train(model, split, 0.0, TrainSchedule(max_epochs=10, patience=10))
        assert err.value.last_finite_epoch == -1

    def test_memorizes_dense_4x4(self):
        rng = np.random.default_rng(5)
        obs = dense_observations(4, 4, rng.uniform(1, 5, size=(4, 4)))
        split = DataSplit(train=obs, validation=obs, test=obs)
        net, state = init_model((4, 4, 3, 6, 1), [12, 16, 1], InitSpec(seed=7))
        _, trace = train(
            NnmfModel(net, state), split, 0.0,
            TrainSchedule(max_epochs=1500, patience=1500, min_delta=0.0),
            RmspropConfig(learning_rate=0.001),
        )
        assert min(trace.train_rmse) < 1e-2


class TestSelectLambda:
    def test_single_element_grid(self):
        split = tiny_split(8)
        model = init_pmf(6, 6, 2, InitSpec(seed=8))
        sched = TrainSchedule(max_epochs=50, patience=50)
        lam, best, rows = select_lambda(model, split, LambdaGrid((0.25,)), sched)
        assert lam == 0.25
        assert len(rows) == 1
        assert best is not None

    def test_tie_breaks_to_larger_lambda(self):
        # zero features and zero targets: training is a no-op for every
        # lambda, so validation RMSE ties exactly across the grid
        obs = ObservationSet(
            4, 4, np.arange(4, dtype=np.int64), np.arange(4, dtype=np.int64),
            np.zeros(4),
        )
        split = DataSplit(train=obs, validation=obs, test=obs)
        model = init_pmf(4, 4, 2, InitSpec(seed=9))
        model.U[:] = 0.0
        model.V[:] = 0.0
        sched = TrainSchedule(max_epochs=3, patience=3)
        lam, _, rows = select_lambda(model, split, LambdaGrid((0.0, 1.0, 10.0)), sched)
        assert len({r.val_rmse for r in rows}) == 1
        assert lam == 10.0

    def test_identical_initial_parameters_per_lambda(self):
        split = tiny_split(9)
        model = tiny_nnmf(9)
        before = model.state.U.copy()
        select_lambda(model, split, LambdaGrid((0.0, 0.5)),
                      TrainSchedule(max_epochs=5, patience=5))
        # the passed-in model itself is never mutated, runs use clones
        assert np.array_equal(model.state.U, before)

    def test_noisy_data_prefers_positive_lambda(self):
        rng = np.random.default_rng(0)
        A = 1.5 * rng.standard_normal((12, 1))
        B = 1.5 * rng.standard_normal((12, 1))
        X = A @ B.T + 0.8 * rng.standard_normal((12, 12))
        data = dense_observations(12, 12, X)
        split = make_splits(data, SplitSpec(0.2, 0.2, 1, 7))[0]
        sched = TrainSchedule(max_epochs=4000, patience=400, min_delta=0.0)
        opt = RmspropConfig(learning_rate=0.01)
        model = init_pmf(12, 12, 6, InitSpec(seed=10))
        lam, best, _ = select_lambda(model, split, LambdaGrid((0.0, 0.5, 2.0, 8.0)),
                                     sched, opt)
        test_best = rmse(best.predict_batch(split.test.rows, split.test.cols),
                         split.test.values)
        zero_model, _ = train(model.clone(), split, 0.0, sched, opt)
        test_zero = rmse(zero_model.predict_batch(split.test.rows, split.test.cols),
                         split.test.values)
        assert lam > 0.0
        assert test_best < test_zero

    def test_parallel_jobs_match_sequential(self):
        split = tiny_split(10)
        model = init_pmf(6, 6, 2, InitSpec(seed=11))
        sched = TrainSchedule(max_epochs=20, patience=20)
        grid = LambdaGrid((0.0, 0.1, 1.0))
        lam_s, best_s, rows_s = select_lambda(model, split, grid, sched, jobs=1)
        lam_p, best_p, rows_p = select_lambda(model, split, grid, sched, jobs=3)
        assert lam_s == lam_p
        assert [r.val_rmse for r in rows_s] == [r.val_rmse for r in rows_p]
        assert np.array_equal(best_s.U, best_p.U)

    def test_all_diverged_raises_sweep_error(self):
        split = tiny_split(11)
        model = tiny_nnmf(11)
        model.net.weights[-1][0, 0] = 1e308
        with pytest.raises(SweepError):
            select_lambda(model, split, LambdaGrid((0.0, 1.0)),
                          TrainSchedule(max_epochs=5, patience=5))


class TestTrainingTrace:
    def test_csv_round_trip_columns(self, tmp_path):
        split = tiny_split(12)
        _, trace = train(tiny_nnmf(12), split, 0.0,
                         TrainSchedule(max_epochs=5, patience=5))
        path = tmp_path / "trace.csv"
        trace.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == (
            "epoch,network_objective,features_objective,train_rmse,validation_rmse"
        )
        assert len(lines) == 6
