import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spo2tl.exceptions import (InsufficientDataError, InsufficientSubjectsError,
                               InvalidConfigError, NumericError)
from spo2tl.nn import Adam, ModelConfig, ModelParams
from spo2tl.training import (History, SplitPlan, TrainConfig, WeightedSampler, finetune, kfold,
                             loso, prime, pretrain, run_epochs, subject_split)


def _subjects(n):
    return [f"S{k:02d}" for k in range(n)]


class TestSplits:
    @pytest.mark.parametrize("n, n_test", [(10, 2), (5, 1), (9, 2), (7, 1), (13, 3)])
    def test_four_to_one(self, n, n_test):
        plan = subject_split(_subjects(n), seed=3)
        assert len(plan.test_subjects) == n_test
        assert len(plan.train_subjects) == n - n_test
        assert not set(plan.train_subjects) & set(plan.test_subjects)

    def test_deterministic_and_seed_dependent(self):
        a = subject_split(_subjects(10), seed=1)
        assert a == subject_split(_subjects(10), seed=1)
        assert any(subject_split(_subjects(10), seed=s).test_subjects != a.test_subjects
                   for s in range(2, 8))

    def test_duplicates_are_one_subject(self):
        plan = subject_split(_subjects(5) * 3)
        assert len(plan.train_subjects) + len(plan.test_subjects) == 5

    def test_too_few_subjects(self):
        with pytest.raises(InsufficientSubjectsError):
            subject_split(_subjects(4))

    def test_overlap_rejected(self):
        with pytest.raises(InvalidConfigError):
            SplitPlan(["a", "b"], ["b"])

    def test_kfold_sizes(self):
        folds = kfold(_subjects(8), 5, seed=0)
        assert sorted(map(len, folds), reverse=True) == [2, 2, 2, 1, 1]
        assert sorted(s for f in folds for s in f) == _subjects(8)
        assert folds == kfold(_subjects(8), 5, seed=0)
        with pytest.raises(InsufficientSubjectsError):
            kfold(_subjects(4), 5)

    @pytest.mark.parametrize("n", [2, 9])
    def test_loso(self, n):
        plans = loso(_subjects(n))
        assert len(plans) == n
        assert sorted(p.test_subjects[0] for p in plans) == _subjects(n)
        for p in plans:
            assert len(p.train_subjects) == n - 1
            assert p.test_subjects[0] not in p.train_subjects
        with pytest.raises(InsufficientSubjectsError):
            loso(["only"])


class TestWeightedSampler:
    def test_ninety_ten(self):
        labels = np.r_[np.full(90, 96.0), np.full(10, 80.0)]
        idx = WeightedSampler(labels, seed=0).draw(100_000)
        share = np.mean(idx >= 90)
        assert abs(share - 0.5) < 0.03

    def test_single_bin_is_uniform(self):
        s = WeightedSampler(np.full(7, 97.0))
        assert np.allclose(s.p, 1 / 7)

    def test_inverse_frequency_weights(self):
        labels = np.r_[np.full(4, 75.0), np.full(8, 95.0)]
        w = WeightedSampler(labels).weights
        assert w[0] == pytest.approx(2 * w[-1])

    def test_out_of_range_labels_use_edge_bins(self):
        s = WeightedSampler([60.0, 70.0, 100.0, 101.0])
        assert s.bin_index.tolist() == [0, 0, 9, 9]

    def test_deterministic(self):
        labels = np.linspace(70, 100, 50)
        assert np.array_equal(WeightedSampler(labels, seed=4).draw(500),
                              WeightedSampler(labels, seed=4).draw(500))

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            WeightedSampler([])

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(70, 100), min_size=1, max_size=60))
    def test_bin_marginal_is_uniform_over_occupied_bins(self, labels):
        s = WeightedSampler(labels)
        occupied = np.flatnonzero(s.counts)
        share = np.bincount(s.bin_index, weights=s.p, minlength=10)[occupied]
        assert np.allclose(share, 1 / occupied.size)


def _toy(n=64, T=8, seed=0):
    """Windows whose label is an affine function of the first channel's amplitude."""
    rng = np.random.default_rng(seed)
    amp = rng.uniform(0.5, 1.5, n)
    t = np.arange(T)
    X = np.stack([amp[:, None] * np.sin(t)[None, :], np.ones((n, T)) * 0.1
                  + 0.01 * rng.standard_normal((n, T))], axis=2)
    return X, 80.0 + 10.0 * amp


class TestLoops:
    def test_steps_per_epoch(self):
        X, y = _toy(300)
        cfg = TrainConfig(batch=256, pretrain_epochs=2)
        params, hist = pretrain(X, y, cfg, ModelConfig(hidden=2, seq_len=8))
        # 2 epochs of ceil(300 / 256) = 2 steps; every update bumps the version
        assert params.version == 1 + 4
        assert [r["epoch"] for r in hist.rows] == [1, 2]

    def test_loss_decreases_by_half(self):
        X, y = _toy(128)
        cfg = TrainConfig(batch=32, pretrain_epochs=100, lr=1e-2)
        _, hist = pretrain(X, y, cfg, ModelConfig(hidden=4, seq_len=8, seed=1))
        losses = hist.losses()
        assert losses[-1] <= 0.5 * losses[0]

    def test_deterministic_history(self):
        X, y = _toy(40)
        cfg = TrainConfig(batch=16, pretrain_epochs=3, seed=5)
        mc = ModelConfig(hidden=2, seq_len=8, seed=5)
        a = pretrain(X, y, cfg, mc)[1].to_csv()
        assert a == pretrain(X, y, cfg, mc)[1].to_csv()
        assert a.splitlines()[0] == "epoch,split,loss,mae"

    def test_zero_lr_keeps_weights(self):
        X, y = _toy(40)
        mc = ModelConfig(hidden=2, seq_len=8)
        ref = prime(ModelParams.initialize(mc), X, y)
        params, _ = pretrain(X, y, TrainConfig(lr=0.0, pretrain_epochs=2), mc)
        assert all(np.array_equal(ref[n], params[n]) for n in ref.names())

    def test_prime(self):
        X, y = _toy(40)
        p = prime(ModelParams.initialize(ModelConfig(hidden=2, seq_len=8)), X, y)
        assert p["fc.b"][0] == pytest.approx(np.mean(y))
        assert np.allclose(p.buffers["norm.x_scale"], X.reshape(-1, 2).std(axis=0))

    def test_validation_rows_and_best_epoch(self):
        X, y = _toy(40)
        cfg = TrainConfig(batch=16, pretrain_epochs=3)
        _, hist = pretrain(X, y, cfg, ModelConfig(hidden=2, seq_len=8), val=(X[:8], y[:8]))
        assert [r["split"] for r in hist.rows] == ["train", "val"] * 3
        assert hist.best_val_mae == min(r["mae"] for r in hist.rows if r["split"] == "val")

    def test_empty_data(self):
        with pytest.raises(InsufficientDataError):
            pretrain(np.zeros((0, 8, 2)), np.zeros(0), TrainConfig(), ModelConfig(hidden=2))

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_divergence_is_numeric_error(self):
        X, y = _toy(16)
        p = ModelParams.initialize(ModelConfig(hidden=2, seq_len=8))
        y = y.copy()
        y[0] = 1e200
        with pytest.raises(NumericError):
            run_epochs(p, X, y, 1, TrainConfig(batch=16), Adam(), np.random.default_rng(0))

    def test_config_invariants(self):
        with pytest.raises(InvalidConfigError):
            TrainConfig(batch=0)
        with pytest.raises(InvalidConfigError):
            TrainConfig(finetune_epochs=10, finetune_stage1_epochs=10)


class TestFinetune:
    @pytest.fixture
    def pretrained(self):
        X, y = _toy(48)
        cfg = TrainConfig(batch=16, pretrain_epochs=2)
        params, _ = pretrain(X, y, cfg, ModelConfig(hidden=3, seq_len=8))
        return params, X, y + 3.0

    def test_stage_two_contract(self, pretrained):
        params, X, y = pretrained
        h0 = {g: params.group_hash(g) for g in params.groups}
        tuned, hist = finetune(params.copy(), X, y,
                               TrainConfig(batch=16, finetune_epochs=4, finetune_stage1_epochs=3))
        assert tuned.group_hash("attention") == h0["attention"]
        assert tuned.group_hash("bilstm") != h0["bilstm"]
        assert tuned.group_hash("fc") != h0["fc"]
        assert [r["epoch"] for r in hist.rows] == [1, 2, 3, 4]

    def test_stage_one_only_moves_the_head(self, pretrained):
        params, X, y = pretrained
        h0 = {g: params.group_hash(g) for g in params.groups}
        seen = {}

        def record(stage, p):
            seen[stage] = ({g: p.group_hash(g) for g in p.groups}, dict(p.trainable))

        finetune(params, X, y, TrainConfig(batch=16, finetune_epochs=3, finetune_stage1_epochs=2),
                 on_stage_end=record)
        hashes, flags = seen[1]
        assert flags == {"bilstm": False, "attention": False, "fc": True}
        assert hashes["bilstm"] == h0["bilstm"] and hashes["attention"] == h0["attention"]
        assert hashes["fc"] != h0["fc"]
        hashes, flags = seen[2]
        assert flags == {"bilstm": True, "attention": False, "fc": True}
        assert hashes["attention"] == h0["attention"] and hashes["bilstm"] != h0["bilstm"]

    def test_architecture_mismatch(self, pretrained):
        params, X, y = pretrained
        with pytest.raises(InvalidConfigError):
            finetune(params, X, y, TrainConfig(finetune_epochs=2, finetune_stage1_epochs=1),
                     model_config=ModelConfig(hidden=5, seq_len=8))

    def test_history_rows(self):
        h = History()
        h.add(1, "val", 2.0, 1.0)
        h.add(2, "val", 1.0, 0.5)
        h.add(3, "val", 1.5, 0.7)
        assert (h.best_epoch, h.best_val_mae) == (2, 0.5)
