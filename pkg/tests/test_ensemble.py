import numpy as np
import pytest

from lite_tsc import architectures as A
from lite_tsc.ensemble import EnsembleModel, build_ensemble, ensemble_predict, load_ensemble, save_ensemble
from lite_tsc.trainer import TrainConfig, train


class _Fixed:
    """Stand-in member whose prediction is a fixed table."""

    def __init__(self, probs, n_classes=2, in_channels=1):
        self.probs = np.asarray(probs, dtype=np.float32)
        self.n_classes = n_classes
        self.in_channels = in_channels


@pytest.fixture
def fixed_predict(monkeypatch):
    import lite_tsc.ensemble as E
    monkeypatch.setattr(E, "predict_proba", lambda member, x: member.probs)


class TestPredict:
    def test_arithmetic_mean(self, fixed_predict):
        ens = EnsembleModel([_Fixed([[0.2, 0.8]]), _Fixed([[0.6, 0.4]])])
        np.testing.assert_allclose(ensemble_predict(ens, None), [[0.4, 0.6]], rtol=1e-6)

    def test_identical_members_bitwise(self, rng):
        model = A.build_model(A.get_config("lite"), 1, 3, seed=2)
        x = rng.normal(size=(5, 1, 40)).astype(np.float32)
        single = A.predict_proba(model, x)
        for k in (1, 2, 3, 5, 7):
            out = ensemble_predict(EnsembleModel([model] * k), x)
            assert out.tobytes() == single.tobytes(), k

    def test_rows_on_simplex(self, rng):
        members = [A.build_model(A.get_config("lite"), 1, 4, seed=s) for s in range(3)]
        out = ensemble_predict(EnsembleModel(members), rng.normal(size=(6, 1, 30)).astype(np.float32))
        assert np.abs(out.sum(axis=1) - 1).max() < 1e-6

    def test_order_changes_at_most_rounding(self, rng):
        members = [A.build_model(A.get_config("lite"), 1, 3, seed=s) for s in range(4)]
        x = rng.normal(size=(3, 1, 30)).astype(np.float32)
        a = ensemble_predict(EnsembleModel(members), x)
        b = ensemble_predict(EnsembleModel(members[::-1]), x)
        np.testing.assert_allclose(a, b, atol=1e-6)
        assert a.tobytes() == ensemble_predict(EnsembleModel(members), x).tobytes()

    def test_heterogeneous_rejected(self):
        with pytest.raises(ValueError, match="class count"):
            EnsembleModel([_Fixed([[1, 0]], 2), _Fixed([[1, 0, 0]], 3)])
        with pytest.raises(ValueError, match="channels"):
            EnsembleModel([_Fixed([[1, 0]], 2, 1), _Fixed([[1, 0]], 2, 3)])
        with pytest.raises(ValueError):
            EnsembleModel([])


class TestBuild:
    def test_k1_equals_train(self, small_synthetic):
        train_ds, _ = small_synthetic
        cfg = TrainConfig(epochs=3, seed=7)
        ens, histories = build_ensemble(train_ds, A.get_config("lite"), cfg, k=1, base_seed=7)
        best, history = train(A.build_model(A.get_config("lite"), 1, 3, seed=7), train_ds, cfg)
        assert A.model_to_bytes(ens.members[0]) == A.model_to_bytes(best)
        assert histories[0].loss == history.loss

    def test_seeds_in_order(self, small_synthetic):
        train_ds, _ = small_synthetic
        ens, _ = build_ensemble(train_ds, A.get_config("lite"), TrainConfig(epochs=1), k=3, base_seed=10)
        assert [m.seed for m in ens.members] == [10, 11, 12]

    def test_parallel_matches_serial(self, small_synthetic):
        train_ds, _ = small_synthetic
        cfg = TrainConfig(epochs=1)
        serial, _ = build_ensemble(train_ds, A.get_config("lite"), cfg, k=2, base_seed=0)
        parallel, _ = build_ensemble(train_ds, A.get_config("lite"), cfg, k=2, base_seed=0, max_workers=2)
        assert [A.model_to_bytes(m) for m in serial.members] == [A.model_to_bytes(m) for m in parallel.members]

    def test_failure_names_member(self, small_synthetic):
        train_ds, _ = small_synthetic
        bad = train_ds.subset(np.arange(len(train_ds)))
        bad.series[0, 0, 0] = np.nan
        with pytest.raises(RuntimeError, match="seed 4"):
            build_ensemble(bad, A.get_config("lite"), TrainConfig(epochs=1), k=1, base_seed=4)

    def test_k_validated(self, small_synthetic):
        with pytest.raises(ValueError):
            build_ensemble(small_synthetic[0], A.get_config("lite"), TrainConfig(epochs=1), k=0)

    def test_k2_not_worse_than_worst_member(self, small_synthetic):
        train_ds, test_ds = small_synthetic
        ens, _ = build_ensemble(train_ds, A.get_config("lite"), TrainConfig(epochs=10), k=2, base_seed=0)
        member_acc = [(A.predict_proba(m, test_ds.series).argmax(1) == test_ds.labels).mean() for m in ens.members]
        ens_acc = (ensemble_predict(ens, test_ds.series).argmax(1) == test_ds.labels).mean()
        assert ens_acc >= min(member_acc)


class TestPersistence:
    def test_round_trip(self, tmp_path, rng):
        members = [A.build_model(A.get_config("lite"), 1, 3, seed=s) for s in (3, 4)]
        path = save_ensemble(tmp_path, EnsembleModel(members, base_seed=3))
        back = load_ensemble(path)
        assert back.k == 2 and back.base_seed == 3
        x = rng.normal(size=(2, 1, 20)).astype(np.float32)
        assert ensemble_predict(back, x).tobytes() == ensemble_predict(EnsembleModel(members), x).tobytes()
        assert sorted(p.name for p in tmp_path.iterdir()) == ["ensemble.json", "member_3.ckpt", "member_4.ckpt"]

    def test_not_a_manifest(self, tmp_path):
        (tmp_path / "x.json").write_text('{"format": "other"}')
        with pytest.raises(ValueError):
            load_ensemble(tmp_path / "x.json")
