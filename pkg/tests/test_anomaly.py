import numpy as np
import pytest

from failop.anomaly import (AnomalyModel, Autoencoder, DigestMismatch,
                            KnowledgeBase, TrainConfig, TrainingDiverged,
                            calibrate_threshold, nearest_rank_quantile,
                            retrain_with_recordings, train, train_on_kb)
from failop.records import RecordError
from failop.scene import RasterWindow, SceneRaster


def toy_rasters(n=12, side=3, seed=0):
    """Small binary-ish blob rasters for gradient and training checks."""
    rng = np.random.default_rng(seed)
    out = np.zeros((n, side * side))
    for i in range(n):
        k = rng.integers(0, side * side)
        out[i, k] = rng.uniform(0.4, 1.0)
        out[i, (k + 3) % (side * side)] = rng.uniform(0.1, 0.6)
    return out


def finite_difference_grads(ae, x, eps=1e-5):
    """Central finite differences of the batch loss for every parameter."""
    grads = {}
    for name in ("w1", "b1", "w2", "b2"):
        arr = getattr(ae, name)
        fd = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            lo_plus = ae.loss(x)
            arr[idx] = orig - eps
            lo_minus = ae.loss(x)
            arr[idx] = orig
            fd[idx] = (lo_plus - lo_minus) / (2 * eps)
            it.iternext()
        grads[name] = fd
    return grads


def test_gradients_match_finite_differences():
    x = toy_rasters()
    ae = Autoencoder.initialize(d=9, h=4, seed=3)
    _, analytic = ae.loss_and_gradients(x)
    numeric = finite_difference_grads(ae, x)
    for name in ("w1", "b1", "w2", "b2"):
        a, n = analytic[name], numeric[name]
        rel = np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
        assert rel < 1e-4, f"{name}: relative error {rel:.2e}"


def test_training_reduces_loss_and_is_deterministic():
    x = toy_rasters(n=20)
    cfg = TrainConfig(epochs=50, seed=9, hidden=4)
    ae1, losses1 = train(x, cfg)
    ae2, losses2 = train(x, cfg)
    assert losses1[-1] < losses1[0]
    assert losses1 == losses2
    for name in ("w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(ae1, name), getattr(ae2, name))


def test_training_loss_strictly_decreases_first_epochs_default_hyper():
    x = toy_rasters(n=24, seed=4)
    _, losses = train(x, TrainConfig(hidden=4, epochs=10))
    for a, b in zip(losses[:10], losses[1:11]):
        assert b < a


def test_training_memorizes_single_repeated_raster():
    raster = toy_rasters(n=1, seed=7)[0]
    x = np.tile(raster, (16, 1))
    ae, _ = train(x, TrainConfig(epochs=400, hidden=4, lr=0.3, seed=1))
    score = float(ae.scores(raster[None, :])[0])
    assert score < 1e-3


def test_training_requires_min_samples_and_aborts_on_divergence():
    with pytest.raises(RecordError):
        train(toy_rasters(n=5), TrainConfig(hidden=4))
    with pytest.raises(TrainingDiverged):
        train(toy_rasters(n=16) * 1e3, TrainConfig(hidden=4, lr=1e9, epochs=100))


def test_zero_input_with_converged_zero_model_scores_zero():
    x = np.zeros((16, 9))
    ae, _ = train(x, TrainConfig(epochs=200, hidden=4, seed=2))
    assert float(ae.scores(np.zeros((1, 9)))[0]) < 1e-6


# ----------------------------------------------------------- calibration


def test_nearest_rank_quantile_and_tau():
    scores = list(range(1, 101))  # 1..100
    assert nearest_rank_quantile(scores, 0.99) == 99
    x = toy_rasters(n=16)
    ae, _ = train(x, TrainConfig(epochs=30, hidden=4))
    tau = calibrate_threshold(ae, x, q=0.99)
    s = sorted(ae.scores(x))
    assert tau == pytest.approx(1.5 * s[int(np.ceil(0.99 * len(s))) - 1])


def test_tau_constant_distribution():
    class Fixed:
        def scores(self, x):
            return np.full(x.shape[0], 0.42)

    tau = calibrate_threshold(Fixed(), np.zeros((10, 4)), q=0.99)
    assert tau == pytest.approx(0.63)


def test_fraction_above_tau_bounded():
    rng = np.random.default_rng(6)
    for _ in range(20):
        scores = rng.exponential(1.0, int(rng.integers(10, 300)))

        class Fixed:
            def scores(self, x):
                return scores

        tau = calibrate_threshold(Fixed(), np.zeros((len(scores), 1)), q=0.99)
        assert (scores > tau).mean() <= 0.01 + 1e-12


# ----------------------------------------------------------- model files


def window():
    return RasterWindow(depth=20, width=8, cells=3)


def make_model(tmp_path, version=1):
    x = toy_rasters(n=16)
    ae, _ = train(x, TrainConfig(epochs=50, hidden=4))
    return AnomalyModel(ae=ae, tau=calibrate_threshold(ae, x), q=0.99,
                        training_digest="d" * 64, version=version, window=window(),
                        train_cfg=TrainConfig(epochs=50, hidden=4))


def test_model_save_load_round_trip(tmp_path):
    model = make_model(tmp_path)
    path = tmp_path / "v1.model"
    model.save(path)
    back = AnomalyModel.load(path)
    assert back.tau == model.tau
    assert back.version == model.version
    assert back.window == model.window
    for name in ("w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(back.ae, name), getattr(model.ae, name))


def test_model_load_rejects_tampered_weights(tmp_path):
    model = make_model(tmp_path)
    path = tmp_path / "v1.model"
    model.save(path)
    lines = path.read_text().splitlines()
    lines[1] = lines[1].replace("0.0", "0.1", 1)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DigestMismatch):
        AnomalyModel.load(path)


def test_detect_flag_iff_score_above_tau(tmp_path):
    model = make_model(tmp_path)
    rng = np.random.default_rng(12)
    for _ in range(100):
        grid = rng.uniform(0, 1, (3, 3))
        raster = SceneRaster(tick=0, window=window(), grid=grid)
        verdict = model.detect(raster)
        assert verdict.flag == (verdict.score > model.tau)
        assert verdict.model_version == model.version


# ----------------------------------------------------------- knowledge base


def raster_from_flat(flat, tick=0):
    return SceneRaster(tick=tick, window=window(), grid=flat.reshape(3, 3))


def test_kb_dedupes_identiical_rasters(tmp_path):
    kb = KnowledgeBase(tmp_path / "kb")
    r = raster_from_flat(toy_rasters(n=1)[0])
    assert kb.add_raster(r)
    assert not kb.add_raster(r)
    assert len(kb.raster_files()) == 1


def test_train_on_kb_and_retrain_versions(tmp_path):
    kb = KnowledgeBase(tmp_path / "kb")
    base = toy_rasters(n=16, seed=1)
    for i, flat in enumerate(base):
        kb.add_raster(raster_from_flat(flat, tick=i))
    cfg = TrainConfig(epochs=60, hidden=4, lr=0.3)
    v1 = train_on_kb(kb, cfg)
    assert v1.version == 1
    assert kb.model_path(1).exists()
    assert v1.training_digest == kb.digest()

    # dense patterns, structurally unlike the sparse training blobs
    novel = np.random.default_rng(99).uniform(0.3, 0.9, (6, 9))
    recordings = [raster_from_flat(f, tick=100 + i) for i, f in enumerate(novel)]
    pre_scores = [v1.detect(r).score for r in recordings]

    v2 = retrain_with_recordings(v1, kb, recordings)
    assert v2.version == 2
    assert kb.model_path(1).exists() and kb.model_path(2).exists()  # old retained
    assert len(kb.raster_files()) == 16 + 6  # union of distinct rasters
    post_scores = [v2.detect(r).score for r in recordings]
    assert all(p < q for p, q in zip(post_scores, pre_scores))


def test_retrain_digest_mismatch_aborts(tmp_path):
    kb = KnowledgeBase(tmp_path / "kb")
    for i, flat in enumerate(toy_rasters(n=16, seed=1)):
        kb.add_raster(raster_from_flat(flat, tick=i))
    v1 = train_on_kb(kb, TrainConfig(epochs=20, hidden=4))
    # tamper with the kb behind the model's back
    kb.add_raster(raster_from_flat(toy_rasters(n=1, seed=55)[0], tick=999))
    with pytest.raises(DigestMismatch):
        retrain_with_recordings(v1, kb, [raster_from_flat(toy_rasters(n=1, seed=56)[0])])
