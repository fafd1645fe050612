import numpy as np
import pytest
from sklearn.base import clone

from dainr import DAINRReconstructor, HashINRReconstructor, ZeroFilledReconstructor, train_interpolation
from dainr.phantom import cardiac_phantom, generate_coil_maps, generate_phantom, retrospective_undersample

FAST = dict(n_levels=4, table_size_log2=10, coarsest_resolution=4, hidden_width=16, hidden_layers=2, n_iter=8)


def test_params_follow_sklearn_conventions():
    est = DAINRReconstructor(n_iter=5)
    assert est.get_params()["n_iter"] == 5
    cloned = clone(est.set_params(learning_rate=0.01))
    assert cloned.learning_rate == 0.01 and not hasattr(cloned, "model_")


def test_zero_filled(small_acquisition):
    _, _, acq = small_acquisition
    out = ZeroFilledReconstructor().fit_predict(acq)
    assert out.shape == (8, 32, 32)
    assert ZeroFilledReconstructor().fit(acq).predict([2]).shape == (1, 32, 32)


def test_dainr_fit_predict(small_acquisition):
    _, _, acq = small_acquisition
    est = DAINRReconstructor(**FAST).fit(acq)
    out = est.predict()
    assert out.shape == (8, 32, 32) and np.iscomplexobj(out)
    assert est.n_iter_ == 8 and len(est.loss_trace_) == 8
    assert est.predict([1, 2], scale=2.0).shape == (2, 64, 64)


def test_dainr_save_load(tmp_path, small_acquisition):
    _, _, acq = small_acquisition
    est = DAINRReconstructor(use_features=True, feature_channels=4, **FAST).fit(acq)
    est.save(tmp_path / "ck")
    back = DAINRReconstructor.load(tmp_path / "ck")
    np.testing.assert_allclose(back.predict(), est.predict(), rtol=1e-6, atol=1e-7)
    assert back.get_params() == est.get_params()


def test_unfitted_predict_rejected():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        DAINRReconstructor().predict()


@pytest.mark.parametrize("kw", [dict(n_iter=0), dict(learning_rate=-1.0), dict(canonical_frame=99),
                                dict(resample="cubic")])
def test_invalid_params_rejected(small_acquisition, kw):
    _, _, acq = small_acquisition
    with pytest.raises(ValueError):
        DAINRReconstructor(**{**FAST, **kw}).fit(acq)


def test_bad_inputs_rejected(small_acquisition):
    _, _, acq = small_acquisition
    with pytest.raises(TypeError):
        DAINRReconstructor(**FAST).fit(np.zeros((2, 4, 4)))
    with pytest.raises(ValueError):
        DAINRReconstructor(**FAST).fit(acq.subset([0]))
    with pytest.raises(ValueError):
        ZeroFilledReconstructor().fit(acq).predict([8])


def test_hashinr_fit_predict(small_acquisition):
    _, _, acq = small_acquisition
    est = HashINRReconstructor(**FAST).fit(acq)
    assert est.predict().shape == (8, 32, 32)
    assert est.lambda_tv == 0.0 and est.lambda_lowrank == 0.0


def test_temporal_interpolation_frames(small_acquisition):
    _, _, acq = small_acquisition
    res = train_interpolation("temporal", 2, acq, estimator=DAINRReconstructor(**FAST))
    np.testing.assert_array_equal(res.train_frames, [0, 2, 4, 6])
    assert res.frames.shape == (8, 32, 32)
    assert {k for _, k, _ in res.estimator.loss_trace_} == {0, 2, 4, 6}


def test_temporal_interpolation_sixteen_frames():
    gt = generate_phantom(cardiac_phantom(16, 16))
    acq = retrospective_undersample(gt, generate_coil_maps(16, 1), 3)
    res = train_interpolation("temporal", 2, acq, estimator=DAINRReconstructor(**{**FAST, "n_iter": 2}))
    assert len(res.train_frames) == 8 and res.frames.shape[0] == 16


def test_temporal_features_use_neighbors(small_acquisition):
    _, _, acq = small_acquisition
    res = train_interpolation("temporal", 2, acq,
                              estimator=DAINRReconstructor(use_features=True, feature_channels=4, **FAST))
    assert res.estimator.extractor_.in_channels == 4
    assert set(res.estimator.features_) == set(range(8))


def test_spatial_interpolation_sizes():
    gt = generate_phantom(cardiac_phantom(128, 2))
    maps = generate_coil_maps(128, 1)
    res = train_interpolation("spatial", 2, ground_truth=gt, coil_maps=maps, spokes_per_frame=8,
                              estimator=DAINRReconstructor(**{**FAST, "n_iter": 1}), simulate_with="nufft")
    assert (res.train_size, res.inference_size) == (64, 128)
    assert res.frames.shape == (2, 128, 128)


def test_invalid_interpolation_requests(small_acquisition):
    gt, maps, acq = small_acquisition
    with pytest.raises(ValueError):
        train_interpolation("temporal", 4, acq)
    with pytest.raises(ValueError):
        train_interpolation("temporal", 2.5, acq)
    with pytest.raises(ValueError):
        train_interpolation("spatial", 3.0, ground_truth=gt, coil_maps=maps, spokes_per_frame=5)
    with pytest.raises(ValueError):
        train_interpolation("spatial", 2.0, acquisition=acq)
    with pytest.raises(ValueError):
        train_interpolation("sideways", 2, acq)
    with pytest.raises(ValueError):
        train_interpolation("temporal", 2, acq.subset([0, 1, 2]))


def test_small_image_gets_valid_default_grid():
    from dainr.estimators import _grid_config

    cfg = _grid_config(DAINRReconstructor(), 16)
    assert cfg.growth > 1.0
    assert cfg.resolutions()[-1] == 32
    assert _grid_config(DAINRReconstructor(), 64).resolutions()[-1] == 64
