import numpy as np
import pytest

from dainr import autodiff as ad
from dainr.autodiff import Tensor
from dainr.encodings import HashGridConfig
from dainr.networks import (MLP, DAINRModel, FeatureExtractor, lattice, lattice_coords, load_checkpoint,
                            save_checkpoint, upsample_bilinear)
from helpers import central_difference_check

SMALL_GRID = HashGridConfig(levels=4, table_size=2**10, coarsest_resolution=4, growth_factor=None,
                            finest_resolution=16)


def _model(**kw):
    return DAINRModel(SMALL_GRID, hidden_width=16, hidden_layers=2, dtype=np.float64, **kw)


def test_deformation_input_dimension():
    m = DAINRModel()
    assert m.deformation_net.in_dim == 2 * 2 * 10 + 2 * 6 == 52
    assert m.deformation_net.out_dim == 2
    assert m.canonical_net.in_dim == 16 * 2


def test_deform_zero_at_canonical_time(rng):
    m = _model()
    d = m.deform(rng.uniform(-1, 1, (30, 2)), 0.0).data
    assert np.array_equal(d, np.zeros((30, 2)))


def test_deform_respects_configured_canonical_time(rng):
    m = _model(canonical_time=-1.0)
    xy = rng.uniform(-1, 1, (5, 2))
    assert not np.any(m.deform(xy, -1.0).data)
    assert np.any(m.deform(xy, 0.0).data)


def test_untrained_deformation_finite_and_deterministic(rng):
    xy = rng.uniform(-1, 1, (10, 2))
    a = _model(seed=4).deform(xy, 0.3).data
    b = _model(seed=4).deform(xy, 0.3).data
    assert a.shape == (10, 2) and np.all(np.isfinite(a))
    np.testing.assert_array_equal(a, b)


def test_canonical_query_zero_tables_and_biases():
    m = _model()
    m.hash_grid.tables.data[:] = 0
    for p in m.canonical_net.parameters():
        if p.name.endswith("bias"):
            p.data[:] = 0
    np.testing.assert_array_equal(m.canonical_query(np.zeros((3, 2))).data, 0)


def test_canonical_query_gradient_to_table(rng):
    m = _model()
    m.hash_grid.tables.data[:] = rng.standard_normal(m.hash_grid.tables.shape)
    xy = rng.uniform(-0.9, 0.9, (20, 2))

    def loss():
        return float(ad.sum(ad.getitem(m.canonical_query(xy), (slice(None), 0))).data)

    m.zero_grad()
    ad.sum(ad.getitem(m.canonical_query(xy), (slice(None), 0))).backward()
    g = m.hash_grid.tables.grad.copy()
    # probe only entries that the points touch
    touched = np.flatnonzero(g)
    rng2 = np.random.default_rng(0)
    worst = 0.0
    flat = m.hash_grid.tables.data.reshape(-1)
    for i in rng2.choice(touched, 20, replace=False):
        orig = flat[i]
        flat[i] = orig + 1e-6
        up = loss()
        flat[i] = orig - 1e-6
        down = loss()
        flat[i] = orig
        num = (up - down) / 2e-6
        worst = max(worst, abs(num - g.reshape(-1)[i]) / max(abs(num), 1e-8))
    assert worst < 1e-4


def test_full_render_gradient_through_deformation(rng):
    m = _model(canonical_time=-1.0, deform_init_scale=1.0)
    m.hash_grid.tables.data[:] = rng.standard_normal(m.hash_grid.tables.shape)
    w = rng.standard_normal((16, 2))

    def loss():
        return float(ad.sum(ad.mul(m.render(0.4, 4), w)).data)

    m.zero_grad()
    ad.sum(ad.mul(m.render(0.4, 4), w)).backward()
    for p in m.deformation_net.parameters():
        assert central_difference_check(loss, p.data, p.grad.copy(), probes=20) < 1e-4


def test_feature_dimension_mismatch_rejected():
    m = _model(feature_channels=3)
    with pytest.raises(ValueError):
        m.canonical_query(np.zeros((4, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        _model().canonical_query(np.zeros((4, 2)), np.zeros((4, 3)))


@pytest.mark.parametrize("scale,size", [(1.0, 4), (2.0, 8), (1.5, 6)])
def test_render_shape_follows_scale(scale, size):
    img = _model().render_frame(0.2, 4, scale=scale)
    assert img.shape == (size, size) and np.iscomplexobj(img)


def test_scale_below_one_rejected():
    with pytest.raises(ValueError):
        _model().render_frame(0.0, 4, scale=0.5)


def test_canonical_render_bypasses_deformation():
    m = _model()
    direct = m.canonical_query(lattice_coords(8, 8)).data
    rendered = m.render(0.0, 8).data
    np.testing.assert_array_equal(rendered, direct)


def test_double_lattice_contains_base_lattice():
    np.testing.assert_array_equal(lattice(16)[::2], lattice(8))
    m = _model(canonical_time=-1.0, deform_init_scale=1.0)
    np.testing.assert_allclose(m.render_frame(0.5, 8, scale=2.0)[::2, ::2], m.render_frame(0.5, 8), atol=1e-12)


def test_nearest_resampling_replicates_deformation():
    m = _model(canonical_time=-1.0, deform_init_scale=1.0)
    a = m.render_frame(0.5, 4, scale=2.0, resample="nearest")
    assert a.shape == (8, 8)
    np.testing.assert_allclose(a[::2, ::2], m.render_frame(0.5, 4), atol=1e-12)


def test_mlp_init_is_seeded():
    a = MLP(3, 2, 8, 2, np.random.default_rng(1))
    b = MLP(3, 2, 8, 2, np.random.default_rng(1))
    for p, q in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(p.data, q.data)


# -- feature extractor ---------------------------------------------------

def test_identity_kernel_on_constant_image():
    k = np.zeros((2, 2, 3, 3))
    k[0, 0, 1, 1] = k[1, 1, 1, 1] = 1.0
    fx = FeatureExtractor(kernels=[k])
    out = fx(np.full((8, 8), 2.0 + 1.0j))
    assert np.ptp(out[0]) == 0 and np.ptp(out[1]) == 0


def test_two_neighbor_mode_doubles_input_channels():
    one, two = FeatureExtractor(in_frames=1), FeatureExtractor(in_frames=2)
    assert two.in_channels == 2 * one.in_channels == 4
    out = two([np.ones((6, 6)), np.zeros((6, 6))])
    assert out.shape == (16, 6, 6)
    with pytest.raises(ValueError):
        two(np.ones((6, 6)))


def test_upsampled_features_match_render_size():
    fmap = np.random.default_rng(0).standard_normal((3, 4, 4))
    assert upsample_bilinear(fmap, 8, 8).shape == (3, 8, 8)
    np.testing.assert_allclose(upsample_bilinear(fmap, 8, 8)[:, ::2, ::2], fmap)
    m = _model(feature_channels=3)
    assert m.render_frame(0.0, 4, scale=2.0, features=fmap).shape == (8, 8)


def test_checkpoint_round_trip(tmp_path, rng):
    m = _model(canonical_time=-1.0)
    m.hash_grid.tables.data[:] = rng.standard_normal(m.hash_grid.tables.shape)
    save_checkpoint(m, tmp_path / "ck", {"note": 1})
    m2, extra = load_checkpoint(tmp_path / "ck")
    assert extra == {"note": 1}
    np.testing.assert_array_equal(m.render_frame(0.3, 8), m2.render_frame(0.3, 8))
