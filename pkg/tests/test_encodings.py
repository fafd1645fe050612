import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dainr import autodiff as ad
from dainr.autodiff import Tensor
from dainr.encodings import (HashGrid, HashGridConfig, frequency_encode, frequency_encode_array, grid_resolution,
                             growth_factor, hash_encode, hash_index, is_dense_level)
from helpers import central_difference_check


# -- frequency encoding --------------------------------------------------

def test_frequency_encode_at_zero():
    np.testing.assert_allclose(frequency_encode_array(0.0, 3), [0, 1, 0, 1, 0, 1])


def test_frequency_encode_at_one():
    np.testing.assert_allclose(frequency_encode_array(1.0, 1), [0, -1], atol=1e-15)


def test_frequency_encode_quarter():
    r = math.sqrt(0.5)
    np.testing.assert_allclose(frequency_encode_array(0.25, 2), [r, r, 1, 0], atol=1e-15)


def test_frequency_encode_layout_per_column():
    p = np.array([[0.1, -0.3]])
    out = frequency_encode(p, 4).data
    assert out.shape == (1, 16)
    np.testing.assert_allclose(out[0, :8], frequency_encode_array(0.1, 4))
    np.testing.assert_allclose(out[0, 8:], frequency_encode_array(-0.3, 4))


def test_frequency_encode_gradient(rng):
    x = rng.uniform(-1, 1, (7, 3))
    w = rng.standard_normal((7, 3 * 12))
    xt = Tensor(x, requires_grad=True)
    ad.sum(ad.mul(frequency_encode(xt, 6), w)).backward()
    err = central_difference_check(lambda: float((frequency_encode_array(x, 6).reshape(7, -1) * w).sum()),
                                   x, xt.grad.copy(), probes=20)
    assert err < 1e-4


# -- grid layout --------------------------------------------------------

def test_grid_resolution_examples():
    cfg = HashGridConfig(growth_factor=2.0, coarsest_resolution=16)
    assert grid_resolution(0, cfg) == 16
    assert grid_resolution(3, cfg) == 128


def test_growth_from_finest_resolution():
    b = growth_factor(16, 512, 16)
    assert b == pytest.approx(math.exp((math.log(512) - math.log(16)) / 15))
    assert b == pytest.approx(1.2599, abs=1e-4)
    cfg = HashGridConfig(finest_resolution=512, growth_factor=None)
    assert cfg.resolutions()[-1] == 512
    assert cfg.resolutions()[0] == 16


def test_resolutions_non_decreasing():
    cfg = HashGridConfig(finest_resolution=64, growth_factor=None)
    res = cfg.resolutions()
    assert all(a <= b for a, b in zip(res, res[1:]))


def test_level_out_of_range_rejected():
    with pytest.raises(IndexError):
        grid_resolution(16, HashGridConfig())


@pytest.mark.parametrize("kwargs", [dict(table_size=1000), dict(levels=0), dict(growth_factor=1.0),
                                    dict(growth_factor=None)])
def test_invalid_config_rejected(kwargs):
    with pytest.raises(ValueError):
        HashGridConfig(**kwargs)


def test_dense_index_row_major():
    cfg = HashGridConfig(levels=1, table_size=2**14, coarsest_resolution=16)
    assert is_dense_level(0, cfg)
    assert hash_index([0, 0], 0, cfg) == 0
    assert hash_index([1, 0], 0, cfg) == 1
    assert hash_index([0, 1], 0, cfg) == 17


def test_hashed_index_in_range_and_deterministic(rng):
    cfg = HashGridConfig(levels=4, table_size=2**8, coarsest_resolution=64)
    assert not is_dense_level(0, cfg)
    cells = rng.integers(0, 65, (500, 2))
    a = hash_index(cells, 0, cfg)
    assert a.min() >= 0 and a.max() < cfg.table_size
    np.testing.assert_array_equal(a, hash_index(cells, 0, cfg))


def test_hashed_index_matches_xor_formula():
    cfg = HashGridConfig(levels=1, table_size=2**8, coarsest_resolution=64)
    x, y = 37, 51
    expected = (x * 1 ^ y * 2654435761) % 2**8
    assert hash_index([x, y], 0, cfg) == expected


# -- interpolation -------------------------------------------------------

def _grid(rng, **kw):
    cfg = HashGridConfig(**{"levels": 3, "table_size": 2**10, "coarsest_resolution": 4, "growth_factor": 2.0, **kw})
    tables = Tensor(rng.standard_normal((cfg.levels, cfg.table_size, cfg.features_per_entry)), requires_grad=True)
    return cfg, tables


def test_exact_at_vertices(rng):
    cfg, tables = _grid(rng)
    out = hash_encode(np.array([[0.0, 0.5]]), tables, cfg).data
    for level in range(cfg.levels):
        res = grid_resolution(level, cfg)
        cell = np.rint((np.array([0.0, 0.5]) + 1) * res / 2).astype(int)
        idx = hash_index(cell, level, cfg)
        np.testing.assert_allclose(out[0, 2 * level:2 * level + 2], tables.data[level, idx], atol=1e-12)


def test_cell_center_is_corner_mean(rng):
    cfg, tables = _grid(rng, levels=1)
    res = grid_resolution(0, cfg)
    # centre of cell (1, 2)
    p = (np.array([1.5, 2.5]) / res) * 2 - 1
    out = hash_encode(p[None], tables, cfg).data[0]
    corners = [hash_index(c, 0, cfg) for c in ([1, 2], [2, 2], [1, 3], [2, 3])]
    np.testing.assert_allclose(out, tables.data[0, corners].mean(axis=0), atol=1e-12)


def test_hash_encode_gradients(rng):
    cfg, tables = _grid(rng, table_size=2**6, coarsest_resolution=6)  # mixes dense and hashed levels
    x = rng.uniform(-0.95, 0.95, (25, 2))
    w = rng.standard_normal((25, cfg.output_dim))
    xt = Tensor(x, requires_grad=True)
    ad.sum(ad.mul(hash_encode(xt, tables, cfg), w)).backward()

    def loss():
        return float((hash_encode(x, tables, cfg).data * w).sum())

    assert central_difference_check(loss, tables.data, tables.grad.copy(), probes=40) < 1e-4
    assert central_difference_check(loss, x, xt.grad.copy(), probes=20) < 1e-4


def test_three_dimensional_grid(rng):
    cfg, tables = _grid(rng, dims=3)
    out = hash_encode(rng.uniform(-1, 1, (10, 3)), tables, cfg)
    assert out.shape == (10, cfg.output_dim)


def test_nan_coordinate_rejected(rng):
    cfg, tables = _grid(rng)
    with pytest.raises(ValueError):
        hash_encode(np.array([[np.nan, 0.0]]), tables, cfg)


@settings(max_examples=40, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_constant_table_gives_constant_output(x, y):
    cfg = HashGridConfig(levels=2, table_size=2**8, coarsest_resolution=4, growth_factor=3.0)
    tables = Tensor(np.full((2, 2**8, 2), 0.7))
    np.testing.assert_allclose(hash_encode(np.array([[x, y]]), tables, cfg).data, 0.7, atol=1e-12)


def test_hash_grid_output_dim():
    g = HashGrid(HashGridConfig())
    assert g.encode(np.zeros((3, 2))).shape == (3, 32)
