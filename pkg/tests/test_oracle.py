import numpy as np
import pytest

from convsim.costmodel import mac_count
from convsim.netmodel import ConvLayerConfig
from convsim.oracle import (FilterBank, LayerBounds, conv_direct, count_nonpad_macs, load_tensor,
                            random_layer_gen, save_tensor, word_range)


def test_identity_filter():
    rng = np.random.default_rng(1)
    x = rng.integers(-100, 100, size=(1, 6, 6))
    layer = ConvLayerConfig("id", il=6, ic=1, fl=1, k=1)
    assert np.array_equal(conv_direct(layer, x, FilterBank(np.ones((1, 1, 1, 1)))).output, x)


def test_identity_sums_channels():
    rng = np.random.default_rng(2)
    x = rng.integers(-100, 100, size=(3, 5, 5))
    layer = ConvLayerConfig("id", il=5, ic=3, fl=1, k=2)
    out = conv_direct(layer, x, FilterBank(np.ones((2, 3, 1, 1)))).output
    assert np.array_equal(out[0], x.sum(axis=0)) and np.array_equal(out[1], x.sum(axis=0))


def test_zero_input():
    layer = ConvLayerConfig("z", il=7, ic=2, fl=3, k=3, z=1)
    w = np.random.default_rng(3).integers(-9, 9, size=(3, 2, 3, 3))
    assert not conv_direct(layer, np.zeros((2, 7, 7)), FilterBank(w)).output.any()


def test_overlap_counts():
    layer = ConvLayerConfig("ones", il=4, ic=1, fl=3, k=1, z=1)
    out = conv_direct(layer, np.ones((1, 4, 4)), FilterBank(np.ones((1, 1, 3, 3)))).output[0]
    assert out[0, 0] == 4 and out[0, 3] == 4 and out[3, 3] == 4
    assert out[1, 1] == 9 and out[2, 2] == 9
    assert out[0, 1] == 6


def test_bias_added():
    layer = ConvLayerConfig("b", il=3, ic=1, fl=1, k=2)
    out = conv_direct(layer, np.zeros((1, 3, 3)), FilterBank(np.zeros((2, 1, 1, 1)), [5, -7])).output
    assert (out[0] == 5).all() and (out[1] == -7).all()


def test_linearity():
    layer, x, f = random_layer_gen(11, LayerBounds(k=(1, 8)))
    x = x // 64
    y1 = conv_direct(layer, x, f).output
    assert np.array_equal(conv_direct(layer, 3 * x, f).output, 3 * y1)


def test_shape_mismatch():
    layer = ConvLayerConfig("m", il=5, ic=2, fl=3, k=1)
    with pytest.raises(ValueError):
        conv_direct(layer, np.zeros((1, 5, 5)), FilterBank(np.zeros((1, 2, 3, 3))))


def test_mac_counters():
    layer = ConvLayerConfig("p", il=8, ic=2, fl=3, k=4, z=1)
    r = conv_direct(layer, np.ones((2, 8, 8)), FilterBank(np.ones((4, 2, 3, 3))))
    assert r.total_macs_including_pads == 4 * 64 * 9 * 2
    assert r.non_pad_macs == mac_count(2, 4, 3, 8, 1) == count_nonpad_macs(layer)
    assert r.non_pad_macs <= r.total_macs_including_pads


@pytest.mark.parametrize("fl", [1, 3, 5, 7])
@pytest.mark.parametrize("ol", [4, 9, 15])
def test_same_padding_macs(fl, ol):
    z = (fl - 1) // 2
    layer = ConvLayerConfig("s", il=ol, ic=2, fl=fl, k=3, z=z)
    r = conv_direct(layer, np.ones((2, ol, ol)), FilterBank(np.ones((3, 2, fl, fl))))
    assert r.non_pad_macs == count_nonpad_macs(layer)
    if z <= 1:
        assert r.non_pad_macs == mac_count(2, 3, fl, ol, z)


def test_wide_values_exact():
    # products beyond int64 take the object path and stay exact
    layer = ConvLayerConfig("big", il=2, ic=1, fl=1, k=1)
    big = 1 << 40
    out = conv_direct(layer, np.full((1, 2, 2), big), FilterBank(np.full((1, 1, 1, 1), big))).output
    assert int(out[0, 0, 0]) == big * big


def test_random_determinism():
    a, b = random_layer_gen(5), random_layer_gen(5)
    assert a[0] == b[0] and np.array_equal(a[1], b[1]) and np.array_equal(a[2].weights, b[2].weights)


def test_random_bounds_respected():
    rng = np.random.default_rng(0)
    bounds = LayerBounds(fl=(1, 3))
    lo, hi = word_range(16)
    for _ in range(1000):
        layer, x, f = random_layer_gen(rng, bounds)
        assert layer.fl in (1, 3)
        assert 3 <= layer.il <= 20 and 1 <= layer.ic <= 8 and 1 <= layer.k <= 128
        assert layer.ol >= 1 and layer.s in (1, 2) and layer.z in (0, 1, 3)
        assert x.shape == (layer.ic, layer.il, layer.il)
        assert x.min() >= lo and x.max() <= hi


@pytest.mark.parametrize("suffix", [".npy", ".json"])
def test_tensor_roundtrip(tmp_path, suffix):
    a = np.arange(-12, 12).reshape(2, 3, 4)
    path = tmp_path / f"t{suffix}"
    save_tensor(path, a)
    assert np.array_equal(load_tensor(path), a)
