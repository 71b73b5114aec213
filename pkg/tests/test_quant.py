import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from evgesture.model import TrainConfig, compute_loss, forward, init_params, predict, train
from evgesture.model.layers import dense_backward, dense_forward
from evgesture.quant.integer import conv_int, dense_int
from evgesture.quant import (
    AccumulatorOverflowError, FakeQuantState, QuantizedLayer, RangeObserver, UncalibratedError, calibrate,
    calibrate_model, dequantize_activation, dequantize_weights, fake_quant_activation, fake_quant_forward,
    integer_forward, integer_predict, load_quantized, qparams_from_range, quantize_activation,
    quantize_model, quantize_multiplier, quantize_weights, requantize, round_half_away, save_quantized,
)

from test_model import SMALL, toy_data

UNIT = (2**30, 30)  # multiplier exactly 1.0


# weights -------------------------------------------------------------------


def test_weight_example():
    q, s = quantize_weights(np.array([[-1.0], [0.5], [1.0]]))
    assert s[0] == pytest.approx(1 / 127)
    assert q[:, 0].tolist() == [-127, 64, 127]
    assert q.dtype == np.int8


def test_all_zero_channel():
    w = np.zeros((3, 3, 2, 2))
    w[..., 1] = 0.3
    q, s = quantize_weights(w)
    assert s[0] == 1.0 and np.all(q[..., 0] == 0)
    assert s[1] == pytest.approx(0.3 / 127)


def test_round_half_away():
    np.testing.assert_array_equal(round_half_away([-2.5, -1.5, -0.5, 0.5, 1.5, 2.5, 0.49]), [-3, -2, -1, 1, 2, 3, 0])


@settings(max_examples=100)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=4, max_side=5), elements=st.floats(-10, 10)))
def test_weight_roundtrip_bound(w):
    q, s = quantize_weights(w)
    err = np.abs(dequantize_weights(q, s) - w)
    assert np.all(err <= s / 2 * (1 + 1e-9) + 1e-15)
    assert np.all(np.abs(q.astype(int)) <= 127)


def test_nonfinite_weights_rejected():
    with pytest.raises(ValueError):
        quantize_weights(np.array([[np.inf]]))


# activations ---------------------------------------------------------------


def test_zero_maps_to_zero_point():
    for lo, hi in [(-1.0, 3.0), (0.0, 2.0), (-5.0, 0.1), (-2.0, -1.0)]:
        scale, zp = qparams_from_range(lo, hi)
        assert quantize_activation(0.0, scale, zp) == zp
        assert dequantize_activation(zp, scale, zp) == 0.0


def test_saturation():
    scale, zp = qparams_from_range(-1.0, 1.0)
    assert quantize_activation(1e6, scale, zp) == 255
    assert quantize_activation(-1e6, scale, zp) == 0
    with pytest.raises(ValueError):
        quantize_activation(1.0, 0.0, 0)


@settings(max_examples=100)
@given(st.floats(-50, 0), st.floats(0.01, 50), st.integers(0, 2**31))
def test_activation_roundtrip_bound(lo, hi, seed):
    scale, zp = qparams_from_range(lo, hi)
    assert 0 <= zp <= 255 and isinstance(zp, int)
    a = np.random.default_rng(seed).uniform(lo, hi, 500)
    inside = (a >= -zp * scale) & (a <= (255 - zp) * scale)
    err = np.abs(dequantize_activation(quantize_activation(a, scale, zp), scale, zp) - a)
    assert np.all(err[inside] <= scale / 2 * (1 + 1e-9))


@settings(max_examples=100)
@given(st.floats(-20, 20, allow_subnormal=False), st.floats(-20, 20, allow_subnormal=False))
def test_fake_quant_idempotent(lo, hi):
    scale, zp = qparams_from_range(min(lo, hi), max(lo, hi))
    a = np.linspace(min(lo, hi) - 1, max(lo, hi) + 1, 101)
    once, _ = fake_quant_activation(a, scale, zp)
    twice, _ = fake_quant_activation(once, scale, zp)
    np.testing.assert_array_equal(once, twice)


def test_fake_quant_weights_idempotent(rng):
    from evgesture.quant.fake import fake_quant_weights

    w = rng.standard_normal((3, 3, 4, 5))
    once = fake_quant_weights(w)
    np.testing.assert_allclose(fake_quant_weights(once), once, rtol=0, atol=1e-15)


def test_ste_mask():
    scale, zp = qparams_from_range(-1.0, 1.0)
    a = np.array([-5.0, -0.9, 0.0, 0.5, 0.99, 3.0])
    _, mask = fake_quant_activation(a, scale, zp)
    assert mask.tolist() == [0.0, 1.0, 1.0, 1.0, 1.0, 0.0]


def test_ste_gradient_through_network_hook(rng):
    """Backward through a fake-quant point multiplies the upstream gradient by the mask."""
    p = init_params(SMALL, 0, np.float64)
    state = calibrate_model(p, SMALL, rng.uniform(0, 1, (16, 16, 16, 2)))
    out = fake_quant_forward(rng.uniform(0, 3, (4, 16, 16, 2)), p, SMALL, state)
    mask = out.cache["m.s2.in"]
    assert set(np.unique(mask)) <= {0.0, 1.0} and mask.min() == 0.0


# calibration ---------------------------------------------------------------


@pytest.mark.parametrize("v", [0.7, -2.0, 3.5])
def test_constant_stream_converges(v):
    obs = calibrate([np.full(10, v)] * 50, RangeObserver(0.99))
    lo, hi = min(0.0, v), max(0.0, v)
    scale, zp = obs.qparams()
    assert scale == pytest.approx((hi - lo) / 255, abs=1e-9)
    assert 0 <= zp <= 255


def test_ema_converges_to_new_range():
    obs = RangeObserver(0.99)
    obs.update(np.array([-10.0, 10.0]))
    for _ in range(3000):
        obs.update(np.array([-1.0, 2.0]))
    assert obs.lo == pytest.approx(-1.0, abs=1e-9) and obs.hi == pytest.approx(2.0, abs=1e-9)
    assert obs.qparams()[0] == pytest.approx(3.0 / 255, abs=1e-9)


def test_empty_stream_rejected():
    with pytest.raises(ValueError):
        calibrate([])


def test_uncalibrated_state_errors(rng):
    p = init_params(SMALL)
    x = rng.uniform(0, 1, (2, 16, 16, 2)).astype(np.float32)
    with pytest.raises(UncalibratedError):
        fake_quant_forward(x, p, SMALL, FakeQuantState(SMALL))
    with pytest.raises(UncalibratedError):
        FakeQuantState(SMALL).act_qparams()


def test_disabled_state_is_exact_passthrough(rng):
    p = init_params(SMALL, 2)
    x = rng.uniform(0, 1, (5, 16, 16, 2)).astype(np.float32)
    a = forward(x, p, SMALL)
    b = fake_quant_forward(x, p, SMALL, FakeQuantState(SMALL, enabled=False))
    for f in ("bbox", "hand_presence", "class_logits"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


def test_state_serialises(rng):
    p = init_params(SMALL, 2)
    state = calibrate_model(p, SMALL, rng.uniform(0, 1, (8, 16, 16, 2)).astype(np.float32))
    back = FakeQuantState.from_dict(SMALL, state.to_dict())
    assert back.act_qparams() == state.act_qparams()


# integer kernels -----------------------------------------------------------


def _layer(kind, w, bias, zx=0, zy=128, floor=0, stride=1, pad=0, mult=UNIT):
    cout = w.shape[-1]
    ly = QuantizedLayer(
        "probe", kind, w.astype(np.int8), np.ones(cout), np.asarray(bias, np.int32), 1.0, zx, 1.0, zy,
        np.full(cout, mult[0], np.int64), np.full(cout, mult[1], np.int64), stride, pad,
    )
    return ly, floor


def test_unit_multiplier():
    assert quantize_multiplier(1.0) == UNIT
    m0, shift = quantize_multiplier(0.0123)
    assert 2**30 <= m0 < 2**31
    assert m0 * 2.0**-shift == pytest.approx(0.0123, rel=1e-9)


def _raw_conv(x, w, bias, zx, pad=0):
    """Kernel output with multiplier 1, output zero-point 128 and no ReLU floor: 128 + acc."""
    cout = w.shape[-1]
    y, _ = conv_int(x, zx, w.astype(np.int8), np.asarray(bias, np.int32), 1, pad,
                    np.full(cout, UNIT[0], np.int64), np.full(cout, UNIT[1], np.int64), 128, 0, np.zeros(cout, np.int32))
    return y.astype(int) - 128


def _raw_dense(x, w, bias, zx):
    cout = w.shape[-1]
    y, _ = dense_int(x, zx, w.astype(np.int8), np.asarray(bias, np.int32),
                     np.full(cout, UNIT[0], np.int64), np.full(cout, UNIT[1], np.int64), 128, 0, np.zeros(cout, np.int32))
    return y.astype(int) - 128


HAND_X = np.array([[[4, 3], [5, 1], [3, 3]],
                   [[10, 0], [3, 7], [6, 6]],
                   [[0, 0], [2, 9], [3, 4]]], np.uint8)[None]
# 1x1 weights: out0 = x0 (identity), out1 = 2*x0 - x1; input zero-point 3; biases 5 and -4
HAND_W = np.array([[[[1, 2], [0, -1]]]])
HAND_ACC0 = [[6, 7, 5], [12, 5, 8], [2, 4, 5]]
HAND_ACC1 = [[-2, 2, -4], [13, -8, -1], [-7, -12, -5]]


def test_conv_1x1_hand_trace():
    acc = _raw_conv(HAND_X, HAND_W, [5, -4], zx=3)
    assert acc[0, :, :, 0].tolist() == HAND_ACC0
    assert acc[0, :, :, 1].tolist() == HAND_ACC1


def test_layer_run_applies_fused_relu():
    ly, _ = _layer("conv", HAND_W, [5, -4], zx=3)
    y = ly.run(HAND_X).astype(int) - 128
    assert y[0, :, :, 1].tolist() == np.maximum(HAND_ACC1, 0).tolist()


def test_zero_input_accumulators_equal_bias():
    rng = np.random.default_rng(3)
    bias = rng.integers(-100, 100, 6)
    acc = _raw_conv(np.full((2, 5, 5, 4), 17, np.uint8), rng.integers(-127, 128, (3, 3, 4, 6)), bias, zx=17, pad=1)
    assert np.all(acc == bias)
    acc = _raw_dense(np.full((3, 9), 40, np.uint8), rng.integers(-127, 128, (9, 6)), bias, zx=40)
    assert np.all(acc == bias)


def test_checked_mode_reports_overflow_layer():
    ly, _ = _layer("dense", np.ones((2, 1)), [2**31 - 1])
    x = np.array([[1, 1]], np.uint8)
    ly.run(x)  # unchecked: wraps silently
    with pytest.raises(AccumulatorOverflowError, match="probe"):
        ly.run(x, checked=True)


@settings(max_examples=200)
@given(st.integers(-(2**31), 2**31 - 2), st.integers(1, 2**31 - 1), st.floats(1e-6, 4.0))
def test_requant_monotone_and_rounds(a, d, m):
    m0, shift = quantize_multiplier(m)
    lo, hi = requantize([a, a + min(d, 2**31 - 1 - a)], m0, shift)
    assert lo <= hi
    exact = a * m0 / 2.0**shift
    assert abs(int(lo) - exact) <= 0.5 + 1e-6 * max(1, abs(exact))


def test_numba_requant_matches_reference(rng):
    accs = rng.integers(-(2**20), 2**20, 300)
    w = accs.reshape(-1, 1)
    # one-input dense layer with x - zx = 1 exposes requant(acc) directly
    for m in (0.5, 0.0137, 0.25):
        m0, shift = quantize_multiplier(m)
        ly, _ = _layer("dense", np.ones((1, 1)), [0], zx=0, zy=0, mult=(m0, shift))
        for acc in accs[:50]:
            ly.bias = np.array([acc], np.int32)
            got = int(ly.run(np.zeros((1, 1), np.uint8))[0, 0])
            ref = int(np.clip(requantize(acc, m0, shift), 0, 255))
            assert got == ref


# integer model vs fake quant ------------------------------------------------


@pytest.fixture(scope="module")
def quantised():
    data = toy_data(512, seed=4)
    cfg = dataclasses.replace(SMALL)
    params, _ = train(data, init_params(cfg, 0), cfg, TrainConfig(epochs=5, batch_size=32))
    state = calibrate_model(params, cfg, data.x[:256])
    state.observe = False
    return data, params, cfg, state, quantize_model(params, cfg, state)


def test_weight_zero_points_are_zero(quantised):
    qm = quantised[4]
    for ly in qm.layers.values():
        assert np.all(ly.weight_zero_points == 0)
        assert ly.weight.dtype == np.int8 and ly.bias.dtype == np.int32
        assert 0 <= ly.in_zero_point <= 255 and 0 <= ly.out_zero_point <= 255


def test_integer_matches_fake_quant(quantised):
    _, params, cfg, state, qm = quantised
    x = toy_data(1000, seed=99).x
    fq = predict(params, x, cfg, quantizer=state)["probs"]
    iq = integer_predict(qm, x)["probs"]
    agree = np.mean(fq.argmax(1) == iq.argmax(1))
    assert agree >= 0.99
    assert np.abs(fq - iq).max() <= 1e-2


def test_integer_deterministic(quantised):
    qm = quantised[4]
    x = toy_data(64, seed=5).x
    a, b = integer_forward(x, qm), integer_forward(x, qm, checked=True)
    np.testing.assert_array_equal(a.class_logits, b.class_logits)


def test_container_roundtrip(quantised, tmp_path):
    qm = quantised[4]
    save_quantized(tmp_path / "q.bin", qm)
    back = load_quantized(tmp_path / "q.bin")
    assert back.config == qm.config and back.act_qparams == {k: tuple(v) for k, v in qm.act_qparams.items()}
    x = toy_data(32, seed=6).x
    np.testing.assert_array_equal(integer_forward(x, qm).class_logits, integer_forward(x, back).class_logits)


def test_qat_loss_close_to_float(quantised):
    data, params, cfg, state, _ = quantised

    def loss(p, q):
        out = forward(data.x, p, cfg, quantizer=q)
        return compute_loss(out, data.bboxes, data.labels, data.present).total

    float_loss = loss(params, None)
    qstate = calibrate_model(params, cfg, data.x[:256])
    qat, _ = train(data, params.copy(), cfg, TrainConfig(epochs=5, batch_size=32, lr=5e-5), quantizer=qstate)
    qstate.observe = False
    assert abs(loss(qat, qstate) - float_loss) <= 0.1 * float_loss


def test_dense_backward_unaffected_by_mask_none():
    # a passthrough point returns mask None, which backward treats as identity
    x, w, b = np.ones((2, 3)), np.ones((3, 2)), np.zeros(2)
    _, cache = dense_forward(x, w, b)
    dx, _, _ = dense_backward(np.ones((2, 2)), cache)
    assert dx.shape == (2, 3)
