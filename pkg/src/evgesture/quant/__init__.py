from .fake import (
    FakeQuantState,
    RangeObserver,
    UncalibratedError,
    calibrate,
    calibrate_model,
    dequantize_activation,
    dequantize_weights,
    fake_quant_activation,
    qparams_from_range,
    quantize_activation,
    quantize_weights,
    round_half_away,
)
from .integer import (
    AccumulatorOverflowError,
    QuantizedLayer,
    QuantizedModel,
    integer_forward,
    integer_predict,
    quantize_model,
    quantize_multiplier,
    requantize,
)


def fake_quant_forward(x, params, config, state: FakeQuantState, training: bool = False, rng=None):
    """``model.forward`` with stage-2/4 weights and activations fake-quantised."""
    from ..model.network import forward

    if state.enabled and state.quantize and not state.calibrated:
        raise UncalibratedError("fake-quant state has not been calibrated")
    return forward(x, params, config, training=training, rng=rng, quantizer=state)


def save_quantized(path, qm: QuantizedModel) -> None:
    from ..model import params_io
    from .integer import to_container

    params_io.save(path, *to_container(qm))


def load_quantized(path) -> QuantizedModel:
    from ..model import params_io
    from .integer import from_container

    return from_container(*params_io.load(path))
