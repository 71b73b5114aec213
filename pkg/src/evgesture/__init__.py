"""Event-camera microgesture pipeline: simulation, time surfaces, training, quantization, evaluation."""

__version__ = "0.1.0"
