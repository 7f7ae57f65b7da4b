"""DOA-gated IVA speech separation.

Thin wrapper over the native ``_core`` module: configs and reports travel as
dicts here and as JSON inside the extension.
"""

import json

from . import _core
from ._core import (
    SAMPLE_RATE,
    BssgateError,
    DecodeError,
    IoError,
    NumericalError,
    PreconditionError,
    ValidationError,
    doa_feature,
    gcc_class,
    read_wav,
    sdr,
    seg_snr,
    stft_roundtrip,
    write_wav,
)

__version__ = _core.__version__

__all__ = [
    "SAMPLE_RATE",
    "BssgateError",
    "DecodeError",
    "IoError",
    "NumericalError",
    "PreconditionError",
    "ValidationError",
    "doa_feature",
    "fnn_predict",
    "fnn_train",
    "gcc_class",
    "read_wav",
    "run_bench",
    "run_stream",
    "sdr",
    "seg_snr",
    "simulate_moving_source",
    "simulate_scene",
    "stft_roundtrip",
    "write_wav",
]


def simulate_scene(duration_s=6.0, **scene):
    """Render a two-mic scene. Keyword arguments are scene config keys."""
    return _core.simulate_scene(json.dumps(scene), duration_s)


def simulate_moving_source(angles, segment_s=3.0, **scene):
    """One source hopping between ``angles``; adds per-frame truth labels."""
    return _core.simulate_moving_source(json.dumps(scene), list(angles), segment_s)


def run_stream(mixture, pipeline=None, model=None, truth_labels=None):
    """Stream a (2, n) mixture through the pipeline.

    Returns the separated mono signal and the update stats as a dict.
    ``model`` is a model dict as produced by :func:`fnn_train`.
    """
    model_json = None if model is None else json.dumps(model)
    out, stats = _core.run_stream(mixture, json.dumps(pipeline or {}), model_json, list(truth_labels or []))
    return out[0], json.loads(stats)


def fnn_train(features, labels, **train):
    """Train the DOA classifier; returns (model dict, train acc, validation acc)."""
    model, train_acc, val_acc = _core.fnn_train(features, list(labels), json.dumps(train))
    return json.loads(model), train_acc, val_acc


def fnn_predict(model, feature):
    """Class label and probabilities for one 13-value feature."""
    return _core.fnn_predict(json.dumps(model), list(feature))


def run_bench(angles=None, segment_s=3.0, subject="gated", baseline="per_frame", **scene):
    """Moving-source update-count benchmark; returns the report dict."""
    scene_json = json.dumps(scene) if scene else None
    return json.loads(_core.run_bench(scene_json, list(angles or []), segment_s, subject, baseline))
