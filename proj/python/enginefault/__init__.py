"""Engine fault toolkit: corpus synthesis, windowing and sequence classifiers.

The heavy lifting lives in the compiled `_core` module; this package keeps the
import surface flat. Pipeline stages take the same JSON configuration the
command-line tool uses; `default_config()` returns the full schema with
defaults to start from.
"""

from ._core import (
    ConfigError,
    attention_weights,
    cross_entropy,
    default_config,
    evaluate,
    generate,
    multi_head_attention,
    predict,
    preprocess,
    softmax,
    train,
)

__all__ = [
    "ConfigError",
    "attention_weights",
    "cross_entropy",
    "default_config",
    "evaluate",
    "generate",
    "multi_head_attention",
    "predict",
    "preprocess",
    "softmax",
    "train",
]
