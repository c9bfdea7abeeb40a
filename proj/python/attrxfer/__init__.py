"""Attribute transfer for non-parallel text corpora.

Thin wrapper over the C++ core: joint training of an attention GRU
encoder-decoder with a collaborative CNN classifier, plus the evaluation
stack (oracle classifier, language model, noun-overlap content check).
"""

from attrxfer._core import (
    ConfigError,
    DataError,
    HashMismatch,
    IoError,
    evaluate,
    gradcheck,
    train,
    train_lm,
    train_oracle,
    transfer,
)

__all__ = [
    "ConfigError",
    "DataError",
    "HashMismatch",
    "IoError",
    "evaluate",
    "gradcheck",
    "train",
    "train_lm",
    "train_oracle",
    "transfer",
]
