"""Hierarchical transformer for dictionary-like logs."""

from .hierarchical import MODES, encode_record, run_batch, run_record
from .log_tree import LogTree, build_segments, parse_record, read_corpus
from .model_core import EncoderConfig, EncoderStack, count_params
from .tokenizer import Vocab, build_vocab
from .training import TrainConfig, evaluate, train

__all__ = [
    "MODES", "EncoderConfig", "EncoderStack", "LogTree", "TrainConfig", "Vocab", "build_segments",
    "build_vocab", "count_params", "encode_record", "evaluate", "parse_record", "read_corpus",
    "run_batch", "run_record", "train",
]
__version__ = "0.1.0"
