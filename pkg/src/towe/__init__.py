"""Target-oriented opinion word extraction toolkit.

Pipeline: JSONL corpus -> subword tokenization (WordPiece or BPE) ->
sentence or sentence-aspect input encoding -> BiLSTM sequence labeler ->
exact-span micro-F1 evaluation.
"""

from .corpus import Dataset, SentenceExample, WordLabel, derive_word_labels, load_dataset
from .encoding import EncodedInput, format_sentence_aspect_input, format_sentence_input, mask_aspect
from .errors import ToweError
from .evaluate import EvalReport, decode_spans, micro_f1
from .model import Hyperparameters, Parameters, init_parameters
from .subword import (
    BpeTokenizer,
    MergeTable,
    Tokenization,
    Vocabulary,
    WordpieceTokenizer,
    bpe_tokenize,
    tokenize_sentence,
    train_bpe,
    wordpiece_tokenize,
)

__version__ = "0.1.0"
