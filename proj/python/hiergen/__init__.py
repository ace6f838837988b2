"""Hierarchical paragraph encoders for question generation."""

from _hiergen import (  # noqa: F401
    EvalReport,
    bio_tag,
    bleu,
    evaluate_corpus,
    gradcheck_toy,
    hatt,
    lcs_length,
    positional_encoding,
    rouge_l,
    sentence_split,
    softmax,
    sparsemax,
    tokenize,
    toy_loss,
)

__all__ = [
    "EvalReport",
    "bio_tag",
    "bleu",
    "evaluate_corpus",
    "gradcheck_toy",
    "hatt",
    "lcs_length",
    "positional_encoding",
    "rouge_l",
    "sentence_split",
    "softmax",
    "sparsemax",
    "tokenize",
    "toy_loss",
]
