"""Python bindings for the dki toolkit."""

from ._core import (
    IoError,
    SubwordVocab,
    ValidationError,
    __version__,
    auxiliary_sentence,
    build_examples,
    build_vocab,
    corpus_stats,
    disease_loss,
    disease_vocabulary,
    extract_passages,
    in_branch,
    normalize_term,
    qa_target_score,
    run_cli,
)

__all__ = [
    "IoError",
    "SubwordVocab",
    "ValidationError",
    "__version__",
    "auxiliary_sentence",
    "build_examples",
    "build_vocab",
    "corpus_stats",
    "disease_loss",
    "disease_vocabulary",
    "extract_passages",
    "in_branch",
    "normalize_term",
    "qa_target_score",
    "run_cli",
]
