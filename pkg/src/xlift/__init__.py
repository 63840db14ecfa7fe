"""Cross-lingual word embeddings: training, alignment, lexicon induction and domain similarity."""

__version__ = "0.1.0"
