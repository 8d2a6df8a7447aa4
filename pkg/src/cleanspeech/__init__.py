"""Batch cleaning for web-crawled speech corpora.

Realigns noisy caption timestamps against precomputed CTC log-posteriors,
filters utterances by three-way language-identification agreement, and prunes
low-confidence alignments with a per-language quantile threshold.
"""

__version__ = "0.1.0"

from cleanspeech.errors import CleanspeechError

__all__ = ["CleanspeechError", "__version__"]
