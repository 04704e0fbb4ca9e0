"""ostd: occurrence statistics from training data.

Suffix-array n-gram indexes over tokenized corpora, occurrence-based
and log-probability features for QA generations, and the labeling /
classifier / analysis pipeline on top of them.
"""

__version__ = "0.1.0"

from ostd.suffix_index import INDEX_FORMAT_VERSION  # noqa: F401
