"""Read-only bindings for ostd index files, for analysis notebooks.

Opens a manifest of per-subset suffix-array index files and answers
cross-subset count queries with results identical to the main engine's.
The bindings parse the on-disk formats directly (versioned index files,
JSON manifest, vocabulary sidecar) and never build or mutate an index.

Index search walks a read-only memory map and holds no Python-level
locks, so a handle may be shared across reader threads; ``close`` is the
only exclusive operation.
"""

from ostd_bridge.bridge import (  # noqa: F401
    INDEX_FORMAT_VERSION,
    BoundIndexHandle,
    BridgeError,
    CorruptIndexError,
    CountResult,
    HandleClosedError,
    UnknownTokenError,
    close,
    count_text,
    count_tokens,
    count_tokens_batch,
    expand_phrase_variants,
    open_manifest,
)

__version__ = "0.1.0"
