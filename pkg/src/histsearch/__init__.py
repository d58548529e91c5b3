"""Repository-level code search over git commit history.

BM25 over commit messages finds similar past changes; their scores aggregate
to files, filter to the current snapshot, and two reranking stages (commit
messages, then code patches) reorder the head of the list.
"""

__version__ = "0.1.0"
