"""Code-aware tokenization and a BM25-scored inverted index over commit
messages. One document per commit; per-document commit dates support masking
out anything at or after a query's timestamp.
"""

import json
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .commit_store import CommitFileRecord

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4

# Order matters: uppercase runs stop before a trailing Capitalized word, so
# URLParser -> URL, Parser; the last alternative keeps non-ASCII letter runs.
_PIECES = re.compile(r"[0-9]+|[A-Z]+(?![a-z])|[A-Z][a-z]*|[a-z]+|[^\W\da-zA-Z_]+")
_ROUGH = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class TokenizerConfig:
    mode: str = "code_aware_default"
    lowercase: bool = True
    vocab_path: str | None = None

    def __post_init__(self):
        if self.mode not in ("code_aware_default", "external_vocab"):
            raise ValueError(f"unknown tokenizer mode {self.mode!r}")
        if self.mode == "external_vocab" and not self.vocab_path:
            raise ValueError("external_vocab mode requires vocab_path")


_VOCAB_CACHE: dict[str, tuple[frozenset[str], int]] = {}


def _load_vocab(path: str) -> tuple[frozenset[str], int]:
    cached = _VOCAB_CACHE.get(path)
    if cached is not None:
        return cached
    tokens = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tok = line.rstrip("\n")
            if tok:
                tokens.add(tok)
    longest = max((len(t) for t in tokens), default=1)
    entry = (frozenset(tokens), longest)
    _VOCAB_CACHE[path] = entry
    return entry


def tokenize(text: str, config: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Deterministic tokenization of queries, messages and code.

    Default mode: NFC normalize, split on any non-alphanumeric character,
    then split camelCase and digit/letter boundaries, lowercase, drop empties.
    Case boundaries are detected before lowercasing, otherwise there would be
    nothing left to split on.

    external_vocab mode segments each alphanumeric chunk by greedy longest
    match against a vocabulary file (UTF-8, one token per line).
    """
    text = unicodedata.normalize("NFC", text)
    if config.mode == "external_vocab":
        return _tokenize_vocab(text, config)
    out = []
    for chunk in _ROUGH.findall(text):
        for piece in _PIECES.findall(chunk):
            out.append(piece.lower() if config.lowercase else piece)
    return out


def _tokenize_vocab(text: str, config: TokenizerConfig) -> list[str]:
    vocab, longest = _load_vocab(config.vocab_path)
    if config.lowercase:
        text = text.lower()
    out = []
    for chunk in _ROUGH.findall(text):
        i = 0
        while i < len(chunk):
            for end in range(min(len(chunk), i + longest), i, -1):
                piece = chunk[i:end]
                if piece in vocab:
                    out.append(piece)
                    i = end
                    break
            else:
                i += 1  # no vocab token starts here
    return out


@dataclass(frozen=True)
class CommitDocument:
    commit_id: str
    commit_date: int
    token_count: int


@dataclass(frozen=True)
class ScoredCommit:
    commit_id: str
    score: float
    commit_date: int


@dataclass
class InvertedIndex:
    tokenizer: TokenizerConfig = TokenizerConfig()
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    doc_table: list[CommitDocument] = field(default_factory=list)
    postings: dict[str, list[tuple[int, int]]] = field(default_factory=dict)

    @property
    def avg_doc_len(self) -> float:
        if not self.doc_table:
            return 0.0
        return sum(d.token_count for d in self.doc_table) / len(self.doc_table)

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        n = len(self.doc_table)
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def build_index(
    records,
    config: TokenizerConfig = TokenizerConfig(),
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> InvertedIndex:
    """Index one document per distinct commit_id; later file records of an
    already-seen commit deduplicate away."""
    index = InvertedIndex(tokenizer=config, k1=k1, b=b)
    seen: set[str] = set()
    for rec in records:
        if rec.commit_id in seen:
            continue
        seen.add(rec.commit_id)
        add_document(index, rec.commit_id, rec.commit_date, rec.commit_message)
    return index


def add_document(index: InvertedIndex, commit_id: str, commit_date: int, message: str) -> None:
    tokens = tokenize(message, index.tokenizer)
    ordinal = len(index.doc_table)
    index.doc_table.append(CommitDocument(commit_id, commit_date, len(tokens)))
    for term, tf in Counter(tokens).items():
        index.postings.setdefault(term, []).append((ordinal, tf))


def search(
    index: InvertedIndex,
    query: str,
    k: int,
    mask_after: int | None = None,
) -> list[ScoredCommit]:
    """Top-k commits by BM25 score, masked before truncation.

    Documents dated at or after mask_after never appear. Repeated query
    tokens contribute once per occurrence. Ties break toward the newer
    commit, then lexicographic commit_id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.doc_table or index.avg_doc_len == 0.0:
        return []
    avg = index.avg_doc_len
    scores: dict[int, float] = {}
    for term in tokenize(query, index.tokenizer):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for ordinal, tf in plist:
            doc = index.doc_table[ordinal]
            norm = index.k1 * (1.0 - index.b + index.b * doc.token_count / avg)
            scores[ordinal] = scores.get(ordinal, 0.0) + idf * tf * (index.k1 + 1.0) / (tf + norm)

    hits = []
    for ordinal, score in scores.items():
        doc = index.doc_table[ordinal]
        if mask_after is not None and doc.commit_date >= mask_after:
            continue
        hits.append(ScoredCommit(doc.commit_id, score, doc.commit_date))
    hits.sort(key=lambda h: (-h.score, -h.commit_date, h.commit_id))
    return hits[:k]


_MAGIC = "histsearch.bm25.v1"


def save_index(index: InvertedIndex, path) -> None:
    """Persist as a line-delimited file with a magic header; byte-reproducible
    for a fixed index."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_MAGIC + "\n")
        header = {
            "k1": index.k1,
            "b": index.b,
            "tokenizer": {
                "mode": index.tokenizer.mode,
                "lowercase": index.tokenizer.lowercase,
                "vocab_path": index.tokenizer.vocab_path,
            },
        }
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for doc in index.doc_table:
            fh.write(json.dumps(["d", doc.commit_id, doc.commit_date, doc.token_count]) + "\n")
        for term in sorted(index.postings):
            fh.write(json.dumps(["p", term, index.postings[term]], ensure_ascii=False) + "\n")


def load_index(path) -> InvertedIndex:
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().rstrip("\n")
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a {_MAGIC} file")
        header = json.loads(fh.readline())
        tok = header["tokenizer"]
        index = InvertedIndex(
            tokenizer=TokenizerConfig(tok["mode"], tok["lowercase"], tok.get("vocab_path")),
            k1=header["k1"],
            b=header["b"],
        )
        for line in fh:
            kind, *rest = json.loads(line)
            if kind == "d":
                commit_id, date, length = rest
                index.doc_table.append(CommitDocument(commit_id, date, length))
            else:
                term, plist = rest
                index.postings[term] = [(o, tf) for o, tf in plist]
    return index
