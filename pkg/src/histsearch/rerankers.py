"""The two reranking stages and the pluggable scorer contract.

A Scorer maps (query, passage) pairs to scores in [0, 1]. Stage two expands
each candidate file into its contributing commit messages, stage three into
line-wise code patches of the file's current content; both take the maximum
pair score per file and re-sort only the stage prefix.

External scorers speak a line-delimited protocol over a child process's
stdin/stdout or a local TCP socket: a handshake line advertising
{name, max_batch, tokenizer?}, then {id, q, p} requests answered by
{id, s} responses, matched by id in any order.
"""

import json
import logging
import queue
import shlex
import socket
import subprocess
import threading
import time
from dataclasses import dataclass, replace

from .bm25 import TokenizerConfig, tokenize
from .errors import ProtocolViolation, ScorerFailure, ScorerTimeout

log = logging.getLogger(__name__)

DEFAULT_PATCH_TOKEN_BUDGET = 350


class Scorer:
    """Contract: score_batch returns one score in [0, 1] per input pair,
    deterministically within a session."""

    descriptor: str = "scorer"

    def score_batch(self, pairs: list[tuple[str, str]]) -> list[float]:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass(frozen=True)
class CodePatch:
    live_path: str
    start_line: int
    end_line: int
    text: str
    token_count: int


@dataclass(frozen=True)
class RerankParams:
    depth: int
    patch_token_budget: int = DEFAULT_PATCH_TOKEN_BUDGET

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")


def _default_tokenizer(text: str) -> list[str]:
    return tokenize(text, TokenizerConfig())


_TOKENIZER_REGISTRY = {"code_aware_default": _default_tokenizer}


def resolve_tokenizer(name: str | None):
    """Tokenizer advertised by a scorer, falling back to the default."""
    if name is None:
        return _default_tokenizer
    fn = _TOKENIZER_REGISTRY.get(name)
    if fn is None:
        log.warning("unknown scorer tokenizer %r; using default", name)
        return _default_tokenizer
    return fn


def split_linewise(content: str, budget: int = DEFAULT_PATCH_TOKEN_BUDGET, tokenizer=None, live_path: str = "") -> list[CodePatch]:
    """Greedy line-wise windows: lines are appended until the window reaches
    the token budget, then the next window starts at the following line.
    Lines are never split, so one oversized line is its own patch. Patches
    are contiguous, non-overlapping and cover every line.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if content == "":
        return []
    tokenizer = tokenizer or _default_tokenizer
    lines = content.split("\n")
    patches = []
    start = 0
    count = 0

    def close(end_excl: int) -> None:
        nonlocal start, count
        patches.append(
            CodePatch(
                live_path=live_path,
                start_line=start + 1,
                end_line=end_excl,
                text="\n".join(lines[start:end_excl]),
                token_count=count,
            )
        )
        start = end_excl
        count = 0

    for i, line in enumerate(lines):
        count += len(tokenizer(line))
        if count >= budget:
            close(i + 1)
    if start < len(lines):
        close(len(lines))
    return patches


def _score_checked(scorer: Scorer, pairs: list[tuple[str, str]]) -> list[float]:
    try:
        scores = scorer.score_batch(pairs)
    except ScorerFailure:
        raise
    except Exception as exc:
        raise ScorerFailure(f"{scorer.descriptor}: {exc}") from exc
    if len(scores) != len(pairs):
        raise ScorerFailure(f"{scorer.descriptor}: got {len(scores)} scores for {len(pairs)} pairs")
    return scores


def _resort_prefix(prefix, scores):
    order = sorted(range(len(prefix)), key=lambda i: (-scores[i], i))
    return [replace(prefix[i], score=scores[i]) for i in order]


def rerank_by_commits(query: str, candidates: list, depth: int, scorer: Scorer, commit_messages: dict[str, str]) -> list:
    """Stage two: per candidate file, maxp over (query, contributing commit
    message) scores; only the top-depth prefix is re-sorted."""
    depth = min(depth, len(candidates))
    prefix, tail = candidates[:depth], candidates[depth:]
    pairs = []
    spans = []
    for f in prefix:
        begin = len(pairs)
        for commit_id, _ in f.contributing:
            message = commit_messages.get(commit_id)
            if message is None:
                log.warning("no message for contributing commit %s of %s", commit_id, f.path)
                continue
            pairs.append((query, message))
        spans.append((begin, len(pairs)))
    scores = _score_checked(scorer, pairs)
    file_scores = []
    for (begin, end), f in zip(spans, prefix):
        if begin == end:
            log.warning("file %s had no scoreable commit messages", f.path)
            file_scores.append(0.0)
        else:
            file_scores.append(max(scores[begin:end]))
    return _resort_prefix(prefix, file_scores) + tail


def rerank_by_code(
    query: str,
    candidates: list,
    depth: int,
    scorer: Scorer,
    snapshot_contents: dict[str, str | None],
    budget: int = DEFAULT_PATCH_TOKEN_BUDGET,
    tokenizer=None,
) -> list:
    """Stage three: per candidate file, maxp over (query, code patch) scores
    of the file's current content. Unreadable files score 0."""
    depth = min(depth, len(candidates))
    prefix, tail = candidates[:depth], candidates[depth:]
    pairs = []
    spans = []
    for f in prefix:
        begin = len(pairs)
        content = snapshot_contents.get(f.path)
        if content is None:
            log.warning("no readable current content for %s; scored 0", f.path)
        else:
            for patch in split_linewise(content, budget, tokenizer, live_path=f.path):
                pairs.append((query, patch.text))
        spans.append((begin, len(pairs)))
    scores = _score_checked(scorer, pairs)
    file_scores = []
    for (begin, end), f in zip(spans, prefix):
        file_scores.append(max(scores[begin:end]) if end > begin else 0.0)
    return _resort_prefix(prefix, file_scores) + tail


class LexicalOverlapScorer(Scorer):
    """Fraction of distinct query tokens that appear in the passage."""

    descriptor = "lexical-overlap"

    def score_batch(self, pairs):
        out = []
        for query, passage in pairs:
            q = set(_default_tokenizer(query))
            if not q:
                out.append(0.0)
                continue
            p = set(_default_tokenizer(passage))
            out.append(len(q & p) / len(q))
        return out


def lexical_overlap_scorer() -> Scorer:
    return LexicalOverlapScorer()


class _ProcessTransport:
    """Line transport over a child process's stdin/stdout."""

    def __init__(self, argv: list[str]):
        self.proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def send_line(self, line: str) -> None:
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolViolation(f"scorer process closed its stdin: {exc}") from exc

    def recv_line(self, deadline: float) -> str:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise ScorerTimeout("scorer batch timed out")
        try:
            line = self._lines.get(timeout=remaining)
        except queue.Empty:
            raise ScorerTimeout("scorer batch timed out") from None
        if line is None:
            raise ProtocolViolation("scorer closed the stream mid-batch")
        return line

    def close(self):
        # terminate before touching stdout: the reader thread holds its lock
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        self.proc.terminate()
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait(timeout=5)
        self._reader.join(timeout=5)
        try:
            self.proc.stdout.close()
        except OSError:
            pass


class _SocketTransport:
    def __init__(self, host: str, port: int, timeout: float):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self.sock.makefile("rw", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        self._file.write(line + "\n")
        self._file.flush()

    def recv_line(self, deadline: float) -> str:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise ScorerTimeout("scorer batch timed out")
        self.sock.settimeout(remaining)
        try:
            line = self._file.readline()
        except (TimeoutError, socket.timeout):
            raise ScorerTimeout("scorer batch timed out") from None
        if line == "":
            raise ProtocolViolation("scorer closed the connection mid-batch")
        return line

    def close(self):
        try:
            self._file.close()
        finally:
            self.sock.close()


class ExternalScorer(Scorer):
    """Client side of the scoring protocol.

    The endpoint descriptor is either ``tcp:HOST:PORT`` or a command line to
    spawn; the served handshake supplies the batch ceiling and, optionally,
    the tokenizer that patch budgets should be counted with.
    """

    def __init__(self, endpoint, timeout: float = 60.0):
        self.timeout = timeout
        if isinstance(endpoint, str) and endpoint.startswith("tcp:"):
            _, host, port = endpoint.split(":", 2)
            self._transport = _SocketTransport(host, int(port), timeout)
        else:
            argv = shlex.split(endpoint) if isinstance(endpoint, str) else list(endpoint)
            self._transport = _ProcessTransport(argv)
        self._next_id = 0
        handshake = self._read_json(time.monotonic() + timeout)
        if not isinstance(handshake, dict) or "name" not in handshake or "max_batch" not in handshake:
            raise ProtocolViolation(f"bad handshake: {handshake!r}")
        self.max_batch = int(handshake["max_batch"])
        if self.max_batch < 1:
            raise ProtocolViolation(f"advertised max_batch {self.max_batch}")
        self.tokenizer_name = handshake.get("tokenizer")
        self.descriptor = str(handshake["name"])

    def _read_json(self, deadline: float):
        line = self._transport.recv_line(deadline)
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolViolation(f"unparseable line from scorer: {line[:120]!r}") from exc

    def score_batch(self, pairs):
        results: list[float | None] = [None] * len(pairs)
        for begin in range(0, len(pairs), self.max_batch):
            chunk = pairs[begin : begin + self.max_batch]
            deadline = time.monotonic() + self.timeout
            pending: dict[int, int] = {}
            for offset, (q, p) in enumerate(chunk):
                rid = self._next_id
                self._next_id += 1
                pending[rid] = begin + offset
                self._transport.send_line(json.dumps({"id": rid, "q": q, "p": p}, ensure_ascii=False))
            while pending:
                payload = self._read_json(deadline)
                if not isinstance(payload, dict) or "error" in payload:
                    raise ProtocolViolation(f"scorer error response: {payload!r}")
                if "id" not in payload or "s" not in payload:
                    raise ProtocolViolation(f"response missing id/s: {payload!r}")
                rid = payload["id"]
                if rid not in pending:
                    raise ProtocolViolation(f"unexpected or duplicate response id {rid!r}")
                score = payload["s"]
                if not isinstance(score, (int, float)) or not (0.0 <= float(score) <= 1.0):
                    raise ProtocolViolation(f"score out of range: {score!r}")
                results[pending.pop(rid)] = float(score)
        return results  # type: ignore[return-value]

    def close(self):
        self._transport.close()


def external_scorer(endpoint, timeout: float = 60.0) -> ExternalScorer:
    return ExternalScorer(endpoint, timeout=timeout)
