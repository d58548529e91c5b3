"""Ingest a local git repository into a replayable stream of per-file commit
records, and read/write the line-delimited store that holds them.

One record describes one (commit, changed file) event. Records are emitted
oldest first; equal timestamps fall back to topological parent order, so a
store file is a deterministic function of the repository.
"""

import difflib
import enum
import json
import os
import re
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import GitInvocationFailed, MalformedRecord, NotAGitRepository, UnknownCommit

_HEX40 = re.compile(r"^[0-9a-f]{40}$")


class FileStatus(str, enum.Enum):
    MODIFIED = "modified"
    ADDED = "added"
    DELETED = "deleted"
    RENAMED = "renamed"


# Canonical serialization order; store lines list keys in exactly this order.
_FIELD_ORDER = (
    "owner",
    "repo_name",
    "commit_date",
    "commit_id",
    "commit_message",
    "file_path",
    "previous_commit_id",
    "previous_file_content",
    "cur_file_content",
    "diff",
    "status",
    "is_merge",
    "file_extension",
    "previous_file_path",
    "parent_count",
)


@dataclass
class CommitFileRecord:
    """One (commit, file) change event.

    parent_count keeps the raw number of parents so a stricter merge
    definition than ``parent_count >= 2`` can be recovered downstream.
    """

    owner: str
    repo_name: str
    commit_date: int
    commit_id: str
    commit_message: str
    file_path: str
    diff: str
    status: FileStatus
    is_merge: bool
    file_extension: str
    parent_count: int
    previous_commit_id: str | None = None
    previous_file_content: str | None = None
    cur_file_content: str | None = None
    previous_file_path: str | None = None

    def validate(self) -> None:
        """Raise ValueError naming the offending field on any broken invariant.

        Binary files are the one sanctioned exception: their contents are
        absent regardless of status and the diff carries a binary marker.
        """
        if self.commit_date <= 0:
            raise ValueError("commit_date")
        if not _HEX40.match(self.commit_id):
            raise ValueError("commit_id")
        if self.status not in FileStatus:
            raise ValueError("status")
        binary = is_binary_marker(self.diff)
        if self.status == FileStatus.ADDED:
            if self.previous_commit_id is not None or self.previous_file_content is not None:
                raise ValueError("previous_commit_id")
        else:
            if self.previous_commit_id is None or not _HEX40.match(self.previous_commit_id):
                raise ValueError("previous_commit_id")
            if self.previous_file_content is None and not binary:
                raise ValueError("previous_file_content")
        if self.status == FileStatus.DELETED:
            if self.cur_file_content is not None:
                raise ValueError("cur_file_content")
        elif self.cur_file_content is None and not binary:
            raise ValueError("cur_file_content")
        if (self.previous_file_path is not None) != (self.status == FileStatus.RENAMED):
            raise ValueError("previous_file_path")
        if self.parent_count < 0:
            raise ValueError("parent_count")


@dataclass(frozen=True)
class RepoSnapshot:
    """The set of paths tracked at one commit (default HEAD)."""

    head_commit_id: str
    live_paths: frozenset[str]


BINARY_DIFF_MARKER = "Binary files differ"


def is_binary_marker(diff: str) -> bool:
    return diff.startswith(BINARY_DIFF_MARKER)


def _run_git(git_dir, args, binary=False):
    try:
        proc = subprocess.run(
            ["git", "-c", "core.quotepath=false", *args],
            cwd=git_dir,
            capture_output=True,
        )
    except FileNotFoundError as exc:
        raise GitInvocationFailed(args, -1, "git executable not found") from exc
    if proc.returncode != 0:
        raise GitInvocationFailed(args, proc.returncode, proc.stderr.decode("utf-8", "replace"))
    return proc.stdout if binary else proc.stdout.decode("utf-8", "replace")


def _require_repo(git_dir) -> None:
    if not Path(git_dir).exists():
        raise NotAGitRepository(str(git_dir))
    try:
        _run_git(git_dir, ["rev-parse", "--git-dir"])
    except GitInvocationFailed as exc:
        raise NotAGitRepository(str(git_dir)) from exc


def _repo_identity(git_dir) -> tuple[str, str]:
    """owner/repo_name from the origin remote when present, else local names."""
    try:
        url = _run_git(git_dir, ["config", "--get", "remote.origin.url"]).strip()
    except GitInvocationFailed:
        url = ""
    m = re.search(r"[:/]([^/:]+)/([^/]+?)(?:\.git)?/?$", url)
    if m:
        return m.group(1), m.group(2)
    return "local", Path(git_dir).resolve().name


def file_extension(path: str) -> str:
    name = path.rsplit("/", 1)[-1]
    if "." in name[1:]:
        return name.rsplit(".", 1)[-1].lower()
    return ""


_STATUS_MAP = {"A": FileStatus.ADDED, "M": FileStatus.MODIFIED, "D": FileStatus.DELETED}


def _parse_name_status(raw: str) -> list[tuple[FileStatus, str | None, str]]:
    """Parse NUL-separated --name-status output into (status, old, new) tuples."""
    tokens = [t for t in raw.split("\x00") if t != ""]
    out = []
    i = 0
    while i < len(tokens):
        code = tokens[i]
        if code.startswith("R") or code.startswith("C"):
            old, new = tokens[i + 1], tokens[i + 2]
            i += 3
            if code.startswith("R"):
                out.append((FileStatus.RENAMED, old, new))
            else:
                # Copies leave the source untouched; the new path is an add.
                out.append((FileStatus.ADDED, None, new))
        else:
            path = tokens[i + 1]
            i += 2
            status = _STATUS_MAP.get(code[0], FileStatus.MODIFIED)
            out.append((status, None, path))
    return out


def _blob_text(git_dir, rev: str, path: str) -> str | None:
    """File content at rev:path, or None when the blob is binary."""
    data = _run_git(git_dir, ["show", f"{rev}:{path}"], binary=True)
    if b"\x00" in data:
        return None
    return data.decode("utf-8", "replace")


def unified_diff_text(prev: str | None, cur: str | None, old_path: str | None, new_path: str | None) -> str:
    prev_lines = prev.splitlines(keepends=True) if prev else []
    cur_lines = cur.splitlines(keepends=True) if cur else []
    fromfile = f"a/{old_path}" if old_path is not None else "/dev/null"
    tofile = f"b/{new_path}" if new_path is not None else "/dev/null"
    lines = difflib.unified_diff(prev_lines, cur_lines, fromfile=fromfile, tofile=tofile)
    out = []
    for line in lines:
        out.append(line if line.endswith("\n") else line + "\n")
    return "".join(out)


def ingest_repository(
    git_dir,
    include_merges: bool = True,
    max_commits: int | None = None,
    owner: str | None = None,
    repo_name: str | None = None,
) -> Iterator[CommitFileRecord]:
    """Yield one CommitFileRecord per (commit, changed file), oldest commit first.

    Changed files of a merge commit are taken against its first parent. When
    max_commits is set, only the most recent commits are ingested.
    """
    _require_repo(git_dir)
    if owner is None or repo_name is None:
        detected_owner, detected_name = _repo_identity(git_dir)
        owner = owner if owner is not None else detected_owner
        repo_name = repo_name if repo_name is not None else detected_name

    try:
        raw = _run_git(git_dir, ["log", "--reverse", "--topo-order", "-z", "--format=%H%n%P%n%ct%n%B", "HEAD"])
    except GitInvocationFailed as exc:
        if "does not have any commits" in exc.stderr or "unknown revision" in exc.stderr:
            return
        raise

    commits = []
    for chunk in raw.split("\x00"):
        if not chunk.strip():
            continue
        head, parents_line, date_line, body = _split_log_chunk(chunk)
        commits.append(
            {
                "id": head,
                "parents": parents_line.split() if parents_line else [],
                "date": int(date_line),
                "message": body.rstrip(),
            }
        )

    # git gave topological order; a stable date sort keeps it for ties.
    commits.sort(key=lambda c: c["date"])
    if max_commits is not None:
        commits = commits[-max_commits:]

    empty_tree = _run_git(git_dir, ["hash-object", "-t", "tree", os.devnull]).strip()

    for commit in commits:
        parent_count = len(commit["parents"])
        is_merge = parent_count >= 2
        if is_merge and not include_merges:
            continue
        base = commit["parents"][0] if commit["parents"] else empty_tree
        name_status = _run_git(
            git_dir,
            ["diff-tree", "-r", "-M", "-z", "--name-status", base, commit["id"]],
        )
        for status, old_path, new_path in _parse_name_status(name_status):
            prev_rev = commit["parents"][0] if commit["parents"] else None
            prev_content = None
            cur_content = None
            if status != FileStatus.ADDED:
                prev_content = _blob_text(git_dir, prev_rev, old_path or new_path)
            if status != FileStatus.DELETED:
                cur_content = _blob_text(git_dir, commit["id"], new_path)

            binary = (status != FileStatus.ADDED and prev_content is None) or (
                status != FileStatus.DELETED and cur_content is None
            )
            if binary:
                diff = f"{BINARY_DIFF_MARKER}: {new_path}\n"
                prev_content = None
                cur_content = None
            else:
                diff = unified_diff_text(
                    prev_content,
                    cur_content,
                    (old_path or new_path) if status != FileStatus.ADDED else None,
                    new_path if status != FileStatus.DELETED else None,
                )

            record = CommitFileRecord(
                owner=owner,
                repo_name=repo_name,
                commit_date=commit["date"],
                commit_id=commit["id"],
                commit_message=commit["message"],
                file_path=new_path,
                diff=diff,
                status=status,
                is_merge=is_merge,
                file_extension=file_extension(new_path),
                parent_count=parent_count,
                previous_commit_id=prev_rev if status != FileStatus.ADDED else None,
                previous_file_content=prev_content,
                cur_file_content=cur_content,
                previous_file_path=old_path if status == FileStatus.RENAMED else None,
            )
            yield record


def _split_log_chunk(chunk: str):
    lines = chunk.split("\n", 3)
    if len(lines) < 3:
        raise GitInvocationFailed(["log"], 0, f"unparseable log chunk: {chunk[:80]!r}")
    body = lines[3] if len(lines) == 4 else ""
    return lines[0].strip(), lines[1], lines[2], body


def snapshot(git_dir, at_commit: str | None = None) -> RepoSnapshot:
    """Live paths of the repository at a commit (default HEAD)."""
    _require_repo(git_dir)
    rev = at_commit or "HEAD"
    try:
        full = _run_git(git_dir, ["rev-parse", "--verify", f"{rev}^{{commit}}"]).strip()
    except GitInvocationFailed as exc:
        raise UnknownCommit(str(rev)) from exc
    listing = _run_git(git_dir, ["ls-tree", "-r", "-z", "--name-only", full])
    paths = frozenset(p for p in listing.split("\x00") if p)
    return RepoSnapshot(head_commit_id=full, live_paths=paths)


def replay_snapshot(records: Iterable[CommitFileRecord]) -> tuple[RepoSnapshot, dict[str, str | None]]:
    """Derive the end-state snapshot and current contents implied by a record
    stream, without touching git. Useful for synthetic stores and for serving
    file contents to the code reranking stage."""
    contents: dict[str, str | None] = {}
    head = ""
    for rec in records:
        head = rec.commit_id
        if rec.status == FileStatus.DELETED:
            contents.pop(rec.file_path, None)
            continue
        if rec.status == FileStatus.RENAMED and rec.previous_file_path:
            contents.pop(rec.previous_file_path, None)
        contents[rec.file_path] = rec.cur_file_content
    return RepoSnapshot(head_commit_id=head, live_paths=frozenset(contents)), contents


def record_to_json(record: CommitFileRecord) -> str:
    payload = {}
    for name in _FIELD_ORDER:
        value = getattr(record, name)
        if value is None:
            continue
        if name == "status":
            value = value.value
        payload[name] = value
    return json.dumps(payload, ensure_ascii=False)


def write_store(records: Iterable[CommitFileRecord], out) -> int:
    """Write records to a line-delimited store file; returns the count written.

    The file appears atomically: a partial ingest never leaves a truncated
    store behind.
    """
    out = Path(out)
    count = 0
    fd, tmp_name = tempfile.mkstemp(dir=out.parent or Path("."), prefix=out.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(record_to_json(record))
                fh.write("\n")
                count += 1
        os.replace(tmp_name, out)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
    return count


def read_store(path) -> Iterator[CommitFileRecord]:
    """Yield records from a store file in stored order."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, "<line>", str(exc)) from exc
            yield _record_from_payload(payload, line_no)


def _record_from_payload(payload: dict, line_no: int) -> CommitFileRecord:
    if not isinstance(payload, dict):
        raise MalformedRecord(line_no, "<line>", "not a map")
    try:
        status = FileStatus(payload["status"])
    except (KeyError, ValueError) as exc:
        raise MalformedRecord(line_no, "status", str(exc)) from exc
    try:
        record = CommitFileRecord(
            owner=payload["owner"],
            repo_name=payload["repo_name"],
            commit_date=payload["commit_date"],
            commit_id=payload["commit_id"],
            commit_message=payload["commit_message"],
            file_path=payload["file_path"],
            diff=payload["diff"],
            status=status,
            is_merge=payload["is_merge"],
            file_extension=payload["file_extension"],
            parent_count=payload.get("parent_count", 1),
            previous_commit_id=payload.get("previous_commit_id"),
            previous_file_content=payload.get("previous_file_content"),
            cur_file_content=payload.get("cur_file_content"),
            previous_file_path=payload.get("previous_file_path"),
        )
    except KeyError as exc:
        raise MalformedRecord(line_no, exc.args[0], "missing") from exc
    try:
        record.validate()
    except ValueError as exc:
        raise MalformedRecord(line_no, exc.args[0], "invariant violated") from exc
    return record
