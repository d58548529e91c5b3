"""Synthetic record streams: random file histories and a planted-signal
corpus where each query names one culprit file through vocabulary that is
strong in the file's content but weak in commit messages.
"""

import random

from histsearch.commit_store import CommitFileRecord, FileStatus, unified_diff_text
from histsearch.pipeline import Query

BASE_DATE = 1500000000


def _cid(i: int) -> str:
    return f"{i:040x}"


class RecordBuilder:
    """Builds a consistent record stream while tracking live contents."""

    def __init__(self, owner="synth", repo="synth"):
        self.owner = owner
        self.repo = repo
        self.records: list[CommitFileRecord] = []
        self.contents: dict[str, str] = {}
        self._commit_no = 0

    def commit(self, message: str, changes: list[tuple[str, str, str | None]], date: int | None = None):
        """changes: (status, path, extra) where extra is new content for
        added/modified and the old path for renamed."""
        self._commit_no += 1
        commit_id = _cid(self._commit_no)
        date = date if date is not None else BASE_DATE + 3600 * self._commit_no
        prev_id = _cid(self._commit_no - 1) if self._commit_no > 1 else None
        for status, path, extra in changes:
            status = FileStatus(status)
            if status == FileStatus.ADDED:
                prev, cur, old = None, extra, None
                self.contents[path] = cur
            elif status == FileStatus.MODIFIED:
                prev, cur, old = self.contents[path], extra, None
                self.contents[path] = cur
            elif status == FileStatus.DELETED:
                prev, cur, old = self.contents.pop(path), None, None
            else:
                old = extra
                prev = self.contents.pop(old)
                cur = prev
                self.contents[path] = cur
            diff = unified_diff_text(
                prev,
                cur,
                old or (path if status != FileStatus.ADDED else None),
                path if status != FileStatus.DELETED else None,
            )
            self.records.append(
                CommitFileRecord(
                    owner=self.owner,
                    repo_name=self.repo,
                    commit_date=date,
                    commit_id=commit_id,
                    commit_message=message,
                    file_path=path,
                    diff=diff,
                    status=status,
                    is_merge=False,
                    file_extension=path.rsplit(".", 1)[-1] if "." in path else "",
                    parent_count=1 if prev_id else 0,
                    previous_commit_id=prev_id if status != FileStatus.ADDED else None,
                    previous_file_content=prev,
                    cur_file_content=cur,
                    previous_file_path=old,
                )
            )
        return commit_id

    @property
    def live_paths(self) -> frozenset[str]:
        return frozenset(self.contents)


def random_history(seed: int, steps: int = 30) -> RecordBuilder:
    """A random add/modify/delete/rename/re-add history."""
    rng = random.Random(seed)
    builder = RecordBuilder()
    dead: list[str] = []
    fresh = 0
    for step in range(steps):
        live = sorted(builder.contents)
        moves = ["add"]
        if live:
            moves += ["modify", "delete", "rename"]
        if dead:
            moves.append("readd")
        move = rng.choice(moves)
        if move == "add":
            fresh += 1
            path = f"f{fresh}.txt"
            builder.commit(f"add {path}", [("added", path, f"{path} v0\n")])
        elif move == "readd":
            path = dead.pop(rng.randrange(len(dead)))
            builder.commit(f"readd {path}", [("added", path, f"{path} reborn\n")])
        elif move == "modify":
            path = rng.choice(live)
            builder.commit(f"touch {path}", [("modified", path, builder.contents[path] + f"edit {step}\n")])
        elif move == "delete":
            path = rng.choice(live)
            builder.commit(f"drop {path}", [("deleted", path, None)])
            dead.append(path)
        else:
            old = rng.choice(live)
            fresh += 1
            new = f"f{fresh}.txt"
            builder.commit(f"move {old}", [("renamed", new, old)])
    return builder


GENERIC_WORDS = ["update", "cleanup", "refactor", "tests", "logging", "docs", "build", "deps"]
QUERY_NOISE = ["crash", "failure"]


def planted_corpus(seed: int = 7, n_files: int = 40, n_commits: int = 160, n_queries: int = 25):
    """Corpus where queries share a numeric component token with a single
    culprit file. The token is present in one or two commit messages (enough
    for retrieval, with ties from co-committed files) and strongly present in
    the culprit's content (so content matching separates it). Total commits:
    n_files file-creation commits plus n_commits edits (200 by default).
    """
    rng = random.Random(seed)
    builder = RecordBuilder()
    paths = [f"src/mod{j:02d}.py" for j in range(n_files)]

    def content(j: int) -> str:
        lines = [
            f"def handler{j}(request):",
            f"    state = component{j}.setup(request)",
            f"    marker{j}alpha(marker{j}beta)",
            "    value = compute(value)",
            "    emit(value)",
            f"    return marker{j}gamma",
        ]
        return "\n".join(lines) + "\n"

    for j, path in enumerate(paths):
        builder.commit(f"add module for component{j}", [("added", path, content(j))])

    signal_budget = {j: 0 for j in range(n_files)}
    for i in range(n_commits):
        touched = rng.sample(range(n_files), rng.randint(1, 3))
        lead = touched[0]
        words = rng.sample(GENERIC_WORDS, 3)
        if signal_budget[lead] < 2:
            signal_budget[lead] += 1
            message = f"{words[0]} component{lead} {words[1]} after crash report"
        else:
            message = f"{words[0]} {words[1]} {words[2]} pass"
        changes = []
        for j in touched:
            path = paths[j]
            new = builder.contents[path] + f"    trace(step_{words[0]})\n"
            changes.append(("modified", path, new))
        builder.commit(message, changes)

    after_all = BASE_DATE + 3600 * (n_files + n_commits + 10)
    targets = rng.sample(range(n_files), n_queries)
    queries = []
    qrels = {}
    for qn, j in enumerate(targets):
        qid = f"q{qn:03d}"
        noise = QUERY_NOISE[qn % len(QUERY_NOISE)]
        queries.append(
            Query(
                query_id=qid,
                text=f"{noise} in component{j} marker{j}alpha marker{j}gamma",
                timestamp=after_all,
            )
        )
        qrels[qid] = {paths[j]}
    return builder, queries, qrels
