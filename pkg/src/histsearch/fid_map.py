"""Stable file identities across renames.

Replaying the record stream assigns every file a dense integer FID that owns
all paths the file ever had. Retrieved historical paths resolve through their
FID to the path that is live in the current snapshot, if any.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .commit_store import CommitFileRecord, FileStatus, RepoSnapshot
from .errors import OutOfOrderRecords

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PathInfo:
    path: str
    first_seen: int
    last_modified: int


@dataclass
class FileId:
    fid: int
    paths: list[PathInfo]

    def path_names(self) -> list[str]:
        return [p.path for p in self.paths]


@dataclass
class FidCache:
    by_fid: dict[int, FileId] = field(default_factory=dict)
    by_path: dict[str, int] = field(default_factory=dict)
    _live_memo: dict[tuple[str, int], str | None] = field(default_factory=dict, repr=False)


class _Group:
    __slots__ = ("order", "paths", "arrival", "absorbed_into")

    def __init__(self, order: int):
        self.order = order
        self.paths: dict[str, list[int]] = {}  # path -> [first_seen, last_modified]
        self.arrival: dict[str, int] = {}
        self.absorbed_into: "_Group | None" = None

    def touch(self, path: str, date: int, tick: int) -> None:
        entry = self.paths.get(path)
        if entry is None:
            self.paths[path] = [date, date]
            self.arrival[path] = tick
        else:
            entry[1] = date


def build_fid_map(records) -> FidCache:
    """Replay chronologically ordered records into a FidCache.

    Adds on unseen paths open a new identity; renames union the source path's
    identity with the target; deletes keep the path in history but free the
    name, so a later re-add under the same name is a distinct identity.
    """
    groups: list[_Group] = []
    active: dict[str, _Group] = {}
    latest_owner: dict[str, _Group] = {}
    last_date = 0
    tick = 0

    def resolve(g: _Group) -> _Group:
        while g.absorbed_into is not None:
            g = g.absorbed_into
        return g

    def fresh(path: str, date: int) -> _Group:
        g = _Group(len(groups))
        groups.append(g)
        g.touch(path, date, tick)
        active[path] = g
        latest_owner[path] = g
        return g

    for rec in records:
        if rec.commit_date < last_date:
            raise OutOfOrderRecords(f"{rec.commit_id} dated {rec.commit_date} after {last_date}")
        last_date = rec.commit_date
        tick += 1
        path = rec.file_path

        if rec.status == FileStatus.RENAMED:
            old = rec.previous_file_path
            src = active.pop(old, None)
            if src is None:
                log.warning("rename from unknown path %s -> %s; treating as add", old, path)
                fresh(path, rec.commit_date)
                continue
            src = resolve(src)
            src.touch(old, rec.commit_date, tick)
            tgt = active.get(path)
            if tgt is not None and resolve(tgt) is not src:
                _merge(resolve(tgt), src, active, latest_owner)
            src.touch(path, rec.commit_date, tick)
            active[path] = src
            latest_owner[path] = src
        elif rec.status == FileStatus.DELETED:
            g = active.pop(path, None)
            if g is None:
                log.warning("delete of unknown path %s ignored", path)
                continue
            resolve(g).touch(path, rec.commit_date, tick)
        else:  # added / modified
            g = active.get(path)
            if g is None:
                fresh(path, rec.commit_date)
            else:
                resolve(g).touch(path, rec.commit_date, tick)

    return _finalize(groups, latest_owner)


def _merge(absorbed: _Group, into: _Group, active, latest_owner) -> None:
    for path, (first, last) in absorbed.paths.items():
        entry = into.paths.get(path)
        if entry is None:
            into.paths[path] = [first, last]
            into.arrival[path] = absorbed.arrival[path]
        else:
            entry[0] = min(entry[0], first)
            entry[1] = max(entry[1], last)
        if active.get(path) is absorbed:
            active[path] = into
        if latest_owner.get(path) is absorbed:
            latest_owner[path] = into
    absorbed.absorbed_into = into


def _finalize(groups, latest_owner) -> FidCache:
    cache = FidCache()
    fid_of: dict[int, int] = {}
    for g in groups:
        if g.absorbed_into is not None:
            continue
        fid = len(cache.by_fid)
        fid_of[g.order] = fid
        ordered = sorted(g.paths.items(), key=lambda kv: (kv[1][0], g.arrival[kv[0]]))
        cache.by_fid[fid] = FileId(
            fid=fid,
            paths=[PathInfo(p, first, last) for p, (first, last) in ordered],
        )
    for path, g in latest_owner.items():
        while g.absorbed_into is not None:
            g = g.absorbed_into
        cache.by_path[path] = fid_of[g.order]
    return cache


def resolve_live(cache: FidCache, path: str, snapshot: RepoSnapshot) -> str | None:
    """Live path of the identity that owns ``path``, or None.

    When git's rename heuristics leave several live paths on one identity,
    the most recently modified wins; remaining ties go to the
    lexicographically smallest path.
    """
    fid = cache.by_path.get(path)
    if fid is None:
        return None
    key = (snapshot.head_commit_id, fid)
    if key in cache._live_memo:
        return cache._live_memo[key]
    candidates = [p for p in cache.by_fid[fid].paths if p.path in snapshot.live_paths]
    if not candidates:
        result = None
    else:
        result = min(candidates, key=lambda p: (-p.last_modified, p.path)).path
    cache._live_memo[key] = result
    return result


def fid_path_histogram(cache: FidCache) -> dict[int, int]:
    """How many FIDs own exactly n paths, for each n."""
    return dict(Counter(len(fi.paths) for fi in cache.by_fid.values()))


_MAGIC = "histsearch.fidcache.v1"


def save_cache(cache: FidCache, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_MAGIC + "\n")
        for fid in sorted(cache.by_fid):
            fi = cache.by_fid[fid]
            fh.write(json.dumps(["f", fid, [[p.path, p.first_seen, p.last_modified] for p in fi.paths]], ensure_ascii=False) + "\n")
        for p in sorted(cache.by_path):
            fh.write(json.dumps(["p", p, cache.by_path[p]], ensure_ascii=False) + "\n")


def load_cache(path) -> FidCache:
    cache = FidCache()
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().rstrip("\n")
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a {_MAGIC} file")
        for line in fh:
            kind, *rest = json.loads(line)
            if kind == "f":
                fid, paths = rest
                cache.by_fid[fid] = FileId(fid=fid, paths=[PathInfo(p, f, l) for p, f, l in paths])
            else:
                p, fid = rest
                cache.by_path[p] = fid
    return cache
