import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gitfixture import build_fixture_repo  # noqa: E402

from histsearch import commit_store  # noqa: E402


@pytest.fixture(scope="session")
def fixture_repo(tmp_path_factory) -> Path:
    return build_fixture_repo(tmp_path_factory.mktemp("repo"))


@pytest.fixture(scope="session")
def manifest() -> dict:
    with open(Path(__file__).parent / "data" / "fixture_manifest.json", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def fixture_records(fixture_repo) -> list:
    return list(commit_store.ingest_repository(fixture_repo))


_acceptance_results: list[tuple[str, str]] = []


def record_criterion(name: str, passed: bool) -> None:
    _acceptance_results.append((name, "PASS" if passed else "FAIL"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance_results:
        terminalreporter.write_line(f"{name}: {outcome}")
