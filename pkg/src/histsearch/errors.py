"""Exception types shared across the package."""


class HistsearchError(Exception):
    """Base class for all package errors."""


class NotAGitRepository(HistsearchError):
    pass


class GitInvocationFailed(HistsearchError):
    def __init__(self, argv, returncode, stderr):
        self.argv = list(argv)
        self.returncode = returncode
        self.stderr = stderr
        super().__init__(f"git {' '.join(self.argv)} exited {returncode}: {stderr.strip()}")


class UnknownCommit(HistsearchError):
    pass


class MalformedRecord(HistsearchError):
    """A store line that cannot be parsed; carries line number and field."""

    def __init__(self, line_no, field, detail=""):
        self.line_no = line_no
        self.field = field
        super().__init__(f"line {line_no}: bad field {field!r}" + (f": {detail}" if detail else ""))


class OutOfOrderRecords(HistsearchError):
    pass


class MissingCommitFiles(HistsearchError):
    pass


class ScorerUnavailable(HistsearchError):
    pass


class ScorerFailure(HistsearchError):
    pass


class ProtocolViolation(ScorerFailure):
    pass


class ScorerTimeout(ScorerFailure):
    pass


class MalformedRun(HistsearchError):
    def __init__(self, line_no, detail):
        self.line_no = line_no
        super().__init__(f"run line {line_no}: {detail}")


class DepthTooSmall(HistsearchError):
    pass
