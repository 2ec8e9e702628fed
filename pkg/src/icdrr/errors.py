"""Exception hierarchy shared across the package."""

from __future__ import annotations


class IcdrrError(Exception):
    """Base class for every error raised by icdrr."""


# corpus


class MalformedCode(IcdrrError, ValueError):
    def __init__(self, raw: str, reason: str = "does not match the ICD-10-CM code grammar"):
        self.raw = raw
        super().__init__(f"malformed ICD-10-CM code {raw!r}: {reason}")


class MalformedRow(IcdrrError, ValueError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class EmptyCorpus(IcdrrError, ValueError):
    pass


class CorpusRejected(IcdrrError, ValueError):
    def __init__(self, malformed: list[MalformedRow], total: int):
        self.malformed = malformed
        self.total = total
        super().__init__(
            f"corpus rejected: {len(malformed)} of {total} rows malformed (limit is 10%)"
        )


# retrieval


class UnknownDoc(IcdrrError, KeyError):
    pass


class DimensionMismatch(IcdrrError, ValueError):
    pass


class EmptyTokenList(IcdrrError, ValueError):
    pass


class ProviderUnavailable(IcdrrError, RuntimeError):
    pass


class EmptyQuery(IcdrrError, ValueError):
    pass


class CorruptIndex(IcdrrError, ValueError):
    pass


class VersionMismatch(IcdrrError, ValueError):
    def __init__(self, found: int, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(f"index format version {found:#04x}, expected {expected:#04x}")


# rerank / LLM transport


class NoCodeFound(IcdrrError, ValueError):
    def __init__(self, text: str):
        self.text = text
        super().__init__(f"no acceptable ICD-10-CM code in response: {text[:120]!r}")


class TransportError(IcdrrError, RuntimeError):
    pass


class AuthError(IcdrrError, RuntimeError):
    pass


class RerankFailed(IcdrrError, RuntimeError):
    """Reranking failed after retrieval succeeded; carries the retrieved candidates."""

    def __init__(self, cause: Exception, candidates: list):
        self.cause = cause
        self.candidates = candidates
        super().__init__(f"rerank failed ({type(cause).__name__}: {cause})")


# evaluation / configuration


class SampleTooLarge(IcdrrError, ValueError):
    pass


class InvalidConfig(IcdrrError, ValueError):
    pass


class ConfigError(IcdrrError, ValueError):
    def __init__(self, key: str, reason: str):
        self.key = key
        super().__init__(f"config key {key!r}: {reason}")


class BindError(IcdrrError, OSError):
    pass
