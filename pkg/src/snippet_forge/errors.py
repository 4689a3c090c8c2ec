"""Exception hierarchy shared across the package."""


class SnippetForgeError(Exception):
    """Base class for all package errors."""


class ParseError(SnippetForgeError, ValueError):
    pass


class DatasetError(SnippetForgeError):
    pass


class ConfigError(SnippetForgeError):
    pass


# llm backend
class TransportError(SnippetForgeError):
    pass


class BudgetExceeded(SnippetForgeError):
    pass


class TranscriptExhausted(SnippetForgeError):
    pass


class NoCodeFound(SnippetForgeError):
    pass


# knowledge base
class ArchiveCorrupt(SnippetForgeError):
    pass


class ClassParseError(SnippetForgeError):
    pass


class MissingModificationDate(SnippetForgeError):
    pass


class FormatVersionMismatch(SnippetForgeError):
    pass


class CorruptIndex(SnippetForgeError):
    pass


# validator
class ToolMissing(SnippetForgeError):
    pass


class EnvMissing(SnippetForgeError):
    pass


class TempIOError(SnippetForgeError):
    pass


class EmptyInput(SnippetForgeError, ValueError):
    pass
