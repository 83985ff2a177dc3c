"""Exception hierarchy shared by all toolforge modules."""


class ToolforgeError(Exception):
    """Base class for every error raised deliberately by toolforge."""


class ValidationError(ToolforgeError, ValueError):
    """Input is well-formed but violates a documented constraint."""


class ParseError(ToolforgeError, ValueError):
    """A file could not be parsed; the message carries the location."""


class EpisodeDoneError(ToolforgeError, RuntimeError):
    """``step`` was called on an environment whose episode has ended."""
