"""Exception types raised by the toolkit.

Every error derives from :class:`AsmSearchError` (itself a ``ValueError``) so
callers can catch the whole family at once.
"""


class AsmSearchError(ValueError):
    pass


class MalformedLine(AsmSearchError):
    def __init__(self, line_no, line="", reason=""):
        self.line_no = line_no
        self.line = line
        self.reason = reason
        msg = f"line {line_no}: cannot parse {line!r}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class EmptyFunction(AsmSearchError):
    pass


class MalformedRecord(AsmSearchError):
    def __init__(self, line_no, reason):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"record on line {line_no}: {reason}")


class UnterminatedComment(AsmSearchError):
    pass


class EmptyInput(AsmSearchError):
    pass


class ShapeMismatch(AsmSearchError):
    pass


class NonPositiveTemperature(AsmSearchError):
    pass


class KExceedsPool(AsmSearchError):
    pass


class MissingResult(AsmSearchError):
    pass


class PoolTooSmall(AsmSearchError):
    pass
