"""Exception types shared across the package."""


class LangcertError(Exception):
    """Base class for package errors."""


class InvalidSpecError(LangcertError, ValueError):
    """A potential / model / config specification is malformed."""


class MissingConstantError(LangcertError):
    """A certification prerequisite is absent.

    Carries the name of the missing constant and a human-readable remedy so
    callers (in particular the CLI) can print actionable diagnostics.
    """

    def __init__(self, constant: str, remedy: str):
        self.constant = constant
        self.remedy = remedy
        super().__init__(f"missing constant {constant!r}: {remedy}")


class ResourceCapError(LangcertError):
    """A size or step-count cap was exceeded."""


class TailCoverageError(LangcertError):
    """A grid does not cover enough of the measure's tails."""

    def __init__(self, message: str, required_halfwidth: float):
        self.required_halfwidth = required_halfwidth
        super().__init__(message)
