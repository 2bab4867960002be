"""Exception hierarchy shared by all modules."""


class SecrecyError(ValueError):
    """Base class for domain errors raised by this package."""


class AlphabetError(SecrecyError):
    """Input law and channel alphabets do not line up."""


class CouplingError(SecrecyError):
    """A joint channel does not reproduce its declared marginals."""


class SpecError(SecrecyError):
    """A specification object violates one of its invariants."""


class PreconditionError(SecrecyError):
    """An operation was called on an instance it does not support."""


class SizeError(SecrecyError):
    """An enumeration or search would exceed its size budget."""


class DomainError(SecrecyError):
    """A numeric argument lies outside the operation's domain."""


class InputParseError(SpecError):
    """Malformed JSON input. Carries the offending field path and line if known."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line
