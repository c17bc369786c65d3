"""Exception hierarchy shared by all modules."""


class SubHJError(Exception):
    """Base class for library errors."""


class InputError(SubHJError, ValueError):
    """Malformed arguments: dimension mismatch, bad parameters, bad config."""


class DomainError(SubHJError, ValueError):
    """A query point falls outside the region where an object is defined."""


class CompatibilityError(SubHJError):
    """Boundary datum fails the compatibility check and no override was given."""
