"""Exception hierarchy shared by every module."""


class OrthoCutError(Exception):
    pass


class InputError(OrthoCutError, ValueError):
    """Malformed or non-finite input, or a violated precondition."""


class ShapeError(InputError):
    pass


class FeasibilityError(InputError):
    """A tuple that should satisfy X X* = I does not."""


class CapacityError(OrthoCutError):
    """Problem size exceeds what an exhaustive routine will attempt."""


class UnsupportedError(OrthoCutError):
    pass


class DomainError(InputError):
    pass


class FormatError(InputError):
    """A serialized instance or solution does not have the expected structure."""
