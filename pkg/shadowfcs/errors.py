"""Exceptions raised by the simulation and estimation services."""


class InputError(ValueError):
    """A precondition on an argument does not hold."""


class CapacityError(ValueError):
    """The requested system is larger than the dense representation allows."""


class SchemaVersionError(ValueError):
    """A file carries a schema tag other than the one expected."""

    def __init__(self, expected: str, found: str | None):
        self.expected = expected
        self.found = found
        super().__init__(f"Expected schema '{expected}', found '{found}'")
