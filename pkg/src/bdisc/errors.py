"""Package exception types.

ParseError / ValidationError mark bad inputs or configuration (CLI exit 2);
anything else raised during a run is a runtime failure (CLI exit 3).
"""


class ParseError(ValueError):
    """Malformed input file (wrong arity, non-numeric cell, bad header)."""


class ValidationError(ValueError):
    """Input or configuration violates a documented precondition."""
