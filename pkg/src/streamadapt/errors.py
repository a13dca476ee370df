"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes disagree with what the operation requires."""


class ValidationError(ValueError):
    """An input value violates a documented precondition."""


class DataError(RuntimeError):
    """A dataset file is missing, malformed, or non-numeric."""


class NumericalAbort(RuntimeError):
    """Training produced a non-finite loss; carries phase and round."""

    def __init__(self, phase: str, round_index: int, value: float):
        self.phase = phase
        self.round_index = round_index
        self.value = value
        super().__init__(
            f"non-finite loss ({value!r}) in phase '{phase}' at round {round_index}"
        )
