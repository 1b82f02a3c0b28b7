class SubmaxError(Exception):  # noqa: D101
    ...


class DomainError(SubmaxError, ValueError):  # noqa: D101
    ...


class CapacityError(SubmaxError, RuntimeError):  # noqa: D101
    ...


class NumericError(SubmaxError, RuntimeError):  # noqa: D101
    ...


class UnderTargetError(SubmaxError, RuntimeError):
    """Raised when the greedy clique construction falls short of the requested side length."""

    def __init__(self, message: str, achieved: int, result: object = None) -> None:
        super().__init__(message)
        self.achieved = achieved
        self.result = result
