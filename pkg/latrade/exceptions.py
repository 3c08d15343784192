from typing import Any, Optional, Union, overload


def _restore(cls: type, state: dict) -> "LatradeError":
    error = cls.__new__(cls)
    error.__dict__.update(state)
    return error


class LatradeError(Exception):
    """Base class for errors raised by latrade.

    Subclasses define a default ``message`` template which is formatted with the
    instance attributes when the exception is rendered. Instances pickle through
    their attributes, so they survive the trip back from worker processes.
    """

    _default_message = "{detail}"

    def __init__(self, *, message: Optional[str] = None, **kwargs):
        self.message = message if message is not None else self._default_message
        self.__dict__.update(kwargs)

    def __str__(self):
        return self.message.format(**self.__dict__)

    def __reduce__(self):
        return _restore, (type(self), dict(self.__dict__))


class ArrayShapeError(LatradeError):
    """Exception raised for unexpected array shapes.

    Default Message::

    "Expected shape {expected_shape} for '{array_name}', but got {array_shape}{extra}."

    Attributes
    ----------
    array_name : str
        Name of array.
    array_shape : str, int, or tuple of (int, ...)
        Actual (incorrect) array shape.
    expected_shape : str, int, or tuple of (int, ...)
        Expected shape.
    """

    @overload
    def __init__(
        self,
        array_name: str,
        array_shape: Union[str, int, tuple[int, ...]],
        expected_shape: Union[str, int, tuple[int, ...]],
        *,
        message: Optional[str] = None,
        extra: Optional[str] = None,
        **kwargs,
    ):
        """Exception raised for unexpected array shapes.

        Parameters
        ----------
        array_name : str
            Name of the array.
        array_shape : str, int, or tuple of (int, ...)
            Actual (incorrect) array shape.
        expected_shape : str, int, or tuple of (int, ...)
            Expected array shape.
        message : str
            Message to be displayed. Formatted with class properties. Keyword-only
            parameter.
        extra : str, optional
            Extra string to include between '{array_shape}' and '.' in `message`.
            Keyword-only parameter.
        """

    @overload
    def __init__(
        self,
        array_name: None = None,
        array_shape: None = None,
        expected_shape: None = None,
        *,
        message: str = "",
        extra: Optional[str] = None,
        **kwargs,
    ):
        ...

    def __init__(
        self,
        array_name=None,
        array_shape=None,
        expected_shape=None,
        *,
        message=None,
        extra=None,
        **kwargs,
    ):
        self.array_name = array_name
        self.array_shape = array_shape
        self.expected_shape = expected_shape
        self.message = (
            message
            if message is not None
            else "Expected shape {expected_shape} for '{array_name}', but got {array_shape}{extra}."
        )
        self.extra = extra or ""

        if kwargs:
            self.__dict__.update(kwargs)


class ParameterRangeError(LatradeError):
    """Exception raised when a parameter lies outside its admissible range.

    Default Message::

    "Parameter '{name}' = {value} is outside {expected}{extra}."

    Attributes
    ----------
    name : str
        Parameter name.
    value : Any
        Offending value.
    expected : str
        Human readable admissible range, e.g. ``"(0, 1)"``.
    """

    _default_message = "Parameter '{name}' = {value} is outside {expected}{extra}."

    def __init__(
        self,
        name: str,
        value: Any,
        expected: str,
        *,
        message: Optional[str] = None,
        extra: Optional[str] = None,
        **kwargs,
    ):
        super().__init__(
            message=message,
            name=name,
            value=value,
            expected=expected,
            extra=extra or "",
            **kwargs,
        )


class ModelInfeasibleError(LatradeError):
    """Exception raised when the market model yields probabilities outside [0, 1].

    Default Message::

    "Market model is infeasible for asset {asset}: {detail}."
    """

    _default_message = "Market model is infeasible for asset {asset}: {detail}."

    def __init__(
        self,
        asset: int,
        detail: str = "up-probability outside [0, 1]",
        *,
        message: Optional[str] = None,
        **kwargs,
    ):
        super().__init__(message=message, asset=asset, detail=detail, **kwargs)


class EnumerationSizeError(LatradeError):
    """Exception raised when exhaustive path enumeration would exceed its cap."""

    _default_message = (
        "Enumeration of {n_paths} paths exceeds the cap of {cap}; "
        "reduce the horizon or raise the cap."
    )

    def __init__(
        self, n_paths: int, cap: int, *, message: Optional[str] = None, **kwargs
    ):
        super().__init__(message=message, n_paths=n_paths, cap=cap, **kwargs)


class EstimationError(LatradeError):
    """Exception raised when market parameters cannot be estimated from data."""

    def __init__(self, detail: str, *, message: Optional[str] = None, **kwargs):
        super().__init__(message=message, detail=detail, **kwargs)


class PriceDataError(LatradeError):
    """Base exception for malformed price files.

    Attributes
    ----------
    row : int or None
        1-based data row (header excluded) of the offending cell.
    column : str or None
        Column label of the offending cell.
    """

    _default_message = "Invalid price data at row {row}, column '{column}': {detail}"

    def __init__(
        self,
        detail: str = "",
        *,
        row: Optional[int] = None,
        column: Optional[str] = None,
        message: Optional[str] = None,
        **kwargs,
    ):
        super().__init__(
            message=message, detail=detail, row=row, column=column, **kwargs
        )


class DuplicateDateError(PriceDataError):
    _default_message = "Duplicate date '{detail}' at row {row}, column '{column}'."


class UnorderedDatesError(PriceDataError):
    _default_message = (
        "Dates must be strictly increasing; '{detail}' at row {row}, "
        "column '{column}' is out of order."
    )


class NonPositivePriceError(PriceDataError):
    _default_message = "Nonpositive price {detail} at row {row}, column '{column}'."


class RaggedRowError(PriceDataError):
    _default_message = "Ragged row {row}: {detail}."


class UnparseableCellError(PriceDataError):
    _default_message = "Cannot parse '{detail}' at row {row}, column '{column}'."
