"""
Contains base classes for latrade domain objects
"""
from dataclasses import dataclass, fields
from enum import Enum
from typing import Any

import numpy as np

from latrade.utils.dict_utils import prune_dict, to_native


def _values_equal(a: Any, b: Any) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.array_equal(a, b)
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(map(_values_equal, a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_values_equal(a[k], b[k]) for k in a)
    return bool(a == b)


@dataclass(frozen=True, eq=False)
class LatBase:
    """Base class for latrade value objects.

    Subclasses holding arrays are declared with ``eq=False`` and inherit a
    field-wise ``__eq__`` that compares arrays by value. Such objects are not
    hashable.

    Methods
    -------
    to_dict()
        Get the object as a JSON-native dict built from its fields.
    _convert_key(key: str)
        Convert an internal field name to a dictionary key. Can be overwritten to
        change key names while maintaining default to_dict().
    """

    def __eq__(self, other: object) -> bool:
        if other.__class__ is not self.__class__:
            return NotImplemented
        return all(
            _values_equal(getattr(self, f.name), getattr(other, f.name))
            for f in fields(self)
            if f.compare
        )

    def _convert_key(self, key: str) -> str:
        return key

    def to_dict(self) -> dict:
        """Get object as dictionary."""
        _dict: dict = {}

        def _to_dict(value) -> Any:
            # Nested objects serialize themselves
            if isinstance(value, LatBase):
                return value.to_dict()
            if isinstance(value, LatEnum):
                return value.get_value()
            return to_native(value)

        for field in fields(self):
            # Private fields are not part of the document
            if field.name.startswith("_"):
                continue

            field_val = getattr(self, field.name)

            if field_val is None:
                continue

            if isinstance(field_val, (list, tuple)):
                _dict[self._convert_key(field.name)] = [
                    _to_dict(value) for value in field_val
                ]
            elif isinstance(field_val, dict):
                _dict[self._convert_key(field.name)] = {
                    key: _to_dict(value) for (key, value) in field_val.items()
                }
            else:
                _dict[self._convert_key(field.name)] = _to_dict(field_val)

        return prune_dict(_dict)


class LatEnum(Enum):
    """latrade Enumeration

    Methods
    -------
    get_value() : Generic get value. Can be overwritten.
    """

    def get_value(self):
        """Generic get value. Can be overwritten."""
        return self.value


def frozen_array(value, *, ndmin: int = 1) -> np.ndarray:
    """Return a read-only float64 copy of `value`.

    >>> frozen_array([1, 2]).flags.writeable
    False
    """
    array = np.array(value, dtype=np.float64, ndmin=ndmin)
    array.setflags(write=False)
    return array
