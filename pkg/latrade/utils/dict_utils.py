import json
from collections.abc import Sized
from typing import Any

import numpy as np


def prune_dict(d: dict, *, prune_empty_iterables: bool = False) -> dict:
    """Return a new dictionary without keys for 'None' values.

    If prune_empty_iterables=True, iterables of length 0 will be pruned as well.

    >>> prune_dict({"a": 1, "b": None, "c": []}, prune_empty_iterables=True)
    {'a': 1}
    """
    if prune_empty_iterables:
        return {
            key: value
            for (key, value) in d.items()
            if value is not None and (not isinstance(value, Sized) or len(value) > 0)
        }
    return {key: value for (key, value) in d.items() if value is not None}


def to_native(value: Any) -> Any:
    """Convert numpy arrays and scalars (possibly nested in lists, tuples or dicts)
    to JSON-native Python values.

    >>> to_native({"x": np.arange(3), "y": np.float64(0.5)})
    {'x': [0, 1, 2], 'y': 0.5}
    """
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {key: to_native(val) for (key, val) in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_native(val) for val in value]
    return value


def dump_json(d: dict, path) -> None:
    """Write a dictionary as indented JSON."""
    with open(path, "w", encoding="utf-8") as file:
        json.dump(to_native(d), file, indent=2)


def load_json(path) -> Any:
    """Read a JSON document."""
    with open(path, encoding="utf-8") as file:
        return json.load(file)
