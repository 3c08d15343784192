"""Array aliases used across latrade.

Return matrices, probability schedules and account values are float64; lattice
masks are boolean. Public functions accept anything numpy can convert
(:data:`ArrayLike`) and return concrete arrays.
"""
import numpy as np
import numpy.typing as npt

NDArrayFloat = npt.NDArray[np.float64]
"""Returns, probabilities, coefficients and account values."""

NDArrayBool = npt.NDArray[np.bool_]
"""Up/down masks over return paths."""

ArrayLike = npt.ArrayLike
"""Lists, tuples, scalars or arrays accepted at the public boundary."""
