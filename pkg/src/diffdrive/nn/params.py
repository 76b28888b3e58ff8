"""Named parameter storage with immutable shapes."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError


class ParamStore:
    """Flat mapping of unique parameter names to float arrays.

    Shapes are fixed at registration; assignment only replaces values.
    Models namespace their parameters with '/'-separated prefixes, which is
    what subset-based freezing (e.g. fine-tuning the denoiser only) keys on.
    """

    def __init__(self):
        self._arrays: dict[str, np.ndarray] = {}

    def register(self, name: str, array: np.ndarray) -> np.ndarray:
        if name in self._arrays:
            raise ValidationError(f"parameter {name!r} already registered")
        arr = np.asarray(array, dtype=float)
        self._arrays[name] = arr
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value: np.ndarray):
        if name not in self._arrays:
            raise ValidationError(f"unknown parameter {name!r}")
        value = np.asarray(value, dtype=float)
        if value.shape != self._arrays[name].shape:
            raise ValidationError(
                f"parameter {name!r}: shape {value.shape} != registered {self._arrays[name].shape}"
            )
        self._arrays[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __len__(self) -> int:
        return len(self._arrays)

    def keys(self):
        return self._arrays.keys()

    def items(self):
        return self._arrays.items()

    def names_with_prefix(self, prefix: str) -> list[str]:
        return [n for n in self._arrays if n.startswith(prefix)]

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, arr in self._arrays.items():
            out.register(name, arr.copy())
        return out

    def n_values(self) -> int:
        return sum(a.size for a in self._arrays.values())


def zero_grads_like(store: ParamStore) -> dict[str, np.ndarray]:
    """Gradient dict covering every parameter, zero-initialized."""
    return {name: np.zeros_like(arr) for name, arr in store.items()}
