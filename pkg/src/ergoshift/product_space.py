"""Coordinate-sequence probability spaces and the shift maps acting on them.

A state of the product space is a bi-infinite sequence of coordinates
``X_n``, ``n`` in Z, each drawn from a fixed base law.  Coordinates are never
stored: they are recomputed from ``(seed, n)`` by a counter-based generator,
so shifting a state is pure reindexing and arbitrarily distant indices cost
O(1).

Four shift semantics are supported:

``BERNOULLI_RIGHT``
    ``X_n o tau = X_{n-1}``, the shift to the right on ``E^Z``.
``BINARY_DIGIT``
    the baker's map on ``T^s x T^s``, realized as the right shift on binary
    digits; observables see the point ``y = sum_j b_j 2^{-(j+1)}``.
``WIENER_SCALING``
    ``B_t o tau = B_{2t} / sqrt(2)`` on a :class:`~ergoshift.wiener_core.DyadicPathStore`.
``SCHAUDER_COEFFICIENT``
    the flat Schauder coefficient sequence read one index further per shift.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, replace
from typing import Any, Callable

import numpy as np

from . import _streams


class Law(str, enum.Enum):
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"
    BIT = "bit"


class ShiftKind(str, enum.Enum):
    BERNOULLI_RIGHT = "bernoulli-right"
    BINARY_DIGIT = "binary-digit"
    WIENER_SCALING = "wiener-scaling"
    SCHAUDER_COEFFICIENT = "schauder-coefficient"


_DRAW = {
    Law.UNIFORM: _streams.uniforms,
    Law.GAUSSIAN: _streams.normals,
    Law.BIT: _streams.bits,
}


class CoordinateSequence:
    """Lazily materialized coordinates ``X_n`` in ``R^dim``, ``n`` in Z.

    Values are a deterministic function of ``(seed, n, component)``.  The
    ``window`` attribute only records which indices have been requested so
    far; it never influences the values.
    """

    def __init__(self, seed: int, dim: int = 1, law: Law | str = Law.UNIFORM):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.seed = int(seed)
        self.dim = int(dim)
        self.law = Law(law)
        self._lock = threading.Lock()
        self._window: tuple[int, int] | None = None

    def __repr__(self) -> str:
        return f"CoordinateSequence(seed={self.seed}, dim={self.dim}, law={self.law.value!r})"

    @property
    def window(self) -> tuple[int, int] | None:
        return self._window

    def _touch(self, lo: int, hi: int) -> None:
        with self._lock:
            if self._window is None:
                self._window = (lo, hi)
            else:
                self._window = (min(self._window[0], lo), max(self._window[1], hi))

    def get(self, indices) -> np.ndarray:
        """Coordinates at ``indices``, shape ``(len(indices), dim)``."""
        idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        if idx.size:
            self._touch(int(idx.min()), int(idx.max()))
        comp = np.arange(self.dim, dtype=np.int64)
        return _DRAW[self.law](self.seed, _streams.COORDINATE, idx[:, None], comp[None, :])

    def block(self, lo: int, hi: int) -> np.ndarray:
        """Coordinates ``X_lo, ..., X_{hi-1}``."""
        return self.get(np.arange(lo, hi, dtype=np.int64))

    def __getitem__(self, n: int) -> np.ndarray:
        return self.get([n])[0]


def make_sequence(seed: int, dim: int = 1, law: Law | str = Law.UNIFORM) -> CoordinateSequence:
    return CoordinateSequence(seed, dim, law)


@dataclass(frozen=True)
class ShiftSystem:
    """A point of the product space together with a cumulative shift count."""

    kind: ShiftKind
    space: Any
    offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ShiftKind(self.kind))


def bernoulli_system(seed: int, dim: int = 1, law: Law | str = Law.UNIFORM) -> ShiftSystem:
    return ShiftSystem(ShiftKind.BERNOULLI_RIGHT, CoordinateSequence(seed, dim, law))


def binary_digit_system(seed: int, s: int = 1) -> ShiftSystem:
    return ShiftSystem(ShiftKind.BINARY_DIGIT, CoordinateSequence(seed, s, Law.BIT))


def schauder_system(seed: int) -> ShiftSystem:
    return ShiftSystem(ShiftKind.SCHAUDER_COEFFICIENT, CoordinateSequence(seed, 1, Law.GAUSSIAN))


def shift_apply(system: ShiftSystem, k: int) -> ShiftSystem:
    """Apply ``tau^k``; ``k`` may be negative since every shift here is invertible."""
    return replace(system, offset=system.offset + int(k))


@dataclass(frozen=True)
class Observable:
    """A real function of the state.

    For coordinate systems ``func`` is vectorized: it receives an array of
    shape ``(batch, window, dim)`` holding ``X_0, ..., X_{window-1}`` for each
    state in the batch and returns ``(batch,)``.  ``window=None`` marks a path
    functional, which receives a :class:`~ergoshift.wiener_core.DyadicPathStore`
    and returns a float.
    """

    func: Callable
    window: int | None
    name: str = "f"

    def __call__(self, system: ShiftSystem) -> float:
        return evaluate(system, self)


def coordinate_windows(system: ShiftSystem, window: int, n0: int, n1: int) -> np.ndarray:
    """``(X_0, ..., X_{window-1}) o tau^n`` for ``n = n0, ..., n1-1``.

    Returns shape ``(n1 - n0, window, dim)``.  Under the right shifts the
    state ``tau^n`` reads ``X_{j - n}`` in slot ``j``; under the Schauder
    coefficient shift it reads ``X_{j + n}``.
    """
    seq: CoordinateSequence = system.space
    a0, a1 = system.offset + n0, system.offset + n1
    if system.kind is ShiftKind.SCHAUDER_COEFFICIENT:
        lo, hi = a0, a1 - 1 + window
        raw = seq.block(lo, hi)
        view = np.lib.stride_tricks.sliding_window_view(raw, window, axis=0)
        return np.moveaxis(view, -1, 1)
    if system.kind in (ShiftKind.BERNOULLI_RIGHT, ShiftKind.BINARY_DIGIT):
        lo, hi = -(a1 - 1), window - a0
        raw = seq.block(lo, hi)
        view = np.moveaxis(np.lib.stride_tricks.sliding_window_view(raw, window, axis=0), -1, 1)
        # view[w] starts at index lo + w; state n starts at -(offset + n)
        return view[::-1]
    raise ValueError(f"{system.kind.value} systems have no coordinate windows")


def evaluate(system: ShiftSystem, f: Observable) -> float:
    """``f`` at the current state of ``system``."""
    if system.kind is ShiftKind.WIENER_SCALING:
        from .wiener_core import scaling_shift

        return float(f.func(scaling_shift(system.space, system.offset)))
    if f.window is None:
        raise ValueError("path functionals need a WIENER_SCALING system")
    return float(f.func(coordinate_windows(system, f.window, 0, 1))[0])


def torus_point(bit_window: np.ndarray) -> np.ndarray:
    """Map digit windows ``(..., bits, s)`` to points ``y = sum_j b_j 2^{-(j+1)}``."""
    nbits = bit_window.shape[-2]
    weights = 0.5 ** np.arange(1, nbits + 1)
    return np.einsum("...js,j->...s", bit_window, weights)


def torus_observable(g: Callable[[np.ndarray], np.ndarray], s: int = 1, bits: int = 53,
                     name: str = "g(y)") -> Observable:
    """Observable of the ``y`` half of the binary-digit system.

    ``g`` maps points of shape ``(batch, s)`` to ``(batch,)``.
    """
    return Observable(lambda w: g(torus_point(w)), window=bits, name=name)


def binary_digit_shift(x, y) -> tuple[np.ndarray, np.ndarray]:
    """One application of the baker's map on ``T^s x T^s``.

    The leading binary digit of each ``x_i`` moves to the front of ``y_i``:
    ``(x, y) -> (frac(2x), (floor(2x) + y) / 2)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any((x < 0) | (x >= 1) | (y < 0) | (y >= 1)):
        raise ValueError("coordinates must lie in [0, 1)")
    lead = np.floor(2.0 * x)
    return 2.0 * x - lead, (lead + y) / 2.0
