"""
Node-centred grids on axis-aligned boxes and the discrete operators used by
every other module.

The box [0, L_1] x ... x [0, L_N] (N = 1 or 2) carries ``cells`` nodes per
axis, boundary nodes included, with spacing h = L / (cells - 1).  Homogeneous
Neumann conditions are imposed through mirror ghost nodes, u_{-1} = u_1 and
u_{n} = u_{n-2}, so that

    (Lap u)_0 = 2 (u_1 - u_0) / h^2

on a boundary face.  With trapezoidal weights this Laplacian is self-adjoint
and is diagonalised by the DCT-I basis cos(pi k j / (n - 1)).

Fields are plain ``numpy`` arrays whose shape equals ``Domain.shape``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]


class ShapeMismatchError(ValueError):
    """Raised when a field does not live on the grid it is paired with."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box discretised by a uniform node-centred grid.

    Attributes:
        lengths: side length per axis (one entry in 1D, two in 2D).
        cells: number of nodes per axis, boundary nodes included.
    """

    lengths: tuple[float, ...]
    cells: tuple[int, ...]

    def __post_init__(self) -> None:
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        cells = tuple(int(v) for v in np.atleast_1d(self.cells))
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "cells", cells)
        if len(lengths) not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {len(lengths)}")
        if len(cells) != len(lengths):
            raise ValueError("lengths and cells must have one entry per axis")
        if not all(np.isfinite(v) and v > 0 for v in lengths):
            raise ValueError(f"lengths must be positive, got {lengths}")
        if not all(n >= 3 for n in cells):
            raise ValueError(f"need at least 3 nodes per axis, got {cells}")

    @classmethod
    def interval(cls, length: float = 1.0, cells: int = 257) -> Domain:
        return cls((length,), (cells,))

    @classmethod
    def rectangle(
        cls, lengths: tuple[float, float] = (1.0, 1.0), cells: tuple[int, int] = (129, 129)
    ) -> Domain:
        return cls(tuple(lengths), tuple(cells))

    @property
    def dimension(self) -> int:
        return len(self.lengths)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (n - 1) for L, n in zip(self.lengths, self.cells))

    @property
    def h_min(self) -> float:
        return min(self.spacing)

    @property
    def diameter(self) -> float:
        return float(np.sqrt(sum(L * L for L in self.lengths)))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axes(self) -> list[FloatArray]:
        """1D node coordinates along each axis."""
        return [np.linspace(0.0, L, n) for L, n in zip(self.lengths, self.cells)]

    def mesh(self) -> tuple[FloatArray, ...]:
        """Node coordinates broadcast to the field shape (``indexing='ij'``)."""
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    @cached_property
    def weights(self) -> FloatArray:
        """Trapezoidal quadrature weights; they sum to ``volume``."""
        w = np.ones(self.shape)
        for axis, h in enumerate(self.spacing):
            w1 = np.full(self.cells[axis], h)
            w1[0] = w1[-1] = 0.5 * h
            shape = [1] * self.dimension
            shape[axis] = -1
            w = w * w1.reshape(shape)
        return w

    def check(self, f: np.ndarray) -> FloatArray:
        """Return ``f`` as a float array, raising if it does not fit this grid."""
        arr = np.asarray(f, dtype=float)
        if arr.shape != self.shape:
            raise ShapeMismatchError(f"field shape {arr.shape} does not match domain {self.shape}")
        return arr

    def mean(self, f: np.ndarray) -> float:
        f = self.check(f)
        return float(np.sum(self.weights * f) / self.volume)


def _shifted(f: FloatArray, axis: int) -> tuple[FloatArray, FloatArray]:
    """Right and left neighbours along ``axis`` with mirror ghost values."""
    n = f.shape[axis]
    right = np.take(f, np.r_[1:n, n - 2], axis=axis)
    left = np.take(f, np.r_[1, 0 : n - 1], axis=axis)
    return right, left


def laplacian(f: np.ndarray, d: Domain) -> FloatArray:
    """Five-point (three-point in 1D) Neumann Laplacian with ghost reflection."""
    f = d.check(f)
    out = np.zeros_like(f)
    for axis, h in enumerate(d.spacing):
        right, left = _shifted(f, axis)
        out += ((right - f) + (left - f)) / (h * h)
    return out


def gradient_components(f: np.ndarray, d: Domain) -> list[FloatArray]:
    """Central-difference partial derivatives; the normal one vanishes on faces."""
    f = d.check(f)
    comps = []
    for axis, h in enumerate(d.spacing):
        right, left = _shifted(f, axis)
        # mirror ghosts make the boundary central difference exactly zero
        comps.append((right - left) / (2.0 * h))
    return comps


def gradient_magnitude(f: np.ndarray, d: Domain) -> FloatArray:
    """Euclidean norm of the central-difference gradient at every node."""
    comps = gradient_components(f, d)
    if len(comps) == 1:
        return np.abs(comps[0])
    return np.hypot(comps[0], comps[1])


def gradient_squared(f: np.ndarray, d: Domain) -> FloatArray:
    comps = gradient_components(f, d)
    return sum(c * c for c in comps)


def sup_norm(f: np.ndarray) -> float:
    f = np.asarray(f, dtype=float)
    if f.size == 0:
        raise ValueError("empty field")
    return float(np.max(np.abs(f)))


def q_norm(f: np.ndarray, q: float, d: Domain) -> float:
    """(integral |f|^q)^(1/q) by the trapezoidal rule."""
    if not q >= 1:
        raise ValueError(f"q must be >= 1, got {q}")
    f = d.check(f)
    scale = sup_norm(f)
    if scale == 0.0:
        return 0.0
    # rescale so large q does not overflow
    integral = float(np.sum(d.weights * np.abs(f / scale) ** q))
    return scale * integral ** (1.0 / q)


def max_min(f: np.ndarray) -> tuple[float, float]:
    f = np.asarray(f, dtype=float)
    if f.size == 0:
        raise ValueError("empty field")
    return float(np.max(f)), float(np.min(f))


def oscillation(f: np.ndarray) -> float:
    hi, lo = max_min(f)
    return hi - lo
