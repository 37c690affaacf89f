"""Finite cyclic subgroups of SO(2), their direct product, and rotation representations.

Group elements are integer indices; index ``j`` of a grid with ``N`` elements
denotes the rotation by ``2*pi*j/N``. Angles are only materialised when a
representation matrix is built, so composition stays exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

DEFAULT_OMEGA_RANGE = (-10, 10)


def _as_index(j) -> int:
    if isinstance(j, bool) or not isinstance(j, (int, np.integer)):
        raise InvalidInputError(f"group index must be an integer, got {j!r}")
    return int(j)


@dataclass(frozen=True)
class CyclicGrid:
    """Uniform grid of ``size`` rotations, closed under composition."""

    size: int

    def __post_init__(self):
        if isinstance(self.size, bool) or not isinstance(self.size, (int, np.integer)) or self.size < 1:
            raise InvalidInputError(f"grid size must be a positive integer, got {self.size!r}")
        object.__setattr__(self, "size", int(self.size))

    def check(self, j) -> int:
        j = _as_index(j)
        if not 0 <= j < self.size:
            raise InvalidInputError(f"index {j} out of range for grid of size {self.size}")
        return j

    def angle(self, j) -> float:
        return 2.0 * math.pi * self.check(j) / self.size

    def compose(self, a, b) -> int:
        return (self.check(a) + self.check(b)) % self.size

    def inverse(self, a) -> int:
        return (self.size - self.check(a)) % self.size


@dataclass(frozen=True)
class GroupGrid:
    """Direct product of cyclic grids, enumerated row-major (last index fastest)."""

    subgroups: tuple[CyclicGrid, ...]

    def __post_init__(self):
        subgroups = tuple(s if isinstance(s, CyclicGrid) else CyclicGrid(s) for s in self.subgroups)
        if not subgroups:
            raise InvalidInputError("a group grid needs at least one subgroup")
        object.__setattr__(self, "subgroups", subgroups)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "GroupGrid":
        return cls(tuple(CyclicGrid(n) for n in sizes))

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(s.size for s in self.subgroups)

    @property
    def K(self) -> int:
        return len(self.subgroups)

    @property
    def order(self) -> int:
        return math.prod(self.sizes)

    @property
    def identity(self) -> tuple[int, ...]:
        return (0,) * self.K

    def check(self, g) -> tuple[int, ...]:
        g = tuple(g)
        if len(g) != self.K:
            raise InvalidInputError(f"expected a {self.K}-tuple, got {len(g)} entries")
        return tuple(s.check(j) for s, j in zip(self.subgroups, g))

    def elements(self) -> np.ndarray:
        """All tuples as an ``(order, K)`` integer array in enumeration order."""
        idx = np.indices(self.sizes).reshape(self.K, -1).T
        return np.ascontiguousarray(idx, dtype=np.int64)

    def angles(self) -> np.ndarray:
        """Angle of every subgroup coordinate, ``(order, K)``, in enumeration order."""
        return 2.0 * np.pi * self.elements() / np.asarray(self.sizes, dtype=float)

    def index(self, g) -> int:
        return int(np.ravel_multi_index(self.check(g), self.sizes))

    def element(self, i) -> tuple[int, ...]:
        i = _as_index(i)
        if not 0 <= i < self.order:
            raise InvalidInputError(f"element index {i} out of range for grid of order {self.order}")
        return tuple(int(j) for j in np.unravel_index(i, self.sizes))

    def compose(self, a, b) -> tuple[int, ...]:
        a, b = self.check(a), self.check(b)
        return tuple((x + y) % n for x, y, n in zip(a, b, self.sizes))

    def inverse(self, a) -> tuple[int, ...]:
        return tuple((n - x) % n for x, n in zip(self.check(a), self.sizes))


def compose(grid: GroupGrid, a, b) -> tuple[int, ...]:
    return grid.compose(a, b)


def inverse(grid: GroupGrid, a) -> tuple[int, ...]:
    return grid.inverse(a)


@dataclass(frozen=True)
class RepParams:
    """Per-subgroup integer frequencies plus the inclusive search range."""

    omegas: tuple[int, ...]
    omega_range: tuple[int, int] = DEFAULT_OMEGA_RANGE

    def __post_init__(self):
        omegas = tuple(_as_index(w) for w in self.omegas)
        lo, hi = (_as_index(w) for w in self.omega_range)
        if lo > hi:
            raise InvalidInputError(f"empty omega range [{lo}, {hi}]")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "omega_range", (lo, hi))

    @property
    def candidates(self) -> range:
        return range(self.omega_range[0], self.omega_range[1] + 1)


def rotation_matrix(angle: float) -> np.ndarray:
    angle = float(angle)
    if not math.isfinite(angle):
        raise InvalidInputError(f"rotation angle must be finite, got {angle}")
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotate(z: np.ndarray, angles) -> np.ndarray:
    """Rotate each row of an ``(n, 2)`` array by the matching entry of ``angles``."""
    z = np.asarray(z, dtype=float)
    c, s = np.cos(angles), np.sin(angles)
    return np.stack([c * z[..., 0] - s * z[..., 1], s * z[..., 0] + c * z[..., 1]], axis=-1)


def rep_matrix(omega: int, grid: CyclicGrid, j) -> np.ndarray:
    return rotation_matrix(_as_index(omega) * grid.angle(j))


def rep_apply(omega: int, grid: CyclicGrid, j, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (2,):
        raise InvalidInputError(f"expected a 2-vector, got shape {z.shape}")
    return rep_matrix(omega, grid, j) @ z


def direct_sum_apply(params: RepParams, grid: GroupGrid, g, z) -> np.ndarray:
    """Apply ``rho_1(g_1) + ... + rho_K(g_K)`` block-wise to a ``2K`` vector."""
    g = grid.check(g)
    z = np.asarray(z, dtype=float)
    if z.shape != (2 * grid.K,):
        raise InvalidInputError(f"expected a {2 * grid.K}-vector, got shape {z.shape}")
    if len(params.omegas) != grid.K:
        raise InvalidInputError(f"need {grid.K} frequencies, got {len(params.omegas)}")
    out = np.empty_like(z)
    for k, (sub, w, j) in enumerate(zip(grid.subgroups, params.omegas, g)):
        out[2 * k:2 * k + 2] = rep_apply(w, sub, j, z[2 * k:2 * k + 2])
    return out


def align(data: np.ndarray, grid: GroupGrid, omegas: Sequence[int]) -> np.ndarray:
    """Transport every row back to the base point: ``rho(g_n^{-1}) h(x_n)`` for all rows.

    ``data`` is ``(order, 2K)`` in enumeration order.
    """
    data = np.asarray(data, dtype=float)
    angles = grid.angles()
    out = np.empty_like(data)
    for k, w in enumerate(omegas):
        out[:, 2 * k:2 * k + 2] = rotate(data[:, 2 * k:2 * k + 2], -w * angles[:, k])
    return out
