"""Synthetic encoders with known equivariance behaviour, and the dataset CSV format.

CSV layout::

    # lsbd-grid: N1,N2,...,NK
    # dim: D
    j1,...,jK,z1,...,zD        (one line per grid element, enumeration order)

Floats are written with ``repr`` so they round-trip exactly. Random draws use
numpy's PCG64 generator (``numpy.random.default_rng(seed)``); noise is drawn as
one ``(order, D)`` standard-normal block, filled row-major.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import IncompleteGridError, InvalidInputError, ParseError, UnsupportedSpecError
from .groups import GroupGrid

ORACLE_KINDS = ("perfect", "noisy", "entangled_linear", "sum_coupled", "random")

GRID_HEADER = "# lsbd-grid: "
DIM_HEADER = "# dim: "


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Embeddings ``h(g . x0)`` for every element of ``grid``, one row each.

    The row for the identity tuple (row 0) is the base point's embedding.
    ``data`` is stored read-only so a loaded set can be shared freely.
    """

    grid: GroupGrid
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise InvalidInputError(f"embeddings must be a 2-d array, got {data.ndim}-d")
        if data.shape[0] != self.grid.order:
            raise IncompleteGridError(
                f"incomplete factorial grid: row count {data.shape[0]} ≠ {self.grid.order}"
            )
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("embeddings contain non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def scaled(self, c: float) -> "EmbeddingSet":
        return EmbeddingSet(self.grid, c * self.data)

    def transformed(self, matrix: np.ndarray) -> "EmbeddingSet":
        """Apply a linear map to every embedding (rows are ``matrix @ z``)."""
        return EmbeddingSet(self.grid, self.data @ np.asarray(matrix, dtype=float).T)

    def equals(self, other: "EmbeddingSet") -> bool:
        return self.grid == other.grid and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class OracleSpec:
    kind: str
    omegas: tuple[int, ...]
    radius: Optional[tuple[float, ...]] = None
    phases: Optional[tuple[float, ...]] = None
    noise_sigma: float = 0.0
    mix: Optional[np.ndarray] = None
    seed: int = 0
    # Ambient dimension; extra coordinates beyond 2K are zero before mixing/noise.
    dim: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ORACLE_KINDS:
            raise InvalidInputError(f"unknown oracle {self.kind!r}; expected one of {', '.join(ORACLE_KINDS)}")
        object.__setattr__(self, "omegas", tuple(int(w) for w in self.omegas))
        K = len(self.omegas)
        for name in ("radius", "phases"):
            value = getattr(self, name)
            if value is not None:
                value = tuple(float(v) for v in np.broadcast_to(np.asarray(value, dtype=float), (K,)))
                object.__setattr__(self, name, value)
        if self.radius is not None and not all(r > 0 for r in self.radius):
            raise InvalidInputError(f"radius must be positive, got {self.radius}")
        if not self.noise_sigma >= 0:
            raise InvalidInputError(f"noise_sigma must be nonnegative, got {self.noise_sigma}")
        if self.dim is not None and self.dim < 2 * K:
            raise InvalidInputError(f"dim {self.dim} is smaller than 2K = {2 * K}")
        if self.mix is not None:
            mix = np.array(self.mix, dtype=float)
            if mix.ndim != 2 or mix.shape[0] != mix.shape[1]:
                raise InvalidInputError(f"mix must be square, got shape {mix.shape}")
            if not np.all(np.isfinite(mix)) or np.linalg.matrix_rank(mix) < mix.shape[0]:
                raise InvalidInputError("mix matrix is not invertible")
            mix.setflags(write=False)
            object.__setattr__(self, "mix", mix)


def _circle_blocks(spec: OracleSpec, angles: np.ndarray, dim: int) -> np.ndarray:
    K = angles.shape[1]
    radius = spec.radius or (1.0,) * K
    phases = spec.phases or (0.0,) * K
    block_angles = angles * np.asarray(spec.omegas, dtype=float)
    if spec.kind == "sum_coupled":
        block_angles = np.stack([block_angles[:, 0] + block_angles[:, 1], block_angles[:, 1]], axis=1)
    out = np.zeros((angles.shape[0], dim))
    for k in range(K):
        t = block_angles[:, k] + phases[k]
        out[:, 2 * k] = radius[k] * np.cos(t)
        out[:, 2 * k + 1] = radius[k] * np.sin(t)
    return out


def generate(spec: OracleSpec, grid: GroupGrid) -> EmbeddingSet:
    """Build the embedding set for ``spec`` over every element of ``grid``."""
    K = grid.K
    if len(spec.omegas) != K:
        raise InvalidInputError(f"oracle has {len(spec.omegas)} frequencies but the grid has K = {K}")
    if spec.kind == "sum_coupled" and K != 2:
        raise UnsupportedSpecError(f"sum_coupled requires K=2, got K={K}")
    dim = spec.dim or (spec.mix.shape[0] if spec.mix is not None else 2 * K)
    rng = np.random.default_rng(spec.seed)

    if spec.kind == "random":
        return EmbeddingSet(grid, rng.standard_normal((grid.order, dim)))

    data = _circle_blocks(spec, grid.angles(), dim)
    if spec.kind == "entangled_linear":
        if spec.mix is None:
            raise InvalidInputError("entangled_linear needs a mix matrix")
        if spec.mix.shape[0] != dim:
            raise InvalidInputError(f"mix is {spec.mix.shape[0]}x{spec.mix.shape[0]} but dim is {dim}")
        data = data @ spec.mix.T
    if spec.kind == "noisy" and spec.noise_sigma > 0:
        data = data + spec.noise_sigma * rng.standard_normal((grid.order, dim))
    return EmbeddingSet(grid, data)


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix)."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def format_csv(es: EmbeddingSet) -> str:
    lines = [
        GRID_HEADER + ",".join(str(n) for n in es.grid.sizes),
        DIM_HEADER + str(es.dim),
    ]
    for g, row in zip(es.grid.elements().tolist(), es.data.tolist()):
        lines.append(",".join([str(j) for j in g] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


def write_csv(es: EmbeddingSet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_csv(es))


def _parse_int_list(text: str, line: int) -> list[int]:
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise ParseError(f"malformed header value {text!r}", line) from None
    return values


def parse_csv(text: str) -> EmbeddingSet:
    lines = text.splitlines()
    if len(lines) < 2 or not lines[0].startswith(GRID_HEADER):
        raise ParseError(f"malformed header: first line must start with {GRID_HEADER.strip()!r}", 1)
    sizes = _parse_int_list(lines[0][len(GRID_HEADER):].strip(), 1)
    if not sizes or any(n < 1 for n in sizes):
        raise ParseError(f"malformed header: grid sizes must be positive, got {sizes}", 1)
    if not lines[1].startswith(DIM_HEADER):
        raise ParseError(f"malformed header: second line must start with {DIM_HEADER.strip()!r}", 2)
    dims = _parse_int_list(lines[1][len(DIM_HEADER):].strip(), 2)
    if len(dims) != 1 or dims[0] < 1:
        raise ParseError("malformed header: dim must be one positive integer", 2)
    dim = dims[0]
    grid = GroupGrid.from_sizes(sizes)
    K = grid.K

    body = [(n, ln) for n, ln in enumerate(lines[2:], start=3) if ln.strip()]
    data = np.empty((len(body), dim))
    previous = -1
    for row, (lineno, ln) in enumerate(body):
        cells = ln.split(",")
        if len(cells) != K + dim:
            raise ParseError(f"expected {K + dim} columns, got {len(cells)}", lineno)
        try:
            g = tuple(int(c) for c in cells[:K])
        except ValueError:
            raise ParseError("non-integer group index", lineno) from None
        if any(not 0 <= j < n for j, n in zip(g, sizes)):
            raise ParseError(f"group index {g} outside grid {tuple(sizes)}", lineno)
        try:
            data[row] = [float(c) for c in cells[K:]]
        except ValueError:
            raise ParseError("non-numeric cell", lineno) from None
        if not np.all(np.isfinite(data[row])):
            raise ParseError("non-finite value", lineno)
        flat = int(np.ravel_multi_index(g, sizes))
        if flat <= previous:
            raise ParseError(f"row {g} is out of grid enumeration order or repeated", lineno)
        if row >= grid.order:
            raise ParseError(f"row count exceeds declared grid size {grid.order}", lineno)
        previous = flat

    if len(body) != grid.order:
        # Rows are valid and ordered, so the file is a strict subset of the grid.
        raise IncompleteGridError(f"incomplete factorial grid: row count {len(body)} ≠ {grid.order}")
    return EmbeddingSet(grid, data)


def read_csv(path) -> EmbeddingSet:
    with open(path, encoding="utf-8") as f:
        return parse_csv(f.read())


def read_collection(directory) -> list[tuple[str, EmbeddingSet]]:
    """Every ``*.csv`` in ``directory``, sorted by file name."""
    names = sorted(n for n in os.listdir(directory) if n.endswith(".csv"))
    if not names:
        raise InvalidInputError(f"no .csv files in {directory}")
    return [(n, read_csv(os.path.join(directory, n))) for n in names]
