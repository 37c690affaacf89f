"""Learn torus embeddings from transformation-labelled batches.

Every data point (grid element) gets one angle per subgroup; its embedding is
the point ``(cos t_1, sin t_1, ..., cos t_K, sin t_K)`` on the torus
``S^1 x ... x S^1``. A labelled batch says ``x_m = g_m . x_1``; its loss is the
mean squared distance of the aligned embeddings ``rho(g_m^{-1}) z_m`` to the
unit-circle projection of their mean, with ``rho`` the frequency-1 rotation
representation of every subgroup.

Because aligned points are unit vectors, each subgroup contributes
``2 - 2 R_k`` where ``R_k`` is the mean resultant length of the aligned angles,
which gives the gradient in closed form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateProjectionError, InvalidInputError, TrainingError
from .groups import GroupGrid
from .synth import EmbeddingSet

log = logging.getLogger(__name__)

PROJECTION_EPS = 1e-12
MAX_SKIP_FRACTION = 0.01


def torus_embed(angles: np.ndarray) -> np.ndarray:
    """Map ``(..., K)`` angles to ``(..., 2K)`` ambient coordinates."""
    angles = np.asarray(angles, dtype=float)
    out = np.empty(angles.shape[:-1] + (2 * angles.shape[-1],))
    out[..., 0::2] = np.cos(angles)
    out[..., 1::2] = np.sin(angles)
    return out


def torus_angles(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.arctan2(z[..., 1::2], z[..., 0::2])


def project_torus(z) -> np.ndarray:
    """Scale every 2-block of ``z`` to unit length."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] % 2:
        raise InvalidInputError(f"ambient dimension must be even, got {z.shape[-1]}")
    blocks = z.reshape(z.shape[:-1] + (-1, 2))
    norms = np.linalg.norm(blocks, axis=-1, keepdims=True)
    if np.any(norms <= PROJECTION_EPS):
        raise DegenerateProjectionError("cannot project a zero block onto the unit circle")
    return (blocks / norms).reshape(z.shape)


@dataclass(frozen=True)
class ConstraintBatch:
    """Dataset indices ``members`` with ``x_m = transforms[m] . x_members[0]``."""

    members: tuple[int, ...]
    transforms: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        members = tuple(int(m) for m in self.members)
        transforms = tuple(tuple(int(j) for j in t) for t in self.transforms)
        if not members or len(members) != len(transforms):
            raise InvalidInputError("a batch needs one transform per member and at least one member")
        if any(j != 0 for j in transforms[0]):
            raise InvalidInputError("the first transform of a batch must be the identity")
        if len(set(members)) != len(members):
            raise InvalidInputError(f"batch members must be distinct: {members}")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "transforms", transforms)

    @classmethod
    def from_indices(cls, grid: GroupGrid, members: Sequence[int]) -> "ConstraintBatch":
        """Label a batch of grid elements with their true transforms relative to the first."""
        first = grid.element(members[0])
        inv = grid.inverse(first)
        return cls(tuple(members), tuple(grid.compose(grid.element(m), inv) for m in members))

    def __len__(self):
        return len(self.members)


def _transform_angles(grid: GroupGrid, batch: ConstraintBatch) -> np.ndarray:
    t = np.array([grid.check(g) for g in batch.transforms], dtype=float)
    return 2.0 * np.pi * t / np.asarray(grid.sizes, dtype=float)


def l_lsbd(grid: GroupGrid, batch: ConstraintBatch, points) -> float:
    """Batch loss for ambient embeddings ``points`` (one ``2K`` row per member)."""
    points = np.asarray(points, dtype=float)
    if points.shape != (len(batch), 2 * grid.K):
        raise InvalidInputError(f"expected points of shape {(len(batch), 2 * grid.K)}, got {points.shape}")
    alpha = _transform_angles(grid, batch)
    aligned = np.empty_like(points)
    for k in range(grid.K):
        c, s = np.cos(-alpha[:, k]), np.sin(-alpha[:, k])
        x, y = points[:, 2 * k], points[:, 2 * k + 1]
        aligned[:, 2 * k] = c * x - s * y
        aligned[:, 2 * k + 1] = s * x + c * y
    target = project_torus(aligned.mean(axis=0))
    return float(np.mean(np.sum((aligned - target) ** 2, axis=1)))


def l_lsbd_angles(grid: GroupGrid, batch: ConstraintBatch, angles) -> float:
    return l_lsbd(grid, batch, torus_embed(angles))


def _loss_and_grad(angles: np.ndarray, alpha: np.ndarray) -> tuple[float, np.ndarray]:
    phi = angles - alpha
    c, s = np.cos(phi).mean(axis=0), np.sin(phi).mean(axis=0)
    r = np.hypot(c, s)
    if np.any(r <= PROJECTION_EPS):
        raise DegenerateProjectionError("aligned batch mean has a zero block")
    psi = np.arctan2(s, c)
    m = angles.shape[0]
    return float(np.sum(2.0 - 2.0 * np.minimum(r, 1.0))), (2.0 / m) * np.sin(phi - psi)


def l_lsbd_grad(grid: GroupGrid, batch: ConstraintBatch, angles) -> np.ndarray:
    """Gradient of the batch loss with respect to every member's angles, ``(M, K)``."""
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (len(batch), grid.K):
        raise InvalidInputError(f"expected angles of shape {(len(batch), grid.K)}, got {angles.shape}")
    return _loss_and_grad(angles, _transform_angles(grid, batch))[1]


def make_pairs(grid: GroupGrid, L: int, seed: int) -> list[ConstraintBatch]:
    """``L`` disjoint labelled pairs drawn uniformly without replacement."""
    if L < 0 or 2 * L > grid.order:
        raise InvalidInputError(f"cannot draw {L} disjoint pairs from {grid.order} points")
    picks = np.random.default_rng(seed).permutation(grid.order)[:2 * L]
    return [ConstraintBatch.from_indices(grid, (int(a), int(b))) for a, b in picks.reshape(-1, 2)]


def _random_walk(grid: GroupGrid, rng: np.random.Generator, path_len: int, steps: np.ndarray) -> list[int]:
    sizes = np.asarray(grid.sizes)
    pos = np.array([rng.integers(n) for n in grid.sizes])
    visited = [grid.index(pos)]
    for move in rng.integers(2 * grid.K, size=path_len):
        k, sign = divmod(int(move), 2)
        pos[k] = (pos[k] + (steps[k] if sign == 0 else -steps[k])) % sizes[k]
        visited.append(grid.index(pos))
    return visited


def make_paths(
    grid: GroupGrid,
    num_paths: int,
    path_len: int,
    step_index,
    seed: int,
    split_pairs: bool = False,
    bridge: bool = True,
) -> list[ConstraintBatch]:
    """Random walks that apply one of ``g_k`` or ``g_k^{-1}`` per step.

    ``g_k`` moves subgroup ``k`` by ``step_index`` grid positions. Each walk
    becomes one batch labelled relative to its start, with revisited elements
    kept once; with ``split_pairs`` it becomes one pair per step instead.
    Walks rarely cover the whole grid, so unless ``bridge`` is False the
    output ends with ``bridge_batches`` joining every point into one component.
    """
    steps = np.broadcast_to(np.asarray(step_index, dtype=np.int64), (grid.K,))
    for k, (st, n) in enumerate(zip(steps, grid.sizes)):
        if not 0 < st < n:
            raise InvalidInputError(f"step {st} is not a valid non-identity element of subgroup {k} (size {n})")
    if num_paths < 0 or path_len < 0:
        raise InvalidInputError("num_paths and path_len must be nonnegative")
    rng = np.random.default_rng(seed)
    batches = []
    for _ in range(num_paths):
        visited = _random_walk(grid, rng, path_len, steps)
        if split_pairs:
            batches.extend(ConstraintBatch.from_indices(grid, (a, b)) for a, b in zip(visited, visited[1:]))
        else:
            batches.append(ConstraintBatch.from_indices(grid, list(dict.fromkeys(visited))))
    if bridge:
        extra = bridge_batches(grid, batches)
        if extra:
            log.info("walks leave %d extra components; appended %d bridge pairs", len(extra), len(extra))
        batches.extend(extra)
    return batches


class UnionFind:
    """Disjoint sets over ``0..size-1`` with path compression and union by size."""

    def __init__(self, size):
        self.parent = list(range(size))
        self.rank = [1] * size
        self.num_components = size

    def find(self, a):
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.rank[ra] += self.rank[rb]
        self.num_components -= 1


def constraint_components(n_points: int, batches: Sequence[ConstraintBatch]) -> tuple[int, np.ndarray]:
    """Component count and per-point component label (labels ordered by smallest member)."""
    uf = UnionFind(n_points)
    for b in batches:
        for m in b.members[1:]:
            uf.union(b.members[0], m)
    roots = [uf.find(i) for i in range(n_points)]
    relabel = {}
    labels = np.array([relabel.setdefault(r, len(relabel)) for r in roots])
    return uf.num_components, labels


def bridge_batches(grid: GroupGrid, batches: Sequence[ConstraintBatch]) -> list[ConstraintBatch]:
    """Labelled pairs that join every component to the largest one.

    Each smaller component contributes its smallest dataset index, paired with
    a distinct member of the largest component (its members taken in index
    order, cycling if needed). Spreading the links avoids a single hub whose
    many strong pair constraints would drag it away from its own component.
    Empty when already connected.
    """
    count, labels = constraint_components(grid.order, batches)
    if count <= 1:
        return []
    sizes = np.bincount(labels, minlength=count)
    main = int(np.argmax(sizes))
    anchors = np.flatnonzero(labels == main)
    reps = [int(np.flatnonzero(labels == c)[0]) for c in range(count) if c != main]
    return [
        ConstraintBatch.from_indices(grid, (int(anchors[i % len(anchors)]), r))
        for i, r in enumerate(reps)
    ]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    epochs: int = 1000
    seed: int = 0
    init: str = "random_uniform_angles"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidInputError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise InvalidInputError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise InvalidInputError(f"epochs must be at least 1, got {self.epochs}")
        if self.init != "random_uniform_angles":
            raise InvalidInputError(f"unknown init {self.init!r}")


@dataclass
class TrainResult:
    embeddings: EmbeddingSet
    angles: np.ndarray
    final_loss: float
    n_components: int
    log: list[dict] = field(default_factory=list)
    skipped_steps: int = 0
    steps: int = 0


def objective(grid: GroupGrid, batches: Sequence[ConstraintBatch], angles: np.ndarray) -> float:
    """Mean batch loss; batches with a degenerate aligned mean are left out."""
    losses = []
    for b in batches:
        try:
            losses.append(_loss_and_grad(angles[list(b.members)], _transform_angles(grid, b))[0])
        except DegenerateProjectionError:
            continue
    return float(np.mean(losses)) if losses else math.nan


def train(grid: GroupGrid, constraints: Sequence[ConstraintBatch], config: TrainConfig = TrainConfig()) -> TrainResult:
    """Momentum gradient descent on the mean batch loss, one update per batch.

    Each epoch visits every batch once in a freshly shuffled order. A batch
    whose aligned mean has a zero block is skipped for that step; more than
    1% skipped steps fails the run.
    """
    if not constraints:
        raise InvalidInputError("no constraints")
    rng = np.random.default_rng(config.seed)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=(grid.order, grid.K))
    velocity = np.zeros_like(angles)
    members = [np.array(b.members) for b in constraints]
    alphas = [_transform_angles(grid, b) for b in constraints]
    n_components, _ = constraint_components(grid.order, constraints)

    history = []
    skipped = steps = 0
    for epoch in range(config.epochs):
        losses = []
        skipped_epoch = 0
        for b in rng.permutation(len(constraints)):
            steps += 1
            idx = members[b]
            try:
                loss, grad = _loss_and_grad(angles[idx], alphas[b])
            except DegenerateProjectionError:
                skipped_epoch += 1
                continue
            losses.append(loss)
            velocity *= config.momentum
            velocity[idx] -= config.learning_rate * grad
            angles += velocity
        skipped += skipped_epoch
        history.append({
            "epoch": epoch,
            "mean_loss": float(np.mean(losses)) if losses else math.nan,
            "skipped_batches": skipped_epoch,
        })

    if skipped > MAX_SKIP_FRACTION * steps:
        raise TrainingError(f"{skipped} of {steps} steps skipped on degenerate batches")
    angles = np.mod(angles, 2.0 * np.pi)
    final = objective(grid, constraints, angles)
    log.info("trained %d epochs: final loss %.3g, %d components", config.epochs, final, n_components)
    return TrainResult(
        EmbeddingSet(grid, torus_embed(angles)), angles, final, n_components, history, skipped, steps
    )
