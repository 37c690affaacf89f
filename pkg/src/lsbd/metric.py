"""Dispersion-based LSBD score for embeddings over SO(2) product grids.

Two levels are provided:

* ``simple_metric`` / ``pairwise_metric`` score a fixed, known representation
  (the dispersion of aligned points around their mean, and its pairwise
  double-sum form; the two agree for orthogonal representations).
* ``d_lsbd`` is the practical estimator: for each subgroup, centre every
  embedding on its subgroup orbit, project onto the top two principal
  directions, and search integer frequencies for the rotation representation
  that minimises dispersion. The per-subgroup minima are averaged.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateSubgroupError, InvalidInputError
from .groups import DEFAULT_OMEGA_RANGE, GroupGrid, RepParams, align, rotate
from .synth import EmbeddingSet

log = logging.getLogger(__name__)

NORMALIZATIONS = ("off", "lambda")

# Dispersion values closer than this to the minimum count as ties.
OMEGA_TIE_TOL = 1e-12
# Eigenvalues within this fraction of the largest are treated as one eigenspace.
EIGEN_TIE_RTOL = 1e-9
# Centred variance below (this * embedding RMS)^2 counts as no variability at all.
ZERO_VARIANCE_RTOL = 1e-12
RANK_RTOL = 1e-10


def _check_fixed_rep(es: EmbeddingSet, params: RepParams) -> None:
    K = es.grid.K
    if es.dim != 2 * K:
        raise InvalidInputError(f"fixed-representation metrics need dim = 2K = {2 * K}, got {es.dim}")
    if len(params.omegas) != K:
        raise InvalidInputError(f"need {K} frequencies, got {len(params.omegas)}")


def simple_metric(es: EmbeddingSet, params: RepParams) -> tuple[float, np.ndarray]:
    """Mean squared distance of the aligned points to their mean.

    Returns ``(value, mean)`` where ``mean`` is the centroid of
    ``rho(g_n^{-1}) h(x_n)`` over all rows.
    """
    _check_fixed_rep(es, params)
    aligned = align(es.data, es.grid, params.omegas)
    mean = aligned.mean(axis=0)
    value = float(np.mean(np.sum((aligned - mean) ** 2, axis=1)))
    return value, mean


def pairwise_metric(es: EmbeddingSet, params: RepParams, chunk: int = 256) -> float:
    """Half the mean squared distance over all ordered pairs of aligned points."""
    _check_fixed_rep(es, params)
    aligned = align(es.data, es.grid, params.omegas)
    n = aligned.shape[0]
    total = 0.0
    for start in range(0, n, chunk):
        diff = aligned[start:start + chunk, None, :] - aligned[None, :, :]
        total += float(np.sum(diff * diff))
    return total / (2.0 * n * n)


@dataclass(frozen=True, eq=False)
class CenteredOrbitSet:
    """Embeddings minus their mean over the orbit of subgroup ``k``."""

    k: int
    grid: GroupGrid
    vectors: np.ndarray
    # RMS norm of the raw embeddings; reference scale for the zero-variability test.
    scale: float


@dataclass(frozen=True, eq=False)
class ProjectedOrbitSet:
    k: int
    grid: GroupGrid
    coords: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    explained_fraction: float
    degenerate: bool = False


def center_subgroup(es: EmbeddingSet, k: int) -> CenteredOrbitSet:
    grid = es.grid
    if not 0 <= k < grid.K:
        raise InvalidInputError(f"subgroup index {k} out of range for K = {grid.K}")
    cube = es.data.reshape(grid.sizes + (es.dim,))
    centered = cube - cube.mean(axis=k, keepdims=True)
    scale = float(np.sqrt(np.mean(np.sum(es.data ** 2, axis=1))))
    return CenteredOrbitSet(k, grid, centered.reshape(grid.order, es.dim), scale)


def _canonical_basis(vectors: np.ndarray) -> np.ndarray:
    """Orthonormal basis of span(columns) that does not depend on how they were chosen.

    Uses the reduced row echelon form of the spanning set, then Gram-Schmidt in
    pivot order. Needed where a covariance has a repeated eigenvalue and the
    eigen-solver's choice of basis inside that eigenspace is arbitrary.
    """
    a = vectors.T.copy()
    m, d = a.shape
    row = 0
    for col in range(d):
        if row == m:
            break
        pivot = row + int(np.argmax(np.abs(a[row:, col])))
        if abs(a[pivot, col]) < 1e-8:
            continue
        a[[row, pivot]] = a[[pivot, row]]
        a[row] /= a[row, col]
        for r in range(m):
            if r != row:
                a[r] -= a[r, col] * a[row]
        row += 1
    q, _ = np.linalg.qr(a.T)
    return q


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _sorted_eigh(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition with a reproducible basis.

    Eigenvalues descending; each eigenvector's largest-magnitude entry positive;
    inside a repeated eigenvalue the basis is canonicalised and ordered by
    ascending lexicographic comparison of the eigenvectors.
    """
    evals, evecs = np.linalg.eigh(cov)
    evals, evecs = evals[::-1].copy(), evecs[:, ::-1].copy()
    tol = EIGEN_TIE_RTOL * max(abs(evals[0]), np.finfo(float).tiny)
    d = len(evals)
    i = 0
    while i < d:
        j = i + 1
        while j < d and evals[i] - evals[j] <= tol:
            j += 1
        block = evecs[:, i:j]
        if j - i > 1:
            block = _fix_signs(_canonical_basis(block))
            order = sorted(range(j - i), key=lambda c: tuple(np.round(block[:, c], 12)))
            block = block[:, order]
        else:
            block = _fix_signs(block)
        evecs[:, i:j] = block
        i = j
    return evals, evecs


def pca_project(c: CenteredOrbitSet, d_out: int = 2) -> ProjectedOrbitSet:
    """Project onto the top ``d_out`` principal directions of the centred vectors.

    Raises DegenerateSubgroupError when the vectors carry no variability (an
    encoder invariant to the subgroup). Rank-deficient but nonzero data is
    projected and flagged ``degenerate``.
    """
    x = c.vectors - c.vectors.mean(axis=0)
    n, d = x.shape
    if d < d_out:
        raise InvalidInputError(f"cannot project {d}-dimensional embeddings onto {d_out} components")
    cov = x.T @ x / n
    total = float(np.trace(cov))
    if total <= (ZERO_VARIANCE_RTOL * c.scale) ** 2:
        raise DegenerateSubgroupError(f"subgroup-{c.k} variability is zero")
    evals, evecs = _sorted_eigh(cov)
    evals = np.clip(evals, 0.0, None)
    basis = evecs[:, :d_out]
    explained = float(np.sum(evals[:d_out]) / np.sum(evals))
    degenerate = bool(evals[d_out - 1] <= RANK_RTOL * evals[0])
    return ProjectedOrbitSet(c.k, c.grid, x @ basis, basis, evals, explained, degenerate)


def dispersion_for_omega(p: ProjectedOrbitSet, grid: GroupGrid, omega: int) -> float:
    """Dispersion of projected points after undoing ``rho_{k,omega}`` of their subgroup coordinate."""
    theta = grid.angles()[:, p.k]
    aligned = rotate(p.coords, -omega * theta)
    mean = aligned.mean(axis=0)
    return float(np.mean(np.sum((aligned - mean) ** 2, axis=1)))


@dataclass
class SubgroupReport:
    k: int
    omega_star: Optional[int]
    d_k: float
    explained_fraction: Optional[float]
    dispersion_curve: dict[int, float] = field(default_factory=dict)
    lambda_k: Optional[float] = None
    degenerate: bool = False
    ties: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "k": self.k,
            "omega_star": self.omega_star,
            "d_k": self.d_k,
            "explained_fraction": self.explained_fraction,
            "dispersion_curve": {str(w): v for w, v in self.dispersion_curve.items()},
        }
        if self.lambda_k is not None:
            out["lambda_k"] = self.lambda_k
        out["degenerate"] = self.degenerate
        return out


@dataclass
class MetricReport:
    d_lsbd: float
    normalization: str
    omega_range: tuple[int, int]
    per_subgroup: list[SubgroupReport]

    def to_dict(self) -> dict:
        return {
            "d_lsbd": self.d_lsbd,
            "normalization": self.normalization,
            "omega_range": list(self.omega_range),
            "per_subgroup": [s.to_dict() for s in self.per_subgroup],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _pick_omega(curve: dict[int, float]) -> tuple[int, float, list[int]]:
    best = min(curve.values())
    ties = [w for w, v in curve.items() if v <= best + OMEGA_TIE_TOL]
    # Simplest representation wins: smallest |omega|, then the positive one.
    omega = min(ties, key=lambda w: (abs(w), w < 0))
    return omega, best, sorted(ties)


def _subgroup_report(es: EmbeddingSet, k: int, omegas: range, normalization: str) -> SubgroupReport:
    try:
        p = pca_project(center_subgroup(es, k))
    except DegenerateSubgroupError:
        log.warning("subgroup %d has zero variability; reporting d_k = 0", k)
        lam = 1.0 if normalization == "lambda" else None
        return SubgroupReport(k, None, 0.0, None, {}, lam, True)
    curve = {w: dispersion_for_omega(p, es.grid, w) for w in omegas}
    lam = None
    if normalization == "lambda":
        lam = float(np.mean(np.sum(p.coords ** 2, axis=1)))
        if not lam > 0:
            lam = 1.0
        curve = {w: v / lam for w, v in curve.items()}
    omega, best, ties = _pick_omega(curve)
    return SubgroupReport(k, omega, best, p.explained_fraction, curve, lam, p.degenerate, ties)


def d_lsbd(
    es: EmbeddingSet,
    omega_range: Sequence[int] = DEFAULT_OMEGA_RANGE,
    normalization: str = "off",
    threads: Optional[int] = None,
) -> MetricReport:
    """Score an embedding set; lower is better, zero means exactly equivariant.

    The score is an upper bound on the infimum over linearly disentangled
    representations, restricted to rotation representations with integer
    frequency in ``omega_range`` (inclusive) on the top-2 PCA plane of each
    subgroup. With ``normalization="lambda"`` each subgroup's dispersion is
    divided by the mean squared norm of its projected vectors, which makes the
    score scale invariant. ``threads`` caps the worker pool (default: CPU count).
    """
    if normalization not in NORMALIZATIONS:
        raise InvalidInputError(f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}")
    lo, hi = (int(w) for w in omega_range)
    if lo > hi:
        raise InvalidInputError(f"empty omega range [{lo}, {hi}]")
    K = es.grid.K
    if es.dim < 2 * K:
        raise InvalidInputError(f"embedding dim {es.dim} is smaller than 2K = {2 * K}")
    omegas = range(lo, hi + 1)

    if threads is not None and threads < 1:
        raise InvalidInputError(f"threads must be at least 1, got {threads}")
    # Subgroups are scored independently, so the worker count never changes the result.
    workers = min(K, threads if threads is not None else os.cpu_count() or 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(lambda k: _subgroup_report(es, k, omegas, normalization), range(K)))
    else:
        reports = [_subgroup_report(es, k, omegas, normalization) for k in range(K)]
    total = float(np.mean([r.d_k for r in reports]))
    return MetricReport(total, normalization, (lo, hi), reports)


def omega_recovery(es: EmbeddingSet, omega_range: Sequence[int] = DEFAULT_OMEGA_RANGE) -> list[dict]:
    """Absolute best-fit frequency per subgroup.

    The sign is dropped because PCA may reflect the plane, which flips the
    rotation sense. ``ties`` lists every absolute frequency within the tie
    tolerance of the minimum; degenerate subgroups report ``None``.
    """
    report = d_lsbd(es, omega_range)
    out = []
    for s in report.per_subgroup:
        if s.omega_star is None:
            out.append({"k": s.k, "omega_star": None, "ties": [], "degenerate": True})
        else:
            out.append({
                "k": s.k,
                "omega_star": abs(s.omega_star),
                "ties": sorted({abs(w) for w in s.ties}),
                "degenerate": s.degenerate,
            })
    return out


def d_lsbd_collection(
    sets: Sequence[EmbeddingSet],
    omega_range: Sequence[int] = DEFAULT_OMEGA_RANGE,
    normalization: str = "off",
    threads: Optional[int] = None,
) -> tuple[float, list[MetricReport]]:
    """Mean score over several objects that share one grid, each with its own base point."""
    if not sets:
        raise InvalidInputError("empty collection")
    grid = sets[0].grid
    if any(s.grid != grid for s in sets):
        raise InvalidInputError("all sets in a collection must share one grid")
    reports = [d_lsbd(s, omega_range, normalization, threads) for s in sets]
    return float(np.mean([r.d_lsbd for r in reports])), reports
