"""Per-window team graph: distances, row-softmax adjacency and the normalized operator Â."""

from dataclasses import dataclass
from typing import Literal

import numpy as np

from src.errors import GraphDegeneracyError, ShapeError
from src.network.numerics import DTYPE, Matrix, softmax

DegreeSource = Literal["self_loops", "adjacency"]


def as_positions(positions) -> np.ndarray:
    """Validate node positions: an ``(N, 2)`` finite array with ``N >= 2``."""
    p = np.asarray(positions, dtype=DTYPE)
    if p.ndim != 2 or p.shape[1] != 2:
        raise ShapeError(f"positions must have shape (N, 2), got {p.shape}")
    if p.shape[0] < 2:
        raise ShapeError(f"a team graph needs at least 2 nodes, got {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise ShapeError("positions contain non-finite coordinates")
    return p


def pairwise_distances(positions) -> Matrix:
    """Euclidean distance matrix; symmetric with an exact zero diagonal."""
    p = as_positions(positions)
    diff = p[:, None, :] - p[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    # squared differences are symmetric term by term, so d is exactly symmetric
    np.fill_diagonal(d, 0.0)
    return d


def adjacency(positions, distance_scale: float = 1.0) -> Matrix:
    """Row-softmax of ``-distance_scale * d``, self term included.

    Each row sums to 1 and entries shrink as the pair moves apart.
    """
    d = pairwise_distances(positions)
    return softmax(-distance_scale * d)


def normalized_laplacian(a: Matrix, degree_source: DegreeSource = "self_loops") -> Matrix:
    """Symmetric normalization ``D̃^-1/2 (A + I) D̃^-1/2``.

    Args:
        a: Square adjacency with nonnegative entries.
        degree_source: ``"self_loops"`` takes degrees from ``A + I``;
            ``"adjacency"`` takes them from ``A`` alone.

    Raises:
        GraphDegeneracyError: if any degree is not strictly positive.
    """
    a = np.asarray(a, dtype=DTYPE)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"adjacency must be square, got {a.shape}")
    a_tilde = a + np.eye(a.shape[0], dtype=DTYPE)
    source = a_tilde if degree_source == "self_loops" else a
    degree = source.sum(axis=1)
    if np.any(degree <= 0.0):
        raise GraphDegeneracyError(f"non-positive node degree in {degree.tolist()}")
    inv_sqrt = 1.0 / np.sqrt(degree)
    return inv_sqrt[:, None] * a_tilde * inv_sqrt[None, :]


@dataclass(frozen=True)
class GraphSnapshot:
    """Adjacency and normalized operator of the team graph at one instant."""

    adjacency: Matrix
    laplacian: Matrix
    timestamp: float

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]


def build_snapshot(positions, t: float, distance_scale: float = 1.0,
                   degree_source: DegreeSource = "self_loops") -> GraphSnapshot:
    a = adjacency(positions, distance_scale)
    return GraphSnapshot(adjacency=a, laplacian=normalized_laplacian(a, degree_source), timestamp=float(t))
