"""Edge-vector representation of undirected graphs and the Laplacian algebra.

Edges are stored as a vector ``w`` of length ``p(p-1)/2`` indexed in
lexicographic order of the pairs ``(i, j)`` with ``i < j``, i.e. the order
returned by ``numpy.triu_indices(p, 1)``.  Every module in the package uses
this single convention.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def num_edges(p: int) -> int:
    return p * (p - 1) // 2


def num_nodes(m: int) -> int:
    """Recover ``p`` from an edge-vector length ``m``."""
    p = int(round((1 + np.sqrt(1 + 8 * m)) / 2))
    if num_edges(p) != m:
        raise ValueError(f"length {m} is not a triangular number p(p-1)/2")
    return p


@lru_cache(maxsize=64)
def edge_index(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices of every edge, in edge-vector order."""
    rows, cols = np.triu_indices(p, 1)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def validate_weights(w, p: int | None = None) -> np.ndarray:
    """Return ``w`` as a float array after checking length and sign."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError("edge weights must be a 1-D vector")
    if p is None:
        p = num_nodes(w.size)
    elif w.size != num_edges(p):
        raise ValueError(f"expected {num_edges(p)} edge weights for p={p}, got {w.size}")
    if np.any(w < 0):
        raise ValueError("edge weights must be nonnegative")
    return w


def adjacency(w: np.ndarray) -> np.ndarray:
    """Weighted adjacency matrix with zero diagonal."""
    w = np.asarray(w, dtype=float)
    p = num_nodes(w.size)
    rows, cols = edge_index(p)
    W = np.zeros((p, p))
    W[rows, cols] = w
    W[cols, rows] = w
    return W


def laplacian(w: np.ndarray) -> np.ndarray:
    """Combinatorial Laplacian ``Diag(W 1) - W``."""
    W = adjacency(w)
    L = -W
    L[np.diag_indices_from(L)] = W.sum(axis=1)
    return L


def degree(w: np.ndarray) -> np.ndarray:
    """Weighted node degrees."""
    w = np.asarray(w, dtype=float)
    p = num_nodes(w.size)
    rows, cols = edge_index(p)
    return np.bincount(rows, weights=w, minlength=p) + np.bincount(cols, weights=w, minlength=p)


def laplacian_adjoint(Y: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`laplacian` with respect to the Frobenius inner product.

    ``out[e(i, j)] = Y[i, i] + Y[j, j] - Y[i, j] - Y[j, i]``.
    """
    Y = np.asarray(Y, dtype=float)
    rows, cols = edge_index(Y.shape[0])
    diag = np.diagonal(Y)
    return diag[rows] + diag[cols] - Y[rows, cols] - Y[cols, rows]


def degree_adjoint(z: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`degree`: ``out[e(i, j)] = z[i] + z[j]``."""
    z = np.asarray(z, dtype=float)
    rows, cols = edge_index(z.size)
    return z[rows] + z[cols]


def operator_norm_bound(p: int) -> float:
    """Largest eigenvalue of ``L*L + d*d`` for a ``p``-node graph, ``4p - 2``."""
    if p < 2:
        raise ValueError("need at least two nodes")
    return 4.0 * p - 2.0


def weights_from_laplacian(L: np.ndarray) -> np.ndarray:
    """Inverse of :func:`laplacian` on its range (reads the upper triangle)."""
    L = np.asarray(L, dtype=float)
    rows, cols = edge_index(L.shape[0])
    return -L[rows, cols]


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)
