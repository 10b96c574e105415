"""Column orthonormalization for the public-gradient basis."""

from __future__ import annotations

import numpy as np

DROP_TOL = 1e-10


def orthonormalize_columns(G: np.ndarray, mode: str = "orthonormal", tol: float = DROP_TOL) -> np.ndarray:
    """(Ortho)normalize the columns of a ``d x k`` matrix.

    ``mode="orthonormal"`` runs modified Gram-Schmidt over the columns in input
    order, with a second projection pass per column to keep ``Q^T Q = I`` tight.
    A column whose residual norm falls below ``tol`` times its original norm is
    dependent and is dropped, so the result may have fewer columns than ``G``;
    its column count is the effective ``k``. ``mode="normalize"`` only rescales
    each column to unit norm.

    Raises:
        ValueError: on a zero column (naming its index) or ``k > d``.
    """
    G = np.asarray(G, dtype=np.float64)
    if G.ndim != 2:
        raise ValueError("G must be a d x k matrix")
    d, k = G.shape
    if k > d:
        raise ValueError(f"need k <= d, got k={k}, d={d}")
    norms = np.linalg.norm(G, axis=0)
    for j in range(k):
        if norms[j] == 0 or not np.isfinite(norms[j]):
            raise ValueError(f"column {j} of G is zero or non-finite")
    if mode == "normalize":
        return G / norms
    if mode != "orthonormal":
        raise ValueError(f"unknown mode {mode!r}")

    basis: list[np.ndarray] = []
    for j in range(k):
        v = G[:, j].copy()
        for _ in range(2):
            for qcol in basis:
                v -= (qcol @ v) * qcol
        r = np.linalg.norm(v)
        if r <= tol * norms[j]:
            continue
        basis.append(v / r)
    if not basis:
        return np.zeros((d, 0))
    return np.column_stack(basis)
