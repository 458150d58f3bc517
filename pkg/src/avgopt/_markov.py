# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

"""
Finite Markov chain linear algebra shared by environment builders and the
exact evaluator.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from numpy.typing import NDArray
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ._errors import NotUnichainError


POWER_TOL = 1e-12
POWER_MAX_ITER = 10**6


def recurrent_classes(P: NDArray[np.float64]) -> list[NDArray[np.intp]]:
    """
    Return the closed communicating classes of the row-stochastic matrix *P*.

    A chain is unichain iff there is exactly one; that is equivalent to
    ``rank(P - I) == n - 1`` but exact on the support and cheap.
    """
    if P.shape[0] == 0:
        return []

    support = csr_matrix(P > 0.0)
    n_comp, labels = connected_components(
        support, directed=True, connection="strong"
    )

    rows, cols = support.nonzero()
    leaks = np.zeros(n_comp, dtype=bool)
    leaks[labels[rows][labels[rows] != labels[cols]]] = True

    return [
        np.flatnonzero(labels == c) for c in range(n_comp) if not leaks[c]
    ]


def power_iteration(
    P: NDArray[np.float64],
    d0: NDArray[np.float64],
    tol: float = POWER_TOL,
    max_iter: int = POWER_MAX_ITER,
) -> NDArray[np.float64]:
    """
    Iterate the lazy chain ``(I + P) / 2`` from *d0* until the residual
    drops below *tol*.

    The lazy chain has the same stationary distributions as *P* and is
    aperiodic, so periodic chains converge too.
    """
    d = d0 / d0.sum()
    for _ in range(max_iter):
        nxt = 0.5 * (d + d @ P)
        if np.max(np.abs(nxt - d)) < tol:
            return nxt / nxt.sum()  # type: ignore[no-any-return]
        d = nxt

    msg = f"power iteration did not reach residual {tol} in {max_iter} steps"
    raise NotUnichainError(msg)


def stationary(P: NDArray[np.float64], tol: float) -> NDArray[np.float64]:
    """
    Unique stationary distribution of the unichain row-stochastic *P*.

    Solves ``d (P - I) = 0`` with one equation replaced by ``sum(d) = 1``.
    The rows of ``(P - I)^T`` sum to zero, so dropping any one of them keeps
    the rank; the system is non-singular iff the chain is unichain.

    Raises:
        NotUnichainError: If *P* has more than one recurrent class.
    """
    n = P.shape[0]
    classes = recurrent_classes(P)
    if len(classes) != 1:
        msg = (
            f"chain is not unichain: {len(classes)} recurrent classes "
            f"(sizes {[len(c) for c in classes]}); the stationary "
            "distribution is not unique"
        )
        raise NotUnichainError(msg)

    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            d = scipy.linalg.solve(A, b)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
            d = power_iteration(P, np.full(n, 1.0 / n))

    if np.max(np.abs(d @ P - d)) > tol:
        d = power_iteration(P, np.clip(d, 0.0, None) + 1e-300)

    d = np.clip(d, 0.0, None)

    return d / d.sum()  # type: ignore[no-any-return]


def limiting_distribution(
    P: NDArray[np.float64], initial: NDArray[np.float64], tol: float
) -> NDArray[np.float64]:
    """
    Cesàro-limit occupancy of the chain *P* started from *initial*.

    Works for multichain *P*: each recurrent class contributes its own
    stationary distribution weighted by the probability of being absorbed
    into it.
    """
    n = P.shape[0]
    classes = recurrent_classes(P)
    if len(classes) == 1:
        return stationary(P, tol)

    recurrent = np.zeros(n, dtype=bool)
    for c in classes:
        recurrent[c] = True
    transient = np.flatnonzero(~recurrent)

    if transient.size:
        Q = P[np.ix_(transient, transient)]
        fundamental = scipy.linalg.lu_factor(np.eye(transient.size) - Q)

    d = np.zeros(n)
    for c in classes:
        mass = initial[c].sum()
        if transient.size:
            into = P[np.ix_(transient, c)].sum(axis=1)
            mass += initial[transient] @ scipy.linalg.lu_solve(
                fundamental, into
            )
        if mass <= 0.0:
            continue
        d[c] = mass * stationary(P[np.ix_(c, c)], tol)

    return d / d.sum()  # type: ignore[no-any-return]
