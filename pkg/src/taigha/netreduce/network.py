"""Similarity matrices and EBIC-selected sparse partial-correlation networks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class ItemNetwork:
    items: tuple[str, ...]
    weights: np.ndarray
    gamma: float
    chosen_lambda: float
    precision: np.ndarray | None = None
    n_effective: float | None = None
    ebic: np.ndarray | None = field(default=None, repr=False)
    lambdas: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, 1)))

    def edge_list(self) -> list[tuple[str, str, float]]:
        p = len(self.items)
        return [
            (self.items[i], self.items[j], float(self.weights[i, j]))
            for i in range(p)
            for j in range(i + 1, p)
            if self.weights[i, j] != 0
        ]


def nearest_correlation_psd(M: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues at zero, then rescale to unit diagonal."""
    M = 0.5 * (M + M.T)
    vals, vecs = np.linalg.eigh(M)
    if vals.min() >= 0:
        out = M.copy()
    else:
        out = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    d = np.sqrt(np.diag(out))
    if np.any(d <= 0):
        raise NetworkError("projection produced a zero-variance item")
    out = out / np.outer(d, d)
    np.fill_diagonal(out, 1.0)
    return 0.5 * (out + out.T)


def similarity_from_embeddings(embeddings: np.ndarray) -> np.ndarray:
    """Cosine similarity projected to the nearest PSD unit-diagonal matrix."""
    E = np.asarray(embeddings, dtype=float)
    if E.ndim != 2 or E.shape[1] < 2:
        raise NetworkError("embeddings must be an items x d grid with d >= 2")
    norms = np.linalg.norm(E, axis=1)
    if np.any(norms == 0):
        raise NetworkError(f"zero-norm embedding rows: {np.flatnonzero(norms == 0).tolist()}")
    U = E / norms[:, None]
    return nearest_correlation_psd(np.clip(U @ U.T, -1.0, 1.0))


def correlation_from_data(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    X = X[~np.isnan(X).any(axis=1)]
    sd = X.std(axis=0)
    if np.any(sd == 0):
        raise NetworkError("zero-variance column")
    R = np.corrcoef(X, rowvar=False)
    np.fill_diagonal(R, 1.0)
    return 0.5 * (R + R.T)


@numba.njit(cache=True, nogil=True)
def _glasso(S, lam, W, B, tol, max_iter, inner_max, inner_scale):
    # Friedman block coordinate descent, diagonal unpenalised.
    # W and B are warm starts and are updated in place.
    p = S.shape[0]
    scale = 0.0
    for i in range(p):
        for j in range(p):
            if i != j:
                scale += abs(S[i, j])
    scale = max(scale / max(p * (p - 1), 1), 1e-12)
    wb = np.empty(p)
    for it in range(max_iter):
        delta = 0.0
        for j in range(p):
            # lasso for column j of B against W with row/column j removed;
            # wb tracks W11 @ beta and is touched only when a coefficient moves
            for k in range(p):
                acc = 0.0
                for l in range(p):
                    if l != j:
                        acc += W[k, l] * B[l, j]
                wb[k] = acc
            for sweep in range(inner_max):
                dmax = 0.0
                for k in range(p):
                    if k == j:
                        continue
                    old = B[k, j]
                    r = S[k, j] - wb[k] + W[k, k] * old
                    if r > lam:
                        new = (r - lam) / W[k, k]
                    elif r < -lam:
                        new = (r + lam) / W[k, k]
                    else:
                        new = 0.0
                    d = new - old
                    if d != 0.0:
                        B[k, j] = new
                        for l in range(p):
                            wb[l] += d * W[l, k]
                        if abs(d) > dmax:
                            dmax = abs(d)
                if dmax < tol * inner_scale:
                    break
            for k in range(p):
                if k == j:
                    continue
                w = wb[k]
                delta += abs(w - W[k, j])
                W[k, j] = w
                W[j, k] = w
        if not np.isfinite(delta):
            return -1
        if delta / (p * (p - 1)) < tol * scale:
            return it + 1
    return max_iter


@numba.njit(cache=True, nogil=True)
def _precision_from(W, B):
    p = W.shape[0]
    K = np.zeros((p, p))
    for j in range(p):
        acc = 0.0
        for k in range(p):
            if k != j:
                acc += W[k, j] * B[k, j]
        kjj = 1.0 / (W[j, j] - acc)
        K[j, j] = kjj
        for k in range(p):
            if k != j:
                K[k, j] = -B[k, j] * kjj
    return 0.5 * (K + K.T)


def lambda_grid(S: np.ndarray, n_lambda: int = 100, min_ratio: float = 0.01) -> np.ndarray:
    """Descending log-spaced penalty grid from the largest off-diagonal |S|."""
    if n_lambda < 1:
        raise NetworkError("empty penalty grid")
    off = np.abs(S - np.diag(np.diag(S)))
    lmax = max(off.max(), 1e-8)
    if n_lambda == 1:
        return np.array([lmax])
    return np.exp(np.linspace(np.log(lmax), np.log(min_ratio * lmax), n_lambda))


def glasso_path(
    S: np.ndarray, lambdas: Sequence[float], tol: float = 1e-6, max_iter: int = 1000, inner_scale: float = 0.1
):
    """Precision matrices along a penalty path, warm-started in decreasing order.

    Entries are None where the fit failed (non-finite or not positive definite).
    A zero penalty is solved by direct inversion.
    """
    S = np.ascontiguousarray(S, dtype=float)
    p = S.shape[0]
    lambdas = np.asarray(lambdas, dtype=float)
    order = np.argsort(-lambdas, kind="stable")
    out: list[np.ndarray | None] = [None] * len(lambdas)
    W = S.copy()
    B = np.zeros((p, p))
    for pos in order:
        lam = lambdas[pos]
        if lam <= 0:
            try:
                K = np.linalg.inv(S)
                np.linalg.cholesky(K)
                out[pos] = 0.5 * (K + K.T)
            except np.linalg.LinAlgError:
                out[pos] = None
            continue
        W_try, B_try = W.copy(), B.copy()
        status = _glasso(S, lam, W_try, B_try, tol, max_iter, 200, inner_scale)
        if status < 0:
            continue
        K = _precision_from(W_try, B_try)
        try:
            np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            continue
        W, B = W_try, B_try
        out[pos] = K
    return out


def partial_correlations(K: np.ndarray) -> np.ndarray:
    d = 1.0 / np.sqrt(np.diag(K))
    P = -K * np.outer(d, d)
    np.fill_diagonal(P, 0.0)
    return 0.5 * (P + P.T)


def ebic(K: np.ndarray, S: np.ndarray, n: float, gamma: float) -> tuple[float, int]:
    p = S.shape[0]
    logdet = np.linalg.slogdet(K)[1]
    loglik = 0.5 * n * (logdet - np.sum(S * K))
    edges = int(np.count_nonzero(np.triu(K, 1)))
    return -2.0 * loglik + edges * np.log(n) + 4.0 * gamma * edges * np.log(p), edges


def ebic_sparse_network(
    S: np.ndarray,
    n_effective: float,
    gamma: float = 0.5,
    items: Sequence[str] | None = None,
    n_lambda: int = 100,
    min_ratio: float = 0.01,
    lambdas: Sequence[float] | None = None,
    tol: float = 1e-4,
) -> ItemNetwork:
    """L1-penalised Gaussian graphical model chosen by EBIC.

    ``S`` must be a unit-diagonal PSD correlation matrix; it is projected to
    the nearest PSD matrix first when slightly indefinite. ``tol`` bounds the
    mean absolute change of the working covariance relative to the mean
    absolute off-diagonal of ``S``.
    """
    S = np.asarray(S, dtype=float)
    p = S.shape[0]
    items = tuple(items) if items is not None else tuple(f"item_{k + 1}" for k in range(p))
    if len(items) != p:
        raise NetworkError("items do not match S")
    if not np.allclose(np.diag(S), 1.0):
        raise NetworkError("S must have unit diagonal")
    if n_effective < p:
        raise NetworkError(f"effective n {n_effective} is smaller than the {p} items")
    if np.linalg.eigvalsh(S).min() < -1e-8:
        S = nearest_correlation_psd(S)
        if np.linalg.eigvalsh(S).min() < -1e-8:
            raise NetworkError("S is not positive semidefinite after projection")
    grid = lambda_grid(S, n_lambda, min_ratio) if lambdas is None else np.asarray(lambdas, dtype=float)
    if grid.size == 0:
        raise NetworkError("empty penalty grid")
    path = glasso_path(S, grid, tol=tol)
    scores = np.full(grid.size, np.inf)
    for k, K in enumerate(path):
        if K is not None:
            scores[k] = ebic(K, S, n_effective, gamma)[0]
    if not np.isfinite(scores).any():
        raise NetworkError("no penalty on the grid produced a valid network")
    best = int(np.argmin(scores))
    K = path[best]
    return ItemNetwork(
        items=items,
        weights=partial_correlations(K),
        gamma=gamma,
        chosen_lambda=float(grid[best]),
        precision=K,
        n_effective=float(n_effective),
        ebic=scores,
        lambdas=grid,
    )
