"""Co-clustering espectral (Dhillon) da matriz de incidência usuários x itens."""
import math
import time
import warnings

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, svds
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from app.clustering.base import CoClusterer, CoClustering
from app.core.config import settings
from app.core.exceptions import DataError, NumericError


class SpectralCoClusterer(CoClusterer):
    """
    Co-clustering espectral de grafo bipartido.

    Normaliza A_n = D1^{-1/2} A D2^{-1/2}, remove o par singular trivial
    (σ = 1, vetores ∝ sqrt(grau)), usa os ℓ = ⌈log2 k⌉ pares seguintes e
    agrupa linhas e colunas juntas com k-means.
    """

    name = "scc"

    def __init__(
        self,
        n_init: int = settings.kmeans_restarts,
        svd_tol: float = settings.svd_tol,
        svd_maxiter: int = settings.svd_maxiter,
        dense_max_cells: int = settings.dense_svd_max_cells,
    ):
        self.n_init = n_init
        self.svd_tol = svd_tol
        self.svd_maxiter = svd_maxiter
        self.dense_max_cells = dense_max_cells

    def fit(self, matrix: sp.spmatrix, k: int, seed: int) -> CoClustering:
        start_time = time.time()
        A = sp.csr_matrix(matrix, dtype=np.float64)
        num_users, num_items = A.shape

        if k < 2:
            raise ValueError(f"k precisa ser >= 2, recebido {k}")
        if k > min(num_users, num_items):
            raise ValueError(f"k={k} maior que min(usuários, itens)={min(num_users, num_items)}")
        if A.nnz == 0:
            raise DataError("Matriz de incidência sem arestas")

        row_degree = np.asarray(A.sum(axis=1)).ravel()
        col_degree = np.asarray(A.sum(axis=0)).ravel()
        active_rows = np.flatnonzero(row_degree > 0)
        active_cols = np.flatnonzero(col_degree > 0)
        isolated_users = np.flatnonzero(row_degree == 0)
        isolated_items = np.flatnonzero(col_degree == 0)
        if len(isolated_users) or len(isolated_items):
            logger.warning(
                f"{len(isolated_users)} usuários e {len(isolated_items)} itens isolados "
                f"ficam fora do embedding espectral"
            )

        sub = A[active_rows][:, active_cols]
        if min(sub.shape) < 2 or len(active_rows) + len(active_cols) < k:
            raise ValueError(f"Grafo ativo {sub.shape} pequeno demais para k={k}")

        embedding = self._embed(sub, row_degree[active_rows], col_degree[active_cols], k, seed)

        kmeans = KMeans(n_clusters=k, init="k-means++", n_init=self.n_init, random_state=seed)
        with warnings.catch_warnings():
            # pontos distintos < k: tratado abaixo e registrado pelo loguru
            warnings.simplefilter("ignore", ConvergenceWarning)
            raw_labels = kmeans.fit_predict(embedding)
        labels = _canonical_labels(_repair_empty_clusters(embedding, raw_labels, k))

        user_assignment = np.empty(num_users, dtype=np.int64)
        item_assignment = np.empty(num_items, dtype=np.int64)
        user_assignment[active_rows] = labels[:len(active_rows)]
        item_assignment[active_cols] = labels[len(active_rows):]

        # Nós isolados vão para o maior cluster (não afetam nenhum score)
        largest = int(np.argmax(np.bincount(labels, minlength=k)))
        user_assignment[isolated_users] = largest
        item_assignment[isolated_items] = largest

        clustering = CoClustering(
            k=k,
            user_assignment=user_assignment,
            item_assignment=item_assignment,
            seed=seed,
            isolated_users=isolated_users,
            isolated_items=isolated_items,
        )
        logger.info(
            f"Co-clustering espectral: k={k}, seed={seed}, tamanhos={clustering.cluster_sizes()} | "
            f"{(time.time() - start_time) * 1000:.2f}ms"
        )
        return clustering

    def _embed(
        self,
        sub: sp.csr_matrix,
        row_degree: np.ndarray,
        col_degree: np.ndarray,
        k: int,
        seed: int,
    ) -> np.ndarray:
        """Pontos D1^{-1/2} U_ℓ (usuários) empilhados sobre D2^{-1/2} V_ℓ (itens)."""
        row_scale = 1.0 / np.sqrt(row_degree)
        col_scale = 1.0 / np.sqrt(col_degree)
        normalized = sp.diags(row_scale) @ sub @ sp.diags(col_scale)

        volume = row_degree.sum()
        trivial_u = np.sqrt(row_degree / volume)
        trivial_v = np.sqrt(col_degree / volume)

        n_vectors = max(1, min(math.ceil(math.log2(k)), min(sub.shape) - 1))
        U, V = self._deflated_svd(normalized, trivial_u, trivial_v, n_vectors, seed)
        return np.vstack([row_scale[:, None] * U, col_scale[:, None] * V])

    def _deflated_svd(
        self,
        normalized: sp.csr_matrix,
        trivial_u: np.ndarray,
        trivial_v: np.ndarray,
        n_vectors: int,
        seed: int,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Top pares singulares de A_n - u0 v0ᵀ (o par trivial sai por deflação)."""
        rows, cols = normalized.shape

        if rows * cols <= self.dense_max_cells or n_vectors >= min(rows, cols) - 1:
            dense = normalized.toarray() - np.outer(trivial_u, trivial_v)
            U, s, Vt = np.linalg.svd(dense, full_matrices=False)
            U, V = U[:, :n_vectors], Vt[:n_vectors].T
        else:
            def matvec(x):
                x = np.ravel(x)
                return normalized @ x - trivial_u * (trivial_v @ x)

            def rmatvec(y):
                y = np.ravel(y)
                return normalized.T @ y - trivial_v * (trivial_u @ y)

            operator = LinearOperator((rows, cols), matvec=matvec, rmatvec=rmatvec, dtype=np.float64)
            start = np.random.default_rng(seed).standard_normal(min(rows, cols))
            try:
                U, s, Vt = svds(
                    operator, k=n_vectors, tol=self.svd_tol, maxiter=self.svd_maxiter, v0=start
                )
            except ArpackNoConvergence as e:
                raise NumericError(f"SVD truncada não convergiu em {self.svd_maxiter} iterações") from e
            order = np.argsort(-s)
            U, s, V = U[:, order], s[order], Vt[order].T

        logger.debug(f"Valores singulares (sem o trivial): {np.round(s[:n_vectors], 6).tolist()}")

        # Sinal canônico: maior componente absoluta positiva
        signs = np.sign(U[np.argmax(np.abs(U), axis=0), np.arange(U.shape[1])])
        signs[signs == 0] = 1.0
        return U * signs, V * signs


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Renumera clusters pela ordem de primeira aparição."""
    _, first = np.unique(labels, return_index=True)
    order = np.unique(labels)[np.argsort(first)]
    mapping = np.empty(labels.max() + 1, dtype=np.int64)
    mapping[order] = np.arange(len(order))
    return mapping[labels]


def _repair_empty_clusters(points: np.ndarray, labels: np.ndarray, k: int, tol: float = 1e-9) -> np.ndarray:
    """
    Preenche clusters vazios com o ponto mais distante do próprio centróide.

    Só doa pontos de clusters com mais de um membro. Quando todos os pontos
    coincidem com seus centróides (embedding com menos de k pontos distintos)
    não há como separar, e o clustering segue com menos clusters.
    """
    labels = labels.copy()
    for empty in np.setdiff1d(np.arange(k), labels):
        sizes = np.bincount(labels, minlength=k)
        centroids = np.zeros((k, points.shape[1]))
        np.add.at(centroids, labels, points)
        centroids /= np.maximum(sizes, 1)[:, None]

        distance = np.linalg.norm(points - centroids[labels], axis=1)
        distance[sizes[labels] < 2] = -1.0
        farthest = int(np.argmax(distance))
        if distance[farthest] <= tol:
            logger.warning(
                f"Embedding com menos de {k} pontos distintos: "
                f"{len(np.unique(labels))} clusters não vazios"
            )
            break
        logger.debug(f"Cluster {empty} vazio re-semeado com o ponto {farthest} (distância {distance[farthest]:.4g})")
        labels[farthest] = empty
    return labels


def spectral_cocluster(matrix: sp.spmatrix, k: int, seed: int) -> CoClustering:
    """Atalho para `SpectralCoClusterer().fit(matrix, k, seed)`."""
    return SpectralCoClusterer().fit(matrix, k, seed)
