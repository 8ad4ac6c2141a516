"""Qualidade de clusterings: variance ratio e escolha de k pelo platô da curva."""
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from joblib import Parallel, delayed
from loguru import logger

from app.clustering.spectral import spectral_cocluster
from app.core.config import settings
from app.data.corpus import InteractionDataset


class VarianceComponents(NamedTuple):
    """W_C (intra), B_C (entre) e σ² total; W_C + B_C = σ²."""

    within: float
    between: float
    total: float


def _row_sq_norms(points) -> np.ndarray:
    if sp.issparse(points):
        return np.asarray(points.multiply(points).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", points, points)


def _as_points(points):
    if sp.issparse(points):
        return sp.csr_matrix(points, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    return points.reshape(len(points), -1)


def variance(points) -> float:
    """σ²(X) = (1/|X|) Σ ‖x − centroid(X)‖²; aceita matriz densa ou esparsa."""
    points = _as_points(points)
    n = points.shape[0]
    if n == 0:
        raise ValueError("Variância de conjunto vazio")

    if sp.issparse(points):
        # σ² = média de ‖x‖² − ‖centroid‖², sem densificar as linhas
        centroid = np.asarray(points.mean(axis=0)).ravel()
        return max(float(_row_sq_norms(points).mean() - centroid @ centroid), 0.0)

    centered = points - points.mean(axis=0)
    return float(np.einsum("ij,ij->", centered, centered) / n)


def variance_components(points, labels: Sequence[int] | np.ndarray) -> VarianceComponents:
    """Calcula W_C e B_C ponderados por p_i = |X_i| / |X|."""
    points = _as_points(points)
    labels = np.asarray(labels)
    n = points.shape[0]
    if n == 0:
        raise ValueError("Clustering de conjunto vazio")
    if len(labels) != n:
        raise ValueError(f"{len(labels)} rótulos para {n} pontos")

    _, inverse = np.unique(labels, return_inverse=True)
    n_clusters = inverse.max() + 1
    indicator = sp.csr_matrix(
        (np.ones(n), (np.arange(n), inverse)), shape=(n, n_clusters)
    )
    counts = np.asarray(indicator.sum(axis=0)).ravel()
    weights = counts / n

    sums = indicator.T @ points
    sums = sums.toarray() if sp.issparse(sums) else np.asarray(sums)
    centroids = sums / counts[:, None]
    centroid = np.asarray(points.mean(axis=0)).ravel()

    sq_norms = _row_sq_norms(points)
    mean_sq = np.bincount(inverse, weights=sq_norms) / counts
    cluster_variance = np.maximum(mean_sq - np.einsum("ij,ij->i", centroids, centroids), 0.0)

    within = float(weights @ cluster_variance)
    offsets = centroids - centroid
    between = float(weights @ np.einsum("ij,ij->i", offsets, offsets))
    total = float(max(sq_norms.mean() - centroid @ centroid, 0.0))
    return VarianceComponents(within, between, total)


def variance_ratio(points, labels: Sequence[int] | np.ndarray) -> float:
    """
    VR(C, X) = B_C(X) / W_C(X); maior significa clusters mais separados.

    Um único cluster retorna 0. W_C = 0 retorna +inf com aviso.
    """
    labels = np.asarray(labels)
    if len(np.unique(labels)) < 2:
        return 0.0

    components = variance_components(points, labels)
    if components.within <= 0.0:
        logger.warning("Variância intra-cluster nula; variance ratio = +inf")
        return float("inf")
    return components.between / components.within


@dataclass(frozen=True)
class VarianceRatioCurve:
    """VR médio e desvio por k sobre uma lista fixa de seeds."""

    k_values: tuple[int, ...]
    mean: tuple[float, ...]
    std: tuple[float, ...]
    seeds: tuple[int, ...]
    side: str = "user"

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"k": self.k_values, "mean_vr": self.mean, "std_vr": self.std})

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, seeds: Sequence[int] = (), side: str = "user") -> "VarianceRatioCurve":
        return cls(
            k_values=tuple(int(k) for k in frame["k"]),
            mean=tuple(float(v) for v in frame["mean_vr"]),
            std=tuple(float(v) for v in frame["std_vr"]),
            seeds=tuple(seeds),
            side=side,
        )


def _vr_cell(matrix: sp.csr_matrix, k: int, seed: int, side: str) -> float:
    clustering = spectral_cocluster(matrix, k, seed)
    if side == "user":
        return variance_ratio(matrix, clustering.user_assignment)
    return variance_ratio(matrix.T.tocsr(), clustering.item_assignment)


def vr_curve(
    ds: InteractionDataset,
    k_range: tuple[int, int] | range,
    seeds: Sequence[int],
    side: Literal["user", "item"] = "user",
    n_jobs: int = settings.n_jobs,
) -> VarianceRatioCurve:
    """
    Curva de VR médio para cada k no intervalo (inclusivo).

    Cada usuário é representado pela sua linha binária da matriz de
    incidência; os rótulos são os clusters do lado dos usuários. O lado
    dos itens fica disponível só como diagnóstico.
    """
    k_values = list(k_range) if isinstance(k_range, range) else list(range(k_range[0], k_range[1] + 1))
    if not k_values:
        raise ValueError("Intervalo de k vazio")
    if min(k_values) < 2 or max(k_values) > min(ds.num_users, ds.num_items):
        raise ValueError(f"Intervalo de k {k_values[0]}..{k_values[-1]} fora de [2, min(usuários, itens)]")
    if not seeds:
        raise ValueError("Lista de seeds vazia")

    matrix = ds.train_matrix
    cells = [(k, seed) for k in k_values for seed in seeds]
    values = Parallel(n_jobs=n_jobs)(
        delayed(_vr_cell)(matrix, k, seed, side) for k, seed in cells
    )
    grid = np.asarray(values, dtype=np.float64).reshape(len(k_values), len(seeds))

    with np.errstate(invalid="ignore"):
        mean = grid.mean(axis=1)
        std = grid.std(axis=1)
    for k, m, s in zip(k_values, mean, std):
        logger.info(f"VR ({side}) k={k}: média={m:.4f} desvio={s:.4f}")

    return VarianceRatioCurve(
        k_values=tuple(k_values),
        mean=tuple(float(m) for m in mean),
        std=tuple(float(s) for s in std),
        seeds=tuple(int(s) for s in seeds),
        side=side,
    )


def _relative_gain(current: float, following: float) -> float:
    if not np.isfinite(current):
        return 0.0 if following == current else float("inf")
    if current <= 0.0:
        return 0.0 if following <= current else float("inf")
    return (following - current) / current


def select_k(curve: VarianceRatioCurve, epsilon: float = settings.vr_epsilon) -> int:
    """
    Menor k cujo ganho relativo de VR para k+1 fica abaixo de `epsilon`.

    Sem platô, retorna o maior k da curva com aviso.
    """
    k_values = list(curve.k_values)
    if len(k_values) < 3 or any(b - a != 1 for a, b in zip(k_values, k_values[1:])):
        raise ValueError("A curva precisa cobrir ao menos 3 valores consecutivos de k")

    for index in range(len(k_values) - 1):
        gain = _relative_gain(curve.mean[index], curve.mean[index + 1])
        if gain < epsilon:
            logger.info(f"Platô de VR em k={k_values[index]} (ganho {gain:.4f} < {epsilon})")
            return k_values[index]

    logger.warning(f"Nenhum platô com epsilon={epsilon}; usando maior k={k_values[-1]}")
    return k_values[-1]
