"""Métricas de ranking top-K com relevância binária."""
from collections.abc import Collection, Sequence

import numpy as np


def _discounts(k: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(k) + 2.0)


def recall_at_k(ranked: Sequence[int], test_items: Collection[int], k: int) -> float:
    """|ranked[:k] ∩ test| / |test|."""
    if not test_items:
        raise ValueError("Usuário sem itens de teste")
    test = set(test_items)
    hits = sum(1 for item in list(ranked)[:k] if item in test)
    return hits / len(test)


def ndcg_at_k(ranked: Sequence[int], test_items: Collection[int], k: int) -> float:
    """DCG/IDCG com desconto 1/log2(p+2) (posições a partir de 0)."""
    if not test_items:
        raise ValueError("Usuário sem itens de teste")
    test = set(test_items)
    discounts = _discounts(k)
    dcg = sum(discounts[p] for p, item in enumerate(list(ranked)[:k]) if item in test)
    idcg = discounts[:min(k, len(test))].sum()
    return float(dcg / idcg)


def batch_metrics(hits: np.ndarray, test_counts: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Recall e NDCG por usuário a partir da matriz de acertos (usuários x K).

    `hits[u, p]` indica se o item na posição p do ranking de u está no teste.
    """
    hits = np.asarray(hits, dtype=np.float64)
    test_counts = np.asarray(test_counts, dtype=np.int64)
    if np.any(test_counts <= 0):
        raise ValueError("Usuários sem itens de teste devem ser removidos antes")

    discounts = _discounts(k)
    width = hits.shape[1]
    recall = hits.sum(axis=1) / test_counts
    dcg = hits @ discounts[:width]
    idcg = np.cumsum(discounts)[np.minimum(test_counts, k) - 1]
    return recall, dcg / idcg
