"""Amostragem de triplas BPR (u, i, j) com negativo uniforme por rejeição."""
from typing import NamedTuple

import numpy as np
import torch
from loguru import logger

from app.data.corpus import InteractionDataset

MAX_REJECTION_ROUNDS = 1000


class BPRTriple(NamedTuple):
    """Usuário u, item positivo i ∈ N_u e negativo j ∉ N_u."""

    user: int
    positive: int
    negative: int


class TripleBatch(NamedTuple):
    """Lote de triplas em forma de colunas (tensores int64)."""

    users: torch.Tensor
    positives: torch.Tensor
    negatives: torch.Tensor

    def __len__(self) -> int:
        return int(self.users.shape[0])

    def triples(self) -> list[BPRTriple]:
        return [
            BPRTriple(int(u), int(i), int(j))
            for u, i, j in zip(self.users.tolist(), self.positives.tolist(), self.negatives.tolist())
        ]

    @classmethod
    def from_triples(cls, triples: list[BPRTriple] | list[tuple[int, int, int]]) -> "TripleBatch":
        array = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        return cls(*(torch.as_tensor(array[:, c].copy()) for c in range(3)))


class TripleSampler:
    """
    Sorteia arestas de treino uniformemente e um negativo uniforme por aresta.

    Usuários que interagiram com todos os itens não têm negativo possível e
    ficam fora da amostragem.
    """

    def __init__(self, ds: InteractionDataset):
        self.num_items = ds.num_items
        degree = np.bincount(ds.train_edges[:, 0], minlength=ds.num_users)
        saturated = np.flatnonzero(degree >= ds.num_items)
        if saturated.size:
            logger.warning(
                f"{saturated.size} usuários interagiram com todos os itens e ficam fora da amostragem"
            )

        keep = ~np.isin(ds.train_edges[:, 0], saturated)
        self.edges = ds.train_edges[keep]
        # Arestas já ordenadas por (u, i): as chaves saem ordenadas
        self.keys = self.edges[:, 0] * ds.num_items + self.edges[:, 1]
        self.excluded_users = saturated

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def _is_positive(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        keys = users * self.num_items + items
        pos = np.searchsorted(self.keys, keys)
        pos = np.minimum(pos, len(self.keys) - 1)
        return self.keys[pos] == keys

    def sample_arrays(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """Lote (batch_size, 3) de colunas u, i, j."""
        if batch_size < 1:
            raise ValueError(f"batch_size precisa ser >= 1, recebido {batch_size}")
        if self.num_edges == 0:
            raise ValueError("Nenhuma aresta de treino disponível para amostragem")

        chosen = self.edges[rng.integers(0, self.num_edges, size=batch_size)]
        users = chosen[:, 0]
        negatives = rng.integers(0, self.num_items, size=batch_size)

        pending = np.flatnonzero(self._is_positive(users, negatives))
        rounds = 0
        while pending.size:
            rounds += 1
            if rounds > MAX_REJECTION_ROUNDS:
                raise RuntimeError("Amostragem de negativos não convergiu")
            negatives[pending] = rng.integers(0, self.num_items, size=pending.size)
            pending = pending[self._is_positive(users[pending], negatives[pending])]

        return np.column_stack([users, chosen[:, 1], negatives])

    def sample(self, batch_size: int, rng: np.random.Generator) -> TripleBatch:
        array = self.sample_arrays(batch_size, rng)
        return TripleBatch(*(torch.as_tensor(array[:, c].copy()) for c in range(3)))


def sample_triples(ds: InteractionDataset, batch_size: int, rng: np.random.Generator) -> list[BPRTriple]:
    """Atalho: um lote de `batch_size` triplas como lista."""
    return TripleSampler(ds).sample(batch_size, rng).triples()
