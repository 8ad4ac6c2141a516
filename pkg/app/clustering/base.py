"""Co-clusterings de usuários e itens, subgrafos por cluster e arquivo de atribuições."""
import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from loguru import logger

from app.core.exceptions import DataError


@dataclass(frozen=True, eq=False)
class Subgraph:
    """Subgrafo G_j = (V_j, E_j) com reindexação local."""

    cluster: int
    users: np.ndarray  # índices globais, ordenados; posição = índice local
    items: np.ndarray
    edges: np.ndarray  # pares globais (E_j, 2)
    local_edges: np.ndarray  # mesmos pares em índices locais

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_items(self) -> int:
        return len(self.items)


@dataclass(frozen=True, eq=False)
class CoClustering:
    """Atribuição conjunta de cada usuário e item a um de k clusters."""

    k: int
    user_assignment: np.ndarray
    item_assignment: np.ndarray
    seed: int
    subgraphs: tuple[Subgraph, ...] | None = None
    cross_edges: np.ndarray | None = None
    isolated_users: np.ndarray | None = None
    isolated_items: np.ndarray | None = None

    def __post_init__(self):
        for name in ("user_assignment", "item_assignment"):
            labels = np.array(getattr(self, name), dtype=np.int64)
            if labels.size and (labels.min() < 0 or labels.max() >= self.k):
                raise ValueError(f"{name} contém clusters fora de [0, {self.k})")
            labels.setflags(write=False)
            object.__setattr__(self, name, labels)

    @property
    def num_users(self) -> int:
        return len(self.user_assignment)

    @property
    def num_items(self) -> int:
        return len(self.item_assignment)

    @property
    def subgraph_edges(self) -> tuple[np.ndarray, ...]:
        if self.subgraphs is None:
            raise ValueError("Subgrafos ainda não construídos (use build_subgraphs)")
        return tuple(sg.edges for sg in self.subgraphs)

    def same_cluster(self, user: int, item: int) -> bool:
        return bool(self.user_assignment[user] == self.item_assignment[item])

    def cluster_sizes(self) -> list[tuple[int, int]]:
        """(usuários, itens) por cluster."""
        users = np.bincount(self.user_assignment, minlength=self.k)
        items = np.bincount(self.item_assignment, minlength=self.k)
        return [(int(u), int(i)) for u, i in zip(users, items)]


class CoClusterer(ABC):
    """Interface comum para algoritmos de co-clustering."""

    name: str = "base"

    @abstractmethod
    def fit(self, matrix: sp.spmatrix, k: int, seed: int) -> CoClustering:
        """Particiona linhas e colunas de `matrix` em k clusters."""


def build_subgraphs(matrix: sp.spmatrix, clustering: CoClustering) -> CoClustering:
    """
    Gera E_j = {(u, i) ∈ E | u ∈ V_j, i ∈ V_j} para cada cluster.

    Arestas cujos extremos caem em clusters diferentes ficam em `cross_edges`.
    """
    coo = sp.coo_matrix(matrix)
    if coo.shape != (clustering.num_users, clustering.num_items):
        raise ValueError(
            f"Matriz {coo.shape} incompatível com clustering "
            f"({clustering.num_users}, {clustering.num_items})"
        )

    edges = np.column_stack([coo.row, coo.col]).astype(np.int64)
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    user_cluster = clustering.user_assignment[edges[:, 0]]
    item_cluster = clustering.item_assignment[edges[:, 1]]
    inside = user_cluster == item_cluster

    subgraphs = []
    for j in range(clustering.k):
        users = np.flatnonzero(clustering.user_assignment == j)
        items = np.flatnonzero(clustering.item_assignment == j)
        cluster_edges = edges[inside & (user_cluster == j)]
        local_edges = np.column_stack([
            np.searchsorted(users, cluster_edges[:, 0]),
            np.searchsorted(items, cluster_edges[:, 1]),
        ]).astype(np.int64).reshape(-1, 2)
        subgraphs.append(Subgraph(j, users, items, cluster_edges, local_edges))

    cross = edges[~inside]
    logger.debug(
        f"Subgrafos: {[len(sg.edges) for sg in subgraphs]} arestas internas, {len(cross)} cruzadas"
    )
    return replace(clustering, subgraphs=tuple(subgraphs), cross_edges=cross)


def block_density_stat(matrix: sp.spmatrix, clustering: CoClustering) -> float:
    """Fração das arestas capturadas nos blocos diagonais: (Σ_j |E_j|) / |E|."""
    coo = sp.coo_matrix(matrix)
    if coo.nnz == 0:
        return 0.0
    inside = clustering.user_assignment[coo.row] == clustering.item_assignment[coo.col]
    return float(inside.sum() / coo.nnz)


def format_assignments(clustering: CoClustering) -> str:
    """Texto do arquivo de atribuições (`node_type index cluster`)."""
    lines = [
        f"# k={clustering.k} seed={clustering.seed} "
        f"users={clustering.num_users} items={clustering.num_items}"
    ]
    lines += [f"user {u} {c}" for u, c in enumerate(clustering.user_assignment)]
    lines += [f"item {i} {c}" for i, c in enumerate(clustering.item_assignment)]
    return "\n".join(lines) + "\n"


def assignment_fingerprint(clustering: CoClustering) -> str:
    """SHA-256 do arquivo de atribuições; igual ao hash do arquivo escrito."""
    return hashlib.sha256(format_assignments(clustering).encode("utf-8")).hexdigest()


def write_assignments(clustering: CoClustering, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_assignments(clustering), encoding="utf-8")
    return path


def read_assignments(path: str | Path) -> CoClustering:
    """Lê um arquivo de atribuições escrito por `write_assignments`."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#"):
        raise DataError(f"{path}: cabeçalho ausente")

    try:
        header = dict(token.split("=", 1) for token in lines[0][1:].split())
        k, seed = int(header["k"]), int(header["seed"])
        users = np.full(int(header["users"]), -1, dtype=np.int64)
        items = np.full(int(header["items"]), -1, dtype=np.int64)
    except (KeyError, ValueError) as e:
        raise DataError(f"{path}: cabeçalho inválido ({e})") from e

    targets = {"user": users, "item": items}
    for line_number, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 3 or parts[0] not in targets:
            raise DataError(f"{path}:{line_number}: linha malformada '{line}'")
        try:
            targets[parts[0]][int(parts[1])] = int(parts[2])
        except (ValueError, IndexError) as e:
            raise DataError(f"{path}:{line_number}: {e}") from e

    if (users < 0).any() or (items < 0).any():
        raise DataError(f"{path}: atribuição incompleta")
    return CoClustering(k=k, user_assignment=users, item_assignment=items, seed=seed)
