"""Carga, validação e indexação de datasets de recomendação já particionados."""
import re
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from loguru import logger

from app.core.exceptions import DataError, DatasetParseError

_RAW_ID = re.compile(r"^[A-Za-z0-9_.\-]+$")


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class InteractionDataset:
    """
    Interações treino/teste com espaços de índices contíguos.

    Imutável após a construção; pode ser compartilhado entre workers.
    Arestas ficam como arrays (E, 2) de pares (usuário, item) ordenados.
    """

    num_users: int
    num_items: int
    train_edges: np.ndarray
    test_edges: np.ndarray
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    name: str = "dataset"
    train_adjacency: tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self):
        train = _readonly(_as_edge_array(self.train_edges))
        test = _readonly(_as_edge_array(self.test_edges))
        object.__setattr__(self, "train_edges", train)
        object.__setattr__(self, "test_edges", test)
        object.__setattr__(self, "train_adjacency", _adjacency(train, self.num_users))
        _validate(self)

    @cached_property
    def test_adjacency(self) -> tuple[np.ndarray, ...]:
        """Itens de teste por usuário (ordenados)."""
        return _adjacency(self.test_edges, self.num_users)

    @cached_property
    def test_users(self) -> np.ndarray:
        """Usuários com ao menos um item de teste."""
        counts = np.bincount(self.test_edges[:, 0], minlength=self.num_users)
        return _readonly(np.flatnonzero(counts > 0))

    @cached_property
    def train_matrix(self) -> sp.csr_matrix:
        return incidence_matrix(self)

    @property
    def num_train(self) -> int:
        return len(self.train_edges)

    @property
    def num_test(self) -> int:
        return len(self.test_edges)


def _as_edge_array(edges) -> np.ndarray:
    array = np.asarray(edges, dtype=np.int64)
    if array.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    if array.ndim != 2 or array.shape[1] != 2:
        raise ValueError(f"Arestas precisam ter formato (E, 2), recebido {array.shape}")
    order = np.lexsort((array[:, 1], array[:, 0]))
    return np.ascontiguousarray(array[order])


def _adjacency(edges: np.ndarray, num_users: int) -> tuple[np.ndarray, ...]:
    bounds = np.searchsorted(edges[:, 0], np.arange(num_users + 1))
    return tuple(
        _readonly(edges[bounds[u]:bounds[u + 1], 1].copy()) for u in range(num_users)
    )


def _pair_keys(edges: np.ndarray, num_items: int) -> np.ndarray:
    return edges[:, 0] * num_items + edges[:, 1]


def _validate(ds: InteractionDataset) -> None:
    if len(ds.user_ids) != ds.num_users or len(ds.item_ids) != ds.num_items:
        raise DataError("Mapas de IDs não batem com num_users/num_items")

    for label, edges in (("treino", ds.train_edges), ("teste", ds.test_edges)):
        if len(edges) == 0:
            continue
        if edges.min() < 0 or edges[:, 0].max() >= ds.num_users or edges[:, 1].max() >= ds.num_items:
            raise DataError(f"Índice fora do intervalo nas arestas de {label}")
        keys = _pair_keys(edges, ds.num_items)
        if np.any(np.diff(keys) == 0):
            raise DataError(f"Arestas duplicadas em {label}")

    overlap = np.intersect1d(
        _pair_keys(ds.train_edges, ds.num_items), _pair_keys(ds.test_edges, ds.num_items)
    )
    if overlap.size:
        raise DataError(f"{overlap.size} pares aparecem em treino e teste")

    train_degree = np.bincount(ds.train_edges[:, 0], minlength=ds.num_users)
    test_only = np.setdiff1d(np.unique(ds.test_edges[:, 0]), np.flatnonzero(train_degree))
    if test_only.size:
        raise DataError(f"Usuário '{ds.user_ids[test_only[0]]}' aparece só no teste")


def _id_sort_key(raw: str) -> tuple[int, int | str]:
    return (0, int(raw)) if raw.isdigit() else (1, raw)


def _parse_split(path: Path, *, allow_empty: bool) -> Iterator[tuple[str, list[str]]]:
    """Lê `<user> <item> <item> ...` por linha; tokens `item:valor` mantêm só o item."""
    with path.open("rb") as handle:
        for line_number, raw_line in enumerate(handle, start=1):
            try:
                line = raw_line.decode("utf-8")
            except UnicodeDecodeError as e:
                raise DatasetParseError(path, line_number, f"bytes inválidos em UTF-8 ({e.reason})") from e
            tokens = line.split()
            if not tokens:
                continue

            user = tokens[0].rstrip(":")
            if not _RAW_ID.match(user):
                raise DatasetParseError(path, line_number, f"ID de usuário inválido '{tokens[0]}'")

            items = []
            for token in tokens[1:]:
                item = token.split(":", 1)[0]
                if not _RAW_ID.match(item):
                    raise DatasetParseError(path, line_number, f"ID de item inválido '{token}'")
                items.append(item)

            if not items:
                if not allow_empty:
                    raise DataError(
                        f"{path}:{line_number}: usuário '{user}' sem interações no treino"
                    )
                logger.debug(f"{path.name}:{line_number}: usuário '{user}' sem itens de teste, ignorado")
                continue

            yield user, items


def _dedup(edges: np.ndarray, num_items: int, label: str) -> np.ndarray:
    if len(edges) == 0:
        return edges
    keys = _pair_keys(edges, num_items)
    _, first = np.unique(keys, return_index=True)
    dropped = len(edges) - len(first)
    if dropped:
        logger.warning(f"{dropped} arestas duplicadas removidas do {label}")
    return edges[np.sort(first)]


def load_dataset(train_path: str | Path, test_path: str | Path, name: str | None = None) -> InteractionDataset:
    """
    Carrega um par de arquivos treino/teste no formato de listas de adjacência.

    IDs brutos são remapeados para índices contíguos (ordem numérica quando
    todos são inteiros, lexicográfica caso contrário).
    """
    train_path, test_path = Path(train_path), Path(test_path)
    for path in (train_path, test_path):
        if not path.is_file():
            raise FileNotFoundError(f"Arquivo não encontrado: {path}")

    train_rows = list(_parse_split(train_path, allow_empty=False))
    test_rows = list(_parse_split(test_path, allow_empty=True))

    train_users = {user for user, _ in train_rows}
    for user, _ in test_rows:
        if user not in train_users:
            raise DataError(f"Usuário '{user}' aparece no teste sem histórico de treino")

    user_ids = tuple(sorted(train_users, key=_id_sort_key))
    item_ids = tuple(sorted(
        {item for _, items in (*train_rows, *test_rows) for item in items}, key=_id_sort_key
    ))
    user_index = {raw: idx for idx, raw in enumerate(user_ids)}
    item_index = {raw: idx for idx, raw in enumerate(item_ids)}

    def to_edges(rows: list[tuple[str, list[str]]]) -> np.ndarray:
        pairs = [(user_index[user], item_index[item]) for user, items in rows for item in items]
        return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)

    num_items = len(item_ids)
    train = _dedup(to_edges(train_rows), num_items, "treino")
    test = _dedup(to_edges(test_rows), num_items, "teste")

    overlap = np.isin(_pair_keys(test, num_items), _pair_keys(train, num_items))
    if overlap.any():
        logger.warning(f"{int(overlap.sum())} pares de teste já presentes no treino foram removidos")
        test = test[~overlap]

    ds = InteractionDataset(
        num_users=len(user_ids),
        num_items=num_items,
        train_edges=train,
        test_edges=test,
        user_ids=user_ids,
        item_ids=item_ids,
        name=name or train_path.parent.name or "dataset",
    )
    logger.info(
        f"Dataset '{ds.name}' carregado: {ds.num_users} usuários, {ds.num_items} itens, "
        f"{ds.num_train} treino / {ds.num_test} teste"
    )
    return ds


def from_edges(
    num_users: int,
    num_items: int,
    train_edges: Sequence[tuple[int, int]] | np.ndarray,
    test_edges: Sequence[tuple[int, int]] | np.ndarray = (),
    name: str = "dataset",
) -> InteractionDataset:
    """Constrói um dataset a partir de pares já indexados (IDs brutos = índices)."""
    return InteractionDataset(
        num_users=num_users,
        num_items=num_items,
        train_edges=train_edges,
        test_edges=test_edges,
        user_ids=tuple(str(u) for u in range(num_users)),
        item_ids=tuple(str(i) for i in range(num_items)),
        name=name,
    )


def write_dataset(ds: InteractionDataset, train_path: str | Path, test_path: str | Path) -> None:
    """Escreve o dataset no mesmo formato lido por `load_dataset`."""
    for path, adjacency in ((train_path, ds.train_adjacency), (test_path, ds.test_adjacency)):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [
            " ".join([ds.user_ids[u], *(ds.item_ids[i] for i in items)])
            for u, items in enumerate(adjacency)
            if len(items)
        ]
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def incidence_matrix(ds: InteractionDataset) -> sp.csr_matrix:
    """Matriz binária usuários x itens das interações de treino (CSR)."""
    edges = ds.train_edges
    values = np.ones(len(edges), dtype=np.float64)
    return sp.csr_matrix(
        (values, (edges[:, 0], edges[:, 1])), shape=(ds.num_users, ds.num_items)
    )


def dataset_statistics(ds: InteractionDataset) -> dict:
    """Estatísticas no formato da tabela de datasets (densidade treino e combinada)."""
    cells = ds.num_users * ds.num_items
    total = ds.num_train + ds.num_test
    return {
        "dataset": ds.name,
        "users": ds.num_users,
        "items": ds.num_items,
        "train_interactions": ds.num_train,
        "test_interactions": ds.num_test,
        "interactions": total,
        "density_train": ds.num_train / cells if cells else 0.0,
        "density": total / cells if cells else 0.0,
    }


def holdout_split(ds: InteractionDataset, fraction: float, seed: int) -> InteractionDataset:
    """
    Separa uma fração do treino de cada usuário como validação.

    O dataset retornado tem `test_edges` = fatia separada e mantém ao menos
    um item de treino por usuário.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction deve estar em (0, 1), recebido {fraction}")

    rng = np.random.default_rng(seed)
    keep, held = [], []
    for u, items in enumerate(ds.train_adjacency):
        n_held = min(int(round(len(items) * fraction)), len(items) - 1)
        chosen = rng.permutation(len(items))
        held.extend((u, i) for i in items[chosen[:n_held]])
        keep.extend((u, i) for i in items[chosen[n_held:]])

    return InteractionDataset(
        num_users=ds.num_users,
        num_items=ds.num_items,
        train_edges=np.asarray(keep, dtype=np.int64).reshape(-1, 2),
        test_edges=np.asarray(held, dtype=np.int64).reshape(-1, 2),
        user_ids=ds.user_ids,
        item_ids=ds.item_ids,
        name=f"{ds.name}-holdout",
    )
