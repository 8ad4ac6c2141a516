"""Modelos CF baseados em embeddings: MF puro e variante com propagação em grafo."""
import json
from enum import Enum
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
from loguru import logger

INIT_STD = 0.01


class BaseVariant(str, Enum):
    """Modelos base disponíveis para os papéis global e local."""

    MF = "mf"
    PROPAGATED = "propagated"


def normalized_adjacency(
    num_users: int, num_items: int, edges: np.ndarray, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """
    Adjacência simétrica normalizada D^{-1/2} A D^{-1/2} do grafo bipartido.

    Nós são ordenados [usuários | itens]; nós sem aresta ficam com linha nula.
    """
    size = num_users + num_items
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    rows = np.concatenate([edges[:, 0], edges[:, 1] + num_users])
    cols = np.concatenate([edges[:, 1] + num_users, edges[:, 0]])
    degree = np.bincount(rows, minlength=size).astype(np.float64)
    with np.errstate(divide="ignore"):
        inv_sqrt = np.where(degree > 0, 1.0 / np.sqrt(degree), 0.0)
    values = inv_sqrt[rows] * inv_sqrt[cols]
    return torch.sparse_coo_tensor(
        torch.as_tensor(np.vstack([rows, cols])),
        torch.as_tensor(values, dtype=dtype),
        size=(size, size),
    ).coalesce()


class EmbeddingModel(nn.Module):
    """
    Tabelas de embeddings d-dimensionais de usuários e itens.

    A variante `propagated` aplica L camadas de média normalizada sobre as
    arestas do próprio escopo (grafo completo no global, E_j no local j) e
    retorna a média das L+1 camadas; a variante `mf` usa as tabelas direto.
    """

    def __init__(
        self,
        num_users: int,
        num_items: int,
        dim: int,
        variant: BaseVariant | str = BaseVariant.MF,
        edges: np.ndarray | None = None,
        num_layers: int = 3,
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        if dim < 1:
            raise ValueError(f"dim precisa ser >= 1, recebido {dim}")

        self.num_users = num_users
        self.num_items = num_items
        self.dim = dim
        self.variant = BaseVariant(variant)
        self.num_layers = num_layers if self.variant is BaseVariant.PROPAGATED else 0
        self.seed = seed

        generator = torch.Generator().manual_seed(seed)
        self.user_embeddings = nn.Parameter(
            torch.randn(num_users, dim, generator=generator, dtype=dtype) * INIT_STD
        )
        self.item_embeddings = nn.Parameter(
            torch.randn(num_items, dim, generator=generator, dtype=dtype) * INIT_STD
        )

        edges = np.empty((0, 2), dtype=np.int64) if edges is None else np.asarray(edges, dtype=np.int64)
        self.register_buffer("edge_index", torch.as_tensor(edges.reshape(-1, 2)))
        if self.num_layers > 0:
            self.register_buffer("graph", normalized_adjacency(num_users, num_items, edges, dtype))
        else:
            self.graph = None

    @property
    def num_edges(self) -> int:
        return int(self.edge_index.shape[0])

    def propagate(self) -> tuple[torch.Tensor, torch.Tensor]:
        """Embeddings finais de todos os usuários e itens."""
        if self.graph is None:
            return self.user_embeddings, self.item_embeddings

        layer = torch.cat([self.user_embeddings, self.item_embeddings], dim=0)
        layers = [layer]
        for _ in range(self.num_layers):
            layer = torch.sparse.mm(self.graph, layer)
            layers.append(layer)
        mean = torch.stack(layers, dim=0).mean(dim=0)
        return mean[:self.num_users], mean[self.num_users:]

    def score_pairs(self, users: torch.Tensor, items: torch.Tensor) -> torch.Tensor:
        """Produto interno e_uᵀ e_i para pares (users[n], items[n])."""
        user_table, item_table = self.propagate()
        return (user_table[users] * item_table[items]).sum(dim=-1)

    def regularization(
        self, users: torch.Tensor, positives: torch.Tensor, negatives: torch.Tensor
    ) -> torch.Tensor:
        """Σ ‖·‖² das linhas (ego) tocadas por um lote."""
        return (
            self.user_embeddings[users].pow(2).sum()
            + self.item_embeddings[positives].pow(2).sum()
            + self.item_embeddings[negatives].pow(2).sum()
        )

    def header(self) -> dict:
        return {
            "num_users": self.num_users,
            "num_items": self.num_items,
            "dim": self.dim,
            "variant": self.variant.value,
            "num_layers": self.num_layers,
            "seed": self.seed,
        }

    def export_arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        """Tabelas e arestas como arrays numpy (layout do checkpoint)."""
        return {
            f"{prefix}user_embeddings": self.user_embeddings.detach().cpu().numpy(),
            f"{prefix}item_embeddings": self.item_embeddings.detach().cpu().numpy(),
            f"{prefix}edges": self.edge_index.cpu().numpy(),
        }

    @classmethod
    def from_arrays(cls, header: dict, arrays: dict[str, np.ndarray], prefix: str = "") -> "EmbeddingModel":
        user_table = arrays[f"{prefix}user_embeddings"]
        model = cls(
            num_users=header["num_users"],
            num_items=header["num_items"],
            dim=header["dim"],
            variant=header["variant"],
            edges=arrays[f"{prefix}edges"],
            num_layers=header["num_layers"] or 0,
            seed=header["seed"],
            dtype=torch.from_numpy(user_table[:0]).dtype,
        )
        with torch.no_grad():
            model.user_embeddings.copy_(torch.from_numpy(user_table))
            model.item_embeddings.copy_(torch.from_numpy(arrays[f"{prefix}item_embeddings"]))
        return model


def init_model(
    num_users: int,
    num_items: int,
    dim: int,
    variant: BaseVariant | str = BaseVariant.MF,
    seed: int = 0,
    edges: np.ndarray | None = None,
    num_layers: int = 3,
) -> EmbeddingModel:
    """Inicializa tabelas i.i.d. Normal(0, 0.01²), determinísticas pela seed."""
    return EmbeddingModel(num_users, num_items, dim, variant, edges, num_layers, seed)


def embed(model: EmbeddingModel, node_type: str, index: int) -> torch.Tensor:
    """Embedding final de um usuário (`node_type="user"`) ou item."""
    limit = {"user": model.num_users, "item": model.num_items}.get(node_type)
    if limit is None:
        raise ValueError(f"node_type deve ser 'user' ou 'item', recebido '{node_type}'")
    if not 0 <= index < limit:
        raise ValueError(f"Índice de {node_type} {index} fora de [0, {limit})")

    with torch.no_grad():
        user_table, item_table = model.propagate()
    return (user_table if node_type == "user" else item_table)[index].clone()


def score(model: EmbeddingModel, user: int, item: int) -> float:
    """Produto interno dos embeddings finais de `user` e `item`."""
    return float(embed(model, "user", user) @ embed(model, "item", item))


def save_model(model: EmbeddingModel, path: str | Path) -> Path:
    """
    Salva um checkpoint `.npz`.

    Layout: `header` (JSON em bytes utf-8), `user_embeddings`,
    `item_embeddings` e `edges`.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.frombuffer(json.dumps(model.header(), sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with path.open("wb") as handle:
        np.savez(handle, header=header, **model.export_arrays())
    logger.debug(f"Checkpoint do modelo salvo em {path}")
    return path


def load_model(path: str | Path) -> EmbeddingModel:
    with np.load(Path(path)) as bundle:
        arrays = {name: bundle[name] for name in bundle.files}
    header = json.loads(arrays.pop("header").tobytes().decode("utf-8"))
    return EmbeddingModel.from_arrays(header, arrays)
