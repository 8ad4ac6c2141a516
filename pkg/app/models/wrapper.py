"""Co-Clustering Wrapper: modelo global, k modelos locais e rede de importância local (LIC)."""
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import torch
import torch.nn as nn
from loguru import logger

from app.clustering.base import CoClustering, assignment_fingerprint, build_subgraphs
from app.core.config import settings
from app.core.exceptions import ClusteringMismatchError
from app.core.seeding import derive_seed
from app.data.corpus import InteractionDataset
from app.models.embedding import BaseVariant, EmbeddingModel

CHECKPOINT_VERSION = 1


class ScoringMode(str, Enum):
    """Regra de score: com LIC, pesos iguais (1:1) ou só o modelo global."""

    WITH_LIC = "with-lic"
    EQUAL_WEIGHT = "equal-weight"
    BASE_ONLY = "base-only"


class LICNetwork(nn.Module):
    """MLP de 2 camadas [e_g | e_l] -> oculta (ReLU) -> escalar, sem squashing."""

    def __init__(self, input_dim: int, hidden_dim: int, seed: int = 0, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.hidden = nn.Linear(input_dim, hidden_dim, dtype=dtype)
        self.output = nn.Linear(hidden_dim, 1, dtype=dtype)

        # Começa no regime de pesos iguais: saída constante 1
        generator = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            self.hidden.weight.copy_(
                torch.randn(hidden_dim, input_dim, generator=generator, dtype=dtype) / np.sqrt(input_dim)
            )
            self.hidden.bias.zero_()
            self.output.weight.zero_()
            self.output.bias.fill_(1.0)

    def forward(self, global_emb: torch.Tensor, local_emb: torch.Tensor) -> torch.Tensor:
        features = torch.cat([global_emb, local_emb], dim=-1)
        return self.output(torch.relu(self.hidden(features))).squeeze(-1)


@dataclass
class ScoringTables:
    """Embeddings congelados (ordem global) para avaliação em lote."""

    global_users: np.ndarray
    global_items: np.ndarray
    local_users: np.ndarray
    local_items: np.ndarray
    user_cluster: np.ndarray
    item_cluster: np.ndarray
    mode: ScoringMode


class CCWModel(nn.Module):
    """
    Composição CF_g + {CF_l^(m)} + LIC.

    Os k+1 modelos não compartilham parâmetros. Cada nó tem exatamente um
    modelo local (o do seu cluster); pares de clusters diferentes usam só o
    embedding global.
    """

    def __init__(
        self,
        global_model: EmbeddingModel,
        local_models: list[EmbeddingModel],
        coclustering: CoClustering,
        lic_net: LICNetwork,
        mode: ScoringMode | str = ScoringMode.WITH_LIC,
    ):
        super().__init__()
        if coclustering.subgraphs is None:
            raise ValueError("CoClustering sem subgrafos (use build_subgraphs)")
        if len(local_models) != coclustering.k:
            raise ValueError(f"{len(local_models)} modelos locais para k={coclustering.k}")

        self.global_model = global_model
        self.local_models = nn.ModuleList(local_models)
        self.coclustering = coclustering
        self.lic_net = lic_net
        self.mode = ScoringMode(mode)
        self.empty_clusters = [
            sg.cluster for sg in coclustering.subgraphs if sg.num_users == 0 or sg.num_items == 0
        ]

        # Posição de cada nó na concatenação das tabelas locais (ordem de cluster)
        user_order = np.concatenate([sg.users for sg in coclustering.subgraphs])
        item_order = np.concatenate([sg.items for sg in coclustering.subgraphs])
        user_position = np.empty(coclustering.num_users, dtype=np.int64)
        item_position = np.empty(coclustering.num_items, dtype=np.int64)
        user_position[user_order] = np.arange(len(user_order))
        item_position[item_order] = np.arange(len(item_order))

        self.register_buffer("user_cluster", torch.as_tensor(coclustering.user_assignment.copy()))
        self.register_buffer("item_cluster", torch.as_tensor(coclustering.item_assignment.copy()))
        self.register_buffer("user_position", torch.as_tensor(user_position))
        self.register_buffer("item_position", torch.as_tensor(item_position))

    @property
    def k(self) -> int:
        return self.coclustering.k

    @property
    def num_users(self) -> int:
        return self.global_model.num_users

    @property
    def num_items(self) -> int:
        return self.global_model.num_items

    def parameter_stores(self) -> list[nn.Module]:
        """Os k+1 modelos de embeddings (sem a LIC)."""
        return [self.global_model, *self.local_models]

    def _local_tables(self, raw: bool = False) -> tuple[torch.Tensor, torch.Tensor]:
        """Tabelas locais concatenadas e reordenadas para índices globais."""
        if raw:
            pairs = [(m.user_embeddings, m.item_embeddings) for m in self.local_models]
        else:
            pairs = [m.propagate() for m in self.local_models]
        users = torch.cat([p[0] for p in pairs], dim=0)[self.user_position]
        items = torch.cat([p[1] for p in pairs], dim=0)[self.item_position]
        return users, items

    def lic_values(self) -> tuple[torch.Tensor, torch.Tensor]:
        """LIC_p de todos os usuários e itens."""
        global_users, global_items = self.global_model.propagate()
        local_users, local_items = self._local_tables()
        return self.lic_net(global_users, local_users), self.lic_net(global_items, local_items)

    def score_pairs(self, users: torch.Tensor, items: torch.Tensor) -> torch.Tensor:
        """ŷ_{u,i} para pares (users[n], items[n])."""
        global_users, global_items = self.global_model.propagate()
        gu, gi = global_users[users], global_items[items]
        scores = (gu * gi).sum(dim=-1)
        if self.mode is ScoringMode.BASE_ONLY:
            return scores

        local_users, local_items = self._local_tables()
        lu, li = local_users[users], local_items[items]
        local = (lu * li).sum(dim=-1)
        if self.mode is ScoringMode.WITH_LIC:
            local = self.lic_net(gu, lu) * self.lic_net(gi, li) * local

        same = self.user_cluster[users] == self.item_cluster[items]
        return scores + torch.where(same, local, torch.zeros_like(local))

    def regularization(
        self, users: torch.Tensor, positives: torch.Tensor, negatives: torch.Tensor
    ) -> torch.Tensor:
        """Σ ‖·‖² das linhas tocadas (global e locais aplicáveis) + pesos da LIC."""
        total = self.global_model.regularization(users, positives, negatives)
        if self.mode is ScoringMode.BASE_ONLY:
            return total

        same_pos = self.user_cluster[users] == self.item_cluster[positives]
        same_neg = self.user_cluster[users] == self.item_cluster[negatives]
        local_users, local_items = self._local_tables(raw=True)
        total = total + local_users[users[same_pos | same_neg]].pow(2).sum()
        total = total + local_items[positives[same_pos]].pow(2).sum()
        total = total + local_items[negatives[same_neg]].pow(2).sum()
        if self.mode is ScoringMode.WITH_LIC:
            total = total + sum(p.pow(2).sum() for p in self.lic_net.parameters())
        return total

    def snapshot(self) -> ScoringTables:
        """Congela embeddings e LIC para gerar blocos de scores."""
        with torch.no_grad():
            global_users, global_items = self.global_model.propagate()
            local_users, local_items = self._local_tables()
            if self.mode is ScoringMode.WITH_LIC:
                local_users = local_users * self.lic_net(global_users, local_users)[:, None]
                local_items = local_items * self.lic_net(global_items, local_items)[:, None]
        return ScoringTables(
            global_users=global_users.detach().cpu().numpy(),
            global_items=global_items.detach().cpu().numpy(),
            local_users=local_users.detach().cpu().numpy(),
            local_items=local_items.detach().cpu().numpy(),
            user_cluster=self.user_cluster.cpu().numpy(),
            item_cluster=self.item_cluster.cpu().numpy(),
            mode=self.mode,
        )


def lic(model: CCWModel, node_type: str, index: int) -> float:
    """LIC_p = MLP([e_{p,g} | e_{p,l}]) de um usuário ou item."""
    limit = {"user": model.num_users, "item": model.num_items}.get(node_type)
    if limit is None:
        raise ValueError(f"node_type deve ser 'user' ou 'item', recebido '{node_type}'")
    if not 0 <= index < limit:
        raise ValueError(f"Índice de {node_type} {index} fora de [0, {limit})")

    with torch.no_grad():
        users, items = model.lic_values()
    return float((users if node_type == "user" else items)[index])


def rank_score(model: CCWModel, user: int, item: int) -> float:
    """ŷ_{u,i} de um único par."""
    if not 0 <= user < model.num_users or not 0 <= item < model.num_items:
        raise ValueError(f"Par ({user}, {item}) fora do espaço de índices")
    with torch.no_grad():
        value = model.score_pairs(torch.tensor([user]), torch.tensor([item]))
    return float(value[0])


def score_block(tables: ScoringTables, users: np.ndarray) -> np.ndarray:
    """Bloco denso de scores (usuários x todos os itens) a partir de tabelas congeladas."""
    scores = tables.global_users[users] @ tables.global_items.T
    if tables.mode is ScoringMode.BASE_ONLY:
        return scores

    local = tables.local_users[users] @ tables.local_items.T
    same = tables.user_cluster[users][:, None] == tables.item_cluster[None, :]
    return scores + np.where(same, local, 0.0)


def rating_matrix(
    model: CCWModel | ScoringTables,
    users: np.ndarray | list[int],
    train_matrix: sp.csr_matrix | None = None,
    cell_budget: int = settings.rating_cell_budget,
) -> np.ndarray:
    """
    Linhas de Y = (ŷ_{u,i}) para um subconjunto de usuários.

    Itens de treino (quando `train_matrix` é dado) ficam em -inf para o
    ranking. Blocos acima de `cell_budget` células são recusados.
    """
    users = np.asarray(users, dtype=np.int64)
    if users.size == 0:
        raise ValueError("Subconjunto de usuários vazio")

    tables = model.snapshot() if isinstance(model, CCWModel) else model
    num_items = len(tables.global_items)
    if users.size * num_items > cell_budget:
        raise ValueError(
            f"Bloco {users.size}x{num_items} excede o orçamento de {cell_budget} células; "
            f"divida os usuários em lotes"
        )

    scores = score_block(tables, users)
    if train_matrix is not None:
        rows = train_matrix[users]
        scores[rows.nonzero()] = -np.inf
    return scores


def assemble_ccw(
    ds: InteractionDataset,
    coclustering: CoClustering,
    base_variant: BaseVariant | str = BaseVariant.MF,
    dim: int = settings.default_dim,
    seed: int = 0,
    mode: ScoringMode | str = ScoringMode.WITH_LIC,
    local_dim: int | None = None,
    num_layers: int = settings.propagation_layers,
    dtype: torch.dtype = torch.float32,
) -> CCWModel:
    """
    Monta o modelo global sobre G, um local por subgrafo G_m e a LIC.

    Seeds: global = derive_seed(seed, "global"), local m =
    derive_seed(seed, "local", m), LIC = derive_seed(seed, "lic").
    """
    if coclustering.num_users != ds.num_users or coclustering.num_items != ds.num_items:
        raise ValueError("Clustering não corresponde ao espaço de índices do dataset")
    if coclustering.subgraphs is None:
        coclustering = build_subgraphs(ds.train_matrix, coclustering)

    local_dim = local_dim or dim
    global_model = EmbeddingModel(
        ds.num_users, ds.num_items, dim, base_variant, ds.train_edges,
        num_layers, derive_seed(seed, "global"), dtype,
    )
    local_models = [
        EmbeddingModel(
            sg.num_users, sg.num_items, local_dim, base_variant, sg.local_edges,
            num_layers, derive_seed(seed, "local", sg.cluster), dtype,
        )
        for sg in coclustering.subgraphs
    ]
    lic_net = LICNetwork(dim + local_dim, dim, derive_seed(seed, "lic"), dtype)
    model = CCWModel(global_model, local_models, coclustering, lic_net, mode)

    for cluster in model.empty_clusters:
        sizes = coclustering.cluster_sizes()[cluster]
        logger.warning(
            f"Cluster {cluster} com lado vazio ({sizes[0]} usuários, {sizes[1]} itens); "
            f"modelo local sem pares treináveis"
        )
    logger.info(
        f"CCW montado: k={coclustering.k}, variante={BaseVariant(base_variant).value}, "
        f"d={dim}, modo={model.mode.value}"
    )
    return model


def save_ccw(model: CCWModel, path: str | Path) -> Path:
    """
    Checkpoint composto `.npz`: cabeçalho JSON, k+1 modelos, pesos da LIC e
    o fingerprint do arquivo de clusters.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "version": CHECKPOINT_VERSION,
        "mode": model.mode.value,
        "k": model.k,
        "clustering_hash": assignment_fingerprint(model.coclustering),
        "global": model.global_model.header(),
        "local": [m.header() for m in model.local_models],
        "lic": {"input_dim": model.lic_net.hidden.in_features, "hidden_dim": model.lic_net.hidden.out_features},
    }
    arrays = model.global_model.export_arrays("global/")
    for m, local in enumerate(model.local_models):
        arrays.update(local.export_arrays(f"local/{m}/"))
    for name, tensor in model.lic_net.state_dict().items():
        arrays[f"lic/{name}"] = tensor.detach().cpu().numpy()

    encoded = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with path.open("wb") as handle:
        np.savez(handle, header=encoded, **arrays)
    logger.info(f"Checkpoint CCW salvo em {path}")
    return path


def load_ccw(path: str | Path, coclustering: CoClustering, ds: InteractionDataset | None = None) -> CCWModel:
    """Carrega um checkpoint composto; recusa clusters diferentes dos do treino."""
    with np.load(Path(path)) as bundle:
        arrays = {name: bundle[name] for name in bundle.files}
    header = json.loads(arrays.pop("header").tobytes().decode("utf-8"))

    found = assignment_fingerprint(coclustering)
    if header["clustering_hash"] != found:
        raise ClusteringMismatchError(header["clustering_hash"], found)

    if coclustering.subgraphs is None:
        if ds is None:
            raise ValueError("Dataset necessário para reconstruir os subgrafos")
        coclustering = build_subgraphs(ds.train_matrix, coclustering)

    global_model = EmbeddingModel.from_arrays(header["global"], arrays, "global/")
    local_models = [
        EmbeddingModel.from_arrays(local_header, arrays, f"local/{m}/")
        for m, local_header in enumerate(header["local"])
    ]
    dtype = global_model.user_embeddings.dtype
    lic_net = LICNetwork(header["lic"]["input_dim"], header["lic"]["hidden_dim"], dtype=dtype)
    lic_net.load_state_dict({
        name[len("lic/"):]: torch.from_numpy(value)
        for name, value in arrays.items() if name.startswith("lic/")
    })
    return CCWModel(global_model, local_models, coclustering, lic_net, header["mode"])
