"""Avaliação top-K de modelos (CCW ou base isolado) sobre o split de teste."""
import json
import time
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field

from app.core.config import settings
from app.data.corpus import InteractionDataset
from app.evaluation.metrics import batch_metrics
from app.models.embedding import EmbeddingModel
from app.models.wrapper import CCWModel, ScoringMode, ScoringTables, rating_matrix


class EvalReport(BaseModel):
    """Resultado de uma avaliação: médias por usuário e metadados da execução."""

    recall: float = Field(..., ge=0.0, le=1.0, description="Recall@K médio")
    ndcg: float = Field(..., ge=0.0, le=1.0, description="NDCG@K médio")
    k: int = Field(..., ge=1)
    num_users: int = Field(..., ge=0, description="Usuários com ao menos um item de teste")
    dataset: str = "dataset"
    mode: str = ScoringMode.WITH_LIC.value
    clusters: int | None = None
    seed: int | None = None
    config_hash: str | None = None
    processing_time_ms: float = 0.0

    def metric_row(self) -> dict:
        return {f"recall@{self.k}": self.recall, f"ndcg@{self.k}": self.ndcg}

    def write_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.model_dump(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def scoring_tables(model: CCWModel | EmbeddingModel | ScoringTables) -> ScoringTables:
    """Tabelas congeladas; um modelo base isolado vira um CCW só-global."""
    if isinstance(model, ScoringTables):
        return model
    if isinstance(model, CCWModel):
        return model.snapshot()

    user_table, item_table = model.propagate()
    users = user_table.detach().cpu().numpy()
    items = item_table.detach().cpu().numpy()
    return ScoringTables(
        global_users=users,
        global_items=items,
        local_users=np.zeros_like(users),
        local_items=np.zeros_like(items),
        user_cluster=np.zeros(len(users), dtype=np.int64),
        item_cluster=np.zeros(len(items), dtype=np.int64),
        mode=ScoringMode.BASE_ONLY,
    )


def top_k_items(scores: np.ndarray, k: int) -> list[np.ndarray]:
    """
    Top-K por linha em ordem decrescente de score; empates vão para o menor índice.

    Itens mascarados (-inf) nunca entram no ranking.
    """
    scores = np.atleast_2d(scores)
    # argsort estável sobre -score preserva a ordem crescente de índice nos empates
    order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    ranked = []
    for row, items in zip(scores, order):
        ranked.append(items[row[items] > -np.inf])
    return ranked


def per_user_metrics(
    model: CCWModel | EmbeddingModel | ScoringTables,
    ds: InteractionDataset,
    k: int = settings.top_k,
    batch_users: int = settings.eval_batch_users,
) -> pd.DataFrame:
    """Recall@K e NDCG@K de cada usuário de teste (colunas user, recall, ndcg)."""
    if k < 1:
        raise ValueError(f"k precisa ser >= 1, recebido {k}")

    tables = scoring_tables(model)
    users = ds.test_users
    train_matrix = ds.train_matrix
    recalls, ndcgs = [], []
    for start in range(0, len(users), batch_users):
        batch = users[start:start + batch_users]
        scores = rating_matrix(tables, batch, train_matrix, cell_budget=max(len(batch), 1) * ds.num_items)
        hits = np.zeros((len(batch), k), dtype=bool)
        counts = np.empty(len(batch), dtype=np.int64)
        for row, (u, ranked) in enumerate(zip(batch, top_k_items(scores, k))):
            test = ds.test_adjacency[u]
            hits[row, :len(ranked)] = np.isin(ranked, test)
            counts[row] = len(test)
        recall, ndcg = batch_metrics(hits, counts, k)
        recalls.append(recall)
        ndcgs.append(ndcg)

    if not recalls:
        return pd.DataFrame({"user": [], "recall": [], "ndcg": []})
    return pd.DataFrame({
        "user": users,
        "recall": np.concatenate(recalls),
        "ndcg": np.concatenate(ndcgs),
    })


def evaluate(
    model: CCWModel | EmbeddingModel | ScoringTables,
    ds: InteractionDataset,
    k: int = settings.top_k,
    seed: int | None = None,
    config_hash: str | None = None,
) -> EvalReport:
    """Médias por usuário de Recall@K e NDCG@K, com itens de treino mascarados."""
    start_time = time.time()
    frame = per_user_metrics(model, ds, k)

    if frame.empty:
        logger.warning(f"Dataset '{ds.name}' sem usuários de teste; métricas = 0")
        recall = ndcg = 0.0
    else:
        recall, ndcg = float(frame["recall"].mean()), float(frame["ndcg"].mean())

    if isinstance(model, CCWModel):
        mode, clusters = model.mode.value, model.k
    else:
        mode, clusters = ScoringMode.BASE_ONLY.value, None

    processing_time = (time.time() - start_time) * 1000
    report = EvalReport(
        recall=recall,
        ndcg=ndcg,
        k=k,
        num_users=len(frame),
        dataset=ds.name,
        mode=mode,
        clusters=clusters,
        seed=seed,
        config_hash=config_hash,
        processing_time_ms=round(processing_time, 2),
    )
    logger.info(
        f"Avaliação '{ds.name}' ({mode}): Recall@{k}={recall:.4f} NDCG@{k}={ndcg:.4f} "
        f"em {len(frame)} usuários | {processing_time:.2f}ms"
    )
    return report
