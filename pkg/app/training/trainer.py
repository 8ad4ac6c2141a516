"""Treino conjunto (global + locais + LIC) com perda BPR e Adam."""
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import pandas as pd
import torch
import torch.nn as nn
import torch.nn.functional as F
from joblib import Parallel, delayed
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from app.core.exceptions import NumericError
from app.data.corpus import InteractionDataset
from app.evaluation.evaluator import evaluate
from app.models.embedding import EmbeddingModel
from app.models.wrapper import CCWModel, ScoringMode
from app.training.sampler import BPRTriple, TripleBatch, TripleSampler


class TrainConfig(BaseModel):
    """Hiperparâmetros de treino."""

    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    learning_rate: float = Field(1e-3, gt=0)
    reg_lambda: float = Field(1e-4, ge=0, alias="lambda")
    batch_size: int = Field(2048, ge=1)
    epochs: int = Field(400, ge=1)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    seed: int = 0
    eval_every: int = Field(10, ge=1, description="Épocas entre validações")
    early_stop_patience: int = Field(5, ge=0, description="Validações sem melhora (0 desliga)")
    top_k: int = Field(20, ge=1)
    full_regularization: bool = False
    validation: Literal["test", "holdout"] = "test"
    holdout_fraction: float = Field(0.1, gt=0, lt=1)
    num_samplers: int = Field(1, ge=1)


@dataclass
class TrainResult:
    """Modelo treinado (melhor checkpoint) e histórico por época."""

    model: nn.Module
    history: pd.DataFrame
    best_epoch: int | None = None
    best_recall: float | None = None
    epochs_run: int = 0
    stopped_early: bool = False
    timings: dict = field(default_factory=dict)

    def write_history(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.history.to_csv(path, index=False)
        return path


def parameter_norm(model: nn.Module) -> torch.Tensor:
    """‖W‖² sobre todos os parâmetros que participam do score no modo atual."""
    if isinstance(model, CCWModel):
        modules: list[nn.Module] = [model.global_model]
        if model.mode is not ScoringMode.BASE_ONLY:
            modules.extend(model.local_models)
        if model.mode is ScoringMode.WITH_LIC:
            modules.append(model.lic_net)
    else:
        modules = [model]
    return sum(p.pow(2).sum() for m in modules for p in m.parameters())


def bpr_loss(
    model: CCWModel | EmbeddingModel,
    batch: TripleBatch | list[BPRTriple],
    reg_lambda: float,
    full_regularization: bool = False,
) -> torch.Tensor:
    """
    média(softplus(−(ŷ_ui − ŷ_uj))) + regularização L2.

    Por padrão só as linhas tocadas pelo lote entram no termo L2, escalado
    por 1/|lote|. Com `full_regularization` usa λ‖W‖² completo.
    """
    if not isinstance(batch, TripleBatch):
        batch = TripleBatch.from_triples(batch)
    if len(batch) == 0:
        raise ValueError("Lote vazio")

    users = torch.cat([batch.users, batch.users])
    items = torch.cat([batch.positives, batch.negatives])
    positive, negative = model.score_pairs(users, items).chunk(2)
    loss = F.softplus(-(positive - negative)).mean()

    if reg_lambda == 0:
        return loss
    if full_regularization:
        return loss + reg_lambda * parameter_norm(model)
    touched = model.regularization(batch.users, batch.positives, batch.negatives)
    return loss + reg_lambda * touched / len(batch)


def _drop_zero_grads(parameters: list[nn.Parameter]) -> None:
    # Adam ignora grad None: modelos sem contribuição no lote ficam intactos
    for p in parameters:
        if p.grad is not None and not torch.any(p.grad):
            p.grad = None


def _dump_batch(batch: TripleBatch, dump_dir: Path | None) -> str:
    frame = pd.DataFrame({
        "user": batch.users.numpy(),
        "positive": batch.positives.numpy(),
        "negative": batch.negatives.numpy(),
    })
    if dump_dir is None:
        return frame.head(5).to_string(index=False)
    dump_dir.mkdir(parents=True, exist_ok=True)
    path = dump_dir / "nonfinite_batch.csv"
    frame.to_csv(path, index=False)
    return str(path)


def _sample_many(sampler: TripleSampler, batch_size: int, rng: np.random.Generator, count: int) -> list[TripleBatch]:
    return [sampler.sample(batch_size, rng) for _ in range(count)]


def _epoch_batches(
    sampler: TripleSampler,
    cfg: TrainConfig,
    n_batches: int,
    rngs: list[np.random.Generator],
) -> list[TripleBatch]:
    if len(rngs) == 1:
        return [sampler.sample(cfg.batch_size, rngs[0]) for _ in range(n_batches)]

    shares = np.array_split(np.arange(n_batches), len(rngs))
    chunks = Parallel(n_jobs=len(rngs), prefer="threads")(
        delayed(_sample_many)(sampler, cfg.batch_size, rng, len(share))
        for rng, share in zip(rngs, shares)
    )
    return [batch for chunk in chunks for batch in chunk]


def make_optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.Adam:
    """Adam sobre todos os parâmetros (k+1 modelos e LIC) em um único otimizador."""
    return torch.optim.Adam(
        [p for p in model.parameters() if p.requires_grad],
        lr=cfg.learning_rate,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        eps=cfg.adam_eps,
    )


def train_step(
    model: CCWModel | EmbeddingModel,
    optimizer: torch.optim.Optimizer,
    batch: TripleBatch,
    cfg: TrainConfig,
    dump_dir: Path | None = None,
) -> float:
    """Um passo de Adam; perda não finita aborta com o lote gravado para diagnóstico."""
    optimizer.zero_grad(set_to_none=True)
    loss = bpr_loss(model, batch, cfg.reg_lambda, cfg.full_regularization)
    if not torch.isfinite(loss):
        where = _dump_batch(batch, dump_dir)
        raise NumericError(f"Perda não finita ({loss.item()}); lote: {where}")
    loss.backward()
    for group in optimizer.param_groups:
        _drop_zero_grads(group["params"])
    optimizer.step()
    return loss.item()


def train_ccw(
    model: CCWModel | EmbeddingModel,
    ds: InteractionDataset,
    cfg: TrainConfig,
    validation_ds: InteractionDataset | None = None,
    dump_dir: str | Path | None = None,
) -> TrainResult:
    """
    Otimiza todos os parâmetros do modelo no mesmo passo de backward.

    Amostra triplas das arestas de treino de `ds` e valida a cada
    `cfg.eval_every` épocas no split de teste de `validation_ds` (padrão:
    `ds`). Mantém o estado com melhor Recall@K de validação.
    """
    start_time = time.time()
    torch.manual_seed(cfg.seed)
    validation_ds = validation_ds or ds
    dump_dir = Path(dump_dir) if dump_dir is not None else None

    sampler = TripleSampler(ds)
    if sampler.num_edges == 0:
        raise ValueError("Dataset de treino sem arestas amostráveis")
    n_batches = math.ceil(sampler.num_edges / cfg.batch_size)
    if cfg.num_samplers == 1:
        rngs = [np.random.default_rng(cfg.seed)]
    else:
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(cfg.num_samplers)]

    optimizer = make_optimizer(model, cfg)

    validate = len(validation_ds.test_users) > 0
    if not validate:
        logger.warning("Split de validação sem usuários de teste; treino sem validação")

    recall_column, ndcg_column = f"val_recall@{cfg.top_k}", f"val_ndcg@{cfg.top_k}"
    rows = []
    best_state, best_epoch, best_recall = None, None, -1.0
    evals_without_gain = 0
    stopped_early = False

    logger.info(
        f"Treino: {sampler.num_edges} arestas, {n_batches} lotes/época, "
        f"{cfg.epochs} épocas, lr={cfg.learning_rate}, λ={cfg.reg_lambda}"
    )

    epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        losses = [
            train_step(model, optimizer, batch, cfg, dump_dir)
            for batch in _epoch_batches(sampler, cfg, n_batches, rngs)
        ]

        row = {"epoch": epoch, "loss": float(np.mean(losses)), recall_column: np.nan, ndcg_column: np.nan}

        if validate and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            model.eval()
            report = evaluate(model, validation_ds, cfg.top_k)
            row[recall_column], row[ndcg_column] = report.recall, report.ndcg

            if report.recall > best_recall:
                best_state = {name: p.detach().clone() for name, p in model.named_parameters()}
                best_epoch, best_recall = epoch, report.recall
                evals_without_gain = 0
            else:
                evals_without_gain += 1

            logger.info(
                f"Época {epoch}: perda={row['loss']:.5f} Recall@{cfg.top_k}={report.recall:.4f} "
                f"NDCG@{cfg.top_k}={report.ndcg:.4f}"
            )
            if cfg.early_stop_patience and evals_without_gain >= cfg.early_stop_patience:
                rows.append(row)
                stopped_early = True
                logger.info(f"Parada antecipada na época {epoch} (melhor: época {best_epoch})")
                break
        else:
            logger.debug(f"Época {epoch}: perda={row['loss']:.5f}")

        rows.append(row)

    if best_state is not None:
        with torch.no_grad():
            for name, p in model.named_parameters():
                p.copy_(best_state[name])
    model.eval()

    processing_time = (time.time() - start_time) * 1000
    logger.info(f"Treino concluído em {epoch} épocas | {processing_time:.2f}ms")
    return TrainResult(
        model=model,
        history=pd.DataFrame(rows, columns=["epoch", "loss", recall_column, ndcg_column]),
        best_epoch=best_epoch,
        best_recall=best_recall if best_epoch is not None else None,
        epochs_run=epoch,
        stopped_early=stopped_early,
        timings={"train_ms": round(processing_time, 2)},
    )
