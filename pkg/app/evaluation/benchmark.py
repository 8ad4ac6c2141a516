"""Comparação base vs CCW (pesos iguais e com LIC) sobre seeds compartilhadas."""
import time
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd
from loguru import logger

from app.clustering.base import CoClustering, build_subgraphs
from app.clustering.spectral import spectral_cocluster
from app.core.config import settings
from app.core.seeding import derive_seed
from app.data.corpus import InteractionDataset, holdout_split
from app.evaluation.evaluator import evaluate
from app.models.embedding import BaseVariant
from app.models.wrapper import ScoringMode, assemble_ccw
from app.training.trainer import TrainConfig, train_ccw

DEFAULT_MODES = (ScoringMode.BASE_ONLY, ScoringMode.EQUAL_WEIGHT, ScoringMode.WITH_LIC)


@dataclass
class BenchmarkResult:
    """Tabela por execução, resumo por (variante, modo) e dados do gráfico de barras."""

    runs: pd.DataFrame
    summary: pd.DataFrame
    k: int
    clusters: int

    @property
    def bars(self) -> pd.DataFrame:
        """Uma linha por (variante, modo, métrica) com média e ganho sobre o base."""
        frames = []
        for metric in ("recall", "ndcg"):
            frame = self.summary[["base_variant", "mode", f"{metric}_mean", f"delta_{metric}"]].copy()
            frame.columns = ["base_variant", "mode", "value", "delta"]
            frame.insert(2, "metric", f"{metric}@{self.k}")
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)


def summarize_runs(runs: pd.DataFrame, k: int) -> pd.DataFrame:
    """Médias e desvios por (variante, modo) e ganho de cada modo sobre base-only."""
    recall, ndcg = f"recall@{k}", f"ndcg@{k}"
    summary = (
        runs.groupby(["base_variant", "mode"], sort=False)
        .agg(
            recall_mean=(recall, "mean"),
            recall_std=(recall, lambda s: float(np.std(s))),
            ndcg_mean=(ndcg, "mean"),
            ndcg_std=(ndcg, lambda s: float(np.std(s))),
            seeds=("seed", "count"),
        )
        .reset_index()
    )

    base = summary[summary["mode"] == ScoringMode.BASE_ONLY.value].set_index("base_variant")
    for metric in ("recall", "ndcg"):
        reference = summary["base_variant"].map(base[f"{metric}_mean"])
        summary[f"delta_{metric}"] = summary[f"{metric}_mean"] - reference
    return summary


def benchmark(
    ds: InteractionDataset,
    base_variants: Sequence[BaseVariant | str],
    modes: Sequence[ScoringMode | str] = DEFAULT_MODES,
    k: int = settings.top_k,
    clusters: int = 3,
    seeds: Sequence[int] = (0,),
    train_cfg: TrainConfig | None = None,
    dim: int = settings.default_dim,
    num_layers: int = settings.propagation_layers,
    coclustering: CoClustering | None = None,
) -> BenchmarkResult:
    """
    Treina e avalia cada (variante, modo, seed) com os mesmos dados e seeds.

    Para cada seed, o co-clustering e a inicialização são compartilhados
    entre os modos, de modo que as diferenças vêm só da regra de score.
    """
    if not base_variants or not modes or not seeds:
        raise ValueError("Variantes, modos e seeds precisam ser não vazios")
    train_cfg = train_cfg or TrainConfig()
    start_time = time.time()

    rows = []
    for seed in seeds:
        # Com validação em holdout, clustering e treino só veem o treino reduzido
        if train_cfg.validation == "holdout":
            fit_ds = holdout_split(ds, train_cfg.holdout_fraction, derive_seed(seed, "holdout"))
        else:
            fit_ds = ds
        matrix = fit_ds.train_matrix
        clustering = coclustering or spectral_cocluster(matrix, clusters, derive_seed(seed, "cluster"))
        clustering = build_subgraphs(matrix, clustering)
        cfg = train_cfg.model_copy(update={"seed": derive_seed(seed, "train"), "top_k": k})

        for variant in base_variants:
            for mode in modes:
                model = assemble_ccw(
                    fit_ds, clustering, variant, dim, derive_seed(seed, "model"), mode, num_layers=num_layers
                )
                train_ccw(model, fit_ds, cfg)
                report = evaluate(model, ds, k, seed=seed)
                rows.append({
                    "base_variant": BaseVariant(variant).value,
                    "mode": ScoringMode(mode).value,
                    "seed": seed,
                    f"recall@{k}": report.recall,
                    f"ndcg@{k}": report.ndcg,
                })

    runs = pd.DataFrame(rows)
    summary = summarize_runs(runs, k)
    logger.info(
        f"Benchmark: {len(rows)} execuções ({len(base_variants)} variantes x {len(modes)} modos x "
        f"{len(seeds)} seeds) | {(time.time() - start_time) * 1000:.2f}ms"
    )
    return BenchmarkResult(runs=runs, summary=summary, k=k, clusters=clustering.k)
