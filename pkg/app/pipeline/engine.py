"""Engine que encadeia os estágios: ingest → select-k → cocluster → train → evaluate → report."""
import time
from collections.abc import Sequence
from pathlib import Path

import pandas as pd
from loguru import logger

from app.cli.models import RunConfig
from app.clustering.base import (
    CoClustering,
    block_density_stat,
    build_subgraphs,
    read_assignments,
    write_assignments,
)
from app.clustering.quality import VarianceRatioCurve, select_k, vr_curve
from app.clustering.spectral import spectral_cocluster
from app.core.exceptions import DataError, StageError
from app.core.seeding import derive_seed, stage_seeds
from app.data.corpus import InteractionDataset, dataset_statistics, holdout_split, load_dataset
from app.evaluation.benchmark import DEFAULT_MODES, BenchmarkResult, benchmark
from app.evaluation.evaluator import EvalReport, evaluate
from app.models.embedding import BaseVariant
from app.models.wrapper import CCWModel, assemble_ccw, load_ccw, save_ccw
from app.reporting.artifacts import ArtifactWriter, read_manifest
from app.reporting.charts import (
    render_benchmark_bars,
    render_block_matrix,
    render_training_curve,
    render_vr_curve,
)
from app.training.trainer import TrainResult, train_ccw

CLUSTERS_FILE = "clusters.txt"
CHECKPOINT_FILE = "checkpoint.npz"

COMMAND_STAGES = {
    "ingest": ("ingest",),
    "select-k": ("ingest", "select-k"),
    "cocluster": ("ingest", "select-k", "cocluster"),
    "train": ("ingest", "select-k", "cocluster", "train"),
    "evaluate": ("ingest", "select-k", "cocluster", "restore", "evaluate"),
    "benchmark": ("ingest", "select-k", "benchmark", "report"),
    "pipeline": ("ingest", "select-k", "cocluster", "train", "evaluate", "report"),
}


class PipelineEngine:
    """Executa estágios registrados por nome sobre um estado compartilhado."""

    def __init__(
        self,
        cfg: RunConfig,
        writer: ArtifactWriter,
        checkpoint: str | Path | None = None,
        variants: Sequence[BaseVariant | str] | None = None,
        modes: Sequence[str] | None = None,
        benchmark_seeds: Sequence[int] | None = None,
    ):
        self.cfg = cfg
        self.writer = writer
        self.checkpoint = Path(checkpoint) if checkpoint is not None else None
        self.variants = list(variants or [cfg.model.variant])
        self.modes = list(modes or DEFAULT_MODES)
        self.benchmark_seeds = list(benchmark_seeds or [cfg.seed])

        self.stages = {
            "ingest": self._ingest,
            "select-k": self._select_k,
            "cocluster": self._cocluster,
            "train": self._train,
            "restore": self._restore,
            "evaluate": self._evaluate,
            "benchmark": self._benchmark,
            "report": self._report,
        }

        self.ds: InteractionDataset | None = None
        self.fit_ds: InteractionDataset | None = None
        self.k: int | None = None if cfg.cluster.k == "auto" else cfg.cluster.k
        self.curve: VarianceRatioCurve | None = None
        self.coclustering: CoClustering | None = None
        self.model: CCWModel | None = None
        self.train_result: TrainResult | None = None
        self.report: EvalReport | None = None
        self.benchmark_result: BenchmarkResult | None = None
        self.planned: tuple[str, ...] = ()

        manifest = writer.manifest
        manifest.master_seed = cfg.seed
        manifest.seeds = stage_seeds(cfg.seed)
        manifest.config_hash = cfg.config_hash()
        manifest.k = self.k

    def run(self, stages: Sequence[str]) -> "PipelineEngine":
        """Roda os estágios em ordem; falhas viram StageError e manifest `failed:<estágio>`."""
        unknown = [s for s in stages if s not in self.stages]
        if unknown:
            raise ValueError(f"Estágios desconhecidos: {unknown}")

        self.planned = tuple(stages)
        self.writer.write_json("config.json", self.cfg.model_dump(mode="json", by_alias=True))
        for stage in stages:
            start_time = time.time()
            try:
                self.stages[stage]()
            except Exception as e:
                logger.error(f"Estágio '{stage}' falhou: {e}")
                self.writer.finalize(f"failed:{stage}")
                raise StageError(stage, e) from e
            logger.info(f"Estágio '{stage}' concluído | {(time.time() - start_time) * 1000:.2f}ms")

        self.writer.manifest.k = self.k
        self.writer.finalize("completed")
        return self

    def _ingest(self):
        train, test = self.cfg.require_data()
        self.ds = load_dataset(train, test, self.cfg.data.name)
        self.writer.write_json("dataset_stats.json", dataset_statistics(self.ds))

        if self.cfg.train.validation == "holdout":
            seed = derive_seed(self.cfg.seed, "holdout")
            self.fit_ds = holdout_split(self.ds, self.cfg.train.holdout_fraction, seed)
            logger.info(f"Validação em holdout: {self.fit_ds.num_test} pares separados do treino")
        else:
            self.fit_ds = self.ds

    def _select_k(self):
        if self.cfg.cluster.k != "auto":
            logger.debug(f"k fixo = {self.k}; seleção automática ignorada")
            return
        if self.cfg.cluster.file is not None and {"cocluster", "benchmark"} & set(self.planned):
            logger.debug(f"k vem do arquivo de clusters {self.cfg.cluster.file}; seleção automática ignorada")
            return

        cluster = self.cfg.cluster
        seeds = [derive_seed(self.cfg.seed, "vr", s) for s in range(cluster.vr_seeds)]
        self.curve = vr_curve(self.fit_ds, (cluster.k_min, cluster.k_max), seeds)
        self.k = select_k(self.curve, cluster.epsilon)
        self.writer.manifest.k = self.k
        self.writer.write_frame("vr_curve.csv", self.curve.to_frame())

    def _read_clusters(self, matrix) -> CoClustering:
        clustering = read_assignments(self.cfg.cluster.file)
        if (clustering.num_users, clustering.num_items) != matrix.shape:
            raise DataError(
                f"Arquivo de clusters com {clustering.num_users}x{clustering.num_items} nós "
                f"para dataset {matrix.shape[0]}x{matrix.shape[1]}"
            )
        self.k = clustering.k
        return clustering

    def _cocluster(self):
        matrix = self.fit_ds.train_matrix
        if self.cfg.cluster.file is not None:
            clustering = self._read_clusters(matrix)
        else:
            if self.k is None:
                raise ValueError("k indefinido: rode select-k ou informe k")
            clustering = spectral_cocluster(matrix, self.k, derive_seed(self.cfg.seed, "cluster"))

        self.coclustering = build_subgraphs(matrix, clustering)
        self.writer.manifest.k = self.k
        self.writer.register(write_assignments(self.coclustering, self.writer.path(CLUSTERS_FILE)))

        sizes = self.coclustering.cluster_sizes()
        empty = [j for j, (users, items) in enumerate(sizes) if users == 0 or items == 0]
        for j in empty:
            self.writer.manifest.warnings.append(f"cluster {j} com lado vazio: {sizes[j]}")
        self.writer.write_json("cluster_summary.json", {
            "k": self.k,
            "sizes": [{"users": u, "items": i} for u, i in sizes],
            "block_density": block_density_stat(matrix, self.coclustering),
            "cross_edges": int(len(self.coclustering.cross_edges)),
            "isolated_users": int(len(clustering.isolated_users)) if clustering.isolated_users is not None else 0,
            "isolated_items": int(len(clustering.isolated_items)) if clustering.isolated_items is not None else 0,
            "empty_clusters": empty,
        })

    def _train(self):
        model_cfg = self.cfg.model
        self.model = assemble_ccw(
            self.fit_ds,
            self.coclustering,
            model_cfg.variant,
            model_cfg.dim,
            derive_seed(self.cfg.seed, "model"),
            model_cfg.mode,
            model_cfg.local_dim,
            model_cfg.num_layers,
        )
        train_cfg = self.cfg.train.model_copy(update={"seed": derive_seed(self.cfg.seed, "train")})
        self.train_result = train_ccw(
            self.model, self.fit_ds, train_cfg, dump_dir=self.writer.output_dir
        )
        self.writer.register(self.train_result.write_history(self.writer.path("epoch_log.csv")))
        self.writer.register(save_ccw(self.model, self.writer.path(CHECKPOINT_FILE)))

    def _restore(self):
        if self.checkpoint is None:
            raise ValueError("Checkpoint não informado (--checkpoint)")
        self.model = load_ccw(self.checkpoint, self.coclustering, self.fit_ds)

    def _evaluate(self):
        k = self.cfg.train.top_k
        self.report = evaluate(self.model, self.ds, k, seed=self.cfg.seed, config_hash=self.cfg.config_hash())
        self.writer.register(self.report.write_json(self.writer.path("eval_report.json")))
        self.writer.write_frame("metrics.csv", pd.DataFrame([{
            "dataset": self.report.dataset,
            "mode": self.report.mode,
            "clusters": self.report.clusters,
            "users": self.report.num_users,
            **self.report.metric_row(),
        }]))
        self.writer.manifest.metrics = self.report.metric_row()

    def _benchmark(self):
        clustering = None
        if self.cfg.cluster.file is not None:
            clustering = self._read_clusters(self.ds.train_matrix)
        if self.k is None:
            raise ValueError("k indefinido para o benchmark")
        model_cfg = self.cfg.model
        self.benchmark_result = benchmark(
            self.ds,
            self.variants,
            self.modes,
            k=self.cfg.train.top_k,
            clusters=self.k,
            seeds=self.benchmark_seeds,
            train_cfg=self.cfg.train,
            dim=model_cfg.dim,
            num_layers=model_cfg.num_layers,
            coclustering=clustering,
        )
        self.writer.write_frame("benchmark_runs.csv", self.benchmark_result.runs)
        self.writer.write_frame("benchmark_summary.csv", self.benchmark_result.summary)
        self.writer.write_frame("benchmark_bars.csv", self.benchmark_result.bars)

    def _report(self):
        if self.curve is not None:
            self.writer.write_text("vr_curve.svg", render_vr_curve(self.curve, self.k))
        if self.train_result is not None and not self.train_result.history.empty:
            self.writer.write_text("training_loss.svg", render_training_curve(self.train_result.history))
        if self.coclustering is not None:
            self.writer.write_text(
                "block_matrix.svg", render_block_matrix(self.fit_ds.train_matrix, self.coclustering)
            )
        if self.benchmark_result is not None:
            bars = self.benchmark_result.bars
            for metric in bars["metric"].unique():
                name = metric.replace("@", "_at_")
                self.writer.write_text(f"benchmark_{name}.svg", render_benchmark_bars(bars, metric))


def report_from_outputs(run_dir: str | Path) -> list[Path]:
    """
    Gera SVGs a partir dos CSVs de uma execução existente e atualiza o manifest.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"Diretório de execução não encontrado: {run_dir}")
    previous = read_manifest(run_dir) if (run_dir / "manifest.json").exists() else None

    writer = ArtifactWriter(run_dir, overwrite=True, command=previous.command if previous else "report")
    if previous is not None:
        writer.manifest = previous.model_copy(deep=True)
        for entry in previous.files:
            if (run_dir / entry.path).exists():
                writer.register(run_dir / entry.path)

    written = []
    if (run_dir / "vr_curve.csv").exists():
        curve = VarianceRatioCurve.from_frame(pd.read_csv(run_dir / "vr_curve.csv"))
        written.append(writer.write_text("vr_curve.svg", render_vr_curve(curve, writer.manifest.k)))
    if (run_dir / "epoch_log.csv").exists():
        history = pd.read_csv(run_dir / "epoch_log.csv")
        if not history.empty:
            written.append(writer.write_text("training_loss.svg", render_training_curve(history)))
    if (run_dir / "benchmark_bars.csv").exists():
        bars = pd.read_csv(run_dir / "benchmark_bars.csv")
        for metric in bars["metric"].unique():
            name = metric.replace("@", "_at_")
            written.append(writer.write_text(f"benchmark_{name}.svg", render_benchmark_bars(bars, metric)))

    if not written:
        logger.warning(f"Nenhum CSV reconhecido em {run_dir}; nenhum gráfico gerado")
    writer.finalize(previous.status if previous else "completed")
    return written
