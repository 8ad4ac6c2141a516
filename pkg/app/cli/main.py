"""Linha de comando `ccw`: um sub-comando por estágio e o pipeline completo."""
import argparse
import json
import sys
from collections.abc import Sequence

from loguru import logger

from app.cli.models import RunConfig, build_run_config
from app.core.config import settings
from app.core.exceptions import StageError, exit_code_for
from app.core.logging import setup_logging
from app.data.synth import planted_blocks, save_planted
from app.pipeline.engine import COMMAND_STAGES, PipelineEngine, report_from_outputs
from app.reporting.artifacts import ArtifactWriter

# flag -> chave pontuada do RunConfig
OVERRIDES = {
    "train_path": "data.train",
    "test_path": "data.test",
    "name": "data.name",
    "seed": "seed",
    "k": "cluster.k",
    "k_min": "cluster.k_min",
    "k_max": "cluster.k_max",
    "epsilon": "cluster.epsilon",
    "vr_seeds": "cluster.vr_seeds",
    "clusters": "cluster.file",
    "variant": "model.variant",
    "dim": "model.dim",
    "local_dim": "model.local_dim",
    "layers": "model.num_layers",
    "mode": "model.mode",
    "epochs": "train.epochs",
    "batch_size": "train.batch_size",
    "lr": "train.learning_rate",
    "reg_lambda": "train.reg_lambda",
    "eval_every": "train.eval_every",
    "patience": "train.early_stop_patience",
    "top_k": "train.top_k",
    "full_regularization": "train.full_regularization",
    "validation": "train.validation",
    "holdout_fraction": "train.holdout_fraction",
    "num_samplers": "train.num_samplers",
    "output": "output.dir",
    "overwrite": "output.overwrite",
}


def _k_value(raw: str) -> int | str:
    return raw if raw == "auto" else int(raw)


def _int_list(raw: str) -> list[int]:
    return [int(part) for part in raw.split(",") if part.strip()]


def _str_list(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Arquivo TOML de configuração")
    parser.add_argument("--output", help="Diretório de saída")
    parser.add_argument("--overwrite", action="store_true", default=None, help="Permite diretório não vazio")
    parser.add_argument("--seed", type=int, help="Seed mestre")

    data = parser.add_argument_group("dados")
    data.add_argument("--train", dest="train_path", help="Arquivo de treino")
    data.add_argument("--test", dest="test_path", help="Arquivo de teste")
    data.add_argument("--name", help="Nome do dataset")

    cluster = parser.add_argument_group("co-clustering")
    cluster.add_argument("--k", type=_k_value, help="Número de clusters ou 'auto'")
    cluster.add_argument("--k-min", type=int)
    cluster.add_argument("--k-max", type=int)
    cluster.add_argument("--epsilon", type=float, help="Limiar de ganho relativo de VR")
    cluster.add_argument("--vr-seeds", type=int, help="Seeds por k na curva de VR")
    cluster.add_argument("--clusters", help="Arquivo de clusters existente")

    model = parser.add_argument_group("modelo")
    model.add_argument("--variant", choices=["mf", "propagated"])
    model.add_argument("--dim", type=int)
    model.add_argument("--local-dim", type=int)
    model.add_argument("--layers", type=int, help="Camadas de propagação")
    model.add_argument("--mode", choices=["with-lic", "equal-weight", "base-only"])

    train = parser.add_argument_group("treino")
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch-size", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--lambda", dest="reg_lambda", type=float)
    train.add_argument("--eval-every", type=int)
    train.add_argument("--patience", type=int)
    train.add_argument("--top-k", type=int)
    train.add_argument("--full-regularization", action="store_true", default=None)
    train.add_argument("--validation", choices=["test", "holdout"])
    train.add_argument("--holdout-fraction", type=float)
    train.add_argument("--num-samplers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccw", description=settings.app_name)
    parser.add_argument("--debug", action="store_true", help="Logs em nível DEBUG")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for command, help_text in (
        ("ingest", "Valida o dataset e grava estatísticas"),
        ("select-k", "Curva de variance ratio e escolha de k"),
        ("cocluster", "Co-clustering espectral e arquivo de clusters"),
        ("train", "Treina o CCW e grava o checkpoint"),
        ("evaluate", "Avalia um checkpoint no split de teste"),
        ("benchmark", "Compara base, pesos iguais e LIC sobre várias seeds"),
        ("pipeline", "Executa todos os estágios"),
    ):
        sub = subparsers.add_parser(command, help=help_text)
        _add_run_options(sub)
        if command == "evaluate":
            sub.add_argument("--checkpoint", required=True, help="Checkpoint .npz do CCW")
        if command == "benchmark":
            sub.add_argument("--variants", type=_str_list, help="Variantes base (ex.: mf,propagated)")
            sub.add_argument("--modes", type=_str_list, help="Modos (ex.: base-only,with-lic)")
            sub.add_argument("--seeds", type=_int_list, help="Seeds do benchmark (ex.: 0,1,2)")

    report = subparsers.add_parser("report", help="Gera SVGs a partir dos CSVs de uma execução")
    report.add_argument("run_dir", help="Diretório de uma execução")

    synth = subparsers.add_parser("synth", help="Gera dataset sintético com blocos plantados")
    synth.add_argument("--output", required=True)
    synth.add_argument("--overwrite", action="store_true")
    synth.add_argument("--blocks", type=int, default=3)
    synth.add_argument("--users-per-block", type=int, default=50)
    synth.add_argument("--items-per-block", type=int, default=50)
    synth.add_argument("--in-density", type=float, default=0.2)
    synth.add_argument("--noise", type=float, default=0.05, help="Fração de arestas entre blocos")
    synth.add_argument("--test-fraction", type=float, default=0.2)
    synth.add_argument("--seed", type=int, default=0)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = {key: getattr(args, flag, None) for flag, key in OVERRIDES.items()}
    return build_run_config(args.config, overrides)


def cmd_synth(args: argparse.Namespace) -> dict:
    writer = ArtifactWriter(args.output, overwrite=args.overwrite, command="synth")
    planted = planted_blocks(
        num_blocks=args.blocks,
        users_per_block=args.users_per_block,
        items_per_block=args.items_per_block,
        in_density=args.in_density,
        noise_fraction=args.noise,
        test_fraction=args.test_fraction,
        seed=args.seed,
    )
    for path in save_planted(planted, writer.output_dir).values():
        writer.register(path)
    writer.manifest.master_seed = args.seed
    writer.manifest.k = args.blocks
    manifest = writer.finalize("completed")
    return {"status": "completed", "output": str(writer.output_dir), "manifest": str(manifest)}


def cmd_report(args: argparse.Namespace) -> dict:
    written = report_from_outputs(args.run_dir)
    return {"status": "completed", "charts": [str(p) for p in written]}


def cmd_pipeline(args: argparse.Namespace) -> dict:
    """Roda os estágios do sub-comando e devolve um resumo para stdout."""
    cfg = resolve_config(args)
    writer = ArtifactWriter(cfg.output.dir, overwrite=cfg.output.overwrite, command=args.command)
    engine = PipelineEngine(
        cfg,
        writer,
        checkpoint=getattr(args, "checkpoint", None),
        variants=getattr(args, "variants", None),
        modes=getattr(args, "modes", None),
        benchmark_seeds=getattr(args, "seeds", None),
    )
    engine.run(COMMAND_STAGES[args.command])

    summary = {
        "status": writer.manifest.status,
        "output": str(writer.output_dir),
        "k": engine.k,
        "config_hash": writer.manifest.config_hash,
    }
    if engine.report is not None:
        summary["metrics"] = engine.report.metric_row()
    return summary


COMMANDS = {
    "synth": cmd_synth,
    "report": cmd_report,
    **{command: cmd_pipeline for command in COMMAND_STAGES},
}


def run(argv: Sequence[str] | None = None) -> int:
    """Executa a CLI e devolve o código de saída (0, 2 config, 3 dados, 4 numérico)."""
    args = build_parser().parse_args(argv)
    setup_logging(debug=args.debug or settings.debug, log_dir=settings.log_dir)
    logger.info(f"{settings.app_name} v{settings.app_version}: comando '{args.command}'")

    try:
        summary = COMMANDS[args.command](args)
    except StageError as e:
        logger.error(f"Falha no estágio '{e.stage}': {e.cause}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Falha em '{args.command}': {e}")
        return exit_code_for(e)

    print(json.dumps(summary, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(run())
