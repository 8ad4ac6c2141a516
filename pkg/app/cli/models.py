"""Modelos Pydantic da configuração de execução (arquivo TOML + flags)."""
import hashlib
import json
import tomllib
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.core.config import settings
from app.core.exceptions import ConfigError
from app.models.embedding import BaseVariant
from app.models.wrapper import ScoringMode
from app.training.trainer import TrainConfig


class DataSection(BaseModel):
    """Arquivos do dataset."""

    model_config = ConfigDict(extra="forbid")

    train: Path | None = Field(None, description="Arquivo de treino (listas de adjacência)")
    test: Path | None = Field(None, description="Arquivo de teste")
    name: str | None = None


class ClusterSection(BaseModel):
    """Co-clustering e escolha de k."""

    model_config = ConfigDict(extra="forbid")

    k: int | Literal["auto"] = 3
    k_min: int | None = Field(None, ge=2)
    k_max: int | None = Field(None, ge=2)
    epsilon: float = Field(settings.vr_epsilon, gt=0)
    vr_seeds: int = Field(settings.vr_seed_count, ge=1, description="Seeds por k na curva de VR")
    file: Path | None = Field(None, description="Arquivo de clusters pré-calculado")

    @model_validator(mode="after")
    def check_k(self) -> "ClusterSection":
        if self.k == "auto":
            if self.k_min is None or self.k_max is None:
                raise ValueError("k='auto' exige k_min e k_max")
            if self.k_max - self.k_min < 2:
                raise ValueError("Intervalo de k precisa cobrir ao menos 3 valores")
        elif self.k < 2:
            raise ValueError(f"k precisa ser >= 2, recebido {self.k}")
        return self


class ModelSection(BaseModel):
    """Modelo base e regra de score."""

    model_config = ConfigDict(extra="forbid")

    variant: BaseVariant = BaseVariant(settings.default_variant)
    dim: int = Field(settings.default_dim, ge=1)
    local_dim: int | None = Field(None, ge=1)
    num_layers: int = Field(settings.propagation_layers, ge=0)
    mode: ScoringMode = ScoringMode.WITH_LIC


class OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dir: Path = Path("runs/latest")
    overwrite: bool = False


class RunConfig(BaseModel):
    """Configuração completa de uma execução."""

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    data: DataSection = Field(default_factory=DataSection)
    cluster: ClusterSection = Field(default_factory=ClusterSection)
    model: ModelSection = Field(default_factory=ModelSection)
    train: TrainConfig = Field(default_factory=TrainConfig)
    output: OutputSection = Field(default_factory=OutputSection)

    def config_hash(self) -> str:
        """SHA-256 do JSON canônico (chaves ordenadas) da configuração validada."""
        payload = json.dumps(self.model_dump(mode="json", by_alias=True), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def require_data(self) -> tuple[Path, Path]:
        if self.data.train is None or self.data.test is None:
            raise ConfigError("Caminhos de treino e teste são obrigatórios ([data] ou --train/--test)")
        return self.data.train, self.data.test


def _merge(base: dict, overrides: dict[str, Any]) -> dict:
    merged = json.loads(json.dumps(base, default=str))
    for dotted, value in overrides.items():
        if value is None:
            continue
        target = merged
        *parents, leaf = dotted.split(".")
        for key in parents:
            target = target.setdefault(key, {})
        target[leaf] = value
    return merged


def build_run_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """
    Lê o TOML (opcional) e aplica overrides com chaves pontuadas
    (`"train.epochs"`, `"cluster.k"`). Overrides None são ignorados.
    """
    raw: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Arquivo de configuração não encontrado: {path}")
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: TOML inválido ({e})") from e

    try:
        return RunConfig.model_validate(_merge(raw, overrides or {}))
    except ValidationError as e:
        raise ConfigError(f"Configuração inválida: {e}") from e
