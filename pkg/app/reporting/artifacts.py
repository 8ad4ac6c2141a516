"""Diretório de saída de uma execução e manifest com hashes de todos os arquivos."""
import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field

from app.core.config import settings
from app.core.exceptions import ConfigError

MANIFEST_NAME = "manifest.json"


class FileEntry(BaseModel):
    path: str = Field(..., description="Caminho relativo ao diretório de saída")
    sha256: str
    size: int


class RunManifest(BaseModel):
    """Proveniência completa de uma execução."""

    version: str = settings.app_version
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    status: str = "running"
    command: str = "pipeline"
    master_seed: int | None = None
    seeds: dict[str, int] = Field(default_factory=dict)
    k: int | None = None
    config_hash: str | None = None
    metrics: dict[str, float] = Field(default_factory=dict)
    warnings: list[str] = Field(default_factory=list)
    files: list[FileEntry] = Field(default_factory=list)


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class ArtifactWriter:
    """
    Escreve arquivos no diretório de saída e registra cada um no manifest.

    O diretório precisa estar vazio (ou não existir), a menos que
    `overwrite=True`.
    """

    def __init__(self, output_dir: str | Path, overwrite: bool = False, command: str = "pipeline"):
        self.output_dir = Path(output_dir)
        if self.output_dir.exists():
            if not self.output_dir.is_dir():
                raise ConfigError(f"Saída {self.output_dir} não é um diretório")
            if any(self.output_dir.iterdir()) and not overwrite:
                raise ConfigError(f"Diretório de saída {self.output_dir} não está vazio (use --overwrite)")
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(command=command)
        self._written: list[str] = []

    def path(self, name: str) -> Path:
        path = self.output_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def register(self, path: str | Path) -> Path:
        """Registra um arquivo já escrito no diretório de saída."""
        relative = Path(path).resolve().relative_to(self.output_dir.resolve()).as_posix()
        if relative not in self._written:
            self._written.append(relative)
        return Path(path)

    def write_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        path.write_text(text, encoding="utf-8")
        return self.register(path)

    def write_json(self, name: str, payload: dict) -> Path:
        return self.write_text(name, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.path(name)
        frame.to_csv(path, index=False)
        return self.register(path)

    def finalize(self, status: str = "completed") -> Path:
        """Calcula os hashes e grava `manifest.json`."""
        self.manifest.status = status
        entries = []
        for relative in self._written:
            path = self.output_dir / relative
            if path.exists():
                entries.append(FileEntry(path=relative, sha256=file_sha256(path), size=path.stat().st_size))
        self.manifest.files = entries

        path = self.output_dir / MANIFEST_NAME
        path.write_text(self.manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info(f"Manifest gravado ({status}): {len(entries)} arquivos em {self.output_dir}")
        return path


def read_manifest(path: str | Path) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
