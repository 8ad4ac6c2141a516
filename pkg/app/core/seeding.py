"""Derivação de seeds a partir de uma seed mestre."""
import zlib

import numpy as np

STAGES = ("cluster", "vr", "model", "train", "holdout")


def _key(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def derive_seed(master: int, *path: int | str) -> int:
    """
    Seed inteira derivada de `master` pelo caminho `path`.

    Mesmo (master, path) sempre gera a mesma seed; caminhos distintos
    geram fluxos independentes via SeedSequence.
    """
    sequence = np.random.SeedSequence(master, spawn_key=tuple(_key(p) for p in path))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def stage_seeds(master: int) -> dict[str, int]:
    """Seeds de todos os estágios do pipeline (registradas no manifest)."""
    return {stage: derive_seed(master, stage) for stage in STAGES}
