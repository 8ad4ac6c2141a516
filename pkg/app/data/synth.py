"""Geração de datasets sintéticos com blocos plantados (co-clusters conhecidos)."""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from loguru import logger

from app.data.corpus import InteractionDataset, from_edges, write_dataset


@dataclass(frozen=True, eq=False)
class PlantedDataset:
    """Dataset sintético com os rótulos verdadeiros de bloco."""

    dataset: InteractionDataset
    user_blocks: np.ndarray
    item_blocks: np.ndarray
    noise_edges: int


def generate_block_pattern(
    rng: np.random.Generator,
    user_blocks: np.ndarray,
    item_blocks: np.ndarray,
    in_density: float,
) -> np.ndarray:
    """Gera as arestas dentro dos blocos com probabilidade `in_density`."""
    edges = []
    for block in np.unique(user_blocks):
        users = np.flatnonzero(user_blocks == block)
        items = np.flatnonzero(item_blocks == block)
        mask = rng.random((len(users), len(items))) < in_density

        # Garante grau >= 1 para todo usuário e item do bloco
        for row in np.flatnonzero(~mask.any(axis=1)):
            mask[row, rng.integers(len(items))] = True
        for col in np.flatnonzero(~mask.any(axis=0)):
            mask[rng.integers(len(users)), col] = True

        rows, cols = np.nonzero(mask)
        edges.append(np.column_stack([users[rows], items[cols]]))
    return np.concatenate(edges)


def inject_cross_noise(
    rng: np.random.Generator,
    edges: np.ndarray,
    user_blocks: np.ndarray,
    item_blocks: np.ndarray,
    noise_fraction: float,
) -> tuple[np.ndarray, int]:
    """Injeta arestas entre blocos até formarem `noise_fraction` do total."""
    if noise_fraction <= 0:
        return edges, 0

    target = int(round(len(edges) * noise_fraction / (1.0 - noise_fraction)))
    num_items = len(item_blocks)
    existing = set((edges[:, 0] * num_items + edges[:, 1]).tolist())
    noise = []
    attempts = 0
    while len(noise) < target and attempts < 50 * target + 100:
        attempts += 1
        u = int(rng.integers(len(user_blocks)))
        i = int(rng.integers(num_items))
        key = u * num_items + i
        if user_blocks[u] == item_blocks[i] or key in existing:
            continue
        existing.add(key)
        noise.append((u, i))

    if len(noise) < target:
        logger.warning(f"Ruído entre blocos incompleto: {len(noise)}/{target} arestas")
    if not noise:
        return edges, 0
    return np.concatenate([edges, np.asarray(noise, dtype=np.int64)]), len(noise)


def split_per_user(
    rng: np.random.Generator,
    edges: np.ndarray,
    num_users: int,
    test_fraction: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Separa uma fração dos itens de cada usuário para teste (>= 1 fica no treino)."""
    train, test = [], []
    for u in range(num_users):
        items = edges[edges[:, 0] == u, 1]
        items = items[rng.permutation(len(items))]
        n_test = min(int(round(len(items) * test_fraction)), len(items) - 1)
        test.extend((u, i) for i in items[:n_test])
        train.extend((u, i) for i in items[n_test:])
    return (
        np.asarray(train, dtype=np.int64).reshape(-1, 2),
        np.asarray(test, dtype=np.int64).reshape(-1, 2),
    )


def planted_blocks(
    num_blocks: int = 3,
    users_per_block: int = 50,
    items_per_block: int = 50,
    in_density: float = 0.2,
    noise_fraction: float = 0.05,
    test_fraction: float = 0.2,
    seed: int = 0,
) -> PlantedDataset:
    """
    Dataset com `num_blocks` co-clusters plantados.

    Args:
        num_blocks: Número de blocos (co-clusters verdadeiros)
        users_per_block: Usuários por bloco
        items_per_block: Itens por bloco
        in_density: Probabilidade de interação dentro do bloco
        noise_fraction: Fração das arestas que cruzam blocos
        test_fraction: Fração por usuário reservada para teste
        seed: Seed do gerador

    Returns:
        PlantedDataset com dataset e rótulos verdadeiros
    """
    if num_blocks < 1 or users_per_block < 1 or items_per_block < 1:
        raise ValueError("Blocos, usuários e itens por bloco precisam ser >= 1")
    if not 0.0 <= noise_fraction < 1.0:
        raise ValueError(f"noise_fraction deve estar em [0, 1), recebido {noise_fraction}")
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError(f"test_fraction deve estar em [0, 1), recebido {test_fraction}")

    rng = np.random.default_rng(seed)
    user_blocks = np.repeat(np.arange(num_blocks), users_per_block)
    item_blocks = np.repeat(np.arange(num_blocks), items_per_block)

    edges = generate_block_pattern(rng, user_blocks, item_blocks, in_density)
    edges, noise_count = inject_cross_noise(rng, edges, user_blocks, item_blocks, noise_fraction)
    train, test = split_per_user(rng, edges, len(user_blocks), test_fraction)

    ds = from_edges(
        len(user_blocks), len(item_blocks), train, test,
        name=f"planted-{num_blocks}x{users_per_block}",
    )
    logger.info(
        f"Dataset sintético: {num_blocks} blocos, {len(edges)} arestas "
        f"({noise_count} de ruído), seed={seed}"
    )
    return PlantedDataset(ds, user_blocks, item_blocks, noise_count)


def save_planted(planted: PlantedDataset, output_dir: str | Path) -> dict[str, Path]:
    """Salva train.txt, test.txt e ground_truth.txt em `output_dir`."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "train": output_dir / "train.txt",
        "test": output_dir / "test.txt",
        "ground_truth": output_dir / "ground_truth.txt",
    }
    write_dataset(planted.dataset, paths["train"], paths["test"])

    lines = [f"user {u} {b}" for u, b in enumerate(planted.user_blocks)]
    lines += [f"item {i} {b}" for i, b in enumerate(planted.item_blocks)]
    paths["ground_truth"].write_text("\n".join(lines) + "\n", encoding="utf-8")

    logger.info(f"Arquivos sintéticos salvos em: {output_dir}/")
    return paths
