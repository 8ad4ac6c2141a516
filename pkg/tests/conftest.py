"""Configuração para testes."""
import pytest
import torch
from loguru import logger

from app.clustering.base import CoClustering, build_subgraphs
from app.core.config import settings
from app.data.corpus import from_edges
from app.data.synth import planted_blocks, save_planted

# Dois blocos: usuários 0-2 x itens 0-3 e usuários 3-5 x itens 4-7, mais uma aresta cruzada (0, 4)
TOY_TRAIN = [
    (0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3),
    (3, 4), (3, 5), (4, 5), (4, 6), (5, 6), (5, 7),
    (0, 4),
]
TOY_TEST = [(0, 2), (1, 3), (3, 6), (4, 7)]


@pytest.fixture(autouse=True)
def isolated_logs(tmp_path, monkeypatch):
    """Logs de arquivo da CLI vão para um diretório temporário."""
    monkeypatch.setattr(settings, "log_dir", str(tmp_path / "logs"))


@pytest.fixture
def log_messages():
    """Mensagens emitidas pelo loguru durante o teste."""
    messages = []
    handler_id = logger.add(lambda message: messages.append(message.record["message"]), level="DEBUG")
    yield messages
    logger.remove(handler_id)


@pytest.fixture
def toy_dataset():
    return from_edges(6, 8, TOY_TRAIN, TOY_TEST, name="toy")


@pytest.fixture
def toy_clustering(toy_dataset):
    clustering = CoClustering(
        k=2,
        user_assignment=[0, 0, 0, 1, 1, 1],
        item_assignment=[0, 0, 0, 0, 1, 1, 1, 1],
        seed=0,
    )
    return build_subgraphs(toy_dataset.train_matrix, clustering)


@pytest.fixture
def planted():
    """3 blocos de 40x40 sem ruído."""
    return planted_blocks(
        num_blocks=3, users_per_block=40, items_per_block=40,
        in_density=0.3, noise_fraction=0.0, test_fraction=0.2, seed=0,
    )


@pytest.fixture
def planted_files(planted, tmp_path):
    """Arquivos train/test/ground_truth do dataset plantado."""
    return save_planted(planted, tmp_path / "planted")


@pytest.fixture
def float64():
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield torch.float64
    torch.set_default_dtype(previous)
