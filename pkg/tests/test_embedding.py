"""Testes para os modelos de embeddings."""
import numpy as np
import pytest
import torch

from app.models.embedding import (
    BaseVariant,
    EmbeddingModel,
    embed,
    init_model,
    load_model,
    normalized_adjacency,
    save_model,
    score,
)


class TestInitModel:
    """Testes para inicialização."""

    def test_deterministic_by_seed(self):
        a = init_model(10, 12, 8, seed=3)
        b = init_model(10, 12, 8, seed=3)
        c = init_model(10, 12, 8, seed=4)

        assert torch.equal(a.user_embeddings, b.user_embeddings)
        assert not torch.equal(a.user_embeddings, c.user_embeddings)

    def test_scale(self):
        model = init_model(500, 500, 16, seed=0)
        assert model.user_embeddings.std().item() == pytest.approx(0.01, rel=0.1)

    def test_invalid_dim(self):
        with pytest.raises(ValueError):
            EmbeddingModel(2, 2, 0)

    def test_mf_has_no_propagation(self):
        model = init_model(3, 3, 4, variant="mf", edges=np.array([[0, 0]]))
        assert model.num_layers == 0
        users, items = model.propagate()
        assert users is model.user_embeddings


class TestPropagation:
    """Testes para a variante propagada."""

    def test_single_edge_one_layer(self):
        model = init_model(1, 1, 3, BaseVariant.PROPAGATED, edges=np.array([[0, 0]]), num_layers=1)
        users, items = model.propagate()
        expected = (model.user_embeddings + model.item_embeddings) / 2

        assert torch.allclose(users, expected)
        assert torch.allclose(items, expected)

    def test_no_edges_shrinks_ego(self):
        model = init_model(2, 2, 3, BaseVariant.PROPAGATED, edges=np.empty((0, 2)), num_layers=3)
        users, _ = model.propagate()
        assert torch.allclose(users, model.user_embeddings / 4)

    def test_normalized_adjacency(self):
        adjacency = normalized_adjacency(2, 1, np.array([[0, 0], [1, 0]])).to_dense()
        # grau: u0=1, u1=1, i0=2
        assert adjacency[0, 2].item() == pytest.approx(1 / np.sqrt(2))
        assert torch.allclose(adjacency, adjacency.T)
        assert adjacency[0, 1].item() == 0.0

    def test_edge_scope(self):
        model = init_model(3, 3, 2, BaseVariant.PROPAGATED, edges=np.array([[0, 0], [1, 1]]))
        assert model.num_edges == 2

    def test_constant_embeddings_preserved_on_regular_graph(self):
        # ciclo bipartido 2-regular: u -> itens u e (u+1) % 3
        edges = np.array([[u, i] for u in range(3) for i in (u, (u + 1) % 3)])
        model = EmbeddingModel(3, 3, 4, BaseVariant.PROPAGATED, edges=edges, num_layers=3, dtype=torch.float64)
        constant = torch.tensor([0.3, -1.0, 2.0, 0.5], dtype=torch.float64)
        with torch.no_grad():
            model.user_embeddings.copy_(constant.expand(3, 4))
            model.item_embeddings.copy_(constant.expand(3, 4))

        users, items = model.propagate()
        assert torch.allclose(users, constant.expand(3, 4), atol=1e-12)
        assert torch.allclose(items, constant.expand(3, 4), atol=1e-12)


class TestScore:
    """Testes para embed e score."""

    def test_score_is_inner_product(self):
        model = init_model(4, 5, 6, seed=1)
        expected = float(model.user_embeddings[2] @ model.item_embeddings[3])
        assert score(model, 2, 3) == pytest.approx(expected)

    def test_score_pairs_matches_score(self):
        model = EmbeddingModel(
            4, 5, 6, BaseVariant.PROPAGATED, edges=np.array([[0, 1], [2, 3]]), dtype=torch.float64
        )
        values = model.score_pairs(torch.tensor([0, 2]), torch.tensor([1, 4]))
        assert values[0].item() == pytest.approx(score(model, 0, 1), abs=1e-12)
        assert values[1].item() == pytest.approx(score(model, 2, 4), abs=1e-12)

    def test_score_is_bilinear(self):
        model = EmbeddingModel(2, 3, 5, seed=2, dtype=torch.float64)
        a, b = 2.5, -0.75
        with torch.no_grad():
            model.item_embeddings[2] = a * model.item_embeddings[0] + b * model.item_embeddings[1]
        combined = a * score(model, 1, 0) + b * score(model, 1, 1)
        assert score(model, 1, 2) == pytest.approx(combined, abs=1e-12)

        with torch.no_grad():
            model.user_embeddings[0] = a * model.user_embeddings[1]
        assert score(model, 0, 1) == pytest.approx(a * score(model, 1, 1), abs=1e-12)

    @pytest.mark.parametrize("node_type, index", [("user", 4), ("item", -1), ("group", 0)])
    def test_embed_invalid(self, node_type, index):
        model = init_model(4, 5, 2)
        with pytest.raises(ValueError):
            embed(model, node_type, index)

    def test_regularization_counts_touched_rows(self):
        model = init_model(2, 3, 2)
        with torch.no_grad():
            model.user_embeddings.fill_(1.0)
            model.item_embeddings.fill_(2.0)
        value = model.regularization(torch.tensor([0]), torch.tensor([1]), torch.tensor([2]))
        assert value.item() == pytest.approx(2 * 1.0 + 2 * 4.0 + 2 * 4.0)


class TestCheckpoint:
    """Testes para save_model/load_model."""

    def test_save_load(self, tmp_path):
        model = init_model(4, 5, 3, BaseVariant.PROPAGATED, seed=9, edges=np.array([[0, 1], [3, 4]]))
        loaded = load_model(save_model(model, tmp_path / "model.npz"))

        assert loaded.variant is BaseVariant.PROPAGATED
        assert loaded.num_layers == model.num_layers
        assert torch.equal(loaded.user_embeddings, model.user_embeddings)
        assert score(loaded, 3, 4) == pytest.approx(score(model, 3, 4))
