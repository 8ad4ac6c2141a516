"""Testes para métricas top-K, avaliação e benchmark."""
import math

import numpy as np
import pandas as pd
import pytest
import torch
from pydantic import ValidationError

from app.data.corpus import from_edges
from app.data.synth import planted_blocks
from app.evaluation.benchmark import benchmark
from app.evaluation.evaluator import EvalReport, evaluate, per_user_metrics, top_k_items
from app.evaluation.metrics import batch_metrics, ndcg_at_k, recall_at_k
from app.models.embedding import EmbeddingModel
from app.reporting.charts import render_benchmark_bars
from app.training.trainer import TrainConfig, train_ccw


def index_order_model(num_users: int, num_items: int) -> EmbeddingModel:
    """Score = -índice do item: o ranking é a ordem crescente de índice."""
    model = EmbeddingModel(num_users, num_items, 1, dtype=torch.float64)
    with torch.no_grad():
        model.user_embeddings.fill_(1.0)
        model.item_embeddings.copy_(-torch.arange(num_items, dtype=torch.float64).unsqueeze(1))
    return model


class TestMetrics:
    """Testes para Recall@K e NDCG@K."""

    def test_recall_example(self):
        assert recall_at_k([1, 7, 3, 9, 2], [7, 2, 10, 11, 12], 5) == pytest.approx(0.4)

    def test_ndcg_second_position(self):
        assert ndcg_at_k([4, 8, 1], [8], 3) == pytest.approx(1 / math.log2(3))

    def test_perfect_ranking(self):
        assert ndcg_at_k([3, 1, 2], [1, 2, 3], 3) == pytest.approx(1.0)
        assert recall_at_k([3, 1, 2], [1, 2, 3], 3) == 1.0

    def test_idcg_capped_by_k(self):
        # 5 itens relevantes, K=2, ambos no topo
        assert ndcg_at_k([0, 1], [0, 1, 2, 3, 4], 2) == pytest.approx(1.0)

    def test_monotone_in_k(self):
        ranked = [5, 0, 6, 1, 7, 2]
        test = [0, 1, 2]
        recalls = [recall_at_k(ranked, test, k) for k in range(1, 7)]
        assert recalls == sorted(recalls)

    def test_empty_test_set(self):
        with pytest.raises(ValueError):
            recall_at_k([1, 2], [], 2)
        with pytest.raises(ValueError):
            ndcg_at_k([1, 2], [], 2)

    def test_batch_matches_scalar(self):
        hits = np.array([[False, True, False], [True, True, False]])
        recall, ndcg = batch_metrics(hits, np.array([1, 4]), 3)

        assert recall.tolist() == pytest.approx([1.0, 0.5])
        assert ndcg[0] == pytest.approx(ndcg_at_k([0, 1, 2], [1], 3))
        assert ndcg[1] == pytest.approx(ndcg_at_k([0, 1, 2], [0, 1, 8, 9], 3))


class TestTopK:
    """Testes para top_k_items."""

    def test_ties_go_to_lower_index(self):
        ranked = top_k_items(np.array([[0.5, 1.0, 1.0, 0.5]]), 3)[0]
        assert ranked.tolist() == [1, 2, 0]

    def test_masked_items_excluded(self):
        ranked = top_k_items(np.array([[-np.inf, 2.0, -np.inf, 1.0]]), 3)[0]
        assert ranked.tolist() == [1, 3]


class TestEvaluate:
    """Testes para evaluate e per_user_metrics."""

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        num_users, num_items = 20, 40
        cells = rng.permutation(num_users * num_items)
        train = np.stack(np.divmod(cells[:200], num_items), axis=1)
        test = np.stack(np.divmod(cells[200:260], num_items), axis=1)
        ds = from_edges(num_users, num_items, train, test)
        model = EmbeddingModel(num_users, num_items, 4, seed=3, dtype=torch.float64)

        frame = per_user_metrics(model, ds, k=5, batch_users=7)

        scores = (model.user_embeddings @ model.item_embeddings.T).detach().numpy()
        for row in frame.itertuples():
            seen = set(ds.train_adjacency[row.user].tolist())
            candidates = [i for i in range(num_items) if i not in seen]
            ranked = sorted(candidates, key=lambda i: (-scores[row.user, i], i))
            test_items = ds.test_adjacency[row.user].tolist()
            assert row.recall == pytest.approx(recall_at_k(ranked, test_items, 5))
            assert row.ndcg == pytest.approx(ndcg_at_k(ranked, test_items, 5))

    def test_index_order_model(self):
        ds = from_edges(2, 6, [(0, 0), (1, 1)], [(0, 1), (0, 5), (1, 0)])
        frame = per_user_metrics(index_order_model(2, 6), ds, k=2).set_index("user")

        # usuário 0: ranking [1, 2]; usuário 1: ranking [0, 2]
        assert frame.loc[0, "recall"] == pytest.approx(0.5)
        assert frame.loc[0, "ndcg"] == pytest.approx(1 / (1 + 1 / math.log2(3)))
        assert frame.loc[1, "recall"] == 1.0
        assert frame.loc[1, "ndcg"] == 1.0

    def test_report_counts_test_users(self, toy_dataset):
        report = evaluate(index_order_model(6, 8), toy_dataset, k=3, seed=4)

        assert report.num_users == len(toy_dataset.test_users)
        assert 0.0 <= report.recall <= 1.0
        assert 0.0 <= report.ndcg <= 1.0
        assert report.mode == "base-only"
        assert report.seed == 4

    def test_no_test_users(self):
        ds = from_edges(2, 3, [(0, 0)])
        report = evaluate(index_order_model(2, 3), ds, k=2)
        assert (report.recall, report.ndcg, report.num_users) == (0.0, 0.0, 0)

    def test_invalid_k(self, toy_dataset):
        with pytest.raises(ValueError):
            per_user_metrics(index_order_model(6, 8), toy_dataset, k=0)

    def test_report_bounds(self, tmp_path):
        with pytest.raises(ValidationError):
            EvalReport(recall=1.5, ndcg=0.2, k=5, num_users=3)

        report = EvalReport(recall=0.5, ndcg=0.25, k=5, num_users=3)
        assert report.metric_row() == {"recall@5": 0.5, "ndcg@5": 0.25}
        path = report.write_json(tmp_path / "report.json")
        assert EvalReport.model_validate_json(path.read_text(encoding="utf-8")) == report


class TestBenchmark:
    """Testes para a comparação base vs CCW."""

    @pytest.fixture
    def tiny(self):
        return planted_blocks(2, 12, 12, in_density=0.4, noise_fraction=0.05, seed=1).dataset

    def run(self, ds):
        cfg = TrainConfig(epochs=3, eval_every=3, early_stop_patience=0, batch_size=32)
        return benchmark(ds, ["mf"], k=5, clusters=2, seeds=(0, 1), train_cfg=cfg, dim=4)

    def test_deterministic(self, tiny):
        a, b = self.run(tiny), self.run(tiny)
        pd.testing.assert_frame_equal(a.runs, b.runs)
        pd.testing.assert_frame_equal(a.summary, b.summary)

    def test_summary_shape(self, tiny):
        result = self.run(tiny)

        assert len(result.runs) == 6
        assert result.summary["mode"].tolist() == ["base-only", "equal-weight", "with-lic"]
        assert (result.summary["seeds"] == 2).all()
        base = result.summary[result.summary["mode"] == "base-only"]
        assert base["delta_recall"].iloc[0] == 0.0
        assert base["delta_ndcg"].iloc[0] == 0.0

    def test_bars_render(self, tiny):
        result = self.run(tiny)
        bars = result.bars

        assert set(bars["metric"]) == {"recall@5", "ndcg@5"}
        svg = render_benchmark_bars(bars, "recall@5")
        assert svg.startswith("<svg")
        assert "<rect" in svg

    @pytest.mark.parametrize("field", ["base_variants", "modes", "seeds"])
    def test_empty_inputs(self, tiny, field):
        arguments = {"base_variants": ["mf"], "modes": ["base-only"], "seeds": (0,)}
        arguments[field] = []
        with pytest.raises(ValueError):
            benchmark(tiny, **arguments)

    def test_holdout_validation_trains_on_reduced_split(self, tiny, monkeypatch):
        seen = []

        def recording_train(model, ds, cfg, **kwargs):
            seen.append((ds.num_train, ds.num_test))
            return train_ccw(model, ds, cfg, **kwargs)

        monkeypatch.setattr("app.evaluation.benchmark.train_ccw", recording_train)
        cfg = TrainConfig(
            epochs=2, eval_every=1, early_stop_patience=0, batch_size=32,
            validation="holdout", holdout_fraction=0.2,
        )
        result = benchmark(tiny, ["mf"], modes=["base-only"], k=5, clusters=2, seeds=(0,), train_cfg=cfg, dim=4)

        assert len(seen) == 1
        num_train, num_held = seen[0]
        assert num_train < tiny.num_train
        assert num_train + num_held == tiny.num_train
        assert len(result.runs) == 1
