"""Testes para o co-clustering espectral e os subgrafos."""
import hashlib

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from app.clustering.base import (
    CoClustering,
    assignment_fingerprint,
    block_density_stat,
    build_subgraphs,
    read_assignments,
    write_assignments,
)
from app.clustering.spectral import SpectralCoClusterer, _repair_empty_clusters, spectral_cocluster
from app.core.exceptions import DataError
from app.data.corpus import from_edges
from app.data.synth import planted_blocks
from app.reporting.charts import block_density_grid, render_block_matrix


class TestSpectralCoClusterer:
    """Testes para recuperação de blocos plantados."""

    @pytest.mark.parametrize("noise", [0.0, 0.05])
    def test_recovers_planted_partition(self, noise):
        planted = planted_blocks(3, 60, 60, in_density=0.3, noise_fraction=noise, seed=2)
        clustering = spectral_cocluster(planted.dataset.train_matrix, 3, seed=0)

        assert adjusted_rand_score(planted.user_blocks, clustering.user_assignment) >= 0.99
        assert adjusted_rand_score(planted.item_blocks, clustering.item_assignment) >= 0.99

    def test_noiseless_blocks_capture_all_edges(self, planted):
        matrix = planted.dataset.train_matrix
        clustering = spectral_cocluster(matrix, 3, seed=1)
        assert block_density_stat(matrix, clustering) == pytest.approx(1.0)

    def test_deterministic_for_seed(self, planted):
        matrix = planted.dataset.train_matrix
        a = spectral_cocluster(matrix, 3, seed=5)
        b = spectral_cocluster(matrix, 3, seed=5)
        assert np.array_equal(a.user_assignment, b.user_assignment)
        assert np.array_equal(a.item_assignment, b.item_assignment)

    def test_sparse_svd_path_matches_dense(self, planted):
        matrix = planted.dataset.train_matrix
        dense = SpectralCoClusterer(dense_max_cells=10**9).fit(matrix, 3, seed=0)
        sparse = SpectralCoClusterer(dense_max_cells=0).fit(matrix, 3, seed=0)
        assert adjusted_rand_score(dense.user_assignment, sparse.user_assignment) == pytest.approx(1.0)

    @pytest.mark.parametrize("k", [1, 500])
    def test_invalid_k(self, planted, k):
        with pytest.raises(ValueError):
            spectral_cocluster(planted.dataset.train_matrix, k, seed=0)

    def test_empty_matrix(self):
        ds = from_edges(3, 3, [])
        with pytest.raises(DataError):
            spectral_cocluster(ds.train_matrix, 2, seed=0)

    def test_isolated_nodes_go_to_largest_cluster(self, log_messages):
        planted = planted_blocks(2, 20, 20, in_density=0.4, noise_fraction=0.0, seed=0)
        ds = planted.dataset
        # Item extra sem nenhuma interação
        padded = from_edges(ds.num_users, ds.num_items + 1, ds.train_edges)
        clustering = spectral_cocluster(padded.train_matrix, 2, seed=0)

        sizes = np.bincount(clustering.item_assignment[:-1], minlength=2) + np.bincount(
            clustering.user_assignment, minlength=2
        )
        assert clustering.isolated_items.tolist() == [ds.num_items]
        assert clustering.item_assignment[-1] == int(np.argmax(sizes))
        assert any("isolados" in m for m in log_messages)

    def test_four_by_four_blocks(self):
        ds = from_edges(4, 4, [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)])
        clustering = spectral_cocluster(ds.train_matrix, 2, seed=0)
        users, items = clustering.user_assignment, clustering.item_assignment

        assert users[0] == users[1] == items[0] == items[1]
        assert users[2] == users[3] == items[2] == items[3]
        assert users[0] != users[2]

    def test_permutation_equivariance(self):
        planted = planted_blocks(3, 40, 40, in_density=0.3, noise_fraction=0.0, test_fraction=0.0, seed=0)
        matrix = planted.dataset.train_matrix
        rng = np.random.default_rng(11)
        row_perm = rng.permutation(matrix.shape[0])
        col_perm = rng.permutation(matrix.shape[1])

        original = spectral_cocluster(matrix, 3, seed=0)
        permuted = spectral_cocluster(matrix[row_perm][:, col_perm], 3, seed=0)

        # linha r da matriz permutada é o usuário row_perm[r]
        users = np.empty_like(permuted.user_assignment)
        users[row_perm] = permuted.user_assignment
        items = np.empty_like(permuted.item_assignment)
        items[col_perm] = permuted.item_assignment
        both = np.concatenate([original.user_assignment, original.item_assignment])
        assert adjusted_rand_score(both, np.concatenate([users, items])) == pytest.approx(1.0)

    @pytest.mark.parametrize("blocks", [
        # (usuários, itens) por bloco; 12 nós no total
        ((3, 3), (3, 3)),
        ((2, 3), (4, 3)),
        ((4, 2), (2, 4)),
    ])
    def test_cut_matches_brute_force_optimum(self, blocks):
        edges, user_offset, item_offset = [], 0, 0
        for num_users, num_items in blocks:
            edges += [(user_offset + u, item_offset + i) for u in range(num_users) for i in range(num_items)]
            user_offset, item_offset = user_offset + num_users, item_offset + num_items
        # remove uma aresta do primeiro bloco sem desconectá-lo
        edges.remove((0, 0))
        ds = from_edges(user_offset, item_offset, edges)
        pairs = ds.train_edges
        degree = np.concatenate([
            np.bincount(pairs[:, 0], minlength=ds.num_users), np.bincount(pairs[:, 1], minlength=ds.num_items)
        ])

        def normalized_cut(side: np.ndarray) -> float:
            cut = np.count_nonzero(side[pairs[:, 0]] != side[ds.num_users + pairs[:, 1]])
            inside = degree[side].sum()
            return cut / inside + cut / (degree.sum() - inside)

        n_nodes = ds.num_users + ds.num_items
        best = min(
            normalized_cut(np.array([(mask >> bit) & 1 for bit in range(n_nodes)], dtype=bool))
            for mask in range(1, 2 ** n_nodes - 1)
        )
        clustering = spectral_cocluster(ds.train_matrix, 2, seed=0)
        side = np.concatenate([clustering.user_assignment, clustering.item_assignment]) == 0

        assert best == 0.0
        assert normalized_cut(side) == pytest.approx(best)

    @pytest.mark.parametrize("num_blocks, per_block, noise", [
        (3, 70, 0.05),
        (3, 70, 0.0),
        (6, 35, 0.0),
        (9, 23, 0.0),
    ])
    def test_planted_recovery_across_seeds(self, num_blocks, per_block, noise):
        for seed in range(10):
            planted = planted_blocks(
                num_blocks, per_block, per_block, in_density=0.4,
                noise_fraction=noise, test_fraction=0.0, seed=seed,
            )
            clustering = spectral_cocluster(planted.dataset.train_matrix, num_blocks, seed=seed)

            assert adjusted_rand_score(planted.user_blocks, clustering.user_assignment) >= 0.99
            assert adjusted_rand_score(planted.item_blocks, clustering.item_assignment) >= 0.99

    def test_empty_cluster_reseeded_with_farthest_point(self):
        points = np.array([[0.0], [0.1], [10.0], [10.2], [20.0]])
        labels = _repair_empty_clusters(points, np.array([0, 0, 1, 1, 1]), 3)
        assert labels.tolist() == [0, 0, 1, 1, 2]

    def test_collapsed_embedding_not_repaired(self, log_messages):
        points = np.array([[0.0], [0.0], [1.0], [1.0]])
        labels = _repair_empty_clusters(points, np.array([0, 0, 1, 1]), 3)

        assert labels.tolist() == [0, 0, 1, 1]
        assert any("pontos distintos" in m for m in log_messages)


class TestSubgraphs:
    """Testes para build_subgraphs."""

    def test_edge_partition_conservation(self):
        planted = planted_blocks(3, 30, 30, in_density=0.3, noise_fraction=0.08, seed=4)
        matrix = planted.dataset.train_matrix
        clustering = build_subgraphs(matrix, spectral_cocluster(matrix, 3, seed=0))

        inside = sum(len(sg.edges) for sg in clustering.subgraphs)
        assert inside + len(clustering.cross_edges) == matrix.nnz

        for sg in clustering.subgraphs:
            assert np.all(clustering.user_assignment[sg.edges[:, 0]] == sg.cluster)
            assert np.all(clustering.item_assignment[sg.edges[:, 1]] == sg.cluster)
        assert np.all(
            clustering.user_assignment[clustering.cross_edges[:, 0]]
            != clustering.item_assignment[clustering.cross_edges[:, 1]]
        )

    def test_local_indices_map_back(self, toy_clustering):
        for sg in toy_clustering.subgraphs:
            assert np.array_equal(sg.users[sg.local_edges[:, 0]], sg.edges[:, 0])
            assert np.array_equal(sg.items[sg.local_edges[:, 1]], sg.edges[:, 1])

    def test_toy_cross_edge(self, toy_clustering):
        assert toy_clustering.cross_edges.tolist() == [[0, 4]]
        assert [len(sg.edges) for sg in toy_clustering.subgraphs] == [6, 6]

    def test_node_partition(self, toy_clustering):
        users = sum(sg.num_users for sg in toy_clustering.subgraphs)
        items = sum(sg.num_items for sg in toy_clustering.subgraphs)
        assert (users, items) == (6, 8)

    def test_shape_mismatch(self, toy_clustering):
        with pytest.raises(ValueError):
            build_subgraphs(from_edges(3, 3, [(0, 0)]).train_matrix, toy_clustering)


class TestBlockDensity:
    """Testes para block_density_stat."""

    def test_all_edges_cross(self, toy_dataset):
        clustering = CoClustering(
            k=2, user_assignment=np.zeros(6, dtype=int), item_assignment=np.ones(8, dtype=int), seed=0
        )
        assert block_density_stat(toy_dataset.train_matrix, clustering) == 0.0

    def test_planted_noise_fraction(self):
        planted = planted_blocks(3, 60, 60, in_density=0.3, noise_fraction=0.1, seed=0)
        truth = CoClustering(
            k=3, user_assignment=planted.user_blocks, item_assignment=planted.item_blocks, seed=0
        )
        assert block_density_stat(planted.dataset.train_matrix, truth) == pytest.approx(0.9, abs=0.02)


class TestAssignmentsFile:
    """Testes para o arquivo de clusters."""

    def test_write_read(self, tmp_path, toy_clustering):
        path = write_assignments(toy_clustering, tmp_path / "clusters.txt")
        loaded = read_assignments(path)

        assert loaded.k == 2
        assert np.array_equal(loaded.user_assignment, toy_clustering.user_assignment)
        assert np.array_equal(loaded.item_assignment, toy_clustering.item_assignment)

    def test_fingerprint_is_file_hash(self, tmp_path, toy_clustering):
        path = write_assignments(toy_clustering, tmp_path / "clusters.txt")
        assert assignment_fingerprint(toy_clustering) == hashlib.sha256(path.read_bytes()).hexdigest()

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("# k=2 seed=0 users=1 items=1\nuser 0 0\nnode 0 1\n", encoding="utf-8")
        with pytest.raises(DataError):
            read_assignments(path)

    def test_incomplete_file(self, tmp_path):
        path = tmp_path / "partial.txt"
        path.write_text("# k=2 seed=0 users=2 items=1\nuser 0 0\nitem 0 1\n", encoding="utf-8")
        with pytest.raises(DataError):
            read_assignments(path)

    def test_labels_out_of_range(self):
        with pytest.raises(ValueError):
            CoClustering(k=2, user_assignment=[0, 2], item_assignment=[0], seed=0)


class TestBlockMatrix:
    """Testes para a matriz reordenada por cluster."""

    def test_density_grid_is_block_diagonal(self, planted):
        matrix = planted.dataset.train_matrix
        clustering = spectral_cocluster(matrix, 3, seed=0)
        grid, row_bounds, col_bounds = block_density_grid(matrix, clustering, resolution=3)

        assert grid.shape == (3, 3)
        assert np.all(np.diag(grid) > 0)
        assert np.count_nonzero(grid - np.diag(np.diag(grid))) == 0
        assert len(row_bounds) == len(col_bounds) == 2

    def test_render_svg(self, toy_dataset, toy_clustering):
        svg = render_block_matrix(toy_dataset.train_matrix, toy_clustering)
        assert svg.startswith("<svg")
        assert "<rect" in svg
