"""Partitioning, synthetic task construction, IDX parsing, Byzantine selection."""

import struct

import numpy as np
import pytest

from fednga.data import (
    IdxFormatError,
    dirichlet_partition,
    gen_quadratic_task,
    load_mnist_idx,
    select_byzantine,
    shard_weights,
)
from fednga.models import global_quadratic_loss_grad, quadratic_optimum

# ---------- IDX fixtures ---------- #


def write_idx_images(path, images):
    """images: (n, rows, cols) uint8."""
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", 2051, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", 2049, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


@pytest.fixture
def idx_pair(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(12, 4, 4), dtype=np.uint8)
    labels = rng.integers(0, 3, size=12, dtype=np.uint8)
    img_path, lbl_path = tmp_path / "img.idx", tmp_path / "lbl.idx"
    write_idx_images(img_path, images)
    write_idx_labels(lbl_path, labels)
    return img_path, lbl_path, images, labels


# ---------- dirichlet partition ---------- #


def partition_is_valid(shards, n):
    seen = np.concatenate([s.indices for s in shards])
    assert len(seen) == n
    assert np.array_equal(np.sort(seen), np.arange(n))
    assert all(s.size > 0 for s in shards)


def test_single_client_gets_everything():
    labels = np.array([0, 1, 2, 0, 1])
    shards = dirichlet_partition(labels, 1, 0.5, np.random.default_rng(0))
    assert len(shards) == 1
    assert np.array_equal(shards[0].indices, np.arange(5))


@pytest.mark.parametrize("beta,clients,seed", [(0.05, 20, 1), (0.6, 10, 2), (100.0, 5, 3)])
def test_partition_covers_all_indices_without_overlap(beta, clients, seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=300)
    shards = dirichlet_partition(labels, clients, beta, rng)
    partition_is_valid(shards, 300)


def test_large_beta_approaches_global_label_mix():
    # balanced labels, large enough that multinomial noise sits well
    # below the 10% relative tolerance (expected count 2000 per cell)
    labels = np.repeat(np.arange(10), 20000)
    global_hist = np.full(10, 0.1)
    for seed in range(5):
        shards = dirichlet_partition(labels, 10, 1e6, np.random.default_rng(seed))
        for shard in shards:
            hist = np.bincount(labels[shard.indices], minlength=10) / shard.size
            assert np.all(np.abs(hist - global_hist) <= 0.1 * global_hist + 1e-12)


def test_small_beta_is_more_skewed_than_large_beta():
    labels = np.repeat(np.arange(10), 200)
    global_hist = np.full(10, 0.1)

    def mean_tv(beta, seed):
        shards = dirichlet_partition(labels, 10, beta, np.random.default_rng(seed))
        tvs = []
        for s in shards:
            hist = np.bincount(labels[s.indices], minlength=10) / s.size
            tvs.append(0.5 * float(np.abs(hist - global_hist).sum()))
        return float(np.mean(tvs))

    for seed in range(5):
        assert mean_tv(0.1, seed) > mean_tv(1e6, seed)


def test_partition_rejects_more_clients_than_samples():
    with pytest.raises(ValueError):
        dirichlet_partition(np.array([0, 1]), 3, 0.5, np.random.default_rng(0))


def test_shard_weights_is_size_share():
    labels = np.random.default_rng(4).integers(0, 5, size=100)
    shards = dirichlet_partition(labels, 7, 0.3, np.random.default_rng(4))
    weights = shard_weights(shards)
    assert abs(float(weights.sum()) - 1.0) < 1e-12
    assert np.all(weights > 0)
    assert weights[0] == shards[0].size / 100


# ---------- quadratic task ---------- #


def test_zero_spread_shares_the_center():
    task = gen_quadratic_task(6, 5, 1.0, 2.0, 0.0, np.random.default_rng(5))
    for m in range(5):
        assert np.array_equal(task.centers[m], task.c0)
    assert np.allclose(quadratic_optimum(task), task.c0, atol=1e-12)


def test_identity_hessian_optimum_is_weighted_center():
    task = gen_quadratic_task(4, 3, 1.0, 1.0, 2.0, np.random.default_rng(6))
    assert np.all(task.diags == 1.0)
    expected = np.einsum("m,mp->p", task.weights, task.centers)
    np.testing.assert_allclose(quadratic_optimum(task), expected, atol=1e-12)


def test_curvature_endpoints_present_per_client():
    task = gen_quadratic_task(5, 8, 0.5, 3.0, 1.0, np.random.default_rng(7))
    for m in range(8):
        assert task.diags[m].min() == 0.5
        assert task.diags[m].max() == 3.0
        assert np.all((task.diags[m] >= 0.5) & (task.diags[m] <= 3.0))


def test_optimum_matches_gradient_descent_oracle():
    task = gen_quadratic_task(5, 8, 1.0, 1.2, 1.0, np.random.default_rng(8))
    w = np.zeros(5)
    for _ in range(20000):
        _, grad = global_quadratic_loss_grad(task, w)
        if np.linalg.norm(grad) < 1e-10:
            break
        w -= 0.8 * grad
    assert np.linalg.norm(grad) < 1e-10
    assert np.linalg.norm(w - quadratic_optimum(task)) < 1e-8


def test_global_gradient_vanishes_at_optimum():
    task = gen_quadratic_task(6, 4, 0.7, 2.5, 1.5, np.random.default_rng(9))
    _, grad = global_quadratic_loss_grad(task, quadratic_optimum(task))
    assert float(np.linalg.norm(grad)) < 1e-10


def test_task_validation():
    rng = np.random.default_rng(10)
    with pytest.raises(ValueError):
        gen_quadratic_task(5, 3, 2.0, 1.0, 0.0, rng)  # mu > L
    with pytest.raises(ValueError):
        gen_quadratic_task(5, 3, 1.0, 2.0, -1.0, rng)  # negative spread
    with pytest.raises(ValueError):
        gen_quadratic_task(1, 3, 1.0, 2.0, 0.0, rng)  # both endpoints cannot fit


# ---------- IDX loading ---------- #


def test_idx_round_trip(idx_pair):
    img_path, lbl_path, images, labels = idx_pair
    ds = load_mnist_idx(str(img_path), str(lbl_path))
    assert ds.features.shape == (12, 16)
    assert ds.features.dtype == np.float64
    np.testing.assert_allclose(ds.features, images.reshape(12, -1) / 255.0)
    assert np.array_equal(ds.labels, labels.astype(np.int64))


def test_idx_prefix_subset(idx_pair):
    img_path, lbl_path, images, labels = idx_pair
    ds = load_mnist_idx(str(img_path), str(lbl_path), limit=5)
    assert ds.features.shape == (5, 16)
    assert np.array_equal(ds.labels, labels[:5].astype(np.int64))


def test_idx_bad_image_magic(idx_pair, tmp_path):
    img_path, lbl_path, _, labels = idx_pair
    bad = tmp_path / "bad.idx"
    data = img_path.read_bytes()
    bad.write_bytes(struct.pack(">i", 1234) + data[4:])
    with pytest.raises(IdxFormatError, match="bad.idx"):
        load_mnist_idx(str(bad), str(lbl_path))


def test_idx_bad_label_magic(idx_pair, tmp_path):
    img_path, lbl_path, _, _ = idx_pair
    bad = tmp_path / "badlbl.idx"
    data = lbl_path.read_bytes()
    bad.write_bytes(struct.pack(">i", 2051) + data[4:])  # image magic in a label file
    with pytest.raises(IdxFormatError, match="badlbl.idx"):
        load_mnist_idx(str(img_path), str(bad))


def test_idx_truncated_pixels(idx_pair, tmp_path):
    img_path, lbl_path, _, _ = idx_pair
    cut = tmp_path / "cut.idx"
    cut.write_bytes(img_path.read_bytes()[:-10])
    with pytest.raises(IdxFormatError, match="truncated"):
        load_mnist_idx(str(cut), str(lbl_path))


def test_idx_count_mismatch(idx_pair, tmp_path):
    img_path, _, _, _ = idx_pair
    lbl_short = tmp_path / "short.idx"
    write_idx_labels(lbl_short, np.zeros(5, dtype=np.uint8))
    with pytest.raises(IdxFormatError, match="5 labels .* 12 images"):
        load_mnist_idx(str(img_path), str(lbl_short))


# ---------- Byzantine selection ---------- #


def test_zero_target_selects_nobody():
    chosen, achieved = select_byzantine(np.full(10, 0.1), 0.0, np.random.default_rng(0))
    assert chosen == set()
    assert achieved == 0.0


def test_equal_weights_fill_to_target():
    chosen, achieved = select_byzantine(np.full(10, 0.1), 0.3, np.random.default_rng(1))
    assert len(chosen) == 3
    assert abs(achieved - 0.3) < 1e-12


def test_greedy_selection_is_maximal_for_its_order():
    rng = np.random.default_rng(2)
    weights = rng.dirichlet(np.ones(12))
    chosen, achieved = select_byzantine(weights, 0.4, np.random.default_rng(3))
    assert achieved <= 0.4
    # replay the visiting order: every skipped client must not have fit
    order = np.random.default_rng(3).permutation(12)
    total = 0.0
    for client in order:
        if client in chosen:
            total += weights[client]
        else:
            assert total + weights[client] > 0.4 - 1e-15
    assert abs(total - achieved) < 1e-15


def test_selection_deterministic_per_seed():
    weights = np.random.default_rng(4).dirichlet(np.ones(20))
    a = select_byzantine(weights, 0.45, np.random.default_rng(9))
    b = select_byzantine(weights, 0.45, np.random.default_rng(9))
    assert a == b


def test_target_must_be_below_half():
    with pytest.raises(ValueError):
        select_byzantine(np.full(4, 0.25), 0.5, np.random.default_rng(0))
