"""Dataset construction: label-skew partitioning, synthetic quadratic tasks,
IDX ingestion, and Byzantine-set selection.

Client weights are always derived from realized shard sizes
(``alpha_m = S_m / sum_i S_i``), never configured directly, so the
weighting the aggregators see matches the data the clients actually hold.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Sequence, Set, Tuple

import numpy as np

#: Magic numbers of the big-endian IDX containers.
IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


class IdxFormatError(ValueError):
    """Raised for malformed IDX files (bad magic, truncation, count mismatch)."""


@dataclass(frozen=True)
class Shard:
    """One client's slice of a dataset: sample indices into the parent arrays."""

    client_id: int
    indices: np.ndarray  # int64 indices into the parent dataset

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])


@dataclass(frozen=True)
class QuadraticClient:
    """One client's quadratic objective: F(w) = 0.5 (w - c)^T diag(a) (w - c)."""

    diag: np.ndarray  # (p,) positive curvature per coordinate
    center: np.ndarray  # (p,) minimizer of this client's loss


@dataclass(frozen=True)
class QuadraticTask:
    """Synthetic strongly-convex task with exactly known constants.

    Every client's Hessian is diagonal with entries in [mu, L] and both
    endpoints present, so each local loss has smoothness constant exactly
    ``L`` and strong-convexity constant exactly ``mu``.  The global optimum
    is available in closed form (see ``models.quadratic_optimum``).
    """

    diags: np.ndarray  # (M, p)
    centers: np.ndarray  # (M, p)
    weights: np.ndarray  # (M,) client weights, equal by construction
    mu: float
    L: float
    center_spread: float
    c0: np.ndarray  # (p,) shared center the client centers scatter around

    @property
    def num_clients(self) -> int:
        return int(self.diags.shape[0])

    @property
    def dim(self) -> int:
        return int(self.diags.shape[1])

    def client(self, m: int) -> QuadraticClient:
        return QuadraticClient(diag=self.diags[m], center=self.centers[m])


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus integer labels for one split (train or test)."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64 in [0, num_classes)

    def __post_init__(self) -> None:
        if self.features.shape[0] == 0:
            raise ValueError("dataset must contain at least one sample")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )

    @property
    def num_samples(self) -> int:
        return int(self.features.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1


def dirichlet_partition(
    labels: Sequence[int] | np.ndarray,
    num_clients: int,
    beta: float,
    rng: np.random.Generator,
) -> List[Shard]:
    """Label-skew partition: per class, client proportions are Dirichlet(beta) draws.

    For each class the sample indices are shuffled and split multinomially
    according to a fresh Dirichlet(beta * 1_M) draw.  Any client left with
    an empty shard afterwards receives one sample moved from the currently
    largest shard, so every weight alpha_m stays positive.

    Args:
        labels: per-sample integer class labels.
        num_clients: M >= 1.
        beta: concentration parameter (> 0); smaller = more skew.
        rng: seeded generator (partition is deterministic given it).

    Returns:
        M shards that partition ``range(len(labels))``.
    """
    lab = np.asarray(labels, dtype=np.int64)
    n = int(lab.shape[0])
    if num_clients < 1:
        raise ValueError(f"num_clients must be >= 1, got {num_clients}")
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if n < num_clients:
        raise ValueError(f"cannot split {n} samples across {num_clients} clients")

    buckets: List[List[np.ndarray]] = [[] for _ in range(num_clients)]
    for cls in np.unique(lab):
        cls_idx = rng.permutation(np.flatnonzero(lab == cls))
        props = rng.dirichlet(np.full(num_clients, beta))
        counts = rng.multinomial(cls_idx.shape[0], props)
        start = 0
        for m in range(num_clients):
            stop = start + int(counts[m])
            if stop > start:
                buckets[m].append(cls_idx[start:stop])
            start = stop

    parts = [
        np.concatenate(b) if b else np.empty(0, dtype=np.int64) for b in buckets
    ]

    # Repair empty shards: move one sample at a time from the largest shard.
    sizes = np.array([part.shape[0] for part in parts])
    while np.any(sizes == 0):
        empty = int(np.flatnonzero(sizes == 0)[0])
        donor = int(np.argmax(sizes))
        parts[empty] = parts[donor][-1:]
        parts[donor] = parts[donor][:-1]
        sizes[empty] = 1
        sizes[donor] -= 1

    return [
        Shard(client_id=m, indices=np.sort(parts[m]).astype(np.int64))
        for m in range(num_clients)
    ]


def shard_weights(shards: Sequence[Shard]) -> np.ndarray:
    """Per-client weights alpha_m = S_m / sum_i S_i from realized shard sizes."""
    sizes = np.array([s.size for s in shards], dtype=np.float64)
    total = sizes.sum()
    if total <= 0:
        raise ValueError("shards are all empty")
    return sizes / total


def gen_quadratic_task(
    p: int,
    num_clients: int,
    mu: float,
    L: float,
    center_spread: float,
    rng: np.random.Generator,
) -> QuadraticTask:
    """Generate a synthetic quadratic task with exact curvature constants.

    Each client's Hessian is diagonal with entries drawn uniformly from
    [mu, L]; two randomly placed entries are pinned to mu and L so both
    extremes are realized per client.  Client centers are
    ``c_m = c0 + center_spread * u_m`` with ``u_m`` uniform on the unit
    sphere and ``c0`` a standard normal draw.  Client weights are equal.

    Args:
        p: model dimension (>= 2 when mu < L, so both pinned entries fit).
        num_clients: M >= 1.
        mu: strong-convexity constant (> 0).
        L: smoothness constant (>= mu).
        center_spread: radius of the client-center scatter (>= 0);
            0 makes every client share the same center.
        rng: seeded generator.
    """
    if not (0.0 < mu <= L):
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    if center_spread < 0.0:
        raise ValueError(f"center_spread must be >= 0, got {center_spread}")
    if num_clients < 1:
        raise ValueError(f"num_clients must be >= 1, got {num_clients}")
    if p < 1 or (p < 2 and mu < L):
        raise ValueError(
            f"p={p} too small: need p >= 2 to realize both curvature extremes"
        )

    diags = np.empty((num_clients, p))
    centers = np.empty((num_clients, p))
    c0 = rng.standard_normal(p)
    for m in range(num_clients):
        d = rng.uniform(mu, L, size=p)
        if mu < L:
            lo, hi = rng.choice(p, size=2, replace=False)
            d[lo] = mu
            d[hi] = L
        else:
            d[:] = mu
        diags[m] = d
        u = rng.standard_normal(p)
        nrm = np.linalg.norm(u)
        while nrm == 0.0:  # pragma: no cover - probability zero
            u = rng.standard_normal(p)
            nrm = np.linalg.norm(u)
        centers[m] = c0 + center_spread * (u / nrm)

    weights = np.full(num_clients, 1.0 / num_clients)
    return QuadraticTask(
        diags=diags,
        centers=centers,
        weights=weights,
        mu=float(mu),
        L=float(L),
        center_spread=float(center_spread),
        c0=c0,
    )


def _read_exact(f, nbytes: int, path: str, what: str) -> bytes:
    buf = f.read(nbytes)
    if len(buf) != nbytes:
        raise IdxFormatError(
            f"{path}: truncated file while reading {what} "
            f"(wanted {nbytes} bytes, got {len(buf)})"
        )
    return buf


def load_mnist_idx(
    image_path: str, label_path: str, limit: int | None = None
) -> Dataset:
    """Load an IDX image/label file pair into a Dataset.

    Parses the big-endian IDX containers (magic 2051 for images, 2049 for
    labels), scales pixels to [0, 1] float64, and flattens each image to a
    row.  ``limit`` loads only the first ``limit`` samples.

    Raises:
        IdxFormatError: bad magic number, truncated file, or an
            image/label count mismatch — each with a distinct message
            naming the offending file.
    """
    if limit is not None and limit < 1:
        raise ValueError(f"limit must be >= 1 when given, got {limit}")

    with open(image_path, "rb") as f:
        header = _read_exact(f, 16, image_path, "image header")
        magic, n_images, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(
                f"{image_path}: bad magic {magic}, expected {IDX_IMAGE_MAGIC} (images)"
            )
        n_use = n_images if limit is None else min(limit, n_images)
        raw = _read_exact(f, n_use * rows * cols, image_path, f"{n_use} images")
    images = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    features = images.reshape(n_use, rows * cols)

    with open(label_path, "rb") as f:
        header = _read_exact(f, 8, label_path, "label header")
        magic, n_labels = struct.unpack(">II", header)
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(
                f"{label_path}: bad magic {magic}, expected {IDX_LABEL_MAGIC} (labels)"
            )
        if n_labels != n_images:
            raise IdxFormatError(
                f"{label_path}: {n_labels} labels but {image_path} has "
                f"{n_images} images"
            )
        raw = _read_exact(f, n_use, label_path, f"{n_use} labels")
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    return Dataset(features=features, labels=labels)


def select_byzantine(
    weights: Sequence[float] | np.ndarray,
    target_fraction: float,
    rng: np.random.Generator,
) -> Tuple[Set[int], float]:
    """Pick a Byzantine client set whose total weight approaches but never exceeds the target.

    Clients are visited in a seeded random order; each is added if its
    weight still fits under ``target_fraction``.  After the pass, adding
    any non-selected client would exceed the target.

    Args:
        weights: client weights summing to 1.
        target_fraction: desired Byzantine weight share, in [0, 0.5).
        rng: seeded generator (selection is deterministic given it).

    Returns:
        (selected client ids, achieved weight share <= target).
    """
    w = np.asarray(weights, dtype=np.float64)
    if abs(float(w.sum()) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {float(w.sum())!r}")
    if not (0.0 <= target_fraction < 0.5):
        raise ValueError(
            f"target_fraction must be in [0, 0.5), got {target_fraction}"
        )

    chosen: Set[int] = set()
    achieved = 0.0
    for idx in rng.permutation(w.shape[0]):
        m = int(idx)
        # The 1e-15 slack only absorbs accumulation roundoff (e.g. eight
        # exact shares of 1/20 summing to just over 0.4 in binary).
        if achieved + w[m] <= target_fraction + 1e-15:
            chosen.add(m)
            achieved += float(w[m])
    # the slack can leave `achieved` a few ulp above the target; clamp so
    # the reported share never exceeds it.
    achieved = min(achieved, target_fraction)
    return chosen, achieved
