"""Independent reference implementations shared by the test modules.

Everything here is deliberately straight-line (python sorts, per-pair
loops, grid search) so it cannot share a bug with the vectorized
production code it checks.
"""

import numpy as np


def rel_l2(a, b):
    """Relative L2 error of ``a`` against reference ``b`` (floored at 1)."""
    return float(np.linalg.norm(a - b)) / max(1.0, float(np.linalg.norm(b)))


def median_oracle(uploads):
    """Per-coordinate sort; midpoint average for even counts."""
    mat = np.stack(uploads)
    out = np.empty(mat.shape[1])
    for j in range(mat.shape[1]):
        col = sorted(mat[:, j])
        n = len(col)
        if n % 2 == 1:
            out[j] = col[n // 2]
        else:
            out[j] = (col[n // 2 - 1] + col[n // 2]) / 2.0
    return out


def trimmed_mean_oracle(uploads, k):
    mat = np.stack(uploads)
    out = np.empty(mat.shape[1])
    for j in range(mat.shape[1]):
        col = sorted(mat[:, j])
        kept = col[k : len(col) - k] if k else col
        # plain left-to-right sum: np.mean switches to blocked summation at
        # n == 8 and stops matching a sequential reduction bit-for-bit
        out[j] = sum(kept) / len(kept)
    return out


def krum_scores_oracle(uploads, b):
    """Per-pair distance loops, no linear-algebra shortcuts."""
    m = len(uploads)
    neighbors = m - b - 2
    scores = np.empty(m)
    for i in range(m):
        dists = []
        for j in range(m):
            if j == i:
                continue
            diff = uploads[i] - uploads[j]
            dists.append(float(diff @ diff))
        scores[i] = sum(sorted(dists)[:neighbors])
    return scores


def gm_objective(uploads, weights, y):
    return float(sum(w * np.linalg.norm(u - y) for u, w in zip(uploads, weights)))


def gm_grid_oracle(uploads, weights, points=11, max_zooms=400):
    """Iteratively zoomed grid search over the uploads' bounding box.

    A fixed shrink per zoom is unsafe: when the objective has a narrow
    diagonal valley the grid argmin can land far from the true minimizer
    along the valley floor, and a window that keeps only a cell or two
    around it walks away from the solution.  The window instead widens
    along any axis where the argmin is still travelling (twice the last
    move) and contracts only where it has settled, so it tracks the
    valley first and shrinks geometrically once the argmin stops.
    """
    mat = np.stack(uploads)
    lo = mat.min(axis=0) - 1.0
    hi = mat.max(axis=0) + 1.0
    center = (lo + hi) / 2.0
    half = (hi - lo) / 2.0
    p = mat.shape[1]
    for _ in range(max_zooms):
        axes = [np.linspace(center[d] - half[d], center[d] + half[d], points) for d in range(p)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, p)
        dists = np.linalg.norm(grid[:, None, :] - mat[None, :, :], axis=2)
        objective = dists @ np.asarray(weights)
        best = grid[int(np.argmin(objective))]
        step = 2.0 * half / (points - 1)
        half = np.maximum(1.5 * step, 2.0 * np.abs(best - center))
        center = best
        if float(half.max()) < 1e-10:
            break
    return center


def min_relu_margin(spec, params, x):
    """Smallest |pre-activation| over all hidden units and samples."""
    from fednga.models import unpack_layers

    layers = unpack_layers(spec, params)
    h, margin = x, np.inf
    for w, b in layers[:-1]:
        z = h @ w + b
        margin = min(margin, float(np.abs(z).min()))
        h = np.maximum(z, 0.0)
    return margin
