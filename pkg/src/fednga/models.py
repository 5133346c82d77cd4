"""Loss functions and analytic gradients for the three task families.

Families:
  * ``quadratic`` — per-client F(w) = 0.5 (w - c)^T diag(a) (w - c); exact
                    curvature constants, used by the bound checkers.
  * ``logistic``  — multinomial logistic regression (linear layer + softmax
                    cross-entropy).
  * ``mlp``       — fully-connected ReLU network with softmax cross-entropy,
                    gradients by explicit backpropagation (no autodiff).

Parameters travel as one flat float64 vector; the flattening order is
layer-major, each layer's weight matrix (row-major) followed by its bias.
A central-difference gradient is provided as an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .data import Dataset, QuadraticClient, QuadraticTask

MODEL_TAGS = ("quadratic", "logistic", "mlp")

#: Default fully-connected layer widths (28*28 input, 10 classes).
DEFAULT_MLP_LAYERS = (784, 200, 200, 10)

#: Classification data: (features, labels) arrays.
ClassifData = Tuple[np.ndarray, np.ndarray]
ClientData = Union[QuadraticClient, ClassifData]


@dataclass(frozen=True)
class ModelSpec:
    """Model family tag plus the shape information that fixes the parameter count.

    ``layers`` holds (p,) for quadratic, (in_dim, num_classes) for
    logistic, and the full width sequence for mlp.
    """

    tag: str
    layers: Tuple[int, ...]

    def __post_init__(self) -> None:
        if self.tag not in MODEL_TAGS:
            raise ValueError(f"unknown model {self.tag!r}; expected one of {MODEL_TAGS}")
        if any(d < 1 for d in self.layers):
            raise ValueError(f"layer sizes must be positive, got {self.layers}")
        if self.tag == "quadratic" and len(self.layers) != 1:
            raise ValueError("quadratic spec needs exactly one dimension")
        if self.tag == "logistic" and len(self.layers) != 2:
            raise ValueError("logistic spec needs (in_dim, num_classes)")
        if self.tag == "mlp" and len(self.layers) < 2:
            raise ValueError("mlp spec needs at least input and output widths")

    @property
    def param_count(self) -> int:
        if self.tag == "quadratic":
            return self.layers[0]
        return sum(
            d_in * d_out + d_out
            for d_in, d_out in zip(self.layers[:-1], self.layers[1:])
        )


def parse_model_spec(text: str) -> ModelSpec:
    """Parse a spec string: ``quadratic[:p]``, ``logistic[:in-classes]``, ``mlp[:d0-d1-...]``.

    Defaults: quadratic p=10, logistic 784-10, mlp 784-200-200-10.
    """
    tag, _, shape = text.partition(":")
    tag = tag.strip().lower()
    if tag not in MODEL_TAGS:
        raise ValueError(f"unknown model {tag!r}; expected one of {MODEL_TAGS}")
    if shape:
        try:
            dims = tuple(int(tok) for tok in shape.split("-"))
        except ValueError as exc:
            raise ValueError(f"bad model shape {shape!r}: {exc}") from None
    else:
        dims = {"quadratic": (10,), "logistic": (784, 10), "mlp": DEFAULT_MLP_LAYERS}[tag]
    return ModelSpec(tag=tag, layers=dims)


# ---------- parameter packing ---------- #


def unpack_layers(
    spec: ModelSpec, params: np.ndarray
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Split a flat parameter vector into per-layer (weight matrix, bias) views."""
    if params.shape != (spec.param_count,):
        raise ValueError(
            f"params length {params.shape} does not match spec ({spec.param_count},)"
        )
    out: List[Tuple[np.ndarray, np.ndarray]] = []
    offset = 0
    for d_in, d_out in zip(spec.layers[:-1], spec.layers[1:]):
        w = params[offset : offset + d_in * d_out].reshape(d_in, d_out)
        offset += d_in * d_out
        b = params[offset : offset + d_out]
        offset += d_out
        out.append((w, b))
    return out


def init_params(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Initial parameter vector: zeros for quadratic/logistic, He-uniform weights for mlp."""
    if spec.tag in ("quadratic", "logistic"):
        return np.zeros(spec.param_count)
    params = np.zeros(spec.param_count)
    offset = 0
    for d_in, d_out in zip(spec.layers[:-1], spec.layers[1:]):
        bound = np.sqrt(6.0 / d_in)
        params[offset : offset + d_in * d_out] = rng.uniform(
            -bound, bound, size=d_in * d_out
        )
        offset += d_in * d_out + d_out  # biases stay zero
    return params


# ---------- losses and gradients ---------- #


def _select_batch(
    data: ClassifData, batch: Optional[np.ndarray]
) -> Tuple[np.ndarray, np.ndarray]:
    x, y = data
    if batch is None:
        return x, y
    idx = np.asarray(batch, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("batch must contain at least one sample index")
    if idx.min() < 0 or idx.max() >= x.shape[0]:
        raise ValueError(
            f"batch indices out of range [0, {x.shape[0]}): "
            f"min {int(idx.min())}, max {int(idx.max())}"
        )
    return x[idx], y[idx]


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = probs[np.arange(labels.shape[0]), labels]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def mlp_forward(
    spec: ModelSpec, params: np.ndarray, x: np.ndarray
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Forward pass; returns (logits, per-layer post-ReLU activations incl. input)."""
    layers = unpack_layers(spec, params)
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        if i < len(layers) - 1:
            h = np.maximum(z, 0.0)
            acts.append(h)
        else:
            h = z
    return h, acts


def loss_and_grad(
    spec: ModelSpec,
    params: np.ndarray,
    data: ClientData,
    batch: Optional[np.ndarray] = None,
) -> Tuple[float, np.ndarray]:
    """Mean loss over the batch (full data when ``batch`` is None) and its exact gradient.

    Args:
        spec: model family and shape.
        params: flat parameter vector of length ``spec.param_count``.
        data: a QuadraticClient for the quadratic family, else a
            (features, labels) pair.
        batch: optional sample indices into ``data``; quadratic clients
            have no sample dimension, so a batch there is an error.

    Returns:
        (loss, gradient) with the gradient in flat parameter order.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (spec.param_count,):
        raise ValueError(
            f"params length {params.shape[0] if params.ndim == 1 else params.shape} "
            f"does not match spec ({spec.param_count})"
        )

    if spec.tag == "quadratic":
        if not isinstance(data, QuadraticClient):
            raise ValueError("quadratic model expects a QuadraticClient")
        if batch is not None:
            raise ValueError("quadratic clients have no sample dimension to batch over")
        diff = params - data.center
        loss = 0.5 * float(diff @ (data.diag * diff))
        grad = data.diag * diff
        return loss, grad

    x, y = _select_batch(data, batch)  # type: ignore[arg-type]
    n = x.shape[0]

    if spec.tag == "logistic":
        d_in, k = spec.layers
        if x.shape[1] != d_in:
            raise ValueError(f"features have dim {x.shape[1]}, spec expects {d_in}")
        w = params[: d_in * k].reshape(d_in, k)
        b = params[d_in * k :]
        probs = _softmax_rows(x @ w + b)
        loss = _cross_entropy(probs, y)
        delta = probs
        delta[np.arange(n), y] -= 1.0
        delta /= n
        grad = np.concatenate([(x.T @ delta).ravel(), delta.sum(axis=0)])
        return loss, grad

    # mlp: explicit backprop through ReLU layers.
    if x.shape[1] != spec.layers[0]:
        raise ValueError(
            f"features have dim {x.shape[1]}, spec expects {spec.layers[0]}"
        )
    logits, acts = mlp_forward(spec, params, x)
    probs = _softmax_rows(logits)
    loss = _cross_entropy(probs, y)

    layers = unpack_layers(spec, params)
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads: List[np.ndarray] = [None] * len(layers)  # type: ignore[list-item]
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        h_prev = acts[i]
        grads[i] = np.concatenate([(h_prev.T @ delta).ravel(), delta.sum(axis=0)])
        if i > 0:
            delta = (delta @ w.T) * (acts[i] > 0.0)
    return loss, np.concatenate(grads)


def finite_diff_grad(
    spec: ModelSpec,
    params: np.ndarray,
    data: ClientData,
    batch: Optional[np.ndarray] = None,
    h: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient oracle: (F(w + h e_i) - F(w - h e_i)) / (2h) per coordinate.

    Exact for quadratics up to rounding; O(h^2) otherwise.  Near a ReLU
    kink the two-sided difference straddles a slope change and may diverge
    from the analytic gradient — callers probing the mlp family should
    keep pre-activations away from zero.
    """
    if h <= 0.0:
        raise ValueError(f"h must be positive, got {h}")
    params = np.asarray(params, dtype=np.float64)
    grad = np.empty_like(params)
    probe = params.copy()
    for i in range(params.shape[0]):
        orig = probe[i]
        probe[i] = orig + h
        hi, _ = loss_and_grad(spec, probe, data, batch)
        probe[i] = orig - h
        lo, _ = loss_and_grad(spec, probe, data, batch)
        probe[i] = orig
        grad[i] = (hi - lo) / (2.0 * h)
    return grad


def quadratic_optimum(task: QuadraticTask) -> np.ndarray:
    """Closed-form global optimum of the weighted quadratic objective.

    With diagonal Hessians this is the per-coordinate solve
    ``w* = (sum_m alpha_m a_m)^{-1} sum_m alpha_m a_m c_m``.
    """
    abar = np.einsum("m,mp->p", task.weights, task.diags)
    rhs = np.einsum("m,mp->p", task.weights, task.diags * task.centers)
    return rhs / abar


def global_quadratic_loss_grad(
    task: QuadraticTask, params: np.ndarray
) -> Tuple[float, np.ndarray]:
    """Weighted global loss and gradient over all task clients, accumulated in client order."""
    loss = 0.0
    grad = np.zeros_like(params)
    for m in range(task.num_clients):
        l_m, g_m = loss_and_grad(
            ModelSpec(tag="quadratic", layers=(task.dim,)), params, task.client(m)
        )
        loss += task.weights[m] * l_m
        grad += task.weights[m] * g_m
    return loss, grad


def evaluate(
    spec: ModelSpec, params: np.ndarray, test_data: Dataset | ClassifData
) -> Tuple[float, float]:
    """Mean loss and argmax accuracy (ties -> lowest class index) over a test split."""
    if spec.tag == "quadratic":
        raise ValueError("accuracy is undefined for the quadratic family")
    if isinstance(test_data, Dataset):
        x, y = test_data.features, test_data.labels
    else:
        x, y = test_data
    if x.shape[0] == 0:
        raise ValueError("empty test set")

    if spec.tag == "logistic":
        d_in, k = spec.layers
        logits = x @ params[: d_in * k].reshape(d_in, k) + params[d_in * k :]
    else:
        logits, _ = mlp_forward(spec, params, x)
    probs = _softmax_rows(logits)
    loss = _cross_entropy(probs, np.asarray(y, dtype=np.int64))
    predictions = np.argmax(logits, axis=1)  # argmax takes the first (lowest) max
    accuracy = float(np.mean(predictions == y))
    return loss, accuracy
