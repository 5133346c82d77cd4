"""Federated round loop, learning-rate schedules, heterogeneity bookkeeping,
and the convergence-inequality checkers.

One round: every honest client computes its local gradient at the current
model, Byzantine clients substitute attack vectors, the server aggregates
the uploads with the configured rule and takes the step
``w <- w - eta_t * aggregate``.

Two bookkeeping quantities feed the bound checkers:

  * ``theta`` — running max over rounds and honest clients of the distance
    between the client's normalized full-batch gradient and the normalized
    global gradient (a directional heterogeneity measure in [0, 2]);
  * ``G``     — running max of honest full-batch gradient norms, reported
    with a 1% safety margin.

The checkers verify three inequalities on a finished run: the per-step
contraction ``gap' <= (1 - gamma*eta) gap + eta^2``, its unrolled
final-iterate / averaged-gap forms, and the weighted-average gradient-norm
bound for the non-convex view.  Checks whose preconditions fail report
"not applicable", never failure.  Bound checks require full-batch runs:
minibatch gradient noise is outside what the inequalities model.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from . import aggregation, attacks, models
from .aggregation import AggregatorKind
from .attacks import AttackKind
from .data import (
    Dataset,
    QuadraticTask,
    dirichlet_partition,
    gen_quadratic_task,
    load_mnist_idx,
    select_byzantine,
    shard_weights,
)
from .models import ModelSpec, evaluate, init_params, loss_and_grad, quadratic_optimum
from .vecmath import DEFAULT_EPS

SCHEDULE_KINDS = ("constant", "polynomial")
TASK_KINDS = ("quadratic", "mnist")

#: Absolute slack on inequality checks, absorbing float accumulation.
BOUND_TOL = 1e-9

# RNG stream domains: every random draw is keyed by
# (seed, domain, *extra) so parallel and serial execution agree.
_DOMAIN_TASK = 0
_DOMAIN_BYZANTINE = 1
_DOMAIN_ATTACK = 2
_DOMAIN_BATCH = 3
_DOMAIN_INIT = 4


def stream(seed: int, domain: int, *key: int) -> np.random.Generator:
    """Independent generator keyed by (seed, domain, extra ids)."""
    return np.random.default_rng([seed, domain, *key])


def worker_count() -> int:
    """Worker cap from the FEDNGA_THREADS environment variable (default 1)."""
    raw = os.environ.get("FEDNGA_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"FEDNGA_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"FEDNGA_THREADS must be >= 1, got {n}")
    return n


class NonFiniteError(RuntimeError):
    """A NaN/Inf appeared during simulation; names the first bad quantity."""

    def __init__(self, quantity: str, round_index: int):
        self.quantity = quantity
        self.round_index = round_index
        super().__init__(
            f"non-finite {quantity} at round {round_index}; aborting"
        )


# ---------- configuration ---------- #


@dataclass(frozen=True)
class SimConfig:
    """Complete experiment description; see the config key table in the README."""

    task: str = "quadratic"
    model: ModelSpec = ModelSpec(tag="quadratic", layers=(10,))
    # quadratic task parameters
    p: int = 10
    mu: float = 1.0
    L: float = 1.2
    center_spread: float = 0.0
    # dataset task parameters
    mnist_images: str = ""
    mnist_labels: str = ""
    mnist_test_images: str = ""
    mnist_test_labels: str = ""
    mnist_subset: int = 0  # 0 = all samples
    beta: float = 0.6
    # federation
    num_clients: int = 100
    attack: AttackKind = AttackKind(tag="none")
    c_alpha_bar: float = 0.0
    agg: AggregatorKind = AggregatorKind(tag="fed_nga")
    # optimization
    schedule: str = "constant"
    eta0: float = 0.02
    delta: float = 0.1
    rounds: int = 10000
    batch: int = 512  # 0 = full batch
    seed: int = 0
    # telemetry
    eval_every: int = 0  # accuracy cadence; 0 = final round only
    telemetry_every: int = 1  # loss/grad/theta cadence (minibatch runs may thin this)
    loss_scale: float = 1.0
    time_agg: bool = False

    def validate(self) -> None:
        if self.task not in TASK_KINDS:
            raise ValueError(f"task must be one of {TASK_KINDS}, got {self.task!r}")
        if self.schedule not in SCHEDULE_KINDS:
            raise ValueError(
                f"schedule must be one of {SCHEDULE_KINDS}, got {self.schedule!r}"
            )
        if self.rounds < 1:
            raise ValueError(f"T must be >= 1, got {self.rounds}")
        if self.eta0 <= 0.0:
            raise ValueError(f"eta0 must be positive, got {self.eta0}")
        if self.schedule == "polynomial" and not (0.0 < self.delta < 0.5):
            raise ValueError(f"delta must lie in (0, 0.5), got {self.delta}")
        if not (0.0 <= self.c_alpha_bar < 0.5):
            raise ValueError(
                f"c_alpha_bar must lie in [0, 0.5), got {self.c_alpha_bar}"
            )
        if self.num_clients < 1:
            raise ValueError(f"M must be >= 1, got {self.num_clients}")
        if self.batch < 0:
            raise ValueError(f"batch must be >= 0 (0 = full batch), got {self.batch}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.eval_every < 0:
            raise ValueError(f"eval_every must be >= 0, got {self.eval_every}")
        if self.telemetry_every < 1:
            raise ValueError(
                f"telemetry_every must be >= 1, got {self.telemetry_every}"
            )
        if self.loss_scale <= 0.0:
            raise ValueError(f"loss_scale must be positive, got {self.loss_scale}")
        if self.task == "quadratic":
            if self.model.tag != "quadratic" or self.model.layers != (self.p,):
                raise ValueError(
                    "quadratic task requires model=quadratic with matching dimension"
                )
            if not (0.0 < self.mu <= self.L):
                raise ValueError(f"need 0 < mu <= L, got mu={self.mu}, L={self.L}")
        else:
            if self.model.tag not in ("logistic", "mlp"):
                raise ValueError("mnist task requires a logistic or mlp model")
            if not (self.mnist_images and self.mnist_labels):
                raise ValueError("mnist task requires mnist_images and mnist_labels")


def quadratic_config(**kwargs) -> SimConfig:
    """SimConfig for a quadratic run, keeping model shape and p in sync."""
    p = int(kwargs.pop("p", 10))
    cfg = SimConfig(
        task="quadratic", model=ModelSpec(tag="quadratic", layers=(p,)), p=p, **kwargs
    )
    cfg.validate()
    return cfg


# ---------- telemetry records ---------- #


@dataclass
class RoundRecord:
    """Telemetry for one iterate.  ``None`` marks unmeasured fields.

    Record ``t`` describes the model *before* round t's update: the loss,
    gradient norm, and optimality gap are evaluated at w^t, and eta is the
    step size the round then takes.  A completed run yields T+1 records;
    the terminal record carries the final iterate's telemetry and the
    schedule value eta^T, but no aggregation time.
    """

    t: int
    eta: float
    loss: Optional[float] = None
    grad_norm: Optional[float] = None
    gap: Optional[float] = None
    theta_max: Optional[float] = None
    accuracy: Optional[float] = None
    agg_time_ns: Optional[int] = None


@dataclass
class TheoryParams:
    """Constants feeding the bound checkers: exact where constructed, measured otherwise."""

    mu: float
    L: float
    G: float  # running max of honest full-batch gradient norms, +1% margin
    theta: float  # running max of per-client directional heterogeneity
    c_alpha: float  # honest weight share = 1 - achieved Byzantine share
    gamma: float  # contraction coefficient 2((mu + L - L*theta) c_alpha - L)/G


@dataclass
class ClientState:
    """One client's weight, role, and local data."""

    client_id: int
    weight: float
    byzantine: bool
    data: models.ClientData


@dataclass
class SimResult:
    """Everything a finished run exposes: telemetry plus final state."""

    records: List[RoundRecord]
    w_final: np.ndarray
    weights: np.ndarray
    byzantine: Set[int]
    achieved_c_alpha_bar: float
    w_star: Optional[np.ndarray]
    theory: Optional[TheoryParams]
    zero_grad_events: List[Tuple[int, int]]
    gm_nonconverged_rounds: List[int]
    iterates: Optional[List[np.ndarray]] = None


# ---------- schedules and measurements ---------- #


def lr_schedule(kind: str, eta0: float, delta: float, t: int) -> float:
    """Step size at round t: ``eta0`` (constant) or ``eta0 / (t+1)^(1/2+delta)``."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if eta0 <= 0.0:
        raise ValueError(f"eta0 must be positive, got {eta0}")
    if kind == "constant":
        return eta0
    if kind == "polynomial":
        if not (0.0 < delta < 0.5):
            raise ValueError(f"delta must lie in (0, 0.5), got {delta}")
        return eta0 / float(t + 1) ** (0.5 + delta)
    raise ValueError(f"schedule must be one of {SCHEDULE_KINDS}, got {kind!r}")


def measure_theta(
    honest_grads: Sequence[np.ndarray],
    global_grad: np.ndarray,
    eps: float = DEFAULT_EPS,
) -> Tuple[float, np.ndarray]:
    """Directional heterogeneity of each honest gradient against the global one.

    theta_m = || g_m/|g_m| - g/|g| ||, always in [0, 2]: 0 when parallel,
    sqrt(2) when orthogonal, 2 when antipodal.  Degenerate norms (below
    ``eps``) make that client — or, for the global gradient, the whole
    round — unmeasurable; unmeasurable entries are NaN and callers skip
    them in running maxima.

    Returns:
        (max over measurable clients or NaN, per-client theta values).
    """
    thetas = np.full(len(honest_grads), np.nan)
    g_norm = float(np.linalg.norm(global_grad))
    if g_norm < eps:
        return float("nan"), thetas
    unit_g = global_grad / g_norm
    for i, g_m in enumerate(honest_grads):
        n_m = float(np.linalg.norm(g_m))
        if n_m >= eps:
            thetas[i] = float(np.linalg.norm(g_m / n_m - unit_g))
    if np.all(np.isnan(thetas)):
        return float("nan"), thetas
    return float(np.nanmax(thetas)), thetas


def compute_gamma(
    mu: float, L: float, theta: float, c_alpha: float, G: float
) -> float:
    """Contraction coefficient ``2 ((mu + L - L*theta) c_alpha - L) / G``.

    Callers must check positivity before using it in the contraction or
    gap-bound checks; a non-positive value means the heterogeneity/attack
    intensity exceeds what the strongly-convex analysis tolerates.
    """
    if G <= 0.0:
        raise ValueError(f"G must be positive, got {G}")
    return 2.0 * ((mu + L - L * theta) * c_alpha - L) / G


# ---------- bound checks ---------- #


@dataclass
class InequalityCheck:
    """Outcome of one inequality check.

    ``applicable`` is False when the precondition failed, in which case
    ``holds`` is None and ``reason`` explains why; a failed precondition
    is never reported as a violated bound.
    """

    name: str
    applicable: bool
    lhs: float = float("nan")
    rhs: float = float("nan")
    holds: Optional[bool] = None
    reason: str = ""


def _series(records: Sequence[RoundRecord], attr: str, upto: int) -> np.ndarray:
    vals = []
    for rec in records[: upto + 1]:
        v = getattr(rec, attr)
        if v is None:
            raise ValueError(
                f"record t={rec.t} is missing {attr}; "
                "bound checks need a full-batch run with telemetry every round"
            )
        vals.append(float(v))
    return np.asarray(vals)


def grad_norm_bound_check(
    records: Sequence[RoundRecord],
    f_w0: float,
    f_wT: float,
    L: float,
    theta: float,
    c_alpha: float,
    tol: float = BOUND_TOL,
) -> InequalityCheck:
    """Weighted-average gradient-norm bound over a finished run.

    With coefficient ``c = (2 - theta^2/2) * c_alpha - 1`` (must be
    positive for the bound to apply):

        sum_t eta_t |grad F(w^t)| / sum_t eta_t
            <= (F(w^0) - F(w^T)) / (c * sum_t eta_t)
               + L * sum_t eta_t^2 / (2 c * sum_t eta_t)

    with all sums over t = 0..T-1.
    """
    name = "avg_grad_norm"
    coefficient = (2.0 - theta * theta / 2.0) * c_alpha - 1.0
    if not np.isfinite(coefficient) or coefficient <= 0.0:
        return InequalityCheck(
            name=name,
            applicable=False,
            reason=f"coefficient (2 - theta^2/2)*c_alpha - 1 = {coefficient!r} is not positive",
        )
    t_final = len(records) - 1
    if t_final < 1:
        return InequalityCheck(name=name, applicable=False, reason="needs T >= 1")
    etas = _series(records, "eta", t_final - 1)
    grad_norms = _series(records, "grad_norm", t_final - 1)
    eta_sum = float(etas.sum())
    lhs = float((etas * grad_norms).sum()) / eta_sum
    rhs = (f_w0 - f_wT) / (coefficient * eta_sum) + L * float(
        (etas**2).sum()
    ) / (2.0 * coefficient * eta_sum)
    return InequalityCheck(
        name=name, applicable=True, lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs + tol)
    )


def contraction_step_check(
    gap_t: float, gap_next: float, eta_t: float, gamma: float, tol: float = BOUND_TOL
) -> bool:
    """Single-step contraction: ``gap_next <= (1 - gamma*eta_t) * gap_t + eta_t^2``.

    Requires gamma > 0 and eta_t < 1/gamma.
    """
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if not eta_t < 1.0 / gamma:
        raise ValueError(f"eta_t must be below 1/gamma = {1.0 / gamma}, got {eta_t}")
    return bool(gap_next <= (1.0 - gamma * eta_t) * gap_t + eta_t * eta_t + tol)


@dataclass
class GapBounds:
    """Final-iterate and averaged-gap bound checks for a strongly-convex run."""

    final: InequalityCheck
    avg: InequalityCheck


def gap_bounds_check(
    records: Sequence[RoundRecord],
    gap0: float,
    gamma: float,
    tol: float = BOUND_TOL,
) -> GapBounds:
    """Check both unrolled forms of the contraction recursion on a finished run.

    Final-iterate form (gaps and etas indexed 0..T):

        gap_T <= prod_{t<T} (1 - gamma eta_t) * gap_0
                 + sum_{t<T} eta_t^2 * prod_{i=t+1}^{T-1} (1 - gamma eta_i)

    Averaged form:

        sum_{t<=T} eta_t gap_t / sum_{t<=T} eta_t
            <= (gap_0 + sum_{t<T} eta_t^2) / (gamma * sum_{t<=T} eta_t)

    Applicable only when gamma > 0 and every eta_t (t = 0..T) is below
    1/gamma.
    """
    if gamma <= 0.0 or not np.isfinite(gamma):
        check = InequalityCheck(
            name="", applicable=False, reason=f"gamma = {gamma!r} is not positive"
        )
        return GapBounds(
            final=replace(check, name="final_gap"), avg=replace(check, name="avg_gap")
        )
    t_final = len(records) - 1
    if t_final < 1:
        check = InequalityCheck(name="", applicable=False, reason="needs T >= 1")
        return GapBounds(
            final=replace(check, name="final_gap"), avg=replace(check, name="avg_gap")
        )
    etas = _series(records, "eta", t_final)
    gaps = _series(records, "gap", t_final)
    if float(etas.max()) >= 1.0 / gamma:
        check = InequalityCheck(
            name="",
            applicable=False,
            reason=f"max eta {float(etas.max())} is not below 1/gamma = {1.0 / gamma}",
        )
        return GapBounds(
            final=replace(check, name="final_gap"), avg=replace(check, name="avg_gap")
        )

    # suffix[j] = prod_{i=j}^{T-1} (1 - gamma*eta_i); suffix[T] = 1.
    factors = 1.0 - gamma * etas[:t_final]
    suffix = np.ones(t_final + 1)
    for j in range(t_final - 1, -1, -1):
        suffix[j] = suffix[j + 1] * factors[j]
    final_rhs = float(
        suffix[0] * gap0 + (etas[:t_final] ** 2 * suffix[1 : t_final + 1]).sum()
    )
    final_lhs = float(gaps[t_final])
    final = InequalityCheck(
        name="final_gap",
        applicable=True,
        lhs=final_lhs,
        rhs=final_rhs,
        holds=bool(final_lhs <= final_rhs + tol),
    )

    eta_sum = float(etas.sum())
    avg_lhs = float((etas * gaps).sum()) / eta_sum
    avg_rhs = (gap0 + float((etas[:t_final] ** 2).sum())) / (gamma * eta_sum)
    avg = InequalityCheck(
        name="avg_gap",
        applicable=True,
        lhs=avg_lhs,
        rhs=avg_rhs,
        holds=bool(avg_lhs <= avg_rhs + tol),
    )
    return GapBounds(final=final, avg=avg)


# ---------- the round loop ---------- #


@dataclass
class _Bookkeeping:
    """Mutable running measurements shared across rounds."""

    theta_max: float = float("nan")
    grad_norm_max: float = float("nan")
    zero_grad_events: List[Tuple[int, int]] = field(default_factory=list)
    gm_nonconverged: List[int] = field(default_factory=list)

    def fold_theta(self, value: float) -> None:
        if np.isnan(value):
            return
        if np.isnan(self.theta_max) or value > self.theta_max:
            self.theta_max = value

    def fold_grad_norm(self, value: float) -> None:
        if np.isnan(self.grad_norm_max) or value > self.grad_norm_max:
            self.grad_norm_max = value


@dataclass
class RoundState:
    """Everything one round needs: current iterate plus immutable run context."""

    t: int
    w: np.ndarray
    clients: List[ClientState]
    weights: np.ndarray
    config: SimConfig
    w_star: Optional[np.ndarray]
    test_data: Optional[Dataset]
    books: _Bookkeeping


def _client_gradients(
    state: RoundState, client_ids: Sequence[int], batch_indices: Dict[int, Optional[np.ndarray]]
) -> Dict[int, Tuple[float, np.ndarray]]:
    """Loss/gradient per client at the current iterate, optionally thread-parallel.

    Results are keyed by client id and later reduced in client-index
    order, so the worker count never changes the outcome.
    """
    cfg = state.config

    def one(cid: int) -> Tuple[int, Tuple[float, np.ndarray]]:
        client = state.clients[cid]
        return cid, loss_and_grad(
            cfg.model, state.w, client.data, batch_indices.get(cid)
        )

    workers = worker_count()
    if workers == 1 or len(client_ids) <= 1:
        return dict(one(cid) for cid in client_ids)
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return dict(pool.map(one, client_ids))


def run_round(state: RoundState) -> Tuple[np.ndarray, RoundRecord]:
    """Execute one round and return the next iterate plus its telemetry record.

    Honest uploads are the clients' (mini)batch gradients; Byzantine
    uploads come from the configured attack.  The uploads carry the
    configured loss scale lazily: the normalizing aggregator consumes the
    raw gradients (its output is exactly invariant to any positive common
    scale), every other rule receives the materialized product.
    """
    cfg = state.config
    t = state.t
    all_ids = list(range(len(state.clients)))
    honest_ids = [c.client_id for c in state.clients if not c.byzantine]
    byz_ids = [c.client_id for c in state.clients if c.byzantine]
    full_batch = cfg.task == "quadratic" or cfg.batch == 0
    eta = lr_schedule(cfg.schedule, cfg.eta0, cfg.delta, t)
    scale = cfg.loss_scale

    # -- honest uploads (base gradients; scale applied lazily) -- #
    batch_indices: Dict[int, Optional[np.ndarray]] = {}
    if not full_batch:
        for cid in honest_ids:
            n = state.clients[cid].data[1].shape[0]  # type: ignore[index]
            take = min(cfg.batch, n)
            batch_indices[cid] = stream(
                cfg.seed, _DOMAIN_BATCH, cid, t
            ).choice(n, size=take, replace=False)
    honest_results = _client_gradients(state, honest_ids, batch_indices)
    base_uploads: Dict[int, np.ndarray] = {
        cid: honest_results[cid][1] for cid in honest_ids
    }
    for cid in honest_ids:
        if float(np.linalg.norm(base_uploads[cid])) < DEFAULT_EPS:
            state.books.zero_grad_events.append((t, cid))

    # -- telemetry at the cadence (always full-batch quantities) -- #
    telemetry_due = (t % cfg.telemetry_every == 0) or t == cfg.rounds
    loss = grad_norm = theta_round = None
    if telemetry_due:
        if full_batch:
            full_results = dict(honest_results)
            missing = [cid for cid in all_ids if cid not in full_results]
            full_results.update(_client_gradients(state, missing, {}))
        else:
            full_results = _client_gradients(state, all_ids, {})
        global_loss = 0.0
        global_grad = np.zeros_like(state.w)
        for cid in all_ids:
            l_m, g_m = full_results[cid]
            global_loss += state.weights[cid] * l_m
            global_grad += state.weights[cid] * g_m
        loss = float(scale * global_loss)
        grad_norm = scale * float(np.linalg.norm(global_grad))
        theta_round, _ = measure_theta(
            [full_results[cid][1] for cid in honest_ids], global_grad
        )
        state.books.fold_theta(theta_round)
        for cid in honest_ids:
            state.books.fold_grad_norm(
                scale * float(np.linalg.norm(full_results[cid][1]))
            )
        if theta_round is not None and np.isnan(theta_round):
            theta_round = None
        if not np.isfinite(loss):
            raise NonFiniteError("global loss", t)
        if not np.isfinite(grad_norm):
            raise NonFiniteError("global gradient", t)

    gap = None
    if state.w_star is not None and telemetry_due:
        diff = state.w - state.w_star
        gap = float(diff @ diff)

    # -- terminal pseudo-round: telemetry only, no update -- #
    if t == cfg.rounds:
        accuracy = None
        if cfg.model.tag != "quadratic" and state.test_data is not None:
            _, accuracy = evaluate(cfg.model, state.w, state.test_data)
        return state.w, RoundRecord(
            t=t, eta=eta, loss=loss, grad_norm=grad_norm, gap=gap,
            theta_max=theta_round, accuracy=accuracy, agg_time_ns=None,
        )

    # -- Byzantine uploads -- #
    # (vector, positive scale multiplier) per client, in client-id order
    upload_vecs: List[np.ndarray] = [None] * len(all_ids)  # type: ignore[list-item]
    upload_scales = np.ones(len(all_ids))
    for cid in honest_ids:
        upload_vecs[cid] = base_uploads[cid]
        upload_scales[cid] = scale
    if byz_ids:
        tag = cfg.attack.tag
        if tag == "sign_flip":
            vec = attacks.sign_flip([base_uploads[cid] for cid in honest_ids])
            for cid in byz_ids:
                upload_vecs[cid] = vec
                upload_scales[cid] = scale
        elif tag == "gaussian":
            for cid in byz_ids:
                upload_vecs[cid] = attacks.gaussian_attack(
                    state.w.shape[0],
                    stream(cfg.seed, _DOMAIN_ATTACK, cid, t),
                    cfg.attack.gaussian_var,
                )
        elif tag == "same_value":
            for cid in byz_ids:
                upload_vecs[cid] = attacks.same_value(state.w.shape[0])
        else:  # pragma: no cover - guarded by config validation
            raise ValueError(f"attack {tag!r} has no upload rule")

    # -- aggregate and step -- #
    base_matrix = np.stack(upload_vecs)
    gm_flag: Optional[bool] = None
    t0 = time.perf_counter_ns() if cfg.time_agg else 0
    if cfg.agg.tag == "fed_nga":
        # normalization is exactly invariant to the positive per-upload
        # scales, so the raw vectors are aggregated directly.
        agg_vec = aggregation.fed_nga(base_matrix, state.weights)
    else:
        if np.all(upload_scales == 1.0):
            mat = base_matrix
        else:
            mat = base_matrix * upload_scales[:, None]
        if cfg.agg.tag == "geom_median":
            gm = aggregation.geometric_median(
                mat,
                state.weights,
                tol=cfg.agg.gm_tol,
                max_iter=cfg.agg.gm_max_iter,
                smoothing=cfg.agg.gm_smoothing,
            )
            agg_vec, gm_flag = gm.point, gm.converged
        else:
            agg_vec = aggregation.aggregate(cfg.agg, mat, state.weights)
    agg_time = time.perf_counter_ns() - t0 if cfg.time_agg else None
    if gm_flag is False:
        state.books.gm_nonconverged.append(t)

    if not np.all(np.isfinite(agg_vec)):
        raise NonFiniteError("aggregate", t)
    w_next = state.w - eta * agg_vec
    if not np.all(np.isfinite(w_next)):
        raise NonFiniteError("model parameters", t)

    accuracy = None
    if (
        cfg.model.tag != "quadratic"
        and state.test_data is not None
        and cfg.eval_every > 0
        and t % cfg.eval_every == 0
    ):
        _, accuracy = evaluate(cfg.model, state.w, state.test_data)

    record = RoundRecord(
        t=t, eta=eta, loss=loss, grad_norm=grad_norm, gap=gap,
        theta_max=theta_round, accuracy=accuracy, agg_time_ns=agg_time,
    )
    return w_next, record


def run_simulation(config: SimConfig, track_iterates: bool = False) -> SimResult:
    """Run the full T-round loop described by ``config``.

    Deterministic: identical config and seed give identical records and
    iterates (bit-level in single-threaded mode; the thread pool only
    parallelizes per-client gradient evaluation and reduces in client
    order, so it does not change values either).

    Returns a SimResult with T+1 records; record t describes iterate t.

    Raises:
        NonFiniteError: a NaN/Inf appeared (diverged run), with the round
            index and the first offending quantity.
    """
    config.validate()
    cfg = config

    # -- build task and clients -- #
    task: Optional[QuadraticTask] = None
    test_data: Optional[Dataset] = None
    if cfg.task == "quadratic":
        task = gen_quadratic_task(
            cfg.p, cfg.num_clients, cfg.mu, cfg.L, cfg.center_spread,
            stream(cfg.seed, _DOMAIN_TASK),
        )
        weights = task.weights
        client_data: List[models.ClientData] = [
            task.client(m) for m in range(cfg.num_clients)
        ]
        w_star = quadratic_optimum(task)
        w0 = np.zeros(cfg.p)
    else:
        train = load_mnist_idx(
            cfg.mnist_images, cfg.mnist_labels,
            limit=cfg.mnist_subset if cfg.mnist_subset > 0 else None,
        )
        if cfg.mnist_test_images and cfg.mnist_test_labels:
            test_data = load_mnist_idx(cfg.mnist_test_images, cfg.mnist_test_labels)
        shards = dirichlet_partition(
            train.labels, cfg.num_clients, cfg.beta, stream(cfg.seed, _DOMAIN_TASK)
        )
        weights = shard_weights(shards)
        client_data = [
            (train.features[s.indices], train.labels[s.indices]) for s in shards
        ]
        w_star = None
        w0 = init_params(cfg.model, stream(cfg.seed, _DOMAIN_INIT))

    if cfg.attack.tag != "none" and cfg.c_alpha_bar > 0.0:
        byz, achieved = select_byzantine(
            weights, cfg.c_alpha_bar, stream(cfg.seed, _DOMAIN_BYZANTINE)
        )
    else:
        byz, achieved = set(), 0.0

    agg_kind = cfg.agg
    if agg_kind.tag == "krum" and agg_kind.krum_b is None:
        agg_kind = replace(agg_kind, krum_b=len(byz))
        cfg = replace(cfg, agg=agg_kind)

    clients = [
        ClientState(client_id=m, weight=float(weights[m]), byzantine=m in byz,
                    data=client_data[m])
        for m in range(cfg.num_clients)
    ]

    books = _Bookkeeping()
    state = RoundState(
        t=0, w=w0, clients=clients, weights=np.asarray(weights, dtype=np.float64),
        config=cfg, w_star=w_star, test_data=test_data, books=books,
    )

    records: List[RoundRecord] = []
    iterates: Optional[List[np.ndarray]] = [] if track_iterates else None
    # divergence is detected by the explicit finiteness checks; numpy's
    # overflow warnings on the way there are redundant noise
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(cfg.rounds + 1):
            state.t = t
            if iterates is not None:
                iterates.append(state.w.copy())
            w_next, record = run_round(state)
            records.append(record)
            state.w = w_next

    theory: Optional[TheoryParams] = None
    if task is not None:
        mu_eff = cfg.loss_scale * task.mu
        l_eff = cfg.loss_scale * task.L
        c_alpha = 1.0 - achieved
        g_bound = (
            1.01 * books.grad_norm_max if not np.isnan(books.grad_norm_max) else float("nan")
        )
        if np.isfinite(g_bound) and g_bound > 0.0 and not np.isnan(books.theta_max):
            gamma = compute_gamma(mu_eff, l_eff, books.theta_max, c_alpha, g_bound)
        else:
            gamma = float("nan")
        theory = TheoryParams(
            mu=mu_eff, L=l_eff, G=g_bound, theta=books.theta_max,
            c_alpha=c_alpha, gamma=gamma,
        )

    return SimResult(
        records=records,
        w_final=state.w,
        weights=np.asarray(weights, dtype=np.float64),
        byzantine=byz,
        achieved_c_alpha_bar=achieved,
        w_star=w_star,
        theory=theory,
        zero_grad_events=books.zero_grad_events,
        gm_nonconverged_rounds=books.gm_nonconverged,
        iterates=iterates,
    )
