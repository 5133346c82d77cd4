"""Command-line front end: config files, experiment subcommands, CSV output.

Configs are line-oriented ``key=value`` files ('#' starts a comment);
the full key table is in the README and in ``CONFIG_KEYS`` below.
Unknown keys are errors — silent typos have burned everyone at least
once.  CLI ``key=value`` arguments override file values; dedicated flags
(--seed) override both.

Subcommands:

  run           simulate and write records.csv + manifest.txt
  bench         time aggregators over size sweeps, write bench.csv
  check-bounds  full-batch run, then evaluate the convergence bounds
  gradcheck     compare analytic gradients against central differences

Exit codes: 0 success; 1 validation/config error; 2 run aborted on a
non-finite value; 3 bound check not applicable (precondition failed);
4 bound check violated / gradient check failed.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .aggregation import AGGREGATOR_TAGS, AggregatorKind
from .attacks import ATTACK_TAGS, AttackKind
from .bench import BenchResult, bench_aggregator
from .data import QuadraticClient
from .models import ModelSpec, finite_diff_grad, loss_and_grad, parse_model_spec
from .simulator import (
    NonFiniteError,
    RoundRecord,
    SimConfig,
    SimResult,
    contraction_step_check,
    gap_bounds_check,
    grad_norm_bound_check,
    run_simulation,
)

CSV_COLUMNS = ("t", "eta", "loss", "grad_norm", "gap", "theta_max", "accuracy", "agg_time_ns")
BENCH_COLUMNS = ("agg", "p", "M", "reps", "median_ns", "mean_ns", "min_ns")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NONFINITE = 2
EXIT_NOT_APPLICABLE = 3
EXIT_VIOLATED = 4

#: config key -> (parser, default-as-string or None when optional, help)
CONFIG_KEYS: Dict[str, Tuple[Callable[[str], object], Optional[str], str]] = {}


def _bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _register_keys() -> None:
    def key(name, parser, default, help_text):
        CONFIG_KEYS[name] = (parser, default, help_text)

    key("task", str, "quadratic", "quadratic | mnist")
    key("model", str, "", "model spec, e.g. quadratic:10, logistic:784-10, mlp:784-200-200-10; derived from task when empty")
    key("p", int, "10", "quadratic model dimension")
    key("mu", float, "1.0", "quadratic strong-convexity constant")
    key("L", float, "1.2", "quadratic smoothness constant")
    key("center_spread", float, "0.0", "client-center scatter radius (0 = IID centers)")
    key("mnist_images", str, "", "IDX image file for training")
    key("mnist_labels", str, "", "IDX label file for training")
    key("mnist_test_images", str, "", "IDX image file for evaluation")
    key("mnist_test_labels", str, "", "IDX label file for evaluation")
    key("mnist_subset", int, "0", "cap on training samples (0 = all)")
    key("beta", float, "0.6", "Dirichlet concentration for the label partition")
    key("M", int, "100", "number of clients")
    key("attack", str, "none", " | ".join(ATTACK_TAGS))
    key("c_alpha_bar", float, "0.0", "target Byzantine weight share, in [0, 0.5)")
    key("gaussian_var", float, "90.0", "per-coordinate variance of the gaussian attack")
    key("agg", str, "fed_nga", " | ".join(AGGREGATOR_TAGS))
    key("trim_k", int, None, "per-tail trim count for trimmed_mean")
    key("krum_b", int, None, "assumed Byzantine count for krum (default: actual count)")
    key("gm_tol", float, "1e-10", "geometric-median relative step tolerance")
    key("gm_max_iter", int, "100", "geometric-median iteration cap")
    key("gm_smoothing", float, "1e-08", "geometric-median distance smoothing")
    key("schedule", str, "constant", "constant | polynomial")
    key("eta0", float, "0.02", "base step size")
    key("delta", float, "0.1", "polynomial schedule exponent offset, in (0, 0.5)")
    key("T", int, "10000", "number of rounds")
    key("batch", int, "512", "minibatch size (0 = full batch)")
    key("seed", int, "0", "master seed")
    key("eval_every", int, "0", "accuracy cadence in rounds (0 = final round only)")
    key("telemetry_every", int, "1", "loss/gradient telemetry cadence in rounds")
    key("loss_scale", float, "1.0", "positive constant multiplying every honest local loss")
    key("time_agg", _bool, "false", "record per-round aggregation wall time")


_register_keys()

#: Serialization order for configs and manifests.
_KEY_ORDER = tuple(CONFIG_KEYS)


def _parse_value(key: str, raw: str) -> object:
    if key not in CONFIG_KEYS:
        raise ValueError(f"unknown config key {key!r}")
    parser, _, _ = CONFIG_KEYS[key]
    try:
        return parser(raw.strip())
    except ValueError as exc:
        raise ValueError(f"bad value for {key}: {exc}") from None


def _read_config_lines(path: str) -> Dict[str, str]:
    pairs: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {text!r}")
            key, raw = text.split("=", 1)
            pairs[key.strip()] = raw.strip()
    return pairs


def _build_config(values: Dict[str, object], explicit: set) -> SimConfig:
    task = values["task"]
    p = int(values["p"])  # type: ignore[arg-type]
    model_text = str(values["model"])
    if model_text:
        spec = parse_model_spec(model_text)
        if spec.tag == "quadratic":
            if "p" in explicit and spec.layers != (p,):
                raise ValueError(
                    f"model dimension {spec.layers[0]} conflicts with p={p}"
                )
            p = spec.layers[0]
    elif task == "quadratic":
        spec = ModelSpec(tag="quadratic", layers=(p,))
    else:
        spec = parse_model_spec("logistic")

    attack = AttackKind(tag=str(values["attack"]), gaussian_var=float(values["gaussian_var"]))  # type: ignore[arg-type]
    agg = AggregatorKind(
        tag=str(values["agg"]),
        trim_k=values["trim_k"],  # type: ignore[arg-type]
        krum_b=values["krum_b"],  # type: ignore[arg-type]
        gm_tol=float(values["gm_tol"]),  # type: ignore[arg-type]
        gm_max_iter=int(values["gm_max_iter"]),  # type: ignore[arg-type]
        gm_smoothing=float(values["gm_smoothing"]),  # type: ignore[arg-type]
    )
    cfg = SimConfig(
        task=str(task),
        model=spec,
        p=p,
        mu=float(values["mu"]),  # type: ignore[arg-type]
        L=float(values["L"]),  # type: ignore[arg-type]
        center_spread=float(values["center_spread"]),  # type: ignore[arg-type]
        mnist_images=str(values["mnist_images"]),
        mnist_labels=str(values["mnist_labels"]),
        mnist_test_images=str(values["mnist_test_images"]),
        mnist_test_labels=str(values["mnist_test_labels"]),
        mnist_subset=int(values["mnist_subset"]),  # type: ignore[arg-type]
        beta=float(values["beta"]),  # type: ignore[arg-type]
        num_clients=int(values["M"]),  # type: ignore[arg-type]
        attack=attack,
        c_alpha_bar=float(values["c_alpha_bar"]),  # type: ignore[arg-type]
        agg=agg,
        schedule=str(values["schedule"]),
        eta0=float(values["eta0"]),  # type: ignore[arg-type]
        delta=float(values["delta"]),  # type: ignore[arg-type]
        rounds=int(values["T"]),  # type: ignore[arg-type]
        batch=int(values["batch"]),  # type: ignore[arg-type]
        seed=int(values["seed"]),  # type: ignore[arg-type]
        eval_every=int(values["eval_every"]),  # type: ignore[arg-type]
        telemetry_every=int(values["telemetry_every"]),  # type: ignore[arg-type]
        loss_scale=float(values["loss_scale"]),  # type: ignore[arg-type]
        time_agg=bool(values["time_agg"]),
    )
    cfg.validate()
    return cfg


def parse_config(
    path: Optional[str] = None, overrides: Sequence[str] = ()
) -> SimConfig:
    """Resolve a SimConfig from an optional file plus key=value overrides.

    Overrides win over file values.  Unknown keys and malformed values
    are errors naming the key.
    """
    raw: Dict[str, str] = {}
    if path is not None:
        raw.update(_read_config_lines(path))
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    explicit = set(raw)
    for key in raw:
        if key not in CONFIG_KEYS:
            raise ValueError(f"unknown config key {key!r}")

    values: Dict[str, object] = {}
    for key, (parser, default, _) in CONFIG_KEYS.items():
        if key in raw:
            values[key] = _parse_value(key, raw[key])
        elif default is None:
            values[key] = None
        else:
            values[key] = parser(default)
    return _build_config(values, explicit)


def _format_model(spec: ModelSpec) -> str:
    return f"{spec.tag}:{'-'.join(str(d) for d in spec.layers)}"


def serialize_config(config: SimConfig) -> str:
    """Canonical key=value text; ``parse_config`` on it reproduces ``config``."""
    values: Dict[str, object] = {
        "task": config.task,
        "model": _format_model(config.model),
        "p": config.p,
        "mu": config.mu,
        "L": config.L,
        "center_spread": config.center_spread,
        "mnist_images": config.mnist_images,
        "mnist_labels": config.mnist_labels,
        "mnist_test_images": config.mnist_test_images,
        "mnist_test_labels": config.mnist_test_labels,
        "mnist_subset": config.mnist_subset,
        "beta": config.beta,
        "M": config.num_clients,
        "attack": config.attack.tag,
        "c_alpha_bar": config.c_alpha_bar,
        "gaussian_var": config.attack.gaussian_var,
        "agg": config.agg.tag,
        "trim_k": config.agg.trim_k,
        "krum_b": config.agg.krum_b,
        "gm_tol": config.agg.gm_tol,
        "gm_max_iter": config.agg.gm_max_iter,
        "gm_smoothing": config.agg.gm_smoothing,
        "schedule": config.schedule,
        "eta0": config.eta0,
        "delta": config.delta,
        "T": config.rounds,
        "batch": config.batch,
        "seed": config.seed,
        "eval_every": config.eval_every,
        "telemetry_every": config.telemetry_every,
        "loss_scale": config.loss_scale,
        "time_agg": "true" if config.time_agg else "false",
    }
    lines = []
    for key in _KEY_ORDER:
        value = values[key]
        if value is None:
            continue  # unset optional key; parse_config restores None
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


# ---------- CSV emission ---------- #


def _fmt(value: Optional[float]) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.17g}"


def write_records_csv(records: Sequence[RoundRecord], path: str) -> None:
    """Header plus one row per record; unmeasured fields are empty cells."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(
                [
                    str(rec.t),
                    _fmt(rec.eta),
                    _fmt(rec.loss),
                    _fmt(rec.grad_norm),
                    _fmt(rec.gap),
                    _fmt(rec.theta_max),
                    _fmt(rec.accuracy),
                    "" if rec.agg_time_ns is None else str(int(rec.agg_time_ns)),
                ]
            )


def read_records_csv(path: str) -> List[RoundRecord]:
    """Parse a records CSV back into RoundRecord values ('' -> None)."""
    records: List[RoundRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected header {header!r} in {path}")
        for row in reader:
            opt = lambda s: None if s == "" else float(s)
            records.append(
                RoundRecord(
                    t=int(row[0]),
                    eta=float(row[1]),
                    loss=opt(row[2]),
                    grad_norm=opt(row[3]),
                    gap=opt(row[4]),
                    theta_max=opt(row[5]),
                    accuracy=opt(row[6]),
                    agg_time_ns=None if row[7] == "" else int(row[7]),
                )
            )
    return records


def write_bench_csv(results: Sequence[BenchResult], path: str) -> None:
    """One row per benchmark point with the shared column order."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(BENCH_COLUMNS)
        for r in results:
            writer.writerow(
                [r.agg, str(r.p), str(r.M), str(r.reps),
                 _fmt(r.median_ns), _fmt(r.mean_ns), _fmt(r.min_ns)]
            )


# ---------- run manifest ---------- #


@dataclass
class RunManifest:
    """Resolved config echo plus provenance: version, timestamps, outputs.

    Serialized as a config file with '#' metadata comments, so
    ``parse_config`` on a manifest reproduces the run's SimConfig.
    """

    config: SimConfig
    version: str
    started: str
    finished: Optional[str] = None
    outputs: Tuple[str, ...] = ()

    def render(self) -> str:
        lines = [
            "# fednga run manifest",
            f"# version: {self.version}",
            f"# seed: {self.config.seed}",
            f"# started: {self.started}",
        ]
        if self.finished is not None:
            lines.append(f"# finished: {self.finished}")
        for out in self.outputs:
            lines.append(f"# output: {out}")
        return "\n".join(lines) + "\n" + serialize_config(self.config)


def write_manifest(manifest: RunManifest, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(manifest.render())


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


# ---------- subcommands ---------- #


def _cmd_run(args: argparse.Namespace) -> int:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    cfg = parse_config(args.config, overrides)
    os.makedirs(args.out, exist_ok=True)
    records_path = os.path.join(args.out, "records.csv")
    manifest_path = os.path.join(args.out, "manifest.txt")

    manifest = RunManifest(config=cfg, version=__version__, started=_utcnow())
    write_manifest(manifest, manifest_path)

    result = run_simulation(cfg)
    write_records_csv(result.records, records_path)
    manifest.finished = _utcnow()
    manifest.outputs = (records_path,)
    write_manifest(manifest, manifest_path)

    last = result.records[-1]
    parts = [f"rounds={cfg.rounds}"]
    if last.loss is not None:
        parts.append(f"final_loss={last.loss:.6g}")
    if last.gap is not None:
        parts.append(f"final_gap={last.gap:.6g}")
    if last.accuracy is not None:
        parts.append(f"final_accuracy={last.accuracy:.4f}")
    if result.byzantine:
        parts.append(
            f"byzantine={len(result.byzantine)} (weight {result.achieved_c_alpha_bar:.4f})"
        )
    print(f"run: wrote {records_path} ({', '.join(parts)})")
    return EXIT_OK


def _parse_sweep(text: str) -> List[int]:
    """Parse 'a:b' into the doubling sequence a, 2a, 4a, ... capped at b."""
    try:
        lo_text, hi_text = text.split(":", 1)
        lo, hi = int(lo_text), int(hi_text)
    except ValueError:
        raise ValueError(f"sweep must look like a:b with integers, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise ValueError(f"sweep needs 1 <= a <= b, got {text!r}")
    sizes = []
    s = lo
    while s <= hi:
        sizes.append(s)
        s *= 2
    return sizes


def _bench_kind(tag: str, args: argparse.Namespace) -> AggregatorKind:
    if tag == "trimmed_mean":
        return AggregatorKind(tag=tag, trim_k=args.trim_k)
    if tag == "krum":
        return AggregatorKind(tag=tag, krum_b=args.krum_b)
    return AggregatorKind(tag=tag)


def _cmd_bench(args: argparse.Namespace) -> int:
    tags = [t.strip() for t in args.agg.split(",") if t.strip()]
    if not tags:
        raise ValueError("--agg needs at least one aggregator tag")
    points: List[Tuple[int, int]] = []
    if args.p_sweep:
        points += [(p, args.m) for p in _parse_sweep(args.p_sweep)]
    if args.m_sweep:
        points += [(args.p, m) for m in _parse_sweep(args.m_sweep)]
    if not points:
        points = [(args.p, args.m)]

    results: List[BenchResult] = []
    for tag in tags:
        kind = _bench_kind(tag, args)
        for p, m in points:
            rng = np.random.default_rng([args.seed, p, m])
            res = bench_aggregator(kind, p, m, reps=args.reps, rng=rng)
            results.append(res)
            print(
                f"bench: {tag} p={p} M={m} median={res.median_ns / 1e6:.3f} ms"
            )
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "bench.csv")
    write_bench_csv(results, out_path)
    print(f"bench: wrote {out_path}")
    return EXIT_OK


def _check_line(check) -> str:
    if not check.applicable:
        return f"{check.name}: not applicable ({check.reason})"
    word = "holds" if check.holds else "VIOLATED"
    return f"{check.name}: {word} (lhs={check.lhs:.6g}, rhs={check.rhs:.6g})"


def _cmd_check_bounds(args: argparse.Namespace) -> int:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    cfg = parse_config(args.config, overrides)
    # the bounds model exact gradients observed every round
    cfg = replace(cfg, batch=0, telemetry_every=1)
    cfg.validate()

    os.makedirs(args.out, exist_ok=True)
    records_path = os.path.join(args.out, "records.csv")
    manifest_path = os.path.join(args.out, "manifest.txt")
    manifest = RunManifest(config=cfg, version=__version__, started=_utcnow())
    write_manifest(manifest, manifest_path)

    result = run_simulation(cfg)
    write_records_csv(result.records, records_path)
    manifest.finished = _utcnow()
    manifest.outputs = (records_path,)
    write_manifest(manifest, manifest_path)

    any_na = False
    any_violated = False

    if result.theory is None:
        print("check-bounds: not applicable (task has no exact curvature constants)")
        return EXIT_NOT_APPLICABLE

    th = result.theory
    print(
        f"check-bounds: mu={th.mu:.6g} L={th.L:.6g} G={th.G:.6g} "
        f"theta={th.theta:.6g} c_alpha={th.c_alpha:.6g} gamma={th.gamma:.6g}"
    )

    records = result.records
    f_w0, f_wt = records[0].loss, records[-1].loss
    assert f_w0 is not None and f_wt is not None
    grad_check = grad_norm_bound_check(records, f_w0, f_wt, th.L, th.theta, th.c_alpha)
    print(_check_line(grad_check))
    any_na |= not grad_check.applicable
    any_violated |= grad_check.holds is False

    # per-step contraction over the whole trajectory
    gamma = th.gamma
    if not np.isfinite(gamma) or gamma <= 0.0:
        print(f"contraction: not applicable (gamma = {gamma:.6g} is not positive)")
        any_na = True
    else:
        etas = [r.eta for r in records]
        if max(etas) >= 1.0 / gamma:
            print(
                f"contraction: not applicable (max eta {max(etas):.6g} "
                f"is not below 1/gamma = {1.0 / gamma:.6g})"
            )
            any_na = True
        else:
            bad = []
            for t in range(len(records) - 1):
                gap_t, gap_next = records[t].gap, records[t + 1].gap
                assert gap_t is not None and gap_next is not None
                if not contraction_step_check(gap_t, gap_next, records[t].eta, gamma):
                    bad.append(t)
            if bad:
                print(f"contraction: VIOLATED at {len(bad)} rounds (first t={bad[0]})")
                any_violated = True
            else:
                print(f"contraction: holds at all {len(records) - 1} steps")

    gap0 = records[0].gap
    assert gap0 is not None
    gaps = gap_bounds_check(records, gap0, gamma)
    for check in (gaps.final, gaps.avg):
        print(_check_line(check))
        any_na |= not check.applicable
        any_violated |= check.holds is False

    grad_norms = [r.grad_norm for r in records if r.grad_norm is not None]
    print(f"min grad norm over run: {min(grad_norms):.6g}")

    if any_violated:
        return EXIT_VIOLATED
    if any_na:
        return EXIT_NOT_APPLICABLE
    return EXIT_OK


def _gradcheck_data(spec: ModelSpec, rng: np.random.Generator):
    if spec.tag == "quadratic":
        p = spec.layers[0]
        return QuadraticClient(
            diag=rng.uniform(0.5, 2.0, size=p), center=rng.standard_normal(p)
        )
    n = 8
    features = rng.standard_normal((n, spec.layers[0]))
    labels = rng.integers(0, spec.layers[-1], size=n)
    return features, labels


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    spec = parse_model_spec(args.model)
    if args.trials < 1:
        raise ValueError(f"--trials must be >= 1, got {args.trials}")
    worst = 0.0
    for trial in range(args.trials):
        rng = np.random.default_rng([args.seed, trial])
        params = 0.5 * rng.standard_normal(spec.param_count)
        data = _gradcheck_data(spec, rng)
        _, analytic = loss_and_grad(spec, params, data)
        numeric = finite_diff_grad(spec, params, data)
        err = float(np.max(np.abs(analytic - numeric)))
        rel = err / max(1.0, float(np.linalg.norm(analytic)))
        worst = max(worst, rel)
        print(f"gradcheck: trial {trial} max abs err={err:.3e} rel={rel:.3e}")
    if worst > args.tol:
        print(f"gradcheck: FAILED (worst rel {worst:.3e} > tol {args.tol:.1e})")
        return EXIT_VIOLATED
    print(f"gradcheck: ok (worst rel {worst:.3e} over {args.trials} trials)")
    return EXIT_OK


# ---------- argument parsing ---------- #


class _CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2); our 2 means non-finite
        raise _CliError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fednga", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate and write records.csv + manifest")
    run_p.add_argument("--config", default=None, help="key=value config file")
    run_p.add_argument("--seed", type=int, default=None, help="override the master seed")
    run_p.add_argument("--out", default=".", help="output directory")
    run_p.add_argument("overrides", nargs="*", metavar="key=value",
                       help="config overrides (win over the file)")
    run_p.set_defaults(func=_cmd_run)

    bench_p = sub.add_parser("bench", help="time aggregators, write bench.csv")
    bench_p.add_argument("--agg", default="fed_nga,fedavg",
                         help="comma-separated aggregator tags")
    bench_p.add_argument("--p-sweep", default=None, metavar="a:b",
                         help="doubling sweep over dimension p")
    bench_p.add_argument("--m-sweep", default=None, metavar="a:b",
                         help="doubling sweep over client count M")
    bench_p.add_argument("--p", type=int, default=16384, help="fixed p")
    bench_p.add_argument("--m", type=int, default=100, help="fixed M")
    bench_p.add_argument("--reps", type=int, default=11, help="timed repetitions")
    bench_p.add_argument("--trim-k", type=int, default=1, help="trimmed_mean per-tail k")
    bench_p.add_argument("--krum-b", type=int, default=1, help="krum Byzantine count")
    bench_p.add_argument("--seed", type=int, default=0)
    bench_p.add_argument("--out", default=".", help="output directory")
    bench_p.set_defaults(func=_cmd_bench)

    check_p = sub.add_parser("check-bounds",
                             help="run full-batch and evaluate the convergence bounds")
    check_p.add_argument("--config", default=None)
    check_p.add_argument("--seed", type=int, default=None)
    check_p.add_argument("--out", default=".", help="output directory")
    check_p.add_argument("overrides", nargs="*", metavar="key=value")
    check_p.set_defaults(func=_cmd_check_bounds)

    grad_p = sub.add_parser("gradcheck",
                            help="compare analytic gradients with central differences")
    grad_p.add_argument("--model", default="mlp:20-16-8-4", help="model spec to probe")
    grad_p.add_argument("--trials", type=int, default=5)
    grad_p.add_argument("--tol", type=float, default=1e-4,
                        help="max allowed relative error")
    grad_p.add_argument("--seed", type=int, default=0)
    grad_p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NonFiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONFINITE


if __name__ == "__main__":
    sys.exit(main())
