"""Command-line sweeps over the bound estimators, with CSV/JSON output.

Experiments
-----------
naive-vs-lambda      naive complexity estimates over a lambda grid, showing
                     where the direct evaluation overflows while the
                     log-space column stays finite
gradnorm-vs-variance MC expected squared input-gradient norm per prior scale
                     and depth (plus the linear worst case)
loss-vs-variance     prior-averaged loss and the on-average loss bound b
bound-vs-variance    gradient-norm complexity bound at lambda = sqrt(m), m
fit-subgamma         measured bound curve over lambda plus its sub-gamma fit
train-report         SGD training, losses, bounds at lambda = sqrt(m), m,
                     and KL(posterior || prior), one row per grid point
identity-checks      exact MGF factorization, cumulant reconstruction, and
                     entropy-inequality suites; exit 0 iff all pass

Every output embeds the fully resolved configuration and seed.  Reruns
with the same config are byte-identical apart from the timestamp line.
Grids and sizes come from the JSON config file; the command-line flags
--seed/--out/--format/--data-images/--data-labels/--synthetic override it
(flags > file > defaults).  Infinities are serialized as the string "inf".
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import bounds as bd
from .datasets import IdxFormatError, LabeledDataset, load_idx, split, stratified_sample, synth_gaussian
from .gaussians import (RESERVED_STREAM_BASE, kl_divergence, posterior_family,
                        prior_family, sample, stream_rng)
from .nets import NLL, MlpArchitecture, equal_param_hidden_widths, lipschitz_bound
from .subgamma import fit as subgamma_fit, check as subgamma_check
from .training import TrainConfig, TrainingDiverged, train, evaluate

EXPERIMENTS = (
    "naive-vs-lambda", "gradnorm-vs-variance", "loss-vs-variance",
    "bound-vs-variance", "fit-subgamma", "train-report", "identity-checks",
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4
EXIT_CHECK_FAILED = 5

_CHECK_STREAM = RESERVED_STREAM_BASE + 0xC0


class ConfigError(ValueError):
    pass


class DataSourceError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    """Fully resolved description of one experiment run."""

    experiment: str
    lambda_grid: tuple[float, ...] = ()
    variance_grid: tuple[float, ...] = (0.0004, 0.01, 0.05, 0.1, 0.3, 0.5, 0.7)
    depth_grid: tuple[int, ...] = (1, 2, 3, 4, 5)
    images_path: str | None = None
    labels_path: str | None = None
    synthetic: str | None = None
    train_size: int = 4096
    heldout_size: int = 1024
    data_seed: int = 0
    sigma_q: float = 0.05
    mlp_target_params: int = 20_000
    subgamma_c_max: float | None = None
    loss_kind: str = NLL
    estimator: bd.EstimatorConfig = field(default_factory=bd.EstimatorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out: str | None = None
    format: str = "csv"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; "
                              f"choose from {', '.join(EXPERIMENTS)}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"unknown format {self.format!r}")
        if not self.variance_grid or not self.depth_grid:
            raise ConfigError("variance_grid and depth_grid must be nonempty")
        if any(v <= 0 for v in self.variance_grid):
            raise ConfigError("variance_grid entries must be positive")
        if any(d < 1 for d in self.depth_grid):
            raise ConfigError("depth_grid entries must be >= 1")


# Per-experiment grid defaults, applied when the config leaves them empty.
_DEFAULTS = {
    "naive-vs-lambda": {"lambda_grid": (1.0, 2.0, 5.0, 10.0, 25.0, 50.0, 100.0, 200.0),
                        "variance_grid": (0.1,)},
    "fit-subgamma": {"variance_grid": (0.1,)},
    "train-report": {"depth_grid": (1,)},
}


def arch_for_depth(depth: int, input_dim: int, class_count: int,
                   target_params: int) -> MlpArchitecture:
    """Depth 1 is the bias-free linear model; deeper nets share ~equal size."""
    if depth == 1:
        return MlpArchitecture(input_dim, class_count)
    widths = equal_param_hidden_widths(depth, input_dim, class_count, target_params)
    return MlpArchitecture(input_dim, class_count, widths, bias=True)


def parse_synthetic_spec(text: str) -> dict:
    """Parse "k=2,d=16,sigma=1.0,n_per_class=2560,sep=3.0" style specs."""
    fields = {"k": int, "d": int, "sigma": float, "n_per_class": int, "sep": float}
    out = {"sigma": 1.0, "sep": 3.0}
    for chunk in text.split(","):
        if not chunk.strip():
            continue
        key, _, value = chunk.partition("=")
        key = key.strip()
        if key not in fields:
            raise ConfigError(f"unknown synthetic field {key!r}")
        try:
            out[key] = fields[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad synthetic value for {key}: {value!r}") from exc
    missing = {"k", "d", "n_per_class"} - out.keys()
    if missing:
        raise ConfigError(f"synthetic spec is missing {sorted(missing)}")
    if out["k"] > out["d"]:
        raise ConfigError("synthetic spec needs d >= k (class means are sep * e_y)")
    return out


def build_synthetic(spec_text: str, seed: int) -> LabeledDataset:
    p = parse_synthetic_spec(spec_text)
    means = np.zeros((p["k"], p["d"]))
    means[np.arange(p["k"]), np.arange(p["k"])] = p["sep"]
    return synth_gaussian(p["k"], p["d"], means, p["sigma"], p["n_per_class"], seed)


def resolve_dataset(spec: SweepSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """(train, heldout) splits of the configured source."""
    if spec.images_path or spec.labels_path:
        if not (spec.images_path and spec.labels_path):
            raise DataSourceError("both --data-images and --data-labels are required")
        try:
            data = load_idx(spec.images_path, spec.labels_path)
        except FileNotFoundError as exc:
            raise DataSourceError(f"missing data file: {exc}") from exc
        except IdxFormatError as exc:
            raise DataSourceError(str(exc)) from exc
    elif spec.synthetic:
        data = build_synthetic(spec.synthetic, spec.data_seed)
    else:
        raise DataSourceError(
            "no dataset source: pass --data-images/--data-labels or --synthetic")

    n_need = spec.train_size + spec.heldout_size
    if data.m < n_need:
        raise DataSourceError(
            f"dataset has {data.m} examples, need {n_need} (train + heldout)")
    subset = stratified_sample(data, n_need, spec.data_seed)
    return split(subset, spec.train_size / n_need, spec.data_seed)


def _bound_cells(est: bd.BoundEstimate) -> dict:
    return {"value": est.value, "log_space_value": est.log_space_value,
            "std_error": est.std_error, "overflowed": est.overflowed}


def _run_naive(spec, train_set, heldout):
    columns = ["depth", "sigma_p", "lam", "value", "log_space_value",
               "std_error", "overflowed", "n_weight_samples", "n_data_points"]
    rows = []
    for depth in spec.depth_grid:
        arch = arch_for_depth(depth, train_set.dim, train_set.class_count,
                              spec.mlp_target_params)
        for sigma in spec.variance_grid:
            ests = bd.naive_complexity_curve(
                prior_family(arch, sigma), train_set, spec.loss_kind,
                spec.lambda_grid, spec.estimator)
            for lam, est in zip(spec.lambda_grid, ests):
                rows.append({"depth": depth, "sigma_p": sigma, "lam": lam,
                             **_bound_cells(est),
                             "n_weight_samples": est.n_weight_samples,
                             "n_data_points": est.n_data_points})
    return columns, rows


def _run_gradnorm(spec, train_set, heldout):
    columns = ["depth", "sigma_p", "grad_norm_sq_mean", "grad_norm_sq_std_error",
               "linear_worst_case"]
    lip = lipschitz_bound(spec.loss_kind)
    rows = []
    for depth in spec.depth_grid:
        arch = arch_for_depth(depth, heldout.dim, heldout.class_count,
                              spec.mlp_target_params)
        for sigma in spec.variance_grid:
            mean, se = bd.expected_grad_norm_mc(
                prior_family(arch, sigma), heldout, spec.loss_kind, spec.estimator)
            worst = (lip**2 * sigma**2 * arch.param_count()) if depth == 1 else None
            rows.append({"depth": depth, "sigma_p": sigma,
                         "grad_norm_sq_mean": mean, "grad_norm_sq_std_error": se,
                         "linear_worst_case": worst})
    return columns, rows


def _run_loss(spec, train_set, heldout):
    columns = ["depth", "sigma_p", "avg_prior_loss", "loss_bound"]
    rows = []
    for depth in spec.depth_grid:
        arch = arch_for_depth(depth, heldout.dim, heldout.class_count,
                              spec.mlp_target_params)
        for sigma in spec.variance_grid:
            b = bd.estimate_loss_bound(prior_family(arch, sigma), heldout,
                                       spec.loss_kind, spec.estimator)
            rows.append({"depth": depth, "sigma_p": sigma,
                         "avg_prior_loss": b - spec.estimator.loss_bound_slack,
                         "loss_bound": b})
    return columns, rows


def _run_bound_sweep(spec, train_set, heldout):
    columns = ["depth", "sigma_p", "lam_label", "lam", "value", "log_space_value",
               "std_error", "overflowed", "loss_bound"]
    m = train_set.m
    lam_points = [("sqrt_m", math.sqrt(m)), ("m", float(m))]
    rows = []
    for depth in spec.depth_grid:
        arch = arch_for_depth(depth, heldout.dim, heldout.class_count,
                              spec.mlp_target_params)
        for sigma in spec.variance_grid:
            prior = prior_family(arch, sigma)
            b = bd.estimate_loss_bound(prior, heldout, spec.loss_kind, spec.estimator)
            ests = bd.gradnorm_bound_curve(prior, heldout, spec.loss_kind,
                                           [lam for _, lam in lam_points], m, b,
                                           spec.estimator)
            for (label, lam), est in zip(lam_points, ests):
                rows.append({"depth": depth, "sigma_p": sigma, "lam_label": label,
                             "lam": lam, **_bound_cells(est), "loss_bound": b})
    return columns, rows


def _run_fit_subgamma(spec, train_set, heldout):
    columns = ["depth", "sigma_p", "v", "c", "lambda_max", "residual",
               "n_finite_points", "n_grid_points", "dominates"]
    m = train_set.m
    lambdas = spec.lambda_grid or tuple(np.geomspace(1.0, m, 12))
    rows = []
    for depth in spec.depth_grid:
        arch = arch_for_depth(depth, heldout.dim, heldout.class_count,
                              spec.mlp_target_params)
        for sigma in spec.variance_grid:
            prior = prior_family(arch, sigma)
            b = bd.estimate_loss_bound(prior, heldout, spec.loss_kind, spec.estimator)
            ests = bd.gradnorm_bound_curve(prior, heldout, spec.loss_kind,
                                           lambdas, m, b, spec.estimator)
            grid = [(lam, est.log_space_value) for lam, est in zip(lambdas, ests)
                    if not est.overflowed]
            if not grid:
                rows.append({"depth": depth, "sigma_p": sigma, "v": None, "c": None,
                             "lambda_max": None, "residual": None,
                             "n_finite_points": 0, "n_grid_points": len(lambdas),
                             "dominates": False})
                continue
            fitted = subgamma_fit(grid, c_max=spec.subgamma_c_max)
            rows.append({"depth": depth, "sigma_p": sigma, "v": fitted.v,
                         "c": fitted.c, "lambda_max": fitted.lambda_max,
                         "residual": fitted.residual,
                         "n_finite_points": len(grid), "n_grid_points": len(lambdas),
                         "dominates": subgamma_check(fitted, grid)})
    return columns, rows


def _run_train_report(spec, train_set, heldout):
    columns = ["depth", "prior_variance", "sigma_p", "sigma_q", "m",
               "train_loss", "test_loss", "train_accuracy", "test_accuracy",
               "bound_sqrt_m", "bound_sqrt_m_log", "bound_m", "bound_m_log",
               "kl", "loss_bound", "l_d_proxy"]
    m = train_set.m
    rows = []
    for depth in spec.depth_grid:
        arch = arch_for_depth(depth, train_set.dim, train_set.class_count,
                              spec.mlp_target_params)
        for variance in spec.variance_grid:
            sigma_p = math.sqrt(variance)
            cfg = dataclasses.replace(spec.train, init_stddev=sigma_p)
            weights = train(arch, train_set, spec.loss_kind, cfg)
            train_loss, train_acc = evaluate(weights, train_set, spec.loss_kind)
            test_loss, test_acc = evaluate(weights, heldout, spec.loss_kind)
            posterior = posterior_family(weights, spec.sigma_q)
            b = bd.estimate_loss_bound(posterior, heldout, spec.loss_kind,
                                       spec.estimator)
            sqrt_m, at_m = bd.gradnorm_bound_curve(
                posterior, heldout, spec.loss_kind, [math.sqrt(m), float(m)], m, b,
                spec.estimator)
            kl = kl_divergence(posterior, prior_family(arch, sigma_p))
            rows.append({"depth": depth, "prior_variance": variance,
                         "sigma_p": sigma_p, "sigma_q": spec.sigma_q, "m": m,
                         "train_loss": train_loss, "test_loss": test_loss,
                         "train_accuracy": train_acc, "test_accuracy": test_acc,
                         "bound_sqrt_m": sqrt_m.value,
                         "bound_sqrt_m_log": sqrt_m.log_space_value,
                         "bound_m": at_m.value, "bound_m_log": at_m.log_space_value,
                         "kl": kl, "loss_bound": b, "l_d_proxy": "heldout"})
    return columns, rows


def _identity_check_rows(spec):
    rng = stream_rng(spec.estimator.seed, _CHECK_STREAM)
    rows = []

    for i in range(50):
        losses = rng.uniform(0.0, 3.0, size=rng.integers(2, 7))
        m = int(rng.integers(1, 5))
        lam = float(rng.uniform(0.0, 3.0))
        lhs, rhs = bd.mgf_decomposition_check(losses, lam, m)
        gap = abs(lhs - rhs) / max(abs(lhs), 1e-300)
        rows.append({"check": "mgf-decomposition", "case": i, "lhs": lhs, "rhs": rhs,
                     "gap": gap, "passed": gap <= 1e-12})

    for i in range(50):
        losses = rng.uniform(0.0, 3.0, size=rng.integers(2, 7))
        m = int(rng.integers(1, 5))
        lam = float(rng.uniform(0.0, 2.0))
        lhs, rhs = bd.herbst_identity_check(losses, lam, m)
        gap = abs(lhs - rhs) / max(abs(lhs), 1e-300)
        rows.append({"check": "herbst-identity", "case": i, "lhs": lhs, "rhs": rhs,
                     "gap": gap, "passed": gap <= 1e-6})

    for i in range(20):
        d = int(rng.integers(4, 17))
        k = int(rng.integers(2, 4))
        means = rng.normal(0.0, 0.7, size=(k, d))
        data = synth_gaussian(k, d, means, 1.0, 20_000,
                              seed=int(rng.integers(0, 2**31)))
        arch = MlpArchitecture(d, k)
        w = sample(prior_family(arch, float(rng.uniform(0.05, 0.3))),
                   int(rng.integers(0, 2**31)), 1)[0]
        alpha = float(rng.uniform(0.05, 0.8))
        res = bd.log_sobolev_check(w, data, spec.loss_kind, alpha)
        rows.append({"check": "log-sobolev", "case": i, "lhs": res.lhs,
                     "rhs": res.rhs, "gap": res.margin, "passed": res.margin >= 0.0})

    columns = ["check", "case", "lhs", "rhs", "gap", "passed"]
    return columns, rows


_RUNNERS = {
    "naive-vs-lambda": _run_naive,
    "gradnorm-vs-variance": _run_gradnorm,
    "loss-vs-variance": _run_loss,
    "bound-vs-variance": _run_bound_sweep,
    "fit-subgamma": _run_fit_subgamma,
    "train-report": _run_train_report,
}


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        if math.isnan(value):
            return "nan"
        return "inf" if value > 0 else "-inf"
    return value


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def write_output(path: str, spec: SweepSpec, columns, rows) -> None:
    config = dataclasses.asdict(spec)
    stamp = datetime.now(timezone.utc).isoformat()
    if spec.format == "json":
        doc = {"config": config, "timestamp": stamp, "columns": list(columns),
               "rows": [{k: _json_safe(v) for k, v in row.items()} for row in rows]}
        with open(path, "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
        return
    with open(path, "w", newline="") as f:
        f.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        f.write("# timestamp: " + stamp + "\n")
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_cell(row[c]) for c in columns])


def run(spec: SweepSpec) -> int:
    """Execute one sweep; returns the process exit status."""
    if spec.experiment == "identity-checks":
        columns, rows = _identity_check_rows(spec)
        all_passed = all(row["passed"] for row in rows)
    else:
        train_set, heldout = resolve_dataset(spec)
        if spec.experiment == "naive-vs-lambda" and not spec.lambda_grid:
            raise ConfigError("naive-vs-lambda needs a nonempty lambda_grid")
        columns, rows = _RUNNERS[spec.experiment](spec, train_set, heldout)
        all_passed = True

    out = spec.out or f"{spec.experiment}.{spec.format}"
    write_output(out, spec, columns, rows)
    return EXIT_OK if all_passed else EXIT_CHECK_FAILED


def _spec_from_sources(experiment: str, file_config: dict, flags: dict) -> SweepSpec:
    """Merge defaults < per-experiment defaults < config file < flags."""
    merged: dict = dict(_DEFAULTS.get(experiment, {}))
    est, tr = {}, {}
    for src in (file_config, flags):
        for key, value in src.items():
            if value is None:
                continue
            if key == "estimator":
                est.update(value)
            elif key == "train":
                tr.update(value)
            elif key == "seed":
                est["seed"] = tr["seed"] = merged["data_seed"] = int(value)
            else:
                merged[key] = value
    merged.pop("experiment", None)
    for grid in ("lambda_grid", "variance_grid", "depth_grid"):
        if grid in merged:
            merged[grid] = tuple(merged[grid])
    try:
        return SweepSpec(experiment=experiment,
                         estimator=bd.EstimatorConfig(**est),
                         train=TrainConfig(**tr), **merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _error_record(kind: str, message: str) -> None:
    json.dump({"error": kind, "message": message}, sys.stderr)
    sys.stderr.write("\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gradbound",
        description="Generalization-bound experiments over linear models and MLPs")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="JSON config file with grids and settings")
    parser.add_argument("--seed", type=int, help="override every seed in the run")
    parser.add_argument("--out", help="output path (default <experiment>.<format>)")
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument("--data-images", dest="images_path", help="IDX image file")
    parser.add_argument("--data-labels", dest="labels_path", help="IDX label file")
    parser.add_argument("--synthetic",
                        help="inline synthetic source, e.g. k=2,d=16,n_per_class=2560")
    args = parser.parse_args(argv)

    file_config = {}
    if args.config:
        try:
            with open(args.config) as f:
                file_config = json.load(f)
        except FileNotFoundError:
            _error_record("config", f"config file not found: {args.config}")
            return EXIT_CONFIG
        except json.JSONDecodeError as exc:
            _error_record("config", f"config file is not valid JSON: {exc}")
            return EXIT_CONFIG

    flags = {"seed": args.seed, "out": args.out, "format": args.format,
             "images_path": args.images_path, "labels_path": args.labels_path,
             "synthetic": args.synthetic}
    try:
        spec = _spec_from_sources(args.experiment, file_config, flags)
        return run(spec)
    except ConfigError as exc:
        _error_record("config", str(exc))
        return EXIT_CONFIG
    except DataSourceError as exc:
        _error_record("data", str(exc))
        return EXIT_DATA
    except TrainingDiverged as exc:
        _error_record("diverged", str(exc))
        return EXIT_DIVERGED
    except Exception as exc:  # pragma: no cover - defensive
        _error_record("internal", f"{type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
