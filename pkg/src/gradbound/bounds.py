"""Complexity-term and generalization-bound estimators.

Estimator conventions
---------------------
* Everything is computed in float64, and every exponential moment is also
  carried in log space.  The direct (non-log-space) evaluation additionally
  reports overflow: whenever an intermediate exponent exceeds
  ``OVERFLOW_LOG_LIMIT`` (the largest exponent representable in single
  precision, ~88.7), the estimate's ``value`` saturates to +inf with
  ``overflowed=True`` while ``log_space_value`` stays finite.  Single
  precision is the reference because that is where naive pipelines die;
  the saturation is a reported result, not an error.
* Monte-Carlo weight draws come from the prefix-stable streams in
  :mod:`gradbound.gaussians`; given a config seed, results are bitwise
  reproducible and per-sample work can be farmed out as long as the
  reduction stays in index order.
* The m in a bound is the training-sample size of the certificate being
  priced; the dataset argument serves as the proxy for the unknown data
  distribution (callers typically pass a held-out split, and reports
  record that choice).  ``naive_complexity`` is the exception: it uses one
  dataset for both roles and takes m = len(data), matching how the
  unstable direct estimate is formed in practice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset
from .gaussians import GaussianFamily, sample
from .nets import ParamVector, batch_input_grads, batch_losses
from .numerics import logmeanexp, trapezoid_weights

OVERFLOW_LOG_LIMIT = float(np.log(np.finfo(np.float32).max))


@dataclass(frozen=True)
class EstimatorConfig:
    """Knobs shared by the Monte-Carlo estimators."""

    n_weight_samples: int = 64
    alpha_quadrature_nodes: int = 64
    seed: int = 0
    loss_bound_slack: float = 0.5

    def __post_init__(self):
        if self.n_weight_samples < 1:
            raise ValueError("n_weight_samples must be >= 1")
        if self.alpha_quadrature_nodes < 2:
            raise ValueError("alpha_quadrature_nodes must be >= 2")
        if self.loss_bound_slack < 0:
            raise ValueError("loss_bound_slack must be nonnegative")


@dataclass(frozen=True)
class BoundEstimate:
    """One bound (a log of an exponential moment) computed two ways.

    ``log_space_value`` carries the computation entirely in log space and
    stays finite whenever representable.  ``value`` follows the direct
    route through actual exponentials; it equals ``log_space_value`` up to
    rounding until an intermediate exponent saturates, at which point it
    is +inf with ``overflowed=True``.  ``std_error`` is the Monte-Carlo
    standard error of the log-space value (0 for deterministic results).
    """

    value: float
    log_space_value: float
    std_error: float
    n_weight_samples: int
    n_data_points: int
    overflowed: bool

    def __post_init__(self):
        if self.overflowed != math.isinf(self.value):
            raise ValueError("overflowed flag must match value == +inf")
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")


def _log_mc_std_error(exponents: np.ndarray) -> float:
    """Delta-method standard error of log-mean-exp over MC exponents."""
    n = exponents.size
    if n < 2:
        return 0.0
    if not np.all(np.isfinite(exponents)):
        return float("inf")
    y = np.exp(exponents - exponents.max())
    return float(np.std(y, ddof=1) / (y.mean() * math.sqrt(n)))


def _finalize(exponents: np.ndarray, n_data: int,
              direct_values: np.ndarray | None = None,
              intermediate_exponents: np.ndarray | None = None) -> BoundEstimate:
    """Assemble a BoundEstimate from per-weight-sample exponents.

    ``intermediate_exponents`` lists any additional exponents the direct
    (non-log-space) evaluation passes through exp(); they participate in
    the overflow decision but not in the value.
    """
    exponents = np.asarray(exponents, dtype=np.float64)
    all_exps = exponents
    if intermediate_exponents is not None:
        all_exps = np.concatenate([exponents.ravel(),
                                   np.asarray(intermediate_exponents).ravel()])
    overflowed = bool(np.any(~np.isfinite(all_exps))
                      or all_exps.max() > OVERFLOW_LOG_LIMIT)
    log_space = logmeanexp(exponents)
    if overflowed:
        value = float("inf")
    else:
        # Same log-of-mean-of-exponentials, but through the literal direct
        # chain; agrees with log_space whenever nothing saturated.
        if direct_values is None:
            direct_values = np.exp(exponents)
        value = float(np.log(np.mean(direct_values)))
    return BoundEstimate(
        value=value, log_space_value=float(log_space),
        std_error=_log_mc_std_error(exponents),
        n_weight_samples=exponents.size, n_data_points=n_data,
        overflowed=overflowed)


def empirical_risk(params: ParamVector, data: LabeledDataset, kind: str) -> float:
    """Mean per-example loss over the dataset."""
    if data.m < 1:
        raise ValueError("dataset is empty")
    return float(np.mean(batch_losses(params, data.inputs, data.labels, kind)))


def log_mgf_from_losses(losses: np.ndarray, alpha: float) -> float:
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    return logmeanexp(-alpha * np.asarray(losses, dtype=np.float64))


def log_mgf(params: ParamVector, data: LabeledDataset, kind: str, alpha: float) -> float:
    """log M(alpha) with M(alpha) = mean over data of exp(-alpha * loss).

    Shift-stabilized; log M(0) is exactly 0.
    """
    return log_mgf_from_losses(batch_losses(params, data.inputs, data.labels, kind), alpha)


def _loss_matrix(prior: GaussianFamily, data: LabeledDataset, kind: str,
                 cfg: EstimatorConfig) -> np.ndarray:
    draws = sample(prior, cfg.seed, cfg.n_weight_samples)
    return np.stack([batch_losses(w, data.inputs, data.labels, kind) for w in draws])


def naive_complexity_curve(prior: GaussianFamily, data: LabeledDataset, kind: str,
                           lambdas, cfg: EstimatorConfig) -> list[BoundEstimate]:
    """Naive complexity-term estimates sharing one loss matrix across lambdas.

    For each weight sample w the exponent is lam * mean-loss(w)
    + m * log M(lam/m), the factorized form of the exponentiated
    generalization gap with the dataset standing in for the distribution
    (m = len(data)).  The direct-space value multiplies exp(lam * mean-loss)
    by M(lam/m)^m literally, which is exactly the numerically fragile
    product the log-space form avoids.
    """
    losses = _loss_matrix(prior, data, kind, cfg)
    m = data.m
    mean_losses = losses.mean(axis=1)
    out = []
    for lam in lambdas:
        lam = float(lam)
        if lam <= 0:
            raise ValueError("lambda must be positive")
        log_m_hat = np.array([log_mgf_from_losses(row, lam / m) for row in losses])
        exponents = lam * mean_losses + m * log_m_hat
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            m_hat = np.mean(np.exp(-(lam / m) * losses), axis=1)
            direct = np.exp(lam * mean_losses) * m_hat**m
        # The direct chain exponentiates lam * mean-loss before the
        # cancelling MGF power, so that factor drives the overflow flag.
        out.append(_finalize(exponents, n_data=m, direct_values=direct,
                             intermediate_exponents=lam * mean_losses))
    return out


def naive_complexity(prior: GaussianFamily, data: LabeledDataset, kind: str,
                     lam: float, cfg: EstimatorConfig) -> BoundEstimate:
    return naive_complexity_curve(prior, data, kind, [lam], cfg)[0]


def _per_sample_stats(prior: GaussianFamily, data: LabeledDataset, kind: str,
                      cfg: EstimatorConfig):
    """Per weight sample: loss vector and squared input-gradient norms."""
    draws = sample(prior, cfg.seed, cfg.n_weight_samples)
    losses, sq_grads = [], []
    for w in draws:
        losses.append(batch_losses(w, data.inputs, data.labels, kind))
        g = batch_input_grads(w, data.inputs, data.labels, kind)
        sq_grads.append(np.einsum("ij,ij->i", g, g))
    return np.stack(losses), np.stack(sq_grads)


def gradnorm_integral_bound(prior: GaussianFamily, data: LabeledDataset, kind: str,
                            lam: float, m: int, cfg: EstimatorConfig) -> BoundEstimate:
    """Gradient-norm complexity bound with the inner alpha integral.

    Per weight sample the exponent is

        2 lam * E_data[ ||grad_x loss||^2 * I ],
        I = integral over [0, lam/m] of exp(-alpha loss) / M(alpha) d alpha,

    with M(alpha) the empirical MGF of the loss and the integral evaluated
    by composite trapezoid quadrature on ``cfg.alpha_quadrature_nodes``
    uniform nodes.
    """
    if lam <= 0 or m < 1:
        raise ValueError("lambda must be positive and m >= 1")
    losses, sq_grads = _per_sample_stats(prior, data, kind, cfg)
    nodes = np.linspace(0.0, lam / m, cfg.alpha_quadrature_nodes)
    weights = trapezoid_weights(nodes)
    exponents = np.empty(losses.shape[0])
    for i, (lo, gg) in enumerate(zip(losses, sq_grads)):
        log_m = logmeanexp(-nodes[:, None] * lo[None, :], axis=1)
        integrand = np.exp(-nodes[:, None] * lo[None, :] - log_m[:, None])
        integral = weights @ integrand
        exponents[i] = 2.0 * lam * float(np.mean(gg * integral))
    return _finalize(exponents, n_data=data.m)


def linear_gradnorm_bound(k: int, d: int, m: int, lip: float, sigma_p: float,
                          lam: float) -> float:
    """Closed-form complexity bound for linear models with a Lipschitz loss.

    Equals k*d*log(m / (m - 8 L^2 lam^2 sigma_p^2)); +inf at and beyond the
    pole 8 L^2 lam^2 sigma_p^2 >= m.
    """
    q = 8.0 * lip**2 * lam**2 * sigma_p**2
    if q >= m:
        return float("inf")
    return k * d * math.log(m / (m - q))


def linear_bound_lambda_limits(m: int, lip: float, sigma_p: float) -> tuple[float, float]:
    """(lambda where the closed form equals kd*log 2, lambda at its pole).

    The first is sqrt(m)/(4 L sigma_p); the pole sits at
    sqrt(m/8)/(L sigma_p).  Both are exposed because they differ by a
    factor sqrt(2) and callers may care about either edge.
    """
    return (math.sqrt(m) / (4.0 * lip * sigma_p),
            math.sqrt(m / 8.0) / (lip * sigma_p))


def expected_grad_norm(params: ParamVector, data: LabeledDataset, kind: str) -> float:
    """Mean over the dataset of the squared input-gradient norm."""
    if data.m < 1:
        raise ValueError("dataset is empty")
    g = batch_input_grads(params, data.inputs, data.labels, kind)
    return float(np.mean(np.einsum("ij,ij->i", g, g)))


def expected_grad_norm_mc(family: GaussianFamily, data: LabeledDataset, kind: str,
                          cfg: EstimatorConfig) -> tuple[float, float]:
    """MC mean and standard error of expected_grad_norm over weight draws."""
    draws = sample(family, cfg.seed, cfg.n_weight_samples)
    vals = np.array([expected_grad_norm(w, data, kind) for w in draws])
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return float(vals.mean()), se


def estimate_loss_bound(prior: GaussianFamily, data: LabeledDataset, kind: str,
                        cfg: EstimatorConfig) -> float:
    """On-average loss bound: MC estimate of the prior-expected loss + slack."""
    draws = sample(prior, cfg.seed, cfg.n_weight_samples)
    mean_loss = float(np.mean([empirical_risk(w, data, kind) for w in draws]))
    return mean_loss + cfg.loss_bound_slack


def gradnorm_bound_curve(prior: GaussianFamily, data: LabeledDataset, kind: str,
                         lambdas, m: int, loss_bound: float,
                         cfg: EstimatorConfig) -> list[BoundEstimate]:
    """Expected-gradient-norm bounds sharing one set of weight draws.

    Per weight sample the exponent is (2 lam^2 e^b / m) * E||grad_x loss||^2,
    valid for 0 < lam <= m given the on-average loss bound b.
    """
    lambdas = [float(l) for l in lambdas]
    for lam in lambdas:
        if not 0.0 < lam <= m:
            raise ValueError(f"lambda must lie in (0, m]; got {lam} with m={m}")
    _, sq_grads = _per_sample_stats(prior, data, kind, cfg)
    mean_sq = sq_grads.mean(axis=1)
    out = []
    with np.errstate(over="ignore"):
        scale_b = math.exp(loss_bound) if loss_bound < 700 else float("inf")
        for lam in lambdas:
            exponents = (2.0 * lam**2 * scale_b / m) * mean_sq
            out.append(_finalize(exponents, n_data=data.m))
    return out


def gradnorm_bound(prior: GaussianFamily, data: LabeledDataset, kind: str,
                   lam: float, m: int, loss_bound: float,
                   cfg: EstimatorConfig) -> BoundEstimate:
    return gradnorm_bound_curve(prior, data, kind, [lam], m, loss_bound, cfg)[0]


def assemble_risk_bound(emp_risk_q: float, complexity: float, kl: float,
                        lam: float, delta: float) -> float:
    """PAC-Bayes risk bound: emp_risk + (C + KL + log(1/delta)) / lambda."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must lie in (0, 1]")
    if kl < 0:
        raise ValueError("kl must be nonnegative")
    return emp_risk_q + (complexity + kl + math.log(1.0 / delta)) / lam


@dataclass(frozen=True)
class EntropyCheck:
    """Both sides of the Gaussian log-Sobolev inequality, with MC errors."""

    lhs: float
    rhs: float
    lhs_std_error: float
    rhs_std_error: float

    @property
    def margin(self) -> float:
        """rhs + 3 * combined std error - lhs; nonnegative when satisfied."""
        return self.rhs + 3.0 * (self.lhs_std_error + self.rhs_std_error) - self.lhs


def log_sobolev_check(params: ParamVector, gaussian_data: LabeledDataset, kind: str,
                      alpha: float, n: int | None = None) -> EntropyCheck:
    """MC estimate of the entropy inequality on class-conditional Gaussian data.

    lhs = alpha M'(alpha) - M(alpha) log M(alpha) (the entropy of
    exp(-alpha loss)); rhs = 2 E[exp(-alpha loss) alpha^2 ||grad_x loss||^2].
    Uses the first n examples of ``gaussian_data`` (all by default).  The
    lhs standard error comes from the delta method for f(u, v) =
    alpha*u - v log v over the sample means of u = -loss * exp(-alpha loss)
    and v = exp(-alpha loss).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    n = gaussian_data.m if n is None else int(n)
    if not 1 <= n <= gaussian_data.m:
        raise ValueError("n out of range")
    x = gaussian_data.inputs[:n]
    y = gaussian_data.labels[:n]
    losses = batch_losses(params, x, y, kind)
    g = batch_input_grads(params, x, y, kind)
    sq = np.einsum("ij,ij->i", g, g)

    v = np.exp(-alpha * losses)
    u = -losses * v
    w = v * alpha**2 * sq
    m_hat = float(v.mean())
    mprime_hat = float(u.mean())
    lhs = alpha * mprime_hat - m_hat * math.log(m_hat)
    rhs = 2.0 * float(w.mean())

    du = alpha
    dv = -(1.0 + math.log(m_hat))
    cov = np.cov(u, v, ddof=1) if n > 1 else np.zeros((2, 2))
    lhs_var = (du**2 * cov[0, 0] + dv**2 * cov[1, 1] + 2 * du * dv * cov[0, 1]) / n
    lhs_se = math.sqrt(max(lhs_var, 0.0))
    rhs_se = 2.0 * float(w.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return EntropyCheck(lhs=lhs, rhs=rhs, lhs_std_error=lhs_se, rhs_std_error=rhs_se)


def mgf_decomposition_check(losses, lam: float, m: int) -> tuple[float, float]:
    """Exact check that E_S exp(lam (L_D - L_S)) factorizes into
    exp(lam L_D) M(lam/m)^m on a finite uniform loss distribution.

    lhs enumerates all |support|^m equally likely samples S; rhs is the
    closed form.  Both are exact expectations, so they agree to rounding.
    """
    losses = np.asarray(losses, dtype=np.float64).ravel()
    s = losses.size
    if s < 1 or m < 1:
        raise ValueError("need a nonempty support and m >= 1")
    if s**m > 10**6:
        raise ValueError(f"enumeration of {s}^{m} samples is too large")
    l_d = float(losses.mean())
    tuples = np.indices((s,) * m).reshape(m, -1)
    sample_means = losses[tuples].mean(axis=0)
    lhs = float(np.mean(np.exp(lam * (l_d - sample_means))))
    rhs = float(np.exp(lam * l_d) * np.mean(np.exp(-(lam / m) * losses)) ** m)
    return lhs, rhs


def herbst_identity_check(losses, lam: float, m: int,
                          n_nodes: int = 10_001) -> tuple[float, float]:
    """Reconstruct M(lam/m) from the cumulant derivative on a finite support.

    lhs is the exact MGF mean(exp(-(lam/m) loss)).  rhs integrates
    K'(alpha) = (alpha M'(alpha) - M log M) / (alpha^2 M) by dense
    trapezoid quadrature from K(0) = -mean(loss):

        rhs = exp(-(lam/m) L_D + (lam/m) * integral of K' over [0, lam/m]).

    The alpha -> 0 limit of K' is Var(loss)/2, used at the first node.
    """
    losses = np.asarray(losses, dtype=np.float64).ravel()
    if losses.size < 1 or m < 1:
        raise ValueError("need a nonempty support and m >= 1")
    if n_nodes < 2:
        raise ValueError("need at least 2 quadrature nodes")
    upper = lam / m
    l_d = float(losses.mean())
    lhs = float(np.mean(np.exp(-upper * losses)))
    if upper == 0.0:
        return lhs, 1.0

    nodes = np.linspace(0.0, upper, n_nodes)
    e = np.exp(-nodes[1:, None] * losses[None, :])
    m_a = e.mean(axis=1)
    mprime_a = (-losses[None, :] * e).mean(axis=1)
    kprime = np.empty(n_nodes)
    kprime[0] = float(losses.var()) / 2.0
    kprime[1:] = (nodes[1:] * mprime_a - m_a * np.log(m_a)) / (nodes[1:] ** 2 * m_a)
    integral = float(trapezoid_weights(nodes) @ kprime)
    rhs = math.exp(-upper * l_d + upper * integral)
    return lhs, rhs
