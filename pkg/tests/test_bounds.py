import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gradbound import bounds as bd
from gradbound.datasets import LabeledDataset, synth_gaussian
from gradbound.gaussians import prior_family, sample
from gradbound.nets import (
    NLL,
    MlpArchitecture,
    ParamVector,
    batch_input_grads,
    batch_losses,
    grad_input,
    lipschitz_bound,
    loss,
)
from gradbound.numerics import logmeanexp

CFG = bd.EstimatorConfig(n_weight_samples=8, alpha_quadrature_nodes=64, seed=11)


def small_synth(seed=5, n=32, d=4, k=2, sigma=1.0):
    means = np.zeros((k, d))
    means[np.arange(k), np.arange(k)] = 1.5
    return synth_gaussian(k, d, means, sigma, n, seed=seed)


def constant_dataset(k=3, d=4, n=16):
    """Identical inputs with one label: the loss is constant per weight draw."""
    inputs = np.tile(np.linspace(0.1, 0.4, d), (n, 1))
    return LabeledDataset(inputs, np.ones(n, dtype=np.int64), k)


# ----------------------------------------------------------- empirical risk


def test_empirical_risk_uniform_model(synth2):
    arch = MlpArchitecture(synth2.dim, synth2.class_count)
    zero = ParamVector(np.zeros(arch.param_count()), arch)
    assert bd.empirical_risk(zero, synth2, NLL) == pytest.approx(math.log(2), abs=1e-12)


def test_empirical_risk_single_example_and_oracle():
    single = LabeledDataset(np.array([[0.2, -0.4, 1.0, 0.3]]), np.array([2]), 2)
    arch = MlpArchitecture(single.dim, single.class_count)
    rng = np.random.default_rng(0)
    p = ParamVector(rng.normal(0, 1, arch.param_count()), arch)
    only = loss(p, single.inputs[0], int(single.labels[0]), NLL)
    assert bd.empirical_risk(p, single, NLL) == pytest.approx(only, rel=1e-15)

    data = small_synth(n=64)
    total = math.fsum(loss(p, data.inputs[i], int(data.labels[i]), NLL)
                      for i in range(data.m))
    assert bd.empirical_risk(p, data, NLL) == pytest.approx(total / data.m, rel=1e-12)


# ------------------------------------------------------------------ log MGF


def test_log_mgf_at_zero_is_exactly_zero():
    data = small_synth()
    arch = MlpArchitecture(data.dim, data.class_count)
    p = ParamVector(np.ones(arch.param_count()), arch)
    assert bd.log_mgf(p, data, NLL, 0.0) == 0.0


def test_log_mgf_constant_loss():
    for alpha in (0.25, 1.0, 2.0):
        assert bd.log_mgf_from_losses(np.full(9, 1.7), alpha) == pytest.approx(
            -alpha * 1.7, rel=1e-12)


def test_log_mgf_three_point_support_oracle():
    mp = pytest.importorskip("mpmath")
    with mp.workprec(200):
        expected = float(mp.log((1 + mp.e**-1 + mp.e**-2) / 3))
    got = bd.log_mgf_from_losses(np.array([0.0, 1.0, 2.0]), 1.0)
    assert got == pytest.approx(expected, rel=1e-13)
    assert got == pytest.approx(-0.6910063242237294, abs=1e-12)  # from the oracle


@given(st.lists(st.floats(0, 20), min_size=1, max_size=10),
       st.floats(0, 1), st.floats(0, 1))
def test_log_mgf_monotone_in_alpha(losses, a1, a2):
    lo, hi = sorted([a1, a2])
    l = np.array(losses)
    assert bd.log_mgf_from_losses(l, lo) >= bd.log_mgf_from_losses(l, hi) - 1e-12


def test_log_mgf_monotone_on_model_draws():
    data = small_synth(n=64)
    arch = MlpArchitecture(data.dim, data.class_count, (6,), bias=True)
    alphas = np.linspace(0.0, 1.0, 9)
    for w in sample(prior_family(arch, 0.3), 31, 8):
        vals = [bd.log_mgf(w, data, NLL, a) for a in alphas]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


# --------------------------------------------------------- naive complexity


def test_naive_complexity_vanishes_as_lambda_to_zero():
    data = small_synth()
    prior = prior_family(MlpArchitecture(data.dim, data.class_count), 0.3)
    est = bd.naive_complexity(prior, data, NLL, 1e-8, CFG)
    assert abs(est.log_space_value) < 1e-6
    assert abs(est.value) < 1e-6 and not est.overflowed


def test_naive_complexity_degenerate_gap_is_zero():
    # identical inputs + one label: mean loss equals each loss, so the
    # factorized exponent cancels per weight draw
    data = constant_dataset()
    prior = prior_family(MlpArchitecture(data.dim, data.class_count), 0.5)
    est = bd.naive_complexity(prior, data, NLL, 3.0, CFG)
    assert abs(est.log_space_value) < 1e-9
    assert est.std_error < 1e-9


def test_naive_complexity_overflow_policy():
    data = small_synth(sigma=2.0)
    prior = prior_family(MlpArchitecture(data.dim, data.class_count), 4.0)
    curve = bd.naive_complexity_curve(prior, data, NLL, [0.5, 500.0], CFG)
    small, big = curve
    assert not small.overflowed and math.isfinite(small.value)
    assert big.overflowed and big.value == math.inf
    assert math.isfinite(big.log_space_value)
    with pytest.raises(ValueError):
        bd.naive_complexity(prior, data, NLL, 0.0, CFG)


def test_naive_log_space_consistency_when_finite():
    # value (direct chain) and log_space_value are the same number when
    # nothing saturated; no exp is needed to compare them
    data = small_synth(n=64, sigma=2.0)
    prior = prior_family(MlpArchitecture(data.dim, data.class_count), 1.0)
    for lam in (4.0, 8.0, 16.0):
        est = bd.naive_complexity(prior, data, NLL, lam, CFG)
        assert not est.overflowed
        assert abs(est.value - est.log_space_value) <= 1e-9 * abs(est.value)


# ------------------------------------------------- integral gradient bound


def test_integral_bound_empty_interval():
    data = small_synth()
    prior = prior_family(MlpArchitecture(data.dim, data.class_count), 0.3)
    est = bd.gradnorm_integral_bound(prior, data, NLL, 1e-9, 1, CFG)
    assert abs(est.log_space_value) < 1e-6


def test_integral_bound_zero_gradient_prior():
    data = small_synth()
    prior = prior_family(MlpArchitecture(data.dim, data.class_count), 1e-30)
    est = bd.gradnorm_integral_bound(prior, data, NLL, 8.0, data.m, CFG)
    assert abs(est.log_space_value) < 1e-9


def dense_quadrature_oracle(prior, data, kind, lam, m, seed, n_weight, nodes_n):
    """Straight-loop reimplementation with its own dense trapezoid rule."""
    exps = []
    for w in sample(prior, seed, n_weight):
        lo = batch_losses(w, data.inputs, data.labels, kind)
        g = batch_input_grads(w, data.inputs, data.labels, kind)
        sq = (g**2).sum(axis=1)
        nodes = np.linspace(0.0, lam / m, nodes_n)
        log_m = np.array([logmeanexp(-a * lo) for a in nodes])
        integrals = []
        for li in lo:
            f = np.exp(-nodes * li - log_m)
            integrals.append(float(np.sum((f[1:] + f[:-1]) / 2 * np.diff(nodes))))
        exps.append(2 * lam * float(np.mean(sq * np.array(integrals))))
    return logmeanexp(np.array(exps))


def test_integral_bound_matches_dense_quadrature_oracle():
    data = small_synth(n=8, d=2, k=2)
    prior = prior_family(MlpArchitecture(2, 2), 0.5)
    lam, m = 6.0, 8
    cfg = bd.EstimatorConfig(n_weight_samples=4, alpha_quadrature_nodes=64, seed=11)
    est = bd.gradnorm_integral_bound(prior, data, NLL, lam, m, cfg)
    oracle = dense_quadrature_oracle(prior, data, NLL, lam, m, 11, 4, 10_001)
    assert est.log_space_value == pytest.approx(oracle, rel=1e-4)
    # node-doubling convergence
    prev = est.log_space_value
    for nodes in (128, 256):
        cfg_n = bd.EstimatorConfig(n_weight_samples=4, alpha_quadrature_nodes=nodes, seed=11)
        cur = bd.gradnorm_integral_bound(prior, data, NLL, lam, m, cfg_n).log_space_value
        assert abs(cur - prev) <= 1e-4 * abs(prev)
        prev = cur


# ------------------------------------------------------- linear closed form


def test_linear_bound_exact_log2_point():
    for (k, d, m, sigma) in [(10, 784, 60_000, 0.1), (3, 7, 128, 0.5), (2, 2, 16, 1.0)]:
        lip = lipschitz_bound(NLL)
        lam = math.sqrt(m) / (4 * lip * sigma)
        got = bd.linear_gradnorm_bound(k, d, m, lip, sigma, lam)
        assert abs(got - k * d * math.log(2.0)) <= 1e-12 * k * d


def test_linear_bound_limits_and_pole():
    assert bd.linear_gradnorm_bound(2, 3, 100, 1.0, 1.0, 1e-12) < 1e-12
    assert bd.linear_gradnorm_bound(2, 3, 100, 1.0, 1.0, 10.0) == math.inf
    lam_log2, lam_pole = bd.linear_bound_lambda_limits(100, 1.0, 1.0)
    assert lam_pole == pytest.approx(math.sqrt(2) * lam_log2)
    assert bd.linear_gradnorm_bound(2, 3, 100, 1.0, 1.0, lam_pole * 0.999) < math.inf
    assert bd.linear_gradnorm_bound(2, 3, 100, 1.0, 1.0, lam_pole) == math.inf


@given(st.floats(0.01, 2.0), st.floats(0.01, 2.0), st.floats(0.01, 2.0),
       st.floats(1.01, 1.5))
def test_linear_bound_strictly_increasing(lam, sigma, lip, factor):
    m, k, d = 1000, 3, 5
    base = bd.linear_gradnorm_bound(k, d, m, lip, sigma, lam)
    if not math.isfinite(base):
        return
    for bumped in [
        bd.linear_gradnorm_bound(k, d, m, lip, sigma, lam * factor),
        bd.linear_gradnorm_bound(k, d, m, lip, sigma * factor, lam),
        bd.linear_gradnorm_bound(k, d, m, lip * factor, sigma, lam),
    ]:
        assert bumped > base


# ------------------------------------------------------ expected grad norm


def test_expected_grad_norm_zero_weights():
    data = small_synth()
    arch = MlpArchitecture(data.dim, data.class_count)
    zero = ParamVector(np.zeros(arch.param_count()), arch)
    assert bd.expected_grad_norm(zero, data, NLL) == 0.0


def test_expected_grad_norm_loop_oracle_and_linear_cap():
    data = small_synth(n=32)
    arch = MlpArchitecture(data.dim, data.class_count)
    rng = np.random.default_rng(2)
    lip = lipschitz_bound(NLL)
    for _ in range(10):
        p = ParamVector(rng.normal(0, 0.5, arch.param_count()), arch)
        per_example = [
            float(np.sum(grad_input(p, data.inputs[i], int(data.labels[i]), NLL) ** 2))
            for i in range(data.m)]
        got = bd.expected_grad_norm(p, data, NLL)
        assert got == pytest.approx(math.fsum(per_example) / data.m, rel=1e-12)
        assert got <= lip**2 * np.sum(p.values**2) + 1e-12


# ------------------------------------------------------- loss bound and b


def test_estimate_loss_bound_degenerate_prior(synth2):
    arch = MlpArchitecture(synth2.dim, synth2.class_count)
    prior = prior_family(arch, 1e-30)
    b = bd.estimate_loss_bound(prior, synth2, NLL, CFG)
    assert b == pytest.approx(math.log(2) + CFG.loss_bound_slack, abs=1e-9)


def test_estimate_loss_bound_monotone_in_sigma(synth2):
    arch = MlpArchitecture(synth2.dim, synth2.class_count, (8,), bias=True)
    lo = bd.estimate_loss_bound(prior_family(arch, 0.05), synth2, NLL, CFG)
    hi = bd.estimate_loss_bound(prior_family(arch, 0.5), synth2, NLL, CFG)
    assert hi >= lo


# --------------------------------------------------- expected-norm bound


def test_gradnorm_bound_degenerate_prior(synth2):
    arch = MlpArchitecture(synth2.dim, synth2.class_count)
    prior = prior_family(arch, 1e-30)
    est = bd.gradnorm_bound(prior, synth2, NLL, 4.0, synth2.m, 1.0, CFG)
    assert abs(est.log_space_value) < 1e-9


def test_gradnorm_bound_rejects_lambda_above_m(synth2):
    arch = MlpArchitecture(synth2.dim, synth2.class_count)
    prior = prior_family(arch, 0.1)
    with pytest.raises(ValueError):
        bd.gradnorm_bound(prior, synth2, NLL, synth2.m + 1.0, synth2.m, 1.0, CFG)


def test_integral_bound_dominated_by_expected_norm_bound(synth2):
    # shared weight draws: the alpha integral is at most e^b * lam / m
    cfg = bd.EstimatorConfig(n_weight_samples=16, alpha_quadrature_nodes=128, seed=3)
    arch = MlpArchitecture(synth2.dim, synth2.class_count, (6,), bias=True)
    prior = prior_family(arch, 0.1)
    b = bd.estimate_loss_bound(prior, synth2, NLL, cfg)
    m = synth2.m
    for lam in (1.0, 16.0, 128.0, float(m)):
        tight = bd.gradnorm_integral_bound(prior, synth2, NLL, lam, m, cfg)
        loose = bd.gradnorm_bound(prior, synth2, NLL, lam, m, b, cfg)
        slack = 3.0 * (tight.std_error + loose.std_error)
        assert tight.log_space_value <= loose.log_space_value + slack


# ------------------------------------------------------------ assembly


def test_assemble_trivial_and_infinite():
    assert bd.assemble_risk_bound(0.42, 0.0, 0.0, 5.0, 1.0) == pytest.approx(0.42)
    assert bd.assemble_risk_bound(0.1, math.inf, 3.0, 5.0, 0.5) == math.inf


def test_assemble_published_scale_numbers():
    # one-layer row: emp 0.253, C 0.141, KL 1478, delta 0.05, lam sqrt(60000)
    lam = math.sqrt(60_000)
    got = bd.assemble_risk_bound(0.253, 0.141, 1478.0, lam, 0.05)
    expected = 0.253 + (0.141 + 1478.0 + math.log(20.0)) / lam
    assert got == pytest.approx(expected, rel=1e-15)
    assert got == pytest.approx(6.30, abs=5e-3)


@given(st.floats(0, 5), st.floats(0, 100), st.floats(0.001, 1), st.floats(0.5, 50),
       st.floats(1.01, 2.0))
def test_assemble_monotonicity(c, kl, delta, lam, factor):
    base = bd.assemble_risk_bound(0.3, c, kl, lam, delta)
    assert bd.assemble_risk_bound(0.3, c * factor + 0.1, kl, lam, delta) >= base
    assert bd.assemble_risk_bound(0.3, c, kl * factor + 0.1, lam, delta) >= base
    assert bd.assemble_risk_bound(0.3, c, kl, lam, delta / factor) >= base
    # positive penalty: strictly decreasing in lambda
    assert bd.assemble_risk_bound(0.3, c + 1.0, kl, lam * factor, delta) < \
        bd.assemble_risk_bound(0.3, c + 1.0, kl, lam, delta)


def test_bound_estimate_invariant_enforced():
    with pytest.raises(ValueError):
        bd.BoundEstimate(value=1.0, log_space_value=0.0, std_error=0.0,
                         n_weight_samples=1, n_data_points=1, overflowed=True)
    with pytest.raises(ValueError):
        bd.BoundEstimate(value=math.inf, log_space_value=0.0, std_error=0.0,
                         n_weight_samples=1, n_data_points=1, overflowed=False)
