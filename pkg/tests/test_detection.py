from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from sparse_stealth import detection
from sparse_stealth import (
    DetectionConfig,
    InfeasibleCovarianceError,
    ValidationError,
    detection_probability,
    false_alarm_probability,
    greedy_independent,
    log_likelihood_ratio,
    roc_curve,
    threshold_for_false_alarm,
)

from .conftest import make_random_model


def test_log_likelihood_ratio_scalar(scalar_model):
    assert log_likelihood_ratio(scalar_model, [[2.0]], [0.0]) == pytest.approx(-0.5 * math.log(2.0))
    # y^2 (1/2 - 1/4) / 2 - log(2) / 2
    assert log_likelihood_ratio(scalar_model, [[2.0]], [2.0]) == pytest.approx(0.5 - 0.5 * math.log(2.0))


def test_log_likelihood_ratio_stacked(scalar_model):
    values = log_likelihood_ratio(scalar_model, [[2.0]], [[0.0], [2.0], [-2.0]])
    assert isinstance(values, np.ndarray)
    np.testing.assert_allclose(values, [-0.5 * math.log(2.0), 0.5 - 0.5 * math.log(2.0), 0.5 - 0.5 * math.log(2.0)])


def test_without_attack_the_ratio_is_one(ieee9_model):
    S = np.zeros((ieee9_model.m, ieee9_model.m))
    cfg = DetectionConfig(tau=2.0, n_samples=5_000, seed=1)
    assert detection_probability(ieee9_model, S, cfg).estimate == 0.0
    assert false_alarm_probability(ieee9_model, S, cfg).estimate == 0.0
    below = DetectionConfig(tau=0.5, n_samples=5_000, seed=1)
    assert detection_probability(ieee9_model, S, below).estimate == 1.0
    assert false_alarm_probability(ieee9_model, S, below).estimate == 1.0


def test_scalar_probabilities_match_closed_form(scalar_model):
    # under either law L >= 1 iff y^2 >= 4 log 2
    cut = math.sqrt(4.0 * math.log(2.0))
    cfg = DetectionConfig(tau=1.0, n_samples=100_000, seed=7)
    detect = detection_probability(scalar_model, [[2.0]], cfg)
    false_alarm = false_alarm_probability(scalar_model, [[2.0]], cfg)
    expected_detect = 2.0 * stats.norm.sf(cut / 2.0)
    expected_false_alarm = 2.0 * stats.norm.sf(cut / math.sqrt(2.0))
    assert detect.estimate == pytest.approx(expected_detect, abs=5 * detect.std_error)
    assert false_alarm.estimate == pytest.approx(expected_false_alarm, abs=5 * false_alarm.std_error)
    assert detect.std_error == pytest.approx(math.sqrt(detect.estimate * (1 - detect.estimate) / 100_000))


def test_overwhelming_attack_is_detected(ieee9_model):
    S = 100.0 * np.array(ieee9_model.Sigma_YY)
    cfg = DetectionConfig(tau=2.0, n_samples=10_000, seed=3)
    assert detection_probability(ieee9_model, S, cfg).estimate >= 0.99


def test_likelihood_ratio_has_unit_mean_under_clean_law():
    model = make_random_model(5, 3, seed=2)
    S = 0.05 * np.array(model.Sigma_YY)
    rng = np.random.default_rng(11)
    y = rng.multivariate_normal(np.zeros(model.m), model.Sigma_YY, size=200_000)
    ratio = np.exp(log_likelihood_ratio(model, S, y))
    assert ratio.mean() == pytest.approx(1.0, abs=0.01)


def test_estimates_are_reproducible(ieee9_model):
    plan, _ = greedy_independent(ieee9_model, 4, 8.0)
    cfg = DetectionConfig(tau=2.0, n_samples=20_000, seed=5, batch_size=3_000)
    first = detection_probability(ieee9_model, plan.Sigma_AA, cfg)
    assert detection_probability(ieee9_model, plan.Sigma_AA, cfg) == first
    estimate, std_error = first
    assert 0.0 <= estimate <= 1.0
    assert std_error >= 0.0


def test_roc_curve_is_monotone(ieee9_model):
    plan, _ = greedy_independent(ieee9_model, 6, 2.0)
    taus = [0.5, 1.0, 1.5, 2.0, 4.0, 10.0]
    cfg = DetectionConfig(n_samples=20_000, seed=9)
    points = roc_curve(ieee9_model, plan.Sigma_AA, taus, cfg)
    assert [point.tau for point in points] == taus
    for before, after in zip(points, points[1:]):
        assert after.false_alarm.estimate <= before.false_alarm.estimate
        assert after.detect_prob.estimate <= before.detect_prob.estimate
    # each point agrees with the single threshold estimators on the same draws
    at_two = points[3]
    assert at_two.detect_prob == detection_probability(ieee9_model, plan.Sigma_AA, cfg.with_tau(2.0))
    assert at_two.false_alarm == false_alarm_probability(ieee9_model, plan.Sigma_AA, cfg.with_tau(2.0))


def test_threshold_for_false_alarm():
    model = make_random_model(6, 3, seed=4)
    plan, _ = greedy_independent(model, 3, 4.0)
    cfg = DetectionConfig(n_samples=10_000, seed=2)
    alpha_max = 0.05
    tau = threshold_for_false_alarm(model, plan.Sigma_AA, alpha_max, cfg)
    assert false_alarm_probability(model, plan.Sigma_AA, cfg.with_tau(tau)).estimate <= alpha_max
    # any smaller threshold flags the order statistic as well
    smaller = false_alarm_probability(model, plan.Sigma_AA, cfg.with_tau(tau * (1.0 - 1e-9)))
    assert smaller.estimate > alpha_max


def test_threshold_without_attack():
    model = make_random_model(4, 2, seed=0)
    cfg = DetectionConfig(n_samples=1_000, seed=0)
    tau = threshold_for_false_alarm(model, np.zeros((4, 4)), 0.1, cfg)
    assert tau > 1.0
    assert tau == pytest.approx(1.0)


@pytest.mark.parametrize("cut", [-800.0, -3.0, 0.0, 2.5, 700.0, 709.7])
def test_threshold_sits_just_above_the_cut(cut: float):
    tau = detection._threshold_above(cut)
    assert 0.0 < tau < math.inf
    assert math.log(tau) > cut


@pytest.mark.parametrize("cut", [709.8, 800.0, math.inf])
def test_threshold_beyond_float_range(cut: float):
    tau = detection._threshold_above(cut)
    assert tau == math.inf
    # nothing reaches an infinite threshold
    assert detection._count_at(np.array([1e3, 0.0]), tau).estimate == 0.0


@pytest.mark.parametrize("alpha_max", [0.0, 1.0, -0.1])
def test_threshold_rejects_alpha(scalar_model, alpha_max):
    with pytest.raises(ValidationError):
        threshold_for_false_alarm(scalar_model, [[1.0]], alpha_max, DetectionConfig(n_samples=100))


def test_invalid_inputs(scalar_model):
    with pytest.raises(ValidationError):
        DetectionConfig(tau=0.0)
    with pytest.raises(ValidationError):
        roc_curve(scalar_model, [[1.0]], [1.0, -1.0], DetectionConfig(n_samples=100))
    with pytest.raises(InfeasibleCovarianceError):
        detection_probability(scalar_model, [[-5.0]], DetectionConfig(n_samples=100))
    with pytest.raises(ValidationError):
        detection_probability(scalar_model, np.zeros((2, 2)), DetectionConfig(n_samples=100))
