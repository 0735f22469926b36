from __future__ import annotations

import itertools

import numpy as np
import pytest
from scipy import optimize

from sparse_stealth import (
    Algorithm,
    AttackPlan,
    ObservationModel,
    ValidationError,
    alpha_beta,
    check_sparsity,
    cost_J,
    greedy_independent,
    optimal_variance,
    scalar_cost,
)

from .conftest import make_random_model


def test_optimal_variance_closed_form():
    assert optimal_variance(0.5, 0.5, 1.0, 2.0) == pytest.approx(0.618034, abs=1e-6)


def test_optimal_variance_matches_numeric_minimum():
    rng = np.random.default_rng(42)
    checked = 0
    for _ in range(200):
        beta = rng.uniform(0.1, 2.0)
        alpha = beta * rng.uniform(0.2, 1.0)
        sigma2 = rng.uniform(0.05, 2.0)
        lam = rng.uniform(1.0, 10.0)
        v = optimal_variance(alpha, beta, sigma2, lam)
        slope = (1.0 - lam) * alpha - 1.0 / sigma2 + lam * beta
        if v is None:
            assert slope >= 0.0
            continue
        assert slope < 0.0
        result = optimize.minimize_scalar(
            lambda x: scalar_cost(x, alpha, beta, sigma2, lam),
            bounds=(0.0, 10.0 * v),
            method="bounded",
            options={"xatol": 1e-12},
        )
        assert scalar_cost(v, alpha, beta, sigma2, lam) <= result.fun + 1e-12
        assert v == pytest.approx(result.x, rel=1e-4, abs=1e-8)
        checked += 1
    assert checked > 50


def test_optimal_variance_without_improvement():
    # alpha = beta and alpha sigma2 >= 1: g'(0) >= 0
    assert optimal_variance(1.0, 1.0, 2.0, 3.0) is None
    assert optimal_variance(1.0, 1.0, 1.0, 3.0) is None


def test_optimal_variance_rejects_bad_arguments():
    with pytest.raises(ValidationError):
        optimal_variance(0.0, 0.5, 1.0, 2.0)
    with pytest.raises(ValidationError):
        optimal_variance(0.5, 0.5, 1.0, 0.9)


@pytest.mark.parametrize("k", [0, 7, 1.5, True])
def test_check_sparsity_rejects(k):
    with pytest.raises(ValidationError):
        check_sparsity(k, 6)


def test_alpha_beta_rejects_selected_sensor():
    model = make_random_model(4, 2, seed=0)
    Sigma = np.zeros((4, 4))
    Sigma[2, 2] = 0.1
    alpha, beta = alpha_beta(model, Sigma, 1)
    assert 0.0 < alpha <= beta
    with pytest.raises(ValidationError):
        alpha_beta(model, Sigma, 2)


def test_ties_pick_lowest_index():
    model = ObservationModel(H=np.eye(2), Sigma_XX=np.eye(2), sigma2=0.1)
    plan, trace = greedy_independent(model, 2, 4.0)
    assert plan.support == (0, 1)
    assert trace.epochs[0].scores[0] == trace.epochs[0].scores[1]


def test_single_sensor_matches_exhaustive_search():
    model = make_random_model(7, 3, seed=8)
    lam = 5.0
    plan, _ = greedy_independent(model, 1, lam)
    costs = []
    for j in range(model.m):
        alpha, beta = alpha_beta(model, np.zeros((model.m, model.m)), j)
        v = optimal_variance(alpha, beta, model.sigma2, lam)
        Sigma = np.zeros((model.m, model.m))
        Sigma[j, j] = 0.0 if v is None else v
        costs.append(cost_J(model, Sigma, lam))
    assert plan.support == (int(np.argmin(costs)),)
    assert cost_J(model, plan.Sigma_AA, lam) == pytest.approx(min(costs))


def test_epoch_change_matches_scalar_cost():
    model = make_random_model(6, 3, seed=4)
    lam = 3.0
    _, trace = greedy_independent(model, 3, lam)
    previous = trace.initial_cost
    for record in trace.epochs:
        assert record.cost - previous == pytest.approx(record.scores[record.selected], rel=1e-8, abs=1e-12)
        previous = record.cost


def _best_diagonal_cost(model: ObservationModel, support: tuple[int, ...], lam: float) -> float:
    def objective(v: np.ndarray) -> float:
        Sigma = np.zeros((model.m, model.m))
        Sigma[support, support] = v
        return cost_J(model, Sigma, lam)

    result = optimize.minimize(objective, np.full(len(support), 0.1), method="L-BFGS-B", bounds=[(0.0, None)] * len(support))
    return float(result.fun)


@pytest.mark.parametrize("k", [2, 3])
def test_greedy_against_brute_force(k: int):
    model = make_random_model(6, 3, seed=13)
    lam = 4.0
    plan, trace = greedy_independent(model, k, lam)
    J_greedy = cost_J(model, plan.Sigma_AA, lam)
    brute = min(_best_diagonal_cost(model, support, lam) for support in itertools.combinations(range(6), k))
    assert brute <= J_greedy + 1e-6 * max(1.0, abs(J_greedy))
    assert J_greedy < trace.initial_cost
    # greedy has no optimality guarantee; this only catches gross regressions
    assert (J_greedy - brute) <= 0.25 * abs(brute - trace.initial_cost)


@pytest.mark.parametrize("snr_db", [10.0, 20.0, 30.0])
def test_optimal_variance_on_random_models(snr_db: float):
    rng = np.random.default_rng(int(snr_db))
    for trial in range(40):
        m = int(rng.integers(2, 11))
        model = make_random_model(m, max(1, m - 2), seed=trial, snr_db=snr_db)
        lam = float(rng.uniform(1.0, 16.0))
        Sigma = np.zeros((m, m))
        attacked = rng.choice(m, size=int(rng.integers(0, m)), replace=False)
        Sigma[attacked, attacked] = rng.uniform(0.0, 1.0, size=attacked.size) * np.diag(model.signal_cov)[attacked]
        free = [j for j in range(m) if Sigma[j, j] == 0]
        j = int(rng.choice(free))
        alpha, beta = alpha_beta(model, Sigma, j)
        # dense inverse as the resolvent oracle
        assert alpha == pytest.approx(np.linalg.inv(model.Sigma_YY + Sigma)[j, j], rel=1e-9)
        assert beta == pytest.approx(np.linalg.inv(model.Sigma_YY)[j, j], rel=1e-9)
        v = optimal_variance(alpha, beta, model.sigma2, lam)
        if v is None:
            continue
        grid = np.linspace(0.0, 4.0 * v, 401)
        values = [scalar_cost(x, alpha, beta, model.sigma2, lam) for x in grid]
        i = int(np.argmin(values))
        result = optimize.minimize_scalar(
            lambda x: scalar_cost(x, alpha, beta, model.sigma2, lam),
            bracket=(grid[max(i - 1, 0)], grid[i], grid[min(i + 1, 400)]) if 0 < i < 400 else None,
            method="golden",
            tol=1e-12,
        )
        assert abs(v - result.x) <= 1e-6 * (1.0 + v)


class TestGreedyRun:
    @pytest.fixture
    def run(self):
        model = make_random_model(10, 4, seed=21)
        plan, trace = greedy_independent(model, 6, 8.0)
        return model, plan, trace

    def test_plan(self, run):
        model, plan, trace = run
        assert plan.algorithm is Algorithm.independent
        done = len(trace.epochs)
        assert done >= 1
        assert len(set(plan.support)) == len(plan.support) == done
        assert plan.shortfall == trace.shortfall == (done < 6)
        assert plan.support == trace.support

    def test_covariance_is_diagonal_on_support(self, run):
        model, plan, _ = run
        S = np.asarray(plan.Sigma_AA)
        np.testing.assert_array_equal(S, np.diag(np.diag(S)))
        outside = [j for j in range(model.m) if j not in plan.support]
        assert not np.any(np.diag(S)[outside])
        assert np.all(np.diag(S)[list(plan.support)] > 0)

    def test_costs_decrease(self, run):
        _, _, trace = run
        costs = [trace.initial_cost] + trace.costs
        assert all(after < before for before, after in zip(costs, costs[1:]))

    def test_candidates_shrink(self, run):
        model, _, trace = run
        assert [record.n_candidates for record in trace.epochs] == [model.m - i for i in range(len(trace.epochs))]

    def test_prefix_consistency(self, run):
        model, _, trace = run
        for k in (1, 3, 5):
            shorter, _ = greedy_independent(model, k, 8.0)
            assert shorter.support == trace.support_at(k)
            np.testing.assert_array_equal(shorter.Sigma_AA, trace.state_at(k))


def test_shortfall_when_no_sensor_improves():
    # the second sensor sees pure noise and cannot lower the cost
    model = ObservationModel(H=[[1.0], [0.0]], Sigma_XX=[[1.0]], sigma2=1.0)
    plan, trace = greedy_independent(model, 2, 2.0)
    assert plan.support == (0,)
    assert plan.shortfall
    assert trace.shortfall
    assert len(trace.epochs) == 1


def test_greedy_rejects_bad_arguments():
    model = make_random_model(4, 2, seed=0)
    with pytest.raises(ValidationError):
        greedy_independent(model, 5, 2.0)
    with pytest.raises(ValidationError):
        greedy_independent(model, 2, 0.5)


class TestAttackPlan:
    @staticmethod
    def _diagonal(m: int, support: list[int]) -> np.ndarray:
        S = np.zeros((m, m))
        S[support, support] = 0.5
        return S

    def test_payload_round_trip(self, ieee9_model):
        plan, _ = greedy_independent(ieee9_model, 3, 4.0)
        restored = AttackPlan.from_payload(plan.to_payload())
        assert restored.support == plan.support
        assert restored.k == 3 and restored.lam == 4.0
        np.testing.assert_array_equal(restored.Sigma_AA, plan.Sigma_AA)

    def test_accepts_shortfall(self):
        plan = AttackPlan(support=[1], Sigma_AA=self._diagonal(3, [1]), lam=2.0, k=3)
        assert plan.shortfall
        assert plan.m == 3

    @pytest.mark.parametrize(
        ("support", "k"),
        [([0, 1, 2], 2), ([0, 0], 2), ([0, 3], 2), ([-1], 1), ([0], 0), ([0], 4)],
    )
    def test_rejects_bad_support(self, support: list[int], k: int):
        S = self._diagonal(3, [i for i in set(support) if 0 <= i < 3])
        with pytest.raises(ValidationError):
            AttackPlan(support=support, Sigma_AA=S, lam=2.0, k=k)

    def test_rejects_bad_covariance(self):
        with pytest.raises(ValidationError):
            AttackPlan(support=[0], Sigma_AA=np.zeros((2, 3)), lam=2.0, k=1)
        leaking = self._diagonal(3, [0])
        leaking[2, 2] = 0.1
        with pytest.raises(ValidationError):
            AttackPlan(support=[0], Sigma_AA=leaking, lam=2.0, k=1)
        asymmetric = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValidationError):
            AttackPlan(support=[0, 1], Sigma_AA=asymmetric, lam=2.0, k=2)
        indefinite = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(ValidationError):
            AttackPlan(support=[0, 1], Sigma_AA=indefinite, lam=2.0, k=2)
        with pytest.raises(ValidationError):
            AttackPlan(support=[0], Sigma_AA=self._diagonal(2, [0]), lam=0.5, k=1)

    def test_from_payload_rejects_inconsistent_files(self):
        payload = {"support": [0, 1], "sigma_aa": [1.0, 0.0, 1.0], "lambda": 2.0, "k": 1}
        with pytest.raises(ValidationError):
            AttackPlan.from_payload(payload)
        payload = {"support": [0], "sigma_aa": [1.0, 0.0, 1.0], "lambda": 2.0, "k": 1}
        with pytest.raises(ValidationError):
            AttackPlan.from_payload(payload)
        payload = {"support": [0], "sigma_aa": [1.0, 0.0], "lambda": 2.0, "k": 1}
        with pytest.raises(ValidationError):
            AttackPlan.from_payload(payload)
