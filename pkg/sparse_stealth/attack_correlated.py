"""Greedy construction of k-sparse attacks with correlated entries.

An epoch adds a pivot ``j`` to the support through the rank two update
``Delta(s) = s e_j^T + e_j s^T`` where ``s`` may couple the pivot to every
index already attacked. For a fixed pivot the cost is convex in ``s``; the
subproblem is solved with a projected Newton or projected gradient method
with backtracking. Positive semidefiniteness of the accumulated covariance
is restored by a Frobenius projection after the last epoch.
"""
from __future__ import annotations
from typing import Literal

import logging

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .attack_independent import check_sparsity, optimal_variance, scalar_cost
from .enums import Algorithm
from .errors import AsymmetricMatrixError, InfeasibleCovarianceError, ValidationError
from .gaussian_core import check_lambda, cost_gradient, cost_J
from ._types import AttackPlan, CorrelatedUpdate, EpochRecord, GreedyTrace, ObservationModel

__all__: tuple[str, ...] = (
    "SolverMethod",
    "make_delta",
    "subproblem_objective",
    "subproblem_gradient",
    "subproblem_solve",
    "greedy_correlated",
    "psd_project",
    "independent_step_cost",
)

_log = logging.getLogger(__name__)

SolverMethod = Literal["newton", "gradient"]

DEFAULT_TOL: float = 1e-8
MAX_ITERATIONS: int = 10_000
_INITIAL_STEP = 1.0
# relative decrease below which an accepted step counts as no progress
_STALL_RTOL = 1e-13
_STALL_STEPS = 3
_SHRINK = 0.5
_ARMIJO = 1e-4
_MAX_HALVINGS = 60


def make_delta(update: CorrelatedUpdate) -> NDArray[np.float64]:
    """The symmetric update ``s e_j^T + e_j s^T``.

    .. versionadded:: 0.1.0
    """
    s = np.asarray(update.s, dtype=np.float64)
    delta = np.zeros((s.size, s.size))
    delta[:, update.pivot_j] += s
    delta[update.pivot_j, :] += s
    return delta


def _delta(s: NDArray[np.float64], j: int) -> NDArray[np.float64]:
    delta = np.zeros((s.size, s.size))
    delta[:, j] += s
    delta[j, :] += s
    return delta


class _Subproblem:
    """Cost, gradient and Hessian of ``s -> J(Sigma_prev + Delta(s))`` over the allowed coordinates."""

    def __init__(self, model: ObservationModel, Sigma_prev: NDArray[np.float64], pivot_j: int, lam: float) -> None:
        self.model = model
        self.Sigma_prev = Sigma_prev
        self.j = pivot_j
        self.lam = lam
        support = np.flatnonzero(np.any(Sigma_prev != 0, axis=1))
        self.coords = np.union1d(support, [pivot_j]).astype(int)
        # position of the pivot inside the coordinate vector
        self.pivot_pos = int(np.searchsorted(self.coords, pivot_j))
        self.signal_base = model.Sigma_YY + Sigma_prev
        self.noise_base = model.sigma2 * np.eye(model.m) + Sigma_prev
        self.trace_weights = model.Sigma_YY_inv

    def embed(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        s = np.zeros(self.model.m)
        s[self.coords] = x
        return s

    def _factors(self, x: NDArray[np.float64]) -> tuple[tuple[NDArray[np.float64], bool], tuple[NDArray[np.float64], bool]] | None:
        delta = _delta(self.embed(x), self.j)
        try:
            signal = linalg.cho_factor(self.signal_base + delta, lower=True)
            noise = linalg.cho_factor(self.noise_base + delta, lower=True)
        except linalg.LinAlgError:
            return None
        return signal, noise

    def value(self, x: NDArray[np.float64]) -> float:
        """``J`` at ``Sigma_prev + Delta``, ``inf`` when a log-det argument is not positive definite."""
        factors = self._factors(x)
        if factors is None:
            return np.inf
        (signal, _), (noise, _) = factors
        s = self.embed(x)
        # tr(Syy^-1 Delta) = 2 s^T Syy^-1 e_j
        trace = 2.0 * float(s @ self.trace_weights[:, self.j])
        trace_prev = float(np.sum(self.trace_weights * self.Sigma_prev))
        return (
            (1.0 - self.lam) * 2.0 * float(np.sum(np.log(np.diag(signal))))
            - 2.0 * float(np.sum(np.log(np.diag(noise))))
            + self.lam * (trace_prev + trace)
        )

    def derivatives(self, x: NDArray[np.float64], hessian: bool) -> tuple[NDArray[np.float64], NDArray[np.float64] | None]:
        if not hessian:
            G = cost_gradient(self.model, self.Sigma_prev + _delta(self.embed(x), self.j), self.lam)
            return 2.0 * G[self.coords, self.j], None
        factors = self._factors(x)
        if factors is None:
            raise InfeasibleCovarianceError("Sigma_YY + Sigma_prev + Delta")
        eye = np.eye(self.model.m)
        U = linalg.cho_solve(factors[0], eye)
        V = linalg.cho_solve(factors[1], eye)
        G = (1.0 - self.lam) * U - V + self.lam * self.trace_weights
        grad = 2.0 * G[self.coords, self.j]
        c, j = self.coords, self.j
        u, v = U[c, j], V[c, j]
        hess = 2.0 * (self.lam - 1.0) * (np.outer(u, u) + U[j, j] * U[np.ix_(c, c)])
        hess += 2.0 * (np.outer(v, v) + V[j, j] * V[np.ix_(c, c)])
        return grad, hess


def subproblem_objective(model: ObservationModel, Sigma_prev: ArrayLike, pivot_j: int, lam: float, s: ArrayLike) -> float:
    """``J(Sigma_prev + Delta(s))`` with ``Delta(s) = s e_j^T + e_j s^T``.

    .. versionadded:: 0.1.0
    """
    s = np.asarray(s, dtype=np.float64)
    return cost_J(model, np.asarray(Sigma_prev, dtype=np.float64) + _delta(s, pivot_j), lam)


def subproblem_gradient(model: ObservationModel, Sigma_prev: ArrayLike, pivot_j: int, lam: float, s: ArrayLike) -> NDArray[np.float64]:
    """The gradient in ``s`` of :func:`subproblem_objective`, restricted to the support plus the pivot.

    Entries outside the allowed coordinates are zero.

    .. versionadded:: 0.1.0
    """
    problem = _Subproblem(model, np.asarray(Sigma_prev, dtype=np.float64), pivot_j, check_lambda(lam))
    x = np.asarray(s, dtype=np.float64)[problem.coords]
    grad, _ = problem.derivatives(x, hessian=False)
    return problem.embed(grad)


def _project(x: NDArray[np.float64], pivot_pos: int) -> NDArray[np.float64]:
    # the pivot variance 2 s_j cannot be negative
    if x[pivot_pos] < 0:
        x = x.copy()
        x[pivot_pos] = 0.0
    return x


def _projected_gradient(grad: NDArray[np.float64], x: NDArray[np.float64], pivot_pos: int) -> NDArray[np.float64]:
    if x[pivot_pos] <= 0 and grad[pivot_pos] > 0:
        grad = grad.copy()
        grad[pivot_pos] = 0.0
    return grad


def _line_search(
    problem: _Subproblem,
    x: NDArray[np.float64],
    fx: float,
    direction: NDArray[np.float64],
    grad: NDArray[np.float64],
) -> tuple[NDArray[np.float64], float] | None:
    step = _INITIAL_STEP
    for _ in range(_MAX_HALVINGS):
        candidate = _project(x + step * direction, problem.pivot_pos)
        value = problem.value(candidate)
        # infinite values are steps that left the feasible region
        if np.isfinite(value) and value <= fx + _ARMIJO * float(grad @ (candidate - x)):
            return candidate, value
        step *= _SHRINK
    return None


def subproblem_solve(
    model: ObservationModel,
    Sigma_prev: ArrayLike,
    pivot_j: int,
    lam: float,
    tol: float = DEFAULT_TOL,
    *,
    method: SolverMethod = "newton",
    max_iter: int = MAX_ITERATIONS,
) -> CorrelatedUpdate:
    """Minimize ``J(Sigma_prev + s e_j^T + e_j s^T)`` over ``s``.

    ``s`` is restricted to the current support plus the pivot, and
    ``s_j >= 0``. Only the two log-det arguments are kept positive
    definite; positive semidefiniteness of the sum is left to
    :func:`psd_project`. The start point is the closed form independent
    update ``s = v/2 e_j`` (``1e-3 e_j`` when the pivot cannot improve the
    cost on its own). Iteration stops when the norm of the projected
    gradient is at most ``tol``, when the line search finds no descent, or
    when a few consecutive steps lower the objective by less than its
    rounding level.

    .. versionadded:: 0.1.0

    Parameters
    ----------
    model: :class:`ObservationModel`
        The observation model.
    Sigma_prev: :class:`numpy.ndarray`
        The covariance accumulated so far.
    pivot_j: :class:`int`
        The index to add; must not be in the support yet.
    lam: :class:`float`
        The weighting, ``lam >= 1``.
    tol: :class:`float`
        Projected gradient norm at which the solver stops.
    method: Literal[``"newton"``, ``"gradient"``]
        Projected Newton steps (default) or projected gradient steps, both
        with backtracking that rejects infeasible points.
    max_iter: :class:`int`
        Iteration cap.

    Raises
    ------
    ValidationError
        The pivot is already in the support, ``lam < 1`` or ``tol <= 0``.
    InfeasibleCovarianceError
        ``Sigma_YY + Sigma_prev`` or ``sigma2 I + Sigma_prev`` is not
        positive definite.

    Returns
    -------
    :class:`CorrelatedUpdate`
        The best iterate. ``warning`` is set when the iteration cap was hit.
    """
    lam = check_lambda(lam)
    if not tol > 0:
        raise ValidationError(f"'tol' must be positive, got {tol!r}")
    Sigma_prev = np.asarray(Sigma_prev, dtype=np.float64)
    if Sigma_prev[pivot_j, pivot_j] != 0 or np.any(Sigma_prev[pivot_j]):
        raise ValidationError(f"observation {pivot_j} is already in the support")
    problem = _Subproblem(model, Sigma_prev, pivot_j, lam)

    start = problem.value(np.zeros(problem.coords.size))
    if not np.isfinite(start):
        raise InfeasibleCovarianceError("Sigma_YY + Sigma_prev")
    alphas = linalg.cho_solve(linalg.cho_factor(problem.signal_base, lower=True), np.eye(model.m))
    v_ind = optimal_variance(float(alphas[pivot_j, pivot_j]), float(model.Sigma_YY_inv[pivot_j, pivot_j]), model.sigma2, lam)
    x = np.zeros(problem.coords.size)
    x[problem.pivot_pos] = 1e-3 if v_ind is None else v_ind / 2.0
    fx = problem.value(x)
    if not np.isfinite(fx):
        x = np.zeros(problem.coords.size)
        fx = start

    iterations = 0
    stalled = 0
    warning = True
    while iterations < max_iter:
        grad, hess = problem.derivatives(x, hessian=method == "newton")
        pgrad = _projected_gradient(grad, x, problem.pivot_pos)
        if float(np.linalg.norm(pgrad)) <= tol:
            warning = False
            break
        iterations += 1
        step: tuple[NDArray[np.float64], float] | None = None
        if hess is not None:
            # a pivot held at its bound drops out of the Newton system
            free = np.ones(x.size, dtype=bool)
            if x[problem.pivot_pos] <= 0 and grad[problem.pivot_pos] > 0:
                free[problem.pivot_pos] = False
            direction = np.zeros(x.size)
            try:
                direction[free] = -linalg.solve(hess[np.ix_(free, free)], grad[free], assume_a="pos")
            except (linalg.LinAlgError, ValueError):
                direction = -pgrad
            step = _line_search(problem, x, fx, direction, grad)
        if step is None:
            step = _line_search(problem, x, fx, -pgrad, grad)
        if step is None:
            # no descent left at working precision
            _log.debug("pivot %d: line search exhausted at |grad|=%.3e", pivot_j, np.linalg.norm(pgrad))
            warning = False
            break
        decrease = fx - step[1]
        x, fx = step
        stalled = stalled + 1 if decrease <= _STALL_RTOL * max(1.0, abs(fx)) else 0
        if stalled >= _STALL_STEPS:
            _log.debug("pivot %d: objective stalled at |grad|=%.3e", pivot_j, np.linalg.norm(pgrad))
            warning = False
            break
    else:
        _log.warning("pivot %d: subproblem hit the %d iteration cap", pivot_j, max_iter)

    return CorrelatedUpdate(pivot_j=pivot_j, s=problem.embed(x), objective=fx, iterations=iterations, warning=warning)


def psd_project(Sigma: ArrayLike) -> NDArray[np.float64]:
    """The Frobenius nearest positive semidefinite matrix.

    Negative eigenvalues are clipped to zero. The eigendecomposition runs on
    the block of rows that are not identically zero, so zero rows and
    columns stay exactly zero.

    .. versionadded:: 0.1.0

    Raises
    ------
    AsymmetricMatrixError
        The input deviates from symmetry by more than ``1e-12``.
    """
    S = np.asarray(Sigma, dtype=np.float64)
    deviation = float(np.max(np.abs(S - S.T))) if S.size else 0.0
    if deviation > 1e-12:
        raise AsymmetricMatrixError(deviation)
    S = (S + S.T) / 2
    projected = np.zeros_like(S)
    active = np.flatnonzero(np.any(S != 0, axis=1))
    if active.size == 0:
        return projected
    block = S[np.ix_(active, active)]
    w, V = linalg.eigh(block)
    if w[0] >= 0:
        projected[np.ix_(active, active)] = block
        return projected
    clipped = (V * np.clip(w, 0.0, None)) @ V.T
    projected[np.ix_(active, active)] = (clipped + clipped.T) / 2
    return projected


def greedy_correlated(
    model: ObservationModel,
    k: int,
    lam: float,
    *,
    tol: float = DEFAULT_TOL,
    method: SolverMethod = "newton",
    project_each_epoch: bool = False,
) -> tuple[AttackPlan, GreedyTrace]:
    """Build a k-sparse attack whose entries may be correlated.

    Every epoch solves the convex subproblem for each unselected pivot and
    keeps the pivot with the lowest cost (lowest index on ties). After the
    last epoch the accumulated covariance is projected onto the positive
    semidefinite cone. When no pivot lowers the cost the construction stops
    early and flags a shortfall.

    .. versionadded:: 0.1.0

    Parameters
    ----------
    model: :class:`ObservationModel`
        The observation model.
    k: :class:`int`
        Target number of attacked sensors, ``1 <= k <= m``.
    lam: :class:`float`
        The weighting, ``lam >= 1``.
    tol: :class:`float`
        Gradient tolerance of every subproblem.
    method: Literal[``"newton"``, ``"gradient"``]
        Subproblem solver.
    project_each_epoch: :class:`bool`
        Project after every epoch instead of once at the end.

    Raises
    ------
    ValidationError
        ``k`` or ``lam`` is out of range.

    Returns
    -------
    Tuple[:class:`AttackPlan`, :class:`GreedyTrace`]
        The projected attack and the per epoch history. The trace states are
        the accumulated covariances before the final projection.
    """
    lam = check_lambda(lam)
    k = check_sparsity(k, model.m)
    Sigma = np.zeros((model.m, model.m))
    cost = cost_J(model, Sigma, lam)
    trace = GreedyTrace(m=model.m, initial_cost=cost)
    selected: list[int] = []

    for epoch in range(1, k + 1):
        candidates = [j for j in range(model.m) if j not in selected]
        updates = {j: subproblem_solve(model, Sigma, j, lam, tol, method=method) for j in candidates}
        best = min(candidates, key=lambda j: updates[j].objective)
        update = updates[best]
        if not update.objective < cost:
            _log.info("correlated construction stopped after %d of %d epochs: no improving pivot", epoch - 1, k)
            trace.shortfall = True
            break
        Sigma = Sigma + make_delta(update)
        if project_each_epoch:
            Sigma = psd_project(Sigma)
            cost = cost_J(model, Sigma, lam)
        else:
            cost = update.objective
        selected.append(best)
        trace.epochs.append(EpochRecord(
            epoch=epoch,
            selected=best,
            update=np.array(update.s),
            cost=cost,
            scores={j: updates[j].objective - trace.cost_at(epoch - 1) for j in candidates},
            state=Sigma,
            solver_iters=update.iterations,
            warning=update.warning,
        ))
        _log.debug("epoch %d: pivot %d, |s|=%.6g, J=%.10g, iters=%d", epoch, best, update.s_norm, cost, update.iterations)

    Sigma_AA = psd_project(Sigma)
    plan = AttackPlan(support=selected, Sigma_AA=Sigma_AA, lam=lam, k=k, algorithm=Algorithm.correlated)
    return plan, trace


def independent_step_cost(model: ObservationModel, Sigma_prev: ArrayLike, pivot_j: int, lam: float) -> float:
    """``J`` after the best pure diagonal update at ``pivot_j``.

    The diagonal update is a feasible point of the correlated subproblem,
    so :func:`subproblem_solve` never does worse.
    """
    lam = check_lambda(lam)
    Sigma_prev = np.asarray(Sigma_prev, dtype=np.float64)
    base = cost_J(model, Sigma_prev, lam)
    inverse = linalg.cho_solve(linalg.cho_factor(model.Sigma_YY + Sigma_prev, lower=True), np.eye(model.m))
    alpha = float(inverse[pivot_j, pivot_j])
    beta = float(model.Sigma_YY_inv[pivot_j, pivot_j])
    v = optimal_variance(alpha, beta, model.sigma2, lam)
    if v is None:
        return base
    return base + scalar_cost(v, alpha, beta, model.sigma2, lam)
