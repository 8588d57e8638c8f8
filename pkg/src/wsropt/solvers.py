"""Weighted sum rate objectives and the difference-of-convex solvers.

Two solvers are provided.  `solve_special_case` handles the log-approximated
objective sum_i w_i log(gamma_i) via the closed-form capped fixed-point map,
which is itself a standard interference function when the underlying model is
log-concave with scale-invariant gradients.  `solve_pda_exact` tackles the
full objective sum_i w_i log(1 + gamma_i) with an outer linearization loop
and an inner primal-dual loop (closed-form p step, concave q subproblem by
projected gradient ascent, dual ascent on the p = q constraint).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from wsropt.channel import NetworkInstance
from wsropt.interference import InterferenceModel, _check_p


class ZeroDenominatorError(ArithmeticError):
    """A link receives no weighted interference gradient; the closed-form
    power update is unbounded for it (e.g. an isolated link under the
    affine model)."""


@dataclass(frozen=True)
class SolverConfig:
    tol_fixed_point: float = 1e-8
    tol_outer: float = 1e-6
    tol_inner: float = 1e-6
    max_outer: int = 50
    max_inner: int = 200
    max_fp_iter: int = 500
    dual_step: float = 0.05
    dual_step_decay: float = 0.98
    power_floor: float = 1e-9

    def __post_init__(self):
        for name in ("tol_fixed_point", "tol_outer", "tol_inner"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_outer", "max_inner", "max_fp_iter"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (0.0 < self.power_floor < 1.0):
            raise ValueError("power_floor must lie in (0, 1)")


@dataclass
class SolveResult:
    p_final: np.ndarray
    objective_trace: list              # (iteration, objective in nats)
    converged: bool
    inner_iterations_total: int = 0
    p_history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "p_final": self.p_final.tolist(),
            "objective_trace": [[int(k), float(v)] for k, v in self.objective_trace],
            "converged": self.converged,
            "inner_iterations_total": self.inner_iterations_total,
        }

    def trace_csv_rows(self):
        yield "iteration,wsr_nats"
        for k, v in self.objective_trace:
            yield f"{k},{v:.17g}"


def sinr(instance: NetworkInstance, model: InterferenceModel, p) -> np.ndarray:
    """gamma_i = G_ii p_i / I_i(p)."""
    p = _check_p(instance, p)
    return np.diag(instance.gains) * p / model.eval(instance, p)


def wsr(instance: NetworkInstance, model: InterferenceModel, p,
        w: Optional[np.ndarray] = None) -> float:
    """Weighted sum rate sum_i w_i log(1 + gamma_i), in nats."""
    w = instance.weights if w is None else np.asarray(w, dtype=float)
    return float(np.sum(w * np.log1p(sinr(instance, model, p))))


def wsr_log_approx(instance: NetworkInstance, model: InterferenceModel, p,
                   w: Optional[np.ndarray] = None) -> float:
    """High-SINR surrogate sum_i w_i log(gamma_i), in nats."""
    w = instance.weights if w is None else np.asarray(w, dtype=float)
    return float(np.sum(w * np.log(sinr(instance, model, p))))


def _gradient_ratio_sum(instance, model, w, p) -> np.ndarray:
    """s_i = sum_j w_j (dI_j/dp_i) / I_j(p): the linearized interference
    pressure on link i."""
    J = model.jacobian(instance, p)
    I = model.eval(instance, p)
    return (w / I) @ J


def tilde_interference(instance: NetworkInstance, model: InterferenceModel,
                       w, p) -> np.ndarray:
    """Derived interference map: tilde I_i = w_i / s_i with s as above."""
    p = _check_p(instance, p)
    w = np.asarray(w, dtype=float)
    s = _gradient_ratio_sum(instance, model, w, p)
    if np.any(s <= 0):
        bad = np.flatnonzero(s <= 0).tolist()
        raise ZeroDenominatorError(
            f"links {bad} receive no weighted interference gradient"
        )
    return w / s


def derived_map_model(base: InterferenceModel, w) -> InterferenceModel:
    """The capped derived map min{tilde I(p), p_max} as an InterferenceModel,
    so the standard-axiom checker can be applied to it directly.  The map is
    piecewise smooth; no Jacobian is exposed."""
    w = np.asarray(w, dtype=float)

    def _eval(instance, p):
        return np.minimum(tilde_interference(instance, base, w, p), instance.p_max)

    return InterferenceModel(
        name=f"derived({base.name})",
        eval=_eval,
        jacobian=None,
        claims_log_concave=False,
        claims_scale_invariant_gradient=False,
    )


def stationarity_residual(instance: NetworkInstance, model: InterferenceModel,
                          w, p) -> np.ndarray:
    """First-order residual of the log-approximated problem:
    r_i = w_i/p_i - s_i.  Zero at interior fixed points of the derived map."""
    p = _check_p(instance, p)
    w = np.asarray(w, dtype=float)
    return w / p - _gradient_ratio_sum(instance, model, w, p)


def _require_special_case(model: InterferenceModel) -> None:
    if not (model.claims_log_concave and model.claims_scale_invariant_gradient):
        raise ValueError(
            f"model {model.name!r} does not claim log-concavity with "
            "scale-invariant gradients; the fixed-point solver is not applicable"
        )


def solve_special_case(instance: NetworkInstance, model: InterferenceModel,
                       w, config: SolverConfig = SolverConfig(),
                       p0=None) -> SolveResult:
    """Iterate p <- min{tilde I(p), p_max} from full power (or p0) until the
    sup-norm step falls below tol_fixed_point."""
    _require_special_case(model)
    w = np.asarray(w, dtype=float)
    K = instance.num_links
    p = np.full(K, float(instance.p_max)) if p0 is None \
        else _check_p(instance, np.asarray(p0, dtype=float))
    trace = [(0, wsr_log_approx(instance, model, p, w))]
    history = [p.copy()]
    converged = False
    for k in range(1, config.max_fp_iter + 1):
        p_next = np.minimum(tilde_interference(instance, model, w, p),
                            instance.p_max)
        trace.append((k, wsr_log_approx(instance, model, p_next, w)))
        history.append(p_next.copy())
        if np.max(np.abs(p_next - p)) < config.tol_fixed_point:
            p = p_next
            converged = True
            break
        p = p_next
    return SolveResult(p_final=p, objective_trace=trace, converged=converged,
                       p_history=history)


def pda_p_update(instance: NetworkInstance, model: InterferenceModel, w,
                 p_lin, q, lam, config: SolverConfig = SolverConfig()) -> np.ndarray:
    """Closed-form primal step: p_i = w_i / (s_i(p_lin) + lam_i) - I_i(q)/G_ii,
    clamped to [power_floor, p_max].  The subtracted term is q_i / gamma_i(q).
    """
    p_lin = _check_p(instance, np.asarray(p_lin, dtype=float))
    q = _check_p(instance, np.asarray(q, dtype=float))
    w = np.asarray(w, dtype=float)
    s = _gradient_ratio_sum(instance, model, w, p_lin)
    if np.any(s <= 0):
        bad = np.flatnonzero(s <= 0).tolist()
        raise ZeroDenominatorError(
            f"links {bad} receive no weighted interference gradient"
        )
    # lam can drive the bracket non-positive transiently; clamp keeps the
    # update finite, the subsequent cap makes it p_max
    bracket = np.maximum(s + np.asarray(lam, dtype=float), 1e-12)
    p = w / bracket - model.eval(instance, q) / np.diag(instance.gains)
    return np.clip(p, config.power_floor, instance.p_max)


def pda_q_update_exact(instance: NetworkInstance, model: InterferenceModel, w,
                       p, lam, config: SolverConfig = SolverConfig()):
    """Maximize the concave inner objective
        phi(q) = sum_i w_i log(G_ii p_i + I_i(q)) + lam . q
    over the box [power_floor, p_max]^K by projected gradient ascent with
    Armijo backtracking.  Returns (q, iterations, converged)."""
    p = _check_p(instance, np.asarray(p, dtype=float))
    w = np.asarray(w, dtype=float)
    lam = np.asarray(lam, dtype=float)
    lo, hi = config.power_floor, instance.p_max
    diag = np.diag(instance.gains)

    def phi(q):
        return float(np.sum(w * np.log(diag * p + model.eval(instance, q)))
                     + lam @ q)

    def grad(q):
        denom = diag * p + model.eval(instance, q)
        return (w / denom) @ model.jacobian(instance, q) + lam

    q = np.clip(p.copy(), lo, hi)
    val = phi(q)
    step = 1.0
    for it in range(1, config.max_inner + 1):
        g = grad(q)
        # projected-gradient optimality measure on the box
        pg = q - np.clip(q + g, lo, hi)
        if np.max(np.abs(pg)) < config.tol_inner:
            return q, it, True
        step = min(step * 2.0, 1.0)
        accepted = False
        for _ in range(60):
            q_new = np.clip(q + step * g, lo, hi)
            val_new = phi(q_new)
            if val_new >= val + 1e-4 * g @ (q_new - q):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return q, it, False
        q, val = q_new, val_new
    return q, config.max_inner, False


def pda_lambda_update(lam, p, q, alpha: float) -> np.ndarray:
    """Dual ascent on the coupling constraint: lam + alpha (p - q)."""
    return np.asarray(lam, dtype=float) + alpha * (np.asarray(p, dtype=float)
                                                   - np.asarray(q, dtype=float))


def solve_pda_exact(instance: NetworkInstance, model: InterferenceModel, w,
                    config: SolverConfig = SolverConfig()) -> SolveResult:
    """Outer linearization loop with an inner primal-dual loop per subproblem.

    The outer trace records the true weighted sum rate; a candidate that
    fails to improve it terminates the loop (monotone safeguard for inexact
    inner solves)."""
    _require_special_case(model)
    w = np.asarray(w, dtype=float)
    K = instance.num_links
    p = np.full(K, float(instance.p_max))
    if not np.any(model.jacobian(instance, p) != 0.0):
        # no interference coupling at all: every rate is monotone in its own
        # power and full power is optimal
        return SolveResult(p_final=p,
                           objective_trace=[(0, wsr(instance, model, p, w))],
                           converged=True, p_history=[p.copy()])
    trace = [(0, wsr(instance, model, p, w))]
    history = [p.copy()]
    inner_total = 0
    converged = False
    for k in range(1, config.max_outer + 1):
        q = p.copy()
        lam = np.zeros(K)
        alpha = config.dual_step
        p_inner = p
        for _ in range(config.max_inner):
            p_inner = pda_p_update(instance, model, w, p, q, lam, config)
            q, q_iters, _ = pda_q_update_exact(instance, model, w,
                                               p_inner, lam, config)
            lam = pda_lambda_update(lam, p_inner, q, alpha)
            alpha *= config.dual_step_decay
            inner_total += 1 + q_iters
            if np.max(np.abs(p_inner - q)) < config.tol_inner:
                break
        new_val = wsr(instance, model, p_inner, w)
        old_val = trace[-1][1]
        if new_val < old_val:
            converged = True
            break
        p = p_inner
        trace.append((k, new_val))
        history.append(p.copy())
        if abs(new_val - old_val) < config.tol_outer:
            converged = True
            break
    return SolveResult(p_final=p, objective_trace=trace, converged=converged,
                       inner_iterations_total=inner_total, p_history=history)
