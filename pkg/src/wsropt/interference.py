"""Standard interference functions and randomized axiom checkers.

An interference map I : R_+^K -> R_+^K is *standard* when it is positive,
strictly scalable (alpha I(p) > I(alpha p) for alpha > 1) and monotone, and
*feasible* when some power vector dominates its own interference.  The two
bundled models are the affine (interference treated as noise) map and the
log-sum map whose gradient is scale invariant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from wsropt.channel import NetworkInstance


@dataclass(frozen=True)
class InterferenceModel:
    """Evaluator/Jacobian pair with structural flags.

    Convention: jacobian(instance, p)[j, i] = dI_j / dp_i, so weighted
    gradient-over-value sums reduce over rows for a fixed column i.
    """

    name: str
    eval: Callable[[NetworkInstance, np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[NetworkInstance, np.ndarray], np.ndarray]]
    claims_log_concave: bool = False
    claims_scale_invariant_gradient: bool = False


def _check_p(instance: NetworkInstance, p: np.ndarray, strict: bool = True) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (instance.num_links,):
        raise ValueError(f"power vector shape {p.shape} != ({instance.num_links},)")
    if strict and np.any(p <= 0):
        raise ValueError("power vector must be strictly positive")
    return p


def _offdiag(G: np.ndarray) -> np.ndarray:
    out = G.copy()
    np.fill_diagonal(out, 0.0)
    return out


def affine_eval(instance: NetworkInstance, p) -> np.ndarray:
    """I_i = sum_{j != i} G_ij p_j + noise."""
    p = _check_p(instance, p, strict=False)
    return _offdiag(instance.gains) @ p + instance.noise


def affine_jacobian(instance: NetworkInstance, p) -> np.ndarray:
    """dI_j/dp_i = G_ji off the diagonal; independent of p."""
    _check_p(instance, p, strict=False)
    return _offdiag(instance.gains)


def rayleigh_eval(instance: NetworkInstance, p) -> np.ndarray:
    """I_i = noise + sum_{j != i} p_i log(1 + G_ij p_j / p_i)."""
    p = _check_p(instance, p)
    G = _offdiag(instance.gains)
    x = G * p[None, :] / p[:, None]          # x[i, j] = G_ij p_j / p_i
    return instance.noise + p * np.sum(np.log1p(x), axis=1)


def rayleigh_jacobian(instance: NetworkInstance, p) -> np.ndarray:
    """Closed-form gradient of the log-sum map; exactly scale invariant.

    Diagonal: dI_i/dp_i = sum_{j != i} [log(1 + G_ij p_j/p_i)
                                        - G_ij p_j/(G_ij p_j + p_i)];
    off-diagonal: dI_i/dp_j = G_ij p_i / (G_ij p_j + p_i).
    """
    p = _check_p(instance, p)
    G = _offdiag(instance.gains)
    gp = G * p[None, :]                      # G_ij p_j
    denom = gp + p[:, None]                  # G_ij p_j + p_i
    x = gp / p[:, None]
    off = np.where(G > 0, G * p[:, None] / denom, 0.0)
    np.fill_diagonal(off, 0.0)
    diag = np.sum(np.log1p(x) - np.where(G > 0, gp / denom, 0.0), axis=1)
    J = off
    J[np.diag_indices_from(J)] = diag
    return J


def affine_model() -> InterferenceModel:
    return InterferenceModel(
        name="affine",
        eval=affine_eval,
        jacobian=affine_jacobian,
        claims_log_concave=True,
        claims_scale_invariant_gradient=True,
    )


def rayleigh_model() -> InterferenceModel:
    return InterferenceModel(
        name="rayleigh",
        eval=rayleigh_eval,
        jacobian=rayleigh_jacobian,
        claims_log_concave=True,
        claims_scale_invariant_gradient=True,
    )


@dataclass
class AxiomCheck:
    passed: bool
    trials: int
    counterexample: Optional[dict] = None


@dataclass
class AxiomReport:
    model: str
    seed: int
    trials: int
    tol: float
    tol_strict: float
    checks: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "seed": self.seed,
            "trials": self.trials,
            "tol": self.tol,
            "tol_strict": self.tol_strict,
            "all_passed": self.all_passed,
            "checks": {
                name: {
                    "passed": c.passed,
                    "trials": c.trials,
                    "counterexample": c.counterexample,
                }
                for name, c in self.checks.items()
            },
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _random_power(K: int, p_max: float, rng: np.random.Generator) -> np.ndarray:
    # log-uniform over four decades below the cap exercises small powers too
    return p_max * 10.0 ** rng.uniform(-4.0, 0.0, size=K)


def check_standard_axioms(model: InterferenceModel, instance: NetworkInstance,
                          trials: int, rng: np.random.Generator,
                          tol: float = 1e-9, tol_strict: float = 1e-12,
                          seed: int = 0) -> AxiomReport:
    """Randomized test of positivity, strict scalability and monotonicity,
    plus a feasibility certificate from the capped fixed-point iteration.

    Tolerances are relative to the magnitude of the compared values; a model
    that achieves scalability only with equality is reported as failing.
    """
    K = instance.num_links
    report = AxiomReport(model=model.name, seed=seed, trials=trials,
                         tol=tol, tol_strict=tol_strict)

    pos = AxiomCheck(passed=True, trials=trials)
    scal = AxiomCheck(passed=True, trials=trials)
    mono = AxiomCheck(passed=True, trials=trials)
    for t in range(trials):
        p = _random_power(K, instance.p_max, rng)
        I = model.eval(instance, p)
        if pos.passed and not np.all(I > 0):
            pos.passed = False
            pos.counterexample = {"trial": t, "p": p.tolist(), "I": I.tolist()}
        alpha = rng.uniform(1.001, 10.0)
        if scal.passed:
            Ia = model.eval(instance, alpha * p)
            scale = np.maximum(1.0, np.abs(Ia))
            if not np.all(alpha * I - Ia > tol_strict * scale):
                scal.passed = False
                scal.counterexample = {
                    "trial": t, "alpha": alpha, "p": p.tolist(),
                    "alpha_I": (alpha * I).tolist(), "I_alpha_p": Ia.tolist(),
                }
        if mono.passed:
            p_lo = p * rng.uniform(0.05, 1.0, size=K)
            I_lo = model.eval(instance, p_lo)
            scale = np.maximum(1.0, np.abs(I_lo))
            if not np.all(I - I_lo >= -tol * scale):
                mono.passed = False
                mono.counterexample = {
                    "trial": t, "p": p.tolist(), "p_lower": p_lo.tolist(),
                    "I": I.tolist(), "I_lower": I_lo.tolist(),
                }
    report.checks["positivity"] = pos
    report.checks["scalability"] = scal
    report.checks["monotonicity"] = mono

    p_fix, _, converged = yates_iterate(model, instance,
                                        np.full(K, instance.p_max),
                                        tol=min(tol, 1e-10), max_iter=5000)
    I_fix = model.eval(instance, p_fix)
    scale = np.maximum(1.0, np.abs(I_fix))
    feas_ok = bool(converged and np.all(p_fix - I_fix >= -tol * scale))
    feas = AxiomCheck(passed=feas_ok, trials=1)
    if not feas_ok:
        feas.counterexample = {
            "p_fixed": p_fix.tolist(), "I_at_fixed": I_fix.tolist(),
            "converged": bool(converged),
        }
    report.checks["feasibility"] = feas
    return report


def check_log_concavity_ratio(model: InterferenceModel, instance: NetworkInstance,
                              trials: int, rng: np.random.Generator,
                              tol: float = 1e-9, seed: int = 0) -> AxiomReport:
    """Gradient-over-value monotonicity of a non-negative log-concave map:
    for p >= p', every entry of J(p)/I(p) must not exceed J(p')/I(p')."""
    if model.jacobian is None:
        raise ValueError(f"model {model.name!r} provides no jacobian")
    K = instance.num_links
    report = AxiomReport(model=model.name, seed=seed, trials=trials,
                         tol=tol, tol_strict=0.0)
    check = AxiomCheck(passed=True, trials=trials)
    for t in range(trials):
        p = _random_power(K, instance.p_max, rng)
        p_lo = p * rng.uniform(0.05, 1.0, size=K)
        r_hi = model.jacobian(instance, p) / model.eval(instance, p)[:, None]
        r_lo = model.jacobian(instance, p_lo) / model.eval(instance, p_lo)[:, None]
        scale = np.maximum(1.0, np.abs(r_lo))
        if not np.all(r_hi - r_lo <= tol * scale):
            check.passed = False
            check.counterexample = {
                "trial": t, "p": p.tolist(), "p_lower": p_lo.tolist(),
                "ratio_p": r_hi.tolist(), "ratio_lower": r_lo.tolist(),
            }
            break
    report.checks["gradient_ratio_monotone"] = check
    return report


def yates_iterate(model: InterferenceModel, instance: NetworkInstance,
                  p0, tol: float = 1e-8, max_iter: int = 1000):
    """Capped standard power control iteration p <- min{I(p), p_max}.

    Returns (last iterate, iterations used, converged flag); converged means
    the sup-norm step fell below tol before max_iter.
    """
    p = _check_p(instance, np.asarray(p0, dtype=float))
    cap = instance.p_max
    for it in range(1, max_iter + 1):
        p_next = np.minimum(model.eval(instance, p), cap)
        if np.max(np.abs(p_next - p)) < tol:
            return p_next, it, True
        p = p_next
    return p, max_iter, False
