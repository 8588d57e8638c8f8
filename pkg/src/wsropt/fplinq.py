"""Scalar-power FPLinQ benchmark.

Closed-form block updates on (SINR, quadratic-transform auxiliary, power),
run from full power; the weighted sum rate ascends monotonically along the
iterations.  Pure power control, no discrete scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wsropt.channel import NetworkInstance
from wsropt.interference import affine_model
from wsropt.solvers import SolveResult, wsr

# keeps switched-off links inside the strictly positive domain of the rate
# functions; a link parked here contributes zero rate
POWER_FLOOR = 1e-30


@dataclass
class FpState:
    p: np.ndarray       # transmit powers in (0, p_max]
    gamma: np.ndarray   # SINRs
    y: np.ndarray       # quadratic-transform auxiliaries


def fplinq_step(instance: NetworkInstance, w, state: FpState) -> FpState:
    """One block update gamma -> y -> p.

    gamma_i = G_ii p_i / (sum_{j!=i} G_ij p_j + noise)
    y_i     = sqrt(w_i (1+gamma_i) G_ii p_i) / (sum_j G_ij p_j + noise)
    p_i     = min{p_max, y_i^2 w_i (1+gamma_i) G_ii / (sum_j y_j^2 G_ji)^2}
    """
    G = instance.gains
    w = np.asarray(w, dtype=float)
    diag = np.diag(G)
    off = G.copy()
    np.fill_diagonal(off, 0.0)
    p = state.p
    gamma = diag * p / (off @ p + instance.noise)
    y = np.sqrt(w * (1.0 + gamma) * diag * p) / (G @ p + instance.noise)
    denom = (G.T @ (y * y)) ** 2
    with np.errstate(divide="ignore"):
        p_new = np.where(denom > 0.0,
                         y * y * w * (1.0 + gamma) * diag / denom,
                         instance.p_max)
    p_new = np.clip(p_new, POWER_FLOOR, instance.p_max)
    return FpState(p=p_new, gamma=gamma, y=y)


def fplinq_solve(instance: NetworkInstance, w, iters: int = 100) -> SolveResult:
    """Run `iters` block updates from full power; the trace holds the WSR of
    the iterate after each update (entry 0 is the starting point)."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    w = np.asarray(w, dtype=float)
    K = instance.num_links
    model = affine_model()
    state = FpState(p=np.full(K, float(instance.p_max)),
                    gamma=np.zeros(K), y=np.zeros(K))
    trace = [(0, wsr(instance, model, state.p, w))]
    history = [state.p.copy()]
    for k in range(1, iters + 1):
        state = fplinq_step(instance, w, state)
        trace.append((k, wsr(instance, model, state.p, w)))
        history.append(state.p.copy())
    return SolveResult(p_final=state.p, objective_trace=trace, converged=True,
                       p_history=history)
