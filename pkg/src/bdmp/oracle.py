"""Exact transient solver for small models.

Enumerates the reachable stabilized state space breadth-first, builds the
sparse generator (a timed rate splits into rate * branch probability per
stabilization branch), and computes transient probabilities by uniformization.
Ground truth for explorer and simulator tests; refuses models beyond a state
cap rather than attempting the full benchmark space.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import Model
from .pathprob import poisson_weights
from .semantics import SystemState, apply_timed, enabled_timed, evaluate_structure, initial_state

__all__ = ["EnumeratedChain", "StateCapExceeded", "enumerate_chain", "transient",
           "steady_state", "export_edge_list"]


class StateCapExceeded(RuntimeError):
    def __init__(self, count: int):
        super().__init__(f"state cap exceeded: more than {count} reachable states")
        self.count = count


@dataclass
class EnumeratedChain:
    states: list[SystemState]
    transitions: list[tuple[int, int, float]]  # (from, to, rate), parallel edges merged
    target_mask: np.ndarray
    initial_distribution: list[tuple[int, float]]


def enumerate_chain(model: Model, state_cap: int = 20000) -> EnumeratedChain:
    """Breadth-first closure over timed transitions with exact stabilization."""
    init = initial_state(model, prune_below=0.0)
    index: dict[SystemState, int] = {}
    states: list[SystemState] = []
    queue: deque[int] = deque()

    def intern(state: SystemState) -> int:
        i = index.get(state)
        if i is not None:
            return i
        if len(states) >= state_cap:
            raise StateCapExceeded(state_cap)
        i = len(states)
        index[state] = i
        states.append(state)
        queue.append(i)
        return i

    initial = [(intern(b.state), b.probability) for b in init.branches]
    rates: dict[tuple[int, int], float] = {}
    while queue:
        i = queue.popleft()
        for t in enabled_timed(model, states[i]):
            res = apply_timed(model, states[i], t, prune_below=0.0)
            for br in res.branches:
                j = intern(br.state)
                rate = t.rate * br.probability
                if rate > 0.0:
                    rates[(i, j)] = rates.get((i, j), 0.0) + rate

    target = model.target_expression
    mask = np.zeros(len(states), dtype=bool)
    if target is not None:
        for i, st in enumerate(states):
            mask[i] = target.evaluate(evaluate_structure(model, st))
    transitions = [(i, j, r) for (i, j), r in sorted(rates.items())]
    return EnumeratedChain(states=states, transitions=transitions,
                           target_mask=mask, initial_distribution=initial)


def _build_matrices(chain: EnumeratedChain, absorbing_target: bool):
    n = len(chain.states)
    rows, cols, vals = [], [], []
    exit_rate = np.zeros(n)
    for i, j, r in chain.transitions:
        if absorbing_target and chain.target_mask[i]:
            continue
        if i == j:
            continue
        rows.append(i)
        cols.append(j)
        vals.append(r)
        exit_rate[i] += r
    R = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return R, exit_rate


def transient(chain: EnumeratedChain, t: float, absorbing_target: bool,
              tol: float = 1e-13) -> float:
    """Probability mass on target states at time t.

    With `absorbing_target` the target rows are zeroed first, which makes the
    result the probability of having hit the target by t (unreliability);
    otherwise it is the plain occupancy at t (unavailability).
    """
    if t < 0:
        raise ValueError("time must be >= 0")
    n = len(chain.states)
    v = np.zeros(n)
    for i, p in chain.initial_distribution:
        v[i] += p
    if t == 0.0:
        return float(v[chain.target_mask].sum())
    R, exit_rate = _build_matrices(chain, absorbing_target)
    lam = float(exit_rate.max(initial=0.0))
    if lam <= 0.0:
        return float(v[chain.target_mask].sum())
    P = (R / lam).tocsr()
    stay = 1.0 - exit_rate / lam
    k0, w = poisson_weights(lam * t, tol)
    mask = chain.target_mask
    acc = 0.0
    for _ in range(k0):
        v = v * stay + (v @ P)
    for wk in w:
        acc += wk * float(v[mask].sum())
        v = v * stay + (v @ P)
    return min(max(acc, 0.0), 1.0)


def steady_state(chain: EnumeratedChain, tol: float = 1e-10,
                 t_start: float = 1.0) -> float:
    """Asymptotic target occupancy by transient evaluation at doubling horizons."""
    t = t_start
    prev = transient(chain, t, absorbing_target=False)
    for _ in range(60):
        t *= 2.0
        cur = transient(chain, t, absorbing_target=False)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    return prev


def export_edge_list(chain: EnumeratedChain) -> str:
    """Plain-text edge list (from-index, to-index, rate) for external cross-checks."""
    lines = [f"{i} {j} {r!r}" for i, j, r in chain.transitions]
    return "\n".join(lines) + ("\n" if lines else "")
