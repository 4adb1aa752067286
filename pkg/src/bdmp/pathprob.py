"""Transient probabilities along small chains by uniformization.

The traversal time of a sequence of states with exponential sojourns is
hypoexponential; with detected repair loops the chain gains back edges and the
law becomes general phase-type.  Both are solved the same way: embed the chain
in a Poisson-subordinated discrete chain at the fastest exit rate and sum
Poisson-weighted step distributions.  This is numerically stable for repeated
or near-equal rates where the classical partial-fraction formula cancels badly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["poisson_weights", "hypoexp_cdf", "path_probability", "PathChain"]

_WEIGHT_CACHE: dict[tuple[float, float], tuple[int, np.ndarray]] = {}


def poisson_weights(mean: float, tol: float = 1e-13) -> tuple[int, np.ndarray]:
    """Poisson pmf values covering all but `tol` of the mass.

    Returns (k0, w) with w[i] = pmf(k0 + i).  Computed outward from the mode in
    log space, so it stays stable for large means.
    """
    key = (mean, tol)
    cached = _WEIGHT_CACHE.get(key)
    if cached is not None:
        return cached
    if mean <= 0.0:
        result = (0, np.array([1.0]))
        _WEIGHT_CACHE[key] = result
        return result
    half = 13.0 * math.sqrt(mean) + 40.0
    lo = max(0, int(mean - half))
    hi = int(mean + half) + 1
    ks = np.arange(lo, hi + 1, dtype=np.float64)
    logw = ks * math.log(mean) - mean - np.array([math.lgamma(k + 1.0) for k in ks])
    w = np.exp(logw)
    # trim negligible tails
    keep = w > 1e-18 / max(len(w), 1)
    if keep.any():
        idx = np.nonzero(keep)[0]
        lo2, hi2 = idx[0], idx[-1]
        w = w[lo2:hi2 + 1]
        lo += int(lo2)
    total = w.sum()
    if total < 0.99:
        raise ArithmeticError("poisson weight window too narrow")
    # the window holds all but < 1e-15 of the mass; normalizing removes the
    # correlated lgamma rounding error that otherwise grows with the mean
    w = w / total
    result = (lo, w)
    _WEIGHT_CACHE[key] = result
    if len(_WEIGHT_CACHE) > 4096:
        _WEIGHT_CACHE.clear()
    return result


@dataclass
class PathChain:
    """A small continuous-time chain: per-node total exit rate plus explicit
    edges; mass leaving a node beyond its explicit edges is lost (off-path).

    `end` is the node whose reach/occupancy probability is queried.  With
    `absorb_end` the end node keeps all mass that arrives (first-passage);
    otherwise it keeps its own exit rate and the query is occupancy at time t.
    """

    exit_rates: list[float] = field(default_factory=list)
    edges: list[list[tuple[int, float]]] = field(default_factory=list)

    def add_node(self, exit_rate: float) -> int:
        self.exit_rates.append(float(exit_rate))
        self.edges.append([])
        return len(self.exit_rates) - 1

    def add_edge(self, src: int, dst: int, rate: float) -> None:
        self.edges[src].append((dst, float(rate)))

    def solve(self, t: float, end: int, absorb_end: bool = True,
              start: int = 0, tol: float = 1e-13) -> float:
        """P(in `end` at time t) starting from `start`."""
        n = len(self.exit_rates)
        if t < 0:
            raise ValueError("time must be >= 0")
        rates = list(self.exit_rates)
        edges = [list(e) for e in self.edges]
        if absorb_end:
            rates[end] = 0.0
            edges[end] = []
        lam = max(rates, default=0.0)
        if lam <= 0.0 or t == 0.0:
            return 1.0 if start == end else 0.0
        # uniformized jump matrix (rows may be substochastic: off-path leak)
        P = np.zeros((n, n))
        for i in range(n):
            stay = 1.0 - rates[i] / lam
            P[i, i] += stay
            for j, r in edges[i]:
                P[i, j] += r / lam
        k0, w = poisson_weights(lam * t, tol)
        v = np.zeros(n)
        v[start] = 1.0
        acc = 0.0
        for _ in range(k0):
            v = v @ P
        for wk in w:
            acc += wk * v[end]
            v = v @ P
        return min(max(acc, 0.0), 1.0)

    def absorption_probability(self, end: int, start: int = 0) -> float:
        """Time-unbounded probability of ever reaching `end` (end absorbing)."""
        n = len(self.exit_rates)
        A = np.zeros((n, n))
        b = np.zeros(n)
        for i in range(n):
            A[i, i] = 1.0
            if i == end:
                b[i] = 1.0
                continue
            rate = self.exit_rates[i]
            if rate <= 0.0:
                continue
            for j, r in self.edges[i]:
                A[i, j] -= r / rate
        x = np.linalg.solve(A, b)
        return min(max(float(x[start]), 0.0), 1.0)

    def expected_visits(self, node: int, end: int, start: int = 0) -> float:
        """Expected number of visits to `node` before absorption at `end`."""
        n = len(self.exit_rates)
        # embedded jump chain, end made absorbing
        P = np.zeros((n, n))
        for i in range(n):
            if i == end:
                continue
            rate = self.exit_rates[i]
            if rate <= 0.0:
                continue
            for j, r in self.edges[i]:
                P[i, j] += r / rate
        # N = (I - P)^{-1}; visits to `node` from `start`
        x = np.linalg.solve(np.eye(n) - P.T, np.eye(n)[node])
        return max(float(x[start]), 0.0)


def hypoexp_cdf(rates, t: float, tol: float = 1e-13) -> float:
    """P(S1 + ... + Sn <= t) with Si ~ exponential(rates[i])."""
    rates = list(rates)
    if any(r <= 0 for r in rates):
        raise ValueError("all rates must be > 0")
    if not rates:
        return 1.0
    chain = PathChain()
    for r in rates:
        chain.add_node(r)
    end = chain.add_node(0.0)
    for i, r in enumerate(rates):
        chain.add_edge(i, i + 1, r)
    return chain.solve(t, end, absorb_end=True, tol=tol)


def path_probability(exit_rates, branch_probs, t: float, tol: float = 1e-13) -> float:
    """Probability that a specific path completes within `t` hours.

    `exit_rates` are the total exit rates of the visited states, `branch_probs`
    the jump and instantaneous-outcome probabilities along the path;
    the result is (prod of branch_probs) * P(sum of sojourns <= t).
    """
    prod = 1.0
    for p in branch_probs:
        if not (0.0 < p <= 1.0):
            raise ValueError(f"branch probability {p} outside (0, 1]")
        prod *= p
    return prod * hypoexp_cdf(exit_rates, t, tol=tol)
