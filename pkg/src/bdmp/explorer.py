"""Sequence exploration of the implicit Markov chain.

Explores timed-transition/cascade sequences best-first by probability mass and
prunes below a threshold.  Two layers share the exploration:

* Sequences: each target-reaching path becomes a small chain (the path states
  plus registered repair loops) solved by uniformization, giving the exact
  time-bounded probability of that sequence family; loops folded back onto the
  path are traversed any number of times inside the chain.

* Bounds: every expanded state's full transition fan is collected into one
  partial chain whose unexplored outflow feeds an absorbing "unknown" state.
  The process agrees with this chain until it first takes an unexplored edge,
  so P(target, never unknown) <= truth <= P(target) + P(unknown); these give
  the reported estimate and upper bound, with the gap exactly the truncated
  mass.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .model import Model
from .pathprob import PathChain, poisson_weights
from .semantics import (
    InstantEvent,
    StabilizedBranch,
    SystemState,
    TimedTransition,
    apply_timed,
    enabled_timed,
    evaluate_structure,
    initial_state,
    _eval_values,
    _eval_with_latch_update,
)

__all__ = [
    "ExploreConfig",
    "Step",
    "Sequence",
    "ExploreReport",
    "InitialStateInTargetError",
    "explore",
    "availability_at",
    "relevant_filter",
    "fold_loops",
    "FoldAction",
]

RELIABILITY = "reliability"
AVAILABILITY = "availability"


@dataclass(frozen=True)
class ExploreConfig:
    mission_time: float
    prune_threshold: float = 1e-9
    max_depth: int = 40
    mode: str = RELIABILITY
    filtering: bool = True
    loop_folding: bool = True
    fold_length: int = 4
    max_states: int | None = None
    max_sequences: int | None = None
    solver_tol: float = 1e-13

    def __post_init__(self):
        if not (0.0 < self.prune_threshold < 1.0):
            raise ValueError("prune_threshold must lie in (0, 1)")
        if self.mission_time <= 0:
            raise ValueError("mission_time must be > 0")
        if self.mode not in (RELIABILITY, AVAILABILITY):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class Step:
    label: str
    kind: str  # "EXP" | "INS"
    value: float  # model rate for EXP steps, outcome probability for INS steps


@dataclass(frozen=True)
class Sequence:
    steps: tuple[Step, ...]
    contribution: float
    upper_bound: float


@dataclass
class ExploreReport:
    estimate: float
    upper_bound_total: float
    sequences: list[Sequence]
    states_explored: int
    sequences_truncated: int
    wall_time: float
    mode: str
    truncated_mass: float
    resource_limited: bool = False


class InitialStateInTargetError(ValueError):
    pass


def _timed_label(t: TimedTransition) -> str:
    prefix = {"fail_required": "failF", "fail_standby": "failS",
              "repair_complete": "repair", "phase_advance": "phase"}[t.effect]
    return f"{prefix}({t.leaf})"


def _cascade_steps(events: tuple[InstantEvent, ...]) -> tuple[Step, ...]:
    return tuple(Step(f"{'good' if e.good else 'bad'}({e.leaf})", "INS", e.probability)
                 for e in events)


# --- relevant event filtering ----------------------------------------------------


def _observables(model: Model, values: list[bool], latches: tuple[int, ...]):
    rt = model.rt
    target = model.target_expression
    tval = target.evaluate({n: values[rt.node_index[n]] for n in rt.node_ids}) \
        if target is not None else False
    origins = tuple(values[rt.node_index[o]] for o in rt.trigger_origins)
    return (tval, origins, latches)


def relevant_filter(model: Model, state: SystemState,
                    candidates: list[TimedTransition]) -> list[TimedTransition]:
    """Drop transitions that provably cannot move the target or any trigger.

    A failure (or phase advance toward failure) is irrelevant when setting the
    leaf failed changes neither the target expression, any trigger origin, nor
    any edge-gate latch.  Repairs of irrelevant failed leaves are kept only
    when the leaf holds a repairman another queued leaf is waiting for.
    """
    rt = model.rt
    base_values = _eval_values(model, state)
    base_obs = _observables(model, base_values, state.latches)
    kept: list[TimedTransition] = []
    for t in candidates:
        i = rt.leaf_index[t.leaf]
        ls = list(state.leaves)
        if t.effect in ("fail_required", "fail_standby", "phase_advance"):
            ls[i] = ls[i]._replace(failed=1)
            spec_state = SystemState(tuple(ls), state.latches)
            values, latches = _eval_with_latch_update(model, spec_state, base_values)
            if _observables(model, values, latches) != base_obs:
                kept.append(t)
        elif t.effect == "repair_complete":
            ls[i] = ls[i]._replace(failed=0, phase=0)
            spec_state = SystemState(tuple(ls), state.latches)
            values, latches = _eval_with_latch_update(model, spec_state, base_values)
            if _observables(model, values, latches) != base_obs:
                kept.append(t)
            else:
                leaf = model.leaves[i]
                if leaf.repair_group is not None:
                    members = rt.group_members[leaf.repair_group]
                    if any(state.leaves[j].repair >= 2 for j in members):
                        kept.append(t)
        else:
            kept.append(t)
    return kept


# --- loop bookkeeping --------------------------------------------------------------


@dataclass(frozen=True)
class FoldAction:
    kind: str  # "forward" | "fold" | "return_to_root" | "truncate"
    position: int | None = None  # path index of the revisited state
    length: int | None = None  # loop length in edges


def fold_loops(path: list[SystemState], new_state: SystemState,
               fold_length: int = 4) -> FoldAction:
    """Classify a transition endpoint against the current path.

    Loops up to `fold_length` edges are folded: the path is not re-entered and
    the loop is recorded so sequence probabilities count its traversals any
    number of times.  Longer returns to the initial state are renewal events;
    other long loops end the path (their mass stays in the bound).
    """
    for pos in range(len(path) - 1, -1, -1):
        if path[pos] == new_state:
            length = len(path) - pos
            if length <= fold_length:
                return FoldAction("fold", pos, length)
            if pos == 0:
                return FoldAction("return_to_root", 0, length)
            return FoldAction("truncate", pos, length)
    return FoldAction("forward")


@dataclass(frozen=True)
class _LoopHop:
    state: SystemState
    exit_rate: float
    in_key: tuple
    in_rate: float


@dataclass(frozen=True)
class _Loop:
    home: SystemState
    hops: tuple[_LoopHop, ...]  # states visited after leaving home, may be empty
    back_key: tuple
    back_rate: float


class _PathNode:
    __slots__ = ("state", "parent", "depth", "ub", "edge_key", "edge_rate",
                 "jump_p", "steps", "order")

    def __init__(self, state, parent, depth, ub, edge_key, edge_rate, jump_p, steps):
        self.state = state
        self.parent = parent
        self.depth = depth
        self.ub = ub
        self.edge_key = edge_key  # identity of the edge that produced this node
        self.edge_rate = edge_rate  # rate * cascade branch probability
        self.jump_p = jump_p
        self.steps = steps  # steps contributed by this edge (timed + cascade)
        self.order = 0

    def path(self) -> list["_PathNode"]:
        out = []
        node = self
        while node is not None:
            out.append(node)
            node = node.parent
        out.reverse()
        return out


class _StateRecord:
    __slots__ = ("index", "target", "expanded", "exit_rate", "fan", "unknown_rate")

    def __init__(self, index: int, target: bool):
        self.index = index
        self.target = target
        self.expanded = False
        self.exit_rate = 0.0
        self.fan = ()  # tuple of (transition, branch, edge_rate)
        self.unknown_rate = 0.0


def _build_sequence_chain(nodes: list[_PathNode],
                          exit_rates: dict[SystemState, float],
                          registry: dict[SystemState, list[_Loop]]) -> tuple[PathChain, int]:
    """Small chain for one sequence family: the path plus registered loops.

    Every transition edge is identified by (source chain node, transition +
    cascade outcome) and added exactly once, so loops sharing hop prefixes with
    each other or with the path merge into a trie instead of duplicating mass.
    """
    chain = PathChain()
    ids = [chain.add_node(exit_rates.get(n.state, 0.0)) for n in nodes]
    edge_map: dict[tuple[int, tuple], int] = {}
    for pos in range(1, len(nodes)):
        chain.add_edge(ids[pos - 1], ids[pos], nodes[pos].edge_rate)
        edge_map[(ids[pos - 1], nodes[pos].edge_key)] = ids[pos]
    for pos, node in enumerate(nodes):
        for loop in registry.get(node.state, ()):  # registration order: deterministic
            cur = ids[pos]
            for hop in loop.hops:
                nxt = edge_map.get((cur, hop.in_key))
                if nxt is None:
                    nxt = chain.add_node(hop.exit_rate)
                    chain.add_edge(cur, nxt, hop.in_rate)
                    edge_map[(cur, hop.in_key)] = nxt
                cur = nxt
            if (cur, loop.back_key) not in edge_map:
                chain.add_edge(cur, ids[pos], loop.back_rate)
                edge_map[(cur, loop.back_key)] = ids[pos]
    return chain, ids[-1]


def _partial_chain_bounds(records: dict[SystemState, _StateRecord],
                          initial: list[tuple[SystemState, float]],
                          mode: str, T: float, tol: float) -> tuple[float, float]:
    """Estimate and upper bound from the explored portion of the state space.

    Unexplored outflow is absorbed by an extra "unknown" state; the true chain
    coincides with this one until it first takes an unexplored edge, so target
    mass without unknown is a lower bound and adding unknown mass an upper one.
    """
    reliability = mode == RELIABILITY
    expanded = [rec for rec in records.values() if rec.expanded]
    n = len(expanded)
    unknown = n
    col_of = {id(rec): i for i, rec in enumerate(expanded)}

    def dest_index(state: SystemState) -> int:
        rec = records.get(state)
        if rec is None or not rec.expanded:
            return unknown
        return col_of[id(rec)]

    rows, cols, vals = [], [], []
    exit_rate = np.zeros(n + 1)
    target_cols = []
    for i, rec in enumerate(expanded):
        if rec.target:
            target_cols.append(i)
            if reliability:
                continue  # absorbing
        out = 0.0
        for t, br, edge_rate in rec.fan:
            j = dest_index(br.state)
            rows.append(i)
            cols.append(j)
            vals.append(edge_rate)
            out += edge_rate
        if rec.unknown_rate > 0.0:
            rows.append(i)
            cols.append(unknown)
            vals.append(rec.unknown_rate)
            out += rec.unknown_rate
        exit_rate[i] = out

    v = np.zeros(n + 1)
    for state, p in initial:
        v[dest_index(state)] += p
    lam = float(exit_rate.max(initial=0.0))
    if lam <= 0.0:
        lo = float(v[target_cols].sum()) if target_cols else 0.0
        return lo, min(1.0, lo + float(v[unknown]))
    P = sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n + 1)) / lam
    stay = 1.0 - exit_rate / lam
    k0, w = poisson_weights(lam * T, tol)
    tmask = np.zeros(n + 1, dtype=bool)
    tmask[target_cols] = True
    lo = 0.0
    hi_extra = 0.0
    for _ in range(k0):
        v = v * stay + (v @ P)
    for wk in w:
        lo += wk * float(v[tmask].sum())
        hi_extra += wk * float(v[unknown])
        v = v * stay + (v @ P)
    lo = min(max(lo, 0.0), 1.0)
    return lo, min(1.0, lo + max(hi_extra, 0.0))


# --- the explorer -------------------------------------------------------------------


def explore(model: Model, cfg: ExploreConfig) -> ExploreReport:
    """Best-first sequence exploration with truncation and loop folding."""
    t_start = time.perf_counter()
    target = model.target_expression
    T = cfg.mission_time
    theta = cfg.prune_threshold
    reliability = cfg.mode == RELIABILITY

    def is_target(state: SystemState) -> bool:
        if target is None:
            return False
        return target.evaluate(evaluate_structure(model, state))

    init = initial_state(model, prune_below=0.0)
    records: dict[SystemState, _StateRecord] = {}

    def record_of(state: SystemState) -> _StateRecord:
        rec = records.get(state)
        if rec is None:
            rec = _StateRecord(len(records), is_target(state))
            records[state] = rec
        return rec

    heap: list[tuple[float, int, _PathNode]] = []
    counter = 0
    initial_dist: list[tuple[SystemState, float]] = []
    for br in init.branches:
        rec = record_of(br.state)
        if rec.target:
            raise InitialStateInTargetError("initial state already in target")
        initial_dist.append((br.state, br.probability))
        node = _PathNode(br.state, None, 0, br.probability, None, 0.0, br.probability,
                         _cascade_steps(br.events))
        node.order = counter
        heapq.heappush(heap, (-node.ub, counter, node))
        counter += 1

    registry: dict[SystemState, list[_Loop]] = {}
    registered: set[tuple] = set()
    recorded: list[tuple[list[_PathNode], bool, int]] = []
    states_expanded = 0
    sequences_truncated = 0
    resource_limited = False

    while heap:
        _, _, node = heapq.heappop(heap)
        rec = records[node.state]
        on_target = rec.target

        if not rec.expanded:
            if cfg.max_states is not None and states_expanded >= cfg.max_states:
                resource_limited = True
                continue
            transitions = enabled_timed(model, node.state)
            if cfg.filtering:
                transitions = relevant_filter(model, node.state, transitions)
            transitions.sort(key=_timed_label)
            fan = []
            unknown_rate = 0.0
            if not (reliability and on_target):
                for t in transitions:
                    res = apply_timed(model, node.state, t, prune_below=theta)
                    unknown_rate += t.rate * res.truncated
                    for br in res.branches:
                        fan.append((t, br, t.rate * br.probability))
                        record_of(br.state)
            rec.expanded = True
            rec.fan = tuple(fan)
            rec.unknown_rate = unknown_rate
            rec.exit_rate = sum(e for _, _, e in fan) + unknown_rate
            states_expanded += 1

        if on_target:
            if cfg.max_sequences is not None and len(recorded) >= cfg.max_sequences:
                resource_limited = True
            else:
                absorbed = reliability or rec.exit_rate <= 0.0
                recorded.append((node.path(), absorbed, node.order))
            if reliability:
                continue

        if node.depth >= cfg.max_depth:
            sequences_truncated += 1
            continue
        if not rec.fan:
            continue
        lam = rec.exit_rate
        path_states = [n.state for n in node.path()]
        nodes = node.path()
        for t, br, edge_rate in rec.fan:
            jump_p = edge_rate / lam
            action = fold_loops(path_states, br.state,
                                cfg.fold_length if cfg.loop_folding else 0)
            if action.kind == "fold":
                pos = action.position
                hops = tuple(
                    _LoopHop(nodes[k].state, records[nodes[k].state].exit_rate,
                             nodes[k].edge_key, nodes[k].edge_rate)
                    for k in range(pos + 1, len(nodes)))
                back_key = (t.leaf, t.effect, br.events)
                loop = _Loop(nodes[pos].state, hops, back_key, edge_rate)
                sig = (loop.home, tuple((h.state, h.in_key) for h in hops), back_key)
                if sig not in registered:
                    registered.add(sig)
                    registry.setdefault(loop.home, []).append(loop)
                continue
            if action.kind in ("return_to_root", "truncate"):
                sequences_truncated += 1
                continue
            ub = node.ub * jump_p
            if ub < theta:
                sequences_truncated += 1
                continue
            steps = (Step(_timed_label(t), "EXP", t.rate),) + _cascade_steps(br.events)
            child = _PathNode(br.state, node, node.depth + 1, ub,
                              (t.leaf, t.effect, br.events), edge_rate, jump_p, steps)
            child.order = counter
            heapq.heappush(heap, (-ub, counter, child))
            counter += 1

    # sequence contributions against the final loop registry, so every family
    # counts its registered detours regardless of exploration order
    exit_rates = {state: rec.exit_rate for state, rec in records.items() if rec.expanded}
    sequences: list[tuple[Sequence, int]] = []
    for nodes, absorbed, order in recorded:
        chain, end = _build_sequence_chain(nodes, exit_rates, registry)
        weight = nodes[0].jump_p  # initial stabilization branch probability
        contribution = weight * chain.solve(T, end, absorb_end=absorbed, tol=cfg.solver_tol)
        ub_seq = min(weight * chain.absorption_probability(end), 1.0)
        steps = tuple(s for n in nodes for s in n.steps)
        sequences.append((Sequence(steps, contribution, max(ub_seq, contribution)), order))

    estimate, upper = _partial_chain_bounds(records, initial_dist, cfg.mode, T,
                                            cfg.solver_tol)

    sequences.sort(key=lambda sq: (-sq[0].contribution,
                                   tuple(s.label for s in sq[0].steps)))
    return ExploreReport(
        estimate=estimate,
        upper_bound_total=upper,
        sequences=[sq for sq, _ in sequences],
        states_explored=states_expanded,
        sequences_truncated=sequences_truncated,
        wall_time=time.perf_counter() - t_start,
        mode=cfg.mode,
        truncated_mass=upper - estimate,
        resource_limited=resource_limited,
    )


def availability_at(model: Model, cfg: ExploreConfig) -> ExploreReport:
    """Unavailability at the mission time: exploration without absorption."""
    if cfg.mode != AVAILABILITY:
        cfg = replace(cfg, mode=AVAILABILITY)
    return explore(model, cfg)
