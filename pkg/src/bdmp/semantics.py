"""Execution semantics: structure function, mode assignment, instantaneous
cascades, and timed transitions of the implicit Markov chain.

States are plain immutable tuples, freely hashable and copyable.  All
functions here are pure: they never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import NamedTuple

from .model import GateKind, LeafKind, Model

__all__ = [
    "LeafState",
    "SystemState",
    "InstantEvent",
    "StabilizedBranch",
    "StabilizationResult",
    "TimedTransition",
    "CascadeDivergenceError",
    "TransitionNotEnabledError",
    "evaluate_structure",
    "compute_modes",
    "stabilize",
    "initial_state",
    "enabled_timed",
    "apply_timed",
    "render_state",
]

# repair slot codes: 0 = idle, 1 = under repair, >= 2 = queued at position code-1
IDLE = 0
UNDER_REPAIR = 1


class LeafState(NamedTuple):
    failed: int
    phase: int
    required: int
    repair: int


class SystemState(NamedTuple):
    leaves: tuple[LeafState, ...]
    latches: tuple[int, ...]


class InstantEvent(NamedTuple):
    leaf: str
    good: bool
    probability: float


@dataclass(frozen=True)
class StabilizedBranch:
    """One outcome of resolving an instantaneous cascade."""

    state: SystemState
    probability: float
    events: tuple[InstantEvent, ...]


@dataclass(frozen=True)
class StabilizationResult:
    branches: tuple[StabilizedBranch, ...]
    truncated: float


class TimedTransition(NamedTuple):
    leaf: str
    effect: str  # fail_required | fail_standby | repair_complete | phase_advance
    rate: float


class CascadeDivergenceError(RuntimeError):
    """The instantaneous cascade did not reach a fixpoint (trigger loop)."""


class TransitionNotEnabledError(ValueError):
    pass


# --- structure function --------------------------------------------------------


def _eval_values(model: Model, state: SystemState) -> list[bool]:
    """Node values in model.rt.node_index order, EDGE_AND taken from latches."""
    rt = model.rt
    values = [False] * len(rt.node_ids)
    for i, leaf in enumerate(model.leaves):
        values[i] = bool(state.leaves[i].failed)
    for gid in rt.gate_topo:
        g = rt.gate_by_id[gid]
        idx = rt.node_index[gid]
        if g.kind == GateKind.EDGE_AND:
            values[idx] = bool(state.latches[rt.edge_gate_index[gid]])
        else:
            ins = [values[rt.node_index[i]] for i in g.inputs]
            if g.kind == GateKind.AND:
                values[idx] = all(ins)
            elif g.kind in (GateKind.OR, GateKind.APPROX_OR):
                values[idx] = any(ins)
            else:  # KOON
                values[idx] = sum(ins) >= g.k
    return values


def _eval_with_latch_update(model: Model, state: SystemState,
                            prev_values: list[bool]) -> tuple[list[bool], tuple[int, ...]]:
    """Single bottom-up pass that also advances EDGE_AND latches.

    A latch sets when its event input rises while the guard input is true (both
    read at the new values) and clears whenever the event input is false.
    """
    rt = model.rt
    values = [False] * len(rt.node_ids)
    latches = list(state.latches)
    for i in range(len(model.leaves)):
        values[i] = bool(state.leaves[i].failed)
    for gid in rt.gate_topo:
        g = rt.gate_by_id[gid]
        idx = rt.node_index[gid]
        if g.kind == GateKind.EDGE_AND:
            li = rt.edge_gate_index[gid]
            guard = values[rt.node_index[g.inputs[0]]]
            event = values[rt.node_index[g.inputs[1]]]
            event_before = prev_values[rt.node_index[g.inputs[1]]]
            latch = bool(latches[li]) if event else False
            if event and not event_before and guard:
                latch = True
            latches[li] = int(latch)
            values[idx] = latch
        else:
            ins = [values[rt.node_index[i]] for i in g.inputs]
            if g.kind == GateKind.AND:
                values[idx] = all(ins)
            elif g.kind in (GateKind.OR, GateKind.APPROX_OR):
                values[idx] = any(ins)
            else:
                values[idx] = sum(ins) >= g.k
    return values, tuple(latches)


def evaluate_structure(model: Model, state: SystemState) -> dict[str, bool]:
    """Boolean value of every node: leaves from failed flags, gates bottom-up."""
    values = _eval_values(model, state)
    return {n: values[i] for n, i in model.rt.node_index.items()}


def _compute_required(model: Model, values: list[bool]) -> list[bool]:
    """Required flag per node: a trigger target follows its origin's value,
    everything else inherits from its parents (required if any parent is)."""
    rt = model.rt
    req: dict[str, bool] = {}
    for node in rt.node_topdown:
        parents = rt.parents.get(node, ())
        base = True if not parents else any(req[p] for p in parents)
        trig = rt.trigger_by_target.get(node)
        if trig is not None:
            base = base and values[rt.node_index[trig.origin]]
        req[node] = base
    return [req[l] for l in rt.leaf_ids]


def compute_modes(model: Model, values: dict[str, bool]) -> dict[str, str]:
    """Leaf modes from structure values: 'required' or 'standby'."""
    rt = model.rt
    vlist = [values[n] for n in rt.node_ids]
    req = _compute_required(model, vlist)
    return {lid: ("required" if r else "standby") for lid, r in zip(rt.leaf_ids, req)}


# --- repair bookkeeping ---------------------------------------------------------


def _enqueue_repairs(model: Model, leaves: list[LeafState], newly_failed: list[int]) -> None:
    """Assign repair slots to freshly failed leaves (FIFO per group)."""
    rt = model.rt
    for i in newly_failed:
        leaf = model.leaves[i]
        if leaf.mu <= 0:
            continue
        if leaf.repair_group is None:
            leaves[i] = leaves[i]._replace(repair=UNDER_REPAIR)
            continue
        group = rt.group_by_id[leaf.repair_group]
        members = rt.group_members[leaf.repair_group]
        busy = sum(1 for j in members if leaves[j].repair == UNDER_REPAIR)
        if busy < group.capacity:
            leaves[i] = leaves[i]._replace(repair=UNDER_REPAIR)
        else:
            queued = sum(1 for j in members if leaves[j].repair >= 2)
            leaves[i] = leaves[i]._replace(repair=queued + 2)


def _release_repair(model: Model, leaves: list[LeafState], i: int) -> None:
    """Finish the repair of leaf i and promote the FIFO head of its group."""
    leaf = model.leaves[i]
    leaves[i] = LeafState(failed=0, phase=0, required=leaves[i].required, repair=IDLE)
    if leaf.repair_group is None:
        return
    members = model.rt.group_members[leaf.repair_group]
    head = None
    head_pos = None
    for j in members:
        pos = leaves[j].repair
        if pos >= 2 and (head_pos is None or pos < head_pos):
            head, head_pos = j, pos
    if head is None:
        return
    for j in members:
        pos = leaves[j].repair
        if j == head:
            leaves[j] = leaves[j]._replace(repair=UNDER_REPAIR)
        elif pos >= 2:
            leaves[j] = leaves[j]._replace(repair=pos - 1)


# --- stabilization ---------------------------------------------------------------


def stabilize(model: Model, raw: SystemState, prune_below: float = 0.0,
              prev_values: list[bool] | None = None,
              max_iterations: int | None = None) -> StabilizationResult:
    """Resolve the instantaneous cascade pending in `raw` to a fixpoint.

    Demands fire for working leaves whose mode switches standby -> required and
    whose gamma is positive; co-enabled unordered demands resolve simultaneously
    as independent Bernoulli outcomes (full cross-product of branches).  Order
    constraints hold an event back until its predecessors' events are resolved.
    Branches whose probability drops below `prune_below` are dropped and their
    mass reported as truncated.
    """
    rt = model.rt
    limit = max_iterations if max_iterations is not None else max(10 * len(model.leaves), 10)
    if prev_values is None:
        prev_values = _eval_values(model, raw)

    branches: list[StabilizedBranch] = []
    truncated = 0.0
    # LIFO stack; children pushed in reverse so outcomes resolve in order
    stack: list[tuple[SystemState, float, tuple[InstantEvent, ...], list[bool], int]] = [
        (raw, 1.0, (), prev_values, 0)
    ]
    while stack:
        state, prob, events, base_values, iters = stack.pop()
        while True:
            iters += 1
            if iters > limit:
                raise CascadeDivergenceError(
                    f"cascade divergence: no fixpoint within {limit} iterations")
            values, latches = _eval_with_latch_update(model, state, base_values)
            if latches != state.latches:
                state = SystemState(state.leaves, latches)
            req = _compute_required(model, values)
            pending: list[int] = []
            acks: list[int] = []
            for i, leaf in enumerate(model.leaves):
                cur = bool(state.leaves[i].required)
                new = req[i]
                if new == cur:
                    continue
                if new and not state.leaves[i].failed and leaf.gamma > 0.0:
                    pending.append(i)
                else:
                    acks.append(i)
            if acks:
                ls = list(state.leaves)
                for i in acks:
                    ls[i] = ls[i]._replace(required=int(req[i]))
                state = SystemState(tuple(ls), state.latches)
            if not pending:
                branches.append(StabilizedBranch(state, prob, events))
                break

            pend_set = set(pending)
            ready = [i for i in pending
                     if not any(model.rt.leaf_index.get(b) in pend_set
                                for b in rt.order_preds.get(rt.leaf_ids[i], ()))]
            if not ready:
                raise CascadeDivergenceError("pending demands mutually blocked by order constraints")
            ready.sort(key=lambda i: rt.leaf_ids[i])

            outcomes = []
            for bits in product((True, False), repeat=len(ready)):
                p = 1.0
                for good, i in zip(bits, ready):
                    gamma = model.leaves[i].gamma
                    p *= (1.0 - gamma) if good else gamma
                if p <= 0.0:
                    continue
                outcomes.append((bits, p))

            children = []
            for bits, p in outcomes:
                np_ = prob * p
                ls = list(state.leaves)
                newly_failed = []
                evs = list(events)
                for good, i in zip(bits, ready):
                    gamma = model.leaves[i].gamma
                    evs.append(InstantEvent(rt.leaf_ids[i], good,
                                            (1.0 - gamma) if good else gamma))
                    if good:
                        ls[i] = ls[i]._replace(required=1)
                    else:
                        ls[i] = ls[i]._replace(required=1, failed=1)
                        newly_failed.append(i)
                _enqueue_repairs(model, ls, newly_failed)
                child = SystemState(tuple(ls), state.latches)
                if prune_below > 0.0 and np_ < prune_below:
                    truncated += np_
                    continue
                children.append((child, np_, tuple(evs), values, iters))
            for entry in reversed(children):
                stack.append(entry)
            break

    return StabilizationResult(tuple(branches), truncated)


def initial_state(model: Model, prune_below: float = 0.0) -> StabilizationResult:
    """All leaves working at phase 0, modes settled from the all-good structure.

    Every leaf starts in standby; leaves that compute to required at time zero
    are demanded during this first stabilization, so gamma > 0 leaves that are
    required from the start branch at t = 0.
    """
    n = len(model.leaves)
    leaves = tuple(LeafState(0, 0, 0, IDLE) for _ in range(n))
    latches = tuple(0 for _ in model.rt.edge_gate_ids)
    raw = SystemState(leaves, latches)
    return stabilize(model, raw, prune_below=prune_below)


# --- timed transitions ------------------------------------------------------------


def enabled_timed(model: Model, state: SystemState) -> list[TimedTransition]:
    """Timed transitions enabled in a stabilized state, in leaf declaration order."""
    out: list[TimedTransition] = []
    for i, leaf in enumerate(model.leaves):
        ls = state.leaves[i]
        if ls.failed:
            if ls.repair == UNDER_REPAIR and leaf.mu > 0:
                out.append(TimedTransition(leaf.id, "repair_complete", leaf.mu))
            continue
        if leaf.kind == LeafKind.PHASE:
            if ls.required and leaf.lambda_required > 0:
                if ls.phase < leaf.phase_count - 1:
                    out.append(TimedTransition(leaf.id, "phase_advance", leaf.lambda_required))
                else:
                    out.append(TimedTransition(leaf.id, "fail_required", leaf.lambda_required))
            elif not ls.required and leaf.lambda_standby > 0:
                out.append(TimedTransition(leaf.id, "fail_standby", leaf.lambda_standby))
        else:
            if ls.required and leaf.lambda_required > 0:
                out.append(TimedTransition(leaf.id, "fail_required", leaf.lambda_required))
            if not ls.required and leaf.lambda_standby > 0:
                out.append(TimedTransition(leaf.id, "fail_standby", leaf.lambda_standby))
    return out


def apply_timed(model: Model, state: SystemState, t: TimedTransition,
                prune_below: float = 0.0) -> StabilizationResult:
    """Apply a timed transition and stabilize the resulting cascade."""
    if t not in enabled_timed(model, state):
        raise TransitionNotEnabledError(f"transition not enabled: {t}")
    rt = model.rt
    i = rt.leaf_index[t.leaf]
    prev_values = _eval_values(model, state)
    ls = list(state.leaves)
    if t.effect in ("fail_required", "fail_standby"):
        ls[i] = ls[i]._replace(failed=1)
        _enqueue_repairs(model, ls, [i])
    elif t.effect == "phase_advance":
        ls[i] = ls[i]._replace(phase=ls[i].phase + 1)
    elif t.effect == "repair_complete":
        _release_repair(model, ls, i)
    else:
        raise TransitionNotEnabledError(f"unknown effect {t.effect}")
    raw = SystemState(tuple(ls), state.latches)
    return stabilize(model, raw, prune_below=prune_below, prev_values=prev_values)


def render_state(model: Model, state: SystemState) -> str:
    """Stable one-line-per-leaf dump used for debugging and the CLI stepper."""
    lines = []
    for i, leaf in enumerate(model.leaves):
        ls = state.leaves[i]
        status = "FAILED" if ls.failed else "ok"
        mode = "required" if ls.required else "standby"
        repair = {IDLE: "-", UNDER_REPAIR: "repairing"}.get(ls.repair, f"queued#{ls.repair - 1}")
        phase = f" phase={ls.phase}/{leaf.phase_count}" if leaf.kind == LeafKind.PHASE else ""
        lines.append(f"{leaf.id:<24} {status:<6} {mode:<8} repair={repair}{phase}")
    for gid, li in model.rt.edge_gate_index.items():
        lines.append(f"{gid:<24} latch={'on' if state.latches[li] else 'off'}")
    return "\n".join(lines)
