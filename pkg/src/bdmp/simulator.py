"""Monte Carlo estimation by discrete-event simulation.

Supports arbitrary delay distributions (exponential, Erlang, fixed) per leaf,
which covers the deterministic battery-depletion delay the analytic explorer
cannot represent.  Randomness comes from one counter-based stream per
(replication, leaf) pair, so adding a leaf to a model never perturbs the draws
of the other leaves and every replication is reproducible in isolation.

Clock policy: a transition's delay is sampled when it becomes enabled, kept
while it stays enabled (exact for exponentials by memorylessness, and the
physically meaningful reading for deterministic delays), and discarded when it
is disabled; re-enabling samples a fresh delay (restart semantics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import LeafKind, Model
from .semantics import (
    InstantEvent,
    LeafState,
    SystemState,
    _compute_required,
    _enqueue_repairs,
    _eval_values,
    _eval_with_latch_update,
    _release_repair,
    CascadeDivergenceError,
    evaluate_structure,
    initial_state,
)

__all__ = [
    "Exponential",
    "Erlang",
    "Fixed",
    "SimConfig",
    "Estimate",
    "SimResult",
    "TraceEvent",
    "simulate",
    "sample_trace",
]

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


class _Stream:
    """Counter-based generator: value i is a pure function of (seed, rep, leaf, i)."""

    __slots__ = ("key", "counter")

    def __init__(self, seed: int, rep: int, leaf_index: int):
        self.key = _mix64(_mix64(seed ^ (rep * _GOLDEN)) ^ ((leaf_index + 1) * 0xD1342543DE82EF95))
        self.counter = 0

    def u01(self) -> float:
        u = _mix64(self.key + self.counter * _GOLDEN)
        self.counter += 1
        return (u >> 11) * (2.0 ** -53)

    def exponential(self, rate: float) -> float:
        return -math.log1p(-self.u01()) / rate

    def bernoulli(self, p: float) -> bool:
        return self.u01() < p


@dataclass(frozen=True)
class Exponential:
    rate: float

    def sample(self, stream: _Stream) -> float:
        return stream.exponential(self.rate)


@dataclass(frozen=True)
class Erlang:
    k: int
    rate: float

    def sample(self, stream: _Stream) -> float:
        return sum(stream.exponential(self.rate) for _ in range(self.k))


@dataclass(frozen=True)
class Fixed:
    delay: float

    def sample(self, stream: _Stream) -> float:
        return self.delay


@dataclass(frozen=True)
class SimConfig:
    mission_time: float
    replications: int = 10000
    seed: int = 0
    distribution_overrides: dict = field(default_factory=dict)
    collect_traces: int = 0

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        for leaf, dist in self.distribution_overrides.items():
            if isinstance(dist, Fixed) and dist.delay < 0:
                raise ValueError(f"fixed delay for {leaf} must be >= 0")


@dataclass(frozen=True)
class Estimate:
    value: float
    half_width: float  # 95% confidence half-width, normal approximation


@dataclass(frozen=True)
class TraceEvent:
    time: float
    label: str
    kind: str  # "EXP" | "INS"


@dataclass
class SimResult:
    unreliability: Estimate
    unavailability_at_t: Estimate
    mean_time_in_target: float
    replications: int
    target_hits: int
    rare_event_warning: bool
    traces: list[list[TraceEvent]] = field(default_factory=list)


def _compile_target(expr, node_index):
    """Compile a target expression into a closure over the node-values list."""
    from .model import And, Not, Or, Var

    if expr is None:
        return None
    if isinstance(expr, Var):
        i = node_index[expr.name]
        return lambda v: v[i]
    if isinstance(expr, Not):
        f = _compile_target(expr.arg, node_index)
        return lambda v: not f(v)
    if isinstance(expr, And):
        fs = [_compile_target(a, node_index) for a in expr.args]
        return lambda v: all(f(v) for f in fs)
    if isinstance(expr, Or):
        fs = [_compile_target(a, node_index) for a in expr.args]
        return lambda v: any(f(v) for f in fs)
    raise TypeError(f"unknown target expression node {expr!r}")


def _ci(hits_or_sum: float, sq_sum: float, n: int) -> Estimate:
    mean = hits_or_sum / n
    var = max(sq_sum / n - mean * mean, 0.0)
    if n > 1:
        var *= n / (n - 1)
    return Estimate(mean, 1.96 * math.sqrt(var / n))


class _Sim:
    """Per-model immutable tables shared by all replications."""

    def __init__(self, model: Model, overrides: dict):
        self.model = model
        self.rt = model.rt
        self.overrides = dict(overrides)
        for leaf_id in overrides:
            if leaf_id not in self.rt.leaf_index:
                raise KeyError(f"distribution override for unknown leaf {leaf_id}")
        init = initial_state(model, prune_below=0.0)
        self.initial_branches = init.branches
        self.deterministic_init = len(init.branches) == 1
        self.target_fn = _compile_target(model.target_expression, self.rt.node_index)
        # models without triggers, demands, or edge gates never cascade:
        # an event only toggles the fired leaf, so stabilization is a no-op
        self.trivial_cascades = (not model.triggers
                                 and not self.rt.edge_gate_ids
                                 and all(l.gamma == 0.0 for l in model.leaves))
        self.dists = []  # per leaf: (required_dist, standby_dist, repair_dist)
        for leaf in model.leaves:
            override = self.overrides.get(leaf.id)
            req = override if override is not None else \
                (Exponential(leaf.lambda_required) if leaf.lambda_required > 0 else None)
            sby = Exponential(leaf.lambda_standby) if leaf.lambda_standby > 0 else None
            rep = Exponential(leaf.mu) if leaf.mu > 0 else None
            self.dists.append((req, sby, rep))
        self.initial_enabled = self.enabled(init.branches[0].state) \
            if self.deterministic_init else None

    def is_target(self, state: SystemState) -> bool:
        if self.target_fn is None:
            return False
        return self.target_fn(_eval_values(self.model, state))

    # sampled counterpart of the exact cascade resolution
    def stabilize_sampled(self, raw: SystemState, prev_values, streams,
                          events_out: list[InstantEvent] | None):
        model = self.model
        rt = self.rt
        limit = max(10 * len(model.leaves), 10)
        state = raw
        base_values = prev_values
        for _ in range(limit):
            values, latches = _eval_with_latch_update(model, state, base_values)
            if latches != state.latches:
                state = SystemState(state.leaves, latches)
            req = _compute_required(model, values)
            pending = []
            acks = []
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
                return state
            pend_set = set(pending)
            ready = [i for i in pending
                     if not any(rt.leaf_index.get(b) in pend_set
                                for b in rt.order_preds.get(rt.leaf_ids[i], ()))]
            if not ready:
                raise CascadeDivergenceError("pending demands mutually blocked")
            ready.sort(key=lambda i: rt.leaf_ids[i])
            ls = list(state.leaves)
            newly_failed = []
            for i in ready:
                gamma = model.leaves[i].gamma
                good = not streams[i].bernoulli(gamma)
                if events_out is not None:
                    events_out.append(InstantEvent(rt.leaf_ids[i], good,
                                                   (1.0 - gamma) if good else gamma))
                if good:
                    ls[i] = ls[i]._replace(required=1)
                else:
                    ls[i] = ls[i]._replace(required=1, failed=1)
                    newly_failed.append(i)
            _enqueue_repairs(model, ls, newly_failed)
            state = SystemState(tuple(ls), state.latches)
            base_values = values
        raise CascadeDivergenceError("cascade divergence in simulation")

    def enabled(self, state: SystemState):
        """(leaf_index, effect, distribution) for each enabled transition."""
        out = []
        dists = self.dists
        for i, leaf in enumerate(self.model.leaves):
            ls = state.leaves[i]
            req, sby, rep = dists[i]
            if ls.failed:
                if ls.repair == 1 and rep is not None:
                    out.append((i, "repair_complete", rep))
                continue
            if leaf.id in self.overrides:
                if ls.required:
                    out.append((i, "fail_required", req))
                elif sby is not None:
                    out.append((i, "fail_standby", sby))
                continue
            if leaf.kind == LeafKind.PHASE:
                if ls.required and req is not None:
                    effect = "phase_advance" if ls.phase < leaf.phase_count - 1 \
                        else "fail_required"
                    out.append((i, effect, req))
                elif not ls.required and sby is not None:
                    out.append((i, "fail_standby", sby))
            else:
                if ls.required and req is not None:
                    out.append((i, "fail_required", req))
                if not ls.required and sby is not None:
                    out.append((i, "fail_standby", sby))
        return out

    def replicate(self, rep: int, seed: int, T: float, want_trace: bool):
        model = self.model
        rt = self.rt
        streams = [_Stream(seed, rep, i) for i in range(len(model.leaves))]
        trace: list[TraceEvent] | None = [] if want_trace else None

        if self.deterministic_init:
            state = self.initial_branches[0].state
            if want_trace:
                trace.extend(TraceEvent(0.0, f"{'good' if e.good else 'bad'}({e.leaf})", "INS")
                             for e in self.initial_branches[0].events)
        else:
            n = len(model.leaves)
            raw = SystemState(tuple(LeafState(0, 0, 0, 0) for _ in range(n)),
                              tuple(0 for _ in rt.edge_gate_ids))
            events: list[InstantEvent] = [] if want_trace else None
            state = self.stabilize_sampled(raw, _eval_values(model, raw), streams, events)
            if want_trace:
                trace.extend(TraceEvent(0.0, f"{'good' if e.good else 'bad'}({e.leaf})", "INS")
                             for e in events)

        clocks: dict[tuple[int, str], tuple[float, object]] = {}
        now = 0.0
        first_enabled = self.initial_enabled if self.initial_enabled is not None \
            else self.enabled(state)
        for key_i, effect, dist in first_enabled:
            clocks[(key_i, effect)] = (dist.sample(streams[key_i]), dist)

        in_target = self.is_target(state)
        first_hit = 0.0 if in_target else None
        time_in_target = 0.0
        while clocks:
            (i, effect), (ft, _) = min(clocks.items(), key=lambda kv: (kv[1][0], kv[0]))
            if ft > T:
                break
            if in_target:
                time_in_target += ft - now
            now = ft
            leaf = model.leaves[i]
            trivial = self.trivial_cascades
            prev_values = None if trivial else _eval_values(model, state)
            ls = list(state.leaves)
            if effect in ("fail_required", "fail_standby"):
                ls[i] = ls[i]._replace(failed=1)
                _enqueue_repairs(model, ls, [i])
            elif effect == "phase_advance":
                ls[i] = ls[i]._replace(phase=ls[i].phase + 1)
            else:
                _release_repair(model, ls, i)
            if want_trace:
                prefix = {"fail_required": "failF", "fail_standby": "failS",
                          "repair_complete": "repair",
                          "phase_advance": "phase"}[effect]
                trace.append(TraceEvent(now, f"{prefix}({leaf.id})", "EXP"))
            if trivial:
                state = SystemState(tuple(ls), state.latches)
            else:
                events = [] if want_trace else None
                state = self.stabilize_sampled(SystemState(tuple(ls), state.latches),
                                               prev_values, streams, events)
                if want_trace:
                    trace.extend(
                        TraceEvent(now, f"{'good' if e.good else 'bad'}({e.leaf})", "INS")
                        for e in events)
            # keep clocks for transitions that stayed enabled, sample fresh ones
            new_clocks: dict[tuple[int, str], tuple[float, object]] = {}
            for key_i, eff, dist in self.enabled(state):
                key = (key_i, eff)
                old = clocks.get(key)
                if old is not None and old[1] is dist:
                    new_clocks[key] = old
                else:
                    new_clocks[key] = (now + dist.sample(streams[key_i]), dist)
            clocks = new_clocks
            in_target = self.is_target(state)
            if in_target and first_hit is None:
                first_hit = now
        if in_target:
            time_in_target += T - now
        return first_hit, in_target, time_in_target, trace


def simulate(model: Model, cfg: SimConfig) -> SimResult:
    """Estimate unreliability and unavailability over `cfg.replications` runs."""
    sim = _Sim(model, cfg.distribution_overrides)
    T = cfg.mission_time
    n = cfg.replications
    hits = 0
    unavail = 0
    tt_sum = 0.0
    traces: list[list[TraceEvent]] = []
    for rep in range(n):
        want = rep < cfg.collect_traces
        first_hit, at_t, time_in_target, trace = sim.replicate(rep, cfg.seed, T, want)
        if first_hit is not None:
            hits += 1
        if at_t:
            unavail += 1
        tt_sum += time_in_target
        if want:
            traces.append(trace)
    unrel = _ci(float(hits), float(hits), n)
    unav = _ci(float(unavail), float(unavail), n)
    return SimResult(
        unreliability=unrel,
        unavailability_at_t=unav,
        mean_time_in_target=tt_sum / n,
        replications=n,
        target_hits=hits,
        rare_event_warning=hits < 10,
        traces=traces,
    )


def sample_trace(model: Model, seed: int, t: float,
                 distribution_overrides: dict | None = None,
                 rep: int = 0) -> list[TraceEvent]:
    """Full event list of one replication, in the shared step format."""
    sim = _Sim(model, distribution_overrides or {})
    _, _, _, trace = sim.replicate(rep, seed, t, want_trace=True)
    return trace
