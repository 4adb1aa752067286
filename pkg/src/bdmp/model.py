"""Immutable BDMP model definition and structural validation.

A model is a multi-top fault tree whose leaves are small Markov processes
with two modes (required / standby).  Triggers switch the mode of a target
subtree according to the Boolean value of an origin node; order constraints
sequence instantaneous events inside reconfiguration cascades; repair groups
impose shared, capacity-limited FIFO repair resources.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

__all__ = [
    "LeafKind",
    "GateKind",
    "LeafDef",
    "GateDef",
    "TriggerDef",
    "OrderConstraintDef",
    "RepairGroupDef",
    "Model",
    "Diagnostic",
    "TargetExpr",
    "Var",
    "Not",
    "And",
    "Or",
    "parse_target",
    "validate_model",
    "apply_approx_or",
    "models_equal",
    "AggregationError",
]


class LeafKind:
    EXP = "EXP"
    DEMAND = "DEMAND"
    EXP_DEMAND = "EXP_DEMAND"
    PHASE = "PHASE"

    ALL = (EXP, DEMAND, EXP_DEMAND, PHASE)


class GateKind:
    AND = "AND"
    OR = "OR"
    KOON = "KOON"
    EDGE_AND = "EDGE_AND"
    APPROX_OR = "APPROX_OR"

    ALL = (AND, OR, KOON, EDGE_AND, APPROX_OR)


@dataclass(frozen=True)
class LeafDef:
    """Elementary component: failure in function, on demand, and repair.

    Rates are per hour.  ``mu == 0`` means non-repairable.  PHASE leaves model
    an Erlang time to failure as ``phase_count`` sequential exponential stages
    of rate ``lambda_required``; repair resets the phase to 0.
    """

    id: str
    kind: str
    lambda_required: float = 0.0
    lambda_standby: float = 0.0
    gamma: float = 0.0
    mu: float = 0.0
    phase_count: int = 1
    repair_group: str | None = None


@dataclass(frozen=True)
class GateDef:
    """Boolean gate over leaves and other gates.

    EDGE_AND has exactly two inputs (guard, event) and latches on the rising
    edge of the event input while the guard is true.  APPROX_OR marks a group
    of EXP leaves that may be collapsed into one aggregate leaf.
    """

    id: str
    kind: str
    inputs: tuple[str, ...]
    k: int = 1

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))


@dataclass(frozen=True)
class TriggerDef:
    """Mode switch: the target subtree is required iff the origin is true."""

    id: str
    origin: str
    target: str


@dataclass(frozen=True)
class OrderConstraintDef:
    """Forces the demand of `before` to resolve before the demand of `after`."""

    before: str
    after: str


@dataclass(frozen=True)
class RepairGroupDef:
    """Shared repair resource; FIFO discipline, `capacity` simultaneous repairs."""

    id: str
    capacity: int = 1
    discipline: str = "FIFO"


# --- target expression mini-language -----------------------------------------


class TargetExpr:
    def evaluate(self, values: dict) -> bool:
        raise NotImplementedError

    def variables(self) -> set[str]:
        raise NotImplementedError


@dataclass(frozen=True)
class Var(TargetExpr):
    name: str

    def evaluate(self, values):
        return bool(values[self.name])

    def variables(self):
        return {self.name}

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Not(TargetExpr):
    arg: TargetExpr

    def evaluate(self, values):
        return not self.arg.evaluate(values)

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return f"NOT {_paren(self.arg)}"


@dataclass(frozen=True)
class And(TargetExpr):
    args: tuple[TargetExpr, ...]

    def evaluate(self, values):
        return all(a.evaluate(values) for a in self.args)

    def variables(self):
        out = set()
        for a in self.args:
            out |= a.variables()
        return out

    def __str__(self):
        return " AND ".join(_paren(a) for a in self.args)


@dataclass(frozen=True)
class Or(TargetExpr):
    args: tuple[TargetExpr, ...]

    def evaluate(self, values):
        return any(a.evaluate(values) for a in self.args)

    def variables(self):
        out = set()
        for a in self.args:
            out |= a.variables()
        return out

    def __str__(self):
        return " OR ".join(_paren(a) for a in self.args)


def _paren(e: TargetExpr) -> str:
    if isinstance(e, (And, Or)):
        return f"({e})"
    return str(e)


class TargetParseError(ValueError):
    pass


def parse_target(text: str) -> TargetExpr:
    """Parse `a AND (b OR NOT c)` style expressions over node identifiers."""
    tokens = _tokenize_target(text)
    pos = [0]

    def peek():
        return tokens[pos[0]] if pos[0] < len(tokens) else None

    def take():
        t = peek()
        pos[0] += 1
        return t

    def parse_or():
        args = [parse_and()]
        while peek() == "OR":
            take()
            args.append(parse_and())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def parse_and():
        args = [parse_not()]
        while peek() == "AND":
            take()
            args.append(parse_not())
        return args[0] if len(args) == 1 else And(tuple(args))

    def parse_not():
        if peek() == "NOT":
            take()
            return Not(parse_not())
        return parse_atom()

    def parse_atom():
        t = take()
        if t == "(":
            e = parse_or()
            if take() != ")":
                raise TargetParseError("expected ')'")
            return e
        if t is None or t in ("AND", "OR", "NOT", ")"):
            raise TargetParseError(f"unexpected token {t!r} in target expression")
        return Var(t)

    expr = parse_or()
    if peek() is not None:
        raise TargetParseError(f"trailing token {peek()!r} in target expression")
    return expr


def _tokenize_target(text: str) -> list[str]:
    out = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            out.append(c)
            i += 1
        elif c.isalpha() or c == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append(text[i:j])
            i = j
        else:
            raise TargetParseError(f"bad character {c!r} in target expression")
    return out


# --- the model ----------------------------------------------------------------


@dataclass
class Model:
    """A complete BDMP definition.  Treated as immutable after construction."""

    leaves: tuple[LeafDef, ...] = ()
    gates: tuple[GateDef, ...] = ()
    triggers: tuple[TriggerDef, ...] = ()
    order_constraints: tuple[OrderConstraintDef, ...] = ()
    repair_groups: tuple[RepairGroupDef, ...] = ()
    main_top: str = ""
    target_expression: TargetExpr | None = None

    def __post_init__(self):
        self.leaves = tuple(self.leaves)
        self.gates = tuple(self.gates)
        self.triggers = tuple(self.triggers)
        self.order_constraints = tuple(self.order_constraints)
        self.repair_groups = tuple(self.repair_groups)
        if self.target_expression is None and self.main_top:
            self.target_expression = Var(self.main_top)
        self._rt = None

    # derived lookup tables, built lazily and cached
    @property
    def rt(self) -> "_Runtime":
        if self._rt is None:
            self._rt = _Runtime(self)
        return self._rt

    def leaf(self, leaf_id: str) -> LeafDef:
        return self.rt.leaf_by_id[leaf_id]

    def gate(self, gate_id: str) -> GateDef:
        return self.rt.gate_by_id[gate_id]

    def canonical_key(self):
        """Order-insensitive structural identity (used for equality checks)."""
        def gate_key(g: GateDef):
            inputs = g.inputs if g.kind == GateKind.EDGE_AND else tuple(sorted(g.inputs))
            return (g.id, g.kind, g.k if g.kind == GateKind.KOON else 1, inputs)

        return (
            tuple(sorted((l.id, l.kind, l.lambda_required, l.lambda_standby,
                          l.gamma, l.mu, l.phase_count, l.repair_group or "")
                         for l in self.leaves)),
            tuple(sorted(gate_key(g) for g in self.gates)),
            tuple(sorted((t.origin, t.target) for t in self.triggers)),
            tuple(sorted((c.before, c.after) for c in self.order_constraints)),
            tuple(sorted((r.id, r.capacity, r.discipline) for r in self.repair_groups)),
            self.main_top,
            str(self.target_expression) if self.target_expression else "",
        )


def models_equal(a: Model, b: Model) -> bool:
    return a.canonical_key() == b.canonical_key()


class _Runtime:
    """Precomputed indices over a model: children/parents, topo orders, trigger maps."""

    def __init__(self, m: Model):
        self.leaf_by_id = {l.id: l for l in m.leaves}
        self.gate_by_id = {g.id: g for g in m.gates}
        self.leaf_ids = [l.id for l in m.leaves]
        self.leaf_index = {l.id: i for i, l in enumerate(m.leaves)}
        self.node_ids = self.leaf_ids + [g.id for g in m.gates]
        self.node_index = {n: i for i, n in enumerate(self.node_ids)}
        n_leaves = len(m.leaves)

        self.children: dict[str, tuple[str, ...]] = {g.id: g.inputs for g in m.gates}
        parents: dict[str, list[str]] = {n: [] for n in self.node_ids}
        for g in m.gates:
            for inp in g.inputs:
                if inp in parents:
                    parents[inp].append(g.id)
        self.parents = {k: tuple(v) for k, v in parents.items()}

        # bottom-up order over gates (inputs before gate); assumes acyclic
        order: list[str] = []
        seen: dict[str, int] = {}

        def visit(node: str, stack: tuple[str, ...]):
            st = seen.get(node, 0)
            if st == 2:
                return
            if st == 1:
                raise ValueError(f"gate cycle through {node}")
            seen[node] = 1
            for inp in self.children.get(node, ()):
                if inp in self.gate_by_id:
                    visit(inp, stack + (node,))
            seen[node] = 2
            order.append(node)

        for g in m.gates:
            visit(g.id, ())
        self.gate_topo = order  # bottom-up
        self.edge_gate_ids = [g for g in order if self.gate_by_id[g].kind == GateKind.EDGE_AND]
        self.edge_gate_index = {g: i for i, g in enumerate(self.edge_gate_ids)}

        self.trigger_by_target = {t.target: t for t in m.triggers}
        self.trigger_origins = tuple(dict.fromkeys(t.origin for t in m.triggers))

        # top-down order: roots (parentless nodes) first, then children
        indeg = {n: 0 for n in self.node_ids}
        for g in m.gates:
            for inp in g.inputs:
                if inp in indeg:
                    indeg[inp] += 1
        queue = [n for n in self.node_ids if indeg[n] == 0]
        topdown = []
        indeg2 = dict(indeg)
        while queue:
            n = queue.pop(0)
            topdown.append(n)
            for inp in self.children.get(n, ()):
                indeg2[inp] -= 1
                if indeg2[inp] == 0:
                    queue.append(inp)
        self.node_topdown = topdown

        # order-constraint predecessors among leaves
        preds: dict[str, set[str]] = {}
        for c in m.order_constraints:
            preds.setdefault(c.after, set()).add(c.before)
        self.order_preds = preds

        self.group_by_id = {r.id: r for r in m.repair_groups}
        members: dict[str, list[int]] = {r.id: [] for r in m.repair_groups}
        for i, l in enumerate(m.leaves):
            if l.repair_group is not None and l.repair_group in members:
                members[l.repair_group].append(i)
        self.group_members = members
        self.n_leaves = n_leaves


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding: the rule violated and the offending element."""

    code: str
    element: str
    message: str

    def __str__(self):
        return f"{self.code}({self.element}): {self.message}"


def validate_model(model: Model) -> list[Diagnostic]:
    """Check every structural invariant; an empty list means the model is valid."""
    out: list[Diagnostic] = []
    ids: dict[str, str] = {}
    for l in model.leaves:
        if l.id in ids:
            out.append(Diagnostic("duplicate-id", l.id, "identifier declared twice"))
        ids[l.id] = "leaf"
    for g in model.gates:
        if g.id in ids:
            out.append(Diagnostic("duplicate-id", g.id, "identifier declared twice"))
        ids[g.id] = "gate"

    leaf_by_id = {l.id: l for l in model.leaves}
    gate_by_id = {g.id: g for g in model.gates}

    for l in model.leaves:
        if l.kind not in LeafKind.ALL:
            out.append(Diagnostic("bad-leaf-kind", l.id, f"unknown leaf kind {l.kind}"))
            continue
        if not (0.0 <= l.gamma <= 1.0) or math.isnan(l.gamma):
            out.append(Diagnostic("gamma-range", l.id, f"gamma {l.gamma} outside [0, 1]"))
        for name, rate in (("lambda", l.lambda_required),
                           ("lambda_standby", l.lambda_standby),
                           ("mu", l.mu)):
            if rate < 0 or math.isnan(rate) or math.isinf(rate):
                out.append(Diagnostic("rate-negative", l.id, f"rate must be >= 0: {name}={rate}"))
        if l.phase_count < 1:
            out.append(Diagnostic("phase-count", l.id, "phase_count must be >= 1"))
        if l.kind == LeafKind.PHASE and l.gamma != 0.0:
            out.append(Diagnostic("phase-gamma", l.id, "PHASE leaves must have gamma = 0"))
        if l.kind == LeafKind.EXP and l.gamma != 0.0:
            out.append(Diagnostic("exp-gamma", l.id, "EXP leaves must have gamma = 0"))
        if l.repair_group is not None and l.repair_group not in {r.id for r in model.repair_groups}:
            out.append(Diagnostic("unknown-group", l.id, f"repair group {l.repair_group} not declared"))

    for g in model.gates:
        if g.kind not in GateKind.ALL:
            out.append(Diagnostic("bad-gate-kind", g.id, f"unknown gate kind {g.kind}"))
            continue
        if not g.inputs:
            out.append(Diagnostic("empty-gate", g.id, "gate input list is empty"))
        for inp in g.inputs:
            if inp not in leaf_by_id and inp not in gate_by_id:
                out.append(Diagnostic("unresolved-ref", g.id, f"input {inp} does not resolve"))
        if g.kind == GateKind.KOON and not (1 <= g.k <= len(g.inputs)):
            out.append(Diagnostic("koon-k", g.id, f"k={g.k} outside 1..{len(g.inputs)}"))
        if g.kind == GateKind.EDGE_AND and len(g.inputs) != 2:
            out.append(Diagnostic("edge-and-arity", g.id, "EDGE_AND takes exactly 2 inputs"))
        if g.kind == GateKind.APPROX_OR:
            for inp in g.inputs:
                leaf = leaf_by_id.get(inp)
                if leaf is None:
                    out.append(Diagnostic("approx-or-input", g.id, f"input {inp} is not a leaf"))
                elif leaf.kind != LeafKind.EXP:
                    out.append(Diagnostic("approx-or-input", g.id, f"input {inp} is not an EXP leaf"))
                elif leaf.repair_group is not None:
                    out.append(Diagnostic("approx-or-input", g.id, f"input {inp} has a repair group"))

    # gate acyclicity
    try:
        model.rt  # building the runtime performs the cycle check
    except ValueError as exc:
        out.append(Diagnostic("gate-cycle", str(exc).rsplit(" ", 1)[-1], "gate cycle"))
        return out  # later checks need the runtime

    seen_targets: dict[str, str] = {}
    for t in model.triggers:
        for ref, role in ((t.origin, "origin"), (t.target, "target")):
            if ref not in leaf_by_id and ref not in gate_by_id:
                out.append(Diagnostic("unresolved-ref", t.id, f"trigger {role} {ref} does not resolve"))
        if t.target in seen_targets:
            out.append(Diagnostic("duplicate-trigger-target", t.target,
                                  f"duplicate trigger target {t.target}"))
        seen_targets[t.target] = t.id

    # order constraints reference leaves and form a DAG
    adj: dict[str, list[str]] = {}
    for c in model.order_constraints:
        for ref in (c.before, c.after):
            if ref not in leaf_by_id:
                out.append(Diagnostic("order-ref", ref, "order constraint must reference a leaf"))
        adj.setdefault(c.before, []).append(c.after)
    color: dict[str, int] = {}

    def dfs(node: str) -> bool:
        color[node] = 1
        for nxt in adj.get(node, ()):
            st = color.get(nxt, 0)
            if st == 1 or (st == 0 and dfs(nxt)):
                return True
        color[node] = 2
        return False

    for node in list(adj):
        if color.get(node, 0) == 0 and dfs(node):
            out.append(Diagnostic("order-cycle", node, "order-constraint cycle"))
            break

    for r in model.repair_groups:
        if r.capacity < 1:
            out.append(Diagnostic("group-capacity", r.id, "capacity must be >= 1"))
        if r.discipline != "FIFO":
            out.append(Diagnostic("group-discipline", r.id, "only FIFO discipline is supported"))

    if model.main_top and model.main_top not in gate_by_id:
        out.append(Diagnostic("main-top", model.main_top, "main_top must name a gate"))
    if not model.main_top and model.gates:
        out.append(Diagnostic("main-top", "", "main_top is not set"))

    if model.target_expression is not None:
        for var in sorted(model.target_expression.variables()):
            if var not in leaf_by_id and var not in gate_by_id:
                out.append(Diagnostic("target-ref", var, f"target variable {var} does not resolve"))

    # every leaf should influence something: reachable (downward) from the
    # main top, a trigger origin, or the target expression
    if not out:
        roots = set()
        if model.main_top:
            roots.add(model.main_top)
        roots.update(t.origin for t in model.triggers)
        if model.target_expression is not None:
            roots.update(model.target_expression.variables())
        reach: set[str] = set()
        stack = [r for r in roots if r in model.rt.node_index]
        while stack:
            node = stack.pop()
            if node in reach:
                continue
            reach.add(node)
            stack.extend(model.rt.children.get(node, ()))
        for l in model.leaves:
            if l.id not in reach:
                out.append(Diagnostic("unreachable-leaf", l.id,
                                      "leaf is not reachable from any top"))

    return out


class AggregationError(ValueError):
    pass


def apply_approx_or(model: Model) -> Model:
    """Collapse every APPROX_OR gate into a single aggregate EXP leaf.

    The aggregate keeps the gate's identifier so references stay valid; its
    failure rate is the sum of the input rates and its repair rate the
    rate-weighted mean of the input repair rates.
    """
    approx = [g for g in model.gates if g.kind == GateKind.APPROX_OR]
    if not approx:
        return model

    leaf_by_id = {l.id: l for l in model.leaves}
    removed: set[str] = set()
    new_leaves: dict[str, LeafDef] = {}
    for g in approx:
        total = 0.0
        weighted_mu = 0.0
        standby = 0.0
        for inp in g.inputs:
            leaf = leaf_by_id.get(inp)
            if leaf is None or leaf.kind != LeafKind.EXP:
                raise AggregationError(f"aggregation over non-EXP leaf {inp} in gate {g.id}")
            if leaf.repair_group is not None:
                raise AggregationError(f"aggregation over grouped leaf {inp} in gate {g.id}")
            total += leaf.lambda_required
            weighted_mu += leaf.lambda_required * leaf.mu
            standby += leaf.lambda_standby
        mu = weighted_mu / total if total > 0 else 0.0
        new_leaves[g.id] = LeafDef(id=g.id, kind=LeafKind.EXP, lambda_required=total,
                                   lambda_standby=standby, mu=mu)
        removed.update(g.inputs)

    # aggregated inputs must not be used anywhere else
    for g in model.gates:
        if g.kind == GateKind.APPROX_OR:
            continue
        for inp in g.inputs:
            if inp in removed:
                raise AggregationError(f"aggregated leaf {inp} is also input of gate {g.id}")
    for t in model.triggers:
        if t.origin in removed or t.target in removed:
            raise AggregationError(f"aggregated leaf referenced by trigger {t.id}")
    for c in model.order_constraints:
        if c.before in removed or c.after in removed:
            raise AggregationError("aggregated leaf referenced by an order constraint")
    if model.target_expression is not None and model.target_expression.variables() & removed:
        raise AggregationError("aggregated leaf referenced by the target expression")

    leaves: list[LeafDef] = []
    placed: set[str] = set()
    gate_for_input = {}
    for g in approx:
        for inp in g.inputs:
            gate_for_input[inp] = g.id
    for l in model.leaves:
        if l.id in removed:
            gid = gate_for_input[l.id]
            if gid not in placed:
                leaves.append(new_leaves[gid])
                placed.add(gid)
        else:
            leaves.append(l)
    for g in approx:  # gates whose inputs were all declared elsewhere
        if g.id not in placed:
            leaves.append(new_leaves[g.id])
            placed.add(g.id)

    gates = tuple(g for g in model.gates if g.kind != GateKind.APPROX_OR)
    return Model(leaves=tuple(leaves), gates=gates, triggers=model.triggers,
                 order_constraints=model.order_constraints,
                 repair_groups=model.repair_groups, main_top=model.main_top,
                 target_expression=model.target_expression)
