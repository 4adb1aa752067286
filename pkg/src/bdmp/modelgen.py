"""Random model generation for cross-solver validation.

Produces small valid models exercising repairs, triggers, demands, phase
leaves, order constraints, and repair groups, with a bounded reachable state
space so the exact solver stays tractable.
"""

from __future__ import annotations

import random

from .model import (
    GateDef,
    GateKind,
    LeafDef,
    LeafKind,
    Model,
    OrderConstraintDef,
    RepairGroupDef,
    TriggerDef,
    validate_model,
)
from .oracle import StateCapExceeded, enumerate_chain

__all__ = ["random_model", "random_solvable_model"]


def random_model(rng: random.Random, max_leaves: int = 5) -> Model:
    """One random valid model; state space not bounded."""
    n_leaves = rng.randint(2, max_leaves)
    use_group = rng.random() < 0.4
    groups = (RepairGroupDef("crew", capacity=rng.choice((1, 1, 2))),) if use_group else ()

    leaves = []
    for i in range(n_leaves):
        kind = rng.choice((LeafKind.EXP, LeafKind.EXP, LeafKind.EXP_DEMAND,
                           LeafKind.DEMAND, LeafKind.PHASE))
        lam = round(10 ** rng.uniform(-3.5, -0.5), 12)
        mu = rng.choice((0.0, round(10 ** rng.uniform(-1.5, 0.5), 12)))
        gamma = 0.0
        phases = 1
        lam_sb = 0.0
        if kind in (LeafKind.EXP_DEMAND, LeafKind.DEMAND):
            gamma = round(rng.uniform(0.05, 0.6), 6)
        if kind == LeafKind.DEMAND:
            lam = 0.0
        if kind == LeafKind.PHASE:
            phases = rng.randint(1, 3)
        if kind == LeafKind.EXP and rng.random() < 0.25:
            lam_sb = round(lam * rng.uniform(0.05, 0.5), 14)
        group = "crew" if use_group and mu > 0 and rng.random() < 0.5 else None
        leaves.append(LeafDef(f"l{i}", kind, lambda_required=lam, lambda_standby=lam_sb,
                              gamma=gamma, mu=mu, phase_count=phases, repair_group=group))

    leaf_ids = [l.id for l in leaves]
    gates = []
    available = list(leaf_ids)
    n_gates = rng.randint(1, 3)
    for gi in range(n_gates):
        k = rng.randint(2, min(3, len(available)))
        inputs = rng.sample(available, k)
        kind = rng.choice((GateKind.AND, GateKind.OR, GateKind.OR, GateKind.KOON))
        kk = rng.randint(1, len(inputs)) if kind == GateKind.KOON else 1
        gid = f"g{gi}"
        gates.append(GateDef(gid, kind, tuple(inputs), k=kk))
        available.append(gid)
    # top gate covering everything not yet referenced
    referenced = {i for g in gates for i in g.inputs}
    top_inputs = [x for x in available if x not in referenced]
    if len(top_inputs) == 1 and top_inputs[0] in {g.id for g in gates}:
        top = top_inputs[0]
    else:
        top = "gtop"
        gates.append(GateDef(top, rng.choice((GateKind.AND, GateKind.OR)),
                             tuple(top_inputs) or (leaf_ids[0],)))

    triggers = []
    if rng.random() < 0.85:
        candidates = [l.id for l in leaves]
        rng.shuffle(candidates)
        n_trig = rng.randint(1, 2)
        used_targets: set[str] = set()
        origins = [g.id for g in gates] + leaf_ids
        for ti in range(n_trig):
            if not candidates:
                break
            tgt = candidates.pop()
            origin = rng.choice(origins)
            if origin == tgt or tgt in used_targets:
                continue
            used_targets.add(tgt)
            triggers.append(TriggerDef(f"t{ti}", origin, tgt))

    orders = []
    demand_leaves = [l.id for l in leaves if l.gamma > 0]
    if len(demand_leaves) >= 2 and rng.random() < 0.5:
        a, b = rng.sample(demand_leaves, 2)
        orders.append(OrderConstraintDef(before=a, after=b))

    return Model(leaves=tuple(leaves), gates=tuple(gates), triggers=tuple(triggers),
                 order_constraints=tuple(orders), repair_groups=groups, main_top=top)


def random_solvable_model(seed: int, state_cap: int = 1000, max_leaves: int = 5,
                          require_target_reachable: bool = True):
    """A random valid model with at most `state_cap` reachable states.

    Returns (model, chain).  Retries with derived seeds until the enumeration
    fits and, if requested, some reachable state satisfies the target.
    """
    rng = random.Random(seed)
    for _ in range(200):
        model = random_model(rng, max_leaves=max_leaves)
        if validate_model(model):
            continue
        try:
            chain = enumerate_chain(model, state_cap=state_cap)
        except StateCapExceeded:
            continue
        except Exception:
            continue
        if require_target_reachable:
            if not chain.target_mask.any():
                continue
            if any(chain.target_mask[i] and p > 0 for i, p in chain.initial_distribution):
                continue
        return model, chain
    raise RuntimeError(f"no solvable random model found for seed {seed}")
