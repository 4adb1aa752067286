"""The emergency-power-supply benchmark model.

A nuclear-plant emergency switchboard: two redundant bus bars LHA/LHB normally
fed from the grid through transformer TS, falling back in priority order to
house-load operation, a second grid path through transformer TA, per-train
diesel generators, and (for LHA only) a last-resort gas turbine (TAC).
Circuit-breaker reconfigurations are demanded events guarded by the 125V DC
supply, which survives on a battery for about an hour once a train is dark.
The undesirable event is the loss of power on both bus bars.

Numbers come from the published reliability table for this system; they are
representative rather than real plant data.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    GateDef,
    GateKind,
    LeafDef,
    LeafKind,
    Model,
    OrderConstraintDef,
    RepairGroupDef,
    TriggerDef,
    Var,
    apply_approx_or,
)
from .simulator import Erlang, Fixed

__all__ = [
    "CCF_REPAIR_SINGLE_DOUBLE_DURATION",
    "CCF_REPAIR_TWO_INDEPENDENT",
    "BATTERY_ERLANG2",
    "BATTERY_FIXED_1H",
    "BenchmarkOptions",
    "TableRow",
    "reliability_table",
    "build_benchmark",
    "battery_overrides",
]

CCF_REPAIR_SINGLE_DOUBLE_DURATION = "SINGLE_DOUBLE_DURATION"
CCF_REPAIR_TWO_INDEPENDENT = "TWO_INDEPENDENT"
BATTERY_ERLANG2 = "ERLANG2"
BATTERY_FIXED_1H = "FIXED_1H"


@dataclass(frozen=True)
class BenchmarkOptions:
    ccf_diesel_repair: str = CCF_REPAIR_SINGLE_DOUBLE_DURATION
    battery: str = BATTERY_ERLANG2


@dataclass(frozen=True)
class TableRow:
    """One reliability-data record: component class with demand/failure/repair."""

    component: str
    gamma: float | None
    lam: float | None  # failure rate per hour
    mu: float | None  # repair rate per hour


_TABLE: tuple[TableRow, ...] = (
    TableRow("circuit breaker / refuse to open", 2e-4, None, 1 / 5),
    TableRow("circuit breaker / refuse to close", 2e-4, None, 1 / 5),
    TableRow("CB_GEV, CB_line_GEV, CB_line_LGR / short circuit", None, 1e-7, 1 / 5),
    TableRow("circuit breaker / short circuit (other high voltage)", None, 5e-7, 1 / 5),
    TableRow("circuit breaker / short circuit (low voltage)", None, 1e-6, 1 / 5),
    TableRow("bus bar short circuit (high voltage)", None, 2e-7, 1 / 50),
    TableRow("bus bar short circuit (low voltage)", None, 5e-7, 1 / 50),
    TableRow("transformer short circuit (TP, TS, TA)", None, 5e-6, 1 / 200),
    TableRow("transformer short circuit (TUA1, TUA2, TUB1, TUB2)", None, 2e-7, 1 / 10),
    TableRow("diesel generator / long failure", 2e-3, 5e-4, 1 / 200),
    TableRow("diesel generator / short failure", None, 2e-3, 1 / 10),
    TableRow("TAC", 2e-3, 1e-3, 1 / 200),
    TableRow("GRID failure in function", None, 1e-5, 1 / 10),
    TableRow("UNIT (normal operation) failure in function", None, 1e-4, 1 / 10),
    TableRow("UNIT (house load operation)", 0.2, 0.1, 1 / 20),
    TableRow("SUBSTATION", None, 1e-6, 1 / 20),
    TableRow("lines GEV, LGR / short circuit", None, 2e-5, 1 / 5),
    TableRow("AC/DC converter (RDA1, RDA2, RDB1, RDB2)", None, 1e-6, 1 / 3),
    TableRow("simultaneous failure of DGA and DGB by CCF", 2e-4, 5e-5, 1 / 400),
    TableRow("simultaneous failure of GEV and LGR by CCF (climatic)", None, 1e-6, 1 / 200),
)


def reliability_table() -> tuple[TableRow, ...]:
    """The committed reliability-data constants, one record per table row."""
    return _TABLE


# rates used by the builder, named for readability
_CB_GAMMA = 2e-4
_CB_MU = 1 / 5
_HV_CB_SC = 5e-7
_HV_BUS_SC = 2e-7
_HV_BUS_MU = 1 / 50
_TRANSFO = 5e-6
_TRANSFO_MU = 1 / 200
_DG_DEMAND = 2e-3
_DG_LONG = 5e-4
_DG_LONG_MU = 1 / 200
_DG_SHORT = 2e-3
_DG_SHORT_MU = 1 / 10
_TAC_DEMAND = 2e-3
_TAC_LAM = 1e-3
_TAC_MU = 1 / 200
_GRID_LAM = 1e-5
_GRID_MU = 1 / 10
_UNIT_LAM = 1e-4
_UNIT_MU = 1 / 10
_HOUSE_GAMMA = 0.2
_HOUSE_LAM = 0.1
_HOUSE_MU = 1 / 20
_SUBSTATION_LAM = 1e-6
_SUBSTATION_MU = 1 / 20
_LINE_SC = 2e-5
_LINE_SC_MU = 1 / 5
_CCF_DG_GAMMA = 2e-4
_CCF_DG_LAM = 5e-5
_CCF_LINES_LAM = 1e-6
_CCF_LINES_MU = 1 / 200

GRID_REPAIR_GROUP = "grid_and_house"


def build_benchmark(options: BenchmarkOptions | None = None) -> Model:
    """Construct the benchmark model.

    The structure encodes, per train: normal feed from TS (grid or house-load
    behind it), the switched alternate feed from TA, the diesel stage, and for
    train A the TAC stage, each stage activated by a trigger and passing
    through refuse-to-open/close breaker demands.  Grey-arrow order constraints
    make the diesel start tests resolve before the breaker reconfigurations,
    and a single shared repairman couples the grid-path components with
    house-load operation so the house load cannot be restored while the grid
    side is down.
    """
    opts = options or BenchmarkOptions()
    if opts.ccf_diesel_repair == CCF_REPAIR_SINGLE_DOUBLE_DURATION:
        ccf_dg_mu = 1 / 400  # one repair taking twice the single duration
    elif opts.ccf_diesel_repair == CCF_REPAIR_TWO_INDEPENDENT:
        ccf_dg_mu = 1 / 300  # rate matching the mean of two independent repairs
    else:
        raise ValueError(f"unknown ccf_diesel_repair option {opts.ccf_diesel_repair!r}")
    if opts.battery not in (BATTERY_ERLANG2, BATTERY_FIXED_1H):
        raise ValueError(f"unknown battery option {opts.battery!r}")

    grp = GRID_REPAIR_GROUP
    leaves = [
        # grid path (all repaired by the shared grid/house repairman)
        LeafDef("GRID", LeafKind.EXP, _GRID_LAM, mu=_GRID_MU, repair_group=grp),
        LeafDef("SC_GEV", LeafKind.EXP, _LINE_SC, mu=_LINE_SC_MU, repair_group=grp),
        LeafDef("SC_LGR", LeafKind.EXP, _LINE_SC, mu=_LINE_SC_MU, repair_group=grp),
        LeafDef("CCF_GEV_LGR", LeafKind.EXP, _CCF_LINES_LAM, mu=_CCF_LINES_MU,
                repair_group=grp),
        LeafDef("SUBSTATION", LeafKind.EXP, _SUBSTATION_LAM, mu=_SUBSTATION_MU,
                repair_group=grp),
        # units and transformers
        LeafDef("UNIT", LeafKind.EXP, _UNIT_LAM, mu=_UNIT_MU),
        LeafDef("TP", LeafKind.EXP, _TRANSFO, mu=_TRANSFO_MU),
        LeafDef("TS", LeafKind.EXP, _TRANSFO, mu=_TRANSFO_MU),
        LeafDef("TA", LeafKind.EXP, _TRANSFO, mu=_TRANSFO_MU),
        # house-load operation (repair behind the grid repair via the group)
        LeafDef("on_demand_house", LeafKind.DEMAND, gamma=_HOUSE_GAMMA, mu=_HOUSE_MU,
                repair_group=grp),
        LeafDef("in_function_house", LeafKind.EXP, _HOUSE_LAM, mu=_HOUSE_MU,
                repair_group=grp),
        # bus bars
        LeafDef("SC_LGD", LeafKind.EXP, _HV_BUS_SC, mu=_HV_BUS_MU),
        LeafDef("SC_LGF", LeafKind.EXP, _HV_BUS_SC, mu=_HV_BUS_MU),
        LeafDef("SC_LHA", LeafKind.EXP, _HV_BUS_SC, mu=_HV_BUS_MU),
        LeafDef("SC_LHB", LeafKind.EXP, _HV_BUS_SC, mu=_HV_BUS_MU),
        # breaker short circuits, aggregated per zone below
        LeafDef("SC_CB_LGD1", LeafKind.EXP, _HV_CB_SC, mu=_CB_MU),
        LeafDef("SC_CB_LGD2", LeafKind.EXP, _HV_CB_SC, mu=_CB_MU),
        LeafDef("SC_CB_LGF1", LeafKind.EXP, _HV_CB_SC, mu=_CB_MU),
        LeafDef("SC_CB_LGF2", LeafKind.EXP, _HV_CB_SC, mu=_CB_MU),
        LeafDef("SC_CB_LHA1", LeafKind.EXP, _HV_CB_SC, mu=_CB_MU),
        LeafDef("SC_CB_LHA2", LeafKind.EXP, _HV_CB_SC, mu=_CB_MU),
        LeafDef("SC_CB_LHA3", LeafKind.EXP, _HV_CB_SC, mu=_CB_MU),
        LeafDef("SC_CB_LHB1", LeafKind.EXP, _HV_CB_SC, mu=_CB_MU),
        LeafDef("SC_CB_LHB2", LeafKind.EXP, _HV_CB_SC, mu=_CB_MU),
        # alternate-feed breaker closures (initially open: CB_LGD2, CB_LGF2)
        LeafDef("RC_CB_LGD2", LeafKind.DEMAND, gamma=_CB_GAMMA, mu=_CB_MU),
        LeafDef("RC_CB_LGF2", LeafKind.DEMAND, gamma=_CB_GAMMA, mu=_CB_MU),
        # diesel stage, train A (CB_LHA1 opens, CB_LHA2 closes)
        LeafDef("demand_DGA", LeafKind.DEMAND, gamma=_DG_DEMAND, mu=_DG_LONG_MU),
        LeafDef("DGA_long", LeafKind.EXP, _DG_LONG, mu=_DG_LONG_MU),
        LeafDef("DGA_short", LeafKind.EXP, _DG_SHORT, mu=_DG_SHORT_MU),
        LeafDef("RO_CB_LHA1", LeafKind.DEMAND, gamma=_CB_GAMMA, mu=_CB_MU),
        LeafDef("RC_CB_LHA2", LeafKind.DEMAND, gamma=_CB_GAMMA, mu=_CB_MU),
        # diesel stage, train B
        LeafDef("demand_DGB", LeafKind.DEMAND, gamma=_DG_DEMAND, mu=_DG_LONG_MU),
        LeafDef("DGB_long", LeafKind.EXP, _DG_LONG, mu=_DG_LONG_MU),
        LeafDef("DGB_short", LeafKind.EXP, _DG_SHORT, mu=_DG_SHORT_MU),
        LeafDef("RO_CB_LHB1", LeafKind.DEMAND, gamma=_CB_GAMMA, mu=_CB_MU),
        LeafDef("RC_CB_LHB2", LeafKind.DEMAND, gamma=_CB_GAMMA, mu=_CB_MU),
        # diesel common cause failure (demand and in function)
        LeafDef("demand_CCF_DG", LeafKind.DEMAND, gamma=_CCF_DG_GAMMA, mu=ccf_dg_mu),
        LeafDef("CCF_DG", LeafKind.EXP, _CCF_DG_LAM, mu=ccf_dg_mu),
        # TAC stage (train A only; CB_LHA2 opens, CB_LHA3 closes)
        LeafDef("demand_TAC", LeafKind.DEMAND, gamma=_TAC_DEMAND, mu=_TAC_MU),
        LeafDef("TAC", LeafKind.EXP, _TAC_LAM, mu=_TAC_MU),
        LeafDef("RO_CB_LHA2", LeafKind.DEMAND, gamma=_CB_GAMMA, mu=_CB_MU),
        LeafDef("RC_CB_LHA3", LeafKind.DEMAND, gamma=_CB_GAMMA, mu=_CB_MU),
        # 125V batteries: about one hour of depletion once a train is dark
        LeafDef("battery_A", LeafKind.PHASE, 2.0, phase_count=2),
        LeafDef("battery_B", LeafKind.PHASE, 2.0, phase_count=2),
    ]

    gates = [
        # loss of the grid as a source (feeds both TS via GEV and TA via LGR)
        GateDef("grid_path_failed", GateKind.OR,
                ("GRID", "SC_GEV", "SC_LGR", "CCF_GEV_LGR", "SUBSTATION")),
        # house-load operation: demanded when the grid path is lost
        GateDef("house_mode_failed", GateKind.OR,
                ("on_demand_house", "in_function_house")),
        GateDef("house_load_failed", GateKind.OR,
                ("UNIT", "TP", "house_mode_failed")),
        GateDef("ts_input_dead", GateKind.AND,
                ("grid_path_failed", "house_load_failed")),
        GateDef("ts_supply_dead", GateKind.OR, ("TS", "ts_input_dead")),
        GateDef("ta_path_failed", GateKind.OR, ("TA", "grid_path_failed")),
        # switched alternate feeds for LGD/LGF through CB_LGD2/CB_LGF2
        GateDef("alt_lgd_failed", GateKind.OR, ("RC_CB_LGD2", "ta_path_failed")),
        GateDef("alt_lgf_failed", GateKind.OR, ("RC_CB_LGF2", "ta_path_failed")),
        GateDef("lgd_feeds_dead", GateKind.AND, ("ts_supply_dead", "alt_lgd_failed")),
        GateDef("lgf_feeds_dead", GateKind.AND, ("ts_supply_dead", "alt_lgf_failed")),
        GateDef("sc_zone_LGD", GateKind.APPROX_OR, ("SC_CB_LGD1", "SC_CB_LGD2")),
        GateDef("sc_zone_LGF", GateKind.APPROX_OR, ("SC_CB_LGF1", "SC_CB_LGF2")),
        GateDef("sc_zone_LHA", GateKind.APPROX_OR,
                ("SC_CB_LHA1", "SC_CB_LHA2", "SC_CB_LHA3")),
        GateDef("sc_zone_LHB", GateKind.APPROX_OR, ("SC_CB_LHB1", "SC_CB_LHB2")),
        GateDef("LGD_unpowered", GateKind.OR,
                ("SC_LGD", "sc_zone_LGD", "lgd_feeds_dead")),
        GateDef("LGF_unpowered", GateKind.OR,
                ("SC_LGF", "sc_zone_LGF", "lgf_feeds_dead")),
        # diesel stages
        GateDef("any_dg_needed", GateKind.OR, ("LGD_unpowered", "LGF_unpowered")),
        GateDef("dg_ccf_failed", GateKind.OR, ("demand_CCF_DG", "CCF_DG")),
        GateDef("cb_frozen_A2", GateKind.EDGE_AND, ("battery_A", "LGD_unpowered")),
        GateDef("cb_frozen_B2", GateKind.EDGE_AND, ("battery_B", "LGF_unpowered")),
        GateDef("dieselA_failed", GateKind.OR,
                ("demand_DGA", "DGA_long", "DGA_short", "RO_CB_LHA1", "RC_CB_LHA2",
                 "dg_ccf_failed", "cb_frozen_A2")),
        GateDef("dieselB_failed", GateKind.OR,
                ("demand_DGB", "DGB_long", "DGB_short", "RO_CB_LHB1", "RC_CB_LHB2",
                 "dg_ccf_failed", "cb_frozen_B2")),
        # TAC stage for train A
        GateDef("lha_needs_tac", GateKind.AND, ("LGD_unpowered", "dieselA_failed")),
        GateDef("cb_frozen_A3", GateKind.EDGE_AND, ("battery_A", "lha_needs_tac")),
        GateDef("tac_path_failed", GateKind.OR,
                ("demand_TAC", "TAC", "RO_CB_LHA2", "RC_CB_LHA3", "cb_frozen_A3")),
        GateDef("lha_all_feeds_dead", GateKind.AND,
                ("lha_needs_tac", "tac_path_failed")),
        GateDef("LHA_lost", GateKind.OR,
                ("SC_LHA", "sc_zone_LHA", "lha_all_feeds_dead")),
        GateDef("lhb_dark", GateKind.AND, ("LGF_unpowered", "dieselB_failed")),
        GateDef("LHB_lost", GateKind.OR, ("SC_LHB", "sc_zone_LHB", "lhb_dark")),
        GateDef("system_failed", GateKind.AND, ("LHA_lost", "LHB_lost")),
    ]

    triggers = [
        TriggerDef("trig_house", "grid_path_failed", "house_mode_failed"),
        TriggerDef("trig_lgd2", "TS", "RC_CB_LGD2"),
        TriggerDef("trig_lgf2", "TS", "RC_CB_LGF2"),
        TriggerDef("trig_dg_ccf", "any_dg_needed", "dg_ccf_failed"),
        TriggerDef("trig_dgA", "LGD_unpowered", "dieselA_failed"),
        TriggerDef("trig_dgB", "LGF_unpowered", "dieselB_failed"),
        TriggerDef("trig_tac", "lha_needs_tac", "tac_path_failed"),
        TriggerDef("trig_batt_A", "lha_all_feeds_dead", "battery_A"),
        TriggerDef("trig_batt_B", "lhb_dark", "battery_B"),
    ]

    # grey arrows: diesel start tests resolve before breaker reconfigurations
    orders = [
        OrderConstraintDef("demand_CCF_DG", "demand_DGA"),
        OrderConstraintDef("demand_CCF_DG", "demand_DGB"),
        OrderConstraintDef("demand_DGA", "RO_CB_LHA1"),
        OrderConstraintDef("demand_DGB", "RO_CB_LHB1"),
        OrderConstraintDef("RO_CB_LHA1", "RC_CB_LHA2"),
        OrderConstraintDef("RO_CB_LHB1", "RC_CB_LHB2"),
        OrderConstraintDef("demand_TAC", "RO_CB_LHA2"),
        OrderConstraintDef("RO_CB_LHA2", "RC_CB_LHA3"),
    ]

    model = Model(
        leaves=tuple(leaves),
        gates=tuple(gates),
        triggers=tuple(triggers),
        order_constraints=tuple(orders),
        repair_groups=(RepairGroupDef(grp, capacity=1),),
        main_top="system_failed",
        target_expression=Var("system_failed"),
    )
    return apply_approx_or(model)


def battery_overrides() -> dict:
    """Simulator overrides realizing the deterministic one-hour battery depletion."""
    return {"battery_A": Fixed(1.0), "battery_B": Fixed(1.0)}


def erlang_battery_overrides() -> dict:
    """Explicit Erlang(2, 2/h) override; statistically a no-op for the default model."""
    return {"battery_A": Erlang(2, 2.0), "battery_B": Erlang(2, 2.0)}
