"""Scenario documents: schema, strict parsing, assumption checks and presets.

A scenario is a JSON object with exactly the top-level keys
``agents, group, graphs, schedule, mode, gains, sim``. Matrices are
row-major lists of lists. An empty matrix may be written ``[]``; its shape
is inferred from the other blocks.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import ctlinalg as cl
from .errors import CoordRegError, DimensionError, InvariantError, NotSatisfiable, SchemaError, SpectralViolation
from .graphs import (
    LeaderFollowerTopology,
    SwitchingSchedule,
    classify_topologies,
    verify_switching_assumptions,
)
from .synthesis import AgentModel, GroupExosystem, Mode

__all__ = [
    "SimConfig",
    "Scenario",
    "ValidationReport",
    "load_scenario",
    "load_scenario_file",
    "dump_scenario",
    "validate_assumptions",
    "preset",
    "PRESETS",
    "REFERENCE_REGULATOR",
]

TOP_KEYS = ("agents", "group", "graphs", "schedule", "mode", "gains", "sim")
AGENT_KEYS = {"A", "B", "C_s", "C_w", "C_d", "D_s", "D_w", "S", "omega0", "x0"}
AGENT_REQUIRED = {"A", "B", "C_s", "C_d", "D_s"}
GROUP_KEYS = {"A0", "C0", "D0", "x0"}
SCHEDULE_KEYS = {"segments", "periodic", "t0"}
GAIN_KEYS = {"epsilon", "theta", "alpha", "beta", "F", "K_a", "K_s"}
SIM_KEYS = {"h", "horizon", "record_stride"}
# non-resonance: a zero "coincides" with an exosystem eigenvalue within this distance
COINCIDE_TOL = 1e-6


@dataclass(frozen=True)
class SimConfig:
    h: float = 1e-3
    horizon: float = 200.0
    record_stride: int = 10

    def __post_init__(self):
        if not self.h > 0 or not math.isfinite(self.h):
            raise InvariantError(f"step h must be positive, got {self.h}")
        if not self.horizon >= 0:
            raise InvariantError(f"horizon must be nonnegative, got {self.horizon}")
        if int(self.record_stride) < 1:
            raise InvariantError("record_stride must be >= 1")
        object.__setattr__(self, "record_stride", int(self.record_stride))


@dataclass(frozen=True, eq=False)
class Scenario:
    agents: tuple
    group: GroupExosystem
    graphs: tuple
    schedule: SwitchingSchedule
    mode: Mode
    gains: dict = field(default_factory=dict)
    sim: SimConfig = field(default_factory=SimConfig)

    @property
    def n(self) -> int:
        return len(self.agents)

    def topology_set(self):
        beta = self.gains.get("beta")
        if beta is not None:
            beta = {int(k): float(v) for k, v in beta.items()}
        return classify_topologies(self.graphs, beta=beta, theta=self.gains.get("theta"))

    def replace(self, **changes) -> "Scenario":
        d = {k: getattr(self, k) for k in ("agents", "group", "graphs", "schedule", "mode", "gains", "sim")}
        d.update(changes)
        return Scenario(**d)


def _matrix(value, where: str) -> np.ndarray:
    if not isinstance(value, (list, int, float)):
        raise SchemaError(f"{where}: expected a matrix (list of lists), got {type(value).__name__}")
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: ragged or non-numeric matrix") from exc
    if arr.ndim > 2:
        raise SchemaError(f"{where}: matrix nesting deeper than 2")
    return arr


def _check_keys(obj: Any, allowed: set, required: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise SchemaError(f"{where}: unknown keys {sorted(extra)}")
    missing = required - set(obj)
    if missing:
        raise SchemaError(f"{where}: missing keys {sorted(missing)}")


def _parse_agent(doc: dict, i: int) -> AgentModel:
    where = f"agents[{i}]"
    _check_keys(doc, AGENT_KEYS, AGENT_REQUIRED, where)
    m = {k: _matrix(v, f"{where}.{k}") for k, v in doc.items() if k not in ("omega0", "x0")}
    p1 = np.atleast_2d(m["C_s"]).shape[0]
    pe = np.atleast_2d(m["D_s"]).shape[0]
    S = m.get("S", np.zeros((0, 0)))
    q = 0 if S.size == 0 else np.atleast_2d(S).shape[0]
    C_w = m.get("C_w", np.zeros((p1, q)))
    D_w = m.get("D_w", np.zeros((pe, q)))
    try:
        return AgentModel(
            A=m["A"], B=m["B"], C_s=m["C_s"], C_w=C_w, C_d=m["C_d"], D_s=m["D_s"], D_w=D_w, S=S,
            omega0=doc.get("omega0", np.zeros(q)), x0=doc.get("x0"),
        )
    except DimensionError as exc:
        raise DimensionError(f"{where}: {exc}") from exc


def load_scenario(doc: dict) -> Scenario:
    """Strictly parse and validate a scenario document (a ``dict``)."""
    if not isinstance(doc, dict):
        raise SchemaError("scenario must be a JSON object")
    extra = set(doc) - set(TOP_KEYS)
    missing = set(TOP_KEYS) - set(doc)
    if extra:
        raise SchemaError(f"unknown top-level keys {sorted(extra)}")
    if missing:
        raise SchemaError(f"missing top-level keys {sorted(missing)}")

    if not isinstance(doc["agents"], list) or not doc["agents"]:
        raise SchemaError("agents must be a nonempty list")
    agents = tuple(_parse_agent(a, i) for i, a in enumerate(doc["agents"]))

    g = doc["group"]
    _check_keys(g, GROUP_KEYS, {"A0", "C0", "D0"}, "group")
    try:
        group = GroupExosystem(
            A0=_matrix(g["A0"], "group.A0"), C0=_matrix(g["C0"], "group.C0"),
            D0=_matrix(g["D0"], "group.D0"), x0=g.get("x0"),
        )
    except DimensionError as exc:
        raise DimensionError(f"group: {exc}") from exc
    for i, ag in enumerate(agents):
        if ag.p1 != agents[0].p1 or ag.p2 != agents[0].p2:
            raise DimensionError(f"agents[{i}]: output dimensions differ from agents[0]")
        if ag.p2 != group.p2:
            raise DimensionError(f"agents[{i}]: C_d rows {ag.p2} != C0 rows {group.p2}")
        if ag.pe != group.D0.shape[0]:
            raise DimensionError(f"agents[{i}]: D_s rows {ag.pe} != D0 rows {group.D0.shape[0]}")

    if not isinstance(doc["graphs"], list) or not doc["graphs"]:
        raise SchemaError("graphs must be a nonempty list of adjacency matrices")
    graphs = []
    for k, a in enumerate(doc["graphs"], start=1):
        adj = _matrix(a, f"graphs[{k - 1}]")
        if adj.ndim != 2 or adj.shape != (len(agents) + 1, len(agents) + 1):
            raise DimensionError(f"graphs[{k - 1}] must be {len(agents) + 1}x{len(agents) + 1}, got {adj.shape}")
        graphs.append(LeaderFollowerTopology(adj))

    s = doc["schedule"]
    _check_keys(s, SCHEDULE_KEYS, {"segments"}, "schedule")
    segs = s["segments"]
    if not isinstance(segs, list) or not all(isinstance(x, list) and len(x) == 2 for x in segs):
        raise SchemaError("schedule.segments must be a list of [graph_index, duration] pairs")
    schedule = SwitchingSchedule(tuple((k, d) for k, d in segs), bool(s.get("periodic", True)), float(s.get("t0", 0.0)))
    for k, _ in schedule.segments:
        if k > len(graphs):
            raise InvariantError(f"schedule references graph {k}; only {len(graphs)} graphs defined")

    try:
        mode = Mode(doc["mode"])
    except ValueError as exc:
        raise SchemaError(f"mode must be one of {[m.value for m in Mode]}") from exc

    gains = doc["gains"] if doc["gains"] is not None else {}
    _check_keys(gains, GAIN_KEYS, set(), "gains")
    gains = copy.deepcopy(gains)
    for key in ("F", "K_a", "K_s"):
        if key in gains:
            if not isinstance(gains[key], list) or len(gains[key]) != len(agents):
                raise SchemaError(f"gains.{key} must list one entry (or null) per agent")
            gains[key] = [None if v is None else _matrix(v, f"gains.{key}") for v in gains[key]]
    for key in ("epsilon", "theta", "alpha"):
        if key in gains and not isinstance(gains[key], (int, float)):
            raise SchemaError(f"gains.{key} must be a number")
    if "epsilon" in gains and not 0 < gains["epsilon"] <= 1:
        raise InvariantError("gains.epsilon must lie in (0, 1]")
    if "alpha" in gains and not 0 < gains["alpha"] < 1:
        raise InvariantError("gains.alpha must lie in (0, 1)")

    sim_doc = doc["sim"] if doc["sim"] is not None else {}
    _check_keys(sim_doc, SIM_KEYS, set(), "sim")
    sim = SimConfig(**sim_doc)
    return Scenario(agents, group, tuple(graphs), schedule, mode, gains, sim)


def load_scenario_file(path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return load_scenario(doc)


def _ml(a: np.ndarray) -> list:
    return np.asarray(a, float).tolist()


def dump_scenario(sc: Scenario) -> dict:
    """Inverse of :func:`load_scenario`."""
    agents = []
    for ag in sc.agents:
        agents.append({
            "A": _ml(ag.A), "B": _ml(ag.B), "C_s": _ml(ag.C_s), "C_w": _ml(ag.C_w), "C_d": _ml(ag.C_d),
            "D_s": _ml(ag.D_s), "D_w": _ml(ag.D_w), "S": _ml(ag.S),
            "omega0": _ml(ag.omega0), "x0": _ml(ag.x0),
        })
    gains = {}
    for k, v in sc.gains.items():
        if k in ("F", "K_a", "K_s"):
            gains[k] = [None if x is None else _ml(x) for x in v]
        else:
            gains[k] = copy.deepcopy(v)
    return {
        "agents": agents,
        "group": {"A0": _ml(sc.group.A0), "C0": _ml(sc.group.C0), "D0": _ml(sc.group.D0), "x0": _ml(sc.group.x0)},
        "graphs": [_ml(g.adjacency) for g in sc.graphs],
        "schedule": {
            "segments": [[k, d] for k, d in sc.schedule.segments],
            "periodic": sc.schedule.periodic,
            "t0": sc.schedule.t0,
        },
        "mode": sc.mode.value,
        "gains": gains,
        "sim": {"h": sc.sim.h, "horizon": sc.sim.horizon, "record_stride": sc.sim.record_stride},
    }


@dataclass
class ValidationReport:
    """Named pass/fail checks with a diagnostic line each."""

    entries: dict = field(default_factory=dict)

    def add(self, name: str, ok: bool, detail: str = "") -> None:
        self.entries[name] = (bool(ok), detail)

    @property
    def ok(self) -> bool:
        return all(v[0] for v in self.entries.values())

    def failed(self) -> list:
        return [k for k, (ok, _) in self.entries.items() if not ok]

    def render(self) -> str:
        lines = []
        for name, (ok, detail) in self.entries.items():
            lines.append(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        return "\n".join(lines)


def _observable(A, C) -> bool:
    A = np.atleast_2d(A)
    if A.size == 0:
        return True
    return bool(cl.pbh_checks(A, C=C).observable)


def validate_assumptions(sc: Scenario) -> ValidationReport:
    """Run every structural check the design relies on; never raises on failure."""
    rep = ValidationReport()
    mode = sc.mode
    try:
        ts = sc.topology_set()
        rep.add("graphs.spectra", True, f"Gamma_c={list(ts.gamma_c)}, Gamma_d={list(ts.gamma_d)}")
    except (SpectralViolation, InvariantError) as exc:
        rep.add("graphs.spectra", False, str(exc))
        ts = None

    if ts is not None:
        rep.add("graphs.connected_nonempty", bool(ts.gamma_c), "at least one graph with a rooted spanning tree")
        try:
            sw = verify_switching_assumptions(sc.schedule, ts)
            rep.add("switching.dwell_time", sw.tau_d > 0, f"tau_d={sw.tau_d:g}")
            rep.add("switching.activation_ratio", sw.kappa_achieved > 0, f"kappa={sw.kappa_achieved:g} at t_bar0={sw.t_bar0:g}")
        except NotSatisfiable as exc:
            rep.add("switching.dwell_time", sc.schedule.dwell_time > 0, f"tau_d={sc.schedule.dwell_time:g}")
            rep.add("switching.activation_ratio", False, str(exc))
        if ts.theta is not None and mode is not Mode.UNIFIED:
            bound = 0.5 * ts.min_connected_eig
            rep.add("theta.bound", ts.theta < bound, f"theta={ts.theta:g} < {bound:g}")
        elif ts.theta is not None:
            bound = min(ts.beta.values())
            rep.add("theta.bound", ts.theta <= bound, f"theta={ts.theta:g} <= min beta={bound:g}")

    g = sc.group
    rep.add("group.observable", _observable(g.A0, g.C0), "(A0, C0)")
    exo_eigs = list(np.linalg.eigvals(g.A0)) if g.n0 else []
    for i, ag in enumerate(sc.agents, start=1):
        tag = f"agent{i}"
        if mode is Mode.UNIFIED:
            rep.add(f"{tag}.observable", _observable(ag.A, np.vstack([ag.C_s, ag.C_d])), "(A, [C_s; C_d])")
        elif mode is Mode.CASE1:
            rep.add(f"{tag}.observable", _observable(ag.A, ag.C_s), "(A, C_s)")
        else:
            rep.add(f"{tag}.observable", _observable(ag.A, ag.C_d), "(A, C_d)")
        rep.add(f"{tag}.exo_observable", _observable(ag.S, ag.C_w), "(S, C_w)")
        rep.add(f"{tag}.stabilizable", bool(cl.pbh_checks(ag.A, B=ag.B).stabilizable), "(A, B)")
        zs = cl.invariant_zeros(ag.A, ag.B, ag.D_s)
        rep.add(f"{tag}.right_invertible", zs.right_invertible, f"normal rank {zs.normal_rank}")
        eigs = exo_eigs + (list(np.linalg.eigvals(ag.S)) if ag.q else [])
        clash = [z for z in zs.in_closed_rhp() if any(abs(z - e) < COINCIDE_TOL for e in eigs)]
        detail = "zeros " + ", ".join(f"{complex(z):.4g}" for z in zs.zeros) if zs.zeros else "no finite zeros"
        rep.add(f"{tag}.non_resonance", not clash, detail if not clash else f"zeros {clash} hit exosystem eigenvalues")
        gains = sc.gains or {}
        F = (gains.get("F") or [None] * sc.n)[i - 1]
        if F is not None:
            rep.add(f"{tag}.F_hurwitz", cl.is_hurwitz(ag.A + ag.B @ np.atleast_2d(F)), "A + B F")
    return rep


# ---------------------------------------------------------------------------
# presets

_GRAPHS = [
    [[0, 0, 0, 0], [1, 0, 1, 0], [0, 1, 0, 0], [0, 0, 1, 0]],
    [[0, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 1], [0, 0, 1, 0]],
    [[0, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]],
    [[0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]],
]
_SCHEDULE = {"segments": [[1, 6.0], [2, 6.0], [3, 6.0], [4, 2.0]], "periodic": True, "t0": 0.0}
_GROUP = {"A0": [[0, 1], [-1, 0]], "C0": [[1, 0]], "D0": [[-1, 0]], "x0": [1.0, 0.0]}

_A1 = [[0, 3, 0], [0, 0, 2], [0, -1, 0]]
_B1 = [[0], [0], [1]]
_A3 = [[0, 1], [-2, -2]]
_B3 = [[0], [1]]
_DOUBLE_INT = [[0, 1], [0, 0]]

_F1 = [[-1, -4.5, -6]]
_F3 = [[0, -1]]
_F2_EX23 = [[-2, -3]]


def _scalar_exo(omega0):
    return {"S": [[0]], "C_w": [[-1]], "D_w": [[-1]], "omega0": [omega0]}


def _example1() -> dict:
    agents = [
        {"A": _A1, "B": _B1, "C_s": [[1, 1, 1]], "C_d": [[1, 1, 1]], "D_s": [[1, 1, 1]], **_scalar_exo(-2.0)},
        {"A": [[1, 0], [0, 0]], "B": [[1], [1]], "C_s": [[1, 0]], "C_d": [[0, 1]], "D_s": [[1, 1]], **_scalar_exo(-4.0)},
        {"A": _A3, "B": _B3, "C_s": [[1, 0]], "C_d": [[1, 0]], "D_s": [[1, 0]], **_scalar_exo(-6.0)},
    ]
    # the reference F = [-2, -6] for agent 2 does not stabilise (A_2, B_2); leave it to synthesis
    gains = {"epsilon": 0.2, "theta": 0.1, "alpha": 0.5, "F": [_F1, None, _F3]}
    return {"agents": agents, "group": _GROUP, "graphs": _GRAPHS, "schedule": _SCHEDULE,
            "mode": "UNIFIED", "gains": gains, "sim": {"h": 1e-3, "horizon": 200.0, "record_stride": 10}}


def _agents_ex23(with_exo: bool) -> list:
    base = [
        {"A": _A1, "B": _B1, "C_s": [[1, 1, 1]], "C_d": [[1, 1, 1]], "D_s": [[1, 1, 1]]},
        {"A": _DOUBLE_INT, "B": _B3, "C_s": [[1, 0]], "C_d": [[1, 0]], "D_s": [[1, 0]]},
        {"A": _A3, "B": _B3, "C_s": [[1, 0]], "C_d": [[1, 0]], "D_s": [[1, 0]]},
    ]
    for ag, w0 in zip(base, (-2.0, -4.0, -6.0)):
        if with_exo:
            ag.update(_scalar_exo(w0))
        else:
            ag.update({"S": [], "C_w": [], "D_w": [], "omega0": []})
    return base


def _example2() -> dict:
    gains = {
        "epsilon": 0.2, "theta": 0.1, "alpha": 0.5,
        "F": [_F1, _F2_EX23, _F3],
        "K_a": [[[-0.75], [-4], [-1.25]], [[-3], [-2]], [[-1], [2]]],
    }
    return {"agents": _agents_ex23(False), "group": _GROUP, "graphs": _GRAPHS, "schedule": _SCHEDULE,
            "mode": "CASE1", "gains": gains, "sim": {"h": 1e-3, "horizon": 200.0, "record_stride": 10}}


def _example3() -> dict:
    gains = {
        "epsilon": 0.2, "theta": 0.1, "alpha": 0.5,
        "F": [_F1, _F2_EX23, _F3],
        "K_s": [[[1]], [[1]], [[1]]],
    }
    return {"agents": _agents_ex23(True), "group": _GROUP, "graphs": _GRAPHS, "schedule": _SCHEDULE,
            "mode": "CASE2", "gains": gains, "sim": {"h": 1e-3, "horizon": 200.0, "record_stride": 10}}


PRESETS = {"example1": _example1, "example2": _example2, "example3": _example3}


def preset_document(name: str) -> dict:
    try:
        return copy.deepcopy(PRESETS[name]())
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def preset(name: str) -> Scenario:
    return load_scenario(preset_document(name))


# Reference regulator solutions and feedback gains for the presets
# (4-decimal rounding). Used for regression only, never fed to the controller.
REFERENCE_REGULATOR = {
    "example1": [
        {"F": [[-1, -4.5, -6]],
         "Pi": [[1, 1.0345, -0.4138], [0, 0.1379, 0.3448], [0, -0.1724, 0.0690]],
         "Gamma": [[0, 0.0690, 0.1724]]},
        {"F": [[-2, -6]],
         "Pi": [[0, 0.4, -0.2], [1, 0.6, 0.2]],
         "Gamma": [[0, -0.2, 0.6]]},
        {"F": [[0, -1]],
         "Pi": [[1, 1, 0], [0, 0, 1]],
         "Gamma": [[2, 1, 2]]},
    ],
    "example2": [
        {"F": [[-1, -4.5, -6]], "Pi2": [[1.0345, -0.4138], [0.1379, 0.3448], [-0.1724, 0.0690]],
         "Gamma2": [[0.0690, 0.1724]]},
        {"F": [[-2, -3]], "Pi2": [[1, 0], [0, 1]], "Gamma2": [[-1, 0]]},
        {"F": [[0, -1]], "Pi2": [[1, 0], [0, 1]], "Gamma2": [[1, 2]]},
    ],
    "example3": [
        {"F": [[-1, -4.5, -6]], "Pi1": [[1], [0], [0]], "Gamma1": [[0]],
         "Pi2": [[1.0345, -0.4138], [0.1379, 0.3448], [-0.1724, 0.0690]], "Gamma2": [[0.0690, 0.1724]]},
        {"F": [[-2, -3]], "Pi1": [[1], [0]], "Gamma1": [[0]], "Pi2": [[1, 0], [0, 1]], "Gamma2": [[-1, 0]]},
        {"F": [[0, -1]], "Pi1": [[1], [0]], "Gamma1": [[-2]], "Pi2": [[1, 0], [0, 1]], "Gamma2": [[1, 2]]},
    ],
}
