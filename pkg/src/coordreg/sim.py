"""Fixed-step simulation of the switched closed loop.

The whole loop (plants, exosystems, observers, controllers) is linear, so
for every topology index ``k`` it collapses to ``z' = M_k z`` on one stacked
state ``z``. Only the observer-injection blocks depend on ``k``.

State layout (``ClosedLoopSystem.layout`` records the slices)::

    UNIFIED  [x_1..x_n, w_1..w_n, x_0, chi_1..chi_n]
    CASE1    [x_1..x_n, w_1..w_n, x_0, xbar_1..xbar_n, chi0_1..chi0_n]
    CASE2    [x_1..x_n, w_1..w_n, x_0, chi_1..chi_n, what_1..what_n]

With ``observer="ideal"`` the observer block is dropped and controllers use
the true states.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, InvariantError, NonFinite
from .graphs import SwitchingSchedule, active_graph
from .synthesis import Design, Mode

try:  # compiled kernel, optional
    from ._rk4 import rk4_switched as _rk4_compiled
except ImportError:  # pragma: no cover - depends on the build
    _rk4_compiled = None
from ._rk4_py import rk4_switched as _rk4_python

__all__ = [
    "BACKEND",
    "OVERFLOW_GUARD",
    "NOT_SETTLED",
    "ClosedLoopSystem",
    "SimTrace",
    "ConvergenceReport",
    "assemble_closed_loop",
    "linear_system",
    "integrate",
    "tracking_errors",
    "convergence_metrics",
]

OVERFLOW_GUARD = 1e12
NOT_SETTLED = math.inf
GRID_TOL = 1e-9

if os.environ.get("COORDREG_BACKEND", "").lower() == "python" or _rk4_compiled is None:
    BACKEND = "python"
else:
    BACKEND = "cython"


def _kernel(backend: str | None):
    backend = backend or BACKEND
    if backend == "cython":
        if _rk4_compiled is None:
            raise RuntimeError("compiled RK4 kernel is not built")
        return _rk4_compiled
    if backend == "python":
        return _rk4_python
    raise ValueError(f"unknown backend {backend!r}")


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    """Stacked linear closed loop, one drift matrix per topology.

    ``drifts[k-1]`` is used while graph ``k`` is active. ``error_maps[i]``,
    ``yd_maps[i]`` and ``obs_maps[i]`` are row maps from the stacked state to
    agent ``i``'s tracking error, coordination output and observer error.
    """

    mode: Mode
    drifts: np.ndarray
    layout: dict
    error_maps: tuple
    yd_maps: tuple
    obs_maps: tuple
    z0: np.ndarray

    @property
    def dim(self) -> int:
        return self.z0.size

    @property
    def n_agents(self) -> int:
        return len(self.error_maps)

    def drift(self, k: int) -> np.ndarray:
        return self.drifts[k - 1]


class _Blocks:
    """Row/column bookkeeping for the stacked state."""

    def __init__(self):
        self.layout: dict = {}
        self.size = 0

    def add(self, name: str, dim: int) -> slice:
        sl = slice(self.size, self.size + dim)
        self.layout[name] = sl
        self.size += dim
        return sl

    def select(self, name: str) -> np.ndarray:
        sl = self.layout[name]
        out = np.zeros((sl.stop - sl.start, self.size))
        out[:, sl] = np.eye(sl.stop - sl.start)
        return out


def linear_system(drifts, z0, mode: Mode = Mode.UNIFIED) -> ClosedLoopSystem:
    """Wrap bare drift matrices (no outputs) for direct integration."""
    drifts = np.asarray(drifts, float)
    if drifts.ndim == 2:
        drifts = drifts[None]
    z0 = np.asarray(z0, float).ravel()
    if drifts.shape[1:] != (z0.size, z0.size):
        raise DimensionError(f"drift shape {drifts.shape[1:]} does not match state size {z0.size}")
    return ClosedLoopSystem(Mode(mode), drifts, {"z": slice(0, z0.size)}, (), (), (), z0)


def assemble_closed_loop(scenario, design: Design, observer: str = "designed") -> ClosedLoopSystem:
    """Build the per-graph drift matrices for ``scenario`` under ``design``.

    Parameters
    ----------
    scenario : Scenario
        Plants, exosystems, graphs and initial conditions.
    design : Design
        Output of :func:`coordreg.synthesis.synthesize` for the same scenario.
    observer : {"designed", "ideal"}
        ``"ideal"`` feeds the controllers with true states instead of
        estimates.
    """
    mode = Mode(design.mode)
    if Mode(scenario.mode) is not mode:
        raise InvariantError(f"scenario mode {Mode(scenario.mode).value} != design mode {mode.value}")
    if observer not in ("designed", "ideal"):
        raise ValueError(f"observer must be 'designed' or 'ideal', got {observer!r}")
    agents, group = scenario.agents, scenario.group
    n = len(agents)
    if len(design.controllers) != n:
        raise DimensionError(f"design has {len(design.controllers)} controllers for {n} agents")
    ideal = observer == "ideal"

    blk = _Blocks()
    for i, ag in enumerate(agents):
        blk.add(f"x_{i}", ag.n)
    for i, ag in enumerate(agents):
        blk.add(f"w_{i}", ag.q)
    blk.add("x0", group.n0)
    obs = design.observer
    if not ideal:
        if mode is Mode.UNIFIED:
            for i in range(n):
                blk.add(f"chi_{i}", obs.canonicals[i].T.shape[0])
        elif mode is Mode.CASE1:
            for i in range(n):
                blk.add(f"xbar_{i}", obs.reduced[i].Abar.shape[0])
            for i in range(n):
                blk.add(f"chi0_{i}", obs.group.T.shape[0])
        else:
            for i in range(n):
                blk.add(f"chi_{i}", obs.canonicals[i].T.shape[0])
            for i, ag in enumerate(agents):
                blk.add(f"what_{i}", ag.q)
    Z = blk.size
    sel = blk.select

    X = [sel(f"x_{i}") for i in range(n)]
    Wx = [sel(f"w_{i}") for i in range(n)]
    X0 = sel("x0")
    Ys = [ag.C_s @ X[i] + ag.C_w @ Wx[i] for i, ag in enumerate(agents)]
    Yd = [ag.C_d @ X[i] for i, ag in enumerate(agents)]
    Ed = [Yd[i] - group.C0 @ X0 for i in range(n)]
    Err = [ag.D_s @ X[i] + ag.D_w @ Wx[i] + group.D0 @ X0 for i, ag in enumerate(agents)]

    # input maps u_i = U[i] z and observer error maps
    U, Obs = [], []
    for i, (ag, ctrl) in enumerate(zip(agents, design.controllers)):
        F = ctrl.F
        if mode is Mode.UNIFIED:
            red = design.reduced[i]
            comp = np.vstack([X[i], Wx[i], X0])
            Kbar = np.hstack([F, ctrl.feedforward[0]])
            if ideal:
                U.append(Kbar @ red.W @ comp)
                Obs.append(np.zeros((0, Z)))
            else:
                can = obs.canonicals[i]
                chi = sel(f"chi_{i}")
                U.append(Kbar @ can.T_pinv @ chi)
                Obs.append(can.T @ red.W @ comp - chi)
            continue
        ff1, ff2 = ctrl.feedforward
        if ideal:
            U.append(F @ X[i] + ff1 @ Wx[i] + ff2 @ X0)
            Obs.append(np.zeros((0, Z)))
        elif mode is Mode.CASE1:
            red = obs.reduced[i]
            xb, chi0 = sel(f"xbar_{i}"), sel(f"chi0_{i}")
            est = red.W_rec @ xb
            xh, wh = est[: ag.n], est[ag.n:]
            U.append(F @ xh + ff1 @ wh + ff2 @ obs.group.T_pinv @ chi0)
            Obs.append(np.vstack([red.W @ np.vstack([X[i], Wx[i]]) - xb, obs.group.T @ X0 - chi0]))
        else:
            red = obs.reduced[i]
            can = obs.canonicals[i]
            chi, wh = sel(f"chi_{i}"), sel(f"what_{i}")
            est = red.W_rec @ can.T_pinv @ chi
            xh, x0h = est[: ag.n], est[ag.n:]
            U.append(F @ xh + ff1 @ wh + ff2 @ x0h)
            Obs.append(np.vstack([can.T @ red.W @ np.vstack([X[i], X0]) - chi, Wx[i] - wh]))

    base = np.zeros((Z, Z))
    for i, ag in enumerate(agents):
        base[blk.layout[f"x_{i}"]] = ag.A @ X[i] + ag.B @ U[i]
        base[blk.layout[f"w_{i}"]] = ag.S @ Wx[i]
    base[blk.layout["x0"]] = group.A0 @ X0

    if not ideal and mode is Mode.CASE1:
        for i, ag in enumerate(agents):
            red, K = obs.reduced[i], obs.K_a[i]
            xb = sel(f"xbar_{i}")
            base[blk.layout[f"xbar_{i}"]] = red.Abar @ xb + red.Bbar @ U[i] + K @ (red.Cbar @ xb - Ys[i])
    if not ideal and mode is Mode.CASE2:
        for i, ag in enumerate(agents):
            red, can = obs.reduced[i], obs.canonicals[i]
            wh = sel(f"what_{i}")
            xh = (red.W_rec @ can.T_pinv @ sel(f"chi_{i}"))[: ag.n]
            base[blk.layout[f"what_{i}"]] = ag.S @ wh + obs.K_s[i] @ (ag.C_s @ xh + ag.C_w @ wh - Ys[i])

    drifts = np.empty((len(design.topo_set.laplacians), Z, Z))
    for k, L in enumerate(design.topo_set.laplacians):
        M = base.copy()
        if not ideal:
            _inject(M, L, mode, obs, agents, blk, U, Ys, Ed)
        drifts[k] = M

    z0 = np.zeros(Z)
    for i, ag in enumerate(agents):
        z0[blk.layout[f"x_{i}"]] = ag.x0
        z0[blk.layout[f"w_{i}"]] = ag.omega0
    z0[blk.layout["x0"]] = group.x0
    return ClosedLoopSystem(
        mode=mode,
        drifts=drifts,
        layout=dict(blk.layout),
        error_maps=tuple(Err),
        yd_maps=tuple(Yd),
        obs_maps=tuple(Obs),
        z0=z0,
    )


def _inject(M, L, mode, obs, agents, blk, U, Ys, Ed):
    """Observer rows that depend on the Laplacian ``L`` of the active graph."""
    n = len(agents)
    sel = blk.select
    G = obs.gain
    if mode is Mode.CASE1:
        gc = obs.group
        chi0 = [sel(f"chi0_{j}") for j in range(n)]
        # yhat_j = C_dj xhat_j - C0cal chi0_j, xhat_j from the individual observer
        yhat = []
        for j, ag in enumerate(agents):
            red = obs.reduced[j]
            xh = (red.W_rec @ sel(f"xbar_{j}"))[: ag.n]
            yhat.append(ag.C_d @ xh - gc.Ccal @ chi0[j])
        for i in range(n):
            innov = sum(L[i, j] * (Ed[j] - yhat[j]) for j in range(n))
            M[blk.layout[f"chi0_{i}"]] = gc.drift @ chi0[i] - G @ innov
        return
    p1 = obs.p1 if mode is Mode.UNIFIED else 0
    chis = [sel(f"chi_{j}") for j in range(n)]
    for i in range(n):
        can = obs.canonicals[i]
        rows = can.drift @ chis[i] + can.Bcal @ U[i]
        coup = sum(L[i, j] * (Ed[j] - can.Ccal[p1:] @ chis[j]) for j in range(n))
        if p1:
            rows = rows + G[:, :p1] @ (Ys[i] - can.Ccal[:p1] @ chis[i])
        rows = rows + G[:, p1:] @ coup
        M[blk.layout[f"chi_{i}"]] = rows


@dataclass(frozen=True, eq=False)
class SimTrace:
    """Recorded samples; ``e`` has shape (samples, agents, p')."""

    times: np.ndarray
    sigma: np.ndarray
    e: np.ndarray
    y_d: np.ndarray
    obs_err: np.ndarray
    states: np.ndarray

    def __len__(self) -> int:
        return self.times.size

    @property
    def error_norms(self) -> np.ndarray:
        """``max_i ||e_i(t)||`` per sample."""
        if self.e.shape[1] == 0:
            return np.zeros(self.times.size)
        return np.linalg.norm(self.e, axis=2).max(axis=1)


def _segment_plan(schedule: SwitchingSchedule, h: float, horizon: float):
    """Topology index and step count of each segment, aligned to the grid.

    Returns ``(graphs, steps, tail)``; ``tail`` is the leftover time when the
    horizon itself is not a multiple of ``h`` (covered by one shorter step).
    """
    if h <= 0 or horizon <= 0:
        raise ValueError("h and horizon must be positive")
    t0 = schedule.t0
    total = round(horizon / h)
    if abs(total * h - horizon) <= GRID_TOL * max(1.0, horizon):
        tail = 0.0
    else:
        total = math.floor(horizon / h)
        tail = horizon - total * h
    graphs, steps = [], []
    done = 0
    for start, end, k in schedule.iter_segments(t0 + total * h):
        stop = total if math.isinf(end) else round((end - t0) / h)
        if not math.isinf(end) and end - t0 < total * h and abs(stop * h - (end - t0)) > GRID_TOL * max(1.0, end - t0):
            raise InvariantError(f"switch instant {end} is not a multiple of h={h}")
        stop = min(stop, total)
        if stop > done:
            graphs.append(k - 1)
            steps.append(stop - done)
            done = stop
        if done >= total:
            break
    return np.asarray(graphs, dtype=np.int64), np.asarray(steps, dtype=np.int64), tail


def _rk4_step(M: np.ndarray, x: np.ndarray, dt: float) -> np.ndarray:
    k1 = M @ x
    k2 = M @ (x + 0.5 * dt * k1)
    k3 = M @ (x + 0.5 * dt * k2)
    k4 = M @ (x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(system: ClosedLoopSystem, schedule: SwitchingSchedule, config, backend: str | None = None,
              z0=None) -> SimTrace:
    """Classic RK4 over the schedule, switching drift exactly at switch instants.

    Parameters
    ----------
    system : ClosedLoopSystem
    schedule : SwitchingSchedule
    config : SimConfig
        Step ``h``, ``horizon`` and ``record_stride``.
    backend : {"cython", "python"}, optional
        Defaults to the compiled kernel when it is importable.
    z0 : array_like, optional
        Overrides ``system.z0``.

    Raises
    ------
    NonFinite
        If any state component leaves ``[-1e12, 1e12]``.
    """
    h, horizon, stride = float(config.h), float(config.horizon), int(config.record_stride)
    seg_graph, seg_steps, tail = _segment_plan(schedule, h, horizon)
    if seg_graph.size and seg_graph.max() >= system.drifts.shape[0]:
        raise DimensionError(f"schedule uses graph {seg_graph.max() + 1} but only {system.drifts.shape[0]} drifts exist")
    x0 = system.z0 if z0 is None else np.asarray(z0, float).ravel()
    kern = _kernel(backend)
    states, rec_steps, fail = kern(
        np.ascontiguousarray(system.drifts, dtype=np.float64),
        np.ascontiguousarray(seg_graph, dtype=np.int64),
        np.ascontiguousarray(seg_steps, dtype=np.int64),
        np.ascontiguousarray(x0, dtype=np.float64),
        h,
        stride,
        OVERFLOW_GUARD,
    )
    if fail >= 0:
        raise NonFinite(f"state left the overflow guard {OVERFLOW_GUARD:g} at t={schedule.t0 + fail * h:g}")
    states = np.asarray(states)
    times = schedule.t0 + _step_times(np.asarray(rec_steps), h)
    if tail > 0:
        if rec_steps[-1] != int(seg_steps.sum()):
            raise AssertionError("kernel did not record the last grid step")
        k = active_graph(schedule, times[-1])
        last = _rk4_step(system.drifts[k - 1], states[-1], tail)
        if not np.all(np.abs(last) <= OVERFLOW_GUARD):
            raise NonFinite(f"state left the overflow guard {OVERFLOW_GUARD:g} at t={schedule.t0 + horizon:g}")
        states = np.vstack([states, last])
        times = np.append(times, schedule.t0 + horizon)
    sigma = np.array([active_graph(schedule, t) for t in times], dtype=np.int64)
    e = tracking_errors(system, states)
    yd = _apply(system.yd_maps, states)
    if system.obs_maps and system.obs_maps[0].shape[0]:
        obs = np.stack([np.linalg.norm(states @ O.T, axis=1) for O in system.obs_maps], axis=1)
    else:
        obs = np.zeros((times.size, len(system.obs_maps)))
    return SimTrace(times, sigma, e, yd, obs, states)


def _step_times(steps: np.ndarray, h: float) -> np.ndarray:
    # steps / (1/h) is exact on decimal grids such as h = 1e-3, steps * h is not
    inv = round(1.0 / h)
    if inv >= 1 and abs(inv * h - 1.0) < 1e-12:
        return steps / inv
    return steps * h


def _apply(maps: Sequence[np.ndarray], states: np.ndarray) -> np.ndarray:
    if not maps:
        return np.zeros((states.shape[0], 0, 0))
    return np.stack([states @ Mi.T for Mi in maps], axis=1)


def tracking_errors(system: ClosedLoopSystem, states) -> np.ndarray:
    """``e_i = D_si x_i + D_wi w_i + D_0 x_0`` for each sample, shape (samples, agents, p')."""
    states = np.atleast_2d(np.asarray(states, float))
    return _apply(system.error_maps, states)


@dataclass(frozen=True)
class ConvergenceReport:
    settling_time: dict
    final_error_norms: np.ndarray
    peak_error_norms: np.ndarray

    def to_dict(self) -> dict:
        return {
            "settling_time": {str(k): ("NOT_SETTLED" if math.isinf(v) else v) for k, v in self.settling_time.items()},
            "final_error_norms": self.final_error_norms.tolist(),
            "peak_error_norms": self.peak_error_norms.tolist(),
        }


def _settling(times: np.ndarray, norms: np.ndarray, tol: float) -> float:
    bad = np.nonzero(norms > tol)[0]
    if bad.size == 0:
        return float(times[0])
    last = bad[-1]
    if last + 1 >= times.size:
        return NOT_SETTLED
    return float(times[last + 1])


def convergence_metrics(trace: SimTrace, tolerances=(1e-2,)) -> ConvergenceReport:
    """Settling time per tolerance plus final and peak per-agent error norms."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    per_agent = np.linalg.norm(trace.e, axis=2) if trace.e.shape[1] else np.zeros((len(trace), 0))
    norms = trace.error_norms
    settle = {float(tol): _settling(trace.times, norms, float(tol)) for tol in np.atleast_1d(tolerances)}
    return ConvergenceReport(settle, per_agent[-1].copy(), per_agent.max(axis=0))
