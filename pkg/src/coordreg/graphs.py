"""Leader-follower topologies, grounded Laplacians and switching signals.

Node 0 is always the leader. Graph indices handed out to callers are
1-based, so the first graph in a topology set is graph ``1``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import InvariantError, NotSatisfiable, SpectralViolation

__all__ = [
    "LeaderFollowerTopology",
    "TopologySet",
    "SwitchingSchedule",
    "SwitchReport",
    "UNBOUNDED",
    "grounded_laplacian",
    "has_rooted_spanning_tree",
    "classify_topologies",
    "activation_times",
    "verify_switching_assumptions",
    "active_graph",
]

UNBOUNDED = math.inf

# fraction of min Re eig(L_k) used for the default beta_k
BETA_FRACTION = 0.9
# theta must also sit below half the smallest connected-graph eigenvalue
THETA_FRACTION = 0.45


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LeaderFollowerTopology:
    """Weighted digraph over the leader (node 0) and ``n`` followers.

    ``adjacency[i, j] > 0`` means node ``i`` receives information from
    node ``j``.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        a = _frozen(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 2:
            raise InvariantError(f"adjacency must be square with at least 2 nodes, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvariantError("adjacency has non-finite entries")
        if np.any(a < 0):
            raise InvariantError("adjacency entries must be nonnegative")
        if np.any(np.diag(a) != 0):
            raise InvariantError("adjacency diagonal must be zero (a_ii = 0)")
        if np.any(a[0] != 0):
            raise InvariantError("leader row must be zero (a_0j = 0)")
        object.__setattr__(self, "adjacency", a)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0] - 1

    @property
    def leader_weights(self) -> np.ndarray:
        """The column ``(a_10, ..., a_n0)``."""
        return self.adjacency[1:, 0].copy()


def grounded_laplacian(topo: LeaderFollowerTopology) -> np.ndarray:
    """Follower-block Laplacian with ``l_ii = sum_j a_ij`` over j = 0..n."""
    a = topo.adjacency
    return np.diag(a[1:, :].sum(axis=1)) - a[1:, 1:]


def has_rooted_spanning_tree(topo: LeaderFollowerTopology) -> bool:
    """True iff every follower is reachable from the leader."""
    a = topo.adjacency
    seen = {0}
    queue = deque([0])
    while queue:
        j = queue.popleft()
        # edge j -> i whenever a_ij > 0
        for i in np.flatnonzero(a[:, j] > 0):
            if i not in seen:
                seen.add(int(i))
                queue.append(int(i))
    return len(seen) == a.shape[0]


def _min_real_eig(L: np.ndarray) -> float:
    if L.size == 0:
        return math.inf
    return float(np.min(np.linalg.eigvals(L).real))


def _check_spectrum(L: np.ndarray, connected: bool, k: int) -> None:
    """Closed-RHP with semisimple imaginary-axis eigenvalues; open RHP if connected."""
    n = L.shape[0]
    eigs = np.linalg.eigvals(L)
    axis_tol = 1e-9 * max(1.0, np.linalg.norm(L, 2))
    if np.any(eigs.real < -axis_tol):
        raise SpectralViolation(f"graph {k}: eigenvalue in open left half-plane {eigs}")
    on_axis = eigs[np.abs(eigs.real) < axis_tol]
    if connected and on_axis.size:
        raise SpectralViolation(f"graph {k}: spanning tree present but eigenvalues {on_axis} on imaginary axis")
    remaining = list(on_axis)
    while remaining:
        lam = remaining[0]
        cluster = [z for z in remaining if abs(z - lam) < 1e-6]
        remaining = [z for z in remaining if abs(z - lam) >= 1e-6]
        center = complex(np.mean(cluster))
        s = np.linalg.svd(L - center * np.eye(n), compute_uv=False)
        rank = int(np.sum(s > 1e-10 * max(s[0], 1.0))) if s.size else 0
        if n - rank < len(cluster):
            raise SpectralViolation(
                f"graph {k}: imaginary-axis eigenvalue {center} is not semisimple "
                f"(algebraic {len(cluster)}, geometric {n - rank})"
            )


@dataclass(frozen=True, eq=False)
class TopologySet:
    graphs: tuple
    laplacians: tuple
    gamma_c: tuple
    gamma_d: tuple
    beta: dict
    theta: float | None
    min_real_eigs: dict = field(default_factory=dict)

    @property
    def delta(self) -> int:
        return len(self.graphs)

    def laplacian(self, k: int) -> np.ndarray:
        return self.laplacians[k - 1]

    @property
    def min_connected_eig(self) -> float:
        """Smallest ``min Re eig(L_k)`` over the connected graphs."""
        return min((self.min_real_eigs[k] for k in self.gamma_c), default=math.nan)


def classify_topologies(
    graphs: Sequence,
    beta: dict | None = None,
    theta: float | None = None,
) -> TopologySet:
    """Split graphs into spanning-tree (Gamma_c) and other (Gamma_d) sets.

    ``beta`` maps 1-based indices in Gamma_c to user-chosen beta_k; missing
    entries default to 0.9 * min Re eig(L_k). ``theta`` defaults to
    ``min(min_k beta_k, 0.45 * min_k min Re eig(L_k))`` so that it also
    satisfies the tighter bound used by the two special-case observers.
    """
    topos = tuple(g if isinstance(g, LeaderFollowerTopology) else LeaderFollowerTopology(g) for g in graphs)
    if not topos:
        raise InvariantError("need at least one topology")
    sizes = {t.n for t in topos}
    if len(sizes) != 1:
        raise InvariantError(f"graphs disagree on agent count: {sorted(sizes)}")
    laps = tuple(grounded_laplacian(t) for t in topos)
    gamma_c, gamma_d, mins = [], [], {}
    for k, (t, L) in enumerate(zip(topos, laps), start=1):
        connected = has_rooted_spanning_tree(t)
        _check_spectrum(L, connected, k)
        mins[k] = _min_real_eig(L)
        (gamma_c if connected else gamma_d).append(k)

    betas = {}
    for k in gamma_c:
        b = (beta or {}).get(k, BETA_FRACTION * mins[k])
        if not 0 < b < mins[k]:
            raise InvariantError(f"beta_{k}={b} must lie in (0, {mins[k]})")
        betas[k] = float(b)
    if theta is None and gamma_c:
        theta = min(min(betas.values()), THETA_FRACTION * min(mins[k] for k in gamma_c))
    if theta is not None and theta <= 0:
        raise InvariantError("theta must be positive")
    return TopologySet(topos, laps, tuple(gamma_c), tuple(gamma_d), betas, theta, mins)


@dataclass(frozen=True)
class SwitchingSchedule:
    """Piecewise-constant switching signal.

    ``segments`` is a sequence of ``(graph_index, duration)``. A periodic
    schedule repeats the segment list forever; a non-periodic one holds its
    last graph forever.
    """

    segments: tuple
    periodic: bool = True
    t0: float = 0.0

    def __post_init__(self):
        segs = tuple((int(k), float(d)) for k, d in self.segments)
        if not segs:
            raise InvariantError("schedule needs at least one segment")
        for k, d in segs:
            if k < 1:
                raise InvariantError(f"graph indices are 1-based, got {k}")
            if not d > 0 or not math.isfinite(d):
                raise InvariantError(f"segment durations must be positive and finite, got {d}")
        object.__setattr__(self, "segments", segs)

    @property
    def period(self) -> float:
        return sum(d for _, d in self.segments)

    @property
    def dwell_time(self) -> float:
        return min(d for _, d in self.segments)

    def iter_segments(self, t_end: float = math.inf) -> Iterator[tuple[float, float, int]]:
        """Yield ``(start, end, k)`` for every segment that starts before ``t_end``."""
        start = self.t0
        cycle = 0
        while True:
            for idx, (k, d) in enumerate(self.segments):
                if start >= t_end:
                    return
                last = not self.periodic and idx == len(self.segments) - 1
                # accumulate from period origin to keep boundaries exact
                end = math.inf if last else start + d
                yield start, end, k
                start = end
            cycle += 1
            if not self.periodic:
                return
            start = self.t0 + cycle * self.period


def active_graph(schedule: SwitchingSchedule, t: float) -> int:
    """Right-continuous lookup of sigma(t)."""
    if t < schedule.t0:
        raise ValueError(f"t={t} precedes schedule start {schedule.t0}")
    if schedule.periodic:
        local = math.fmod(t - schedule.t0, schedule.period)
        acc = 0.0
        for k, d in schedule.segments:
            acc += d
            if local < acc:
                return k
        return schedule.segments[-1][0]
    for start, end, k in schedule.iter_segments():
        if start <= t < end:
            return k
    raise AssertionError("unreachable")


def activation_times(
    schedule: SwitchingSchedule,
    t_bar0: float,
    t: float,
    gamma_c: Sequence[int],
) -> tuple[float, float]:
    """Return ``(T_c, T_d)``, the time spent in/out of Gamma_c on ``[t_bar0, t)``."""
    if not schedule.t0 <= t_bar0 <= t:
        raise ValueError(f"need t0 <= t_bar0 <= t, got t0={schedule.t0}, t_bar0={t_bar0}, t={t}")
    gc = set(gamma_c)
    Tc = Td = 0.0
    for start, end, k in schedule.iter_segments(t):
        lo, hi = max(start, t_bar0), min(end, t)
        if hi > lo:
            if k in gc:
                Tc += hi - lo
            else:
                Td += hi - lo
    return Tc, Td


@dataclass(frozen=True)
class SwitchReport:
    tau_d: float
    kappa_achieved: float
    t_bar0: float
    satisfied: dict

    def to_dict(self) -> dict:
        kappa = "UNBOUNDED" if math.isinf(self.kappa_achieved) else self.kappa_achieved
        return {"tau_d": self.tau_d, "kappa_achieved": kappa, "t_bar0": self.t_bar0, "satisfied": dict(self.satisfied)}


def _boundary_sweep(schedule, gc, t_start, t_stop):
    """Cumulative (T_c, T_d) at every segment end in (t_start, t_stop]."""
    Tc = Td = 0.0
    out = []
    for start, end, k in schedule.iter_segments(t_stop):
        lo, hi = max(start, t_start), min(end, t_stop)
        if hi <= lo:
            continue
        if k in gc:
            Tc += hi - lo
        else:
            Td += hi - lo
        out.append((Tc, Td))
    return out


def verify_switching_assumptions(schedule: SwitchingSchedule, topo_set: TopologySet) -> SwitchReport:
    """Dwell time and the largest activation-ratio constant the schedule achieves.

    Within a segment T_c/T_d is monotone, so the infimum over t is attained at
    a segment end; likewise the best reference instant is a segment start.
    """
    gc = set(topo_set.gamma_c)
    for k, _ in schedule.segments:
        if k > topo_set.delta:
            raise InvariantError(f"schedule references graph {k} but only {topo_set.delta} exist")
    tau_d = schedule.dwell_time

    if schedule.periodic:
        Pc = sum(d for k, d in schedule.segments if k in gc)
        Pd = schedule.period - Pc
        if Pc == 0:
            raise NotSatisfiable("schedule never activates a graph with a rooted spanning tree")
        if Pd == 0:
            return SwitchReport(tau_d, UNBOUNDED, schedule.t0, {"dwell_time": True, "activation_ratio": True})
        starts = [s for s, _, _ in schedule.iter_segments(schedule.t0 + schedule.period)]
        best, best_t = -math.inf, schedule.t0
        for tb in starts:
            # two periods of boundaries plus the asymptotic per-period ratio
            ratios = [c / d for c, d in _boundary_sweep(schedule, gc, tb, tb + 2 * schedule.period) if d > 0]
            ratios.append(Pc / Pd)
            worst = min(ratios)
            if worst > best:
                best, best_t = worst, tb
        return SwitchReport(tau_d, best, best_t, {"dwell_time": tau_d > 0, "activation_ratio": best > 0})

    last_k = schedule.segments[-1][0]
    if last_k not in gc:
        raise NotSatisfiable("schedule ends in a graph without a rooted spanning tree")
    starts = [s for s, _, _ in schedule.iter_segments()]
    # from the start of the final (connected, infinite) segment T_d is identically zero
    return SwitchReport(tau_d, UNBOUNDED, starts[-1], {"dwell_time": True, "activation_ratio": True})
