"""Observer and controller synthesis for coordinated output regulation.

The pipeline per agent is: remove the exosystem modes that the available
outputs cannot see, move the remaining composite model into a common
chain-of-integrators form, then attach a high-gain distributed observer and
a regulator-based state-feedback controller. Three observer layouts are
supported, see :class:`Mode`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import ctlinalg as cl
from .errors import (
    CertificateUnavailable,
    DimensionError,
    NotHurwitz,
    ObservabilityViolation,
    RankDeficiency,
)
from .graphs import SwitchingSchedule, TopologySet, verify_switching_assumptions

__all__ = [
    "Mode",
    "AgentModel",
    "GroupExosystem",
    "ReducedModel",
    "CanonicalModel",
    "ObserverSpec",
    "ControllerSpec",
    "CertificationReport",
    "Design",
    "common_nbar",
    "remove_redundant_modes",
    "pseudo_identical_form",
    "canonical_form",
    "shift_matrix",
    "eps_scaling",
    "topology_lyapunov_certificates",
    "certify_high_gain",
    "scaled_heterogeneity_norm",
    "build_unified_observer",
    "build_case1_observers",
    "build_case2_observers",
    "build_controller",
    "synthesize",
]


class Mode(str, enum.Enum):
    UNIFIED = "UNIFIED"
    CASE1 = "CASE1"
    CASE2 = "CASE2"


def _mat(a, rows: int | None = None, cols: int | None = None, name: str = "matrix") -> np.ndarray:
    """Coerce to a float 2-D array, filling in an empty dimension when known."""
    arr = np.asarray(a, dtype=float)
    if arr.size == 0:
        r = rows if rows is not None else (arr.shape[0] if arr.ndim == 2 else 0)
        c = cols if cols is not None else 0
        arr = np.zeros((r, c))
    elif arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if rows in (None, 1) else arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise DimensionError(f"{name} has {arr.shape[0]} rows, expected {rows}")
    if cols is not None and arr.shape[1] != cols:
        raise DimensionError(f"{name} has {arr.shape[1]} columns, expected {cols}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


def _vec(a, size: int | None = None, name: str = "vector") -> np.ndarray:
    arr = np.asarray(a if a is not None else np.zeros(size or 0), dtype=float).ravel()
    if size is not None and arr.size != size:
        raise DimensionError(f"{name} has length {arr.size}, expected {size}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AgentModel:
    """One follower: plant, individual exosystem and output/error maps.

    ``x0`` is the plant's initial state (zeros when omitted).
    """

    A: np.ndarray
    B: np.ndarray
    C_s: np.ndarray
    C_w: np.ndarray
    C_d: np.ndarray
    D_s: np.ndarray
    D_w: np.ndarray
    S: np.ndarray
    omega0: np.ndarray
    x0: np.ndarray | None = None

    def __post_init__(self):
        A = _mat(self.A, name="A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        S = _mat(self.S, name="S")
        q = S.shape[0]
        if S.shape != (q, q):
            raise DimensionError(f"S must be square, got {S.shape}")
        B = _mat(self.B, rows=n, name="B")
        C_s = _mat(self.C_s, cols=n, name="C_s")
        C_w = _mat(self.C_w, rows=C_s.shape[0], cols=q, name="C_w")
        C_d = _mat(self.C_d, cols=n, name="C_d")
        D_s = _mat(self.D_s, cols=n, name="D_s")
        D_w = _mat(self.D_w, rows=D_s.shape[0], cols=q, name="D_w")
        fields = dict(A=A, B=B, C_s=C_s, C_w=C_w, C_d=C_d, D_s=D_s, D_w=D_w, S=S)
        fields["omega0"] = _vec(self.omega0, q, "omega0")
        fields["x0"] = _vec(self.x0, n, "x0")
        for k, v in fields.items():
            object.__setattr__(self, k, v)

    n = property(lambda self: self.A.shape[0])
    m = property(lambda self: self.B.shape[1])
    q = property(lambda self: self.S.shape[0])
    p1 = property(lambda self: self.C_s.shape[0])
    p2 = property(lambda self: self.C_d.shape[0])
    pe = property(lambda self: self.D_s.shape[0])


@dataclass(frozen=True, eq=False)
class GroupExosystem:
    A0: np.ndarray
    C0: np.ndarray
    D0: np.ndarray
    x0: np.ndarray | None = None

    def __post_init__(self):
        A0 = _mat(self.A0, name="A0")
        n0 = A0.shape[0]
        if A0.shape != (n0, n0):
            raise DimensionError(f"A0 must be square, got {A0.shape}")
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "C0", _mat(self.C0, cols=n0, name="C0"))
        object.__setattr__(self, "D0", _mat(self.D0, cols=n0, name="D0"))
        x0 = self.x0
        if x0 is None:
            x0 = np.zeros(n0)
            if n0:
                x0[0] = 1.0
        object.__setattr__(self, "x0", _vec(x0, n0, "x0"))

    n0 = property(lambda self: self.A0.shape[0])
    p2 = property(lambda self: self.C0.shape[0])


def _check_agents(agents: Sequence[AgentModel], group: GroupExosystem) -> None:
    for i, ag in enumerate(agents, start=1):
        if ag.p1 != agents[0].p1 or ag.p2 != agents[0].p2:
            raise DimensionError(f"agent {i}: output dimensions must match across agents")
        if ag.p2 != group.p2:
            raise DimensionError(f"agent {i}: C_d has {ag.p2} rows but C0 has {group.p2}")
        if ag.pe != group.D0.shape[0]:
            raise DimensionError(f"agent {i}: D_s has {ag.pe} rows but D0 has {group.D0.shape[0]}")


def common_nbar(agents: Sequence[AgentModel], group: GroupExosystem, mode: Mode) -> int:
    """Chain length shared by every agent's canonical form."""
    mode = Mode(mode)
    if mode is Mode.UNIFIED:
        return group.n0 + max(a.n + a.q for a in agents)
    if mode is Mode.CASE2:
        return group.n0 + max(a.n for a in agents)
    return group.n0


@dataclass(frozen=True, eq=False)
class ReducedModel:
    """Observable composite model in block upper-triangular form.

    ``W`` maps composite coordinates ``[x_i; w]`` to ``[xbar_1; xbar_2]`` and
    ``W_rec`` maps back (exact when nothing was removed). ``error_leak`` is
    the size of the error-map component along removed modes; nonzero means
    the regulated error depends on something the outputs cannot see.
    """

    mode: Mode
    W: np.ndarray
    W_rec: np.ndarray
    Abar: np.ndarray
    Bbar: np.ndarray
    Cbar: np.ndarray
    n: int
    dim2: int
    Dm_reduced: np.ndarray
    exo_drift: np.ndarray
    error_leak: float = 0.0

    @property
    def A12(self) -> np.ndarray:
        return self.Abar[: self.n, self.n:]

    @property
    def A22(self) -> np.ndarray:
        return self.Abar[self.n:, self.n:]


def _exo_blocks(agent: AgentModel, group: GroupExosystem, mode: Mode):
    """Exosystem drift, output maps and error map for the requested composite."""
    p1, p2, q, n0 = agent.p1, agent.p2, agent.q, group.n0
    if mode is Mode.UNIFIED:
        E = sla.block_diag(agent.S, group.A0)
        Cx = np.vstack([agent.C_s, agent.C_d])
        Ce = np.block([[agent.C_w, np.zeros((p1, n0))], [np.zeros((p2, q)), -group.C0]])
        Dm = np.hstack([agent.D_w, group.D0])
    elif mode is Mode.CASE1:
        E, Cx, Ce, Dm = agent.S, agent.C_s, agent.C_w, agent.D_w
    else:
        E, Cx, Ce, Dm = group.A0, agent.C_d, -group.C0, group.D0
    return np.asarray(E, float).reshape(Ce.shape[1], Ce.shape[1]), Cx, Ce, Dm


def remove_redundant_modes(agent: AgentModel, group: GroupExosystem, mode: Mode) -> ReducedModel:
    """Drop composite modes invisible to the agent's outputs.

    The unobservable subspace ``N`` of the composite never intersects
    ``{w = 0}`` (the plant pair is observable), so it is the graph
    ``{(G w, w) : w in N_w}``. New coordinates ``xbar_1 = x - G w`` and
    ``xbar_2 = V1^T w`` (``V1`` spanning the complement of ``N_w``) keep the
    plant drift ``A_i`` top-left and a zero lower-left block.
    """
    mode = Mode(mode)
    E, Cx, Ce, Dm = _exo_blocks(agent, group, mode)
    A, n = agent.A, agent.n
    if not cl.pbh_checks(A, C=Cx).observable:
        raise ObservabilityViolation(f"{mode.value}: plant pair (A_i, C) is not observable")
    nw = E.shape[0]
    Ac = sla.block_diag(A, E)
    Cc = np.hstack([Cx, Ce])
    stair = cl.observability_staircase(Ac, Cc)
    n_unobs = n + nw - stair.n_obs

    if n_unobs == 0:
        G = np.zeros((n, nw))
        V1, V2 = np.eye(nw), np.zeros((nw, 0))
    else:
        N = stair.W[stair.n_obs:].T
        Nx, Nw = N[:n], N[n:]
        U, s, _ = np.linalg.svd(Nw)
        if np.sum(s > cl.RANK_RTOL * max(s[0], 1.0)) < n_unobs:
            raise ObservabilityViolation("unobservable subspace reaches plant coordinates")
        G = Nx @ np.linalg.pinv(Nw)
        V2, V1 = U[:, :n_unobs], U[:, n_unobs:]

    A12 = (A @ G - G @ E) @ V1
    A22 = V1.T @ E @ V1
    Abar = np.block([[A, A12], [np.zeros((V1.shape[1], n)), A22]])
    Bbar = np.vstack([agent.B, np.zeros((V1.shape[1], agent.m))])
    Cbar = np.hstack([Cx, (Cx @ G + Ce) @ V1])
    W = np.block([[np.eye(n), -G], [np.zeros((V1.shape[1], n)), V1.T]])
    W_rec = np.block([[np.eye(n), G @ V1], [np.zeros((nw, n)), V1]])
    err_map = agent.D_s @ G + Dm
    return ReducedModel(
        mode=mode,
        W=W,
        W_rec=W_rec,
        Abar=Abar,
        Bbar=Bbar,
        Cbar=Cbar,
        n=n,
        dim2=V1.shape[1],
        Dm_reduced=err_map @ V1,
        exo_drift=E,
        error_leak=float(np.linalg.norm(err_map @ V2)) if V2.size else 0.0,
    )


def shift_matrix(p: int, nbar: int) -> np.ndarray:
    """Block shift ``[[0, I_{p(nbar-1)}], [0, 0]]``."""
    return np.eye(p * nbar, k=p)


def eps_scaling(eps: float, p: int, nbar: int, power: int = -1) -> np.ndarray:
    """``diag(eps^-1 I_p, ..., eps^-nbar I_p)``; ``power=+1`` gives the inverse."""
    if not 0 < eps <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {eps}")
    exps = np.repeat(np.arange(1, nbar + 1), p)
    return np.diag(float(eps) ** (power * exps))


@dataclass(frozen=True, eq=False)
class CanonicalModel:
    """``chi = T xbar`` with ``T Abar = (Acal + Lcal) T`` and ``Ccal T = Cbar``."""

    T: np.ndarray
    T_pinv: np.ndarray
    Acal: np.ndarray
    L: np.ndarray
    Bcal: np.ndarray
    Ccal: np.ndarray
    nbar: int
    p: int

    @property
    def Lcal(self) -> np.ndarray:
        out = np.zeros_like(self.Acal)
        out[-self.p:] = self.L
        return out

    @property
    def drift(self) -> np.ndarray:
        return self.Acal + self.Lcal


def canonical_form(Abar, Bbar, Cbar, nbar: int) -> CanonicalModel:
    Abar, Cbar = np.asarray(Abar, float), np.asarray(Cbar, float)
    dim = Abar.shape[0]
    p = Cbar.shape[0]
    if nbar < 1:
        raise RankDeficiency("chain length must be positive")
    T = cl.obsv(Abar, Cbar, nbar)
    if cl.matrix_rank(T) < dim:
        raise RankDeficiency(f"T has column rank {cl.matrix_rank(T)} < {dim}")
    T_pinv = np.linalg.solve(T.T @ T, T.T)
    L = Cbar @ np.linalg.matrix_power(Abar, nbar) @ T_pinv
    Bcal = T @ np.asarray(Bbar, float) if Bbar is not None else np.zeros((p * nbar, 0))
    Ccal = np.hstack([np.eye(p), np.zeros((p, p * (nbar - 1)))])
    return CanonicalModel(T, T_pinv, shift_matrix(p, nbar), L, Bcal, Ccal, nbar, p)


def pseudo_identical_form(reduced: ReducedModel, nbar: int) -> CanonicalModel:
    return canonical_form(reduced.Abar, reduced.Bbar, reduced.Cbar, nbar)


def topology_lyapunov_certificates(topo_set: TopologySet) -> dict:
    """Per-graph ``P_k`` for the switched Lyapunov argument.

    Connected graphs solve ``P(-L + beta I) + (-L + beta I)^T P = -I``.
    Other graphs use ``P = I`` which is valid whenever ``L + L^T >= 0``.
    """
    certs = {}
    for k in topo_set.gamma_c:
        L = topo_set.laplacian(k)
        M = -L + topo_set.beta[k] * np.eye(L.shape[0])
        certs[k] = cl.solve_lyapunov(M, np.eye(L.shape[0]))
    for k in topo_set.gamma_d:
        L = topo_set.laplacian(k)
        sym = L + L.T
        if sym.size and np.linalg.eigvalsh(sym).min() < -1e-12 * max(1.0, np.linalg.norm(sym)):
            raise CertificateUnavailable(f"graph {k}: no certificate construction for L + L^T indefinite")
        certs[k] = np.eye(L.shape[0])
    return certs


def scaled_heterogeneity_norm(canonicals: Sequence[CanonicalModel], eps: float) -> float:
    """Spectral norm of the block-diagonal ``eps^(nbar+1) L_i S(eps)`` perturbation."""
    out = 0.0
    for c in canonicals:
        Le = eps ** (c.nbar + 1) * c.L @ eps_scaling(eps, c.p, c.nbar)
        out = max(out, float(np.linalg.norm(Le, 2)))
    return out


@dataclass(frozen=True)
class CertificationReport:
    lambda_c: float
    lambda_d: float
    a: float
    kappa_star: float
    eps_star: float
    c_star: float
    alpha: float
    theta: float
    norm_bound_Leps: float
    switch_rate_bound: float
    tau_d: float
    kappa_achieved: float
    kappa_ok: bool
    P_spectrum: tuple
    P_k_spectra: dict
    Leps_norm: float | None = None
    eps_star_heterogeneity: float | None = None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["P_k_spectra"] = {str(k): list(v) for k, v in self.P_k_spectra.items()}
        d["P_spectrum"] = list(self.P_spectrum)
        if math.isinf(self.kappa_achieved):
            d["kappa_achieved"] = "UNBOUNDED"
        return d


def _largest_admissible_eps(canonicals, bound, hi):
    """Largest eps <= hi with ||L_eps|| < bound (the norm is nondecreasing in eps)."""
    if scaled_heterogeneity_norm(canonicals, hi) < bound:
        return hi
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= 0:
            break
        if scaled_heterogeneity_norm(canonicals, mid) < bound:
            lo = mid
        else:
            hi = mid
    return lo


def certify_high_gain(
    are: cl.AreSolution,
    certs: dict,
    topo_set: TopologySet,
    schedule: SwitchingSchedule,
    alpha: float,
    mode: Mode = Mode.UNIFIED,
    canonicals: Sequence[CanonicalModel] | None = None,
    epsilon: float | None = None,
) -> CertificationReport:
    """Dwell-time / high-gain bounds from the switched Lyapunov argument.

    The unified observer weighs the relative outputs by ``max(theta, 1)``;
    the two special-case observers use ``theta`` alone.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    mode = Mode(mode)
    theta = topo_set.theta
    th = max(theta, 1.0) if mode is Mode.UNIFIED else theta
    lmax, lmin = are.lambda_max, are.lambda_min
    spectra = {}
    for k, Pk in certs.items():
        ev = np.linalg.eigvalsh(Pk)
        spectra[k] = (float(ev[0]), float(ev[-1]))
    lam_c = 1.0 / (2.0 * lmax)
    lam_d = 2.0 * th * lmax
    a = (lmax / lmin) * max(spectra[k][1] for k in spectra) / min(spectra[j][0] for j in spectra)
    kappa_star = (alpha + 4.0 * th * lmax**2) / (1.0 - alpha)
    sw = verify_switching_assumptions(schedule, topo_set)
    tau_d = sw.tau_d
    ln_a = math.log(a)
    eps_star = 1.0 if ln_a <= 0 else min(1.0, alpha * tau_d / (2.0 * lmax * ln_a))
    c_star = math.sqrt(lmax * max(s[1] for s in spectra.values()) / (lmin * min(s[0] for s in spectra.values())))
    norm_bound = min(s[0] * lmin / (4.0 * s[1] * lmax**2) for s in spectra.values())
    Leps = eps_het = None
    if canonicals:
        if epsilon is not None:
            Leps = scaled_heterogeneity_norm(canonicals, epsilon)
        eps_het = _largest_admissible_eps(canonicals, norm_bound, eps_star)
    return CertificationReport(
        lambda_c=lam_c,
        lambda_d=lam_d,
        a=a,
        kappa_star=kappa_star,
        eps_star=eps_star,
        c_star=c_star,
        alpha=alpha,
        theta=theta,
        norm_bound_Leps=norm_bound,
        switch_rate_bound=1.0 / tau_d,
        tau_d=tau_d,
        kappa_achieved=sw.kappa_achieved,
        kappa_ok=sw.kappa_achieved >= kappa_star,
        P_spectrum=(lmin, lmax),
        P_k_spectra=spectra,
        Leps_norm=Leps,
        eps_star_heterogeneity=eps_het,
    )


@dataclass(frozen=True, eq=False)
class ObserverSpec:
    """Everything the closed loop needs to run the observers of one mode.

    ``gain`` is ``S(eps) P C^T``. In UNIFIED and CASE2 it is shared by all
    agents' chain observers; in CASE1 it drives the group observer.
    """

    mode: Mode
    epsilon: float
    S_eps: np.ndarray
    gain: np.ndarray
    are: cl.AreSolution
    canonicals: tuple = ()
    reduced: tuple = ()
    K_a: tuple = ()
    K_s: tuple = ()
    group: CanonicalModel | None = None
    p1: int = 0
    p2: int = 0


def build_unified_observer(canonicals, are: cl.AreSolution, epsilon: float, p1: int, p2: int) -> ObserverSpec:
    if isinstance(canonicals, CanonicalModel):
        canonicals = [canonicals]
    c0 = canonicals[0]
    S_eps = eps_scaling(epsilon, c0.p, c0.nbar)
    if c0.p != p1 + p2:
        raise DimensionError(f"canonical output size {c0.p} != p1 + p2 = {p1 + p2}")
    return ObserverSpec(
        mode=Mode.UNIFIED,
        epsilon=float(epsilon),
        S_eps=S_eps,
        gain=S_eps @ are.P @ c0.Ccal.T,
        are=are,
        canonicals=tuple(canonicals),
        p1=p1,
        p2=p2,
    )


def build_case1_observers(
    reduced: Sequence[ReducedModel],
    group: GroupExosystem,
    are0: cl.AreSolution,
    epsilon: float,
    K_a: Sequence,
) -> ObserverSpec:
    """Individual Luenberger observers on ``xbar_i`` plus a group high-gain observer."""
    gains = []
    for i, (red, K) in enumerate(zip(reduced, K_a), start=1):
        K = _mat(K, rows=red.Abar.shape[0], cols=red.Cbar.shape[0], name=f"K_a{i}")
        if not cl.is_hurwitz(red.Abar + K @ red.Cbar):
            raise NotHurwitz(f"agent {i}: Abar + K_a Cbar is not Hurwitz")
        gains.append(K)
    gc = canonical_form(group.A0, None, group.C0, group.n0)
    S_eps = eps_scaling(epsilon, gc.p, gc.nbar)
    return ObserverSpec(
        mode=Mode.CASE1,
        epsilon=float(epsilon),
        S_eps=S_eps,
        gain=S_eps @ are0.P @ gc.Ccal.T,
        are=are0,
        reduced=tuple(reduced),
        K_a=tuple(gains),
        group=gc,
        p2=group.p2,
    )


def build_case2_observers(
    reduced: Sequence[ReducedModel],
    canonicals: Sequence[CanonicalModel],
    agents: Sequence[AgentModel],
    are: cl.AreSolution,
    epsilon: float,
    K_s: Sequence,
) -> ObserverSpec:
    """Coupled ``(x_i, x_0)`` chain observers plus cascaded ``omega_i`` observers."""
    gains = []
    for i, (ag, K) in enumerate(zip(agents, K_s), start=1):
        K = _mat(K, rows=ag.q, cols=ag.p1, name=f"K_s{i}")
        if not cl.is_hurwitz(ag.S + K @ ag.C_w):
            raise NotHurwitz(f"agent {i}: S + K_s C_w is not Hurwitz")
        gains.append(K)
    c0 = canonicals[0]
    S_eps = eps_scaling(epsilon, c0.p, c0.nbar)
    return ObserverSpec(
        mode=Mode.CASE2,
        epsilon=float(epsilon),
        S_eps=S_eps,
        gain=S_eps @ are.P @ c0.Ccal.T,
        are=are,
        canonicals=tuple(canonicals),
        reduced=tuple(reduced),
        K_s=tuple(gains),
        p2=c0.p,
    )


@dataclass(frozen=True, eq=False)
class ControllerSpec:
    """Regulator-based feedback.

    UNIFIED: ``u = F xbar_1 + (Gamma - F Pi) xbar_2``.
    CASE1/CASE2: ``u = F x + (Gamma1 - F Pi1) omega + (Gamma2 - F Pi2) x0``.
    """

    mode: Mode
    F: np.ndarray
    regulators: tuple
    feedforward: tuple

    @property
    def Pi(self):
        return self.regulators[0].Pi

    @property
    def Gamma(self):
        return self.regulators[0].Gamma


def feedforward_gain(F, Pi, Gamma) -> np.ndarray:
    """``Gamma - F Pi``."""
    return np.asarray(Gamma, float) - np.asarray(F, float) @ np.asarray(Pi, float)


def build_controller(A, B, F, regulators, mode: Mode) -> ControllerSpec:
    mode = Mode(mode)
    A, B = np.asarray(A, float), np.asarray(B, float)
    F = _mat(F, rows=B.shape[1], cols=A.shape[0], name="F")
    if not cl.is_hurwitz(A + B @ F):
        raise NotHurwitz(f"A + B F is not Hurwitz (eigenvalues {np.linalg.eigvals(A + B @ F)})")
    if isinstance(regulators, cl.RegulatorSolution):
        regulators = (regulators,)
    expected = 1 if mode is Mode.UNIFIED else 2
    if len(regulators) != expected:
        raise DimensionError(f"{mode.value} needs {expected} regulator solution(s), got {len(regulators)}")
    ff = tuple(feedforward_gain(F, r.Pi, r.Gamma) for r in regulators)
    return ControllerSpec(mode, F, tuple(regulators), ff)


def filter_weight(mode: Mode, p1: int, p2: int, theta: float) -> np.ndarray:
    if Mode(mode) is Mode.UNIFIED:
        return sla.block_diag(np.eye(p1), theta * np.eye(p2))
    return theta * np.eye(p2)


@dataclass(frozen=True, eq=False)
class Design:
    """Full synthesis output for one scenario."""

    mode: Mode
    topo_set: TopologySet
    reduced: tuple
    canonicals: tuple
    are: cl.AreSolution
    observer: ObserverSpec
    controllers: tuple
    certificates: dict
    certification: CertificationReport
    epsilon: float
    theta: float
    alpha: float

    def gains_document(self) -> dict:
        """JSON-ready summary: per-agent gains, regulator solutions, certification."""
        agents = []
        for i, ctrl in enumerate(self.controllers):
            entry = {"F": ctrl.F.tolist()}
            if self.mode is Mode.UNIFIED:
                entry["Pi"] = ctrl.Pi.tolist()
                entry["Gamma"] = ctrl.Gamma.tolist()
            else:
                r1, r2 = ctrl.regulators
                entry.update(Pi1=r1.Pi.tolist(), Gamma1=r1.Gamma.tolist(), Pi2=r2.Pi.tolist(), Gamma2=r2.Gamma.tolist())
            if self.mode is Mode.CASE1:
                entry["K_a"] = self.observer.K_a[i].tolist()
            if self.mode is Mode.CASE2:
                entry["K_s"] = self.observer.K_s[i].tolist()
            agents.append(entry)
        return {
            "mode": self.mode.value,
            "epsilon": self.epsilon,
            "theta": self.theta,
            "alpha": self.alpha,
            "P": self.are.P.tolist(),
            "agents": agents,
            "certification": self.certification.to_dict(),
        }


def _gain_override(gains: dict, key: str, i: int):
    seq = (gains or {}).get(key)
    if seq is None or i >= len(seq):
        return None
    return seq[i]


def synthesize(scenario) -> Design:
    """Run the whole design pipeline on a scenario.

    Gains given in ``scenario.gains`` (``F``, ``K_a``, ``K_s`` lists with
    ``None`` holes allowed) are used verbatim; missing ones are synthesised
    with identity-weighted LQR and checked for Hurwitz stability.
    """
    mode = Mode(scenario.mode)
    agents, group = scenario.agents, scenario.group
    _check_agents(agents, group)
    gains = scenario.gains or {}
    topo_set = scenario.topology_set()
    theta = topo_set.theta
    epsilon = float(gains.get("epsilon", 0.2))
    alpha = float(gains.get("alpha", 0.5))

    reduced, controllers = [], []
    for i, ag in enumerate(agents):
        F = _gain_override(gains, "F", i)
        if F is None:
            F = cl.lqr_gain(ag.A, ag.B)
        if mode is Mode.UNIFIED:
            red = remove_redundant_modes(ag, group, mode)
            regs = (cl.solve_regulator(ag.A, ag.B, red.A12, red.A22, ag.D_s, red.Dm_reduced),)
        else:
            red = remove_redundant_modes(ag, group, mode)
            regs = (
                cl.solve_regulator(ag.A, ag.B, None, ag.S, ag.D_s, ag.D_w),
                cl.solve_regulator(ag.A, ag.B, None, group.A0, ag.D_s, group.D0),
            )
        reduced.append(red)
        controllers.append(build_controller(ag.A, ag.B, F, regs, mode))

    p1, p2 = agents[0].p1, agents[0].p2
    canonicals: list = []
    if mode is Mode.CASE1:
        gc = canonical_form(group.A0, None, group.C0, group.n0)
        are = cl.solve_filter_are(gc.Acal, gc.Ccal, filter_weight(mode, p1, p2, theta))
        K_a = []
        for i, red in enumerate(reduced):
            K = _gain_override(gains, "K_a", i)
            K_a.append(cl.observer_gain(red.Abar, red.Cbar) if K is None else K)
        observer = build_case1_observers(reduced, group, are, epsilon, K_a)
        cert_canon = [gc]
    else:
        nbar = common_nbar(agents, group, mode)
        canonicals = [pseudo_identical_form(r, nbar) for r in reduced]
        c0 = canonicals[0]
        are = cl.solve_filter_are(c0.Acal, c0.Ccal, filter_weight(mode, p1, p2, theta))
        if mode is Mode.UNIFIED:
            observer = build_unified_observer(canonicals, are, epsilon, p1, p2)
        else:
            K_s = []
            for i, ag in enumerate(agents):
                K = _gain_override(gains, "K_s", i)
                K_s.append(cl.observer_gain(ag.S, ag.C_w) if K is None else K)
            observer = build_case2_observers(reduced, canonicals, agents, are, epsilon, K_s)
        cert_canon = canonicals

    certs = topology_lyapunov_certificates(topo_set)
    report = certify_high_gain(are, certs, topo_set, scenario.schedule, alpha, mode, cert_canon, epsilon)
    return Design(
        mode=mode,
        topo_set=topo_set,
        reduced=tuple(reduced),
        canonicals=tuple(canonicals),
        are=are,
        observer=observer,
        controllers=tuple(controllers),
        certificates=certs,
        certification=report,
        epsilon=epsilon,
        theta=theta,
        alpha=alpha,
    )
