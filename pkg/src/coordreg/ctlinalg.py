"""Dense linear-algebra kernels for output-regulation design.

Everything here is a pure function of its array arguments. Rank decisions
use an SVD threshold of ``RANK_RTOL`` relative to the largest singular value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, NotHurwitz, NotObservable, SolverDivergence, Unsolvable

__all__ = [
    "StructuralReport",
    "RegulatorSolution",
    "AreSolution",
    "ZeroSet",
    "Staircase",
    "pbh_checks",
    "obsv",
    "solve_regulator",
    "solve_lyapunov",
    "solve_care",
    "solve_filter_are",
    "lqr_gain",
    "observer_gain",
    "invariant_zeros",
    "observability_staircase",
    "matrix_rank",
    "is_hurwitz",
]

RANK_RTOL = 1e-10
RHP_TOL = 1e-9  # Re(s) >= -RHP_TOL counts as closed right half-plane


def _as2d(a, name="matrix") -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def matrix_rank(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def is_hurwitz(A: np.ndarray) -> bool:
    A = _as2d(A)
    return A.shape[0] == 0 or bool(np.max(np.linalg.eigvals(A).real) < 0)


def obsv(A: np.ndarray, C: np.ndarray, depth: int | None = None) -> np.ndarray:
    """Stack ``C, CA, ..., CA^(depth-1)`` (depth defaults to the state dimension)."""
    A, C = _as2d(A, "A"), _as2d(C, "C")
    n = A.shape[0]
    depth = n if depth is None else depth
    blocks, row = [], C
    for _ in range(depth):
        blocks.append(row)
        row = row @ A
    if not blocks:
        return np.zeros((0, n))
    return np.vstack(blocks)


@dataclass(frozen=True)
class StructuralReport:
    observable: bool | None
    stabilizable: bool | None
    hurwitz: bool
    min_real_part: float
    max_real_part: float
    rank_defect_eigenvalues: list = field(default_factory=list)


def pbh_checks(A, B=None, C=None) -> StructuralReport:
    """Observability, stabilizability and Hurwitz tests on ``A`` (and ``B``, ``C``)."""
    A = _as2d(A, "A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"A must be square, got {A.shape}")
    if B is not None:
        B = _as2d(B, "B")
        if B.shape[0] != n:
            raise DimensionError(f"B has {B.shape[0]} rows, A is {n}x{n}")
    if C is not None:
        C = _as2d(C, "C")
        if C.shape[1] != n:
            raise DimensionError(f"C has {C.shape[1]} columns, A is {n}x{n}")

    eigs = np.linalg.eigvals(A) if n else np.zeros(0)
    defects = []
    observable = None
    if C is not None:
        observable = matrix_rank(obsv(A, C)) == n
        if not observable:
            for lam in eigs:
                M = np.vstack([A - lam * np.eye(n), C])
                if matrix_rank(M) < n:
                    defects.append(complex(lam))
    stabilizable = None
    if B is not None:
        stabilizable = True
        for lam in eigs:
            if lam.real >= -RHP_TOL:
                M = np.hstack([A - lam * np.eye(n), B])
                if matrix_rank(M) < n:
                    stabilizable = False
                    defects.append(complex(lam))
    re = eigs.real
    max_re = float(re.max()) if n else -np.inf
    min_re = float(re.min()) if n else -np.inf
    return StructuralReport(observable, stabilizable, max_re < 0, min_re, max_re, defects)


@dataclass(frozen=True)
class RegulatorSolution:
    Pi: np.ndarray
    Gamma: np.ndarray
    residual_dyn: float
    residual_out: float


def regulator_residuals(A, B, R, E, D, Dm, Pi, Gamma) -> tuple[float, float]:
    """Frobenius residuals of ``Pi E = A Pi + R + B Gamma`` and ``0 = D Pi + Dm``."""
    A, B, R, E, D, Dm = (_as2d(x) for x in (A, B, R, E, D, Dm))
    Pi, Gamma = _as2d(Pi), _as2d(Gamma)
    r1 = np.linalg.norm(Pi @ E - A @ Pi - R - B @ Gamma)
    r2 = np.linalg.norm(D @ Pi + Dm)
    return float(r1), float(r2)


def solve_regulator(A, B, R, E, D, Dm, tol: float = 1e-8) -> RegulatorSolution:
    """Minimum-norm ``(Pi, Gamma)`` with ``Pi E = A Pi + R + B Gamma`` and ``D Pi + Dm = 0``.

    The two matrix equations are vectorised (column-major) into a single
    linear system and solved in the least-squares sense; a residual above
    ``tol * (1 + ||inputs||)`` means the equations are not solvable.
    """
    A, B, E, D = _as2d(A, "A"), _as2d(B, "B"), _as2d(E, "E"), _as2d(D, "D")
    n, m, ne, p = A.shape[0], B.shape[1], E.shape[0], D.shape[0]
    R = np.zeros((n, ne)) if R is None else _as2d(R, "R")
    Dm = _as2d(Dm, "Dm")
    if A.shape != (n, n) or B.shape[0] != n or E.shape != (ne, ne):
        raise DimensionError("A, B, E shapes are inconsistent")
    if R.shape != (n, ne) or D.shape[1] != n or Dm.shape != (p, ne):
        raise DimensionError(f"R {R.shape}, D {D.shape}, Dm {Dm.shape} inconsistent with n={n}, ne={ne}")

    In, Ine = np.eye(n), np.eye(ne)
    # vec(Pi E - A Pi) - vec(B Gamma) = vec(R);  vec(D Pi) = -vec(Dm)
    top = np.hstack([np.kron(E.T, In) - np.kron(Ine, A), -np.kron(Ine, B)])
    bot = np.hstack([np.kron(Ine, D), np.zeros((p * ne, m * ne))])
    lhs = np.vstack([top, bot])
    rhs = np.concatenate([R.ravel(order="F"), -Dm.ravel(order="F")])
    if lhs.shape[1] == 0:
        sol = np.zeros(0)
    else:
        sol = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    Pi = sol[: n * ne].reshape((n, ne), order="F")
    Gamma = sol[n * ne:].reshape((m, ne), order="F")
    r1, r2 = regulator_residuals(A, B, R, E, D, Dm, Pi, Gamma)
    scale = 1.0 + sum(np.linalg.norm(x) for x in (A, B, R, E, D, Dm))
    if max(r1, r2) > tol * scale:
        raise Unsolvable(
            f"regulator equations not solvable: residuals {r1:.3e}, {r2:.3e} "
            "(non-resonance or right-invertibility violated?)"
        )
    return RegulatorSolution(Pi, Gamma, r1, r2)


def solve_lyapunov(M, Q) -> np.ndarray:
    """Solve ``M^T P + P M = -Q`` for Hurwitz ``M``."""
    M, Q = _as2d(M, "M"), _as2d(Q, "Q")
    if M.shape != Q.shape or M.shape[0] != M.shape[1]:
        raise DimensionError(f"M {M.shape} and Q {Q.shape} must be equal square shapes")
    if not is_hurwitz(M):
        raise NotHurwitz("Lyapunov equation requires a Hurwitz matrix")
    P = sla.solve_continuous_lyapunov(M.T, -Q)
    return 0.5 * (P + P.T)


def _care_residual(A, G, Q, X):
    return A.T @ X + X @ A - X @ G @ X + Q


def _bass_gain(A, B, Rinv):
    """Stabilising seed gain for Newton-Kleinman via Bass' method."""
    n = A.shape[0]
    beta = np.linalg.norm(A, 1) + 1.0
    Ab = -(A + beta * np.eye(n))
    Z = sla.solve_continuous_lyapunov(Ab, -2 * B @ B.T)
    return Rinv @ B.T @ np.linalg.solve(Z, np.eye(n))


def _newton_kleinman(A, B, Q, R, K, max_iter=60, tol=1e-13):
    Rinv = np.linalg.inv(R)
    X = None
    for _ in range(max_iter):
        Acl = A - B @ K
        if not is_hurwitz(Acl):
            raise SolverDivergence("Newton-Kleinman iterate lost stability")
        Xn = sla.solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        Xn = 0.5 * (Xn + Xn.T)
        K = Rinv @ B.T @ Xn
        if X is not None and np.linalg.norm(Xn - X) <= tol * max(1.0, np.linalg.norm(Xn)):
            return Xn
        X = Xn
    if X is None:
        raise SolverDivergence("Newton-Kleinman did not run")
    return X


def solve_care(A, B, Q, R) -> np.ndarray:
    """Stabilising solution of ``A^T X + X A - X B R^-1 B^T X + Q = 0``.

    Ordered real Schur form of the Hamiltonian, stable invariant subspace
    first. If that basis is ill-conditioned the solution is computed by
    Newton-Kleinman iteration seeded with a Bass stabilising gain. A couple
    of Newton-Kleinman sweeps polish the Schur result either way.
    """
    A, B, Q, R = _as2d(A), _as2d(B), _as2d(Q), _as2d(R)
    n = A.shape[0]
    Rinv = np.linalg.inv(R)
    G = B @ Rinv @ B.T
    H = np.block([[A, -G], [-Q, -A.T]])
    X = None
    try:
        T, U, sdim = sla.schur(H, output="real", sort="lhp")
        if sdim == n:
            U11, U21 = U[:n, :n], U[n:, :n]
            if np.linalg.cond(U11) < 1e12:
                X = np.linalg.solve(U11.T, U21.T).T
                X = 0.5 * (X + X.T)
    except (np.linalg.LinAlgError, ValueError):
        X = None
    if X is not None:
        K = Rinv @ B.T @ X
        if is_hurwitz(A - B @ K):
            try:
                X = _newton_kleinman(A, B, Q, R, K, max_iter=3)
            except SolverDivergence:
                pass
            return X
    return _newton_kleinman(A, B, Q, R, _bass_gain(A, B, Rinv))


@dataclass(frozen=True)
class AreSolution:
    P: np.ndarray
    theta_used: np.ndarray
    residual: float
    lambda_min: float
    lambda_max: float


def filter_are_residual(Acal, Ccal, Theta, P) -> np.ndarray:
    n = Acal.shape[0]
    return Acal @ P + P @ Acal.T - 2 * P @ Ccal.T @ Theta @ Ccal @ P + np.eye(n)


def solve_filter_are(Acal, Ccal, Theta) -> AreSolution:
    """Solve ``A P + P A^T - 2 P C^T Theta C P + I = 0`` for ``P`` positive definite."""
    Acal, Ccal, Theta = _as2d(Acal, "Acal"), _as2d(Ccal, "Ccal"), _as2d(Theta, "Theta")
    n, p = Acal.shape[0], Ccal.shape[0]
    if Acal.shape != (n, n) or Ccal.shape[1] != n or Theta.shape != (p, p):
        raise DimensionError("Acal, Ccal, Theta shapes inconsistent")
    w = np.linalg.eigvalsh(0.5 * (Theta + Theta.T))
    if w.size and w.min() <= 0:
        raise DimensionError("Theta must be symmetric positive definite")
    if matrix_rank(obsv(Acal, sla.sqrtm(Theta).real @ Ccal)) < n:
        raise NotObservable("(A, sqrt(Theta) C) is not observable")
    P = solve_care(Acal.T, Ccal.T, np.eye(n), np.linalg.inv(2 * Theta))
    P = 0.5 * (P + P.T)
    res = float(np.linalg.norm(filter_are_residual(Acal, Ccal, Theta, P)))
    ev = np.linalg.eigvalsh(P)
    if ev[0] <= 0 or not np.isfinite(res) or res > 1e-6 * max(1.0, np.linalg.norm(P)):
        raise SolverDivergence(f"filter ARE solution rejected (residual {res:.3e}, lambda_min {ev[0]:.3e})")
    return AreSolution(P, Theta, res, float(ev[0]), float(ev[-1]))


def lqr_gain(A, B, Q=None, R=None) -> np.ndarray:
    """State-feedback gain ``F`` with ``A + B F`` Hurwitz (identity weights by default)."""
    A, B = _as2d(A), _as2d(B)
    n, m = B.shape
    if n == 0:
        return np.zeros((m, 0))
    Q = np.eye(n) if Q is None else _as2d(Q)
    R = np.eye(m) if R is None else _as2d(R)
    X = solve_care(A, B, Q, R)
    return -np.linalg.solve(R, B.T @ X)


def observer_gain(A, C) -> np.ndarray:
    """Output-injection gain ``K`` with ``A + K C`` Hurwitz (dual LQR)."""
    A, C = _as2d(A), _as2d(C)
    return lqr_gain(A.T, C.T).T


@dataclass(frozen=True)
class ZeroSet:
    zeros: list
    right_invertible: bool
    normal_rank: int

    def in_closed_rhp(self) -> list:
        return [z for z in self.zeros if z.real >= -RHP_TOL]


def _pencil(A, B, D):
    n, m, p = A.shape[0], B.shape[1], D.shape[0]
    M = np.block([[A, B], [D, np.zeros((p, m))]])
    N = np.block([[np.eye(n), np.zeros((n, m))], [np.zeros((p, n)), np.zeros((p, m))]])
    return M, N


def _finite_geneig(M, N):
    alpha, beta = sla.eig(M, N, right=False, homogeneous_eigvals=True)
    scale = max(1.0, np.linalg.norm(M), np.linalg.norm(N))
    keep = np.abs(beta) > 1e-10 * np.maximum(np.abs(alpha), scale)
    return list(alpha[keep] / beta[keep])


def invariant_zeros(A, B, D) -> ZeroSet:
    """Finite invariant zeros of ``(A, B, D)`` from the Rosenbrock pencil.

    Square pencils go straight to QZ. Non-square (or singular) pencils are
    squared down with a fixed orthogonal compression and every candidate is
    kept only if the full pencil actually loses rank there.
    """
    A, B, D = _as2d(A, "A"), _as2d(B, "B"), _as2d(D, "D")
    n, m, p = A.shape[0], B.shape[1], D.shape[0]
    if A.shape != (n, n) or B.shape[0] != n or D.shape[1] != n:
        raise DimensionError(f"A {A.shape}, B {B.shape}, D {D.shape} inconsistent")
    M, N = _pencil(A, B, D)
    rng = np.random.default_rng(20130)
    s_probe = complex(rng.standard_normal(), rng.standard_normal())
    nrank = matrix_rank(M - s_probe * N)
    right_invertible = nrank == n + p

    if m == p and nrank == n + p:
        return ZeroSet(_finite_geneig(M, N), right_invertible, nrank)

    # square down to nrank x nrank and verify candidates on the original pencil
    Ul = np.linalg.qr(rng.standard_normal((n + p, n + p)))[0][:, :nrank]
    Ur = np.linalg.qr(rng.standard_normal((n + m, n + m)))[0][:, :nrank]
    Ms, Ns = Ul.T @ M @ Ur, Ul.T @ N @ Ur
    zeros = []
    for z in _finite_geneig(Ms, Ns):
        s = np.linalg.svd(M - z * N, compute_uv=False)
        if nrank == 0 or s[nrank - 1] <= 1e-8 * max(1.0, s[0]):
            zeros.append(z)
    return ZeroSet(zeros, right_invertible, nrank)


class Staircase(NamedTuple):
    W: np.ndarray
    n_obs: int


def observability_staircase(A, C) -> Staircase:
    """Orthogonal ``W`` so that ``z = W x`` puts observable coordinates first.

    In ``z`` coordinates ``W A W^T`` is block lower-triangular with the
    observable block top-left and ``C W^T = [C_o, 0]``.
    """
    A, C = _as2d(A, "A"), _as2d(C, "C")
    n = A.shape[0]
    if n == 0:
        return Staircase(np.zeros((0, 0)), 0)
    O = obsv(A, C)
    if O.size == 0 or not np.any(O):
        return Staircase(np.eye(n), 0)
    _, s, Vt = np.linalg.svd(O)
    r = int(np.sum(s > RANK_RTOL * s[0]))
    if r == n:
        return Staircase(np.eye(n), n)
    return Staircase(Vt, r)
