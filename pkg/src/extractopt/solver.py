"""Coupled quadratic system for the value-function curvature and its roots.

The value function is V(x, y, i) = A(i) x^2 - theta*y - K/r and the
feedback extraction rate is u(x, i) = (1 - 2*lambda*A(i)) * x / (2*beta).
The vector A solves, for each regime i,

    quad * A(i)^2 + linear(i) * A(i) + sum_{j != i} q_ij * A(j) + const = 0

with quad = lambda^2/beta, const = 1/(4*beta) and

    linear(i) = -r + sigma_i^2 + 2*mu_i - lambda/beta - sum_{j != i} q_ij + I(gamma_i).

The regime coupling enters as q_ij*(A(j) - A(i)), i.e. with the sign of the
chain generator acting on functions of the regime.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import levy
from .model import MarketModel, ReferenceTable, validate

__all__ = [
    "QuadraticSystem",
    "RootVector",
    "Solution",
    "NoAdmissibleRootError",
    "build_system",
    "solve_all_roots",
    "select_admissible",
]

_RESIDUAL_TOL = 1e-9
_REAL_TOL = 1e-9
_DEDUP_TOL = 1e-7
_NEWTON_STARTS = 200


class NoAdmissibleRootError(RuntimeError):
    def __init__(self, roots):
        super().__init__(
            "no admissible root: every root vector is complex or violates "
            f"the nonnegative-rate constraint; full root set: {roots}"
        )
        self.roots = roots


@dataclass(frozen=True)
class QuadraticSystem:
    m: int
    quad: float            # coefficient of A(i)^2, identical across regimes
    linear: tuple          # per-regime linear coefficient
    cross: tuple           # m x m, off-diagonal q_ij, zero diagonal
    const: float
    mode: str              # "formula" or "reference"

    def residual(self, A) -> np.ndarray:
        A = np.asarray(A)
        cross = np.array(self.cross)
        return self.quad * A**2 + np.array(self.linear) * A + cross @ A + self.const

    def max_residual(self, A) -> float:
        return float(np.max(np.abs(self.residual(A))))


@dataclass(frozen=True)
class RootVector:
    A: tuple               # complex entries
    residual: float

    def is_real(self) -> bool:
        return all(abs(a.imag) <= _REAL_TOL * (1.0 + abs(a.real)) for a in self.A)

    def real(self) -> np.ndarray:
        return np.array([a.real for a in self.A])


@dataclass(frozen=True)
class Solution:
    """Admissible curvature vector plus the cost-side constants."""

    A: tuple               # real, length m
    B: float               # -theta
    C: float               # -K/r
    impact: float
    beta: float
    theta: float
    bigK: float
    r: float
    warnings: tuple = ()

    @property
    def m(self) -> int:
        return len(self.A)

    def value_at(self, x: float, y: float, regime: int) -> float:
        """V(x, y, i) with 1-based regime index."""
        return self.A[regime - 1] * x * x + self.B * y + self.C

    def kappa(self, regime: int) -> float:
        """Feedback slope: extraction rate per unit price, per year."""
        return (1.0 - 2.0 * self.impact * self.A[regime - 1]) / (2.0 * self.beta)

    def rate_at(self, x: float, regime: int, period: str = "yearly") -> float:
        rate = self.kappa(regime) * x
        if period == "yearly":
            return rate
        if period == "daily":
            return rate / 365.0
        raise ValueError(f"period must be 'yearly' or 'daily', got {period!r}")

    def to_dict(self) -> dict:
        return {
            "A": list(self.A),
            "B": self.B,
            "C": self.C,
            "lambda": self.impact,
            "beta": self.beta,
            "theta": self.theta,
            "K": self.bigK,
            "r": self.r,
            "warnings": list(self.warnings),
        }


def build_system(
    model: MarketModel,
    mode: str = "formula",
    reference: Optional[ReferenceTable] = None,
    _skip_validation: bool = False,
) -> QuadraticSystem:
    """Assemble the coupled quadratic system, either from the model parameters
    ("formula") or from a literal reference coefficient table ("reference")."""
    if mode == "reference":
        if reference is None:
            raise ValueError("reference mode requires a ReferenceTable")
        m = len(reference.linear)
        cross = [[0.0] * m for _ in range(m)]
        q = model.switch.q
        for i in range(m):
            for j in range(m):
                if i != j:
                    cross[i][j] = q[i][j]
        return QuadraticSystem(
            m=m,
            quad=reference.quad,
            linear=tuple(reference.linear),
            cross=tuple(tuple(row) for row in cross),
            const=reference.const,
            mode="reference",
        )
    if mode != "formula":
        raise ValueError(f"unknown system mode {mode!r}")

    if not _skip_validation:
        rep = validate(model)
        if not rep.ok:
            raise ValueError("invalid model: " + "; ".join(rep.violations))

    lam, beta, r = model.impact, model.cost.beta, model.cost.r
    m = model.m
    q = model.switch.q
    linear = []
    cross = [[0.0] * m for _ in range(m)]
    for i in range(m):
        p = model.regimes[i]
        jump = levy.integral_closed_form(model.levy, p.gamma).value
        out_rate = sum(q[i][j] for j in range(m) if j != i)
        linear.append(-r + p.sigma**2 + 2.0 * p.mu - lam / beta - out_rate + jump)
        for j in range(m):
            if j != i:
                cross[i][j] = q[i][j]
    return QuadraticSystem(
        m=m,
        quad=lam * lam / beta,
        linear=tuple(linear),
        cross=tuple(tuple(row) for row in cross),
        const=1.0 / (4.0 * beta),
        mode="formula",
    )


def _polish(sys: QuadraticSystem, A: np.ndarray, iters: int = 3) -> np.ndarray:
    """A few complex Newton steps to tighten residuals after the direct solve."""
    cross = np.array(sys.cross, dtype=complex)
    lin = np.array(sys.linear, dtype=complex)
    for _ in range(iters):
        F = sys.quad * A**2 + lin * A + cross @ A + sys.const
        J = np.diag(2.0 * sys.quad * A + lin) + cross
        try:
            A = A - np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            break
    return A


def _root_vector(sys: QuadraticSystem, A: np.ndarray) -> RootVector:
    A = _polish(sys, np.asarray(A, dtype=complex))
    res = float(np.max(np.abs(sys.residual(A))))
    return RootVector(A=tuple(A), residual=res)


def _solve_linear(sys: QuadraticSystem) -> List[RootVector]:
    M = np.diag(sys.linear) + np.array(sys.cross)
    A = np.linalg.solve(M, -sys.const * np.ones(sys.m))
    return [_root_vector(sys, A.astype(complex))]


def _solve_m1(sys: QuadraticSystem) -> List[RootVector]:
    roots = np.polynomial.polynomial.polyroots([sys.const, sys.linear[0], sys.quad])
    return [_root_vector(sys, np.array([z], dtype=complex)) for z in roots]


def _solve_m2_coupled(sys: QuadraticSystem) -> List[RootVector]:
    """Eliminate A(2) from equation 1 (linear in A(2)), solve the resulting
    quartic in A(1) via companion-matrix eigenvalues, back-substitute."""
    a, c = sys.quad, sys.const
    b1, b2 = sys.linear
    q12, q21 = sys.cross[0][1], sys.cross[1][0]
    P = np.array([c, b1, a])                       # ascending coefficients of eq 1 in A(1)
    quart = a * np.polynomial.polynomial.polymul(P, P) / q12**2
    quart = np.pad(quart, (0, 5 - len(quart)))
    quart[:3] -= b2 * P / q12
    quart[1] += q21
    quart[0] += c
    roots1 = np.polynomial.polynomial.polyroots(quart)
    out = []
    for z1 in roots1:
        z2 = -(a * z1**2 + b1 * z1 + c) / q12
        out.append(_root_vector(sys, np.array([z1, z2], dtype=complex)))
    return out


def _solve_m2_decoupled(sys: QuadraticSystem) -> List[RootVector]:
    # cross[0][1] == 0: equation 1 is standalone; equation 2 is quadratic in A(2).
    a, c = sys.quad, sys.const
    b1, b2 = sys.linear
    q21 = sys.cross[1][0]
    out = []
    for z1 in np.polynomial.polynomial.polyroots([c, b1, a]):
        for z2 in np.polynomial.polynomial.polyroots([c + q21 * z1, b2, a]):
            out.append(_root_vector(sys, np.array([z1, z2], dtype=complex)))
    return out


def _solve_newton(sys: QuadraticSystem, rng_seed: int = 7) -> List[RootVector]:
    """Multistart damped Newton for m >= 3, seeded near the impact-free
    linear solution and over a log-spaced box."""
    rng = np.random.default_rng(rng_seed)
    lin = np.array(sys.linear, dtype=float)
    cross = np.array(sys.cross, dtype=float)
    starts = []
    try:
        base = np.linalg.solve(np.diag(lin) + cross, -sys.const * np.ones(sys.m))
        starts.append(base)
    except np.linalg.LinAlgError:
        base = np.ones(sys.m)
    scale = max(1.0, float(np.max(np.abs(base))))
    mags = np.geomspace(1e-2 * scale, 1e4 * scale, (_NEWTON_STARTS - 1) // 2)
    for mag in mags:
        starts.append(mag * rng.choice([-1.0, 1.0], size=sys.m) * rng.uniform(0.5, 1.5, size=sys.m))
        # complex starts: real-arithmetic Newton cannot leave the real axis,
        # so complex root vectors are reachable only from here
        phase = np.exp(2j * np.pi * rng.uniform(size=sys.m))
        starts.append(mag * phase * rng.uniform(0.5, 1.5, size=sys.m))

    found: List[np.ndarray] = []
    for A0 in starts:
        A = A0.astype(complex)
        ok = False
        for _ in range(80):
            F = sys.residual(A)
            if np.max(np.abs(F)) < 1e-12 * max(1.0, np.max(np.abs(A))):
                ok = True
                break
            J = np.diag(2.0 * sys.quad * A + lin) + cross
            try:
                step = np.linalg.solve(J, F)
            except np.linalg.LinAlgError:
                break
            t = 1.0
            base_norm = np.linalg.norm(F)
            while t > 1e-6:
                trial = A - t * step
                if np.linalg.norm(sys.residual(trial)) < base_norm:
                    A = trial
                    break
                t /= 2.0
            else:
                break
        if not ok:
            continue
        if not any(np.max(np.abs(A - B)) <= _DEDUP_TOL * (1.0 + np.max(np.abs(B))) for B in found):
            found.append(A)
    return [_root_vector(sys, A) for A in found]


def solve_all_roots(sys: QuadraticSystem) -> List[RootVector]:
    """Enumerate root vectors of the coupled system.

    For m = 2 with nonzero coupling this reduces to a quartic and returns
    at most four vectors; the result is sorted by the real part of A(1).
    """
    if sys.quad == 0.0:
        roots = _solve_linear(sys)
    elif sys.m == 1:
        roots = _solve_m1(sys)
    elif sys.m == 2:
        if sys.cross[0][1] != 0.0:
            roots = _solve_m2_coupled(sys)
        else:
            roots = _solve_m2_decoupled(sys)
    else:
        roots = _solve_newton(sys)

    # dedup (the quartic path can produce coincident roots at degeneracies)
    unique: List[RootVector] = []
    for rv in roots:
        A = np.array(rv.A)
        if not any(
            np.max(np.abs(A - np.array(u.A))) <= _DEDUP_TOL * (1.0 + np.max(np.abs(np.array(u.A))))
            for u in unique
        ):
            unique.append(rv)
    unique.sort(key=lambda rv: (rv.A[0].real, rv.A[0].imag))
    bad = [rv for rv in unique if rv.residual > _RESIDUAL_TOL * max(1.0, max(abs(a) for a in rv.A))]
    if bad:  # pragma: no cover - polishing keeps residuals far below the bound
        raise RuntimeError(f"root residuals exceed tolerance: {bad}")
    return unique


def select_admissible(roots: List[RootVector], model: MarketModel) -> Solution:
    """Pick the real root vector with nonnegative extraction rate for x >= 0,
    i.e. A(i) <= 1/(2*lambda) for all i; smallest Euclidean norm on ties."""
    if not roots:
        raise NoAdmissibleRootError(roots)
    lam = model.impact
    bound = np.inf if lam == 0.0 else 1.0 / (2.0 * lam)
    feasible = [rv for rv in roots if rv.is_real() and np.all(rv.real() <= bound)]
    if not feasible:
        raise NoAdmissibleRootError(roots)
    feasible.sort(key=lambda rv: np.linalg.norm(rv.real()))
    warnings = []
    if len(feasible) > 1:
        warnings.append(
            "multiple admissible root vectors; selected the smallest-norm one: "
            + "; ".join(str(list(rv.real())) for rv in feasible)
        )
    chosen = feasible[0]
    cost = model.cost
    return Solution(
        A=tuple(float(a) for a in chosen.real()),
        B=-cost.theta,
        C=-cost.bigK / cost.r,
        impact=lam,
        beta=cost.beta,
        theta=cost.theta,
        bigK=cost.bigK,
        r=cost.r,
        warnings=tuple(warnings),
    )
