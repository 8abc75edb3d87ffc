"""Consistency checks: HJB residual, coefficient cross-checks, Monte-Carlo
comparison, and the reference-example reproduction report.

The residual of the closed-form candidate V(x,y,i) = A(i)x^2 + B y + C is
evaluated with the supremum over controls taken analytically (the
objective is quadratic in the control).  The y-dependent and constant
blocks are grouped as r*y*(B + theta) and r*(C + K/r) so that they cancel
exactly, not merely to rounding, whenever B and C carry their closed-form
values; the y-independence of the residual is still asserted numerically
at two reserve levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import levy, sim
from .model import MarketModel, InitialState, example_model
from .solver import Solution, build_system, select_admissible, solve_all_roots

__all__ = [
    "ResidualReport",
    "DiscrepancyReport",
    "McComparison",
    "hjb_residual",
    "coefficient_crosscheck",
    "mc_vs_value",
    "reference_report",
    "default_residual_grid",
]

_Y_PROBES = (0.0, 1e4)


def default_residual_grid() -> np.ndarray:
    """64 log-spaced prices covering the reference examples with headroom."""
    return np.geomspace(0.05, 20.0, 64)


@dataclass(frozen=True)
class ResidualReport:
    method: str
    grid: np.ndarray
    residual: np.ndarray   # (m, len(grid)) values of |H|
    max_abs: float
    y_gap: float           # worst |H(y1) - H(y0)| over the grid

    def max_scaled(self) -> float:
        """max of |H| / (1 + x^2) over the grid."""
        return float(np.max(self.residual / (1.0 + self.grid**2)))


def _jump_values(model: MarketModel, method: str) -> np.ndarray:
    if method == "semi_analytic":
        return np.array([levy.integral_closed_form(model.levy, g).value for g in model.gamma()])
    if method == "quadrature":
        return np.array([levy.integral_quadrature(model.levy, g).value for g in model.gamma()])
    raise ValueError(f"unknown residual method {method!r}")


def _residual_at(model, sol: Solution, jump, x: float, y: float, i: int) -> float:
    """H(x, y, i) = r V - sup_u (L^u V + x u - C(u, y)), sup taken analytically."""
    p = model.regimes[i - 1]
    c = model.cost
    lam = model.impact
    A = sol.A[i - 1]
    q = model.switch.q
    coupling = sum(q[i - 1][j] * (sol.A[j] - A) for j in range(model.m) if j != i - 1)
    s = x * (1.0 - 2.0 * lam * A) - (c.theta + sol.B)
    x2_block = x * x * (c.r * A - p.sigma**2 * A - 2.0 * p.mu * A - A * jump[i - 1] - coupling)
    return (x2_block - s * s / (4.0 * c.beta)
            + c.r * y * (sol.B + c.theta)
            + c.r * (sol.C + c.bigK / c.r))


def hjb_residual(model: MarketModel, sol: Solution, grid=None, method: str = "semi_analytic") -> ResidualReport:
    """Pointwise |H| of the candidate value function over a price grid, all regimes."""
    lam = model.impact
    if lam > 0.0 and any(a > 1.0 / (2.0 * lam) + 1e-12 for a in sol.A):
        raise ValueError("solution is not admissible: the analytic supremum is not the "
                         "nonnegative-rate optimizer")
    if grid is None:
        grid = default_residual_grid()
    grid = np.asarray(grid, dtype=float)
    jump = _jump_values(model, method)
    res = np.empty((model.m, len(grid)))
    y_gap = 0.0
    for i in range(1, model.m + 1):
        for k, x in enumerate(grid):
            h0 = _residual_at(model, sol, jump, x, _Y_PROBES[0], i)
            h1 = _residual_at(model, sol, jump, x, _Y_PROBES[1], i)
            y_gap = max(y_gap, abs(h1 - h0))
            res[i - 1, k] = abs(h0)
    return ResidualReport(method=method, grid=grid, residual=res,
                          max_abs=float(res.max()), y_gap=y_gap)


def coefficient_crosscheck(model: MarketModel) -> list:
    """Per regime: jump integral by closed form vs quadrature, and the
    assembled linear system coefficient both ways."""
    sys_cf = build_system(model, mode="formula")
    rows = []
    for i, p in enumerate(model.regimes, start=1):
        icf = levy.integral_closed_form(model.levy, p.gamma)
        iq = levy.integral_quadrature(model.levy, p.gamma)
        b_cf = sys_cf.linear[i - 1]
        rows.append({
            "regime": i,
            "gamma": p.gamma,
            "I_closed": icf.value,
            "I_quadrature": iq.value,
            "I_diff": abs(icf.value - iq.value),
            "linear_closed": b_cf,
            "linear_quadrature": b_cf - icf.value + iq.value,
        })
    return rows


@dataclass(frozen=True)
class McComparison:
    estimate: sim.PayoffEstimate
    value: float
    z_score: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate.to_dict(),
            "value": self.value,
            "z_score": self.z_score,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def mc_vs_value(model: MarketModel, sol: Solution, init: InitialState, cfg: sim.SimConfig) -> McComparison:
    """Simulate the feedback policy and compare the payoff estimate against
    the closed-form V; statistical and horizon-truncation error are both
    budgeted in the tolerance."""
    policy = sim.Policy.feedback(sol)
    est = sim.estimate_payoff(model, policy, init, cfg)
    v = sol.value_at(init.x0, init.y0, init.regime)
    gap = abs(est.mean - v)
    tol = max(3.0 * est.std_error, est.truncation_bound + 3.0 * est.std_error)
    z = gap / est.std_error if est.std_error > 0 else (0.0 if gap == 0.0 else math.inf)
    return McComparison(estimate=est, value=v, z_score=z, tolerance=tol, passed=gap <= tol)


# --- reference-example reproduction ----------------------------------------

def _classify_jump_term(model: MarketModel, regime: int, printed_jump: float) -> str:
    """Name the internal quantity that reproduces a published jump
    contribution (descriptive only; published tables carry 6 digits)."""
    p = model.regimes[regime - 1]
    g = p.gamma
    cands = {
        "closed-form jump integral": levy.integral_closed_form(model.levy, g).value,
        "quadrature jump integral": levy.integral_quadrature(model.levy, g).value,
    }
    if model.levy.kind == "exponential":
        eta = model.levy.eta
        cands["sign-flipped closed form 2g(g - eta(1+eta)e^-eta)/eta^2"] = (
            2.0 * g * (g - eta * (1.0 + eta) * math.exp(-eta)) / eta**2
        )
    if model.levy.kind == "symmetric":
        cands["intermediate constant 2g^2/e"] = 2.0 * g * g / math.e
    best = min(cands, key=lambda k: abs(cands[k] - printed_jump))
    if abs(cands[best] - printed_jump) < 5e-6:
        return best
    return "unclassified"


@dataclass
class DiscrepancyReport:
    example: int
    coefficient_rows: list
    published_roots: list
    solved_roots: list
    root_errors: list               # relative gap of each published pair to its solved match
    admissible_published: tuple
    admissible_solved: tuple
    yearly_rates: tuple
    daily_rates: tuple
    published_yearly_rates: tuple
    published_daily_rates: tuple
    value_functions: list           # per regime: (A, y coefficient, constant)
    formula_admissible: Optional[tuple]
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "example": self.example,
            "coefficients": self.coefficient_rows,
            "published_roots": [[_c2l(z) for z in pair] for pair in self.published_roots],
            "solved_roots": [[_c2l(z) for z in pair] for pair in self.solved_roots],
            "root_errors": self.root_errors,
            "admissible_published": list(self.admissible_published),
            "admissible_solved": list(self.admissible_solved),
            "yearly_rates": list(self.yearly_rates),
            "daily_rates": list(self.daily_rates),
            "published_yearly_rates": list(self.published_yearly_rates),
            "published_daily_rates": list(self.published_daily_rates),
            "value_functions": self.value_functions,
            "formula_admissible": list(self.formula_admissible) if self.formula_admissible else None,
            "notes": self.notes,
        }

    def to_text(self) -> str:
        lines = [f"Reference example {self.example}", "=" * 32]
        lines.append("linear coefficients (published vs formula):")
        for row in self.coefficient_rows:
            lines.append(
                f"  regime {row['regime']}: published {row['published']:.6f}  "
                f"formula {row['formula']:.6f}  quadrature {row['quadrature']:.6f}  "
                f"published jump term = {row['classification']}"
            )
        lines.append("root vectors (published / solved):")
        for pub, sol_, err in zip(self.published_roots, self.solved_roots, self.root_errors):
            lines.append(f"  {_fmt_pair(pub)}  /  {_fmt_pair(sol_)}  (rel gap {err:.2e})")
        lines.append(f"admissible vector: published {_fmt_pair(self.admissible_published)}"
                     f"  solved {_fmt_pair(self.admissible_solved)}")
        lines.append("yearly rates:  " + "  ".join(f"{v:.6g}*x" for v in self.yearly_rates))
        lines.append("daily rates:   " + "  ".join(f"{v:.6g}*x" for v in self.daily_rates))
        for i, (a, by, c0) in enumerate(self.value_functions, start=1):
            lines.append(f"V(x,y,{i}) = {a:.6g} x^2 + {by:.6g} y + {c0:.6g}")
        if self.formula_admissible:
            lines.append("formula-mode admissible vector: " + _fmt_pair(self.formula_admissible))
        for n in self.notes:
            lines.append("note: " + n)
        return "\n".join(lines)


def _c2l(z):
    z = complex(z)
    return [z.real, z.imag] if z.imag != 0 else z.real


def _fmt_pair(pair):
    return "(" + ", ".join(f"{complex(z).real:.6g}{complex(z).imag:+.6g}i" if complex(z).imag else f"{complex(z).real:.6g}"
                           for z in pair) + ")"


def _match_roots(published, solved):
    """Greedy nearest matching of published root vectors to solved ones;
    returns (ordered solved, relative gaps)."""
    remaining = list(solved)
    ordered, errs = [], []
    for pub in published:
        pv = np.array([complex(z) for z in pub])
        best = min(remaining, key=lambda rv: np.max(np.abs(np.array(rv.A) - pv)))
        remaining.remove(best)
        gap = float(np.max(np.abs(np.array(best.A) - pv) / np.maximum(1.0, np.abs(pv))))
        ordered.append(tuple(best.A))
        errs.append(gap)
    return ordered, errs


def reference_report(n: int) -> DiscrepancyReport:
    """Solve the published coefficient table for example ``n`` and lay it
    side by side with the formula-mode assembly; classify every coefficient
    difference.  Fixtures stay literal: nothing published is 'corrected'."""
    model, init, ref = example_model(n)
    c = model.cost
    lam = model.impact

    sys_ref = build_system(model, mode="reference", reference=ref)
    roots = solve_all_roots(sys_ref)
    sol = select_admissible(roots, model)
    sys_form = build_system(model, mode="formula")
    roots_form = solve_all_roots(sys_form)
    try:
        sol_form = select_admissible(roots_form, model)
        formula_admissible = sol_form.A
    except Exception:
        formula_admissible = None

    rows = []
    for i, p in enumerate(model.regimes, start=1):
        out_rate = model.switch.out_rate(i - 1)
        base = -c.r + p.sigma**2 + 2.0 * p.mu - lam / c.beta - out_rate
        printed = ref.linear[i - 1]
        iq = levy.integral_quadrature(model.levy, p.gamma).value
        rows.append({
            "regime": i,
            "published": printed,
            "formula": sys_form.linear[i - 1],
            "quadrature": base + iq,
            "published_minus_formula": printed - sys_form.linear[i - 1],
            "classification": _classify_jump_term(model, i, printed - base),
        })

    ordered, errs = _match_roots(ref.root_pairs, roots)

    pub_sol = Solution(A=tuple(ref.admissible), B=-c.theta, C=-c.bigK / c.r,
                       impact=lam, beta=c.beta, theta=c.theta, bigK=c.bigK, r=c.r)
    yearly = tuple(pub_sol.rate_at(1.0, i) for i in range(1, model.m + 1))
    daily = tuple(pub_sol.rate_at(1.0, i, period="daily") for i in range(1, model.m + 1))
    vfuncs = [(ref.admissible[i - 1], ref.value_linear_y, ref.value_const)
              for i in range(1, model.m + 1)]

    notes = [
        "published coefficients are 6-significant-digit literals; root gaps are relative",
        "the published linear coefficients differ from the closed-form assembly; "
        "see the per-regime classification of the published jump term",
    ]
    return DiscrepancyReport(
        example=n,
        coefficient_rows=rows,
        published_roots=[tuple(p) for p in ref.root_pairs],
        solved_roots=ordered,
        root_errors=errs,
        admissible_published=tuple(ref.admissible),
        admissible_solved=tuple(sol.A),
        yearly_rates=yearly,
        daily_rates=daily,
        published_yearly_rates=tuple(ref.yearly_rates),
        published_daily_rates=tuple(ref.daily_rates),
        value_functions=vfuncs,
        formula_admissible=formula_admissible,
        notes=notes,
    )
