"""Residual, cross-check, and reproduction-report behaviour."""

import math

import numpy as np
import pytest

from extractopt.model import example_model
from extractopt.sim import SimConfig
from extractopt.solver import Solution, build_system, select_admissible, solve_all_roots
from extractopt.verify import (
    coefficient_crosscheck,
    default_residual_grid,
    hjb_residual,
    mc_vs_value,
    reference_report,
)


def _with_A(sol, A):
    return Solution(A=tuple(A), B=sol.B, C=sol.C, impact=sol.impact,
                    beta=sol.beta, theta=sol.theta, bigK=sol.bigK, r=sol.r)


@pytest.mark.parametrize("method", ["semi_analytic", "quadrature"])
def test_residual_vanishes_for_formula_solutions(ex1, ex2, ex1_formula_solution,
                                                 ex2_formula_solution, method):
    for (model, _, _), sol in ((ex1, ex1_formula_solution), (ex2, ex2_formula_solution)):
        rep = hjb_residual(model, sol, method=method)
        assert rep.max_scaled() <= 1e-6
        assert rep.y_gap <= 1e-12


def test_residual_is_exactly_zero_at_origin(ex1, ex1_formula_solution):
    model, _, _ = ex1
    rep = hjb_residual(model, ex1_formula_solution, grid=np.array([0.0]))
    assert rep.max_abs == 0.0


def test_residual_methods_agree(ex1, ex1_formula_solution):
    model, _, _ = ex1
    r1 = hjb_residual(model, ex1_formula_solution, method="semi_analytic")
    r2 = hjb_residual(model, ex1_formula_solution, method="quadrature")
    assert np.max(np.abs(r1.residual - r2.residual)) <= 1e-6 * (1.0 + r1.grid.max() ** 2)


def test_residual_negative_control_published_vector(ex1, ex1_formula_solution):
    """The published admissible vector solves the published table, not the
    closed-form dynamics, so its residual must be visibly nonzero."""
    model, _, ref = ex1
    fake = _with_A(ex1_formula_solution, ref.admissible)
    rep = hjb_residual(model, fake)
    assert rep.max_abs >= 0.1


def test_residual_negative_control_perturbed_A(ex1, ex1_formula_solution):
    model, _, _ = ex1
    sol = ex1_formula_solution
    bumped = _with_A(sol, (sol.A[0] + 1.0, sol.A[1]))
    assert hjb_residual(model, bumped).max_abs > 1e-2


def test_residual_rejects_inadmissible_vector(ex1, ex1_formula_solution):
    model, _, _ = ex1
    too_big = _with_A(ex1_formula_solution, (600.0, 600.0))  # > 1/(2 lambda) = 500
    with pytest.raises(ValueError, match="not admissible"):
        hjb_residual(model, too_big)


def test_default_grid_covers_reference_range():
    g = default_residual_grid()
    assert len(g) == 64 and g[0] <= 0.05 and g[-1] >= 20.0


def test_coefficient_crosscheck_rows(ex1, ex2):
    for model, _, _ in (ex1, ex2):
        rows = coefficient_crosscheck(model)
        assert [r["regime"] for r in rows] == [1, 2]
        for r in rows:
            assert r["I_diff"] <= 1e-8 * max(1.0, abs(r["I_closed"]))
            assert r["linear_quadrature"] == pytest.approx(r["linear_closed"], abs=1e-8)


def test_mc_vs_value_passes_for_consistent_pair(ex1, ex1_formula_solution):
    model, init, _ = ex1
    cfg = SimConfig(horizon=200.0, scheme="exact", n_paths=4000, master_seed=13)
    cmp_ = mc_vs_value(model, ex1_formula_solution, init, cfg)
    assert cmp_.passed
    assert cmp_.tolerance >= cmp_.estimate.truncation_bound
    d = cmp_.to_dict()
    assert set(d) == {"estimate", "value", "z_score", "tolerance", "passed"}


def test_mc_vs_value_fails_for_shifted_value(ex1, ex1_formula_solution):
    """Shift C grossly: the claimed value moves but the simulated policy
    payoff does not, so the comparison must fail."""
    model, init, _ = ex1
    sol = ex1_formula_solution
    off = Solution(A=sol.A, B=sol.B, C=sol.C - 1e7, impact=sol.impact,
                   beta=sol.beta, theta=sol.theta, bigK=sol.bigK, r=sol.r)
    cfg = SimConfig(horizon=50.0, scheme="exact", n_paths=500, master_seed=13)
    cmp_ = mc_vs_value(model, off, init, cfg)
    assert not cmp_.passed


@pytest.mark.parametrize("n", [1, 2])
def test_reference_report_matches_published_tables(n):
    rep = reference_report(n)
    _, _, ref = example_model(n)
    assert rep.yearly_rates == pytest.approx(ref.yearly_rates, abs=1e-4)
    assert rep.daily_rates == pytest.approx(ref.daily_rates, abs=1e-6)
    assert max(rep.root_errors) <= 1e-3
    assert rep.admissible_solved == pytest.approx(ref.admissible, rel=1e-3)
    # every published linear coefficient is accounted for by a named quantity
    assert all(r["classification"] != "unclassified" for r in rep.coefficient_rows)
    expected = ("sign-flipped" if n == 1 else "intermediate constant")
    assert all(expected in r["classification"] for r in rep.coefficient_rows)


def test_reference_report_serializes(tmp_path):
    import json

    rep = reference_report(1)
    d = rep.to_dict()
    json.dumps(d)  # must be JSON-clean
    text = rep.to_text()
    assert "Reference example 1" in text
    assert "59.178" in text and "4809.48" in text
    assert "0.0120773" in text


def test_reference_report_formula_mode_is_reported():
    rep1 = reference_report(1)
    assert rep1.formula_admissible is not None
    assert rep1.formula_admissible[0] < 0  # formula-mode curvature is negative here
    rep2 = reference_report(2)
    assert rep2.formula_admissible == pytest.approx((452.6601336217677, 360.5928214346377),
                                                    rel=1e-8)
