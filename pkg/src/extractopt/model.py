"""Problem data for resource extraction under regime-switching jump-diffusion prices.

Units convention (repo-wide): prices in currency per unit, reserves in
millions of units, time in years.  Regime indices are 1-based in every
public interface and 0-based in internal arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "RegimeParams",
    "SwitchGenerator",
    "LevyMeasureSpec",
    "CostParams",
    "MarketModel",
    "InitialState",
    "ReferenceTable",
    "ValidationReport",
    "validate",
    "example_model",
    "load_config",
    "dump_config",
]

_ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class RegimeParams:
    """Price dynamics in one market regime."""

    mu: float       # drift rate, 1/year
    sigma: float    # volatility, 1/sqrt(year)
    gamma: float    # jump intensity multiplier, dimensionless


@dataclass(frozen=True)
class SwitchGenerator:
    """Generator matrix of the regime chain (rates per year)."""

    q: tuple  # m x m, rows sum to zero

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(tuple(float(v) for v in row) for row in self.q))

    @property
    def m(self) -> int:
        return len(self.q)

    def as_array(self) -> np.ndarray:
        return np.array(self.q, dtype=float)

    def out_rate(self, i: int) -> float:
        """Total switching rate out of 0-based state ``i``."""
        return sum(v for j, v in enumerate(self.q[i]) if j != i)


@dataclass(frozen=True)
class LevyMeasureSpec:
    """Jump-size measure.

    ``kind`` is one of ``"exponential"`` (density eta*exp(-eta*z) on z>0,
    finite activity), ``"symmetric"`` (density exp(-|z|)/z^2 on z != 0,
    infinite activity), ``"none"`` (no jumps), or ``"tabulated"`` (user
    density hook, quadrature only).
    """

    kind: str
    eta: Optional[float] = None
    density: Optional[Callable[[float], float]] = None
    symmetric_density: bool = False

    @classmethod
    def exponential(cls, eta: float) -> "LevyMeasureSpec":
        return cls(kind="exponential", eta=float(eta))

    @classmethod
    def symmetric(cls) -> "LevyMeasureSpec":
        return cls(kind="symmetric")

    @classmethod
    def none(cls) -> "LevyMeasureSpec":
        return cls(kind="none")

    @classmethod
    def tabulated(cls, density: Callable[[float], float], symmetric: bool = False) -> "LevyMeasureSpec":
        return cls(kind="tabulated", density=density, symmetric_density=symmetric)


@dataclass(frozen=True)
class CostParams:
    """Extraction cost C(u, y) = beta*u^2 + theta*u + r*theta*y + K."""

    beta: float   # currency * year / unit^2
    theta: float  # currency / unit
    bigK: float   # currency / year
    r: float      # discount rate, 1/year


@dataclass(frozen=True)
class MarketModel:
    """Full problem instance."""

    regimes: tuple            # tuple of RegimeParams, length m
    switch: SwitchGenerator
    levy: LevyMeasureSpec
    cost: CostParams
    impact: float             # price impact factor, in [0, 1)
    control_bounds: Optional[tuple] = None  # (lo, hi) or None for unbounded

    def __post_init__(self):
        object.__setattr__(self, "regimes", tuple(self.regimes))

    @property
    def m(self) -> int:
        return len(self.regimes)

    def mu(self) -> np.ndarray:
        return np.array([p.mu for p in self.regimes])

    def sigma(self) -> np.ndarray:
        return np.array([p.sigma for p in self.regimes])

    def gamma(self) -> np.ndarray:
        return np.array([p.gamma for p in self.regimes])


@dataclass(frozen=True)
class InitialState:
    x0: float      # initial price
    y0: float      # initial reserve, millions of units
    regime: int    # initial regime, 1-based


@dataclass(frozen=True)
class ReferenceTable:
    """Literal coefficient/root/rate table for a bundled example.

    Values are kept byte-identical to the published 6-significant-digit
    source; they are regression anchors, never recomputed.
    """

    linear: tuple            # linear coefficient of the coupled system, per regime
    quad: float              # quadratic coefficient (same in every regime)
    cross: tuple             # off-diagonal coupling, per regime
    const: float             # constant term
    root_pairs: tuple        # all printed root vectors (complex entries allowed)
    admissible: tuple        # the selected root vector
    yearly_rates: tuple      # feedback rate slope per regime (per year)
    daily_rates: tuple       # feedback rate slope per regime (per day)
    value_linear_y: float    # coefficient of y in the value function
    value_const: float       # constant term of the value function


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _finite(x) -> bool:
    try:
        return bool(np.isfinite(x))
    except TypeError:
        return False


def validate(model: MarketModel) -> ValidationReport:
    """Check every model invariant; returns a report, never raises.

    Also emits a discounted-growth warning for regimes whose linear
    system coefficient is nonnegative (the coupled system may then lack
    a stabilizing root; see solver).
    """
    rep = ValidationReport()
    v = rep.violations

    if model.m < 1:
        v.append("at least one regime required")
        return rep

    for k, p in enumerate(model.regimes, start=1):
        for name in ("mu", "sigma", "gamma"):
            if not _finite(getattr(p, name)):
                v.append(f"regime {k}: {name} must be finite")
        if _finite(p.sigma) and p.sigma < 0:
            v.append(f"regime {k}: sigma >= 0 required")

    q = model.switch.q
    if len(q) != model.m or any(len(row) != model.m for row in q):
        v.append("generator dimension must equal number of regimes")
    else:
        for i, row in enumerate(q, start=1):
            if any(not _finite(x) for x in row):
                v.append(f"generator row {i}: entries must be finite")
                continue
            if any(x < 0 for j, x in enumerate(row) if j != i - 1):
                v.append(f"generator row {i}: off-diagonal entries >= 0 required")
            if abs(sum(row)) > _ROW_SUM_TOL:
                v.append(f"generator row {i}: row sum nonzero")

    lv = model.levy
    if lv.kind not in ("exponential", "symmetric", "none", "tabulated"):
        v.append(f"unknown jump measure kind {lv.kind!r}")
    elif lv.kind == "exponential" and not (lv.eta is not None and _finite(lv.eta) and lv.eta > 0):
        v.append("exponential jump measure: eta > 0 required")
    elif lv.kind == "tabulated":
        if lv.density is None:
            v.append("tabulated jump measure: density required")
        else:
            from . import levy as _levy

            if not _levy.integrability_check(lv):
                v.append("jump measure violates min(z^2,1) integrability")

    c = model.cost
    if not (_finite(c.beta) and c.beta > 0):
        v.append("beta > 0 required")
    if not (_finite(c.theta) and c.theta > 0):
        v.append("theta > 0 required")
    if not (_finite(c.bigK) and c.bigK >= 0):
        v.append("K >= 0 required")
    if not (_finite(c.r) and c.r > 0):
        v.append("r > 0 required")

    if not (_finite(model.impact) and 0 <= model.impact < 1):
        v.append("impact factor must lie in [0, 1)")

    if model.control_bounds is not None:
        lo, hi = model.control_bounds
        if not (lo <= hi):
            v.append("control bounds must satisfy lo <= hi")

    if rep.ok and lv.kind in ("exponential", "symmetric", "none"):
        from . import solver as _solver

        try:
            sys = _solver.build_system(model, mode="formula", _skip_validation=True)
        except Exception:  # pragma: no cover - formula mode failed, nothing to warn about
            sys = None
        if sys is not None:
            for i, b in enumerate(sys.linear, start=1):
                if b >= 0:
                    rep.warnings.append(
                        f"regime {i}: linear coefficient {b:.6g} >= 0 "
                        "(discounted growth may dominate; admissible root not guaranteed)"
                    )
    return rep


# --- bundled examples -------------------------------------------------------
#
# Two-regime oil-field instance: uptrend/downtrend chain, quadratic cost
# 0.1 u^2 + 0.01 u + 0.0002 y + 10, discount 2%/year, 10 billion barrels
# initial reserve (stored as 1e4 millions).  Example 1 uses the exponential
# finite-activity measure with eta = 1, example 2 the symmetric
# infinite-activity measure; everything else is identical.

_REFERENCE = {
    1: ReferenceTable(
        linear=(-0.281405, -0.682346),
        quad=0.00001,
        cross=(0.3, 0.5),
        const=2.5,
        root_pairs=(
            (59.178, 47.0599),
            (4809.48, 3732.01),
            (complex(25706, -43909), complex(66345, 34062)),
            (complex(25706, 43909), complex(66345, -34062)),
        ),
        admissible=(59.178, 47.0599),
        yearly_rates=(4.40822, 4.5294),
        daily_rates=(0.0120773, 0.0124093),
        value_linear_y=-0.01,
        value_const=-500.0,
    ),
    2: ReferenceTable(
        linear=(-0.249644, -0.639338),
        quad=0.00001,
        cross=(0.3, 0.5),
        const=2.5,
        root_pairs=(
            (350.638, 279.35),
            (808.633, 642.772),
            (complex(24384.8, -43477.5), complex(63472.7, 34499.6)),
            (complex(24384.8, 43477.5), complex(63472.7, -34499.6)),
        ),
        admissible=(350.638, 279.35),
        yearly_rates=(1.49362, 2.2065),
        daily_rates=(0.00409212, 0.0060452),
        value_linear_y=-0.01,
        value_const=-500.0,
    ),
}


def example_model(n: int):
    """Return (MarketModel, InitialState, ReferenceTable) for bundled example ``n``.

    ``n=1`` is the finite-activity (exponential) case, ``n=2`` the
    infinite-activity (symmetric) case.
    """
    if n not in (1, 2):
        raise ValueError(f"example id must be 1 or 2, got {n!r}")
    levy = LevyMeasureSpec.exponential(1.0) if n == 1 else LevyMeasureSpec.symmetric()
    model = MarketModel(
        regimes=(
            RegimeParams(mu=0.02, sigma=0.2, gamma=0.022),
            RegimeParams(mu=-0.1, sigma=0.3, gamma=0.03),
        ),
        switch=SwitchGenerator(q=((-0.3, 0.3), (0.5, -0.5))),
        levy=levy,
        cost=CostParams(beta=0.1, theta=0.01, bigK=10.0, r=0.02),
        impact=0.001,
        control_bounds=None,
    )
    init = InitialState(x0=1.0, y0=10000.0, regime=1)
    return model, init, _REFERENCE[n]


# --- JSON config ------------------------------------------------------------

def _model_from_dict(d: dict):
    regimes = tuple(RegimeParams(p["mu"], p["sigma"], p["gamma"]) for p in d["regimes"])
    lv = d["levy"]
    kind = lv["kind"]
    if kind == "exponential":
        levy = LevyMeasureSpec.exponential(lv["eta"])
    elif kind == "symmetric":
        levy = LevyMeasureSpec.symmetric()
    elif kind == "none":
        levy = LevyMeasureSpec.none()
    else:
        raise ValueError(f"config: unsupported levy kind {kind!r}")
    cost = d["cost"]
    cb = d.get("control_bounds")
    model = MarketModel(
        regimes=regimes,
        switch=SwitchGenerator(q=tuple(tuple(row) for row in d["generator"])),
        levy=levy,
        cost=CostParams(cost["beta"], cost["theta"], cost["K"], cost["r"]),
        impact=d["lambda"],
        control_bounds=tuple(cb) if cb is not None else None,
    )
    ini = d.get("initial")
    init = InitialState(ini["x0"], ini["y0"], ini["i0"]) if ini else None
    return model, init


def load_config(path) -> tuple:
    """Load a (MarketModel, InitialState | None) pair from a JSON config file."""
    with open(path) as fh:
        return _model_from_dict(json.load(fh))


def dump_config(model: MarketModel, init: Optional[InitialState] = None) -> dict:
    d = {
        "regimes": [{"mu": p.mu, "sigma": p.sigma, "gamma": p.gamma} for p in model.regimes],
        "generator": [list(row) for row in model.switch.q],
        "levy": {"kind": model.levy.kind, **({"eta": model.levy.eta} if model.levy.eta is not None else {})},
        "cost": {
            "beta": model.cost.beta,
            "theta": model.cost.theta,
            "K": model.cost.bigK,
            "r": model.cost.r,
        },
        "lambda": model.impact,
        "control_bounds": list(model.control_bounds) if model.control_bounds else None,
    }
    if init is not None:
        d["initial"] = {"x0": init.x0, "y0": init.y0, "i0": init.regime}
    return d


def write_fixture_configs(directory) -> list:
    """Write the two bundled example configs as JSON files; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for n in (1, 2):
        model, init, _ = example_model(n)
        p = directory / f"example{n}.json"
        with open(p, "w") as fh:
            json.dump(dump_config(model, init), fh, indent=2)
            fh.write("\n")
        out.append(p)
    return out
