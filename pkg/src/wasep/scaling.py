"""Scaling plans for the accelerated weak asymmetry and their regime checks.

A plan fixes (d, n, a_n) with epsilon_n = 1/a_n exactly.  The dimensional
factor g_d(n) is n in d = 1, log n in d = 2 and 1 for d >= 3.

Two regime conditions are tracked, stated for a power rule
epsilon_n = n^p:

* lower (profile detectability):  g_d(n) << n^2 epsilon_n^2,
  i.e. p > -1/2 (d=1), p > -1 strictly because of the log factor (d=2),
  p > -1 (d>=3);
* upper (linear-term control):    n^2 epsilon_n^4 <= C0 g_d(n),
  i.e. p <= -1/4 (d=1), p <= -1/2 (d=2, the log^(1/4) factor only helps,
  and d>=3).

For plans built from a power rule the check is decided on exponents; the
report also carries finite-n margin ratios for both conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def g_dimensional(d: int, n: int) -> float:
    if d == 1:
        return float(n)
    if d == 2:
        return math.log(n)
    return 1.0


@dataclass(frozen=True)
class ScalingPlan:
    d: int
    n: int
    a_n: float
    epsilon_rule_exponent: float | None = None  # p when epsilon_n = n^p

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.a_n <= 0.0:
            raise ValueError("a_n must be positive")

    @property
    def epsilon(self) -> float:
        return 1.0 / self.a_n

    @property
    def g_d(self) -> float:
        return g_dimensional(self.d, self.n)

    @staticmethod
    def from_epsilon_rule(d: int, n: int, rule: str) -> "ScalingPlan":
        """Build a plan from a rule string, e.g. ``n_pow:-0.5`` or ``const:0.1``."""
        kind, _, arg = rule.partition(":")
        if kind == "n_pow":
            p = float(arg)
            eps = float(n) ** p
            return ScalingPlan(d, n, a_n=1.0 / eps, epsilon_rule_exponent=p)
        if kind == "const":
            eps = float(arg)
            return ScalingPlan(d, n, a_n=1.0 / eps)
        raise ValueError(f"unknown epsilon rule {rule!r}")


@dataclass(frozen=True)
class RegimeReport:
    d: int
    n: int
    epsilon: float
    clause: str  # 'a', 'b' or 'c'
    lower_ok: bool
    upper_ok: bool
    lower_margin: float  # n^2 eps^2 / g_d(n), want >> 1
    upper_margin: float  # n^2 eps^4 / g_d(n), want <= C0

    @property
    def passed(self) -> bool:
        return self.lower_ok and self.upper_ok

    def lines(self) -> list[str]:
        clause = {"a": "d=1", "b": "d=2", "c": "d>=3"}[self.clause]
        return [
            f"regime clause ({self.clause}) [{clause}]  n={self.n}  epsilon={self.epsilon:.6g}",
            f"  lower  g_d(n) << n^2 eps^2 : {'ok' if self.lower_ok else 'FAIL'}"
            f"  (margin ratio {self.lower_margin:.4g})",
            f"  upper  n^2 eps^4 <= C0 g_d(n) : {'ok' if self.upper_ok else 'FAIL'}"
            f"  (ratio {self.upper_margin:.4g})",
        ]


def scaling_check(plan: ScalingPlan, lower_margin_min: float = 1.0) -> RegimeReport:
    """Evaluate both regime conditions for the plan.

    When the plan records a power-rule exponent the verdict is decided on
    exponents (a strict inequality at the exponent level fails at equality);
    otherwise the finite-n margin ratios decide, with ``lower_margin_min``
    as the threshold for the strict condition.
    """
    eps = plan.epsilon
    lower_margin = plan.n**2 * eps**2 / plan.g_d
    upper_margin = plan.n**2 * eps**4 / plan.g_d
    clause = "a" if plan.d == 1 else ("b" if plan.d == 2 else "c")

    p = plan.epsilon_rule_exponent
    if p is not None:
        if plan.d == 1:
            lower_ok = p > -0.5
            upper_ok = p <= -0.25
        elif plan.d == 2:
            lower_ok = p > -1.0
            upper_ok = p <= -0.5
        else:
            lower_ok = p > -1.0
            upper_ok = p <= -0.5
    else:
        lower_ok = lower_margin > lower_margin_min
        upper_ok = True  # a constant C0 always exists at a single n; report the ratio
    return RegimeReport(
        d=plan.d,
        n=plan.n,
        epsilon=eps,
        clause=clause,
        lower_ok=lower_ok,
        upper_ok=upper_ok,
        lower_margin=lower_margin,
        upper_margin=upper_margin,
    )
