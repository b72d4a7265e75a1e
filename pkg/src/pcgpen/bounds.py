"""Complexity certificates for the penalty method.

Given schedule parameters, Hölder metadata, spectral bounds and domain
diameters, these routines evaluate a deterministic bound tau(t) on the
penalty-objective excess at iteration t, and a bound G(t) on the
feasibility violation.  The objective deviation from the optimum is then
bounded by max(tau(t), ||multiplier|| * G(t)).  All formulas are
monotone in the diameters, coupling bound and Hölder constants, so
feeding upper bounds keeps every certificate valid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional


@dataclass(frozen=True)
class BoundInputs:
    """Raw ingredients of the certificate.

    mu/nu are the Hölder exponents of the smooth parts on the prox/LO
    sides, m_f/m_g the matching Hölder constants, lambda_a/lambda_b the
    (upper-bounded) largest Gram eigenvalues of the coupling maps,
    d_f/d_g the domain diameters, d2 an upper bound on sup |<Ax, By>|,
    and theta twice the first-iterate penalty excess
    2*(f(x1)+g(y1)+(beta0/2)*||A x1 + B y1 - c||^2 - optimal value).
    The optimal value must come from an external reference; it is never
    estimated here.
    """

    beta0: float
    delta: float
    h0: float
    mu: float
    nu: float
    m_f: float
    m_g: float
    lambda_a: float
    lambda_b: float
    d_f: float
    d_g: float
    d2: float
    theta: float
    multiplier_norm: Optional[float] = None

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if not (0.0 < self.mu <= 1.0) or not (0.0 < self.nu <= 1.0):
            raise ValueError("mu and nu must lie in (0, 1]")
        for name in ("beta0", "h0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("m_f", "m_g", "lambda_a", "lambda_b", "d_f", "d_g",
                     "d2", "theta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class BoundReport:
    """Certificate constants plus the parameters needed to evaluate them.

    ``omega0`` and ``omega4`` only exist on the Hölder branch (mu < 1)
    and are None when the prox-side gradient is Lipschitz.
    """

    h_tilde: float
    omega0: Optional[float]
    omega1: float
    omega2: float
    omega3: float
    omega4: Optional[float]
    omega5: float
    beta0: float
    delta: float
    mu: float
    nu: float
    multiplier_norm: Optional[float] = None

    def tau(self, t: int) -> float:
        return tau(t, self)

    def feasibility_bound(self, t: int, multiplier_norm=None) -> float:
        return feasibility_bound(t, self, multiplier_norm)

    def objective_bound(self, t: int, multiplier_norm=None) -> float:
        return objective_bound(t, self, multiplier_norm)


def compute_constants(inputs: BoundInputs) -> BoundReport:
    """Evaluate the certificate constants from the raw ingredients."""
    h_tilde = max(inputs.h0, 2.0 * inputs.m_f / (inputs.mu + 1.0))
    omega1 = 2.0 ** (inputs.delta + 3.0) * inputs.beta0 * inputs.d2 + inputs.theta
    omega2 = (2.0 * inputs.lambda_a * inputs.d_f ** 2 * inputs.beta0
              + 2.0 * inputs.lambda_b * inputs.d_g ** 2 * inputs.beta0
              + (32.0 + 16.0 * inputs.delta) / (1.0 + inputs.delta)
              * inputs.d2 * inputs.beta0)
    omega3 = (2.0 ** (inputs.nu + 1.0) / (inputs.nu + 1.0)
              * inputs.m_g * inputs.d_g ** (inputs.nu + 1.0))
    omega5 = 2.0 * h_tilde * inputs.d_f ** 2
    if inputs.mu < 1.0:
        base = 2.0 * inputs.m_f / ((1.0 + inputs.mu) * h_tilde)
        omega0 = 4.0 * h_tilde * base ** (2.0 / (1.0 - inputs.mu))
        omega4 = 2.0 * h_tilde * inputs.d_f ** 2 + 2.0 * omega0
    else:
        omega0 = None
        omega4 = None
    return BoundReport(h_tilde=h_tilde, omega0=omega0, omega1=omega1,
                       omega2=omega2, omega3=omega3, omega4=omega4,
                       omega5=omega5, beta0=inputs.beta0, delta=inputs.delta,
                       mu=inputs.mu, nu=inputs.nu,
                       multiplier_norm=inputs.multiplier_norm)


def tau(t: int, report: BoundReport) -> float:
    """Bound on f(x_t)+g(y_t)+(beta_{t-1}/2)*||residual||^2 - optimum, t >= 2."""
    if t < 2:
        raise ValueError("the certificate applies for t >= 2 only")
    base = (report.omega1 / (t * (t + 1.0))
            + report.omega2 / (t + 1.0) ** (1.0 - report.delta)
            + report.omega3 / (t + 1.0) ** report.nu)
    if report.mu < 1.0:
        return base + report.omega4 / (t + 1.0) ** report.mu
    return base + report.omega5 / (t + 1.0)


def feasibility_bound(t: int, report: BoundReport,
                      multiplier_norm: Optional[float] = None) -> float:
    """Bound G(t) on ||A x_t + B y_t - c|| for t >= 2."""
    lam = report.multiplier_norm if multiplier_norm is None else multiplier_norm
    if lam is None:
        raise ValueError("a multiplier norm is required")
    if lam < 0:
        raise ValueError("multiplier norm must be nonnegative")
    beta_eff = report.beta0 * math.exp(report.delta * math.log(float(t)))
    tau_t = tau(t, report)
    return lam / beta_eff + math.sqrt((lam / beta_eff) ** 2 + 2.0 * tau_t / beta_eff)


def objective_bound(t: int, report: BoundReport,
                    multiplier_norm: Optional[float] = None) -> float:
    """Bound on |f(x_t)+g(y_t) - optimum| for t >= 2."""
    lam = report.multiplier_norm if multiplier_norm is None else multiplier_norm
    if lam is None:
        raise ValueError("a multiplier norm is required")
    return max(tau(t, report), lam * feasibility_bound(t, report, lam))


class DeltaChoice(NamedTuple):
    delta: float
    objective_exponent: float
    feasibility_exponent: float


def choose_delta(mu: float, nu: float) -> DeltaChoice:
    """Penalty growth exponent balancing the certificate decay rates.

    Returns delta together with the predicted decay exponents: the
    objective deviation decays like t**(-objective_exponent) and the
    feasibility violation like t**(-feasibility_exponent).  When
    min(mu, nu) >= 1/2 the choice delta = 1/2 balances both at 1/2;
    otherwise delta = 1 - min(mu, nu) retains the 1/2 feasibility rate
    while the objective rate drops to min(mu, nu).
    """
    if not (0.0 < mu <= 1.0) or not (0.0 < nu <= 1.0):
        raise ValueError("mu and nu must lie in (0, 1]")
    m = min(mu, nu)
    delta = 0.5 if m >= 0.5 else 1.0 - m
    exp1 = min(1.0 - delta, nu, mu)
    exp2 = min(delta, 0.5, (nu + delta) / 2.0, (mu + delta) / 2.0)
    return DeltaChoice(delta=delta, objective_exponent=exp1,
                       feasibility_exponent=exp2)


# ---------------------------------------------------------------------------
# serialization as '#'-prefixed key=value header lines
# ---------------------------------------------------------------------------

_REPORT_FIELDS = ("h_tilde", "omega0", "omega1", "omega2", "omega3", "omega4",
                  "omega5", "beta0", "delta", "mu", "nu", "multiplier_norm")


def report_header_lines(report: BoundReport) -> list[str]:
    lines = []
    for name in _REPORT_FIELDS:
        value = getattr(report, name)
        text = "n/a" if value is None else format(float(value), ".17g")
        lines.append(f"#bound.{name}={text}")
    return lines


def report_from_header_lines(lines) -> BoundReport:
    values = {}
    for line in lines:
        line = line.strip().lstrip("#")
        if not line.startswith("bound."):
            continue
        key, _, text = line.partition("=")
        name = key[len("bound."):]
        if name in _REPORT_FIELDS:
            values[name] = None if text == "n/a" else float(text)
    missing = [name for name in _REPORT_FIELDS if name not in values]
    if missing:
        raise ValueError(f"missing bound fields: {missing}")
    return BoundReport(**values)
