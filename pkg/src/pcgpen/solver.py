"""Single-loop penalty method mixing proximal-gradient and conditional-gradient steps.

Each iteration works on the quadratic penalty of the coupling constraint
with the current penalty weight: one proximal-gradient step updates the
prox-friendly variable, one conditional-gradient step (toward a linear
oracle point, with step 2/(t+2)) updates the oracle-friendly variable,
and the penalty weight then grows like beta0*(t+1)**delta.  There are no
inner loops; the smoothing weight H_t grows like t**(1-mu) to absorb a
merely Hölder-continuous gradient on the prox side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .blocks import ProblemSpec

STOP_GAP = "gap-and-feasibility"
STOP_SMALL_STEPS = "small-steps"
STOP_ITERATION_CAP = "iteration-cap"
STOP_USER = "user"


class SolverAbort(RuntimeError):
    """Raised when an iterate stops being finite or leaves its domain."""

    def __init__(self, t: int, message: str):
        super().__init__(f"solver aborted at t={t}: {message}")
        self.t = t


@dataclass(frozen=True)
class SolverConfig:
    """Schedule parameters and termination thresholds.

    Defaults mirror the compressed-sensing experiments: delta = 0.5,
    H0 = 1e-4, at most 10000 iterations, relative duality-gap threshold
    0.05, relative feasibility threshold 0.005 and step threshold 1e-6.
    """

    beta0: float
    delta: float = 0.5
    h0: float = 1e-4
    max_iters: int = 10000
    step_tol: float = 1e-6
    gap_tol: float = 0.05
    feas_tol_rel: float = 0.005
    record_every: int = 1

    def __post_init__(self):
        if self.beta0 <= 0:
            raise ValueError("beta0 must be positive")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if self.h0 <= 0:
            raise ValueError("H0 must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


def schedules(t: int, cfg: SolverConfig, mu: float, m_f: float):
    """Step-size, penalty weight and smoothing weight at iteration t.

    alpha_t = 2/(t+2); beta_t = beta0*(t+1)**delta; H_0 is the chosen
    initial value and H_t = max(H0, 2*M_f/(mu+1)) * t**(1-mu) for t >= 1.
    Powers are evaluated as exp(e*log(base)) so results are identical
    across call sites.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    alpha = 2.0 / (t + 2.0)
    beta = cfg.beta0 * math.exp(cfg.delta * math.log(t + 1.0))
    if t == 0:
        h = cfg.h0
    else:
        h = max(cfg.h0, 2.0 * m_f / (mu + 1.0)) * math.exp((1.0 - mu) * math.log(float(t)))
    return alpha, beta, h


@dataclass
class SolverState:
    """Iterate pair plus the schedule values that currently apply to it."""

    t: int
    x: np.ndarray
    y: np.ndarray
    beta: float
    h: float
    lambda_a: float
    residual: np.ndarray


@dataclass
class StepInfo:
    """Everything one iteration computed, for terminators and metrics.

    ``residual_prev`` is the constraint residual of the incoming pair
    and ``adj_residual_prev`` its image under the adjoint of A (both are
    byproducts of the proximal-gradient step).  ``ax_new`` caches the
    image of the new x under A.
    """

    t: int                      # index of the *new* state
    alpha: float
    beta: float
    h: float
    x_prev: np.ndarray
    y_prev: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    residual_prev: np.ndarray
    adj_residual_prev: np.ndarray
    ax_new: np.ndarray
    residual_mid: np.ndarray
    residual_new: np.ndarray
    dx_norm: float
    dy_norm: float


def initial_state(spec: ProblemSpec, cfg: SolverConfig,
                  x0: np.ndarray, y0: np.ndarray) -> SolverState:
    x0 = np.asarray(x0, dtype=float).copy()
    y0 = np.asarray(y0, dtype=float).copy()
    if not spec.f2.contains(x0):
        raise ValueError("x0 lies outside the domain of f")
    if not spec.g2.contains(y0):
        raise ValueError("y0 lies outside the domain of g")
    _, beta, h = schedules(0, cfg, spec.f1.holder_exponent, spec.f1.holder_constant)
    residual = spec.residual(x0, y0)
    return SolverState(t=0, x=x0, y=y0, beta=beta, h=h,
                       lambda_a=spec.lambda_a, residual=residual)


def step_with_info(state: SolverState, spec: ProblemSpec,
                   cfg: SolverConfig) -> tuple[SolverState, StepInfo]:
    """One full iteration; returns the new state and its byproducts."""
    mu = spec.f1.holder_exponent
    m_f = spec.f1.holder_constant
    alpha, beta, h = schedules(state.t, cfg, mu, m_f)

    by = spec.B.apply(state.y)
    residual = spec.A.apply(state.x) + by - spec.c
    adj_residual = spec.A.adjoint_apply(residual)

    denom = h + spec.lambda_a * beta
    direction = spec.f1.grad(state.x) + beta * adj_residual
    x_new = spec.f2.prox(state.x - direction / denom, 1.0 / denom)

    ax_new = spec.A.apply(x_new)
    residual_mid = ax_new + by - spec.c
    v = spec.g1.grad(state.y) + beta * spec.B.adjoint_apply(residual_mid)
    u = spec.g2.lo(v)
    y_new = state.y + alpha * (u - state.y)
    # exact by linearity of B; the next step recomputes its own residual
    residual_new = residual_mid + spec.B.apply(y_new - state.y)

    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(y_new))
            and np.all(np.isfinite(residual_new))):
        raise SolverAbort(state.t, "non-finite value in iterate or residual")

    _, beta_next, h_next = schedules(state.t + 1, cfg, mu, m_f)
    new_state = SolverState(t=state.t + 1, x=x_new, y=y_new,
                            beta=beta_next, h=h_next,
                            lambda_a=state.lambda_a, residual=residual_new)
    info = StepInfo(t=state.t + 1, alpha=alpha, beta=beta, h=h,
                    x_prev=state.x, y_prev=state.y, x=x_new, y=y_new, u=u,
                    residual_prev=residual, adj_residual_prev=adj_residual,
                    ax_new=ax_new, residual_mid=residual_mid,
                    residual_new=residual_new,
                    dx_norm=float(np.linalg.norm(x_new - state.x)),
                    dy_norm=float(np.linalg.norm(y_new - state.y)))
    return new_state, info


def step(state: SolverState, spec: ProblemSpec, cfg: SolverConfig) -> SolverState:
    new_state, _ = step_with_info(state, spec, cfg)
    return new_state


def terminate_small_steps(prev: SolverState, new: SolverState, tol: float) -> bool:
    """True when both update norms fall at or below ``tol``."""
    dx = float(np.linalg.norm(new.x - prev.x))
    dy = float(np.linalg.norm(new.y - prev.y))
    return max(dx, dy) <= tol


def make_small_step_terminator(tol: float) -> Callable[[StepInfo], Optional[str]]:
    def term(info: StepInfo) -> Optional[str]:
        if max(info.dx_norm, info.dy_norm) <= tol:
            return STOP_SMALL_STEPS
        return None
    return term


# ---------------------------------------------------------------------------
# per-iteration trace
# ---------------------------------------------------------------------------

TRACE_COLUMNS = ("t", "alpha", "beta", "H", "obj", "feas2", "dx", "dy",
                 "gap_r", "dual", "dist_ref")


@dataclass
class IterTrace:
    """Column store of per-iteration records.

    Optional columns (gap_r, dual, dist_ref) hold None when a record did
    not supply them; they serialize as empty CSV fields.
    """

    rows: list = field(default_factory=list)

    def append(self, t, alpha, beta, h, obj, feas2, dx, dy,
               gap_r=None, dual=None, dist_ref=None):
        if self.rows and t <= self.rows[-1][0]:
            raise ValueError("trace indices must be strictly increasing")
        self.rows.append((t, alpha, beta, h, obj, feas2, dx, dy,
                          gap_r, dual, dist_ref))

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        """Column as a float array; missing optional entries become NaN."""
        idx = TRACE_COLUMNS.index(name)
        return np.array([np.nan if row[idx] is None else float(row[idx])
                         for row in self.rows])

    def to_csv(self, path, metadata_lines: Iterable[str] = ()):
        """UTF-8, LF-terminated CSV with '#'-prefixed metadata lines."""
        def fmt(v):
            return "" if v is None else format(float(v), ".17g")

        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in metadata_lines:
                if not line.startswith("#"):
                    line = "#" + line
                fh.write(line.rstrip("\n") + "\n")
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for row in self.rows:
                fh.write(f"{row[0]}," + ",".join(fmt(v) for v in row[1:]) + "\n")


# ---------------------------------------------------------------------------
# driver loop
# ---------------------------------------------------------------------------

def _record(trace, spec, state, dx, dy, extra):
    if not spec.f2.contains(state.x):
        raise SolverAbort(state.t, "x left the domain of f")
    if not spec.g2.contains(state.y):
        raise SolverAbort(state.t, "y left the domain of g")
    alpha = 2.0 / (state.t + 2.0)
    obj = spec.objective(state.x, state.y)
    feas = float(np.linalg.norm(state.residual))
    extra = extra or {}
    trace.append(state.t, alpha, state.beta, state.h, obj, feas, dx, dy,
                 gap_r=extra.get("gap_r"), dual=extra.get("dual"),
                 dist_ref=extra.get("dist_ref"))


def run(spec: ProblemSpec, cfg: SolverConfig, x0: np.ndarray, y0: np.ndarray,
        terminators: Optional[Sequence[Callable[[StepInfo], Optional[str]]]] = None,
        metrics: Optional[Callable[[StepInfo], dict]] = None,
        callback: Optional[Callable[[StepInfo], None]] = None):
    """Iterate until a terminator fires or the iteration cap is reached.

    ``terminators`` is a sequence of callables mapping a StepInfo to a
    stop reason string (or None); pass an empty sequence to disable all
    early stopping, or None for the default small-step test at
    ``cfg.step_tol``.  ``metrics`` may attach gap_r/dual/dist_ref values
    to recorded rows.  Returns (final state, trace, stop_reason); domain
    membership of the iterates is asserted at every recorded row.
    """
    if terminators is None:
        terminators = [make_small_step_terminator(cfg.step_tol)]

    state = initial_state(spec, cfg, x0, y0)
    trace = IterTrace()
    _record(trace, spec, state, 0.0, 0.0, None)

    stop_reason = STOP_ITERATION_CAP
    for _ in range(cfg.max_iters):
        state, info = step_with_info(state, spec, cfg)
        if callback is not None:
            callback(info)
        reason = None
        for term in terminators:
            reason = term(info)
            if reason is not None:
                break
        should_record = (state.t % cfg.record_every == 0) or reason is not None
        if should_record:
            extra = metrics(info) if metrics is not None else None
            _record(trace, spec, state, info.dx_norm, info.dy_norm, extra)
        if reason is not None:
            stop_reason = reason
            break
    return state, trace, stop_reason
