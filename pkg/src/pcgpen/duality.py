"""Dual machinery for the l1-minimization instance with a p-norm residual cap.

The problem ``min ||x||_1 s.t. ||Ax - b||_p <= sigma`` has the concave
dual ``max -<b, lam> - sigma*||lam||_q`` over ``||A^T lam||_inf <= 1``
with q the conjugate exponent of p.  The solver's penalty residual
scaled by the penalty weight is a natural dual candidate; projecting it
into the dual-feasible set yields certified lower bounds and a relative
primal-dual gap used for termination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import holder_conjugate, lp_norm
from .linmap import LinearMap


@dataclass(frozen=True)
class CsDualContext:
    """Data of one instance, with the conjugate exponent precomputed."""

    A: LinearMap
    b: np.ndarray
    sigma: float
    p: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not (1.0 < self.p <= 2.0):
            raise ValueError("p must lie in (1, 2]")
        if np.asarray(self.b).shape != (self.A.out_dim,):
            raise ValueError("b must match the output dim of A")
        if abs(self.q * (self.p - 1.0) - self.p) > 1e-12:
            raise ValueError("conjugate exponent inconsistent")

    @property
    def q(self) -> float:
        return holder_conjugate(self.p)


def dual_value(ctx: CsDualContext, lam: np.ndarray) -> float:
    """-<b, lam> - sigma*||lam||_q, evaluated whether or not lam is feasible."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != ctx.b.shape:
        raise ValueError("lam must match the dim of b")
    return float(-(ctx.b @ lam) - ctx.sigma * lp_norm(lam, ctx.q))


def feasible_dual_point(ctx: CsDualContext, x: np.ndarray, y: np.ndarray,
                        beta: float) -> np.ndarray:
    """Dual candidate beta*(Ax - b - y), rescaled into the feasible set.

    If ||A^T cand||_inf exceeds one the candidate is divided by that
    norm, which preserves its direction; a zero adjoint image leaves the
    candidate untouched (it is then feasible by convention).
    """
    cand = beta * (ctx.A.apply(np.asarray(x, dtype=float))
                   - ctx.b - np.asarray(y, dtype=float))
    return scale_into_dual_feasible(ctx, cand)


def scale_into_dual_feasible(ctx: CsDualContext, cand: np.ndarray) -> np.ndarray:
    sup = float(np.max(np.abs(ctx.A.adjoint_apply(cand)))) if cand.size else 0.0
    if sup <= 1.0:
        return cand
    return cand / sup


def relative_gap(ctx: CsDualContext, x: np.ndarray, lam: np.ndarray) -> float:
    """Relative primal-dual gap |‖x‖₁ + <b,lam> + sigma‖lam‖_q| / scale.

    The scale is max(primal value, |dual part|, 1), so the gap is always
    finite and nonnegative; ``lam`` is expected to be dual feasible.
    """
    primal = float(np.sum(np.abs(np.asarray(x, dtype=float))))
    dual_part = float(ctx.b @ np.asarray(lam, dtype=float)
                      + ctx.sigma * lp_norm(lam, ctx.q))
    numer = abs(primal + dual_part)
    denom = max(primal, abs(dual_part), 1.0)
    return numer / denom
