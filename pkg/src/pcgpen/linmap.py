"""Linear operators with explicit adjoints.

The solver touches the coupling maps through three operations only:
forward application, adjoint application, and an estimate of the largest
eigenvalue of the Gram operator (the squared spectral norm), which is
used to majorize the curvature of the quadratic penalty.  Dense
matrices, scaled/negated identities and the zero map cover every problem
assembled in this package; dense entries are kept row-major (C order).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DENSE = "dense"
SCALED_IDENTITY = "scaled-identity"
NEGATED_IDENTITY = "negated-identity"
ZERO = "zero"

_KINDS = (DENSE, SCALED_IDENTITY, NEGATED_IDENTITY, ZERO)


@dataclass(frozen=True, eq=False)
class LinearMap:
    """Immutable linear operator between real coordinate spaces."""

    kind: str
    in_dim: int
    out_dim: int
    entries: np.ndarray | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown LinearMap kind {self.kind!r}")
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError("dimensions must be positive")
        if self.kind == DENSE:
            if self.entries is None:
                raise ValueError("dense map needs entries")
            if self.entries.shape != (self.out_dim, self.in_dim):
                raise ValueError("entries shape does not match declared dims")
        elif self.kind in (SCALED_IDENTITY, NEGATED_IDENTITY):
            if self.in_dim != self.out_dim:
                raise ValueError("identity-like maps must be square")

    # -- constructors -------------------------------------------------

    @classmethod
    def dense(cls, matrix) -> "LinearMap":
        entries = np.ascontiguousarray(np.asarray(matrix, dtype=float))
        if entries.ndim != 2:
            raise ValueError("dense map needs a 2-D matrix")
        entries.setflags(write=False)
        m, n = entries.shape
        return cls(DENSE, in_dim=n, out_dim=m, entries=entries)

    @classmethod
    def identity(cls, dim: int) -> "LinearMap":
        return cls(SCALED_IDENTITY, in_dim=dim, out_dim=dim, scale=1.0)

    @classmethod
    def scaled_identity(cls, dim: int, scale: float) -> "LinearMap":
        return cls(SCALED_IDENTITY, in_dim=dim, out_dim=dim, scale=float(scale))

    @classmethod
    def negated_identity(cls, dim: int) -> "LinearMap":
        return cls(NEGATED_IDENTITY, in_dim=dim, out_dim=dim, scale=-1.0)

    @classmethod
    def zero(cls, in_dim: int, out_dim: int) -> "LinearMap":
        return cls(ZERO, in_dim=in_dim, out_dim=out_dim, scale=0.0)

    # -- application --------------------------------------------------

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.in_dim,):
            raise ValueError(f"apply: expected vector of dim {self.in_dim}, got shape {x.shape}")
        if self.kind == DENSE:
            return self.entries @ x
        if self.kind == SCALED_IDENTITY:
            return self.scale * x
        if self.kind == NEGATED_IDENTITY:
            return -x
        return np.zeros(self.out_dim)

    def adjoint_apply(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.out_dim,):
            raise ValueError(f"adjoint_apply: expected vector of dim {self.out_dim}, got shape {w.shape}")
        if self.kind == DENSE:
            return self.entries.T @ w
        if self.kind == SCALED_IDENTITY:
            return self.scale * w
        if self.kind == NEGATED_IDENTITY:
            return -w
        return np.zeros(self.in_dim)

    def transpose(self) -> "LinearMap":
        """The adjoint as a LinearMap (transpose for dense matrices)."""
        if self.kind == DENSE:
            return LinearMap.dense(self.entries.T)
        if self.kind == ZERO:
            return LinearMap.zero(self.out_dim, self.in_dim)
        return self

    def __repr__(self):  # keep dense entries out of logs
        return f"LinearMap({self.kind}, {self.out_dim}x{self.in_dim})"


def lambda_max_sq(op: LinearMap, tol: float = 1e-10, max_iters: int = 5000,
                  seed: int = 0) -> float:
    """Largest eigenvalue of the Gram operator (adjoint composed with forward).

    Power iteration on A*A with a seeded random start vector; stops when
    the relative change of the Rayleigh quotient drops below ``tol``.
    The Rayleigh sequence of a PSD operator is nondecreasing along power
    iteration, which is enforced per iteration (up to roundoff).  The
    returned value is the raw estimate; consumers that need a guaranteed
    upper bound inflate it themselves (see ProblemSpec).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if op.kind == ZERO:
        return 0.0
    if op.kind in (SCALED_IDENTITY, NEGATED_IDENTITY):
        return float(op.scale) ** 2

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.in_dim)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        v = np.ones(op.in_dim)
        nrm = np.linalg.norm(v)
    v /= nrm

    rq_prev = -np.inf
    rq = 0.0
    for _ in range(max_iters):
        gv = op.adjoint_apply(op.apply(v))
        rq = float(v @ gv)
        if rq < rq_prev * (1.0 - 1e-12) - 1e-300:
            raise RuntimeError("power iteration Rayleigh quotient decreased")
        if abs(rq - rq_prev) <= tol * max(abs(rq), 1e-300):
            break
        rq_prev = rq
        gnrm = np.linalg.norm(gv)
        if gnrm == 0.0:
            return 0.0
        v = gv / gnrm
    return rq
