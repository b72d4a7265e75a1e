"""Problem building blocks and the assembled problem record.

A problem is ``minimize f1(x)+f2(x)+g1(y)+g2(y) subject to Ax+By=c``
where the smooth parts carry Hölder metadata for their gradients, the
first nonsmooth part exposes a proximal mapping, and the second exposes
a linear minimization oracle.  Both nonsmooth parts have bounded
domains; the diameters feed the complexity certificates in
:mod:`pcgpen.bounds`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linmap import LinearMap, lambda_max_sq

# Safety inflation applied to spectral estimates so that derived step
# sizes and certificate constants stay valid upper bounds.
SPECTRAL_INFLATION = 1.0 + 1e-6


# ---------------------------------------------------------------------------
# numeric helpers shared by the closed-form oracles
# ---------------------------------------------------------------------------

def soft_threshold(u: np.ndarray, thresh: float) -> np.ndarray:
    """Componentwise shrinkage toward zero by ``thresh``."""
    return np.sign(u) * np.maximum(np.abs(u) - thresh, 0.0)


def signed_power(v: np.ndarray, exponent: float) -> np.ndarray:
    """sign(v) * |v|**exponent with explicit zero handling.

    Powers are evaluated as exp(exponent*log|v|) so that fractional
    exponents below one stay NaN-free at exact zeros.
    """
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    nz = v != 0.0
    out[nz] = np.sign(v[nz]) * np.exp(exponent * np.log(np.abs(v[nz])))
    return out


def lp_norm(v: np.ndarray, p: float) -> float:
    """The p-norm for p >= 1, scaled for overflow safety."""
    v = np.asarray(v, dtype=float)
    m = float(np.max(np.abs(v))) if v.size else 0.0
    if m == 0.0:
        return 0.0
    scaled = np.abs(v) / m
    nz = scaled > 0.0
    total = float(np.sum(np.exp(p * np.log(scaled[nz]))))
    return m * float(np.exp(np.log(total) / p))


def holder_conjugate(p: float) -> float:
    """Exponent q with 1/p + 1/q = 1."""
    return p / (p - 1.0)


# ---------------------------------------------------------------------------
# closed-form oracles used by the compressed-sensing reformulation
# ---------------------------------------------------------------------------

def prox_l1_box(u: np.ndarray, gamma: float, radius: float) -> np.ndarray:
    """Proximal mapping of gamma*||.||_1 plus the box indicator.

    Equals soft-thresholding by ``gamma`` followed by projection onto
    the sup-norm ball of the given radius; ``gamma = 0`` degenerates to
    the pure projection.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if radius <= 0:
        raise ValueError("radius must be positive")
    return np.clip(soft_threshold(np.asarray(u, dtype=float), gamma), -radius, radius)


def lo_lp_ball(v: np.ndarray, sigma: float, p: float) -> np.ndarray:
    """Linear minimization oracle of the p-norm ball of radius sigma.

    Returns an argmin of <v, u> over ||u||_p <= sigma for p in (1, 2].
    The zero input returns the zero vector; any nonzero input lands
    exactly on the sphere ||u||_p = sigma.  The output depends on the
    direction of ``v`` only.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if not (1.0 < p <= 2.0):
        raise ValueError("p must lie in (1, 2]")
    v = np.asarray(v, dtype=float)
    m = float(np.max(np.abs(v))) if v.size else 0.0
    if m == 0.0:
        return np.zeros_like(v)
    q = holder_conjugate(p)
    vh = v / m  # the oracle is scale invariant; normalize for stability
    num = signed_power(vh, q - 1.0)
    den = float(np.exp((q / p) * np.log(lp_norm(vh, q))))
    return -sigma * num / den


# ---------------------------------------------------------------------------
# block records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothBlock:
    """Real-valued convex smooth term with a Hölder-continuous gradient.

    ``holder_exponent`` is the exponent in (0, 1] (1 means Lipschitz
    gradient) and ``holder_constant`` an upper bound on the matching
    Hölder constant of the gradient.
    """

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    holder_exponent: float
    holder_constant: float

    def __post_init__(self):
        if not (0.0 < self.holder_exponent <= 1.0):
            raise ValueError("holder_exponent must lie in (0, 1]")
        if self.holder_constant < 0:
            raise ValueError("holder_constant must be nonnegative")


@dataclass(frozen=True)
class ProxBlock:
    """Nonsmooth convex term with an efficient proximal mapping.

    ``prox(u, gamma)`` returns the minimizer of ||x-u||^2/(2*gamma) plus
    the term; the domain is bounded with the recorded diameter and
    radius (largest Euclidean norm over the domain).
    """

    value: Callable[[np.ndarray], float]
    prox: Callable[[np.ndarray, float], np.ndarray]
    domain_diameter: float
    domain_radius: float
    contains: Callable[[np.ndarray], bool]


@dataclass(frozen=True)
class LOBlock:
    """Nonsmooth convex term with an efficient linear minimization oracle.

    ``lo(v)`` returns a minimizer of <v, y> plus the term.
    """

    value: Callable[[np.ndarray], float]
    lo: Callable[[np.ndarray], np.ndarray]
    domain_diameter: float
    domain_radius: float
    contains: Callable[[np.ndarray], bool]


@dataclass(frozen=True)
class ProblemSpec:
    """Assembled problem with cached spectral and diameter metadata.

    ``lambda_a`` and ``lambda_b`` are inflated estimates of the largest
    Gram eigenvalues of A and B, so step-size denominators built from
    them majorize the true curvature.  ``d2_upper`` bounds the coupling
    sup |<Ax, By>| over the two domains; the default product bound is
    valid because the certificate formulas are monotone in it.
    """

    f1: SmoothBlock
    f2: ProxBlock
    g1: SmoothBlock
    g2: LOBlock
    A: LinearMap
    B: LinearMap
    c: np.ndarray
    lambda_a: float
    lambda_b: float
    diam_f: float
    diam_g: float
    d2_upper: float

    @classmethod
    def build(cls, f1, f2, g1, g2, A, B, c, d2_upper=None,
              power_tol=1e-12, power_seed=0) -> "ProblemSpec":
        c = np.asarray(c, dtype=float)
        if A.out_dim != B.out_dim or A.out_dim != c.shape[0]:
            raise ValueError("output dims of A, B and dim of c must agree")
        lam_a = lambda_max_sq(A, tol=power_tol, seed=power_seed) * SPECTRAL_INFLATION
        lam_b = lambda_max_sq(B, tol=power_tol, seed=power_seed) * SPECTRAL_INFLATION
        if d2_upper is None:
            d2_upper = (np.sqrt(lam_a) * np.sqrt(lam_b)
                        * f2.domain_radius * g2.domain_radius)
        return cls(f1=f1, f2=f2, g1=g1, g2=g2, A=A, B=B, c=c,
                   lambda_a=float(lam_a), lambda_b=float(lam_b),
                   diam_f=float(f2.domain_diameter),
                   diam_g=float(g2.domain_diameter),
                   d2_upper=float(d2_upper))

    @property
    def x_dim(self) -> int:
        return self.A.in_dim

    @property
    def y_dim(self) -> int:
        return self.B.in_dim

    def objective(self, x: np.ndarray, y: np.ndarray) -> float:
        return (self.f1.value(x) + self.f2.value(x)
                + self.g1.value(y) + self.g2.value(y))

    def residual(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.A.apply(x) + self.B.apply(y) - self.c

    def penalty_value(self, x: np.ndarray, y: np.ndarray, beta: float) -> float:
        r = self.residual(x, y)
        return self.objective(x, y) + 0.5 * beta * float(r @ r)


# ---------------------------------------------------------------------------
# block factories
# ---------------------------------------------------------------------------

def zero_smooth_block(dim: int) -> SmoothBlock:
    """The identically-zero smooth term (Lipschitz gradient, constant 0)."""
    def value(x):
        return 0.0

    def grad(x):
        return np.zeros(dim)

    return SmoothBlock(value=value, grad=grad, holder_exponent=1.0, holder_constant=0.0)


def power_smooth_block(mu: float, dim: int, domain_radius: float,
                       n_samples: int = 20000, seed: int = 0) -> SmoothBlock:
    """Separable power penalty sum_i |x_i|**(1+mu) / (1+mu).

    Its gradient sign(x)*|x|**mu is Hölder continuous with exponent
    ``mu``.  The Hölder constant is estimated by maximizing the ratio
    ||grad(x)-grad(y)|| / ||x-y||**mu over sampled pairs from the box
    of the given radius, then inflated 1.5x; an overestimate is safe
    for the step-size rule, an underestimate is not.
    """
    if not (0.0 < mu <= 1.0):
        raise ValueError("mu must lie in (0, 1]")
    if domain_radius <= 0:
        raise ValueError("domain_radius must be positive")

    def value(x):
        x = np.asarray(x, dtype=float)
        return float(np.sum(np.abs(x) ** (1.0 + mu)) / (1.0 + mu))

    def grad(x):
        return signed_power(np.asarray(x, dtype=float), mu)

    rng = np.random.default_rng(seed)
    xs = rng.uniform(-domain_radius, domain_radius, size=(n_samples, dim))
    ys = rng.uniform(-domain_radius, domain_radius, size=(n_samples, dim))
    diff_norm = np.linalg.norm(xs - ys, axis=1)
    keep = diff_norm > 1e-12
    gx = np.sign(xs) * np.abs(xs) ** mu
    gy = np.sign(ys) * np.abs(ys) ** mu
    ratios = np.linalg.norm(gx[keep] - gy[keep], axis=1) / diff_norm[keep] ** mu
    constant = 1.5 * float(np.max(ratios))
    return SmoothBlock(value=value, grad=grad, holder_exponent=mu,
                       holder_constant=constant)


def quadratic_smooth_block(q_map: LinearMap, r: np.ndarray) -> SmoothBlock:
    """Least-squares term 0.5*||Qx - r||^2 with exact Lipschitz metadata."""
    r = np.asarray(r, dtype=float)
    if r.shape != (q_map.out_dim,):
        raise ValueError("r must match the output dim of Q")

    def value(x):
        d = q_map.apply(x) - r
        return 0.5 * float(d @ d)

    def grad(x):
        return q_map.adjoint_apply(q_map.apply(x) - r)

    constant = lambda_max_sq(q_map) * SPECTRAL_INFLATION
    return SmoothBlock(value=value, grad=grad, holder_exponent=1.0,
                       holder_constant=float(constant))


_DOMAIN_SLACK = 1e-9


def l1_box_prox_block(radius: float, dim: int) -> ProxBlock:
    """The l1 norm restricted to the sup-norm box of the given radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")

    def value(x):
        x = np.asarray(x, dtype=float)
        if np.max(np.abs(x)) > radius * (1.0 + _DOMAIN_SLACK) + 1e-300:
            return np.inf
        return float(np.sum(np.abs(x)))

    def prox(u, gamma):
        return prox_l1_box(u, gamma, radius)

    def contains(x):
        return bool(np.max(np.abs(x)) <= radius * (1.0 + _DOMAIN_SLACK) + 1e-300)

    root = np.sqrt(dim)
    return ProxBlock(value=value, prox=prox,
                     domain_diameter=2.0 * radius * root,
                     domain_radius=radius * root,
                     contains=contains)


def box_prox_block(radius: float, dim: int) -> ProxBlock:
    """Indicator of the sup-norm box; the prox is the projection."""
    if radius <= 0:
        raise ValueError("radius must be positive")

    def value(x):
        x = np.asarray(x, dtype=float)
        return 0.0 if np.max(np.abs(x)) <= radius * (1.0 + _DOMAIN_SLACK) + 1e-300 else np.inf

    def prox(u, gamma):
        return np.clip(np.asarray(u, dtype=float), -radius, radius)

    def contains(x):
        return bool(np.max(np.abs(x)) <= radius * (1.0 + _DOMAIN_SLACK) + 1e-300)

    root = np.sqrt(dim)
    return ProxBlock(value=value, prox=prox,
                     domain_diameter=2.0 * radius * root,
                     domain_radius=radius * root,
                     contains=contains)


def lp_ball_lo_block(sigma: float, p: float, dim: int) -> LOBlock:
    """Indicator of the p-norm ball with its closed-form linear oracle.

    The Euclidean radius bound sigma * dim**max(0, 1/2 - 1/p) is used
    for the diameter metadata (exact for p = 2, an upper bound for
    p < 2), which keeps the certificates valid.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if not (1.0 < p <= 2.0):
        raise ValueError("p must lie in (1, 2]")

    def value(y):
        return 0.0 if lp_norm(y, p) <= sigma * (1.0 + _DOMAIN_SLACK) + 1e-300 else np.inf

    def lo(v):
        return lo_lp_ball(v, sigma, p)

    def contains(y):
        return bool(lp_norm(y, p) <= sigma * (1.0 + _DOMAIN_SLACK) + 1e-300)

    radius = sigma * dim ** max(0.0, 0.5 - 1.0 / p)
    return LOBlock(value=value, lo=lo,
                   domain_diameter=2.0 * radius,
                   domain_radius=radius,
                   contains=contains)
