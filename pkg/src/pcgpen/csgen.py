"""Seeded generation of sparse-recovery test instances.

An instance is ``min ||x||_1 s.t. ||Ax - b||_p <= sigma`` with a
column-normalized Gaussian matrix, a k-sparse Gaussian signal, additive
generalized-Gaussian noise of scale 0.01 and shape p, and
sigma = 1.1*||A x_orig - b||_p.  Reformulation introduces y = Ax - b,
boxes x by the l1 norm of the minimum-norm solution plus one, and lands
in the solver's prox/LO block format.

Randomness: every array draws from its own Philox (counter-based,
64-bit) stream keyed by (seed, stream tag), so generation is a pure
function of the arguments.  Gaussians come from the polar method and
gamma variates from Marsaglia-Tsang rejection plus the shape-boost
transform, both built on raw uniforms; the sampled values therefore do
not depend on any platform math-library sampler.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .blocks import (ProblemSpec, l1_box_prox_block, lp_ball_lo_block,
                     lp_norm, zero_smooth_block)
from .linmap import LinearMap

logger = logging.getLogger(__name__)

# stream tags; GGD sampling owns four ingredient streams of its own
TAG_SUPPORT = 1
TAG_SIGNAL = 2
TAG_MATRIX = 3
TAG_GGD_SIGN = 4
TAG_GGD_NORMAL = 5
TAG_GGD_ACCEPT = 6
TAG_GGD_BOOST = 7

_MASK64 = (1 << 64) - 1


def uniform_stream(seed: int, tag: int) -> Generator:
    """Uniform [0,1) stream from a Philox generator keyed by (seed, tag)."""
    key = np.array([seed & _MASK64, tag & _MASK64], dtype=np.uint64)
    return Generator(Philox(key=key))


def _polar_normals(stream: Generator, count: int) -> np.ndarray:
    """Standard normals via the polar (Marsaglia) method.

    Uniform pairs are consumed strictly in stream order; rejected pairs
    (outside the open unit disc) are skipped, so the output is a pure
    function of the stream regardless of batching.
    """
    out = np.empty(count)
    got = 0
    while got < count:
        pairs = max(256, int(1.4 * (count - got)) // 2 + 1)
        u = stream.random(2 * pairs)
        a = 2.0 * u[0::2] - 1.0
        b = 2.0 * u[1::2] - 1.0
        s = a * a + b * b
        ok = (s > 0.0) & (s < 1.0)
        s_ok = s[ok]
        factor = np.sqrt(-2.0 * np.log(s_ok) / s_ok)
        z = np.empty(2 * s_ok.size)
        z[0::2] = a[ok] * factor
        z[1::2] = b[ok] * factor
        take = min(z.size, count - got)
        out[got:got + take] = z[:take]
        got += take
    return out


def _gamma_shape_ge1(shape: float, count: int, normal_stream: Generator,
                     accept_stream: Generator) -> np.ndarray:
    """Gamma(shape, 1) for shape >= 1 via Marsaglia-Tsang rejection.

    d = shape - 1/3, c = 1/sqrt(9d); draw z ~ N(0,1) and u ~ U(0,1),
    set v = (1 + c*z)^3 and accept when v > 0 and
    log u < z^2/2 + d - d*v + d*log v (with the cheap squeeze
    u < 1 - 0.0331 z^4 tried first); the variate is d*v.
    Pending slots are refilled in index order, keeping the output a pure
    function of the two streams.
    """
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(count)
    filled = 0
    while filled < count:
        need = count - filled
        z = _polar_normals(normal_stream, need)
        u = accept_stream.random(need)
        v = (1.0 + c * z) ** 3
        pos = v > 0.0
        vsafe = np.where(pos, v, 1.0)
        squeeze = u < 1.0 - 0.0331 * z ** 4
        full_test = np.log(np.maximum(u, 1e-300)) < (
            0.5 * z * z + d - d * vsafe + d * np.log(vsafe))
        ok = pos & (squeeze | full_test)
        accepted = d * v[ok]
        out[filled:filled + accepted.size] = accepted
        filled += accepted.size
    return out


def sample_ggd(p: float, count: int, seed: int) -> np.ndarray:
    """I.i.d. draws with density proportional to exp(-|x|^p).

    Uses X = S * G**(1/p) with S a uniform sign and G ~ Gamma(1/p, 1);
    the moment signature is E|X|^p = 1/p.  Gamma variates with shape
    below one come from a shape+1 draw times U**(p) (the standard boost
    transform with exponent 1/shape = p).
    """
    if not (1.0 < p <= 2.0):
        raise ValueError("p must lie in (1, 2]")
    if count < 1:
        raise ValueError("count must be >= 1")
    shape = 1.0 / p
    sign_u = uniform_stream(seed, TAG_GGD_SIGN).random(count)
    signs = np.where(sign_u < 0.5, -1.0, 1.0)
    g_plus = _gamma_shape_ge1(shape + 1.0, count,
                              uniform_stream(seed, TAG_GGD_NORMAL),
                              uniform_stream(seed, TAG_GGD_ACCEPT))
    boost = uniform_stream(seed, TAG_GGD_BOOST).random(count)
    g = g_plus * np.exp(np.log(np.maximum(boost, 1e-300)) / shape)
    return signs * np.exp(np.log(np.maximum(g, 1e-300)) / p) * (g > 0.0)


def _choose_support(n: int, k: int, stream: Generator) -> np.ndarray:
    """k distinct indices via a partial Fisher-Yates shuffle."""
    idx = np.arange(n)
    u = stream.random(k)
    for i in range(k):
        j = i + int(u[i] * (n - i))
        idx[i], idx[j] = idx[j], idx[i]
    return np.sort(idx[:k])


@dataclass(frozen=True)
class CsInstance:
    """One generated instance; ``A`` has unit-norm columns."""

    A: LinearMap
    b: np.ndarray
    sigma: float
    p: float
    x_orig: np.ndarray
    seed: int

    @property
    def m(self) -> int:
        return self.A.out_dim

    @property
    def n(self) -> int:
        return self.A.in_dim

    @property
    def k(self) -> int:
        return int(np.count_nonzero(self.x_orig))

    def validate(self, tol: float = 1e-12):
        cols = np.linalg.norm(self.A.entries, axis=0)
        if np.max(np.abs(cols - 1.0)) > tol:
            raise ValueError("columns of A are not unit norm")
        resid = lp_norm(self.A.apply(self.x_orig) - self.b, self.p)
        if abs(self.sigma - 1.1 * resid) > tol * max(1.0, self.sigma):
            raise ValueError("sigma does not equal 1.1x the residual norm")
        if not (0.0 < self.sigma < lp_norm(self.b, self.p)):
            raise ValueError("sigma must lie strictly between 0 and ||b||_p")


def generate_instance(m: int, n: int, k: int, p: float, seed: int,
                      max_attempts: int = 16) -> CsInstance:
    """Draw an instance; degenerate draws retry with the next seed."""
    if k > n or m > n:
        raise ValueError("need k <= n and m <= n")
    attempt_seed = seed
    for _ in range(max_attempts):
        raw = _polar_normals(uniform_stream(attempt_seed, TAG_MATRIX), m * n)
        mat = raw.reshape(m, n)  # row-major fill
        col_norms = np.linalg.norm(mat, axis=0)
        if np.min(col_norms) == 0.0:
            logger.warning("zero column at seed %d; redrawing", attempt_seed)
            attempt_seed += 1
            continue
        mat = mat / col_norms
        support = _choose_support(n, k, uniform_stream(attempt_seed, TAG_SUPPORT))
        x_orig = np.zeros(n)
        x_orig[support] = _polar_normals(uniform_stream(attempt_seed, TAG_SIGNAL), k)
        noise = sample_ggd(p, m, attempt_seed)
        b = mat @ x_orig + 0.01 * noise
        sigma = 1.1 * lp_norm(0.01 * noise, p)
        if not (0.0 < sigma < lp_norm(b, p)):
            logger.warning("degenerate draw at seed %d (sigma=%g); redrawing",
                           attempt_seed, sigma)
            attempt_seed += 1
            continue
        return CsInstance(A=LinearMap.dense(mat), b=b, sigma=sigma, p=p,
                          x_orig=x_orig, seed=attempt_seed)
    raise RuntimeError(f"no valid instance within {max_attempts} attempts")


def min_norm_solution(A: LinearMap, b: np.ndarray, tol: float = 1e-12,
                      max_iters: int | None = None) -> np.ndarray:
    """Least-Euclidean-norm solution of Ax = b for full-row-rank A.

    Solves (A A^T) z = b by conjugate gradients to relative residual
    ``tol`` and returns A^T z; raises on stagnation, which indicates a
    rank-deficient system.
    """
    b = np.asarray(b, dtype=float)
    m = A.out_dim
    if max_iters is None:
        max_iters = max(50, 20 * m)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(A.in_dim)

    def gram(w):
        return A.apply(A.adjoint_apply(w))

    z = np.zeros(m)
    r = b.copy()
    d = r.copy()
    rs = float(r @ r)
    for _ in range(max_iters):
        if np.sqrt(rs) <= tol * b_norm:
            break
        gd = gram(d)
        dgd = float(d @ gd)
        if dgd <= 0.0:
            raise RuntimeError("conjugate gradients stagnated; A may be rank deficient")
        step = rs / dgd
        z += step * d
        r -= step * gd
        rs_new = float(r @ r)
        d = r + (rs_new / rs) * d
        rs = rs_new
    else:
        if np.sqrt(rs) > 10.0 * tol * b_norm:
            raise RuntimeError("conjugate gradients did not converge; "
                               "A may be rank deficient")
    x_hat = A.adjoint_apply(z)
    misfit = np.linalg.norm(A.apply(x_hat) - b)
    if misfit > 1e-8 * (1.0 + b_norm):
        raise RuntimeError(f"minimum-norm solve inaccurate (||Ax-b||={misfit:g})")
    return x_hat


def reformulate(inst: CsInstance, x_hat: np.ndarray | None = None) -> ProblemSpec:
    """Lift the instance into the solver's two-block format.

    Introduces y = Ax - b, constrains x to the sup-norm box of radius
    ||x_hat||_1 + 1 (x_hat the minimum-norm solution, which certifies
    both feasibility and the constraint qualification), and keeps y in
    the p-norm ball of radius sigma.  Both smooth parts vanish, so the
    Lipschitz branch of the schedule applies with constant zero.
    """
    if x_hat is None:
        x_hat = min_norm_solution(inst.A, inst.b)
    radius = float(np.sum(np.abs(x_hat))) + 1.0
    n, m = inst.n, inst.m
    return ProblemSpec.build(
        f1=zero_smooth_block(n),
        f2=l1_box_prox_block(radius, n),
        g1=zero_smooth_block(m),
        g2=lp_ball_lo_block(inst.sigma, inst.p, m),
        A=inst.A,
        B=LinearMap.negated_identity(m),
        c=inst.b,
    )


# ---------------------------------------------------------------------------
# portable on-disk format
# ---------------------------------------------------------------------------

MAGIC = b"PCG1"
FORMAT_VERSION = 1


def save_instance(path, inst: CsInstance):
    """Binary container (magic PCG1, little-endian) plus key=value sidecar."""
    entries = np.ascontiguousarray(inst.A.entries, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<III", inst.m, inst.n, inst.k))
        fh.write(struct.pack("<dd", inst.p, inst.sigma))
        fh.write(struct.pack("<Q", inst.seed & _MASK64))
        fh.write(entries.tobytes())
        fh.write(np.asarray(inst.b, dtype="<f8").tobytes())
        fh.write(np.asarray(inst.x_orig, dtype="<f8").tobytes())
    meta = [
        "format=pcg-instance-v1",
        f"m={inst.m}",
        f"n={inst.n}",
        f"k={inst.k}",
        f"p={inst.p:.17g}",
        f"sigma={inst.sigma:.17g}",
        f"seed={inst.seed}",
        "rng=philox4x64 keyed (seed, stream-tag), one stream per array",
        "gaussian=polar method on raw uniforms",
        "ggd=density proportional to exp(-|x|^p); E|X|^p = 1/p",
        "matrix=row-major fill, columns normalized to unit l2 norm",
    ]
    with open(str(path) + ".meta", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(meta) + "\n")


def load_instance(path) -> CsInstance:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError("not an instance file (bad magic)")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported format version {version}")
        m, n, k = struct.unpack("<III", fh.read(12))
        p, sigma = struct.unpack("<dd", fh.read(16))
        (seed,) = struct.unpack("<Q", fh.read(8))
        mat = np.frombuffer(fh.read(8 * m * n), dtype="<f8").reshape(m, n)
        b = np.frombuffer(fh.read(8 * m), dtype="<f8").copy()
        x_orig = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
    inst = CsInstance(A=LinearMap.dense(mat), b=b, sigma=sigma, p=p,
                      x_orig=x_orig, seed=int(seed))
    if inst.k != k:
        raise ValueError("sparsity record does not match the stored signal")
    return inst
