"""Experiment driver and brute-force reference oracles.

The oracles here are deliberately assumption-free (exhaustive grids in
up to three dimensions, cyclic Jacobi for eigenvalues) so they can
certify the closed-form operations and tiny problem instances without
sharing any code path with them.  The driver side wires instances into
the solver, runs seeded sweeps over penalty weights, and fits decay
slopes from traces.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import solver as slv
from .blocks import lp_norm
from .csgen import CsInstance, generate_instance, min_norm_solution, reformulate
from .duality import (CsDualContext, dual_value, feasible_dual_point,
                      relative_gap, scale_into_dual_feasible)
from .linmap import LinearMap
from .solver import STOP_GAP, IterTrace, SolverConfig, StepInfo


# ---------------------------------------------------------------------------
# independent eigenvalue oracle
# ---------------------------------------------------------------------------

def jacobi_eigenvalues(matrix, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Cubic-time and independent of any LAPACK path; returns eigenvalues
    sorted in descending order.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if np.max(np.abs(a - a.T)) > 1e-10 * max(1.0, np.max(np.abs(a))):
        raise ValueError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    scale = max(np.max(np.abs(a)), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) <= 1e-300:
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / a[p, q]
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))[::-1]


# ---------------------------------------------------------------------------
# grid oracles (dims <= 3)
# ---------------------------------------------------------------------------

def prox_l1_box_bruteforce(u, gamma: float, radius: float,
                           grid_step: float = 1e-5) -> np.ndarray:
    """Per-coordinate grid minimizer of the shrink-and-clip objective.

    Minimizes 0.5*(x - u_i)^2 + gamma*|x| over the grid of [-R, R] for
    each coordinate, which shares its argmin set with the proximal
    objective for every gamma >= 0.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    npts = int(round(2.0 * radius / grid_step)) + 1
    grid = np.linspace(-radius, radius, npts)
    vals = 0.5 * (grid[None, :] - u[:, None]) ** 2 + gamma * np.abs(grid)[None, :]
    return grid[np.argmin(vals, axis=1)]


def lo_bruteforce(v, sigma: float, p: float, grid_step: float = 3e-5) -> np.ndarray:
    """Grid minimizer of <v, u> over the p-norm ball, dims <= 3.

    Searches over boundary points sigma*z/||z||_p for direction
    candidates z drawn from the surface of the unit cube, then refines
    the direction grid around the incumbent (window 4x the current
    resolution, shrink 4x per round) until the resolution drops below
    ``grid_step``.  Never evaluates the conjugate-exponent closed form.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    d = v.size
    if d > 3:
        raise ValueError("brute-force oracle is limited to dims <= 3")
    if np.max(np.abs(v)) == 0.0:
        return np.zeros(d)

    def boundary_objective(z_points):
        norms = np.sum(np.abs(z_points) ** p, axis=1) ** (1.0 / p)
        keep = norms > 0
        pts = sigma * z_points[keep] / norms[keep, None]
        return pts, pts @ v

    # round 0: all faces of the cube surface
    n0 = 81
    axis = np.linspace(-1.0, 1.0, n0)
    faces = []
    for a in range(d):
        others = [axis] * (d - 1)
        if d == 1:
            base = np.zeros((1, 0))
        else:
            mesh = np.meshgrid(*others, indexing="ij")
            base = np.stack([m.ravel() for m in mesh], axis=1)
        for s in (-1.0, 1.0):
            z = np.empty((base.shape[0], d))
            z[:, a] = s
            z[:, [i for i in range(d) if i != a]] = base
            faces.append(z)
    cand = np.concatenate(faces, axis=0)
    pts, objs = boundary_objective(cand)
    best_idx = int(np.argmin(objs))
    best_pt = pts[best_idx]
    best_obj = objs[best_idx]
    center = cand[np.argmin(objs)]

    h = 2.0 / (n0 - 1)
    npts = 33
    while h > grid_step:
        lo = center - 4.0 * h
        hi = center + 4.0 * h
        axes = [np.linspace(lo[i], hi[i], npts) for i in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        cand = np.stack([m.ravel() for m in mesh], axis=1)
        pts, objs = boundary_objective(cand)
        idx = int(np.argmin(objs))
        if objs[idx] < best_obj:
            best_obj = objs[idx]
            best_pt = pts[idx]
        center = cand[idx]
        h = 8.0 * h / (npts - 1)
    return best_pt


@dataclass(frozen=True)
class ReferenceSolution:
    """Bracketed optimum of a tiny instance.

    ``val`` is the best primal value found; the dual point certifies
    val - tolerance <= optimum <= val by weak duality.
    """

    x_star: np.ndarray
    y_star: np.ndarray
    val: float
    multiplier: np.ndarray
    method: str
    tolerance: float


def _grid_points(lo, hi, npts):
    axes = [np.linspace(lo[i], hi[i], npts) for i in range(len(lo))]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _refine_on_grid(objective_and_feasible, lo, hi, rounds, npts0, npts):
    """Shrinking-grid minimization that tolerates flat valleys.

    Round 0 grids the full box.  Every round keeps ALL feasible points
    whose value is within a Lipschitz-sized slack (2x the grid cell
    diagonal) of the incumbent; for a convex objective over a convex set
    the slack guarantees some grid neighbor of the true optimum is kept,
    so the kept hull never loses the optimum.  Later rounds grid the
    kept hull in its principal-axes frame with per-axis extents, which
    collapses the directions perpendicular to a flat valley while the
    slack bounds the value error along it.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    d = lo.size
    slack_factor = 1.5

    def evaluate(pts):
        vals, feas = objective_and_feasible(pts)
        return np.where(feas, vals, np.inf)

    def evaluate_chunked(center, basis, mid, half, n):
        # slab by the leading rotated axis to keep memory flat
        axis0 = np.linspace(mid[0] - half[0], mid[0] + half[0], n)
        rest = [np.linspace(mid[i] - half[i], mid[i] + half[i], n)
                for i in range(1, d)]
        best_v, best_p, kept = np.inf, None, []
        if d == 1:
            pts = center[None, :] + axis0[:, None] * basis[:, 0][None, :]
            vals = evaluate(pts)
            return vals, pts
        mesh = np.meshgrid(*rest, indexing="ij")
        tail = np.stack([m.ravel() for m in mesh], axis=1)
        slab = np.empty((tail.shape[0], d))
        all_vals, all_pts = [], []
        for a0 in axis0:
            slab[:, 0] = a0
            slab[:, 1:] = tail
            pts = center + slab @ basis.T
            vals = evaluate(pts)
            cutoff = np.inf if best_p is None else best_v + 8 * slack_factor * cell_diag[0]
            mask = vals <= cutoff
            i = int(np.argmin(vals))
            if vals[i] < best_v:
                best_v, best_p = float(vals[i]), pts[i].copy()
            if np.any(mask):
                all_vals.append(vals[mask])
                all_pts.append(pts[mask])
        return np.concatenate(all_vals), np.concatenate(all_pts)

    # round 0: axis-aligned over the full box
    cell_diag = [float(np.linalg.norm((hi - lo) / (npts0 - 1)))]
    vals, pts = evaluate_chunked(np.zeros(d), np.eye(d),
                                 0.5 * (lo + hi), 0.5 * (hi - lo), npts0)
    if not np.any(np.isfinite(vals)):
        return None, np.inf
    idx = int(np.argmin(vals))
    best_val = float(vals[idx])
    best_pt = pts[idx]
    keep = pts[vals <= best_val + slack_factor * cell_diag[0]]

    for _ in range(rounds):
        center = keep.mean(axis=0)
        centered = keep - center
        cov = centered.T @ centered / max(1, keep.shape[0])
        _, basis = np.linalg.eigh(cov + 1e-30 * np.eye(d))
        coords = centered @ basis
        half = 0.5 * (coords.max(axis=0) - coords.min(axis=0)) + cell_diag[0]
        mid = 0.5 * (coords.max(axis=0) + coords.min(axis=0))
        # longest extent slabbed first so per-axis steps stay balanced
        order = np.argsort(half)[::-1]
        basis = basis[:, order]
        half = half[order]
        mid = mid[order]
        cell_diag[0] = float(np.linalg.norm(2.0 * half / (npts - 1)))
        vals, pts = evaluate_chunked(center, basis, mid, half, npts)
        if not np.any(np.isfinite(vals)):
            continue
        idx = int(np.argmin(vals))
        if vals[idx] < best_val:
            best_val = float(vals[idx])
            best_pt = pts[idx]
        kept_mask = vals <= best_val + slack_factor * cell_diag[0]
        if np.any(kept_mask):
            keep = pts[kept_mask]
    return best_pt, best_val


def reference_solve_tiny(inst: CsInstance, grid_step: float = 0.05,
                         rounds: int = 3, npts_refine: int = 301) -> ReferenceSolution:
    """Exhaustive-grid primal and dual solve for n <= 3, m <= 2.

    Primal: minimize the l1 norm over the feasible grid of the box
    [-R, R]^n with R = ||x_hat||_1 + 1, refining the grid around all
    near-best points per round.  Dual: maximize the dual objective over
    the grid of the dual-feasible box, same scheme.  The returned
    tolerance is the primal-dual bracket width, which certifies the
    optimum by weak duality.
    """
    n, m = inst.n, inst.m
    if n > 3 or m > 2:
        raise ValueError("reference solve is limited to n <= 3, m <= 2")
    dense = inst.A.entries
    ctx = CsDualContext(A=inst.A, b=inst.b, sigma=inst.sigma, p=inst.p)

    x_hat = min_norm_solution(inst.A, inst.b)
    radius = float(np.sum(np.abs(x_hat))) + 1.0
    npts0 = max(9, int(round(2.0 * radius / grid_step)) + 1)

    def primal_obj(pts):
        resid = pts @ dense.T - inst.b
        norms = np.sum(np.abs(resid) ** inst.p, axis=1) ** (1.0 / inst.p)
        return np.sum(np.abs(pts), axis=1), norms <= inst.sigma

    x_best, val_up = _refine_on_grid(primal_obj, np.full(n, -radius),
                                     np.full(n, radius), rounds,
                                     min(npts0, 201), npts_refine)
    if x_best is None:
        raise RuntimeError("no feasible grid point; sigma too small for this grid")

    # dual box: ||lam||_2 <= sqrt(n)/sqrt(eigmin(A A^T)), coordinatewise bound
    gram = dense @ dense.T
    eigs = jacobi_eigenvalues(np.atleast_2d(gram))
    eig_min = float(eigs[-1])
    if eig_min <= 0:
        raise RuntimeError("A A^T is singular; dual set unbounded")
    lam_box = 1.05 * math.sqrt(n) / math.sqrt(eig_min)

    def dual_obj(pts):
        feas = np.max(np.abs(pts @ dense), axis=1) <= 1.0
        qn = np.sum(np.abs(pts) ** ctx.q, axis=1) ** (1.0 / ctx.q)
        return (pts @ inst.b) + inst.sigma * qn, feas  # minimize the negative

    found = _refine_on_grid(dual_obj, np.full(m, -lam_box), np.full(m, lam_box),
                            rounds, min(4 * npts0 + 1, 801),
                            max(npts_refine, 1201))
    if found[0] is None:
        lam_best, val_low = np.zeros(m), 0.0
    else:
        lam_best, val_low = found[0], -found[1]

    if val_low > val_up + 1e-9:
        raise RuntimeError("dual value exceeds primal value; oracle inconsistent")
    return ReferenceSolution(x_star=x_best, y_star=inst.A.apply(x_best) - inst.b,
                             val=val_up, multiplier=lam_best,
                             method="grid+refine", tolerance=val_up - val_low)


# ---------------------------------------------------------------------------
# compressed-sensing wiring for the solver
# ---------------------------------------------------------------------------

def cs_dual_candidate(ctx: CsDualContext, info: StepInfo) -> np.ndarray:
    """Dual-feasible point built from the incoming iterate of one step.

    The raw candidate beta_t*(A x_t - b - y_t) equals beta_t times the
    cached residual, and its adjoint image is beta_t times the cached
    adjoint residual, so no extra matrix products are needed.
    """
    cand = info.beta * info.residual_prev
    sup = float(np.max(np.abs(info.beta * info.adj_residual_prev)))
    if sup <= 1.0:
        return cand
    return cand / sup


def make_cs_terminator(ctx: CsDualContext, gap_tol: float = 0.05,
                       feas_tol_rel: float = 0.005):
    """Relative-gap plus near-feasibility stop test.

    Fires when the relative primal-dual gap at the new x (with the dual
    point built from the previous pair) is at most ``gap_tol`` and the
    p-norm residual of the new x exceeds sigma by at most
    ``feas_tol_rel * sigma``.
    """
    def term(info: StepInfo) -> Optional[str]:
        feas = lp_norm(info.ax_new - ctx.b, ctx.p) - ctx.sigma
        if feas > feas_tol_rel * ctx.sigma:
            return None
        lam = cs_dual_candidate(ctx, info)
        if relative_gap(ctx, info.x, lam) <= gap_tol:
            return STOP_GAP
        return None
    return term


def make_cs_metrics(ctx: CsDualContext, reference: Optional[np.ndarray] = None):
    """Trace metrics: relative gap, dual value, optional distance to a reference x."""
    def metrics(info: StepInfo) -> dict:
        lam = cs_dual_candidate(ctx, info)
        out = {"gap_r": relative_gap(ctx, info.x, lam),
               "dual": dual_value(ctx, lam)}
        if reference is not None:
            out["dist_ref"] = float(np.linalg.norm(info.x - reference))
        return out
    return metrics


def run_cs(inst: CsInstance, beta0: float, delta: float = 0.5, h0: float = 1e-4,
           max_iters: int = 10000, record_every: int = 1,
           use_termination: bool = True, step_tol: float = 1e-6,
           gap_tol: float = 0.05, feas_tol_rel: float = 0.005,
           with_metrics: bool = False,
           reference: Optional[np.ndarray] = None):
    """Reformulate and solve one instance from the origin.

    Returns (final state, trace, stop reason, dual context).  With
    ``use_termination`` false the run goes the full ``max_iters``.
    """
    spec = reformulate(inst)
    ctx = CsDualContext(A=inst.A, b=inst.b, sigma=inst.sigma, p=inst.p)
    cfg = SolverConfig(beta0=beta0, delta=delta, h0=h0, max_iters=max_iters,
                       step_tol=step_tol, gap_tol=gap_tol,
                       feas_tol_rel=feas_tol_rel, record_every=record_every)
    terminators = ([make_cs_terminator(ctx, gap_tol, feas_tol_rel),
                    slv.make_small_step_terminator(step_tol)]
                   if use_termination else [])
    metrics = make_cs_metrics(ctx, reference) if with_metrics else None
    x0 = np.zeros(inst.n)
    y0 = np.zeros(inst.m)
    state, trace, reason = slv.run(spec, cfg, x0, y0,
                                   terminators=terminators, metrics=metrics)
    return state, trace, reason, ctx


# ---------------------------------------------------------------------------
# seeded sweeps over penalty weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPlan:
    """Batch description: sizes x seeds x beta0 grid with stop thresholds."""

    sizes: Sequence[tuple[int, int, int]]
    seeds: Sequence[int]
    beta0_grid: Sequence[float]
    delta: float = 0.5
    p: float = 1.5
    h0: float = 1e-4
    gap_tol: float = 0.05
    feas_tol_rel: float = 0.005
    step_tol: float = 1e-6
    max_iters: int = 10000

    def to_dict(self) -> dict:
        return {"sizes": [list(s) for s in self.sizes],
                "seeds": list(self.seeds),
                "beta0_grid": list(self.beta0_grid),
                "delta": self.delta, "p": self.p, "h0": self.h0,
                "gap_tol": self.gap_tol, "feas_tol_rel": self.feas_tol_rel,
                "step_tol": self.step_tol, "max_iters": self.max_iters}

    @classmethod
    def from_dict(cls, data: dict) -> "SweepPlan":
        sizes = [tuple(int(v) for v in s) for s in data["sizes"]]
        return cls(sizes=sizes, seeds=[int(s) for s in data["seeds"]],
                   beta0_grid=[float(b) for b in data["beta0_grid"]],
                   delta=float(data.get("delta", 0.5)),
                   p=float(data.get("p", 1.5)),
                   h0=float(data.get("h0", 1e-4)),
                   gap_tol=float(data.get("gap_tol", 0.05)),
                   feas_tol_rel=float(data.get("feas_tol_rel", 0.005)),
                   step_tol=float(data.get("step_tol", 1e-6)),
                   max_iters=int(data.get("max_iters", 10000)))


SWEEP_COLUMNS = ("m", "n", "k", "seed", "beta0", "stop_reason", "iterations",
                 "gap_r", "feas_violation", "objective", "seconds")


def quartiles_nearest_rank(values) -> tuple[float, float, float, float, float]:
    """(min, q1, median, q3, max) with the nearest-rank convention."""
    data = np.sort(np.asarray(values, dtype=float))
    if data.size == 0:
        raise ValueError("no values")

    def rank(alpha):
        return data[int(math.ceil(alpha * data.size)) - 1]

    return (float(data[0]), float(rank(0.25)), float(rank(0.5)),
            float(rank(0.75)), float(data[-1]))


def _terminal_metrics(state, ctx):
    lam = feasible_dual_point(ctx, state.x, state.y, state.beta)
    gap = relative_gap(ctx, state.x, lam)
    feas = max(lp_norm(ctx.A.apply(state.x) - ctx.b, ctx.p) - ctx.sigma, 0.0)
    return gap, feas


def run_sweep(plan: SweepPlan, csv_path=None, progress: bool = False):
    """Run every (size, seed, beta0) combination and aggregate quartiles.

    Returns (rows, summaries): one row dict per run, and per
    (size, beta0) nearest-rank quartiles of the terminal relative gap
    and feasibility violation.  A solver abort is recorded as a failed
    row and the sweep continues.
    """
    rows = []
    for size in plan.sizes:
        m, n, k = size
        for seed in plan.seeds:
            inst = generate_instance(m, n, k, plan.p, seed)
            for beta0 in plan.beta0_grid:
                started = time.perf_counter()
                try:
                    state, _, reason, ctx = run_cs(
                        inst, beta0=beta0, delta=plan.delta, h0=plan.h0,
                        max_iters=plan.max_iters, record_every=plan.max_iters,
                        step_tol=plan.step_tol, gap_tol=plan.gap_tol,
                        feas_tol_rel=plan.feas_tol_rel)
                    gap, feas = _terminal_metrics(state, ctx)
                    obj = float(np.sum(np.abs(state.x)))
                    rows.append({"m": m, "n": n, "k": k, "seed": seed,
                                 "beta0": beta0, "stop_reason": reason,
                                 "iterations": state.t, "gap_r": gap,
                                 "feas_violation": feas, "objective": obj,
                                 "seconds": time.perf_counter() - started})
                except slv.SolverAbort as exc:
                    rows.append({"m": m, "n": n, "k": k, "seed": seed,
                                 "beta0": beta0, "stop_reason": "failed",
                                 "iterations": exc.t, "gap_r": np.nan,
                                 "feas_violation": np.nan, "objective": np.nan,
                                 "seconds": time.perf_counter() - started})
                if progress:
                    r = rows[-1]
                    print(f"size=({m},{n},{k}) seed={seed} beta0={beta0}: "
                          f"{r['stop_reason']} after {r['iterations']} iters "
                          f"(gap={r['gap_r']:.3g}, feas={r['feas_violation']:.3g})",
                          flush=True)

    summaries = []
    for size in plan.sizes:
        for beta0 in plan.beta0_grid:
            sub = [r for r in rows
                   if (r["m"], r["n"], r["k"]) == tuple(size)
                   and r["beta0"] == beta0 and r["stop_reason"] != "failed"]
            if not sub:
                continue
            for metric in ("gap_r", "feas_violation"):
                q = quartiles_nearest_rank([r[metric] for r in sub])
                summaries.append({"m": size[0], "n": size[1], "k": size[2],
                                  "beta0": beta0, "metric": metric,
                                  "min": q[0], "q1": q[1], "median": q[2],
                                  "q3": q[3], "max": q[4]})

    if csv_path is not None:
        write_sweep_csv(csv_path, rows, summaries)
    return rows, summaries


def write_sweep_csv(path, rows, summaries):
    """Per-run rows plus '#summary' quartile lines for boxplot rebuilds."""
    def fmt(v):
        if isinstance(v, float):
            return format(v, ".17g")
        return str(v)

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(fmt(row[c]) for c in SWEEP_COLUMNS) + "\n")
        for s in summaries:
            fh.write("#summary,size=({m};{n};{k}),beta0={beta0},metric={metric},"
                     "min={mn},q1={q1},median={md},q3={q3},max={mx}\n".format(
                         m=s["m"], n=s["n"], k=s["k"], beta0=fmt(s["beta0"]),
                         metric=s["metric"], mn=fmt(s["min"]), q1=fmt(s["q1"]),
                         md=fmt(s["median"]), q3=fmt(s["q3"]), mx=fmt(s["max"])))


# ---------------------------------------------------------------------------
# decay-slope fitting
# ---------------------------------------------------------------------------

def slope_fit(trace: IterTrace, column: str, t_range: tuple[int, int]) -> float:
    """Least-squares slope of log(value) against log(t+1) over a t window.

    Nonpositive or missing values are excluded with a warning; fewer
    than 10 usable records raise.
    """
    t = trace.column("t")
    vals = trace.column(column)
    in_range = (t >= t_range[0]) & (t <= t_range[1])
    usable = in_range & np.isfinite(vals) & (vals > 0.0)
    dropped = int(np.sum(in_range) - np.sum(usable))
    if dropped:
        warnings.warn(f"slope_fit: excluded {dropped} nonpositive/missing values")
    if int(np.sum(usable)) < 10:
        raise ValueError("need at least 10 positive records in the range")
    lx = np.log(t[usable] + 1.0)
    ly = np.log(vals[usable])
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)
