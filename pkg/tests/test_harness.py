import numpy as np
import pytest

from pcgpen.blocks import lo_lp_ball, lp_norm
from pcgpen.csgen import CsInstance, generate_instance
from pcgpen.harness import (SweepPlan, jacobi_eigenvalues, lo_bruteforce,
                            prox_l1_box_bruteforce, quartiles_nearest_rank,
                            reference_solve_tiny, run_cs, run_sweep, slope_fit,
                            write_sweep_csv)
from pcgpen.linmap import LinearMap
from pcgpen.solver import IterTrace


# ---------------------------------------------------------------------------
# jacobi eigenvalue oracle
# ---------------------------------------------------------------------------

def test_jacobi_diagonal():
    np.testing.assert_allclose(jacobi_eigenvalues(np.diag([3.0, -1.0, 2.0])),
                               [3.0, 2.0, -1.0], atol=1e-12)


def test_jacobi_two_by_two_hand_case():
    # eigenvalues of [[2,1],[1,2]] are 3 and 1
    np.testing.assert_allclose(jacobi_eigenvalues([[2.0, 1.0], [1.0, 2.0]]),
                               [3.0, 1.0], atol=1e-12)


def test_jacobi_matches_lapack_on_random_symmetric():
    rng = np.random.default_rng(0)
    for _ in range(10):
        n = int(rng.integers(2, 7))
        mat = rng.standard_normal((n, n))
        sym = mat + mat.T
        mine = jacobi_eigenvalues(sym)
        ref = np.sort(np.linalg.eigvalsh(sym))[::-1]
        np.testing.assert_allclose(mine, ref, atol=1e-9)


def test_jacobi_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        jacobi_eigenvalues([[1.0, 2.0], [0.0, 1.0]])


# ---------------------------------------------------------------------------
# brute-force oracles
# ---------------------------------------------------------------------------

def test_prox_bruteforce_pins_hand_case():
    out = prox_l1_box_bruteforce(np.array([2.0, -0.2, 0.6]), 0.5, 1.0)
    np.testing.assert_allclose(out, [1.0, 0.0, 0.1], atol=2e-5)


def test_lo_bruteforce_matches_euclidean_closed_form():
    rng = np.random.default_rng(1)
    for _ in range(25):
        d = int(rng.integers(1, 4))
        v = rng.standard_normal(d)
        if np.max(np.abs(v)) < 1e-9:
            continue
        sigma = float(rng.uniform(0.3, 2.5))
        exact = -sigma * v / np.linalg.norm(v)
        brute = lo_bruteforce(v, sigma, 2.0)
        assert abs(float(v @ brute) - float(v @ exact)) <= 1e-4


def test_lo_bruteforce_dense_walk_2d_low_p():
    # dense one-dimensional walk along the 2-D ball boundary as a third oracle
    rng = np.random.default_rng(2)
    for p in (1.1, 1.5):
        for _ in range(5):
            v = rng.standard_normal(2)
            sigma = float(rng.uniform(0.5, 2.0))
            x1 = np.linspace(-sigma, sigma, 400001)
            x2 = (sigma ** p - np.abs(x1) ** p) ** (1.0 / p)
            cand = np.concatenate([np.stack([x1, x2], 1), np.stack([x1, -x2], 1)])
            walk_obj = float(np.min(cand @ v))
            brute_obj = float(v @ lo_bruteforce(v, sigma, p))
            assert abs(walk_obj - brute_obj) <= 1e-4


def test_lo_bruteforce_zero_direction():
    out = lo_bruteforce(np.zeros(2), 1.0, 1.5)
    assert float(np.zeros(2) @ out) == 0.0  # objectives compared, not points


def test_lo_bruteforce_agrees_with_closed_form_sample():
    rng = np.random.default_rng(3)
    for _ in range(40):
        d = int(rng.integers(1, 4))
        v = rng.standard_normal(d)
        if np.max(np.abs(v)) < 1e-9:
            continue
        sigma = float(rng.uniform(0.3, 3.0))
        p = float(rng.choice([1.1, 1.5, 2.0]))
        fast = lo_lp_ball(v, sigma, p)
        slow = lo_bruteforce(v, sigma, p)
        assert float(v @ slow) - float(v @ fast) >= -1e-9  # closed form optimal
        assert abs(float(v @ slow) - float(v @ fast)) <= 1e-4


# ---------------------------------------------------------------------------
# tiny reference solve
# ---------------------------------------------------------------------------

def test_reference_tiny_interval_case():
    # A=[1], b=1, sigma=0.4: feasible set [0.6, 1.4], optimum 0.6
    x_orig = np.array([1.0])
    noise = np.array([0.4 / 1.1])
    inst = CsInstance(A=LinearMap.dense([[1.0]]), b=x_orig + noise,
                      sigma=0.4, p=2.0, x_orig=x_orig, seed=0)
    ref = reference_solve_tiny(inst, grid_step=0.02, rounds=5)
    assert ref.val == pytest.approx(float(inst.b[0]) - 0.4, abs=1e-6)
    assert ref.tolerance <= 1e-5
    assert lp_norm(inst.A.apply(ref.x_star) - inst.b, 2.0) <= inst.sigma * (1 + 1e-9)


def test_reference_tiny_zero_when_sigma_large():
    # sigma >= ||b||: the origin is feasible and optimal
    inst = CsInstance(A=LinearMap.dense([[1.0, 0.3]]), b=np.array([0.5]),
                      sigma=2.0, p=2.0, x_orig=np.zeros(2), seed=0)
    ref = reference_solve_tiny(inst, grid_step=0.05, rounds=3)
    assert ref.val == pytest.approx(0.0, abs=1e-9)
    np.testing.assert_allclose(ref.x_star, np.zeros(2), atol=1e-6)


def test_reference_tiny_bracket_closes():
    rng = np.random.default_rng(4)
    mat = rng.standard_normal((2, 3))
    mat /= np.linalg.norm(mat, axis=0)
    x_orig = np.zeros(3)
    x_orig[0] = 1.2
    noise = 0.35 * rng.standard_normal(2)
    noise *= 0.35 / np.linalg.norm(noise)
    b = mat @ x_orig + noise
    inst = CsInstance(A=LinearMap.dense(mat), b=b,
                      sigma=1.1 * np.linalg.norm(noise), p=2.0,
                      x_orig=x_orig, seed=0)
    ref = reference_solve_tiny(inst, grid_step=0.04, rounds=4)
    assert ref.tolerance <= 1e-5
    assert np.max(np.abs(ref.multiplier)) > 0.0
    # y* consistent with the reformulated coupling
    np.testing.assert_allclose(ref.y_star, mat @ ref.x_star - b, atol=1e-12)


def test_reference_tiny_rejects_big_instances():
    inst = generate_instance(4, 8, 2, 2.0, seed=0)
    with pytest.raises(ValueError):
        reference_solve_tiny(inst)


# ---------------------------------------------------------------------------
# sweep machinery
# ---------------------------------------------------------------------------

def test_quartiles_nearest_rank_convention():
    assert quartiles_nearest_rank([1, 2, 3, 4, 5]) == (1.0, 2.0, 3.0, 4.0, 5.0)
    assert quartiles_nearest_rank([5, 1, 4, 2, 3])[1:4] == (2.0, 3.0, 4.0)


def test_sweep_empty_beta_grid(tmp_path):
    plan = SweepPlan(sizes=[(6, 12, 2)], seeds=[0], beta0_grid=[])
    path = tmp_path / "sweep.csv"
    rows, summaries = run_sweep(plan, csv_path=path)
    assert rows == [] and summaries == []
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 1 and lines[0].startswith("m,n,k,seed,beta0")


def test_sweep_deterministic_modulo_timing(tmp_path):
    plan = SweepPlan(sizes=[(6, 12, 2)], seeds=[0, 1], beta0_grid=[1.0, 20.0],
                     max_iters=150)
    rows1, sums1 = run_sweep(plan)
    rows2, sums2 = run_sweep(plan)
    for r1, r2 in zip(rows1, rows2):
        r1 = {k: v for k, v in r1.items() if k != "seconds"}
        r2 = {k: v for k, v in r2.items() if k != "seconds"}
        assert r1 == r2
    assert sums1 == sums2


def test_sweep_rows_complete_and_csv_summary(tmp_path):
    plan = SweepPlan(sizes=[(6, 12, 2)], seeds=[0, 1, 2], beta0_grid=[5.0],
                     max_iters=100)
    path = tmp_path / "sweep.csv"
    rows, summaries = run_sweep(plan, csv_path=path)
    assert len(rows) == 3
    assert {s["metric"] for s in summaries} == {"gap_r", "feas_violation"}
    text = path.read_text()
    assert text.count("#summary") == 2
    assert "median=" in text


def test_sweep_plan_round_trip():
    plan = SweepPlan(sizes=[(180, 640, 20)], seeds=list(range(20)),
                     beta0_grid=[0.5, 1, 10, 20, 50])
    back = SweepPlan.from_dict(plan.to_dict())
    assert back == plan


# ---------------------------------------------------------------------------
# slope fitting
# ---------------------------------------------------------------------------

def _trace_from(ts, values):
    trace = IterTrace()
    for t, v in zip(ts, values):
        trace.append(int(t), 2.0 / (t + 2), 1.0, 1.0, v, v, 0.0, 0.0)
    return trace


def test_slope_fit_exact_power_law():
    ts = np.arange(1, 200)
    trace = _trace_from(ts, 1.0 / np.sqrt(ts + 1.0))
    assert slope_fit(trace, "feas2", (1, 199)) == pytest.approx(-0.5, abs=1e-9)


def test_slope_fit_constant_column():
    ts = np.arange(1, 100)
    trace = _trace_from(ts, np.ones_like(ts, dtype=float))
    assert slope_fit(trace, "feas2", (1, 99)) == pytest.approx(0.0, abs=1e-12)


def test_slope_fit_excludes_nonpositive_with_warning():
    ts = np.arange(1, 40)
    vals = 1.0 / (ts + 1.0)
    vals[5] = 0.0
    trace = _trace_from(ts, vals)
    with pytest.warns(UserWarning):
        slope = slope_fit(trace, "feas2", (1, 39))
    assert slope == pytest.approx(-1.0, abs=1e-2)


def test_slope_fit_needs_ten_points():
    ts = np.arange(1, 8)
    trace = _trace_from(ts, 1.0 / ts)
    with pytest.raises(ValueError):
        slope_fit(trace, "feas2", (1, 7))


# ---------------------------------------------------------------------------
# CS wiring
# ---------------------------------------------------------------------------

def test_run_cs_metrics_and_reason():
    inst = generate_instance(10, 30, 3, 1.5, seed=2)
    state, trace, reason, ctx = run_cs(inst, beta0=5.0, max_iters=100,
                                       with_metrics=True)
    assert reason in ("iteration-cap", "gap-and-feasibility", "small-steps")
    gaps = trace.column("gap_r")
    duals = trace.column("dual")
    assert np.all(np.isfinite(gaps[1:])) and np.all(gaps[1:] >= 0)
    assert np.all(np.isfinite(duals[1:]))


def test_run_cs_distance_reference_column():
    inst = generate_instance(8, 20, 2, 1.5, seed=3)
    ref = np.zeros(inst.n)
    state, trace, reason, ctx = run_cs(inst, beta0=5.0, max_iters=50,
                                       with_metrics=True, reference=ref,
                                       use_termination=False)
    dist = trace.column("dist_ref")
    xnorm = np.linalg.norm(state.x)
    assert dist[-1] == pytest.approx(xnorm, rel=1e-12)
