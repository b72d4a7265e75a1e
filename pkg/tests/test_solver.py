import numpy as np
import pytest

import pcgpen.solver as slv
from pcgpen.blocks import (LOBlock, ProblemSpec, ProxBlock, l1_box_prox_block,
                           lp_ball_lo_block, zero_smooth_block)
from pcgpen.linmap import LinearMap
from pcgpen.solver import (IterTrace, SolverAbort, SolverConfig, run,
                           schedules, step, step_with_info,
                           terminate_small_steps)


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

def test_schedules_initialization():
    cfg = SolverConfig(beta0=2.0, delta=0.3, h0=0.7)
    alpha, beta, h = schedules(0, cfg, mu=1.0, m_f=0.0)
    assert alpha == 1.0
    assert beta == 2.0
    assert h == 0.7


def test_schedules_beta_growth():
    cfg = SolverConfig(beta0=2.0, delta=0.5)
    _, beta, _ = schedules(3, cfg, mu=1.0, m_f=0.0)
    assert beta == pytest.approx(4.0, rel=1e-14)


def test_schedules_holder_branch():
    cfg = SolverConfig(beta0=1.0, delta=0.5, h0=1.0)
    _, _, h = schedules(4, cfg, mu=0.5, m_f=3.0)
    # max(1, 2*3/1.5) * 4**0.5 = 4 * 2 = 8
    assert h == pytest.approx(8.0, rel=1e-14)


def test_schedules_monotone():
    cfg = SolverConfig(beta0=1.5, delta=0.4, h0=1e-3)
    prev_beta, prev_h, prev_alpha = -1.0, -1.0, 2.0
    for t in range(200):
        alpha, beta, h = schedules(t, cfg, mu=0.8, m_f=1.3)
        assert beta >= prev_beta and h >= prev_h
        assert alpha < prev_alpha
        prev_beta, prev_h, prev_alpha = beta, h, alpha


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(beta0=0.0)
    with pytest.raises(ValueError):
        SolverConfig(beta0=1.0, delta=1.0)
    with pytest.raises(ValueError):
        SolverConfig(beta0=1.0, h0=0.0)


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------

def _constant_oracle_spec(x_bar, y_bar):
    n, m = len(x_bar), len(y_bar)
    f2 = ProxBlock(value=lambda x: 0.0,
                   prox=lambda u, g: np.array(x_bar, dtype=float),
                   domain_diameter=10.0, domain_radius=5.0,
                   contains=lambda x: True)
    g2 = LOBlock(value=lambda y: 0.0,
                 lo=lambda v: np.array(y_bar, dtype=float),
                 domain_diameter=10.0, domain_radius=5.0,
                 contains=lambda y: True)
    return ProblemSpec.build(f1=zero_smooth_block(n), f2=f2,
                             g1=zero_smooth_block(m), g2=g2,
                             A=LinearMap.dense(np.ones((m, n))),
                             B=LinearMap.negated_identity(m),
                             c=np.zeros(m))


def test_step_constant_oracles_land_immediately():
    x_bar, y_bar = [0.25, -0.5], [1.5]
    spec = _constant_oracle_spec(x_bar, y_bar)
    cfg = SolverConfig(beta0=1.0)
    state = slv.initial_state(spec, cfg, np.zeros(2), np.zeros(1))
    state = step(state, spec, cfg)
    np.testing.assert_array_equal(state.x, x_bar)
    np.testing.assert_array_equal(state.y, y_bar)  # alpha_0 = 1


def test_first_cg_step_lands_on_oracle_point():
    # y1 = y0 + alpha_0*(u0 - y0) with alpha_0 = 1, so y1 = u0
    spec = _cs_1d_spec()
    cfg = SolverConfig(beta0=1.0, delta=0.5, h0=1e-4)
    state = slv.initial_state(spec, cfg, np.array([1.0]), np.array([0.0]))
    state, info = step_with_info(state, spec, cfg)
    np.testing.assert_array_equal(state.y, info.u)


def test_y_stays_on_segment_between_y_and_u():
    spec = _cs_1d_spec()
    cfg = SolverConfig(beta0=1.0, delta=0.5, h0=1e-4)
    state = slv.initial_state(spec, cfg, np.array([1.0]), np.array([0.0]))
    for _ in range(6):
        prev_y = state.y.copy()
        state, info = step_with_info(state, spec, cfg)
        lam = info.alpha
        np.testing.assert_allclose(state.y, prev_y + lam * (info.u - prev_y),
                                   rtol=0, atol=1e-15)


def _cs_1d_spec(sigma=0.5):
    # min |x| s.t. x - y = 0, |y| <= sigma, |x| <= 1
    return ProblemSpec.build(
        f1=zero_smooth_block(1), f2=l1_box_prox_block(1.0, 1),
        g1=zero_smooth_block(1), g2=lp_ball_lo_block(sigma, 2.0, 1),
        A=LinearMap.dense([[1.0]]), B=LinearMap.negated_identity(1),
        c=np.zeros(1))


def test_two_iterations_match_hand_executed_closed_forms():
    sigma = 0.5
    spec = _cs_1d_spec(sigma)
    cfg = SolverConfig(beta0=1.0, delta=0.5, h0=1e-4)
    lam_a = spec.lambda_a

    x, y = 1.0, 0.0
    hand = []
    for t in range(2):
        beta = 1.0 * (t + 1.0) ** 0.5
        alpha = 2.0 / (t + 2.0)
        r = x - y
        denom = 1e-4 + lam_a * beta
        z = x - beta * r / denom
        x = float(np.clip(np.sign(z) * max(abs(z) - 1.0 / denom, 0.0), -1.0, 1.0))
        w = y - x  # adjoint of the negated identity applied to the mid residual
        u = 0.0 if w == 0.0 else -sigma * np.sign(w)
        y = y + alpha * (u - y)
        hand.append((x, y))

    state = slv.initial_state(spec, cfg, np.array([1.0]), np.array([0.0]))
    for t in range(2):
        state = step(state, spec, cfg)
        assert abs(state.x[0] - hand[t][0]) <= 1e-12
        assert abs(state.y[0] - hand[t][1]) <= 1e-12


def test_step_aborts_on_nonfinite():
    spec = _constant_oracle_spec([np.inf, 0.0], [0.0])
    cfg = SolverConfig(beta0=1.0)
    state = slv.initial_state(spec, cfg, np.zeros(2), np.zeros(1))
    with pytest.raises(SolverAbort):
        step(state, spec, cfg)


# ---------------------------------------------------------------------------
# termination and the driver loop
# ---------------------------------------------------------------------------

def test_terminate_small_steps_cases():
    spec = _cs_1d_spec()
    cfg = SolverConfig(beta0=1.0)
    s0 = slv.initial_state(spec, cfg, np.array([0.5]), np.array([0.1]))

    def with_offsets(dx, dy):
        s1 = slv.initial_state(spec, cfg, np.array([0.5 + dx]), np.array([0.1 + dy]))
        return s1

    assert terminate_small_steps(s0, with_offsets(0.0, 0.0), 1e-6)
    assert not terminate_small_steps(s0, with_offsets(2e-6, 0.0), 1e-6)
    assert terminate_small_steps(s0, with_offsets(5e-7, 9e-7), 1e-6)


def test_run_zero_iterations_hits_cap():
    spec = _cs_1d_spec()
    cfg = SolverConfig(beta0=1.0, max_iters=0)
    state, trace, reason = run(spec, cfg, np.array([1.0]), np.array([0.0]))
    assert reason == "iteration-cap"
    assert state.t == 0
    assert len(trace) == 1


def test_run_disabled_predicates_bookkeeping():
    spec = _cs_1d_spec()
    cfg = SolverConfig(beta0=1.0, max_iters=30, record_every=7)
    state, trace, reason = run(spec, cfg, np.array([1.0]), np.array([0.0]),
                               terminators=[])
    assert reason == "iteration-cap"
    assert state.t == 30
    assert len(trace) == 30 // 7 + 1


def test_run_rejects_infeasible_start():
    spec = _cs_1d_spec()
    cfg = SolverConfig(beta0=1.0)
    with pytest.raises(ValueError):
        run(spec, cfg, np.array([5.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        run(spec, cfg, np.array([1.0]), np.array([5.0]))


def test_run_small_step_termination_fires():
    spec = _cs_1d_spec()
    cfg = SolverConfig(beta0=1.0, max_iters=10000, step_tol=1e-6)
    state, trace, reason = run(spec, cfg, np.array([1.0]), np.array([0.0]))
    assert reason == "small-steps"
    assert state.t < 10000


def test_run_deterministic():
    spec = _cs_1d_spec()
    cfg = SolverConfig(beta0=1.0, max_iters=50, record_every=1)
    out1 = run(spec, cfg, np.array([1.0]), np.array([0.0]), terminators=[])
    out2 = run(spec, cfg, np.array([1.0]), np.array([0.0]), terminators=[])
    assert out1[2] == out2[2]
    np.testing.assert_array_equal(out1[0].x, out2[0].x)
    for c in ("obj", "feas2", "beta", "H"):
        np.testing.assert_array_equal(out1[1].column(c), out2[1].column(c))


def test_trace_schedule_columns_match_schedules():
    spec = _cs_1d_spec()
    cfg = SolverConfig(beta0=1.7, delta=0.6, h0=0.02, max_iters=40, record_every=3)
    _, trace, _ = run(spec, cfg, np.array([1.0]), np.array([0.0]), terminators=[])
    for t, alpha, beta, h in zip(trace.column("t"), trace.column("alpha"),
                                 trace.column("beta"), trace.column("H")):
        a, b, hh = schedules(int(t), cfg, 1.0, 0.0)
        assert alpha == a and beta == b and h == hh


def test_trace_csv_round_trip(tmp_path):
    spec = _cs_1d_spec()
    cfg = SolverConfig(beta0=1.0, max_iters=20, record_every=5)
    _, trace, _ = run(spec, cfg, np.array([1.0]), np.array([0.0]), terminators=[])
    path = tmp_path / "trace.csv"
    trace.to_csv(path, metadata_lines=["#instance=unit-test"])
    text = path.read_text()
    lines = text.strip().split("\n")
    assert lines[0] == "#instance=unit-test"
    assert lines[1] == "t,alpha,beta,H,obj,feas2,dx,dy,gap_r,dual,dist_ref"
    assert len(lines) == 2 + len(trace)
    # optional fields empty, 17 significant digits elsewhere
    first = lines[2].split(",")
    assert first[8] == "" and first[9] == "" and first[10] == ""
    assert float(first[2]) == trace.rows[0][2]


def test_trace_rejects_nonmonotone_t():
    trace = IterTrace()
    trace.append(0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        trace.append(0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
