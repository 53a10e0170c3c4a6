import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sones import probing
from sones.dynamics import (
    GRAD2,
    GainConfig,
    Grad2State,
    SonesState,
    Trajectory,
    default_dt,
    default_initial,
    entry_time,
    error_form_rhs,
    from_error_form,
    grad2_rhs,
    integrate,
    simulate,
    sones_dim,
    sones_rhs,
    to_error_form,
)
from sones.errors import DivergenceError, FrequencyError, InvalidArgumentError
from sones.filters import FilterGains
from sones.maps import PolynomialMap
from sones.probing import ProbingConfig

from conftest import T1, T1_INV, THETA_STAR


def ideal_state(h):
    return SonesState(THETA_STAR.copy(), np.zeros(2), T1_INV.copy(), T1.copy(), float(h(THETA_STAR)))


# state plumbing


@settings(max_examples=50)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_flatten_round_trip(p, seed):
    vec = np.random.default_rng(seed).normal(size=sones_dim(p))
    s = SonesState.unflatten(vec, p)
    assert np.array_equal(s.flatten(), vec)
    assert s.Lam.shape == (p, p) and s.T.shape == (p, p)


def test_unflatten_wrong_size():
    with pytest.raises(InvalidArgumentError):
        SonesState.unflatten(np.zeros(12), 2)


def test_default_initial_state():
    s = SonesState.initial([0.0, 0.0])
    assert np.array_equal(s.T, -50 * np.eye(2))
    assert np.allclose(s.Lam, -0.02 * np.eye(2))
    assert np.all(s.H == 0) and s.eta == 0.0


def test_gain_config():
    g = GainConfig(K=[0.02, 0.03])
    assert np.array_equal(g.K_diag, [0.02, 0.03])
    with pytest.raises(InvalidArgumentError):
        GainConfig(K=(-0.1,))


# loop right-hand sides


def test_ideal_point_without_dither_motion(paper_map, paper_cfg, paper_gains):
    # At t = 0 the dither is zero, so y equals h(theta*) and the washout output vanishes.
    d = sones_rhs(ideal_state(paper_map), 0.0, paper_map, paper_cfg, paper_gains)
    assert np.all(d.theta == 0.0)
    assert np.allclose(d.H, 0.0, atol=1e-15)
    assert np.allclose(d.Lam, 0.0, atol=1e-15)
    assert d.eta == pytest.approx(0.0, abs=1e-15)
    # without excitation the third-derivative filter only decays
    assert np.allclose(d.T, -T1, atol=1e-15)


def test_theta_row(paper_map, paper_cfg, paper_gains):
    s = ideal_state(paper_map)
    s.H = np.array([-0.1, 0.3])
    d = sones_rhs(s, 0.0, paper_map, paper_cfg, paper_gains)
    assert np.allclose(d.theta, [-0.002, 0.002], atol=1e-15)


def test_H_row_at_zero(paper_map, paper_cfg, paper_gains):
    s = SonesState.initial([0.3, 1.1], H0=[0.5, -0.25], eta0=4.0)
    d = sones_rhs(s, 0.0, paper_map, paper_cfg, paper_gains)
    y = paper_map([0.3, 1.1])
    assert np.allclose(d.H, (y - 4.0) * np.array([-800.0, -400.0]) - s.H)


def test_grad2_rows(paper_map, paper_cfg):
    g = GainConfig(K=(0.02, 0.02))
    s = Grad2State(np.array([0.5, 1.5]), np.array([0.2, -0.1]), 1.0)
    d = grad2_rhs(s, 0.013, paper_map, paper_cfg, g)
    assert np.allclose(d.theta, 0.02 * s.H)
    y = paper_map(s.theta + probing.dither(paper_cfg, 0.013))
    assert np.allclose(d.H, (y - 1.0) * probing.demod_N_vector(paper_cfg, 0.013) - s.H)
    assert d.eta == pytest.approx(y - 1.0)


def test_grad2_linearization_is_stable(paper_map):
    # theta_dot ~ K T_1 theta_tilde with T_1 negative definite
    assert np.all(np.linalg.eigvals(np.diag([0.02, 0.02]) @ T1).real < 0)


def test_grad2_zero_gain_freezes_theta(paper_map, paper_cfg):
    s0 = default_initial(2, [0.2, 0.7], GRAD2)
    traj = simulate(paper_map, paper_cfg, GainConfig(K=(0.0, 0.0)), s0, 2.0, loop=GRAD2)
    assert np.all(traj.theta_hat == [0.2, 0.7])


def test_grad2_loop_reaches_inflection_point(paper_map, paper_cfg, paper_gains):
    s0 = default_initial(2, [0.0, 0.0], GRAD2)
    traj = simulate(paper_map, paper_cfg, paper_gains, s0, 300.0, loop=GRAD2, sample_interval=0.1)
    err = np.max(np.abs(traj.theta_hat - THETA_STAR), axis=1)
    assert err[-1] <= 0.1
    assert entry_time(traj.t, err, 0.1) is not None


def _random_state(rng):
    T = rng.normal(size=(2, 2))
    L = rng.normal(size=(2, 2))
    return SonesState(rng.normal(size=2), rng.normal(size=2), (L + L.T) / 2, (T + T.T) / 2, float(rng.normal()))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 10.0))
def test_error_form_matches_loop_form(paper_map, paper_cfg, seed, t):
    rng = np.random.default_rng(seed)
    e = _random_state(rng)
    gains = GainConfig(K=(0.02, 0.05), filters=FilterGains(1.3, 0.7, 2.1))
    s = from_error_form(e, paper_map, THETA_STAR, 0)
    a = sones_rhs(s, t, paper_map, paper_cfg, gains).flatten()
    b = error_form_rhs(e, t, paper_map, THETA_STAR, paper_cfg, gains).flatten()
    # both sides carry products of size |N| * |y| ~ 1e4; compare relative to that scale
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * max(1.0, np.max(np.abs(a))))


def test_error_form_round_trip(paper_map):
    e = _random_state(np.random.default_rng(3))
    back = to_error_form(from_error_form(e, paper_map, THETA_STAR, 0), paper_map, THETA_STAR, 0)
    assert np.allclose(back.flatten(), e.flatten(), atol=1e-14)


def test_rhs_rejects_dimension_mismatch(paper_map, paper_gains):
    cfg3 = ProbingConfig((0.1, 0.1, 0.1), (1, 4, 13))
    with pytest.raises(InvalidArgumentError):
        sones_rhs(SonesState.initial([0.0, 0.0]), 0.0, paper_map, cfg3, paper_gains)


# integrator


def test_rk4_exponential():
    ts, xs = integrate(lambda t, x: -x, np.array([1.0]), (0.0, 1.0), 0.01)
    assert xs[-1, 0] == pytest.approx(np.exp(-1), abs=1e-9)
    assert ts.size == 101 and np.allclose(np.diff(ts), 0.01)


def test_rk4_rotation_norm():
    dt = 0.01
    ts, xs = integrate(lambda t, x: np.array([x[1], -x[0]]), np.array([1.0, 0.0]), (0.0, 10.0), dt)
    drift = np.abs(np.linalg.norm(xs, axis=1) - 1.0)
    assert np.max(np.abs(np.diff(drift))) <= dt**4
    assert np.allclose(xs[-1], [np.cos(10.0), -np.sin(10.0)], atol=1e-8)


def rk4_error_ratio(dt=0.1):
    errs = []
    for h in (dt, dt / 2):
        _, xs = integrate(lambda t, x: -x, np.array([1.0]), (0.0, 1.0), h)
        errs.append(abs(xs[-1, 0] - np.exp(-1)))
    return errs[0] / errs[1]


def test_rk4_fourth_order():
    assert rk4_error_ratio() == pytest.approx(16.0, abs=3.0)


def test_integrate_divergence():
    with pytest.raises(DivergenceError) as err, np.errstate(over="ignore", invalid="ignore"):
        integrate(lambda t, x: x**2, np.array([1.0]), (0.0, 2.0), 0.01)
    assert 0.9 < err.value.t < 1.1


def test_integrate_rejects_bad_step():
    with pytest.raises(InvalidArgumentError):
        integrate(lambda t, x: x, np.zeros(1), (0, 1), 0.0)


def test_record_every():
    ts, xs = integrate(lambda t, x: -x, np.array([1.0]), (0.0, 1.0), 0.01, record_every=10)
    assert ts.size == 11 and ts[-1] == pytest.approx(1.0)


def test_default_step(paper_cfg):
    assert default_dt(paper_cfg) == pytest.approx(min(1e-4, 2 * np.pi / (120 * 500)))
    slow = ProbingConfig((0.1,), (1,))
    assert default_dt(slow) == 1e-4


# closed-loop simulation


def test_simulate_rejects_step_above_limit(paper_map, paper_cfg, paper_gains):
    with pytest.raises(InvalidArgumentError):
        simulate(paper_map, paper_cfg, paper_gains, SonesState.initial([0.0, 0.0]), 0.1, dt=1e-3)


def test_simulate_rejects_invalid_frequencies(paper_map, paper_gains):
    cfg = ProbingConfig((0.1, 0.1), (300, 600))
    with pytest.raises(FrequencyError):
        simulate(paper_map, cfg, paper_gains, SonesState.initial([0.0, 0.0]), 0.1)
    # the gradient loop only needs the Hessian-level conditions
    simulate(paper_map, cfg, paper_gains, default_initial(2, [0.0, 0.0], GRAD2), 0.01, loop=GRAD2)


def test_compiled_kernel_matches_reference(paper_map, paper_cfg, paper_gains):
    s0 = SonesState.initial([0.2, 0.5])
    fast = simulate(paper_map, paper_cfg, paper_gains, s0, 0.2, sample_interval=0.01, engine="numba")
    ref = simulate(paper_map, paper_cfg, paper_gains, s0, 0.2, sample_interval=0.01, engine="python")
    assert np.array_equal(fast.t, ref.t)
    assert np.allclose(fast.states, ref.states, rtol=1e-11, atol=1e-11)
    assert np.allclose(fast.y, ref.y, rtol=1e-12)


def test_compiled_grad2_matches_reference(paper_map, paper_cfg, paper_gains):
    s0 = default_initial(2, [0.2, 0.5], GRAD2)
    fast = simulate(paper_map, paper_cfg, paper_gains, s0, 0.1, loop=GRAD2, engine="numba")
    ref = simulate(paper_map, paper_cfg, paper_gains, s0, 0.1, loop=GRAD2, engine="python")
    assert np.allclose(fast.states, ref.states, rtol=1e-11, atol=1e-11)


def test_callable_map_uses_reference_path(paper_map, paper_cfg, paper_gains):
    s0 = SonesState.initial([0.2, 0.5])
    ref = simulate(paper_map, paper_cfg, paper_gains, s0, 0.05, engine="python")
    generic = simulate(lambda q: evaluate_rows(paper_map, q), paper_cfg, paper_gains, s0, 0.05)
    assert np.allclose(generic.states, ref.states, rtol=1e-12, atol=1e-12)


def evaluate_rows(h, q):
    return np.array([h(row) for row in np.atleast_2d(q)])


def test_symmetry_along_trajectory(paper_map, paper_cfg, paper_gains):
    traj = simulate(paper_map, paper_cfg, paper_gains, SonesState.initial([0.0, 0.0]), 20.0, sample_interval=0.05)
    assert np.max(np.abs(traj.Lam - traj.Lam.transpose(0, 2, 1))) <= 1e-8
    assert np.max(np.abs(traj.T_hat - traj.T_hat.transpose(0, 2, 1))) <= 1e-8


def test_divergence_reported_with_time(paper_cfg, paper_gains):
    # unbounded quartic output pushes the filters to overflow
    h = PolynomialMap.from_terms(2, [((4, 0), 1e300)])
    with pytest.raises(DivergenceError):
        simulate(h, paper_cfg, paper_gains, SonesState.initial([1e10, 0.0]), 0.01)


def test_trajectory_grid_and_header(paper_map, paper_cfg, paper_gains, tmp_path):
    traj = simulate(paper_map, paper_cfg, paper_gains, SonesState.initial([0.0, 0.0]), 1.0, sample_interval=0.1)
    assert traj.t.size == 11
    assert np.allclose(np.diff(traj.t), 0.1)
    assert traj.header() == [
        "t", "theta_hat_1", "theta_hat_2", "Hhat_1", "Hhat_2",
        "Lambda_11", "Lambda_12", "Lambda_21", "Lambda_22",
        "That_11", "That_12", "That_21", "That_22", "eta", "y",
    ]
    path = tmp_path / "traj.csv"
    traj.write_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1:-1], traj.states)  # repr floats round-trip exactly
    assert isinstance(traj.final_state(), SonesState)


def test_entry_time():
    t = np.arange(6.0)
    assert entry_time(t, np.array([3, 2, 0.5, 2, 0.1, 0.1]), 1.0) == 4.0
    assert entry_time(t, np.zeros(6), 1.0) == 0.0
    assert entry_time(t, np.array([0, 0, 0, 0, 0, 5.0]), 1.0) is None


def test_trajectory_rejects_missing_states(paper_map, paper_cfg, paper_gains):
    traj = Trajectory(np.zeros(1), np.zeros((1, 5)), np.zeros(1), 2, GRAD2)
    with pytest.raises(InvalidArgumentError):
        traj.Lam
