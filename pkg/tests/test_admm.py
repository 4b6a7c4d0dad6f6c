import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import eigen_map_oracle, hard_threshold_oracle, soft_threshold_oracle, var_coefficient_oracle
from tvgraph.admm import (
    FrameObservation,
    HyperParams,
    SolverError,
    SolverState,
    augmented_lagrangian,
    eigen_map,
    frame_slices,
    hard_threshold,
    init_state,
    initial_weights,
    objective,
    solve_frame,
    solve_sequence,
    update_a,
    update_duals,
    update_L,
    update_u,
    update_V,
    update_w,
    update_X,
    w_step_center,
    w_threshold,
    weighted_scatter,
    x_step_terms,
)
from tvgraph.graph_ops import degree, laplacian, num_edges
from tvgraph.synth import SynthConfig, generate_dataset, sample_signals


def random_state(rng, p, T, k, hp, w_prev):
    m = num_edges(p)
    w = rng.exponential(size=m) * (rng.random(m) < 0.7)
    return SolverState(
        w=w,
        X=rng.standard_normal((p, T)),
        a=rng.random(m),
        u=rng.standard_normal(m) * 0.1,
        L=laplacian(rng.exponential(size=m)),
        V=update_V(w, k),
        Phi=(lambda A: A + A.T)(rng.standard_normal((p, p)) * 0.1),
        mu=rng.standard_normal(m) * 0.1,
        z=rng.standard_normal(p) * 0.1,
    )


# --- hyper-parameters ---------------------------------------------------------


def test_hyperparams_derived_values():
    hp = HyperParams(k=2, sigma_eps=np.e, lam=3.0, frame_length=200)
    assert np.isclose(hp.alpha, 2 / (200 * np.e))
    assert np.isclose(hp.beta, 2 / 200)
    assert np.isclose(hp.gamma, 0.03)
    assert HyperParams.from_gamma(0.01, 200, k=2).lam == pytest.approx(1.0)
    assert HyperParams(k=2, temporal=False).alpha == 0.0
    assert HyperParams(k=2, eta=None, rho=4.0).eta_value == 2.0


@pytest.mark.parametrize(
    "kwargs",
    [dict(k=0), dict(k=2, sigma_eps=0.5), dict(k=2, nu=2.0), dict(k=2, rho=0.0), dict(k=2, eta=-1.0),
     dict(k=2, tol=0.0), dict(k=2, overlap=200)],
)
def test_hyperparams_rejects(kwargs):
    with pytest.raises(ValueError):
        HyperParams(**kwargs)


def test_frame_observation_masks():
    Y = np.arange(6.0).reshape(2, 3)
    M = np.array([[1, 0, 1], [1, 1, 0]])
    obs = FrameObservation(Y, M)
    assert obs.Y[0, 1] == 0 and obs.Y[1, 2] == 0 and not obs.complete
    with pytest.raises(ValueError):
        FrameObservation(Y, np.full((2, 3), 2))
    with pytest.raises(ValueError):
        FrameObservation(Y, np.ones((3, 2)))


# --- L step -----------------------------------------------------------------------


def test_update_L_two_nodes():
    L = update_L(np.array([1.0]), np.zeros((2, 2)), rho=2.0, k=1)
    v = np.array([1.0, -1.0]) / np.sqrt(2)
    expected = (2 + np.sqrt(6)) / 2
    np.testing.assert_allclose(L, expected * np.outer(v, v), atol=1e-12)
    assert eigen_map(0.0, 1.0) == 1.0


@given(st.integers(0, 10_000))
def test_update_L_eigen_map_oracle(seed):
    rng = np.random.default_rng(seed)
    p, k, rho = 5, 2, float(rng.uniform(0.5, 5))
    w = rng.exponential(size=num_edges(p))
    Phi = (lambda A: A + A.T)(rng.standard_normal((p, p)))
    L = update_L(w, Phi, rho, k)
    ev, U = np.linalg.eigh(laplacian(w) + Phi / rho)
    mapped = np.array([eigen_map_oracle(g, rho) for g in ev[k:]])
    np.testing.assert_allclose(L, (U[:, k:] * mapped) @ U[:, k:].T, atol=1e-6)
    assert np.linalg.matrix_rank(L, tol=1e-9) == p - k


# --- w step -----------------------------------------------------------------------


def test_weighted_scatter_examples(rng):
    S = weighted_scatter(np.array([[1.0], [0.0]]), np.zeros(1), nu=3.0, T_n=1)
    np.testing.assert_allclose(S, np.array([[5 / 3, 0], [0, 0]]))
    np.testing.assert_array_equal(weighted_scatter(np.zeros((3, 4)), np.ones(3), 3.0), np.zeros((3, 3)))
    p, T, nu = 4, 7, 3.5
    X = rng.standard_normal((p, T))
    w = rng.exponential(size=num_edges(p))
    L = laplacian(w)
    loop = sum((p + nu) / T * np.outer(x, x) / (x @ L @ x + nu) for x in X.T)
    np.testing.assert_allclose(weighted_scatter(X, w, nu), loop, atol=1e-12)


def test_hard_threshold_examples():
    np.testing.assert_array_equal(hard_threshold(np.array([0.5, 0.01]), 0.1), [0.5, 0.0])
    c = np.array([-0.3, 0.0, 0.2])
    np.testing.assert_array_equal(hard_threshold(c, 0.0), np.maximum(c, 0))
    assert w_threshold(HyperParams(k=1, sigma_eps=1.0), 5) == 0.0


def w_subproblem(w, state, L_new, w_prev, hp, obs_X, d):
    """Exact w-subproblem of the augmented Lagrangian (other blocks fixed)."""
    p, T = obs_X.shape
    Lw = laplacian(w)
    quad = np.einsum("it,it->t", obs_X, Lw @ obs_X)
    r_L = Lw - L_new
    r_u = state.u - w + state.a * w_prev
    r_d = degree(w) - d
    return ((p + hp.nu) / T * np.sum(np.log1p(quad / hp.nu)) + hp.beta * np.count_nonzero(w)
            + np.sum(state.Phi * r_L) + 0.5 * hp.rho * np.sum(r_L**2)
            + state.mu @ r_u + 0.5 * hp.rho * r_u @ r_u
            + state.z @ r_d + 0.5 * hp.rho * r_d @ r_d
            + hp.eta_value * np.sum(Lw * (state.V @ state.V.T)))


@given(st.integers(0, 10_000))
def test_update_w_descends_on_subproblem(seed):
    rng = np.random.default_rng(seed)
    p, T, k = 4, 12, 1
    hp = HyperParams(k=k, frame_length=T, eta=1.0)
    w_prev = rng.exponential(size=num_edges(p))
    state = random_state(rng, p, T, k, hp, w_prev)
    d = hp.degree_target(p)
    L_new = update_L(state.w, state.Phi, hp.rho, k)
    before = w_subproblem(state.w, state, L_new, w_prev, hp, state.X, d)
    after = w_subproblem(update_w(state, L_new, w_prev, hp, d), state, L_new, w_prev, hp, state.X, d)
    assert after <= before + 1e-10 * max(1.0, abs(before))


def test_update_w_matches_scalar_threshold_oracle(rng):
    p, T, k = 5, 10, 1
    hp = HyperParams(k=k, frame_length=T, sigma_eps=3.0)
    w_prev = rng.exponential(size=num_edges(p))
    state = random_state(rng, p, T, k, hp, w_prev)
    d = hp.degree_target(p)
    L_new = update_L(state.w, state.Phi, hp.rho, k)
    c = w_step_center(state, L_new, w_prev, hp, d)
    out = update_w(state, L_new, w_prev, hp, d)
    rz = hp.rho * (4 * p - 1)
    expected = [hard_threshold_oracle(ci, hp.beta, rz) for ci in c]
    np.testing.assert_allclose(out, expected, atol=1e-6)


# --- u, a, X, V, duals ----------------------------------------------------------


def test_soft_threshold_examples():
    one = np.ones(1)
    assert update_u(np.array([2.5]), one * 0, one, one * 0, 1.0, 1.0)[0] == 1.5
    assert update_u(np.array([-0.5]), one * 0, one, one * 0, 1.0, 1.0)[0] == 0.0


@given(st.floats(-5, 5), st.floats(0.01, 3), st.floats(0.1, 5))
def test_update_u_oracle(v, alpha, rho):
    out = update_u(np.array([v]), np.zeros(1), np.zeros(1), np.zeros(1), alpha, rho)[0]
    assert abs(out - soft_threshold_oracle(v, alpha, rho)) < 1e-6


def test_update_a_examples():
    # f = w - u - mu/rho; choose u = mu = 0 so that f = w
    a = update_a(np.array([3.0, 5.0]), np.zeros(2), np.zeros(2), np.array([2.0, 0.0]), gamma=1.0, rho=1.0)
    np.testing.assert_allclose(a, [1.25, 0.0])
    a = update_a(np.array([-1.0, 0.0]), np.zeros(2), np.zeros(2), np.ones(2), 1.0, 1.0)
    np.testing.assert_array_equal(a, [0.0, 0.0])


@given(st.floats(-3, 6), st.floats(0.05, 4), st.floats(0.0, 2), st.floats(0.2, 5))
def test_update_a_oracle(f, w_prev, gamma, rho):
    a = update_a(np.array([f]), np.zeros(1), np.zeros(1), np.array([w_prev]), gamma, rho)[0]
    assert abs(a - var_coefficient_oracle(f, w_prev, gamma, rho)) < 1e-6


def test_update_X_fixed_points(rng):
    p, T = 3, 4
    Y = rng.standard_normal((p, T))
    obs = FrameObservation(Y)
    hp = HyperParams(k=1, sigma_n=0.5, frame_length=T)
    state = init_state(obs, np.zeros(3), hp)
    state.X = rng.standard_normal((p, T))
    _, _, tau = x_step_terms(state.X, np.zeros(3), hp.nu, hp.sigma_n, obs.M)
    np.testing.assert_allclose(tau, 1 / hp.sigma_n**2)
    np.testing.assert_allclose(update_X(state, obs, np.zeros(3), hp), Y)


def test_update_X_stationary_point(rng):
    p, T = 3, 5
    w = np.array([1.0, 0.5, 2.0])
    hp = HyperParams(k=1, sigma_n=0.3, frame_length=T)
    X = rng.standard_normal((p, T))
    L, coef, _ = x_step_terms(X, w, hp.nu, hp.sigma_n, np.ones((p, T)))
    Y = hp.sigma_n**2 * (X / hp.sigma_n**2 + coef * (L @ X))  # Q_t x = y / sigma^2
    state = init_state(FrameObservation(Y), w, hp)
    state.X = X
    np.testing.assert_allclose(update_X(state, FrameObservation(Y), w, hp), X, atol=1e-12)


def f_x(x, y, m, L, nu, sigma_n, T):
    p = x.size
    return np.sum((y - m * x) ** 2) / (T * sigma_n**2) + (p + nu) / T * np.log1p(x @ L @ x / nu)


def test_update_X_descends(rng):
    p, T = 3, 6
    w = rng.exponential(size=3)
    M = (rng.random((p, T)) < 0.7).astype(float)
    obs = FrameObservation(rng.standard_normal((p, T)), M)
    hp = HyperParams(k=1, sigma_n=0.4, frame_length=T)
    state = init_state(obs, w, hp)
    state.X = rng.standard_normal((p, T))
    X_new = update_X(state, obs, w, hp)
    L = laplacian(w)
    for t in range(T):
        before = f_x(state.X[:, t], obs.Y[:, t], M[:, t], L, hp.nu, hp.sigma_n, T)
        after = f_x(X_new[:, t], obs.Y[:, t], M[:, t], L, hp.nu, hp.sigma_n, T)
        assert after <= before + 1e-12


def test_sigma_n_zero_requires_complete_data(rng):
    M = np.ones((3, 4))
    M[0, 0] = 0
    obs = FrameObservation(rng.standard_normal((3, 4)), M)
    with pytest.raises(ValueError):
        solve_frame(obs, initial_weights(3, 1.0), HyperParams(k=1, frame_length=4))


def test_update_V_examples(rng):
    V = update_V(np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0]), 1)
    np.testing.assert_allclose(np.abs(V[:, 0]), np.full(4, 0.5), atol=1e-12)
    w = np.zeros(num_edges(4))
    w[0] = 1.0  # edge (0,1)
    w[-1] = 2.0  # edge (2,3)
    V = update_V(w, 2)
    assert np.trace(V.T @ laplacian(w) @ V) < 1e-10
    indicators = np.array([[1, 1, 0, 0], [0, 0, 1, 1]], float).T / np.sqrt(2)
    np.testing.assert_allclose(V @ V.T, indicators @ indicators.T, atol=1e-10)
    w = rng.exponential(size=num_edges(6))
    V = update_V(w, 3)
    assert abs(np.trace(V.T @ laplacian(w) @ V) - np.linalg.eigvalsh(laplacian(w))[:3].sum()) < 1e-8
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-8)


def test_update_duals(rng):
    p, T, k = 4, 5, 1
    hp = HyperParams(k=k, frame_length=T)
    w_prev = rng.exponential(size=num_edges(p))
    state = random_state(rng, p, T, k, hp, w_prev)
    d = hp.degree_target(p)
    w, L, u, a = state.w, laplacian(state.w), state.w - state.a * w_prev, state.a
    Phi, mu, z = update_duals(state, w, L, u, a, w_prev, degree(w), hp.rho)
    np.testing.assert_array_equal(Phi, state.Phi)
    np.testing.assert_allclose(mu, state.mu, atol=1e-15)
    np.testing.assert_array_equal(z, state.z)
    L2, u2 = update_L(w, state.Phi, hp.rho, k), rng.standard_normal(w.size)
    Phi, mu, z = update_duals(state, w, L2, u2, a, w_prev, d, 0.0)
    np.testing.assert_array_equal(Phi, state.Phi)
    Phi, mu, z = update_duals(state, w, L2, u2, a, w_prev, d, 2.0)
    np.testing.assert_allclose(Phi, state.Phi + 2.0 * (laplacian(w) - L2), atol=1e-12)
    np.testing.assert_allclose(mu, state.mu + 2.0 * (u2 - w + a * w_prev), atol=1e-12)
    np.testing.assert_allclose(z, state.z + 2.0 * (degree(w) - d), atol=1e-12)


# --- augmented Lagrangian ------------------------------------------------------------


def lagrangian_oracle(state, obs, w_prev, hp):
    p, T = obs.Y.shape
    ev = np.linalg.eigvalsh(state.L)
    Lw = laplacian(state.w)
    value = -np.log(ev[hp.k:]).sum()
    value += hp.alpha * np.abs(state.u).sum() + hp.beta * np.count_nonzero(state.w)
    for t in range(T):
        x = state.X[:, t]
        value += (p + hp.nu) / T * np.log(1 + x @ Lw @ x / hp.nu)
    if hp.sigma_n > 0:
        value += np.linalg.norm(obs.Y - obs.M * state.X) ** 2 / (T * hp.sigma_n**2)
    value += hp.gamma * state.a.sum() + hp.eta_value * np.trace(Lw @ state.V @ state.V.T)
    d = hp.degree_target(p)
    for res, dual in [(Lw - state.L, state.Phi), (state.u - state.w + state.a * w_prev, state.mu),
                      (degree(state.w) - d, state.z)]:
        value += np.sum(dual * res) + hp.rho / 2 * np.sum(res**2)
    return value


def test_augmented_lagrangian_oracle(rng):
    p, T, k = 5, 8, 2
    hp = HyperParams(k=k, frame_length=T, sigma_n=0.5, lam=2.0)
    w_prev = rng.exponential(size=num_edges(p))
    obs = FrameObservation(rng.standard_normal((p, T)), (rng.random((p, T)) < 0.8).astype(float))
    state = random_state(rng, p, T, k, hp, w_prev)
    assert abs(augmented_lagrangian(state, obs, w_prev, hp) - lagrangian_oracle(state, obs, w_prev, hp)) < 1e-9


def test_augmented_lagrangian_feasible_and_linear_in_duals(rng):
    p, T, k = 4, 6, 1
    hp = HyperParams(k=k, frame_length=T)
    w = rng.exponential(size=num_edges(p))
    w *= 1.0 / degree(w).mean()
    hp = hp.replace(d=tuple(degree(w)))
    obs = FrameObservation(rng.standard_normal((p, T)))
    state = init_state(obs, w, hp)  # L = Lw, u = w - w_prev with a = 1, duals zero
    assert np.isclose(augmented_lagrangian(state, obs, w, hp), objective(state, obs, hp))
    state.Phi = (lambda A: A + A.T)(rng.standard_normal((p, p)))
    state.L = state.L + 0.01 * np.eye(p)
    base = augmented_lagrangian(state, obs, w, hp)
    R = laplacian(state.w) - state.L
    state.Phi = 2 * state.Phi
    assert np.isclose(augmented_lagrangian(state, obs, w, hp) - base, np.sum(R * state.Phi / 2))


# --- drivers ------------------------------------------------------------------------


def two_component_frame(T=200, seed=0):
    p = 10
    w = np.zeros(num_edges(p))
    rows, cols = np.triu_indices(p, 1)
    same = (rows < 5) == (cols < 5)
    w[same] = np.random.default_rng(seed).uniform(1, 2, same.sum())
    X = sample_signals(w, T, 3.0, seed)
    return w, FrameObservation(X)


def test_solve_frame_two_components():
    w_true, obs = two_component_frame()
    hp = HyperParams(k=2, frame_length=200, tol=1e-3)
    res = solve_frame(obs, initial_weights(10, 1.0), hp, keep_state=True)
    ev = np.linalg.eigvalsh(res.L_hat)
    assert np.all(ev[:2] < 1e-3 * np.trace(res.L_hat) / 10)
    assert res.residuals.shape == (res.iters_used, 3) and res.lagrangian_trace.size == res.iters_used
    assert np.all(res.w_hat >= 0) and np.all(res.a_hat >= 0)
    np.testing.assert_allclose(res.state.V.T @ res.state.V, np.eye(2), atol=1e-8)


def test_solve_frame_infinite_tol_stops_after_one_iteration():
    _, obs = two_component_frame(T=40)
    res = solve_frame(obs, initial_weights(10, 1.0), HyperParams(k=2, tol=np.inf, frame_length=40))
    assert res.iters_used == 1 and res.converged


def test_solve_frame_converges_on_generator():
    ds = generate_dataset(SynthConfig(p=20, T=200, clusters=2, var_rate=0.1, seed=3))
    hp = HyperParams(k=2, frame_length=200, tol=1e-3, max_iter=1000)
    res = solve_frame(ds.frames()[0], initial_weights(20, 1.0), hp)
    assert res.converged and np.all(res.rel_residuals[-1] < 1e-3)
    norms = np.linalg.norm(res.state.w) if res.state else np.linalg.norm(res.w_hat)
    assert norms < 1e6 * np.linalg.norm(initial_weights(20, 1.0))


def test_solve_frame_input_errors():
    _, obs = two_component_frame(T=40)
    with pytest.raises(ValueError):
        solve_frame(obs, np.ones(3), HyperParams(k=2, frame_length=40))
    with pytest.raises(ValueError):
        solve_frame(obs, initial_weights(10, 1.0), HyperParams(k=10, frame_length=40))


def test_non_finite_data_raises_solver_error():
    _, obs = two_component_frame(T=40)
    Y = obs.Y.copy()
    Y[0, 0] = np.inf
    with pytest.raises(SolverError) as info:
        solve_sequence([obs, FrameObservation(Y)], HyperParams(k=2, frame_length=40, max_iter=20))
    assert info.value.frame == 1


def test_solve_sequence_single_and_repeated_frames():
    _, obs = two_component_frame(T=100, seed=4)
    hp = HyperParams(k=2, frame_length=100, tol=1e-3)
    w0 = initial_weights(10, 1.0)
    single = solve_sequence([obs], hp, w_init=w0)[0]
    np.testing.assert_array_equal(single.w_hat, solve_frame(obs, w0, hp).w_hat)
    results = solve_sequence([obs] * 4, hp, w_init=w0)
    steps = [np.linalg.norm(results[n].w_hat - results[n - 1].w_hat) for n in range(1, 4)]
    assert all(b <= a + 1e-9 for a, b in zip(steps, steps[1:]))


def test_frame_slices():
    assert len(frame_slices(1000, 200)) == 5
    assert len(frame_slices(1000, 200, 180)) == (1000 - 180) // 20
    assert frame_slices(100, 200) == []
    assert frame_slices(10, 4, 2)[1] == slice(2, 6)
    with pytest.raises(ValueError):
        frame_slices(10, 4, 4)
