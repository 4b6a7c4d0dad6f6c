"""Semi-online ADMM for time-varying k-component graphs from heavy-tailed data.

Each frame of observations is solved by alternating closed-form (or majorized)
updates of the Laplacian split variable ``L``, the edge weights ``w``, the
temporal innovation ``u``, the denoised signal ``X``, the VAR coefficients
``a``, the rank-penalty basis ``V`` and the three dual variables.  Frames are
chained by warm-starting each one from the previous frame's estimate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigh

from .graph_ops import (
    degree,
    degree_adjoint,
    laplacian,
    laplacian_adjoint,
    num_edges,
    operator_norm_bound,
)

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Numerical failure inside the solver; carries the iteration and frame."""

    def __init__(self, message: str, iteration: int | None = None, frame: int | None = None):
        self.iteration = iteration
        self.frame = frame
        where = []
        if frame is not None:
            where.append(f"frame {frame}")
        if iteration is not None:
            where.append(f"iteration {iteration}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


@dataclass(frozen=True)
class HyperParams:
    k: int
    d: float | tuple = 1.0
    nu: float = 3.0
    sigma_eps: float = float(np.e)
    sigma_n: float = 0.0
    lam: float = 1.0
    rho: float = 3.0
    # rank-penalty weight; None means 0.5 * rho (too weak to close the L = Lw gap at rho = 3)
    eta: float | None = 40.0
    max_iter: int = 1000
    tol: float = 1e-4
    frame_length: int = 200
    overlap: int = 0
    # False drops the temporal l1 term (alpha = 0); used as an ablation baseline
    temporal: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.nu <= 2:
            raise ValueError("nu must exceed 2")
        if self.sigma_eps < 1:
            raise ValueError("sigma_eps < 1 makes the l0 weight negative; use sigma_eps >= 1")
        if self.sigma_n < 0:
            raise ValueError("sigma_n must be nonnegative")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.eta is not None and self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.max_iter < 1 or self.tol <= 0:
            raise ValueError("max_iter must be >= 1 and tol > 0")
        if self.frame_length < 1 or not 0 <= self.overlap < self.frame_length:
            raise ValueError("need frame_length >= 1 and 0 <= overlap < frame_length")
        if not np.isscalar(self.d):
            object.__setattr__(self, "d", tuple(float(v) for v in self.d))

    @classmethod
    def from_gamma(cls, gamma: float, frame_length: int = 200, **kwargs) -> "HyperParams":
        """Build from the VAR-prior weight ``gamma`` directly (``lam = gamma T_n / 2``)."""
        return cls(lam=gamma * frame_length / 2.0, frame_length=frame_length, **kwargs)

    @property
    def alpha(self) -> float:
        return 2.0 / (self.frame_length * self.sigma_eps) if self.temporal else 0.0

    @property
    def beta(self) -> float:
        return 2.0 * np.log(self.sigma_eps) / self.frame_length

    @property
    def gamma(self) -> float:
        return 2.0 * self.lam / self.frame_length

    @property
    def eta_value(self) -> float:
        return 0.5 * self.rho if self.eta is None else self.eta

    def degree_target(self, p: int) -> np.ndarray:
        d = np.broadcast_to(np.asarray(self.d, dtype=float), (p,)).copy()
        if np.any(d <= 0):
            raise ValueError("degree targets must be positive")
        return d

    def replace(self, **changes) -> "HyperParams":
        return replace(self, **changes)


@dataclass
class FrameObservation:
    Y: np.ndarray
    M: np.ndarray | None = None

    def __post_init__(self):
        self.Y = np.array(self.Y, dtype=float)
        if self.Y.ndim != 2:
            raise ValueError("Y must be a p x T matrix")
        if self.M is None:
            self.M = np.ones_like(self.Y)
        self.M = np.array(self.M, dtype=float)
        if self.M.shape != self.Y.shape:
            raise ValueError(f"mask shape {self.M.shape} does not match data shape {self.Y.shape}")
        if not np.isin(self.M, (0.0, 1.0)).all():
            raise ValueError("mask entries must be 0 or 1")
        self.Y[self.M == 0] = 0.0

    @property
    def p(self) -> int:
        return self.Y.shape[0]

    @property
    def T(self) -> int:
        return self.Y.shape[1]

    @property
    def complete(self) -> bool:
        return bool(self.M.all())


@dataclass
class SolverState:
    w: np.ndarray
    X: np.ndarray
    a: np.ndarray
    u: np.ndarray
    L: np.ndarray
    V: np.ndarray
    Phi: np.ndarray
    mu: np.ndarray
    z: np.ndarray
    iter: int = 0

    def copy(self) -> "SolverState":
        return SolverState(**{k: (v.copy() if isinstance(v, np.ndarray) else v)
                              for k, v in self.__dict__.items()})


@dataclass
class FrameResult:
    w_hat: np.ndarray
    X_hat: np.ndarray
    a_hat: np.ndarray
    residuals: np.ndarray  # (iters_used, 3) absolute constraint residuals
    rel_residuals: np.ndarray  # (iters_used, 3) residuals used by the stopping rule
    lagrangian_trace: np.ndarray
    iters_used: int
    converged: bool
    state: SolverState | None = field(default=None, repr=False)

    @property
    def L_hat(self) -> np.ndarray:
        return laplacian(self.w_hat)


# ---------------------------------------------------------------------------
# update steps
# ---------------------------------------------------------------------------


def split_eig(A: np.ndarray, k: int):
    """Eigenpairs of a symmetric matrix, ascending; ties keep solver order."""
    ev, U = np.linalg.eigh(0.5 * (A + A.T))
    order = np.argsort(ev, kind="stable")
    return ev[order], U[:, order]


def eigen_map(gamma, rho: float):
    """Minimizer of ``-log l + (rho/2)(l - gamma)^2`` over ``l > 0``."""
    gamma = np.asarray(gamma, dtype=float)
    return 0.5 * (gamma + np.sqrt(gamma**2 + 4.0 / rho))


def update_L(w, Phi, rho: float, k: int) -> np.ndarray:
    """Closed-form L-step: eigen-map of the ``p - k`` largest eigenpairs of ``Lw + Phi/rho``."""
    A = laplacian(w) + Phi / rho
    p = A.shape[0]
    if not 1 <= k < p:
        raise ValueError("need 1 <= k < p")
    ev, U = split_eig(A, k)
    Uk = U[:, k:]
    L = (Uk * eigen_map(ev[k:], rho)) @ Uk.T
    return 0.5 * (L + L.T)


def weighted_scatter(X, w, nu: float, T_n: int | None = None) -> np.ndarray:
    """Student-t reweighted scatter ``((p+nu)/T_n) sum_t x x' / (x' Lw x + nu)``."""
    X = np.asarray(X, dtype=float)
    p, T = X.shape
    T_n = T if T_n is None else T_n
    L = laplacian(w)
    quad = np.einsum("it,it->t", X, L @ X)
    S = (X / (quad + nu)) @ X.T
    S *= (p + nu) / T_n
    return 0.5 * (S + S.T)


def hard_threshold(c, threshold: float) -> np.ndarray:
    """``c * 1(c > threshold)`` followed by a projection onto ``c >= 0``."""
    c = np.asarray(c, dtype=float)
    return np.where(c > threshold, np.maximum(c, 0.0), 0.0)


def w_step_center(state: SolverState, L_new, w_prev, hp: HyperParams, d: np.ndarray) -> np.ndarray:
    """Unthresholded minimizer ``c`` of the majorized w-subproblem."""
    w = state.w
    p = d.size
    rho = hp.rho
    zeta1 = operator_norm_bound(p) + 1.0  # 4p - 1
    S = weighted_scatter(state.X, w, hp.nu, state.X.shape[1])
    grad_L = laplacian_adjoint(
        S + state.Phi + rho * (laplacian(w) - L_new) + hp.eta_value * state.V @ state.V.T
    )
    grad_d = -state.mu - rho * (state.u + state.a * w_prev) + degree_adjoint(
        state.z - rho * (d - degree(w))
    )
    return (1.0 - 1.0 / zeta1) * w - (grad_L + grad_d) / (rho * zeta1)


def w_threshold(hp: HyperParams, p: int) -> float:
    return float(np.sqrt(2.0 * hp.beta / (hp.rho * (operator_norm_bound(p) + 1.0))))


def update_w(state: SolverState, L_new, w_prev, hp: HyperParams, d=None) -> np.ndarray:
    """MM step for the edge weights: hard-thresholded gradient step, clamped at zero."""
    p = state.X.shape[0]
    d = hp.degree_target(p) if d is None else d
    c = w_step_center(state, L_new, w_prev, hp, d)
    return hard_threshold(c, w_threshold(hp, p))


def soft_threshold(v, threshold) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def update_u(w_new, a, w_prev, mu, alpha: float, rho: float) -> np.ndarray:
    """Prox of ``alpha |.|_1``: soft threshold of ``w - a*w_prev - mu/rho``."""
    return soft_threshold(w_new - a * w_prev - mu / rho, alpha / rho)


def lambda_max(A: np.ndarray) -> float:
    p = A.shape[0]
    return float(eigh(A, eigvals_only=True, subset_by_index=[p - 1, p - 1])[0])


def x_step_terms(X, w_new, nu: float, sigma_n: float, M):
    """Per-column curvature bound ``tau`` and graph coefficient of the X majorizer."""
    L = laplacian(w_new)
    p = L.shape[0]
    quad = np.einsum("it,it->t", X, L @ X)
    coef = (p + nu) / (quad + nu)
    tau = 1.0 / sigma_n**2 + coef * max(lambda_max(L), 0.0)
    return L, coef, tau


def update_X(state: SolverState, obs: FrameObservation, w_new, hp: HyperParams) -> np.ndarray:
    """One majorize-minimize step per column for the denoised/imputed signal."""
    if hp.sigma_n == 0:
        if not obs.complete:
            raise ValueError("sigma_n = 0 cannot impute missing entries; set sigma_n > 0")
        return obs.Y.copy()
    X = state.X
    L, coef, tau = x_step_terms(X, w_new, hp.nu, hp.sigma_n, obs.M)
    inv_var = 1.0 / hp.sigma_n**2
    QX = inv_var * obs.M * X + coef * (L @ X)
    return X - (QX - inv_var * obs.Y) / tau


def update_a(w_new, u_new, mu, w_prev, gamma: float, rho: float) -> np.ndarray:
    """Nonnegative VAR coefficients; edges absent in the previous frame get zero."""
    f = np.maximum(w_new - u_new - mu / rho, 0.0)
    a = np.zeros_like(f)
    on = w_prev > 0
    a[on] = soft_threshold(f[on] / w_prev[on], gamma / (rho * w_prev[on] ** 2))
    return np.maximum(a, 0.0)


def update_V(w_new, k: int) -> np.ndarray:
    """Eigenvectors of ``Lw`` for the ``k`` smallest eigenvalues."""
    L = laplacian(w_new)
    if not 1 <= k < L.shape[0]:
        raise ValueError("need 1 <= k < p")
    _, U = split_eig(L, k)
    return U[:, :k].copy()


def update_duals(state: SolverState, w_new, L_new, u_new, a_new, w_prev, d, rho: float):
    """Dual ascent on the three equality constraints."""
    Phi = state.Phi + rho * (laplacian(w_new) - L_new)
    mu = state.mu + rho * (u_new - w_new + a_new * w_prev)
    z = state.z + rho * (degree(w_new) - d)
    return Phi, mu, z


# ---------------------------------------------------------------------------
# objective and residuals
# ---------------------------------------------------------------------------


def constraint_residuals(state: SolverState, w_prev, d):
    """Matrix/vector residuals of ``L = Lw``, ``u = w - a*w_prev`` and ``dw = d``."""
    r_L = laplacian(state.w) - state.L
    r_u = state.u - state.w + state.a * w_prev
    r_d = degree(state.w) - d
    return r_L, r_u, r_d


def residual_norms(state: SolverState, w_prev, d):
    r_L, r_u, r_d = constraint_residuals(state, w_prev, d)
    absolute = np.array([np.linalg.norm(r_L), np.linalg.norm(r_u), np.linalg.norm(r_d)])
    scale = np.array([
        max(1.0, np.linalg.norm(state.L)),
        max(1.0, np.linalg.norm(state.w)),
        np.linalg.norm(d),
    ])
    return absolute, absolute / scale


def objective(state: SolverState, obs: FrameObservation, hp: HyperParams) -> float:
    """The split objective ``f`` (without the augmented-Lagrangian penalty terms)."""
    p, T = obs.Y.shape
    k = hp.k
    ev = np.linalg.eigvalsh(state.L)
    top = ev[k:]
    if np.any(top <= 0):
        raise SolverError("L lost rank p - k", iteration=state.iter)
    Lw = laplacian(state.w)
    quad = np.einsum("it,it->t", state.X, Lw @ state.X)
    value = -np.sum(np.log(top))
    value += hp.alpha * np.abs(state.u).sum()
    value += hp.beta * np.count_nonzero(state.w)
    value += (hp.nu + p) / T * np.sum(np.log1p(quad / hp.nu))
    if hp.sigma_n > 0:
        value += np.sum((obs.Y - obs.M * state.X) ** 2) / (T * hp.sigma_n**2)
    value += hp.gamma * state.a.sum()
    value += hp.eta_value * np.sum(Lw * (state.V @ state.V.T))
    return float(value)


def augmented_lagrangian(state: SolverState, obs: FrameObservation, w_prev, hp: HyperParams) -> float:
    d = hp.degree_target(obs.p)
    r_L, r_u, r_d = constraint_residuals(state, w_prev, d)
    rho = hp.rho
    value = objective(state, obs, hp)
    value += 0.5 * rho * np.sum(r_L**2) + np.sum(r_L * state.Phi)
    value += 0.5 * rho * np.sum(r_u**2) + np.dot(r_u, state.mu)
    value += 0.5 * rho * np.sum(r_d**2) + np.dot(r_d, state.z)
    return float(value)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def initial_weights(p: int, d) -> np.ndarray:
    """Uniform weights whose degrees match the mean degree target."""
    d = np.broadcast_to(np.asarray(d, dtype=float), (p,))
    return np.full(num_edges(p), float(d.mean()) / (p - 1))


def init_state(obs: FrameObservation, w_prev, hp: HyperParams) -> SolverState:
    p = obs.p
    m = num_edges(p)
    w0 = np.asarray(w_prev, dtype=float).copy()
    a0 = np.ones(m)
    return SolverState(
        w=w0,
        X=obs.Y.copy(),
        a=a0,
        u=w0 - a0 * w_prev,
        L=laplacian(w0),
        V=update_V(w0, hp.k),
        Phi=np.zeros((p, p)),
        mu=np.zeros(m),
        z=np.zeros(p),
    )


def admm_iteration(state: SolverState, obs: FrameObservation, w_prev, hp: HyperParams, d) -> SolverState:
    """One full sweep L -> w -> u -> X -> a -> V -> duals; returns a new state."""
    L_new = update_L(state.w, state.Phi, hp.rho, hp.k)
    w_new = update_w(state, L_new, w_prev, hp, d)
    u_new = update_u(w_new, state.a, w_prev, state.mu, hp.alpha, hp.rho)
    X_new = update_X(state, obs, w_new, hp)
    a_new = update_a(w_new, u_new, state.mu, w_prev, hp.gamma, hp.rho)
    V_new = update_V(w_new, hp.k)
    Phi, mu, z = update_duals(state, w_new, L_new, u_new, a_new, w_prev, d, hp.rho)
    return SolverState(w_new, X_new, a_new, u_new, L_new, V_new, Phi, mu, z, state.iter + 1)


def _check_finite(state: SolverState):
    for name in ("w", "X", "a", "u", "L", "Phi", "mu", "z"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise SolverError(f"non-finite values in {name}", iteration=state.iter)


def solve_frame(obs: FrameObservation, w_prev, hp: HyperParams, *, keep_state: bool = False,
                track_lagrangian: bool = True) -> FrameResult:
    """Learn the graph of one frame, warm-started from the previous estimate."""
    p, T = obs.Y.shape
    w_prev = np.asarray(w_prev, dtype=float)
    if w_prev.size != num_edges(p):
        raise ValueError(f"previous weights have length {w_prev.size}, expected {num_edges(p)} for p={p}")
    if not 1 <= hp.k < p:
        raise ValueError(f"need 1 <= k < p, got k={hp.k}, p={p}")
    if hp.sigma_n == 0 and not obs.complete:
        raise ValueError("sigma_n = 0 cannot impute missing entries; set sigma_n > 0")
    if T != hp.frame_length:
        hp = hp.replace(frame_length=T)
    d = hp.degree_target(p)

    state = init_state(obs, w_prev, hp)
    residuals, rel_residuals, trace = [], [], []
    converged = False
    for _ in range(hp.max_iter):
        state = admm_iteration(state, obs, w_prev, hp, d)
        _check_finite(state)
        absolute, relative = residual_norms(state, w_prev, d)
        residuals.append(absolute)
        rel_residuals.append(relative)
        if track_lagrangian:
            trace.append(augmented_lagrangian(state, obs, w_prev, hp))
        if np.all(relative < hp.tol):
            converged = True
            break
    log.debug("frame solved in %d iterations (converged=%s)", state.iter, converged)
    return FrameResult(
        w_hat=state.w.copy(),
        X_hat=state.X.copy(),
        a_hat=state.a.copy(),
        residuals=np.array(residuals),
        rel_residuals=np.array(rel_residuals),
        lagrangian_trace=np.array(trace),
        iters_used=state.iter,
        converged=converged,
        state=state if keep_state else None,
    )


def solve_sequence(frames, hp: HyperParams, w_init=None, **kwargs) -> list[FrameResult]:
    """Solve frames in order, feeding each estimate into the next frame."""
    frames = list(frames)
    if not frames:
        raise ValueError("no frames to solve")
    p = frames[0].p
    if any(f.p != p for f in frames):
        raise ValueError("all frames must have the same number of nodes")
    w_prev = initial_weights(p, hp.degree_target(p)) if w_init is None else np.asarray(w_init, float)
    results = []
    for n, obs in enumerate(frames):
        try:
            result = solve_frame(obs, w_prev, hp, **kwargs)
        except SolverError as err:
            raise SolverError(str(err).split(" (")[0], iteration=err.iteration, frame=n) from err
        except ValueError as err:
            raise ValueError(f"frame {n}: {err}") from err
        results.append(result)
        w_prev = result.w_hat
    return results


def frame_slices(T: int, frame_length: int, overlap: int = 0) -> list[slice]:
    """Column ranges of consecutive frames with step ``frame_length - overlap``."""
    step = frame_length - overlap
    if step <= 0:
        raise ValueError("overlap must be smaller than frame_length")
    if T < frame_length:
        return []
    count = (T - overlap) // step
    return [slice(n * step, n * step + frame_length) for n in range(count)]
