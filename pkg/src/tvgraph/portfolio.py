"""Ratio-maximizing portfolios (MSRP, MTVGRP, EWP) and a rolling backtest."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .admm import HyperParams, FrameObservation, SolverError, initial_weights, solve_frame
from .graph_ops import laplacian
from .heavy_tail import fit_student_t
from .synth import normalize_rows

log = logging.getLogger(__name__)

TRADING_DAYS = 252


class Scheme(str, Enum):
    MTVGRP = "MTVGRP"
    MSRP = "MSRP"
    EWP = "EWP"


class BacktestError(RuntimeError):
    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message if index is None else f"{message} (rebalance at t={index})")


def project_simplex_plane(v, mu_hat) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{u >= 0, mu_hat' u = 1}``.

    The minimizer is ``max(v + theta * mu_hat, 0)`` where ``theta`` solves a
    monotone scalar equation.
    """
    v = np.asarray(v, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)

    def gap(theta):
        return mu_hat @ np.maximum(v + theta * mu_hat, 0.0) - 1.0

    lo, hi = -1.0, 1.0
    while gap(lo) > 0:
        lo *= 2.0
    while gap(hi) < 0:
        hi *= 2.0
    theta = brentq(gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return np.maximum(v + theta * mu_hat, 0.0)


def kkt_residual(u, G, mu_hat) -> float:
    """Stationarity gap of ``min u'Gu`` on ``{u >= 0, mu_hat' u = 1}`` at ``u``.

    Uses the natural residual ``||u - P(u - grad/Lip)||`` scaled by the step.
    """
    lip = 2.0 * np.linalg.eigvalsh(G)[-1]
    grad = 2.0 * G @ u
    return float(lip * np.linalg.norm(u - project_simplex_plane(u - grad / lip, mu_hat)))


def solve_min_quadratic(Q, mu_hat, ridge: float = 1e-6, tol: float = 1e-8, max_iter: int = 200_000,
                        return_raw: bool = False):
    """Minimize ``u'(Q + delta I)u`` s.t. ``mu_hat' u = 1``, ``u >= 0``; return ``u / sum(u)``.

    ``delta = ridge * tr(Q) / p``.  Solved by accelerated projected gradient with
    adaptive restart.
    """
    Q = np.asarray(Q, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    p = mu_hat.size
    if Q.shape != (p, p):
        raise ValueError("Q must be p x p")
    if not np.any(mu_hat > 0):
        raise ValueError("infeasible: no asset has a positive expected return")
    delta = ridge * np.trace(Q) / p
    if delta <= 0:
        delta = ridge
    G = 0.5 * (Q + Q.T) + delta * np.eye(p)
    lip = 2.0 * np.linalg.eigvalsh(G)[-1]
    u = project_simplex_plane(np.full(p, 1.0 / p), mu_hat)
    y, t = u.copy(), 1.0
    for it in range(max_iter):
        u_next = project_simplex_plane(y - 2.0 * G @ y / lip, mu_hat)
        # gradient-based restart keeps the accelerated iteration monotone in practice
        if (y - u_next) @ (u_next - u) > 0:
            t = 1.0
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = u_next + (t - 1.0) / t_next * (u_next - u)
        u, t = u_next, t_next
        if it % 20 == 0 and kkt_residual(u, G, mu_hat) < tol:
            break
    raw = u
    weights = raw / raw.sum()
    return (weights, raw) if return_raw else weights


def msrp_weights(sigma, mu_hat) -> np.ndarray:
    return solve_min_quadratic(sigma, mu_hat)


def mtvgrp_weights(L, mu_hat) -> np.ndarray:
    return solve_min_quadratic(L, mu_hat)


def ewp_weights(p: int) -> np.ndarray:
    return np.full(p, 1.0 / p)


def graph_ratio(u, L, mu_hat) -> float:
    """Expected return over graph smoothness ``mu'u / sqrt(u'Lu)``."""
    quad = float(u @ L @ u)
    return float(mu_hat @ u / np.sqrt(quad)) if quad > 0 else float("inf")


def max_drawdown(nav) -> float:
    """Largest relative decline from a running peak."""
    nav = np.asarray(nav, dtype=float)
    if nav.size < 2 or np.any(nav <= 0):
        raise ValueError("NAV must be positive with at least two points")
    peak = np.maximum.accumulate(nav)
    return float(np.max((peak - nav) / peak))


@dataclass
class BacktestReport:
    scheme: str
    ann_return: float
    ann_volatility: float
    sharpe: float | None
    max_drawdown: float
    rebalances: list = field(default_factory=list)
    returns: np.ndarray = field(default=None, repr=False)
    nav: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "ann_return": self.ann_return,
            "ann_volatility": self.ann_volatility,
            "sharpe": self.sharpe,
            "max_drawdown": self.max_drawdown,
            "rebalances": self.rebalances,
        }


def performance(daily_returns) -> tuple[float, float, float | None, float, np.ndarray]:
    """Annualized mean, volatility, Sharpe (zero risk-free rate), drawdown and NAV."""
    r = np.asarray(daily_returns, dtype=float)
    nav = np.concatenate([[1.0], np.cumprod(1.0 + r)])
    ann_return = float(np.mean(r) * TRADING_DAYS)
    ann_vol = float(np.std(r, ddof=1) * np.sqrt(TRADING_DAYS)) if r.size > 1 else 0.0
    if ann_vol < 1e-12:
        ann_vol = 0.0
    sharpe = ann_return / ann_vol if ann_vol > 0 else None
    return ann_return, ann_vol, sharpe, max_drawdown(nav), nav


def backtest(returns, hp: HyperParams, scheme: Scheme | str, rebalance_every: int = 20,
             nu_window: str = "frame") -> BacktestReport:
    """Rolling backtest over the columns (days) of a ``p x T`` simple-return matrix.

    At every rebalance the trailing ``hp.frame_length`` days give the Student-t
    estimates of mean and scatter; MTVGRP also learns the frame's graph, warm
    started from the previous rebalance.  Weights are held until the next
    rebalance.
    """
    scheme = Scheme(scheme)
    R = np.asarray(returns, dtype=float)
    p, T = R.shape
    window = hp.frame_length
    if T <= window:
        raise BacktestError(f"need more than {window} days of history, got {T}")
    if nu_window not in ("frame", "global"):
        raise ValueError("nu_window must be 'frame' or 'global'")
    global_nu = fit_student_t(R).nu if nu_window == "global" and scheme is Scheme.MTVGRP else None

    w_prev = initial_weights(p, hp.degree_target(p))
    daily, history = [], []
    for start in range(window, T, rebalance_every):
        frame = R[:, start - window:start]
        try:
            if scheme is Scheme.EWP:
                u = ewp_weights(p)
            else:
                est = fit_student_t(frame)
                if scheme is Scheme.MSRP:
                    u = msrp_weights(est.sigma, est.mu)
                else:
                    nu = global_nu if global_nu is not None else est.nu
                    result = solve_frame(FrameObservation(normalize_rows(frame)), w_prev,
                                         hp.replace(nu=nu, frame_length=window),
                                         track_lagrangian=False)
                    w_prev = result.w_hat
                    u = mtvgrp_weights(laplacian(result.w_hat), est.mu)
        except (ValueError, SolverError, np.linalg.LinAlgError) as err:
            raise BacktestError(f"{scheme.value} estimation failed: {err}", index=start) from err
        stop = min(start + rebalance_every, T)
        daily.append(u @ R[:, start:stop])
        history.append({"index": start, "weights": u.tolist()})
        log.debug("rebalance at %d: %s", start, scheme.value)
    r = np.concatenate(daily)
    ann_return, ann_vol, sharpe, mdd, nav = performance(r)
    return BacktestReport(scheme.value, ann_return, ann_vol, sharpe, mdd, history, r, nav)
