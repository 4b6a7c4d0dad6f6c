"""Synthetic time-varying graphs and heavy-tailed graph signals.

The initial graph is a stochastic block model; edge weights then follow the
nonnegative VAR recursion ``w_n = (a * w_{n-1} + eps_n)_+`` with ``a`` drawn
once per sequence.  Signals in frame ``n`` are ``x_t = (L_n^+)^{1/2} v_t`` with
``v_t`` standard multivariate Student-t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .admm import FrameObservation, frame_slices
from .graph_ops import edge_index, laplacian, num_edges
from .heavy_tail import RANK_TOL, StudentTParams, as_generator, sample_student_t


@dataclass(frozen=True)
class SynthConfig:
    p: int = 50
    T: int = 1000
    frame_length: int = 200
    clusters: int = 4
    intra_prob: float = 0.5
    inter_prob: float = 0.05
    weight_low: float = 1.0
    weight_high: float = 3.0
    var_rate: float = 1.0
    innovation_std: float = 0.1
    innovation: str = "normal"  # or "laplace"
    # upper clip on the VAR coefficients; None keeps the raw exponential draw
    var_cap: float | None = 1.0
    # "support": innovations only on edges of the initial graph; "all": every pair
    innovation_support: str = "support"
    nu: float = 3.0
    sampling_rate: float = 1.0
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be at least 2")
        if self.frame_length < 1 or self.T % self.frame_length:
            raise ValueError("T must be a positive multiple of frame_length")
        if not 0 < self.sampling_rate <= 1:
            raise ValueError("sampling_rate must lie in (0, 1]")
        if not (0 <= self.intra_prob <= 1 and 0 <= self.inter_prob <= 1):
            raise ValueError("edge probabilities must lie in [0, 1]")
        if self.weight_low < 0 or self.weight_high < self.weight_low:
            raise ValueError("need 0 <= weight_low <= weight_high")
        if self.var_rate <= 0 or self.innovation_std < 0 or self.noise_std < 0:
            raise ValueError("var_rate must be positive; innovation_std and noise_std nonnegative")
        if self.innovation not in ("normal", "laplace"):
            raise ValueError("innovation must be 'normal' or 'laplace'")
        if self.innovation_support not in ("support", "all"):
            raise ValueError("innovation_support must be 'support' or 'all'")
        if self.var_cap is not None and self.var_cap <= 0:
            raise ValueError("var_cap must be positive")
        if self.nu <= 2:
            raise ValueError("nu must exceed 2")

    @property
    def n_frames(self) -> int:
        return self.T // self.frame_length


@dataclass
class SynthDataset:
    config: SynthConfig
    labels: np.ndarray
    weights: list  # ground-truth edge weights, one vector per frame
    a: np.ndarray
    X: np.ndarray  # clean signal after row normalization, p x T
    obs: FrameObservation  # corrupted observations over all T samples
    w0: np.ndarray = field(repr=False, default=None)

    def frames(self) -> list[FrameObservation]:
        cfg = self.config
        return [
            FrameObservation(self.obs.Y[:, s], self.obs.M[:, s])
            for s in frame_slices(cfg.T, cfg.frame_length)
        ]

    def laplacians(self) -> list[np.ndarray]:
        return [laplacian(w) for w in self.weights]


def block_labels(p: int, clusters: int) -> np.ndarray:
    """Contiguous, balanced block assignment."""
    if clusters < 1 or clusters > p:
        raise ValueError(f"cannot split {p} nodes into {clusters} nonempty blocks")
    labels = np.empty(p, dtype=int)
    for b, idx in enumerate(np.array_split(np.arange(p), clusters)):
        labels[idx] = b
    return labels


def generate_initial_graph(cfg: SynthConfig, seed=None, labels=None) -> np.ndarray:
    """SBM edge weights: Bernoulli presence by block pair, uniform magnitudes."""
    rng = as_generator(cfg.seed if seed is None else seed)
    labels = block_labels(cfg.p, cfg.clusters) if labels is None else np.asarray(labels)
    if np.unique(labels).size != cfg.clusters:
        raise ValueError("every block must contain at least one node")
    rows, cols = edge_index(cfg.p)
    same = labels[rows] == labels[cols]
    prob = np.where(same, cfg.intra_prob, cfg.inter_prob)
    present = rng.random(rows.size) < prob
    magnitude = rng.uniform(cfg.weight_low, cfg.weight_high, rows.size)
    return np.where(present, magnitude, 0.0)


def draw_var_coefficients(cfg: SynthConfig, seed=None, size: int | None = None) -> np.ndarray:
    """Exponential VAR coefficients, clipped at ``cfg.var_cap`` when set."""
    rng = as_generator(cfg.seed if seed is None else seed)
    a = rng.exponential(1.0 / cfg.var_rate, num_edges(cfg.p) if size is None else size)
    return a if cfg.var_cap is None else np.minimum(a, cfg.var_cap)


def evolve_weights(w_prev, cfg: SynthConfig, seed=None, a=None, support=None):
    """One VAR step ``(a * w_prev + eps)_+``; returns the new weights and ``a``.

    ``a`` is drawn when not supplied; pass it back in on later frames so the
    coefficients stay fixed across the sequence.  ``support`` (boolean per edge)
    restricts the innovations; edges outside it stay at ``a * w_prev``.
    """
    rng = as_generator(cfg.seed if seed is None else seed)
    w_prev = np.asarray(w_prev, dtype=float)
    if a is None:
        a = draw_var_coefficients(cfg, rng, w_prev.size)
    if cfg.innovation == "normal":
        eps = cfg.innovation_std * rng.standard_normal(w_prev.size)
    else:
        eps = rng.laplace(0.0, cfg.innovation_std, w_prev.size)
    if support is not None:
        eps = np.where(support, eps, 0.0)
    return np.maximum(a * w_prev + eps, 0.0), a


def pinv_sqrt(L: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Symmetric square root of the Moore-Penrose pseudo-inverse of a PSD matrix."""
    ev, U = np.linalg.eigh(L)
    top = ev[-1]
    if top <= 0:
        return np.zeros_like(L)
    keep = ev > tol * top
    scale = np.zeros_like(ev)
    scale[keep] = 1.0 / np.sqrt(ev[keep])
    return (U * scale) @ U.T


def sample_signals(w, T_n: int, nu: float, seed=None) -> np.ndarray:
    """``T_n`` graph signals ``(L^+)^{1/2} v`` with ``v`` standard Student-t."""
    L = laplacian(w)
    p = L.shape[0]
    v = sample_student_t(StudentTParams(np.zeros(p), np.eye(p), nu), T_n, seed)
    return pinv_sqrt(L) @ v


def normalize_rows(X: np.ndarray) -> np.ndarray:
    """Center each row and scale it by its standard deviation (constant rows stay zero)."""
    X = np.asarray(X, dtype=float)
    centered = X - X.mean(axis=1, keepdims=True)
    std = centered.std(axis=1, keepdims=True)
    return np.divide(centered, std, out=np.zeros_like(centered), where=std > 0)


def corrupt(X, cfg: SynthConfig, seed=None, normalize: bool = True) -> FrameObservation:
    """Normalize, then apply the Bernoulli sampling mask and additive Gaussian noise."""
    rng = as_generator(cfg.seed if seed is None else seed)
    X = normalize_rows(X) if normalize else np.asarray(X, dtype=float)
    M = (rng.random(X.shape) < cfg.sampling_rate).astype(float)
    N = cfg.noise_std * rng.standard_normal(X.shape)
    return FrameObservation(M * (X + N), M)


def generate_dataset(cfg: SynthConfig) -> SynthDataset:
    """Full pipeline: SBM graph, VAR evolution, signals, normalization, corruption."""
    graph_ss, var_ss, signal_ss, corrupt_ss = np.random.SeedSequence(cfg.seed).spawn(4)
    labels = block_labels(cfg.p, cfg.clusters)
    w0 = generate_initial_graph(cfg, np.random.default_rng(graph_ss), labels)
    var_rng = np.random.default_rng(var_ss)
    a = draw_var_coefficients(cfg, var_rng)
    support = w0 > 0 if cfg.innovation_support == "support" else None
    weights, w = [], w0
    for _ in range(cfg.n_frames):
        w, a = evolve_weights(w, cfg, var_rng, a, support)
        weights.append(w)
    signal_rngs = [np.random.default_rng(s) for s in signal_ss.spawn(cfg.n_frames)]
    X = np.hstack([
        sample_signals(w_n, cfg.frame_length, cfg.nu, rng) for w_n, rng in zip(weights, signal_rngs)
    ])
    X = normalize_rows(X)
    obs = corrupt(X, cfg, np.random.default_rng(corrupt_ss), normalize=False)
    return SynthDataset(cfg, labels, weights, a, X, obs, w0)
