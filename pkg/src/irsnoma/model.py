"""System model: scenario configuration, channel generation, SINR/rate/power metrics.

Scenario: K clusters, each with one center user (direct BS link), one edge user
(reached only through its IRS) and one IRS with N reflecting elements. The BS
has M >= K antennas and sends one superposed NOMA signal per cluster.

Phase convention used throughout the package: e_k holds the diagonal of
Theta_k^H, i.e. e_k[n] = exp(-1j * theta_n), and the reflected cascade is
z_k^H = e_k^H diag(h_e^H) G_k. All operations here are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SystemConfig",
    "ChannelSet",
    "RateReport",
    "noise_power",
    "generate_channels",
    "effective_edge_channel",
    "sinr_edge",
    "sinr_center_decoding_edge",
    "sinr_center",
    "evaluate_solution",
    "total_power",
]


class ConfigurationError(ValueError):
    """Raised when a SystemConfig or its inputs are inconsistent."""


def noise_power(B: float, N0_dBm: float) -> float:
    """AWGN power sigma^2 = B * N0 in watts, N0 given in dBm/Hz.

    The -30 below is the single place the dBm->dBW offset appears.
    """
    if B <= 0:
        raise ConfigurationError("bandwidth B must be positive")
    return float(B) * 10.0 ** ((N0_dBm - 30.0) / 10.0)


def _as_rate_vector(value, K: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(K, float(arr[0]))
    if arr.shape != (K,):
        raise ConfigurationError(f"{name} must be scalar or length-{K}")
    return arr


@dataclass(frozen=True)
class SystemConfig:
    """Scenario parameters. Rates may be given as scalars (broadcast to K)."""

    K: int = 2
    M: int = 8
    N: int = 16
    R_c: object = 1.0          # required center-user rate(s), bit/s/Hz
    R_e: object = 1.0          # required edge-user rate(s), bit/s/Hz
    d0: float = 10.0           # IRS -> edge distance (m)
    d1: float = 50.0           # BS -> IRS distance (m)
    d2: float = 10.0           # BS -> center distance (m)
    a0: float = 2.0
    a1: float = 2.2
    a2: float = 2.0
    B: float = 1e8             # bandwidth (Hz)
    N0_dBm: float = -80.0      # noise spectral density (dBm/Hz)
    eps_init: float = 1e-5     # Algorithm-1 tolerance on q
    eps_beam: float = 1e-3     # Algorithm-2 tolerance on objective decrease
    eps_alt: float = 1e-3      # outer-loop tolerance on power decrease
    rand_trials: int = 200
    alpha_grid: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    seed: int = 0

    def __post_init__(self):
        if not (self.M >= self.K >= 1):
            raise ConfigurationError("need M >= K >= 1")
        if self.N < 1:
            raise ConfigurationError("need N >= 1")
        for nm in ("d0", "d1", "d2", "a0", "a1", "a2"):
            if getattr(self, nm) <= 0:
                raise ConfigurationError(f"{nm} must be positive")
        for nm in ("eps_init", "eps_beam", "eps_alt"):
            if getattr(self, nm) <= 0:
                raise ConfigurationError(f"{nm} must be positive")
        if self.B <= 0:
            raise ConfigurationError("B must be positive")
        if self.rand_trials < 1:
            raise ConfigurationError("rand_trials must be >= 1")
        grid = tuple(float(a) for a in np.atleast_1d(self.alpha_grid))
        if not grid or not all(0.0 < a < 1.0 for a in grid):
            raise ConfigurationError("alpha_grid entries must lie in (0, 1)")
        object.__setattr__(self, "alpha_grid", grid)
        rc = _as_rate_vector(self.R_c, self.K, "R_c")
        re = _as_rate_vector(self.R_e, self.K, "R_e")
        if (rc <= 0).any() or (re <= 0).any():
            raise ConfigurationError("rates must be positive")
        object.__setattr__(self, "R_c", rc)
        object.__setattr__(self, "R_e", re)

    @property
    def sigma2(self) -> float:
        return noise_power(self.B, self.N0_dBm)


@dataclass(frozen=True)
class ChannelSet:
    """Per-cluster channel triples plus the noise power they were drawn for.

    h_c[k]: (M,) BS->center user k.  G[k]: (N, M) BS->IRS k.
    h_e[k]: (N,) IRS k->edge user k.  All complex.
    """

    h_c: tuple
    G: tuple
    h_e: tuple
    sigma2: float

    def __post_init__(self):
        K = len(self.h_c)
        if not (len(self.G) == len(self.h_e) == K):
            raise ConfigurationError("per-cluster channel lists disagree on K")
        M = self.h_c[0].shape[0]
        N = self.h_e[0].shape[0]
        for k in range(K):
            if self.h_c[k].shape != (M,) or self.h_e[k].shape != (N,) \
                    or self.G[k].shape != (N, M):
                raise ConfigurationError(f"channel dimensions inconsistent at cluster {k}")
            for arr in (self.h_c[k], self.G[k], self.h_e[k]):
                if not np.isfinite(arr).all():
                    raise ConfigurationError("channel entries must be finite")
        if self.sigma2 <= 0:
            raise ConfigurationError("sigma2 must be positive")

    @property
    def K(self) -> int:
        return len(self.h_c)

    @property
    def M(self) -> int:
        return self.h_c[0].shape[0]

    @property
    def N(self) -> int:
        return self.h_e[0].shape[0]


@dataclass(frozen=True)
class RateReport:
    """Achieved SINRs/rates and the QoS verdict for one candidate solution."""

    sinr_c: np.ndarray
    sinr_e: np.ndarray
    sinr_c_to_e: np.ndarray
    rate_c: np.ndarray
    rate_e: np.ndarray
    feasible: bool
    margin: float


def _cn(rng: np.random.Generator, *shape) -> np.ndarray:
    """i.i.d. CN(0, 1): unit variance split equally across Re/Im."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def generate_channels(config: SystemConfig, seed: int) -> ChannelSet:
    """Draw all channels i.i.d. CN(0, 1) scaled by 1/sqrt(d^a) per link.

    Deterministic for a fixed (config, seed).
    """
    if not isinstance(config, SystemConfig):
        raise ConfigurationError("config must be a SystemConfig")
    rng = np.random.default_rng(seed)
    K, M, N = config.K, config.M, config.N
    s_e = config.d0 ** (-config.a0 / 2.0)
    s_g = config.d1 ** (-config.a1 / 2.0)
    s_c = config.d2 ** (-config.a2 / 2.0)
    h_c, G, h_e = [], [], []
    for _ in range(K):
        h_c.append(s_c * _cn(rng, M))
        G.append(s_g * _cn(rng, N, M))
        h_e.append(s_e * _cn(rng, N))
    return ChannelSet(h_c=tuple(h_c), G=tuple(G), h_e=tuple(h_e),
                      sigma2=config.sigma2)


def effective_edge_channel(ch: ChannelSet, e, k: int) -> np.ndarray:
    """Cascaded BS->IRS->edge channel z_k with z_k^H = e_k^H diag(h_e^H) G_k.

    Computed as z = G^H (h_e* . e*)* ... i.e. G^H (conj applied once); the
    returned vector satisfies z^H w == e^H (conj(h_e) * (G w)) for every w.
    """
    ek = np.asarray(e[k] if isinstance(e, (list, tuple)) else e, dtype=complex)
    if ek.shape != (ch.N,):
        raise ValueError(f"phase vector must have shape ({ch.N},)")
    if not np.allclose(np.abs(ek), 1.0, atol=1e-9):
        raise ValueError("phase vector entries must be unit modulus")
    # z^H = e^H diag(conj(h_e)) G  =>  z = G^H (h_e * e)
    return ch.G[k].conj().T @ (ch.h_e[k] * ek)


def _beam_gains(channel: np.ndarray, w) -> np.ndarray:
    """|channel^H w_i|^2 for each beam i."""
    W = np.column_stack([np.asarray(wi, dtype=complex) for wi in w])
    return np.abs(channel.conj() @ W) ** 2


def sinr_edge(ch: ChannelSet, w, alpha_k: float, e, k: int) -> float:
    """Edge user k decoding its own signal through the IRS cascade."""
    if not (0.0 <= alpha_k <= 1.0):
        raise ValueError("alpha must lie in [0, 1]")
    z = effective_edge_channel(ch, e, k)
    g = _beam_gains(z, w)
    inter = g.sum() - g[k]
    return g[k] * (1.0 - alpha_k) / (g[k] * alpha_k + inter + ch.sigma2)


def sinr_center_decoding_edge(ch: ChannelSet, w, alpha_k: float, k: int) -> float:
    """Center user k decoding the edge user's signal (SIC first stage)."""
    if not (0.0 <= alpha_k <= 1.0):
        raise ValueError("alpha must lie in [0, 1]")
    g = _beam_gains(ch.h_c[k], w)
    inter = g.sum() - g[k]
    return g[k] * (1.0 - alpha_k) / (g[k] * alpha_k + inter + ch.sigma2)


def sinr_center(ch: ChannelSet, w, alpha_k: float, k: int) -> float:
    """Center user k decoding its own signal after SIC."""
    if not (0.0 <= alpha_k <= 1.0):
        raise ValueError("alpha must lie in [0, 1]")
    g = _beam_gains(ch.h_c[k], w)
    inter = g.sum() - g[k]
    return g[k] * alpha_k / (inter + ch.sigma2)


def evaluate_solution(ch: ChannelSet, config: SystemConfig, w, alpha, e) -> RateReport:
    """Rates and QoS verdict for beams w, power splits alpha, phases e."""
    K = ch.K
    s_c = np.empty(K)
    s_e = np.empty(K)
    s_ce = np.empty(K)
    for k in range(K):
        s_c[k] = sinr_center(ch, w, alpha[k], k)
        s_e[k] = sinr_edge(ch, w, alpha[k], e, k)
        s_ce[k] = sinr_center_decoding_edge(ch, w, alpha[k], k)
    rate_c = np.log2(1.0 + s_c)
    rate_e = np.log2(1.0 + np.minimum(s_e, s_ce))
    margin = float(min((rate_c - config.R_c).min(), (rate_e - config.R_e).min()))
    return RateReport(sinr_c=s_c, sinr_e=s_e, sinr_c_to_e=s_ce,
                      rate_c=rate_c, rate_e=rate_e,
                      feasible=bool(margin >= 0.0), margin=margin)


def total_power(w) -> float:
    """Sum of squared beamformer norms, watts."""
    return float(sum(np.vdot(wi, wi).real for wi in w))
