"""Rank-one recovery from lifted optima via Gaussian randomization.

The relaxed stages return PSD matrices; physical transmission needs one
beamformer vector per cluster and one unit-modulus phase vector per IRS.
Candidates are drawn as L u with L L^H equal to the lifted matrix and u
standard complex Gaussian, screened against the exact QoS constraints, and
repaired where the constraint structure permits (a common power scale for
beamformers; entrywise unit-modulus projection for phases).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, SystemConfig, evaluate_solution, sinr_edge
from .beamforming import BeamformingSolution, sinr_threshold

__all__ = [
    "RandomizationReport",
    "RandomizationError",
    "randomize_beamformers",
    "randomize_phases",
]

RANK_ONE_RATIO = 1e-6   # lambda_2/lambda_1 below this: treat the lift as exact
SCALE_CAP = 10.0        # beamformer repair never scales amplitudes past this
SCALE_TOL = 1e-6


class RandomizationError(RuntimeError):
    """No screened candidate survived the requested number of draws."""


@dataclass(frozen=True)
class RandomizationReport:
    """Outcome of one randomization run.

    trials counts random draws performed (0 on the deterministic rank-one
    path), accepted counts draws passing the exact-constraint screen.
    best_metric is total power for beamformers and the minimum edge-rate
    margin for phases; sdr_lower_bound is the relaxed objective when the
    lifted stage had one and None for pure feasibility stages.
    """

    trials: int
    accepted: int
    best_metric: float
    sdr_lower_bound: float | None = None

    def __post_init__(self):
        if self.trials < 0 or not 0 <= self.accepted <= self.trials:
            raise ValueError("accepted must lie in [0, trials]")


def _factor(A) -> np.ndarray:
    """L with L L^H = A for PSD A (eigenvalues clipped at zero)."""
    lam, U = np.linalg.eigh(np.asarray(A))
    return U * np.sqrt(np.clip(lam, 0.0, None))


def _rank_one_ratio(A) -> float:
    lam = np.linalg.eigvalsh(np.asarray(A))
    top = float(lam[-1])
    if top <= 0.0:
        return 0.0
    second = float(lam[-2]) if lam.size > 1 else 0.0
    return max(second, 0.0) / top


def _principal(A) -> np.ndarray:
    lam, U = np.linalg.eigh(np.asarray(A))
    return U[:, -1] * np.sqrt(max(float(lam[-1]), 0.0))


def _common_scale(ch, config, w, alpha, e):
    """Smallest s in [1, SCALE_CAP] making the QoS margins nonnegative.

    The margin is nondecreasing in a common amplitude scale (every SINR
    numerator grows at least as fast as its noise-bearing denominator), so
    bisection applies; returns None when even the cap fails.
    """
    def margin(s):
        return evaluate_solution(ch, config, [s * wk for wk in w],
                                 alpha, e).margin

    if margin(1.0) >= 0.0:
        return 1.0
    if margin(SCALE_CAP) < 0.0:
        return None
    lo, hi = 1.0, SCALE_CAP
    while hi - lo > SCALE_TOL:
        mid = 0.5 * (lo + hi)
        if margin(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def randomize_beamformers(Wlifted, alpha, ch: ChannelSet, e,
                          config: SystemConfig, rng, trials=None):
    """Recover one beamformer per cluster from the lifted matrices.

    When every W_k is rank-one within RANK_ONE_RATIO the scaled principal
    eigenvectors are returned exactly (zero random draws). Otherwise each
    trial draws w_k = L_k u, repairs the set with the smallest common
    amplitude scale s >= 1 restoring all QoS margins (capped, see
    _common_scale), and the feasible candidate set of least total power
    wins. Raises RandomizationError when no draw survives.
    """
    rng = np.random.default_rng(rng)
    if trials is None:
        trials = config.rand_trials
    K = len(Wlifted)
    if len(alpha) != K or ch.K != K:
        raise ValueError("cluster counts disagree")
    M = ch.M
    sdr_bound = float(sum(np.trace(Wk).real for Wk in Wlifted))
    if max(_rank_one_ratio(Wk) for Wk in Wlifted) <= RANK_ONE_RATIO:
        w = [_principal(Wk) for Wk in Wlifted]
        power = float(sum(np.vdot(wk, wk).real for wk in w))
        return w, RandomizationReport(trials=0, accepted=0,
                                      best_metric=power,
                                      sdr_lower_bound=sdr_bound)
    L = [_factor(Wk) for Wk in Wlifted]
    best_w, best_power, accepted = None, np.inf, 0
    for _ in range(trials):
        cand = []
        for k in range(K):
            u = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) \
                / np.sqrt(2.0)
            cand.append(L[k] @ u)
        s = _common_scale(ch, config, cand, alpha, e)
        if s is None:
            continue
        accepted += 1
        power = s * s * float(sum(np.vdot(wk, wk).real for wk in cand))
        if power < best_power:
            best_w = [s * wk for wk in cand]
            best_power = power
    if best_w is None:
        raise RandomizationError(
            f"no feasible beamformer candidate in {trials} draws "
            f"(scale cap {SCALE_CAP:g})")
    return best_w, RandomizationReport(trials=trials, accepted=accepted,
                                       best_metric=best_power,
                                       sdr_lower_bound=sdr_bound)


def _project_unit(v) -> np.ndarray:
    mag = np.abs(v)
    out = np.where(mag > 0.0, v / np.where(mag > 0.0, mag, 1.0), 1.0 + 0.0j)
    return out.astype(complex)


def _edge_margins(ch, config, w, alpha, e) -> np.ndarray:
    r_e = np.atleast_1d(np.asarray(config.R_e, dtype=float))
    out = np.empty(ch.K)
    for k in range(ch.K):
        s = sinr_edge(ch, w, float(alpha[k]), e, k)
        out[k] = np.log2(1.0 + s) - r_e[k]
    return out


def randomize_phases(V, ch: ChannelSet, bs: BeamformingSolution,
                     config: SystemConfig, rng, trials=None):
    """Recover unit-modulus phase vectors from the lifted V matrices.

    Candidates v_k = L_k u are projected entrywise to unit modulus (zero
    entries map to 1) and e_k = conj(v_k); a candidate set is accepted when
    every cluster's edge rate through the cascade meets its target at the
    fixed beamformers and splits, and the accepted set with the largest
    minimum edge-rate margin wins. All-rank-one V short-circuits to the
    projected principal eigenvectors (zero draws; still screened, since
    projection can break feasibility). Raises RandomizationError when
    nothing survives.
    """
    rng = np.random.default_rng(rng)
    if trials is None:
        trials = config.rand_trials
    if bs.w is None:
        raise ValueError("phase screening needs recovered beamformers "
                         "(bs.w is None)")
    K = len(V)
    if ch.K != K:
        raise ValueError("cluster counts disagree")

    def screen(e):
        m = _edge_margins(ch, config, bs.w, bs.alpha, e)
        return float(m.min())

    if max(_rank_one_ratio(Vk) for Vk in V) <= RANK_ONE_RATIO:
        e = [np.conj(_project_unit(_principal(Vk))) for Vk in V]
        worst = screen(e)
        if worst < 0.0:
            raise RandomizationError(
                "rank-one phase lift fails the edge targets after unit-"
                f"modulus projection (margin {worst:.3e}); random draws "
                "cannot do better")
        return e, RandomizationReport(trials=0, accepted=0,
                                      best_metric=worst)
    L = [_factor(Vk) for Vk in V]
    N = ch.N
    best_e, best_margin, accepted = None, -np.inf, 0
    for _ in range(trials):
        e = []
        for k in range(K):
            u = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) \
                / np.sqrt(2.0)
            e.append(np.conj(_project_unit(L[k] @ u)))
        worst = screen(e)
        if worst >= 0.0:
            accepted += 1
            if worst > best_margin:
                best_e, best_margin = e, worst
    if best_e is None:
        raise RandomizationError(
            f"no feasible phase candidate in {trials} draws")
    return best_e, RandomizationReport(trials=trials, accepted=accepted,
                                       best_metric=best_margin)
