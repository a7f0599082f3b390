"""Beamforming subproblems P2/P3 and their successive-approximation loops.

For fixed IRS phases, total transmit power is minimized over lifted
beamformers W_k = w_k w_k^H (rank constraint dropped), power splits alpha_k
and slacks t_k. The bilinear products alpha_k * Tr(. W_k) in the SINR
constraints are upper-bounded by (alpha c)^2 + (Tr/c)^2 around fixed points
c_k, d_k, and the center-user constraint t_k^2 >= interference is linearized
around t_{k,0}; all three fixed points are retightened between solves.

P3 is the feasibility-restoration variant: a single slack q >= 0 widens the
approximated constraints and is minimized instead of power. Driving q to
(near) zero yields fixed points at which P2 is solvable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .conic import ConeProgram, LinExpr, ModelingError, QuadTerm, solve
from .model import ChannelSet, SystemConfig, effective_edge_channel

__all__ = [
    "FixedPoints",
    "BeamformingSolution",
    "InitSearchTrace",
    "InitializationError",
    "BeamformingError",
    "sinr_threshold",
    "build_p2",
    "build_p3",
    "update_fixed_points",
    "find_initial_points",
    "optimize_beamforming",
]

ALPHA_FLOOR = 1e-6   # update formulas divide by alpha
FP_FLOOR = 1e-12     # c, d appear as divisors in the surrogate constraints
INIT_CAP = 50
INIT_RESTARTS = 8
BEAM_CAP = 50


class InitializationError(RuntimeError):
    """Initial-point search did not reach q <= eps_init within the cap."""


class BeamformingError(RuntimeError):
    """A beamforming subproblem solve failed mid-loop."""


@dataclass(frozen=True)
class FixedPoints:
    """Surrogate anchors (c_k, d_k, t_{k,0}), one triple per cluster."""

    c: np.ndarray
    d: np.ndarray
    t0: np.ndarray

    def __post_init__(self):
        for nm in ("c", "d", "t0"):
            object.__setattr__(self, nm,
                               np.atleast_1d(np.asarray(getattr(self, nm),
                                                        dtype=float)))
        if not (self.c.shape == self.d.shape == self.t0.shape):
            raise ValueError("fixed-point arrays disagree on cluster count")
        if not (np.isfinite(self.c).all() and np.isfinite(self.d).all()
                and np.isfinite(self.t0).all()):
            raise ValueError("fixed points must be finite")
        if (self.c <= 0).any() or (self.d <= 0).any():
            raise ValueError("c and d must be strictly positive (divisors)")


@dataclass(frozen=True)
class BeamformingSolution:
    """One converged (or intermediate) P2/P3 solve in lifted form.

    w stays None until rank-one recovery fills it in. objective_history
    records the per-iteration power trace when produced by the outer loop.
    """

    W: tuple
    alpha: np.ndarray
    t: np.ndarray
    objective: float
    r_c: np.ndarray
    r_e: np.ndarray
    w: tuple | None = None
    objective_history: tuple = ()

    def __post_init__(self):
        K = len(self.W)
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))
        if self.alpha.shape != (K,) or self.t.shape != (K,):
            raise ValueError("alpha/t must have one entry per cluster")
        if (self.alpha < 0).any() or (self.alpha > 1).any():
            raise ValueError("alpha must lie in [0, 1]")
        tr = 0.0
        for Wk in self.W:
            if np.linalg.eigvalsh(Wk)[0] < -1e-9:
                raise ValueError("W must be PSD within -1e-9")
            tr += float(np.trace(Wk).real)
        if abs(tr - self.objective) > 1e-9 * max(1.0, abs(tr)):
            raise ValueError("objective must equal sum of traces")


@dataclass(frozen=True)
class InitSearchTrace:
    """q values recorded across the initial-point search iterations."""

    q_history: tuple
    converged: bool


def sinr_threshold(R):
    """SINR needed to carry rate R bit/s/Hz: 2^R - 1. Accepts arrays."""
    arr = np.asarray(R, dtype=float)
    if (arr < 0).any():
        raise ValueError("rate must be nonnegative")
    out = np.power(2.0, arr) - 1.0
    return float(out) if out.ndim == 0 else out


def _edge_operators(ch: ChannelSet, e) -> list:
    """Z_k = z z^H for the cascaded edge channel of every cluster."""
    out = []
    for k in range(ch.K):
        z = effective_edge_channel(ch, e, k)
        out.append(np.outer(z, z.conj()))
    return out


def _center_operators(ch: ChannelSet) -> list:
    return [np.outer(h, h.conj()) for h in ch.h_c]


def _build(ch: ChannelSet, e, fp: FixedPoints, config: SystemConfig,
           relaxed: bool) -> ConeProgram:
    K, M = ch.K, ch.M
    if len(fp.c) != K:
        raise ModelingError("fixed points disagree with cluster count")
    r_c = np.atleast_1d(sinr_threshold(config.R_c))
    r_e = np.atleast_1d(sinr_threshold(config.R_e))
    if r_c.shape != (K,) or r_e.shape != (K,):
        raise ModelingError("rate targets disagree with cluster count")
    Z = _edge_operators(ch, e)
    H = _center_operators(ch)
    s2 = ch.sigma2

    p = ConeProgram()
    W = [p.add_matrix_var(f"W{k}", M) for k in range(K)]
    al = [p.add_scalar_var(f"alpha{k}", lb=0.0, ub=1.0) for k in range(K)]
    ts = [p.add_scalar_var(f"t{k}", lb=0.0) for k in range(K)]
    if relaxed:
        q = p.add_scalar_var("q", lb=0.0)
        p.objective = LinExpr.scalar(q)
        slack = LinExpr.scalar(q)
    else:
        power = LinExpr()
        for k in range(K):
            power = power + LinExpr.trace(W[k], np.eye(M))
        p.objective = power
        slack = LinExpr.constant(0.0)

    for k in range(K):
        re_k, rc_k = float(r_e[k]), float(r_c[k])
        ck, dk, t0k = float(fp.c[k]), float(fp.d[k]), float(fp.t0[k])
        own_e = LinExpr.trace(W[k], Z[k])
        own_c = LinExpr.trace(W[k], H[k])
        inter_e, inter_c = LinExpr(), LinExpr()
        for i in range(K):
            if i != k:
                inter_e = inter_e + LinExpr.trace(W[i], Z[k])
                inter_c = inter_c + LinExpr.trace(W[i], H[k])
        g = 2.0 / (1.0 + re_k)
        # edge user's own rate through the cascade
        p.add_quad(f"edge{k}",
                   [QuadTerm(f=LinExpr.scalar(al[k], ck)),
                    QuadTerm(f=own_e * (1.0 / ck))],
                   own_e * g - (inter_e + s2) * (re_k * g) + slack)
        # center user decoding the edge signal before cancelling it
        p.add_quad(f"center_sic{k}",
                   [QuadTerm(f=LinExpr.scalar(al[k], dk)),
                    QuadTerm(f=own_c * (1.0 / dk))],
                   own_c * g - (inter_c + s2) * (re_k * g) + slack)
        # alpha_k Tr(H W_k) >= t_k^2 via a 2x2 Schur block
        p.add_psd2(f"schur{k}", LinExpr.scalar(al[k]), LinExpr.scalar(ts[k]),
                   own_c)
        # t_k^2 >= interference, linearized around t0: 2 t0 t - t0^2 >= rhs
        p.add_lin(f"center{k}",
                  (inter_c + s2) * rc_k - LinExpr.scalar(ts[k], 2.0 * t0k)
                  + t0k * t0k - slack,
                  "<=")
    return p.validate()


def build_p2(ch: ChannelSet, e, fp: FixedPoints,
             config: SystemConfig) -> ConeProgram:
    """Power-minimization program at fixed phases and fixed points."""
    return _build(ch, e, fp, config, relaxed=False)


def build_p3(ch: ChannelSet, e, fp: FixedPoints,
             config: SystemConfig) -> ConeProgram:
    """P2 with every approximated constraint widened by a slack q >= 0.

    q is minimized; at q = 0 the feasible set coincides with P2's. The
    Schur block and the alpha box are kept exact (always satisfiable).
    """
    return _build(ch, e, fp, config, relaxed=True)


def _extract(r, config: SystemConfig, K: int) -> BeamformingSolution:
    W = tuple(np.asarray(r.values[f"W{k}"]) for k in range(K))
    alpha = np.clip([float(r.values[f"alpha{k}"]) for k in range(K)], 0.0, 1.0)
    t = np.array([float(r.values[f"t{k}"]) for k in range(K)])
    obj = float(sum(np.trace(Wk).real for Wk in W))
    return BeamformingSolution(
        W=W, alpha=alpha, t=t, objective=obj,
        r_c=np.atleast_1d(sinr_threshold(config.R_c)),
        r_e=np.atleast_1d(sinr_threshold(config.R_e)))


def update_fixed_points(prev: BeamformingSolution, ch: ChannelSet,
                        e) -> FixedPoints:
    """Retighten (c, d, t0) at the previous solution.

    c_k = sqrt(Tr(Z_k W_k)/alpha_k) makes the AM-GM surrogate exact there;
    d_k likewise for the center channel; t0_k takes the previous t_k.
    alpha at or below ALPHA_FLOOR is clamped with a degeneracy warning.
    """
    K = ch.K
    Z = _edge_operators(ch, e)
    H = _center_operators(ch)
    c = np.empty(K)
    d = np.empty(K)
    for k in range(K):
        a = float(prev.alpha[k])
        if a <= ALPHA_FLOOR:
            warnings.warn(
                f"alpha[{k}] = {a:.3e} at the degeneracy floor; clamped",
                RuntimeWarning, stacklevel=2)
            a = ALPHA_FLOOR
        tz = max(float(np.trace(Z[k] @ prev.W[k]).real), 0.0)
        th = max(float(np.trace(H[k] @ prev.W[k]).real), 0.0)
        c[k] = max(np.sqrt(tz / a), FP_FLOOR)
        d[k] = max(np.sqrt(th / a), FP_FLOOR)
    return FixedPoints(c=c, d=d, t0=np.array(prev.t, dtype=float))


def find_initial_points(ch: ChannelSet, e, config: SystemConfig,
                        rng, fp0: FixedPoints | None = None) -> tuple:
    """Search fixed points that make P2 feasible by driving q toward zero.

    Starts from random anchors in [0.5, 2) (or from fp0 when given, e.g. the
    incumbent of an outer loop), alternates a P3 solve with a fixed-point
    update, and stops once q <= config.eps_init AND the updated anchors
    verifiably admit a P2 solution (a residual q > 0 leaves the anchor point
    eps-feasible only, which can make P2 empty on tight instances; further
    iterations drive q to solver-level zero). A basin where q plateaus above
    target, or where the strict problem stays infeasible, is abandoned for a
    fresh random draw. Returns (FixedPoints, InitSearchTrace) with the q
    values of every relaxed solve across restarts. Raises
    InitializationError once restarts are exhausted.
    """
    rng = np.random.default_rng(rng)
    K = ch.K
    q_hist = []
    last_error = "no relaxed solve attempted"
    for attempt in range(INIT_RESTARTS):
        if attempt == 0 and fp0 is not None:
            fp = fp0
        else:
            fp = FixedPoints(c=rng.uniform(0.5, 2.0, K),
                             d=rng.uniform(0.5, 2.0, K),
                             t0=rng.uniform(0.5, 2.0, K))
        prev_q = np.inf
        flat = 0
        failed_probes = 0
        for it in range(INIT_CAP):
            r = solve(build_p3(ch, e, fp, config))
            if r.status != "optimal":
                last_error = (f"relaxed subproblem returned {r.status} "
                              f"at iteration {it}")
                break
            q = float(r.values["q"])
            q_hist.append(q)
            fp = update_fixed_points(_extract(r, config, K), ch, e)
            if q <= config.eps_init:
                probe = solve(build_p2(ch, e, fp, config))
                if probe.status == "optimal":
                    return fp, InitSearchTrace(q_history=tuple(q_hist),
                                               converged=True)
                failed_probes += 1
                if failed_probes >= 5:
                    last_error = (f"q = {q:.3e} but the strict problem "
                                  f"stayed infeasible")
                    break
            else:
                flat = flat + 1 if q > 0.99 * prev_q else 0
                if flat >= 3:
                    last_error = (f"q plateaued at {q:.3e} "
                                  f"(target {config.eps_init:g})")
                    break
            prev_q = q
        else:
            last_error = (f"q = {q_hist[-1]:.3e} (target "
                          f"{config.eps_init:g}) after {INIT_CAP} iterations")
    raise InitializationError(
        f"{last_error}; {INIT_RESTARTS} random restarts exhausted "
        f"(K={K}, M={ch.M}, N={ch.N})")


def optimize_beamforming(ch: ChannelSet, e, fp0: FixedPoints,
                         config: SystemConfig) -> BeamformingSolution:
    """Alternate P2 solves with fixed-point updates until power stalls.

    Stops when the objective changes by less than config.eps_beam between
    consecutive solves; the trace is kept on the returned solution. A
    non-optimal solve or hitting the iteration cap raises BeamformingError.
    """
    fp = fp0
    history = []
    sol = None
    for m in range(BEAM_CAP):
        r = solve(build_p2(ch, e, fp, config))
        if r.status != "optimal":
            raise BeamformingError(
                f"subproblem returned {r.status} at iteration {m}")
        sol = _extract(r, config, ch.K)
        history.append(sol.objective)
        fp = update_fixed_points(sol, ch, e)
        if m > 0 and abs(history[-2] - history[-1]) < config.eps_beam:
            return replace(sol, objective_history=tuple(history))
    raise BeamformingError(
        f"objective still moving after {BEAM_CAP} iterations "
        f"(last decrease {history[-2] - history[-1]:.3e})")
