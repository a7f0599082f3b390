"""Outer loops gluing the beamforming and phase stages into full algorithms.

Two routes produce a complete design (beams, splits, phases). The alternating
route searches feasible fixed points, optimizes the lifted beamforming
program, recovers vectors, then refreshes the phases through the feasibility
program, and repeats while the recovered power keeps dropping. The shared
split route pins every cluster to one power split from a grid and runs a
short inner alternation per grid point; with the split frozen the lifted
beamforming program is jointly convex, so no fixed points are needed. Both
are exposed next to a random-phase benchmark, a two-slot time-division
benchmark, and a coarse interior-point cost model fed by measured solve
counts.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from time import perf_counter

import numpy as np

from .conic import ConeProgram, LinExpr, ModelingError, solve
from .model import (ChannelSet, RateReport, SystemConfig,
                    effective_edge_channel, evaluate_solution, total_power)
from .beamforming import (BeamformingError, BeamformingSolution,
                          InitializationError, sinr_threshold,
                          _center_operators, _edge_operators,
                          find_initial_points, optimize_beamforming,
                          update_fixed_points)
from .phase import PhaseFeasibilityError, build_p5, solve_phase_feasibility
from .randomization import (RANK_ONE_RATIO, SCALE_CAP, SCALE_TOL,
                            RandomizationError, _common_scale, _factor,
                            _principal, _rank_one_ratio,
                            randomize_beamformers, randomize_phases)

__all__ = [
    "FullSolution",
    "AlgorithmTrace",
    "OrchestrationError",
    "run_alternating",
    "run_partial_exhaustive",
    "random_phase_baseline",
    "oma_baseline",
    "build_p6",
    "build_p7",
    "complexity_estimate",
    "verify_full_solution",
]

OUTER_CAP = 15       # alternating outer rounds
INNER_CAP = 10       # shared-split and time-division inner rounds
INNER_EPS = 1e-3     # inner-loop stop on recovered-power improvement


class OrchestrationError(RuntimeError):
    """An outer algorithm could not produce any feasible design."""


@dataclass(frozen=True)
class FullSolution:
    """Complete recovered design plus the bookkeeping to audit it.

    For the "oma" scheme w/alpha/e describe the edge slot (splits all zero:
    that slot carries no center signal), w_center holds the center-slot
    beams, power_watts is the two-slot time average, and the report carries
    the slot-averaged rates.
    """

    w: tuple
    alpha: np.ndarray
    e: tuple
    power_watts: float
    report: RateReport
    iterations: dict
    solver_calls: dict
    degraded: bool = False
    scheme: str = "noma"
    w_center: tuple | None = None

    def __post_init__(self):
        w = tuple(np.asarray(wk, dtype=complex) for wk in self.w)
        e = tuple(np.asarray(ek, dtype=complex) for ek in self.e)
        alpha = np.asarray(self.alpha, dtype=float)
        K = len(w)
        if K == 0 or alpha.shape != (K,) or len(e) != K:
            raise ValueError("w, alpha and e must agree on the cluster count")
        if (alpha < 0.0).any() or (alpha > 1.0).any():
            raise ValueError("alpha must lie in [0, 1]")
        for wk in w:
            if wk.ndim != 1 or wk.shape != w[0].shape:
                raise ValueError("beamformers must be 1-D and equally sized")
        for ek in e:
            if ek.ndim != 1 or ek.shape != e[0].shape:
                raise ValueError("phase vectors must be 1-D and equally "
                                 "sized")
            if np.abs(np.abs(ek) - 1.0).max() > 1e-9:
                raise ValueError("phase vectors must be unit modulus")
        if not isinstance(self.report, RateReport):
            raise ValueError("report must be a RateReport")
        if self.scheme not in ("noma", "oma"):
            raise ValueError("scheme must be 'noma' or 'oma'")
        if self.scheme == "oma":
            if self.w_center is None:
                raise ValueError("oma solutions carry the center-slot beams")
            wc = tuple(np.asarray(v, dtype=complex) for v in self.w_center)
            if len(wc) != K:
                raise ValueError("w_center must hold one beam per cluster")
            object.__setattr__(self, "w_center", wc)
            power = 0.5 * (total_power(w) + total_power(wc))
        else:
            if self.w_center is not None:
                raise ValueError("w_center is reserved for the oma scheme")
            power = total_power(w)
        if not np.isfinite(self.power_watts) or self.power_watts <= 0.0:
            raise ValueError("power must be finite and positive")
        if abs(self.power_watts - power) > 1e-9 * max(1.0, power):
            raise ValueError("power_watts must match the stored beamformers")
        for name in ("iterations", "solver_calls"):
            d = getattr(self, name)
            if not isinstance(d, dict) or not all(
                    isinstance(v, int) and v >= 0 for v in d.values()):
                raise ValueError(f"{name} must map stage names to counts")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "e", e)


@dataclass(frozen=True)
class AlgorithmTrace:
    """Objective curves, init-search q traces, timing and solve counts.

    outer_objective is the accepted (incumbent) power after each outer
    round, candidate_objective the raw power each round actually recovered;
    grid_alpha labels the entries with shared splits where a grid is
    involved. q_traces may hold one orphan entry when a later round fails
    between its init search and its candidate.
    """

    outer_objective: tuple
    candidate_objective: tuple
    q_traces: tuple
    stage_seconds: dict
    solver_calls: dict
    grid_alpha: tuple = ()

    def __post_init__(self):
        outer = tuple(float(v) for v in self.outer_objective)
        cand = tuple(float(v) for v in self.candidate_objective)
        qt = tuple(tuple(float(q) for q in t) for t in self.q_traces)
        ga = tuple(float(a) for a in self.grid_alpha)
        if not all(np.isfinite(outer)) or not all(np.isfinite(cand)):
            raise ValueError("objective traces must be finite")
        if len(cand) != len(outer):
            raise ValueError("candidate and outer traces must align")
        if len(qt) > len(outer) + 1:
            raise ValueError("more q traces than outer rounds")
        for t in qt:
            if not all(np.isfinite(t)):
                raise ValueError("q traces must be finite")
        if ga and len(ga) != len(outer):
            raise ValueError("grid labels must align with the objective "
                             "trace")
        for name in ("stage_seconds", "solver_calls"):
            d = getattr(self, name)
            if not isinstance(d, dict) or not all(
                    v >= 0 for v in d.values()):
                raise ValueError(f"{name} must map stage names to "
                                 "nonnegative numbers")
        object.__setattr__(self, "outer_objective", outer)
        object.__setattr__(self, "candidate_objective", cand)
        object.__setattr__(self, "q_traces", qt)
        object.__setattr__(self, "grid_alpha", ga)


def _uniform_phases(rng, K: int, N: int) -> tuple:
    return tuple(np.exp(-1j * rng.uniform(0.0, 2.0 * np.pi, N))
                 for _ in range(K))


def _lifted_values(res, K: int) -> list:
    out = []
    for k in range(K):
        Wk = np.asarray(res.values[f"W{k}"])
        out.append((Wk + Wk.conj().T) / 2.0)
    return out


def _bs_from_vectors(w: tuple, alpha, config: SystemConfig) -> BeamformingSolution:
    """Wrap recovered vectors as a lifted solution for the phase stage."""
    W = tuple(np.outer(wk, wk.conj()) for wk in w)
    return BeamformingSolution(W=W, alpha=np.asarray(alpha, dtype=float),
                               t=np.zeros(len(w)), objective=total_power(w),
                               r_c=sinr_threshold(config.R_c),
                               r_e=sinr_threshold(config.R_e),
                               w=tuple(np.asarray(wk, dtype=complex)
                                       for wk in w))


def _rng_for(config: SystemConfig, rng):
    """Normalize an entry-point rng, defaulting to the config seed."""
    return np.random.default_rng(config.seed if rng is None else rng)


def _repair_candidate(ch, config, w, alpha, e):
    """Nudge recovered beams onto the feasible side of the rate targets.

    Keeping only the principal component of a near-rank-one matrix can
    leave a candidate a hair outside the targets (around 1e-6 relative
    in practice). The margin is nondecreasing in a common amplitude
    scale, so the smallest repairing scale costs almost nothing; (None,
    None) means even the scale cap cannot reach the targets.
    """
    w = tuple(np.asarray(wk, dtype=complex) for wk in w)
    s = _common_scale(ch, config, list(w), alpha, e)
    if s is None:
        return None, None
    if s > 1.0:
        w = tuple(s * wk for wk in w)
    return w, evaluate_solution(ch, config, w, alpha, e)


def run_alternating(ch: ChannelSet, config: SystemConfig, rng=None):
    """Alternate beamforming and phase feasibility from random phases.

    Each outer round searches feasible fixed points at the current phases
    (warm-started from the incumbent after the first round), runs the
    beamforming descent, recovers vectors, and evaluates the candidate; a
    round that improves the incumbent by at least config.eps_alt then
    refreshes the phases through the feasibility program and its
    randomization, otherwise the loop stops. Returns the best feasible
    design found and its trace.

    A candidate that fails to improve never replaces the incumbent, so the
    outer objective trace is non-increasing by construction. Stage failures
    before the first feasible candidate raise OrchestrationError; later
    failures return the incumbent, flagged degraded unless the phase
    program was cleanly infeasible (then the previous phases simply stay).
    rng None replays the config seed.
    """
    rng = _rng_for(config, rng)
    K = ch.K
    e_work = _uniform_phases(rng, K, ch.N)
    secs = {"init": 0.0, "beam": 0.0, "beam_recovery": 0.0,
            "phase": 0.0, "phase_recovery": 0.0}
    calls = {"p3": 0, "p2_probe": 0, "p2": 0, "p5": 0}
    init_rounds = 0
    beam_rounds = 0
    q_traces = []
    outer_curve = []
    cand_curve = []
    best = None          # (power, w, alpha, e, report)
    degraded = False
    fp_warm = None
    for _ in range(OUTER_CAP):
        try:
            t0 = perf_counter()
            fp, itrace = find_initial_points(ch, e_work, config, rng,
                                             fp0=fp_warm)
            secs["init"] += perf_counter() - t0
            q_traces.append(itrace.q_history)
            calls["p3"] += len(itrace.q_history)
            calls["p2_probe"] += sum(1 for q in itrace.q_history
                                     if q <= config.eps_init)
            init_rounds += len(itrace.q_history)

            t0 = perf_counter()
            bs = optimize_beamforming(ch, e_work, fp, config)
            secs["beam"] += perf_counter() - t0
            calls["p2"] += len(bs.objective_history)
            beam_rounds += len(bs.objective_history)

            t0 = perf_counter()
            w, _ = randomize_beamformers(bs.W, bs.alpha, ch, e_work,
                                         config, rng)
            secs["beam_recovery"] += perf_counter() - t0
        except (InitializationError, BeamformingError,
                RandomizationError) as err:
            if best is None:
                raise OrchestrationError(
                    "alternating optimization failed before any feasible "
                    f"candidate existed: {err}") from err
            degraded = True
            break
        w, report = _repair_candidate(ch, config, w, bs.alpha, e_work)
        if w is None:
            if best is None:
                raise OrchestrationError(
                    "first recovered candidate missed the rate targets "
                    "beyond scale repair")
            degraded = True
            break
        power = total_power(w)
        cand_curve.append(power)
        prev_best = best[0] if best is not None else np.inf
        if power < prev_best:
            best = (power, w, np.array(bs.alpha), e_work, report)
        outer_curve.append(best[0])
        if prev_best - best[0] < config.eps_alt:
            break
        bs = replace(bs, w=w)
        try:
            t0 = perf_counter()
            ps = solve_phase_feasibility(ch, bs, config)
            secs["phase"] += perf_counter() - t0
            calls["p5"] += 1
        except PhaseFeasibilityError as err:
            # near convergence the refreshed-phase set loses interior and
            # an infeasible verdict is the expected terminal event: keep
            # the incumbent phases and stop; other verdicts are breakdowns
            secs["phase"] += perf_counter() - t0
            calls["p5"] += 1
            if err.status != "infeasible":
                degraded = True
            break
        try:
            t0 = perf_counter()
            e_new, _ = randomize_phases(ps.V, ch, bs, config, rng)
            secs["phase_recovery"] += perf_counter() - t0
        except RandomizationError:
            degraded = True
            break
        e_work = e_new
        # the phase stage only runs on improving rounds, so the refreshed
        # phases pair with the incumbent beams
        best = (best[0], best[1], best[2], e_new,
                evaluate_solution(ch, config, best[1], best[2], e_new))
        fp_warm = update_fixed_points(bs, ch, e_new)
    power, w, alpha, e, report = best
    sol = FullSolution(
        w=w, alpha=alpha, e=e, power_watts=power, report=report,
        iterations={"outer": len(cand_curve), "init": init_rounds,
                    "beam": beam_rounds},
        solver_calls=dict(calls), degraded=degraded)
    trace = AlgorithmTrace(
        outer_objective=tuple(outer_curve),
        candidate_objective=tuple(cand_curve),
        q_traces=tuple(q_traces), stage_seconds=secs,
        solver_calls=dict(calls))
    return sol, trace


def build_p6(ch: ChannelSet, e, alpha_shared, config: SystemConfig) -> ConeProgram:
    """Lifted beamforming program at one shared split and frozen phases.

    With the split pinned, every QoS row is affine in the lifted matrices:
    per cluster a center-rate floor, an edge-rate ceiling on the reflected
    path, and the matching ceiling for the center user decoding the edge
    signal. Jointly convex, so the solver settles it in one shot.
    """
    a = float(alpha_shared)
    if not 0.0 < a < 1.0:
        raise ModelingError("shared split must lie strictly inside (0, 1)")
    K, M = ch.K, ch.M
    r_c = np.atleast_1d(sinr_threshold(config.R_c))
    r_e = np.atleast_1d(sinr_threshold(config.R_e))
    if r_c.shape != (K,) or r_e.shape != (K,):
        raise ModelingError("rate targets disagree with cluster count")
    Z = _edge_operators(ch, e)
    H = _center_operators(ch)
    s2 = ch.sigma2
    p = ConeProgram()
    W = [p.add_matrix_var(f"W{k}", M) for k in range(K)]
    obj = LinExpr()
    for k in range(K):
        obj = obj + LinExpr.trace(W[k], np.eye(M))
    p.objective = obj
    for k in range(K):
        rc_k, re_k = float(r_c[k]), float(r_e[k])
        own_e = LinExpr.trace(W[k], Z[k])
        own_c = LinExpr.trace(W[k], H[k])
        inter_e, inter_c = LinExpr(), LinExpr()
        for i in range(K):
            if i != k:
                inter_e = inter_e + LinExpr.trace(W[i], Z[k])
                inter_c = inter_c + LinExpr.trace(W[i], H[k])
        g = re_k / (1.0 + re_k)
        p.add_lin(f"center{k}", (inter_c + s2) * rc_k - own_c * a, "<=")
        p.add_lin(f"edge{k}",
                  own_e * (a - 1.0 / (1.0 + re_k)) + (inter_e + s2) * g,
                  "<=")
        p.add_lin(f"center_sic{k}",
                  own_c * (a - 1.0 / (1.0 + re_k)) + (inter_c + s2) * g,
                  "<=")
    return p.validate()


def build_p7(ch: ChannelSet, w, alpha_shared, config: SystemConfig) -> ConeProgram:
    """Phase feasibility program with every cluster at one shared split.

    Identical rows to the per-cluster phase program; only the split is
    pinned, so the build delegates to it.
    """
    a = float(alpha_shared)
    if not 0.0 < a < 1.0:
        raise ModelingError("shared split must lie strictly inside (0, 1)")
    w = tuple(np.asarray(wk, dtype=complex) for wk in w)
    bs = _bs_from_vectors(w, np.full(ch.K, a), config)
    return build_p5(ch, bs, config)


def run_partial_exhaustive(ch: ChannelSet, config: SystemConfig, rng=None):
    """Grid-search one shared split with a short alternation per point.

    Every split on config.alpha_grid gets fresh random phases, then up to
    INNER_CAP rounds of shared-split beamforming, vector recovery, phase
    feasibility and phase recovery, stopping once the recovered power
    improves by less than INNER_EPS. Each grid point contributes its best
    complete round; the least-power point wins. Points whose programs or
    recoveries fail before any complete round are skipped; if every point
    is skipped an OrchestrationError is raised. rng None replays the
    config seed.
    """
    rng = _rng_for(config, rng)
    K = ch.K
    secs = {"beam": 0.0, "beam_recovery": 0.0,
            "phase": 0.0, "phase_recovery": 0.0}
    calls = {"p6": 0, "p7": 0}
    inner_total = 0
    grid_points = []     # (power, alpha, w, e, report) per feasible point
    for a in config.alpha_grid:
        e = _uniform_phases(rng, K, ch.N)
        alpha_vec = np.full(K, float(a))
        point = None
        prev = np.inf
        for _ in range(INNER_CAP):
            t0 = perf_counter()
            res = solve(build_p6(ch, e, a, config))
            secs["beam"] += perf_counter() - t0
            calls["p6"] += 1
            if res.status != "optimal":
                break
            try:
                t0 = perf_counter()
                w, _ = randomize_beamformers(_lifted_values(res, K),
                                             alpha_vec, ch, e, config, rng)
                secs["beam_recovery"] += perf_counter() - t0
            except RandomizationError:
                secs["beam_recovery"] += perf_counter() - t0
                break
            inner_total += 1
            w, report = _repair_candidate(ch, config, w, alpha_vec, e)
            if w is None:
                break
            power = total_power(w)
            if point is None or power < point[0]:
                point = (power, w, e, report)
            if prev - power < INNER_EPS:
                break
            prev = power
            bs = _bs_from_vectors(w, alpha_vec, config)
            try:
                t0 = perf_counter()
                ps = solve_phase_feasibility(ch, bs, config)
                secs["phase"] += perf_counter() - t0
                calls["p7"] += 1
            except PhaseFeasibilityError:
                secs["phase"] += perf_counter() - t0
                calls["p7"] += 1
                break
            try:
                t0 = perf_counter()
                e_new, _ = randomize_phases(ps.V, ch, bs, config, rng)
                secs["phase_recovery"] += perf_counter() - t0
            except RandomizationError:
                secs["phase_recovery"] += perf_counter() - t0
                break
            e = e_new
        if point is not None:
            grid_points.append((point[0], float(a), point[1], point[2],
                                point[3]))
    if not grid_points:
        raise OrchestrationError(
            "no shared-split grid point produced a feasible design "
            f"(grid {config.alpha_grid})")
    power, a_best, w, e, report = min(grid_points, key=lambda g: g[0])
    sol = FullSolution(
        w=w, alpha=np.full(K, a_best), e=e, power_watts=power, report=report,
        iterations={"grid_points": len(config.alpha_grid),
                    "grid_feasible": len(grid_points),
                    "inner": inner_total},
        solver_calls=dict(calls))
    trace = AlgorithmTrace(
        outer_objective=tuple(g[0] for g in grid_points),
        candidate_objective=tuple(g[0] for g in grid_points),
        q_traces=(), stage_seconds=secs, solver_calls=dict(calls),
        grid_alpha=tuple(g[1] for g in grid_points))
    return sol, trace


def random_phase_baseline(ch: ChannelSet, config: SystemConfig,
                          rng=None) -> FullSolution:
    """Shared-split grid search with phases drawn once and never touched.

    Draws every phase uniformly, then solves the shared-split beamforming
    program and recovers vectors at each grid split; the least-power
    feasible point wins. The returned design carries exactly the drawn
    phases. rng None replays the config seed.
    """
    rng = _rng_for(config, rng)
    K = ch.K
    e = _uniform_phases(rng, K, ch.N)
    calls = {"p6": 0}
    feasible = 0
    best = None          # (power, alpha, w, report)
    for a in config.alpha_grid:
        alpha_vec = np.full(K, float(a))
        res = solve(build_p6(ch, e, a, config))
        calls["p6"] += 1
        if res.status != "optimal":
            continue
        try:
            w, _ = randomize_beamformers(_lifted_values(res, K), alpha_vec,
                                         ch, e, config, rng)
        except RandomizationError:
            continue
        w, report = _repair_candidate(ch, config, w, alpha_vec, e)
        if w is None:
            continue
        power = total_power(w)
        feasible += 1
        if best is None or power < best[0]:
            best = (power, float(a), w, report)
    if best is None:
        raise OrchestrationError(
            "no shared-split grid point was feasible at the drawn phases "
            f"(grid {config.alpha_grid})")
    power, a_best, w, report = best
    return FullSolution(
        w=w, alpha=np.full(K, a_best), e=e, power_watts=power, report=report,
        iterations={"grid_points": len(config.alpha_grid),
                    "grid_feasible": feasible},
        solver_calls=dict(calls))


def _slot_program(chans, M: int, sigma2: float, r) -> ConeProgram:
    """Single-stream downlink power minimization in lifted form.

    One active user per cluster with channel chans[k] and SINR floor r[k];
    rows are affine in the lifted matrices.
    """
    K = len(chans)
    p = ConeProgram()
    W = [p.add_matrix_var(f"W{k}", M) for k in range(K)]
    obj = LinExpr()
    for k in range(K):
        obj = obj + LinExpr.trace(W[k], np.eye(M))
    p.objective = obj
    for k in range(K):
        op = np.outer(chans[k], np.conj(chans[k]))
        expr = LinExpr.constant(float(r[k]) * sigma2)
        for i in range(K):
            if i == k:
                expr = expr - LinExpr.trace(W[k], op)
            else:
                expr = expr + LinExpr.trace(W[i], float(r[k]) * op)
        p.add_lin(f"user{k}", expr, "<=")
    return p.validate()


def _slot_sinrs(chans, w, sigma2: float) -> np.ndarray:
    K = len(chans)
    out = np.empty(K)
    gains = np.empty((K, K))
    for k in range(K):
        for i in range(K):
            gains[k, i] = np.abs(np.vdot(chans[k], w[i])) ** 2
    for k in range(K):
        out[k] = gains[k, k] / (gains[k].sum() - gains[k, k] + sigma2)
    return out


def _scale_to_slot_targets(chans, w, r, sigma2: float):
    """Smallest common amplitude factor in [1, SCALE_CAP] meeting r, or None."""
    def worst(s):
        sw = [s * wk for wk in w]
        return float((_slot_sinrs(chans, sw, sigma2) - r).min())

    if worst(1.0) >= 0.0:
        return 1.0
    if worst(SCALE_CAP) < 0.0:
        return None
    lo, hi = 1.0, SCALE_CAP
    while hi - lo > SCALE_TOL:
        mid = 0.5 * (lo + hi)
        if worst(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def _recover_slot(Wlifted, chans, r, sigma2: float, rng, trials: int) -> list:
    """Rank-one recovery for a slot, mirroring the main beamformer path."""
    M = Wlifted[0].shape[0]
    if max(_rank_one_ratio(Wk) for Wk in Wlifted) <= RANK_ONE_RATIO:
        w = [_principal(Wk) for Wk in Wlifted]
        s = _scale_to_slot_targets(chans, w, r, sigma2)
        if s is not None:
            return [s * wk for wk in w]
    L = [_factor(Wk) for Wk in Wlifted]
    best, best_power = None, np.inf
    for _ in range(trials):
        cand = []
        for Lk in L:
            u = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) \
                / np.sqrt(2.0)
            cand.append(Lk @ u)
        s = _scale_to_slot_targets(chans, cand, r, sigma2)
        if s is None:
            continue
        power = s * s * total_power(cand)
        if power < best_power:
            best, best_power = [s * wk for wk in cand], power
    if best is None:
        raise RandomizationError(
            f"no feasible slot beamformer in {trials} draws "
            f"(scale cap {SCALE_CAP:g})")
    return best


def _oma_report(ch: ChannelSet, config: SystemConfig, cfg2: SystemConfig,
                w_center, w_edge, e) -> RateReport:
    """Slot-averaged rates for the two-slot time-division scheme.

    Slot evaluations reuse the standard evaluator with degenerate splits
    (all power to the slot's user). The edge rate comes straight from the
    edge SINR: no successive decoding happens in either slot, so the
    decode-edge column is reported unconstrained (+inf).
    """
    K = ch.K
    rep1 = evaluate_solution(ch, cfg2, w_center, np.ones(K), e)
    rep2 = evaluate_solution(ch, cfg2, w_edge, np.zeros(K), e)
    rate_c = rep1.rate_c / 2.0
    rate_e = np.log2(1.0 + rep2.sinr_e) / 2.0
    margin = float(min((rate_c - config.R_c).min(),
                       (rate_e - config.R_e).min()))
    return RateReport(sinr_c=rep1.sinr_c, sinr_e=rep2.sinr_e,
                      sinr_c_to_e=np.full(K, np.inf),
                      rate_c=rate_c, rate_e=rate_e,
                      feasible=bool(margin >= 0.0), margin=margin)


def oma_baseline(ch: ChannelSet, config: SystemConfig, rng=None) -> FullSolution:
    """Two-slot time-division benchmark: centers, then edges, at rate 2R.

    Each cluster's users get equal orthogonal slots, so per-slot targets are
    doubled to conserve average rate. The center slot is one single-stream
    program over the direct links. The edge slot alternates a single-stream
    program over the cascades with the phase feasibility stage (splits
    pinned to zero reduce its rows to the orthogonal form) until the slot
    power stalls. Reported power is the time average of the two slots. rng
    seeds the recovery draws; None replays the config seed.
    """
    rng = _rng_for(config, rng)
    K = ch.K
    s2 = ch.sigma2
    cfg2 = replace(config, R_c=2.0 * config.R_c, R_e=2.0 * config.R_e)
    calls = {"p6": 0, "p5": 0}

    r1 = np.atleast_1d(sinr_threshold(cfg2.R_c))
    res = solve(_slot_program(ch.h_c, ch.M, s2, r1))
    calls["p6"] += 1
    if res.status != "optimal":
        raise OrchestrationError(f"center-slot program ended {res.status}")
    try:
        w_center = _recover_slot(_lifted_values(res, K), ch.h_c, r1, s2,
                                 rng, config.rand_trials)
    except RandomizationError as err:
        raise OrchestrationError(
            f"center-slot recovery failed: {err}") from err
    power_c = total_power(w_center)

    r2 = np.atleast_1d(sinr_threshold(cfg2.R_e))
    e = tuple(np.ones(ch.N, dtype=complex) for _ in range(K))
    best = None          # (power, w, e)
    prev = np.inf
    rounds = 0
    for _ in range(INNER_CAP):
        z = [effective_edge_channel(ch, e, k) for k in range(K)]
        res = solve(_slot_program(z, ch.M, s2, r2))
        calls["p6"] += 1
        if res.status != "optimal":
            if best is None:
                raise OrchestrationError(
                    f"edge-slot program ended {res.status}")
            break
        try:
            w_edge = _recover_slot(_lifted_values(res, K), z, r2, s2,
                                   rng, config.rand_trials)
        except RandomizationError as err:
            if best is None:
                raise OrchestrationError(
                    f"edge-slot recovery failed: {err}") from err
            break
        rounds += 1
        power = total_power(w_edge)
        if best is None or power < best[0]:
            best = (power, tuple(np.asarray(wk, dtype=complex)
                                 for wk in w_edge), e)
        if prev - power < INNER_EPS:
            break
        prev = power
        bs = _bs_from_vectors(best[1], np.zeros(K), cfg2)
        try:
            ps = solve_phase_feasibility(ch, bs, cfg2)
            calls["p5"] += 1
            e_new, _ = randomize_phases(ps.V, ch, bs, cfg2, rng)
        except PhaseFeasibilityError:
            calls["p5"] += 1
            break
        except RandomizationError:
            break
        e = e_new
    power_e, w_edge, e = best
    report = _oma_report(ch, config, cfg2, w_center, w_edge, e)
    return FullSolution(
        w=w_edge, alpha=np.zeros(K), e=e,
        power_watts=0.5 * (power_c + power_e), report=report,
        iterations={"edge_rounds": rounds},
        solver_calls=dict(calls), scheme="oma",
        w_center=tuple(np.asarray(wk, dtype=complex) for wk in w_center))


_PHASE_SIZED = frozenset({"p5", "p7"})


def complexity_estimate(config: SystemConfig, counts: dict,
                        eps_c: float = 1e-8) -> dict:
    """Interior-point cost model n^4.5 log(1/eps_c) per conic solve.

    Multiplies the per-solve model by the measured solve counts; n is the
    total realified semidefinite block side per program family (2KM for the
    beamforming-sized programs, 2KN for the phase-sized ones, keyed by
    stage names "p5"/"p7"). An asymptotic model for comparing runs, not a
    timing prediction.
    """
    if not 0.0 < eps_c < 1.0:
        raise ValueError("eps_c must lie in (0, 1)")
    n1 = 2.0 * config.K * config.M
    n2 = 2.0 * config.K * config.N
    acc = float(np.log(1.0 / eps_c))
    per_stage = {}
    for name, count in counts.items():
        if not float(count) >= 0.0:
            raise ValueError("solve counts must be nonnegative")
        n = n2 if name in _PHASE_SIZED else n1
        per_stage[name] = float(count) * n ** 4.5 * acc
    return {"n1": n1, "n2": n2, "eps_c": float(eps_c),
            "per_stage": per_stage, "total": float(sum(per_stage.values())),
            "note": "asymptotic interior-point cost model, "
                    "not a timing prediction"}


def _check_close(name: str, stored, fresh) -> None:
    ok = np.all(np.isclose(np.asarray(stored, dtype=float),
                           np.asarray(fresh, dtype=float),
                           rtol=1e-9, atol=0.0))
    if not ok:
        raise ValueError(f"stored {name} disagrees with re-evaluation: "
                         f"{stored} vs {fresh}")


def verify_full_solution(ch: ChannelSet, config: SystemConfig,
                         sol: FullSolution) -> RateReport:
    """Re-derive a solution's report and power from its own fields.

    Raises ValueError on any relative disagreement beyond 1e-9; returns the
    freshly computed report.
    """
    if sol.scheme == "oma":
        cfg2 = replace(config, R_c=2.0 * config.R_c, R_e=2.0 * config.R_e)
        fresh = _oma_report(ch, config, cfg2, sol.w_center, sol.w, sol.e)
        power = 0.5 * (total_power(sol.w) + total_power(sol.w_center))
    else:
        fresh = evaluate_solution(ch, config, sol.w, sol.alpha, sol.e)
        power = total_power(sol.w)
    _check_close("power_watts", sol.power_watts, power)
    for name in ("sinr_c", "sinr_e", "sinr_c_to_e", "rate_c", "rate_e",
                 "margin"):
        _check_close(name, getattr(sol.report, name), getattr(fresh, name))
    if bool(sol.report.feasible) != bool(fresh.feasible):
        raise ValueError("stored feasibility flag disagrees with "
                         "re-evaluation")
    return fresh
