"""Phase-shift feasibility program P5 for frozen beamformers and splits.

Transmit power does not depend on the IRS phases, so the phase stage only has
to recover edge-user QoS feasibility. Each reflected path seen by edge user k
is a linear form in v_k = conj(e_k): with p_i = G_k w_i and
r = h_{k,e} o conj(p_i), the received power |z_k^H w_i|^2 equals the quartic
|r^H v_k|^2, which lifts to the linear form Tr(R V_k) with R = r r^H and
V_k = v_k v_k^H. Dropping rank(V_k) = 1 leaves a linear feasibility SDP over
unit-diagonal PSD matrices; rank-one recovery of e_k from V_k lives in the
randomization module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conic import ConeProgram, LinExpr, ModelingError, solve
from .model import ChannelSet, SystemConfig
from .beamforming import BeamformingSolution, sinr_threshold

__all__ = [
    "PhaseSolution",
    "PhaseFeasibilityError",
    "lift_edge_operators",
    "build_p5",
    "solve_phase_feasibility",
]

_DIAG_TOL = 1e-9
_EIG_TOL = 1e-9
_UNIT_TOL = 1e-12


class PhaseFeasibilityError(RuntimeError):
    """Phase program was not solved to optimality; carries the status."""

    def __init__(self, message, status):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class PhaseSolution:
    """Lifted phase matrices V_k, optionally with recovered e_k and angles.

    V_k is Hermitian PSD with unit diagonal. When present, e[k] has
    unit-modulus entries e_n = exp(-j theta_n) (reflection convention of the
    model module, so v_k = conj(e_k) is the lifted vector) and theta[k]
    holds the angles in [0, 2pi).
    """

    V: tuple
    e: tuple | None = None
    theta: tuple | None = None

    def __post_init__(self):
        V = tuple(np.asarray(Vk) for Vk in self.V)
        object.__setattr__(self, "V", V)
        if not V:
            raise ValueError("V must hold at least one cluster")
        N = V[0].shape[0]
        for Vk in V:
            if Vk.shape != (N, N):
                raise ValueError("V matrices must share one square shape")
            scale = 1.0 + float(np.abs(Vk).max())
            if np.abs(Vk - Vk.conj().T).max() > 1e-10 * scale:
                raise ValueError("V must be Hermitian")
            if np.abs(np.diagonal(Vk).real - 1.0).max() > _DIAG_TOL:
                raise ValueError("V must have unit diagonal")
            if float(np.linalg.eigvalsh(Vk)[0]) < -_EIG_TOL:
                raise ValueError("V must be PSD within tolerance")
        if self.e is not None:
            e = tuple(np.asarray(ek, dtype=complex) for ek in self.e)
            object.__setattr__(self, "e", e)
            if len(e) != len(V):
                raise ValueError("e disagrees with V on cluster count")
            for ek in e:
                if ek.shape != (N,):
                    raise ValueError("e vectors must have one entry per element")
                if np.abs(np.abs(ek) - 1.0).max() > _UNIT_TOL:
                    raise ValueError("e entries must have unit modulus")
        if self.theta is not None:
            if self.e is None:
                raise ValueError("theta requires e")
            th = tuple(np.asarray(t, dtype=float) for t in self.theta)
            object.__setattr__(self, "theta", th)
            if len(th) != len(V):
                raise ValueError("theta disagrees with V on cluster count")
            for tk, ek in zip(th, self.e):
                if tk.shape != (N,):
                    raise ValueError("theta must have one angle per element")
                if (tk < 0.0).any() or (tk >= 2.0 * np.pi).any():
                    raise ValueError("angles must lie in [0, 2pi)")
                if np.abs(np.exp(-1j * tk) - ek).max() > 1e-9:
                    raise ValueError("theta inconsistent with e")


def lift_edge_operators(ch: ChannelSet, w, k: int) -> list:
    """Rank-one operators R^i = r r^H, r = h_{k,e} o conj(G_k w_i), per beam.

    For any unit-modulus e_k, Tr(R^i V) with V = conj(e_k) conj(e_k)^H equals
    the reflected-path power |z_k^H w_i|^2 of beam i at edge user k.
    """
    if len(w) != ch.K:
        raise ValueError("one beamformer per cluster required")
    out = []
    for wi in w:
        wi = np.asarray(wi, dtype=complex)
        if wi.shape != (ch.M,):
            raise ValueError("beamformer dimension disagrees with antennas")
        r = ch.h_e[k] * np.conj(ch.G[k] @ wi)
        out.append(np.outer(r, r.conj()))
    return out


def build_p5(ch: ChannelSet, bs: BeamformingSolution,
             config: SystemConfig) -> ConeProgram:
    """Feasibility program over lifted phase matrices at fixed beamformers.

    Constant objective; per cluster one affine edge-QoS row
    (1+r_e) alpha Tr(R^k V_k) <= Tr(R^k V_k) - r_e (sum_i Tr(R^i V_i) + s2),
    each V_k PSD with unit diagonal. Requires recovered beamformer vectors
    on bs (the lifted W do not define the per-element paths p_i).
    """
    if bs.w is None:
        raise ModelingError("phase program needs recovered beamformers "
                            "(bs.w is None)")
    K, N = ch.K, ch.N
    r_e = np.atleast_1d(sinr_threshold(config.R_e))
    if r_e.shape != (K,):
        raise ModelingError("rate targets disagree with cluster count")
    p = ConeProgram()
    for k in range(K):
        p.add_matrix_var(f"V{k}", N)
        for n in range(N):
            p.add_diag(f"unit{k}_{n}", f"V{k}", n, 1.0)
    for k in range(K):
        re_k = float(r_e[k])
        a = float(bs.alpha[k])
        R = lift_edge_operators(ch, bs.w, k)
        expr = LinExpr.trace(f"V{k}", ((1.0 + re_k) * a - 1.0) * R[k])
        for i in range(K):
            if i != k:
                expr = expr + LinExpr.trace(f"V{i}", re_k * R[i])
        p.add_lin(f"edge{k}", expr + re_k * ch.sigma2, "<=")
    return p.validate()


def solve_phase_feasibility(ch: ChannelSet, bs: BeamformingSolution,
                            config: SystemConfig) -> PhaseSolution:
    """Solve the lifted phase program; raises when no witness is found.

    The returned solution carries the V matrices only (diagonals snapped to
    exactly one by a congruence that preserves PSD); unit-modulus phase
    vectors come out of the randomization stage. Raises
    PhaseFeasibilityError carrying the solver status otherwise.
    """
    r = solve(build_p5(ch, bs, config))
    if r.status != "optimal":
        raise PhaseFeasibilityError(
            f"phase feasibility program ended {r.status}", status=r.status)
    V = []
    for k in range(ch.K):
        Vk = np.asarray(r.values[f"V{k}"])
        Vk = (Vk + Vk.conj().T) / 2.0
        d = 1.0 / np.sqrt(np.maximum(np.diagonal(Vk).real, 1e-12))
        V.append(d[:, None] * Vk * d[None, :])
    return PhaseSolution(V=tuple(V))
