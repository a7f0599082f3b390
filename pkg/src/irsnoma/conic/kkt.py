"""Independent recomputation of optimality certificates for solver results."""

from __future__ import annotations

import numpy as np

from .program import ConeProgram, LinExpr
from .solver import SolverResult, _apply_A, _apply_AT, _Vec

__all__ = ["CertificationError", "check_kkt"]


class CertificationError(AssertionError):
    """A recomputed residual exceeded 10x the configured tolerance."""


def _expr_scale(expr: LinExpr) -> float:
    s = 1.0 + abs(expr.const)
    for c in expr.scalars.values():
        s += abs(c)
    for C in expr.mats.values():
        s += float(np.linalg.norm(C))
    return s


def _violation_scales(p: ConeProgram) -> dict:
    scales = {}
    for mv in p.matrix_vars:
        scales[f"psd:{mv.name}"] = 1.0
    for sv in p.scalar_vars:
        scales[f"bounds:{sv.name}"] = 1.0 + max(abs(sv.lb or 0.0), abs(sv.ub or 0.0))
    for con in p.lin_cons:
        scales[f"lin:{con.name}"] = _expr_scale(con.expr)
    for con in p.quad_cons:
        s = _expr_scale(con.bound)
        for t in con.terms:
            s += t.coef * _expr_scale(t.f) ** 2
        scales[f"quad:{con.name}"] = s
    for con in p.psd2_cons:
        scales[f"psd2:{con.name}"] = max(_expr_scale(con.a), _expr_scale(con.b),
                                         _expr_scale(con.c))
    for con in p.diag_cons:
        scales[f"diag:{con.name}"] = 1.0 + abs(con.value)
    return scales


def check_kkt(p: ConeProgram, r: SolverResult) -> dict:
    """Recompute primal/dual residuals, gap and complementary slackness.

    Every measure must come in below 10x the tolerances the solve ran with;
    the original-space constraint violations of r.values are checked too (so
    a corrupted result is caught even when the internal state is clean).
    Raises CertificationError naming the worst offender; returns diagnostics.
    """
    if r.status != "optimal":
        raise ValueError("check_kkt requires an optimal result")
    if r._kkt is None:
        raise ValueError("result carries no internal state to certify")
    std = r._kkt["std"]
    opts = r._kkt["opts"]
    x, y, s = r._kkt["x"], r._kkt["y"], r._kkt["s"]
    xf = r._kkt["xf"]

    c = _Vec([Cb.copy() for Cb in std.C], std.c_nn.copy())
    sqrt_m = np.sqrt(std.b.size)
    Ax = _apply_A(std, x) + std.A_free @ xf
    pres_vec = Ax - std.b
    xnorm = np.sqrt(x.norm() ** 2 + float(xf @ xf))
    pden = 1.0 + max(float(np.linalg.norm(std.b)), float(np.linalg.norm(Ax)),
                     sqrt_m * xnorm)
    pres = float(np.linalg.norm(pres_vec)) / pden if std.b.size else 0.0
    ats = _apply_AT(std, y).axpy(1.0, s)
    ats_norm = np.sqrt(ats.norm() ** 2 + float(np.sum((std.A_free.T @ y) ** 2)))
    dvec = ats.scaled(-1.0).axpy(1.0, c)
    dres_free = np.linalg.norm(std.c_free - std.A_free.T @ y)
    norm_c = np.sqrt(c.norm() ** 2 + float(std.c_free @ std.c_free))
    dres = (np.sqrt(dvec.norm() ** 2 + dres_free ** 2)
            / (1.0 + max(norm_c, ats_norm, sqrt_m * np.linalg.norm(y))))
    pobj = c.dot(x) + float(std.c_free @ xf) + std.obj_const
    dobj = float(std.b @ y) + std.obj_const
    relgap = abs(pobj - dobj) / (1.0 + max(abs(pobj), abs(dobj)))
    comp = x.dot(s) / (1.0 + max(abs(pobj), abs(dobj)))

    worst_row = ""
    if std.b.size:
        worst_row = std.row_names[int(np.argmax(np.abs(pres_vec)))]

    scales = _violation_scales(p)
    viols = p.constraint_violations(r.values)
    rel_viols = [(name, v / scales[name]) for name, v in viols]
    worst_name, worst_viol = max(rel_viols, key=lambda t: t[1])

    diag = dict(pres=pres, dres=dres, relgap=relgap, comp=comp,
                max_violation=worst_viol, worst_constraint=worst_name,
                worst_row=worst_row, pobj=pobj, dobj=dobj)

    lim_f = 10.0 * opts.feas_tol
    lim_g = 10.0 * opts.gap_tol
    if pres > lim_f:
        raise CertificationError(f"primal residual {pres:.3e} on row '{worst_row}'")
    if dres > lim_f:
        raise CertificationError(f"dual residual {dres:.3e}")
    if relgap > lim_g:
        raise CertificationError(f"duality gap {relgap:.3e}")
    if comp > lim_g:
        raise CertificationError(f"complementary slackness {comp:.3e}")
    if worst_viol > lim_f:
        raise CertificationError(
            f"constraint '{worst_name}' violated by {worst_viol:.3e} (relative)")
    return diag
