"""Homogeneous self-dual interior-point solver for small dense cone programs.

Pipeline: lower quadratic constraints to 2x2 PSD blocks, realify complex
blocks, flatten to the standard primal form

    min <C, X>  s.t.  A(X) = b,  X in (PSD blocks) x (nonnegative orthant)

and run a Nesterov-Todd scaled predictor-corrector method on the homogeneous
self-dual embedding, which detects infeasibility and unboundedness via Farkas
certificates instead of failing. Dense linear algebra throughout; intended
for blocks up to side ~100 and a few hundred rows.

Constraint rows are stored per block as a stack of dense symmetric
coefficient matrices plus a separate list of single-diagonal-entry rows
(unit-diagonal constraints), which keeps the Schur-complement assembly
quadratic rather than quartic in the block side for diagonal-heavy programs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .program import ConeProgram, lower_quadratics, realify

__all__ = ["SolverOptions", "SolverResult", "solve"]


@dataclass(frozen=True)
class SolverOptions:
    gap_tol: float = 1e-7
    feas_tol: float = 1e-7
    max_iters: int = 100
    verbose: bool = False


@dataclass
class SolverResult:
    """Certified outcome of one conic solve.

    status: optimal | infeasible | unbounded | numerical_failure.
    values: primal values for the original program's variables (optimal only).
    gap is the relative duality gap; max_violation is the residual of the
    row-normalized standard-form equalities at the returned point (cone
    membership is exact by construction).
    """

    status: str
    values: dict | None
    objective: float
    gap: float
    max_violation: float
    iters: int
    diagnostics: dict = field(default_factory=dict)
    _kkt: dict | None = None


# ---------------------------------------------------------------------------
# standard form


class _BlockRows:
    """Constraint coefficients restricted to one PSD block."""

    __slots__ = ("dense_idx", "dense_mats", "diag_idx", "diag_pos", "diag_coef")

    def __init__(self, n, dense, diag):
        if dense:
            self.dense_idx = np.array([i for i, _ in dense], dtype=int)
            self.dense_mats = np.stack([0.5 * (M + M.T) for _, M in dense])
        else:
            self.dense_idx = np.zeros(0, dtype=int)
            self.dense_mats = np.zeros((0, n, n))
        if diag:
            self.diag_idx = np.array([i for i, _, _ in diag], dtype=int)
            self.diag_pos = np.array([p for _, p, _ in diag], dtype=int)
            self.diag_coef = np.array([v for _, _, v in diag], dtype=float)
        else:
            self.diag_idx = np.zeros(0, dtype=int)
            self.diag_pos = np.zeros(0, dtype=int)
            self.diag_coef = np.zeros(0, dtype=float)


class _Standard:
    """Flattened program plus the bookkeeping to map solutions back.

    Scalars with at least one bound become orthant variables (shifted or
    negated); unbounded scalars stay as genuinely free columns in A_free so
    the interior-point iteration never sees a split pair.
    """

    def __init__(self):
        self.sides = []
        self.block_names = []
        self.block_rows = []
        self.nn_names = []
        self.A_nn = None
        self.b = None
        self.C = []
        self.c_nn = None
        self.obj_const = 0.0
        self.row_scale = None
        self.row_names = []
        self.scalar_decode = {}  # name -> (offset, [(nn index, sign)])
        self.free_names = []
        self.free_decode = {}    # name -> column of A_free
        self.A_free = None
        self.c_free = None
        self.keep_blocks = []    # names of original matrix vars


def _standardize(p: ConeProgram) -> _Standard:
    std = _Standard()
    block_id = {}
    for mv in p.matrix_vars:
        if mv.field != "real":
            raise AssertionError("standardize expects a realified program")
        block_id[mv.name] = len(std.sides)
        std.sides.append(mv.side)
        std.block_names.append(mv.name)
        std.keep_blocks.append(mv.name)

    nn_index = {}

    def new_nn(name):
        nn_index[name] = len(std.nn_names)
        std.nn_names.append(name)
        return nn_index[name]

    rows = []  # (blocks: {bid: matrix}, diag, nn: {idx: coef}, fr: {idx: coef}, rhs, name)

    for sv in p.scalar_vars:
        if sv.lb is not None:
            u = new_nn(f"{sv.name}")
            std.scalar_decode[sv.name] = (float(sv.lb), [(u, 1.0)])
            if sv.ub is not None:
                sl = new_nn(f"{sv.name}:ubslack")
                rows.append(({}, None, {u: 1.0, sl: 1.0}, {},
                             float(sv.ub) - float(sv.lb), f"bounds:{sv.name}"))
        elif sv.ub is not None:
            u = new_nn(f"{sv.name}:neg")
            std.scalar_decode[sv.name] = (float(sv.ub), [(u, -1.0)])
        else:
            std.free_decode[sv.name] = len(std.free_names)
            std.free_names.append(sv.name)

    def expr_row(expr, nn_extra=None):
        blocks = {}
        nn = dict(nn_extra or {})
        fr = {}
        rhs = -expr.const
        for b, Cm in expr.mats.items():
            bid = block_id[b]
            Cm = np.asarray(Cm, dtype=float)
            blocks[bid] = blocks.get(bid, 0.0) + Cm
        for s, coef in expr.scalars.items():
            if s in std.free_decode:
                fidx = std.free_decode[s]
                fr[fidx] = fr.get(fidx, 0.0) + coef
                continue
            offset, cols = std.scalar_decode[s]
            rhs -= coef * offset
            for idx, sign in cols:
                nn[idx] = nn.get(idx, 0.0) + coef * sign
        return blocks, nn, fr, rhs

    for con in p.lin_cons:
        blocks, nn, fr, rhs = expr_row(con.expr)
        if con.sense == "<=":
            slack = new_nn(f"slack:{con.name}")
            nn[slack] = nn.get(slack, 0.0) + 1.0
        rows.append((blocks, None, nn, fr, rhs, f"lin:{con.name}"))

    e00 = np.array([[1.0, 0.0], [0.0, 0.0]])
    e01 = np.array([[0.0, 0.5], [0.5, 0.0]])
    e11 = np.array([[0.0, 0.0], [0.0, 1.0]])
    for con in p.psd2_cons:
        bid = len(std.sides)
        block_id[f"__psd2:{con.name}"] = bid
        std.sides.append(2)
        std.block_names.append(f"__psd2:{con.name}")
        for tag, entry, expr in (("a", e00, con.a), ("b", e01, con.b), ("c", e11, con.c)):
            blocks, nn, fr, rhs = expr_row(-expr)
            blocks[bid] = blocks.get(bid, 0.0) + entry
            rows.append((blocks, None, nn, fr, rhs, f"psd2:{con.name}:{tag}"))

    for con in p.diag_cons:
        bid = block_id[con.block]
        rows.append(({}, (bid, con.index, 1.0), {}, {}, con.value, f"diag:{con.name}"))

    if p.quad_cons:
        raise AssertionError("standardize expects quadratics already lowered")

    # objective
    std.C = [np.zeros((n, n)) for n in std.sides]
    c_nn = np.zeros(len(std.nn_names))
    c_free = np.zeros(len(std.free_names))
    for b, Cm in p.objective.mats.items():
        bid = block_id[b]
        std.C[bid] += np.asarray(Cm, dtype=float)
    std.obj_const = p.objective.const
    for s, coef in p.objective.scalars.items():
        if s in std.free_decode:
            c_free[std.free_decode[s]] += coef
            continue
        offset, cols = std.scalar_decode[s]
        std.obj_const += coef * offset
        for idx, sign in cols:
            c_nn[idx] += coef * sign

    # assemble rows with scaling; drop exact zero rows
    m = len(rows)
    pnn = len(std.nn_names)
    A_nn = np.zeros((m, pnn))
    A_free = np.zeros((m, len(std.free_names)))
    b_vec = np.zeros(m)
    scales = np.ones(m)
    row_names = []
    per_block_dense = [[] for _ in std.sides]
    per_block_diag = [[] for _ in std.sides]
    ri = 0
    for blocks, diag, nn, fr, rhs, rname in rows:
        norm2 = 0.0
        for bid, Mtx in blocks.items():
            norm2 += float(np.sum(Mtx * Mtx))
        if diag is not None:
            norm2 += diag[2] ** 2
        for idx, coef in nn.items():
            norm2 += coef * coef
        for idx, coef in fr.items():
            norm2 += coef * coef
        nrm = np.sqrt(norm2)
        if nrm < 1e-14:
            if abs(rhs) > 1e-12:
                raise _TriviallyInfeasible()
            continue
        d = max(nrm, 1e-12)
        scales[ri] = d
        for bid, Mtx in blocks.items():
            per_block_dense[bid].append((ri, Mtx / d))
        if diag is not None:
            bid, pos, coef = diag
            per_block_diag[bid].append((ri, pos, coef / d))
        for idx, coef in nn.items():
            A_nn[ri, idx] = coef / d
        for idx, coef in fr.items():
            A_free[ri, idx] = coef / d
        b_vec[ri] = rhs / d
        row_names.append(rname)
        ri += 1

    std.A_nn = A_nn[:ri]
    std.A_free = A_free[:ri]
    std.b = b_vec[:ri]
    std.row_scale = scales[:ri]
    std.row_names = row_names
    std.c_nn = c_nn
    std.c_free = c_free
    std.block_rows = [
        _BlockRows(std.sides[bid], per_block_dense[bid], per_block_diag[bid])
        for bid in range(len(std.sides))
    ]
    return std


class _TriviallyInfeasible(Exception):
    pass


# ---------------------------------------------------------------------------
# block-structured linear algebra


class _Vec:
    """Point in the cone product: PSD block matrices plus an orthant vector."""

    __slots__ = ("mats", "nn")

    def __init__(self, mats, nn):
        self.mats = mats
        self.nn = nn

    @staticmethod
    def identity(sides, pnn):
        return _Vec([np.eye(n) for n in sides], np.ones(pnn))

    @staticmethod
    def zeros(sides, pnn):
        return _Vec([np.zeros((n, n)) for n in sides], np.zeros(pnn))

    def copy(self):
        return _Vec([M.copy() for M in self.mats], self.nn.copy())

    def axpy(self, a, other):
        for M, O in zip(self.mats, other.mats):
            M += a * O
        self.nn += a * other.nn
        return self

    def scaled(self, a):
        return _Vec([a * M for M in self.mats], a * self.nn)

    def dot(self, other) -> float:
        v = float(self.nn @ other.nn)
        for M, O in zip(self.mats, other.mats):
            v += float(np.sum(M * O))
        return v

    def norm(self) -> float:
        return np.sqrt(self.dot(self))

    def symmetrize(self):
        for M in self.mats:
            M += M.T
            M *= 0.5
        return self


def _apply_A(std: _Standard, v: _Vec) -> np.ndarray:
    out = std.A_nn @ v.nn
    for br, X in zip(std.block_rows, v.mats):
        if br.dense_idx.size:
            out[br.dense_idx] += np.einsum("iab,ab->i", br.dense_mats, X)
        if br.diag_idx.size:
            out[br.diag_idx] += br.diag_coef * X[br.diag_pos, br.diag_pos]
    return out


def _apply_AT(std: _Standard, y: np.ndarray) -> _Vec:
    mats = []
    for br, n in zip(std.block_rows, std.sides):
        M = np.zeros((n, n))
        if br.dense_idx.size:
            M += np.einsum("i,iab->ab", y[br.dense_idx], br.dense_mats)
        if br.diag_idx.size:
            np.add.at(M, (br.diag_pos, br.diag_pos), y[br.diag_idx] * br.diag_coef)
        mats.append(M)
    return _Vec(mats, std.A_nn.T @ y)


class _Scaling:
    """Nesterov-Todd scaling state for one iteration."""

    def __init__(self, sides):
        self.R = [None] * len(sides)
        self.Rinv = [None] * len(sides)
        self.lam = [None] * len(sides)
        self.W2 = [None] * len(sides)  # R R^T, the H operator kernel
        self.Lx = [None] * len(sides)
        self.Ls = [None] * len(sides)
        self.w_nn = None
        self.lam_nn = None


def _nt_scaling(x: _Vec, s: _Vec, sides) -> _Scaling:
    sc = _Scaling(sides)
    for b, n in enumerate(sides):
        Lx = np.linalg.cholesky(x.mats[b])
        Ls = np.linalg.cholesky(s.mats[b])
        U, sig, Vt = np.linalg.svd(Ls.T @ Lx)
        sqr = np.sqrt(sig)
        R = (Lx @ Vt.T) / sqr
        Lxi = solve_triangular(Lx, np.eye(n), lower=True, check_finite=False)
        Rinv = (sqr[:, None] * Vt) @ Lxi
        sc.R[b], sc.Rinv[b], sc.lam[b] = R, Rinv, sig
        sc.W2[b] = R @ R.T
        sc.Lx[b], sc.Ls[b] = Lx, Ls
    sc.w_nn = np.sqrt(x.nn / s.nn)
    sc.lam_nn = np.sqrt(x.nn * s.nn)
    return sc


def _apply_H(sc: _Scaling, v: _Vec) -> _Vec:
    mats = [W2 @ M @ W2 for W2, M in zip(sc.W2, v.mats)]
    return _Vec(mats, (sc.w_nn ** 2) * v.nn)


def _schur(std: _Standard, sc: _Scaling) -> np.ndarray:
    m = std.b.shape[0]
    S = np.zeros((m, m))
    for br, W2 in zip(std.block_rows, sc.W2):
        di, D = br.dense_idx, br.dense_mats
        if di.size:
            U = np.matmul(W2, np.matmul(D, W2))
            S[np.ix_(di, di)] += np.einsum("iab,jab->ij", D, U)
            if br.diag_idx.size:
                cross = U[:, br.diag_pos, br.diag_pos] * br.diag_coef
                S[np.ix_(di, br.diag_idx)] += cross
                S[np.ix_(br.diag_idx, di)] += cross.T
        if br.diag_idx.size:
            r, v = br.diag_pos, br.diag_coef
            S[np.ix_(br.diag_idx, br.diag_idx)] += np.outer(v, v) * W2[np.ix_(r, r)] ** 2
    if std.A_nn.shape[1]:
        S += (std.A_nn * (sc.w_nn ** 2)) @ std.A_nn.T
    return S


def _step_to_boundary(x: _Vec, dx: _Vec, chols) -> float:
    alpha = np.inf
    for b, L in enumerate(chols):
        Li_d = solve_triangular(L, dx.mats[b], lower=True, check_finite=False)
        M = solve_triangular(L, Li_d.T, lower=True, check_finite=False)
        lam_min = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
        if lam_min < 0:
            alpha = min(alpha, -1.0 / lam_min)
    neg = dx.nn < 0
    if neg.any():
        alpha = min(alpha, float(np.min(-x.nn[neg] / dx.nn[neg])))
    return alpha


# ---------------------------------------------------------------------------
# main loop


def _solve_standard(std: _Standard, opts: SolverOptions,
                    offsets=(1.0, 1.0, 1.0)):
    # offsets are the additive constants in the relative-residual
    # denominators; setting them to (1/sp, 1/sc, 1/(sp sc)) makes the
    # checks on a (b/sp, c/sc)-scaled problem exactly the original ones
    p_off, d_off, g_off = offsets
    sides = std.sides
    m = std.b.shape[0]
    pnn = len(std.nn_names)
    kf = len(std.free_names)
    nu = sum(sides) + pnn + 1.0

    c = _Vec([Cb.copy() for Cb in std.C], std.c_nn.copy())
    b = std.b
    F = std.A_free
    cf = std.c_free
    norm_b = np.linalg.norm(b)
    norm_c = np.sqrt(c.norm() ** 2 + float(cf @ cf))
    sqrt_m = np.sqrt(m)

    x = _Vec.identity(sides, pnn)
    s = _Vec.identity(sides, pnn)
    xf = np.zeros(kf)
    y = np.zeros(m)
    tau, kappa = 1.0, 1.0
    mu0 = (x.dot(s) + tau * kappa) / nu

    history = []
    fail_reason = None
    best_worst, stall = np.inf, 0

    for it in range(opts.max_iters + 1):
        # residuals
        Ax = _apply_A(std, x) + F @ xf
        ATy = _apply_AT(std, y)
        rp = Ax - b * tau                                  # A x + F xf - b tau
        rd = _Vec.zeros(sides, pnn)
        rd.axpy(-1.0, ATy).axpy(-1.0, s).axpy(tau, c)      # -A'y - s + c tau
        rdf = cf * tau - F.T @ y                           # free dual rows
        rg = c.dot(x) + float(cf @ xf) - float(b @ y) + kappa

        mu = (x.dot(s) + tau * kappa) / nu

        # convergence checks on the tau-scaled point
        xs = x.scaled(1.0 / tau)
        xfs = xf / tau
        ys = y / tau
        ss = s.scaled(1.0 / tau)
        # residual denominators include the iterate magnitudes (normwise
        # backward error; rows are unit-normalized so |A|_F = sqrt(m))
        pvec = _apply_A(std, xs) + F @ xfs
        xnorm = np.sqrt(xs.norm() ** 2 + float(xfs @ xfs))
        pres = (np.linalg.norm(pvec - b)
                / (p_off + max(norm_b, np.linalg.norm(pvec), sqrt_m * xnorm)))
        ats = _apply_AT(std, ys).axpy(1.0, ss)
        ats_norm = np.sqrt(ats.norm() ** 2 + float(np.sum((F.T @ ys) ** 2)))
        dvec = ats.scaled(-1.0).axpy(1.0, c)
        dres_free = np.linalg.norm(cf - F.T @ ys)
        dres = (np.sqrt(dvec.norm() ** 2 + dres_free ** 2)
                / (d_off + max(norm_c, ats_norm,
                               sqrt_m * np.linalg.norm(ys))))
        pobj = c.dot(xs) + float(cf @ xfs) + std.obj_const
        dobj = float(b @ ys) + std.obj_const
        relgap = abs(pobj - dobj) / (g_off + max(abs(pobj), abs(dobj)))
        history.append((pres, dres, relgap, mu, tau, kappa))
        if opts.verbose:
            print(f"it={it:3d} pres={pres:.2e} dres={dres:.2e} gap={relgap:.2e} "
                  f"mu={mu:.2e} tau={tau:.2e} kappa={kappa:.2e} "
                  f"|x|={x.norm():.2e} |xf|={np.linalg.norm(xf):.2e} "
                  f"|y|={np.linalg.norm(y):.2e}")

        if (tau >= 1e-8 * max(1.0, kappa) and pres <= opts.feas_tol
                and dres <= opts.feas_tol and relgap <= opts.gap_tol):
            return ("optimal", xs, xfs, ys, ss, tau, kappa, it, history,
                    dict(pres=pres, dres=dres, relgap=relgap, pobj=pobj, dobj=dobj))

        # endgame stall: once mu is at the floor, directions carry no more
        # accuracy, so stop instead of riding into a Cholesky failure
        worst = max(pres, dres, relgap)
        if worst < 0.5 * best_worst:
            best_worst, stall = worst, 0
        else:
            best_worst = min(best_worst, worst)
            if mu < 1e-16 * max(1.0, mu0):
                stall += 1
                if stall >= 8:
                    fail_reason = "progress stalled at the numerical floor"
                    break

        # Farkas certificates (accepted only once tau has collapsed)
        by = float(b @ y)
        cx = c.dot(x) + float(cf @ xf)
        if tau <= 1e-6 * max(1.0, kappa):
            cert_scale = dict(xs_norm=xnorm, ys_norm=np.linalg.norm(ys))
            if by > 0:
                yc = y / by
                sc_vec = s.scaled(1.0 / by)
                res = _Vec.zeros(sides, pnn)
                res.axpy(1.0, _apply_AT(std, yc)).axpy(1.0, sc_vec)
                res_norm = np.sqrt(res.norm() ** 2
                                   + float(np.sum((F.T @ yc) ** 2)))
                if res_norm <= opts.feas_tol * (1.0 + np.linalg.norm(yc)):
                    return ("infeasible", None, None, yc, sc_vec, tau, kappa, it,
                            history, dict(certificate="primal", pres=pres,
                                          dres=dres, **cert_scale))
            if cx < 0:
                xc = x.scaled(1.0 / (-cx))
                xfc = xf / (-cx)
                ray = np.linalg.norm(_apply_A(std, xc) + F @ xfc)
                if ray <= opts.feas_tol * (1.0 + xc.norm() + np.linalg.norm(xfc)):
                    return ("unbounded", xc, xfc, None, None, tau, kappa, it,
                            history, dict(certificate="dual", pres=pres,
                                          dres=dres, **cert_scale))
            if mu <= 1e-10 * mu0:
                fail_reason = "tau collapsed without a clean certificate"
                break

        if it == opts.max_iters:
            break

        # NT scaling and Schur factorization
        try:
            sc = _nt_scaling(x, s, sides)
        except np.linalg.LinAlgError:
            fail_reason = "iterate left the cone (Cholesky failure)"
            break
        S = _schur(std, sc)
        reg0 = 1e-14 * (1.0 + (np.trace(S) / m if m else 0.0))
        factor = None
        reg = reg0
        for _ in range(5):
            try:
                factor = cho_factor(S + reg * np.eye(m), lower=True, check_finite=False) if m else None
                break
            except np.linalg.LinAlgError:
                reg *= 1e4
        if m and factor is None:
            fail_reason = "Schur complement not positive definite"
            break

        def lin_solve(rhs):
            # refine against the unregularized S so the shift never leaks into
            # the Newton direction (iteration matrix reg*(S+reg I)^-1 contracts)
            if not m:
                return np.zeros(0)
            sol = cho_solve(factor, rhs, check_finite=False)
            nr = max(1.0, np.linalg.norm(rhs))
            resid = rhs - S @ sol
            rn = np.linalg.norm(resid)
            for _ in range(4):
                if rn <= 1e-13 * nr:
                    break
                cand = sol + cho_solve(factor, resid, check_finite=False)
                resid2 = rhs - S @ cand
                rn2 = np.linalg.norm(resid2)
                if rn2 < rn:
                    sol, resid, rn = cand, resid2, rn2
                if rn2 >= 0.5 * rn:
                    break
            return sol

        if kf:
            SinvF = np.column_stack([lin_solve(F[:, j]) for j in range(kf)])
            G = F.T @ SinvF
            G = 0.5 * (G + G.T)
            Gfac = None
            regG = 1e-14 * (1.0 + np.trace(G) / kf)
            for _ in range(5):
                try:
                    Gfac = cho_factor(G + regG * np.eye(kf), lower=True,
                                      check_finite=False)
                    break
                except np.linalg.LinAlgError:
                    regG *= 1e4
            if Gfac is None:
                fail_reason = "free-variable projection not positive definite"
                break

        def saddle_solve(r1, r2):
            # [S F; F' 0] [g; f] = [r1; r2] by range space plus one refinement
            if not kf:
                return lin_solve(r1), np.zeros(0)
            g = lin_solve(r1)
            f = cho_solve(Gfac, F.T @ g - r2, check_finite=False)
            g = g - SinvF @ f
            rho1 = r1 - S @ g - F @ f
            rho2 = r2 - F.T @ g
            if (np.linalg.norm(rho1) > 1e-13 * (1.0 + np.linalg.norm(r1))
                    or np.linalg.norm(rho2) > 1e-13 * (1.0 + np.linalg.norm(r2))):
                dg = lin_solve(rho1)
                df = cho_solve(Gfac, F.T @ dg - rho2, check_finite=False)
                g = g + dg - SinvF @ df
                f = f + df
            return g, f

        Hc = _apply_H(sc, c)
        h_c = _apply_A(std, Hc)
        cHc = c.dot(Hc)
        g1, f1 = saddle_solve(h_c + b, cf)

        def direction(eta, rhs_scaled, rhs_nn, rhs_kap):
            # E = R (d o rhs) R^T per block; d_ij = 2/(lam_i + lam_j)
            E_mats = []
            for bidx in range(len(sides)):
                lam = sc.lam[bidx]
                dmat = 2.0 / (lam[:, None] + lam[None, :])
                E_mats.append(sc.R[bidx] @ (dmat * rhs_scaled[bidx]) @ sc.R[bidx].T)
            E = _Vec(E_mats, sc.w_nn * rhs_nn / sc.lam_nn)
            HRd = _apply_H(sc, rd)
            u = -eta * rp - _apply_A(std, E) + eta * _apply_A(std, HRd)
            g2, f2 = saddle_solve(u, eta * rdf)
            num = (-eta * rg - rhs_kap / tau - c.dot(E) + eta * c.dot(HRd)
                   - float(h_c @ g2) + float(b @ g2) - float(cf @ f2))
            den = (float(h_c @ g1) - float(b @ g1) + float(cf @ f1)
                   - cHc - kappa / tau)
            dtau = num / den if den != 0 else 0.0
            dy = g2 + dtau * g1
            dxf = f2 + dtau * f1
            ds = _Vec.zeros(sides, pnn)
            ds.axpy(-1.0, _apply_AT(std, dy)).axpy(dtau, c).axpy(eta, rd)
            dx = E.copy().axpy(-1.0, _apply_H(sc, ds))
            dx.symmetrize()
            ds.symmetrize()
            dkap = (rhs_kap - kappa * dtau) / tau
            return dx, dxf, dy, ds, dtau, dkap

        # predictor (affine scaling)
        rhs_aff = [np.diag(-sc.lam[bidx] ** 2) for bidx in range(len(sides))]
        rhs_aff_nn = -(sc.lam_nn ** 2)
        dxa, dxfa, dya, dsa, dtaua, dkapa = direction(
            1.0, rhs_aff, rhs_aff_nn, -tau * kappa)

        alpha_x = _step_to_boundary(x, dxa, sc.Lx)
        alpha_s = _step_to_boundary(s, dsa, sc.Ls)
        alpha = min(alpha_x, alpha_s)
        if dtaua < 0:
            alpha = min(alpha, -tau / dtaua)
        if dkapa < 0:
            alpha = min(alpha, -kappa / dkapa)
        alpha_aff = min(1.0, alpha)

        xa = x.copy().axpy(alpha_aff, dxa)
        sa = s.copy().axpy(alpha_aff, dsa)
        mu_aff = (xa.dot(sa) + (tau + alpha_aff * dtaua) * (kappa + alpha_aff * dkapa)) / nu
        gamma = min(1.0, max(0.0, (mu_aff / mu))) ** 3

        # corrector
        rhs_comb = []
        for bidx in range(len(sides)):
            dxb = sc.Rinv[bidx] @ dxa.mats[bidx] @ sc.Rinv[bidx].T
            dsb = sc.R[bidx].T @ dsa.mats[bidx] @ sc.R[bidx]
            corr = 0.5 * (dxb @ dsb + dsb @ dxb)
            rhs = -corr - np.diag(sc.lam[bidx] ** 2 - gamma * mu)
            rhs_comb.append(0.5 * (rhs + rhs.T))
        rhs_comb_nn = gamma * mu - sc.lam_nn ** 2 - dxa.nn * dsa.nn
        rhs_kap = gamma * mu - tau * kappa - dtaua * dkapa
        eta = 1.0 - gamma
        dx, dxf, dy, ds, dtau, dkap = direction(eta, rhs_comb, rhs_comb_nn, rhs_kap)

        alpha_x = _step_to_boundary(x, dx, sc.Lx)
        alpha_s = _step_to_boundary(s, ds, sc.Ls)
        alpha = min(alpha_x, alpha_s)
        if dtau < 0:
            alpha = min(alpha, -tau / dtau)
        if dkap < 0:
            alpha = min(alpha, -kappa / dkap)
        alpha = min(1.0, 0.98 * alpha)
        if opts.verbose:
            print(f"      alpha={alpha:.3e} gamma={gamma:.3e} "
                  f"dtau={dtau:.2e} dkap={dkap:.2e}")
        if not np.isfinite(alpha) or alpha <= 1e-14:
            fail_reason = "step size collapsed"
            break

        x.axpy(alpha, dx).symmetrize()
        s.axpy(alpha, ds).symmetrize()
        xf = xf + alpha * dxf
        y = y + alpha * dy
        tau += alpha * dtau
        kappa += alpha * dkap

        if tau <= 0 or kappa < 0:
            fail_reason = "tau left the positive ray"
            break

    last = history[-1] if history else (np.nan,) * 6
    xs_norm = ((x.norm() + np.linalg.norm(xf)) / tau) if tau > 0 else np.inf
    ys_norm = (np.linalg.norm(y) / tau) if tau > 0 else np.inf
    diag = dict(reason=fail_reason or "iteration limit reached",
                pres=last[0], dres=last[1], relgap=last[2], mu=last[3],
                tau=last[4], kappa=last[5], xs_norm=xs_norm, ys_norm=ys_norm)
    return ("numerical_failure", None, None, None, None, tau, kappa,
            len(history), history, diag)


# ---------------------------------------------------------------------------
# public entry point


def solve(p: ConeProgram, gap_tol: float = 1e-7, feas_tol: float = 1e-7,
          max_iters: int = 100, verbose: bool = False) -> SolverResult:
    """Solve a ConeProgram; deterministic for identical inputs.

    status=optimal guarantees the equality residuals are within feas_tol in
    the normwise-backward-error sense (relative to the data and iterate
    magnitudes) and the objective is within gap_tol of the certified dual
    bound. Infeasible/unbounded are reported via Farkas certificates; the
    iteration cap surfaces as numerical_failure with diagnostics, never a
    wrong answer.
    """
    opts = SolverOptions(gap_tol=gap_tol, feas_tol=feas_tol, max_iters=max_iters,
                         verbose=verbose)
    p.validate()
    lowered = lower_quadratics(p)
    realified = realify(lowered)
    try:
        std = _standardize(realified)
    except _TriviallyInfeasible:
        return SolverResult(status="infeasible", values=None, objective=np.nan,
                            gap=np.nan, max_violation=np.nan, iters=0,
                            diagnostics=dict(certificate="inconsistent zero row"))

    (status, xs, xfs, ys, ss, tau, kappa, iters, history, diag) = \
        _solve_standard(std, opts)

    # a huge-norm optimum (primal or dual) drives tau ~ 1/|(x*, y*)| below
    # the direction accuracy floor; substituting x = sp x', y = sc y'
    # (b -> b/sp, c -> c/sc) makes the iterate O(1), and the denominator
    # offsets keep the convergence criteria exactly the original ones.
    # Farkas certificates reached with a huge iterate are retried the same
    # way: at that scale they are only backward-valid, and the rescaled
    # solve either finds a constructive optimum or re-certifies cleanly.
    sp = sc = 1.0
    prev_status = None
    for _ in range(2):
        if status not in ("numerical_failure", "infeasible", "unbounded"):
            break
        if status == prev_status and status != "numerical_failure":
            break
        xs_norm = float(diag.get("xs_norm", 0.0))
        ys_norm = float(diag.get("ys_norm", 0.0))
        if not (np.isfinite(xs_norm) and np.isfinite(ys_norm)):
            break
        if max(xs_norm, ys_norm) <= 50.0:
            break
        prev_status = status
        sp *= max(xs_norm / 10.0, 1.0)
        sc *= max(ys_norm / 10.0, 1.0)
        scaled = _Standard()
        scaled.__dict__.update(std.__dict__)
        scaled.b = std.b / sp
        scaled.C = [Cb / sc for Cb in std.C]
        scaled.c_nn = std.c_nn / sc
        scaled.c_free = std.c_free / sc
        scaled.obj_const = 0.0
        (status, xs, xfs, ys, ss, tau, kappa, it2, history, diag) = \
            _solve_standard(scaled, opts,
                            offsets=(1.0 / sp, 1.0 / sc, 1.0 / (sp * sc)))
        iters += it2
    if sp != 1.0 or sc != 1.0:
        diag = dict(diag, rescale=(sp, sc))
        if status == "optimal":
            xs = xs.scaled(sp)
            xfs = xfs * sp
            ys = ys * sc
            ss = ss.scaled(sc)
            pobj = sp * sc * diag["pobj"] + std.obj_const
            dobj = sp * sc * diag["dobj"] + std.obj_const
            diag.update(pobj=pobj, dobj=dobj,
                        relgap=abs(pobj - dobj)
                        / (1.0 + max(abs(pobj), abs(dobj))))

    if status != "optimal":
        return SolverResult(status=status, values=None, objective=np.nan,
                            gap=np.nan, max_violation=np.nan, iters=iters,
                            diagnostics=diag)

    # decode standard-form point into realified program values, then map back
    raw = {}
    for name, X in zip(std.block_names, xs.mats):
        if name in std.keep_blocks:
            raw[name] = X
    for sname, (offset, cols) in std.scalar_decode.items():
        v = offset
        for idx, sign in cols:
            v += sign * float(xs.nn[idx])
        raw[sname] = v
    for sname, fidx in std.free_decode.items():
        raw[sname] = float(xfs[fidx])
    values = realified.value_map(raw)
    values = lowered.value_map(values)

    max_viol = (float(np.max(np.abs(_apply_A(std, xs) + std.A_free @ xfs - std.b)))
                if std.b.size else 0.0)
    result = SolverResult(
        status="optimal",
        values=values,
        objective=diag["pobj"],
        gap=diag["relgap"],
        max_violation=max_viol,
        iters=iters,
        diagnostics=diag,
        _kkt=dict(std=std, x=xs, xf=xfs, y=ys, s=ss, tau=tau, kappa=kappa,
                  opts=opts, program=p),
    )
    return result
