"""Conic-problem intermediate representation.

A ConeProgram holds Hermitian (or real symmetric) PSD matrix variables,
bounded real scalars, a real linear objective over traces and scalars, and
four constraint families:

  lin_cons   affine (in)equalities          expr <= 0   or  expr == 0
  quad_cons  sum_j coef_j * f_j^2 / den_j <= bound      (f, den, bound affine)
  psd2_cons  assembled 2x2 blocks [[a, b], [b, c]] >= 0 (a, b, c affine)
  diag_cons  per-entry equalities on a matrix-block diagonal

Every declared matrix variable is constrained PSD. Programs are built once
and treated as immutable afterwards; transforms return new programs carrying
a ``value_map`` closure that maps their solution values back to the parent's
variables.

Debug dump grammar (one constraint per line; ``dump(include_data=True)``
appends full matrix entries):

  program   := "# ConeProgram dump v1" line*
  line      := matvar | scalar | objective | lin | quad | psd2 | diag | data
  matvar    := "matvar" NAME SIDE ("complex"|"real")
  scalar    := "scalar" NAME LB UB                      (bounds or "-")
  objective := "min" EXPR
  lin       := "lin" NAME EXPR ("<="|"==") "0"
  quad      := "quad" NAME TERM ("+" TERM)* "<=" EXPR
  term      := COEF "*(" EXPR ")^2" ["/(" EXPR ")"]
  psd2      := "psd2" NAME "[[" EXPR ";" EXPR "];[" EXPR ";" EXPR "]] >= 0"
  diag      := "diag" NAME BLOCK "[" INDEX "] ==" VALUE
  expr      := CONST ("+" COEF "*" NAME)* ("+ tr(" MATREF "@" BLOCK ")")*
  matref    := "<" SIDE "x" SIDE "|fro=" NORM "|" HASH8 ">"
  data      := "data" HASH8 ENTRY*                      (row-major "re,im")
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ModelingError",
    "LinExpr",
    "MatrixVar",
    "ScalarVar",
    "LinCon",
    "QuadTerm",
    "QuadCon",
    "Psd2Con",
    "DiagCon",
    "ConeProgram",
    "embed_quadratic_as_psd",
    "lower_quadratics",
    "realify",
]

_HERM_TOL = 1e-10


class ModelingError(ValueError):
    """Raised for ill-formed programs or constraints."""


class LinExpr:
    """Affine functional: const + sum coef*scalar + sum Tr(C @ X_block).

    Trace coefficients must be Hermitian (symmetric for real blocks) so each
    trace term is real-valued.
    """

    __slots__ = ("const", "scalars", "mats")

    def __init__(self, const=0.0, scalars=None, mats=None):
        self.const = float(const)
        self.scalars = dict(scalars or {})
        self.mats = dict(mats or {})

    @staticmethod
    def constant(v):
        return LinExpr(const=v)

    @staticmethod
    def scalar(name, coef=1.0):
        return LinExpr(scalars={name: float(coef)})

    @staticmethod
    def trace(block, C):
        return LinExpr(mats={block: np.asarray(C)})

    def copy(self):
        return LinExpr(self.const, dict(self.scalars),
                       {b: C for b, C in self.mats.items()})

    def __add__(self, other):
        if np.isscalar(other):
            other = LinExpr.constant(other)
        out = self.copy()
        out.const += other.const
        for nm, c in other.scalars.items():
            out.scalars[nm] = out.scalars.get(nm, 0.0) + c
        for b, C in other.mats.items():
            out.mats[b] = out.mats[b] + C if b in out.mats else C
        return out

    __radd__ = __add__

    def __neg__(self):
        return LinExpr(-self.const, {n: -c for n, c in self.scalars.items()},
                       {b: -C for b, C in self.mats.items()})

    def __sub__(self, other):
        if np.isscalar(other):
            other = LinExpr.constant(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, k):
        k = float(k)
        return LinExpr(k * self.const, {n: k * c for n, c in self.scalars.items()},
                       {b: k * C for b, C in self.mats.items()})

    __rmul__ = __mul__

    def value(self, values: dict) -> float:
        v = self.const
        for nm, c in self.scalars.items():
            v += c * float(values[nm])
        for b, C in self.mats.items():
            v += float(np.vdot(C, values[b]).real)
        return v

    def render(self, data_pool=None) -> str:
        parts = [f"{self.const:.17g}"]
        for nm in sorted(self.scalars):
            parts.append(f"+ {self.scalars[nm]:.17g}*{nm}")
        for b in sorted(self.mats):
            C = np.asarray(self.mats[b])
            h = _mat_hash(C)
            if data_pool is not None:
                data_pool[h] = C
            parts.append(f"+ tr(<{C.shape[0]}x{C.shape[1]}|fro={np.linalg.norm(C):.6g}|{h}>@{b})")
        return " ".join(parts)


def _mat_hash(C: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(C).tobytes()).hexdigest()[:8]


@dataclass(frozen=True)
class MatrixVar:
    name: str
    side: int
    field: str = "complex"  # "complex" Hermitian or "real" symmetric; PSD either way


@dataclass(frozen=True)
class ScalarVar:
    name: str
    lb: float | None = None
    ub: float | None = None


@dataclass(frozen=True)
class LinCon:
    name: str
    expr: LinExpr
    sense: str  # "<=" or "==", against 0


@dataclass(frozen=True)
class QuadTerm:
    f: LinExpr
    den: LinExpr | None = None  # None means 1; must be nonnegative on the feasible set
    coef: float = 1.0


@dataclass(frozen=True)
class QuadCon:
    name: str
    terms: tuple
    bound: LinExpr


@dataclass(frozen=True)
class Psd2Con:
    name: str
    a: LinExpr
    b: LinExpr
    c: LinExpr


@dataclass(frozen=True)
class DiagCon:
    name: str
    block: str
    index: int
    value: float


@dataclass
class ConeProgram:
    matrix_vars: list = field(default_factory=list)
    scalar_vars: list = field(default_factory=list)
    objective: LinExpr = field(default_factory=LinExpr)
    lin_cons: list = field(default_factory=list)
    quad_cons: list = field(default_factory=list)
    psd2_cons: list = field(default_factory=list)
    diag_cons: list = field(default_factory=list)
    # maps this program's solved values back to the parent program's variables
    value_map: object = None

    # -- construction helpers -------------------------------------------------
    def add_matrix_var(self, name, side, field="complex"):
        self.matrix_vars.append(MatrixVar(name, int(side), field))
        return name

    def add_scalar_var(self, name, lb=None, ub=None):
        self.scalar_vars.append(ScalarVar(name, lb, ub))
        return name

    def add_lin(self, name, expr, sense="<="):
        self.lin_cons.append(LinCon(name, expr, sense))

    def add_quad(self, name, terms, bound):
        self.quad_cons.append(QuadCon(name, tuple(terms), bound))

    def add_psd2(self, name, a, b, c):
        a = a if isinstance(a, LinExpr) else LinExpr.constant(a)
        b = b if isinstance(b, LinExpr) else LinExpr.constant(b)
        c = c if isinstance(c, LinExpr) else LinExpr.constant(c)
        self.psd2_cons.append(Psd2Con(name, a, b, c))

    def add_diag(self, name, block, index, value):
        self.diag_cons.append(DiagCon(name, block, int(index), float(value)))

    # -- introspection --------------------------------------------------------
    def block_map(self) -> dict:
        return {mv.name: mv for mv in self.matrix_vars}

    def scalar_map(self) -> dict:
        return {sv.name: sv for sv in self.scalar_vars}

    def _check_expr(self, expr: LinExpr, where: str, blocks, scalars):
        if not np.isfinite(expr.const):
            raise ModelingError(f"{where}: non-finite constant")
        for nm, c in expr.scalars.items():
            if nm not in scalars:
                raise ModelingError(f"{where}: unknown scalar '{nm}'")
            if not np.isfinite(c):
                raise ModelingError(f"{where}: non-finite coefficient on '{nm}'")
        for b, C in expr.mats.items():
            if b not in blocks:
                raise ModelingError(f"{where}: unknown matrix block '{b}'")
            mv = blocks[b]
            C = np.asarray(C)
            if C.shape != (mv.side, mv.side):
                raise ModelingError(f"{where}: coefficient shape {C.shape} on '{b}'")
            if not np.isfinite(C).all():
                raise ModelingError(f"{where}: non-finite coefficient on '{b}'")
            scale = 1.0 + np.abs(C).max()
            if np.abs(C - C.conj().T).max() > _HERM_TOL * scale:
                raise ModelingError(f"{where}: coefficient on '{b}' not Hermitian")
            if mv.field == "real" and np.abs(C.imag).max() > _HERM_TOL * scale:
                raise ModelingError(f"{where}: complex coefficient on real block '{b}'")

    def validate(self):
        blocks = self.block_map()
        scalars = self.scalar_map()
        if len(blocks) != len(self.matrix_vars) or len(scalars) != len(self.scalar_vars):
            raise ModelingError("duplicate variable names")
        for mv in self.matrix_vars:
            if mv.side < 1 or mv.field not in ("complex", "real"):
                raise ModelingError(f"bad matrix var '{mv.name}'")
        for sv in self.scalar_vars:
            if sv.lb is not None and sv.ub is not None and sv.lb > sv.ub:
                raise ModelingError(f"bad bounds on scalar '{sv.name}'")
        self._check_expr(self.objective, "objective", blocks, scalars)
        for con in self.lin_cons:
            if con.sense not in ("<=", "=="):
                raise ModelingError(f"lin '{con.name}': bad sense")
            self._check_expr(con.expr, f"lin '{con.name}'", blocks, scalars)
        for con in self.quad_cons:
            if not con.terms:
                raise ModelingError(f"quad '{con.name}': no terms")
            for j, t in enumerate(con.terms):
                if t.coef <= 0 or not np.isfinite(t.coef):
                    raise ModelingError(f"quad '{con.name}': non-convex term {j}")
                self._check_expr(t.f, f"quad '{con.name}' term {j}", blocks, scalars)
                if t.den is not None:
                    self._check_expr(t.den, f"quad '{con.name}' den {j}", blocks, scalars)
            self._check_expr(con.bound, f"quad '{con.name}' bound", blocks, scalars)
        for con in self.psd2_cons:
            for nm, e in (("a", con.a), ("b", con.b), ("c", con.c)):
                self._check_expr(e, f"psd2 '{con.name}' entry {nm}", blocks, scalars)
        for con in self.diag_cons:
            if con.block not in blocks:
                raise ModelingError(f"diag '{con.name}': unknown block")
            if not (0 <= con.index < blocks[con.block].side):
                raise ModelingError(f"diag '{con.name}': index out of range")
            if not np.isfinite(con.value):
                raise ModelingError(f"diag '{con.name}': non-finite value")
        return self

    # -- evaluation ------------------------------------------------------------
    def constraint_violations(self, values: dict) -> list:
        """(name, violation >= 0) for every constraint, bounds and PSD cones.

        Violations are absolute, measured on the constraint as stated.
        """
        out = []
        for mv in self.matrix_vars:
            X = np.asarray(values[mv.name])
            lam = np.linalg.eigvalsh((X + X.conj().T) / 2.0)
            out.append((f"psd:{mv.name}", max(0.0, -float(lam[0]))))
        for sv in self.scalar_vars:
            v = float(values[sv.name])
            viol = 0.0
            if sv.lb is not None:
                viol = max(viol, sv.lb - v)
            if sv.ub is not None:
                viol = max(viol, v - sv.ub)
            out.append((f"bounds:{sv.name}", max(0.0, viol)))
        for con in self.lin_cons:
            v = con.expr.value(values)
            out.append((f"lin:{con.name}", abs(v) if con.sense == "==" else max(0.0, v)))
        for con in self.quad_cons:
            total = 0.0
            for t in con.terms:
                fv = t.f.value(values)
                dv = 1.0 if t.den is None else t.den.value(values)
                total += t.coef * fv * fv / max(dv, 1e-300)
            out.append((f"quad:{con.name}", max(0.0, total - con.bound.value(values))))
        for con in self.psd2_cons:
            a, b, c = (con.a.value(values), con.b.value(values), con.c.value(values))
            lam = np.linalg.eigvalsh(np.array([[a, b], [b, c]]))
            out.append((f"psd2:{con.name}", max(0.0, -float(lam[0]))))
        for con in self.diag_cons:
            X = np.asarray(values[con.block])
            out.append((f"diag:{con.name}", abs(float(X[con.index, con.index].real) - con.value)))
        return out

    def max_violation(self, values: dict) -> tuple:
        viols = self.constraint_violations(values)
        name, v = max(viols, key=lambda t: t[1])
        return name, v

    # -- debug dump --------------------------------------------------------
    def dump(self, include_data: bool = False) -> str:
        pool = {} if include_data else None
        lines = ["# ConeProgram dump v1"]
        for mv in self.matrix_vars:
            lines.append(f"matvar {mv.name} {mv.side} {mv.field}")
        for sv in self.scalar_vars:
            lb = "-" if sv.lb is None else f"{sv.lb:.17g}"
            ub = "-" if sv.ub is None else f"{sv.ub:.17g}"
            lines.append(f"scalar {sv.name} {lb} {ub}")
        lines.append(f"min {self.objective.render(pool)}")
        for con in self.lin_cons:
            lines.append(f"lin {con.name} {con.expr.render(pool)} {con.sense} 0")
        for con in self.quad_cons:
            terms = []
            for t in con.terms:
                s = f"{t.coef:.17g}*({t.f.render(pool)})^2"
                if t.den is not None:
                    s += f"/({t.den.render(pool)})"
                terms.append(s)
            lines.append(f"quad {con.name} {' + '.join(terms)} <= {con.bound.render(pool)}")
        for con in self.psd2_cons:
            a, b, c = (con.a.render(pool), con.b.render(pool), con.c.render(pool))
            lines.append(f"psd2 {con.name} [[{a} ; {b}];[{b} ; {c}]] >= 0")
        for con in self.diag_cons:
            lines.append(f"diag {con.name} {con.block}[{con.index}] == {con.value:.17g}")
        if include_data:
            for h in sorted(pool):
                C = pool[h]
                ent = " ".join(f"{v.real:.17g},{v.imag:.17g}" for v in C.ravel())
                lines.append(f"data {h} {ent}")
        return "\n".join(lines) + "\n"


# -- transforms ----------------------------------------------------------------

def embed_quadratic_as_psd(q: QuadCon, fresh: str = "") -> tuple:
    """Lower one convex quadratic constraint to 2x2 PSD conditions.

    Single term: coef*f^2/den <= bound becomes [[bound, f'], [f', den]] >= 0
    with f' = sqrt(coef)*f. Multiple terms get one slack u_j >= 0 and one 2x2
    block [[u_j, f_j'], [f_j', den_j]] each, plus the aggregate sum u_j <= bound.
    Returns (scalar_vars, psd2_cons, lin_cons).
    """
    for j, t in enumerate(q.terms):
        if t.coef <= 0 or not np.isfinite(t.coef):
            raise ModelingError(f"quad '{q.name}': non-convex term {j}")
    prefix = fresh or q.name
    if len(q.terms) == 1:
        t = q.terms[0]
        f = t.f * np.sqrt(t.coef)
        den = t.den if t.den is not None else LinExpr.constant(1.0)
        return [], [Psd2Con(f"{prefix}:schur", q.bound, f, den)], []
    svars, psd2, agg = [], [], LinExpr()
    for j, t in enumerate(q.terms):
        u = f"{prefix}:u{j}"
        svars.append(ScalarVar(u, lb=0.0))
        f = t.f * np.sqrt(t.coef)
        den = t.den if t.den is not None else LinExpr.constant(1.0)
        psd2.append(Psd2Con(f"{prefix}:schur{j}", LinExpr.scalar(u), f, den))
        agg = agg + LinExpr.scalar(u)
    lin = [LinCon(f"{prefix}:agg", agg - q.bound, "<=")]
    return svars, psd2, lin


def lower_quadratics(p: ConeProgram) -> ConeProgram:
    """Replace every quadratic constraint by its PSD embedding."""
    out = ConeProgram(
        matrix_vars=list(p.matrix_vars),
        scalar_vars=list(p.scalar_vars),
        objective=p.objective,
        lin_cons=list(p.lin_cons),
        quad_cons=[],
        psd2_cons=list(p.psd2_cons),
        diag_cons=list(p.diag_cons),
    )
    introduced = []
    for q in p.quad_cons:
        svars, psd2, lin = embed_quadratic_as_psd(q)
        out.scalar_vars.extend(svars)
        out.psd2_cons.extend(psd2)
        out.lin_cons.extend(lin)
        introduced.extend(sv.name for sv in svars)

    drop = set(introduced)

    def value_map(values):
        return {k: v for k, v in values.items() if k not in drop}

    out.value_map = value_map
    return out


def _realify_coeff(C: np.ndarray) -> np.ndarray:
    """Trace-preserving real embedding: Tr(C X) = Tr(C~ X~) with the 1/2."""
    C = np.asarray(C, dtype=complex)
    top = np.hstack([C.real, -C.imag])
    bot = np.hstack([C.imag, C.real])
    return 0.5 * np.vstack([top, bot])


def _realify_expr(expr: LinExpr, complex_blocks: set) -> LinExpr:
    mats = {}
    for b, C in expr.mats.items():
        mats[b] = _realify_coeff(C) if b in complex_blocks else np.asarray(C, dtype=float)
    return LinExpr(expr.const, dict(expr.scalars), mats)


def realify(p: ConeProgram) -> ConeProgram:
    """Equivalent all-real program; complex Hermitian blocks double in side.

    A complex diagonal constraint emits BOTH realified diagonal entries, so
    the realified feasible set is invariant under conjugation by
    J = [[0, -I], [I, 0]]; averaging any solution with its J-conjugate (which
    recovery below performs implicitly) lands on an exact embedding without
    changing objective or feasibility.
    """
    complex_blocks = {mv.name for mv in p.matrix_vars if mv.field == "complex"}
    out = ConeProgram()
    for mv in p.matrix_vars:
        if mv.field == "complex":
            out.add_matrix_var(mv.name, 2 * mv.side, "real")
        else:
            out.add_matrix_var(mv.name, mv.side, "real")
    out.scalar_vars = list(p.scalar_vars)
    out.objective = _realify_expr(p.objective, complex_blocks)
    for con in p.lin_cons:
        out.add_lin(con.name, _realify_expr(con.expr, complex_blocks), con.sense)
    for q in p.quad_cons:
        terms = tuple(
            QuadTerm(_realify_expr(t.f, complex_blocks),
                     None if t.den is None else _realify_expr(t.den, complex_blocks),
                     t.coef)
            for t in q.terms)
        out.add_quad(q.name, terms, _realify_expr(q.bound, complex_blocks))
    for con in p.psd2_cons:
        out.add_psd2(con.name,
                     _realify_expr(con.a, complex_blocks),
                     _realify_expr(con.b, complex_blocks),
                     _realify_expr(con.c, complex_blocks))
    sides = {mv.name: mv.side for mv in p.matrix_vars}
    for con in p.diag_cons:
        if con.block in complex_blocks:
            n = sides[con.block]
            out.add_diag(f"{con.name}:re", con.block, con.index, con.value)
            out.add_diag(f"{con.name}:im", con.block, con.index + n, con.value)
        else:
            out.add_diag(con.name, con.block, con.index, con.value)

    def value_map(values):
        mapped = {}
        for mv in p.matrix_vars:
            Xt = np.asarray(values[mv.name])
            if mv.field == "complex":
                n = mv.side
                A, B = Xt[:n, :n], Xt[:n, n:]
                C, D = Xt[n:, :n], Xt[n:, n:]
                X = (A + D) / 2.0 + 1j * (C - B) / 2.0
                mapped[mv.name] = (X + X.conj().T) / 2.0
            else:
                mapped[mv.name] = Xt
        for sv in p.scalar_vars:
            mapped[sv.name] = values[sv.name]
        return mapped

    out.value_map = value_map
    return out
