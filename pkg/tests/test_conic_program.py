"""Tests for the conic IR: expressions, validation, lowering, realification."""

import numpy as np
import pytest

from irsnoma.conic import (
    ConeProgram,
    LinExpr,
    ModelingError,
    QuadCon,
    QuadTerm,
    embed_quadratic_as_psd,
    lower_quadratics,
    realify,
)


def _herm(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (A + A.conj().T) / 2.0


def _embed(X):
    # standard real embedding of a Hermitian matrix
    return np.vstack([np.hstack([X.real, -X.imag]),
                      np.hstack([X.imag, X.real])])


def test_linexpr_algebra_and_value():
    rng = np.random.default_rng(0)
    C1, C2 = _herm(rng, 3), _herm(rng, 3)
    X = _herm(rng, 3)
    ex = (LinExpr.constant(2.0) + LinExpr.scalar("s", 3.0)
          + LinExpr.trace("X", C1) - LinExpr.trace("X", C2) * 0.5)
    vals = {"s": 1.5, "X": X}
    want = 2.0 + 4.5 + np.trace(C1 @ X).real - 0.5 * np.trace(C2 @ X).real
    assert ex.value(vals) == pytest.approx(want, rel=1e-12)
    neg = -ex
    assert neg.value(vals) == pytest.approx(-want, rel=1e-12)
    assert (1.0 - LinExpr.scalar("s")).value(vals) == pytest.approx(-0.5)


def test_linexpr_inputs_are_copied():
    ex = LinExpr.scalar("s")
    ex2 = ex + LinExpr.scalar("s")
    assert ex.scalars["s"] == 1.0 and ex2.scalars["s"] == 2.0


def _valid_program():
    p = ConeProgram()
    p.add_matrix_var("X", 2)
    p.add_scalar_var("t", lb=0.0)
    p.objective = LinExpr.scalar("t")
    p.add_lin("row", LinExpr.trace("X", np.eye(2)) - LinExpr.scalar("t"), "<=")
    return p


def test_validate_accepts_well_formed_program():
    assert _valid_program().validate() is not None


def test_validate_rejects_malformed_programs():
    p = _valid_program()
    p.add_scalar_var("t")                      # duplicate name
    with pytest.raises(ModelingError, match="duplicate"):
        p.validate()

    p = _valid_program()
    p.add_lin("bad", LinExpr.scalar("nope"), "<=")
    with pytest.raises(ModelingError, match="unknown scalar"):
        p.validate()

    p = _valid_program()
    p.add_lin("bad", LinExpr.trace("Y", np.eye(2)), "<=")
    with pytest.raises(ModelingError, match="unknown matrix block"):
        p.validate()

    p = _valid_program()
    p.add_lin("bad", LinExpr.trace("X", np.eye(3)), "<=")
    with pytest.raises(ModelingError, match="shape"):
        p.validate()

    p = _valid_program()
    p.add_lin("bad", LinExpr.trace("X", np.array([[0.0, 1.0], [0.0, 0.0]])), "<=")
    with pytest.raises(ModelingError, match="not Hermitian"):
        p.validate()

    p = _valid_program()
    p.add_lin("bad", LinExpr.scalar("t"), ">=")
    with pytest.raises(ModelingError, match="bad sense"):
        p.validate()

    p = _valid_program()
    p.add_quad("bad", [QuadTerm(f=LinExpr.scalar("t"), coef=-1.0)],
               LinExpr.constant(1.0))
    with pytest.raises(ModelingError, match="non-convex"):
        p.validate()

    p = _valid_program()
    p.add_quad("bad", [], LinExpr.constant(1.0))
    with pytest.raises(ModelingError, match="no terms"):
        p.validate()

    p = _valid_program()
    p.add_scalar_var("u", lb=2.0, ub=1.0)
    with pytest.raises(ModelingError, match="bounds"):
        p.validate()

    p = _valid_program()
    p.add_diag("bad", "X", 5, 1.0)
    with pytest.raises(ModelingError, match="index out of range"):
        p.validate()

    p = _valid_program()
    p.add_matrix_var("R", 2, field="real")
    p.add_lin("bad", LinExpr.trace("R", _herm(np.random.default_rng(1), 2)), "<=")
    with pytest.raises(ModelingError, match="complex coefficient on real"):
        p.validate()


def test_embed_single_term_quadratic():
    q = QuadCon("q", (QuadTerm(f=LinExpr.scalar("x"), den=LinExpr.scalar("y"),
                               coef=2.0),),
                LinExpr.scalar("t"))
    svars, psd2, lin = embed_quadratic_as_psd(q)
    assert not svars and not lin and len(psd2) == 1
    con = psd2[0]
    # feasible for the quadratic iff the 2x2 block is PSD (den > 0)
    rng = np.random.default_rng(5)
    for _ in range(50):
        vals = {"x": rng.normal(), "y": rng.uniform(0.1, 3.0),
                "t": rng.uniform(0.0, 10.0)}
        quad_ok = 2.0 * vals["x"] ** 2 / vals["y"] <= vals["t"] + 1e-12
        a, b, c = (con.a.value(vals), con.b.value(vals), con.c.value(vals))
        psd_ok = np.linalg.eigvalsh(np.array([[a, b], [b, c]]))[0] >= -1e-12
        assert quad_ok == psd_ok, vals


def test_embed_multi_term_quadratic():
    q = QuadCon("q", (QuadTerm(f=LinExpr.scalar("x"), coef=3.0),
                      QuadTerm(f=LinExpr.scalar("z"), den=LinExpr.scalar("y"))),
                LinExpr.scalar("t"))
    svars, psd2, lin = embed_quadratic_as_psd(q)
    assert len(svars) == 2 and len(psd2) == 2 and len(lin) == 1
    assert all(sv.lb == 0.0 for sv in svars)
    # tightest slacks reproduce the original left-hand side
    vals = {"x": 1.5, "z": 2.0, "y": 0.5, "t": 0.0}
    lhs = 3.0 * 1.5 ** 2 + 2.0 ** 2 / 0.5
    tight = {svars[0].name: 3.0 * 1.5 ** 2, svars[1].name: 2.0 ** 2 / 0.5}
    assert lin[0].expr.value({**vals, **tight}) == pytest.approx(lhs - 0.0)
    for con, u in zip(psd2, tight.values()):
        a = con.a.value({**vals, **tight})
        b = con.b.value({**vals, **tight})
        c = con.c.value({**vals, **tight})
        assert np.linalg.eigvalsh(np.array([[a, b], [b, c]]))[0] >= -1e-12


def test_lower_quadratics_preserves_other_constraints():
    p = _valid_program()
    p.add_quad("pw", [QuadTerm(f=LinExpr.scalar("t"), coef=1.0),
                      QuadTerm(f=LinExpr.scalar("t"), coef=2.0)],
               LinExpr.constant(5.0))
    low = lower_quadratics(p).validate()
    assert not low.quad_cons
    assert len(low.lin_cons) == len(p.lin_cons) + 1
    assert len(low.psd2_cons) == 2
    # value_map hides the introduced slacks
    fake = {"X": np.eye(2), "t": 1.0, "pw:u0": 1.0, "pw:u1": 2.0}
    mapped = low.value_map(fake)
    assert set(mapped) == {"X", "t"}


def test_realify_preserves_trace_values():
    rng = np.random.default_rng(9)
    n = 3
    p = ConeProgram()
    p.add_matrix_var("X", n)
    p.add_scalar_var("s")
    C = _herm(rng, n)
    expr = LinExpr.trace("X", C) + LinExpr.scalar("s", 2.0) + 1.0
    p.objective = expr
    p.add_lin("row", expr * 0.5, "<=")
    rp = realify(p).validate()
    assert rp.matrix_vars[0].side == 2 * n
    assert rp.matrix_vars[0].field == "real"
    for _ in range(10):
        X = _herm(rng, n)
        vals = {"X": X, "s": rng.normal()}
        rvals = {"X": _embed(X), "s": vals["s"]}
        assert rp.objective.value(rvals) == pytest.approx(expr.value(vals),
                                                          rel=1e-12)


def test_realify_round_trip_recovers_hermitian_matrix():
    rng = np.random.default_rng(4)
    n = 4
    p = ConeProgram()
    p.add_matrix_var("X", n)
    p.add_scalar_var("s", lb=0.0)
    p.add_diag("fix", "X", 1, 1.0)
    rp = realify(p)
    # diag constraint duplicated onto both embedded copies
    assert {(c.block, c.index) for c in rp.diag_cons} == {("X", 1), ("X", 1 + n)}
    X = _herm(rng, n)
    mapped = rp.value_map({"X": _embed(X), "s": 0.5})
    np.testing.assert_allclose(mapped["X"], X, atol=1e-12)
    assert mapped["s"] == 0.5
    # asymmetric embeddings land on their Hermitian average
    Xt = _embed(X)
    Xt[0, 1] += 0.1
    back = rp.value_map({"X": Xt, "s": 0.0})["X"]
    np.testing.assert_allclose(back, back.conj().T, atol=1e-12)


def test_realify_keeps_real_blocks_as_is():
    p = ConeProgram()
    p.add_matrix_var("R", 3, field="real")
    p.add_diag("d", "R", 0, 2.0)
    rp = realify(p)
    assert rp.matrix_vars[0].side == 3
    assert len(rp.diag_cons) == 1


def test_constraint_violations_and_max_violation():
    p = _valid_program()
    p.add_diag("pin", "X", 0, 1.0)
    good = {"X": np.eye(2), "t": 3.0}
    viols = dict(p.constraint_violations(good))
    assert all(v <= 1e-12 for v in viols.values())
    bad = {"X": np.diag([1.0, -0.5]), "t": 0.5}
    name, v = p.max_violation(bad)
    assert name == "lin:row" and v == pytest.approx(0.0, abs=1e-12) or v > 0
    viols = dict(p.constraint_violations(bad))
    assert viols["psd:X"] == pytest.approx(0.5)
    assert viols["lin:row"] == pytest.approx(0.0)


def test_dump_grammar_and_determinism():
    p = _valid_program()
    p.add_quad("pw", [QuadTerm(f=LinExpr.scalar("t"), den=None, coef=2.0)],
               LinExpr.constant(4.0))
    p.add_psd2("cr", LinExpr.scalar("t"), 1.0, LinExpr.scalar("t"))
    p.add_diag("pin", "X", 0, 1.0)
    text = p.dump()
    assert text.splitlines()[0] == "# ConeProgram dump v1"
    for tag in ("matvar X 2 complex", "scalar t 0 -", "min ", "lin row",
                "quad pw", "psd2 cr", "diag pin X[0] == 1"):
        assert any(line.startswith(tag) for line in text.splitlines()), tag
    assert p.dump() == text
    with_data = p.dump(include_data=True)
    assert any(line.startswith("data ") for line in with_data.splitlines())
