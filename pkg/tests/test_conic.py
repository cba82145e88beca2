import io

import numpy as np
import pytest

from conftest import rayleigh
from robust_precoding.conic import (Affine, ConicProgram, SOLVERS, Tolerances, check_solution,
                                    dump_program, feasibility_verdict, load_program, solve)
from robust_precoding.conic.program import packed_index
from robust_precoding.formulations import ProblemData, build_perfect_csi, build_robust
from robust_precoding.metrics import QoSTargets
from robust_precoding.uncertainty import make_interval
from robust_precoding.embed import embed_row

ADAPTERS = sorted(SOLVERS)


def soc_toy():
    p = ConicProgram()
    t = p.var("t")
    p.add_soc(t, [3.0, 4.0], name="norm")
    p.minimize(t)
    return p


def psd_toy():
    p = ConicProgram()
    t = p.var("t")
    p.add_psd(2, {(0, 0): t, (1, 0): 1.0, (1, 1): t}, name="lmi")
    p.minimize(t)
    return p


def infeasible_toy():
    p = ConicProgram()
    x = p.var("x")
    p.add_nonneg([x - 1.0], name="x>=1")
    p.add_nonneg([-x], name="x<=0")
    p.minimize(x)
    return p


def mixed_toy():
    # min x + y  s.t.  x = 2y (zero cone), [[x, 1], [1, y]] psd, x >= 0.5
    p = ConicProgram()
    x, y = p.var("x"), p.var("y")
    p.add_zero([x - 2.0 * y], "ratio")
    p.add_psd(2, {(0, 0): x, (1, 0): 1.0, (1, 1): y}, "lmi")
    p.add_nonneg([x - 0.5], "lb")
    p.minimize(x + y)
    return p


@pytest.mark.parametrize("solver", ADAPTERS)
def test_soc_toy(solver):
    r = solve(soc_toy(), solver=solver)
    assert r.status == "optimal"
    assert r.value("t") == pytest.approx(5.0, abs=1e-7)
    assert r.residuals.max_violation <= 1e-8


@pytest.mark.parametrize("solver", ADAPTERS)
def test_psd_toy(solver):
    r = solve(psd_toy(), solver=solver)
    assert r.status == "optimal"
    assert r.value("t") == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("solver", ADAPTERS)
def test_infeasible_toy(solver):
    r = solve(infeasible_toy(), solver=solver)
    assert r.status == "infeasible"
    ok, _ = feasibility_verdict(infeasible_toy(), solver=solver)
    assert not ok


@pytest.mark.parametrize("solver", ADAPTERS)
def test_mixed_cones(solver):
    # psd means xy >= 1; with x = 2y the optimum is y = 1/sqrt(2)
    r = solve(mixed_toy(), solver=solver)
    assert r.status == "optimal"
    assert r.value("y") == pytest.approx(np.sqrt(0.5), abs=1e-6)
    assert r.objective == pytest.approx(3 * np.sqrt(0.5), abs=1e-7)


def test_unknown_solver():
    with pytest.raises(ValueError):
        solve(soc_toy(), solver="nope")


def test_check_solution_detects_soc_violation():
    p = soc_toy()
    assert check_solution(p, {"t": 5.0}).max_violation <= 1e-8
    rep = check_solution(p, {"t": 5.0 - 1e-3})
    assert rep.worst().name == "norm"
    assert rep.max_violation == pytest.approx(1e-3, rel=1e-9)


def test_check_solution_psd_eigenvalue_floor():
    p = psd_toy()
    assert check_solution(p, {"t": 0.5}).max_violation == pytest.approx(0.5, rel=1e-12)
    assert check_solution(p, {"t": 1.0}).max_violation <= 1e-15


def test_psd_entries_lower_triangle_only():
    p = ConicProgram()
    t = p.var("t")
    with pytest.raises(ValueError):
        p.add_psd(2, {(0, 1): t})
    with pytest.raises(ValueError):
        p.add_psd(2, {(2, 0): t})


def test_undeclared_variable_rejected():
    p = ConicProgram()
    p.var("a")
    with pytest.raises(ValueError):
        p.add_nonneg([Affine({3: 1.0})])
    with pytest.raises(ValueError):
        p.var("a")


def test_block_matrix_is_symmetric_by_construction():
    p = psd_toy()
    M = p.block_matrix(p.blocks[0], np.array([2.0]))
    assert np.array_equal(M, M.T)
    assert packed_index(1, 0) == packed_index(0, 1) == 1


def test_affine_arithmetic():
    a = Affine({0: 2.0}, 1.0)
    b = Affine({0: -2.0, 1: 3.0}, 0.5)
    c = (a + b) * 2 - 1.0
    assert c.terms.get(0, 0.0) == 0.0 and c.terms[1] == 6.0 and c.const == 2.0
    assert (-a).value(np.array([1.0])) == -3.0


def instances(rng, n):
    out = []
    for i in range(n):
        H = rayleigh(rng, 3, 3)
        t = QoSTargets.from_sinr_db([6.0] * 3)
        if i % 2:
            regions = tuple(make_interval(embed_row(h), np.full(6, 0.02)) for h in H)
            data = ProblemData(H, 1.0, t, regions, mode="thp", ordering=(2, 0, 1))
            out.append(build_robust(data, "conservative"))
        else:
            out.append(build_robust(ProblemData.spherical(H, 1.0, t, 0.05)))
    out.append(build_perfect_csi(ProblemData(rayleigh(rng, 2, 3), 0.5, QoSTargets([0.3, 0.4]))))
    return out


def test_dump_load_round_trip(rng):
    for prog in instances(rng, 2):
        buf = io.StringIO()
        dump_program(prog, buf)
        text = buf.getvalue()
        back = load_program(io.StringIO(text))
        assert back.var_names == prog.var_names
        A1, b1 = prog.compile()
        A2, b2 = back.compile()
        assert (A1 != A2).nnz == 0 and np.array_equal(b1, b2)
        assert [(b.cone, b.order, b.name) for b in back.blocks] == \
            [(b.cone, b.order, b.name) for b in prog.blocks]
        again = io.StringIO()
        dump_program(back, again)
        assert again.getvalue() == text


def test_dump_format_header():
    buf = io.StringIO()
    dump_program(soc_toy(), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "conic-program 1"
    assert lines[1] == "variables 1"
    assert "1 soc 1 0 0 3.0" in lines


def test_load_rejects_other_formats():
    with pytest.raises(ValueError):
        load_program(io.StringIO("something else\n"))


@pytest.mark.skipif(len(ADAPTERS) < 2, reason="needs both adapters")
def test_adapters_agree(rng):
    # differential check across solvers on loaded dumps
    for prog in instances(rng, 4):
        buf = io.StringIO()
        dump_program(prog, buf)
        loaded = load_program(io.StringIO(buf.getvalue()))
        res = {s: solve(loaded, solver=s) for s in ADAPTERS}
        statuses = {r.status for r in res.values()}
        assert statuses == {"optimal"}
        objs = [r.objective for r in res.values()]
        assert max(objs) - min(objs) <= 1e-5 * max(1.0, abs(objs[0]))
        for r in res.values():
            assert check_solution(loaded, r.x).max_violation <= 1e-6


def test_optimal_implies_verified_residuals(rng):
    for prog in instances(rng, 2):
        r = solve(prog, Tolerances())
        assert r.status == "optimal"
        assert check_solution(prog, r.x).ok(1e-6)
