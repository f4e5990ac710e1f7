import io

import numpy as np
import pytest

from convexcert.sdp import SdpProblem, dump_sdp, feasibility, solve


def _sym(rng, k):
    m = rng.normal(size=(k, k))
    return 0.5 * (m + m.T)


def random_strictly_feasible(rng, dims, p):
    """Primal and dual strictly feasible instance: bounded, solvable."""
    x0 = []
    s0 = []
    for k in dims:
        r = rng.normal(size=(k, k))
        x0.append(r @ r.T + 0.2 * np.eye(k))
        r = rng.normal(size=(k, k))
        s0.append(r @ r.T + 0.2 * np.eye(k))
    y0 = rng.normal(size=p)
    eqs = []
    amats = []
    for i in range(p):
        mats = {b: _sym(rng, k) for b, k in enumerate(dims)}
        rhs = sum(np.tensordot(mats[b], x0[b]) for b in range(len(dims)))
        eqs.append((mats, float(rhs)))
        amats.append(mats)
    objective = {}
    for b, k in enumerate(dims):
        c = s0[b].copy()
        for i in range(p):
            c = c + y0[i] * amats[i][b]
        objective[b] = c
    return SdpProblem(block_dims=list(dims), objective=objective, equalities=eqs)


# -- examples ---------------------------------------------------------------------


def test_scalar_equality():
    p = SdpProblem([1], {0: np.array([[1.0]])}, [({0: np.array([[1.0]])}, 1.0)])
    sol = solve(p)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(1.0, abs=1e-7)
    assert sol.X[0][0, 0] == pytest.approx(1.0, abs=1e-7)


def test_minimize_one_diagonal_entry():
    p = SdpProblem([2], {0: np.diag([1.0, 0.0])}, [({0: np.eye(2)}, 1.0)])
    sol = solve(p)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(0.0, abs=1e-6)
    assert sol.X[0][1, 1] == pytest.approx(1.0, abs=1e-6)


def test_offdiagonal_determinant_infeasible():
    # trace X = 1 with X12 = 0.6 needs X11*X22 >= 0.36, but X11*X22 <= 0.25.
    e12 = np.array([[0.0, 0.5], [0.5, 0.0]])
    p = SdpProblem([2], {}, [({0: np.eye(2)}, 1.0), ({0: e12}, 0.6)])
    sol = feasibility(p)
    assert sol.status == "infeasible"
    assert sol.certificate is not None


def test_offdiagonal_below_threshold_feasible():
    e12 = np.array([[0.0, 0.5], [0.5, 0.0]])
    p = SdpProblem([2], {}, [({0: np.eye(2)}, 1.0), ({0: e12}, 0.4)])
    sol = feasibility(p)
    assert sol.status == "optimal"
    x = sol.X[0]
    assert abs(np.trace(x) - 1.0) <= 1e-6
    assert abs(x[0, 1] - 0.4) <= 1e-6
    assert np.linalg.eigvalsh(x)[0] >= -1e-9


def test_negative_scalar_equality_infeasible():
    p = SdpProblem([1], {}, [({0: np.array([[1.0]])}, -1.0)])
    sol = feasibility(p)
    assert sol.status == "infeasible"


def test_trace_one_analytic_center():
    p = SdpProblem([2], {}, [({0: np.eye(2)}, 1.0)])
    sol = feasibility(p)
    assert sol.status == "optimal"
    assert np.max(np.abs(sol.X[0] - 0.5 * np.eye(2))) <= 1e-4


def test_empty_equalities_feasible():
    p = SdpProblem([2], {}, [])
    sol = feasibility(p)
    assert sol.status == "optimal"
    assert np.linalg.eigvalsh(sol.X[0])[0] >= -1e-12


def test_unbounded_detection():
    p = SdpProblem([2], {0: -np.eye(2)}, [])
    sol = solve(p)
    assert sol.status == "unbounded"
    assert sol.certificate["type"] == "unboundedness-ray"


def test_multi_block():
    p = SdpProblem(
        [1, 2],
        {0: np.array([[2.0]]), 1: np.eye(2)},
        [({0: np.array([[1.0]]), 1: np.eye(2)}, 2.0)],
    )
    sol = solve(p)
    assert sol.status == "optimal"
    total = sol.X[0][0, 0] + np.trace(sol.X[1])
    assert total == pytest.approx(2.0, abs=1e-6)


# -- input validation ------------------------------------------------------------------


def test_rejects_nonsymmetric():
    bad = np.array([[0.0, 1.0], [0.0, 0.0]])
    p = SdpProblem([2], {0: bad}, [])
    with pytest.raises(ValueError):
        solve(p)


def test_rejects_dimension_mismatch():
    p = SdpProblem([2], {0: np.eye(3)}, [])
    with pytest.raises(ValueError):
        solve(p)


def test_rejects_bad_tolerance():
    p = SdpProblem([1], {0: np.eye(1)}, [])
    with pytest.raises(ValueError):
        solve(p, tol=0.5)


def test_feasibility_rejects_nonzero_objective():
    p = SdpProblem([1], {0: np.array([[1.0]])}, [])
    with pytest.raises(ValueError):
        feasibility(p)


# -- redundant and inconsistent rows -----------------------------------------------------


def test_max_iter_exhaustion_reports_stalled():
    rng = np.random.default_rng(1)
    problem = random_strictly_feasible(rng, [4], 6)
    sol = solve(problem, tol=1e-8, max_iter=1)
    assert sol.status == "stalled"
    full = solve(problem, tol=1e-8, max_iter=100)
    assert full.status == "optimal"


def test_zero_row_with_zero_rhs_dropped():
    p = SdpProblem([2], {}, [({0: np.eye(2)}, 1.0), ({0: np.zeros((2, 2))}, 0.0)])
    sol = feasibility(p)
    assert sol.status == "optimal"
    assert 1 in sol.diagnostics["dropped_rows"]


def test_zero_row_with_nonzero_rhs_infeasible():
    p = SdpProblem([2], {}, [({0: np.zeros((2, 2))}, 1.0)])
    sol = feasibility(p)
    assert sol.status == "infeasible"


def test_duplicate_rows_are_dropped():
    row = ({0: np.eye(2)}, 1.0)
    p = SdpProblem([2], {}, [row, ({0: np.eye(2)}, 1.0)])
    sol = feasibility(p)
    assert sol.status == "optimal"
    assert sol.diagnostics["dropped_rows"]


def test_inconsistent_duplicate_rows_infeasible():
    p = SdpProblem([2], {}, [({0: np.eye(2)}, 1.0), ({0: np.eye(2)}, 2.0)])
    sol = feasibility(p)
    assert sol.status == "infeasible"
    assert sol.certificate["type"] == "linear-inconsistency"


# -- random batteries ----------------------------------------------------------------------


def test_random_strictly_feasible_battery():
    rng = np.random.default_rng(2024)
    for trial in range(12):
        nblocks = int(rng.integers(1, 3))
        dims = [int(rng.integers(2, 8)) for _ in range(nblocks)]
        p = int(rng.integers(1, 2 * sum(dims)))
        problem = random_strictly_feasible(rng, dims, p)
        sol = solve(problem, tol=1e-8, max_iter=100)
        assert sol.status == "optimal", f"trial {trial}: {sol.status}"
        assert sol.relative_gap <= 1e-7
        # objective value must match <C, X> recomputed from the returned blocks
        recomputed = sum(
            np.tensordot(problem.objective[b], sol.X[b]) for b in range(len(dims))
        )
        scale = max(1.0, abs(recomputed))
        assert abs(sol.objective_value - recomputed) <= 1e-8 * scale
        for x in sol.X:
            norm = max(1.0, np.linalg.norm(x, 2))
            assert np.linalg.eigvalsh(x)[0] >= -10 * 1e-8 * norm


def test_random_infeasible_battery():
    rng = np.random.default_rng(99)
    e12 = np.array([[0.0, 0.5], [0.5, 0.0]])
    for _ in range(6):
        c = float(rng.uniform(0.55, 0.95))
        p = SdpProblem([2], {}, [({0: np.eye(2)}, 1.0), ({0: e12}, c)])
        assert feasibility(p).status == "infeasible"


# -- dump format -------------------------------------------------------------------------


def test_dump_format():
    p = SdpProblem(
        [2, 1],
        {0: np.array([[1.0, 0.5], [0.5, 0.0]])},
        [({0: np.eye(2), 1: np.array([[2.0]])}, 3.0)],
    )
    buf = io.StringIO()
    dump_sdp(p, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "sdp 1"
    assert lines[1] == "blocks 2 1"
    assert lines[2] == "nconstraints 1"
    assert "c 0 0 0 1.0" in lines
    assert "c 0 0 1 0.5" in lines
    assert "b 0 3.0" in lines
    assert "a 0 0 0 0 1.0" in lines
    assert "a 0 1 0 0 2.0" in lines
    # only upper-triangular entries are emitted
    assert not any(line.startswith("a 0 0 1 0") for line in lines)
