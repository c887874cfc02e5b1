import numpy as np
import pytest

from qkdmm.conic import BlockLayout, SubproblemError, build_constraints, conic_subproblem


def test_packing_roundtrip():
    lay = BlockLayout((2, 3))
    rng = np.random.default_rng(0)
    blocks = []
    for d in lay.dims:
        A = rng.standard_normal((d, d))
        blocks.append(A + A.T)
    x = lay.pack(blocks)
    assert x.size == lay.size == 3 + 6
    for a, b in zip(lay.unpack(x), blocks):
        np.testing.assert_array_equal(a, b)
    O = [np.diag([1.0, 2.0]), np.ones((3, 3))]
    v = lay.op_to_vec(O)
    assert v @ x == pytest.approx(sum(np.sum(o * b) for o, b in zip(O, blocks)))
    for a, b in zip(lay.vec_to_op(v), O):
        np.testing.assert_allclose(a, b)


def test_identity_objective_gives_one():
    lay = BlockLayout((2, 3))
    res = conic_subproblem([np.eye(2), np.eye(3)], build_constraints(lay, []))
    assert res.value == pytest.approx(1.0, abs=1e-8)
    assert res.certified == pytest.approx(1.0, abs=1e-8)


def test_negative_projector_gives_minus_one():
    lay = BlockLayout((3,))
    P = np.zeros((3, 3))
    P[:2, :2] = np.eye(2)
    res = conic_subproblem([-P], build_constraints(lay, []))
    assert res.value == pytest.approx(-1.0, abs=1e-8)
    assert res.certified <= res.value + 1e-12
    assert res.certified == pytest.approx(-1.0, abs=1e-8)


def _grid_minimum(C, a, points=10_000):
    """Minimum over 2x2 states with sigma_00 = a, by scanning the off-diagonal."""
    r = np.sqrt(a * (1 - a))
    c = np.linspace(-r, r, points)
    return float(np.min(C[0, 0] * a + C[1, 1] * (1 - a) + 2 * C[0, 1] * c))


@pytest.mark.parametrize("seed", range(5))
def test_matches_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((2, 2))
    C = A + A.T
    a = float(rng.uniform(0.1, 0.9))
    E = np.diag([1.0, 0.0])
    cons = build_constraints(BlockLayout((2,)), [([E], a)])
    res = conic_subproblem([C], cons)
    grid = _grid_minimum(C, a)
    assert res.value == pytest.approx(grid, abs=1e-6)
    assert res.certified <= grid + 1e-9
    assert res.certified == pytest.approx(grid, abs=1e-6)


def test_inequality_is_respected():
    lay = BlockLayout((2, 2))
    P = [np.eye(2), np.zeros((2, 2))]
    cons = build_constraints(lay, [], [(P, 0.7)])
    res = conic_subproblem([np.eye(2), -np.eye(2)], cons)
    assert res.value == pytest.approx(0.7 - 0.3, abs=1e-7)
    assert res.certified == pytest.approx(0.4, abs=1e-7)


def test_dependent_rows_are_pruned_without_changing_the_bound():
    lay = BlockLayout((3,))
    rng = np.random.default_rng(2)
    E1 = np.diag([1.0, 0.0, 0.0])
    E2 = np.diag([0.0, 1.0, 0.0])
    eqs = [([E1], 0.3), ([E2], 0.5)]
    # the third row is the identity minus the first two, already implied by unit trace
    redundant = eqs + [([np.eye(3) - E1 - E2], 0.2), ([2 * E1], 0.6)]
    A = rng.standard_normal((3, 3))
    C = [A + A.T]
    base = build_constraints(lay, eqs)
    pruned = build_constraints(lay, redundant)
    assert pruned.rank_dropped == 2
    a, b = conic_subproblem(C, base), conic_subproblem(C, pruned)
    assert abs(a.certified - b.certified) < 1e-8
    assert abs(a.value - b.value) < 1e-8


def test_relaxed_solve_gives_a_valid_bound():
    lay = BlockLayout((2,))
    E = np.diag([1.0, 0.0])
    C = [np.array([[1.0, -2.0], [-2.0, 0.5]])]
    cons = build_constraints(lay, [([E], 0.4)])
    exact = conic_subproblem(C, cons)
    relaxed = conic_subproblem(C, cons, relax=1e-6)
    assert relaxed.certified <= exact.value + 1e-9
    assert relaxed.certified == pytest.approx(exact.value, abs=1e-5)


def test_infeasible_raises():
    lay = BlockLayout((2,))
    E = np.diag([1.0, 0.0])
    cons = build_constraints(lay, [([E], 1.5)])
    with pytest.raises(SubproblemError):
        conic_subproblem([np.eye(2)], cons)
