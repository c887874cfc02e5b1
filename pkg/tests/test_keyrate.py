import math

import numpy as np
import pytest
from scipy.linalg import logm
from scipy.stats import entropy

from _support import assemble, feasible_points
from qkdmm.channel import ChannelParams, simulate
from qkdmm.detectors import uniform_receiver
from qkdmm.keyrate import (
    binary_entropy,
    build_problem,
    certificate,
    gradient,
    inner,
    key_rate,
    leak_ec,
    objective,
    pinch,
    solve,
)


def rel_entropy_bits(X):
    """D(X || pinch X) from matrix logarithms, for full-rank X."""
    Z = pinch(X)
    return float(np.trace(X @ (logm(X) - logm(Z))).real) / math.log(2)


@pytest.mark.parametrize("p", [0.01, 0.11, 0.25, 0.5, 0.93])
def test_binary_entropy(p):
    assert binary_entropy(p) == pytest.approx(entropy([p, 1 - p], base=2), abs=1e-14)


def test_binary_entropy_edges():
    assert binary_entropy(0.11) == pytest.approx(0.4999, abs=1e-4)
    assert binary_entropy(0.0) == binary_entropy(1.0) == 0.0


def test_leak_ec():
    stats, _ = simulate(uniform_receiver("active", 0.5), ChannelParams(0.1, 0.4, 0.0))
    assert leak_ec(stats) == pytest.approx(stats.p_pass * binary_entropy(0.05))
    assert leak_ec(stats, f_ec=1.2) == pytest.approx(1.2 * leak_ec(stats))


def test_pinch():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 6))
    X = A @ A.T
    Z = pinch(X)
    np.testing.assert_array_equal(pinch(Z), Z)
    assert np.trace(Z) == pytest.approx(np.trace(X))
    assert np.all(Z[:3, 3:] == 0)


def test_objective_matches_matrix_logarithm():
    rng = np.random.default_rng(1)
    blocks, G = [], []
    for d in (2, 4):
        A = rng.standard_normal((d, d))
        blocks.append(A @ A.T / np.trace(A @ A.T) / 2)
        G.append(rng.standard_normal((d, d)))
    want = sum(rel_entropy_bits(K @ R @ K.T) for K, R in zip(G, blocks))
    assert objective(blocks, G) == pytest.approx(want, rel=1e-9)
    assert objective(blocks, G) >= 0


def test_gradient_finite_difference_on_random_blocks():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((4, 4))
    R = [A @ A.T / 8]
    G = [rng.standard_normal((4, 4))]
    B = rng.standard_normal((4, 4))
    D = [B + B.T]
    h = 1e-6
    fd = (objective([R[0] + h * D[0]], G) - objective([R[0] - h * D[0]], G)) / (2 * h)
    assert inner(gradient(R, G), D) == pytest.approx(fd, rel=1e-6)


def test_ideal_channel_rate():
    res = key_rate(uniform_receiver("active", 1.0), ChannelParams(0.0, 1.0, 0.0), mode="cutoff")
    assert res.key_rate_lb == pytest.approx(0.25, abs=1e-3)
    assert res.status == "ok"


@pytest.mark.parametrize(
    "scheme,t,eta,omega",
    [("active", 0.1, 1.0, 0.05), ("active", 0.5, 0.3, 0.1), ("passive", 0.3, 0.8, 0.02)],
)
def test_single_photon_closed_form(scheme, t, eta, omega):
    # without resends and mismatch the optimum is the sifted rate times 1 - h(e)
    exact = 0.25 * t * eta * (1 - binary_entropy(omega / 2))
    problem = assemble(scheme, 1, eta, eta, omega, 0.0, t, "cutoff", 2)
    res = solve(problem)
    assert res.beta <= exact + 1e-9
    assert res.beta == pytest.approx(exact, abs=1e-6)


@pytest.fixture(scope="module")
def flag_instance():
    problem = assemble("active", 1, 0.2, 0.15, 0.05, 0.05, 0.5, "flag", 2)
    return problem, solve(problem)


def test_certificate_is_sound(flag_instance):
    problem, res = flag_instance
    rng = np.random.default_rng(3)
    assert res.beta <= objective(problem.start, problem.G) + 1e-8
    for sigma in feasible_points(problem, problem.start, rng):
        assert problem.residuals(sigma)["equality"] < 1e-8
        assert res.beta <= objective(sigma, problem.G) + 1e-8


def test_certificate_brackets_the_optimum(flag_instance):
    problem, res = flag_instance
    plain = solve(problem, warm_start=False)
    assert res.beta <= plain.primal + 1e-9
    assert plain.beta <= res.primal + 1e-9
    assert res.primal - res.beta < 1e-5
    assert res.history == sorted(res.history, reverse=True)


def test_certificate_stable_under_epsilon(flag_instance):
    problem, res = flag_instance
    a, _ = certificate(problem, res.rho, 1e-12)
    b, _ = certificate(problem, res.rho, 1e-11)
    assert abs(a - b) < 1e-6
    assert res.status == "ok"


def test_result_document(flag_instance):
    _, res = flag_instance
    doc = res.to_dict()
    assert set(doc) >= {"beta", "leak_ec", "key_rate_lb", "fw_gap", "iterations", "epsilon",
                        "status"}
    assert doc["key_rate_lb"] == pytest.approx(doc["beta"] - doc["leak_ec"])
    assert res.reduced_dims


def test_keep_map_trace():
    problem = assemble("passive", 1, 0.7, 0.7, 0.05, 0.05, 0.4, "cutoff", 2)
    # sum of Tr G(rho) is half the kept weight over all of Alice's inputs
    s = problem.stats
    kept = sum(s.p(x, y) for x in s.alice_labels for y in ("1000", "0100", "1100"))
    total = sum(float(np.trace(K @ R @ K.T)) for K, R in zip(problem.G, problem.start))
    assert total == pytest.approx(kept / 2)


def test_build_problem_rejects_bad_input():
    spec = uniform_receiver("active", 0.5)
    stats, rho = simulate(spec, ChannelParams(0.05, 0.5, 0.05))
    with pytest.raises(ValueError):
        build_problem(spec, stats, rho, "cutoff", 1)
    with pytest.raises(ValueError):
        build_problem(spec, stats, rho, "flag", 3)
    with pytest.raises(ValueError):
        build_problem(spec, stats, rho, "other", 2)


def test_lift_restores_block_structure():
    problem = assemble("active", 1, 1.0, 1.0, 0.0, 0.0, 1.0, "cutoff", 2)
    full = problem.lift(problem.start)
    assert len(full) == len(problem.support)
    assert sum(float(np.trace(B)) for B in full) == pytest.approx(1.0)


def test_stalled_certificate_solve_is_retried(flag_instance, monkeypatch):
    import qkdmm.keyrate as kr

    problem, res = flag_instance
    real = kr.conic_subproblem

    def stalled(C, cons, relax=0.0, tol=1e-10):
        out = real(C, cons, relax=relax, tol=tol)
        if tol <= 1e-10:
            out.status, out.certified = "unknown", out.certified - 1.0
        return out

    monkeypatch.setattr(kr, "conic_subproblem", stalled)
    beta, status = certificate(problem, res.rho)
    assert "unknown" in status and "optimal" in status
    assert beta == pytest.approx(res.beta, abs=1e-6)
