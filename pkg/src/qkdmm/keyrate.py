"""Certified lower bound on the asymptotic key rate.

The privacy-amplification term is the minimum of
``f(rho) = D(G(rho) || Z(G(rho)))`` over joint states consistent with the
observed table and the photon-number bounds. ``G`` keeps Alice's key-basis
rounds and Bob's key-basis clicks. ``Z`` pinches Alice's key register.
Frank-Wolfe drives the primal down. The final bound comes from the
linearization at the best iterate, which holds for any point by convexity.

Everything operates on lists of real symmetric blocks. Joint blocks have
Alice as the outer factor, so her ``H`` half is the first half of each block.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .channel import ChannelParams, ObservedStats, simulate
from .conic import (
    CONIC_TOL,
    FALLBACK_TOLS,
    BlockLayout,
    ConstraintSet,
    SubproblemError,
    build_constraints,
    conic_subproblem,
)
from .interior import interior_point
from .detectors import (
    ALICE_LABELS,
    PovmSet,
    ReceiverSpec,
    build_alice_povm,
    build_bob_povm,
    grouped_elements,
)
from .operators import BlockOperator, alice_tensor
from .photon_bounds import (
    DEFAULT_N_MAX,
    PhotonBounds,
    bounds_active,
    bounds_passive,
    sector_minima,
)
from .squasher import projector_k, squash_povm, squash_state, squashed_space

log = logging.getLogger(__name__)

EPSILON = 1e-12
FW_GAP_TOL = 1e-6
FW_MAX_ITER = 300
LINE_SEARCH_EVALS = 30
EPS_AGREEMENT = 1e-6
CERT_RELAX = 1e-9
ZERO_PROB = 1e-15  # outcomes at or below this count as never observed
FACE_TOL = 1e-10
FLAG, CUTOFF = "flag", "cutoff"


class KeyRateError(RuntimeError):
    """Numerical failure inside the key-rate solver."""


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def leak_ec(stats: ObservedStats, f_ec: float = 1.0) -> float:
    """Error-correction leakage per round at efficiency ``f_ec``."""
    return f_ec * stats.p_pass * binary_entropy(stats.e_sift)


def _psd_sqrt(M: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    w, U = np.linalg.eigh(0.5 * (M + M.T))
    if w[0] < -tol:
        raise ValueError(f"keep operator is not positive semidefinite (eigenvalue {w[0]:.3g})")
    return (U * np.sqrt(np.clip(w, 0, None))) @ U.T


def build_G(keep: BlockOperator) -> list[np.ndarray]:
    """Kraus operator ``(1/sqrt 2) 1_A (x) sqrt(M_keep)`` per joint block.

    Args:
        keep: Bob-only keep operator on the variable's structure; its flag
            part, when present, is a 0/1 vector.

    Returns:
        One matrix per block, sectors first, then flags.
    """
    s = 1 / math.sqrt(2)
    out = [s * np.kron(np.eye(2), _psd_sqrt(keep.blocks[n])) for n in keep.sectors]
    if keep.flags is not None:
        if np.min(keep.flags) < -1e-10:
            raise ValueError("keep operator is not positive semidefinite on the flags")
        out += [s * math.sqrt(max(f, 0.0)) * np.eye(2) for f in keep.flags]
    return out


def pinch(X: np.ndarray) -> np.ndarray:
    """Pinch a joint block onto Alice's key basis."""
    d = X.shape[0] // 2
    Z = np.zeros_like(X)
    Z[:d, :d] = X[:d, :d]
    Z[d:, d:] = X[d:, d:]
    return Z


def _xlogx(w: np.ndarray, eps: float) -> float:
    return float(np.sum(w * np.log2(np.maximum(w, eps))))


def _block_terms(X: np.ndarray, eps: float, want_grad: bool):
    d = X.shape[0] // 2
    w, U = np.linalg.eigh(X)
    value = _xlogx(w, eps)
    grad = (U * np.log2(np.maximum(w, eps))) @ U.T if want_grad else None
    for sl in (slice(0, d), slice(d, 2 * d)):
        wa, Ua = np.linalg.eigh(X[sl, sl])
        value -= _xlogx(wa, eps)
        if want_grad:
            grad[sl, sl] -= (Ua * np.log2(np.maximum(wa, eps))) @ Ua.T
    return value, grad


def objective(rho, G, eps: float = EPSILON) -> float:
    """``D(G(rho) || Z(G(rho)))`` in bits, eigenvalues floored at ``eps``."""
    total = 0.0
    for R, K in zip(rho, G):
        X = K @ R @ K.T
        total += _block_terms(0.5 * (X + X.T), eps, False)[0]
    if not math.isfinite(total):
        raise KeyRateError("objective evaluated to a non-finite value")
    return total


def gradient(rho, G, eps: float = EPSILON) -> list[np.ndarray]:
    """``G^T (log2 G(rho) - log2 Z(G(rho))) G`` per block."""
    out = []
    for R, K in zip(rho, G):
        X = K @ R @ K.T
        _, L = _block_terms(0.5 * (X + X.T), eps, True)
        g = K.T @ L @ K
        if not np.all(np.isfinite(g)):
            raise KeyRateError("gradient has non-finite entries")
        out.append(0.5 * (g + g.T))
    return out


def inner(A, B) -> float:
    return float(sum(np.sum(a * b) for a, b in zip(A, B)))


def combine(A, B, s: float):
    """``(1 - s) A + s B`` blockwise."""
    return [a + s * (b - a) for a, b in zip(A, B)]


@dataclass
class KeyRateProblem:
    """Constraints, maps and starting point for one parameter point.

    Attributes:
        mode: ``"flag"`` or ``"cutoff"``.
        k: flag threshold, or the photon cutoff in cutoff mode.
        layout: block dimensions of the variable.
        G: Kraus blocks of the post-selection map.
        equalities: ``(blocks, value)`` pairs from the joint table.
        inequalities: ``(blocks, lower)`` pairs ``Tr(Pi rho) >= b``.
        start: feasible starting state (the processed simulated state).
        stats: observed statistics that generated the constraints.
        bounds: photon-number bounds used, if any.
    """

    mode: str
    k: int
    layout: BlockLayout
    G: list[np.ndarray]
    equalities: list
    inequalities: list
    start: list[np.ndarray]
    stats: ObservedStats
    bounds: PhotonBounds | None = None
    support: list = field(default_factory=list, repr=False)
    _cons: ConstraintSet | None = field(default=None, repr=False)

    def lift(self, tau) -> list[np.ndarray]:
        """Map reduced blocks back to the full block structure (dropped blocks as zero)."""
        return [V @ T @ V.T for (_, V), T in zip(self.support, tau)]

    @property
    def constraints(self) -> ConstraintSet:
        if self._cons is None:
            self._cons = build_constraints(self.layout, self.equalities, self.inequalities)
        return self._cons

    def residuals(self, rho) -> dict[str, float]:
        """Largest equality violation and most negative inequality slack."""
        eq = max(abs(inner(b, rho) - v) for b, v in self.equalities)
        tr = abs(sum(float(np.trace(R)) for R in rho) - 1)
        ineq = min((inner(b, rho) - v for b, v in self.inequalities), default=0.0)
        return {"equality": max(eq, tr), "inequality": ineq}


def _joint_constraints(bob: PovmSet) -> list:
    alice = build_alice_povm()
    out = []
    for x in ALICE_LABELS:
        for y, e in zip(bob.labels, bob.elements):
            out.append((alice_tensor(alice[x], e).block_list(), x, y))
    return out


def face_bases(equalities, dims) -> list[np.ndarray]:
    """Orthonormal bases of the smallest block face holding every feasible state.

    Every constraint operator is PSD, so an outcome with zero probability
    forces the state onto the kernel of its operator. Restricting the variable
    to that kernel removes directions without interior, where interior-point
    solvers lose their dual multipliers.
    """
    null = [np.zeros((d, d)) for d in dims]
    for blocks, value in equalities:
        if value <= ZERO_PROB:
            for acc, B in zip(null, blocks):
                acc += B
    out = []
    for N in null:
        w, U = np.linalg.eigh(N)
        scale = max(1.0, float(np.max(np.abs(w)))) if len(w) else 1.0
        out.append(U[:, w <= FACE_TOL * scale])
    return out


def build_problem(
    spec: ReceiverSpec,
    stats: ObservedStats,
    rho: BlockOperator,
    mode: str = FLAG,
    k: int = 2,
    bounds: PhotonBounds | None = None,
    povm: PovmSet | None = None,
) -> KeyRateProblem:
    """Assemble the convex program for given observations.

    Args:
        spec: receiver description.
        stats: observed statistics (the joint table supplies the equalities).
        rho: simulated joint state; its processed image is the starting point.
        mode: ``"flag"`` for the squashed space, ``"cutoff"`` to truncate at ``k``.
        k: flag threshold (1 or 2) or photon cutoff (at least the state's support).
        bounds: ``b1``/``b2`` for flag mode; ignored in cutoff mode.
        povm: Bob's POVM built at least to ``max(k, 2)``.

    Returns:
        A :class:`KeyRateProblem`.
    """
    top = max(k, rho.max_sector)
    if povm is None or povm.max_sector < top:
        povm = build_bob_povm(spec, top)
    if mode == FLAG:
        if k not in (1, 2):
            raise ValueError("flag threshold must be 1 or 2")
        bob = squash_povm(povm, k)
        state = squash_state(rho, k, povm)
        space = squashed_space(povm, k)
        ineq = []
        if bounds is not None:
            ineq.append((alice_tensor(np.eye(2), projector_k(space, 1)).block_list(), bounds.b1))
            if k >= 2:
                ineq.append((alice_tensor(np.eye(2), projector_k(space, 2)).block_list(), bounds.b2))
    elif mode == CUTOFF:
        if k < rho.max_sector:
            raise ValueError(f"cutoff {k} below the state's support {rho.max_sector}")
        keep = range(k + 1)
        bob = PovmSet(spec, povm.labels, [e.restrict(keep) for e in povm.elements])
        blocks = {n: rho.blocks.get(n, np.zeros((2 * len(povm.elements[0].blocks[n]),) * 2))
                  for n in keep}
        state = BlockOperator(blocks, joint=True)
        ineq = []
        bounds = None
    else:
        raise ValueError(f"unknown mode {mode!r}")

    eqs = []
    for blocks, x, y in _joint_constraints(bob):
        eqs.append((blocks, stats.p(x, y)))
    G = build_G(grouped_elements(bob)["keep"])
    start = state.block_list()
    support = face_bases(eqs, [B.shape[0] for B in start])
    keep_idx = [i for i, V in enumerate(support) if V.shape[1]]

    def reduce(blocks):
        return [support[i].T @ blocks[i] @ support[i] for i in keep_idx]

    eqs = [(reduce(b), v) for b, v in eqs if v > ZERO_PROB]
    ineq = [(reduce(b), v) for b, v in ineq]
    start = [0.5 * (B + B.T) for B in reduce(start)]
    G = [G[i] @ support[i] for i in keep_idx]
    layout = BlockLayout(tuple(B.shape[0] for B in start))
    prob = KeyRateProblem(
        mode, k, layout, G, eqs, ineq, start, stats, bounds,
        support=[(i, support[i]) for i in keep_idx],
    )
    lost = max(
        (abs(float(np.trace(B)) - float(np.trace(support[i].T @ B @ support[i])))
         for i, B in enumerate(state.block_list())), default=0.0,
    )
    res = prob.residuals(start)
    res["face"] = lost
    if lost > 1e-10:
        raise KeyRateError(f"simulated state leaves the reduced face: {res}")
    if res["equality"] > 1e-10 or res["inequality"] < -1e-10:
        raise KeyRateError(f"simulated state is not feasible: {res}")
    return prob


@dataclass
class KeyRateResult:
    primal: float
    beta: float
    leak_ec: float
    key_rate_lb: float
    fw_gap: float
    iterations: int
    epsilon: float
    status: str
    solver_status: str = ""
    reduced_dims: tuple = ()
    beta_by_eps: dict = field(default_factory=dict)
    history: list = field(default_factory=list, repr=False)
    rho: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "leak_ec": self.leak_ec,
            "key_rate_lb": self.key_rate_lb,
            "fw_gap": self.fw_gap,
            "iterations": self.iterations,
            "epsilon": self.epsilon,
            "status": self.status,
            "primal": self.primal,
            "solver_status": self.solver_status,
        }


def certificate(
    problem: KeyRateProblem, rho, eps: float = EPSILON, tol: float = CONIC_TOL
) -> tuple[float, str]:
    """Linearization lower bound ``f(rho) - <grad, rho> + min_sigma <grad, sigma>``.

    The linear minimum is bounded from below twice: once with exact
    equalities and once with equalities relaxed by ``CERT_RELAX``. Each dual
    bound is valid on its own, so the larger one is kept. The relaxed solve
    rescues points where the feasible set has no interior. A solve that stalls
    short of optimality leaves poor multipliers, so it is repeated at the
    looser fallback tolerances until one converges.
    """
    g = gradient(rho, problem.G, eps)
    lows, statuses = [], []
    ladder = (tol,) + tuple(t for t in FALLBACK_TOLS if t > tol)
    for relax in (0.0, CERT_RELAX):
        for t in ladder:
            try:
                sub = conic_subproblem(g, problem.constraints, relax=relax, tol=t)
            except SubproblemError as exc:
                log.info("certificate subproblem (relax=%g, tol=%g) failed: %s", relax, t, exc)
                continue
            lows.append(sub.certified)
            statuses.append(sub.status)
            if sub.status == "optimal":
                break
    if not lows:
        raise KeyRateError("no certificate subproblem could be solved")
    beta = objective(rho, problem.G, eps) - inner(g, rho) + max(lows)
    return beta, "/".join(statuses)


def _line_search(problem, rho, sigma, f0, eps):
    def phi(s):
        return objective(combine(rho, sigma, s), problem.G, eps)

    res = minimize_scalar(
        phi, bounds=(0.0, 1.0), method="bounded",
        options={"maxiter": LINE_SEARCH_EVALS - 1, "xatol": 1e-12},
    )
    best_s, best_f = float(res.x), float(res.fun)
    f1 = phi(1.0)
    if f1 < best_f:
        best_s, best_f = 1.0, f1
    if not math.isfinite(best_f):
        raise KeyRateError("line search produced a non-finite objective")
    if best_f > f0:
        return 0.0, f0
    return best_s, best_f


def _certify(problem, candidates, eps, tol):
    """Best two-floor certificate over candidate linearization points."""
    best, fallback, statuses = None, None, set()
    for rho in candidates:
        pair = {}
        for e in (eps, 10 * eps):
            pair[e], st = certificate(problem, rho, e, tol)
            statuses.add(st)
        beta = min(pair.values())
        agree = max(pair.values()) - beta <= EPS_AGREEMENT
        if agree and (best is None or beta > best[0]):
            best = (beta, pair)
        if fallback is None or beta < fallback[0]:
            fallback = (beta, pair)
    if best is not None:
        return best[0], best[1], "ok", statuses
    log.warning("certificate moves by more than %.0e between eps and 10 eps", EPS_AGREEMENT)
    return fallback[0], fallback[1], "epsilon_sensitive", statuses


def solve(
    problem: KeyRateProblem,
    eps: float = EPSILON,
    gap_tol: float = FW_GAP_TOL,
    max_iter: int = FW_MAX_ITER,
    f_ec: float = 1.0,
    warm_start: bool = True,
    conic_tol: float = CONIC_TOL,
) -> KeyRateResult:
    """Frank-Wolfe on the primal, then the certified bound.

    Args:
        problem: assembled program.
        eps: eigenvalue floor.
        gap_tol: stop once the Frank-Wolfe gap falls below this.
        max_iter: iteration cap.
        f_ec: error-correction efficiency.
        warm_start: seed Frank-Wolfe with the interior-point solution when
            it beats the simulated state.
        conic_tol: tolerance of the linear subproblems.

    Returns:
        A :class:`KeyRateResult`. ``status`` is ``"ok"`` unless no candidate
        point passes the two-floor agreement check.
    """
    rho = [B.copy() for B in problem.start]
    f = objective(rho, problem.G, eps)
    history = [f]
    candidates = []
    if warm_start:
        ip = interior_point(problem)
        if ip is not None:
            f_ip = objective(ip, problem.G, eps)
            candidates.append(ip)
            if f_ip < f:
                rho, f = [B.copy() for B in ip], f_ip
                history.append(f)
    gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = gradient(rho, problem.G, eps)
        sub = conic_subproblem(g, problem.constraints, tol=conic_tol)
        gap = inner(g, rho) - sub.value
        if gap < gap_tol:
            break
        s, f_new = _line_search(problem, rho, sub.sigma, f, eps)
        if s == 0.0:
            log.info("line search made no progress at iteration %d (gap %.3g)", it, gap)
            break
        rho = combine(rho, sub.sigma, s)
        f = f_new
        history.append(f)
    candidates.insert(0, rho)

    beta, pair, status, statuses = _certify(problem, candidates, eps, conic_tol)
    leak = leak_ec(problem.stats, f_ec)
    return KeyRateResult(
        primal=f,
        beta=beta,
        leak_ec=leak,
        key_rate_lb=beta - leak,
        fw_gap=gap,
        iterations=it,
        epsilon=eps,
        status=status,
        solver_status=",".join(sorted(statuses)),
        reduced_dims=problem.layout.dims,
        beta_by_eps={str(k): v for k, v in pair.items()},
        history=history,
        rho=rho,
    )


def photon_bounds_for(spec: ReceiverSpec, stats: ObservedStats, n_max: int = DEFAULT_N_MAX):
    """Sector minima up to ``n_max`` and the resulting ``b1``/``b2``."""
    minima = sector_minima(build_bob_povm(spec, n_max), n_max)
    if stats.scheme == "active":
        return bounds_active(stats.d_obs, stats.e_obs, minima), minima
    return bounds_passive(stats.c_obs, minima), minima


def key_rate(
    spec: ReceiverSpec,
    params: ChannelParams,
    mode: str = FLAG,
    k: int = 2,
    n_max_bounds: int = DEFAULT_N_MAX,
    **solve_kw,
) -> KeyRateResult:
    """Simulate, bound, assemble and solve one point end to end."""
    povm = build_bob_povm(spec, max(k, 2))
    stats, rho = simulate(spec, params, povm)
    bounds = None
    if mode == FLAG:
        bounds, _ = photon_bounds_for(spec, stats, n_max_bounds)
    problem = build_problem(spec, stats, rho, mode, k, bounds, povm)
    return solve(problem, **solve_kw)
