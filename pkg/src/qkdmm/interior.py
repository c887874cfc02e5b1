"""Interior-point warm start for the key-rate program.

Frank-Wolfe iterates tend to pile up eigenvalues near zero. The linearization
bound taken there can be loose. QICS handles the relative-entropy objective
as a native cone and returns a near-optimal point strictly inside the
feasible set. That point only seeds the primal. Every reported bound is
still rebuilt from cvxopt duals in :mod:`qkdmm.keyrate`.
"""

from __future__ import annotations

import logging
import math
import warnings

import numpy as np

log = logging.getLogger(__name__)


def interior_point(problem, tol: float = 1e-9) -> list[np.ndarray] | None:
    """Near-optimal state for ``problem``, or ``None`` if the solver fails.

    Args:
        problem: a :class:`qkdmm.keyrate.KeyRateProblem`.
        tol: gap and feasibility tolerance passed to QICS.

    Returns:
        Blocks of a PSD unit-trace state, or ``None``.
    """
    with warnings.catch_warnings():
        # numba reports an old TBB at import; its threading layer is unused here
        warnings.simplefilter("ignore")
        import qics
        from qics.cones import NonNegOrthant, PosSemidefinite, QuantKeyDist
        from qics.vectorize import mat_to_vec, vec_to_mat

    cones, slots, n = [], [], 0
    for K, R in zip(problem.G, problem.start):
        d = R.shape[0]
        if np.any(K):
            cones.append(QuantKeyDist([K], 2))
            slots.append((n, n + 1))
            n += 1 + d * d
        else:
            cones.append(PosSemidefinite(d))
            slots.append((None, n))
            n += d * d
    n_ineq = len(problem.inequalities)
    if n_ineq:
        cones.append(NonNegOrthant(n_ineq))
    size = n + n_ineq
    c = np.zeros((size, 1))
    for t, _ in slots:
        if t is not None:
            c[t] = 1.0 / math.log(2)

    def row(blocks):
        r = np.zeros(size)
        for (_, x0), B in zip(slots, blocks):
            r[x0 : x0 + B.size] = mat_to_vec(np.asarray(B, dtype=float)).ravel()
        return r

    rows = [row([np.eye(R.shape[0]) for R in problem.start])]
    rhs = [1.0]
    for blocks, v in problem.equalities:
        rows.append(row(blocks))
        rhs.append(v)
    for k, (blocks, v) in enumerate(problem.inequalities):
        r = row(blocks)
        r[n + k] = -1.0
        rows.append(r)
        rhs.append(v)
    A = np.array(rows)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * s[0]))
    b = (U[:, :rank].T @ np.array(rhs)) / s[:rank]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = qics.Model(c=c, A=Vt[:rank], b=b.reshape(-1, 1), cones=cones)
            info = qics.Solver(model, verbose=0, tol_gap=tol, tol_feas=tol).solve()
    except Exception as exc:  # solver internals vary; any failure just skips the warm start
        log.warning("interior-point warm start failed: %s", exc)
        return None
    if info["sol_status"] not in ("optimal", "near_optimal"):
        log.warning("interior-point warm start ended with status %s", info["sol_status"])
        return None
    x = info["x_opt"].ravel()
    blocks = []
    for (_, x0), R in zip(slots, problem.start):
        d = R.shape[0]
        B = vec_to_mat(x[x0 : x0 + d * d].reshape(-1, 1))
        B = 0.5 * (B + B.T)
        w, V = np.linalg.eigh(B)
        blocks.append((V * np.clip(w, 0, None)) @ V.T)
    total = sum(float(np.trace(B)) for B in blocks)
    return [B / total for B in blocks]
