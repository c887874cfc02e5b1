"""Linear minimization over block-diagonal density matrices with affine constraints.

Solves ``min Tr(C sigma)`` subject to ``Tr(Gamma_i sigma) = gamma_i``,
``Tr(Pi_k sigma) >= b_k`` and ``sigma >= 0`` blockwise, with cvxopt's
cone LP solver. The variable is real symmetric. Only the upper triangle of
each block is a free parameter.

The returned ``certified`` value does not trust the solver's optimality
claim. It is rebuilt from the dual multipliers as ``-y.b + z.b_k +
lambda_min(Y)``, where ``Y`` is the residual dual slack operator. It is a
valid lower bound for every feasible ``sigma`` whatever the solver
accuracy, because every feasible ``sigma`` has unit trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from cvxopt import matrix, solvers, sparse, spmatrix

PRUNE_TOL = 1e-10

CONIC_TOL = 1e-10
# looser settings are tried only when cvxopt breaks down numerically
FALLBACK_TOLS = (1e-9, 1e-8, 1e-7)


class SubproblemError(RuntimeError):
    """The conic solver reported an infeasible or unbounded subproblem."""


@dataclass
class BlockLayout:
    """Dimensions of the diagonal blocks and the packing of their upper triangles."""

    dims: tuple[int, ...]

    def __post_init__(self):
        self.offsets = np.cumsum([0] + [d * (d + 1) // 2 for d in self.dims])
        self.triu = [np.triu_indices(d) for d in self.dims]

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def op_to_vec(self, blocks) -> np.ndarray:
        """Coefficients ``v`` with ``Tr(O sigma) = v . pack(sigma)``."""
        out = np.empty(self.size)
        for b, (d, (i, j)) in enumerate(zip(self.dims, self.triu)):
            O = np.asarray(blocks[b])
            w = O[i, j] + O[j, i]
            w[i == j] *= 0.5
            out[self.offsets[b] : self.offsets[b + 1]] = w
        return out

    def vec_to_op(self, v: np.ndarray) -> list[np.ndarray]:
        """Inverse of :meth:`op_to_vec` onto symmetric operators."""
        blocks = []
        for b, (d, (i, j)) in enumerate(zip(self.dims, self.triu)):
            O = np.zeros((d, d))
            seg = v[self.offsets[b] : self.offsets[b + 1]]
            off = i != j
            O[i, j] = np.where(off, 0.5 * seg, seg)
            O[j, i] = O[i, j]
            blocks.append(O)
        return blocks

    def pack(self, blocks) -> np.ndarray:
        return np.concatenate([np.asarray(B)[i, j] for B, (i, j) in zip(blocks, self.triu)])

    def unpack(self, x: np.ndarray) -> list[np.ndarray]:
        blocks = []
        for b, (d, (i, j)) in enumerate(zip(self.dims, self.triu)):
            S = np.zeros((d, d))
            S[i, j] = x[self.offsets[b] : self.offsets[b + 1]]
            S[j, i] = S[i, j]
            blocks.append(S)
        return blocks

    def psd_map(self) -> tuple[list[float], list[int], list[int], int]:
        """Sparse triplets of the map from packed ``x`` to the column-major stacked blocks."""
        vals, rows, cols = [], [], []
        r0 = 0
        for b, (d, (i, j)) in enumerate(zip(self.dims, self.triu)):
            for k, (a, c) in enumerate(zip(i, j)):
                col = int(self.offsets[b] + k)
                rows.append(int(r0 + a + c * d))
                cols.append(col)
                if a != c:
                    rows.append(int(r0 + c + a * d))
                    cols.append(col)
            r0 += d * d
        return [1.0] * len(rows), rows, cols, r0


@dataclass
class ConstraintSet:
    """Affine constraints in packed coordinates, after pruning dependent rows."""

    layout: BlockLayout
    A: np.ndarray
    b: np.ndarray
    P: np.ndarray  # inequality rows: P x >= lower
    lower: np.ndarray
    rank_dropped: int = 0


def build_constraints(layout: BlockLayout, equalities, inequalities=(), tol=PRUNE_TOL):
    """Pack operator constraints and remove linearly dependent equalities.

    Args:
        layout: block layout of the variable.
        equalities: iterable of ``(blocks, value)`` pairs; the unit trace is added.
        inequalities: iterable of ``(blocks, lower_bound)`` pairs.

    Returns:
        A :class:`ConstraintSet` whose equality rows are orthonormal.
    """
    identity = [np.eye(d) for d in layout.dims]
    rows = [layout.op_to_vec(identity)]
    vals = [1.0]
    for blocks, value in equalities:
        rows.append(layout.op_to_vec(blocks))
        vals.append(float(value))
    A = np.array(rows)
    b = np.array(vals)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    r = int(np.sum(s > tol * s[0]))
    A_r = Vt[:r]
    b_r = (U[:, :r].T @ b) / s[:r]
    P = np.array([layout.op_to_vec(bl) for bl, _ in inequalities]).reshape(-1, layout.size)
    lower = np.array([float(v) for _, v in inequalities])
    return ConstraintSet(layout, A_r, b_r, P, lower, rank_dropped=len(rows) - r)


@dataclass
class SubproblemResult:
    sigma: list[np.ndarray]
    value: float
    certified: float
    dual_residual: float
    status: str


def conic_subproblem(
    C, cons: ConstraintSet, relax: float = 0.0, tol: float = CONIC_TOL
) -> SubproblemResult:
    """Minimize ``Tr(C sigma)`` over the feasible set described by ``cons``.

    Args:
        C: objective operator as a list of symmetric blocks.
        cons: packed constraints.
        relax: when positive, equalities are loosened to ``|A x - b| <= relax``.
            That restores strict feasibility when the exact set has no
            interior. ``certified`` is still evaluated against the exact ``b``.
        tol: cvxopt gap and feasibility tolerance.

    Returns:
        Minimizer, primal value, certified lower bound and solver status.
    """
    lay = cons.layout
    c = lay.op_to_vec(C)
    vals, rows, cols, n_s = lay.psd_map()
    n_l = len(cons.lower)
    n_eq = len(cons.b)
    Gs = spmatrix([-v for v in vals], rows, cols, (n_s, lay.size))
    lin_rows, lin_h = [], []
    if n_l:
        lin_rows.append(-cons.P)
        lin_h.append(-cons.lower)
    if relax > 0:
        lin_rows += [cons.A, -cons.A]
        lin_h += [cons.b + relax, -cons.b + relax]
        A, b = matrix(0.0, (0, lay.size)), matrix(0.0, (0, 1))
    else:
        A, b = matrix(cons.A), matrix(cons.b)
    n_lin = sum(len(r) for r in lin_rows)
    G = sparse([matrix(np.vstack(lin_rows)), Gs]) if n_lin else Gs
    h = np.concatenate(lin_h + [np.zeros(n_s)])
    dims = {"l": n_lin, "q": [], "s": list(lay.dims)}
    sol, err = None, None
    for t in (tol,) + tuple(x for x in FALLBACK_TOLS if x > tol):
        opts = {"show_progress": False, "abstol": t, "reltol": t, "feastol": t,
                "maxiters": 200}
        try:
            sol = solvers.conelp(matrix(c), G, matrix(h), dims, A, b, options=opts)
            break
        except (ArithmeticError, ValueError) as exc:
            err = exc
    if sol is None:
        raise SubproblemError(f"cvxopt failed at every tolerance: {err}")
    status = sol["status"]
    if status in ("primal infeasible", "dual infeasible") or sol["x"] is None:
        residual = None
        if sol.get("x") is not None:
            residual = float(np.max(np.abs(cons.A @ np.array(sol["x"]).ravel() - cons.b)))
        raise SubproblemError(f"conic subproblem {status}; equality residual {residual}")
    x = np.array(sol["x"]).ravel()
    z = np.array(sol["z"]).ravel()
    z_l = np.maximum(z[:n_l], 0.0)
    if relax > 0:
        y = z[n_l : n_l + n_eq] - z[n_l + n_eq : n_l + 2 * n_eq]
    else:
        y = np.array(sol["y"]).ravel()
    # slack operator Y = C + sum y_i A_i - sum z_k P_k, PSD at an exact optimum
    slack = c + cons.A.T @ y - (cons.P.T @ z_l if n_l else 0.0)
    Y = lay.vec_to_op(slack)
    lam = min(float(np.linalg.eigvalsh(B)[0]) for B in Y)
    certified = float(-cons.b @ y + z_l @ cons.lower + lam)
    sigma = [0.5 * (S + S.T) for S in lay.unpack(x)]
    return SubproblemResult(sigma, float(c @ x), certified, max(0.0, -lam), status)
