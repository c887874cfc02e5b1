"""Flag-state squashing of Bob's photon-number sectors above a threshold ``k``.

Sectors ``n <= k`` are kept as they are. Everything above ``k`` is replaced
by a ``J``-dimensional register of orthogonal flags, one per outcome of Bob's
measurement. The squashing map measures the high-photon part with Bob's own
POVM and writes the result into the flag register, so every outcome
probability is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detectors import PovmSet
from .fock import sector_dim
from .operators import BlockOperator

PSD_TOL = 1e-12


@dataclass(frozen=True)
class SquashedSpace:
    k: int
    n_flags: int
    modes: int

    @property
    def sector_dims(self) -> dict[int, int]:
        return {n: sector_dim(self.modes, n) for n in range(self.k + 1)}

    @property
    def dim(self) -> int:
        return sum(self.sector_dims.values()) + self.n_flags


def squashed_space(povm: PovmSet, k: int) -> SquashedSpace:
    return SquashedSpace(k, povm.n_outcomes, povm.spec.layout.modes)


def squash_povm(povm: PovmSet, k: int) -> PovmSet:
    """Keep sectors ``0..k`` and append the flag projector ``|y><y|`` to outcome ``y``."""
    if k < 0 or k > povm.max_sector:
        raise ValueError(f"flag threshold {k} outside built sectors 0..{povm.max_sector}")
    J = povm.n_outcomes
    elements = []
    for y, e in enumerate(povm.elements):
        flags = np.zeros(J)
        flags[y] = 1.0
        elements.append(BlockOperator({n: e.blocks[n] for n in range(k + 1)}, flags))
    return PovmSet(povm.spec, povm.labels, elements)


def partial_trace_bob(rho: np.ndarray, op_b: np.ndarray) -> np.ndarray:
    """``Tr_B((1 (x) op_b) rho)`` for a joint block with Alice as the outer factor."""
    d = op_b.shape[0]
    R = rho.reshape(2, d, 2, d)
    return np.einsum("ibjc,cb->ij", R, op_b)


def squash_state(rho: BlockOperator, k: int, povm: PovmSet) -> BlockOperator:
    """Apply the squashing map to a joint state that is block diagonal in ``n``.

    Args:
        rho: joint state, sectors ``0..N`` and no flags.
        k: flag threshold.
        povm: Bob's (unsquashed) POVM built at least to sector ``N``.

    Returns:
        Joint state on the squashed space, with a ``(J, 2, 2)`` flag part.
    """
    if not rho.joint or rho.flags is not None:
        raise ValueError("expected an unsquashed joint state")
    if rho.max_sector > povm.max_sector:
        raise ValueError("POVM not built up to the state's largest sector")
    for n, b in rho.blocks.items():
        if b.ndim != 2 or b.shape[0] != b.shape[1] or b.shape[0] != 2 * sector_dim(
            povm.spec.layout.modes, n
        ):
            raise ValueError(f"sector {n} block has the wrong shape")
        if np.max(np.abs(b - b.T), initial=0.0) > 1e-12:
            raise ValueError(f"sector {n} block is not symmetric")
        if np.linalg.eigvalsh(b)[0] < -PSD_TOL:
            raise ValueError(f"sector {n} block is not positive semidefinite")
    kept = {}
    for n in range(k + 1):
        if n in rho.blocks:
            kept[n] = rho.blocks[n].copy()
        else:
            kept[n] = np.zeros((2 * sector_dim(povm.spec.layout.modes, n),) * 2)
    flags = np.zeros((povm.n_outcomes, 2, 2))
    for n, b in rho.blocks.items():
        if n <= k:
            continue
        for y, e in enumerate(povm.elements):
            flags[y] += partial_trace_bob(b, e.blocks[n])
    flags = 0.5 * (flags + flags.transpose(0, 2, 1))
    return BlockOperator(kept, flags, joint=True)


def projector_k(space: SquashedSpace, upto: int | None = None) -> BlockOperator:
    """Bob-only projector onto sectors ``n <= upto`` (default ``k``); zero on flags."""
    upto = space.k if upto is None else upto
    if upto > space.k:
        raise ValueError("projector beyond the kept sectors")
    blocks = {
        n: np.eye(d) if n <= upto else np.zeros((d, d)) for n, d in space.sector_dims.items()
    }
    flags = np.zeros(space.n_flags) if space.n_flags else None
    return BlockOperator(blocks, flags)


def squashing_residual(rho: BlockOperator, povm: PovmSet, k: int) -> float:
    """Largest ``|Tr(rho M_y) - Tr(Lambda(rho) M~_y)|`` over outcomes, with Alice traced out."""
    squashed = squash_state(rho, k, povm)
    sq_povm = squash_povm(povm, k)
    eye = np.eye(2)
    worst = 0.0
    for e, e_sq in zip(povm.elements, sq_povm.elements):
        full = sum(float(np.sum(b * np.kron(eye, e.blocks[n]).T)) for n, b in rho.blocks.items())
        kept = sum(
            float(np.sum(squashed.blocks[n] * np.kron(eye, e_sq.blocks[n]).T))
            for n in squashed.blocks
        )
        kept += float(np.einsum("yii,y->", squashed.flags, e_sq.flags))
        worst = max(worst, abs(full - kept))
    return worst
