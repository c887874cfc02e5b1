"""Operators that are block diagonal over photon-number sectors.

A :class:`BlockOperator` either acts on Bob's space alone (``joint=False``)
or on Alice's qubit tensored with Bob's space (``joint=True``, Alice is the
outer Kronecker factor).  After flag-state squashing an operator may carry a
flag part: for Bob-only operators it is diagonal in the flag basis and stored
as a length-``J`` vector, for joint operators it is one 2x2 Alice block per
flag, stored as a ``(J, 2, 2)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYMMETRY_TOL = 1e-12


@dataclass
class BlockOperator:
    blocks: dict[int, np.ndarray]
    flags: np.ndarray | None = None
    joint: bool = False
    meta: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def max_sector(self) -> int:
        return max(self.blocks)

    @property
    def sectors(self) -> list[int]:
        return sorted(self.blocks)

    @property
    def n_flags(self) -> int:
        return 0 if self.flags is None else len(self.flags)

    def sector(self, n: int) -> np.ndarray:
        try:
            return self.blocks[n]
        except KeyError:
            raise KeyError(f"sector {n} not built (have {self.sectors})") from None

    def flag_matrices(self) -> list[np.ndarray]:
        """Flag part as a list of square blocks (1x1 or 2x2)."""
        if self.flags is None:
            return []
        if self.joint:
            return [np.asarray(f) for f in self.flags]
        return [np.array([[f]]) for f in self.flags]

    def block_list(self) -> list[np.ndarray]:
        """All diagonal blocks: sectors in increasing ``n``, then flags."""
        return [self.blocks[n] for n in self.sectors] + self.flag_matrices()

    def restrict(self, sectors) -> BlockOperator:
        return BlockOperator({n: self.blocks[n] for n in sectors}, self.flags, self.joint)

    def trace(self) -> float:
        total = sum(float(np.trace(b)) for b in self.blocks.values())
        if self.flags is not None:
            total += float(np.sum(self.flags)) if not self.joint else float(
                np.einsum("yii->", self.flags)
            )
        return total

    def inner(self, other: BlockOperator) -> float:
        """``Tr(self @ other)`` for operators with matching structure."""
        if self.joint != other.joint:
            raise ValueError("cannot pair Bob-only and joint operators")
        total = 0.0
        for n, b in self.blocks.items():
            if n in other.blocks:
                total += float(np.sum(b * other.blocks[n].T))
        if self.flags is not None and other.flags is not None:
            if self.joint:
                total += float(np.einsum("yij,yji->", self.flags, other.flags))
            else:
                total += float(np.dot(self.flags, other.flags))
        return total

    def _combine(self, other: BlockOperator, a: float, b: float) -> BlockOperator:
        if self.joint != other.joint or set(self.blocks) != set(other.blocks):
            raise ValueError("block structures differ")
        blocks = {n: a * self.blocks[n] + b * other.blocks[n] for n in self.blocks}
        if (self.flags is None) != (other.flags is None):
            raise ValueError("flag structures differ")
        flags = None if self.flags is None else a * self.flags + b * other.flags
        return BlockOperator(blocks, flags, self.joint)

    def __add__(self, other: BlockOperator) -> BlockOperator:
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other: BlockOperator) -> BlockOperator:
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, s: float) -> BlockOperator:
        flags = None if self.flags is None else s * self.flags
        return BlockOperator({n: s * b for n, b in self.blocks.items()}, flags, self.joint)

    __rmul__ = __mul__

    def min_eigenvalue(self) -> float:
        return min(float(np.linalg.eigvalsh(b)[0]) for b in self.block_list())

    def max_asymmetry(self) -> float:
        return max(float(np.max(np.abs(b - b.T), initial=0.0)) for b in self.block_list())

    @classmethod
    def zeros_like(cls, op: BlockOperator) -> BlockOperator:
        flags = None if op.flags is None else np.zeros_like(op.flags)
        return cls({n: np.zeros_like(b) for n, b in op.blocks.items()}, flags, op.joint)

    @classmethod
    def identity(cls, dims: dict[int, int], n_flags: int = 0, joint: bool = False):
        a = 2 if joint else 1
        blocks = {n: np.eye(a * d) for n, d in dims.items()}
        flags = None
        if n_flags:
            flags = np.tile(np.eye(2), (n_flags, 1, 1)) if joint else np.ones(n_flags)
        return cls(blocks, flags, joint)


def as_real_symmetric(M: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Cast a Hermitian matrix to real storage, asserting it is real."""
    M = np.asarray(M)
    if np.iscomplexobj(M):
        imag = np.max(np.abs(M.imag), initial=0.0)
        if imag > tol:
            raise ValueError(f"operator has imaginary part {imag:.3g}")
        M = M.real
    M = np.array(M, dtype=float)
    return 0.5 * (M + M.T)


def alice_tensor(op_a: np.ndarray, op_b: BlockOperator) -> BlockOperator:
    """Blockwise ``op_a (x) op_b`` for a 2x2 Alice operator and a Bob operator."""
    op_a = np.asarray(op_a, dtype=float)
    if op_a.shape != (2, 2):
        raise ValueError("Alice operator must be 2x2")
    if op_b.joint:
        raise ValueError("Bob operator is already joint")
    blocks = {n: np.kron(op_a, b) for n, b in op_b.blocks.items()}
    flags = None
    if op_b.flags is not None:
        flags = op_b.flags[:, None, None] * op_a[None, :, :]
    return BlockOperator(blocks, flags, joint=True)


def random_joint_state(dims: dict[int, int], rng: np.random.Generator, rank: int | None = None):
    """Random joint state, block diagonal over Bob's sectors ``dims`` (Alice outer).

    Args:
        dims: Bob's sector dimensions keyed by photon number.
        rng: random generator.
        rank: rank of each block; full rank when ``None``.

    Returns:
        A unit-trace joint :class:`BlockOperator`.
    """
    blocks = {}
    for n, d in dims.items():
        D = 2 * d
        A = rng.standard_normal((D, rank or D))
        blocks[n] = A @ A.T
    weights = rng.dirichlet(np.ones(len(dims)))
    for w, n in zip(weights, dims):
        B = blocks[n]
        blocks[n] = w * B / np.trace(B)
    return BlockOperator(blocks, joint=True)
