"""Photon-number sectors of a multimode bosonic space and linear-optics lifts.

Every operator in the package is block diagonal in the total photon number,
so the only Fock-space machinery needed is the fixed-``n`` sector basis and
the ``n``-photon representation of a mode-space linear map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cache

import numpy as np

H, V = 0, 1
ISOMETRY_TOL = 1e-10


@dataclass(frozen=True)
class ModeLayout:
    """Input modes of Bob's receiver: ``M`` spatial-temporal modes x 2 polarizations."""

    spatial_modes: int

    def __post_init__(self):
        if self.spatial_modes < 1:
            raise ValueError("spatial_modes must be >= 1")

    @property
    def polarizations(self) -> int:
        return 2

    @property
    def modes(self) -> int:
        return 2 * self.spatial_modes

    def index(self, m: int, p: int) -> int:
        """Canonical mode index ``2m + p`` (``p`` is ``H=0`` or ``V=1``)."""
        if not (0 <= m < self.spatial_modes and p in (H, V)):
            raise ValueError(f"no mode (m={m}, p={p}) in {self}")
        return 2 * m + p


@dataclass(frozen=True)
class SectorBasis:
    """Occupation-number basis of the ``n``-photon sector over ``modes`` modes."""

    n: int
    modes: int
    states: tuple[tuple[int, ...], ...]

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def lookup(self) -> dict[tuple[int, ...], int]:
        return _lookup(self.n, self.modes)

    def index(self, occupation) -> int:
        return self.lookup[tuple(occupation)]


def _compositions(n: int, modes: int):
    # lexicographically ascending: the first mode's count grows slowest
    if modes == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, modes - 1):
            yield (first,) + rest


@cache
def enumerate_sector(modes: int, n: int) -> SectorBasis:
    """Return the canonical basis of the ``n``-photon sector.

    States are all occupation vectors summing to ``n``, sorted
    lexicographically ascending on the mode index.

    Args:
        modes: number of bosonic modes, at least 1.
        n: total photon number, at least 0.

    Returns:
        The sector basis; ``dim == comb(n + modes - 1, n)``.
    """
    if modes < 1 or n < 0:
        raise ValueError(f"invalid sector (modes={modes}, n={n})")
    states = tuple(_compositions(n, modes))
    return SectorBasis(n=n, modes=modes, states=states)


@cache
def _lookup(n: int, modes: int) -> dict[tuple[int, ...], int]:
    return {s: i for i, s in enumerate(enumerate_sector(modes, n).states)}


def sector_dim(modes: int, n: int) -> int:
    return math.comb(n + modes - 1, n)


def check_isometry(T: np.ndarray, tol: float = ISOMETRY_TOL) -> np.ndarray:
    T = np.asarray(T)
    if T.ndim != 2:
        raise ValueError("mode map must be a matrix")
    dev = np.max(np.abs(T.conj().T @ T - np.eye(T.shape[1])), initial=0.0)
    if dev > tol:
        raise ValueError(f"mode map is not an isometry (|T'T - 1| = {dev:.3g})")
    return T


def lift_mode_map(T, n: int) -> np.ndarray:
    """Matrix of the ``n``-photon representation of a linear-optics map.

    Input creation operators transform as ``a_j^+ -> sum_i T[i, j] b_i^+``.
    Column ``c`` of the result is the image of the ``c``-th input Fock state
    expanded in the output sector basis.

    Args:
        T: ``(out_modes, in_modes)`` isometry.
        n: photon number.

    Returns:
        ``(dim_out, dim_in)`` complex matrix (real dtype when ``T`` is real).
    """
    T = check_isometry(T)
    if n < 0:
        raise ValueError("photon number must be >= 0")
    real = not np.iscomplexobj(T)
    T = np.ascontiguousarray(T, dtype=float if real else complex)
    out = _lift_cached(T.tobytes(), T.shape, T.dtype.str, n)
    return out.copy()


@cache
def _lift_cached(buf: bytes, shape: tuple[int, int], dtype: str, n: int) -> np.ndarray:
    T = np.frombuffer(buf, dtype=np.dtype(dtype)).reshape(shape)
    n_out, n_in = shape
    basis_in = enumerate_sector(n_in, n)
    basis_out = enumerate_sector(n_out, n)
    index_out = basis_out.lookup
    result = np.zeros((basis_out.dim, basis_in.dim), dtype=T.dtype)
    for col, occ in enumerate(basis_in.states):
        state = {(0,) * n_out: 1.0}
        for j, count in enumerate(occ):
            for _ in range(count):
                state = _apply_creation(state, T[:, j])
            state = {k: a / math.sqrt(math.factorial(count)) for k, a in state.items()}
        for k, amp in state.items():
            result[index_out[k], col] += amp
    return result


def _apply_creation(state: dict, column: np.ndarray) -> dict:
    """Apply ``sum_i column[i] b_i^+`` to a sparse Fock-state dictionary."""
    new: dict = {}
    for occ, amp in state.items():
        for i, c in enumerate(column):
            if c == 0:
                continue
            nxt = occ[:i] + (occ[i] + 1,) + occ[i + 1 :]
            new[nxt] = new.get(nxt, 0.0) + amp * c * math.sqrt(occ[i] + 1)
    return new
