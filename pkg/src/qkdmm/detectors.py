"""Alice's qubit POVM and Bob's threshold-detector POVMs under efficiency mismatch.

Bob's receiver routes each spatial-temporal mode through passive optics into
detector paths without mixing spatial modes. Each photon reaching detector
``d`` from spatial mode ``m`` is registered with probability ``eta[d][m]``.
Since the optics preserve the photon count per spatial mode and the
no-click probability ``prod_m (1 - eta[d][m])**n[d, m]`` factorizes over
spatial modes, every "no click on detector set T" operator is a tensor
product over spatial modes inside each photon-number sector. Click-pattern
elements follow by inclusion-exclusion over these operators.

:func:`build_bob_povm` uses that factorized construction by default. With
``method="direct"`` it lifts the full receiver isometry instead and applies the
diagonal thresholding. That route is exact too, but its cost grows with the
full output Fock space, so it serves as a cross-check on small layouts.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cache

import numpy as np

from .fock import ModeLayout, enumerate_sector, lift_mode_map
from .operators import BlockOperator, alice_tensor, as_real_symmetric

ACTIVE = "active"
PASSIVE = "passive"
SCHEMES = (ACTIVE, PASSIVE)

ACTIVE_LABELS = ("Z00", "Z10", "Z01", "Z11", "X00", "X10", "X01", "X11")
PASSIVE_LABELS = tuple("".join(bits) for bits in itertools.product("01", repeat=4))
ALICE_LABELS = ("H", "V", "D", "A")

_S = 1 / np.sqrt(2)
# per spatial mode: rows are detector paths, columns are (H, V) input modes
ROTATION = {"Z": np.eye(2), "X": np.array([[_S, _S], [_S, -_S]])}
PASSIVE_SPLITTER = np.array(
    [
        [_S, 0.0],  # H'
        [0.0, _S],  # V'
        [0.5, 0.5],  # D'
        [0.5, -0.5],  # A'
    ]
)

ALICE_OPERATORS = {
    "H": np.array([[1.0, 0.0], [0.0, 0.0]]),
    "V": np.array([[0.0, 0.0], [0.0, 1.0]]),
    "D": 0.5 * np.array([[1.0, 1.0], [1.0, 1.0]]),
    "A": 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]]),
}


def build_alice_povm() -> dict[str, np.ndarray]:
    """Alice's four outcomes, each weighted by her uniform basis choice 1/2."""
    return {x: 0.5 * ALICE_OPERATORS[x] for x in ALICE_LABELS}


@dataclass(frozen=True)
class ReceiverSpec:
    """Detection scheme plus the detector-by-mode efficiency matrix.

    Attributes:
        scheme: ``"active"`` (2 detectors) or ``"passive"`` (4 detectors).
        efficiencies: ``efficiencies[d][m]`` for detector ``d`` and spatial mode ``m``.
            Active detectors are ordered (H/D, V/A), passive ones (H, V, D, A).
        basis_prob: probability of Bob's key-generation (Z) basis, active only.
    """

    scheme: str
    efficiencies: tuple[tuple[float, ...], ...]
    basis_prob: float = 0.5

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        eta = np.asarray(self.efficiencies, dtype=float)
        object.__setattr__(self, "efficiencies", tuple(map(tuple, eta.tolist())))
        if eta.ndim != 2 or eta.shape[0] != self.n_detectors or eta.shape[1] < 1:
            raise ValueError(
                f"{self.scheme} scheme needs a {self.n_detectors} x M efficiency matrix"
            )
        if np.any(eta < 0) or np.any(eta > 1) or not np.all(np.isfinite(eta)):
            raise ValueError("efficiencies must lie in [0, 1]")
        if not 0 <= self.basis_prob <= 1:
            raise ValueError("basis_prob must lie in [0, 1]")

    @property
    def n_detectors(self) -> int:
        return 2 if self.scheme == ACTIVE else 4

    @property
    def eta(self) -> np.ndarray:
        return np.array(self.efficiencies)

    @property
    def layout(self) -> ModeLayout:
        return ModeLayout(len(self.efficiencies[0]))

    @property
    def labels(self) -> tuple[str, ...]:
        return ACTIVE_LABELS if self.scheme == ACTIVE else PASSIVE_LABELS


def mismatch_model(
    scheme: str, eta1: float, eta2: float, modes: int, mode_dependent: bool = True,
    basis_prob: float = 0.5,
) -> ReceiverSpec:
    """Two-parameter mismatch models.

    Mode-dependent: detector ``d`` has ``eta1`` in mode ``d`` and ``eta2`` elsewhere,
    which needs as many modes as detectors. Mode-independent: the first detector
    has ``eta1`` and the others ``eta2`` in every mode.
    """
    n_det = 2 if scheme == ACTIVE else 4
    if mode_dependent:
        if modes != n_det:
            raise ValueError(f"mode-dependent {scheme} model needs {n_det} modes")
        eta = np.full((n_det, modes), float(eta2))
        np.fill_diagonal(eta, eta1)
    else:
        eta = np.full((n_det, modes), float(eta2))
        eta[0, :] = eta1
    return ReceiverSpec(scheme, tuple(map(tuple, eta)), basis_prob)


def uniform_receiver(scheme: str, eta: float, modes: int = 1, basis_prob: float = 0.5):
    n_det = 2 if scheme == ACTIVE else 4
    return ReceiverSpec(scheme, tuple((eta,) * modes for _ in range(n_det)), basis_prob)


@dataclass
class PovmSet:
    """Bob's labelled POVM, one block-diagonal operator per outcome.

    For the active scheme ``conditional`` holds the basis-conditional click
    operators (the elements without Bob's basis probability).
    """

    spec: ReceiverSpec
    labels: tuple[str, ...]
    elements: list[BlockOperator]
    conditional: list[BlockOperator] | None = None

    def __getitem__(self, label: str) -> BlockOperator:
        return self.elements[self.labels.index(label)]

    def cond(self, label: str) -> BlockOperator:
        if self.conditional is None:
            raise ValueError("basis-conditional operators exist for the active scheme only")
        return self.conditional[self.labels.index(label)]

    @property
    def max_sector(self) -> int:
        return self.elements[0].max_sector

    @property
    def n_outcomes(self) -> int:
        return len(self.labels)

    def completeness_deviation(self) -> float:
        worst = 0.0
        for n in self.elements[0].sectors:
            total = sum(e.blocks[n] for e in self.elements)
            worst = max(worst, float(np.max(np.abs(total - np.eye(len(total))))))
        if self.elements[0].flags is not None:
            total = sum(e.flags for e in self.elements)
            worst = max(worst, float(np.max(np.abs(total - 1.0))))
        return worst

    def min_eigenvalue(self) -> float:
        return min(e.min_eigenvalue() for e in self.elements)


def _mode_paths(scheme: str, basis: str | None) -> np.ndarray:
    return ROTATION[basis] if scheme == ACTIVE else PASSIVE_SPLITTER


@cache
def _mode_noclick(U_key: bytes, n_paths: int, weights: tuple[float, ...], j: int) -> np.ndarray:
    """No-click operator on the ``j``-photon polarization space of one spatial mode.

    ``weights[p]`` is the per-photon survival-of-no-click factor ``1 - eta`` for
    path ``p`` (1.0 for paths outside the detector set).
    """
    U = np.frombuffer(U_key).reshape(n_paths, 2)
    L = lift_mode_map(U, j)
    out = enumerate_sector(n_paths, j)
    w = np.array([np.prod([weights[p] ** o[p] for p in range(n_paths)]) for o in out.states])
    return L.T @ (w[:, None] * L)


@cache
def _distribution_index(M: int, n: int):
    """Per spatial-mode photon distributions of sector ``n`` and their global indices."""
    lookup = enumerate_sector(2 * M, n).lookup
    result = []
    for dist in _compositions(n, M):
        per_mode = [enumerate_sector(2, nm).states for nm in dist]
        idx = [lookup[sum(combo, ())] for combo in itertools.product(*per_mode)]
        result.append((dist, np.array(idx)))
    return result


def _compositions(n: int, parts: int):
    if parts == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, parts - 1):
            yield (first,) + rest


def noclick_operator(spec: ReceiverSpec, basis: str | None, detectors, n: int) -> np.ndarray:
    """Operator for "no detector in ``detectors`` clicks" on Bob's ``n``-photon sector."""
    M = spec.layout.spatial_modes
    U = np.ascontiguousarray(_mode_paths(spec.scheme, basis), dtype=float)
    eta = spec.eta
    det_set = set(detectors)
    dim = enumerate_sector(2 * M, n).dim
    out = np.zeros((dim, dim))
    for dist, idx in _distribution_index(M, n):
        block = np.ones((1, 1))
        for m, nm in enumerate(dist):
            w = tuple(1.0 - eta[d, m] if d in det_set else 1.0 for d in range(U.shape[0]))
            block = np.kron(block, _mode_noclick(U.tobytes(), U.shape[0], w, nm))
        out[np.ix_(idx, idx)] = block
    return out


def _pattern_elements(spec: ReceiverSpec, basis: str | None, n: int) -> list[np.ndarray]:
    """Click-pattern elements keyed by pattern tuple, by inclusion-exclusion."""
    D = spec.n_detectors
    cache_: dict[frozenset, np.ndarray] = {}

    def N(T):
        key = frozenset(T)
        if key not in cache_:
            cache_[key] = noclick_operator(spec, basis, key, n)
        return cache_[key]

    elements = {}
    for pattern in itertools.product((0, 1), repeat=D):
        clicked = [d for d in range(D) if pattern[d]]
        silent = [d for d in range(D) if not pattern[d]]
        acc = 0.0
        for r in range(len(clicked) + 1):
            for S in itertools.combinations(clicked, r):
                acc = acc + (-1) ** r * N(silent + list(S))
        elements[pattern] = as_real_symmetric(acc)
    return elements


def _pattern_elements_direct(spec: ReceiverSpec, basis: str | None, n: int):
    """Same elements from the full-receiver lift followed by diagonal thresholding."""
    M = spec.layout.spatial_modes
    U = _mode_paths(spec.scheme, basis)
    P = U.shape[0]
    T = np.kron(np.eye(M), U)  # output path index P*m + p
    L = lift_mode_map(T, n)
    out = enumerate_sector(P * M, n).states
    eta = spec.eta
    f0 = np.array(
        [[np.prod([(1 - eta[d, m]) ** o[P * m + d] for m in range(M)]) for d in range(P)]
         for o in out]
    )
    elements = {}
    for pattern in itertools.product((0, 1), repeat=P):
        diag = np.prod([f0[:, d] if not c else 1 - f0[:, d] for d, c in enumerate(pattern)], axis=0)
        elements[pattern] = as_real_symmetric(L.conj().T @ (diag[:, None] * L))
    return elements


def pattern_of(label: str) -> tuple[int, ...]:
    """Click pattern of an outcome label (the basis letter is dropped)."""
    return tuple(int(c) for c in label.lstrip("ZX"))


def build_bob_povm(spec: ReceiverSpec, N: int, method: str = "factorized") -> PovmSet:
    """Bob's POVM on photon-number sectors ``0..N``.

    Args:
        spec: receiver description.
        N: largest photon-number sector to build.
        method: ``"factorized"`` (default) or ``"direct"`` full-space lift.

    Returns:
        The labelled POVM. Active elements carry Bob's basis probability.
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    build = {"factorized": _pattern_elements, "direct": _pattern_elements_direct}[method]
    if spec.scheme == PASSIVE:
        per_sector = {n: build(spec, None, n) for n in range(N + 1)}
        elements = [
            BlockOperator({n: per_sector[n][pattern_of(y)] for n in per_sector})
            for y in PASSIVE_LABELS
        ]
        return PovmSet(spec, PASSIVE_LABELS, elements)

    conditional, elements = [], []
    for basis, weight in (("Z", spec.basis_prob), ("X", 1 - spec.basis_prob)):
        per_sector = {n: build(spec, basis, n) for n in range(N + 1)}
        for y in ACTIVE_LABELS[:4]:
            op = BlockOperator({n: per_sector[n][pattern_of(y)] for n in per_sector})
            conditional.append(op)
            elements.append(op * weight)
    return PovmSet(spec, ACTIVE_LABELS, elements, conditional)


def grouped_elements(povm: PovmSet) -> dict[str, BlockOperator]:
    """Sifting groups: single and double key-basis clicks, DA/cross clicks, keep set."""
    if povm.spec.scheme == ACTIVE:
        g = {"H": povm["Z10"], "V": povm["Z01"], "HV": povm["Z11"], "DA": povm["X11"]}
    else:
        g = {"H": povm["1000"], "V": povm["0100"], "HV": povm["1100"], "DA": povm["0011"]}
        cross = [povm[y] for y in cross_click_labels()]
        g["CC"] = sum(cross[1:], cross[0])
    g["keep"] = g["H"] + g["V"] + g["HV"]
    return g


def cross_click_labels() -> list[str]:
    """Passive patterns with a click in {H, V} and a click in {D, A}."""
    return [y for y in PASSIVE_LABELS if "1" in y[:2] and "1" in y[2:]]


def keep_labels(scheme: str) -> tuple[str, ...]:
    return ("Z10", "Z01", "Z11") if scheme == ACTIVE else ("1000", "0100", "1100")


def build_bound_operators(povm: PovmSet) -> dict[str, BlockOperator]:
    """Double-click, effective-error (active) or cross-click (passive) operators.

    ``F_DC`` and ``F_CC`` have an identity Alice factor and are returned as
    Bob-only operators. ``F_EE`` is joint.
    """
    if povm.spec.scheme == PASSIVE:
        return {"F_CC": grouped_elements(povm)["CC"]}
    c = povm.cond
    f_dc = 0.5 * c("Z11") + 0.5 * c("X11")
    A = ALICE_OPERATORS
    terms = [
        alice_tensor(A["H"], c("Z01") + 0.5 * c("Z11")),
        alice_tensor(A["V"], c("Z10") + 0.5 * c("Z11")),
        alice_tensor(A["D"], c("X01") + 0.5 * c("X11")),
        alice_tensor(A["A"], c("X10") + 0.5 * c("X11")),
    ]
    f_ee = sum(terms[1:], terms[0]) * 0.5
    return {"F_DC": f_dc, "F_EE": f_ee}
