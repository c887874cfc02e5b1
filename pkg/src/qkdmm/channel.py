"""Simulated observations for the single-photon BB84 toy model.

Alice's half of a maximally entangled pair stays with her; Bob's half crosses
a depolarizing channel with single-photon transmission ``t``. With
probability ``r`` the adversary intercepts the photon and resends the
isotropic two-photon state instead. The resent photons cross the same lossy
channel. Each event lands in a uniformly random spatial-temporal mode. The
resulting joint state lives on Bob's sectors ``n <= 2``, so all statistics
are exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma

from .detectors import (
    ACTIVE,
    ALICE_LABELS,
    PovmSet,
    ReceiverSpec,
    build_alice_povm,
    build_bob_povm,
    cross_click_labels,
)
from .fock import enumerate_sector
from .operators import BlockOperator

MAX_SECTOR = 2


@dataclass(frozen=True)
class ChannelParams:
    """Toy-channel parameters.

    Attributes:
        omega: depolarizing probability.
        t: single-photon transmission; overridden by ``distance_km`` when given.
        r: intercept-resend probability.
        m_resend: number of resent photons (only 2 is supported).
        distance_km: fiber length, ``t = 10**(-L/50)``.
    """

    omega: float
    t: float = 1.0
    r: float = 0.0
    m_resend: int = 2
    distance_km: float | None = None

    def __post_init__(self):
        if self.distance_km is not None:
            if self.distance_km < 0:
                raise ValueError("distance must be >= 0")
            object.__setattr__(self, "t", distance_to_transmission(self.distance_km))
        for name in ("omega", "t", "r"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.m_resend != 2:
            raise ValueError("only m_resend = 2 is supported")


def distance_to_transmission(L: float) -> float:
    return 10 ** (-L / 50)


def _trig_moment(a: int, b: int) -> float:
    """``int_0^{2 pi} cos^a sin^b`` dtheta."""
    if a % 2 or b % 2:
        return 0.0
    return 2 * gamma((a + 1) / 2) * gamma((b + 1) / 2) / gamma((a + b) / 2 + 1)


def resend_state(m: int = 2) -> np.ndarray:
    """Isotropic ``m``-photon polarization state in the basis ``|j, m-j>`` (j descending).

    Basis order matches the lexicographic sector basis over (H, V):
    ``|0,m>, |1,m-1>, ..., |m,0>``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if m != 2:
        raise ValueError("only m = 2 has unit trace under the stated normalization")
    states = enumerate_sector(2, m).states
    rho = np.zeros((len(states), len(states)))
    for i, (jh, jv) in enumerate(states):
        for k, (kh, kv) in enumerate(states):
            amp = math.comb(m, jh) * math.comb(m, kh) * math.sqrt(
                math.factorial(jh) * math.factorial(jv) * math.factorial(kh) * math.factorial(kv)
            )
            rho[i, k] = amp * _trig_moment(jh + kh, jv + kv)
    return rho / (2 * m * math.pi)


def _embed_mode(spatial_modes: int, m: int, n: int) -> np.ndarray:
    """Isometry from the n-photon (H, V) space of spatial mode ``m`` into sector ``n``."""
    local = enumerate_sector(2, n).states
    lookup = enumerate_sector(2 * spatial_modes, n).lookup
    E = np.zeros((len(lookup), len(local)))
    for i, (h, v) in enumerate(local):
        occ = [0] * (2 * spatial_modes)
        occ[2 * m], occ[2 * m + 1] = h, v
        E[lookup[tuple(occ)], i] = 1.0
    return E


def _embed_polarization(spatial_modes: int, m: int) -> np.ndarray:
    """Columns ``|m, H>`` and ``|m, V>`` in the single-photon sector."""
    lookup = enumerate_sector(2 * spatial_modes, 1).lookup
    E = np.zeros((len(lookup), 2))
    for p in (0, 1):
        occ = [0] * (2 * spatial_modes)
        occ[2 * m + p] = 1
        E[lookup[tuple(occ)], p] = 1.0
    return E


def loss_kraus(modes: int, n: int, t: float) -> dict[int, list[np.ndarray]]:
    """Kraus operators of uniform pure loss from sector ``n``, grouped by output sector."""
    src = enumerate_sector(modes, n).states
    out: dict[int, list[np.ndarray]] = {}
    for lost in itertools.product(range(n + 1), repeat=modes):
        if sum(lost) > n:
            continue
        target = n - sum(lost)
        lookup = enumerate_sector(modes, target).lookup
        K = np.zeros((len(lookup), len(src)))
        for c, occ in enumerate(src):
            if any(l > o for l, o in zip(lost, occ)):
                continue
            amp = 1.0
            for l, o in zip(lost, occ):
                amp *= math.sqrt(math.comb(o, l) * t ** (o - l) * (1 - t) ** l)
            K[lookup[tuple(o - l for o, l in zip(occ, lost))], c] = amp
        if np.any(K):
            out.setdefault(target, []).append(K)
    return out


def apply_loss(rho: BlockOperator, t: float, modes: int) -> BlockOperator:
    """Pure loss with transmission ``t`` on every Bob mode of a joint state."""
    dims = {n: enumerate_sector(modes, n).dim for n in range(rho.max_sector + 1)}
    blocks = {n: np.zeros((2 * d, 2 * d)) for n, d in dims.items()}
    I2 = np.eye(2)
    for n, b in rho.blocks.items():
        for target, ops in loss_kraus(modes, n, t).items():
            for K in ops:
                KA = np.kron(I2, K)
                blocks[target] += KA @ b @ KA.T
    return BlockOperator(blocks, joint=True)


def ground_truth_state(spec: ReceiverSpec, params: ChannelParams) -> BlockOperator:
    """Joint Alice-Bob state on sectors 0..2 for the toy channel."""
    M = spec.layout.spatial_modes
    modes = 2 * M
    dims = {n: enumerate_sector(modes, n).dim for n in range(MAX_SECTOR + 1)}
    signal = {n: np.zeros((2 * d, 2 * d)) for n, d in dims.items()}
    resend = {n: np.zeros((2 * d, 2 * d)) for n, d in dims.items()}

    phi = np.zeros(4)
    phi[0] = phi[3] = 1 / np.sqrt(2)  # (|H>|H> + |V>|V>)/sqrt(2), Alice outer
    rho_dep = (1 - params.omega) * np.outer(phi, phi) + params.omega * np.eye(4) / 4
    rho2 = resend_state(params.m_resend)
    for m in range(M):
        E1 = np.kron(np.eye(2), _embed_polarization(M, m))
        signal[1] += E1 @ rho_dep @ E1.T / M
        E2 = _embed_mode(M, m, 2)
        resend[2] += np.kron(np.eye(2) / 2, E2 @ rho2 @ E2.T) / M

    signal = apply_loss(BlockOperator(signal, joint=True), params.t, modes)
    resend = apply_loss(BlockOperator(resend, joint=True), params.t, modes)
    rho = signal * (1 - params.r) + resend * params.r
    rho.blocks = {n: 0.5 * (b + b.T) for n, b in rho.blocks.items()}
    return rho


@dataclass
class ObservedStats:
    """Joint outcome table and the scalars derived from it."""

    alice_labels: tuple[str, ...]
    bob_labels: tuple[str, ...]
    p_table: np.ndarray
    scheme: str
    d_obs: float | None
    e_obs: float | None
    c_obs: float | None
    p_pass: float
    e_sift: float
    p_det: float

    def p(self, x: str, y: str) -> float:
        return float(self.p_table[self.alice_labels.index(x), self.bob_labels.index(y)])

    def to_dict(self) -> dict:
        return {
            "p_table": {
                x: {y: float(self.p_table[i, j]) for j, y in enumerate(self.bob_labels)}
                for i, x in enumerate(self.alice_labels)
            },
            "d_obs": self.d_obs,
            "e_obs": self.e_obs,
            "c_obs": self.c_obs,
            "p_pass": self.p_pass,
            "e_sift": self.e_sift,
            "p_det": self.p_det,
        }


def joint_table(rho: BlockOperator, povm: PovmSet) -> np.ndarray:
    """``p(x, y) = Tr((M_x^A (x) M_y^B) rho)`` for Alice's weighted POVM."""
    alice = build_alice_povm()
    table = np.zeros((len(ALICE_LABELS), povm.n_outcomes))
    for n, b in rho.blocks.items():
        d = b.shape[0] // 2
        R = b.reshape(2, d, 2, d)
        for j, e in enumerate(povm.elements):
            sigma_a = np.einsum("ibjc,cb->ij", R, e.blocks[n])
            for i, x in enumerate(ALICE_LABELS):
                table[i, j] += float(np.sum(alice[x] * sigma_a.T))
    if rho.flags is not None:
        for j, e in enumerate(povm.elements):
            for i, x in enumerate(ALICE_LABELS):
                table[i, j] += float(np.einsum("yab,ba,y->", rho.flags, alice[x], e.flags))
    return table


def stats_from_table(table: np.ndarray, spec: ReceiverSpec) -> ObservedStats:
    """Derive the observed scalars from a joint table."""
    labels = spec.labels
    ya = {y: j for j, y in enumerate(labels)}
    xa = {x: i for i, x in enumerate(ALICE_LABELS)}

    def p(x, y):
        return float(table[xa[x], ya[y]])

    if spec.scheme == ACTIVE:
        single, double = ("Z10", "Z01"), "Z11"
        pz, px = spec.basis_prob, 1 - spec.basis_prob
        d_obs = e_obs = None
        if 0 < pz < 1:
            # basis-conditional click rates with Alice's unweighted operators
            def cond(x, y, pb):
                return p(x, y) / (0.5 * pb)

            d_obs = 0.5 * sum(p(x, "Z11") for x in ALICE_LABELS) / pz + 0.5 * sum(
                p(x, "X11") for x in ALICE_LABELS
            ) / px
            e_obs = 0.5 * (
                cond("H", "Z01", pz) + 0.5 * cond("H", "Z11", pz)
                + cond("V", "Z10", pz) + 0.5 * cond("V", "Z11", pz)
                + cond("D", "X01", px) + 0.5 * cond("D", "X11", px)
                + cond("A", "X10", px) + 0.5 * cond("A", "X11", px)
            )
        c_obs = None
        bob_key_prob = pz
    else:
        single, double = ("1000", "0100"), "1100"
        d_obs = e_obs = None
        c_obs = float(sum(p(x, y) for x in ALICE_LABELS for y in cross_click_labels()))
        bob_key_prob = 0.5
    h, v = single
    p_pass = sum(p(x, y) for x in ("H", "V") for y in (h, v, double))
    errors = p("H", v) + p("V", h) + 0.5 * p("H", double) + 0.5 * p("V", double)
    e_sift = errors / p_pass if p_pass > 0 else 0.0
    p_det = p_pass / (0.5 * bob_key_prob) if bob_key_prob > 0 else 0.0
    return ObservedStats(
        ALICE_LABELS, labels, table, spec.scheme, d_obs, e_obs, c_obs, p_pass, e_sift, p_det
    )


def simulate(
    spec: ReceiverSpec, params: ChannelParams, povm: PovmSet | None = None
) -> tuple[ObservedStats, BlockOperator]:
    """Exact statistics and ground-truth state for one parameter point."""
    if povm is None:
        povm = build_bob_povm(spec, MAX_SECTOR)
    rho = ground_truth_state(spec, params)
    table = joint_table(rho, povm)
    return stats_from_table(table, spec), rho

