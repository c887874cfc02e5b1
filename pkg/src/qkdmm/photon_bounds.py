"""Observation-driven lower bounds on Bob's low-photon-number probability.

For each photon number ``n`` the smallest possible double-click,
effective-error or cross-click rate over all ``n``-photon states is the
smallest eigenvalue of the corresponding operator on that sector. If the
minima grow with ``n``, an observed rate caps the weight of the high
photon numbers. That cap yields ``b1 <= p0 + p1`` and ``b2 <= p0 + p1 + p2``.
The growth is checked on every run rather than assumed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .detectors import ACTIVE, PovmSet, build_bound_operators
from .operators import BlockOperator

log = logging.getLogger(__name__)

DENOMINATOR_FLOOR = 1e-12
MONOTONE_TOL = 1e-10
DEFAULT_N_MAX = 6
RATE_NOISE = 1e-14  # negative observed rates down to this are rounding noise


class MonotonicityError(RuntimeError):
    """A photon-number monotonicity relation failed for the receiver at hand."""


def min_sector_rate(F: BlockOperator, n: int) -> float:
    """Minimum of ``Tr(rho F)`` over ``n``-photon states, clamped at 0.

    The feasible set is every density matrix on the sector, so the optimum is
    the smallest eigenvalue. A Bob-only ``F`` stands for ``1_A (x) F``, which
    has the same spectrum.
    """
    block = F.sector(n)
    return max(float(np.linalg.eigvalsh(block)[0]), 0.0)


@dataclass
class SectorMinima:
    scheme: str
    n_max: int
    d: dict[int, float] = field(default_factory=dict)
    e: dict[int, float] = field(default_factory=dict)
    c: dict[int, float] = field(default_factory=dict)
    verdicts: dict[str, bool] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"scheme": self.scheme, "n_max": self.n_max, "verdicts": self.verdicts}
        for name in ("d", "e", "c"):
            values = getattr(self, name)
            if values:
                out[f"{name}_min"] = {str(n): v for n, v in sorted(values.items())}
        return out

    @property
    def monotone(self) -> bool:
        return bool(self.verdicts) and all(self.verdicts.values())


def sector_minima(povm: PovmSet, n_max: int | None = None) -> SectorMinima:
    """Per-sector minima for ``n = 1..n_max`` from a POVM built to ``n_max``."""
    n_max = povm.max_sector if n_max is None else n_max
    if n_max > povm.max_sector:
        raise ValueError(f"POVM built to {povm.max_sector}, minima requested to {n_max}")
    ops = build_bound_operators(povm)
    minima = SectorMinima(povm.spec.scheme, n_max)
    for n in range(1, n_max + 1):
        if povm.spec.scheme == ACTIVE:
            minima.d[n] = min_sector_rate(ops["F_DC"], n)
            minima.e[n] = min_sector_rate(ops["F_EE"], n)
        else:
            minima.c[n] = min_sector_rate(ops["F_CC"], n)
    if n_max >= 3:
        minima.verdicts = verify_monotonicity(minima)
    return minima


def verify_monotonicity(minima: SectorMinima, tol: float = MONOTONE_TOL) -> dict[str, bool]:
    """Check the relations the bounds rely on over ``n <= n_max``."""
    if minima.n_max < 3:
        raise ValueError("monotonicity needs minima up to at least n = 3")
    N = minima.n_max
    verdicts = {}

    def at_least(values, ref, start):
        return all(values[n] >= ref - tol for n in range(start, N + 1))

    if minima.scheme == ACTIVE:
        d, e = minima.d, minima.e
        verdicts["d_n>=d_3"] = at_least(d, d[3], 3)
        verdicts["e_n>=e_3"] = at_least(e, e[3], 3)
        verdicts["e_n>=min(e_2,e_3)"] = at_least(e, min(e[2], e[3]), 2)
    else:
        c = minima.c
        verdicts["c_n>=c_3"] = at_least(c, c[3], 3)
        verdicts["c_n>=c_2"] = at_least(c, c[2], 2)
    for name, ok in verdicts.items():
        if not ok:
            log.warning("monotonicity relation %s fails; photon-number bounds invalid", name)
    return verdicts


@dataclass
class PhotonBounds:
    b1: float
    b2: float
    inputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"b1": self.b1, "b2": self.b2, **self.inputs}


def _ratio(num: float, den: float) -> float:
    return math.inf if den < DENOMINATOR_FLOOR else num / den


def _clean_rate(x: float) -> float:
    if x < -RATE_NOISE:
        raise ValueError(f"observed rates must be nonnegative, got {x}")
    return max(x, 0.0)


def _finish(b1: float, b2: float, inputs: dict) -> PhotonBounds:
    b2 = min(max(b2, 0.0), 1.0)
    b1 = min(max(b1, 0.0), 1.0, b2)
    return PhotonBounds(b1, b2, inputs)


def _require_monotone(minima: SectorMinima | None):
    if minima is not None and minima.verdicts and not minima.monotone:
        raise MonotonicityError(f"monotonicity failed: {minima.verdicts}")


def bounds_active(d_obs: float, e_obs: float, minima: SectorMinima) -> PhotonBounds:
    """``b2`` from double clicks or effective errors, ``b1`` from effective errors."""
    d_obs, e_obs = _clean_rate(d_obs), _clean_rate(e_obs)
    _require_monotone(minima)
    d3, e2, e3 = minima.d[3], minima.e[2], minima.e[3]
    e_min = min(e2, e3)
    b2 = 1 - min(_ratio(d_obs, d3), _ratio(e_obs, e3))
    b1 = 1 - _ratio(e_obs, e_min)
    inputs = {"d_obs": d_obs, "e_obs": e_obs, "d3_min": d3, "e3_min": e3, "e_min": e_min}
    return _finish(b1, b2, inputs)


def bounds_passive(c_obs: float, minima: SectorMinima) -> PhotonBounds:
    """``b2`` and ``b1`` from the cross-click rate."""
    c_obs = _clean_rate(c_obs)
    _require_monotone(minima)
    c2, c3 = minima.c[2], minima.c[3]
    b2 = 1 - _ratio(c_obs, c3)
    b1 = 1 - _ratio(c_obs, c2)
    return _finish(b1, b2, {"c_obs": c_obs, "c2_min": c2, "c3_min": c3})
