import math

import numpy as np
import pytest
from scipy.integrate import quad

from qkdmm.channel import (
    ChannelParams,
    distance_to_transmission,
    ground_truth_state,
    resend_state,
    simulate,
)
from qkdmm.detectors import mismatch_model, uniform_receiver


def resend_by_quadrature():
    """Average of (a_theta^+)^2 |0> over theta, basis |0,2>, |1,1>, |2,0>."""

    def vec(th):
        c, s = math.cos(th), math.sin(th)
        return np.array([math.sqrt(2) * s * s, 2 * c * s, math.sqrt(2) * c * c])

    out = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = quad(lambda th: vec(th)[i] * vec(th)[j], 0, 2 * math.pi)[0]
    return out / (4 * math.pi)


def test_resend_state_matches_quadrature():
    np.testing.assert_allclose(resend_state(2), resend_by_quadrature(), atol=1e-12)
    assert np.trace(resend_state(2)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        resend_state(3)


def test_distance_map():
    assert distance_to_transmission(50) == pytest.approx(0.1)
    assert ChannelParams(0.0, distance_km=100).t == pytest.approx(0.01)
    with pytest.raises(ValueError):
        ChannelParams(1.2)
    with pytest.raises(ValueError):
        ChannelParams(0.0, m_resend=3)


@pytest.mark.parametrize("scheme", ["active", "passive"])
def test_ideal_statistics(scheme):
    stats, rho = simulate(uniform_receiver(scheme, 1.0), ChannelParams(0.0, 1.0, 0.0))
    assert stats.p_table.sum() == pytest.approx(1.0)
    assert stats.p_pass == pytest.approx(0.25)
    assert stats.e_sift == pytest.approx(0.0, abs=1e-15)
    assert stats.p_det == pytest.approx(1.0)
    assert rho.trace() == pytest.approx(1.0)


@pytest.mark.parametrize("scheme", ["active", "passive"])
def test_depolarizing_error_and_loss(scheme):
    omega, t, eta = 0.08, 0.3, 0.6
    stats, _ = simulate(uniform_receiver(scheme, eta), ChannelParams(omega, t, 0.0))
    assert stats.e_sift == pytest.approx(omega / 2)
    assert stats.p_det == pytest.approx(t * eta)


def test_resend_double_clicks():
    # a quarter of resent photon pairs split across the two detectors of either basis
    r = 0.2
    stats, _ = simulate(uniform_receiver("active", 1.0), ChannelParams(0.0, 1.0, r))
    assert stats.d_obs == pytest.approx(r / 4)
    assert stats.p("H", "Z11") == pytest.approx(r / 4 * 0.25 * 0.5)


def test_ground_truth_is_a_state():
    spec = mismatch_model("active", 0.2, 0.15, 2)
    rho = ground_truth_state(spec, ChannelParams(0.05, 0.5, 0.05))
    assert rho.trace() == pytest.approx(1.0)
    assert rho.min_eigenvalue() > -1e-14
    assert set(rho.blocks) == {0, 1, 2}
    # Alice's marginal stays maximally mixed
    marg = sum(b.reshape(2, len(b) // 2, 2, len(b) // 2).trace(axis1=1, axis2=3)
               for b in rho.blocks.values())
    np.testing.assert_allclose(marg, np.eye(2) / 2, atol=1e-14)


def test_fixed_product_of_transmission_and_efficiency():
    # without mismatch, only t * eta matters
    a, _ = simulate(uniform_receiver("active", 0.2), ChannelParams(0.05, 0.5, 0.05))
    b, _ = simulate(uniform_receiver("active", 1.0), ChannelParams(0.05, 0.1, 0.05))
    assert a.p_pass == pytest.approx(b.p_pass)
    assert a.e_sift == pytest.approx(b.e_sift)


def test_ideal_table_entries():
    stats, _ = simulate(uniform_receiver("active", 1.0), ChannelParams(0.0, 1.0, 0.0))
    assert stats.p("H", "Z10") == pytest.approx(1 / 8)
    assert stats.p("H", "Z01") == 0.0


def test_single_photons_never_cross_click():
    stats, _ = simulate(uniform_receiver("passive", 0.7, 2), ChannelParams(0.1, 0.4, 0.0))
    assert stats.c_obs == pytest.approx(0.0, abs=1e-15)


def test_half_transmission_distance():
    assert distance_to_transmission(15.05) == pytest.approx(0.5, abs=5e-4)
