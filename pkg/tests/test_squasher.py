import numpy as np
import pytest

from qkdmm.channel import joint_table
from qkdmm.detectors import build_bob_povm, mismatch_model
from qkdmm.fock import sector_dim
from qkdmm.operators import random_joint_state
from qkdmm.squasher import (
    projector_k,
    squash_povm,
    squash_state,
    squashed_space,
    squashing_residual,
)


@pytest.fixture(scope="module")
def povm():
    return build_bob_povm(mismatch_model("active", 0.9, 0.4, 2), 4)


def _dims(povm):
    return {n: sector_dim(povm.spec.layout.modes, n) for n in range(povm.max_sector + 1)}


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_joint_statistics_preserved(povm, k):
    rng = np.random.default_rng(k)
    rho = random_joint_state(_dims(povm), rng)
    before = joint_table(rho, povm)
    after = joint_table(squash_state(rho, k, povm), squash_povm(povm, k))
    np.testing.assert_allclose(after, before, atol=1e-12)
    assert squashing_residual(rho, povm, k) < 1e-12


def test_squashed_state_is_a_state(povm):
    rho = random_joint_state(_dims(povm), np.random.default_rng(9), rank=2)
    sq = squash_state(rho, 1, povm)
    assert sq.trace() == pytest.approx(1.0, abs=1e-12)
    assert sq.min_eigenvalue() > -1e-12
    assert sq.flags.shape == (8, 2, 2)
    assert set(sq.blocks) == {0, 1}


def test_squashed_povm_is_complete(povm):
    sq = squash_povm(povm, 2)
    assert sq.completeness_deviation() < 1e-12
    assert sq.min_eigenvalue() > -1e-12
    with pytest.raises(ValueError):
        squash_povm(povm, 9)


def test_low_photon_state_unchanged(povm):
    dims = {n: d for n, d in _dims(povm).items() if n <= 2}
    rho = random_joint_state(dims, np.random.default_rng(1))
    sq = squash_state(rho, 2, povm)
    for n in dims:
        np.testing.assert_array_equal(sq.blocks[n], rho.blocks[n])
    assert np.all(sq.flags == 0)


def test_projector_k(povm):
    space = squashed_space(povm, 2)
    assert space.dim == 1 + 4 + 10 + 8
    P1 = projector_k(space, 1)
    assert P1.blocks[2].sum() == 0 and np.all(P1.flags == 0)
    assert np.array_equal(projector_k(space).blocks[2], np.eye(10))
    with pytest.raises(ValueError):
        projector_k(space, 3)


def test_rejects_bad_states(povm):
    rho = random_joint_state(_dims(povm), np.random.default_rng(2))
    bad = random_joint_state(_dims(povm), np.random.default_rng(2))
    bad.blocks[1] = bad.blocks[1] - 2 * np.eye(len(bad.blocks[1]))
    with pytest.raises(ValueError):
        squash_state(bad, 1, povm)
    with pytest.raises(ValueError):
        squash_state(squash_state(rho, 1, povm), 1, povm)
