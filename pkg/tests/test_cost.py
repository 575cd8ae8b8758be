import math

import numpy as np
import pytest

from conftest import spike_state
from morphoseek.cost import BatchCost, cost_batch, cost_single, relative_errors, validate
from morphoseek.exceptions import ConfigurationError, DimensionError
from morphoseek.kernel import GridDims, StateVector, energy_cyclic, energy_noncyclic, random_state, random_states
from morphoseek.relations import AffineRelation, SignedPermScale, identity, negate_ssh, scale_gf, translate

SPIKE = GridDims(1, 4, 4)


def doubling(dims):
    n = dims.n_ssh
    return AffineRelation(dims, "signed-perm-scale", SignedPermScale(np.arange(n), np.full(n, 2.0), np.ones(4)),
                          np.zeros(dims.size))


def test_identity_cost_infinite():
    assert cost_single(identity(SPIKE), [identity(SPIKE)], spike_state(), energy_cyclic) == math.inf


def test_negation_cost_zero(desk):
    X = random_state(desk, rng=0)
    assert cost_single(negate_ssh(desk), [identity(desk)], X, energy_cyclic) == 0.0


def test_doubling_spike_cost():
    c = cost_single(doubling(SPIKE), [identity(SPIKE)], spike_state(), energy_cyclic)
    assert c == pytest.approx(0.09375, rel=1e-12)


def test_second_prior_multiplies_denominator():
    # |2s - s|^2 = 1 and |2s - (-s)|^2 = 9
    c = cost_single(doubling(SPIKE), [identity(SPIKE), negate_ssh(SPIKE)], spike_state(), energy_cyclic)
    assert c == pytest.approx(0.09375 / 9, rel=1e-12)


def test_duplicate_of_later_prior_is_infinite(small):
    X = random_state(small, rng=1)
    assert cost_single(negate_ssh(small), [identity(small), negate_ssh(small)], X, energy_cyclic) == math.inf


def test_priors_contract(small):
    X = random_state(small, rng=1)
    with pytest.raises(ConfigurationError):
        cost_single(negate_ssh(small), [], X, energy_cyclic)
    with pytest.raises(ConfigurationError):
        cost_single(negate_ssh(small), [negate_ssh(small)], X, energy_cyclic)
    with pytest.raises(DimensionError):
        cost_single(negate_ssh(small), [identity(small)], spike_state(), energy_cyclic)


def test_off_domain_image_is_infinite(small):
    D = small.size
    alpha = np.ones(D)
    alpha[-4] = -1.0  # dy -> -dy
    rel = AffineRelation(small, "diagonal", alpha, np.zeros(D))
    assert cost_single(rel, [identity(small)], random_state(small, rng=0), energy_cyclic) == math.inf


def test_batch_of_one_matches_single(small):
    X = random_state(small, rng=3)
    g = translate(small, 0, 1)
    single = cost_single(g, [identity(small)], X, energy_noncyclic)
    assert cost_batch(g, [identity(small)], [X], energy_noncyclic) == single
    assert single > 0


def test_batch_negation_zero_and_empty(small):
    batch = [random_state(small, rng=s) for s in range(6)]
    assert cost_batch(negate_ssh(small), [identity(small)], batch, energy_cyclic) == 0.0
    with pytest.raises(ConfigurationError):
        cost_batch(negate_ssh(small), [identity(small)], [], energy_cyclic)


def test_batch_with_duplicate_member_is_infinite(small):
    # zero ssh makes negate_ssh coincide with identity on that member only
    batch = [random_state(small, rng=0), StateVector(np.zeros(small.shape), 1, 1, 1, 1)]
    assert cost_batch(negate_ssh(small), [identity(small)], batch, energy_cyclic) == math.inf


def test_fused_path_matches_generic(small):
    X = random_states(small, 8, rng=2)
    rng = np.random.default_rng(0)
    priors = [identity(small), negate_ssh(small)]
    fast = BatchCost(priors, X, energy_noncyclic, small)
    generic = BatchCost(priors, X, lambda s: energy_noncyclic(s), small)
    for _ in range(5):
        rel = AffineRelation(small, "diagonal", 1 + 0.3 * rng.normal(size=small.size), 0.1 * rng.normal(size=small.size))
        np.testing.assert_allclose(fast(rel), generic(rel), rtol=1e-13)
    assert fast.n_evaluations == 5


# -- validation -------------------------------------------------------------------

def test_validate_negation(desk):
    report = validate(negate_ssh(desk), [identity(desk)], energy_cyclic, rng=0, n_holdout=50)
    assert report.passed
    assert report.max_rel_err < 1e-12
    assert report.n_inputs == 50


def test_validate_identity_fails_on_distance(small):
    report = validate(identity(small), [identity(small)], energy_cyclic, rng=0)
    assert not report.passed
    assert report.min_prior_distance == 0.0


def test_validate_translation_under_noncyclic(desk):
    report = validate(translate(desk, 0, 1), [identity(desk)], energy_noncyclic, rng=0)
    assert not report.passed
    assert report.max_rel_err > 1e-3


def test_validate_respects_tolerance(desk):
    loose = validate(translate(desk, 0, 1), [identity(desk)], energy_noncyclic, rng=0, tol_validate=1.0)
    assert loose.passed
    with pytest.raises(ConfigurationError):
        validate(negate_ssh(desk), [identity(desk)], energy_cyclic, n_holdout=0)


def test_scale_gf_near_exact(desk):
    X = random_states(desk, 20, rng=4)
    assert np.max(relative_errors(scale_gf(desk), energy_cyclic, X)) < 1e-14


def test_relative_errors_off_domain(small):
    X = random_states(small, 2, rng=0)
    D = small.size
    beta = np.zeros(D)
    beta[-1] = -X[0, -1]  # F of the first row lands on zero
    errs = relative_errors(AffineRelation(small, "diagonal", np.ones(D), beta), energy_cyclic, X)
    assert errs[0] == math.inf and math.isfinite(errs[1])

