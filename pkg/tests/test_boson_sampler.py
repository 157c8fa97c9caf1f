import math
from collections import Counter, defaultdict
from itertools import product

import numpy as np
import pytest
from scipy.linalg import block_diag
from scipy.special import comb

from boson_sampler import (
    OutputDistribution,
    VisibilityTensor,
    build_submatrix,
    classical_distribution,
    empirical_distribution,
    fock_states,
    full_distribution,
    hom_visibility,
    indistinguishability_to_weight,
    output_probability,
    parse_fock_state,
    sample_outcomes,
    three_photon_partial_distribution,
    two_photon_distribution,
    visibility_tensor,
)
from errors import (
    NormalizationError,
    PhotonNumberError,
    UndefinedVisibilityError,
    UnsupportedInputError,
)
from unitaries import haar_sample


def creation_operator_probabilities(u, s):
    """Expand prod_i (sum_k U_ki a_k^dag)^{s_i} and read off each monomial."""
    m = u.shape[0]
    inputs = [i for i in range(m) for _ in range(s[i])]
    coefficients = defaultdict(complex)
    for outs in product(range(m), repeat=len(inputs)):
        amplitude = np.prod([u[k, i] for k, i in zip(outs, inputs)])
        t = tuple(outs.count(k) for k in range(m))
        coefficients[t] += amplitude
    norm = math.prod(math.factorial(x) for x in s)
    return {
        t: abs(c) ** 2 * math.prod(math.factorial(x) for x in t) / norm
        for t, c in coefficients.items()
    }


def _random_state(rng, m, n):
    s = [0] * m
    for k in rng.integers(0, m, size=n):
        s[k] += 1
    return tuple(s)


@pytest.mark.parametrize("m, n", [(1, 3), (3, 2), (5, 3), (4, 4)])
def test_fock_state_count(m, n):
    assert len(fock_states(m, n)) == comb(m + n - 1, n, exact=True)


def test_fock_states_order():
    assert fock_states(2, 2) == [(0, 2), (1, 1), (2, 0)]
    states = fock_states(5, 3, collision_free=True)
    assert len(states) == 10
    assert states == sorted(states)
    assert all(max(s) == 1 for s in states)


def test_parse_fock_state():
    assert parse_fock_state("10101") == (1, 0, 1, 0, 1)
    assert parse_fock_state(" 2,0,1 ") == (2, 0, 1)
    with pytest.raises(PhotonNumberError):
        parse_fock_state("1x0")


def test_submatrix_repeats_rows_and_columns():
    u = np.arange(9).reshape(3, 3).astype(complex)
    sub = build_submatrix(u, (2, 0, 0), (0, 1, 1))
    np.testing.assert_array_equal(sub, [[3, 3], [6, 6]])


def test_photon_number_mismatch():
    with pytest.raises(PhotonNumberError):
        output_probability(np.eye(2), (1, 0), (1, 1))
    with pytest.raises(PhotonNumberError):
        output_probability(np.eye(2), (0, 0), (0, 0))


def test_matches_creation_operator_expansion(rng):
    for _ in range(20):
        m = int(rng.integers(2, 6))
        n = int(rng.integers(1, 4))
        u = haar_sample(m, rng)
        s = _random_state(rng, m, n)
        oracle = creation_operator_probabilities(u, s)
        dist = full_distribution(u, s)
        for t, p in zip(dist.states, dist.probabilities):
            assert p == pytest.approx(oracle.get(t, 0.0), abs=1e-10)


def test_distribution_is_normalized(rng):
    for _ in range(50):
        m = int(rng.integers(2, 9))
        n = int(rng.integers(1, 5))
        u = haar_sample(m, rng)
        dist = full_distribution(u, _random_state(rng, m, n))
        assert dist.raw_total == pytest.approx(1.0, abs=1e-10)


def test_naive_and_ryser_agree(rng):
    u = haar_sample(4, rng)
    a = full_distribution(u, (1, 1, 1, 0))
    b = full_distribution(u, (1, 1, 1, 0), algorithm="naive")
    np.testing.assert_allclose(a.probabilities, b.probabilities, atol=1e-12)


def test_hong_ou_mandel(splitter):
    quantum = full_distribution(splitter, (1, 1))
    classical = classical_distribution(splitter, (1, 1))
    assert quantum.probability_of((1, 1)) == pytest.approx(0.0, abs=1e-15)
    assert quantum.probability_of((2, 0)) == pytest.approx(0.5)
    assert classical.probability_of((1, 1)) == pytest.approx(0.5)
    assert hom_visibility(splitter, 0, 1, 0, 1) == pytest.approx(1.0)


def test_identity_is_a_point_mass():
    dist = full_distribution(np.eye(4), (1, 0, 2, 0))
    assert dist.probability_of((1, 0, 2, 0)) == pytest.approx(1.0)
    assert sum(dist.probabilities) == pytest.approx(1.0)


def test_classical_matches_independent_photons(rng):
    u = haar_sample(4, seed=21)
    s = (1, 0, 1, 1)
    dist = classical_distribution(u, s)
    columns = [np.abs(u[:, i]) ** 2 for i in (0, 2, 3)]
    shots = 40000
    counts = defaultdict(int)
    picks = np.stack([rng.choice(4, size=shots, p=c / c.sum()) for c in columns], axis=1)
    occupations = (picks[:, :, None] == np.arange(4)).sum(axis=1)
    for row in occupations:
        counts[tuple(int(x) for x in row)] += 1
    for t, p in zip(dist.states, dist.probabilities):
        assert counts.get(t, 0) / shots == pytest.approx(p, abs=0.01)


def test_classical_needs_collision_free_input():
    with pytest.raises(UnsupportedInputError):
        classical_distribution(np.eye(3), (2, 1, 0))


def test_collision_free_restriction(rng):
    u = haar_sample(5, rng)
    full = full_distribution(u, (1, 0, 1, 0, 1))
    restricted = full_distribution(u, (1, 0, 1, 0, 1), restrict="collision_free")
    assert len(restricted.states) == 10
    assert restricted.raw_total < 1.0
    assert sum(restricted.conditional) == pytest.approx(1.0)
    for t, p in zip(restricted.states, restricted.probabilities):
        assert p == pytest.approx(full.probability_of(t))


def test_visibility_tensor_shape(sampled):
    tensor = visibility_tensor(sampled)
    assert len(tensor.entries) == 100
    assert not tensor.missing
    assert all(-1.0 - 1e-12 <= e.v <= 1.0 + 1e-12 for e in tensor.entries)
    assert all(e.v == 0.0 for e in visibility_tensor(sampled, q=0.0).entries)


def test_visibility_undefined_on_identity():
    with pytest.raises(UndefinedVisibilityError):
        hom_visibility(np.eye(4), 0, 1, 2, 3)
    tensor = visibility_tensor(np.eye(4))
    assert (0, 1, 2, 3) in tensor.missing
    assert tensor.value(0, 1, 0, 1) == pytest.approx(0.0)


def test_visibility_records_are_one_based(sampled):
    tensor = visibility_tensor(sampled, q=0.9)
    records = tensor.to_records()
    assert records[0]["i"] == 1 and records[0]["K"] == 1
    again = VisibilityTensor.from_records(5, records)
    assert again.value(1, 0, 4, 3) == pytest.approx(tensor.value(0, 1, 3, 4))


def test_two_photon_distribution_carries_degraded_visibility(sampled):
    q = 0.8
    i, j = 1, 3
    s = tuple(1 if k in (i, j) else 0 for k in range(5))
    partial = two_photon_distribution(sampled, i, j, q)
    classical = classical_distribution(sampled, s)
    assert partial.raw_total == pytest.approx(1.0)
    for k in range(5):
        for l in range(k + 1, 5):
            t = tuple(1 if x in (k, l) else 0 for x in range(5))
            p_cl = classical.probability_of(t)
            v = (p_cl - partial.probability_of(t)) / p_cl
            assert v == pytest.approx(q * hom_visibility(sampled, i, j, k, l), abs=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_three_photon_model_is_affine_in_r(seed):
    u = haar_sample(5, seed=seed)
    p0 = np.array(three_photon_partial_distribution(u, 0.0).probabilities)
    p1 = np.array(three_photon_partial_distribution(u, 1.0).probabilities)
    r = indistinguishability_to_weight(0.63)
    pr = np.array(three_photon_partial_distribution(u, r).probabilities)
    np.testing.assert_allclose(pr, r * p1 + (1 - r) * p0, atol=1e-14)


def test_three_photon_fully_indistinguishable_limit(sampled):
    partial = three_photon_partial_distribution(sampled, 1.0)
    exact = full_distribution(sampled, (1, 0, 1, 0, 1), restrict="collision_free")
    assert partial.states == exact.states
    np.testing.assert_allclose(partial.probabilities, exact.probabilities, atol=1e-12)


def test_three_photon_distinguishable_limit_matches_two_species(sampled):
    # photon b lives on a copy of the chip, so it never interferes with the pair
    partial = three_photon_partial_distribution(sampled, 0.0)
    doubled = block_diag(sampled, sampled)
    s = (1, 0, 0, 0, 1) + (0, 0, 1, 0, 0)
    species = full_distribution(doubled, s)
    expected = defaultdict(float)
    for t, p in zip(species.states, species.probabilities):
        combined = tuple(x + y for x, y in zip(t[:5], t[5:]))
        if max(combined) <= 1:
            expected[combined] += p
    for t, p in zip(partial.states, partial.probabilities):
        assert p == pytest.approx(expected[t], abs=1e-12)


def test_three_photon_rejects_bad_inputs(sampled):
    with pytest.raises(UnsupportedInputError):
        three_photon_partial_distribution(sampled, 1.5)
    with pytest.raises(UnsupportedInputError):
        three_photon_partial_distribution(sampled, 0.5, modes=(0, 0, 4))


def test_sampling_reproducible_and_close(sampled):
    dist = full_distribution(sampled, (1, 1, 0, 0, 0))
    first = sample_outcomes(dist, 20000, seed=5)
    assert first == sample_outcomes(dist, 20000, seed=5)
    empirical = empirical_distribution(first, dist)
    np.testing.assert_allclose(empirical.probabilities, dist.probabilities, atol=0.015)


def test_uniform_sampling_frequencies():
    states = fock_states(5, 2, collision_free=True)
    dist = OutputDistribution(
        input_state=(1, 1, 0, 0, 0), mode_count=5, model="uniform", states=states,
        probabilities=[0.1] * 10, raw_total=1.0,
    )
    shots = 1_000_000
    counts = Counter(sample_outcomes(dist, shots, seed=11))
    assert set(counts) == set(states)
    for state in states:
        assert counts[state] / shots == pytest.approx(0.1, abs=0.001)


def test_point_mass_always_returns_its_outcome():
    dist = full_distribution(np.eye(4), (1, 0, 2, 0))
    assert set(sample_outcomes(dist, 1000, seed=3)) == {(1, 0, 2, 0)}
    assert sample_outcomes(dist, 0) == []


def test_sampling_collision_free_uses_conditional(sampled):
    dist = full_distribution(sampled, (1, 0, 1, 0, 1), restrict="collision_free")
    samples = sample_outcomes(dist, 500, seed=1)
    assert all(max(t) == 1 for t in samples)


def test_sampling_rejects_unnormalized():
    dist = OutputDistribution(
        input_state=(1, 0), mode_count=2, model="broken", states=[(0, 1), (1, 0)],
        probabilities=[0.2, 0.2], raw_total=0.4,
    )
    with pytest.raises(NormalizationError):
        sample_outcomes(dist, 10)


def test_json_round_trip_keeps_outcomes(sampled):
    dist = full_distribution(sampled, (1, 0, 1, 0, 1), restrict="collision_free")
    again = OutputDistribution.from_json_dict(dist.to_json_dict())
    assert again == dist
