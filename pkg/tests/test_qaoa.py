from functools import reduce

import numpy as np
import pytest

from robustq.errors import SizeCapError
from robustq.qaoa import (
    QaoaParams,
    apply_cost,
    default_beta_grid,
    default_gamma_grid,
    diagonal_energies,
    expectation,
    grid_search,
    normalized,
    qaoa_layers,
    qaoa_sample,
    qaoa_state,
)
from robustq.qubo import QuboProblem, evaluate, index_to_bits

from conftest import random_qubo

X = np.array([[0, 1], [1, 0]], dtype=complex)
I2 = np.eye(2, dtype=complex)


def dense_reference(q, params):
    """Explicit 2^n x 2^n unitaries; variable 0 is the rightmost Kronecker factor."""
    n = q.num_vars
    energies = np.array([evaluate(q, index_to_bits(b, n)) for b in range(1 << n)])
    psi = np.ones(1 << n, dtype=complex) / np.sqrt(1 << n)
    for beta, gamma in zip(params.betas, params.gammas):
        cost = np.diag(np.exp(-1j * gamma * energies))
        rx = np.cos(beta) * I2 - 1j * np.sin(beta) * X
        mixer = reduce(np.kron, [rx] * n)
        psi = mixer @ (cost @ psi)
    return psi


class TestParams:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            QaoaParams((0.1, 0.2), (0.3,))

    def test_non_finite(self):
        with pytest.raises(ValueError):
            QaoaParams((np.inf,), (0.0,))


class TestState:
    def test_zero_angles_uniform(self, rng):
        q = random_qubo(rng, 4)
        psi = qaoa_state(q, QaoaParams((0.0,), (0.0,)))
        np.testing.assert_allclose(np.abs(psi) ** 2, np.full(16, 1 / 16), atol=1e-15)

    @pytest.mark.parametrize("gamma", [0.0, 0.4, 2.0])
    def test_single_qubit_closed_form(self, gamma):
        # |+> -> phase on |1> -> X rotation by pi/2 swaps the two amplitudes up to -i
        q = QuboProblem.from_terms(1, {0: 1.0})
        psi = qaoa_state(q, QaoaParams((np.pi / 2,), (gamma,)))
        expected = -1j * np.array([np.exp(-1j * gamma), 1.0]) / np.sqrt(2)
        np.testing.assert_allclose(psi, expected, atol=1e-15)

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("p", [1, 2])
    def test_matches_dense_reference(self, seed, p):
        rng = np.random.default_rng(seed)
        q = random_qubo(rng, 3, integer=False)
        params = QaoaParams(rng.uniform(0, np.pi, p), rng.uniform(0, 2 * np.pi, p))
        np.testing.assert_allclose(qaoa_state(q, params), dense_reference(q, params), atol=1e-9, rtol=0)

    def test_asymmetric_qubo_fixes_bit_order(self):
        # only variable 0 carries energy, so the result pins the LSB convention
        q = QuboProblem.from_terms(2, {0: 1.0})
        params = QaoaParams((0.3,), (0.9,))
        np.testing.assert_allclose(qaoa_state(q, params), dense_reference(q, params), atol=1e-12)

    def test_norm_after_every_layer(self, rng):
        q = random_qubo(rng, 6, integer=False)
        params = QaoaParams(rng.uniform(0, np.pi, 4), rng.uniform(0, 2 * np.pi, 4))
        layers = list(qaoa_layers(q, params))
        assert len(layers) == 4
        for psi in layers:
            assert abs(1 - np.sum(np.abs(psi) ** 2)) <= 1e-10

    def test_cost_layer_is_phase_only(self, rng):
        q = random_qubo(rng, 5, integer=False)
        psi = qaoa_state(q, QaoaParams((0.7,), (1.1,)))
        after = apply_cost(psi.copy(), diagonal_energies(q), 2.3)
        np.testing.assert_allclose(np.abs(after), np.abs(psi), atol=1e-15)

    def test_size_cap(self):
        with pytest.raises(SizeCapError):
            qaoa_state(QuboProblem.from_terms(21), QaoaParams((0.0,), (0.0,)))


class TestExpectation:
    def test_zero_angles_give_mean_energy(self, rng):
        q = random_qubo(rng, 5, integer=False)
        mean = np.mean([evaluate(q, index_to_bits(b, 5)) for b in range(32)])
        assert expectation(q, QaoaParams((0.0,), (0.0,))) == pytest.approx(mean, abs=1e-12)

    def test_constant_qubo(self, rng):
        q = QuboProblem.from_terms(3, offset=2.5)
        for beta, gamma in rng.uniform(0, 6, (5, 2)):
            assert expectation(q, QaoaParams((beta,), (gamma,))) == pytest.approx(2.5, abs=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_gamma_periodicity_integer_energies(self, seed):
        rng = np.random.default_rng(seed)
        q = random_qubo(rng, 4)
        beta, gamma = rng.uniform(0, np.pi), rng.uniform(0, 2 * np.pi)
        a = expectation(q, QaoaParams((beta,), (gamma,)))
        b = expectation(q, QaoaParams((beta,), (gamma + 2 * np.pi,)))
        assert a == pytest.approx(b, abs=1e-9)

    def test_monte_carlo_agreement(self, rng):
        q = random_qubo(rng, 3, integer=False)
        params = QaoaParams((0.6,), (1.3,))
        shots = 10**5
        ss = qaoa_sample(q, params, shots, seed=4)
        e = np.array([energy for _, energy, _ in ss])
        m = np.array([mult for _, _, mult in ss])
        mean = float(e @ m) / shots
        var = float(((e - mean) ** 2) @ m) / (shots - 1)
        assert abs(mean - expectation(q, params)) < 4 * np.sqrt(var / shots)


class TestGridSearch:
    def test_single_point(self, rng):
        q = random_qubo(rng, 3)
        best, land = grid_search(q, [0.4], [1.7])
        assert best == QaoaParams((0.4,), (1.7,))
        assert land.values.shape == (1, 1)

    def test_flat_landscape_picks_first_point(self):
        q = QuboProblem.from_terms(3, offset=1.0)
        best, land = grid_search(q, [0.3, 0.6], [0.2, 0.5, 0.9])
        assert best == QaoaParams((0.3,), (0.2,))
        np.testing.assert_allclose(land.values, 1.0, atol=1e-12)

    def test_entries_match_expectation_and_best_is_min(self, rng):
        q = random_qubo(rng, 4, integer=False)
        betas, gammas = default_beta_grid(6), default_gamma_grid(7)
        best, land = grid_search(q, betas, gammas)
        for i, b in enumerate(betas):
            for j, g in enumerate(gammas):
                assert land.values[i, j] == pytest.approx(expectation(q, QaoaParams((b,), (g,))), abs=1e-12)
        assert expectation(q, best) == pytest.approx(land.values.min(), abs=1e-12)

    def test_origin_is_mean_energy(self, rng):
        q = random_qubo(rng, 6)
        mean = np.mean([evaluate(q, index_to_bits(b, 6)) for b in range(64)])
        _, land = grid_search(q, default_beta_grid(), default_gamma_grid())
        assert land.values[0, 0] == pytest.approx(mean, abs=1e-9)

    def test_default_grids(self):
        b, g = default_beta_grid(), default_gamma_grid()
        assert b.size == 32 and g.size == 64
        assert b[0] == 0 and b[-1] < np.pi and g[-1] < 2 * np.pi
        assert b[1] == pytest.approx(np.pi / 32)

    def test_errors(self, rng):
        q = random_qubo(rng, 2)
        with pytest.raises(ValueError):
            grid_search(q, [], [0.0])
        with pytest.raises(ValueError):
            grid_search(q, [0.0], [0.0], p=2)

    def test_landscape_csv_is_row_major(self):
        q = QuboProblem.from_terms(1, {0: 1.0})
        _, land = grid_search(q, [0.0, 0.5], [0.0, 1.0, 2.0])
        lines = land.to_csv().splitlines()
        assert lines[0] == "beta,gamma,expectation"
        assert len(lines) == 7
        assert [tuple(map(float, l.split(",")[:2])) for l in lines[1:4]] == [(0.0, 0.0), (0.0, 1.0), (0.0, 2.0)]


class TestSample:
    def test_uniform_frequencies(self):
        q = QuboProblem.from_terms(2, {0: 1.0, 1: -2.0}, {(0, 1): 0.5})
        shots = 10**5
        counts = qaoa_sample(q, QaoaParams((0.0,), (0.0,)), shots, seed=0).counts()
        assert len(counts) == 4
        for c in counts.values():
            assert abs(c / shots - 0.25) <= 4 * np.sqrt(0.25 * 0.75 / shots)

    def test_zero_shots(self):
        ss = qaoa_sample(QuboProblem.from_terms(2), QaoaParams((0.1,), (0.2,)), 0, 0)
        assert ss.total_shots == 0

    def test_hundred_shots_round_trip(self, rng):
        q = random_qubo(rng, 4)
        ss = qaoa_sample(q, QaoaParams((0.3,), (0.8,)), 100, seed=2)
        assert ss.total_shots == 100
        for bits, energy, _ in ss:
            assert energy == pytest.approx(evaluate(q, bits), abs=1e-9)
        assert ss == qaoa_sample(q, QaoaParams((0.3,), (0.8,)), 100, seed=2)


def test_normalized_scales_by_largest_coefficient():
    q = QuboProblem.from_terms(2, {0: 4.0, 1: -8.0}, {(0, 1): 2.0}, 3.0)
    nq, scale = normalized(q)
    assert scale == 8.0
    assert nq.linear == {0: 0.5, 1: -1.0}
    assert nq.quadratic == {(0, 1): 0.25}
