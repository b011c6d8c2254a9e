import itertools

import numpy as np
import pytest

from robustq.qubo import QuboProblem


def random_qubo(rng, n, integer=True, density=0.7, offset=True):
    draw = (lambda: float(rng.integers(-9, 10))) if integer else (lambda: float(rng.normal()))
    linear = {i: draw() for i in range(n)}
    quad = {
        (i, j): draw()
        for i in range(n)
        for j in range(i + 1, n)
        if rng.random() < density
    }
    return QuboProblem.from_terms(n, linear, quad, draw() if offset else 0.0)


def naive_energy(q, x):
    """Double-loop reference over a dense symmetric-free coefficient table."""
    n = q.num_vars
    table = [[0.0] * n for _ in range(n)]
    for i, c in q.linear.items():
        table[i][i] = c
    for (i, j), c in q.quadratic.items():
        table[i][j] = c
    total = q.offset
    for i in range(n):
        for j in range(i, n):
            total += table[i][j] * x[i] * x[j]
    return total


def all_bitstrings(n):
    return [tuple(b) for b in itertools.product((0, 1), repeat=n)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
