"""Scenario-dependent objective contract consumed by the robust engine."""

from __future__ import annotations

import numpy as np

from .errors import SizeCapError
from .qubo import ENUMERATION_CAP, index_block

FEASIBLE_SET_CAP = 1 << 22


class ScenarioObjective:
    """f(x, xi) over bitstring candidates x and scenario vectors xi.

    Subclasses implement :meth:`values` and :meth:`feasible_mask`; both work on
    whole (m, num_vars) bit matrices.  :meth:`feasible_set` defaults to a
    brute-force scan and can be overridden with a structured enumeration.
    """

    num_vars: int = 0

    def values(self, bits: np.ndarray, scenarios: np.ndarray) -> np.ndarray:
        """Return an (m, K) matrix of objective values."""
        raise NotImplementedError

    def feasible_mask(self, bits: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def decompose(self, bits: np.ndarray, scenarios: np.ndarray):
        """Optional (det_cost (m,), mismatch (m, K)) split; None when not meaningful."""
        return None

    def feasible_set(self, cap: int = ENUMERATION_CAP) -> np.ndarray:
        n = self.num_vars
        if n > cap:
            raise SizeCapError(f"{n} variables exceeds the enumeration cap of {cap}")
        total = 1 << n
        step = 1 << 16
        keep = []
        for start in range(0, total, step):
            block = index_block(start, min(total, start + step), n)
            keep.append(block[self.feasible_mask(block)])
        return np.concatenate(keep) if keep else np.zeros((0, n), dtype=np.uint8)

    def is_feasible(self, x) -> bool:
        return bool(self.feasible_mask(np.asarray([x], dtype=np.uint8))[0])


def check_feasible_set_size(count: int, cap: int = FEASIBLE_SET_CAP):
    if count > cap:
        raise SizeCapError(f"feasible set of {count} candidates exceeds the cap of {cap}")
