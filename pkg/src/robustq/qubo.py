"""QUBO and Ising representations, penalty fragments and an exact enumeration oracle.

A QUBO is stored sparse::

    E(x) = offset + sum_i linear[i] x_i + sum_{i<j} quadratic[i, j] x_i x_j

with x_i in {0, 1}.  The Ising form uses the substitution x_i = (1 - s_i) / 2,
so spin s_i = +1 corresponds to x_i = 0.

Bitstrings are plain tuples of 0/1 ints with variable 0 first.  Whenever a
bitstring is packed into an integer basis index, variable 0 is the least
significant bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionError, InfeasibleError, SizeCapError

Bitstring = tuple[int, ...]

ENUMERATION_CAP = 24
ENERGY_TOL = 1e-9
_CHUNK_BITS = 16


def index_to_bits(index: int, num_vars: int) -> Bitstring:
    return tuple((index >> i) & 1 for i in range(num_vars))


def bits_to_index(bits: Sequence[int]) -> int:
    return sum(int(b) << i for i, b in enumerate(bits))


def index_block(start: int, stop: int, num_vars: int) -> np.ndarray:
    """Bit matrix of shape (stop - start, num_vars) for basis indices start..stop-1."""
    idx = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(num_vars, dtype=np.int64)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def bitstring_str(bits: Sequence[int]) -> str:
    return "".join(str(int(b)) for b in bits)


def parse_bitstring(text: str) -> Bitstring:
    if any(c not in "01" for c in text):
        raise ValueError(f"not a 0/1 string: {text!r}")
    return tuple(int(c) for c in text)


@dataclass(frozen=True)
class QuboProblem:
    """Sparse quadratic pseudo-Boolean objective.

    Use :meth:`from_terms` to build one from unnormalized term maps; the
    constructor itself only validates.
    """

    num_vars: int
    linear: Mapping[int, float] = field(default_factory=dict)
    quadratic: Mapping[tuple[int, int], float] = field(default_factory=dict)
    offset: float = 0.0
    labels: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        n = self.num_vars
        if n < 0:
            raise ValueError("num_vars must be nonnegative")
        if not self.labels:
            object.__setattr__(self, "labels", {f"x{i}": i for i in range(n)})
        for i, c in self.linear.items():
            if not 0 <= i < n:
                raise ValueError(f"linear index {i} out of range for {n} variables")
            if not math.isfinite(c):
                raise ValueError(f"non-finite linear coefficient at {i}")
        for (i, j), c in self.quadratic.items():
            if not 0 <= i < j < n:
                raise ValueError(f"quadratic key {(i, j)} must satisfy 0 <= i < j < {n}")
            if not math.isfinite(c):
                raise ValueError(f"non-finite quadratic coefficient at {(i, j)}")
        if not math.isfinite(self.offset):
            raise ValueError("non-finite offset")
        if sorted(self.labels.values()) != list(range(n)):
            raise ValueError("labels must map bijectively onto 0..num_vars-1")

    @classmethod
    def from_terms(
        cls,
        num_vars: int,
        linear: Mapping[int, float] | None = None,
        quadratic: Mapping[tuple[int, int], float] | None = None,
        offset: float = 0.0,
        labels: Mapping[str, int] | None = None,
    ) -> "QuboProblem":
        """Normalize term maps: (j, i) keys are flipped, (i, i) keys fold into
        the linear part, duplicates are summed and zero coefficients dropped."""
        lin: dict[int, float] = {}
        quad: dict[tuple[int, int], float] = {}
        for i, c in (linear or {}).items():
            lin[int(i)] = lin.get(int(i), 0.0) + float(c)
        for (i, j), c in (quadratic or {}).items():
            i, j = int(i), int(j)
            if i == j:
                lin[i] = lin.get(i, 0.0) + float(c)
                continue
            key = (i, j) if i < j else (j, i)
            quad[key] = quad.get(key, 0.0) + float(c)
        lin = {i: c for i, c in sorted(lin.items()) if c != 0.0}
        quad = {k: c for k, c in sorted(quad.items()) if c != 0.0}
        return cls(num_vars, lin, quad, float(offset), dict(labels or {}))

    def evaluate(self, x: Sequence[int]) -> float:
        return evaluate(self, x)

    def linear_vector(self) -> np.ndarray:
        vec = np.zeros(self.num_vars)
        for i, c in self.linear.items():
            vec[i] = c
        return vec

    def upper_matrix(self) -> np.ndarray:
        """Strictly upper-triangular coupling matrix (linear terms excluded)."""
        mat = np.zeros((self.num_vars, self.num_vars))
        for (i, j), c in self.quadratic.items():
            mat[i, j] = c
        return mat

    def energies(self, bits: np.ndarray) -> np.ndarray:
        """Vectorized energies for a (m, num_vars) 0/1 matrix."""
        bits = np.asarray(bits, dtype=float)
        if bits.ndim != 2 or bits.shape[1] != self.num_vars:
            raise DimensionError(
                f"expected bit matrix with {self.num_vars} columns, got shape {bits.shape}"
            )
        out = self.offset + bits @ self.linear_vector()
        if self.quadratic:
            out = out + np.einsum("mi,mi->m", bits @ self.upper_matrix(), bits)
        return out

    def all_energies(self, cap: int = ENUMERATION_CAP) -> np.ndarray:
        """Energies of every basis state, indexed with variable 0 as the LSB."""
        n = self.num_vars
        if n > cap:
            raise SizeCapError(f"{n} variables exceeds the enumeration cap of {cap}")
        total = 1 << n
        out = np.empty(total)
        step = 1 << _CHUNK_BITS
        for start in range(0, total, step):
            stop = min(total, start + step)
            out[start:stop] = self.energies(index_block(start, stop, n))
        return out

    def scaled(self, factor: float) -> "QuboProblem":
        return QuboProblem.from_terms(
            self.num_vars,
            {i: c * factor for i, c in self.linear.items()},
            {k: c * factor for k, c in self.quadratic.items()},
            self.offset * factor,
            self.labels,
        )

    def max_abs_coefficient(self) -> float:
        coeffs = [abs(c) for c in self.linear.values()]
        coeffs += [abs(c) for c in self.quadratic.values()]
        return max(coeffs, default=0.0)

    def same_layout(self, other: "QuboProblem") -> bool:
        return self.num_vars == other.num_vars and dict(self.labels) == dict(other.labels)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "num_vars": self.num_vars,
            "offset": self.offset,
            "linear": {str(i): c for i, c in self.linear.items()},
            "quadratic": {f"{i},{j}": c for (i, j), c in self.quadratic.items()},
            "labels": dict(self.labels),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "QuboProblem":
        quad = {}
        for key, c in data.get("quadratic", {}).items():
            i, j = key.split(",")
            quad[(int(i), int(j))] = c
        return cls.from_terms(
            int(data["num_vars"]),
            {int(i): c for i, c in data.get("linear", {}).items()},
            quad,
            float(data.get("offset", 0.0)),
            {str(k): int(v) for k, v in data.get("labels", {}).items()},
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "QuboProblem":
        return cls.from_dict(json.loads(text))


def evaluate(q: QuboProblem, x: Sequence[int]) -> float:
    """Energy of a single assignment."""
    if len(x) != q.num_vars:
        raise DimensionError(f"bitstring of length {len(x)} for {q.num_vars} variables")
    energy = q.offset
    for i, c in q.linear.items():
        if x[i]:
            energy += c
    for (i, j), c in q.quadratic.items():
        if x[i] and x[j]:
            energy += c
    return float(energy)


class QuboBuilder:
    """Mutable accumulator for assembling a QUBO from fragments."""

    def __init__(self, num_vars: int = 0):
        self.num_vars = num_vars
        self.linear: dict[int, float] = {}
        self.quadratic: dict[tuple[int, int], float] = {}
        self.offset = 0.0
        self.labels: dict[str, int] = {}

    def new_var(self, label: str) -> int:
        if label in self.labels:
            raise ValueError(f"duplicate label {label!r}")
        idx = self.num_vars
        self.labels[label] = idx
        self.num_vars += 1
        return idx

    def add_linear(self, i: int, c: float):
        self.linear[i] = self.linear.get(i, 0.0) + c

    def add_quadratic(self, i: int, j: int, c: float):
        if i == j:
            self.add_linear(i, c)
            return
        key = (i, j) if i < j else (j, i)
        self.quadratic[key] = self.quadratic.get(key, 0.0) + c

    def add_offset(self, c: float):
        self.offset += c

    def add(self, fragment: QuboProblem, scale: float = 1.0):
        if fragment.num_vars > self.num_vars:
            raise DimensionError("fragment references variables the builder does not have")
        for i, c in fragment.linear.items():
            self.add_linear(i, scale * c)
        for (i, j), c in fragment.quadratic.items():
            self.add_quadratic(i, j, scale * c)
        self.offset += scale * fragment.offset

    def build(self) -> QuboProblem:
        labels = self.labels if len(self.labels) == self.num_vars else None
        return QuboProblem.from_terms(
            self.num_vars, self.linear, self.quadratic, self.offset, labels
        )


# -- Ising ---------------------------------------------------------------


@dataclass(frozen=True)
class IsingProblem:
    """H(s) = offset + sum_i h_i s_i + sum_{i<j} J_ij s_i s_j, s_i in {-1, +1}."""

    h: tuple[float, ...]
    couplings: Mapping[tuple[int, int], float] = field(default_factory=dict)
    offset: float = 0.0

    def __post_init__(self):
        n = len(self.h)
        for i, j in self.couplings:
            if not 0 <= i < j < n:
                raise ValueError(f"coupling key {(i, j)} must satisfy 0 <= i < j < {n}")

    @property
    def num_spins(self) -> int:
        return len(self.h)


def ising_energy(ising: IsingProblem, spins: Sequence[int]) -> float:
    if len(spins) != ising.num_spins:
        raise DimensionError(f"{len(spins)} spins for {ising.num_spins}-spin model")
    energy = ising.offset
    for i, hi in enumerate(ising.h):
        energy += hi * spins[i]
    for (i, j), c in ising.couplings.items():
        energy += c * spins[i] * spins[j]
    return float(energy)


def to_ising(q: QuboProblem) -> IsingProblem:
    h = [0.0] * q.num_vars
    offset = q.offset
    for i, a in q.linear.items():
        h[i] -= a / 2
        offset += a / 2
    couplings = {}
    for (i, j), b in q.quadratic.items():
        couplings[(i, j)] = b / 4
        h[i] -= b / 4
        h[j] -= b / 4
        offset += b / 4
    return IsingProblem(tuple(h), couplings, offset)


def from_ising(ising: IsingProblem, labels: Mapping[str, int] | None = None) -> QuboProblem:
    # s = 1 - 2x
    n = ising.num_spins
    linear = {i: -2 * hi for i, hi in enumerate(ising.h)}
    offset = ising.offset + sum(ising.h)
    quad = {}
    for (i, j), c in ising.couplings.items():
        quad[(i, j)] = 4 * c
        linear[i] -= 2 * c
        linear[j] -= 2 * c
        offset += c
    return QuboProblem.from_terms(n, linear, quad, offset, labels)


def spins_from_bits(x: Sequence[int]) -> tuple[int, ...]:
    return tuple(1 - 2 * int(b) for b in x)


# -- penalty fragments ---------------------------------------------------


def penalty_linear_eq(
    coeffs: Mapping[int, float], rhs: float, weight: float, num_vars: int | None = None
) -> QuboProblem:
    """Fragment equal to weight * (sum_i a_i x_i - rhs)**2 on every assignment."""
    if not weight > 0:
        raise ValueError("penalty weight must be positive")
    items = [(int(i), float(a)) for i, a in coeffs.items() if a != 0.0]
    n = num_vars if num_vars is not None else max((i for i, _ in items), default=-1) + 1
    linear: dict[int, float] = {}
    quad: dict[tuple[int, int], float] = {}
    for k, (i, a) in enumerate(items):
        # x_i**2 = x_i
        linear[i] = linear.get(i, 0.0) + weight * (a * a - 2 * rhs * a)
        for j, b in items[k + 1:]:
            quad[(i, j)] = quad.get((i, j), 0.0) + weight * 2 * a * b
    return QuboProblem.from_terms(n, linear, quad, weight * rhs * rhs)


def penalty_and_gadget(
    x: int, y: int, z: int, weight: float, num_vars: int | None = None
) -> QuboProblem:
    """Fragment vanishing exactly when z = x * (1 - y), otherwise >= weight.

    Standard AND penalty x*w - 2*x*z - 2*w*z + 3*z with w = 1 - y substituted.
    """
    if len({x, y, z}) != 3:
        raise ValueError(f"gadget variables must be distinct, got {(x, y, z)}")
    if not weight > 0:
        raise ValueError("penalty weight must be positive")
    n = num_vars if num_vars is not None else max(x, y, z) + 1
    linear = {x: weight, z: weight}
    quad = {(x, y): -weight, (x, z): -2 * weight, (y, z): 2 * weight}
    return QuboProblem.from_terms(n, linear, quad)


# -- exact oracle --------------------------------------------------------


def enumerate_optimum(
    q: QuboProblem,
    feasible: Callable[[Bitstring], bool] | None = None,
    cap: int = ENUMERATION_CAP,
) -> tuple[float, list[Bitstring]]:
    """Exact minimum over all (feasible) assignments and every minimizer.

    Ties are resolved with an absolute tolerance of ``ENERGY_TOL``; the
    returned minimizers are sorted lexicographically.
    """
    n = q.num_vars
    energies = q.all_energies(cap)
    order = np.argsort(energies, kind="stable")
    best = None
    argmins: list[Bitstring] = []
    for idx in order:
        e = energies[idx]
        if best is not None and e > best + ENERGY_TOL:
            break
        bits = index_to_bits(int(idx), n)
        if feasible is not None and not feasible(bits):
            continue
        if best is None:
            best = e
        argmins.append(bits)
    if best is None:
        raise InfeasibleError("no assignment satisfies the feasibility predicate")
    argmins.sort()
    return min(evaluate(q, b) for b in argmins), argmins


# -- sample sets ---------------------------------------------------------


@dataclass(frozen=True)
class SampleSet:
    """Distinct bitstrings with energies and multiplicities.

    Entries are kept sorted by (energy, bitstring).
    """

    entries: tuple[tuple[Bitstring, float, int], ...] = ()
    num_vars: int = 0

    @property
    def total_shots(self) -> int:
        return sum(m for _, _, m in self.entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def bitstrings(self) -> list[Bitstring]:
        return [b for b, _, _ in self.entries]

    def lowest(self) -> tuple[Bitstring, float, int]:
        return self.entries[0]

    @classmethod
    def from_counts(cls, q: QuboProblem, counts: Mapping[Bitstring, int]) -> "SampleSet":
        items = [(tuple(int(v) for v in b), int(m)) for b, m in counts.items() if m > 0]
        for b, _ in items:
            if len(b) != q.num_vars:
                raise DimensionError(f"bitstring of length {len(b)} for {q.num_vars} variables")
        if items:
            energies = q.energies(np.array([b for b, _ in items], dtype=np.uint8))
        else:
            energies = []
        entries = sorted(
            ((b, float(e), m) for (b, m), e in zip(items, energies)),
            key=lambda t: (t[1], t[0]),
        )
        return cls(tuple(entries), q.num_vars)

    @classmethod
    def from_rows(cls, q: QuboProblem, rows: Iterable[Sequence[int]]) -> "SampleSet":
        """Deduplicate raw per-shot bit rows into a sample set."""
        counts: dict[Bitstring, int] = {}
        for row in rows:
            key = tuple(int(v) for v in row)
            counts[key] = counts.get(key, 0) + 1
        return cls.from_counts(q, counts)

    def counts(self) -> dict[Bitstring, int]:
        return {b: m for b, _, m in self.entries}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bitstring", "energy", "multiplicity"])
        for b, e, m in self.entries:
            writer.writerow([bitstring_str(b), repr(e), m])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, num_vars: int) -> "SampleSet":
        rows = list(csv.DictReader(io.StringIO(text)))
        entries = tuple(
            (parse_bitstring(r["bitstring"]), float(r["energy"]), int(r["multiplicity"]))
            for r in rows
        )
        return cls(entries, num_vars)
