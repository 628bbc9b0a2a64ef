"""Buckingham-pi candidate generation from a unit (dimension) matrix.

Exponents are handled exactly with :class:`fractions.Fraction`; the public
results are small integer vectors.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Mapping, Optional, Sequence

import numpy as np

# Base-dimension exponents (L, T) of the LDC variables.
LDC_UNITS: dict[str, tuple[int, int]] = {
    "w": (1, 0),
    "d": (1, 0),
    "U": (1, -1),
    "Ustar": (1, -1),
}
LDC_OUTPUT = ("Dl", (2, -1))
LDC_INPUTS = ("w", "d", "U", "Ustar")


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class PiGroup:
    """A product of variable powers, e.g. ``{"w": 1, "d": -1}`` for w/d.

    ``exponents`` is stored as a sorted tuple of ``(name, power)`` pairs with
    zero powers dropped, so equal groups compare and hash equal.  The empty
    group is the constant 1.
    """

    exponents: tuple = ()
    output: Optional[str] = None  # dependent-variable symbol for output groups

    @classmethod
    def from_map(cls, exps: Mapping[str, float], output: Optional[str] = None) -> "PiGroup":
        items = [(k, int(v) if float(v).is_integer() else float(v)) for k, v in exps.items() if v != 0]
        return cls(tuple(sorted(items)), output)

    def as_dict(self) -> dict:
        return dict(self.exponents)

    @property
    def is_constant(self) -> bool:
        return not self.exponents

    @property
    def name(self) -> str:
        if self.is_constant:
            return "1"
        exps = self.as_dict()
        order = [v for v in ("Dl",) + LDC_INPUTS if v in exps] + sorted(
            v for v in exps if v not in ("Dl",) + LDC_INPUTS
        )
        num = [_power_text(v, exps[v]) for v in order if exps[v] > 0]
        den = [_power_text(v, -exps[v]) for v in order if exps[v] < 0]
        top = "*".join(num) if num else "1"
        if not den:
            return top
        bottom = den[0] if len(den) == 1 else "(" + "*".join(den) + ")"
        return f"{top}/{bottom}"

    def evaluate(self, values: Mapping[str, object]):
        """Product of variable powers; works on scalars or numpy arrays."""
        result = 1.0
        for var, p in self.exponents:
            x = values[var]
            result = result * (np.asarray(x, dtype=float) ** p if not np.isscalar(x) else float(x) ** p)
        return result

    def to_json(self) -> dict:
        out = {"exponents": self.as_dict(), "name": self.name}
        if self.output:
            out["output"] = self.output
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "PiGroup":
        return cls.from_map(obj["exponents"], obj.get("output"))

    def __str__(self) -> str:
        return self.name


def _power_text(var: str, p) -> str:
    return var if p == 1 else f"{var}^{p}"


CONSTANT = PiGroup()


@dataclass(frozen=True)
class CandidateSet:
    inputs: tuple
    outputs: tuple

    def to_json(self) -> dict:
        return {
            "inputs": [g.to_json() for g in self.inputs],
            "outputs": [g.to_json() for g in self.outputs],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "CandidateSet":
        return cls(
            tuple(PiGroup.from_json(g) for g in obj["inputs"]),
            tuple(PiGroup.from_json(g) for g in obj["outputs"]),
        )


def unit_matrix(units: Mapping[str, Sequence[int]], variables: Sequence[str]) -> list[list[int]]:
    """Rows are base dimensions, columns are ``variables``."""
    m = len(next(iter(units.values())))
    return [[int(units[v][i]) for v in variables] for i in range(m)]


def _rref(matrix: Sequence[Sequence]) -> tuple[list[list[Fraction]], list[int]]:
    a = [[Fraction(x) for x in row] for row in matrix]
    rows = len(a)
    cols = len(a[0]) if rows else 0
    pivots = []
    r = 0
    for c in range(cols):
        pivot = next((i for i in range(r, rows) if a[i][c] != 0), None)
        if pivot is None:
            continue
        a[r], a[pivot] = a[pivot], a[r]
        pv = a[r][c]
        a[r] = [x / pv for x in a[r]]
        for i in range(rows):
            if i != r and a[i][c] != 0:
                f = a[i][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    return a, pivots


def _primitive(vec: Sequence[Fraction]) -> tuple[int, ...]:
    den = reduce(lambda x, y: x * y // math.gcd(x, y), (f.denominator for f in vec), 1)
    ints = [int(f * den) for f in vec]
    g = reduce(math.gcd, (abs(i) for i in ints), 0) or 1
    ints = [i // g for i in ints]
    lead = next((i for i in ints if i != 0), 0)
    if lead < 0:
        ints = [-i for i in ints]
    return tuple(ints)


def nullspace_exponents(matrix: Sequence[Sequence[int]]) -> list[tuple[int, ...]]:
    """Integer basis of ``{x : matrix @ x = 0}``.

    One vector per free column of the reduced row-echelon form, scaled to
    primitive integers with a positive leading entry.  A zero matrix yields
    the identity basis (every variable is already dimensionless).
    """
    if not matrix or not matrix[0]:
        raise DimensionError("empty unit matrix")
    n = len(matrix[0])
    reduced, pivots = _rref(matrix)
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for f in free:
        vec = [Fraction(0)] * n
        vec[f] = Fraction(1)
        for row, p in enumerate(pivots):
            vec[p] = -reduced[row][f]
        basis.append(_primitive(vec))
    return basis


def particular_solution(matrix: Sequence[Sequence[int]], target: Sequence[int]) -> list[Fraction]:
    """A solution ``p`` of ``matrix @ p = target`` with zeros on free columns."""
    n = len(matrix[0])
    aug = [list(row) + [t] for row, t in zip(matrix, target)]
    reduced, pivots = _rref(aug)
    if n in pivots:
        raise DimensionError("output unit is not expressible by the inputs")
    p = [Fraction(0)] * n
    for row, c in enumerate(pivots):
        p[c] = reduced[row][n]
    return p


def output_normalizers(
    matrix: Sequence[Sequence[int]],
    output_unit: Sequence[int],
    variables: Sequence[str] = LDC_INPUTS,
    output: str = "Dl",
    exponent_range: tuple[int, int] = (-1, 1),
) -> list[PiGroup]:
    """All dimensionless output groups ``y / prod(x_j ** p_j)``.

    ``p`` ranges over the particular solution plus integer combinations of
    the nullspace basis, restricted to integer exponents within
    ``exponent_range``.  Groups are returned in descending lexicographic
    order of the normalizer exponents (``w*U`` before ``d*Ustar``).
    """
    lo, hi = exponent_range
    p0 = particular_solution(matrix, output_unit)
    basis = nullspace_exponents(matrix)
    n = len(variables)
    reduced, pivots = _rref(matrix)
    free = [c for c in range(n) if c not in pivots]

    # Each basis vector is nonzero on exactly one free column, which bounds
    # its integer multiplier directly.
    ranges = []
    for vec, f in zip(basis, free):
        step = vec[f]
        ks = sorted([Fraction(lo - p0[f], step), Fraction(hi - p0[f], step)])
        ranges.append(range(math.ceil(ks[0]), math.floor(ks[1]) + 1))

    found = set()
    for ks in itertools.product(*ranges):
        p = [p0[j] + sum(k * vec[j] for k, vec in zip(ks, basis)) for j in range(n)]
        if all(x.denominator == 1 and lo <= x <= hi for x in (Fraction(v) for v in p)):
            found.add(tuple(int(x) for x in p))
    groups = []
    for p in sorted(found, reverse=True):
        exps = {output: 1}
        exps.update({v: -e for v, e in zip(variables, p) if e})
        groups.append(PiGroup.from_map(exps, output=output))
    return groups


def input_groups(
    matrix: Sequence[Sequence[int]], variables: Sequence[str] = LDC_INPUTS, with_constant: bool = True
) -> list[PiGroup]:
    groups = [PiGroup.from_map(dict(zip(variables, vec))) for vec in nullspace_exponents(matrix)]
    if with_constant:
        groups.append(CONSTANT)
    return groups


def candidate_set(
    units: Mapping[str, Sequence[int]] = LDC_UNITS,
    output: tuple[str, Sequence[int]] = LDC_OUTPUT,
    exponent_range: tuple[int, int] = (-1, 1),
) -> CandidateSet:
    """Dimensionless input and output candidates for a unit table."""
    variables = tuple(units)
    m = unit_matrix(units, variables)
    return CandidateSet(
        inputs=tuple(input_groups(m, variables)),
        outputs=tuple(output_normalizers(m, output[1], variables, output[0], exponent_range)),
    )


def normalizer(group: PiGroup) -> PiGroup:
    """The dimensional part divided out of an output group (``Dl/(w*U)`` -> ``w*U``)."""
    exps = {k: -v for k, v in group.exponents if k != group.output}
    return PiGroup.from_map(exps)


def evaluate_group(group: PiGroup, sample) -> float:
    """Value of ``group`` at one sample (any object with named attributes)."""
    values = {var: getattr(sample, var) for var, _ in group.exponents}
    return float(group.evaluate(values))


def group_dimension(group: PiGroup, units: Mapping[str, Sequence[int]]) -> tuple[int, ...]:
    m = len(next(iter(units.values())))
    dim = [0] * m
    for var, p in group.exponents:
        for i in range(m):
            dim[i] += units[var][i] * p
    return tuple(dim)
