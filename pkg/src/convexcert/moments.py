"""Monomial bases, moment sequences, and moment/localizing matrices.

A moment sequence z assigns a value to every monomial up to degree 2s; the
associated linear functional sends a polynomial f to sum(f_alpha * z_alpha).
The moment matrix of order s has entries z indexed by sums of basis exponents,
and the localizing matrix of a weight polynomial theta folds theta's
coefficients into those sums. Positive semidefiniteness of these matrices is
what makes z look like the moments of a nonnegative measure supported where
theta >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb
from typing import Sequence

import numpy as np

from .polynomials import Exponents, Polynomial, VariableSpace, grlex_key


class MonomialBasis:
    """Canonically ordered exponent vectors of total degree <= order."""

    __slots__ = ("space", "order", "elements", "_index")

    def __init__(self, space: VariableSpace, order: int):
        if order < 0:
            raise ValueError(f"basis order must be nonnegative, got {order}")
        arity = space.arity
        elements: list[Exponents] = []
        for total in range(order + 1):
            for combo in combinations_with_replacement(range(arity), total):
                exps = [0] * arity
                for idx in combo:
                    exps[idx] += 1
                elements.append(tuple(exps))
        elements.sort(key=grlex_key)
        self.space = space
        self.order = order
        self.elements = tuple(elements)
        self._index = {e: i for i, e in enumerate(self.elements)}
        assert len(self.elements) == comb(arity + order, order)

    def __len__(self) -> int:
        return len(self.elements)

    def __getitem__(self, i: int) -> Exponents:
        return self.elements[i]

    def __iter__(self):
        return iter(self.elements)

    def index(self, exponents: Exponents) -> int:
        try:
            return self._index[tuple(exponents)]
        except KeyError:
            raise ValueError(f"monomial {exponents} not in basis of order {self.order}") from None

    def contains(self, exponents: Exponents) -> bool:
        return tuple(exponents) in self._index


def monomial_basis(space: VariableSpace, order: int) -> MonomialBasis:
    """Enumerate the full monomial basis of the space up to the given degree."""
    return MonomialBasis(space, order)


@dataclass
class MomentSequence:
    """Values z_gamma for every monomial gamma with |gamma| <= 2*order."""

    space: VariableSpace
    order: int
    entries: dict[Exponents, float] = field(default_factory=dict)

    @classmethod
    def from_atoms(
        cls,
        space: VariableSpace,
        order: int,
        points: Sequence[Sequence[float]],
        weights: Sequence[float],
    ) -> "MomentSequence":
        """Moments of the atomic measure sum_i weights[i] * delta(points[i])."""
        pts = np.asarray(points, dtype=float)
        wts = np.asarray(weights, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != space.arity:
            raise ValueError(f"expected atom coordinates of shape (t, {space.arity})")
        if wts.shape != (pts.shape[0],):
            raise ValueError("one weight per atom required")
        entries: dict[Exponents, float] = {}
        for exps in monomial_basis(space, 2 * order):
            powers = np.prod(pts ** np.asarray(exps, dtype=float), axis=1)
            entries[exps] = float(wts @ powers)
        return cls(space, order, entries)

    def value(self, exponents: Exponents) -> float:
        try:
            return self.entries[tuple(exponents)]
        except KeyError:
            raise ValueError(
                f"moment {exponents} missing (sequence holds degrees <= {2 * self.order})"
            ) from None


def riesz_apply(z: MomentSequence, f: Polynomial) -> float:
    """Apply the linear functional of z to f: sum of coefficient * moment."""
    if f.space != z.space:
        raise ValueError("polynomial lives in a different space than the moments")
    if f.degree > 2 * z.order:
        raise ValueError(f"degree {f.degree} exceeds available moments (<= {2 * z.order})")
    return sum(coeff * z.value(exps) for exps, coeff in f.terms.items())


def moment_matrix(z: MomentSequence, order: int) -> np.ndarray:
    """Moment matrix of the given order; needs moments up to degree 2*order."""
    if order > z.order:
        raise ValueError(f"order {order} exceeds moment sequence order {z.order}")
    basis = monomial_basis(z.space, order)
    m = len(basis)
    out = np.empty((m, m))
    for i in range(m):
        ei = basis[i]
        for j in range(i, m):
            value = z.value(tuple(a + b for a, b in zip(ei, basis[j])))
            out[i, j] = value
            out[j, i] = value
    return out


def localizing_matrix(z: MomentSequence, theta: Polynomial, order: int) -> np.ndarray:
    """Localizing matrix of theta at the given order.

    Entry (i, j) is sum over theta's terms of coeff * z[e_i + e_j + e_theta];
    with theta = 1 this reduces to the moment matrix. Needs moments up to
    degree 2*order + deg(theta).
    """
    if theta.space != z.space:
        raise ValueError("weight polynomial lives in a different space than the moments")
    basis = monomial_basis(z.space, order)
    m = len(basis)
    out = np.empty((m, m))
    for i in range(m):
        ei = basis[i]
        for j in range(i, m):
            ej = basis[j]
            value = 0.0
            for exps, coeff in theta.terms.items():
                value += coeff * z.value(tuple(a + b + c for a, b, c in zip(ei, ej, exps)))
            out[i, j] = value
            out[j, i] = value
    return out
