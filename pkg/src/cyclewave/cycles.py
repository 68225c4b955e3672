"""Symmetric subcycles of the heteroclinic network.

The network has a connection from each single-species state to every state
ell steps ahead in the ring except the immediate predecessor (ell = n-1).
Fixing a step ell and following it partitions the species indices into
gcd(ell, n) cycles of length n/gcd(ell, n), the cosets of the subgroup
generated by ell in Z_n.  Counting those over all admissible steps and
telling when a proper sub-alliance (a cycle avoiding some species) exists
are pure number theory; everything here is exact integer arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError

__all__ = [
    "SubcycleSet",
    "alliance_possible",
    "enumerate_subcycles",
    "full_length_cycle_count",
    "subcycle_count",
]

_MAX_N = 10**6


def _check_n(n) -> int:
    if not isinstance(n, int) or isinstance(n, bool) or n < 3:
        raise ValidationError(f"need an integer species count n >= 3, got {n!r}")
    if n > _MAX_N:
        raise ValidationError(f"species count {n} above the supported bound {_MAX_N}")
    return n


@dataclass(frozen=True)
class SubcycleSet:
    """All subcycles generated by one step size.

    cycles holds gcd(ell, n) tuples of 1-based species indices, each of
    length m, consecutive entries ell apart mod n, canonicalized to start at
    the least index.
    """

    n: int
    ell: int
    m: int
    cycles: tuple[tuple[int, ...], ...]

    def as_json_dict(self) -> dict:
        return {"n": self.n, "ell": self.ell, "m": self.m,
                "cycles": [list(c) for c in self.cycles]}


def subcycle_count(n: int) -> int:
    """Number of distinct symmetric subcycles: sum of gcd(ell, n), ell = 1..n-2."""
    n = _check_n(n)
    return sum(math.gcd(ell, n) for ell in range(1, n - 1))


def enumerate_subcycles(n: int, ell: int) -> SubcycleSet:
    """The gcd(ell, n) cycles traced by repeatedly stepping ell species ahead."""
    n = _check_n(n)
    if not isinstance(ell, int) or isinstance(ell, bool):
        raise ValidationError(f"step must be an integer, got {ell!r}")
    if ell == n - 1:
        raise ValidationError(
            "step n-1 is rejected: the network has no connection from a "
            "species state to its immediate predecessor")
    if not 1 <= ell <= n - 2:
        raise ValidationError(f"step must lie in [1, {n - 2}], got {ell}")
    g = math.gcd(ell, n)
    m = n // g
    cycles = []
    for start in range(g):
        cycles.append(tuple((start + k * ell) % n + 1 for k in range(m)))
    return SubcycleSet(n=n, ell=ell, m=m, cycles=tuple(cycles))


def full_length_cycle_count(n: int) -> int:
    """Subcycles visiting all n species: the steps coprime to n, minus ell = n-1."""
    n = _check_n(n)
    phi = sum(1 for k in range(1, n + 1) if math.gcd(k, n) == 1)
    return phi - 1


def alliance_possible(n: int) -> bool:
    """Whether a proper sub-alliance exists: some step shares a factor with n."""
    n = _check_n(n)
    return any(n % p == 0 for p in range(2, int(math.isqrt(n)) + 1))
