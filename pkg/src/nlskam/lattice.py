"""Lattice modes, multi-indices, sorted systems and log-power weights.

Modes are points of Z^d stored as plain integer tuples.  A multi-index
(exponent vector over modes) is stored in a canonical immutable form: a
tuple of (mode, exponent) pairs, sorted lexicographically by mode, with
all exponents strictly positive.  Everything downstream (norms, brackets,
serialization) relies on that canonical form being unique.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from .errors import DimensionMismatchError, ValidationError

DEFAULT_FLOOR = 1024.0

# Multi-index representing the empty exponent vector.
MI_ZERO = ()


@dataclass(frozen=True)
class LatticeParams:
    """Global lattice parameters: dimension, log power, weight floor.

    Parameters
    ----------
    d : int
        Lattice dimension.
    sigma : float
        Log power in the weight ln^sigma of the floored norm.  Must be > 2.
    floor_const : float
        Lower clamp applied to the Euclidean norm before taking logs.
        Default 2**10.  Must be >= 21 so the log-superadditivity mechanism
        behind the gap inequality can apply (the threshold has to exceed e^3).
    """

    d: int
    sigma: float
    floor_const: float = DEFAULT_FLOOR

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError(f"dimension must be >= 1, got {self.d}")
        if not self.sigma > 2:
            raise ValidationError(f"sigma must be > 2, got {self.sigma}")
        if not self.floor_const >= 21:
            raise ValidationError(
                f"floor_const must be >= 21, got {self.floor_const}")


def check_mode(n, d):
    if len(n) != d:
        raise DimensionMismatchError(
            f"mode {n!r} has dimension {len(n)}, expected {d}")


def mode_norms(n, p: LatticeParams):
    """Return (euclid, angle, floor) norms of a mode.

    euclid = ||n||, angle = max(1, ||n||), floor = max(floor_const, ||n||).
    """
    check_mode(n, p.d)
    euclid = math.sqrt(sum(c * c for c in n))
    return euclid, max(1.0, euclid), max(p.floor_const, euclid)


@lru_cache(maxsize=None)
def _weight_cached(n, sigma, floor_const):
    euclid = math.sqrt(sum(c * c for c in n))
    return math.log(max(floor_const, euclid)) ** sigma


def weight(n, p: LatticeParams) -> float:
    """The log-power weight ln^sigma of the floored mode norm."""
    return _weight_cached(tuple(n), p.sigma, p.floor_const)


def angle_norm(n) -> float:
    """max(1, ||n||)."""
    return max(1.0, math.sqrt(sum(c * c for c in n)))


# ---------------------------------------------------------------------------
# Multi-index helpers (canonical tuple-of-pairs form)
# ---------------------------------------------------------------------------

def mi(entries) -> tuple:
    """Build a canonical multi-index from a dict or iterable of pairs.

    Zero exponents are dropped; negative exponents are rejected.
    """
    if isinstance(entries, dict):
        items = entries.items()
    else:
        items = entries
    acc = {}
    for mode, e in items:
        mode = tuple(mode)
        acc[mode] = acc.get(mode, 0) + e
    for mode, e in acc.items():
        if e < 0:
            raise ValidationError(f"negative exponent {e} at mode {mode}")
    return tuple(sorted((m, e) for m, e in acc.items() if e > 0))


def mi_single(mode, e=1) -> tuple:
    return ((tuple(mode), e),) if e else MI_ZERO


def mi_get(m: tuple, mode) -> int:
    for mm, e in m:
        if mm == mode:
            return e
    return 0


def mi_add(*ms) -> tuple:
    acc = {}
    for m in ms:
        for mode, e in m:
            acc[mode] = acc.get(mode, 0) + e
    return tuple(sorted((m, e) for m, e in acc.items() if e > 0))


def mi_degree(m: tuple) -> int:
    return sum(e for _, e in m)


def mi_support(m: tuple):
    return frozenset(mode for mode, _ in m)


def mi_signed(pos: tuple, neg: tuple) -> dict:
    """Combine a (positive, negative) multi-index pair into a signed map."""
    acc = {}
    for mode, e in pos:
        acc[mode] = acc.get(mode, 0) + e
    for mode, e in neg:
        acc[mode] = acc.get(mode, 0) - e
    return {m: v for m, v in acc.items() if v != 0}


# ---------------------------------------------------------------------------
# Sorted systems and conservation laws
# ---------------------------------------------------------------------------

def _mode_sort_key(mode):
    # Descending Euclidean norm; ties broken by ascending lexicographic
    # order on coordinates so that equal-norm runs are deterministic.
    return (-sum(c * c for c in mode), mode)


def sorted_system(a: tuple, k: tuple, k_bar: tuple, jmodes=()) -> tuple:
    """Multiplicity-expanded mode list of a monomial, largest norm first.

    Mode n appears 2*a_n + k_n + k'_n times, plus twice per occurrence in
    ``jmodes`` (a J-factor at m counts like an extra action exponent).
    """
    if len(jmodes) > 2:
        raise ValidationError("at most two J-factors per term")
    counts = {}
    for m, e in a:
        counts[m] = counts.get(m, 0) + 2 * e
    for src in (k, k_bar):
        for m, e in src:
            counts[m] = counts.get(m, 0) + e
    for m in jmodes:
        m = tuple(m)
        counts[m] = counts.get(m, 0) + 2
    out = []
    for m in sorted(counts, key=_mode_sort_key):
        out.extend([m] * counts[m])
    return tuple(out)


def conservation_check(k: tuple, k_bar: tuple):
    """Return (mass, momentum) conservation flags for the pair (k, k')."""
    signed = mi_signed(k, k_bar)
    mass = sum(signed.values()) == 0
    if signed:
        d = len(next(iter(signed)))
        mom = [0] * d
        for mode, e in signed.items():
            for i, c in enumerate(mode):
                mom[i] += e * c
        momentum = all(v == 0 for v in mom)
    else:
        momentum = True
    return mass, momentum


def momentum_defect(k: tuple, k_bar: tuple, d: int):
    """The vector sum of (k - k') weighted by the modes."""
    mom = [0] * d
    for mode, e in mi_signed(k, k_bar).items():
        for i, c in enumerate(mode):
            mom[i] += e * c
    return tuple(mom)


def weighted_gap(a: tuple, k: tuple, k_bar: tuple, p: LatticeParams) -> float:
    """Weighted gap S - 2*L1 - tail/2 of a momentum-conserving monomial.

    S is the multiplicity-weighted sum of weights, L1 the weight of the
    largest mode, and the tail sums the weights of the third-largest mode
    onward.  Momentum conservation guarantees the value is >= 0.
    """
    _, mom = conservation_check(k, k_bar)
    if not mom:
        raise ValidationError(
            "gap inequality requires momentum conservation")
    system = sorted_system(a, k, k_bar)
    if not system:
        return 0.0
    ws = [weight(m, p) for m in system]
    return sum(ws) - 2.0 * ws[0] - 0.5 * sum(ws[2:])
