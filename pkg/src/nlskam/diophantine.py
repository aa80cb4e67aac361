"""Frequency box, strong nonresonance conditions, sampling, measure.

Frequencies live in the product box Pi = prod_n [0, 1/<n>].  A frequency
is "strongly nonresonant" when |||sum_n l_n w_n||| (distance to the
nearest integer) clears two families of product lower bounds: the first
with factor gamma and per-mode decay 1/(1+|l_n|^3 <n>^(d+4)); the second,
active when the third-largest mode of l is strictly smaller than the
second-largest, with prefactor gamma^5/100 and a tenth-power product over
small modes with <n>^(d+7).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .lattice import _mode_sort_key, angle_norm

MEASURE_CSV_SCHEMA = (
    "gamma,trials,violations,fraction,stderr,ell_budget,mode_radius,seed")


@dataclass(frozen=True)
class DiophParams:
    gamma: float
    d: int
    ell_budget: int
    mode_radius: int

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValidationError(f"gamma must lie in [0,1), got {self.gamma}")
        if self.ell_budget < 1:
            raise ValidationError("ell_budget must be >= 1")

    def box_modes(self):
        rng = range(-self.mode_radius, self.mode_radius + 1)
        modes = [()]
        for _ in range(self.d):
            modes = [m + (c,) for m in modes for c in rng]
        return sorted(modes)


def dist_to_integers(x: float) -> float:
    """|||x||| = distance from x to the nearest integer, in [0, 1/2]."""
    f = abs(x - round(x))
    return min(f, 0.5)


def enumerate_ells(modes, budget):
    """All signed integer vectors l != 0 with |l| <= budget.

    Ordered by |l| first, then lexicographically in the per-mode values
    over the sorted mode list.  Each l is a tuple of (mode, value) pairs
    with nonzero values only.
    """
    modes = sorted(tuple(m) for m in modes)

    def gen(total):
        def walk(idx, left, acc):
            if idx == len(modes):
                if left == 0 and acc:
                    yield tuple(acc)
                return
            for v in range(-left, left + 1):
                if v == 0:
                    yield from walk(idx + 1, left, acc)
                else:
                    acc.append((modes[idx], v))
                    yield from walk(idx + 1, left - abs(v), acc)
                    acc.pop()
        yield from walk(0, total, [])

    result = []
    for total in range(1, budget + 1):
        result.extend(gen(total))
    return result


def ell_sorted_norms(ell):
    """Euclidean norms of the multiplicity-expanded modes of l, descending."""
    expanded = []
    for mode, v in ell:
        expanded.extend([mode] * abs(v))
    expanded.sort(key=_mode_sort_key)
    return [math.sqrt(sum(c * c for c in m)) for m in expanded]


def condition2_applies(ell) -> bool:
    """True when ||n3*(l)|| < ||n2*(l)|| (missing entries count as 0)."""
    norms = ell_sorted_norms(ell)
    if len(norms) < 2:
        return False
    n2 = norms[1]
    n3 = norms[2] if len(norms) >= 3 else 0.0
    return n3 < n2


def dioph_rhs(ell, p: DiophParams, which: int) -> float:
    """Right-hand side of nonresonance condition 1 or 2 for the vector l."""
    if not ell:
        raise ValidationError("l must be nonzero")
    if which == 1:
        prod = 1.0
        for mode, v in ell:
            prod *= 1.0 / (1.0 + abs(v) ** 3 * angle_norm(mode) ** (p.d + 4))
        return p.gamma * prod
    if which == 2:
        norms = ell_sorted_norms(ell)
        n3 = norms[2] if len(norms) >= 3 else -1.0
        prod = 1.0
        for mode, v in ell:
            if math.sqrt(sum(c * c for c in mode)) <= n3:
                prod *= (1.0 / (1.0 + abs(v) ** 3
                                * angle_norm(mode) ** (p.d + 7))) ** 10
        return (p.gamma ** 5 / 100.0) * prod
    raise ValidationError(f"which must be 1 or 2, got {which}")


def check_frequency(omega: dict, p: DiophParams):
    """Test both conditions over all l with |l| <= ell_budget.

    Returns (violations, checked) where violations is a list of
    (ell, which, lhs, rhs) for every failed inequality.
    """
    ells = enumerate_ells(omega.keys(), p.ell_budget)
    violations = []
    for ell in ells:
        lhs = dist_to_integers(sum(v * omega[mode] for mode, v in ell))
        rhs1 = dioph_rhs(ell, p, 1)
        if lhs < rhs1:
            violations.append((ell, 1, lhs, rhs1))
        if condition2_applies(ell):
            rhs2 = dioph_rhs(ell, p, 2)
            if lhs < rhs2:
                violations.append((ell, 2, lhs, rhs2))
    return violations, len(ells)


def _mode_rng(seed, mode):
    return np.random.default_rng(
        (int(seed), *(int(c) + 2 ** 31 for c in mode)))


def sample_frequency(modes, seed) -> dict:
    """One frequency draw: omega_n uniform on [0, 1/<n>].

    The generator is keyed by (seed, n) so the draw at a mode does not
    depend on enumeration order.
    """
    out = {}
    for m in sorted(tuple(mm) for mm in modes):
        out[m] = float(_mode_rng(seed, m).uniform(0.0, 1.0 / angle_norm(m)))
    return out


def _ell_table(modes, p: DiophParams):
    """(ells, L matrix, per-ell rhs) for vectorized condition checks.

    The right-hand sides depend only on l, so they are computed once and
    reused across candidate draws.
    """
    ells = enumerate_ells(modes, p.ell_budget)
    idx = {m: i for i, m in enumerate(modes)}
    L = np.zeros((len(ells), len(modes)))
    rhs = np.zeros(len(ells))
    for j, ell in enumerate(ells):
        for mode, v in ell:
            L[j, idx[mode]] = v
        r = dioph_rhs(ell, p, 1)
        if condition2_applies(ell):
            r = max(r, dioph_rhs(ell, p, 2))
        rhs[j] = r
    return ells, L, rhs


def sample_strong_frequency(modes, p: DiophParams, seed, max_tries=1000):
    """First strongly nonresonant draw from successive sub-seeds."""
    modes = sorted(tuple(m) for m in modes)
    _, L, rhs = _ell_table(modes, p)
    for t in range(max_tries):
        omega = sample_frequency(modes, (int(seed) << 20) + t)
        x = L @ np.array([omega[m] for m in modes])
        if (np.abs(x - np.rint(x)) >= rhs).all():
            return omega, t
    raise ValidationError(
        f"no strongly nonresonant frequency found in {max_tries} tries")


def frequency_dumps(omega: dict) -> str:
    """JSON document for a frequency map; modes serialized as int lists."""
    import json
    entries = [[list(m), float(v)] for m, v in sorted(omega.items())]
    return json.dumps({"format": "nlskam-frequency", "version": 1,
                       "omega": entries}, indent=1)


def frequency_loads(text: str) -> dict:
    import json
    doc = json.loads(text)
    if doc.get("format") != "nlskam-frequency":
        raise ValidationError("not a frequency document")
    return {tuple(int(c) for c in m): float(v) for m, v in doc["omega"]}


def resonance_measure(p: DiophParams, trials: int, seed):
    """Monte Carlo estimate of the resonant-set measure.

    Returns (fraction, stderr, violations) where fraction is the share of
    sampled frequencies violating at least one condition.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    modes = p.box_modes()
    draws = np.empty((trials, len(modes)))
    for i, m in enumerate(modes):
        draws[:, i] = _mode_rng(seed, m).uniform(
            0.0, 1.0 / angle_norm(m), size=trials)
    _, L, rhs = _ell_table(modes, p)
    x = draws @ L.T
    lhs = np.abs(x - np.rint(x))
    bad = (lhs < rhs[None, :]).any(axis=1)
    violations = int(bad.sum())
    fraction = violations / trials
    stderr = math.sqrt(max(fraction * (1.0 - fraction), 1e-300) / trials)
    return fraction, stderr, violations
