"""Normal-form bookkeeping and the homological-equation solver.

The normal form is N = sum_n Omega_n |q_n|^2 with Omega_n = ||n||^2 +
Vbreve + Vhat_n.  One elimination step solves {N, F} + R0 + R1 = [R0] +
[R1] termwise: resonant keys (k = k' = 0) are kept as the new normal-form
increment, nonresonant keys with small enough tail weight are divided by
the small divisor sum (k - k') . Omega, and heavy-tailed keys are
deferred to the next remainder untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import SmallDivisorError, ValidationError
from .hamiltonian import Hamiltonian, linear_combine, norm, poisson_bracket
from .lattice import MI_ZERO, mi_degree, mi_signed, sorted_system, weight


@dataclass(frozen=True)
class NormalForm:
    """Frequency data of the quadratic normal form.

    ``v_hat`` maps every truncated mode to its n-dependent frequency part;
    after each freezing step it coincides with the sampled omega, while
    ``cum_shift`` tracks the decaying corrections absorbed into the
    parameter choice ``v_star`` so far.
    """

    v_breve: float
    v_hat: dict
    modes: tuple
    cum_shift: dict = field(default_factory=dict)
    v_star: dict = field(default_factory=dict)

    def omega_tangential(self, mode) -> float:
        """Omega_n = ||n||^2 + Vbreve + Vhat_n (derived, never stored)."""
        return (sum(c * c for c in mode) + self.v_breve
                + self.v_hat.get(mode, 0.0))

    def as_hamiltonian(self, params) -> Hamiltonian:
        """N = sum_n Omega_n q_n qbar_n over the truncated mode set."""
        items = []
        for m in self.modes:
            items.append(((), ((m, 1),), ((m, 1),), (),
                          complex(self.omega_tangential(m))))
        return Hamiltonian.from_terms(params, items)


@dataclass
class HomologicalSolution:
    F0: Hamiltonian
    F1: Hamiltonian
    resonant0: Hamiltonian
    resonant1: Hamiltonian
    deferred0: Hamiltonian
    deferred1: Hamiltonian
    stats: dict


def divisor(k, k_bar, nf: NormalForm) -> float:
    """The small divisor sum_n (k_n - k'_n) Omega_n.

    The Vbreve contribution enters multiplied by the mass sum, so it
    cancels identically for mass-conserving keys.
    """
    signed = mi_signed(k, k_bar)
    total = 0.0
    mass = 0
    for mode, e in signed.items():
        total += e * (sum(c * c for c in mode) + nf.v_hat.get(mode, 0.0))
        mass += e
    return total + mass * nf.v_breve


def tail_weight(a, k, k_bar, jmodes, lattice) -> float:
    """sum_{i>=3} w(n_i*) over the multiplicity-expanded sorted system."""
    system = sorted_system(a, k, k_bar, jmodes)
    return sum(weight(m, lattice) for m in system[2:])


RHO0 = (3.0 - 2.0 * math.sqrt(2.0)) / 100.0


def truncation_budget(s: int, eps0: float, rho0: float = RHO0) -> float:
    """B_s = 2 (s+4) ln^2(s+4) / rho0 * ln(1 / eps_{s+1})."""
    if s < 0:
        raise ValidationError("step index must be >= 0")
    if not 0 < eps0 < 1:
        raise ValidationError("eps0 must lie in (0,1)")
    eps_next = eps0 ** (1.5 ** (s + 1))
    return (2.0 * (s + 4) * math.log(s + 4) ** 2 / rho0
            * math.log(1.0 / eps_next))


def solve_homological(R0: Hamiltonian, R1: Hamiltonian, nf: NormalForm,
                      guard: float, B: float) -> HomologicalSolution:
    """Solve {N,F} + R0 + R1 = [R0] + [R1] termwise.

    R0 and R1 must be in their J-collected class forms.  Raises
    SmallDivisorError when a required divisor falls below ``guard``.
    """
    if guard <= 0:
        raise ValidationError("guard must be positive")
    params = R0.params
    lattice = params.lattice
    min_div = math.inf
    solved = 0
    quad_diag = []
    deferred_mass = 0.0

    def split_one(R):
        f_terms = {}
        res_terms = {}
        def_terms = {}
        nonlocal min_div, solved, deferred_mass
        for key, c in R.terms.items():
            a, k, kb, j = key
            if k == MI_ZERO and kb == MI_ZERO:
                res_terms[key] = c
                continue
            if mi_degree(k) + mi_degree(kb) == 2 and k != kb:
                quad_diag.append(key)
            if tail_weight(a, k, kb, j, lattice) > B:
                def_terms[key] = c
                deferred_mass += abs(c)
                continue
            D = divisor(k, kb, nf)
            if abs(D) < guard:
                raise SmallDivisorError(
                    f"divisor {D:.3e} below guard {guard:.3e} "
                    f"for k={k}, k_bar={kb}", key=key, divisor=D)
            min_div = min(min_div, abs(D))
            solved += 1
            f_terms[key] = c / (1j * D)
        return (Hamiltonian(params, f_terms, validate=False),
                Hamiltonian(params, res_terms, validate=False),
                Hamiltonian(params, def_terms, validate=False))

    F0, res0, def0 = split_one(R0)
    F1, res1, def1 = split_one(R1)
    stats = {
        "min_divisor": min_div if solved else math.inf,
        "solved_terms": solved,
        "deferred_terms": len(def0.terms) + len(def1.terms),
        "deferred_mass": deferred_mass,
        "quad_nonresonant": quad_diag,
    }
    return HomologicalSolution(F0, F1, res0, res1, def0, def1, stats)


def homological_residual(sol: HomologicalSolution, R0, R1,
                         nf: NormalForm, rho: float = 0.0):
    """Star norm of {N,F} + R0' + R1' - [R0] - [R1] and the base norm.

    Primes denote the eliminated parts.  {N,F} is evaluated through the
    generic Poisson bracket, which pins the solver's phase convention
    independently of the divisor formula.
    """
    params = R0.params
    N = nf.as_hamiltonian(params)
    F = linear_combine(1.0, sol.F0, 1.0, sol.F1)
    elim0 = linear_combine(1.0, R0, -1.0,
                           linear_combine(1.0, sol.resonant0, 1.0,
                                          sol.deferred0))
    elim1 = linear_combine(1.0, R1, -1.0,
                           linear_combine(1.0, sol.resonant1, 1.0,
                                          sol.deferred1))
    residual = linear_combine(1.0, poisson_bracket(N, F), 1.0,
                              linear_combine(1.0, elim0, 1.0, elim1))
    base = norm(linear_combine(1.0, R0, 1.0, R1), "star_rho", rho)
    return norm(residual, "star_rho", rho), base
