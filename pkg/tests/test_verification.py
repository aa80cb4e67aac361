import math

import numpy as np
import pytest

from nlskam import ValidationError, verify_norm_lemma, verify_scalar_lemma
from nlskam.lattice import conservation_check
from nlskam.verification import (
    NORM_LEMMAS,
    SCALAR_LEMMAS,
    _golden_max,
    random_hamiltonian,
    random_state,
    run_suite,
)


def test_golden_max_finds_known_maximum():
    # x e^{-x} has max 1/e at x = 1
    got = _golden_max(lambda x: x * math.exp(-x), 0.0, 10.0)
    assert got == pytest.approx(1.0 / math.e, rel=1e-10)


def test_unknown_lemma_rejected():
    with pytest.raises(ValidationError):
        verify_scalar_lemma("nope")
    with pytest.raises(ValidationError):
        verify_norm_lemma("nope")
    with pytest.raises(ValidationError):
        verify_scalar_lemma("f_max", params={"delta": 2.0})


def test_scalar_lemmas_pass_at_defaults():
    for name in SCALAR_LEMMAS:
        case = verify_scalar_lemma(name)
        assert case.violations == 0, (name, case.worst_margin)


def test_g_max_is_tight():
    # the closed form is the exact maximum, so the margin is ~0
    case = verify_scalar_lemma("g_max", params={"p": 3.0, "delta": 0.25})
    assert abs(case.worst_margin) <= 1e-9


def test_log_sum_dual_report():
    case = verify_scalar_lemma("log_sum", params={"delta": 0.4})
    assert "statement_holds" in case.notes and "proof_holds" in case.notes
    assert case.notes["rhs_proof"] >= case.notes["rhs_statement"]
    assert case.violations == 0


def test_norm_lemmas_pass(rng):
    for name in NORM_LEMMAS:
        case = verify_norm_lemma(name, samples=25, seed=3)
        assert case.violations == 0, (name, case.worst_margin)


def test_random_hamiltonian_conserves(params, rng):
    for _ in range(20):
        H = random_hamiltonian(params, rng)
        for (_, k, kb, _) in H.terms:
            assert conservation_check(k, kb) == (True, True)
        # colliding draws accumulate, so magnitudes are bounded by the
        # number of requested terms, not by the unit disk
        for c in H.terms.values():
            assert abs(c) <= 6.0 + 1e-12


def test_random_hamiltonian_deterministic(params):
    H1 = random_hamiltonian(params, np.random.default_rng(5))
    H2 = random_hamiltonian(params, np.random.default_rng(5))
    assert H1.terms == H2.terms


def test_random_state_in_unit_ball(params, rng):
    x = random_state(params, rng, rho=0.5)
    for m, v in x.items():
        assert abs(v) <= math.exp(-0.5 * params.weight(m)) + 1e-15


def test_suite_csv_rows(rng):
    cases = run_suite(samples_norm=5, seed=1)
    assert len(cases) == len(SCALAR_LEMMAS) + len(NORM_LEMMAS)
    for c in cases:
        row = c.csv_row()
        assert row.count(",") == 5
        assert c.violations == 0
