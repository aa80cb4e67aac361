"""Command-line front door: build, run, check, measure, report.

Subcommands: build-nls, kam-run, norms, bracket, dioph-check, measure,
verify-lemmas, tl-check.  Exit codes: 0 success, 1 validation error, 2
small-divisor error, 3 capacity/divergence error.

The default seed comes from the NLSKAM_SEED environment variable; a
``--config`` file of ``key = value`` lines overrides any flag.  CSV
outputs start with a schema header line and carry every float at 17
significant digits, so identical configs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from .diophantine import (
    MEASURE_CSV_SCHEMA,
    DiophParams,
    check_frequency,
    frequency_dumps,
    frequency_loads,
    resonance_measure,
    sample_strong_frequency,
)
from .driver import STEP_CSV_SCHEMA, KamConfig, run, tl_defect
from .errors import (
    CapacityError,
    DivergenceRiskError,
    SmallDivisorError,
    ValidationError,
)
from .hamiltonian import (
    Hamiltonian,
    log_bracket_constant_factor,
    norm,
    poisson_bracket,
)
from .nls import NlsConfig, build_cubic_nls
from .verification import (
    SUITE_CSV_SCHEMA,
    run_suite,
    verify_norm_lemma,
    verify_scalar_lemma,
    NORM_LEMMAS,
    SCALAR_LEMMAS,
)

TL_CSV_SCHEMA = "t,defect_qq,defect_qqbar,defect_qbarqbar"


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _env_seed() -> int:
    return int(os.environ.get("NLSKAM_SEED", "0"))


class _Parser(argparse.ArgumentParser):
    """Argument errors surface as ValidationError (exit code 1)."""

    def error(self, message):
        raise ValidationError(message)


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _read(path) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as e:
        raise ValidationError(f"cannot read {path}: {e}") from e


def _apply_config(parser, args):
    """Override parsed flags with ``key = value`` lines from the file."""
    if not getattr(args, "config", None):
        return args
    actions = list(parser._actions)
    for act in parser._actions:
        if isinstance(act, argparse._SubParsersAction):
            sub = act.choices.get(args.command)
            if sub is not None:
                actions.extend(sub._actions)
    types = {}
    for act in actions:
        types[act.dest] = act.type or (
            (lambda s: s) if not isinstance(
                act, (argparse._StoreTrueAction,
                      argparse._StoreFalseAction)) else
            (lambda s: s.lower() in ("1", "true", "yes")))
    for line_no, raw in enumerate(_read(args.config).splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(
                f"{args.config}:{line_no}: expected key = value")
        key, _, val = line.partition("=")
        dest = key.strip().replace("-", "_")
        if dest not in types:
            raise ValidationError(
                f"{args.config}:{line_no}: unknown key {key.strip()!r}")
        setattr(args, dest, types[dest](val.strip()))
    return args


def _add_common(p):
    p.add_argument("--config", help="key = value file overriding flags")
    p.add_argument("--threads", type=int, default=1,
                   help="worker cap (results are thread-count independent)")


def _add_lattice_flags(p):
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--radius", type=int, default=2,
                   help="truncation box half-width")
    p.add_argument("--sigma", type=float, default=2.5)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--floor", type=float, default=1024.0,
                   help="weight floor constant")
    p.add_argument("--degree-cap", type=int, default=16)


def build_parser() -> _Parser:
    top = _Parser(prog="nlskam",
                  description="KAM normal-form engine for the cubic NLS")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-nls", parents=[], help="emit the truncated "
                       "cubic NLS Hamiltonian as a JSON file")
    _add_lattice_flags(p)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--sign", type=int, default=1, choices=(1, -1))
    p.add_argument("--physical-multiplicity", action="store_true")
    p.add_argument("--out", default="-")
    _add_common(p)

    p = sub.add_parser("kam-run", help="run KAM steps; emit step CSV and "
                       "per-step Hamiltonian dumps")
    _add_lattice_flags(p)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--sign", type=int, default=1, choices=(1, -1))
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--seed", type=int, default=_env_seed())
    p.add_argument("--ell-budget", type=int, default=6)
    p.add_argument("--prune-tol", type=float, default=1e-18)
    p.add_argument("--lie-order-cap", type=int, default=3)
    p.add_argument("--strict", action="store_true",
                   help="raise on any failed per-step bound")
    p.add_argument("--force", action="store_true",
                   help="continue past violated entry bounds")
    p.add_argument("--out-prefix", default="kam")
    p.add_argument("--freq", default=None,
                   help="frequency file to use instead of sampling")
    p.add_argument("--timings", action="store_true",
                   help="write real wall times (breaks byte-for-byte "
                   "reproducibility of the CSV)")
    _add_common(p)

    p = sub.add_parser("norms", help="print the three norms of a "
                       "Hamiltonian file at a given rho")
    p.add_argument("file")
    p.add_argument("--rho", type=float, default=0.0)
    _add_common(p)

    p = sub.add_parser("bracket", help="Poisson bracket of two Hamiltonian "
                       "files, with the norm-bound check")
    p.add_argument("file1")
    p.add_argument("file2")
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--delta1", type=float, default=0.004)
    p.add_argument("--delta2", type=float, default=0.004)
    p.add_argument("--out", default="-")
    _add_common(p)

    p = sub.add_parser("dioph-check", help="check a frequency file against "
                       "both strong nonresonance conditions")
    p.add_argument("file")
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--ell-budget", type=int, default=6)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--radius", type=int, default=2)
    _add_common(p)

    p = sub.add_parser("measure", help="Monte Carlo resonant-measure "
                       "estimate, one CSV row per gamma")
    p.add_argument("--gamma", type=float, action="append", default=None,
                   help="repeatable; default 0.01 0.05 0.1")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=_env_seed())
    p.add_argument("--ell-budget", type=int, default=4)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--radius", type=int, default=2)
    p.add_argument("--out", default="-")
    _add_common(p)

    p = sub.add_parser("verify-lemmas", help="run the lemma oracle suite; "
                       "one CSV row per case")
    p.add_argument("--lemma", action="append", default=None,
                   help="repeatable; default: every registered lemma")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=_env_seed())
    p.add_argument("--out", default="-")
    p.add_argument("--timings", action="store_true",
                   help="write real per-case seconds (breaks byte-for-byte "
                   "reproducibility of the CSV)")
    _add_common(p)

    p = sub.add_parser("tl-check", help="translation-defect table of the "
                       "second derivatives of a Hamiltonian file")
    p.add_argument("file")
    p.add_argument("--n", required=True, help="comma-separated mode")
    p.add_argument("--m", required=True, help="comma-separated mode")
    p.add_argument("--l", required=True, help="comma-separated direction")
    p.add_argument("--t", type=int, action="append", required=True,
                   help="repeatable translation amounts (nonzero)")
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--out", default="-")
    _add_common(p)

    return top


def _mode(text, d) -> tuple:
    try:
        mode = tuple(int(c) for c in text.split(","))
    except ValueError as e:
        raise ValidationError(f"bad mode {text!r}") from e
    if len(mode) != d:
        raise ValidationError(f"mode {text!r} has dimension {len(mode)}, "
                              f"expected {d}")
    return mode


def _nls_config(args) -> NlsConfig:
    return NlsConfig(d=args.d, mode_radius=args.radius, epsilon=args.eps,
                     sign=args.sign, sigma=args.sigma, r=args.r,
                     floor_const=args.floor, degree_cap=args.degree_cap,
                     physical_multiplicity=getattr(
                         args, "physical_multiplicity", False))


def _cmd_build_nls(args):
    H = build_cubic_nls(_nls_config(args))
    _write(args.out, H.dumps())
    return 0


def _cmd_kam_run(args):
    cfg = KamConfig(
        d=args.d, sigma=args.sigma, r=args.r, gamma=args.gamma,
        epsilon=args.eps, mode_radius=args.radius,
        degree_cap=args.degree_cap, steps=args.steps, seed=args.seed,
        ell_budget=args.ell_budget, floor_const=args.floor, sign=args.sign,
        prune_tol=args.prune_tol, lie_order_cap=args.lie_order_cap,
        strict=args.strict, force=args.force, threads=args.threads)
    omega = frequency_loads(_read(args.freq)) if args.freq else None
    reports, states = run(cfg, omega)
    if not args.timings:
        for rep in reports:
            rep.wall_time = 0.0
    lines = [STEP_CSV_SCHEMA]
    lines.extend(rep.csv_row() for rep in reports)
    _write(f"{args.out_prefix}.steps.csv", "\n".join(lines) + "\n")
    H0 = build_cubic_nls(NlsConfig(
        d=cfg.d, mode_radius=cfg.mode_radius, epsilon=cfg.epsilon,
        sign=cfg.sign, sigma=cfg.sigma, r=cfg.r,
        floor_const=cfg.floor_const, degree_cap=cfg.degree_cap))
    _write(f"{args.out_prefix}.step0.json", H0.dumps())
    for i, st in enumerate(states[1:], 1):
        total = st.R0 + st.R1 + st.R2
        _write(f"{args.out_prefix}.step{i}.json", total.dumps())
    return 0


def _cmd_norms(args):
    H = Hamiltonian.loads(_read(args.file))
    for kind in ("sup_rho", "star_rho", "plus_rho"):
        print(f"{kind} {_fmt(norm(H, kind, args.rho))}")
    return 0


def _cmd_bracket(args):
    H1 = Hamiltonian.loads(_read(args.file1))
    H2 = Hamiltonian.loads(_read(args.file2))
    B = poisson_bracket(H1, H2)
    _write(args.out, B.dumps())
    p = H1.params
    log_lhs = (math.log(norm(B, "sup_rho", args.rho))
               if not B.is_zero() else -math.inf)
    log_rhs = (log_bracket_constant_factor(p.d, p.sigma, args.delta1)
               - math.log(args.delta2))
    for H, dd in ((H1, args.delta1), (H2, args.delta2)):
        v = norm(H, "sup_rho", args.rho - dd)
        log_rhs += math.log(v) if v > 0 else -math.inf
    ok = log_lhs <= log_rhs
    print(f"log_lhs {_fmt(log_lhs)}", file=sys.stderr)
    print(f"log_rhs {_fmt(log_rhs)}", file=sys.stderr)
    print(f"bound_ok {int(ok)}", file=sys.stderr)
    return 0 if ok else 1


def _cmd_dioph_check(args):
    omega = frequency_loads(_read(args.file))
    p = DiophParams(gamma=args.gamma, d=args.d, ell_budget=args.ell_budget,
                    mode_radius=args.radius)
    violations, checked = check_frequency(omega, p)
    print(f"checked {checked}")
    print(f"violations {len(violations)}")
    for ell, which, lhs, rhs in violations[:20]:
        print(f"  condition {which}: l={ell} lhs={_fmt(lhs)} "
              f"rhs={_fmt(rhs)}")
    return 0 if not violations else 1


def _cmd_measure(args):
    gammas = args.gamma if args.gamma else [0.01, 0.05, 0.1]
    lines = [MEASURE_CSV_SCHEMA]
    for g in gammas:
        p = DiophParams(gamma=g, d=args.d, ell_budget=args.ell_budget,
                        mode_radius=args.radius)
        fraction, stderr, violations = resonance_measure(
            p, args.trials, args.seed)
        lines.append(",".join([
            _fmt(g), str(args.trials), str(violations), _fmt(fraction),
            _fmt(stderr), str(args.ell_budget), str(args.radius),
            str(args.seed)]))
    _write(args.out, "\n".join(lines) + "\n")
    return 0


def _cmd_verify_lemmas(args):
    if args.lemma:
        cases = []
        for name in args.lemma:
            if name in SCALAR_LEMMAS:
                cases.append(verify_scalar_lemma(
                    name, samples=args.samples, seed=args.seed))
            elif name in NORM_LEMMAS:
                cases.append(verify_norm_lemma(
                    name, samples=args.samples or 100, seed=args.seed))
            else:
                raise ValidationError(f"unknown lemma {name!r}")
    else:
        cases = run_suite(samples_scalar=args.samples,
                          samples_norm=args.samples or 100, seed=args.seed)
    if not args.timings:
        for c in cases:
            c.seconds = 0.0
    lines = [SUITE_CSV_SCHEMA]
    lines.extend(c.csv_row() for c in cases)
    _write(args.out, "\n".join(lines) + "\n")
    bad = sum(c.violations for c in cases)
    return 0 if bad == 0 else 1


def _cmd_tl_check(args):
    H = Hamiltonian.loads(_read(args.file))
    d = H.params.d
    rows, fitted = tl_defect(H, _mode(args.n, d), _mode(args.m, d),
                             _mode(args.l, d), args.t, rho=args.rho)
    lines = [TL_CSV_SCHEMA]
    for t, f1, f2, f3 in rows:
        lines.append(",".join([str(t), _fmt(f1), _fmt(f2), _fmt(f3)]))
    lines.append(",".join(["C"] + [_fmt(c) for c in fitted]))
    _write(args.out, "\n".join(lines) + "\n")
    return 0


_COMMANDS = {
    "build-nls": _cmd_build_nls,
    "kam-run": _cmd_kam_run,
    "norms": _cmd_norms,
    "bracket": _cmd_bracket,
    "dioph-check": _cmd_dioph_check,
    "measure": _cmd_measure,
    "verify-lemmas": _cmd_verify_lemmas,
    "tl-check": _cmd_tl_check,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config(parser, args)
        return _COMMANDS[args.command](args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SmallDivisorError as e:
        print(f"small divisor: {e}", file=sys.stderr)
        return 2
    except (CapacityError, DivergenceRiskError) as e:
        print(f"capacity: {e}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
