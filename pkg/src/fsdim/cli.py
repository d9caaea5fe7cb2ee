"""Command-line surface: analyze digit files, run constructions, verify.

Exit codes are a stable contract: 0 success (a budget-exhausted
construction is a warning, not an error), 1 verification failure,
2 usage or configuration error.  Every command is deterministic given
its flags and seed, and every CSV starts with a comment line recording
the resolved configuration.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import random
import sys
import tempfile
from fractions import Fraction
from typing import Optional, Sequence

from .base_arith import DigitWord, read_digit_file, write_digit_file
from .blockstats import dimension_estimate, entropy_profile
from .constructor import (
    ConstructionParams,
    ExhaustiveSearch,
    NoCandidateError,
    SampledSearch,
    check_requirements,
    monitor_summary,
    run_construction,
    write_trace_csv,
)
from .discrepancy import (
    DEFAULT_N,
    DiscrepancyParams,
    calibrate,
    star_discrepancy,
    star_discrepancy_brute,
)
from .expsum import (
    a_m,
    a_m_naive,
    certificate_gamma,
    certificate_t_range,
    check_sin_lower_bound,
    eta_constant,
    weyl_entropy_certificate,
)
from .schedule import ScaledGrowth, Schedule, read_plan_file

__all__ = ["main"]


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _atomic_text(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# analyze


def _checkpoint_grid(n: int) -> list[int]:
    # roughly geometric, always ending at the full length
    points = {n}
    step = n
    while step > 16:
        step //= 2
        points.add(step)
    return sorted(points)


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        word = read_digit_file(args.digit_file)
    except (OSError, ValueError) as exc:
        return _fail(f"cannot read digit file: {exc}", 2)
    if not word.digits:
        return _fail("digit file is empty", 2)
    bases = args.base or [word.base]
    top = max(word.digits)
    for base in bases:
        if base <= top:
            return _fail(
                f"file holds digit {top}, too large for declared base {base}", 2)
    checkpoints = args.checkpoints or _checkpoint_grid(len(word))
    if checkpoints[-1] > len(word):
        return _fail(
            f"checkpoint {checkpoints[-1]} beyond file length {len(word)}", 2)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.digit_file))[0]
    for base in bases:
        reread = DigitWord(base, word.digits)
        profile = entropy_profile(reread, args.lmax, checkpoints)
        estimate = dimension_estimate(profile)
        header = (
            f"# fsdim analyze {args.digit_file} base={base} lmax={args.lmax}"
            f" checkpoints={','.join(str(c) for c in checkpoints)}\n"
        )
        buf = io.StringIO()
        profile.write_csv(buf)
        path = os.path.join(out_dir, f"{stem}_profile_base{base}.csv")
        _atomic_text(path, header + buf.getvalue())
        print(f"base {base}: dimension estimate {estimate:.6f}"
              f" (finite-prefix estimate, not a limit); profile -> {path}")
    return 0


# ---------------------------------------------------------------------------
# construct


def cmd_construct(args: argparse.Namespace) -> int:
    try:
        plan = read_plan_file(args.plan)
    except (OSError, ValueError) as exc:
        return _fail(f"invalid plan: {exc}", 2)
    if args.mode == "sampled":
        mode = SampledSearch(samples=args.samples, seed=args.seed)
    else:
        mode = ExhaustiveSearch()
    try:
        params = ConstructionParams(
            tolerance=args.tolerance,
            transition_l=args.transition_l,
            transition_l2=args.transition_l,
            transition_margin=args.margin,
            weyl_gamma=args.weyl_gamma,
            min_first_digits=args.min_digits,
            min_second_digits=args.min_digits,
            step_budget=args.budget,
            t_cap=args.t_cap,
        )
    except ValueError as exc:
        return _fail(str(exc), 2)
    try:
        trace = run_construction(plan, args.stages, mode, params)
    except NoCandidateError as exc:
        return _fail(f"candidate search failed: {exc}", 2)
    except ValueError as exc:
        return _fail(str(exc), 2)

    os.makedirs(args.out, exist_ok=True)
    config = (
        f"fsdim construct plan={args.plan} stages={args.stages} mode={args.mode}"
        f" samples={args.samples} seed={args.seed} tolerance={args.tolerance}"
        f" min_digits={args.min_digits} budget={args.budget}"
    )
    write_trace_csv(trace, os.path.join(args.out, "trace.csv"), comment=config)

    requirements = {}
    for bounds in trace.stages:
        if bounds.p2 is None:
            _warn(f"stage {bounds.k} incomplete; digits not exported")
            continue
        requirements[bounds.k] = check_requirements(trace, bounds.k)
        word = trace.digits_for_stage(bounds.k)
        path = os.path.join(args.out, f"digits_stage{bounds.k}_base{bounds.v}.txt")
        write_digit_file(path, word)
        print(f"stage {bounds.k}: {len(word)} base-{bounds.v} digits -> {path}")

    summary = {"config": config}
    summary.update(monitor_summary(trace, requirements or None))
    _atomic_text(os.path.join(args.out, "monitors.json"),
                 json.dumps(summary, indent=2) + "\n")

    for k, verdicts in requirements.items():
        for v in verdicts:
            if not v.passed and not v.vacuous:
                _warn(f"stage {k} requirement {v.name} failed:"
                      f" deviation {v.deviation:.6f} > {v.threshold:.6f}")
    if trace.budget_exhausted:
        _warn("step budget exhausted before the last stage finished")
    print(f"{len(trace.steps)} steps; monitors -> {os.path.join(args.out, 'monitors.json')}")
    return 0


# ---------------------------------------------------------------------------
# verify


def _suite_viete() -> list[tuple[str, bool, str]]:
    err = abs(eta_constant(40) - 2.0 / math.pi)
    return [("viete-40-terms", err < 1e-8, f"|product - 2/pi| = {err:.3e}")]


def _suite_sin_bound(seed: int) -> list[tuple[str, bool, str]]:
    rng = random.Random(seed)
    violations = 0
    for _ in range(10_000):
        n = rng.randint(2, 50)
        x = rng.uniform(-1.0, 1.0)
        while not abs(x) < 1.0:
            x = rng.uniform(-1.0, 1.0)
        if not check_sin_lower_bound(n, x):
            violations += 1
    return [("sin-lower-bound-sweep", violations == 0,
             f"{violations} violations in 10000 samples")]


def _suite_am_oracle(seed: int) -> list[tuple[str, bool, str]]:
    rng = random.Random(seed)
    worst = 0.0
    for _ in range(50):
        m = rng.randint(1, 6)
        bases = tuple(rng.choice((2, 3, 4, 5)) for _ in range(m))
        sched = Schedule(bases, ScaledGrowth(8, 4))
        x = Fraction(rng.randint(0, 2**30 - 1), 2**30)
        worst = max(worst, abs(a_m(x, m, sched) - a_m_naive(x, m, sched)))
    return [("am-incremental-vs-naive", worst <= 1e-9, f"max |diff| = {worst:.3e}")]


def _suite_discrepancy_oracle(seed: int) -> list[tuple[str, bool, str]]:
    rng = random.Random(seed)
    worst = 0.0
    for _ in range(100):
        n = rng.randint(1, 200)
        points = [Fraction(rng.randint(0, 10**6 - 1), 10**6) for _ in range(n)]
        worst = max(worst, abs(star_discrepancy(points) - star_discrepancy_brute(points)))
    return [("star-discrepancy-vs-brute", worst <= 1e-12, f"max |diff| = {worst:.3e}")]


def _suite_weyl_certificate() -> list[tuple[str, bool, str]]:
    checks = []
    # full multiplicative orbit of 2 mod a prime: every average is exactly
    # -1/(D-1), so the certificate passes right at its threshold
    eps = 0.5
    dmin = int(1.0 / certificate_gamma(eps)) + 2
    d = _next_prime_with_primitive_root_two(dmin)
    ok, report = weyl_entropy_certificate(Fraction(1, d), 2, eps, d - 1)
    peak = max(abs(v) for v in report.averages.values())
    checks.append(("certificate-passes-prime-orbit", ok,
                   f"D={d} T'={certificate_t_range(eps)} max|avg|={peak:.3e}"))
    if ok:
        digits = _orbit_digit_counts(1, d, 2, d - 1)
        dev = max(abs(c / (d - 1) - 0.5) for c in digits)
        checks.append(("digit-frequencies-within-eps", dev <= eps,
                       f"max |P(z) - 1/2| = {dev:.3e}"))
    # a short purely periodic point correlates perfectly with some t
    bad_ok, _ = weyl_entropy_certificate(Fraction(1, 3), 2, eps, 4096)
    checks.append(("certificate-rejects-periodic", not bad_ok, "x = 1/3 in base 2"))
    return checks


def _next_prime_with_primitive_root_two(start: int) -> int:
    d = start | 1
    while not (_is_prime(d) and _two_is_primitive_root(d)):
        d += 2
    return d


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
    for p in small:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in small:  # deterministic for n < 3.3e24
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _two_is_primitive_root(prime: int) -> bool:
    n = prime - 1
    factors = set()
    d = n
    f = 2
    while f * f <= d:
        while d % f == 0:
            factors.add(f)
            d //= f
        f += 1
    if d > 1:
        factors.add(d)
    return all(pow(2, n // p, prime) != 1 for p in factors)


def _orbit_digit_counts(num: int, den: int, base: int, n: int) -> list[int]:
    counts = [0] * base
    r = num % den
    for _ in range(n):
        r *= base
        counts[r // den] += 1
        r %= den
    return counts


_SUITES = ("viete", "sin-bound", "am-oracle", "discrepancy-oracle", "weyl-certificate")


def cmd_verify(args: argparse.Namespace) -> int:
    if args.suite == "all":
        names = _SUITES
    elif args.suite in _SUITES:
        names = (args.suite,)
    else:
        return _fail(f"unknown suite {args.suite!r}; choose from"
                     f" {', '.join(_SUITES)} or all", 2)
    failures = 0
    for name in names:
        if name == "viete":
            checks = _suite_viete()
        elif name == "sin-bound":
            checks = _suite_sin_bound(args.seed)
        elif name == "am-oracle":
            checks = _suite_am_oracle(args.seed)
        elif name == "discrepancy-oracle":
            checks = _suite_discrepancy_oracle(args.seed)
        else:
            checks = _suite_weyl_certificate()
        for label, passed, detail in checks:
            print(f"{'PASS' if passed else 'FAIL'} {name}/{label}: {detail}")
            failures += 0 if passed else 1
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# calibrate


def cmd_calibrate(args: argparse.Namespace) -> int:
    if args.base < 2:
        return _fail(f"need a base >= 2, got {args.base}", 2)
    c = calibrate(args.base, length=args.length, samples=args.samples,
                  target=args.target, seed=args.seed)
    print(f"C_{args.base} = {c:.6f} (target pass rate {args.target},"
          f" {args.samples} words of length {args.length}, seed {args.seed})")
    if args.out:
        params = DiscrepancyParams.default().with_base(args.base, c, DEFAULT_N)
        params.write_config(args.out)
        print(f"config -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsdim",
        description="Block entropies, exponential-sum diagnostics, and the"
                    " staged construction of points with prescribed"
                    " finite-state dimensions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="entropy profile and dimension estimate"
                                       " of a digit file")
    p.add_argument("digit_file")
    p.add_argument("--base", type=int, action="append",
                   help="reinterpret the digits in this base (repeatable;"
                        " default: the file's own base)")
    p.add_argument("--lmax", type=int, default=3, help="largest block length")
    p.add_argument("--checkpoints", type=_int_list, default=None,
                   help="comma-separated prefix lengths (default: geometric grid)")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("construct", help="run the staged construction")
    p.add_argument("--plan", required=True, help="plan file (q/growth/alpha lines)")
    p.add_argument("--stages", type=int, required=True)
    p.add_argument("--mode", choices=("sampled", "exhaustive"), default="sampled")
    p.add_argument("--samples", type=int, default=64,
                   help="candidates per step in sampled mode")
    p.add_argument("--seed", default="0")
    p.add_argument("--tolerance", type=float, default=0.1,
                   help="entropy tolerance override for desk-scale runs")
    p.add_argument("--min-digits", type=int, default=0,
                   help="digits each substage must fix before closing")
    p.add_argument("--budget", type=int, default=4096, help="steps per substage")
    p.add_argument("--transition-l", type=float, default=4.0,
                   help="block-length constant of the transition inequalities")
    p.add_argument("--margin", type=float, default=0.0,
                   help="floor for the transition margin (0 = exact)")
    p.add_argument("--weyl-gamma", type=float, default=0.05,
                   help="Weyl-average threshold gamma (checked against gamma/2)")
    p.add_argument("--t-cap", type=int, default=None,
                   help="truncate the objective's frequency range")
    p.add_argument("--out", default="construction", help="output directory")
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("verify", help="run a lemma-check suite")
    p.add_argument("suite", help=f"one of {', '.join(_SUITES)}, or all")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("calibrate", help="Monte-Carlo calibration of the"
                                         " discrepancy filter constant")
    p.add_argument("--base", type=int, required=True)
    p.add_argument("--length", type=int, default=2000)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--target", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write a filter config file here")
    p.set_defaults(func=cmd_calibrate)

    return parser


def _int_list(text: str) -> list[int]:
    try:
        values = sorted({int(tok) for tok in text.split(",") if tok.strip()})
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty checkpoint list")
    return values


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
