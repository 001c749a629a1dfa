"""Command-line entry point: ``cafactor <subcommand> ...``.

Exit codes: 0 success, 1 analysis-level failure (verification mismatch,
budget exceeded), 2 usage or input error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .blocking import (
    DEFAULT_MAX_STEPS,
    certify_blocking,
    classify_kurka,
    falsify_blocking,
    search_blocking_words,
)
from .core import (
    DEFAULT_COMPOSE_BUDGET,
    BudgetExceededError,
    CyclicConfig,
    RuleTable,
    WindowConfig,
    as_word,
    eca,
    is_surjective,
    load_rule,
    render_spacetime,
    trace,
    word_str,
)
from .factor import (
    build_measurable_factor,
    build_topological_factor,
    verify_commutation,
)
from .gilman import BernoulliSpec, classify_gilman, estimate_mu_equicontinuity
from .spectrum import (
    Cylinder,
    compare_shift_spectrum,
    correlation,
    eigenvalue_scan,
    mixing_test,
    orbit_spectrum_cyclic,
)

DEFAULT_SEED = 0
_NOT_PARAMS = {"json", "threads", "manifest", "out", "dump_json", "func", "rule_file"}


class UsageError(Exception):
    pass


def _rule(args) -> RuleTable:
    if args.eca is not None:
        return eca(args.eca)
    if args.rule_file is not None:
        return load_rule(args.rule_file)
    raise UsageError("a rule is required: pass --eca N or --rule FILE")


def _params(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in _NOT_PARAMS:
            continue
        out[k] = v
    if getattr(args, "rule_file", None):
        out["rule_file"] = str(args.rule_file)
    return out


def _emit(args, rule: Optional[RuleTable], result: dict, human: str) -> None:
    manifest = {
        "version": __version__,
        "rule_hash": rule.digest if rule is not None else None,
        "subcommand": args.command_path,
        "params": _params(args),
    }
    if args.manifest:
        stamped = dict(manifest, timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat())
        with open(args.manifest, "w") as fh:
            json.dump(stamped, fh, indent=2, sort_keys=True)
    if args.json:
        report = {"schema": f"cafactor/{args.command_path.replace(' ', '/')}/1",
                  "manifest": manifest, "result": result}
        sys.stdout.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(human.rstrip("\n") + "\n")


def _cyclic(text: str) -> CyclicConfig:
    return CyclicConfig(as_word(text))


def _window(text: str) -> WindowConfig:
    word, _, off = text.partition("@")
    return WindowConfig(int(off) if off else 0, as_word(word))


# -- subcommands -----------------------------------------------------------


def cmd_simulate(args) -> int:
    rule = _rule(args)
    if (args.cyclic is None) == (args.window is None):
        raise UsageError("pass exactly one of --cyclic WORD or --window WORD@OFFSET")
    x = _cyclic(args.cyclic) if args.cyclic is not None else _window(args.window)
    if args.interval:
        start, _, width = args.interval.partition(":")
        interval = (int(start), int(width))
    elif isinstance(x, CyclicConfig):
        interval = (0, x.period)
    else:
        reach = args.steps * rule.radius
        interval = (x.offset + reach, max(0, x.length - 2 * reach))
        if x.length - 2 * reach <= 0:
            raise ValueError(
                f"insufficient window: {x.length} cells cannot support {args.steps} steps"
            )
    tr = trace(rule, x, interval, args.steps)
    image = render_spacetime(tr, args.format)
    if args.dump_json:
        with open(args.dump_json, "w") as fh:
            json.dump({"start": tr.start, "width": tr.width, "horizon": tr.horizon,
                       "rows": [word_str(r) for r in tr.rows]}, fh, indent=2)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(image)
    if args.json:
        _emit(args, rule, {"start": tr.start, "width": tr.width, "horizon": tr.horizon,
                           "rows": [word_str(r) for r in tr.rows]}, "")
    elif not args.out:
        sys.stdout.buffer.write(image)
        sys.stdout.flush()
    return 0


def cmd_surjective(args) -> int:
    rule = _rule(args)
    res = is_surjective(rule)
    orphan = word_str(res.orphan) if res.orphan is not None else None
    human = "surjective" if res.surjective else f"not surjective; orphan word: {orphan}"
    _emit(args, rule, {"surjective": res.surjective, "balanced": res.balanced,
                       "orphan": orphan}, human)
    return 0


def cmd_blocking_certify(args) -> int:
    rule = _rule(args)
    cert = certify_blocking(rule, as_word(args.word), args.s, args.margin, args.max_steps)
    if cert is None:
        _emit(args, rule, {"status": "inconclusive", "certificate": None}, "inconclusive")
    else:
        _emit(args, rule, {"status": "certified", "certificate": cert.to_json()},
              f"certified: {word_str(cert.word)} is {cert.s}-blocking at offset {cert.p} "
              f"(abstract preperiod {cert.preperiod}, period {cert.period})")
    return 0


def cmd_blocking_falsify(args) -> int:
    rule = _rule(args)
    ref = falsify_blocking(rule, as_word(args.word), args.s, args.horizon, args.samples, args.seed)
    if ref is None:
        _emit(args, rule, {"status": "not refuted", "refutation": None},
              "not refuted within budget")
    else:
        lines = [f"refuted at every offset ({len(ref.pairs)})"]
        lines += [f"  p={pr.interval[0]}: diverges at time {pr.time}" for pr in ref.pairs]
        _emit(args, rule, {"status": "refuted", "refutation": ref.to_json()}, "\n".join(lines))
    return 0


def cmd_blocking_search(args) -> int:
    rule = _rule(args)
    found = search_blocking_words(rule, args.s, args.lmax, args.margin, args.max_steps,
                                  args.dedupe, args.threads)
    result = {"words": [{"word": word_str(w), "certificate": c.to_json()} for w, c in found]}
    human = "\n".join(word_str(w) for w, _ in found) or "no certified words"
    _emit(args, rule, result, human)
    return 0


def _kurka(args, rule):
    return classify_kurka(
        rule, lmax=args.lmax, margin=args.margin, max_steps=args.max_steps,
        max_preperiod=args.max_preperiod, max_period=args.max_period, budget=args.budget,
        horizon=args.horizon, samples=args.samples, seed=args.seed, threads=args.threads,
    )


def _kurka_human(rep) -> str:
    line = rep.verdict.value
    if rep.witness:
        line += f" (p0={rep.witness[0]}, p={rep.witness[1]})"
    if rep.certificate:
        line += f" via certificate for {word_str(rep.certificate.word)}"
    if not rep.is_proof and rep.verdict.value != "INCONCLUSIVE":
        line += " [evidence, not proof]"
    return line


def cmd_blocking_classify(args) -> int:
    rule = _rule(args)
    rep = _kurka(args, rule)
    _emit(args, rule, rep.to_json(), _kurka_human(rep))
    return 0


def cmd_classify(args) -> int:
    rule = _rule(args)
    rep = _kurka(args, rule)
    surj = is_surjective(rule)
    result = rep.to_json()
    result["surjective"] = surj.surjective
    result["orphan"] = word_str(surj.orphan) if surj.orphan is not None else None
    human = _kurka_human(rep) + ("\nsurjective" if surj.surjective else
                                 f"\nnot surjective; orphan word: {result['orphan']}")
    _emit(args, rule, result, human)
    return 0


def _spec(args, rule) -> BernoulliSpec:
    return BernoulliSpec.parse(args.spec, rule.q)


def cmd_gilman_estimate(args) -> int:
    rule = _rule(args)
    x = _cyclic(args.point[0] if args.point else "0")
    ests = []
    for m in args.m or [1]:
        ests += estimate_mu_equicontinuity(rule, _spec(args, rule), x, m, args.n or [m, 2 * m, 4 * m],
                                           args.horizon, args.samples, args.seed, args.threads)
    human = "\n".join(
        f"m={e.m} n={e.n} T={e.horizon}: ratio {e.ratio:.4f} CI [{e.ci[0]:.4f}, {e.ci[1]:.4f}]"
        for e in ests
    )
    _emit(args, rule, {"estimates": [e.to_json() for e in ests]}, human)
    return 0


def cmd_gilman_classify(args) -> int:
    rule = _rule(args)
    points = [_cyclic(p) for p in (args.point or ["0"])]
    kwargs = {}
    if args.m:
        kwargs["m_list"] = tuple(args.m)
    if args.n:
        kwargs["n_list"] = tuple(args.n)
    rep = classify_gilman(rule, _spec(args, rule), points, horizon=args.horizon,
                          samples=args.samples, seed=args.seed, lmax=args.lmax,
                          threads=args.threads, **kwargs)
    suffix = "" if rep.verdict.value == "A" else " [evidence, not proof]"
    _emit(args, rule, rep.to_json(), f"{rep.verdict.value}{suffix}: {rep.provenance}")
    return 0


def _factor(args, rule):
    if args.from_witness:
        witness = None
        if args.witness:
            p0, p = (int(t) for t in args.witness.split(","))
            witness = (p0, p)
        return build_topological_factor(rule, witness, budget=args.budget)
    if args.point is None:
        raise UsageError("pass --point WORD or --from-witness")
    return build_measurable_factor(rule, _cyclic(args.point))


def cmd_factor_build(args) -> int:
    rule = _rule(args)
    fmap, counter = _factor(args, rule)
    result = {"factor": fmap.to_json(), "counter_modulus": counter.modulus,
              "phase_set": fmap.phases.to_json()}
    human = (f"phase set p0={fmap.phases.preperiod} p={fmap.period} rows="
             + ",".join(word_str(w) for w in fmap.phases.rows)
             + f"; counter CA on {{0..{counter.modulus}}}")
    _emit(args, rule, result, human)
    return 0


def cmd_factor_verify(args) -> int:
    rule = _rule(args)
    fmap, counter = _factor(args, rule)
    inputs = [CyclicConfig(w) for n in range(1, args.max_period + 1)
              for w in np.ndindex(*(rule.q,) * n)]
    if args.samples:
        rng = np.random.default_rng(args.seed)
        width = args.width
        inputs += [WindowConfig(0, tuple(int(v) for v in rng.integers(0, rule.q, width)))
                   for _ in range(args.samples)]
    rep = verify_commutation(rule, fmap, counter, inputs, args.threads)
    result = {"factor": fmap.to_json(), "verification": rep.to_json()}
    human = (f"{'PASS' if rep.passed else 'FAIL'}: {rep.checked} positions checked, "
             f"{len(rep.mismatches)} mismatches")
    _emit(args, rule, result, human)
    return 0 if rep.passed else 1


def _series(args, rule):
    method = {"exact": "exact_cyclic", "mc": "monte_carlo"}.get(args.method, args.method)
    return correlation(rule, Cylinder.parse(args.u), Cylinder.parse(args.v), args.horizon,
                       method=method, period=args.period, samples=args.samples,
                       seed=args.seed, threads=args.threads)


def cmd_spectrum_correlate(args) -> int:
    rule = _rule(args)
    series = _series(args, rule)
    result = series.to_json()
    verdict = None
    if len(series) >= 8:
        verdict = mixing_test(series, tolerance=args.tolerance).value
    result["mixing"] = verdict
    human = "\n".join(f"c_{n} = {c:+.6f}" for n, c in enumerate(series.values))
    _emit(args, rule, result, human + f"\nmixing: {verdict}")
    return 0


def cmd_spectrum_scan(args) -> int:
    if args.series:
        with open(args.series) as fh:
            values = json.load(fh)
        rule = None
    else:
        rule = _rule(args)
        values = _series(args, rule)
    rep = eigenvalue_scan(values, args.qmax, args.tolerance)
    human = "\n".join(
        f"alpha={pk.frequency:.6f} |X|={pk.magnitude:.4f} {pk.verdict.value}"
        f"({pk.approximation})" for pk in rep.peaks
    ) or "no peaks"
    _emit(args, rule, rep.to_json(), human)
    return 0


def cmd_spectrum_orbits(args) -> int:
    rule = _rule(args)
    spec = orbit_spectrum_cyclic(rule, args.period)
    _emit(args, rule, spec.to_json(),
          "frequencies: " + " ".join(str(f) for f in sorted(spec.frequency_set)))
    return 0


def cmd_spectrum_compare(args) -> int:
    rule = _rule(args)
    rep = compare_shift_spectrum(rule, args.period)
    human = (f"shift spectrum {'contained' if rep.contained else 'NOT contained'} "
             f"at period {args.period} ({rep.note})")
    _emit(args, rule, rep.to_json(), human)
    return 0


# -- parser ----------------------------------------------------------------


def _common(p: argparse.ArgumentParser, seeded: bool = False) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--eca", type=int, help="elementary rule number 0..255")
    g.add_argument("--rule", dest="rule_file", help="rule table JSON file")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.add_argument("--threads", type=int, default=None,
                   help="parallelism cap (default: $CAFACTOR_THREADS or 1)")
    p.add_argument("--manifest", help="write a timestamped run manifest to this file")
    if seeded:
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)


def _blocking_budgets(p) -> None:
    p.add_argument("--lmax", type=int, default=5)
    p.add_argument("--margin", type=int, default=None, help="default 2r")
    p.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    p.add_argument("--horizon", type=int, default=32)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--max-preperiod", type=int, default=4)
    p.add_argument("--max-period", type=int, default=4)
    p.add_argument("--budget", type=int, default=DEFAULT_COMPOSE_BUDGET)


def _leaf(sub, name, func, path, help_text, seeded=False):
    p = sub.add_parser(name, help=help_text)
    _common(p, seeded)
    p.set_defaults(func=func, command_path=path)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cafactor", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cafactor {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = _leaf(sub, "simulate", cmd_simulate, "simulate", "space-time diagram")
    p.add_argument("--cyclic", help="cyclic configuration word")
    p.add_argument("--window", help="window WORD@OFFSET")
    p.add_argument("--steps", type=int, default=16)
    p.add_argument("--interval", help="START:WIDTH (default: widest exact interval)")
    p.add_argument("--format", choices=("ascii", "pgm"), default="ascii")
    p.add_argument("--out", help="write the image to this file")
    p.add_argument("--dump-json", help="also write the trace rows as JSON")

    _leaf(sub, "surjective", cmd_surjective, "surjective", "surjectivity and orphan word")

    p = _leaf(sub, "classify", cmd_classify, "classify", "Kurka class and surjectivity",
              seeded=True)
    _blocking_budgets(p)

    blk = sub.add_parser("blocking", help="blocking words").add_subparsers(
        dest="action", required=True)
    p = _leaf(blk, "certify", cmd_blocking_certify, "blocking certify", "certify a word")
    p.add_argument("--word", required=True)
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--margin", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    p = _leaf(blk, "falsify", cmd_blocking_falsify, "blocking falsify", "refute a word",
              seeded=True)
    p.add_argument("--word", required=True)
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--horizon", type=int, default=32)
    p.add_argument("--samples", type=int, default=500)
    p = _leaf(blk, "search", cmd_blocking_search, "blocking search", "enumerate words")
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--lmax", type=int, default=4)
    p.add_argument("--margin", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    p.add_argument("--dedupe", action="store_true")
    p = _leaf(blk, "classify", cmd_blocking_classify, "blocking classify", "Kurka class",
              seeded=True)
    _blocking_budgets(p)

    gil = sub.add_parser("gilman", help="mu-equicontinuity estimates").add_subparsers(
        dest="action", required=True)
    for name, func in (("estimate", cmd_gilman_estimate), ("classify", cmd_gilman_classify)):
        p = _leaf(gil, name, func, f"gilman {name}", f"gilman {name}", seeded=True)
        p.add_argument("--spec", default="uniform", help='"uniform" or probabilities "p0,p1,..."')
        p.add_argument("--point", action="append", help="cyclic base point word (repeatable)")
        p.add_argument("--m", type=int, action="append")
        p.add_argument("--n", type=int, action="append")
        p.add_argument("--horizon", type=int, default=64)
        p.add_argument("--samples", type=int, default=500)
        if name == "classify":
            p.add_argument("--lmax", type=int, default=4)

    fac = sub.add_parser("factor", help="counter-CA factor").add_subparsers(
        dest="action", required=True)
    for name, func in (("build", cmd_factor_build), ("verify", cmd_factor_verify)):
        p = _leaf(fac, name, func, f"factor {name}", f"factor {name}", seeded=(name == "verify"))
        p.add_argument("--point", help="cyclic point whose central trace gives the phases")
        p.add_argument("--from-witness", action="store_true",
                       help="topological factor from the global (p0, p)")
        p.add_argument("--witness", help="P0,P (default: searched)")
        p.add_argument("--budget", type=int, default=DEFAULT_COMPOSE_BUDGET)
        if name == "verify":
            p.add_argument("--max-period", type=int, default=8,
                           help="exhaustive cyclic inputs up to this period")
            p.add_argument("--samples", type=int, default=0, help="random windows to add")
            p.add_argument("--width", type=int, default=64)

    spc = sub.add_parser("spectrum", help="correlations and spectra").add_subparsers(
        dest="action", required=True)
    for name, func in (("correlate", cmd_spectrum_correlate), ("scan", cmd_spectrum_scan)):
        p = _leaf(spc, name, func, f"spectrum {name}", f"spectrum {name}", seeded=True)
        p.add_argument("--u", default="1@0", help="cylinder WORD@OFFSET")
        p.add_argument("--v", default="1@0")
        p.add_argument("--horizon", type=int, default=32)
        p.add_argument("--method", choices=("exact", "mc", "exact_cyclic", "monte_carlo"),
                       default="exact")
        p.add_argument("--period", type=int, default=None)
        p.add_argument("--samples", type=int, default=10_000)
        if name == "correlate":
            p.add_argument("--tolerance", type=float, default=1e-3, help="mixing tolerance")
        else:
            p.add_argument("--series", help="JSON list of correlations instead of a rule")
            p.add_argument("--qmax", type=int, default=64)
            p.add_argument("--tolerance", type=float, default=None,
                           help="rational match tolerance (default 1/N)")
    for name, func in (("orbits", cmd_spectrum_orbits), ("compare-shift", cmd_spectrum_compare)):
        p = _leaf(spc, name, func, f"spectrum {name}", f"spectrum {name}")
        p.add_argument("--period", type=int, required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BudgetExceededError as exc:
        print(f"error: budget exceeded: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
