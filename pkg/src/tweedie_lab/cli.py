"""Command-line front end: ``tweedie-lab verify | eb | list``.

Exit codes: 0 success, 1 configuration or runtime error, 2 an identity
failed or a benchmark threshold was missed.
"""

import argparse
import json
import sys

from . import __version__
from .calculus import SCHEMES, FdPolicy
from .config import load_config
from .empirical_bayes import eb_benchmark
from .errors import TweedieLabError
from .identities import KIND_NAMES, IdentityKind, default_suite, reports_to_csv, reports_to_json, verify, verify_all
from .measures import PRIOR_DENSITIES, U_MAP_KINDS
from .models import CATALOG

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _emit(text, out):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


def _policy(cfg, args):
    spec = dict(cfg.policy_spec)
    if args.fd_scheme is not None:
        spec["scheme"] = args.fd_scheme
    if args.fd_step is not None:
        spec["h0"] = args.fd_step
    if args.sing_margin is not None:
        spec["sing_margin"] = args.sing_margin
    return FdPolicy(**spec)


def cmd_verify(args):
    cfg = load_config(args.config)
    scenario = cfg.scenario(paper_erratum=args.paper_erratum_mode)
    policy = _policy(cfg, args)
    if args.identity and "all" not in args.identity:
        kinds = [IdentityKind.parse(t) for t in args.identity]
        reports = [verify(k, scenario, cfg.grid, policy, cfg.tolerances.get(k.label, cfg.tolerances.get(k.name))) for k in kinds]
    else:
        reports = verify_all(scenario, cfg.grid, policy, cfg.identities, cfg.tolerances)
    for r in reports:
        print(r.summary(), file=sys.stderr)
    _emit(reports_to_csv(reports) if args.format == "csv" else reports_to_json(reports), args.out)
    return EXIT_FAIL if any(r.passed is False for r in reports) else EXIT_OK


def _thresholds_met(report, thresholds):
    ok = True
    for metric, per_ell in (thresholds or {}).items():
        for row in report["per_ell"]:
            limit = per_ell.get(str(row["ell"]))
            if limit is not None and not row[metric] <= limit:
                print(f"FAIL eb {metric} at ell={row['ell']}: {row[metric]:.3e} > {limit:g}", file=sys.stderr)
                ok = False
    return ok


def cmd_eb(args):
    cfg = load_config(args.config)
    scenario = cfg.scenario()
    eb = dict(cfg.eb)
    for key in ("n", "seed", "ell_max", "bandwidth"):
        val = getattr(args, key)
        if val is not None:
            eb[key] = val
    report = eb_benchmark(scenario, eb["n"], cfg.eb_grid(), eb["ell_max"], eb["seed"], eb["bandwidth"], cfg.policy)
    for row in report["per_ell"]:
        print(f"eb [{scenario.name}] ell={row['ell']}: mae_kde {row['mae_kde']:.3e}, mae_exact_marginal {row['mae_exact_marginal']:.3e}", file=sys.stderr)
    _emit(json.dumps(report, indent=2), args.out)
    return EXIT_OK if _thresholds_met(report, eb.get("thresholds")) else EXIT_FAIL


def cmd_list(args):
    lines = ["models:"]
    for name in sorted(CATALOG):
        doc = (CATALOG[name].__doc__ or "").strip().splitlines()[0]
        lines.append(f"  {name}: {doc}")
    lines.append("identity kinds:")
    lines += [f"  {k}" for k in KIND_NAMES]
    lines.append("default suite:")
    lines += [f"  {k.label}" for k in default_suite()]
    lines.append("u_map vocabulary:")
    lines += [f"  {k}" for k in U_MAP_KINDS]
    lines.append("prior densities:")
    lines += [f"  {k}" for k in PRIOR_DENSITIES]
    print("\n".join(lines))
    return EXIT_OK


def _bandwidth(text):
    if text == "silverman":
        return text
    return float(text)


def build_parser():
    parser = argparse.ArgumentParser(prog="tweedie-lab", description="Verify conditional-expectation identities and run empirical-Bayes benchmarks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("verify", help="run identity checks on a scenario config")
    pv.add_argument("config", help="path to a JSON scenario config")
    pv.add_argument("--identity", action="append", help="identity label such as Variance or MomentRecursion(2), or 'all' (repeatable)")
    pv.add_argument("--out", help="write reports here instead of stdout")
    pv.add_argument("--format", choices=("json", "csv"), default="json")
    pv.add_argument("--fd-scheme", choices=SCHEMES)
    pv.add_argument("--fd-step", type=float, help="base step h0")
    pv.add_argument("--sing-margin", type=float, help="exclusion radius for |T'|")
    pv.add_argument("--paper-erratum-mode", action="store_true", help="use the printed Wishart log-determinant Jacobian")
    pv.set_defaults(func=cmd_verify)

    pe = sub.add_parser("eb", help="run the empirical-Bayes benchmark")
    pe.add_argument("config")
    pe.add_argument("--n", type=int)
    pe.add_argument("--seed", type=int)
    pe.add_argument("--ell-max", dest="ell_max", type=int)
    pe.add_argument("--bandwidth", type=_bandwidth, help="'silverman' or a positive number")
    pe.add_argument("--out")
    pe.set_defaults(func=cmd_eb)

    pl = sub.add_parser("list", help="list models, identity kinds and u_map types")
    pl.set_defaults(func=cmd_list)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TweedieLabError, ValueError, KeyError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
