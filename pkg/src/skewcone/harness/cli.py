"""Command line: ``skewcone run | sweep | battery | report``.

Exit codes: 0 all checks pass, 1 a check failed or errored, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import ConfigurationError
from .report import RunReport
from .runner import DEFAULT_SUITE, bundled_names, resolve_config, run, run_suite, sweep

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _values(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        out.append(int(part) if part.lstrip("-").isdigit() else float(part))
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skewcone", description="Cone and skew-product experiment harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="config JSON path or bundled config name (" + ", ".join(bundled_names()) + ")")
        p.add_argument("--seed", type=_u64, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory for report.json and CSV dumps")

    p = sub.add_parser("run", help="run one config, or the default suite with --suite")
    common(p, config_required=False)
    p.add_argument("--suite", action="store_true", help="run every config of the default suite")

    p = sub.add_parser("sweep", help="one run per value of a numeric config field")
    common(p)
    p.add_argument("--axis", required=True, help="dotted field path, e.g. system.eps or heat-convergence.t")
    p.add_argument("--values", required=True, type=_values, help="comma-separated values")
    p.add_argument("--workers", type=int, default=1, help="concurrent sweep points")

    p = sub.add_parser("battery", help="axiom battery on the config's system")
    common(p)

    p = sub.add_parser("report", help="summarise report.json files")
    p.add_argument("paths", nargs="+", help="report.json files or directories holding them")
    return parser


def _print(lines) -> None:
    print("\n".join(lines))


def _cmd_run(args) -> int:
    if args.suite:
        reports = run_suite(seed=args.seed, out=args.out, names=DEFAULT_SUITE)
        for rep in reports:
            _print(rep.summary_lines())
        return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL
    if args.config is None:
        raise ConfigurationError("run needs --config or --suite")
    rep = run(resolve_config(args.config), seed=args.seed, out=args.out)
    _print(rep.summary_lines())
    return rep.exit_code


def _cmd_sweep(args) -> int:
    if args.workers < 1:
        raise ConfigurationError("--workers must be at least 1")
    config = resolve_config(args.config)
    reports, rows = sweep(config, args.axis, args.values, workers=args.workers, out=args.out, seed=args.seed)
    for row in rows:
        print(f"{args.axis}={row['value']}: {row['status']}" + (f" ({row['message']})" if "message" in row else ""))
    if any(r["status"] == "config-error" for r in rows):
        return EXIT_CONFIG
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def _cmd_battery(args) -> int:
    config = resolve_config(args.config)
    if config.system.kind not in ("tridiag", "linear-test"):
        raise ConfigurationError(f"the axiom battery needs an ODE system, got {config.system.kind!r}")
    data = config.model_dump(mode="json")
    keep = [c for c in data["checks"] if c["name"] == "axiom-battery"] or [{"name": "axiom-battery"}]
    data["checks"] = keep
    rep = run(resolve_config(data), seed=args.seed, out=args.out)
    _print(rep.summary_lines())
    print(json.dumps(rep.outcome("axiom-battery").to_dict()["headline"], indent=2, sort_keys=True))
    return rep.exit_code


def _cmd_report(args) -> int:
    code = EXIT_OK
    for raw in args.paths:
        path = Path(raw)
        files = sorted(path.rglob("report.json")) if path.is_dir() else [path]
        if not files:
            raise ConfigurationError(f"no report.json under {path}")
        for f in files:
            try:
                rep = RunReport.from_dict(json.loads(f.read_text()))
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigurationError(f"{f}: unreadable report ({exc})") from None
            _print([f"{f}:"] + rep.summary_lines())
            if not rep.passed:
                code = EXIT_FAIL
    return code


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "battery": _cmd_battery, "report": _cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
