"""Run configs, the bundled default suite, and parameter sweeps."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from .checks import CHECKS
from .config import ExperimentConfig, load_config, parse_config
from .report import ERROR, CheckOutcome, RunReport

# order of the default suite; every name is a bundled config
DEFAULT_SUITE = (
    "linear-2d", "cubic-pair", "chain5", "noncoop-control", "linear-test", "linear-test-eps", "diag-decay",
    "pitchfork",
    "parabolic-nonlocal", "parabolic-chemotaxis", "heat-convergence", "parabolic-zero-number",
)


def bundled_names() -> list[str]:
    root = resources.files("skewcone.harness") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_config(name: str) -> ExperimentConfig:
    path = resources.files("skewcone.harness") / "configs" / f"{name}.json"
    if not path.is_file():
        raise ConfigurationError(f"no bundled config named {name!r}; available: {', '.join(bundled_names())}")
    return parse_config(json.loads(path.read_text()))


def resolve_config(ref) -> ExperimentConfig:
    """A config object, a path to a JSON file, or the name of a bundled config."""
    if isinstance(ref, ExperimentConfig):
        return ref
    if isinstance(ref, dict):
        return parse_config(ref)
    path = Path(ref)
    if path.exists():
        return load_config(path)
    return bundled_config(str(ref))


def _write_table(path: Path, rows: list) -> None:
    if not rows:
        return
    fields = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def run(config, seed: int | None = None, out=None) -> RunReport:
    """Execute every check of ``config``; failures and errors never stop siblings.

    Each check draws from its own generator spawned from ``SeedSequence(seed)``
    by list position, so adding a check never shifts another one's numbers.
    """
    config = resolve_config(config)
    seed = config.seed if seed is None else int(seed)
    children = np.random.SeedSequence(seed).spawn(len(config.checks))
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    outcomes, timing = [], {}
    for check, child in zip(config.checks, children):
        t0 = time.perf_counter()
        try:
            outcome = CHECKS[check.name](config.system, check, np.random.default_rng(child))
        except Exception as exc:  # noqa: BLE001 - isolation: one broken check must not hide the others
            outcome = CheckOutcome(check.name, ERROR, message=f"{type(exc).__name__}: {exc}")
        timing[check.name] = round(time.perf_counter() - t0, 3)
        outcomes.append(outcome)
    report = RunReport(config.name, config.config_hash(), seed, config.system.kind, outcomes, timing, started)
    out = out if out is not None else config.output_dir
    if out is not None:
        out = Path(out)
        report.write(out)
        for o in outcomes:
            for name, rows in o.tables.items():
                _write_table(out / f"{o.name}_{name}.csv", rows)
    return report


def run_suite(seed: int | None = None, out=None, names=DEFAULT_SUITE) -> list[RunReport]:
    """Run the bundled default suite; reports come back in suite order.

    ``seed`` overrides every config's own seed when given.
    """
    reports = []
    for name in names:
        sub = None if out is None else Path(out) / name
        reports.append(run(bundled_config(name), seed=seed, out=sub))
    return reports


# -- sweeps --


def _set_path(data: dict, path: str, value) -> None:
    """Assign ``value`` at a dotted path; list entries may be addressed by check name."""
    parts = path.split(".")
    if parts[0] not in data:
        # shorthand: a leading check name addresses that check's options
        parts = ["checks"] + parts
    node = data
    for k, part in enumerate(parts):
        last = k == len(parts) - 1
        if isinstance(node, list):
            if part.isdigit() and int(part) < len(node):
                key = int(part)
            else:
                matches = [j for j, item in enumerate(node) if isinstance(item, dict) and item.get("name") == part]
                if not matches:
                    raise ConfigurationError(f"sweep axis {path!r}: no entry {part!r}")
                key = matches[0]
        elif isinstance(node, dict):
            if part not in node:
                raise ConfigurationError(f"sweep axis {path!r}: no field {part!r}")
            key = part
        else:
            raise ConfigurationError(f"sweep axis {path!r}: {'.'.join(parts[:k])} is a scalar")
        if last:
            current = node[key]
            if isinstance(current, bool) or not isinstance(current, (int, float)):
                raise ConfigurationError(f"sweep axis {path!r} is not a numeric scalar")
            node[key] = value
        else:
            node = node[key]


def _run_point(args):
    data, seed, out = args
    try:
        config = parse_config(data)
    except ConfigurationError as exc:
        return None, str(exc)
    return run(config, seed=seed, out=out), ""


def sweep(config, axis: str, values, workers: int = 1, out=None, seed: int | None = None):
    """One run per axis value, merged in axis order.

    Returns ``(reports, rows)``; a point whose config fails validation gets a
    row with status ``config-error`` and a None report.  With ``out`` set,
    each point writes into ``out/point_<k>`` and ``out/summary.csv`` collects
    the headline numbers.
    """
    config = resolve_config(config)
    base = config.model_dump(mode="json")
    jobs = []
    for k, v in enumerate(values):
        data = json.loads(json.dumps(base))
        _set_path(data, axis, v)
        data["output_dir"] = None
        sub = None if out is None else str(Path(out) / f"point_{k}")
        jobs.append((data, seed, sub))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]
    reports, rows = [], []
    for k, (v, (rep, err)) in enumerate(zip(values, results)):
        row = {"index": k, "axis": axis, "value": v}
        if rep is None:
            row.update({"status": "config-error", "message": err})
        else:
            row["status"] = "pass" if rep.passed else "fail"
            for o in rep.outcomes:
                row[f"{o.name}.status"] = o.status
                row[f"{o.name}.margin"] = o.margin
                for key, val in o.headline.items():
                    if isinstance(val, (int, float, str)) or val is None:
                        row[f"{o.name}.{key}"] = val
        reports.append(rep)
        rows.append(row)
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        _write_table(Path(out) / "summary.csv", rows)
    return reports, rows


__all__ = ["DEFAULT_SUITE", "bundled_config", "bundled_names", "resolve_config", "run", "run_suite", "sweep"]
