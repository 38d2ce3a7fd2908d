"""Run reports: a deterministic body plus non-deterministic metadata."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

REPORT_SCHEMA_VERSION = 1
PASS, FAIL, ERROR = "pass", "fail", "error"


def clean(obj):
    """JSON-safe copy: numpy types unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


@dataclass
class CheckOutcome:
    """Result of one check.  ``margin > 0`` means the check held with room to spare."""

    name: str
    status: str
    margin: float | None = None
    headline: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    message: str = ""
    tables: dict = field(default_factory=dict)  # name -> list of row dicts, written as CSV

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return clean({"name": self.name, "status": self.status, "margin": self.margin,
                      "headline": self.headline, "metrics": self.metrics, "message": self.message})


@dataclass
class RunReport:
    config_name: str
    config_hash: str
    seed: int
    system: str
    outcomes: list
    timing: dict = field(default_factory=dict)
    started: str = ""

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.outcomes)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def outcome(self, name: str) -> CheckOutcome:
        for o in self.outcomes:
            if o.name == name:
                return o
        raise KeyError(name)

    def body(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": self.config_name,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "system": self.system,
            "passed": self.passed,
            "checks": [o.to_dict() for o in self.outcomes],
        }

    def body_json(self) -> str:
        return json.dumps(self.body(), indent=2, sort_keys=True)

    def to_dict(self) -> dict:
        return {"body": self.body(), "meta": clean({"timing": self.timing, "started": self.started})}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "report.json"
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        body = d["body"]
        if body.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {body.get('schema_version')!r}")
        outcomes = [CheckOutcome(c["name"], c["status"], c["margin"], c["headline"], c["metrics"], c["message"])
                    for c in body["checks"]]
        meta = d.get("meta", {})
        return cls(body["config"], body["config_hash"], body["seed"], body["system"], outcomes,
                   meta.get("timing", {}), meta.get("started", ""))

    def summary_lines(self) -> list[str]:
        lines = [f"{self.config_name} (seed {self.seed}): {'PASS' if self.passed else 'FAIL'}"]
        for o in self.outcomes:
            m = f" margin={o.margin:.4g}" if isinstance(o.margin, (int, float)) else ""
            msg = f" [{o.message}]" if o.message else ""
            lines.append(f"  {o.status.upper():5s} {o.name}{m}{msg}")
        return lines
