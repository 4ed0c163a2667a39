"""Run configuration, check records and report serialisation."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Any

from .errors import ConfigError

DEFAULT_SCENARIOS = (
    "adjoint_defect_suite", "kernel_and_decompose", "he_rescale_line", "slope_link",
    "vanishing_identity", "bundle_factor_suite", "degree_gauge_invariance",
    "exact_sequence_suite", "classical_reduction", "kl_demo", "pointwise_lemma_suite",
    "convergence_sweep",
)

DEFAULT_TOLERANCES = {"tol_closed": 1e-10, "tol_we": 1e-9, "solver_residual": 1e-9, "delta": 1e-10}

BUNDLE_KINDS = ("line", "trivial", "direct_sum", "extension")


def _fail(path, reason):
    raise ConfigError(path, reason)


def _expect(cond, path, reason):
    if not cond:
        _fail(path, reason)


@dataclass
class RunConfig:
    n: int = 2
    m: int = 1
    points_per_axis: int = 16
    omega: list | None = None
    omega_test: dict = field(default_factory=lambda: {"mode": "constant"})
    bundles: dict = field(default_factory=dict)
    scenarios: list = field(default_factory=lambda: [{"name": s} for s in DEFAULT_SCENARIOS])
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    seed: int = 0
    integral_classes: bool = False
    out: str | None = None
    csv_dir: str | None = None

    @classmethod
    def from_dict(cls, raw: dict, registered=DEFAULT_SCENARIOS) -> "RunConfig":
        _expect(isinstance(raw, dict), "$", "config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        for key in raw:
            _expect(key in known, f"$.{key}", f"unknown key; expected one of {sorted(known)}")
        cfg = cls(**{k: v for k, v in raw.items()})
        tol = dict(DEFAULT_TOLERANCES)
        _expect(isinstance(cfg.tolerances, dict), "$.tolerances", "must be an object")
        for k, v in cfg.tolerances.items():
            _expect(k in DEFAULT_TOLERANCES, f"$.tolerances.{k}", "unknown tolerance")
            _expect(isinstance(v, (int, float)) and v > 0, f"$.tolerances.{k}", "must be a positive number")
        tol.update(cfg.tolerances)
        cfg.tolerances = tol
        cfg.scenarios = [{"name": s} if isinstance(s, str) else s for s in cfg.scenarios]
        cfg.validate(registered)
        return cfg

    def validate(self, registered=DEFAULT_SCENARIOS):
        for key in ("n", "m", "points_per_axis", "seed"):
            v = getattr(self, key)
            _expect(isinstance(v, int) and not isinstance(v, bool), f"$.{key}", "must be an integer")
        _expect(1 <= self.n <= 4, "$.n", "n must be in 1..4")
        _expect(1 <= self.m <= self.n, "$.m", f"need 1 <= m <= n = {self.n}")
        N = self.points_per_axis
        _expect(N >= 4 and N % 2 == 0, "$.points_per_axis", "must be even and >= 4")
        if self.n == 4:
            _expect(N <= 8, "$.points_per_axis", "n = 4 needs a reduced grid (N <= 8)")
        _expect(self.seed >= 0, "$.seed", "must be nonnegative")
        if self.omega is not None:
            _expect(isinstance(self.omega, list) and len(self.omega) == self.n,
                    "$.omega", f"must be an {self.n}x{self.n} matrix (list of rows)")
        _expect(isinstance(self.omega_test, dict) and "mode" in self.omega_test,
                "$.omega_test", "needs a 'mode'")
        _expect(self.omega_test["mode"] in ("constant", "kahler_power", "ddbar_closed_perturbation"),
                "$.omega_test.mode", "unknown mode")
        _expect(isinstance(self.bundles, dict), "$.bundles", "must be an object")
        for name, b in self.bundles.items():
            path = f"$.bundles.{name}"
            _expect(isinstance(b, dict) and b.get("kind") in BUNDLE_KINDS, path,
                    f"kind must be one of {list(BUNDLE_KINDS)}")
            refs = list(b.get("summands", []))
            if b["kind"] == "extension":
                refs += [b.get("sub"), b.get("quotient")]
            for r in refs:
                _expect(r in self.bundles, path, f"references undefined bundle {r!r}")
        _expect(isinstance(self.scenarios, list) and self.scenarios, "$.scenarios", "must be a nonempty list")
        for i, sc in enumerate(self.scenarios):
            path = f"$.scenarios[{i}]"
            _expect(isinstance(sc, dict) and "name" in sc, path, "needs a 'name'")
            _expect(sc["name"] in registered, f"{path}.name",
                    f"unknown scenario {sc['name']!r}; registered: {', '.join(registered)}")
            for r in sc.get("bundles", []):
                _expect(r in self.bundles, f"{path}.bundles", f"references undefined bundle {r!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: str, registered=DEFAULT_SCENARIOS) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(path, f"cannot read: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(path, f"invalid JSON: {exc.msg} at line {exc.lineno}") from exc
    return RunConfig.from_dict(raw, registered)


def digest(payload) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class CheckRecord:
    name: str
    paper_anchor: str
    status: str
    residual: float
    tolerance: float
    runtime_ms: float | None
    inputs_digest: str
    note: str = ""

    @classmethod
    def make(cls, name, anchor, residual, tolerance, inputs, note="", runtime_ms=None):
        residual = float(residual)
        status = "pass" if residual <= tolerance else "fail"
        return cls(name, anchor, status, residual, float(tolerance), runtime_ms, digest(inputs), note)


@dataclass
class SweepRow:
    scenario: str
    N: int
    residual: float
    runtime_ms: float | None = None


@dataclass
class VerificationReport:
    checks: list
    config: dict
    sweeps: list = field(default_factory=list)

    @property
    def summary(self) -> dict:
        failed = sum(c.status != "pass" for c in self.checks)
        return {"total": len(self.checks), "passed": len(self.checks) - failed, "failed": failed}

    @property
    def all_passed(self) -> bool:
        return self.summary["failed"] == 0

    def ordered_checks(self) -> list:
        """Failures first, otherwise in run order."""
        return sorted(self.checks, key=lambda c: c.status == "pass")

    def to_dict(self) -> dict:
        return {
            "summary": self.summary,
            "checks": [asdict(c) for c in self.ordered_checks()],
            "sweeps": [asdict(r) for r in self.sweeps],
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "VerificationReport":
        return cls([CheckRecord(**c) for c in data["checks"]], data["config"],
                   [SweepRow(**r) for r in data.get("sweeps", [])])

    @classmethod
    def from_json(cls, text: str) -> "VerificationReport":
        return cls.from_dict(json.loads(text))


def emit_report(report: VerificationReport, out: str | None = None, csv_dir: str | None = None) -> list:
    """Write the JSON report and one CSV per swept quantity; returns the paths written."""
    written = []
    if out:
        parent = os.path.dirname(out)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
        written.append(out)
    if csv_dir and report.sweeps:
        os.makedirs(csv_dir, exist_ok=True)
        groups: dict[str, list] = {}
        for row in report.sweeps:
            groups.setdefault(row.scenario, []).append(row)
        for key, rows in groups.items():
            path = os.path.join(csv_dir, f"{key}.csv")
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["scenario", "N", "residual", "runtime_ms"])
                for r in rows:
                    w.writerow([r.scenario, r.N, repr(r.residual), "" if r.runtime_ms is None else r.runtime_ms])
            written.append(path)
    return written


def config_echo(cfg: RunConfig) -> dict[str, Any]:
    d = cfg.to_dict()
    d.pop("out", None)
    d.pop("csv_dir", None)
    return d
