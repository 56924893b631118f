"""Experiment configuration, deterministic JSON reports and plot-data files."""
import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError
from .rng import RNG_POLICY_VERSION

# keys that never influence numeric output
NON_SEMANTIC_KEYS = ("threads", "out", "config")


def parse_config_text(text):
    """Flat key=value lines; '#' starts a comment; later keys override earlier ones."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got '{raw.strip()}'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        values[key.replace("-", "_")] = val
    return values


def read_config_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


@dataclass
class ExperimentConfig:
    """Validated settings of one command; values holds the command-specific keys."""

    command: str
    values: dict
    seed: int = 0
    out: str = None
    threads: int = 1
    precision: int = 10

    def semantic(self):
        """Everything that can change the numbers, in canonical order."""
        d = {k: v for k, v in self.values.items() if k not in NON_SEMANTIC_KEYS}
        d["seed"] = self.seed
        d["precision"] = self.precision
        return dict(sorted(d.items()))

    def content_hash(self):
        blob = f"{self.command}\n{dumps(self.semantic(), 17)}\n{RNG_POLICY_VERSION}".encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class Assertion:
    name: str
    observed: object
    reference: object
    tolerance: object
    passed: bool

    def as_dict(self):
        return {"name": self.name, "observed": self.observed, "reference": self.reference,
                "tolerance": self.tolerance, "pass": bool(self.passed)}


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    assertions: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def check(self, name, observed, reference, tolerance, passed):
        self.assertions.append(Assertion(name, observed, reference, tolerance, bool(passed)))

    @property
    def passed(self):
        return all(a.passed for a in self.assertions)

    def as_dict(self, include_clock=True):
        d = {"command": self.config.command, "config": self.config.semantic(),
             "content_hash": self.config.content_hash(), "rng_policy": RNG_POLICY_VERSION,
             "assertions": [a.as_dict() for a in self.assertions], "results": self.results,
             "passed": self.passed}
        if include_clock:
            d["wall_clock_s"] = self.wall_clock
        return d

    def to_json(self, include_clock=True):
        return dumps(self.as_dict(include_clock), self.config.precision)


# JSON with fixed float formatting ------------------------------------------------

def _number(x, precision):
    x = float(x)
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    if x == 0:
        return "0.0"
    s = format(x, f".{precision}g")
    if "e" not in s and "." not in s:
        s += ".0"
    return s


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "as_dict"):
        return obj.as_dict()
    return obj


def dumps(obj, precision=10, indent=2, _level=0):
    """Sorted-key JSON; floats carry `precision` significant digits, non-finite become strings."""
    obj = _plain(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _number(obj, precision)
    if isinstance(obj, str):
        import json
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sorted((str(k), v) for k, v in obj.items())
        body = ",\n".join(f"{pad}{dumps(k)}: {dumps(v, precision, indent, _level + 1)}" for k, v in items)
        return "{\n" + body + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(_plain(v), (int, float, type(None))) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v, precision) for v in obj) + "]"
        body = ",\n".join(pad + dumps(v, precision, indent, _level + 1) for v in obj)
        return "[\n" + body + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_report(report, out_dir, name="report.json"):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json() + "\n")
    return path


def write_csv(rows, columns, path, precision=10):
    """Comma-separated table with a header row; floats use the report precision."""
    import csv

    def cell(v):
        if v is None:
            return ""
        if isinstance(v, (bool, np.bool_)):
            return "true" if v else "false"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return _number(v, precision).strip('"')
        return str(v)

    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([cell(r.get(c)) for c in columns])
    return path


# plot data -------------------------------------------------------------------------

PLOT_KINDS = {
    "ldp-curve": ("eps", "minus_eps_log_p", "wilson_lo", "wilson_hi", "delta_ref"),
    "picard-trace": ("iteration", "sup_time_W2"),
    "strassen-j-sweep": ("j", "u", "d_alpha_to_K", "A_jc"),
    "continuity-fit": ("log_lag", "log_mean_sq", "fitted"),
}


def _plot_rows(results, kind):
    if kind == "ldp-curve":
        est = results["estimate"]
        return [(e, r, lo, hi, est["reference"]) for e, r, (lo, hi)
                in zip(est["eps"], est["rate_hat"], est["rate_bounds"])]
    if kind == "picard-trace":
        return [(k + 1, v) for k, v in enumerate(results["convergence_trace"])]
    if kind == "strassen-j-sweep":
        return [(r["j"], r["u"], r["d_alpha_to_K"], r["A_jc"]) for r in results["levels"]]
    if kind == "continuity-fit":
        c = results["continuity"]
        return [(lx, ly, c["intercept"] + c["slope"] * lx) for lx, ly in zip(c["log_lags"], c["log_mean_sq"])]
    raise ConfigError(f"unknown plot kind '{kind}'; choose from {sorted(PLOT_KINDS)}")


def emit_plot_data(report, kind, out_dir, precision=10):
    """Whitespace-separated columns in out_dir/<kind>.dat with a '# col ...' header."""
    if kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind '{kind}'; choose from {sorted(PLOT_KINDS)}")
    results = report.results if isinstance(report, ExperimentReport) else report.get("results", report)
    try:
        rows = _plot_rows(results, kind)
    except KeyError as exc:
        raise ConfigError(f"report has no data for plot kind '{kind}' (missing {exc})") from None
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{kind}.dat")

    def cell(v):
        if v is None:
            return "nan"
        if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
            return str(int(v))
        s = _number(v, precision)
        return s.strip('"')

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# " + " ".join(PLOT_KINDS[kind]) + "\n")
        for r in rows:
            fh.write(" ".join(cell(v) for v in r) + "\n")
    return path
