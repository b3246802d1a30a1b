"""Scenario configuration, usage traces and report serialization.

Configurations are JSON objects::

    {"name": "...", "num_slots": 24,
     "background_usage": [...]            # or "trace_path" + "trace_scale"
     "price_cap": 2000, "beta": 1e-4, "gamma": 1e-4, "xi": 5e-10, "d_max": 10,
     "user_types": [{"theta": 2, "count": 1000}, ...],
     "seed": 0, "format": "text"}

Relative trace paths resolve against the configuration file's directory.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .model import Scenario, ScenarioError, SolveReport

FORMATS = ("text", "csv")
_REQUIRED = ("price_cap", "beta", "gamma", "xi", "d_max", "user_types")


def fmt(value: float) -> str:
    """Render a number with 9 significant digits; infinities become ``inf``."""
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if v == 0:
        return "0"
    return f"{v:.9g}"


def parse_number(text: str) -> float:
    return float(text)


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed configuration: scenario fields plus run options."""

    scenario: Scenario
    trace_path: Path | None = None
    trace_scale: float | None = None
    seed: int = 0
    output_format: str = "text"
    tolerances: dict[str, float] = field(default_factory=dict)


def load_trace(path: str | Path, num_slots: int | None = None) -> np.ndarray:
    """Hourly usage from a ``hour,usage`` CSV, averaging repeated hours."""
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise ScenarioError("trace_path", f"cannot be read: {exc}") from exc
    with handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["hour", "usage"]:
            raise ScenarioError("trace_path", "needs a 'hour,usage' header")
        sums: dict[int, float] = {}
        seen: dict[int, int] = {}
        for row in reader:
            try:
                hour = int(row["hour"])
                usage = float(row["usage"])
            except (TypeError, ValueError) as exc:
                raise ScenarioError("trace_path", f"malformed row {row}") from exc
            if not 0 <= hour <= 23:
                raise ScenarioError("trace_path", f"hour {hour} outside 0..23")
            if not (math.isfinite(usage) and usage >= 0):
                raise ScenarioError("trace_path", f"usage {usage} must be finite and nonnegative")
            sums[hour] = sums.get(hour, 0.0) + usage
            seen[hour] = seen.get(hour, 0) + 1
    hours = sorted(sums)
    if hours != list(range(len(hours))):
        raise ScenarioError("trace_path", "hours must be contiguous from 0")
    usage = np.array([sums[h] / seen[h] for h in hours])
    if num_slots is not None and usage.size != num_slots:
        raise ScenarioError("trace_path", f"has {usage.size} hours but num_slots is {num_slots}")
    return usage


def _number(raw: dict[str, Any], key: str) -> float:
    try:
        return float(raw[key])
    except KeyError:
        raise ScenarioError(key, "is missing") from None
    except (TypeError, ValueError):
        raise ScenarioError(key, "must be a number") from None


def scenario_from_dict(raw: dict[str, Any], base_dir: Path | None = None) -> ScenarioConfig:
    for key in _REQUIRED:
        if key not in raw:
            raise ScenarioError(key, "is missing")
    types = raw["user_types"]
    if not isinstance(types, list) or not all(isinstance(t, dict) for t in types):
        raise ScenarioError("user_types", "must be a list of {theta, count} objects")
    try:
        thetas = [float(t["theta"]) for t in types]
    except (KeyError, TypeError, ValueError):
        raise ScenarioError("user_types.theta", "is missing or not a number") from None
    try:
        counts = [float(t["count"]) for t in types]
    except (KeyError, TypeError, ValueError):
        raise ScenarioError("user_types.count", "is missing or not a number") from None

    num_slots = raw.get("num_slots")
    trace_path = None
    scale = None
    if "trace_path" in raw:
        trace_path = Path(raw["trace_path"])
        if not trace_path.is_absolute() and base_dir is not None:
            trace_path = base_dir / trace_path
        scale = _number(raw, "trace_scale") if "trace_scale" in raw else None
        if scale is None or not scale > 0:
            raise ScenarioError("trace_scale", "must be positive when trace_path is set")
        raw_usage = load_trace(trace_path, num_slots)
        if raw_usage.sum() <= 0:
            raise ScenarioError("trace_path", "total usage must be positive")
        background = scale * raw_usage / raw_usage.sum()
    elif "background_usage" in raw:
        background = np.asarray(raw["background_usage"], dtype=float)
        if num_slots is not None and background.size != num_slots:
            raise ScenarioError("background_usage", f"has {background.size} entries but num_slots is {num_slots}")
    else:
        raise ScenarioError("background_usage", "is missing (give it or trace_path)")

    scenario = Scenario(
        background=background,
        price_cap=_number(raw, "price_cap"),
        beta=_number(raw, "beta"),
        gamma=_number(raw, "gamma"),
        xi=_number(raw, "xi"),
        thetas=thetas,
        counts=counts,
        d_max=_number(raw, "d_max"),
        name=str(raw.get("name", "scenario")),
    )
    out_format = raw.get("format", "text")
    if out_format not in FORMATS:
        raise ScenarioError("format", f"must be one of {FORMATS}")
    return ScenarioConfig(
        scenario, trace_path, scale, int(raw.get("seed", 0)), out_format,
        {k: float(v) for k, v in raw.get("tolerances", {}).items()},
    )


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError("scenario", f"cannot be read: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError("scenario", f"is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError("scenario", "must be a JSON object")
    return scenario_from_dict(raw, path.parent)


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario configuration file."""
    return load_config(path).scenario


def bundled_path(name: str = "replication.json") -> Path:
    return Path(str(resources.files("flpricing") / "data" / name))


def replication_scenario() -> Scenario:
    """The bundled replication setting on the synthetic background profile."""
    return load_scenario(bundled_path())


# -- report tables -----------------------------------------------------------

CONTRACT_COLUMNS = ("type", "theta", "count", "data_size", "reward", "payoff")
SLOT_COLUMNS = ("slot", "background", "users", "total_usage", "price", "slot_cost")


def contract_rows(report: SolveReport) -> list[list[str]]:
    s, k = report.scenario, report.contract
    return [
        [str(j), fmt(s.thetas[j]), fmt(s.counts[j]), fmt(k.data[j]), fmt(k.rewards[j]), fmt(report.user_payoffs[j])]
        for j in range(s.num_types)
    ]


def slot_rows(report: SolveReport) -> list[list[str]]:
    s = report.scenario
    n = report.demand.counts
    h = s.background
    p = report.prices.prices
    y = n + h
    return [
        [str(t), fmt(h[t]), fmt(n[t]), fmt(y[t]), fmt(p[t]), fmt(p[t] + s.beta * y[t] ** 2)]
        for t in range(s.num_slots)
    ]


def summary_items(report: SolveReport, extra: dict[str, Any] | None = None) -> list[tuple[str, str]]:
    items = [
        ("scenario", report.scenario.name),
        ("mechanism", report.mechanism),
        ("threshold_type", str(report.threshold)),
        ("common_network_cost", fmt(report.common_cost)),
        ("server_cost", fmt(report.server_cost)),
        ("operator_profit", fmt(report.operator_profit)),
        ("total_user_payoff", fmt(report.total_user_payoff)),
        ("selected_slots", " ".join(str(t) for t in report.demand.selected)),
    ]
    for key, value in (extra or {}).items():
        items.append((key, value if isinstance(value, str) else fmt(value)))
    return items


def _write_table(path: Path, header: Iterable[str], rows: list[list[str]], out_format: str):
    header = list(header)
    with path.open("w", newline="") as fh:
        if out_format == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        else:
            widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]
            for row in [header, *rows]:
                fh.write("  ".join(str(c).rjust(w) for c, w in zip(row, widths)).rstrip() + "\n")


def _write_summary(path: Path, items: list[tuple[str, str]], out_format: str):
    with path.open("w", newline="") as fh:
        if out_format == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["field", "value"])
            writer.writerows(items)
        else:
            width = max(len(k) for k, _ in items)
            for key, value in items:
                fh.write(f"{key.ljust(width)} = {value}\n")


def _suffix(out_format: str) -> str:
    return ".csv" if out_format == "csv" else ".txt"


def emit_report(
    report: SolveReport,
    out_format: str,
    out_dir: str | Path,
    extra: dict[str, Any] | None = None,
    prefix: str = "",
) -> list[Path]:
    """Write contract, slot and summary tables for ``report`` into ``out_dir``."""
    if out_format not in FORMATS:
        raise ScenarioError("format", f"must be one of {FORMATS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = _suffix(out_format)
    paths = [out / f"{prefix}contract{ext}", out / f"{prefix}slots{ext}", out / f"{prefix}summary{ext}"]
    _write_table(paths[0], CONTRACT_COLUMNS, contract_rows(report), out_format)
    _write_table(paths[1], SLOT_COLUMNS, slot_rows(report), out_format)
    _write_summary(paths[2], summary_items(report, extra), out_format)
    return paths


def emit_comparison(rows: list[dict[str, Any]], out_format: str, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = list(rows[0].keys())
    body = [[v if isinstance(v, str) else fmt(v) for v in row.values()] for row in rows]
    path = out / f"comparison{_suffix(out_format)}"
    _write_table(path, header, body, out_format)
    return path


def read_table(path: str | Path) -> list[dict[str, str]]:
    """Parse a table written by :func:`emit_report` in either format."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if path.suffix == ".csv":
        return list(csv.DictReader(lines))
    header = lines[0].split()
    return [dict(zip(header, line.split())) for line in lines[1:]]
