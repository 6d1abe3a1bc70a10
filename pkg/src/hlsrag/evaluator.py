"""Synthesis of candidates and the pass@k / latency / resource metrics.

Every toolchain report is normalised into :class:`SynthesisReport`. The
normalised JSON form, which is also what the mock adapter and
``baseline_report`` files use, looks like::

    {"cycles": 3008,          # worst-case latency in clock cycles
     "avg_cycles": 2990,      # optional average-case latency
     "clock_ns": 10.0,        # target clock period
     "dsp": 6, "ff": 1223, "lut": 1752,
     "latency_us": 30.08}     # optional, cross-checked against cycles x clock

A ``{"synthesizable": false}`` object (or ``null`` in mock scripts) marks
a failed synthesis.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import shlex
import shutil
import subprocess
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import (
    ConfigError,
    InvalidInputError,
    ReportConsistencyError,
    ReportParseError,
    ToolNotFoundError,
)
from .generator import CandidateCode

logger = logging.getLogger(__name__)

LATENCY_TOLERANCE = 0.005
PARSERS = ("vivado-xml", "normalized-json", "mock")
DASH = "—"


@dataclass(frozen=True)
class SynthesisReport:
    synthesizable: bool
    latency_us: float | None = None
    clock_period_ns: float | None = None
    cycles: int | None = None
    worst_cycles: int | None = None
    avg_cycles: int | None = None
    latency_basis: str | None = None  # "average" | "worst"
    dsp: int | None = None
    ff: int | None = None
    lut: int | None = None
    tool_log_path: str | None = None
    timed_out: bool = False
    error: str | None = None

    def __post_init__(self):
        if not self.synthesizable:
            if any(v is not None for v in (self.latency_us, self.dsp, self.ff, self.lut)):
                raise InvalidInputError("a non-synthesizable report cannot carry latency or resources")
            return
        if self.latency_us is None or not self.latency_us > 0:
            raise InvalidInputError(f"synthesizable report needs a positive latency, got {self.latency_us}")
        for name in ("dsp", "ff", "lut"):
            v = getattr(self, name)
            if v is None or v < 0:
                raise InvalidInputError(f"{name} must be a non-negative integer, got {v}")
        if self.cycles is not None and self.clock_period_ns is not None:
            check_latency(self.latency_us, self.cycles, self.clock_period_ns)

    def to_dict(self) -> dict:
        return asdict(self)


def failed_report(error: str | None = None, *, timed_out: bool = False, tool_log_path: str | None = None) -> SynthesisReport:
    return SynthesisReport(False, error=error, timed_out=timed_out, tool_log_path=tool_log_path)


def check_latency(latency_us: float, cycles: int, clock_ns: float) -> None:
    expected = cycles * clock_ns / 1000.0
    if abs(latency_us - expected) > LATENCY_TOLERANCE * latency_us:
        raise ReportConsistencyError(
            f"latency {latency_us} us disagrees with {cycles} cycles x {clock_ns} ns = {expected:.6g} us "
            f"(tolerance {LATENCY_TOLERANCE:.1%})",
            key="latency_us",
        )


def _report_from_numbers(worst, avg, clock_ns, dsp, ff, lut, stated_us=None, log=None) -> SynthesisReport:
    if avg is not None:
        cycles, basis = avg, "average"
    else:
        cycles, basis = worst, "worst"
    latency = cycles * clock_ns / 1000.0
    if stated_us is not None:
        check_latency(stated_us, cycles, clock_ns)
    return SynthesisReport(
        True, latency_us=latency, clock_period_ns=clock_ns, cycles=cycles,
        worst_cycles=worst, avg_cycles=avg, latency_basis=basis,
        dsp=dsp, ff=ff, lut=lut, tool_log_path=log,
    )


def _req(obj: dict, key: str, kind, where: str):
    if key not in obj or obj[key] is None:
        raise ReportParseError(f"{where}: missing required field {key!r}", key=key, location=where)
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ReportParseError(f"{where}: field {key!r} is not a number: {v!r}", key=key, location=where)
    if kind is int:
        if float(v) != int(v):
            raise ReportParseError(f"{where}: field {key!r} must be an integer, got {v!r}", key=key, location=where)
        return int(v)
    return float(v)


def report_from_normalized(obj: dict | None, where: str = "<report>", log: str | None = None) -> SynthesisReport:
    if obj is None:
        return failed_report(tool_log_path=log)
    if not isinstance(obj, dict):
        raise ReportParseError(f"{where}: expected a JSON object", location=where)
    if obj.get("synthesizable") is False:
        return failed_report(obj.get("error"), tool_log_path=log)
    worst = _req(obj, "cycles", int, where)
    avg = _req(obj, "avg_cycles", int, where) if obj.get("avg_cycles") is not None else None
    clock = _req(obj, "clock_ns", float, where)
    dsp, ff, lut = (_req(obj, k, int, where) for k in ("dsp", "ff", "lut"))
    stated = _req(obj, "latency_us", float, where) if obj.get("latency_us") is not None else None
    if worst <= 0 or (avg is not None and avg <= 0) or clock <= 0:
        raise ReportParseError(f"{where}: cycles and clock_ns must be positive", location=where)
    return _report_from_numbers(worst, avg, clock, dsp, ff, lut, stated, log)


def to_normalized(report: SynthesisReport) -> dict:
    if not report.synthesizable:
        return {"synthesizable": False}
    out = {
        "cycles": report.worst_cycles if report.worst_cycles is not None else report.cycles,
        "clock_ns": report.clock_period_ns,
        "dsp": report.dsp, "ff": report.ff, "lut": report.lut,
        "latency_us": report.latency_us,
    }
    if report.avg_cycles is not None:
        out["avg_cycles"] = report.avg_cycles
    return out


# XPaths into a Vivado/Vitis HLS <top>_csynth.xml
X_CLOCK = "UserAssignments/TargetClockPeriod"
X_WORST = "PerformanceEstimates/SummaryOfOverallLatency/Worst-caseLatency"
X_AVG = "PerformanceEstimates/SummaryOfOverallLatency/Average-caseLatency"
X_WORST_RT = "PerformanceEstimates/SummaryOfOverallLatency/Worst-caseRealTimeLatency"
X_AVG_RT = "PerformanceEstimates/SummaryOfOverallLatency/Average-caseRealTimeLatency"
X_RES = "AreaEstimates/Resources"
DSP_TAGS = ("DSP48E", "DSP", "DSP48E1", "DSP48E2", "DSP58E2")
_TIME_UNITS = {"ns": 1e-3, "us": 1.0, "ms": 1e3, "s": 1e6}


def _xml_int(root, path: str) -> int | None:
    text = root.findtext(path)
    if text is None:
        return None
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return None  # "undef" and friends


def _xml_required_number(root, path: str, kind=float):
    text = root.findtext(path)
    if text is None:
        raise ReportParseError(f"vivado-xml: missing element {path}", key=path, location=path)
    try:
        return kind(text.strip())
    except ValueError as exc:
        raise ReportParseError(f"vivado-xml: {path} is not a number: {text!r}", key=path, location=path) from exc


def _real_time_us(text: str | None) -> float | None:
    if not text:
        return None
    m = re.match(r"\s*([0-9.]+(?:[eE][-+]?\d+)?)\s*(ns|us|ms|s)\s*$", text)
    if not m:
        return None
    return float(m.group(1)) * _TIME_UNITS[m.group(2)]


def parse_vivado_xml(data: str | bytes, log: str | None = None) -> SynthesisReport:
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line, col = exc.position
        raise ReportParseError(f"vivado-xml: malformed XML at line {line}, column {col}", location=f"{line}:{col}") from exc
    clock = _xml_required_number(root, X_CLOCK)
    worst = _xml_int(root, X_WORST)
    if worst is None:
        raise ReportParseError(f"vivado-xml: missing or non-numeric {X_WORST}", key=X_WORST, location=X_WORST)
    avg = _xml_int(root, X_AVG)
    res = root.find(X_RES)
    if res is None:
        raise ReportParseError(f"vivado-xml: missing element {X_RES}", key=X_RES, location=X_RES)
    dsp_tag = next((t for t in DSP_TAGS if res.find(t) is not None), None)
    if dsp_tag is None:
        raise ReportParseError(f"vivado-xml: missing element {X_RES}/DSP48E", key=f"{X_RES}/DSP48E", location=X_RES)
    dsp = _xml_required_number(root, f"{X_RES}/{dsp_tag}", int)
    ff = _xml_required_number(root, f"{X_RES}/FF", int)
    lut = _xml_required_number(root, f"{X_RES}/LUT", int)
    stated = _real_time_us(root.findtext(X_AVG_RT)) if avg is not None else _real_time_us(root.findtext(X_WORST_RT))
    return _report_from_numbers(worst, avg, clock, dsp, ff, lut, stated, log)


def parse_report(path: str | os.PathLike, fmt: str, log: str | None = None) -> SynthesisReport:
    """Read a toolchain report file in the given format (``vivado-xml`` or ``normalized-json``)."""
    path = Path(path)
    if fmt == "vivado-xml":
        return parse_vivado_xml(path.read_bytes(), log)
    if fmt in ("normalized-json", "mock"):
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ReportParseError(
                f"{path.name}: malformed JSON at line {exc.lineno}, column {exc.colno}",
                location=f"{exc.lineno}:{exc.colno}",
            ) from exc
        return report_from_normalized(obj, path.name, log)
    raise ConfigError(f"unknown report format {fmt!r}")


@dataclass(frozen=True)
class ToolchainAdapter:
    command_template: str = "mock {src}"
    report_locator: str = "report.json"
    parser: str = "mock"
    timeout_s: float = 900.0
    mock_script: str | None = None

    def __post_init__(self):
        if "{src}" not in self.command_template:
            raise ConfigError("command_template must contain {src}")
        if self.parser not in PARSERS:
            raise ConfigError(f"unknown report parser {self.parser!r}; expected one of {PARSERS}")


@dataclass(frozen=True)
class BenchmarkBundle:
    """A benchmark directory described by its ``benchmark.json``."""

    root: Path
    name: str
    top_function: str
    source: str
    harness: tuple[str, ...] = ()
    tool_script: str | None = None
    clock_ns: float | None = None
    device: str | None = None
    baseline_report: str | None = None

    @classmethod
    def load(cls, root: str | os.PathLike) -> "BenchmarkBundle":
        root = Path(root)
        meta_path = root / "benchmark.json"
        if not meta_path.is_file():
            raise ConfigError(f"benchmark bundle {str(root)!r} has no benchmark.json")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        try:
            bundle = cls(
                root=root, name=meta["name"], top_function=meta["top_function"], source=meta["source"],
                harness=tuple(meta.get("harness", ())), tool_script=meta.get("tool_script"),
                clock_ns=meta.get("clock_ns"), device=meta.get("device"),
                baseline_report=meta.get("baseline_report"),
            )
        except KeyError as exc:
            raise ConfigError(f"benchmark.json is missing {exc.args[0]!r}") from exc
        for rel in (bundle.source, *bundle.harness, *filter(None, [bundle.tool_script, bundle.baseline_report])):
            if not (root / rel).is_file():
                raise ConfigError(f"benchmark file {rel!r} not found in {str(root)!r}")
        return bundle

    def baseline_source(self) -> str:
        return (self.root / self.source).read_text(encoding="utf-8")


def _substitute(template: str, values: dict[str, str]) -> str:
    # only known placeholders; tool scripts are Tcl and full of braces
    for key, val in values.items():
        template = template.replace("{" + key + "}", val)
    return template


class MockToolchain:
    """Scripted synthesis outcomes keyed by attempt index (``0`` is the baseline).

    Script JSON: ``{"reports": {"0": {...}, "1": null, ...}, "default": null}``
    where each value is a normalised report object or ``null`` for failure.
    """

    def __init__(self, script: dict):
        self.reports = {int(k): v for k, v in script.get("reports", {}).items()}
        self.default = script.get("default")

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "MockToolchain":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def report_for(self, attempt_index: int) -> dict | None:
        return self.reports.get(attempt_index, self.default)


def synthesize(
    candidate: CandidateCode,
    adapter: ToolchainAdapter,
    bundle: BenchmarkBundle,
    workdir: str | os.PathLike,
    mock: MockToolchain | None = None,
    log_root: str | os.PathLike | None = None,
) -> SynthesisReport:
    """Synthesize one candidate inside ``workdir`` and classify the outcome.

    Candidates with no code short-circuit to a failed report. A non-zero exit,
    a timeout, or a missing report file is a failed synthesis; a missing tool
    binary is a :class:`ToolNotFoundError` since no candidate could pass.
    """
    if candidate.code is None:
        return failed_report("no code extracted from the response")
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    src = workdir / Path(bundle.source).name
    src.write_text(candidate.code if candidate.code.endswith("\n") else candidate.code + "\n", encoding="utf-8")
    for rel in bundle.harness:
        shutil.copyfile(bundle.root / rel, workdir / Path(rel).name)

    values = {
        "src": str(src), "workdir": str(workdir), "top_function": bundle.top_function,
        "clock_ns": "" if bundle.clock_ns is None else str(bundle.clock_ns),
        "device": bundle.device or "",
        "testbench": " ".join(Path(h).name for h in bundle.harness),
    }
    log_path = workdir / "tool.log"
    log_ref = os.path.relpath(log_path, log_root).replace(os.sep, "/") if log_root else str(log_path)

    if adapter.parser == "mock":
        if mock is None:
            if not adapter.mock_script:
                raise ConfigError("mock adapter requires a mock_script")
            mock = MockToolchain.from_file(adapter.mock_script)
        obj = mock.report_for(candidate.attempt_index)
        log_path.write_text(f"mock synthesis of attempt {candidate.attempt_index}\n", encoding="utf-8")
        return report_from_normalized(obj, f"mock attempt {candidate.attempt_index}", log_ref)

    if bundle.tool_script:
        script = (bundle.root / bundle.tool_script).read_text(encoding="utf-8")
        (workdir / Path(bundle.tool_script).name).write_text(_substitute(script, values), encoding="utf-8")

    quoted = {k: shlex.quote(v) if k in ("src", "workdir") else v for k, v in values.items()}
    command = _substitute(adapter.command_template, quoted)
    argv0 = shlex.split(command)[0]
    if shutil.which(argv0) is None and not Path(argv0).is_file():
        raise ToolNotFoundError(f"synthesis tool {argv0!r} not found on PATH")

    try:
        with open(log_path, "wb") as log:
            proc = subprocess.run(command, shell=True, cwd=workdir, stdout=log, stderr=subprocess.STDOUT,
                                  timeout=adapter.timeout_s)
    except subprocess.TimeoutExpired:
        logger.warning("attempt %d timed out after %ss", candidate.attempt_index, adapter.timeout_s)
        return failed_report(f"timed out after {adapter.timeout_s}s", timed_out=True, tool_log_path=log_ref)
    if proc.returncode == 127:
        raise ToolNotFoundError(f"shell could not run {argv0!r} (exit 127), see {log_path}")
    if proc.returncode != 0:
        return failed_report(f"tool exited with status {proc.returncode}", tool_log_path=log_ref)

    pattern = _substitute(adapter.report_locator, {"top_function": bundle.top_function})
    found = sorted(workdir.glob(pattern))
    if not found:
        return failed_report(f"no report matching {pattern!r}", tool_log_path=log_ref)
    return parse_report(found[0], adapter.parser, log_ref)


def pass_at_k(reports: Sequence[SynthesisReport]) -> float:
    if not reports:
        raise InvalidInputError("pass@k of an empty report list")
    return sum(1 for r in reports if r.synthesizable) / len(reports)


def speedup(baseline_us: float, candidate_us: float) -> float:
    for name, v in (("baseline", baseline_us), ("candidate", candidate_us)):
        if v is None or not v > 0 or not math.isfinite(v):
            raise InvalidInputError(f"{name} latency must be positive and finite, got {v}")
    return baseline_us / candidate_us


@dataclass
class EvalRecord:
    benchmark: str
    k: int
    passes: int
    pass_at_k: float
    model: str = ""
    config: str = ""
    baseline_latency_us: float | None = None
    best_latency_us: float | None = None
    best_attempt: int | None = None
    speedup: float | None = None
    baseline: SynthesisReport | None = None
    reports: list[SynthesisReport] = field(default_factory=list)

    def __post_init__(self):
        if not 0 <= self.passes <= self.k:
            raise InvalidInputError(f"passes={self.passes} outside 0..{self.k}")

    @property
    def best(self) -> SynthesisReport | None:
        return None if self.best_attempt is None else self.reports[self.best_attempt - 1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["baseline"] = None if self.baseline is None else self.baseline.to_dict()
        d["reports"] = [r.to_dict() for r in self.reports]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalRecord":
        d = dict(d)
        d["baseline"] = None if d.get("baseline") is None else SynthesisReport(**d["baseline"])
        d["reports"] = [SynthesisReport(**r) for r in d.get("reports", [])]
        return cls(**d)


def evaluate_reports(reports: Sequence[SynthesisReport], benchmark: str, baseline: SynthesisReport | None = None,
                     model: str = "", config: str = "") -> EvalRecord:
    """Summarise one configuration's k reports; the best design is the fastest synthesizable one."""
    reports = list(reports)
    rate = pass_at_k(reports)
    passing = [(r.latency_us, i) for i, r in enumerate(reports, start=1) if r.synthesizable]
    best_us, best_i = min(passing) if passing else (None, None)
    base_us = baseline.latency_us if baseline is not None and baseline.synthesizable else None
    ratio = speedup(base_us, best_us) if base_us is not None and best_us is not None else None
    return EvalRecord(
        benchmark=benchmark, k=len(reports), passes=len(passing), pass_at_k=rate, model=model, config=config,
        baseline_latency_us=base_us, best_latency_us=best_us, best_attempt=best_i, speedup=ratio,
        baseline=baseline, reports=reports,
    )


def format_percent(rate: float) -> str:
    return f"{100 * rate:.0f}%"


def format_speedup(ratio: float | None) -> str:
    return DASH if ratio is None else f"{ratio:.2f}×"


def format_latency(us: float | None) -> str:
    return DASH if us is None else f"{us:.2f} µs"


def _grid(header: Sequence[str], rows: Sequence[Sequence[str]], title: str) -> str:
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    line = "-+-".join("-" * w for w in widths)
    fmt = lambda r: " | ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()
    return "\n".join([title, fmt(header), line, *(fmt(r) for r in rows)])


def render_tables(records: Sequence[EvalRecord]) -> tuple[str, dict]:
    """Pass-rate grid (model x configuration) and per-benchmark latency/resource grid."""
    records = sorted(records, key=lambda r: (r.benchmark, r.config, r.model))

    configs = sorted({r.config for r in records})
    models = sorted({r.model for r in records})
    t1_rows, t1_json = [], []
    for bench in sorted({r.benchmark for r in records}):
        for model in models:
            cells = []
            for cfg in configs:
                rec = next((r for r in records if (r.benchmark, r.model, r.config) == (bench, model, cfg)), None)
                cells.append(DASH if rec is None else format_percent(rec.pass_at_k))
                if rec is not None:
                    t1_json.append({"benchmark": bench, "model": model, "config": cfg, "k": rec.k,
                                    "passes": rec.passes, "pass_at_k": rec.pass_at_k})
            t1_rows.append([bench, model, *cells])
    table1 = _grid(["Benchmark", "Model", *configs], t1_rows, "Percentage of synthesizable candidates (pass@k)")

    t2_rows, t2_json = [], []
    for bench in sorted({r.benchmark for r in records}):
        group = [r for r in records if r.benchmark == bench]
        base = next((r.baseline for r in group if r.baseline is not None and r.baseline.synthesizable), None)
        if base is not None:
            row = {"benchmark": bench, "design": "Original", "dsp": base.dsp, "ff": base.ff, "lut": base.lut,
                   "latency_us": base.latency_us, "latency_basis": base.latency_basis, "speedup": 1.0}
            t2_json.append(row)
            t2_rows.append([bench, "Original", base.dsp, base.ff, base.lut, format_latency(base.latency_us),
                            format_speedup(1.0)])
        for rec in group:
            best = rec.best
            design = " ".join(filter(None, [rec.model, rec.config])) or "candidate"
            t2_json.append({
                "benchmark": bench, "design": design, "model": rec.model, "config": rec.config,
                "dsp": best.dsp if best else None, "ff": best.ff if best else None,
                "lut": best.lut if best else None, "latency_us": rec.best_latency_us,
                "latency_basis": best.latency_basis if best else None, "speedup": rec.speedup,
                "best_attempt": rec.best_attempt,
            })
            if best is None:
                t2_rows.append([bench, design, DASH, DASH, DASH, DASH, DASH])
            else:
                t2_rows.append([bench, design, best.dsp, best.ff, best.lut, format_latency(rec.best_latency_us),
                                format_speedup(rec.speedup)])
    table2 = _grid(["Benchmark", "Design", "DSP", "FF", "LUT", "Latency", "Speedup"], t2_rows,
                   "Latency and resource usage of the best synthesizable design")
    text = table1 + "\n\n" + table2 + "\n"
    return text, {"pass_rates": t1_json, "latency": t2_json}
