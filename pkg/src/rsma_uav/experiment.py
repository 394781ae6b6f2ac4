"""Sweep runner and CSV reporting.

Every run is one (method, scheme, SNR, seed, drop) combination. Runs that
share a seed and drop see the same users, start position and fading draw,
so schemes and methods are compared on identical channels. Output files
contain no timing data, which keeps reruns byte-identical.
"""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, Method
from .joint import JointSolution, alternating_optimize, avg_location_baseline
from .precoder import Scheme

TRACE_FIELDS = ["iteration", "scheme", "seed", "snr_db", "wsr_bps_hz", "wsr_bps",
                "uav_x", "uav_y", "uav_z"]
RUN_FIELDS = ["method", "scheme", "snr_db", "seed", "drop", "channel", "iterations",
              "wsr_bps_hz", "wsr_bps", "uav_x", "uav_y", "uav_z", "status", "trace_file"]
AGGREGATE_FIELDS = ["method", "scheme", "snr_db", "runs", "failed", "wsr_mean_bps_hz",
                    "wsr_min_bps_hz", "wsr_max_bps_hz", "wsr_mean_bps", "iterations_mean"]
RUNS_FILE = "runs.csv"
AGGREGATE_FILE = "aggregate.csv"


@dataclass(frozen=True)
class RunSpec:
    method: Method
    scheme: Scheme
    snr_db: float
    seed: int
    drop: int

    def file_name(self, drops: int) -> str:
        tail = f"_drop{self.drop}" if drops > 1 else ""
        return f"trace_{self.method.value}_{self.scheme.value}_snr{self.snr_db:g}_seed{self.seed}{tail}.csv"


@dataclass
class RunOutcome:
    spec: RunSpec
    rows: list[dict]
    summary: dict
    failed: bool


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def draw_instance(config: ExperimentConfig, seed: int, drop: int):
    """Users, start position and fading generator for one seed and drop."""
    users_ss, start_ss, fading_ss = np.random.SeedSequence([seed, drop]).spawn(3)
    sc = config.scenario
    if sc.users is not None:
        users = np.asarray(sc.users, dtype=float)
    else:
        rng = np.random.default_rng(users_ss)
        users = np.column_stack([rng.uniform(0.0, sc.area[0], sc.n_users),
                                 rng.uniform(0.0, sc.area[1], sc.n_users),
                                 np.zeros(sc.n_users)])
    box = sc.box.to_box()
    q0 = np.random.default_rng(start_ss).uniform(box.lower, box.upper)
    return users, q0, np.random.default_rng(fading_ss)


def plan(config: ExperimentConfig) -> list[RunSpec]:
    sw = config.sweep
    return [RunSpec(m, s, snr, seed, d)
            for m in sw.methods for s in sw.schemes for snr in sw.snr_db
            for seed in sw.seeds for d in range(sw.monte_carlo_drops)]


def solve_one(config: ExperimentConfig, spec: RunSpec) -> JointSolution:
    users, q0, fading = draw_instance(config, spec.seed, spec.drop)
    scenario = config.scenario_for(spec.snr_db, users).with_scatter(fading)
    params = config.solver.joint_params(spec.seed)
    if spec.method is Method.AVG_LOCATION:
        return avg_location_baseline(scenario, spec.scheme, params)
    return alternating_optimize(scenario, spec.scheme, params, q0=q0)


def _execute(args) -> RunOutcome:
    config, spec = args
    bw = config.scenario.bandwidth_hz
    k = config.scenario.n_users
    base = {"scheme": spec.scheme.value, "seed": spec.seed, "snr_db": spec.snr_db}
    try:
        sol = solve_one(config, spec)
    except Exception as exc:  # a failed run is recorded, never fatal
        status = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
        row = {"iteration": 0, **base, "wsr_bps_hz": math.nan, "wsr_bps": math.nan,
               "uav_x": math.nan, "uav_y": math.nan, "uav_z": math.nan,
               **{f"rate_user_{i + 1}": math.nan for i in range(k)}, "status": status}
        summary = {"iterations": 0, "wsr_bps_hz": math.nan, "wsr_bps": math.nan,
                   "uav_x": math.nan, "uav_y": math.nan, "uav_z": math.nan, "status": status}
        return RunOutcome(spec, [row], summary, True)
    rows = []
    for rec in sol.trace.records:
        pos = rec.position if rec.position is not None else (math.nan,) * 3
        rates = rec.rates if rec.rates else (math.nan,) * k
        rows.append({"iteration": rec.iteration, **base, "wsr_bps_hz": rec.wsr,
                     "wsr_bps": rec.wsr * bw, "uav_x": pos[0], "uav_y": pos[1], "uav_z": pos[2],
                     **{f"rate_user_{i + 1}": r for i, r in enumerate(rates)},
                     "status": rec.status})
    q = sol.uav_position
    summary = {"iterations": sol.trace.iterations, "wsr_bps_hz": sol.wsr, "wsr_bps": sol.wsr * bw,
               "uav_x": q[0], "uav_y": q[1], "uav_z": q[2], "status": sol.status}
    return RunOutcome(spec, rows, summary, False)


def _write_csv(path: Path, fields: list[str], rows: list[dict]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row[f]) for f in fields])


def aggregate(outcomes: list[RunOutcome], bandwidth: float = 1.0) -> list[dict]:
    groups: dict[tuple, list[RunOutcome]] = defaultdict(list)
    for out in outcomes:
        s = out.spec
        groups[(s.method.value, s.scheme.value, s.snr_db)].append(out)
    rows = []
    for (method, scheme, snr), outs in groups.items():
        ok = [o.summary for o in outs if not o.failed]
        wsr = np.array([o["wsr_bps_hz"] for o in ok])
        its = np.array([o["iterations"] for o in ok])
        rows.append({"method": method, "scheme": scheme, "snr_db": snr, "runs": len(outs),
                     "failed": len(outs) - len(ok),
                     "wsr_mean_bps_hz": wsr.mean() if ok else math.nan,
                     "wsr_min_bps_hz": wsr.min() if ok else math.nan,
                     "wsr_max_bps_hz": wsr.max() if ok else math.nan,
                     "wsr_mean_bps": wsr.mean() * bandwidth if ok else math.nan,
                     "iterations_mean": its.mean() if ok else math.nan})
    return rows


@dataclass
class ExperimentResult:
    out_dir: Path
    outcomes: list[RunOutcome]
    files: list[Path]

    @property
    def all_failed(self) -> bool:
        return bool(self.outcomes) and all(o.failed for o in self.outcomes)


def run_experiment(config: ExperimentConfig, out_dir=None, jobs: int = 1) -> ExperimentResult:
    """Run the full sweep and write trace, run and aggregate CSVs."""
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    specs = plan(config)
    tasks = [(config, s) for s in specs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_execute, tasks, chunksize=1))
    else:
        outcomes = [_execute(t) for t in tasks]

    k = config.scenario.n_users
    trace_fields = TRACE_FIELDS + [f"rate_user_{i + 1}" for i in range(k)] + ["status"]
    drops = config.sweep.monte_carlo_drops
    bw = config.scenario.bandwidth_hz
    files, run_rows = [], []
    for o in outcomes:
        name = o.spec.file_name(drops)
        _write_csv(out / name, trace_fields, o.rows)
        files.append(out / name)
        run_rows.append({"method": o.spec.method.value, "scheme": o.spec.scheme.value,
                         "snr_db": o.spec.snr_db, "seed": o.spec.seed, "drop": o.spec.drop,
                         "channel": config.scenario.channel, **o.summary, "trace_file": name})
    _write_csv(out / RUNS_FILE, RUN_FIELDS, run_rows)
    agg = aggregate(outcomes, bw)
    _write_csv(out / AGGREGATE_FILE, AGGREGATE_FIELDS, agg)
    files += [out / RUNS_FILE, out / AGGREGATE_FILE]
    return ExperimentResult(out, outcomes, files)


# ---------------------------------------------------------------------------
# summaries

ORDER_TOL = 1e-6


@dataclass(frozen=True)
class Check:
    label: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{self.label}: {'pass' if self.passed else 'FAIL'} ({self.detail})"


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def ordering_checks(runs: list[dict]) -> list[Check]:
    """Qualitative orderings on per-point median WSRs."""
    med: dict[tuple, float] = {}
    groups = defaultdict(list)
    channel = {}
    for r in runs:
        if r["status"].startswith("error"):
            continue
        key = (r["method"], r["scheme"], float(r["snr_db"]))
        groups[key].append(float(r["wsr_bps_hz"]))
        channel[float(r["snr_db"])] = r["channel"]
    for key, vals in groups.items():
        med[key] = float(np.median(vals))
    checks = []
    snrs = sorted({k[2] for k in med})
    pairs = [("rsma", "sdma"), ("sdma", "noma"), ("rsma", "noma")]
    for snr in snrs:
        for method in ("joint", "avg_location"):
            for a, b in pairs:
                if (method, a, snr) in med and (method, b, snr) in med:
                    va, vb = med[(method, a, snr)], med[(method, b, snr)]
                    checks.append(Check(f"{a.upper()} >= {b.upper()} [{method}, {snr:g} dB]",
                                        va >= vb - ORDER_TOL, f"{va:.6g} vs {vb:.6g}"))
        for scheme in ("rsma", "sdma", "noma"):
            if ("joint", scheme, snr) in med and ("avg_location", scheme, snr) in med:
                vj, va = med[("joint", scheme, snr)], med[("avg_location", scheme, snr)]
                checks.append(Check(f"joint >= avg_location [{scheme}, {snr:g} dB]",
                                    vj >= va - ORDER_TOL, f"{vj:.6g} vs {va:.6g}"))
        if channel.get(snr) == "rician" and snr <= 5 and \
                ("joint", "noma", snr) in med and ("joint", "sdma", snr) in med:
            vn, vs = med[("joint", "noma", snr)], med[("joint", "sdma", snr)]
            checks.append(Check(f"low-SNR NOMA >= SDMA [joint, {snr:g} dB]",
                                vn >= vs - ORDER_TOL, f"{vn:.6g} vs {vs:.6g}"))
    return checks


def summarize(directory) -> str:
    """Human-readable report of a finished sweep directory."""
    d = Path(directory)
    runs_path = d / RUNS_FILE
    if not d.is_dir() or not runs_path.exists():
        return f"no runs found in {d}"
    try:
        runs = _read_rows(runs_path)
    except (OSError, csv.Error, UnicodeDecodeError) as exc:
        return f"{runs_path}: unreadable ({exc})"
    if not runs:
        return f"no runs found in {d}"
    lines = [f"runs: {len(runs)} in {d}"]
    problems = []
    for r in runs:
        trace = d / r.get("trace_file", "")
        try:
            rows = _read_rows(trace)
            if not rows or "wsr_bps_hz" not in rows[0]:
                problems.append(f"{trace.name}: corrupt (no trace rows)")
        except FileNotFoundError:
            problems.append(f"{trace.name}: missing")
        except (OSError, csv.Error, UnicodeDecodeError) as exc:
            problems.append(f"{trace.name}: unreadable ({exc})")
    failed = [r for r in runs if r["status"].startswith("error")]
    if failed:
        lines.append(f"failed runs: {len(failed)}")
    groups = defaultdict(list)
    for r in runs:
        if not r["status"].startswith("error"):
            groups[(r["method"], float(r["snr_db"]), r["scheme"])].append(r)
    lines.append("")
    lines.append(f"{'method':<13}{'snr_db':>7}  {'scheme':<6}{'median wsr':>14}{'median Mbps':>13}{'iters':>7}")
    for (method, snr, scheme) in sorted(groups):
        rs = groups[(method, snr, scheme)]
        wsr = np.median([float(r["wsr_bps_hz"]) for r in rs])
        bps = np.median([float(r["wsr_bps"]) for r in rs])
        its = np.median([int(r["iterations"]) for r in rs])
        lines.append(f"{method:<13}{snr:>7g}  {scheme:<6}{wsr:>14.6g}{bps / 1e6:>13.4f}{its:>7g}")
    checks = ordering_checks(runs)
    if checks:
        lines.append("")
        lines.append("ordering checks (median over seeds):")
        lines += ["  " + c.line() for c in checks]
    if problems:
        lines.append("")
        lines.append("file problems:")
        lines += ["  " + p for p in problems]
    return "\n".join(lines)
