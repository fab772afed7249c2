"""Experiment runner: ``lab run <spec.json>`` and ``lab report <dir...>``.

A spec file holds one :class:`ExperimentSpec` as JSON. Outputs go to the
spec's output directory: ``runlog_<name>.csv`` per training run,
``report.json`` and ``plot_<name>.svg``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from html import escape
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .divergences import GaussianDist, empirical_w1_exact, jsd_gaussian, projection_coupling_cost
from .errors import ConfigError, LabError
from .gaussian_model import CovarianceModel, SampleSet, generate_covariance, sample_gaussian
from .linalg import frobenius_distance, orthonormalize, projector_distance
from .pca import empirical_pca, population_pca
from .r1pca import SubspaceBasis, estimate_m_matrix, generator_from_subspace, solve_key_condition
from .rng import RngStream
from .training import RunLog, TrainConfig, train

log = logging.getLogger(__name__)

MODES = ("train", "r1pca-verify", "jsd-demo", "w1-oracle", "sweep")
_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")

# stream ids shared by every mode that builds a ground-truth model and data
COV_STREAM, DATA_STREAM = 1, 2


@dataclass
class SolverParams:
    d: int = 8
    r: int = 3
    n_mc: int = 200000
    max_iter: int = 100
    tol: float = 1e-4
    n_cases: int = 5


@dataclass
class ExperimentSpec:
    name: str
    mode: str
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    solver: SolverParams = field(default_factory=SolverParams)
    n_list: list = field(default_factory=list)
    nh_list: list = field(default_factory=list)
    r_list: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str = "out"

    def validate(self) -> None:
        if not _NAME_RE.match(self.name):
            raise ConfigError(f"name {self.name!r} is not filesystem-safe")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "sweep" and not (self.n_list or self.nh_list or self.r_list):
            raise ConfigError("sweep mode needs at least one non-empty axis (n_list, nh_list, r_list)")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        self.train.validate()

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentSpec":
        obj = dict(obj)
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown spec fields: {sorted(unknown)}")
        try:
            obj["train"] = TrainConfig(**obj.get("train", {}))
            obj["solver"] = SolverParams(**obj.get("solver", {}))
            spec = cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        out = asdict(self)
        out["train"] = self.train.to_dict()
        return out


@dataclass
class Report:
    name: str
    mode: str
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    aborted: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "Report":
        return cls(**obj)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n")
        return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def config_hash(cfg: TrainConfig) -> str:
    text = json.dumps(cfg.to_dict(), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


# --------------------------------------------------------------------------
# file emitters


def emit_csv(runlog: RunLog, path) -> Path:
    path = Path(path)
    path.write_text(runlog.to_csv())
    return path


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def _axis(values: list[float], logscale: bool):
    """Return ``(transform, lo, hi, ticks)`` for one axis."""
    if logscale:
        if any(v <= 0 for v in values):
            raise ConfigError("log axis needs positive values")
        tv = [math.log10(v) for v in values]
        lo, hi = math.floor(min(tv)), math.ceil(max(tv))
        if lo == hi:
            hi = lo + 1
        return math.log10, lo, hi, [10.0 ** k for k in range(lo, hi + 1)]
    lo, hi = min(values), max(values)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return (lambda v: v), lo, hi, _nice_ticks(lo, hi)


def _fmt_tick(v: float, logscale: bool) -> str:
    if logscale:
        return f"1e{int(round(math.log10(v)))}"
    return f"{v:.4g}"


def emit_svg_plot(series: Sequence[tuple], path, xlog: bool = False, ylog: bool = False,
                  title: str = "", xlabel: str = "", ylabel: str = "") -> Path:
    """Write a standalone SVG line chart.

    ``series`` is a list of ``(label, xs, ys)``; non-finite points are dropped.
    """
    if not series:
        raise ConfigError("no series to plot")
    clean = []
    for label, xs, ys in series:
        if len(xs) != len(ys):
            raise ConfigError(f"series {label!r}: {len(xs)} x values vs {len(ys)} y values")
        pts = [(float(x), float(y)) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
        clean.append((str(label), pts))
    all_x = [p[0] for _, pts in clean for p in pts]
    all_y = [p[1] for _, pts in clean for p in pts]
    if not all_x:
        raise ConfigError("series contain no finite points")
    fx, x0, x1, xticks = _axis(all_x, xlog)
    fy, y0, y1, yticks = _axis(all_y, ylog)
    w, h, ml, mr, mt, mb = 640, 400, 70, 160, 40, 50
    pw, ph = w - ml - mr, h - mt - mb

    def sx(v):
        return ml + (fx(v) - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + ph - (fy(v) - y0) / (y1 - y0) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
           f'<rect width="{w}" height="{h}" fill="white"/>',
           f'<text x="{ml}" y="20" font-size="14">{escape(title)}</text>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in xticks:
        if x0 - 1e-12 <= fx(t) <= x1 + 1e-12:
            x = sx(t)
            out.append(f'<line x1="{x:.2f}" y1="{mt + ph}" x2="{x:.2f}" y2="{mt + ph + 5}" stroke="black"/>')
            out.append(f'<text class="xtick" x="{x:.2f}" y="{mt + ph + 18}" font-size="11" '
                       f'text-anchor="middle">{_fmt_tick(t, xlog)}</text>')
    for t in yticks:
        if y0 - 1e-12 <= fy(t) <= y1 + 1e-12:
            y = sy(t)
            out.append(f'<line x1="{ml - 5}" y1="{y:.2f}" x2="{ml}" y2="{y:.2f}" stroke="black"/>')
            out.append(f'<text class="ytick" x="{ml - 8}" y="{y + 4:.2f}" font-size="11" '
                       f'text-anchor="end">{_fmt_tick(t, ylog)}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{h - 10}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{mt + ph / 2}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 15 {mt + ph / 2})">{escape(ylabel)}</text>')
    for i, (label, pts) in enumerate(clean):
        color = colors[i % len(colors)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        if len(pts) > 1:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        for x, y in pts:
            out.append(f'<circle class="marker" cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" fill="{color}"/>')
        ly = mt + 15 + 18 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text class="legend" x="{ml + pw + 35}" y="{ly + 4}" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path


# --------------------------------------------------------------------------
# modes


def _ground_truth(d: int, n: int, seed: int) -> tuple[CovarianceModel, SampleSet]:
    cov = generate_covariance(d, RngStream(seed, COV_STREAM))
    return cov, sample_gaussian(cov, n, RngStream(seed, DATA_STREAM))


def train_job(cfg_dict: dict) -> tuple[dict, str, str]:
    """Build data for a config, train, and summarize; returns ``(row, csv_text, status)``.

    Takes and returns plain data so it can run in a worker process.
    """
    cfg = TrainConfig(**cfg_dict)
    cov, data = _ground_truth(cfg.d, cfg.n, cfg.seed)
    pop = population_pca(cov, cfg.r)
    emp = empirical_pca(data, cfg.r)
    _, runlog = train(cfg, data, cov)
    final = runlog.final
    baseline = frobenius_distance(cov.k_y, pop.generator_gram)
    emp_res = frobenius_distance(cov.k_y, emp.generator_gram)
    row = {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "d": cfg.d,
        "r": cfg.r,
        "n": cfg.n,
        "n_h": cfg.hidden[0] if cfg.hidden else 0,
        "algorithm": cfg.algorithm,
        "gen_iters": final.gen_iter,
        "final_frob_to_truth": final.frob_to_truth,
        "population_pca_residual": baseline,
        "empirical_pca_residual": emp_res,
        "frob_to_empirical_pca": final.frob_to_empirical_pca,
        "gap": final.frob_to_truth - baseline,
        "gap_to_empirical_pca": final.frob_to_truth - emp_res,
        "status": runlog.status,
    }
    return row, runlog.to_csv(), runlog.status


def _lab_threads() -> int:
    try:
        return max(1, int(os.environ.get("LAB_THREADS", "1")))
    except ValueError as exc:
        raise ConfigError("LAB_THREADS must be an integer") from exc


def _run_jobs(cfgs: list[dict]) -> list[tuple[dict, str, str]]:
    workers = min(_lab_threads(), len(cfgs))
    if workers <= 1:
        return [train_job(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(train_job, cfgs))


def _curve_series(runlog: RunLog, label: str, baseline: float):
    it = runlog.column("gen_iter").tolist()
    return [(label, it, runlog.column("frob_to_truth").tolist()),
            ("r-PCA baseline", [it[0], it[-1]], [baseline, baseline])]


def run_train(spec: ExperimentSpec, out: Path) -> Report:
    report = Report(spec.name, spec.mode)
    series = []
    cfgs = [{**spec.train.to_dict(), "seed": s} for s in spec.seeds]
    for cfg, (row, text, status) in zip(cfgs, _run_jobs(cfgs)):
        tag = spec.name if len(spec.seeds) == 1 else f"{spec.name}_s{cfg['seed']}"
        (out / f"runlog_{tag}.csv").write_text(text)
        report.rows.append(row)
        report.aborted |= status != "ok"
        runlog = RunLog.from_csv(text)
        series.append((f"{row['algorithm']} seed {row['seed']}", runlog.column("gen_iter").tolist(),
                       runlog.column("frob_to_truth").tolist()))
    base = report.rows[0]["population_pca_residual"]
    last = max(r["gen_iters"] for r in report.rows)
    series.append(("r-PCA baseline", [0, max(last, 1)], [base, base]))
    emit_svg_plot(series, out / f"plot_{spec.name}.svg", ylog=True, title=spec.name,
                  xlabel="generator iteration", ylabel="||K_Y - GG^T||_F")
    finals = [r["final_frob_to_truth"] for r in report.rows]
    report.summary = {"median_final_frob_to_truth": float(np.median(finals)),
                      "median_gap": float(np.median([r["gap"] for r in report.rows]))}
    return report


def run_r1pca_verify(spec: ExperimentSpec, out: Path) -> Report:
    p = spec.solver
    report = Report(spec.name, spec.mode)
    for seed in spec.seeds:
        for case in range(p.n_cases):
            stream = RngStream(seed, 100 + case)
            cov = generate_covariance(p.d, stream.child(0))
            t0 = time.process_time()
            basis = solve_key_condition(cov, p.r, p.n_mc, p.max_iter, p.tol, stream.child(1))
            cpu = time.process_time() - t0
            v_r = cov.eig.top(p.r)
            kc = estimate_m_matrix(cov, SubspaceBasis(orthonormalize(v_r)), p.n_mc, stream.child(2))
            report.rows.append({
                "seed": seed, "case": case, "d": p.d, "r": p.r,
                "projector_distance": projector_distance(basis.u, v_r),
                "gram_distance": frobenius_distance(generator_from_subspace(cov, basis),
                                                    population_pca(cov, p.r).generator_gram),
                "iterations": basis.iterations,
                "ordering_ok": kc.ordering_ok,
                "cross_term_max": kc.cross_term_max,
                "std_err": kc.std_err,
                "cpu_seconds": round(cpu, 3),
            })
    dists = [r["projector_distance"] for r in report.rows]
    report.summary = {"max_projector_distance": max(dists),
                      "all_ordering_ok": all(r["ordering_ok"] for r in report.rows)}
    emit_svg_plot([("projector distance", list(range(1, len(dists) + 1)), dists)],
                  out / f"plot_{spec.name}.svg", ylog=True, title=spec.name, xlabel="case",
                  ylabel="||U U^T - V_r V_r^T||_F")
    return report


def run_jsd_demo(spec: ExperimentSpec, out: Path) -> Report:
    p = spec.solver
    report = Report(spec.name, spec.mode)
    for seed in spec.seeds:
        stream = RngStream(seed, 200)
        cov = generate_covariance(p.d, stream.child(0))
        data = GaussianDist.from_cov(cov.k_y)
        gen = stream.child(1).generator()
        for case in range(p.n_cases):
            rank = int(gen.integers(1, p.d))
            g = gen.standard_normal((p.d, rank))
            est = jsd_gaussian(data, GaussianDist.from_generator(g), 1000, stream.child(2 + case))
            report.rows.append({"seed": seed, "case": case, "d": p.d, "rank": rank, "jsd": est.value,
                                "is_log2": est.value == math.log(2)})
    vals = [r["jsd"] for r in report.rows]
    report.summary = {"all_log2": all(r["is_log2"] for r in report.rows), "log2": math.log(2)}
    emit_svg_plot([("JSD", list(range(1, len(vals) + 1)), vals),
                   ("log 2", [1, max(len(vals), 2)], [math.log(2)] * 2)],
                  out / f"plot_{spec.name}.svg", title=spec.name, xlabel="case", ylabel="JSD")
    return report


def run_w1_oracle(spec: ExperimentSpec, out: Path) -> Report:
    p = spec.solver
    report = Report(spec.name, spec.mode)
    cov = CovarianceModel.from_matrix(np.diag([0.8, 0.6]))
    basis = SubspaceBasis(cov.eig.top(1))
    proj = projection_coupling_cost(cov, basis, p.n_mc, RngStream(spec.seed, 300))
    p_mat = basis.projector()
    for seed in spec.seeds:
        stream = RngStream(seed, 301)
        a = sample_gaussian(cov, 512, stream.child(0))
        b_src = sample_gaussian(cov, 512, stream.child(1))
        b = SampleSet.from_array(b_src.samples @ p_mat)
        exact = empirical_w1_exact(a, b)
        report.rows.append({"seed": seed, "empirical_w1": exact.cost,
                            "identity_pairing": float(np.mean(np.linalg.norm(a.samples - b.samples, axis=1))),
                            "projection_cost": proj.cost, "projection_std_err": proj.std_err})
    w = np.array([r["empirical_w1"] for r in report.rows])
    report.summary = {"projection_cost": proj.cost, "projection_std_err": proj.std_err,
                      "empirical_w1_mean": float(w.mean()),
                      "empirical_w1_spread": float(w.std(ddof=1)) if len(w) > 1 else 0.0}
    emit_svg_plot([("exact W1 (512 pts)", list(range(1, len(w) + 1)), w.tolist()),
                   ("projection cost", [1, max(len(w), 2)], [proj.cost] * 2)],
                  out / f"plot_{spec.name}.svg", title=spec.name, xlabel="seed index", ylabel="cost")
    return report


def run_sweep(spec: ExperimentSpec, out: Path) -> Report:
    base = spec.train.to_dict()
    n_axis = spec.n_list or [base["n"]]
    h_axis = spec.nh_list or [base["hidden"][0]]
    r_axis = spec.r_list or [base["r"]]
    depth = len(base["hidden"])
    cfgs = []
    for n in n_axis:
        for nh in h_axis:
            for r in r_axis:
                for seed in spec.seeds:
                    cfgs.append({**base, "n": int(n), "r": int(r), "hidden": [int(nh)] * depth, "seed": int(seed)})
    report = Report(spec.name, spec.mode)
    for cfg, (row, text, status) in zip(cfgs, _run_jobs(cfgs)):
        tag = f"{spec.name}_n{cfg['n']}_h{cfg['hidden'][0]}_r{cfg['r']}_s{cfg['seed']}"
        (out / f"runlog_{tag}.csv").write_text(text)
        report.rows.append(row)
        report.aborted |= status != "ok"
    report = compare_report([report])
    report.name, report.mode = spec.name, spec.mode
    groups = {}
    for row in report.rows:
        groups.setdefault((row["n_h"], row["r"]), {}).setdefault(row["n"], []).append(row)
    series, medians = [], []
    for (nh, r), by_n in sorted(groups.items()):
        ns = sorted(by_n)
        med = [float(np.median([x["gap_to_empirical_pca"] for x in by_n[n]])) for n in ns]
        medians.append({"n_h": nh, "r": r, "n": ns, "median_gap_to_empirical_pca": med,
                        "median_gap": [float(np.median([x["gap"] for x in by_n[n]])) for n in ns],
                        "median_frob_to_empirical_pca": [
                            float(np.median([x["frob_to_empirical_pca"] for x in by_n[n]])) for n in ns]})
        series.append((f"n_h={nh}, r={r}", ns, med))
    report.summary = {"medians": medians}
    emit_svg_plot(series, out / f"plot_{spec.name}.svg", xlog=True, ylog=True, title=spec.name,
                  xlabel="n", ylabel="gap to empirical r-PCA")
    return report


RUNNERS = {"train": run_train, "r1pca-verify": run_r1pca_verify, "jsd-demo": run_jsd_demo,
           "w1-oracle": run_w1_oracle, "sweep": run_sweep}


def run(spec: ExperimentSpec, out_dir=None) -> Report:
    """Execute ``spec``; writes outputs and returns the report."""
    spec.validate()
    out = Path(out_dir or spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = RUNNERS[spec.mode](spec, out)
    report.provenance = {"seed": spec.seed, "seeds": list(spec.seeds), "artifact_version": __version__,
                         "spec": spec.to_dict()}
    if os.environ.get("LAB_TIMESTAMPS"):
        report.provenance["created_utc"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    report.write(out / "report.json")
    return report


def compare_report(runs: Sequence[Report]) -> Report:
    """Merge training rows from several reports into one table sorted by ``(n, n_h)``."""
    rows = [row for rep in runs for row in rep.rows]
    if not rows:
        raise ConfigError("no rows to compare")
    need = ("d", "r", "n", "n_h", "final_frob_to_truth", "population_pca_residual", "empirical_pca_residual",
            "frob_to_empirical_pca")
    for row in rows:
        missing = [k for k in need if k not in row]
        if missing:
            raise ConfigError(f"row lacks training fields {missing}")
    if len({row["d"] for row in rows}) > 1:
        raise ConfigError("reports have different d")
    if len({row["r"] for row in rows}) > 1 and not any(rep.mode == "sweep" for rep in runs):
        raise ConfigError("reports have different r")
    merged = []
    for row in rows:
        row = dict(row)
        row["gap"] = row["final_frob_to_truth"] - row["population_pca_residual"]
        row["gap_to_empirical_pca"] = row["final_frob_to_truth"] - row["empirical_pca_residual"]
        merged.append(row)
    merged.sort(key=lambda x: (x["n"], x["n_h"], x["r"], x.get("seed", 0)))
    return Report("merged", "compare", merged, aborted=any(rep.aborted for rep in runs))


def _format_table(report: Report) -> str:
    cols = ["n", "n_h", "r", "seed", "final_frob_to_truth", "population_pca_residual", "empirical_pca_residual",
            "gap", "gap_to_empirical_pca"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in report.rows:
        w.writerow([format(row[c], ".6g") if isinstance(row[c], float) else row[c] for c in cols])
    return buf.getvalue()


# --------------------------------------------------------------------------
# command line


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(obj: dict, overrides: Sequence[str]) -> dict:
    """Apply ``a.b.c=value`` assignments; values are parsed as JSON when possible."""
    obj = json.loads(json.dumps(obj))
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        parts = key.split(".")
        node = obj
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {key!r} crosses a non-object field")
        node[parts[-1]] = _parse_value(value)
    return obj


def load_spec(path, overrides: Sequence[str] = (), seed: int | None = None) -> ExperimentSpec:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read spec {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("spec must be a JSON object")
    obj = apply_overrides(obj, overrides)
    if seed is not None:
        obj["seed"] = seed
        obj["seeds"] = [seed]
        obj.setdefault("train", {})["seed"] = seed
    return ExperimentSpec.from_dict(obj)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lab", description="Linear-Gaussian WGAN experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment spec")
    p_run.add_argument("spec", help="path to an ExperimentSpec JSON file")
    p_run.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    p_run.add_argument("--seed", type=int, default=None, help="single seed for the run")
    p_run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dot-path field override, e.g. train.max_gen_iters=500")
    p_rep = sub.add_parser("report", help="merge report.json files from output directories")
    p_rep.add_argument("dirs", nargs="+")
    p_rep.add_argument("--out", default=None, help="write the merged report JSON here")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            spec = load_spec(args.spec, args.override, args.seed)
            report = run(spec, args.out)
            print(json.dumps(report.summary, indent=2, default=_json_default))
            if report.aborted:
                print("run aborted (non-finite values); partial outputs written", file=sys.stderr)
                return 3
            return 0
        reports = []
        for d in args.dirs:
            path = Path(d) / "report.json"
            try:
                reports.append(Report.from_dict(json.loads(path.read_text())))
            except (OSError, json.JSONDecodeError, TypeError) as exc:
                raise ConfigError(f"cannot read {path}: {exc}") from exc
        merged = compare_report(reports)
        if args.out:
            merged.write(args.out)
        print(_format_table(merged), end="")
        return 3 if merged.aborted else 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
