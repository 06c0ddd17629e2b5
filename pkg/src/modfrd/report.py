"""Batch pipeline: dataset in, cohorts, bandwidths, estimates, diagnostics,
and delimited report tables out.

A full default run covers 48 cells per table: both interventions crossed
with eight thread setups ({<=20,>20} x {all,other} comment scopes, two
outcomes) and sixteen user setups (k in {7,14,21,28} days, first-time and
repeat offenders, two outcomes). Per-cell statistical failures annotate
the row; only configuration errors abort a run.
"""

from __future__ import annotations

import configparser
import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bandwidth as bw
from .cohorts import (
    CohortSpec,
    K_DAYS_CHOICES,
    Outcome,
    build_thread_cohort,
    build_user_cohort,
)
from .diagnostics import (
    DEFAULT_SWEEP_MULTIPLIERS,
    SweepResult,
    bandwidth_sweep,
    binned_means,
    mccrary_test,
    placebo_frd,
)
from .errors import InvalidConfig, ModfrdError
from .estimator import EstimateResult, KernelSpec, estimate_latec
from .records import Dataset, ingest, write_dataset
from .simconfig import SimConfig, config_from_mapping
from .simulate import generate

SEED_LIST_ENV = "MODFRD_SEEDS"

THREAD_SETUPS = ("le20_all", "le20_other", "gt20_all", "gt20_other")
_SCENARIO_DISPLAY = {
    ("thread", ""): "Thread-level",
    ("user", "first"): "User-level (first offender)",
    ("user", "repeat"): "User-level (repeat offender)",
}
_SETUP_DISPLAY = {
    "le20_all": "<=20 / All",
    "le20_other": "<=20 / Other",
    "gt20_all": ">20 / All",
    "gt20_other": ">20 / Other",
}


@dataclass(frozen=True)
class Cell:
    """One (intervention, scenario, outcome, setup) analysis slot."""

    intervention: str
    scenario: str
    outcome: Outcome
    setup: str

    @property
    def key(self) -> str:
        return f"{self.intervention}_{self.scenario}_{self.outcome.value}_{self.setup}"

    @classmethod
    def parse(cls, text: str) -> "Cell":
        parts = text.strip().split(":")
        if len(parts) != 4:
            raise InvalidConfig(f"cell {text!r} must be intervention:scenario:outcome:setup")
        return cls(parts[0], parts[1], Outcome(parts[2]), parts[3])


def default_cells() -> tuple:
    cells = []
    for intervention in ("delete", "hide"):
        for outcome in (Outcome.COMMENTS, Outcome.INTERVENTIONS):
            for setup in THREAD_SETUPS:
                cells.append(Cell(intervention, "thread", outcome, setup))
        for offender in ("first", "repeat"):
            for outcome in (Outcome.COMMENTS, Outcome.INTERVENTIONS):
                for k in K_DAYS_CHOICES:
                    cells.append(Cell(intervention, "user", outcome, f"k{k}_{offender}"))
    return tuple(cells)


@dataclass
class RunConfig:
    """Everything a batch run needs; see configs/ for file examples."""

    output_dir: Path
    sim: SimConfig | None = None
    input_path: Path | None = None
    t_hide: float | None = None
    t_delete: float | None = None
    cells: tuple = field(default_factory=default_cells)
    bandwidth_override: float | None = None
    sweep_multipliers: tuple = DEFAULT_SWEEP_MULTIPLIERS
    alpha: float = 0.05
    seeds: tuple = ()
    workers: int = 1
    n_bins: int = 20
    write_binned: bool = True
    replicate_cell: Cell = Cell("delete", "thread", Outcome.COMMENTS, "le20_all")
    oracle_window: float = 0.05

    def validate(self) -> None:
        if (self.sim is None) == (self.input_path is None):
            raise InvalidConfig("configure exactly one of a simulation or an input log")
        if not self.cells:
            raise InvalidConfig("cell selection is empty")
        if self.input_path is not None and (self.t_hide is None or self.t_delete is None):
            raise InvalidConfig("ingested logs need t_hide and t_delete")
        if self.alpha <= 0 or self.alpha >= 1:
            raise InvalidConfig("alpha must be in (0, 1)")
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")

    @property
    def thresholds(self) -> dict:
        if self.sim is not None:
            return {"hide": self.sim.t_hide, "delete": self.sim.t_delete}
        return {"hide": float(self.t_hide), "delete": float(self.t_delete)}


def load_run_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a run INI; simulation sections may live in the same file."""
    parser = configparser.ConfigParser()
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)
    run = dict(parser.items("run")) if parser.has_section("run") else {}
    flat = {}
    for section in parser.sections():
        if section == "run":
            continue
        flat.update(parser.items(section))
    if overrides:
        run.update({k: v for k, v in overrides.items() if v is not None})

    sim = None
    input_path = None
    if "input" in run:
        input_path = Path(run["input"])
    else:
        if not flat:
            raise InvalidConfig("no [run] input= and no simulation sections")
        sim = config_from_mapping(flat)

    cells_raw = run.get("cells", "all").strip()
    if cells_raw in ("", "all"):
        cells = default_cells()
    else:
        cells = tuple(Cell.parse(tok) for tok in cells_raw.split(",") if tok.strip())

    seeds_raw = os.environ.get(SEED_LIST_ENV) or run.get("seeds", "")
    seeds = tuple(int(tok) for tok in seeds_raw.replace(",", " ").split()) if seeds_raw else ()

    multipliers = run.get("sweep_multipliers", "")
    sweep = (
        tuple(float(tok) for tok in multipliers.replace(",", " ").split())
        if multipliers
        else DEFAULT_SWEEP_MULTIPLIERS
    )

    cfg = RunConfig(
        output_dir=Path(run.get("output_dir", "out")),
        sim=sim,
        input_path=input_path,
        t_hide=float(run["t_hide"]) if "t_hide" in run else (flat.get("t_hide") and float(flat["t_hide"])),
        t_delete=float(run["t_delete"]) if "t_delete" in run else (flat.get("t_delete") and float(flat["t_delete"])),
        cells=cells,
        bandwidth_override=float(run["bandwidth"]) if run.get("bandwidth") else None,
        sweep_multipliers=sweep,
        alpha=float(run.get("alpha", 0.05)),
        seeds=seeds,
        workers=int(run.get("workers", 1)),
        n_bins=int(run.get("n_bins", 20)),
        write_binned=run.get("write_binned", "true").strip().lower() != "false",
        replicate_cell=Cell.parse(run["replicate_cell"]) if run.get("replicate_cell") else
        Cell("delete", "thread", Outcome.COMMENTS, "le20_all"),
        oracle_window=float(run.get("oracle_window", 0.05)),
    )
    cfg.validate()
    return cfg


def _fmt_number(x: float) -> str:
    if not np.isfinite(x):
        return str(x)
    return f"{x:.3g}" if abs(x) < 1.0 else f"{x:.2f}"


def format_effect(estimate: EstimateResult, alpha: float, standardized: bool = False) -> str:
    """Render `e (lo, hi)` with a trailing star when 0 is outside the
    alpha-level interval; degenerate intervals never earn a star."""
    if standardized:
        e = estimate.standardized
        lo, hi = estimate.standardized_ci95
        if abs(alpha - 0.05) > 1e-12 and estimate.se > 0:
            a_lo, a_hi = estimate.ci_at(alpha)
            scale = estimate.standardized / estimate.latec if estimate.latec != 0 else 0.0
            lo, hi = a_lo * scale, a_hi * scale
    else:
        e = estimate.latec
        lo, hi = estimate.ci_at(alpha)
    star = "*" if (not estimate.degenerate and not (lo <= 0.0 <= hi)) else ""
    return f"{_fmt_number(e)} ({_fmt_number(lo)}, {_fmt_number(hi)}){star}"


def _parse_setup(cell: Cell) -> CohortSpec:
    if cell.scenario == "thread":
        size_class, author_scope = cell.setup.split("_")
        return CohortSpec(
            threshold=cell.intervention,
            threshold_value=0.5,  # patched by caller
            scenario="thread",
            size_class=size_class,
            author_scope=author_scope,
        )
    k_part, offender = cell.setup.split("_")
    return CohortSpec(
        threshold=cell.intervention,
        threshold_value=0.5,
        scenario="user",
        k_days=int(k_part[1:]),
        offender_class=offender,
    )


@dataclass
class CellResult:
    cell: Cell
    n_units: int | None = None
    estimate: EstimateResult | None = None
    placebo: EstimateResult | None = None
    sweep: SweepResult | None = None
    binned: tuple = ()
    h_used: float | None = None
    h_source: str = ""
    h_outcome: bw.BandwidthReport | None = None
    h_first_stage: bw.BandwidthReport | None = None
    error: str | None = None


@dataclass
class ReportTable:
    alpha: float
    results: list

    @property
    def rows(self):
        return self.results

    def render(self) -> str:
        lines = []
        header = f"{'Intervention':<13}{'Scenario':<30}{'Outcome':<15}{'Setup':<14}{'Effect':<28}{'Effect (Standardized)':<30}{'n':>8}"
        lines.append(header)
        lines.append("-" * len(header))
        for res in self.results:
            cell = res.cell
            offender = cell.setup.split("_")[1] if cell.scenario == "user" else ""
            scenario = _SCENARIO_DISPLAY[(cell.scenario, offender)]
            setup = _SETUP_DISPLAY.get(cell.setup, cell.setup.split("_")[0].lstrip("k"))
            if res.error is not None:
                effect = f"[{res.error}]"
                std = ""
                n = "" if res.n_units is None else str(res.n_units)
            else:
                effect = format_effect(res.estimate, self.alpha)
                std = format_effect(res.estimate, self.alpha, standardized=True)
                n = str(res.n_units)
            lines.append(
                f"{cell.intervention.capitalize():<13}{scenario:<30}{cell.outcome.value.capitalize():<15}"
                f"{setup:<14}{effect:<28}{std:<30}{n:>8}"
            )
        return "\n".join(lines)


def _build_cohort(dataset: Dataset, cell: Cell, thresholds: dict):
    spec = _parse_setup(cell)
    value = thresholds[cell.intervention]
    spec = CohortSpec(
        threshold=spec.threshold,
        threshold_value=value,
        scenario=spec.scenario,
        size_class=spec.size_class,
        author_scope=spec.author_scope,
        k_days=spec.k_days,
        offender_class=spec.offender_class,
    )
    if cell.scenario == "thread":
        return build_thread_cohort(dataset, spec)
    return build_user_cohort(dataset, spec, thresholds["hide"], thresholds["delete"])


def _run_cell(dataset: Dataset, cell: Cell, rc: RunConfig) -> CellResult:
    result = CellResult(cell=cell)
    try:
        cohort = _build_cohort(dataset, cell, rc.thresholds)
        result.n_units = len(cohort)
        threshold_value = rc.thresholds[cell.intervention]
        if rc.bandwidth_override is not None:
            result.h_used = rc.bandwidth_override
            result.h_source = "override"
        else:
            result.h_outcome = bw.ik_bandwidth(cohort, threshold_value, outcome=cell.outcome)
            try:
                result.h_first_stage = bw.ik_bandwidth(
                    cohort, threshold_value, values=cohort.treated.astype(np.float64)
                )
            except bw._DegenerateVariance:
                result.h_first_stage = None
            h_candidates = [result.h_outcome.h_star]
            if result.h_first_stage is not None:
                h_candidates.append(result.h_first_stage.h_star)
            result.h_used = min(h_candidates)
            result.h_source = "selected"
        kernel = KernelSpec(bandwidth_h=result.h_used, threshold_t=threshold_value)
        result.estimate = estimate_latec(cohort, kernel, cell.outcome)
        result.placebo = placebo_frd(cohort, kernel, cell.outcome)
        result.sweep = bandwidth_sweep(cohort, cell.outcome, result.h_used, rc.sweep_multipliers)
        if rc.write_binned:
            result.binned = (
                binned_means(cohort, threshold_value, rc.n_bins, "treatment"),
                binned_means(cohort, threshold_value, rc.n_bins, "outcome", outcome=cell.outcome),
            )
    except ModfrdError as exc:
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def run_pipeline(rc: RunConfig) -> ReportTable:
    """Execute every selected cell and write all artifact files."""
    rc.validate()
    out = Path(rc.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    if rc.sim is not None:
        dataset, truth = generate(rc.sim)
        write_dataset(dataset, out / "events.csv")
        truth.to_csv(out / "truth.csv")
    else:
        dataset = ingest(rc.input_path)

    comment_scores = dataset.scores[~dataset.is_root]
    mccrary_rows = []
    for label in ("hide", "delete"):
        try:
            res = mccrary_test(comment_scores, rc.thresholds[label])
            mccrary_rows.append((label, rc.thresholds[label], res, None))
        except ModfrdError as exc:
            mccrary_rows.append((label, rc.thresholds[label], None, f"{type(exc).__name__}: {exc}"))

    if rc.workers > 1:
        with ThreadPoolExecutor(max_workers=rc.workers) as pool:
            results = list(pool.map(lambda c: _run_cell(dataset, c, rc), rc.cells))
    else:
        results = [_run_cell(dataset, cell, rc) for cell in rc.cells]

    table = ReportTable(alpha=rc.alpha, results=results)
    _write_outputs(rc, out, table, mccrary_rows)
    return table


def _est_fields(est: EstimateResult | None, alpha: float):
    if est is None:
        return [""] * 14
    return [
        repr(est.latec),
        repr(est.se),
        repr(est.ci95[0]),
        repr(est.ci95[1]),
        repr(est.standardized),
        repr(est.standardized_ci95[0]),
        repr(est.standardized_ci95[1]),
        repr(est.itt),
        repr(est.itt_d),
        repr(est.first_stage_f),
        str(est.n_effective),
        repr(est.bandwidth_h),
        "true" if est.significant(alpha) and not est.degenerate else "false",
        "true" if est.degenerate else "false",
    ]


_EST_HEADER = [
    "effect",
    "se",
    "ci_lo",
    "ci_hi",
    "standardized",
    "std_ci_lo",
    "std_ci_hi",
    "itt",
    "itt_d",
    "first_stage_f",
    "n_effective",
    "bandwidth_h",
    "significant",
    "degenerate",
]


def _write_outputs(rc: RunConfig, out: Path, table: ReportTable, mccrary_rows) -> None:
    key_header = ["intervention", "scenario", "outcome", "setup", "n"]

    def keys(res):
        return [
            res.cell.intervention,
            res.cell.scenario,
            res.cell.outcome.value,
            res.cell.setup,
            "" if res.n_units is None else str(res.n_units),
        ]

    with open(out / "report.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(key_header + _EST_HEADER + ["formatted", "formatted_standardized", "error"])
        for res in table.results:
            extra = (
                ["", "", res.error]
                if res.error is not None
                else [
                    format_effect(res.estimate, rc.alpha),
                    format_effect(res.estimate, rc.alpha, standardized=True),
                    "",
                ]
            )
            writer.writerow(keys(res) + _est_fields(res.estimate, rc.alpha) + extra)

    with open(out / "placebo.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(key_header + _EST_HEADER + ["formatted", "error"])
        for res in table.results:
            extra = (
                ["", res.error]
                if res.placebo is None
                else [format_effect(res.placebo, rc.alpha), ""]
            )
            writer.writerow(keys(res) + _est_fields(res.placebo, rc.alpha) + extra)

    with open(out / "mccrary.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "threshold",
                "threshold_value",
                "theta",
                "se",
                "p_value",
                "bin_size",
                "smoothing_bandwidth",
                "density_above",
                "density_below",
                "error",
            ]
        )
        for label, value, res, err in mccrary_rows:
            if res is None:
                writer.writerow([label, repr(value)] + [""] * 7 + [err])
            else:
                writer.writerow(
                    [
                        label,
                        repr(value),
                        repr(res.theta),
                        repr(res.se),
                        repr(res.p_value),
                        repr(res.bin_size),
                        repr(res.smoothing_bandwidth),
                        repr(res.density_above),
                        repr(res.density_below),
                        "",
                    ]
                )

    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            key_header[:4]
            + ["multiplier", "bandwidth_h", "effect", "se", "standardized", "std_ci_lo", "std_ci_hi", "error"]
        )
        for res in table.results:
            if res.sweep is None:
                continue
            for point in res.sweep.points:
                if point.estimate is None:
                    row_tail = ["", "", "", "", "", point.error]
                else:
                    est = point.estimate
                    row_tail = [
                        repr(est.latec),
                        repr(est.se),
                        repr(est.standardized),
                        repr(est.standardized_ci95[0]),
                        repr(est.standardized_ci95[1]),
                        "",
                    ]
                writer.writerow(
                    keys(res)[:4] + [repr(point.multiplier), repr(point.bandwidth_h)] + row_tail
                )

    with open(out / "bandwidths.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            key_header[:4]
            + [
                "h_used",
                "source",
                "h_outcome",
                "h_first_stage",
                "pilot_h",
                "density_at_cutoff",
                "cond_variance",
                "curvature_above",
                "curvature_below",
                "regularization",
            ]
        )
        for res in table.results:
            if res.h_used is None:
                continue
            rep = res.h_outcome
            writer.writerow(
                keys(res)[:4]
                + [
                    repr(res.h_used),
                    res.h_source,
                    "" if rep is None else repr(rep.h_star),
                    "" if res.h_first_stage is None else repr(res.h_first_stage.h_star),
                    "" if rep is None else repr(rep.pilot_h),
                    "" if rep is None else repr(rep.density_at_cutoff),
                    "" if rep is None else repr(rep.cond_variance),
                    "" if rep is None else repr(rep.curvature_above),
                    "" if rep is None else repr(rep.curvature_below),
                    "" if rep is None else repr(rep.regularization),
                ]
            )

    if rc.write_binned:
        for res in table.results:
            if not res.binned:
                continue
            with open(out / f"binned_{res.cell.key}.csv", "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["variable", "kind", "s", "value", "count", "se"])
                for tbl in res.binned:
                    for i in range(tbl.bin_mid.shape[0]):
                        writer.writerow(
                            [
                                tbl.variable,
                                "bin",
                                repr(float(tbl.bin_mid[i])),
                                repr(float(tbl.bin_mean[i])),
                                int(tbl.bin_count[i]),
                                repr(float(tbl.bin_se[i])),
                            ]
                        )
                    for i in range(tbl.grid_s.shape[0]):
                        writer.writerow(
                            [
                                tbl.variable,
                                "fit",
                                repr(float(tbl.grid_s[i])),
                                repr(float(tbl.grid_fit[i])),
                                "",
                                "",
                            ]
                        )


def run_replication(rc: RunConfig) -> list:
    """Per-seed estimate-vs-oracle rows for calibration studies."""
    rc.validate()
    if rc.sim is None:
        raise InvalidConfig("replication runs need a simulation config")
    if not rc.seeds:
        raise InvalidConfig(f"no seeds; set seeds= or {SEED_LIST_ENV}")
    from .simulate import oracle_latec

    out = Path(rc.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cell = rc.replicate_cell
    rows = []
    for seed in rc.seeds:
        sim = rc.sim.with_seed(seed)
        dataset, truth = generate(sim)
        thresholds = {"hide": sim.t_hide, "delete": sim.t_delete}
        row = {"seed": seed}
        try:
            cohort = _build_cohort(dataset, cell, thresholds)
            t_value = thresholds[cell.intervention]
            h = rc.bandwidth_override or bw.bandwidth_for_cell(cohort, t_value, cell.outcome)
            est = estimate_latec(cohort, KernelSpec(h, t_value), cell.outcome)
            oracle, oracle_se = oracle_latec(
                truth.subset(scenario=cell.scenario, threshold=cell.intervention),
                t_value,
                rc.oracle_window,
                cell.outcome,
            )
            row.update(
                latec=est.latec,
                se=est.se,
                ci_lo=est.ci95[0],
                ci_hi=est.ci95[1],
                oracle=oracle,
                oracle_se=oracle_se,
                covered=est.ci95[0] <= oracle <= est.ci95[1],
                first_stage_f=est.first_stage_f,
                n_effective=est.n_effective,
                bandwidth_h=est.bandwidth_h,
                error="",
            )
        except ModfrdError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)

    header = [
        "seed",
        "latec",
        "se",
        "ci_lo",
        "ci_hi",
        "oracle",
        "oracle_se",
        "covered",
        "first_stage_f",
        "n_effective",
        "bandwidth_h",
        "error",
    ]
    with open(out / "replicate.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [
                    (
                        repr(row[k])
                        if isinstance(row.get(k), float)
                        else ("true" if row.get(k) is True else "false" if row.get(k) is False else row.get(k, ""))
                    )
                    for k in header
                ]
            )
    return rows
