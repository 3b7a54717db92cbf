"""Seeded, parallel Monte Carlo experiments over scenario grids.

An experiment fixes a base model, a test variant and a grid of overlay
strengths and sample sizes, then tallies rejection rates per significance
level. Per-replication seeds are derived from
(master_seed, scenario index, n index, replication index) through
numpy's SeedSequence spawn keys, so results are bit-identical for any
degree of parallelism and any execution order.
"""

from __future__ import annotations

import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from time import perf_counter
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtri

from .errors import HfhetError, ParameterError
from .estimators import TuningParams
from .het import run_test
from .normal import normal_pdf, normal_quantile
from .simulate import ConstantVol, JumpSpec, ModelSpec, NoiseSpec, simulate

__all__ = [
    "ExperimentSpec",
    "McRow",
    "McReport",
    "run_experiment",
    "rejection_table",
    "report_to_json_dict",
    "report_rows_csv",
    "export_qq",
    "QQExport",
    "normal_quantile",
]

DEFAULT_ALPHAS = (0.10, 0.05, 0.01)


@dataclass(frozen=True)
class ExperimentSpec:
    """One scenario grid: base model x overlay strengths x grid sizes."""

    model: ModelSpec
    variant: str
    n_values: Tuple[int, ...]
    jump_lambdas: Tuple[float, ...] = ()
    noise_etas: Tuple[float, ...] = ()
    sigma_jump: float = 0.5
    alphas: Tuple[float, ...] = DEFAULT_ALPHAS
    reps: int = 1000
    master_seed: int = 0
    tuning: TuningParams = field(default_factory=TuningParams)

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "jump_lambdas", tuple(float(v) for v in self.jump_lambdas))
        object.__setattr__(self, "noise_etas", tuple(float(v) for v in self.noise_etas))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if self.reps < 1:
            raise ParameterError(f"reps must be >= 1, got {self.reps}")
        if not self.n_values or any(n < 4 for n in self.n_values):
            raise ParameterError(f"n_values must be non-empty with entries >= 4, got {self.n_values}")
        if not self.alphas or any(not 0.0 < a < 1.0 for a in self.alphas):
            raise ParameterError(f"alphas must lie in (0, 1), got {self.alphas}")
        if int(self.master_seed) < 0:
            raise ParameterError("master_seed must be a nonnegative integer")
        if any(v < 0 for v in self.jump_lambdas) or any(v < 0 for v in self.noise_etas):
            raise ParameterError("overlay grid values must be nonnegative")

    @property
    def role(self) -> str:
        return "size" if isinstance(self.model.variant, ConstantVol) else "power"

    def scenarios(self) -> List[Tuple[Optional[float], Optional[float]]]:
        lams = self.jump_lambdas if self.jump_lambdas else (None,)
        etas = self.noise_etas if self.noise_etas else (None,)
        return [(lam, eta) for lam in lams for eta in etas]

    def scenario_label(self, lam: Optional[float], eta: Optional[float]) -> str:
        parts = []
        if lam is not None:
            parts.append(f"lambda={lam:g}")
        if eta is not None:
            parts.append(f"eta={eta:g}")
        return ",".join(parts) if parts else "base"

    def scenario_model(self, lam: Optional[float], eta: Optional[float]) -> ModelSpec:
        model = self.model
        if lam is not None:
            model = replace(model, jump=JumpSpec(lam, self.sigma_jump) if lam > 0 else None)
        if eta is not None:
            model = replace(model, noise=NoiseSpec(eta) if eta > 0 else None)
        return model

    def to_json_dict(self) -> dict:
        variant_fields = {k: getattr(self.model.variant, k) for k in self.model.variant.__dataclass_fields__}
        tuning = {
            k: (self.tuning.weight_name() if k == "weight" else getattr(self.tuning, k))
            for k in self.tuning.__dataclass_fields__
        }
        return {
            "model": {"kind": self.model.label, **variant_fields},
            "variant": self.variant,
            "n_values": list(self.n_values),
            "jump_lambdas": list(self.jump_lambdas),
            "noise_etas": list(self.noise_etas),
            "sigma_jump": self.sigma_jump,
            "alphas": list(self.alphas),
            "reps": self.reps,
            "master_seed": self.master_seed,
            "tuning": tuning,
        }


@dataclass(frozen=True)
class McRow:
    scenario: str
    role: str
    n: int
    alpha: float
    rate: float
    reps: int
    failures: int


@dataclass
class McReport:
    """Rejection-rate rows plus the raw statistic samples per scenario cell."""

    variant: str
    rows: List[McRow]
    samples: Dict[str, np.ndarray]
    elapsed: float
    spec: ExperimentSpec


def _sample_key(role: str, scenario: str, n: int) -> str:
    return f"{role}:{scenario}:n={n}"


def _run_chunk(spec: ExperimentSpec, si: int, ni: int, start: int, stop: int) -> Tuple[int, int, int, np.ndarray, int]:
    """Replications [start, stop) of one scenario cell; nan marks a failed rep."""
    lam, eta = spec.scenarios()[si]
    model = spec.scenario_model(lam, eta)
    n = spec.n_values[ni]
    stats = np.empty(stop - start)
    failures = 0
    for rep in range(start, stop):
        seed = np.random.SeedSequence(spec.master_seed, spawn_key=(si, ni, rep))
        try:
            path = simulate(model, n, seed)
            stats[rep - start] = run_test(path, spec.variant, spec.tuning, alpha=0.5).statistic
        except HfhetError:
            stats[rep - start] = np.nan
            failures += 1
    return si, ni, start, stats, failures


def run_experiment(spec: ExperimentSpec, workers: int = 1) -> McReport:
    """Run the full scenario grid and tally rejection rates per alpha.

    ``workers`` > 1 fans replication chunks out to a process pool; the
    report is identical for any worker count.
    """
    t0 = perf_counter()
    cells = [(si, ni) for si in range(len(spec.scenarios())) for ni in range(len(spec.n_values))]
    stats: Dict[Tuple[int, int], np.ndarray] = {cell: np.empty(spec.reps) for cell in cells}
    fail_counts: Dict[Tuple[int, int], int] = {cell: 0 for cell in cells}

    if workers <= 1:
        for si, ni in cells:
            _, _, _, chunk, failures = _run_chunk(spec, si, ni, 0, spec.reps)
            stats[(si, ni)][:] = chunk
            fail_counts[(si, ni)] = failures
    else:
        chunk_size = max(1, math.ceil(spec.reps / (workers * 4)))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = []
            for si, ni in cells:
                for start in range(0, spec.reps, chunk_size):
                    stop = min(start + chunk_size, spec.reps)
                    futures.append(pool.submit(_run_chunk, spec, si, ni, start, stop))
            for fut in futures:
                si, ni, start, chunk, failures = fut.result()
                stats[(si, ni)][start : start + chunk.shape[0]] = chunk
                fail_counts[(si, ni)] += failures

    rows: List[McRow] = []
    samples: Dict[str, np.ndarray] = {}
    criticals = {alpha: normal_quantile(1.0 - alpha) for alpha in spec.alphas}
    for si, (lam, eta) in enumerate(spec.scenarios()):
        label = spec.scenario_label(lam, eta)
        for ni, n in enumerate(spec.n_values):
            cell = stats[(si, ni)]
            valid = cell[~np.isnan(cell)]
            samples[_sample_key(spec.role, label, n)] = cell
            for alpha in spec.alphas:
                rate = float(np.mean(valid > criticals[alpha])) if valid.size else math.nan
                rows.append(
                    McRow(
                        scenario=label,
                        role=spec.role,
                        n=n,
                        alpha=alpha,
                        rate=rate,
                        reps=int(valid.size),
                        failures=fail_counts[(si, ni)],
                    )
                )
    return McReport(variant=spec.variant, rows=rows, samples=samples, elapsed=perf_counter() - t0, spec=spec)


def report_to_json_dict(reports: Sequence[McReport]) -> dict:
    """Full report payload (rows and samples); excludes wall time so that
    identical runs serialize byte-identically."""
    return {
        "experiments": [
            {
                "variant": rep.variant,
                "spec": rep.spec.to_json_dict(),
                "rows": [row.__dict__ for row in rep.rows],
                "samples": {k: [float(x) for x in v] for k, v in rep.samples.items()},
            }
            for rep in reports
        ]
    }


def report_rows_csv(reports: Sequence[McReport]) -> str:
    """One CSV row per scenario x n x alpha across all reports."""
    out = io.StringIO()
    out.write("variant,scenario,role,n,alpha,rate,reps,failures\n")
    for rep in reports:
        for row in rep.rows:
            out.write(
                f"{rep.variant},{row.scenario},{row.role},{row.n},{row.alpha:g},"
                f"{row.rate:.10g},{row.reps},{row.failures}\n"
            )
    return out.getvalue()


def rejection_table(reports) -> Tuple[str, str]:
    """Render reports as a size/power table grouped by scenario then n.

    Returns (csv_text, aligned_text). Size columns come from constant-
    volatility experiments, power columns from stochastic-volatility ones;
    a missing role leaves its columns blank.
    """
    if isinstance(reports, McReport):
        reports = [reports]
    if not reports or all(not r.rows for r in reports):
        raise ParameterError("no report rows to tabulate")

    alphas: List[float] = []
    cells: Dict[Tuple[str, int], Dict[str, Dict[float, float]]] = {}
    order: List[Tuple[str, int]] = []
    for rep in reports:
        for row in rep.rows:
            if row.alpha not in alphas:
                alphas.append(row.alpha)
            key = (row.scenario, row.n)
            if key not in cells:
                cells[key] = {}
                order.append(key)
            cells[key].setdefault(row.role, {})[row.alpha] = row.rate
    alphas.sort(reverse=True)
    roles = [r for r in ("size", "power") if any(r in c for c in cells.values())]

    def fmt(value: Optional[float], digits: int) -> str:
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return ""
        return f"{value:.{digits}f}"

    # scenario blocks keep their insertion order; n ascending inside each block
    scenario_order: List[str] = []
    for scenario, _ in order:
        if scenario not in scenario_order:
            scenario_order.append(scenario)
    order.sort(key=lambda key: (scenario_order.index(key[0]), key[1]))

    csv_out = io.StringIO()
    headers = ["scenario", "n"] + [f"{role}_{alpha:g}" for role in roles for alpha in alphas]
    csv_out.write(",".join(headers) + "\n")
    for scenario, n in order:
        values = [fmt(cells[(scenario, n)].get(role, {}).get(alpha), 10) for role in roles for alpha in alphas]
        csv_out.write(",".join([scenario, str(n)] + values) + "\n")

    width = 12
    text_out = io.StringIO()
    group_line = " " * (18 + 8) + "".join(f"{role.capitalize():^{width * len(alphas)}}" for role in roles)
    text_out.write(group_line.rstrip() + "\n")
    header_line = f"{'scenario':<18}{'n':>8}" + "".join(
        f"{f'{alpha * 100:g}%':>{width}}" for _ in roles for alpha in alphas
    )
    text_out.write(header_line + "\n")
    previous_scenario = None
    for scenario, n in order:
        label = scenario if scenario != previous_scenario else ""
        previous_scenario = scenario
        values = "".join(
            f"{fmt(cells[(scenario, n)].get(role, {}).get(alpha), 4):>{width}}" for role in roles for alpha in alphas
        )
        text_out.write(f"{label:<18}{n:>8}{values}\n")
    return csv_out.getvalue(), text_out.getvalue()


@dataclass(frozen=True)
class QQExport:
    """Plot-ready QQ pairs and histogram bins against the standard normal."""

    theoretical: np.ndarray
    empirical: np.ndarray
    bin_centers: np.ndarray
    counts: np.ndarray
    normal_density: np.ndarray
    degenerate: bool

    def pairs(self) -> np.ndarray:
        return np.column_stack([self.theoretical, self.empirical])


def export_qq(samples: Sequence[float]) -> QQExport:
    """QQ pairs at plotting positions (i-0.5)/m plus Freedman-Diaconis bins.

    Constant samples produce a degenerate single-bin export, flagged in
    the metadata rather than raised.
    """
    samples = np.asarray(samples, dtype=float)
    samples = samples[~np.isnan(samples)]
    m = samples.shape[0]
    if m < 10:
        raise ParameterError(f"need at least 10 samples for a QQ export, got {m}")
    empirical = np.sort(samples)
    theoretical = ndtri((np.arange(1, m + 1) - 0.5) / m)

    q75, q25 = np.percentile(empirical, [75, 25])
    spread = empirical[-1] - empirical[0]
    bin_width = 2.0 * (q75 - q25) * m ** (-1.0 / 3.0)
    degenerate = bool(bin_width <= 0.0 or spread <= 0.0)
    if degenerate:
        center = float(empirical[0])
        centers = np.array([center])
        counts = np.array([m])
    else:
        nbins = max(1, int(math.ceil(spread / bin_width)))
        counts, edges = np.histogram(empirical, bins=nbins)
        centers = 0.5 * (edges[:-1] + edges[1:])
    return QQExport(
        theoretical=theoretical,
        empirical=empirical,
        bin_centers=centers,
        counts=counts,
        normal_density=normal_pdf(centers),
        degenerate=degenerate,
    )


def qq_csv(qq: QQExport) -> Tuple[str, str]:
    """CSV texts for the QQ pairs and the histogram bins."""
    pairs = io.StringIO()
    pairs.write("theoretical,empirical\n")
    for t, e in zip(qq.theoretical, qq.empirical):
        pairs.write(f"{t:.12g},{e:.12g}\n")
    hist = io.StringIO()
    hist.write("bin_center,count,normal_density\n")
    for c, k, d in zip(qq.bin_centers, qq.counts, qq.normal_density):
        hist.write(f"{c:.12g},{int(k)},{d:.12g}\n")
    return pairs.getvalue(), hist.getvalue()


def dumps_json(payload: dict) -> str:
    """Deterministic JSON encoding shared by CLI outputs."""
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
