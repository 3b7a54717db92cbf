"""Command-line front end: simulate, test, mc, qq, clean, report, version.

Every command accepts a TOML config file (section named after the
command) with explicit flags overriding config values; the effective
configuration is echoed into each output's metadata. Exit codes:
0 success, 2 configuration error, 3 I/O or input-data error,
4 degenerate data.
"""

from __future__ import annotations

import datetime as dt
import io
import json
import sys
from importlib import metadata, resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import (
    ConfigurationError,
    DataError,
    DegenerateDataError,
    HfhetError,
    ParameterError,
)
from .estimators import TuningParams
from .het import run_test
from .montecarlo import (
    ExperimentSpec,
    McReport,
    dumps_json,
    export_qq,
    qq_csv,
    rejection_table,
    report_rows_csv,
    report_to_json_dict,
    run_experiment,
)
from .pipeline import (
    SESSION_END,
    SESSION_START,
    VariantPlan,
    clean as clean_ticks,
    daily_report,
    load_ticks,
    parse_span,
    sample_calendar,
    spot_curve,
)
from .simulate import (
    ConstantVol,
    Heston,
    JumpSpec,
    ModelSpec,
    NoiseSpec,
    read_path_csv,
    simulate,
    write_path_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DEGENERATE = 4

_VARIANT_ALIASES = {
    "plain": "plain",
    "truncated": "truncated",
    "trunc": "truncated",
    "preaveraged": "preaveraged",
    "preavg": "preaveraged",
}

_TUNING_KEYS = ("theta", "varpi", "trunc_mult", "trunc_passes", "c_pre", "chi", "a_ker", "b_ker", "weight")


def _load_config_section(path: Optional[str], command: str, allowed: Sequence[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed TOML in {path}: {exc}") from exc
    section = data.get(command, {})
    if not isinstance(section, dict):
        raise ConfigurationError(f"config section [{command}] must be a table")
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigurationError(f"unknown keys in [{command}]: {sorted(unknown)}")
    return section


def _merge(ctx: click.Context, config: dict, **kwargs) -> dict:
    """Explicit command-line flags win over config-file values."""
    merged = dict(kwargs)
    for key, value in config.items():
        source = ctx.get_parameter_source(key)
        if source is not None and source.name != "COMMANDLINE":
            merged[key] = value
    return merged


def _tuning_from(cfg: dict) -> TuningParams:
    kwargs = {k: cfg[k] for k in _TUNING_KEYS if cfg.get(k) is not None}
    if "trunc_passes" in kwargs:
        kwargs["trunc_passes"] = int(kwargs["trunc_passes"])
    return TuningParams(**kwargs)


def _echo_dict(cfg: dict) -> dict:
    out = {}
    for key, value in sorted(cfg.items()):
        if isinstance(value, (dt.time, dt.date, Path)):
            out[key] = str(value)
        elif isinstance(value, tuple):
            out[key] = list(value)
        else:
            out[key] = value
    return out


def _config_comment(cfg: dict) -> str:
    return "# config: " + json.dumps(_echo_dict(cfg), sort_keys=True) + "\n"


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", newline="") as handle:
            handle.write(text)
    except OSError as exc:
        raise click.ClickException(f"cannot write {path}: {exc}") from exc


@click.group(name="hfhet")
def cli():
    """Heteroscedasticity tests for high-frequency prices: simulation,
    testing, Monte Carlo tables and a tick-data pipeline."""


@cli.command("version")
def cmd_version():
    """Print the package version."""
    try:
        version = metadata.version("hfhet")
    except metadata.PackageNotFoundError:
        version = "unknown"
    click.echo(f"hfhet {version}")


@cli.command("simulate")
@click.option("--config", "config_path", type=click.Path(), default=None, help="TOML config file ([simulate] section).")
@click.option("--model", type=click.Choice(["constant", "heston"]), default="constant", show_default=True)
@click.option("--n", type=int, default=23400, show_default=True, help="Number of grid increments.")
@click.option("--seed", type=int, default=0, show_default=True, help="Master seed.")
@click.option("--sigma", type=float, default=1.0, show_default=True, help="Volatility (constant model).")
@click.option("--x0", type=float, default=1.0, show_default=True, help="Initial log-price.")
@click.option("--kappa", type=float, default=5.0, show_default=True, help="Mean-reversion rate (heston).")
@click.option("--alpha", type=float, default=0.04, show_default=True, help="Long-run variance (heston).")
@click.option("--gamma", type=float, default=5.0, show_default=True, help="Vol-of-vol (heston).")
@click.option("--rho", type=float, default=-(0.5**0.5), show_default=True, help="Leverage correlation (heston).")
@click.option("--v0", type=float, default=1.0, show_default=True, help="Initial variance (heston).")
@click.option("--jumps", "jump_lambda", type=float, default=None, help="Compound-Poisson intensity.")
@click.option("--sigma-jump", type=float, default=0.5, show_default=True, help="Jump-size standard deviation.")
@click.option("--noise", "noise_eta", type=float, default=None, help="Observation-noise standard deviation.")
@click.option("--out", "out_path", type=click.Path(), default="path.csv", show_default=True)
@click.pass_context
def cmd_simulate(ctx, config_path, **kwargs):
    """Simulate a log-price path and write it as CSV."""
    allowed = list(kwargs)
    cfg = _merge(ctx, _load_config_section(config_path, "simulate", allowed), **kwargs)
    if cfg["model"] == "constant":
        variant = ConstantVol(sigma=cfg["sigma"], x0=cfg["x0"])
    else:
        variant = Heston(
            kappa=cfg["kappa"], alpha=cfg["alpha"], gamma=cfg["gamma"],
            rho=cfg["rho"], x0=cfg["x0"], v0=cfg["v0"],
        )
    jump = JumpSpec(cfg["jump_lambda"], cfg["sigma_jump"]) if cfg["jump_lambda"] is not None else None
    noise = NoiseSpec(cfg["noise_eta"]) if cfg["noise_eta"] is not None else None
    path = simulate(ModelSpec(variant, jump=jump, noise=noise), int(cfg["n"]), int(cfg["seed"]))
    buffer = io.StringIO()
    buffer.write(_config_comment(cfg))
    buffer.write("# labels: " + ",".join(path.labels) + "\n")
    write_path_csv(path, buffer)
    _write_text(cfg["out_path"], buffer.getvalue())
    click.echo(
        f"wrote {cfg['out_path']}: n={path.n} model={cfg['model']} "
        f"overlays={','.join(path.labels[1:]) or 'none'} seed={cfg['seed']}"
    )


def _tuning_options(fn):
    options = [
        click.option("--theta", type=float, default=1.2, show_default=True, help="Spot-window constant."),
        click.option("--varpi", type=float, default=0.499, show_default=True, help="Truncation exponent."),
        click.option("--trunc-mult", type=float, default=4.0, show_default=True, help="Threshold multiplier."),
        click.option("--trunc-passes", type=int, default=2, show_default=True, help="Threshold refinement passes."),
        click.option("--c-pre", type=float, default=1.0 / 3.0, show_default=True, help="Pre-averaging constant."),
        click.option("--chi", type=float, default=0.05, show_default=True, help="Pre-averaging exponent offset."),
        click.option("--a-ker", type=float, default=2.0, show_default=True, help="Spot-kernel constant."),
        click.option("--b-ker", type=float, default=0.17, show_default=True, help="Spot-kernel exponent."),
        click.option("--weight", type=str, default="triangle", show_default=True, help="Pre-averaging weight function."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@cli.command("test")
@click.option("--config", "config_path", type=click.Path(), default=None, help="TOML config file ([test] section).")
@click.option("--in", "in_path", type=click.Path(), required=True, help="Path CSV (index,time,obs).")
@click.option("--variant", type=click.Choice(sorted(_VARIANT_ALIASES)), default="plain", show_default=True)
@click.option("--alpha", type=float, default=0.05, show_default=True, help="Significance level.")
@click.option("--format", "fmt", type=click.Choice(["json", "text"]), default="json", show_default=True)
@_tuning_options
@click.pass_context
def cmd_test(ctx, config_path, **kwargs):
    """Run one heteroscedasticity test on a path CSV."""
    allowed = list(kwargs)
    cfg = _merge(ctx, _load_config_section(config_path, "test", allowed), **kwargs)
    try:
        with open(cfg["in_path"], "r", newline="") as handle:
            path = read_path_csv(handle)
    except OSError as exc:
        raise click.ClickException(f"cannot read {cfg['in_path']}: {exc}") from exc
    tuning = _tuning_from(cfg)
    outcome = run_test(path, _VARIANT_ALIASES[cfg["variant"]], tuning, alpha=cfg["alpha"])
    payload = {"config": _echo_dict(cfg), **outcome.to_json_dict()}
    if cfg["fmt"] == "json":
        click.echo(dumps_json(payload), nl=False)
    else:
        width = max(len(k) for k in payload if k != "config")
        for key in ("variant", "n", "statistic", "alpha", "critical", "reject", "p_value", "iv_hat", "block_count"):
            value = payload[key]
            text = f"{value:.4f}" if isinstance(value, float) else str(value)
            click.echo(f"{key:<{width}}  {text}")
        windows = {k: v for k, v in payload["windows"].items() if v is not None}
        click.echo(f"{'windows':<{width}}  " + ", ".join(f"{k}={v:g}" for k, v in windows.items()))


_MC_EXPERIMENT_KEYS = {
    "variant", "models", "n_values", "jump_lambdas", "noise_etas", "sigma_jump", "reps",
}
_MC_TOP_KEYS = {"reps", "master_seed", "alphas", "tuning", "experiment", "model"}


def _mc_specs_from_config(path: str, reps_override: Optional[int], seed_override: Optional[int]) -> List[ExperimentSpec]:
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed TOML in {path}: {exc}") from exc
    section = data.get("mc", data)
    unknown = set(section) - _MC_TOP_KEYS
    if unknown:
        raise ConfigurationError(f"unknown keys in [mc]: {sorted(unknown)}")
    experiments = section.get("experiment", [])
    if not experiments:
        raise ConfigurationError("config declares no [[mc.experiment]] blocks")
    tuning_cfg = dict(section.get("tuning", {}))
    unknown = set(tuning_cfg) - set(_TUNING_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown keys in [mc.tuning]: {sorted(unknown)}")
    tuning = _tuning_from(tuning_cfg)
    model_cfg = section.get("model", {})
    constant = ConstantVol(**model_cfg.get("constant", {}))
    heston = Heston(**model_cfg.get("heston", {}))
    reps = int(reps_override if reps_override is not None else section.get("reps", 1000))
    master_seed = int(seed_override if seed_override is not None else section.get("master_seed", 0))
    alphas = tuple(section.get("alphas", (0.10, 0.05, 0.01)))

    specs: List[ExperimentSpec] = []
    for exp_idx, block in enumerate(experiments):
        unknown = set(block) - _MC_EXPERIMENT_KEYS
        if unknown:
            raise ConfigurationError(f"unknown keys in [[mc.experiment]] #{exp_idx}: {sorted(unknown)}")
        variant = _VARIANT_ALIASES.get(block.get("variant", "plain"))
        if variant is None:
            raise ConfigurationError(f"unknown variant {block.get('variant')!r}")
        models = block.get("models", ["constant"])
        for model_name in models:
            if model_name == "constant":
                model = ModelSpec(constant)
            elif model_name == "heston":
                model = ModelSpec(heston)
            else:
                raise ConfigurationError(f"unknown model {model_name!r} (use constant|heston)")
            exp_seed = int(np.random.SeedSequence(master_seed, spawn_key=(len(specs),)).generate_state(1)[0])
            specs.append(
                ExperimentSpec(
                    model=model,
                    variant=variant,
                    n_values=tuple(block.get("n_values", (23400,))),
                    jump_lambdas=tuple(block.get("jump_lambdas", ())),
                    noise_etas=tuple(block.get("noise_etas", ())),
                    sigma_jump=float(block.get("sigma_jump", 0.5)),
                    alphas=alphas,
                    reps=int(block.get("reps", reps)) if reps_override is None else reps,
                    master_seed=exp_seed,
                    tuning=tuning,
                )
            )
    return specs


@cli.command("mc")
@click.option("--config", "config_path", type=click.Path(), required=True, help="Experiment grid TOML.")
@click.option("--reps", type=int, default=None, help="Override replication count for all experiments.")
@click.option("--seed", type=int, default=None, help="Override the master seed.")
@click.option("--threads", type=int, default=1, show_default=True, help="Worker processes.")
@click.option("--out-prefix", type=str, default="mc", show_default=True, help="Output file prefix.")
def cmd_mc(config_path, reps, seed, threads, out_prefix):
    """Run a Monte Carlo experiment grid; write rate CSV + JSON report."""
    specs = _mc_specs_from_config(config_path, reps, seed)
    reports: List[McReport] = []
    for spec in specs:
        reports.append(run_experiment(spec, workers=threads))
    echo = {
        "config": str(config_path),
        "reps": reps,
        "seed": seed,
        "experiments": [spec.to_json_dict() for spec in specs],
    }
    csv_text, table_text = rejection_table(reports)
    _write_text(f"{out_prefix}_rates.csv", _config_comment(echo) + csv_text)
    _write_text(f"{out_prefix}_rows.csv", _config_comment(echo) + report_rows_csv(reports))
    _write_text(f"{out_prefix}_report.json", dumps_json({"config": _echo_dict(echo), **report_to_json_dict(reports)}))
    click.echo(table_text, nl=False)
    total = sum(rep.elapsed for rep in reports)
    click.echo(f"elapsed: {total:.1f}s over {len(reports)} experiment(s)", err=True)


@cli.command("qq")
@click.option("--in", "in_path", type=click.Path(), required=True, help="Statistics JSON (list, {'samples': []}, or mc report).")
@click.option("--key", type=str, default=None, help="Sample key inside an mc report JSON.")
@click.option("--out-prefix", type=str, default="qq", show_default=True)
def cmd_qq(in_path, key, out_prefix):
    """Export QQ pairs and histogram bins for a statistic sample."""
    try:
        with open(in_path, "r") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise click.ClickException(f"cannot read {in_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON in {in_path}: {exc}") from exc
    samples = _extract_samples(data, key)
    qq = export_qq(samples)
    pairs_text, hist_text = qq_csv(qq)
    echo = {"in": str(in_path), "key": key, "samples": len(qq.empirical), "degenerate": qq.degenerate}
    _write_text(f"{out_prefix}_qq.csv", _config_comment(echo) + pairs_text)
    _write_text(f"{out_prefix}_hist.csv", _config_comment(echo) + hist_text)
    click.echo(f"wrote {out_prefix}_qq.csv and {out_prefix}_hist.csv ({len(qq.empirical)} samples"
               + (", degenerate)" if qq.degenerate else ")"))


def _extract_samples(data, key: Optional[str]) -> List[float]:
    if isinstance(data, list):
        return [float(x) for x in data]
    if isinstance(data, dict):
        if "samples" in data and isinstance(data["samples"], list):
            return [float(x) for x in data["samples"]]
        if "experiments" in data:
            pools: Dict[str, list] = {}
            for experiment in data["experiments"]:
                pools.update(experiment.get("samples", {}))
            if key is None:
                if len(pools) == 1:
                    return [float(x) for x in next(iter(pools.values()))]
                raise ParameterError(f"report holds {len(pools)} sample sets; pick one with --key: {sorted(pools)}")
            if key not in pools:
                raise ParameterError(f"sample key {key!r} not found; available: {sorted(pools)}")
            return [float(x) for x in pools[key]]
    raise DataError("unrecognized statistics JSON layout")


@cli.command("clean")
@click.option("--config", "config_path", type=click.Path(), default=None, help="TOML config file ([clean] section).")
@click.option("--in", "in_path", type=click.Path(), required=True, help="Raw tick CSV (date,time,price,size).")
@click.option("--out-dir", type=click.Path(), default=".", show_default=True)
@click.option("--grid-seconds", type=int, default=5, show_default=True)
@click.option("--span", type=str, default="09:30-16:00", show_default=True)
@click.pass_context
def cmd_clean(ctx, config_path, **kwargs):
    """Clean raw ticks and write one calendar-sampled CSV per day."""
    allowed = list(kwargs)
    cfg = _merge(ctx, _load_config_section(config_path, "clean", allowed), **kwargs)
    span = parse_span(cfg["span"])
    loaded = load_ticks(cfg["in_path"])
    out_dir = Path(cfg["out_dir"])
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise click.ClickException(f"cannot create {out_dir}: {exc}") from exc
    summary = {"days": {}, "row_errors": [e.__dict__ for e in loaded.row_errors]}
    for day, ticks in loaded.days.items():
        cleaned, stats = clean_ticks(ticks, session=(span.start, span.end))
        try:
            series = sample_calendar(cleaned, int(cfg["grid_seconds"]), span=(span.start, span.end))
        except HfhetError as exc:
            summary["days"][day.isoformat()] = {"error": str(exc), **stats.to_json_dict()}
            continue
        out_path = out_dir / f"clean_{day.isoformat()}.csv"
        buffer = io.StringIO()
        buffer.write(_config_comment(cfg))
        buffer.write("time,log_price\n")
        for clock, value in zip(series.grid_times(), series.log_prices):
            buffer.write(f"{clock:%H:%M:%S},{value!r}\n")
        _write_text(str(out_path), buffer.getvalue())
        summary["days"][day.isoformat()] = {"out": str(out_path), "n": series.n, **stats.to_json_dict()}
    click.echo(dumps_json({"config": _echo_dict(cfg), **summary}), nl=False)


@cli.command("report")
@click.option("--config", "config_path", type=click.Path(), default=None, help="TOML config file ([report] section).")
@click.option("--in", "in_path", type=click.Path(), required=True, help="Raw tick CSV (date,time,price,size).")
@click.option("--grid-seconds", type=int, default=5, show_default=True, help="Base sampling grid.")
@click.option("--spans", type=str, default="09:30-16:00", show_default=True, help="Comma-separated HH:MM-HH:MM windows.")
@click.option("--plan", "plans", type=str, multiple=True, default=("plain:300", "truncated:300", "preaveraged:5"),
              show_default=True, help="variant:grid_seconds, repeatable.")
@click.option("--alphas", type=str, default="0.10,0.05,0.01", show_default=True)
@click.option("--min-kn-mult", type=float, default=10.0, show_default=True,
              help="Exclude days with fewer than this multiple of the localization window.")
@click.option("--out-prefix", type=str, default="report", show_default=True)
@_tuning_options
@click.pass_context
def cmd_report(ctx, config_path, **kwargs):
    """Per-day tests over spans: proportions CSV, report JSON, spot curves."""
    allowed = list(kwargs)
    cfg = _merge(ctx, _load_config_section(config_path, "report", allowed), **kwargs)
    tuning = _tuning_from(cfg)
    span_specs = [parse_span(part) for part in str(cfg["spans"]).split(",") if part.strip()]
    plan_list = []
    for item in cfg["plans"]:
        try:
            name, grid = str(item).split(":")
            plan_list.append(VariantPlan(_VARIANT_ALIASES[name.strip()], int(grid)))
        except (ValueError, KeyError) as exc:
            raise ConfigurationError(f"malformed plan {item!r}; expected variant:grid_seconds") from exc
    alphas = tuple(float(a) for a in str(cfg["alphas"]).split(","))

    loaded = load_ticks(cfg["in_path"])
    if not loaded.days:
        raise DataError(f"no usable tick rows in {cfg['in_path']}")
    base_span = (SESSION_START, SESSION_END)
    series = []
    day_errors = []
    for day, ticks in loaded.days.items():
        cleaned, _ = clean_ticks(ticks, session=base_span)
        try:
            series.append(sample_calendar(cleaned, int(cfg["grid_seconds"]), span=base_span))
        except HfhetError as exc:
            day_errors.append((day.isoformat(), str(exc)))
    if not series:
        raise DegenerateDataError("every day failed calendar sampling")

    report = daily_report(
        series, plans=plan_list, tuning=tuning, alphas=alphas,
        spans=span_specs, min_kn_mult=cfg["min_kn_mult"],
    )
    echo = _echo_dict(cfg)
    _write_text(f"{cfg['out_prefix']}_proportions.csv", _config_comment(cfg) + report.proportions_csv())
    payload = {"config": echo, "day_errors": day_errors, **report.to_json_dict()}
    _write_text(f"{cfg['out_prefix']}_report.json", dumps_json(payload))
    for plan in plan_list:
        taus, curve = spot_curve(series, plan.variant, tuning, grid_seconds=plan.grid_seconds)
        buffer = io.StringIO()
        buffer.write(_config_comment(cfg))
        buffer.write("block_time,mean_spot_variance\n")
        for tau, value in zip(taus, curve):
            buffer.write(f"{tau:.12g},{value:.12g}\n")
        _write_text(f"{cfg['out_prefix']}_spot_{plan.variant}.csv", buffer.getvalue())
    click.echo(report.proportions_csv(), nl=False)


def bundled_config(name: str) -> Path:
    """Path to a packaged reference config (e.g. 'table1.toml')."""
    return Path(str(resources.files("hfhet").joinpath("configs", name)))


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.UsageError as exc:
        exc.show()
        return EXIT_CONFIG
    except click.ClickException as exc:
        exc.show()
        return EXIT_IO
    except (ParameterError, ConfigurationError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        return EXIT_CONFIG
    except DegenerateDataError as exc:
        click.echo(f"degenerate data: {exc}", err=True)
        return EXIT_DEGENERATE
    except (DataError, OSError) as exc:
        click.echo(f"input error: {exc}", err=True)
        return EXIT_IO
    except HfhetError as exc:  # safety net for new error classes
        click.echo(f"error: {exc}", err=True)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
