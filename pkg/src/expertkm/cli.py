"""Command-line interface: fit, cv, simulate, mc-study, bias.

Every run writes its outputs plus a ``manifest.json`` recording the
config hash, seed, library versions, selected bandwidth, and warnings.
Output CSVs start with a comment line carrying the same hash and seed,
so reruns with identical config and seed are byte-identical. Failures
write ``error.json`` and exit with 2 (validation) or 3 (numerical).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .asymptotics import pointwise_ci
from .bandwidth import (
    CoordinateDescent,
    CvConfig,
    cv_score_at_t,
    direct_loo_score,
    select_bandwidth,
)
from .config import (
    RunConfig,
    Section,
    empty_config,
    load_config,
    parse_bandwidth_mode,
    parse_judgment_mode,
    parse_p_hat,
    parse_query_points,
    scenario_from_section,
)
from .curves import integrate_value
from .data import Dataset
from .dataio import read_dataset_csv, write_dataset_csv, write_records_csv, write_table_csv
from .errors import ConfigError, ExpertKMError, NumericalError, ValidationError
from .estimator import fit_conditional_km
from .experts import (
    PartialExpert,
    ThresholdCensorExpert,
    UniformCensorExpert,
    bias_functional,
    biased_limit,
    judgment_rng,
    p_from_densities,
)
from .kernels import Bandwidth, as_bandwidth
from .simulation import (
    DisabilityScenario,
    McExpertSpec,
    heatmap_difference,
    run_mc_study,
    simulate_portfolio,
    true_survival_grid,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class RunContext:
    """Shared run state: destination, hash, seed, manifest accumulation."""

    def __init__(self, command, config: RunConfig, args):
        self.command = command
        self.config = config
        self.out_dir = Path(args.out)
        self.seed = args.seed
        self.threads = args.threads
        overrides = {
            "seed": args.seed,
            "threads": None,  # thread count must not alter outputs
            "skip_bad": args.skip_bad,
            "keep_latents": args.keep_latents,
            "verify_loo": args.verify_loo,
            "full_scale": args.full_scale,
        }
        digest = hashlib.sha256()
        digest.update(config.raw_bytes)
        digest.update(repr(sorted((k, v) for k, v in overrides.items() if v is not None)).encode())
        self.config_hash = digest.hexdigest()
        self.warnings = []
        self.outputs = []
        self.extra = {}

    def comment(self) -> str:
        return f"expertkm {self.command} config_sha256={self.config_hash} seed={self.seed}"

    def register(self, path: Path):
        self.outputs.append(path.name)

    def warn(self, message: str):
        self.warnings.append(message)

    def table(self, name, header, rows):
        path = self.out_dir / name
        write_table_csv(path, header, rows, comments=[self.comment()])
        self.register(path)

    def records(self, name, fieldnames, records):
        path = self.out_dir / name
        write_records_csv(path, fieldnames, records, comments=[self.comment()])
        self.register(path)

    def finish(self):
        manifest = {
            "command": self.command,
            "config": str(self.config.path),
            "config_sha256": self.config_hash,
            "seed": self.seed,
            "versions": {
                "expertkm": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "warnings": self.warnings,
            "outputs": sorted(self.outputs),
            **self.extra,
        }
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _grid_records(grid):
    for i, z in enumerate(grid.z_values):
        for j, t in enumerate(grid.t_values):
            yield {"z_age": float(z), "t": float(t), "value": float(grid.values[i, j])}


def _ci_bounds(fit, t_grid, level):
    """Interval bounds, undefined (NaN) from the first saturated jump on."""
    lam = fit.cum_hazard
    saturated = np.flatnonzero((lam.sizes > 0.0) & (1.0 - lam.sizes <= 1e-15))
    sat_time = float(lam.times[saturated[0]]) if saturated.size else None
    if sat_time is None:
        ci = pointwise_ci(fit, t_grid, level)
        return ci.lower, ci.upper, None
    lower = np.full(t_grid.size, np.nan)
    upper = np.full(t_grid.size, np.nan)
    ok = t_grid < sat_time
    if ok.any():
        ci = pointwise_ci(fit, t_grid[ok], level)
        lower[ok], upper[ok] = ci.lower, ci.upper
    return lower, upper, sat_time


def _load_dataset(section: Section, args, require_judgments=False):
    dataset, report = read_dataset_csv(
        section.path("data"),
        covariate_columns=section.names("covariates", default=None) or None,
        require_judgments=require_judgments,
        skip_bad=args.skip_bad,
    )
    return dataset, report


def _apply_judgments(dataset: Dataset, mode, seed):
    """Resolve a judgment mode into an indicator array (or None for naive)."""
    if mode.kind == "naive":
        return None
    if mode.kind == "precomputed":
        return dataset.require_judgments()
    rng = judgment_rng(seed, 0, 0)
    if mode.kind == "uniform":
        model = UniformCensorExpert(mode.keep_probability)
    elif mode.kind == "threshold":
        column = mode.column
        idx = dataset.covariate_names.index(column) if column in dataset.covariate_names else None
        if idx is None:
            raise ConfigError(f"threshold judgment column {column!r} not in dataset")
        model = ThresholdCensorExpert(
            mode.keep_probability, lambda z, _i=idx, _c=mode.cutoff: z[:, _i] <= _c
        )
    elif mode.kind in ("partial", "perfect"):
        needed = ("z_age", "z_rep")
        if not all(name in dataset.covariate_names for name in needed):
            raise ConfigError(
                "partial/perfect judging needs the disability-model columns z_age and z_rep"
            )
        scenario = DisabilityScenario()
        cols = [dataset.covariate_names.index(n) for n in needed]
        p = p_from_densities(
            lambda w, z, _c=cols[0]: scenario.disability_density(w, z[:, _c]),
            lambda w, z, _c=cols[1]: scenario.contamination_density(w, z[:, _c]),
        )
        model = PartialExpert(p=p, effectiveness=mode.effectiveness)
    else:
        raise ConfigError(f"unsupported judgment mode {mode.kind!r}")
    return model.judge(dataset.w, dataset.event, dataset.covariates, rng)


def _cv_config_from_section(section: Section) -> CvConfig:
    grid_text = section.get("grid")
    grid = (
        [[float(v) for v in part.split()] for part in grid_text.split(";")] if grid_text else None
    )
    descent = None
    if section.bool("descent", False):
        descent = CoordinateDescent(
            initial=section.floats("initial"),
            shrink=section.float("shrink", 0.5),
            grow=section.float("grow", 2.0),
            max_sweeps=section.int("max_sweeps", 8),
            tol=section.float("tol", 0.0),
        )
    return CvConfig(
        grid=grid,
        coordinate_descent=descent,
        t_max=section.float("t_max"),
        targets=section.names("cv_targets", default=("observed", "events")),
        max_grid_points=section.int("cv_grid_points", 128),
    )


def _positive_t_max(section: Section, dataset) -> float:
    t_max = section.float("t_max", float(np.max(dataset.w)))
    if t_max <= 0.0:
        raise ConfigError("t_max must be strictly positive")
    return t_max


def _resolve_bandwidth(mode, section: Section, w, judgments, event, Z, ctx):
    k = Z.shape[1]
    if mode.kind == "explicit":
        return as_bandwidth(list(mode.values), k), None
    if mode.kind == "schedule":
        return Bandwidth.from_schedule(Z.shape[0], k, section.float("rho", 0.3)), None
    report = select_bandwidth(
        w,
        event if judgments is None else judgments,
        Z,
        _cv_config_from_section(section),
        rho=section.float("rho", 0.3),
    )
    ctx.extra["cv_candidates"] = len(report.rows)
    return report.selected, report


def cmd_fit(ctx: RunContext, args) -> int:
    section = ctx.config.section("fit")
    mode = parse_judgment_mode(section.get("judgments", "naive"))
    dataset, report = _load_dataset(section, args, require_judgments=mode.kind == "precomputed")
    if report.n_rejected:
        ctx.warn(report.summary())
    names = section.names("covariates", default=None) or dataset.covariate_names
    Z = dataset.select_covariates(names)
    judgments = _apply_judgments(dataset, mode, ctx.seed)
    bw_mode = parse_bandwidth_mode(section.get("bandwidth", "schedule"))
    bandwidth, cv_report = _resolve_bandwidth(
        bw_mode, section, dataset.w, judgments, dataset.event, Z, ctx
    )
    t_max = _positive_t_max(section, dataset)
    t_grid = section.axis("t_grid")
    if t_grid is None:
        t_grid = np.linspace(0.0, t_max, 121)
    level = section.float("ci_level", 0.95)
    queries = parse_query_points(section.require("query"), Z.shape[1])
    compare_naive = section.bool("compare_naive", False)

    point_info = []
    diff_rows = []
    for i, z0 in enumerate(queries):
        fit = fit_conditional_km(
            dataset.w, dataset.event, Z, z0, bandwidth, judgments=judgments, t_max=t_max
        )
        lower, upper, sat_time = _ci_bounds(fit, t_grid, level)
        if sat_time is not None:
            ctx.warn(
                f"point {i}: estimated survival reaches zero at t={sat_time}; "
                "interval bounds undefined from there on"
            )
        table = np.column_stack(
            [
                t_grid,
                fit.cdf.value(t_grid),
                1.0 - fit.cdf.value(t_grid),
                fit.cum_hazard.value(t_grid),
                lower,
                upper,
            ]
        )
        ctx.table(
            f"fit_point_{i}.csv",
            ["t", "F", "survival", "cum_hazard", "ci_lower", "ci_upper"],
            table,
        )
        if fit.truncated_at is not None:
            ctx.warn(f"point {i}: fit truncated at t={fit.truncated_at}")
        info = {
            "point": i,
            "z": [float(v) for v in z0],
            "n_effective": fit.weight_total,
            "density": fit.density,
            "truncated_at": fit.truncated_at,
        }
        if compare_naive:
            naive = fit_conditional_km(
                dataset.w, dataset.event, Z, z0, bandwidth, judgments=None, t_max=t_max
            )
            expert_area = integrate_value(fit.cdf, t_max)
            naive_area = integrate_value(naive.cdf, t_max)
            # survival difference integrates to the negated CDF difference
            diff_rows.append(
                list(z0) + [naive_area - expert_area]
            )
        point_info.append(info)
    if compare_naive:
        ctx.table(
            "integral_difference.csv",
            [f"z_{j+1}" for j in range(Z.shape[1])] + ["integral_difference"],
            diff_rows,
        )
    ctx.extra["bandwidth_used"] = [float(b) for b in bandwidth.diagonal]
    ctx.extra["points"] = point_info
    ctx.extra["judgments"] = mode.kind
    return EXIT_OK


def cmd_cv(ctx: RunContext, args) -> int:
    section = ctx.config.section("cv")
    mode = parse_judgment_mode(section.get("judgments", "naive"))
    dataset, report = _load_dataset(section, args, require_judgments=mode.kind == "precomputed")
    if report.n_rejected:
        ctx.warn(report.summary())
    names = section.names("covariates", default=None) or dataset.covariate_names
    Z = dataset.select_covariates(names)
    judgments = _apply_judgments(dataset, mode, ctx.seed)
    response = dataset.event if judgments is None else judgments
    selection = select_bandwidth(
        dataset.w, response, Z, _cv_config_from_section(section), rho=section.float("rho", 0.3)
    )
    best = tuple(selection.selected.diagonal)
    rows = [
        list(r.diagonal) + [r.score, r.n_excluded, int(r.diagonal == best)]
        for r in selection.rows
    ]
    ctx.table(
        "cv_report.csv",
        [f"b_{j+1}" for j in range(Z.shape[1])] + ["score", "excluded_terms", "selected"],
        rows,
    )
    ctx.extra["selected_bandwidth"] = [float(b) for b in best]
    ctx.extra["strategy"] = selection.strategy

    if args.verify_loo:
        if dataset.n > 200:
            raise ValidationError("--verify-loo is limited to datasets of at most 200 rows")
        t_checks = np.quantile(np.unique(dataset.w), [0.25, 0.5, 0.75])
        records = []
        worst = 0.0
        for row in selection.rows:
            for t in t_checks:
                shortcut, exc_s = cv_score_at_t(
                    t, dataset.w, response, Z, list(row.diagonal), use_judgments=True
                )
                direct, exc_d = direct_loo_score(
                    t, dataset.w, response, Z, list(row.diagonal), use_judgments=True
                )
                diff = (
                    abs(shortcut - direct)
                    if np.isfinite(shortcut) and np.isfinite(direct)
                    else 0.0
                )
                worst = max(worst, diff)
                records.append(
                    {
                        "t": float(t),
                        "bandwidth": " ".join(repr(b) for b in row.diagonal),
                        "shortcut": shortcut,
                        "direct": direct,
                        "abs_diff": diff,
                        "excluded_shortcut": exc_s,
                        "excluded_direct": exc_d,
                    }
                )
        ctx.records(
            "loo_verification.csv",
            ["t", "bandwidth", "shortcut", "direct", "abs_diff", "excluded_shortcut", "excluded_direct"],
            records,
        )
        ctx.extra["loo_max_abs_diff"] = worst
    return EXIT_OK


def cmd_simulate(ctx: RunContext, args) -> int:
    section = ctx.config.optional_section("simulate")
    scenario = scenario_from_section(section, ctx.seed)
    portfolio = simulate_portfolio(scenario, rng=np.random.default_rng([ctx.seed, 0, 0]))
    dataset = portfolio.to_dataset()
    latents = (
        {
            "true_event_time": portfolio.true_event_time,
            "contamination_time": portfolio.contamination_time,
            "censoring_time": portfolio.censoring_time,
        }
        if args.keep_latents
        else None
    )
    path = ctx.out_dir / "portfolio.csv"
    write_dataset_csv(dataset, path, comments=[ctx.comment()], latents=latents)
    ctx.register(path)
    ctx.extra["n"] = scenario.n
    return EXIT_OK


def cmd_mc_study(ctx: RunContext, args) -> int:
    import dataclasses

    section = ctx.config.optional_section("mc_study")
    scenario = scenario_from_section(section, ctx.seed)
    replications = section.int("replications", 100)
    if args.full_scale:
        scenario = dataclasses.replace(scenario, n=10_000)
        replications = 300
    elif "n" not in section:
        # desk-scale default when the config does not pin a portfolio size
        scenario = dataclasses.replace(scenario, n=2_000)

    specs = []
    for token in section.names("experts", default=("naive", "partial:0.85", "partial:1.0")):
        if token == "naive":
            specs.append(McExpertSpec.naive())
        elif token.startswith("partial:"):
            specs.append(McExpertSpec.partial(scenario, float(token.split(":")[1])))
        else:
            raise ConfigError(f"unknown study expert {token!r}")
    z_points = section.axis("z_points", np.array([45.0, 50.0, 55.0]))
    t_points = section.axis("t_points", np.array([2.0, 5.0, 10.0]))
    z_grid = section.axis("z_grid")
    t_grid = section.axis("t_grid")
    if z_grid is not None and t_grid is not None:
        z_points = np.unique(np.concatenate([z_points, z_grid]))
        t_points = np.unique(np.concatenate([t_points, t_grid]))

    result = run_mc_study(
        scenario,
        specs,
        z_points,
        t_points,
        replications=replications,
        rho=section.float("rho", 0.3),
        seed=ctx.seed,
        threads=ctx.threads,
    )
    ctx.records(
        "mc_results.csv",
        [
            "z_age",
            "expert",
            "t",
            "replications",
            "simulated_mean",
            "simulated_std",
            "true_center",
            "true_survival",
            "mean_error",
            "plugin_sigma",
            "failed",
        ],
        result.rows(),
    )
    for label, z, t in result.flagged_cells():
        ctx.warn(f"cell ({label}, z={z}, t={t}) exceeded 5% failed replications")

    truth = true_survival_grid(scenario, z_points, t_points)
    ctx.records("true_survival_grid.csv", ["z_age", "t", "value"], _grid_records(truth))
    for label in result.expert_labels:
        grid = result.mean_grid(label)
        ctx.records(f"mean_grid_{label}.csv", ["z_age", "t", "value"], _grid_records(grid))
        ctx.records(
            f"diff_grid_{label}_minus_truth.csv",
            ["z_age", "t", "value"],
            _grid_records(heatmap_difference(grid, truth)),
        )
    ctx.extra["bandwidth_used"] = [float(b) for b in result.bandwidth.diagonal]
    ctx.extra["replications"] = replications
    ctx.extra["n"] = scenario.n
    return EXIT_OK


def cmd_bias(ctx: RunContext, args) -> int:
    section = ctx.config.section("bias")
    mode = parse_judgment_mode(section.get("judgments", "naive"))
    dataset, report = _load_dataset(section, args, require_judgments=mode.kind == "precomputed")
    if report.n_rejected:
        ctx.warn(report.summary())
    names = section.names("covariates", default=None) or dataset.covariate_names
    Z = dataset.select_covariates(names)
    judgments = _apply_judgments(dataset, mode, ctx.seed)
    bw_mode = parse_bandwidth_mode(section.get("bandwidth", "schedule"))
    bandwidth, _ = _resolve_bandwidth(
        bw_mode, section, dataset.w, judgments, dataset.event, Z, ctx
    )
    t_max = _positive_t_max(section, dataset)
    p_spec = parse_p_hat(section.require("p_hat"))
    if p_spec.kind == "constant":
        value = p_spec.value
        if not 0.0 <= value <= 1.0:
            raise ConfigError("constant p_hat must lie in [0, 1]")
        p_hat = lambda w, z: np.full(np.asarray(w, dtype=float).shape, value)
    else:
        scenario = DisabilityScenario()
        needed = ("z_age", "z_rep")
        if not all(name in names for name in needed):
            raise ConfigError("disability p_hat needs covariates z_age and z_rep")
        ia, ir = names.index("z_age"), names.index("z_rep")
        p_hat = p_from_densities(
            lambda w, z, _c=ia: scenario.disability_density(w, z[:, _c]),
            lambda w, z, _c=ir: scenario.contamination_density(w, z[:, _c]),
        )
    effectiveness_grid = section.floats("p0", [0.0, 0.25, 0.5, 0.85, 1.0])
    queries = parse_query_points(section.require("query"), Z.shape[1])

    for i, z0 in enumerate(queries):
        naive_fit = fit_conditional_km(
            dataset.w, dataset.event, Z, z0, bandwidth, judgments=None, t_max=t_max
        )
        fitted = (
            naive_fit
            if judgments is None
            else fit_conditional_km(
                dataset.w, dataset.event, Z, z0, bandwidth, judgments=judgments, t_max=t_max
            )
        )
        for p0 in effectiveness_grid:
            bias = bias_functional(
                p_hat, p0, naive_fit.observed_cdf, naive_fit.event_cdf, z0
            )
            center = biased_limit(fitted.cum_hazard, bias)
            grid = center.times
            rows = np.column_stack(
                [
                    grid,
                    bias.curve.value(grid),
                    np.exp(-bias.curve.value(grid)),
                    1.0 - center.value(grid),
                ]
            )
            ctx.table(
                f"bias_point{i}_p0_{p0:g}.csv",
                ["t", "bias", "factor", "biased_center_survival"],
                rows,
            )
            if bias.truncated_at is not None:
                ctx.warn(f"point {i}, p0={p0:g}: bias curve truncated at {bias.truncated_at}")
    ctx.extra["bandwidth_used"] = [float(b) for b in bandwidth.diagonal]
    return EXIT_OK


_COMMANDS = {
    "fit": (cmd_fit, True),
    "cv": (cmd_cv, True),
    "simulate": (cmd_simulate, False),
    "mc-study": (cmd_mc_study, False),
    "bias": (cmd_bias, True),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expertkm",
        description="Conditional Kaplan-Meier estimation with expert-adjudicated events",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    default_out = os.environ.get("EXPERTKM_OUT", "out")
    for name, (_, config_required) in _COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", required=config_required, help="INI run configuration")
        p.add_argument("--out", default=default_out, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--skip-bad", action="store_true", help="drop invalid rows instead of aborting")
        p.add_argument("--keep-latents", action="store_true", help="emit latent times when simulating")
        p.add_argument("--verify-loo", action="store_true", help="report shortcut vs direct CV equality")
        p.add_argument("--full-scale", action="store_true", help="run the full-size study")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        config = load_config(args.config) if args.config else empty_config()
        handler, _ = _COMMANDS[args.command]
        ctx = RunContext(args.command, config, args)
        code = handler(ctx, args)
        ctx.finish()
        return code
    except ExpertKMError as exc:
        code = EXIT_VALIDATION if isinstance(exc, ValidationError) else EXIT_NUMERICAL
        if isinstance(exc, NumericalError):
            code = EXIT_NUMERICAL
        payload = {
            "error_type": type(exc).__name__,
            "message": str(exc),
            "exit_code": code,
        }
        (out_dir / "error.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
