"""Command-line interface.

Subcommands: ``mediate`` (analyze a dataset end to end), ``pseudo`` (export
per-subject pseudo-values), ``simulate`` (draw a dataset from a scenario),
``oracle`` (true effect values), ``opchar`` (operating-characteristics grid)
and ``bench`` (pseudo-value runtime comparison).

Input datasets are CSV with a header row and columns ``time``, ``status``,
``arm``, ``mediator`` (names overridable) plus optional covariate columns
referenced by name; status is 0 for censoring and j >= 1 for cause-j events;
missing values are a hard error. Scenario and grid configs are JSON with the
schemas shown in the README; unknown keys are rejected.

Every command is deterministic given its inputs and seed and writes numbers
at a fixed precision (10 significant digits in tables, 6 decimals in the
human-readable report), so reruns produce byte-identical output files.

Exit codes: 0 success; 2 command-line usage error; 3 schema error (malformed
CSV or config); 4 domain error (horizon outside follow-up, unknown cause);
5 numerical error (rank-deficient design, degenerate bootstrap). The worker
count for ``opchar`` comes from --workers or the SURVMEDIATE_WORKERS
environment variable.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from dataclasses import dataclass

import click
import numpy as np

from ._backend import backend_name
from .inference import (
    DegenerateResampleError,
    bootstrap_inference,
    delta_inference,
)
from .mediation import (
    NoConfoundersWarning,
    RankDeficientError,
    fit_mediator_model,
    fit_outcome_model,
)
from .pseudo import EstimandKind, JackknifeSupportError, if_pseudo, jackknife_pseudo
from .simlab import (
    ScenarioConfig,
    pseudo_runtime_benchmark,
    run_operating_characteristics,
    simulate_competing,
    simulate_trial,
    true_effects,
)
from .survival import (
    FollowupExceededError,
    SurvivalSample,
    aalen_johansen_cif,
    build_risk_table,
    km_survival,
    rmst,
)

EXIT_SCHEMA = 3
EXIT_DOMAIN = 4
EXIT_NUMERIC = 5


class SchemaError(ValueError):
    """Malformed input file (CSV or config)."""


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def _run_guarded(fn):
    """Map library errors onto the documented exit codes."""
    try:
        fn()
    except SchemaError as exc:
        click.echo(f"schema error: {exc}", err=True)
        sys.exit(EXIT_SCHEMA)
    except (FollowupExceededError, JackknifeSupportError) as exc:
        click.echo(f"domain error: {exc}", err=True)
        sys.exit(EXIT_DOMAIN)
    except (RankDeficientError, DegenerateResampleError) as exc:
        click.echo(f"numerical error: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)
    except ValueError as exc:
        click.echo(f"domain error: {exc}", err=True)
        sys.exit(EXIT_DOMAIN)


# ---------------------------------------------------------------- input files


@dataclass
class Dataset:
    sample: SurvivalSample
    covariate_names: list


def _read_dataset(path, time_col, status_col, arm_col, mediator_col, covariate_cols) -> Dataset:
    try:
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None:
                raise SchemaError(f"{path}: empty file (header row required)")
            fields = [f.strip() for f in reader.fieldnames]
            required = [time_col, status_col, arm_col, mediator_col, *covariate_cols]
            missing = [c for c in required if c not in fields]
            if missing:
                raise SchemaError(f"{path}: missing column(s) {missing}; found {fields}")
            rows = list(reader)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}")
    if not rows:
        raise SchemaError(f"{path}: no data rows")

    def parse(row_no, row, col, kind=float):
        raw = (row.get(col) or "").strip()
        if raw == "":
            raise SchemaError(f"{path} row {row_no}: missing value in column {col!r}")
        try:
            return kind(raw)
        except ValueError:
            raise SchemaError(
                f"{path} row {row_no}: cannot parse {col!r} value {raw!r}"
            )

    n = len(rows)
    time = np.empty(n)
    status = np.empty(n, dtype=np.int64)
    arm = np.empty(n, dtype=np.int64)
    mediator = np.empty(n)
    covariates = np.empty((n, len(covariate_cols)))
    ids = []
    for i, row in enumerate(rows):
        row_no = i + 2  # header is line 1
        time[i] = parse(row_no, row, time_col)
        raw_status = parse(row_no, row, status_col)
        if raw_status != int(raw_status):
            raise SchemaError(f"{path} row {row_no}: status must be an integer")
        status[i] = int(raw_status)
        raw_arm = parse(row_no, row, arm_col)
        if raw_arm not in (0.0, 1.0):
            raise SchemaError(f"{path} row {row_no}: arm must be 0 or 1")
        arm[i] = int(raw_arm)
        mediator[i] = parse(row_no, row, mediator_col)
        for j, col in enumerate(covariate_cols):
            covariates[i, j] = parse(row_no, row, col)
        ids.append(row.get("id", str(i)))
    try:
        sample = SurvivalSample(
            time=time,
            status=status,
            arm=arm,
            mediator=mediator,
            covariates=covariates,
            ids=np.asarray(ids, dtype=object),
        )
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}")
    return Dataset(sample=sample, covariate_names=list(covariate_cols))


_SCENARIO_KEYS = {
    "n_per_arm",
    "k",
    "direct_effect",
    "indirect_effect",
    "mu0",
    "mu1",
    "pi_c",
    "tau",
    "seed",
    "competing",
}


def _load_json(path):
    try:
        with open(path) as handle:
            return json.load(handle)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})")


def _scenario_from_mapping(obj, where) -> ScenarioConfig:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: scenario must be a JSON object")
    unknown = set(obj) - _SCENARIO_KEYS
    if unknown:
        raise SchemaError(f"{where}: unknown key(s) {sorted(unknown)}")
    if "n_per_arm" not in obj:
        raise SchemaError(f"{where}: n_per_arm is required")
    kwargs = {key: obj[key] for key in obj if key != "competing"}
    competing = obj.get("competing")
    if competing is not None:
        if not isinstance(competing, dict) or set(competing) != {"lambda_d"}:
            raise SchemaError(f"{where}: competing must be an object with only lambda_d")
        kwargs["lambda_d"] = competing["lambda_d"]
    try:
        return ScenarioConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}")


def _load_scenario(path) -> ScenarioConfig:
    return _scenario_from_mapping(_load_json(path), path)


_GRID_TOP_KEYS = {"replicates", "seed", "alpha", "grid"}
_GRID_KEYS = {
    "n_per_arm",
    "tau",
    "cases",
    "estimands",
    "k",
    "pi_c",
    "mu0",
    "mu1",
    "lambda_d",
}
_CASES = {
    "none": (False, False),
    "direct": (True, False),
    "indirect": (False, True),
    "both": (True, True),
}


def _load_grid(path):
    obj = _load_json(path)
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: grid file must be a JSON object")
    unknown = set(obj) - _GRID_TOP_KEYS
    if unknown:
        raise SchemaError(f"{path}: unknown key(s) {sorted(unknown)}")
    for key in ("replicates", "grid"):
        if key not in obj:
            raise SchemaError(f"{path}: {key} is required")
    grid = obj["grid"]
    if not isinstance(grid, dict):
        raise SchemaError(f"{path}: grid must be a JSON object")
    unknown = set(grid) - _GRID_KEYS
    if unknown:
        raise SchemaError(f"{path}: unknown grid key(s) {sorted(unknown)}")
    for key in ("n_per_arm", "tau", "cases", "estimands"):
        if key not in grid or not isinstance(grid[key], list) or not grid[key]:
            raise SchemaError(f"{path}: grid.{key} must be a nonempty list")
    bad = [c for c in grid["cases"] if c not in _CASES]
    if bad:
        raise SchemaError(f"{path}: unknown case(s) {bad}; expected {sorted(_CASES)}")
    bad = [e for e in grid["estimands"] if e not in ("surv", "rmst", "cif")]
    if bad:
        raise SchemaError(f"{path}: unknown estimand(s) {bad}; expected surv/rmst/cif")
    if "cif" in grid["estimands"] and "lambda_d" not in grid:
        raise SchemaError(f"{path}: grid.lambda_d is required when cif is requested")
    cells = []
    for scale in grid["estimands"]:
        for case in grid["cases"]:
            direct, indirect = _CASES[case]
            for n_per_arm in grid["n_per_arm"]:
                for tau in grid["tau"]:
                    try:
                        config = ScenarioConfig(
                            n_per_arm=n_per_arm,
                            k=grid.get("k", 3.0),
                            direct_effect=direct,
                            indirect_effect=indirect,
                            mu0=grid.get("mu0", 0.0),
                            mu1=grid.get("mu1", -1.0),
                            pi_c=grid.get("pi_c", 0.2),
                            tau=tau,
                            lambda_d=grid.get("lambda_d") if scale == "cif" else None,
                        )
                    except (TypeError, ValueError) as exc:
                        raise SchemaError(f"{path}: {exc}")
                    cells.append((config, scale))
    return cells, int(obj["replicates"]), float(obj.get("alpha", 0.05)), int(obj.get("seed", 0))


# ------------------------------------------------------------------- output


def _write_text(out_path, text: str) -> None:
    if out_path is None:
        click.echo(text, nl=False)
    else:
        with open(out_path, "w") as handle:
            handle.write(text)


def _table(rows, header) -> str:
    lines = ["\t".join(header)]
    lines.extend("\t".join(row) for row in rows)
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ commands


@click.group()
def main():
    """Causal mediation analysis for time-to-event outcomes via pseudo-values."""


_COLUMN_OPTIONS = [
    click.option("--time-col", default="time", show_default=True),
    click.option("--status-col", default="status", show_default=True),
    click.option("--arm-col", default="arm", show_default=True),
    click.option("--mediator-col", default="mediator", show_default=True),
    click.option(
        "--covariate",
        "covariates",
        multiple=True,
        help="Covariate column to adjust for in the outcome model (repeatable).",
    ),
]


def _with_column_options(fn):
    for option in reversed(_COLUMN_OPTIONS):
        fn = option(fn)
    return fn


def _full_sample_estimate(sample: SurvivalSample, estimand: EstimandKind) -> float:
    table = build_risk_table(sample)
    if estimand.kind == "surv":
        return km_survival(table, estimand.tau)
    if estimand.kind == "rmst":
        return rmst(table, estimand.tau)
    return aalen_johansen_cif(table, estimand.cause, estimand.tau)


def _arm_difference(sample: SurvivalSample, estimand: EstimandKind):
    """Unadjusted treated-minus-control estimate, the model-free total-effect
    cross-check; None when an arm has no events."""
    per_arm = {}
    for arm in (0, 1):
        idx = np.flatnonzero(sample.arm == arm)
        try:
            per_arm[arm] = _full_sample_estimate(sample.subset(idx), estimand)
        except ValueError:
            return None
    return per_arm[1] - per_arm[0], per_arm[0], per_arm[1]


def _coefficient_block(title: str, fit) -> list:
    lines = [f"{title} (covariance: {fit.covariance_kind})"]
    ses = fit.standard_errors()
    for name, coef, se in zip(fit.regressor_names, fit.coefficients, ses):
        lines.append(f"  {name:<12} {coef:>12.6f}  (se {se:.6f})")
    return lines


@main.command()
@click.argument("input_csv", type=click.Path())
@click.option("--tau", type=float, required=True, help="Estimand horizon.")
@click.option("--estimand", default="surv", show_default=True,
              help="surv, rmst, or cif[:cause].")
@click.option("--pseudo", "pseudo_method", type=click.Choice(["jackknife", "if"]),
              default="if", show_default=True)
@click.option("--inference", type=click.Choice(["boot", "delta", "sobel"]),
              default="delta", show_default=True)
@click.option("--boot-reps", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--stratified-boot", is_flag=True, help="Resample within arms.")
@click.option("--robust-se", is_flag=True, help="Use HC1 sandwich covariance.")
@click.option("--out", type=click.Path(), default=None, help="Report path (default stdout).")
@click.option("--table-out", type=click.Path(), default=None,
              help="Also write the effect table as TSV.")
@_with_column_options
def mediate(input_csv, tau, estimand, pseudo_method, inference, boot_reps, seed,
            alpha, stratified_boot, robust_se, out, table_out,
            time_col, status_col, arm_col, mediator_col, covariates):
    """Run the full mediation analysis on a CSV dataset."""

    def run():
        dataset = _read_dataset(input_csv, time_col, status_col, arm_col,
                                mediator_col, covariates)
        sample = dataset.sample
        kind = EstimandKind.parse(estimand, tau)
        conf = sample.covariates if covariates else None
        method = "jackknife" if pseudo_method == "jackknife" else "influence"
        generate = jackknife_pseudo if method == "jackknife" else if_pseudo

        import warnings as _warnings

        with _warnings.catch_warnings():
            _warnings.simplefilter("ignore", NoConfoundersWarning)
            pseudo = generate(sample, kind)
            mediator_fit = fit_mediator_model(sample, robust=robust_se)
            outcome_fit = fit_outcome_model(pseudo, sample, confounders=conf,
                                            robust=robust_se)
            if inference == "boot":
                result = bootstrap_inference(
                    sample, kind, confounders=conf, n_boot=boot_reps, seed=seed,
                    alpha=alpha, pseudo_method=method, stratified=stratified_boot,
                    robust=robust_se,
                )
            else:
                result = delta_inference(mediator_fit, outcome_fit, kind,
                                         alpha=alpha, sobel_nie=(inference == "sobel"))

        lines = [
            "# survmediate mediation report",
            "# precision: 6 decimal places",
            f"# input: {input_csv} (n={sample.n}, causes={sample.n_causes})",
            f"# estimand: {kind.label} at tau={_fmt(kind.tau)}",
            f"# pseudo-values: {method} (theta_hat={pseudo.theta_hat:.6f})",
            f"# inference: {result.method} (alpha={_fmt(alpha)})",
            f"# kernel backend: {backend_name()}",
            "",
        ]
        lines += _coefficient_block("mediator model: mediator ~ intercept + arm",
                                    mediator_fit)
        lines.append("")
        covlabel = " + ".join(["intercept", "arm", "mediator", *covariates])
        lines += _coefficient_block(f"outcome model: pseudo ~ {covlabel}", outcome_fit)
        lines.append("")
        lines.append("effects:")
        lines.append(f"  {'effect':<6} {'estimate':>12} {'se':>12} "
                     f"{'ci_lower':>12} {'ci_upper':>12} {'p_value':>12}")
        table_rows = []
        for key in ("nde", "nie", "te"):
            est = result.estimate(key)
            lines.append(
                f"  {key:<6} {est:>12.6f} {result.se[key]:>12.6f} "
                f"{result.ci_lower[key]:>12.6f} {result.ci_upper[key]:>12.6f} "
                f"{result.p_value[key]:>12.6f}"
            )
            table_rows.append([key, _fmt(est), _fmt(result.se[key]),
                               _fmt(result.ci_lower[key]), _fmt(result.ci_upper[key]),
                               _fmt(result.p_value[key])])
        lines.append("")
        prop = result.effects.prop_mediated
        if np.isnan(prop):
            lines.append("proportion mediated: undefined (total effect is zero)")
        else:
            note = "stable" if result.prop_mediated_stable else \
                "unstable: total effect within noise or opposite sign"
            extra = ""
            if result.prop_mediated_ci is not None:
                extra = (f", bootstrap CI ({result.prop_mediated_ci[0]:.6f}, "
                         f"{result.prop_mediated_ci[1]:.6f})")
            lines.append(f"proportion mediated: {prop:.6f} ({note}{extra})")
        if result.n_boot is not None:
            lines.append(f"bootstrap redraws of degenerate resamples: {result.n_redraws}")
        check = _arm_difference(sample, kind)
        lines.append("")
        if check is None:
            lines.append("total-effect cross-check: unavailable (an arm has no events)")
        else:
            diff, c0, c1 = check
            lines.append(
                "total-effect cross-check (unadjusted arm difference): "
                f"{diff:.6f} (arm1 {c1:.6f} - arm0 {c0:.6f}); decomposition te "
                f"{result.effects.te:.6f}"
            )
        _write_text(out, "\n".join(lines) + "\n")
        if table_out is not None:
            _write_text(table_out, _table(
                table_rows, ["effect", "estimate", "se", "ci_lower", "ci_upper", "p_value"]
            ))

    _run_guarded(run)


@main.command("pseudo")
@click.argument("input_csv", type=click.Path())
@click.option("--tau", type=float, required=True)
@click.option("--estimand", default="surv", show_default=True)
@click.option("--pseudo", "pseudo_method", type=click.Choice(["jackknife", "if"]),
              default="if", show_default=True)
@click.option("--out", type=click.Path(), default=None)
@_with_column_options
def pseudo_cmd(input_csv, tau, estimand, pseudo_method, out,
               time_col, status_col, arm_col, mediator_col, covariates):
    """Export per-subject pseudo-values as CSV."""

    def run():
        dataset = _read_dataset(input_csv, time_col, status_col, arm_col,
                                mediator_col, covariates)
        kind = EstimandKind.parse(estimand, tau)
        method = "jackknife" if pseudo_method == "jackknife" else "influence"
        generate = jackknife_pseudo if method == "jackknife" else if_pseudo
        values = generate(dataset.sample, kind)
        buf = io.StringIO()
        buf.write(f"# estimand: {kind.label} at tau={_fmt(kind.tau)}\n")
        buf.write(f"# method: {method}\n")
        buf.write(f"# theta_hat: {_fmt(values.theta_hat)}\n")
        buf.write("# precision: 10 significant digits\n")
        buf.write("id,pseudo\n")
        for subject_id, value in zip(dataset.sample.ids, values.values):
            buf.write(f"{subject_id},{_fmt(value)}\n")
        _write_text(out, buf.getvalue())

    _run_guarded(run)


@main.command()
@click.argument("config_json", type=click.Path())
@click.option("--out", type=click.Path(), default=None)
def simulate(config_json, out):
    """Draw a dataset from a scenario config (CSV to stdout or --out)."""

    def run():
        config = _load_scenario(config_json)
        sample = simulate_competing(config) if config.lambda_d is not None \
            else simulate_trial(config)
        buf = io.StringIO()
        buf.write("id,time,status,arm,mediator\n")
        for i in range(sample.n):
            buf.write(
                f"{sample.ids[i]},{_fmt(sample.time[i])},{sample.status[i]},"
                f"{sample.arm[i]},{_fmt(sample.mediator[i])}\n"
            )
        _write_text(out, buf.getvalue())

    _run_guarded(run)


@main.command()
@click.argument("config_json", type=click.Path())
@click.option("--method", type=click.Choice(["gauss-hermite", "monte-carlo"]),
              default="gauss-hermite", show_default=True)
@click.option("--nodes", default=64, show_default=True)
@click.option("--mc-draws", default=10_000_000, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def oracle(config_json, method, nodes, mc_draws, out):
    """True effect values for a scenario, per estimand scale."""

    def run():
        config = _load_scenario(config_json)
        scales = ["surv", "rmst"] + (["cif"] if config.lambda_d is not None else [])
        rows = []
        for scale in scales:
            truth = true_effects(config, scale, nodes=nodes, method=method,
                                 mc_draws=mc_draws)
            rows.append([scale, _fmt(config.tau), _fmt(truth.te), _fmt(truth.nde),
                         _fmt(truth.nie), truth.method])
        _write_text(out, _table(rows, ["scale", "tau", "te", "nde", "nie", "method"]))

    _run_guarded(run)


@main.command()
@click.argument("grid_json", type=click.Path())
@click.option("--replicates", type=int, default=None,
              help="Override the replicate count in the grid file.")
@click.option("--workers", type=int, default=None,
              help=f"Parallel cell workers (default: ${{{'SURVMEDIATE_WORKERS'}}} or 1).")
@click.option("--out", type=click.Path(), default=None)
@click.option("--qq-out", type=click.Path(), default=None,
              help="Write per-replicate p-value quantile pairs for QQ plots.")
def opchar(grid_json, replicates, workers, out, qq_out):
    """Operating characteristics (bias, type-I error, coverage) over a grid."""

    def run():
        cells, file_replicates, alpha, seed = _load_grid(grid_json)
        n_reps = file_replicates if replicates is None else replicates
        results = run_operating_characteristics(
            cells, n_reps, alpha=alpha, master_seed=seed, workers=workers
        )
        rows = []
        qq_rows = []
        for index, cell in enumerate(results):
            case = {
                (False, False): "none", (True, False): "direct",
                (False, True): "indirect", (True, True): "both",
            }[(cell.config.direct_effect, cell.config.indirect_effect)]
            for effect in ("nde", "nie", "te"):
                rows.append([
                    str(index), cell.scale, str(cell.config.n_per_arm),
                    _fmt(cell.config.tau), case, effect,
                    _fmt(getattr(cell.truth, effect)),
                    _fmt(cell.mean_estimate(effect)), _fmt(cell.bias(effect)),
                    _fmt(cell.sd_estimate(effect)), _fmt(cell.mc_se(effect)),
                    _fmt(cell.rejection_rate[effect]), _fmt(cell.coverage[effect]),
                    str(cell.n_completed), str(cell.n_failures),
                ])
                if qq_out is not None:
                    observed = np.sort(cell.p_values[effect])
                    expected = (np.arange(1, observed.size + 1) - 0.5) / observed.size
                    qq_rows.extend(
                        [str(index), cell.scale, str(cell.config.n_per_arm),
                         _fmt(cell.config.tau), case, effect, _fmt(e), _fmt(o)]
                        for e, o in zip(expected, observed)
                    )
        header = ["cell", "scale", "n_per_arm", "tau", "case", "effect", "truth",
                  "mean_estimate", "bias", "sd_estimate", "mc_se",
                  "rejection_rate", "coverage", "n_completed", "n_failures"]
        _write_text(out, _table(rows, header))
        if qq_out is not None:
            _write_text(qq_out, _table(
                qq_rows,
                ["cell", "scale", "n_per_arm", "tau", "case", "effect",
                 "expected", "observed"],
            ))

    _run_guarded(run)


@main.command()
@click.option("--sizes", default="100,400,1600", show_default=True,
              help="Comma-separated total sample sizes.")
@click.option("--estimand", default="surv", show_default=True,
              help="surv, rmst, or cif.")
@click.option("--tau", default=4.0, show_default=True)
@click.option("--repeats", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def bench(sizes, estimand, tau, repeats, seed, out):
    """Wall-time comparison: jackknife versus influence-function pseudo-values."""

    def run():
        try:
            size_list = [int(s) for s in sizes.split(",") if s.strip()]
        except ValueError:
            raise SchemaError(f"cannot parse sizes {sizes!r}")
        scale = EstimandKind.parse(estimand, tau).kind
        results = pseudo_runtime_benchmark(size_list, scale=scale, tau=tau,
                                           repeats=repeats, seed=seed)
        rows = [[str(r.n_subjects), r.backend, _fmt(r.seconds_jackknife),
                 _fmt(r.seconds_influence), _fmt(r.ratio)] for r in results]
        _write_text(out, _table(
            rows, ["n_subjects", "backend", "seconds_jackknife",
                   "seconds_influence", "ratio_jackknife_over_influence"],
        ))

    _run_guarded(run)


if __name__ == "__main__":
    main()
