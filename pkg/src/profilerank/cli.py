"""Command-line pipeline: validate inputs, rank genes, sweep margins,
generate benchmarks.

Subcommands
-----------
rank         fit, moderate, score, and rank genes; writes ranked.csv,
             excluded.csv, moderation.json, profiles.svg, and (with
             --grid) sensitivity.csv
sensitivity  dedicated margin sweep; per-margin ranked tables plus the
             stability report
synth        seeded synthetic dataset with planted profile-matching genes
validate     parse and validate inputs without running anything

Exit codes: 0 success, 2 invalid configuration or design/profile input,
3 malformed expression data.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .design import read_conditions_csv, read_design_csv
from .errors import DataError, ValidationError
from .fitting import read_expression_csv
from .profiles import profile_from_file, validate_profile
from .ranking import (
    FittedExperiment,
    RankedTable,
    SweepResult,
    gene_statistics,
    iut_decision,
    fit_experiment,
    rank_from_fits,
    sweep_from_fits,
)
from .svgplot import fitted_relative_profile, render_profiles_svg
from .synth import GammaRanges, generate_dataset, write_expression_csv, write_truth_csv

__all__ = ["RunConfig", "run", "main"]


@dataclass(frozen=True)
class RunConfig:
    """Everything one ranking run needs; built from CLI flags."""

    data_path: str
    design_path: str
    conditions_path: str
    profile_path: str
    out_dir: str
    epsilon: float | None = None
    deltas: dict = field(default_factory=dict)
    alpha: float = 0.05
    grid: tuple[float, ...] = ()
    top_n: int = 15
    threads: int = 1

    def __post_init__(self) -> None:
        if self.top_n < 1:
            raise ValidationError(f"--top-n must be >= 1, got {self.top_n}")
        if self.threads < 1:
            raise ValidationError(f"--threads must be >= 1, got {self.threads}")
        if self.epsilon is not None and not self.epsilon > 0.0:
            raise ValidationError(f"--epsilon must be > 0, got {self.epsilon}")
        if not 0.0 < self.alpha < 0.5:
            raise ValidationError(f"--alpha must lie in (0, 0.5), got {self.alpha}")
        if any(not g > 0.0 for g in self.grid):
            raise ValidationError(f"--grid values must be > 0, got {list(self.grid)}")


def _require_file(path: str, what: str) -> None:
    if not os.path.isfile(path):
        raise ValidationError(f"{what} file not found: {path}")


def _fmt(x) -> str:
    if x is None:
        return "NA"
    x = float(x)
    if math.isnan(x):
        return "NA"
    return f"{x:.6g}"


def _eps_label(e: float) -> str:
    return f"{e:g}"


def _load_inputs(config: RunConfig):
    _require_file(config.conditions_path, "conditions")
    _require_file(config.design_path, "design")
    _require_file(config.profile_path, "profile")
    _require_file(config.data_path, "data")
    conditions = read_conditions_csv(config.conditions_path)
    design = read_design_csv(config.design_path, conditions)
    profile = validate_profile(profile_from_file(config.profile_path))
    profile = profile.with_margins(epsilon=config.epsilon, deltas=config.deltas)
    expr = read_expression_csv(config.data_path, design.array_ids)
    return design, profile, expr


def _write_ranked_csv(table: RankedTable, path: str) -> None:
    n_u = max((len(r.u_values) for r in table.rows), default=0)
    n_k = max((len(r.gamma_hat) for r in table.rows), default=0)
    header = (
        ["rank", "gene_id", "U"]
        + [f"U_{i + 1}" for i in range(n_u)]
        + [f"gamma_{i + 1}" for i in range(n_k)]
        + [f"se_{i + 1}" for i in range(n_k)]
        + ["s2", "posterior_s2"]
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in table.rows:
            cells = [str(r.rank), r.gene_id, _fmt(r.u)]
            cells += [_fmt(u) for u in r.u_values]
            cells += [_fmt(g) for g in r.gamma_hat]
            cells += [_fmt(s) for s in r.se]
            cells += [_fmt(r.s2), _fmt(r.posterior_s2)]
            fh.write(",".join(cells) + "\n")


def _write_excluded_csv(table: RankedTable, path: str) -> None:
    n_u = max((len(e.u_values) for e in table.excluded if e.u_values is not None), default=0)
    header = ["gene_id", "reason"] + [f"U_{i + 1}" for i in range(n_u)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for e in table.excluded:
            cells = [e.gene_id, e.reason]
            if e.u_values is None:
                cells += [""] * n_u
            else:
                cells += [_fmt(u) for u in e.u_values]
            fh.write(",".join(cells) + "\n")


def _write_moderation_json(
    fitted: FittedExperiment, table: RankedTable, config: RunConfig, path: str
) -> None:
    mod = fitted.moderation
    payload = {
        "d0": mod.d0 if math.isfinite(mod.d0) else "inf",
        "s0_2": mod.s0_2,
        "n_estimation_genes": mod.n_estimation_genes,
        "profile": table.metadata.get("profile"),
        "margins": table.metadata.get("margins"),
        "alpha": config.alpha,
        "n_included": len(table.rows),
        "n_excluded": len(table.excluded),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_profiles_svg(fitted, profile, table: RankedTable, top_n: int, path: str) -> None:
    fits_by_id = {f.gene_id: f for f in fitted.fits if f.ok}
    genes = []
    for row in table.rows[:top_n]:
        rel = fitted_relative_profile(fits_by_id[row.gene_id], profile, fitted.model)
        genes.append((row.gene_id, row.rank, rel))
    title = (
        f"{profile.name}: top {len(genes)} fitted trajectories "
        f"(log ratio vs {profile.condition_labels[0]})"
    )
    svg = render_profiles_svg(genes, profile.condition_labels, title)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)


def _write_sensitivity_csv(sweep: SweepResult, path: str) -> None:
    header = ["gene_id"] + [f"rank_eps_{_eps_label(e)}" for e in sweep.epsilons]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for gene_id, ranks in sweep.stability:
            cells = [gene_id] + ["" if r is None else str(r) for r in ranks]
            fh.write(",".join(cells) + "\n")


def _alpha_pass_count(fitted: FittedExperiment, stats, alpha: float) -> int:
    ok_indices = [i for i, f in enumerate(fitted.fits) if f.ok]
    count = 0
    for idx, stat in zip(ok_indices, stats):
        if stat.included and iut_decision(
            stat, float(fitted.moderation.posterior_df[idx]), alpha
        ):
            count += 1
    return count


def run(config: RunConfig) -> int:
    """Execute the full ranking pipeline and write the output files."""
    design, profile, expr = _load_inputs(config)
    os.makedirs(config.out_dir, exist_ok=True)
    fitted = fit_experiment(expr, design, profile, threads=config.threads)
    stats = gene_statistics(fitted, profile)
    table = rank_from_fits(fitted, profile, stats=stats)
    _write_ranked_csv(table, os.path.join(config.out_dir, "ranked.csv"))
    _write_excluded_csv(table, os.path.join(config.out_dir, "excluded.csv"))
    _write_moderation_json(
        fitted, table, config, os.path.join(config.out_dir, "moderation.json")
    )
    _write_profiles_svg(
        fitted, profile, table, config.top_n,
        os.path.join(config.out_dir, "profiles.svg"),
    )
    if config.grid:
        sweep = sweep_from_fits(fitted, profile, config.grid)
        _write_sensitivity_csv(
            sweep, os.path.join(config.out_dir, "sensitivity.csv")
        )
    n_pass = _alpha_pass_count(fitted, stats, config.alpha)
    d0 = fitted.moderation.d0
    print(
        f"profile {profile.name}: {len(table.rows)} genes ranked, "
        f"{len(table.excluded)} excluded; prior d0={'inf' if math.isinf(d0) else f'{d0:.4g}'}, "
        f"s0_2={fitted.moderation.s0_2:.4g}; "
        f"{n_pass} pass the alpha={config.alpha:g} test; "
        f"outputs in {config.out_dir}"
    )
    return 0


def _parse_deltas(items) -> dict:
    deltas = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise ValidationError(
                f"--delta expects <coefficient>=<value>, got {item!r}"
            )
        try:
            deltas[name] = float(value)
        except ValueError as exc:
            raise ValidationError(
                f"--delta {item!r}: threshold is not a number"
            ) from exc
    return deltas


def _parse_grid(text: str | None) -> tuple[float, ...]:
    if not text:
        return ()
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ValidationError(f"--grid expects comma-separated numbers, got {text!r}") from exc


def _parse_range(text: str | None, flag: str) -> tuple[float, float] | None:
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 2:
        raise ValidationError(f"{flag} expects <lo>,<hi>, got {text!r}")
    try:
        return (float(parts[0]), float(parts[1]))
    except ValueError as exc:
        raise ValidationError(f"{flag}: bounds must be numbers, got {text!r}") from exc


def _add_input_flags(p: argparse.ArgumentParser, with_data: bool = True) -> None:
    if with_data:
        p.add_argument("--data", required=True, help="expression CSV (gene_id + one column per array)")
    p.add_argument("--design", required=True, help="design CSV (array_id,cy3,cy5,replicate_group)")
    p.add_argument("--conditions", required=True, help="ordered condition list, one label per line")
    p.add_argument("--profile", required=True, help="profile file")
    p.add_argument("--epsilon", type=float, default=None,
                   help="override every equivalence margin")
    p.add_argument("--delta", action="append", metavar="COEF=VALUE",
                   help="override a positivity threshold (repeatable)")


def _config_from_args(args, need_grid: bool = False) -> RunConfig:
    grid = _parse_grid(args.grid)
    if need_grid and not grid:
        raise ValidationError("--grid is required for the sensitivity command")
    return RunConfig(
        data_path=args.data,
        design_path=args.design,
        conditions_path=args.conditions,
        profile_path=args.profile,
        out_dir=args.out,
        epsilon=args.epsilon,
        deltas=_parse_deltas(args.delta),
        alpha=args.alpha,
        grid=grid,
        top_n=args.top_n,
        threads=args.threads,
    )


def _cmd_rank(args) -> int:
    return run(_config_from_args(args))


def _cmd_sensitivity(args) -> int:
    config = _config_from_args(args, need_grid=True)
    design, profile, expr = _load_inputs(config)
    os.makedirs(config.out_dir, exist_ok=True)
    fitted = fit_experiment(expr, design, profile, threads=config.threads)
    sweep = sweep_from_fits(fitted, profile, config.grid)
    _write_sensitivity_csv(sweep, os.path.join(config.out_dir, "sensitivity.csv"))
    for eps, table in zip(sweep.epsilons, sweep.tables):
        _write_ranked_csv(
            table,
            os.path.join(config.out_dir, f"ranked_eps_{_eps_label(eps)}.csv"),
        )
    _write_moderation_json(
        fitted, sweep.tables[-1], config,
        os.path.join(config.out_dir, "moderation.json"),
    )
    sizes = ", ".join(
        f"eps={_eps_label(e)}: {len(t.rows)}" for e, t in zip(sweep.epsilons, sweep.tables)
    )
    print(f"profile {profile.name}: included genes per margin: {sizes}; outputs in {config.out_dir}")
    return 0


def _cmd_synth(args) -> int:
    _require_file(args.conditions, "conditions")
    _require_file(args.design, "design")
    _require_file(args.profile, "profile")
    conditions = read_conditions_csv(args.conditions)
    design = read_design_csv(args.design, conditions)
    profile = validate_profile(profile_from_file(args.profile))
    profile = profile.with_margins(
        epsilon=args.epsilon, deltas=_parse_deltas(args.delta)
    )
    defaults = GammaRanges()
    ranges = GammaRanges(
        pos_margin=_parse_range(args.pos_margin, "--pos-margin") or defaults.pos_margin,
        equiv_band=_parse_range(args.equiv_band, "--equiv-band") or defaults.equiv_band,
        violate_pos=_parse_range(args.violate_pos, "--violate-pos") or defaults.violate_pos,
        violate_equiv=_parse_range(args.violate_equiv, "--violate-equiv") or defaults.violate_equiv,
    )
    result = generate_dataset(
        design,
        profile,
        n_genes=args.genes,
        n_planted=args.planted,
        seed=args.seed,
        d0=args.d0,
        s0_2=args.s02,
        ranges=ranges,
    )
    os.makedirs(args.out, exist_ok=True)
    expr_path = os.path.join(args.out, "expression.csv")
    truth_path = os.path.join(args.out, "truth.csv")
    write_expression_csv(result.expression, expr_path)
    write_truth_csv(result, truth_path)
    print(
        f"wrote {args.genes} genes ({args.planted} planted) for profile "
        f"{profile.name} to {expr_path} and {truth_path}"
    )
    return 0


def _cmd_validate(args) -> int:
    _require_file(args.conditions, "conditions")
    _require_file(args.design, "design")
    _require_file(args.profile, "profile")
    conditions = read_conditions_csv(args.conditions)
    design = read_design_csv(args.design, conditions)
    profile = validate_profile(profile_from_file(args.profile))
    profile = profile.with_margins(
        epsilon=args.epsilon, deltas=_parse_deltas(args.delta)
    )
    from .design import build_comparison_matrix, compose_model_matrix

    model = compose_model_matrix(build_comparison_matrix(design), profile)
    print(f"conditions: {len(conditions)} ({','.join(conditions)})")
    print(f"design: {len(design.arrays)} arrays, all labels valid")
    dropped = [profile.coefficient_names[j] for j in model.dropped_coefficients]
    print(
        f"profile {profile.name}: {len(profile.coefficient_names)} coefficients, "
        f"{len(profile.test_bearing)} test-bearing; "
        f"model rank {model.rank}, residual df {model.residual_df}"
        + (f", dropped: {','.join(dropped)}" if dropped else "")
    )
    if args.data:
        _require_file(args.data, "data")
        expr = read_expression_csv(args.data, design.array_ids)
        n_missing = int(np.isnan(expr.values).sum())
        print(f"data: {expr.n_genes} genes, {n_missing} missing values")
    print("all inputs valid")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="profilerank",
        description=(
            "Rank time-course genes by agreement with a pre-specified "
            "expression profile using joint one-sided and equivalence tests."
        ),
    )
    from . import __version__

    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_rank = sub.add_parser("rank", help="run the full ranking pipeline")
    _add_input_flags(p_rank)
    p_rank.add_argument("--alpha", type=float, default=0.05, help="level for the pass/fail test (default 0.05)")
    p_rank.add_argument("--grid", default=None, help="comma-separated equivalence margins for an extra sensitivity sweep")
    p_rank.add_argument("--top-n", type=int, default=15, help="trajectories to plot (default 15)")
    p_rank.add_argument("--out", required=True, help="output directory")
    p_rank.add_argument("--threads", type=int, default=1, help="worker threads for per-gene fitting")
    p_rank.set_defaults(func=_cmd_rank)

    p_sens = sub.add_parser("sensitivity", help="rank under a grid of equivalence margins")
    _add_input_flags(p_sens)
    p_sens.add_argument("--alpha", type=float, default=0.05, help=argparse.SUPPRESS)
    p_sens.add_argument("--grid", required=True, help="comma-separated equivalence margins")
    p_sens.add_argument("--top-n", type=int, default=15, help=argparse.SUPPRESS)
    p_sens.add_argument("--out", required=True, help="output directory")
    p_sens.add_argument("--threads", type=int, default=1, help="worker threads for per-gene fitting")
    p_sens.set_defaults(func=_cmd_sensitivity)

    p_synth = sub.add_parser("synth", help="generate a seeded synthetic benchmark")
    _add_input_flags(p_synth, with_data=False)
    p_synth.add_argument("--genes", type=int, default=20000, help="total genes (default 20000)")
    p_synth.add_argument("--planted", type=int, default=20, help="planted profile-matching genes (default 20)")
    p_synth.add_argument("--seed", type=int, required=True, help="RNG seed")
    p_synth.add_argument("--d0", type=float, default=16.0, help="variance prior df (default 16)")
    p_synth.add_argument("--s02", type=float, default=0.05, help="variance prior scale (default 0.05)")
    p_synth.add_argument("--pos-margin", default=None, metavar="LO,HI", help="satisfied positivity margin range")
    p_synth.add_argument("--equiv-band", default=None, metavar="LO,HI", help="satisfied |equivalence| range")
    p_synth.add_argument("--violate-pos", default=None, metavar="LO,HI", help="violation depth below a positivity threshold")
    p_synth.add_argument("--violate-equiv", default=None, metavar="LO,HI", help="violation distance beyond an equivalence margin")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.set_defaults(func=_cmd_synth)

    p_val = sub.add_parser("validate", help="parse and validate inputs only")
    _add_input_flags(p_val, with_data=False)
    p_val.add_argument("--data", default=None, help="optional expression CSV to check against the design")
    p_val.set_defaults(func=_cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
