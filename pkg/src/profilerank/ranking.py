"""U statistics, inclusion decisions, and gene ranking.

Every test-bearing coefficient contributes a standardized signed distance
from its estimate to the criterion boundary:

* positivity above d:      U = (gamma_hat - d) / se
* equivalence within e:    U = (e - |gamma_hat|) / se

with se built from the moderated variance. A gene is included only when
every U is strictly positive; included genes are ranked by the minimum U,
so the score is the distance (in standard errors) to the nearest boundary
of the joint rejection region. Fixed-level decisions come from one-sided
confidence-interval inclusion per criterion, combined by requiring all
criteria to reject at once, which holds the overall level at alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .design import ComparisonDesign, ModelMatrix, build_comparison_matrix, compose_model_matrix
from .errors import ValidationError
from .fitting import ExpressionMatrix, GeneFit, ModerationResult, fit_all, moderate_variances
from .profiles import Constraint, ValidatedProfile
from .special import student_t_upper_quantile

__all__ = [
    "UStatistics",
    "RankedGene",
    "ExcludedGene",
    "RankedTable",
    "CIIDecision",
    "u_statistics",
    "gene_statistics",
    "rank_genes",
    "cii_decision",
    "iut_decision",
    "FittedExperiment",
    "fit_experiment",
    "rank_from_fits",
    "analyze",
    "SweepResult",
    "sweep_from_fits",
    "sensitivity_sweep",
]

REASON_INSUFFICIENT = "insufficient data"
REASON_VIOLATED = "criterion violated"
REASON_DEGENERATE = "degenerate variance"


@dataclass(frozen=True)
class UStatistics:
    """Per-gene test statistics and the inclusion verdict.

    ``u_values`` aligns with the profile's test-bearing coefficients (in
    retained-column order); ``se`` and ``gamma_hat`` cover all retained
    coefficients. ``u`` is the minimum U, the gene's ranking score.
    """

    gene_id: str
    gamma_hat: np.ndarray = field(compare=False)
    se: np.ndarray = field(compare=False)
    u_values: np.ndarray = field(compare=False)
    u: float
    included: bool
    exclusion_reason: str | None
    s2: float | None
    posterior_s2: float | None


def _model_positions(profile: ValidatedProfile, model: ModelMatrix) -> list[int]:
    # Positions (within retained columns) of the test-bearing coefficients.
    by_basis_index = {basis_j: pos for pos, basis_j in enumerate(model.coefficient_indices)}
    positions = []
    for j in profile.test_bearing:
        if j not in by_basis_index:
            raise ValidationError(
                f"test-bearing coefficient {profile.coefficient_names[j]!r} "
                "is not in the model"
            )
        positions.append(by_basis_index[j])
    return positions


def _single_u(gamma: float, se: float, constraint: Constraint) -> float:
    if constraint.kind == "pos":
        num = gamma - constraint.value
    else:
        num = constraint.value - abs(gamma)
    if se == 0.0:
        return math.inf if num > 0 else (-math.inf if num < 0 else 0.0)
    return num / se


def u_statistics(
    fit: GeneFit,
    mod: ModerationResult,
    profile: ValidatedProfile,
    model: ModelMatrix,
    gene_index: int,
) -> UStatistics:
    """Compute the per-criterion U statistics for one fitted gene.

    ``gene_index`` selects this gene's posterior variance from the
    moderation result. Inclusion requires strictly positive U for every
    criterion; a zero standard error excludes the gene as degenerate
    unless the sign of the estimate already violates a criterion.
    """
    if not fit.ok:
        raise ValueError(f"gene {fit.gene_id!r}: cannot score an excluded fit")
    posterior_s2 = float(mod.posterior_s2[gene_index])
    if math.isnan(posterior_s2):
        raise ValueError(
            f"gene {fit.gene_id!r}: no moderated variance at index {gene_index}"
        )
    scale = math.sqrt(posterior_s2)
    se = fit.unscaled_se * scale
    positions = _model_positions(profile, model)
    constraints = [profile.constraints[j] for j in profile.test_bearing]
    u_values = np.array(
        [
            _single_u(float(fit.gamma_hat[p]), float(se[p]), con)
            for p, con in zip(positions, constraints)
        ]
    )
    u = float(u_values.min())
    included = bool(np.all(u_values > 0.0) and np.all(np.isfinite(u_values)))
    reason = None
    if not included:
        reason = REASON_DEGENERATE if u > 0.0 else REASON_VIOLATED
    return UStatistics(
        gene_id=fit.gene_id,
        gamma_hat=np.array(fit.gamma_hat),
        se=se,
        u_values=u_values,
        u=u,
        included=included,
        exclusion_reason=reason,
        s2=fit.s2,
        posterior_s2=posterior_s2,
    )


@dataclass(frozen=True)
class RankedGene:
    rank: int
    gene_id: str
    u: float
    u_values: np.ndarray = field(compare=False)
    gamma_hat: np.ndarray = field(compare=False)
    se: np.ndarray = field(compare=False)
    s2: float = math.nan
    posterior_s2: float = math.nan


@dataclass(frozen=True)
class ExcludedGene:
    gene_id: str
    reason: str
    u_values: np.ndarray | None = field(default=None, compare=False)


@dataclass(frozen=True)
class RankedTable:
    """Included genes in rank order plus the excluded list and run metadata."""

    rows: tuple[RankedGene, ...]
    excluded: tuple[ExcludedGene, ...]
    metadata: dict

    def rank_of(self, gene_id: str) -> int | None:
        for row in self.rows:
            if row.gene_id == gene_id:
                return row.rank
        return None

    @property
    def included_ids(self) -> tuple[str, ...]:
        return tuple(row.gene_id for row in self.rows)


def rank_genes(stats: list[UStatistics], metadata: dict | None = None) -> RankedTable:
    """Sort included genes by descending U (ties by gene id) and assign
    contiguous ranks; everything else lands in the excluded list."""
    included = sorted(
        (s for s in stats if s.included), key=lambda s: (-s.u, s.gene_id)
    )
    rows = tuple(
        RankedGene(
            rank=i + 1,
            gene_id=s.gene_id,
            u=s.u,
            u_values=s.u_values,
            gamma_hat=s.gamma_hat,
            se=s.se,
            s2=s.s2 if s.s2 is not None else math.nan,
            posterior_s2=s.posterior_s2 if s.posterior_s2 is not None else math.nan,
        )
        for i, s in enumerate(included)
    )
    excluded = tuple(
        ExcludedGene(
            gene_id=s.gene_id,
            reason=s.exclusion_reason or REASON_VIOLATED,
            u_values=s.u_values,
        )
        for s in stats
        if not s.included
    )
    return RankedTable(rows=rows, excluded=excluded, metadata=dict(metadata or {}))


@dataclass(frozen=True)
class CIIDecision:
    reject_h0: bool
    interval: tuple[float, float]


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 0.5:
        raise ValidationError(f"alpha must lie in (0, 0.5), got {alpha!r}")
    return alpha


def cii_decision(
    fit: GeneFit,
    mod: ModerationResult,
    gene_index: int,
    coefficient: int,
    constraint: Constraint,
    alpha: float,
) -> CIIDecision:
    """Confidence-interval-inclusion test for one coefficient.

    Equivalence: reject non-equivalence iff the two-sided interval built
    from one-sided (1-alpha) limits lies strictly inside (-margin, margin).
    Positivity: reject iff the one-sided lower limit exceeds the threshold.
    The t quantile uses the moderated degrees of freedom (normal when the
    prior is degenerate). ``coefficient`` indexes retained model columns.
    """
    alpha = _check_alpha(alpha)
    if not fit.ok:
        raise ValueError(f"gene {fit.gene_id!r}: cannot test an excluded fit")
    if not constraint.is_test_bearing:
        raise ValidationError("unconstrained coefficients have no test")
    se = float(fit.unscaled_se[coefficient]) * math.sqrt(
        float(mod.posterior_s2[gene_index])
    )
    tstar = student_t_upper_quantile(alpha, float(mod.posterior_df[gene_index]))
    gamma = float(fit.gamma_hat[coefficient])
    if constraint.kind == "equiv":
        interval = (gamma - tstar * se, gamma + tstar * se)
        reject = -constraint.value < interval[0] and interval[1] < constraint.value
    else:
        interval = (gamma - tstar * se, math.inf)
        reject = interval[0] > constraint.value
    return CIIDecision(reject_h0=reject, interval=interval)


def iut_decision(u: UStatistics, posterior_df: float, alpha: float) -> bool:
    """Overall alpha-level decision: every criterion must reject at level
    alpha, i.e. every U must exceed the one-sided t quantile."""
    alpha = _check_alpha(alpha)
    if u.u_values.size == 0 or not np.all(np.isfinite(u.u_values)):
        return False
    tstar = student_t_upper_quantile(alpha, float(posterior_df))
    return bool(np.all(u.u_values > tstar))


@dataclass(frozen=True)
class FittedExperiment:
    """Everything that does not depend on the test margins: the composed
    model, per-gene fits, and the variance moderation."""

    design: ComparisonDesign
    model: ModelMatrix
    fits: list[GeneFit]
    moderation: ModerationResult


def fit_experiment(
    expr: ExpressionMatrix,
    design: ComparisonDesign,
    profile: ValidatedProfile,
    threads: int = 1,
) -> FittedExperiment:
    """Compose the model, fit every gene, and moderate the variances."""
    if expr.array_ids != design.array_ids:
        raise ValidationError(
            "expression arrays do not match the design arrays "
            f"({list(expr.array_ids)} vs {list(design.array_ids)})"
        )
    xstar = build_comparison_matrix(design)
    model = compose_model_matrix(xstar, profile)
    fits = fit_all(expr, model, threads=threads)
    moderation = moderate_variances(fits)
    return FittedExperiment(
        design=design, model=model, fits=fits, moderation=moderation
    )


def gene_statistics(
    fitted: FittedExperiment, profile: ValidatedProfile
) -> list[UStatistics]:
    """U statistics for every gene that could be fitted."""
    return [
        u_statistics(f, fitted.moderation, profile, fitted.model, i)
        for i, f in enumerate(fitted.fits)
        if f.ok
    ]


def _margins_metadata(profile: ValidatedProfile) -> dict:
    return {
        profile.coefficient_names[j]: profile.constraints[j].token()
        for j in profile.test_bearing
    }


def rank_from_fits(
    fitted: FittedExperiment,
    profile: ValidatedProfile,
    stats: list[UStatistics] | None = None,
) -> RankedTable:
    """Score and rank a fitted experiment under the profile's margins."""
    table = rank_genes(
        stats if stats is not None else gene_statistics(fitted, profile),
        metadata={
            "profile": profile.name,
            "margins": _margins_metadata(profile),
            "d0": fitted.moderation.d0,
            "s0_2": fitted.moderation.s0_2,
        },
    )
    fit_excluded = tuple(
        ExcludedGene(gene_id=f.gene_id, reason=f.reason or REASON_INSUFFICIENT)
        for f in fitted.fits
        if not f.ok
    )
    if not fit_excluded:
        return table
    return RankedTable(
        rows=table.rows,
        excluded=table.excluded + fit_excluded,
        metadata=table.metadata,
    )


def analyze(
    expr: ExpressionMatrix,
    design: ComparisonDesign,
    profile: ValidatedProfile,
    epsilon: float | None = None,
    deltas: dict | None = None,
    threads: int = 1,
) -> tuple[FittedExperiment, RankedTable]:
    """Full pipeline: fit once, then rank under (optionally overridden)
    margins."""
    resolved = profile.with_margins(epsilon=epsilon, deltas=deltas)
    fitted = fit_experiment(expr, design, resolved, threads=threads)
    return fitted, rank_from_fits(fitted, resolved)


@dataclass(frozen=True)
class SweepResult:
    """Ranked tables per equivalence margin plus the rank-stability view.

    ``stability`` maps each gene included at any margin to its rank per
    margin (None where excluded), ordered by best achieved rank.
    """

    epsilons: tuple[float, ...]
    tables: tuple[RankedTable, ...]
    stability: tuple[tuple[str, tuple[int | None, ...]], ...]


def sweep_from_fits(
    fitted: FittedExperiment, profile: ValidatedProfile, epsilons
) -> SweepResult:
    """Re-rank an already fitted experiment under each equivalence margin.

    Only the equivalence margins vary across the sweep, so inclusion sets
    are nested as the margin grows.
    """
    eps = [float(e) for e in epsilons]
    if not eps:
        raise ValidationError("sensitivity sweep needs at least one margin")
    if any(not e > 0.0 for e in eps):
        raise ValidationError(f"sweep margins must be > 0, got {eps}")
    tables = tuple(
        rank_from_fits(fitted, profile.with_margins(epsilon=e)) for e in eps
    )
    ranks_by_gene: dict[str, list[int | None]] = {}
    for t_index, table in enumerate(tables):
        for row in table.rows:
            slots = ranks_by_gene.setdefault(row.gene_id, [None] * len(eps))
            slots[t_index] = row.rank
    ordered = sorted(
        ranks_by_gene.items(),
        key=lambda item: (min(r for r in item[1] if r is not None), item[0]),
    )
    stability = tuple((gid, tuple(ranks)) for gid, ranks in ordered)
    return SweepResult(epsilons=tuple(eps), tables=tables, stability=stability)


def sensitivity_sweep(
    expr: ExpressionMatrix,
    design: ComparisonDesign,
    profile: ValidatedProfile,
    epsilons,
    deltas: dict | None = None,
    threads: int = 1,
) -> SweepResult:
    """Fit once, then re-rank under each equivalence margin."""
    base = profile.with_margins(deltas=deltas)
    fitted = fit_experiment(expr, design, base, threads=threads)
    return sweep_from_fits(fitted, base, epsilons)
