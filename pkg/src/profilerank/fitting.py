"""Per-gene least squares and cross-gene variance moderation.

Each gene's observed log ratios are regressed on the composed model matrix;
rows with missing values are deleted per gene, with an identifiability
re-check on the surviving rows. Residual variances are then shrunk toward
a prior estimated from all genes by matching moments of the log sample
variances, giving per-gene posterior variances and augmented degrees of
freedom for the downstream tests.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .design import ModelMatrix, matrix_rank
from .errors import DataError
from .special import digamma, trigamma, trigamma_inverse

__all__ = [
    "ExpressionMatrix",
    "GeneFit",
    "ModerationResult",
    "fit_gene",
    "fit_all",
    "posterior_variance",
    "moderate_variances",
    "read_expression_csv",
]

_MISSING_TOKENS = {"", "NA"}


@dataclass(frozen=True)
class ExpressionMatrix:
    """Genes x arrays matrix of log2 ratios; NaN marks a missing spot."""

    gene_ids: tuple[str, ...]
    array_ids: tuple[str, ...]
    values: np.ndarray = field(compare=False)

    def __post_init__(self) -> None:
        if len(set(self.gene_ids)) != len(self.gene_ids):
            raise DataError("gene ids must be unique")
        if self.values.shape != (len(self.gene_ids), len(self.array_ids)):
            raise DataError(
                f"expression matrix shape {self.values.shape} does not match "
                f"{len(self.gene_ids)} genes x {len(self.array_ids)} arrays"
            )
        self.values.setflags(write=False)

    @property
    def n_genes(self) -> int:
        return len(self.gene_ids)


@dataclass(frozen=True)
class GeneFit:
    """Least-squares output for one gene, or the reason none exists.

    ``unscaled_se`` holds sqrt of the diagonal of (X'X)^-1 on the rows the
    gene actually used; multiplying by a residual-scale estimate gives
    coefficient standard errors.
    """

    gene_id: str
    status: str  # "ok" | "excluded"
    reason: str | None = None
    gamma_hat: np.ndarray | None = field(default=None, compare=False)
    s2: float | None = None
    df: int | None = None
    unscaled_se: np.ndarray | None = field(default=None, compare=False)
    n_used: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _excluded(gene_id: str, reason: str, n_used: int) -> GeneFit:
    return GeneFit(gene_id=gene_id, status="excluded", reason=reason, n_used=n_used)


def fit_gene(y, model: ModelMatrix, gene_id: str = "") -> GeneFit:
    """Fit one gene's log ratios against the model matrix.

    Rows where ``y`` is missing (NaN) are removed first; the gene is
    excluded when the surviving rows cannot identify the coefficients or
    leave no residual degree of freedom.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (model.n_arrays,):
        raise DataError(
            f"gene {gene_id!r}: {y.shape[0] if y.ndim == 1 else y.shape} values "
            f"for {model.n_arrays} arrays"
        )
    mask = np.isfinite(y)
    n_used = int(mask.sum())
    k = model.n_coefficients
    if n_used - k < 1:
        return _excluded(gene_id, "insufficient data", n_used)
    if mask.all() and model.pseudoinverse is not None:
        x_obs = model.x
        pinv = model.pseudoinverse
        unscaled_se = model.unscaled_se
        y_obs = y
    else:
        x_obs = model.x[mask]
        if matrix_rank(x_obs) < k:
            return _excluded(gene_id, "insufficient data", n_used)
        y_obs = y[mask]
        pinv = np.linalg.pinv(x_obs)
        unscaled_se = np.sqrt(np.diag(pinv @ pinv.T))
    gamma = pinv @ y_obs
    resid = y_obs - x_obs @ gamma
    df = n_used - k
    s2 = float(resid @ resid) / df
    return GeneFit(
        gene_id=gene_id,
        status="ok",
        gamma_hat=gamma,
        s2=s2,
        df=df,
        unscaled_se=np.array(unscaled_se),
        n_used=n_used,
    )


def fit_all(
    expr: ExpressionMatrix, model: ModelMatrix, threads: int = 1
) -> list[GeneFit]:
    """Fit every gene; a pure per-gene map, so results never depend on
    the thread count."""
    if len(expr.array_ids) != model.n_arrays:
        raise DataError(
            f"expression matrix has {len(expr.array_ids)} arrays but the "
            f"model expects {model.n_arrays}"
        )

    def one(i: int) -> GeneFit:
        return fit_gene(expr.values[i], model, gene_id=expr.gene_ids[i])

    n = expr.n_genes
    if threads <= 1 or n < 2:
        return [one(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(n), chunksize=max(1, n // (threads * 8))))


@dataclass(frozen=True)
class ModerationResult:
    """Prior (d0, s0_2) and per-gene posterior variances.

    ``posterior_s2`` and ``posterior_df`` align with the fit list that
    produced them; entries for excluded genes are NaN. ``d0`` may be
    ``inf``, in which case every posterior variance equals ``s0_2``.
    """

    d0: float
    s0_2: float
    posterior_s2: np.ndarray = field(compare=False)
    posterior_df: np.ndarray = field(compare=False)
    zero_variance_genes: tuple[int, ...] = ()
    n_estimation_genes: int = 0

    def __post_init__(self) -> None:
        self.posterior_s2.setflags(write=False)
        self.posterior_df.setflags(write=False)


def posterior_variance(d0: float, s0_2: float, df: float, s2: float) -> float:
    """df-weighted average of the prior and sample variance.

    Equal weights when df == d0; the result is clamped to the closed
    interval between s0_2 and s2 so the shrinkage bound holds exactly even
    under float rounding. With d0 = inf the prior wins outright.
    """
    if math.isinf(d0):
        return s0_2
    post = (d0 * s0_2 + df * s2) / (d0 + df)
    lo, hi = min(s0_2, s2), max(s0_2, s2)
    return min(max(post, lo), hi)


def moderate_variances(fits: list[GeneFit]) -> ModerationResult:
    """Estimate the variance prior from all genes and shrink each gene
    toward it.

    Matching the mean and variance of ``log s2 - digamma(df/2) + log(df/2)``
    against the scaled-inverse-chi-square hierarchy yields (d0, s0_2); each
    gene's posterior variance is then the df-weighted average
    ``(d0*s0_2 + df*s2) / (d0 + df)``.

    Genes with a perfect fit (s2 == 0) are excluded from prior estimation
    but still moderated; if the observed variances are under-dispersed
    relative to pure chi-square sampling noise, the prior is degenerate
    (d0 = inf) with s0_2 the geometric mean of the usable variances, and
    every posterior variance equals s0_2.
    """
    est_idx = [
        i for i, f in enumerate(fits) if f.ok and f.s2 > 0.0 and f.df >= 1
    ]
    if len(est_idx) < 2:
        raise DataError(
            "variance moderation needs at least 2 genes with a positive "
            f"residual variance, got {len(est_idx)}"
        )
    log_s2 = np.array([math.log(fits[i].s2) for i in est_idx])
    dfs = np.array([float(fits[i].df) for i in est_idx])
    dig = {d: digamma(d / 2.0) for d in np.unique(dfs)}
    tri = {d: trigamma(d / 2.0) for d in np.unique(dfs)}
    e = log_s2 - np.array([dig[d] for d in dfs]) + np.log(dfs / 2.0)
    e_mean = float(e.mean())
    e_var = float(((e - e_mean) ** 2).sum() / (len(e) - 1))
    excess = e_var - float(np.mean([tri[d] for d in dfs]))
    if excess > 0.0:
        d0 = 2.0 * trigamma_inverse(excess)
        s0_2 = math.exp(e_mean + digamma(d0 / 2.0) - math.log(d0 / 2.0))
    else:
        d0 = math.inf
        s0_2 = math.exp(float(log_s2.mean()))

    posterior_s2 = np.full(len(fits), math.nan)
    posterior_df = np.full(len(fits), math.nan)
    zero_variance: list[int] = []
    for i, f in enumerate(fits):
        if not f.ok:
            continue
        if f.s2 == 0.0:
            zero_variance.append(i)
        posterior_df[i] = d0 + f.df
        posterior_s2[i] = posterior_variance(d0, s0_2, f.df, f.s2)
    return ModerationResult(
        d0=d0,
        s0_2=s0_2,
        posterior_s2=posterior_s2,
        posterior_df=posterior_df,
        zero_variance_genes=tuple(zero_variance),
        n_estimation_genes=len(est_idx),
    )


def read_expression_csv(path, array_ids: tuple[str, ...]) -> ExpressionMatrix:
    """Read a log-ratio table: header ``gene_id,<array ids...>`` matching the
    design order exactly; values are decimals, with ``NA`` or an empty field
    for missing."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty file")
            expected = ["gene_id", *array_ids]
            if header != expected:
                raise DataError(
                    f"{path}: header does not match the design's arrays; "
                    f"expected {','.join(expected)!r}, got {','.join(header)!r}"
                )
            gene_ids: list[str] = []
            rows: list[list[float]] = []
            for lineno, row in enumerate(reader, start=2):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != len(expected):
                    raise DataError(
                        f"{path}:{lineno}: expected {len(expected)} fields, "
                        f"got {len(row)}"
                    )
                gene_ids.append(row[0].strip())
                values = []
                for col, text in enumerate(row[1:], start=2):
                    text = text.strip()
                    if text in _MISSING_TOKENS:
                        values.append(math.nan)
                        continue
                    try:
                        values.append(float(text))
                    except ValueError as exc:
                        raise DataError(
                            f"{path}:{lineno}: column {col}: "
                            f"not a number: {text!r}"
                        ) from exc
                rows.append(values)
    except OSError as exc:
        raise DataError(f"cannot read expression file {path}: {exc}") from exc
    if not gene_ids:
        raise DataError(f"{path}: no gene rows")
    return ExpressionMatrix(
        gene_ids=tuple(gene_ids),
        array_ids=tuple(array_ids),
        values=np.array(rows, dtype=float),
    )
