"""Classification metrics, bootstrap inference, logistic and linear fits.

All metrics follow fixed conventions: ROC-AUC is the Mann-Whitney statistic with
ties counted 1/2, PR-AUC is step-wise average precision with tied scores grouped
into one threshold, Brier is mean squared error of probabilities. Bootstrap
procedures are deterministic given (seed, inputs): resamples and swaps are drawn
from one seeded generator in a fixed chunked order.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable

import numpy as np
from scipy.stats import rankdata

DEFAULT_N_BOOT = 10_000
_CHUNK_ROWS = 2048


class ConvergenceError(RuntimeError):
    """logistic fit failed to converge (likely separation); try the l2 flag"""


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _as_arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    return s, y.astype(bool)


# ---------------------------------------------------------------------------
# metrics (row-vectorized cores shared by the bootstrap paths)


def _roc_auc_rows(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """per-row AUC; rows without both classes come back as nan"""
    ranks = rankdata(scores, method="average", axis=1)
    n_pos = labels.sum(axis=1)
    n_neg = labels.shape[1] - n_pos
    pos_rank_sum = np.where(labels, ranks, 0.0).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        auc = (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    auc[(n_pos == 0) | (n_neg == 0)] = np.nan
    return auc


def _pr_auc_rows(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """per-row average precision with tie grouping; rows without positives -> nan"""
    r, m = scores.shape
    order = np.argsort(-scores, axis=1, kind="stable")
    s_sorted = np.take_along_axis(scores, order, axis=1)
    l_sorted = np.take_along_axis(labels.astype(float), order, axis=1)
    tp = np.cumsum(l_sorted, axis=1)
    k = np.arange(1, m + 1, dtype=float)

    is_end = np.ones((r, m), dtype=bool)
    is_end[:, :-1] = s_sorted[:, :-1] != s_sorted[:, 1:]
    is_start = np.ones((r, m), dtype=bool)
    is_start[:, 1:] = s_sorted[:, 1:] != s_sorted[:, :-1]
    # tp just before each tie group, forward-filled from the group start
    start_idx = np.where(is_start, np.arange(m), 0)
    ff = np.maximum.accumulate(start_idx, axis=1)
    tp_before = np.take_along_axis(tp - l_sorted, ff, axis=1)

    n_pos = labels.sum(axis=1).astype(float)
    contrib = np.where(is_end, (tp - tp_before) * (tp / k), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ap = contrib.sum(axis=1) / n_pos
    ap[n_pos == 0] = np.nan
    return ap


def roc_auc(scores, labels) -> float:
    """probability a random positive outranks a random negative, ties counted 1/2"""
    s, y = _as_arrays(scores, labels)
    out = _roc_auc_rows(s[None, :], y[None, :])[0]
    if np.isnan(out):
        raise ValueError("roc_auc needs both classes present")
    return float(out)


def pr_auc(scores, labels) -> float:
    """average precision: step-wise integral of precision over recall"""
    s, y = _as_arrays(scores, labels)
    out = _pr_auc_rows(s[None, :], y[None, :])[0]
    if np.isnan(out):
        raise ValueError("pr_auc needs at least one positive")
    return float(out)


def brier(probabilities, labels) -> float:
    """mean squared error between predicted probabilities and realizations"""
    p, y = _as_arrays(probabilities, labels)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    return float(np.mean((p - y) ** 2))


_METRIC_ROWS = {"roc_auc": _roc_auc_rows, "pr_auc": _pr_auc_rows}
_METRIC_POINT = {"roc_auc": roc_auc, "pr_auc": pr_auc, "brier": brier}


def _brier_rows(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return np.mean((probs - labels) ** 2, axis=1)


# ---------------------------------------------------------------------------
# bootstrap procedures


def bootstrap_ci(
    scores,
    labels,
    metric: str | Callable = "roc_auc",
    n: int = DEFAULT_N_BOOT,
    seed: int = 0,
    *,
    max_degenerate_frac: float = 0.01,
) -> tuple[float, float]:
    """
    percentile 95% CI of the metric over `n` row resamples with replacement;
    resamples that lose a class are redrawn (counted; > 1% of n is an error)
    """
    s, y = _as_arrays(scores, labels)
    m = len(s)
    rng = np.random.default_rng(seed)
    values = np.empty(n)
    degenerate = 0
    filled = 0

    def check_budget():
        if degenerate > max_degenerate_frac * n:
            raise ValueError(
                f"{degenerate} of {n} bootstrap resamples were degenerate "
                f"(> {max_degenerate_frac:.0%}); the test set is too small or imbalanced"
            )

    if isinstance(metric, str):
        if metric not in _METRIC_POINT:
            raise ValueError(f"unknown metric {metric!r}")
        rows_fn = _METRIC_ROWS.get(metric, _brier_rows)
        while filled < n:
            rows = min(_CHUNK_ROWS, n - filled)
            idx = rng.integers(0, m, size=(rows, m))
            vals = rows_fn(s[idx], y[idx])
            bad = np.isnan(vals)
            while bad.any():
                degenerate += int(bad.sum())
                check_budget()
                redraw = rng.integers(0, m, size=(int(bad.sum()), m))
                vals[bad] = rows_fn(s[redraw], y[redraw])
                bad = np.isnan(vals)
            values[filled : filled + rows] = vals
            filled += rows
    else:
        while filled < n:
            idx = rng.integers(0, m, size=m)
            try:
                values[filled] = metric(s[idx], y[idx])
            except ValueError:
                degenerate += 1
                check_budget()
                continue
            filled += 1
    return float(np.percentile(values, 2.5)), float(np.percentile(values, 97.5))


def paired_metric_pvalue(
    scores_a,
    scores_b,
    labels,
    metric: str = "roc_auc",
    n: int = DEFAULT_N_BOOT,
    seed: int = 0,
    *,
    greater_is_better: bool = True,
) -> float:
    """
    one-sided p for H0 "the two classifiers' predictions are exchangeable"
    against "A performs better": per row, swap the paired predictions with
    probability 1/2 and recompute the performance advantage of A over B;
    p = (1 + #{advantage* >= advantage_obs}) / (n + 1)
    """
    a, y = _as_arrays(scores_a, labels)
    b, _ = _as_arrays(scores_b, labels)
    if a.shape != b.shape:
        raise ValueError(f"paired score vectors differ in length: {a.shape} vs {b.shape}")
    sign = 1.0 if greater_is_better else -1.0
    point = _METRIC_POINT[metric]
    adv_obs = sign * (point(a, y) - point(b, y))

    rows_fn = _METRIC_ROWS.get(metric, _brier_rows)
    m = len(a)
    rng = np.random.default_rng(seed)
    exceed = 0
    done = 0
    L = np.broadcast_to(y, (1, m))
    while done < n:
        rows = min(_CHUNK_ROWS, n - done)
        swap = rng.integers(0, 2, size=(rows, m), dtype=np.uint8).astype(bool)
        a_star = np.where(swap, b, a)
        b_star = np.where(swap, a, b)
        lab = np.broadcast_to(y, (rows, m))
        adv = sign * (rows_fn(a_star, lab) - rows_fn(b_star, lab))
        exceed += int(np.sum(adv >= adv_obs))
        done += rows
    return (1 + exceed) / (n + 1)


def paired_auc_pvalue(scores_a, scores_b, labels, n: int = DEFAULT_N_BOOT, seed: int = 0) -> float:
    return paired_metric_pvalue(scores_a, scores_b, labels, "roc_auc", n, seed)


@dataclasses.dataclass(frozen=True)
class MetricReport:
    roc_auc: float
    roc_ci: tuple[float, float]
    pr_auc: float
    pr_ci: tuple[float, float]
    brier: float
    brier_ci: tuple[float, float]
    n_boot: int
    seed: int


def metric_report(probabilities, labels, n_boot: int = DEFAULT_N_BOOT, seed: int = 0) -> MetricReport:
    """point estimates plus bootstrap CIs for the three standard metrics"""
    return MetricReport(
        roc_auc=roc_auc(probabilities, labels),
        roc_ci=bootstrap_ci(probabilities, labels, "roc_auc", n_boot, seed),
        pr_auc=pr_auc(probabilities, labels),
        pr_ci=bootstrap_ci(probabilities, labels, "pr_auc", n_boot, seed + 1),
        brier=brier(probabilities, labels),
        brier_ci=bootstrap_ci(probabilities, labels, "brier", n_boot, seed + 2),
        n_boot=n_boot,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# logistic regression (IRLS with optional ridge penalty)


@dataclasses.dataclass
class LogisticFit:
    coef: np.ndarray  # intercept first
    se: np.ndarray
    z: np.ndarray
    pvalues: np.ndarray
    converged: bool
    n_iter: int
    standardized: bool
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    notes: list[str]


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * np.clip(eta, -35, 35)))


def logistic_objective(
    beta: np.ndarray, design: np.ndarray, labels: np.ndarray, l2: float, penalize: np.ndarray
) -> tuple[float, np.ndarray]:
    """penalized negative log-likelihood and its gradient on a design matrix"""
    eta = design @ beta
    # log(1 + exp(eta)) computed stably
    log1pexp = np.where(eta > 30, eta, np.log1p(np.exp(np.minimum(eta, 30))))
    nll = float(np.sum(log1pexp - labels * eta) + l2 * np.sum(penalize * beta**2))
    grad = design.T @ (_sigmoid(eta) - labels) + 2.0 * l2 * penalize * beta
    return nll, grad


def logistic_fit(
    features,
    labels,
    l2: float = 0.0,
    *,
    standardize: bool = True,
    raw_units: bool = False,
    max_iter: int = 200,
    tol: float = 1e-8,
) -> LogisticFit:
    """
    maximum penalized likelihood via damped Newton steps to gradient max-norm
    < tol; standard errors from the inverse observed information (penalized
    Hessian) at the optimum; two-sided Wald p-values

    Features are standardized on the fit sample by default and coefficients
    reported in standardized units; `raw_units` back-transforms them.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(labels, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"features {X.shape} and labels {y.shape} disagree on rows")
    if l2 < 0:
        raise ValueError("l2 must be >= 0")
    n, k = X.shape
    notes: list[str] = []

    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    constant = sd == 0
    if constant.any():
        notes.append(f"constant feature columns: {list(np.flatnonzero(constant))}")
    sd_safe = np.where(constant, 1.0, sd)
    Xs = (X - mu) / sd_safe if standardize else X

    active = ~constant
    Z = np.column_stack([np.ones(n), Xs[:, active]])
    penalize = np.ones(Z.shape[1])
    penalize[0] = 0.0

    beta = np.zeros(Z.shape[1])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        nll, grad = logistic_objective(beta, Z, y, l2, penalize)
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        p = _sigmoid(Z @ beta)
        w = np.maximum(p * (1 - p), 1e-12)
        H = (Z * w[:, None]).T @ Z + 2.0 * l2 * np.diag(penalize)
        # light Levenberg damping keeps exactly collinear designs from sending
        # Newton wandering along near-null directions
        damp = 1e-10 * float(np.trace(H)) / H.shape[0]
        try:
            step = np.linalg.solve(H + damp * np.eye(H.shape[0]), grad)
        except np.linalg.LinAlgError:
            raise ConvergenceError(
                "singular information matrix; features may be collinear "
                "(set l2 > 0 to regularize)"
            ) from None
        # near the optimum the objective plateaus at float resolution; trust the
        # Newton step there, otherwise halve until the objective does not increase
        scale = 1.0
        if np.max(np.abs(grad)) > 1e-5:
            for _ in range(40):
                cand = beta - scale * step
                if logistic_objective(cand, Z, y, l2, penalize)[0] <= nll:
                    break
                scale /= 2
        beta = beta - scale * step
        if np.max(np.abs(beta)) > 1e6:
            break

    # saturated probabilities make the gradient vanish at absurd coefficients;
    # treat that as separation rather than a genuine optimum
    if converged and np.max(np.abs(beta)) > 50 and l2 == 0:
        raise ConvergenceError(
            f"coefficients diverged to {np.max(np.abs(beta)):.3g} with a vanishing "
            "gradient; the classes are separable - set l2 > 0"
        )
    if not converged:
        _, grad = logistic_objective(beta, Z, y, l2, penalize)
        raise ConvergenceError(
            f"no convergence in {max_iter} iterations "
            f"(gradient max-norm {np.max(np.abs(grad)):.3g}, max |coef| "
            f"{np.max(np.abs(beta)):.3g}); data may be separable - set l2 > 0"
        )

    p = _sigmoid(Z @ beta)
    w = np.maximum(p * (1 - p), 1e-12)
    H = (Z * w[:, None]).T @ Z + 2.0 * l2 * np.diag(penalize)
    cov = np.linalg.inv(H)

    # scatter active coefficients back into intercept-first full vectors
    full_coef = np.zeros(k + 1)
    full_se = np.full(k + 1, np.inf)
    full_cov = np.zeros((k + 1, k + 1))
    slots = np.concatenate([[0], 1 + np.flatnonzero(active)])
    full_coef[slots] = beta
    full_cov[np.ix_(slots, slots)] = cov
    full_se[slots] = np.sqrt(np.diag(cov))

    if raw_units and standardize:
        # beta_raw_j = beta_std_j / sd_j; intercept absorbs the centering
        scale_vec = np.concatenate([[1.0], 1.0 / sd_safe])
        shift = np.concatenate([[1.0], -mu / sd_safe])
        raw_coef = full_coef * scale_vec
        raw_coef[0] = float(shift @ full_coef)
        J = np.diag(scale_vec)
        J[0, :] = shift
        raw_cov = J @ full_cov @ J.T
        full_coef = raw_coef
        full_se = np.sqrt(np.diag(raw_cov))
        full_se[1:][constant] = np.inf

    z = np.divide(full_coef, full_se, out=np.zeros_like(full_coef), where=full_se > 0)
    z[np.isinf(full_se)] = 0.0
    pv = np.array([2 * _norm_sf(abs(val)) for val in z])
    pv[np.isinf(full_se)] = np.nan
    reported_standardized = standardize and not raw_units
    return LogisticFit(
        full_coef,
        full_se,
        z,
        pv,
        converged,
        it,
        reported_standardized,
        mu if reported_standardized else np.zeros(k),
        sd_safe if reported_standardized else np.ones(k),
        notes,
    )


def predict_proba(fit: LogisticFit, features) -> np.ndarray:
    """probabilities on new rows, applying the fit's own feature scaling"""
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Xs = (X - fit.feature_mean) / fit.feature_scale
    return _sigmoid(fit.coef[0] + Xs @ fit.coef[1:])


# ---------------------------------------------------------------------------
# ordinary least squares


def ols_fit(x, y) -> tuple[float, float, float]:
    """closed-form simple regression; returns (slope, intercept, R^2)"""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError("x and y must be equal-length vectors")
    vx = np.var(xa)
    if vx == 0:
        raise ValueError("zero variance in the predictor")
    slope = float(np.cov(xa, ya, bias=True)[0, 1] / vx)
    intercept = float(ya.mean() - slope * xa.mean())
    resid = ya - (intercept + slope * xa)
    sst = float(np.sum((ya - ya.mean()) ** 2))
    r2 = 0.0 if sst == 0 else 1.0 - float(np.sum(resid**2)) / sst
    return slope, intercept, r2
