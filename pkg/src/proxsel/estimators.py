"""Causal-effect estimators built on candidate confounding proxies.

The target model is linear:

    Y_i = D_i * beta + Z_i' alpha + (hidden confounder) + noise,

where ``D`` is the treatment, ``Z`` collects treatment-inducing confounding
proxies (TCPs) and ``W`` collects outcome-inducing confounding proxies
(OCPs). A TCP is *valid* when its direct outcome effect ``alpha_j`` is zero;
a valid OCP absorbs the hidden confounder once regressed on the augmented
design ``M = (Z, D, X, 1)``. The estimators below differ in what they assume
known about validity:

- :func:`ols_baseline` ignores the proxies entirely (confounded benchmark);
- :func:`naive_p2sls` assumes every TCP is valid;
- :func:`oracle_p2sls` is told the true invalid set;
- :func:`lasso_proximal` selects invalid TCPs with a plain lasso via an
  exact two-step reformulation of the joint penalized regression;
- :func:`estimate_invalid_tcp` runs the full adaptive pipeline: median-ratio
  pilot estimates, adaptively weighted lasso selection, and a post-selection
  two-stage refit with a closed-form confidence interval;
- :func:`estimate_invalid_tcp_ocp` guards against invalid OCPs by running
  the pipeline once per OCP column and taking the median;
  :func:`subsample_ci` supplies its confidence interval.

Everything is deterministic given its inputs; the only randomness is the
subsample draw in :func:`subsample_ci`, driven by an explicit seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import (
    AggregateFailure,
    AssumptionViolation,
    DegenerateTreatment,
    InvalidBound,
    NoConvergence,
    ProxselError,
    RankDeficient,
    WeakProxyWarning,
)
from .linalg import as_matrix, as_vector, ols, orthonormal_basis

__all__ = [
    "Dataset",
    "EstimationConfig",
    "FirstStage",
    "ProxyEstimate",
    "first_stage",
    "median_gamma",
    "alpha_median",
    "lasso_solve",
    "kkt_violation",
    "lasso_proximal",
    "adaptive_lasso_proximal",
    "post_adaptive_2sls",
    "estimate_invalid_tcp",
    "estimate_invalid_tcp_ocp",
    "subsample_ci",
    "oracle_p2sls",
    "naive_p2sls",
    "ols_baseline",
    "select_lambda",
    "default_subsample_size",
]

#: Pilot-ratio denominators below this are treated as relevance failures.
DELTA_FLOOR = 1e-10

#: Pilot coefficients below this get the capped adaptive weight 1/ADAPTIVE_FLOOR.
ADAPTIVE_FLOOR = 1e-8

#: Residualized-treatment norm below this fraction of the raw norm is degenerate.
DEGENERATE_TREATMENT_RTOL = 1e-12

#: Stationarity tolerance certified on every lasso solution (absolute).
DEFAULT_KKT_TOL = 1e-6

#: Duality-gap tolerance, relative to the squared response norm.
DEFAULT_DUAL_GAP_TOL = 1e-8

#: Hard cap on coordinate-descent sweeps.
DEFAULT_MAX_SWEEPS = 100_000

#: RNG stream tag for subsample index draws (see ``numpy.random.SeedSequence``).
STREAM_SUBSAMPLE = 2


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """One sample: outcome, treatment, proxy blocks, optional covariates.

    ``X`` may be ``None`` or an ``n x 0`` matrix when there are no observed
    covariates. Requires ``n > p_z + p_w + p_x + 1`` so every second-stage
    regression has positive degrees of freedom.
    """

    Y: np.ndarray
    D: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    X: np.ndarray | None = None

    def __post_init__(self) -> None:
        y = as_vector(self.Y, "Y")
        d = as_vector(self.D, "D")
        z = as_matrix(self.Z, "Z")
        w = as_matrix(self.W, "W")
        n = y.size
        x = np.zeros((n, 0)) if self.X is None else as_matrix(self.X, "X")
        for name, arr in (("D", d), ("Z", z), ("W", w), ("X", x)):
            if arr.shape[0] != n:
                raise ValueError(
                    f"{name} has {arr.shape[0]} rows but Y has {n}"
                )
        if z.shape[1] < 1:
            raise ValueError("Z must contain at least one TCP column")
        if w.shape[1] < 1:
            raise ValueError("W must contain at least one OCP column")
        min_n = z.shape[1] + w.shape[1] + x.shape[1] + 1
        if n <= min_n:
            raise ValueError(
                f"need n > p_z + p_w + p_x + 1 = {min_n}, got n = {n}"
            )
        object.__setattr__(self, "Y", y)
        object.__setattr__(self, "D", d)
        object.__setattr__(self, "Z", z)
        object.__setattr__(self, "W", w)
        object.__setattr__(self, "X", x)

    @property
    def n(self) -> int:
        return self.Y.size

    @property
    def p_z(self) -> int:
        return self.Z.shape[1]

    @property
    def p_w(self) -> int:
        return self.W.shape[1]

    @property
    def p_x(self) -> int:
        return self.X.shape[1]

    def take_rows(self, indices: np.ndarray) -> "Dataset":
        """Row-subset copy (used by subsampling)."""
        idx = np.asarray(indices)
        return Dataset(
            Y=self.Y[idx],
            D=self.D[idx],
            Z=self.Z[idx],
            W=self.W[idx],
            X=self.X[idx],
        )


@dataclass(frozen=True)
class FirstStage:
    """Reduced-form fits on the augmented design ``M = (Z, D, X, 1)``.

    ``what`` is the fitted value of the chosen OCP column on ``M``;
    ``gamma_hat_vec`` / ``delta_hat_vec`` are the coefficient vectors of the
    outcome / OCP regressions on the ``(Z, D, X)`` block (the intercept
    coefficient is not retained — nothing downstream uses it). The first
    ``n_tcps`` entries are the TCP coefficients.
    """

    what: np.ndarray
    gamma_hat_vec: np.ndarray
    delta_hat_vec: np.ndarray
    n_tcps: int


@dataclass(frozen=True)
class ProxyEstimate:
    """Point estimate, selection, and confidence interval of one method.

    ``variance`` is the estimated asymptotic variance of
    ``sqrt(n) * (beta_hat - beta)``; the closed-form interval is
    ``beta_hat ± z * sqrt(variance / n)``. Methods without a closed form
    (the median-over-OCPs aggregator) carry NaN variance/CI until
    :func:`subsample_ci` is attached by the caller. ``selected_invalid_tcps``
    always equals the support of ``alpha_hat``.
    """

    beta_hat: float
    gamma_hat: float
    alpha_hat: np.ndarray
    selected_invalid_tcps: tuple[int, ...]
    variance: float
    ci_lower: float
    ci_upper: float
    method: str
    per_ocp_estimates: np.ndarray | None = None


@dataclass(frozen=True)
class EstimationConfig:
    """Tuning knobs of the adaptive selection pipeline.

    ``lambda_n = None`` defers to :func:`select_lambda` with ``lambda_mode``
    (default: the rate rule, which grows like ``sqrt(n)/log(n)`` scaled by
    the response's standard deviation). ``adaptive_floor`` caps the adaptive
    weights for pilot coefficients that are numerically zero.
    """

    lambda_n: float | None = None
    lambda_mode: str = "rate"
    alpha_level: float = 0.05
    adaptive_floor: float = ADAPTIVE_FLOOR

    def __post_init__(self) -> None:
        if self.lambda_n is not None and self.lambda_n < 0:
            raise InvalidBound(f"lambda_n must be >= 0, got {self.lambda_n}")
        if self.lambda_mode not in ("rate", "cv"):
            raise InvalidBound(
                f"lambda_mode must be 'rate' or 'cv', got {self.lambda_mode!r}"
            )
        if not 0.0 < self.alpha_level < 1.0:
            raise InvalidBound(
                f"alpha_level must lie in (0, 1), got {self.alpha_level}"
            )
        if self.adaptive_floor <= 0:
            raise InvalidBound("adaptive_floor must be positive")


# ---------------------------------------------------------------------------
# First stage
# ---------------------------------------------------------------------------


class _FirstStageBundle(NamedTuple):
    """All per-dataset first-stage quantities, computed with one factorization."""

    m: np.ndarray  # augmented design (Z, D, X, 1)
    gamma_vec: np.ndarray  # outcome coefficients on (Z, D, X)
    delta_mat: np.ndarray  # per-OCP coefficients on (Z, D, X), one column each
    what_mat: np.ndarray  # fitted OCP columns, n x p_w


def _augmented_design(data: Dataset) -> np.ndarray:
    return np.concatenate(
        [data.Z, data.D[:, None], data.X, np.ones((data.n, 1))], axis=1
    )


def _first_stage_bundle(data: Dataset) -> _FirstStageBundle:
    m = _augmented_design(data)
    fit = ols(m, np.column_stack([data.Y, data.W]))
    coef = fit.coefficients
    return _FirstStageBundle(
        m=m,
        gamma_vec=coef[:-1, 0].copy(),
        delta_mat=coef[:-1, 1:].copy(),
        what_mat=data.W - fit.residuals[:, 1:],
    )


def first_stage(data: Dataset, ocp_index: int = 0) -> FirstStage:
    """Reduced-form regressions of the outcome and one OCP on ``(Z, D, X, 1)``."""
    _check_ocp_index(data, ocp_index)
    bundle = _first_stage_bundle(data)
    return _first_stage_from_bundle(data, bundle, ocp_index)


def _first_stage_from_bundle(
    data: Dataset, bundle: _FirstStageBundle, ocp_index: int
) -> FirstStage:
    return FirstStage(
        what=bundle.what_mat[:, ocp_index].copy(),
        gamma_hat_vec=bundle.gamma_vec,
        delta_hat_vec=bundle.delta_mat[:, ocp_index].copy(),
        n_tcps=data.p_z,
    )


def _check_ocp_index(data: Dataset, ocp_index: int) -> None:
    if not 0 <= int(ocp_index) < data.p_w:
        raise IndexError(
            f"ocp_index must lie in [0, {data.p_w - 1}], got {ocp_index}"
        )


# ---------------------------------------------------------------------------
# Median-ratio pilot estimators
# ---------------------------------------------------------------------------


def _median_1d(values: np.ndarray) -> float:
    # Sort-based median for the short vectors used here; agrees with
    # np.median bit-for-bit (middle element, or the mean of the two middle
    # elements) at a fraction of its dispatch overhead.
    v = np.sort(values)
    m = v.size
    half = m // 2
    if m % 2:
        return float(v[half])
    return float((v[half - 1] + v[half]) / 2.0)


def _tcp_ratios(fs: FirstStage) -> tuple[np.ndarray, np.ndarray]:
    gamma = fs.gamma_hat_vec[: fs.n_tcps]
    delta = fs.delta_hat_vec[: fs.n_tcps]
    abs_delta = np.abs(delta)
    bad = [int(j) for j in np.nonzero(abs_delta <= DELTA_FLOOR)[0]]
    if bad:
        raise AssumptionViolation(
            f"OCP reduced-form coefficient is numerically zero at TCP indices "
            f"{bad}; the ratio pilot estimator is undefined there",
            indices=bad,
        )
    weak = abs_delta < 0.05 * _median_1d(abs_delta)
    if np.any(weak):
        warnings.warn(
            f"weak TCP relevance at indices "
            f"{[int(j) for j in np.nonzero(weak)[0]]}: |coefficient| below "
            f"5% of the median; pilot ratios may be unstable",
            WeakProxyWarning,
            stacklevel=3,
        )
    return gamma, delta


def median_gamma(fs: FirstStage) -> float:
    """Median of the per-TCP reduced-form ratios; pilot for the OCP effect.

    Valid TCPs all produce the same ratio (outcome coefficient over OCP
    coefficient) in population, so as long as strictly more than half the
    TCPs are valid the median is a consistent pilot. Even counts average the
    two central order statistics.
    """
    gamma, delta = _tcp_ratios(fs)
    return _median_1d(gamma / delta)


def alpha_median(fs: FirstStage, gamma_m: float) -> np.ndarray:
    """Pilot estimate of the direct TCP effects given the ratio pilot.

    No division happens here, so only the hard zero-coefficient guard
    applies (the relevance warning belongs to :func:`median_gamma`, which
    forms the ratios).
    """
    gamma = fs.gamma_hat_vec[: fs.n_tcps]
    delta = fs.delta_hat_vec[: fs.n_tcps]
    bad = [int(j) for j in np.nonzero(np.abs(delta) <= DELTA_FLOOR)[0]]
    if bad:
        raise AssumptionViolation(
            f"OCP reduced-form coefficient is numerically zero at TCP indices "
            f"{bad}; the pilot effect estimates are undefined there",
            indices=bad,
        )
    return gamma - float(gamma_m) * delta


# ---------------------------------------------------------------------------
# Weighted lasso solver
# ---------------------------------------------------------------------------


def kkt_violation(
    design, response, coefficients, lam: float, weights=None
) -> float:
    """Worst-case stationarity violation of a weighted-lasso solution.

    For the objective ``0.5 * ||y - X a||^2 + lam * sum_j w_j |a_j|`` the
    subgradient conditions are, with ``g = X'(X a - y)``:
    ``|g_j + lam * w_j * sign(a_j)| = 0`` on the support and
    ``|g_j| <= lam * w_j`` off it. Returns the largest absolute excess.
    """
    x = as_matrix(design, "design")
    y = as_vector(response, "response")
    a = as_vector(coefficients, "coefficients")
    w = _check_weights(weights, x.shape[1])
    g = x.T @ (x @ a - y)
    thresh = lam * w
    on = a != 0
    viol = np.where(on, np.abs(g + thresh * np.sign(a)), np.abs(g) - thresh)
    return float(np.max(np.maximum(viol, 0.0), initial=0.0))


def _check_weights(weights, p: int) -> np.ndarray:
    if weights is None:
        return np.ones(p)
    w = as_vector(weights, "weights")
    if w.size != p:
        raise ValueError(f"weights has length {w.size}, expected {p}")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    return w


def _dual_gap(
    x: np.ndarray,
    y: np.ndarray,
    alpha: np.ndarray,
    lam: float,
    w: np.ndarray,
) -> float:
    # Scale the residual onto the dual-feasible set {nu : |X_j' nu| <= lam w_j}
    # and evaluate the Fenchel dual; the gap is zero exactly at the optimum.
    r = y - x @ alpha
    corr = np.abs(x.T @ r)
    over = corr / (lam * w)
    s = 1.0 / max(1.0, float(np.max(over, initial=0.0)))
    nu = s * r
    primal = 0.5 * float(r @ r) + lam * float(w @ np.abs(alpha))
    dual = float(nu @ y) - 0.5 * float(nu @ nu)
    return primal - dual


def lasso_solve(
    design,
    response,
    lam: float,
    weights=None,
    *,
    start=None,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    dual_gap_tol: float = DEFAULT_DUAL_GAP_TOL,
    kkt_tol: float = DEFAULT_KKT_TOL,
) -> np.ndarray:
    """Minimize ``0.5*||y - X a||^2 + lam * sum_j weights_j * |a_j|``.

    Cyclic coordinate descent on the Gram system, iterated past the duality
    -gap tolerance all the way to a coordinate-wise fixed point, so the
    returned vector carries exact zeros off the support and passes the
    stationarity check of :func:`kkt_violation` at ``kkt_tol``; the solver
    certifies both before returning. ``lam = 0`` falls back to least squares
    (minimum-norm when the design is singular). ``start`` warm-starts the
    iteration; the solution of a convex problem does not depend on it.

    Raises
    ------
    NoConvergence
        If ``max_sweeps`` sweeps do not reach the duality-gap tolerance
        ``dual_gap_tol * ||response||^2``, or the terminal iterate fails the
        stationarity certificate.
    """
    x = as_matrix(design, "design")
    y = as_vector(response, "response")
    if x.shape[0] != y.size:
        raise ValueError(
            f"design has {x.shape[0]} rows but response has {y.size}"
        )
    lam = float(lam)
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    p = x.shape[1]
    w = _check_weights(weights, p)

    if lam == 0.0:
        alpha = np.linalg.lstsq(x, y, rcond=None)[0]
        _certify(x, y, alpha, lam, w, kkt_tol)
        return alpha

    if start is None:
        alpha = np.zeros(p)
    else:
        alpha = as_vector(start, "start").copy()
        if alpha.size != p:
            raise ValueError(f"start has length {alpha.size}, expected {p}")

    gram = x.T @ x
    xty = x.T @ y
    diag = np.diag(gram).copy()
    active = [j for j in range(p) if diag[j] > 0.0]
    thresh = lam * w
    gap_target = dual_gap_tol * float(y @ y)

    stalled = False
    for _ in range(max_sweeps):
        v = gram @ alpha  # refresh to avoid drift in the incremental updates
        max_move = 0.0
        for j in active:
            a_j = alpha[j]
            rho = xty[j] - v[j] + diag[j] * a_j
            mag = abs(rho) - thresh[j]
            new = 0.0 if mag <= 0.0 else math.copysign(mag, rho) / diag[j]
            d = new - a_j
            if d != 0.0:
                alpha[j] = new
                v += gram[:, j] * d
                if abs(d) > max_move:
                    max_move = abs(d)
        scale = max(1.0, float(np.max(np.abs(alpha), initial=0.0)))
        if max_move <= 1e-13 * scale:
            stalled = True
            break

    gap = _dual_gap(x, y, alpha, lam, w)
    if gap > gap_target and not stalled:
        raise NoConvergence(
            f"coordinate descent used {max_sweeps} sweeps but the duality gap "
            f"{gap:.3e} still exceeds {gap_target:.3e}"
        )
    _certify(x, y, alpha, lam, w, kkt_tol)
    return alpha


def _certify(x, y, alpha, lam, w, kkt_tol) -> None:
    viol = kkt_violation(x, y, alpha, lam, w)
    if viol > kkt_tol:
        raise NoConvergence(
            f"terminal iterate fails the stationarity certificate: "
            f"violation {viol:.3e} > {kkt_tol:g}"
        )


# ---------------------------------------------------------------------------
# Two-step penalized estimator
# ---------------------------------------------------------------------------


def _reduced_design(data: Dataset, what: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """TCP block and treatment, both residualized for the selection stage.

    Returns ``(g, d_tilde)`` where ``d_tilde`` is the treatment residualized
    on ``(what, X, 1)`` and ``g`` is the TCP block residualized on
    ``(what, X, 1, d_tilde)``. Fitting the outcome on ``g`` with an L1
    penalty reproduces the TCP coefficients of the joint penalized
    regression of Y on (treatment, TCPs, fitted OCP, covariates) exactly.
    """
    base = np.concatenate(
        [what[:, None], data.X, np.ones((data.n, 1))], axis=1
    )
    q = orthonormal_basis(base)
    d_tilde = data.D - q @ (q.T @ data.D)
    d_sq = float(d_tilde @ d_tilde)
    d_raw = float(data.D @ data.D)
    if d_sq <= DEGENERATE_TREATMENT_RTOL * d_raw:
        raise DegenerateTreatment(
            "treatment is numerically collinear with the fitted OCP and "
            "covariates; no variation left to identify the effect"
        )
    u = d_tilde / math.sqrt(d_sq)
    g = data.Z - q @ (q.T @ data.Z) - np.outer(u, u @ data.Z)
    return g, d_tilde


def lasso_proximal(
    data: Dataset, ocp_index: int = 0, lam: float = 0.0
) -> tuple[np.ndarray, float]:
    """Two-step plain-lasso estimator of (direct TCP effects, treatment effect).

    Step one fits the chosen OCP on the augmented design and residualizes
    both the treatment and the TCP block on the fitted OCP (plus covariates
    and intercept). Step two lasso-fits the outcome on the residualized TCP
    block at penalty ``lam``, then recovers the treatment effect from the
    residualized-treatment regression of the alpha-adjusted outcome:
    ``beta = d_tilde'(Y - Z alpha) / ||d_tilde||^2``. The pair equals the
    minimizer of the jointly penalized regression at the same penalty.
    """
    _check_ocp_index(data, ocp_index)
    bundle = _first_stage_bundle(data)
    what = bundle.what_mat[:, ocp_index]
    g, d_tilde = _reduced_design(data, what)
    alpha = lasso_solve(g, data.Y, lam)
    beta = float(d_tilde @ (data.Y - data.Z @ alpha) / (d_tilde @ d_tilde))
    return alpha, beta


def adaptive_lasso_proximal(
    data: Dataset,
    ocp_index: int = 0,
    lambda_n: float = 0.0,
    *,
    adaptive_floor: float = ADAPTIVE_FLOOR,
) -> tuple[np.ndarray, tuple[int, ...]]:
    """Adaptively weighted lasso selection of invalid TCPs.

    Weights are reciprocals of the median-ratio pilot magnitudes, so TCPs
    the pilot already flags as valid are penalized heavily (pilot values
    under ``adaptive_floor`` get the capped weight ``1/adaptive_floor``).
    Returns the penalized coefficient vector and its support.
    """
    _check_ocp_index(data, ocp_index)
    bundle = _first_stage_bundle(data)
    fs = _first_stage_from_bundle(data, bundle, ocp_index)
    alpha_ad, selected, _ = _adaptive_step(data, fs, lambda_n, adaptive_floor)
    return alpha_ad, selected


def _adaptive_step(
    data: Dataset,
    fs: FirstStage,
    lambda_n: float,
    adaptive_floor: float,
) -> tuple[np.ndarray, tuple[int, ...], np.ndarray]:
    gamma_m = median_gamma(fs)
    alpha_m = alpha_median(fs, gamma_m)
    weights = 1.0 / np.maximum(np.abs(alpha_m), adaptive_floor)
    g, _ = _reduced_design(data, fs.what)
    alpha_ad = lasso_solve(g, data.Y, lambda_n, weights)
    selected = tuple(int(j) for j in np.nonzero(alpha_ad)[0])
    return alpha_ad, selected, alpha_m


# ---------------------------------------------------------------------------
# Shared second stage (refit + closed-form confidence interval)
# ---------------------------------------------------------------------------


def _zscore(alpha_level: float) -> float:
    if not 0.0 < alpha_level < 1.0:
        raise InvalidBound(f"alpha_level must lie in (0, 1), got {alpha_level}")
    return NormalDist().inv_cdf(1.0 - alpha_level / 2.0)


def _plugin_variance(
    data: Dataset, nhat: np.ndarray, sigma2_eps: float
) -> float:
    """Asymptotic-variance plug-in for the ratio-form estimator.

    Evaluates the population expression
    ``sigma2_eps * bracket^{-2} * V`` with every expectation replaced by a
    sample mean, where ``bracket`` subtracts from ``E(D^2)`` the quadratic
    form of ``D`` on the fitted-regressor block ``nhat`` routed through the
    augmented design ``M``, and ``V`` carries the matching quadratic and
    cross terms. Because every column of ``nhat`` lies in the span of ``M``,
    the sample version collapses to ``sigma2_eps / mean(d_res^2)`` with
    ``d_res`` the residual of ``D`` on ``nhat`` — both forms are computed by
    this literal transcription, and the test suite pins their equality.
    """
    m = _augmented_design(data)
    n = data.n
    d = data.D
    smm = m.T @ m / n
    snn = nhat.T @ nhat / n
    snm = nhat.T @ m / n
    snd = nhat.T @ d / n
    smd = m.T @ d / n
    sdd = float(d @ d) / n
    try:
        snn_inv_snd = np.linalg.solve(snn, snd)
        mid = snm @ np.linalg.solve(smm, snm.T)
        quad = float(snn_inv_snd @ (mid @ snn_inv_snd))
        cross = float(snn_inv_snd @ (snm @ np.linalg.solve(smm, smd)))
    except np.linalg.LinAlgError as exc:
        raise RankDeficient(
            f"singular moment matrix in the variance plug-in: {exc}"
        ) from exc
    bracket = sdd - quad
    v = sdd + quad - 2.0 * cross
    if bracket <= 0:
        raise RankDeficient(
            "nonpositive residual treatment variation in the variance plug-in"
        )
    return float(sigma2_eps * v / bracket**2)


def _second_stage(
    data: Dataset,
    what_cols: np.ndarray | None,
    raw_ocp_cols: np.ndarray | None,
    selected: Sequence[int],
    alpha_level: float,
    method: str,
    *,
    with_variance: bool = True,
) -> ProxyEstimate:
    """Refit on (treatment, selected TCPs, fitted OCPs, covariates, intercept).

    All closed-form methods funnel through here, so estimators that agree on
    the selected set agree on every output bit-for-bit. The error variance
    feeding the interval follows the standard two-stage convention: the
    second-stage coefficients are applied to the *raw* OCP columns, not the
    fitted ones — fitted-value residuals would cancel the OCP's own
    measurement noise against the fit and understate the error variance
    (increasingly so as the proxy count grows).
    """
    sel = sorted(set(int(j) for j in selected))
    if sel and (sel[0] < 0 or sel[-1] >= data.p_z):
        raise IndexError(
            f"selected TCP indices must lie in [0, {data.p_z - 1}], got {sel}"
        )
    parts = [data.D[:, None], data.Z[:, sel]]
    if what_cols is not None:
        parts.append(what_cols)
    parts.append(data.X)
    parts.append(np.ones((data.n, 1)))
    design = np.concatenate(parts, axis=1)
    fit = ols(design, data.Y)
    coef = fit.coefficients
    beta = float(coef[0])
    k = len(sel)
    alpha_vec = np.zeros(data.p_z)
    alpha_vec[sel] = coef[1 : 1 + k]
    gamma = float(coef[1 + k]) if what_cols is not None else math.nan

    if with_variance:
        if what_cols is None:
            resid = fit.residuals
        else:
            n_w = what_cols.shape[1]
            gamma_block = coef[1 + k : 1 + k + n_w]
            resid = fit.residuals + (what_cols - raw_ocp_cols) @ gamma_block
        sigma2_eps = float(resid @ resid) / data.n
        sigma2 = _plugin_variance(data, design[:, 1:], sigma2_eps)
        half = _zscore(alpha_level) * math.sqrt(sigma2 / data.n)
        ci_lo, ci_hi = beta - half, beta + half
    else:
        sigma2 = math.nan
        ci_lo = ci_hi = math.nan
    return ProxyEstimate(
        beta_hat=beta,
        gamma_hat=gamma,
        alpha_hat=alpha_vec,
        selected_invalid_tcps=tuple(int(j) for j in np.nonzero(alpha_vec)[0]),
        variance=sigma2,
        ci_lower=ci_lo,
        ci_upper=ci_hi,
        method=method,
    )


def post_adaptive_2sls(
    data: Dataset,
    ocp_index: int,
    selected_set: Sequence[int],
    alpha_level: float = 0.05,
) -> ProxyEstimate:
    """Post-selection refit: OLS of Y on (D, selected TCPs, fitted OCP, X, 1).

    The treatment coefficient equals the ratio form
    ``D' P_perp Y / D' P_perp D`` with ``P_perp`` projecting off the
    non-treatment regressors; its closed-form interval uses the plug-in
    variance of :func:`_plugin_variance`.
    """
    _check_ocp_index(data, ocp_index)
    bundle = _first_stage_bundle(data)
    what = bundle.what_mat[:, ocp_index : ocp_index + 1]
    raw = data.W[:, ocp_index : ocp_index + 1]
    return _second_stage(
        data, what, raw, selected_set, alpha_level, "post_adaptive_2sls"
    )


def oracle_p2sls(
    data: Dataset,
    true_invalid_set: Sequence[int],
    alpha_level: float = 0.05,
    ocp_index: int = 0,
) -> ProxyEstimate:
    """Benchmark estimator given the true invalid-TCP set.

    Identical to :func:`post_adaptive_2sls` with the selection replaced by
    the truth (and so shares its code path exactly); reported separately
    because it anchors the simulation studies.
    """
    _check_ocp_index(data, ocp_index)
    bundle = _first_stage_bundle(data)
    what = bundle.what_mat[:, ocp_index : ocp_index + 1]
    raw = data.W[:, ocp_index : ocp_index + 1]
    est = _second_stage(
        data, what, raw, true_invalid_set, alpha_level, "oracle_p2sls"
    )
    return est


def naive_p2sls(
    data: Dataset,
    ocp_index: int | None = 0,
    alpha_level: float = 0.05,
) -> ProxyEstimate:
    """Two-stage estimator that presumes every TCP is valid.

    Regresses the outcome on (treatment, fitted OCP, covariates, intercept)
    with no TCP terms; biased whenever some TCP has a direct outcome effect.
    ``ocp_index = None`` enters every fitted OCP column jointly (the multi-
    OCP benchmark variant); ``gamma_hat`` then reports the first column's
    coefficient.
    """
    bundle = _first_stage_bundle(data)
    if ocp_index is None:
        what = bundle.what_mat
        raw = data.W
    else:
        _check_ocp_index(data, ocp_index)
        what = bundle.what_mat[:, ocp_index : ocp_index + 1]
        raw = data.W[:, ocp_index : ocp_index + 1]
    return _second_stage(data, what, raw, (), alpha_level, "naive_p2sls")


def ols_baseline(data: Dataset, alpha_level: float = 0.05) -> ProxyEstimate:
    """Confounded benchmark: OLS of the outcome on (treatment, covariates).

    Ignores both proxy blocks, so its bias equals the full hidden-confounder
    contribution; ``gamma_hat`` is NaN because no OCP enters the model.
    """
    return _second_stage(data, None, None, (), alpha_level, "ols_baseline")


# ---------------------------------------------------------------------------
# Full pipelines
# ---------------------------------------------------------------------------


def _resolve_lambda(
    data: Dataset, ocp_index: int, config: EstimationConfig
) -> float:
    if config.lambda_n is not None:
        return float(config.lambda_n)
    return select_lambda(data, ocp_index, config.lambda_mode)


def _pipeline_single(
    data: Dataset,
    bundle: _FirstStageBundle,
    ocp_index: int,
    config: EstimationConfig,
    *,
    with_variance: bool = True,
) -> ProxyEstimate:
    fs = _first_stage_from_bundle(data, bundle, ocp_index)
    lam = _resolve_lambda(data, ocp_index, config)
    _, selected, _ = _adaptive_step(data, fs, lam, config.adaptive_floor)
    return _second_stage(
        data,
        fs.what[:, None],
        data.W[:, ocp_index : ocp_index + 1],
        selected,
        config.alpha_level,
        "post_adaptive_2sls",
        with_variance=with_variance,
    )


def estimate_invalid_tcp(
    data: Dataset,
    ocp_index: int = 0,
    config: EstimationConfig | None = None,
) -> ProxyEstimate:
    """Full adaptive pipeline against a single designated OCP column.

    Sequence: reduced-form first stage, median-ratio pilots, adaptively
    weighted lasso selection of invalid TCPs, post-selection refit with a
    closed-form confidence interval.
    """
    _check_ocp_index(data, ocp_index)
    config = config or EstimationConfig()
    bundle = _first_stage_bundle(data)
    return _pipeline_single(data, bundle, ocp_index, config)


def estimate_invalid_tcp_ocp(
    data: Dataset,
    config: EstimationConfig | None = None,
) -> ProxyEstimate:
    """Median-over-OCPs aggregate of the adaptive pipeline.

    Runs :func:`estimate_invalid_tcp` once per OCP column and reports the
    median treatment effect, which tolerates a minority of invalid OCPs.
    Per-OCP failures are recorded as NaN in ``per_ocp_estimates``; the
    aggregate proceeds only when a strict majority of runs succeed. No
    closed-form interval exists for the median — attach one with
    :func:`subsample_ci` — so variance and CI fields are NaN here.
    """
    return _median_over_ocps(data, config or EstimationConfig())


def _median_over_ocps(
    data: Dataset,
    config: EstimationConfig,
    *,
    with_variance: bool = True,
) -> ProxyEstimate:
    bundle = _first_stage_bundle(data)
    per_ocp = np.full(data.p_w, math.nan)
    fits: list[ProxyEstimate] = []
    n_failed = 0
    for j in range(data.p_w):
        try:
            est = _pipeline_single(
                data, bundle, j, config, with_variance=with_variance
            )
        except ProxselError:
            n_failed += 1
            continue
        per_ocp[j] = est.beta_hat
        fits.append(est)
    required = data.p_w // 2 + 1
    if len(fits) < required:
        raise AggregateFailure(
            f"only {len(fits)} of {data.p_w} per-OCP runs succeeded; "
            f"need at least {required}",
            n_failed=n_failed,
            n_total=data.p_w,
        )
    beta = float(np.median([f.beta_hat for f in fits]))
    gamma = float(np.median([f.gamma_hat for f in fits]))
    alpha_vec = np.median(np.vstack([f.alpha_hat for f in fits]), axis=0)
    return ProxyEstimate(
        beta_hat=beta,
        gamma_hat=gamma,
        alpha_hat=alpha_vec,
        selected_invalid_tcps=tuple(int(j) for j in np.nonzero(alpha_vec)[0]),
        variance=math.nan,
        ci_lower=math.nan,
        ci_upper=math.nan,
        method="median_over_ocps",
        per_ocp_estimates=per_ocp,
    )


def default_subsample_size(n: int) -> int:
    """Default subsample size: ``floor(n ** (4/5))``."""
    return int(math.floor(n ** 0.8))


def subsample_ci(
    data: Dataset,
    config: EstimationConfig | None = None,
    n_subsamples: int = 1000,
    b: int | None = None,
    alpha_level: float = 0.05,
    seed: int = 0,
    *,
    recenter: bool = False,
) -> tuple[float, float]:
    """Subsampling confidence interval for the median-over-OCPs estimator.

    Draws ``n_subsamples`` row subsets of size ``b`` (default
    ``floor(n^{4/5})``) without replacement, recomputes
    :func:`estimate_invalid_tcp_ocp` on each, and returns the empirical
    ``alpha/2`` and ``1 - alpha/2`` quantiles of the subsample estimates.
    ``recenter=True`` instead inverts the classical subsampling root
    ``sqrt(b) * (estimate_b - estimate_n)`` (the orthodox construction; the
    raw-quantile default matches the reference simulation design).
    Deterministic given ``seed``: subsample ``i`` draws from an independent
    stream keyed by ``(seed, STREAM_SUBSAMPLE, i)``, so any parallel
    execution order reproduces the same interval.
    """
    config = config or EstimationConfig()
    n = data.n
    if b is None:
        b = default_subsample_size(n)
    b = int(b)
    if not 0 < b < n:
        raise InvalidBound(f"need 0 < b < n = {n}, got b = {b}")
    if n_subsamples < 1:
        raise InvalidBound(f"n_subsamples must be >= 1, got {n_subsamples}")
    _zscore(alpha_level)  # validates the level

    estimates = np.full(n_subsamples, math.nan)
    n_failed = 0
    with warnings.catch_warnings():
        # Weak-relevance warnings inside subsample replicas reflect the
        # subsample's own noise, not the data; only the quantiles of the
        # point estimates matter here, so skip per-replica interval work.
        warnings.simplefilter("ignore", WeakProxyWarning)
        for i in range(n_subsamples):
            rng = np.random.default_rng(
                np.random.SeedSequence((int(seed), STREAM_SUBSAMPLE, i))
            )
            idx = np.sort(rng.choice(n, size=b, replace=False))
            try:
                estimates[i] = _median_over_ocps(
                    data.take_rows(idx), config, with_variance=False
                ).beta_hat
            except (ProxselError, ValueError):
                n_failed += 1
    if n_failed > 0.2 * n_subsamples:
        raise AggregateFailure(
            f"{n_failed} of {n_subsamples} subsample runs failed "
            f"(more than 20%)",
            n_failed=n_failed,
            n_total=n_subsamples,
        )
    values = estimates[np.isfinite(estimates)]
    lo_q, hi_q = alpha_level / 2.0, 1.0 - alpha_level / 2.0
    if recenter:
        center = _median_over_ocps(data, config, with_variance=False).beta_hat
        roots = math.sqrt(b) * (values - center)
        r_lo, r_hi = np.quantile(roots, [lo_q, hi_q])
        scale = math.sqrt(n)
        return (
            float(center - r_hi / scale),
            float(center - r_lo / scale),
        )
    lo, hi = np.quantile(values, [lo_q, hi_q])
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# Penalty-level selection
# ---------------------------------------------------------------------------


def select_lambda(
    data: Dataset,
    ocp_index: int = 0,
    mode: str = "cv",
    *,
    n_folds: int = 10,
    grid_size: int = 50,
    grid_min_ratio: float = 1e-3,
) -> float:
    """Penalty level for the selection stage.

    ``rate`` mode returns ``std(Y) * sqrt(n) / log(n)`` — a deterministic
    schedule that diverges while remaining ``o(sqrt(n))``, the growth regime
    under which the adaptive selection is consistent. ``cv`` mode runs
    ``n_folds``-fold cross-validation of the plain lasso on the residualized
    TCP design over a ``grid_size``-point logarithmic grid anchored at the
    smallest penalty with an all-zero solution; folds are contiguous row
    blocks (no RNG) and ties prefer the larger penalty.
    """
    if mode == "rate":
        n = data.n
        return float(np.std(data.Y, ddof=1) * math.sqrt(n) / math.log(n))
    if mode != "cv":
        raise InvalidBound(f"mode must be 'rate' or 'cv', got {mode!r}")
    if data.n < 20:
        raise InvalidBound(f"cv mode needs n >= 20, got n = {data.n}")
    _check_ocp_index(data, ocp_index)

    bundle = _first_stage_bundle(data)
    what = bundle.what_mat[:, ocp_index]
    g, _ = _reduced_design(data, what)
    y = data.Y
    lam_max = float(np.max(np.abs(g.T @ y)))
    if lam_max <= 0.0:
        return 0.0
    grid = np.geomspace(grid_min_ratio * lam_max, lam_max, grid_size)[::-1]

    n = data.n
    bounds = np.linspace(0, n, n_folds + 1).astype(int)
    mse = np.zeros(grid_size)
    for f in range(n_folds):
        val = np.zeros(n, dtype=bool)
        val[bounds[f] : bounds[f + 1]] = True
        g_tr, y_tr = g[~val], y[~val]
        g_va, y_va = g[val], y[val]
        start = np.zeros(g.shape[1])
        for gi, lam in enumerate(grid):
            start = lasso_solve(g_tr, y_tr, lam, start=start)
            resid = y_va - g_va @ start
            mse[gi] += float(resid @ resid)
    best = 0
    for gi in range(1, grid_size):
        if mse[gi] < mse[best]:
            best = gi
    return float(grid[best])
