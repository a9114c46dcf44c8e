"""
Small self-contained statistics toolkit: OLS with t/F tests, z-scores,
Gaussian KDE, Spearman and Kendall tau-b, elasticities and two-sample
distribution distances.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

_BETACF_EPS = 1e-15
_BETACF_TINY = 1e-300
_BETACF_MAXIT = 500


class StatsError(ValueError):
    pass


# ---------------------------------------------------------------- special functions

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_TINY:
        d = _BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise StatsError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not (a > 0 and b > 0):
        raise StatsError("betainc needs a > 0 and b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    if math.isnan(t):
        return math.nan
    t = float(t)
    return min(1.0, max(0.0, betainc(df / 2.0, 0.5, df / (df + t * t))))


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail P(F >= f) for the F(d1, d2) distribution."""
    if math.isnan(f):
        return math.nan
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return min(1.0, max(0.0, betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * float(f)))))


# ---------------------------------------------------------------- z-scores and OLS

def zscore(x, *, warn_name: str | None = None) -> np.ndarray:
    """Population z-score (ddof=0).  A zero-variance input maps to zeros with a warning."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    sd = x.std()
    if not sd > 0:
        warnings.warn(f"zero-variance input{'' if warn_name is None else ' ' + repr(warn_name)}; z set to 0",
                      RuntimeWarning, stacklevel=2)
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def stars(p: float) -> str:
    if p is None or math.isnan(p):
        return ""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


@dataclass(frozen=True)
class RegressionResult:
    coefficients: tuple[float, ...]
    intercept: float
    p_values: tuple[float, ...]
    p_intercept: float
    std_errors: tuple[float, ...]
    r_squared: float
    f_statistic: float
    f_p_value: float
    n: int
    names: tuple[str, ...] = ()

    def to_json(self) -> dict:
        names = self.names or tuple(f"x{i}" for i in range(len(self.coefficients)))
        return {
            "coefficients": {n: {"B": b, "p": p, "stars": stars(p)}
                             for n, b, p in zip(names, self.coefficients, self.p_values)},
            "intercept": {"B": self.intercept, "p": self.p_intercept, "stars": stars(self.p_intercept)},
            "R2": self.r_squared,
            "F": self.f_statistic,
            "F_p": self.f_p_value,
            "F_stars": stars(self.f_p_value),
            "N": self.n,
        }


def ols(X, y, standardize_y: bool = False, names: Sequence[str] = ()) -> RegressionResult:
    """Least squares with intercept via the normal equations.

    ``X`` is N x p without a constant column.  Raises StatsError for too few
    rows, a rank-deficient design (naming the first dependent column) or a
    constant ``y``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise StatsError(f"X has {n} rows but y has {y.shape[0]}")
    if n <= p + 1:
        raise StatsError(f"need N > p + 1 observations, got N={n}, p={p}")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise StatsError("non-finite values in regression inputs")
    if not y.std() > 0:
        raise StatsError("zero-variance response y")
    if standardize_y:
        y = (y - y.mean()) / y.std()

    A = np.column_stack([np.ones(n), X])
    _check_rank(A, names)
    xtx = A.T @ A
    xty = A.T @ y
    beta = np.linalg.solve(xtx, xty)
    resid = y - A @ beta
    sse = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = min(1.0, max(0.0, 1.0 - sse / sst))
    df_res = n - p - 1
    sigma2 = sse / df_res
    cov = sigma2 * np.linalg.inv(xtx)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    pvals = []
    for b, s in zip(beta, se):
        if s > 0:
            pvals.append(t_sf_two_sided(b / s, df_res))
        else:
            pvals.append(0.0 if b != 0 else 1.0)
    ssr = sst - sse
    if sse > 0:
        f = (ssr / p) / (sse / df_res)
        fp = f_sf(f, p, df_res)
    else:
        f, fp = math.inf, 0.0
    return RegressionResult(
        coefficients=tuple(float(b) for b in beta[1:]),
        intercept=float(beta[0]),
        p_values=tuple(pvals[1:]),
        p_intercept=pvals[0],
        std_errors=tuple(float(s) for s in se[1:]),
        r_squared=r2,
        f_statistic=float(f),
        f_p_value=float(fp),
        n=n,
        names=tuple(names),
    )


def _check_rank(A: np.ndarray, names: Sequence[str]) -> None:
    """Raise on the first design column that is linearly dependent on earlier ones."""
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    An = A / scale
    tol = max(A.shape) * np.finfo(float).eps * 1e3
    for j in range(1, A.shape[1]):
        if np.linalg.matrix_rank(An[:, : j + 1], tol=tol) <= j:
            label = names[j - 1] if j - 1 < len(names) else f"column {j - 1}"
            raise StatsError(f"rank-deficient design: {label} is a linear combination of the "
                             "intercept and earlier regressors")


# ---------------------------------------------------------------- KDE

def scott_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=np.float64)
    return float(x.std(ddof=1) * x.size ** (-1.0 / 5.0))


def gaussian_kde(samples, grid=None, bandwidth: float | None = None, n_grid: int = 512):
    """Gaussian KDE evaluated on ``grid``.

    Default bandwidth is Scott's rule ``sd * n**(-1/5)``.  When ``grid`` is
    None an even grid spanning the sample range plus six bandwidths on each
    side is used.  Returns ``(grid, density)``.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise StatsError("KDE needs at least 2 samples")
    if not x.std() > 0:
        raise StatsError("KDE needs samples with nonzero variance")
    h = scott_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise StatsError("bandwidth must be > 0")
    if grid is None:
        grid = np.linspace(x.min() - 6 * h, x.max() + 6 * h, n_grid)
    grid = np.asarray(grid, dtype=np.float64)
    dens = np.zeros(grid.shape, dtype=np.float64)
    norm = 1.0 / (x.size * h * math.sqrt(2.0 * math.pi))
    chunk = max(1, 4_000_000 // max(1, x.size))
    flat = grid.ravel()
    out = dens.ravel()
    for lo in range(0, flat.size, chunk):
        u = (flat[lo:lo + chunk, None] - x[None, :]) / h
        out[lo:lo + chunk] = np.exp(-0.5 * u * u).sum(axis=1) * norm
    return grid, out.reshape(grid.shape)


# ---------------------------------------------------------------- rank correlation

@dataclass(frozen=True)
class RankTestResult:
    statistic: float  # nan when undefined
    method: str
    ties: str
    passed: bool | None = None
    threshold: float | None = None

    @property
    def defined(self) -> bool:
        return not math.isnan(self.statistic)


def rankdata(a) -> np.ndarray:
    """Average ranks (1-based), ties sharing the mean of their positions."""
    a = np.asarray(a, dtype=np.float64)
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size, dtype=np.float64)
    sa = a[order]
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and sa[j + 1] == sa[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise StatsError("rank correlation inputs differ in length")
    if a.size < 2:
        raise StatsError("rank correlation needs at least 2 items")
    return a, b


def _verdict(stat, threshold):
    if threshold is None or math.isnan(stat):
        return None
    return bool(stat >= threshold - 1e-12)


def spearman(a, b, threshold: float | None = None) -> RankTestResult:
    """Spearman rho as the Pearson correlation of average ranks."""
    a, b = _check_pair(a, b)
    ra, rb = rankdata(a), rankdata(b)
    da, db = ra - ra.mean(), rb - rb.mean()
    den = math.sqrt(float(da @ da) * float(db @ db))
    stat = float(da @ db) / den if den > 0 else math.nan
    if not math.isnan(stat):
        stat = min(1.0, max(-1.0, stat))
    return RankTestResult(stat, "spearman", "average ranks", _verdict(stat, threshold), threshold)


def kendall(a, b, threshold: float | None = None) -> RankTestResult:
    """Kendall tau-b by explicit pair counting (inputs here are small)."""
    a, b = _check_pair(a, b)
    n = a.size
    sa = np.sign(a[:, None] - a[None, :])
    sb = np.sign(b[:, None] - b[None, :])
    iu = np.triu_indices(n, 1)
    prod = (sa * sb)[iu]
    nc = int((prod > 0).sum())
    nd = int((prod < 0).sum())
    n0 = n * (n - 1) // 2
    n1 = int((sa[iu] == 0).sum())
    n2 = int((sb[iu] == 0).sum())
    den = math.sqrt((n0 - n1) * (n0 - n2))
    stat = (nc - nd) / den if den > 0 else math.nan
    return RankTestResult(stat, "kendall", "tau-b", _verdict(stat, threshold), threshold)


# ---------------------------------------------------------------- elasticity & distances

def elasticity(baseline: float, perturbed: float, x_base: float, x_new: float) -> float:
    """Point elasticity (dy / y_base) / (dx / x_base).

    Returns nan with a RuntimeWarning when the baseline outcome is zero; a zero
    ``x_base`` or ``x_new == x_base`` raises StatsError.
    """
    if x_base == 0:
        raise StatsError("x_base must be nonzero")
    if x_new == x_base:
        raise StatsError("x_new must differ from x_base")
    if baseline == 0:
        warnings.warn("elasticity undefined for a zero baseline outcome", RuntimeWarning, stacklevel=2)
        return math.nan
    return ((perturbed - baseline) / baseline) / ((x_new - x_base) / x_base)


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise StatsError("KS needs non-empty samples")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def tv_distance(p, q) -> float:
    """Total variation 0.5 * sum |p - q| of two probability vectors on the same support."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise StatsError("TV inputs must share a support")
    return float(0.5 * np.abs(p - q).sum())


def histogram_pmf(a, b, support=None):
    """Normalized count histograms of two integer-valued samples over a shared support."""
    a = np.asarray(a, dtype=np.int64).ravel()
    b = np.asarray(b, dtype=np.int64).ravel()
    if a.size == 0 or b.size == 0:
        raise StatsError("histogram needs non-empty samples")
    if support is None:
        lo = int(min(a.min(), b.min()))
        hi = int(max(a.max(), b.max()))
        support = np.arange(lo, hi + 1)
    support = np.asarray(support, dtype=np.int64)
    pa = np.array([(a == s).sum() for s in support], dtype=np.float64) / a.size
    pb = np.array([(b == s).sum() for s in support], dtype=np.float64) / b.size
    return support, pa, pb
