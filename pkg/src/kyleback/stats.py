"""Small statistical helpers used by the equilibrium checks."""
import numpy as np
from scipy import stats as _st

from .engine import pairwise_mean, pairwise_sum


def mean_se(x):
    """Deterministic sample mean and its standard error."""
    x = np.asarray(x, dtype=float).ravel()
    n = len(x)
    m = float(pairwise_mean(x))
    if n < 2:
        return m, float("nan")
    var = float(pairwise_sum((x - m) ** 2)) / (n - 1)
    return m, float(np.sqrt(var / n))


def _independent_columns(X, tol=1e-9):
    keep = []
    for j in range(X.shape[1]):
        cols = keep + [j]
        A = X[:, cols]
        A = A / np.maximum(np.linalg.norm(A, axis=0), 1e-300)
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] > tol * s[0]:
            keep.append(j)
    return keep


def ols_cluster(y, X, groups, names=None):
    """OLS with cluster-robust (CR1) standard errors.

    Collinear columns are dropped (reported with NaN estimates).  Returns a
    dict name -> (estimate, se, z).
    """
    y = np.asarray(y, float)
    X = np.asarray(X, float)
    names = names or [f"x{j}" for j in range(X.shape[1])]
    keep = _independent_columns(X)
    Xk = X[:, keep]
    XtX_inv = np.linalg.pinv(Xk.T @ Xk)
    beta = XtX_inv @ (Xk.T @ y)
    resid = y - Xk @ beta
    g = np.asarray(groups)
    order = np.argsort(g, kind="stable")
    gs = g[order]
    starts = np.r_[0, np.nonzero(np.diff(gs))[0] + 1]
    scores = np.add.reduceat(Xk[order] * resid[order, None], starts, axis=0)
    G, n, k = len(starts), len(y), Xk.shape[1]
    adj = G / max(G - 1, 1) * (n - 1) / max(n - k, 1)
    cov = adj * XtX_inv @ (scores.T @ scores) @ XtX_inv
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    out = {}
    for j, name in enumerate(names):
        if j in keep:
            q = keep.index(j)
            b, s = float(beta[q]), float(se[q])
            z = b / s if s > 0 else (0.0 if b == 0 else np.inf)
            out[name] = (b, s, float(z))
        else:
            out[name] = (float("nan"), float("nan"), 0.0)
    return out


def lag1_autocorrelation(inc):
    """Pooled lag-1 correlation of increments along each row; returns (rho, n_pairs)."""
    inc = np.asarray(inc, float)
    a, b = inc[:, :-1].ravel(), inc[:, 1:].ravel()
    den = np.sqrt(pairwise_sum(a * a) * pairwise_sum(b * b))
    rho = float(pairwise_sum(a * b) / den) if den > 0 else 0.0
    return rho, a.size


def ks_normal(sample, var, mean=0.0):
    """KS test of sample against N(mean, var); returns (statistic, p-value)."""
    res = _st.kstest(np.asarray(sample, float), "norm", args=(mean, np.sqrt(var)))
    return float(res.statistic), float(res.pvalue)


def refinement_exponent(dts, values):
    """Least-squares slope of log(value) on log(dt)."""
    x = np.log(np.asarray(dts, float))
    y = np.log(np.asarray(values, float))
    return float(np.polyfit(x, y, 1)[0])
