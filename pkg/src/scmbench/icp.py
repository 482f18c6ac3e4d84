"""Invariant causal prediction baseline over exhaustive candidate subsets.

For every subset S of candidates, x_0 is regressed on S over the pooled rows
(stabilized normal equations) and the residuals are tested for distributional
invariance across environments. The estimate is the intersection of all
accepted subsets, which is empty when nothing is accepted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import stats

from .distmetrics import EmpiricalSample, ksample_equality_test
from .scm import SampleBatch

_RIDGE = 1e-10
_TESTS = ("mean-variance", "energy-permutation")


class EnumerationBudgetError(RuntimeError):
    """The subset count exceeds the configured budget."""


@dataclass(frozen=True)
class IcpConfig:
    alpha: float = 0.05
    max_subset_size: int | None = None
    test: str = "mean-variance"
    num_permutations: int = 199
    enumeration_budget: int = 4096

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.max_subset_size is not None and self.max_subset_size < 0:
            raise ValueError("max_subset_size must be >= 0 when given")
        if self.test not in _TESTS:
            raise ValueError(f"test must be one of {_TESTS}")
        if self.num_permutations < 99:
            raise ValueError("num_permutations must be >= 99")
        if self.enumeration_budget < 1:
            raise ValueError("enumeration_budget must be >= 1")


@dataclass(frozen=True, eq=False)
class IcpResult:
    estimated_set: frozenset[int]
    accepted_subsets: tuple[frozenset[int], ...]
    p_values: dict[frozenset[int], float]


def ols_fit(features: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Least squares with intercept via (A^T A + 1e-10 I) beta = A^T y.

    Returns the coefficient vector with the intercept last. Raises
    numpy.linalg.LinAlgError when rank deficiency defeats the stabilizer.
    """
    if features.ndim != 2 or target.ndim != 1 or features.shape[0] != target.size:
        raise ValueError("features must be (n, s) and target (n,)")
    a = np.hstack([features, np.ones((features.shape[0], 1))])
    gram = a.T @ a + _RIDGE * np.eye(a.shape[1])
    beta = np.linalg.solve(gram, a.T @ target)
    if not np.all(np.isfinite(beta)):
        raise np.linalg.LinAlgError("rank deficiency beyond the stabilizer")
    return beta

def _mean_variance_pvalue(sizes: np.ndarray, means: np.ndarray,
                          variances: np.ndarray) -> float:
    """Bonferroni-combined Welch-t and variance-ratio tests, each environment
    against the pooled complement: per-env p = 2*min(p_mean, p_var), overall
    p = k * min over environments, clipped to 1."""
    k = sizes.size
    n = sizes.astype(float)
    ss = variances * (n - 1.0)
    sums = means * n
    sumsq = ss + n * means ** 2
    comp_n = n.sum() - n
    comp_mean = (sums.sum() - sums) / comp_n
    comp_ss = (sumsq.sum() - sumsq) - comp_n * comp_mean ** 2
    comp_var = np.maximum(comp_ss, 0.0) / (comp_n - 1.0)

    # variances this small are treated as degenerate point masses
    zero_own = variances <= 1e-12 * (1.0 + means ** 2)
    zero_comp = comp_var <= 1e-12 * (1.0 + comp_mean ** 2)

    se2 = variances / n + comp_var / comp_n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (means - comp_mean) / np.sqrt(se2)
        df = se2 ** 2 / ((variances / n) ** 2 / (n - 1.0)
                         + (comp_var / comp_n) ** 2 / (comp_n - 1.0))
        p_mean = 2.0 * stats.t.sf(np.abs(t), df)
        f_ratio = variances / comp_var
        f_cdf = stats.f.cdf(f_ratio, n - 1.0, comp_n - 1.0)
    p_var = 2.0 * np.minimum(f_cdf, 1.0 - f_cdf)

    both_const = zero_own & zero_comp
    means_match = np.abs(means - comp_mean) <= 1e-9 * (1.0 + np.abs(means) + np.abs(comp_mean))
    p_mean = np.where(both_const, np.where(means_match, 1.0, 0.0), p_mean)
    p_var = np.where(both_const, 1.0, p_var)
    p_var = np.where(zero_own ^ zero_comp, 0.0, p_var)

    per_env = 2.0 * np.minimum(p_mean, p_var)
    return float(min(1.0, k * per_env.min()))


def invariance_pvalue(residuals_by_env: list[EmpiricalSample], cfg: IcpConfig,
                      rng: np.random.Generator | None = None) -> float:
    """P-value for 'these residual groups share one distribution'."""
    if len(residuals_by_env) < 2:
        raise ValueError("need at least two environments")
    if any(g.values.size < 3 for g in residuals_by_env):
        raise ValueError("each environment needs at least 3 residuals")
    if cfg.test == "mean-variance":
        sizes = np.array([g.values.size for g in residuals_by_env])
        means = np.array([g.values.mean() for g in residuals_by_env])
        variances = np.array([g.values.var(ddof=1) for g in residuals_by_env])
        return _mean_variance_pvalue(sizes, means, variances)
    if rng is None:
        rng = np.random.default_rng(0)
    k = len(residuals_by_env)
    child_rngs = rng.spawn(k)
    p_min = 1.0
    for i, child in enumerate(child_rngs):
        own = residuals_by_env[i]
        rest = EmpiricalSample(
            np.concatenate([g.values for j, g in enumerate(residuals_by_env) if j != i]),
            label=-1)
        _, p = ksample_equality_test([own, rest], cfg.num_permutations, child)
        p_min = min(p_min, p)
    return float(min(1.0, k * p_min))


def _subsets(n_candidates: int, cap: int) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = []
    for size in range(cap + 1):
        out.extend(combinations(range(1, n_candidates + 1), size))
    return out


def icp_identify(batches: list[SampleBatch], cfg: IcpConfig,
                 seed: int = 0) -> IcpResult:
    """Exhaustive subset search; see module docstring.

    The mean-variance test is evaluated from per-environment sufficient
    statistics (Gram matrices), which solves the same stabilized normal
    equations as ols_fit for every subset. The energy-permutation variant
    materializes residuals and derives one rng per subset from
    SeedSequence([seed, subset_index]).
    """
    if len(batches) < 2:
        raise ValueError("need at least two environments")
    widths = {b.data.shape[1] for b in batches}
    if len(widths) != 1:
        raise ValueError("all batches must have the same width")
    n_cand = widths.pop() - 1
    if n_cand < 1:
        raise ValueError("need at least one candidate column")
    if any(b.n < 3 for b in batches):
        raise ValueError("each environment needs at least 3 rows")
    cap = n_cand if cfg.max_subset_size is None else min(cfg.max_subset_size, n_cand)
    total = sum(math.comb(n_cand, s) for s in range(cap + 1))
    if total > cfg.enumeration_budget:
        raise EnumerationBudgetError(
            f"{total} subsets exceed the budget of {cfg.enumeration_budget}")
    subsets = _subsets(n_cand, cap)

    k = len(batches)
    width = n_cand + 1  # candidate columns plus intercept
    gram_env = np.empty((k, width, width))
    xty_env = np.empty((k, width))
    yty_env = np.empty(k)
    sizes = np.array([b.n for b in batches], dtype=np.int64)
    for e, b in enumerate(batches):
        a = np.hstack([b.data[:, 1:], np.ones((b.n, 1))])
        y = b.data[:, 0]
        gram_env[e] = a.T @ a
        xty_env[e] = a.T @ y
        yty_env[e] = y @ y
    gram_all = gram_env.sum(axis=0)
    xty_all = xty_env.sum(axis=0)

    accepted: list[frozenset[int]] = []
    p_values: dict[frozenset[int], float] = {}
    for index, subset in enumerate(subsets):
        rows = [j - 1 for j in subset] + [n_cand]
        gram = gram_all[np.ix_(rows, rows)] + _RIDGE * np.eye(len(rows))
        beta = np.linalg.solve(gram, xty_all[rows])
        if cfg.test == "mean-variance":
            col_sums = gram_env[:, rows, n_cand]
            resid_sum = xty_env[:, n_cand] - col_sums @ beta
            gram_sub = gram_env[:, rows][:, :, rows]
            resid_sumsq = (yty_env - 2.0 * xty_env[:, rows] @ beta
                           + np.einsum("kij,i,j->k", gram_sub, beta, beta))
            means = resid_sum / sizes
            ss = np.maximum(resid_sumsq - sizes * means ** 2, 0.0)
            variances = ss / (sizes - 1.0)
            p = _mean_variance_pvalue(sizes, means, variances)
        else:
            groups = []
            for b in batches:
                resid = b.data[:, 0] - b.data[:, 1:][:, [j - 1 for j in subset]] @ beta[:-1] - beta[-1]
                groups.append(EmpiricalSample(resid, label=b.env))
            rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
            p = invariance_pvalue(groups, cfg, rng)
        key = frozenset(subset)
        p_values[key] = p
        if p > cfg.alpha:
            accepted.append(key)

    if accepted:
        estimate = frozenset.intersection(*accepted)
    else:
        estimate = frozenset()
    return IcpResult(estimated_set=estimate,
                     accepted_subsets=tuple(accepted),
                     p_values=p_values)
