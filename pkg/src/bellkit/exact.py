"""Exact and numerically careful distribution primitives.

Log-space implementations of the binomial, hypergeometric and multinomial
pmfs plus the tail probabilities and two-sided exact tests built on them.
Everything in this module is deterministic; Monte Carlo layers live in the
calling modules.

Two-sided tests use the probability ordering ("minlike") convention: the
P-value is the total probability of all outcomes whose pmf does not exceed
the observed outcome's pmf, with a small relative tolerance for ties.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

# Relative tolerance when comparing pmf values for "as extreme or more
# extreme" orderings; the usual exact-test tie convention.
TIE_RELATIVE_EPS = 1e-7

_LOG_TIE = math.log1p(TIE_RELATIVE_EPS)

# Above this n the binomial tail switches from explicit summation to the
# regularized incomplete beta identity.
BINOM_SUM_LIMIT = 10_000


def log_choose(n: int, k: int) -> float:
    """log of the binomial coefficient; -inf outside the support."""
    if k < 0 or k > n:
        return -math.inf
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _sum_exp(log_terms: np.ndarray) -> float:
    """Compensated sum of exp(log_terms), stable against under/overflow."""
    if log_terms.size == 0:
        return 0.0
    m = float(np.max(log_terms))
    if m == -math.inf:
        return 0.0
    acc = math.fsum(np.exp(log_terms - m).tolist())
    return math.exp(m + math.log(acc))


def _check_binom_args(k: int, n: int, p: float) -> None:
    if n < 1:
        raise ValueError(f"need n >= 1, got n={n}")
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"success probability must lie in (0, 1), got {p}")


def binom_logpmf_vector(n: int, p: float) -> np.ndarray:
    """log pmf of Binomial(n, p) over k = 0..n."""
    k = np.arange(n + 1)
    return (
        special.gammaln(n + 1)
        - special.gammaln(k + 1)
        - special.gammaln(n - k + 1)
        + k * math.log(p)
        + (n - k) * math.log1p(-p)
    )


def binom_survival(k: int, n: int, p: float) -> float:
    """Pr[Bin(n, p) >= k].

    Explicit log-space summation with compensated accumulation for
    n <= BINOM_SUM_LIMIT, the regularized incomplete beta identity
    I_p(k, n - k + 1) beyond that.
    """
    _check_binom_args(k, n, p)
    if k <= 0:
        return 1.0
    if n > BINOM_SUM_LIMIT:
        return float(special.betainc(k, n - k + 1, p))
    tail = binom_logpmf_vector(n, p)[k:]
    return min(1.0, _sum_exp(tail))


def binom_two_sided(k: int, n: int, p: float = 0.5) -> float:
    """Exact two-tailed binomial test, probability ordering."""
    _check_binom_args(k, n, p)
    lp = binom_logpmf_vector(n, p)
    keep = lp <= lp[k] + _LOG_TIE
    return min(1.0, _sum_exp(lp[keep]))


def binom_two_sided_table(n: int, p: float = 0.5) -> np.ndarray:
    """Two-tailed binomial P-value for every k = 0..n at once.

    Equivalent to [binom_two_sided(k, n, p) for k in 0..n] but O(n log n):
    sort the pmf, accumulate, and look each k up in the sorted order.
    """
    _check_binom_args(0, n, p)
    lp = binom_logpmf_vector(n, p)
    order = np.argsort(lp, kind="stable")
    cum = np.cumsum(np.exp(lp[order]))
    pos = np.searchsorted(lp[order], lp + _LOG_TIE, side="right")
    return np.minimum(cum[np.maximum(pos, 1) - 1], 1.0)


def fisher_two_sided(n00: int, n01: int, n10: int, n11: int) -> float:
    """Two-sided Fisher exact test on [[n00, n01], [n10, n11]].

    Enumerates the hypergeometric support with the row and column margins
    fixed and sums the probability of every table at most as likely as the
    observed one. A table with an empty row or column admits a single
    configuration, so the P-value is 1.
    """
    cells = (n00, n01, n10, n11)
    if any(int(c) != c or c < 0 for c in cells):
        raise ValueError(f"cell counts must be nonnegative integers, got {cells}")
    r0, r1 = n00 + n01, n10 + n11
    c0 = n00 + n10
    n = r0 + r1
    if r0 == 0 or r1 == 0 or c0 == 0 or c0 == n:
        return 1.0
    a_min = max(0, c0 - r1)
    a_max = min(r0, c0)
    a = np.arange(a_min, a_max + 1)
    lp = (
        special.gammaln(r0 + 1)
        - special.gammaln(a + 1)
        - special.gammaln(r0 - a + 1)
        + special.gammaln(r1 + 1)
        - special.gammaln(c0 - a + 1)
        - special.gammaln(r1 - (c0 - a) + 1)
        - (special.gammaln(n + 1) - special.gammaln(c0 + 1) - special.gammaln(n - c0 + 1))
    )
    lp_obs = lp[n00 - a_min]
    keep = lp <= lp_obs + _LOG_TIE
    return min(1.0, _sum_exp(lp[keep]))


def fisher_two_sided_tables(tables: np.ndarray, max_cells: int = 4_000_000) -> np.ndarray:
    """Vectorized two-sided Fisher exact test.

    `tables` has shape (R, 4) holding [n00, n01, n10, n11] rows that all
    share the same grand total. Rows are processed in chunks so the padded
    support matrix never exceeds `max_cells` entries.
    """
    tables = np.asarray(tables, dtype=np.int64)
    if tables.ndim != 2 or tables.shape[1] != 4:
        raise ValueError("tables must have shape (R, 4)")
    out = np.empty(len(tables))
    width_bound = int(tables.sum(axis=1).max()) + 1 if len(tables) else 1
    chunk = max(1, max_cells // width_bound)
    for lo in range(0, len(tables), chunk):
        out[lo : lo + chunk] = _fisher_chunk(tables[lo : lo + chunk])
    return out


def _fisher_chunk(tables: np.ndarray) -> np.ndarray:
    r0 = tables[:, 0] + tables[:, 1]
    r1 = tables[:, 2] + tables[:, 3]
    c0 = tables[:, 0] + tables[:, 2]
    n = r0 + r1
    a_min = np.maximum(0, c0 - r1)
    a_max = np.minimum(r0, c0)
    width = int((a_max - a_min).max()) + 1
    a = a_min[:, None] + np.arange(width)[None, :]
    valid = a <= a_max[:, None]
    a = np.where(valid, a, 0)
    b = c0[:, None] - a
    lg = special.gammaln
    lp = (
        (lg(r0 + 1) + lg(r1 + 1) - lg(n + 1) + lg(c0 + 1) + lg(n - c0 + 1))[:, None]
        - lg(a + 1)
        - lg(np.where(valid, r0[:, None] - a, 0) + 1)
        - lg(np.where(valid, b, 0) + 1)
        - lg(np.where(valid, r1[:, None] - b, 0) + 1)
    )
    lp = np.where(valid, lp, -np.inf)
    lp_obs = lp[np.arange(len(tables)), tables[:, 0] - a_min]
    keep = lp <= lp_obs[:, None] + _LOG_TIE
    p = np.where(keep, np.exp(lp), 0.0).sum(axis=1)
    degenerate = (r0 == 0) | (r1 == 0) | (c0 == 0) | (c0 == n)
    return np.where(degenerate, 1.0, np.minimum(p, 1.0))


def chi2_survival(x: float, df: int) -> float:
    """Pr[chi-squared with df degrees of freedom >= x].

    Closed forms for df = 1 and even df (all this package needs); the
    regularized upper incomplete gamma otherwise.
    """
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    if x <= 0.0:
        return 1.0
    if df == 1:
        return float(math.erfc(math.sqrt(x / 2.0)))
    if df % 2 == 0:
        m = df // 2
        i = np.arange(m)
        log_terms = -x / 2.0 + i * math.log(x / 2.0) - special.gammaln(i + 1)
        return min(1.0, _sum_exp(log_terms))
    return float(special.gammaincc(df / 2.0, x / 2.0))


def normal_survival(z: float) -> float:
    """Upper tail of the standard normal distribution."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def uniform4_logpmf(counts: np.ndarray, n: int) -> np.ndarray:
    """log pmf of Multinomial(n; 1/4, 1/4, 1/4, 1/4) at `counts` (..., 4)."""
    counts = np.asarray(counts)
    return (
        special.gammaln(n + 1)
        - special.gammaln(counts + 1).sum(axis=-1)
        + n * math.log(0.25)
    )
