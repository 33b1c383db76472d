"""Uniformity tests on recorded setting choices and their joint significance.

Four null-hypothesis tests run against one 2x2 table of setting-pair
counts:

1. side A's marginal is Binomial(n, 1/2)  (exact two-tailed test),
2. side B's marginal likewise,
3. the four counts are jointly Multinomial(n; 1/4 each)  (Monte Carlo),
4. the sides are independent: Fisher exact below 5000 events, Pearson
   chi-squared above.

Running several tests on one dataset inflates the chance that some local
P-value dips below any fixed threshold (the look-elsewhere effect). The
`lee_joint` Monte Carlo estimates that joint probability under uniform
settings, and `lee_threshold` inverts it: the largest per-test threshold
whose joint rejection probability stays at the target level. Both use
common random numbers so the threshold search bisects a fixed step
function.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np
from scipy import special

from . import exact, rngstream

ORDERINGS = ("probability", "chi2")

# Test 4 convention: Fisher exact below, Pearson chi-squared above.
FISHER_PEARSON_SWITCH = 5000

# Exact enumeration of the joint-uniformity null is used up to this n
# (about 4.7 million tables); larger n falls back to a shared Monte Carlo
# reference sample of the ordering statistic.
_ENUMERATION_LIMIT = 300

_MIN_MC_REPS = 1000

# Float guard when comparing ordering statistics for "at least as extreme".
_STAT_TOL = 1e-9


@dataclass(frozen=True)
class SettingCounts:
    """Counts of the four setting pairs (a, b)."""

    n00: int
    n01: int
    n10: int
    n11: int

    def __post_init__(self) -> None:
        for name in ("n00", "n01", "n10", "n11"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {value!r}")

    @property
    def total(self) -> int:
        return self.n00 + self.n01 + self.n10 + self.n11

    @property
    def marginal_a(self) -> int:
        """Number of events with setting a = 1."""
        return self.n10 + self.n11

    @property
    def marginal_b(self) -> int:
        """Number of events with setting b = 1."""
        return self.n01 + self.n11

    def as_array(self) -> np.ndarray:
        return np.array([self.n00, self.n01, self.n10, self.n11], dtype=np.int64)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "SettingCounts":
        counts = [0, 0, 0, 0]
        for a, b in pairs:
            if a not in (0, 1) or b not in (0, 1):
                raise ValueError(f"settings must be bits, got ({a!r}, {b!r})")
            counts[2 * a + b] += 1
        return cls(*counts)


def read_settings_stream(source) -> SettingCounts:
    """Tabulate a raw settings stream: JSON-lines of setting_a, setting_b."""
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as handle:
            return read_settings_stream(handle)
    pairs = []
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        try:
            a, b = record["setting_a"], record["setting_b"]
        except (TypeError, KeyError):
            raise ValueError(f"line {lineno}: need setting_a and setting_b fields") from None
        if a not in (0, 1) or b not in (0, 1) or isinstance(a, bool) or isinstance(b, bool):
            raise ValueError(f"line {lineno}: settings must be bits, got ({a!r}, {b!r})")
        pairs.append((a, b))
    return SettingCounts.from_pairs(pairs)


@dataclass(frozen=True)
class McPValue:
    """Monte Carlo P-value estimate with its binomial standard error."""

    p: float
    mc_error: float
    reps: int

    @property
    def resolution(self) -> float:
        """Smallest nonzero estimate the run could have produced."""
        return 1.0 / self.reps

    def __str__(self) -> str:
        if self.p == 0.0:
            return f"< {self.resolution:g}"
        return f"{self.p:g} +- {self.mc_error:g}"


def binom_uniform(counts: SettingCounts, side: str) -> float:
    """Exact two-tailed binomial test of one side's marginal against 1/2."""
    n = counts.total
    if n < 1:
        raise ValueError("need at least one event")
    side = side.upper()
    if side == "A":
        m = counts.marginal_a
    elif side == "B":
        m = counts.marginal_b
    else:
        raise ValueError(f"side must be 'A' or 'B', got {side!r}")
    return exact.binom_two_sided(m, n, 0.5)


def _ordering_stat(tables: np.ndarray, n: int, ordering: str) -> np.ndarray:
    """Statistic whose low values mean "more extreme" under the ordering."""
    if ordering == "probability":
        return exact.uniform4_logpmf(tables, n)
    if ordering == "chi2":
        # Negated so that, like log pmf, smaller means more extreme.
        return -((np.asarray(tables) - n / 4.0) ** 2).sum(axis=-1)
    raise ValueError(f"unknown ordering {ordering!r}, expected one of {ORDERINGS}")


def multinomial_uniform_mc(
    counts: SettingCounts,
    reps: int,
    seed: int,
    ordering: str = "probability",
) -> McPValue:
    """Monte Carlo joint-uniformity test of the four setting-pair counts.

    Estimates the probability that a uniform multinomial draw of the same
    size is at least as extreme as the observed table. "Extreme" follows
    the chosen ordering: outcome probability (the exact-test convention,
    default) or the chi-squared distance from equal counts.
    """
    n = counts.total
    if n < 1:
        raise ValueError("need at least one event")
    if reps < _MIN_MC_REPS:
        raise ValueError(f"need at least {_MIN_MC_REPS} Monte Carlo repetitions, got {reps}")
    rng = rngstream.stream(seed)
    draws = rng.multinomial(n, [0.25] * 4, size=reps)
    stat = _ordering_stat(draws, n, ordering)
    stat_obs = float(_ordering_stat(counts.as_array(), n, ordering))
    p = float(np.mean(stat <= stat_obs + _STAT_TOL))
    return McPValue(p=p, mc_error=math.sqrt(p * (1.0 - p) / reps), reps=reps)


def fisher_2x2(counts: SettingCounts) -> float:
    """Two-sided Fisher exact test on [[n00, n01], [n10, n11]]."""
    if counts.total < 1:
        raise ValueError("need at least one event")
    return exact.fisher_two_sided(counts.n00, counts.n01, counts.n10, counts.n11)


def pearson_chi2(counts: SettingCounts) -> float:
    """Pearson chi-squared independence test on the 2x2 table, 1 dof."""
    n = counts.total
    if n < 1:
        raise ValueError("need at least one event")
    r0 = counts.n00 + counts.n01
    r1 = counts.n10 + counts.n11
    c0 = counts.n00 + counts.n10
    c1 = counts.n01 + counts.n11
    if 0 in (r0, r1, c0, c1):
        raise ValueError("zero margin: expected cell counts vanish")
    statistic = 0.0
    observed = ((counts.n00, counts.n01), (counts.n10, counts.n11))
    for i, row in enumerate((r0, r1)):
        for j, col in enumerate((c0, c1)):
            expected = row * col / n
            statistic += (observed[i][j] - expected) ** 2 / expected
    return exact.chi2_survival(statistic, 1)


@lru_cache(maxsize=4)
def _uniform4_null_table(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact null CDF of the log pmf statistic under Multinomial(n; 1/4 each).

    Enumerates every table (c0, c1, c2, c3) with sum n. Returns the sorted
    statistic values and the cumulative probability up to each.
    """
    lg = np.cumsum(np.concatenate([[0.0], np.log(np.arange(1, n + 1))]))  # lg[k] = log k!
    ln_quarter = n * math.log(0.25)
    stats = []
    probs = []
    for c0 in range(n + 1):
        for c1 in range(n - c0 + 1):
            c2 = np.arange(n - c0 - c1 + 1)
            c3 = n - c0 - c1 - c2
            logpmf = lg[n] - (lg[c0] + lg[c1] + lg[c2] + lg[c3]) + ln_quarter
            stats.append(logpmf)
            probs.append(np.exp(logpmf))
    stat = np.concatenate(stats)
    prob = np.concatenate(probs)
    order = np.argsort(stat, kind="stable")
    return stat[order], np.minimum(np.cumsum(prob[order]), 1.0)


def _pearson_many(tables: np.ndarray) -> np.ndarray:
    """Vectorized Pearson chi-squared P-values; degenerate margins give 1."""
    tables = np.asarray(tables, dtype=np.float64)
    r0 = tables[:, 0] + tables[:, 1]
    r1 = tables[:, 2] + tables[:, 3]
    c0 = tables[:, 0] + tables[:, 2]
    c1 = tables[:, 1] + tables[:, 3]
    n = r0 + r1
    degenerate = (r0 == 0) | (r1 == 0) | (c0 == 0) | (c1 == 0)
    statistic = np.zeros(len(tables))
    for column, (row, col) in enumerate(((r0, c0), (r0, c1), (r1, c0), (r1, c1))):
        expected = np.where(degenerate, 1.0, row * col / n)
        statistic += (tables[:, column] - expected) ** 2 / expected
    p = special.erfc(np.sqrt(np.maximum(statistic, 0.0) / 2.0))
    return np.where(degenerate, 1.0, p)


def _lee_local_pvalues(n: int, reps: int, seed: int, ordering: str) -> np.ndarray:
    """(reps, 4) local P-values of the four tests under uniform settings.

    Draws the tables from stream 0 of the seed. The joint-uniformity test
    is scored against the exactly enumerated null for n up to the
    enumeration limit, otherwise against a shared reference sample drawn
    from stream 1.
    """
    if n < 1:
        raise ValueError("need at least one event")
    if reps < _MIN_MC_REPS:
        raise ValueError(f"need at least {_MIN_MC_REPS} Monte Carlo repetitions, got {reps}")
    rng = rngstream.stream(seed, 0)
    draws = rng.multinomial(n, [0.25] * 4, size=reps)

    binom_table = exact.binom_two_sided_table(n, 0.5)
    p_a = binom_table[draws[:, 2] + draws[:, 3]]
    p_b = binom_table[draws[:, 1] + draws[:, 3]]

    stat = _ordering_stat(draws, n, ordering)
    if n <= _ENUMERATION_LIMIT and ordering == "probability":
        stat_sorted, cum = _uniform4_null_table(n)
        pos = np.searchsorted(stat_sorted, stat + _STAT_TOL, side="right")
        p_joint = cum[np.maximum(pos, 1) - 1]
    else:
        ref_rng = rngstream.stream(seed, 1)
        ref_stat = _ordering_stat(ref_rng.multinomial(n, [0.25] * 4, size=max(reps, 100_000)), n, ordering)
        ref_sorted = np.sort(ref_stat)
        p_joint = np.searchsorted(ref_sorted, stat + _STAT_TOL, side="right") / ref_sorted.size

    if n < FISHER_PEARSON_SWITCH:
        p_indep = exact.fisher_two_sided_tables(draws)
    else:
        p_indep = _pearson_many(draws)

    return np.column_stack([p_a, p_b, p_joint, p_indep])


def independent_tests_reference(alpha: float, tests: int = 4) -> float:
    """1 - (1 - alpha)^tests: the joint rejection rate if the tests were
    independent and exactly calibrated.

    An analytic yardstick only; the real tests share one table, so the
    Monte Carlo `lee_joint` value sits below this.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if tests < 1:
        raise ValueError(f"tests must be >= 1, got {tests}")
    return 1.0 - (1.0 - alpha) ** tests


def lee_joint(
    n: int,
    alpha: float,
    reps: int,
    seed: int,
    ordering: str = "probability",
) -> McPValue:
    """Probability that at least one of the four tests yields p < alpha.

    Monte Carlo over uniform settings of size n. A threshold alpha >= 1
    rejects by convention (every P-value is at most 1), so the result is
    exactly 1.
    """
    if alpha >= 1.0:
        return McPValue(p=1.0, mc_error=0.0, reps=reps)
    if alpha < 0.0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    min_p = _lee_local_pvalues(n, reps, seed, ordering).min(axis=1)
    p = float(np.mean(min_p < alpha))
    return McPValue(p=p, mc_error=math.sqrt(p * (1.0 - p) / reps), reps=reps)


def lee_threshold(
    n: int,
    target: float,
    reps: int,
    seed: int,
    ordering: str = "probability",
    iterations: int = 60,
) -> float:
    """Largest per-test threshold with joint rejection probability <= target.

    Bisects the Monte Carlo estimate on a fixed random tape (common random
    numbers), so the objective is one deterministic step function.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError(f"target must lie in [0, 1], got {target}")
    if target >= 1.0:
        return 1.0
    min_p = _lee_local_pvalues(n, reps, seed, ordering).min(axis=1)

    def joint(threshold: float) -> float:
        return float(np.mean(min_p < threshold))

    if joint(1.0) <= target:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if joint(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class AuditRow:
    """One dataset's audit: four local P-values plus the joint significance."""

    label: str
    n: int
    p_rng_a: float
    p_rng_b: float
    p_joint_uniform: McPValue
    independence_test: str
    p_independence: float
    p_threshold: float
    p_joint_lee: McPValue
    alpha: float
    seed: int
    ordering: str

    CSV_HEADER = (
        "label,n,p_rng_a,p_rng_b,p_joint_uniform,independence_test,"
        "p_independence,p_threshold,p_joint_lee"
    )

    def to_csv_row(self) -> str:
        return (
            f"{self.label},{self.n},{self.p_rng_a!r},{self.p_rng_b!r},"
            f"{self.p_joint_uniform.p!r},{self.independence_test},"
            f"{self.p_independence!r},{self.p_threshold!r},{self.p_joint_lee.p!r}"
        )

    def to_dict(self) -> dict[str, object]:
        return {
            "label": self.label,
            "n": self.n,
            "p_rng_a": self.p_rng_a,
            "p_rng_b": self.p_rng_b,
            "p_joint_uniform": self.p_joint_uniform.p,
            "p_joint_uniform_mc_error": self.p_joint_uniform.mc_error,
            "independence_test": self.independence_test,
            "p_independence": self.p_independence,
            "p_threshold": self.p_threshold,
            "p_joint_lee": self.p_joint_lee.p,
            "p_joint_lee_mc_error": self.p_joint_lee.mc_error,
            "alpha": self.alpha,
            "seed": self.seed,
            "ordering": self.ordering,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def audit_row(
    counts: SettingCounts,
    reps: int,
    seed: int,
    label: str = "",
    lee_reps: int | None = None,
    alpha: float = 0.05,
    ordering: str = "probability",
) -> AuditRow:
    """Run all four tests plus the look-elsewhere correction on one table."""
    n = counts.total
    lee_reps = lee_reps if lee_reps is not None else max(_MIN_MC_REPS, reps // 10)
    if n < FISHER_PEARSON_SWITCH:
        test_name, p_indep = "fisher", fisher_2x2(counts)
    else:
        test_name, p_indep = "pearson", pearson_chi2(counts)
    return AuditRow(
        label=label,
        n=n,
        p_rng_a=binom_uniform(counts, "A"),
        p_rng_b=binom_uniform(counts, "B"),
        p_joint_uniform=multinomial_uniform_mc(counts, reps=reps, seed=seed, ordering=ordering),
        independence_test=test_name,
        p_independence=p_indep,
        p_threshold=lee_threshold(n, target=alpha, reps=lee_reps, seed=seed, ordering=ordering),
        p_joint_lee=lee_joint(n, alpha=alpha, reps=lee_reps, seed=seed, ordering=ordering),
        alpha=alpha,
        seed=seed,
        ordering=ordering,
    )
