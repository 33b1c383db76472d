"""Local-hidden-variable adversaries for event-ready CHSH games.

The simulator plays the two heralded game variants against strategies that
are local by construction: the code path that produces side A's output
never sees side B's current setting, and the event-ready decision is made
before the settings are drawn. Everything else is allowed and adversarial:

* arbitrary shared memory of the full past record (settings, outputs,
  herald tags) plus opaque strategy-owned state,
* an event-ready box that heralds, skips or picks the game variant based
  on that memory,
* setting bits whose per-trial bias b is drawn from a distribution with
  known mean (the strategy pushes the bias toward its preferred setting),
* "early" setting bits, produced soon enough to be signalled across, in
  which case the trial is scored as an outright win (the worst case).

Every random decision comes from a pre-drawn tape with a fixed layout, so
runs are reproducible and replayable with controlled modifications. The
point of the module is to validate empirically that the winning-probability
bound in `pvalues` dominates every representable strategy.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import rngstream
from .pvalues import BiasParams, beta_win_lemma, pvalue_complete
from .trials import HERALD_NONE, HERALD_PSI_MINUS, HERALD_PSI_PLUS, Trial, TrialSet

BIAS_DISTRIBUTIONS = ("point", "two_point", "uniform")

# Tape column layout, one row of uniform draws per attempt.
_T_HERALD, _T_EARLY_A, _T_EARLY_B, _T_BIAS_A, _T_BIAS_B, _T_SET_A, _T_SET_B, _T_OUT_A, _T_OUT_B = range(9)

_HASH_MULT = 1000003
_HASH_MASK = (1 << 61) - 1


@dataclass(frozen=True)
class RngModel:
    """Imperfect random number generator shared by both sides.

    f is the probability that a setting bit is early; tau is the mean of
    the per-trial bias distribution. Three bias shapes with the same mean
    are available: a point mass at tau, a {0, 1/2} two-point mixture
    (weight 2*tau on the predictable value), and uniform on [0, 2*tau].
    """

    f: float = 0.0
    tau: float = 0.0
    bias_dist: str = "point"

    def __post_init__(self) -> None:
        if not 0.0 <= self.f <= 1.0:
            raise ValueError(f"early probability f must lie in [0, 1], got {self.f}")
        if not 0.0 <= self.tau <= 0.5:
            raise ValueError(f"mean bias tau must lie in [0, 1/2], got {self.tau}")
        if self.bias_dist not in BIAS_DISTRIBUTIONS:
            raise ValueError(f"bias_dist must be one of {BIAS_DISTRIBUTIONS}, got {self.bias_dist!r}")

    def sample_bias(self, u: float) -> float:
        if self.bias_dist == "point":
            return self.tau
        if self.bias_dist == "two_point":
            return 0.5 if u < 2.0 * self.tau else 0.0
        return u * 2.0 * self.tau


@dataclass(frozen=True)
class DeterministicStrategy:
    """Output bit per local setting for both sides; exactly 16 exist."""

    output_a0: int
    output_a1: int
    output_b0: int
    output_b1: int

    def output_a(self, setting: int) -> int:
        return self.output_a1 if setting else self.output_a0

    def output_b(self, setting: int) -> int:
        return self.output_b1 if setting else self.output_b0

    def wins(self, setting_a: int, setting_b: int, tag: int = HERALD_PSI_MINUS) -> bool:
        goal = setting_a & (setting_b ^ 1 if tag == HERALD_PSI_PLUS else setting_b)
        return (self.output_a(setting_a) ^ self.output_b(setting_b)) == goal


def all_deterministic_strategies() -> tuple[DeterministicStrategy, ...]:
    return tuple(DeterministicStrategy(*bits) for bits in itertools.product((0, 1), repeat=4))


def best_deterministic_winprob(tau_a: float, tau_b: float) -> tuple[float, DeterministicStrategy]:
    """Brute-force maximum win probability over the 16 deterministic strategies.

    Setting probabilities are pushed to the boundary the adversary prefers:
    Pr[setting = 0] = 1/2 + tau on each side. The maximum equals
    3/4 + (tau_a + tau_b)/2 - tau_a*tau_b.
    """
    for name, tau in (("tau_a", tau_a), ("tau_b", tau_b)):
        if not 0.0 <= tau <= 0.5:
            raise ValueError(f"{name} must lie in [0, 1/2], got {tau}")
    p_a = (0.5 + tau_a, 0.5 - tau_a)
    p_b = (0.5 + tau_b, 0.5 - tau_b)
    best = -1.0
    argmax = None
    for strategy in all_deterministic_strategies():
        win = 0.0
        for sa in (0, 1):
            for sb in (0, 1):
                if strategy.wins(sa, sb):
                    win += p_a[sa] * p_b[sb]
        if win > best:
            best, argmax = win, strategy
    return best, argmax


class Strategy:
    """Base adversary. Subclasses override outputs and, optionally, memory.

    Locality is structural: output_a never receives setting_b and vice
    versa; herald and the preferred-setting directions are queried before
    the current settings exist. All randomness a strategy needs arrives as
    the uniform draw `u`.
    """

    name = "strategy"

    def reset(self) -> None:
        pass

    def herald(self, u: float) -> int:
        return HERALD_PSI_MINUS

    def preferred_setting_a(self) -> int:
        return 0

    def preferred_setting_b(self) -> int:
        return 0

    def output_a(self, setting: int, tag: int, u: float) -> int:
        raise NotImplementedError

    def output_b(self, setting: int, tag: int, u: float) -> int:
        raise NotImplementedError

    def observe(self, tag: int, setting_a: int, setting_b: int, bit_a: int, bit_b: int, won: bool | None) -> None:
        pass


class FixedOutputs(Strategy):
    """Memoryless deterministic outputs; the classical optimum by default."""

    name = "classical-optimal"

    def __init__(self, table: DeterministicStrategy = DeterministicStrategy(0, 0, 0, 0)) -> None:
        self.table = table

    def output_a(self, setting: int, tag: int, u: float) -> int:
        return self.table.output_a(setting)

    def output_b(self, setting: int, tag: int, u: float) -> int:
        return self.table.output_b(setting)


class CoinFlip(Strategy):
    """Uniformly random outputs on both sides; wins half the time."""

    name = "coin-flip"

    def output_a(self, setting: int, tag: int, u: float) -> int:
        return 1 if u < 0.5 else 0

    def output_b(self, setting: int, tag: int, u: float) -> int:
        return 1 if u < 0.5 else 0


class LossSwitching(Strategy):
    """Cycles to the next deterministic table after every scored loss."""

    name = "loss-switching"

    def __init__(self) -> None:
        self._tables = all_deterministic_strategies()
        self._index = 0

    def reset(self) -> None:
        self._index = 0

    def output_a(self, setting: int, tag: int, u: float) -> int:
        return self._tables[self._index].output_a(setting)

    def output_b(self, setting: int, tag: int, u: float) -> int:
        return self._tables[self._index].output_b(setting)

    def observe(self, tag, setting_a, setting_b, bit_a, bit_b, won) -> None:
        if won is False:
            self._index = (self._index + 1) % len(self._tables)


class StreakKeyed(Strategy):
    """Deterministic table selected by a rolling hash of the full record."""

    name = "streak-keyed"

    def __init__(self) -> None:
        self._tables = all_deterministic_strategies()
        self._digest = 0

    def reset(self) -> None:
        self._digest = 0

    def _table(self) -> DeterministicStrategy:
        return self._tables[self._digest & 15]

    def output_a(self, setting: int, tag: int, u: float) -> int:
        return self._table().output_a(setting)

    def output_b(self, setting: int, tag: int, u: float) -> int:
        return self._table().output_b(setting)

    def observe(self, tag, setting_a, setting_b, bit_a, bit_b, won) -> None:
        item = (tag + 1) * 16 + setting_a * 8 + setting_b * 4 + bit_a * 2 + bit_b
        self._digest = (self._digest * _HASH_MULT + item + 1) & _HASH_MASK


class HeraldGating(Strategy):
    """Event-ready box that mostly heralds only after a win.

    Adapts the number and placement of trials to the past record; outputs
    are the classical optimum. A 25% escape rate keeps runs finite.
    """

    name = "herald-gating"

    def __init__(self) -> None:
        self._last_won = True

    def reset(self) -> None:
        self._last_won = True

    def herald(self, u: float) -> int:
        if self._last_won or u < 0.25:
            return HERALD_PSI_MINUS
        return HERALD_NONE

    def output_a(self, setting: int, tag: int, u: float) -> int:
        return 0

    def output_b(self, setting: int, tag: int, u: float) -> int:
        return 0

    def observe(self, tag, setting_a, setting_b, bit_a, bit_b, won) -> None:
        if won is not None:
            self._last_won = won


class StateMixing(Strategy):
    """Heralds the two game variants in equal proportion, classical outputs."""

    name = "state-mixing"

    def herald(self, u: float) -> int:
        return HERALD_PSI_PLUS if u < 0.5 else HERALD_PSI_MINUS

    def output_a(self, setting: int, tag: int, u: float) -> int:
        return 0

    def output_b(self, setting: int, tag: int, u: float) -> int:
        return 0


CATALOG: dict[str, Callable[[], Strategy]] = {
    "classical-optimal": FixedOutputs,
    "coin-flip": CoinFlip,
    "loss-switching": LossSwitching,
    "streak-keyed": StreakKeyed,
    "herald-gating": HeraldGating,
    "state-mixing": StateMixing,
}

MEMORY_CATALOG = ("classical-optimal", "loss-switching", "streak-keyed", "herald-gating")


def make_strategy(name: str) -> Strategy:
    try:
        return CATALOG[name]()
    except KeyError:
        raise ValueError(f"unknown strategy {name!r}, expected one of {sorted(CATALOG)}") from None


@dataclass(frozen=True)
class SimStats:
    """Bookkeeping from one simulation run."""

    attempts: int
    heralded: int
    wins: int
    early_a: int
    early_b: int
    early_any: int

    @property
    def win_rate(self) -> float:
        return self.wins / self.heralded if self.heralded else math.nan


def _required_output_xor(tag: int, setting_a: int, setting_b: int) -> int:
    """XOR of the two output bits that wins this trial's game."""
    return setting_a & (setting_b ^ 1 if tag == HERALD_PSI_PLUS else setting_b)


def _run_tape(
    strategy: Strategy,
    rng_model: RngModel,
    tape: Sequence[Sequence[float]],
    *,
    stop_after_heralds: int | None = None,
    record: bool = True,
    start_index: int = 1,
    force_setting_b: Mapping[int, int] | None = None,
) -> tuple[list[Trial], SimStats]:
    """Play the tape sequentially. The strategy is NOT reset here.

    `force_setting_b` overrides side B's setting at given 0-based attempt
    positions; used by locality checks to replay a run with one setting
    flipped while keeping the rest of the tape identical.
    """
    f = rng_model.f
    records: list[Trial] = []
    heralded = wins = early_a = early_b = early_any = 0
    attempts = 0
    for pos, row in enumerate(tape):
        attempts += 1
        tag = strategy.herald(row[_T_HERALD])
        is_early_a = row[_T_EARLY_A] < f
        is_early_b = row[_T_EARLY_B] < f
        bias_a = rng_model.sample_bias(row[_T_BIAS_A])
        bias_b = rng_model.sample_bias(row[_T_BIAS_B])
        pref_a = strategy.preferred_setting_a()
        pref_b = strategy.preferred_setting_b()
        setting_a = pref_a if row[_T_SET_A] < 0.5 + bias_a else 1 - pref_a
        setting_b = pref_b if row[_T_SET_B] < 0.5 + bias_b else 1 - pref_b
        if force_setting_b is not None and pos in force_setting_b:
            setting_b = force_setting_b[pos]
        if is_early_a or is_early_b:
            # Early bit: the trial is scored as won outright. Outcomes are
            # synthesized to win the tag's game at the realized settings.
            bit_a = 1 if row[_T_OUT_A] < 0.5 else 0
            bit_b = bit_a ^ _required_output_xor(tag, setting_a, setting_b)
        else:
            bit_a = strategy.output_a(setting_a, tag, row[_T_OUT_A])
            bit_b = strategy.output_b(setting_b, tag, row[_T_OUT_B])
        won: bool | None = None
        if tag != HERALD_NONE:
            heralded += 1
            won = (bit_a ^ bit_b) == _required_output_xor(tag, setting_a, setting_b)
            wins += won
            early_a += is_early_a
            early_b += is_early_b
            early_any += is_early_a or is_early_b
        if record:
            records.append(
                Trial(
                    index=start_index + pos,
                    tag=tag,
                    setting_a=setting_a,
                    setting_b=setting_b,
                    outcome_a=1 - 2 * bit_a,
                    outcome_b=1 - 2 * bit_b,
                )
            )
        strategy.observe(tag, setting_a, setting_b, bit_a, bit_b, won)
        if stop_after_heralds is not None and heralded >= stop_after_heralds:
            break
    stats = SimStats(
        attempts=attempts,
        heralded=heralded,
        wins=wins,
        early_a=early_a,
        early_b=early_b,
        early_any=early_any,
    )
    return records, stats


def simulate_with_stats(
    strategy: Strategy,
    rng_model: RngModel,
    attempts: int,
    seed: int,
    label: str = "",
) -> tuple[TrialSet, SimStats]:
    """Run `attempts` sequential attempts and return trials plus counters."""
    if attempts < 1:
        raise ValueError(f"attempts must be >= 1, got {attempts}")
    tape = rngstream.stream(seed).random((attempts, 9)).tolist()
    strategy.reset()
    records, stats = _run_tape(strategy, rng_model, tape)
    trialset = TrialSet(
        trials=tuple(records),
        label=label or strategy.name,
        seed=seed,
        generator=f"lhv/{strategy.name}/{rngstream.GENERATOR_NAME}",
    )
    return trialset, stats


def simulate(
    strategy: Strategy,
    rng_model: RngModel,
    attempts: int,
    seed: int,
    label: str = "",
) -> TrialSet:
    """Sequential adversary simulation; see simulate_with_stats."""
    return simulate_with_stats(strategy, rng_model, attempts, seed, label=label)[0]


def replay(
    strategy: Strategy,
    rng_model: RngModel,
    attempts: int,
    seed: int,
    force_setting_b: Mapping[int, int] | None = None,
) -> list[Trial]:
    """Re-run the exact tape of simulate(), optionally forcing B settings."""
    tape = rngstream.stream(seed).random((attempts, 9)).tolist()
    strategy.reset()
    records, _ = _run_tape(strategy, rng_model, tape, force_setting_b=force_setting_b)
    return records


def play_heralded(
    strategy: Strategy,
    rng_model: RngModel,
    n_heralds: int,
    rng: np.random.Generator,
    max_attempt_factor: int = 1000,
) -> SimStats:
    """Run attempts until `n_heralds` trials are scored; counters only.

    The tape is generated in blocks from `rng`, so adaptive heralding can
    stretch a run without a preallocated bound.
    """
    if n_heralds < 1:
        raise ValueError(f"n_heralds must be >= 1, got {n_heralds}")
    strategy.reset()
    block = max(64, int(1.5 * n_heralds))
    totals = [0, 0, 0, 0, 0, 0]
    remaining = n_heralds
    attempts_budget = max_attempt_factor * n_heralds
    while remaining > 0:
        if totals[0] >= attempts_budget:
            raise RuntimeError(
                f"strategy {strategy.name!r} produced {totals[1]} heralds in {totals[0]} attempts; giving up"
            )
        tape = rng.random((block, 9)).tolist()
        _, stats = _run_tape(strategy, rng_model, tape, stop_after_heralds=remaining, record=False)
        totals[0] += stats.attempts
        totals[1] += stats.heralded
        totals[2] += stats.wins
        totals[3] += stats.early_a
        totals[4] += stats.early_b
        totals[5] += stats.early_any
        remaining = n_heralds - totals[1]
    return SimStats(*totals)


def empirical_win_rate(
    strategy: Strategy,
    rng_model: RngModel,
    n_heralds: int,
    seed: int,
) -> tuple[float, int]:
    """Win fraction over exactly n_heralds scored trials."""
    stats = play_heralded(strategy, rng_model, n_heralds, rngstream.stream(seed))
    return stats.win_rate, stats.heralded


def simulate_reference(
    win_prob_per_state: Mapping[int, float],
    herald_rate: float,
    attempts: int,
    seed: int,
    psi_plus_share: float = 0.5,
    label: str = "reference",
) -> TrialSet:
    """I.i.d. synthetic experiment with uniform settings.

    Each attempt heralds with probability `herald_rate`; heralded attempts
    split between the two states per `psi_plus_share` (restricted to the
    states present in `win_prob_per_state`). The trial then wins its game
    with the state's probability, and outcomes consistent with the win or
    loss are synthesized. Not an adversary: this is the stand-in for
    entangled-state statistics.
    """
    if attempts < 1:
        raise ValueError(f"attempts must be >= 1, got {attempts}")
    if not 0.0 < herald_rate <= 1.0:
        raise ValueError(f"herald_rate must lie in (0, 1], got {herald_rate}")
    if not win_prob_per_state:
        raise ValueError("win_prob_per_state must name at least one state")
    for state, w in win_prob_per_state.items():
        if state not in (HERALD_PSI_MINUS, HERALD_PSI_PLUS):
            raise ValueError(f"states must be -1 or +1, got {state!r}")
        if not 0.0 <= w <= 1.0:
            raise ValueError(f"win probability must lie in [0, 1], got {w}")
    if not 0.0 <= psi_plus_share <= 1.0:
        raise ValueError(f"psi_plus_share must lie in [0, 1], got {psi_plus_share}")
    if HERALD_PSI_PLUS not in win_prob_per_state:
        psi_plus_share = 0.0
    elif HERALD_PSI_MINUS not in win_prob_per_state:
        psi_plus_share = 1.0

    rng = rngstream.stream(seed)
    u = rng.random((attempts, 7))
    heralded = u[:, 0] < herald_rate
    tags = np.where(heralded, np.where(u[:, 1] < psi_plus_share, HERALD_PSI_PLUS, HERALD_PSI_MINUS), 0)
    settings_a = (u[:, 2] < 0.5).astype(int)
    settings_b = (u[:, 3] < 0.5).astype(int)
    win_prob = np.zeros(attempts)
    for state, w in win_prob_per_state.items():
        win_prob[tags == state] = w
    wins = u[:, 4] < win_prob
    out_a = np.where(u[:, 5] < 0.5, 1, -1)

    trials = []
    for i in range(attempts):
        tag = int(tags[i])
        sa, sb = int(settings_a[i]), int(settings_b[i])
        oa = int(out_a[i])
        if tag == 0:
            ob = 1 if u[i, 6] < 0.5 else -1
        else:
            required = 1 - 2 * _required_output_xor(tag, sa, sb)
            ob = required * oa if wins[i] else -required * oa
        trials.append(Trial(index=i + 1, tag=tag, setting_a=sa, setting_b=sb, outcome_a=oa, outcome_b=int(ob)))
    return TrialSet(
        trials=tuple(trials),
        label=label,
        seed=seed,
        generator=f"reference/{rngstream.GENERATOR_NAME}",
    )


@dataclass(frozen=True)
class AdversaryReport:
    """False-rejection audit of the complete analysis against the catalog."""

    n: int
    alpha: float
    beta: float
    runs: int
    rejections: int
    by_strategy: Mapping[str, tuple[int, int]]

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.runs

    @property
    def mc_error(self) -> float:
        rate = self.rejection_rate
        return math.sqrt(rate * (1.0 - rate) / self.runs)

    def strategy_rate(self, name: str) -> float:
        rejected, runs = self.by_strategy[name]
        return rejected / runs

    def to_dict(self) -> dict[str, object]:
        return {
            "n": self.n,
            "alpha": self.alpha,
            "beta": self.beta,
            "runs": self.runs,
            "rejection_rate": self.rejection_rate,
            "mc_error": self.mc_error,
            "by_strategy": {
                name: {"rejections": r, "runs": m, "rate": r / m}
                for name, (r, m) in self.by_strategy.items()
            },
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def adversary_suite(
    n: int,
    runs: int,
    alpha: float,
    seed: int,
    f: float = 0.0,
    tau: float = 0.0,
    bias_dist: str = "point",
    strategies: Sequence[str] | None = None,
) -> AdversaryReport:
    """False-rejection rate of pvalue_complete over adaptive LHV runs.

    Splits `runs` across the strategy catalog; every run plays until n
    trials are scored and rejects when pvalue_complete(n, k, beta) <= alpha
    with beta the lemma-form bound at (f, tau). Validity contract: the rate
    stays at or below alpha up to Monte Carlo error, for each strategy and
    pooled.
    """
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    names = tuple(strategies) if strategies is not None else MEMORY_CATALOG
    if not names:
        raise ValueError("need at least one strategy")
    rng_model = RngModel(f=f, tau=tau, bias_dist=bias_dist)
    beta = beta_win_lemma(BiasParams(f=f, tau=tau))
    p_table = [pvalue_complete(n, k, beta) for k in range(n + 1)]

    per_strategy = {name: [0, 0] for name in names}
    run_index = 0
    for chunk, name in enumerate(names):
        quota = runs // len(names) + (1 if chunk < runs % len(names) else 0)
        strategy = make_strategy(name)
        for _ in range(quota):
            stats = play_heralded(strategy, rng_model, n, rngstream.stream(seed, run_index))
            run_index += 1
            per_strategy[name][1] += 1
            if p_table[stats.wins] <= alpha:
                per_strategy[name][0] += 1
    total_reject = sum(r for r, _ in per_strategy.values())
    return AdversaryReport(
        n=n,
        alpha=alpha,
        beta=beta,
        runs=runs,
        rejections=total_reject,
        by_strategy={name: (r, m) for name, (r, m) in per_strategy.items() if m > 0},
    )
