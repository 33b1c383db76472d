"""Event-ready CHSH trial data model and scoring.

A trial is one event-ready attempt: a herald tag from the third station,
one binary setting and one +-1 outcome per side. The tag selects which of
the two sign-flipped CHSH games the pair of stations is playing:

* tag -1: win when (-1)^(a*b) * x * y = +1,
* tag +1: win when (-1)^(a*(b XOR 1)) * x * y = +1,
* tag  0: no herald, the attempt is never scored.

Both game variants share the single win indicator
|t| * ((-1)^(a*(b + (t+1)/2)) * x*y + 1) / 2, which this module implements
verbatim. Everything here is a pure function over immutable values.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Mapping

HERALD_PSI_MINUS = -1
HERALD_NONE = 0
HERALD_PSI_PLUS = 1

SETTING_PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1))

# Cell signs of the CHSH combination for each heralded state, in
# SETTING_PAIRS order.
CHSH_SIGNS = {
    HERALD_PSI_MINUS: (1, 1, 1, -1),
    HERALD_PSI_PLUS: (1, 1, -1, 1),
}

_TAGS = (-1, 0, 1)
_BITS = (0, 1)
_SIGNS = (-1, 1)


def _check_domains(tag: int, setting_a: int, setting_b: int, outcome_a: int, outcome_b: int) -> None:
    if tag not in _TAGS:
        raise ValueError(f"herald tag must be -1, 0 or +1, got {tag!r}")
    for name, value in (("setting_a", setting_a), ("setting_b", setting_b)):
        if value not in _BITS or isinstance(value, bool):
            raise ValueError(f"{name} must be the bit 0 or 1, got {value!r}")
    for name, value in (("outcome_a", outcome_a), ("outcome_b", outcome_b)):
        if value not in _SIGNS or isinstance(value, bool):
            raise ValueError(f"{name} must be +1 or -1, got {value!r}")


@dataclass(frozen=True, slots=True)
class Trial:
    """One event-ready attempt.

    Outcomes are recorded even when tag = 0, but such attempts never enter
    any statistic.
    """

    index: int
    tag: int
    setting_a: int
    setting_b: int
    outcome_a: int
    outcome_b: int

    def __post_init__(self) -> None:
        if isinstance(self.index, bool) or int(self.index) != self.index or self.index < 1:
            raise ValueError(f"trial index must be a positive integer, got {self.index!r}")
        _check_domains(self.tag, self.setting_a, self.setting_b, self.outcome_a, self.outcome_b)

    @property
    def heralded(self) -> bool:
        return self.tag != 0


@dataclass(frozen=True)
class TrialSet:
    """Ordered collection of trials with run provenance."""

    trials: tuple[Trial, ...]
    label: str = ""
    seed: int | None = None
    generator: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "trials", tuple(self.trials))
        last = 0
        for trial in self.trials:
            if trial.index <= last:
                raise ValueError(
                    f"trial indices must be strictly increasing, got {trial.index} after {last}"
                )
            last = trial.index

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self) -> Iterator[Trial]:
        return iter(self.trials)

    def heralded_trials(self) -> tuple[Trial, ...]:
        return tuple(t for t in self.trials if t.tag != 0)


def win_indicator(tag: int, setting_a: int, setting_b: int, outcome_a: int, outcome_b: int) -> int:
    """1 if the trial wins its game, 0 otherwise (always 0 when tag = 0)."""
    _check_domains(tag, setting_a, setting_b, outcome_a, outcome_b)
    if tag == 0:
        return 0
    exponent = setting_a * (setting_b + (tag + 1) // 2)
    product = (-1) ** exponent * outcome_a * outcome_b
    return (product + 1) // 2


def aggregate(trials: TrialSet | Iterable[Trial]) -> tuple[int, int]:
    """(k, n): total wins and total heralded trials."""
    k = 0
    n = 0
    for t in trials:
        k += win_indicator(t.tag, t.setting_a, t.setting_b, t.outcome_a, t.outcome_b)
        n += abs(t.tag)
    return k, n


@dataclass(frozen=True)
class CorrelatorCell:
    """Mean outcome product and its binomial-style standard error."""

    e: float
    count: int
    stderr: float


def correlators(trials: TrialSet | Iterable[Trial]) -> dict[tuple[int, int, int], CorrelatorCell]:
    """Per (tag, setting_a, setting_b) cell: E = <x*y>, count, stderr.

    stderr is sqrt((1 - E^2) / count). Cells without trials are absent from
    the result; they are never reported as zero correlation.
    """
    sums: dict[tuple[int, int, int], int] = {}
    counts: dict[tuple[int, int, int], int] = {}
    for t in trials:
        if t.tag == 0:
            continue
        key = (t.tag, t.setting_a, t.setting_b)
        sums[key] = sums.get(key, 0) + t.outcome_a * t.outcome_b
        counts[key] = counts.get(key, 0) + 1
    out = {}
    for key, count in counts.items():
        e = sums[key] / count
        out[key] = CorrelatorCell(e=e, count=count, stderr=math.sqrt(max(0.0, 1.0 - e * e) / count))
    return out


@dataclass(frozen=True)
class ChshEstimate:
    """CHSH S per heralded state plus their event-count-weighted average.

    A state absent from the data has value None and weight zero. sigma is
    the weighted-average uncertainty, propagated from the per-cell standard
    errors in quadrature (independent-cell assumption, no covariances).
    """

    s_psi_minus: float | None
    s_psi_plus: float | None
    s_weighted: float
    sigma: float
    n_psi_minus: int
    n_psi_plus: int


def chsh_s(trials: TrialSet | Iterable[Trial]) -> ChshEstimate:
    """CHSH combination per state and the count-weighted average.

    Raises if a state that has heralded trials is missing one of its four
    setting cells, naming the cell, or if there are no heralded trials.
    """
    cells = correlators(trials)
    per_state: dict[int, tuple[float, float, int]] = {}
    for tag, signs in CHSH_SIGNS.items():
        count = sum(cell.count for (t, _, _), cell in cells.items() if t == tag)
        if count == 0:
            continue
        s = 0.0
        var = 0.0
        for (a, b), sign in zip(SETTING_PAIRS, signs):
            cell = cells.get((tag, a, b))
            if cell is None:
                state = "psi-minus" if tag == HERALD_PSI_MINUS else "psi-plus"
                raise ValueError(f"{state} has heralded trials but no events in setting cell ({a},{b})")
            s += sign * cell.e
            var += cell.stderr**2
        per_state[tag] = (s, var, count)
    if not per_state:
        raise ValueError("no heralded trials: S is undefined")
    total = sum(count for _, _, count in per_state.values())
    s_weighted = sum(s * count for s, _, count in per_state.values()) / total
    sigma = math.sqrt(sum(var * (count / total) ** 2 for _, var, count in per_state.values()))
    minus = per_state.get(HERALD_PSI_MINUS)
    plus = per_state.get(HERALD_PSI_PLUS)
    return ChshEstimate(
        s_psi_minus=minus[0] if minus else None,
        s_psi_plus=plus[0] if plus else None,
        s_weighted=s_weighted,
        sigma=sigma,
        n_psi_minus=minus[2] if minus else 0,
        n_psi_plus=plus[2] if plus else 0,
    )


_JSON_FIELDS = ("index", "tag", "setting_a", "setting_b", "outcome_a", "outcome_b")


def _trial_from_record(record: Mapping[str, object], where: str) -> Trial:
    if not isinstance(record, Mapping):
        raise ValueError(f"{where}: expected a JSON object, got {type(record).__name__}")
    missing = [f for f in _JSON_FIELDS if f not in record]
    if missing:
        raise ValueError(f"{where}: missing fields {missing}")
    values = {}
    for name in _JSON_FIELDS:
        value = record[name]
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{where}: field {name} must be an integer, got {value!r}")
        values[name] = value
    try:
        return Trial(**values)
    except ValueError as exc:
        raise ValueError(f"{where}: {exc}") from None


def read_trials(source: str | IO[str], label: str = "") -> TrialSet:
    """Read a JSON-lines trial file, rejecting out-of-domain records."""
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as handle:
            return read_trials(handle, label=label or source)
    trials = []
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        trials.append(_trial_from_record(record, f"line {lineno}"))
    return TrialSet(trials=tuple(trials), label=label)


def write_trials(target: str | IO[str], trials: TrialSet | Iterable[Trial]) -> None:
    """Write trials as JSON-lines, one record per line."""
    if isinstance(target, str):
        with open(target, "w", encoding="utf-8") as handle:
            write_trials(handle, trials)
        return
    for t in trials:
        target.write(
            json.dumps(
                {
                    "index": t.index,
                    "tag": t.tag,
                    "setting_a": t.setting_a,
                    "setting_b": t.setting_b,
                    "outcome_a": t.outcome_a,
                    "outcome_b": t.outcome_b,
                },
                separators=(",", ":"),
            )
        )
        target.write("\n")
