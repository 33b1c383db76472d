"""Heralding-window classification of time-tagged photon detections.

Station C watches two detector channels over two excitation rounds per
attempt. An attempt becomes a trial when exactly one in-window click lands
in each round: clicks on different channels herald one Bell state (tag -1),
clicks on the same channel the other (tag +1). Everything else, including
extra in-window clicks, is no herald (tag 0). Out-of-window clicks are
ignored, never reused.

The window sweep re-runs that classification with both channel window
starts offset by a common shift and reports S, trial counts and the
complete-analysis P-value per offset. Swept P-values are LOCAL: scanning
offsets multiplies hypotheses, so they carry no global significance.

A phenomenological stream generator produces synthetic detections:
exponentially decaying emission from the window start, a Gaussian
reflection pulse centred before the window, same-channel afterpulses in
round 2 and uniform dark counts. The experiment-level generator adds
settings and outcomes whose correlations are real only for genuinely
entangled attempts, which is what makes reflection-polluted windows
degrade S.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from . import rngstream
from .pvalues import pvalue_complete
from .trials import (
    CHSH_SIGNS,
    HERALD_NONE,
    HERALD_PSI_MINUS,
    HERALD_PSI_PLUS,
    SETTING_PAIRS,
    Trial,
    TrialSet,
    aggregate,
    correlators,
)

_WINDOW_FIELDS = (
    "start_ch0_ps",
    "start_ch1_ps",
    "len_first_ps",
    "len_second_ch0_ps",
    "len_second_ch1_ps",
    "second_window_offset_ps",
)


@dataclass(frozen=True, slots=True)
class DetectionEvent:
    """One time-tagged click: attempt, channel, picoseconds after sync."""

    attempt_id: int
    channel: int
    time_ps: int

    def __post_init__(self) -> None:
        if self.channel not in (0, 1):
            raise ValueError(f"channel must be 0 or 1, got {self.channel!r}")
        if self.time_ps < 0:
            raise ValueError(f"time_ps must be >= 0, got {self.time_ps}")


@dataclass(frozen=True)
class WindowConfig:
    """Two-round heralding windows, per channel, all times in picoseconds.

    Round 1 on channel c covers [start_c, start_c + len_first); round 2
    starts second_window_offset later and has its own per-channel length.
    The default inter-round separation is synthetic (the generator uses the
    same value, so it cancels in any analysis).
    """

    start_ch0_ps: int = 5_426_000
    start_ch1_ps: int = 5_425_100
    len_first_ps: int = 50_000
    len_second_ch0_ps: int = 4_000
    len_second_ch1_ps: int = 2_500
    second_window_offset_ps: int = 250_000

    def __post_init__(self) -> None:
        for name in ("len_first_ps", "len_second_ch0_ps", "len_second_ch1_ps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")

    def start(self, channel: int) -> int:
        return self.start_ch0_ps if channel == 0 else self.start_ch1_ps

    def len_second(self, channel: int) -> int:
        return self.len_second_ch0_ps if channel == 0 else self.len_second_ch1_ps

    def shifted(self, offset_ps: int, offset_ch1_ps: int | None = None) -> "WindowConfig":
        """Window starts moved by a common offset (or per-channel offsets)."""
        return replace(
            self,
            start_ch0_ps=self.start_ch0_ps + offset_ps,
            start_ch1_ps=self.start_ch1_ps + (offset_ps if offset_ch1_ps is None else offset_ch1_ps),
        )

    def in_first(self, channel: int, time_ps: int) -> bool:
        start = self.start(channel)
        return start <= time_ps < start + self.len_first_ps

    def in_second(self, channel: int, time_ps: int) -> bool:
        start = self.start(channel) + self.second_window_offset_ps
        return start <= time_ps < start + self.len_second(channel)

    def to_dict(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in _WINDOW_FIELDS}

    @classmethod
    def from_dict(cls, data: Mapping[str, int]) -> "WindowConfig":
        unknown = set(data) - set(_WINDOW_FIELDS)
        if unknown:
            raise ValueError(f"unknown window config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True, slots=True)
class AttemptRecord:
    """Settings and outcomes recorded for one attempt, herald-independent."""

    attempt_id: int
    setting_a: int
    setting_b: int
    outcome_a: int
    outcome_b: int


def classify(events: Iterable[DetectionEvent], windows: WindowConfig) -> int:
    """Herald tag for one attempt's clicks (events sorted by time).

    Exactly one in-window click per round: different channels tag -1, the
    same channel +1. Anything else, including extra in-window clicks, is 0.
    """
    first = [e for e in events if windows.in_first(e.channel, e.time_ps)]
    second = [e for e in events if windows.in_second(e.channel, e.time_ps)]
    if len(first) == 1 and len(second) == 1:
        return HERALD_PSI_MINUS if first[0].channel != second[0].channel else HERALD_PSI_PLUS
    return HERALD_NONE


def classify_attempts(events: Iterable[DetectionEvent], windows: WindowConfig) -> dict[int, int]:
    """Herald tag per attempt id; attempts without clicks are absent."""
    by_attempt: dict[int, list[DetectionEvent]] = {}
    for event in events:
        by_attempt.setdefault(event.attempt_id, []).append(event)
    return {
        attempt_id: classify(sorted(clicks, key=lambda e: e.time_ps), windows)
        for attempt_id, clicks in by_attempt.items()
    }


def build_trialset(
    events: Iterable[DetectionEvent],
    attempts: Sequence[AttemptRecord],
    windows: WindowConfig,
    label: str = "",
) -> TrialSet:
    """Merge classification tags with recorded settings and outcomes."""
    tags = classify_attempts(events, windows)
    trials = []
    for i, record in enumerate(sorted(attempts, key=lambda r: r.attempt_id)):
        trials.append(
            Trial(
                index=i + 1,
                tag=tags.get(record.attempt_id, HERALD_NONE),
                setting_a=record.setting_a,
                setting_b=record.setting_b,
                outcome_a=record.outcome_a,
                outcome_b=record.outcome_b,
            )
        )
    return TrialSet(trials=tuple(trials), label=label)


def _chsh_weighted_lenient(trials: TrialSet) -> tuple[float | None, float | None]:
    """Count-weighted S over the states whose four cells are all populated.

    Sweep rows keep their (n, k) even when a state's cells are too sparse
    for an S estimate; S is then reported missing rather than guessed.
    """
    cells = correlators(trials)
    parts = []
    for tag, signs in CHSH_SIGNS.items():
        state_cells = [cells.get((tag, a, b)) for a, b in SETTING_PAIRS]
        if any(c is None for c in state_cells):
            continue
        s = sum(sign * cell.e for sign, cell in zip(signs, state_cells))
        var = sum(cell.stderr**2 for cell in state_cells)
        count = sum(cell.count for cell in state_cells)
        parts.append((s, var, count))
    if not parts:
        return None, None
    total = sum(count for _, _, count in parts)
    s_weighted = sum(s * count for s, _, count in parts) / total
    sigma = math.sqrt(sum(var * (count / total) ** 2 for _, var, count in parts))
    return s_weighted, sigma


@dataclass(frozen=True)
class SweepRow:
    """One window offset's reclassified analysis. P-values are local only."""

    offset_ps: int
    s: float | None
    sigma: float | None
    n: int
    k: int
    p_local: float | None


def sweep(
    events: Sequence[DetectionEvent],
    attempts: Sequence[AttemptRecord],
    windows: WindowConfig,
    offsets_ps: Iterable[int],
    beta: float = 0.75,
) -> list[SweepRow]:
    """Reclassify at each common window-start offset and score the result."""
    rows = []
    for offset in offsets_ps:
        shifted = windows.shifted(int(offset))
        trialset = build_trialset(events, attempts, shifted, label=f"offset {offset} ps")
        k, n = aggregate(trialset)
        s, sigma = _chsh_weighted_lenient(trialset)
        p_local = pvalue_complete(n, k, beta) if n >= 1 else None
        rows.append(SweepRow(offset_ps=int(offset), s=s, sigma=sigma, n=n, k=k, p_local=p_local))
    return rows


@dataclass(frozen=True)
class StreamParams:
    """Knobs of the phenomenological detection generator.

    Rates are per attempt: signal_prob per round (one photon on a random
    channel), reflection_amplitude is the Poisson mean of reflection clicks
    per channel and round, dark_rate the Poisson mean of dark counts per
    channel across the modelled span. The reflection centre is relative to
    the channel's window start and should be negative (before the window).
    """

    decay_ps: float = 12_000.0
    signal_prob: float = 0.5
    reflection_amplitude: float = 0.0
    reflection_center_ps: float = -2_000.0
    reflection_sigma_ps: float = 250.0
    afterpulse_prob: float = 0.0
    afterpulse_decay_ps: float = 1_500.0
    dark_rate: float = 0.0

    def __post_init__(self) -> None:
        for name in ("signal_prob", "afterpulse_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        for name in ("reflection_amplitude", "dark_rate"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.decay_ps <= 0 or self.reflection_sigma_ps <= 0 or self.afterpulse_decay_ps <= 0:
            raise ValueError("time constants must be positive")


def _round_anchor(windows: WindowConfig, channel: int, round_index: int) -> int:
    return windows.start(channel) + (windows.second_window_offset_ps if round_index == 1 else 0)


def _generate_detections(
    params: StreamParams,
    windows: WindowConfig,
    attempts: int,
    rng: np.random.Generator,
    signal_rounds: Sequence[tuple[np.ndarray, np.ndarray]],
) -> list[DetectionEvent]:
    """Common machinery behind the stream and experiment generators.

    `signal_rounds` holds, per round, (attempt indices, channels) of signal
    photons; reflections, afterpulses and dark counts are added here.
    """
    raw: list[tuple[int, int, float]] = []
    for round_index, (idx, channels) in enumerate(signal_rounds):
        anchors = np.array([_round_anchor(windows, int(c), round_index) for c in channels])
        times = anchors + rng.exponential(params.decay_ps, size=len(idx))
        raw.extend(zip(idx.tolist(), channels.tolist(), times.tolist()))

    if params.reflection_amplitude > 0.0:
        for round_index in (0, 1):
            for channel in (0, 1):
                counts = rng.poisson(params.reflection_amplitude, size=attempts)
                hits = np.repeat(np.arange(attempts), counts)
                center = _round_anchor(windows, channel, round_index) + params.reflection_center_ps
                times = rng.normal(center, params.reflection_sigma_ps, size=len(hits))
                raw.extend((int(a), channel, t) for a, t in zip(hits.tolist(), times.tolist()))

    if params.afterpulse_prob > 0.0:
        # Clicks that precede the second round can retrigger their channel.
        second_start = {c: _round_anchor(windows, c, 1) for c in (0, 1)}
        first_clicks = [(a, c) for a, c, t in raw if t < second_start[c]]
        if first_clicks:
            mask = rng.random(len(first_clicks)) < params.afterpulse_prob
            delays = rng.exponential(params.afterpulse_decay_ps, size=len(first_clicks))
            for (a, c), fired, delay in zip(first_clicks, mask.tolist(), delays.tolist()):
                if fired:
                    raw.append((a, c, second_start[c] + delay))

    if params.dark_rate > 0.0:
        lo = min(windows.start_ch0_ps, windows.start_ch1_ps) - 10_000
        hi = (
            max(windows.start_ch0_ps, windows.start_ch1_ps)
            + windows.second_window_offset_ps
            + windows.len_first_ps
        )
        for channel in (0, 1):
            counts = rng.poisson(params.dark_rate, size=attempts)
            hits = np.repeat(np.arange(attempts), counts)
            times = rng.uniform(lo, hi, size=len(hits))
            raw.extend((int(a), channel, t) for a, t in zip(hits.tolist(), times.tolist()))

    raw.sort(key=lambda item: (item[0], item[2]))
    return [
        DetectionEvent(attempt_id=a, channel=c, time_ps=max(0, round(t)))
        for a, c, t in raw
    ]


def synth_stream(
    params: StreamParams,
    windows: WindowConfig,
    attempts: int,
    seed: int,
) -> list[DetectionEvent]:
    """Synthetic detection stream without any entanglement bookkeeping.

    Each round emits a signal photon with probability signal_prob on a
    uniformly random channel, plus the reflection, afterpulse and dark
    processes configured in `params`.
    """
    if attempts < 1:
        raise ValueError(f"attempts must be >= 1, got {attempts}")
    rng = rngstream.stream(seed)
    rounds = []
    for _ in (0, 1):
        emitted = rng.random(attempts) < params.signal_prob
        idx = np.flatnonzero(emitted)
        channels = rng.integers(0, 2, size=len(idx))
        rounds.append((idx, channels))
    return _generate_detections(params, windows, attempts, rng, rounds)


def synth_experiment(
    params: StreamParams,
    windows: WindowConfig,
    attempts: int,
    seed: int,
    entangle_prob: float = 0.3,
    win_prob: float = (2.0 + math.sqrt(2.0)) / 4.0,
) -> tuple[list[DetectionEvent], list[AttemptRecord]]:
    """Detections plus per-attempt settings and outcomes.

    Entangled attempts emit one signal photon in each round; their outcomes
    win the game of the state implied by the two signal channels with
    probability `win_prob`. All other attempts produce uncorrelated
    outcomes, so heralds caused by reflections, afterpulses or dark counts
    carry no violation.
    """
    if attempts < 1:
        raise ValueError(f"attempts must be >= 1, got {attempts}")
    if not 0.0 <= entangle_prob <= 1.0:
        raise ValueError(f"entangle_prob must lie in [0, 1], got {entangle_prob}")
    if not 0.0 <= win_prob <= 1.0:
        raise ValueError(f"win_prob must lie in [0, 1], got {win_prob}")
    rng = rngstream.stream(seed)
    entangled = rng.random(attempts) < entangle_prob
    idx = np.flatnonzero(entangled)
    ch_round1 = rng.integers(0, 2, size=len(idx))
    ch_round2 = rng.integers(0, 2, size=len(idx))
    events = _generate_detections(params, windows, attempts, rng, [(idx, ch_round1), (idx, ch_round2)])

    true_tag = np.zeros(attempts, dtype=int)
    true_tag[idx] = np.where(ch_round1 != ch_round2, HERALD_PSI_MINUS, HERALD_PSI_PLUS)
    u = rng.random((attempts, 5))
    settings_a = (u[:, 0] < 0.5).astype(int)
    settings_b = (u[:, 1] < 0.5).astype(int)
    out_a = np.where(u[:, 2] < 0.5, 1, -1)
    wins = u[:, 3] < win_prob

    records = []
    for i in range(attempts):
        sa, sb, oa = int(settings_a[i]), int(settings_b[i]), int(out_a[i])
        if true_tag[i] == 0:
            ob = 1 if u[i, 4] < 0.5 else -1
        else:
            goal = sa & (sb ^ 1 if true_tag[i] == HERALD_PSI_PLUS else sb)
            required = 1 - 2 * goal
            ob = required * oa if wins[i] else -required * oa
        records.append(
            AttemptRecord(attempt_id=i, setting_a=sa, setting_b=sb, outcome_a=oa, outcome_b=int(ob))
        )
    return events, records


# ---------------------------------------------------------------------------
# File formats


def write_detections(target: str | IO[str], events: Iterable[DetectionEvent]) -> None:
    """CSV with header attempt_id,channel,time_ps."""
    if isinstance(target, str):
        with open(target, "w", encoding="utf-8", newline="") as handle:
            write_detections(handle, events)
        return
    writer = csv.writer(target)
    writer.writerow(["attempt_id", "channel", "time_ps"])
    for e in events:
        writer.writerow([e.attempt_id, e.channel, e.time_ps])


def read_detections(source: str | IO[str]) -> list[DetectionEvent]:
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8", newline="") as handle:
            return read_detections(handle)
    reader = csv.reader(source)
    header = next(reader, None)
    if header != ["attempt_id", "channel", "time_ps"]:
        raise ValueError(f"expected header attempt_id,channel,time_ps, got {header}")
    events = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            events.append(DetectionEvent(int(row[0]), int(row[1]), int(row[2])))
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return events


def write_attempts(target: str | IO[str], attempts: Iterable[AttemptRecord]) -> None:
    """JSON-lines of attempt records."""
    if isinstance(target, str):
        with open(target, "w", encoding="utf-8") as handle:
            write_attempts(handle, attempts)
        return
    for a in attempts:
        target.write(
            json.dumps(
                {
                    "attempt_id": a.attempt_id,
                    "setting_a": a.setting_a,
                    "setting_b": a.setting_b,
                    "outcome_a": a.outcome_a,
                    "outcome_b": a.outcome_b,
                },
                separators=(",", ":"),
            )
        )
        target.write("\n")


def read_attempts(source: str | IO[str]) -> list[AttemptRecord]:
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as handle:
            return read_attempts(handle)
    records = []
    fields = ("attempt_id", "setting_a", "setting_b", "outcome_a", "outcome_b")
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if not all(f in data and isinstance(data[f], int) and not isinstance(data[f], bool) for f in fields):
            raise ValueError(f"line {lineno}: need integer fields {fields}")
        records.append(AttemptRecord(**{f: data[f] for f in fields}))
    return records


def write_sweep_csv(target: str | IO[str], rows: Sequence[SweepRow]) -> None:
    """CSV with header offset_ps,S,sigma,n,k,p_local; missing values empty."""
    if isinstance(target, str):
        with open(target, "w", encoding="utf-8", newline="") as handle:
            write_sweep_csv(handle, rows)
        return
    writer = csv.writer(target)
    writer.writerow(["offset_ps", "S", "sigma", "n", "k", "p_local"])
    for row in rows:
        writer.writerow(
            [
                row.offset_ps,
                "" if row.s is None else repr(row.s),
                "" if row.sigma is None else repr(row.sigma),
                row.n,
                row.k,
                "" if row.p_local is None else repr(row.p_local),
            ]
        )
