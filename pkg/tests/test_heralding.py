"""Window classification, offset sweeps and the synthetic stream generator."""
import io
import math

import numpy as np
import pytest

from bellkit.heralding import (
    AttemptRecord,
    DetectionEvent,
    StreamParams,
    WindowConfig,
    build_trialset,
    classify,
    classify_attempts,
    read_attempts,
    read_detections,
    sweep,
    synth_experiment,
    synth_stream,
    write_attempts,
    write_detections,
    write_sweep_csv,
)
from bellkit.trials import aggregate

WINDOWS = WindowConfig()


def click(attempt, channel, time_ps):
    return DetectionEvent(attempt_id=attempt, channel=channel, time_ps=time_ps)


def first_click(channel, offset=100):
    return click(0, channel, WINDOWS.start(channel) + offset)


def second_click(channel, offset=100):
    return click(0, channel, WINDOWS.start(channel) + WINDOWS.second_window_offset_ps + offset)


class TestClassify:
    def test_different_channels_herald_minus(self):
        assert classify([first_click(0), second_click(1)], WINDOWS) == -1

    def test_same_channel_heralds_plus(self):
        assert classify([first_click(0), second_click(0)], WINDOWS) == +1

    def test_no_clicks(self):
        assert classify([], WINDOWS) == 0

    def test_single_round_only(self):
        assert classify([first_click(0)], WINDOWS) == 0
        assert classify([second_click(1)], WINDOWS) == 0

    def test_extra_in_window_click_vetoes(self):
        events = [first_click(0), first_click(1), second_click(1)]
        assert classify(events, WINDOWS) == 0

    def test_out_of_window_clicks_ignored(self):
        stray_early = click(0, 0, WINDOWS.start_ch0_ps - 500)
        stray_late = click(0, 1, WINDOWS.start_ch1_ps + WINDOWS.len_first_ps + 10_000)
        assert classify([stray_early, first_click(0), second_click(1), stray_late], WINDOWS) == -1

    def test_out_of_window_only(self):
        assert classify([click(0, 0, 100), click(0, 1, 200)], WINDOWS) == 0

    def test_window_boundaries_half_open(self):
        at_start = click(0, 0, WINDOWS.start_ch0_ps)
        at_end = click(0, 0, WINDOWS.start_ch0_ps + WINDOWS.len_first_ps)
        assert classify([at_start, second_click(1)], WINDOWS) == -1
        assert classify([at_end, second_click(1)], WINDOWS) == 0

    def test_per_channel_second_window_lengths(self):
        inside_ch0 = second_click(0, offset=3_500)
        assert classify([first_click(0), inside_ch0], WINDOWS) == +1
        beyond_ch1 = second_click(1, offset=3_500)  # channel 1 second window is 2.5 ns
        assert classify([first_click(0), beyond_ch1], WINDOWS) == 0


class TestWindowConfig:
    def test_dict_roundtrip(self):
        data = WINDOWS.to_dict()
        assert WindowConfig.from_dict(data) == WINDOWS

    def test_rejects_unknown_keys(self):
        with pytest.raises(ValueError):
            WindowConfig.from_dict({"start_ch0_ps": 1, "bogus": 2})

    def test_rejects_nonpositive_lengths(self):
        with pytest.raises(ValueError):
            WindowConfig(len_first_ps=0)

    def test_shift_moves_both_rounds(self):
        shifted = WINDOWS.shifted(-700)
        assert shifted.start_ch0_ps == WINDOWS.start_ch0_ps - 700
        assert shifted.start_ch1_ps == WINDOWS.start_ch1_ps - 700
        t = WINDOWS.start_ch0_ps + WINDOWS.second_window_offset_ps - 700
        assert shifted.in_second(0, t)

    def test_per_channel_shift(self):
        shifted = WINDOWS.shifted(-100, offset_ch1_ps=-300)
        assert shifted.start_ch0_ps == WINDOWS.start_ch0_ps - 100
        assert shifted.start_ch1_ps == WINDOWS.start_ch1_ps - 300


def small_dataset():
    events = [
        first_click(0),
        second_click(1),
        click(1, 0, WINDOWS.start_ch0_ps + 50),
        click(1, 0, WINDOWS.start_ch0_ps + WINDOWS.second_window_offset_ps + 50),
        click(2, 1, WINDOWS.start_ch1_ps - 2_000),  # out of window at offset 0
    ]
    attempts = [
        AttemptRecord(attempt_id=0, setting_a=0, setting_b=0, outcome_a=1, outcome_b=1),
        AttemptRecord(attempt_id=1, setting_a=1, setting_b=1, outcome_a=1, outcome_b=1),
        AttemptRecord(attempt_id=2, setting_a=0, setting_b=1, outcome_a=-1, outcome_b=1),
        AttemptRecord(attempt_id=3, setting_a=1, setting_b=0, outcome_a=-1, outcome_b=-1),
    ]
    return events, attempts


class TestBuildAndSweep:
    def test_build_trialset_tags(self):
        events, attempts = small_dataset()
        ts = build_trialset(events, attempts, WINDOWS)
        assert [t.tag for t in ts.trials] == [-1, 1, 0, 0]

    def test_sweep_offset_zero_matches_direct(self):
        events, attempts = small_dataset()
        rows = sweep(events, attempts, WINDOWS, [0])
        ts = build_trialset(events, attempts, WINDOWS)
        k, n = aggregate(ts)
        assert rows[0].n == n and rows[0].k == k
        ts_tags = [t.tag for t in ts.trials]
        shifted_tags = [t.tag for t in build_trialset(events, attempts, WINDOWS.shifted(0)).trials]
        assert ts_tags == shifted_tags

    def test_sweep_no_extra_events_unchanged(self):
        events, attempts = small_dataset()
        # Earlier window starts that admit no additional clicks (the only
        # out-of-window click sits 2000 ps before the start) change nothing.
        rows = sweep(events, attempts, WINDOWS, [0, -200, -400])
        assert [(r.n, r.k) for r in rows] == [(rows[0].n, rows[0].k)] * 3

    def test_sweep_negative_offset_picks_up_early_click(self):
        events, attempts = small_dataset()
        rows = sweep(events, attempts, WINDOWS, [0, -2_100])
        assert rows[1].n == rows[0].n  # a lone click cannot herald
        assert rows[1].k == rows[0].k

    def test_empty_offset_row(self):
        events = [first_click(0), second_click(1)]
        attempts = [AttemptRecord(0, 0, 0, 1, 1)]
        rows = sweep(events, attempts, WINDOWS, [10_000_000])
        assert rows[0].n == 0 and rows[0].s is None and rows[0].p_local is None

    def test_sweep_rows_p_local_present(self):
        events, attempts = small_dataset()
        row = sweep(events, attempts, WINDOWS, [0])[0]
        assert row.p_local is not None and 0.0 < row.p_local <= 1.0


class TestSynthStream:
    def test_no_reflection_no_dark_all_clicks_from_window_start(self):
        params = StreamParams(signal_prob=0.8)
        events = synth_stream(params, WINDOWS, attempts=2000, seed=1)
        assert events
        for e in events:
            starts = [
                WINDOWS.start(e.channel),
                WINDOWS.start(e.channel) + WINDOWS.second_window_offset_ps,
            ]
            assert any(e.time_ps >= s for s in starts)
            assert e.time_ps >= min(starts)

    def test_reflection_places_clicks_before_window(self):
        params = StreamParams(signal_prob=0.0, reflection_amplitude=1.0)
        events = synth_stream(params, WINDOWS, attempts=500, seed=2)
        assert events
        early = [
            e
            for e in events
            if e.time_ps < WINDOWS.start(e.channel)
            or WINDOWS.start(e.channel) + WINDOWS.len_first_ps
            < e.time_ps
            < WINDOWS.start(e.channel) + WINDOWS.second_window_offset_ps
        ]
        assert len(early) > 0.9 * len(events)

    def test_afterpulse_zero_means_no_retriggers(self):
        params = StreamParams(signal_prob=0.0, reflection_amplitude=0.5, afterpulse_prob=0.0)
        events = synth_stream(params, WINDOWS, attempts=800, seed=3)
        # Without afterpulses, dark counts or signal, nothing lands inside
        # the second windows: reflections sit ~1800 ps before each start.
        assert not any(WINDOWS.in_second(e.channel, e.time_ps) for e in events)

    def test_afterpulses_land_in_second_window_same_channel(self):
        quiet = StreamParams(signal_prob=0.0, reflection_amplitude=0.5, afterpulse_prob=0.0)
        loud = StreamParams(signal_prob=0.0, reflection_amplitude=0.5, afterpulse_prob=0.9)
        base = synth_stream(quiet, WINDOWS, attempts=800, seed=4)
        with_ap = synth_stream(loud, WINDOWS, attempts=800, seed=4)
        extra = len(with_ap) - len(base)
        assert extra > 100
        in_second = [e for e in with_ap if WINDOWS.in_second(e.channel, e.time_ps)]
        assert len(in_second) > 100

    def test_decay_constant_recovered_within_five_percent(self):
        decay = 12_000.0
        params = StreamParams(decay_ps=decay, signal_prob=1.0)
        events = synth_stream(params, WINDOWS, attempts=60_000, seed=5)
        window = WINDOWS.len_first_ps
        dts = [
            e.time_ps - WINDOWS.start(e.channel)
            for e in events
            if 0 <= e.time_ps - WINDOWS.start(e.channel) < window
        ]
        assert len(dts) > 50_000
        observed_mean = float(np.mean(dts))

        def truncated_mean(lam):
            z = window / lam
            return lam - window * math.exp(-z) / (1.0 - math.exp(-z))

        lo, hi = 100.0, 100_000.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if truncated_mean(mid) < observed_mean:
                lo = mid
            else:
                hi = mid
        assert abs(lo - decay) / decay < 0.05

    def test_psi_plus_fraction_rises_with_afterpulse(self):
        def plus_fraction(afterpulse, seed):
            params = StreamParams(signal_prob=0.35, afterpulse_prob=afterpulse)
            events = synth_stream(params, WINDOWS, attempts=6000, seed=seed)
            tags = classify_attempts(events, WINDOWS).values()
            plus = sum(1 for t in tags if t == 1)
            heralded = sum(1 for t in tags if t != 0)
            return plus / heralded

        for seed in (6, 7, 8):
            assert plus_fraction(0.3, seed) > plus_fraction(0.0, seed)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            StreamParams(signal_prob=1.5)
        with pytest.raises(ValueError):
            StreamParams(reflection_amplitude=-1.0)
        with pytest.raises(ValueError):
            StreamParams(decay_ps=0.0)


class TestSynthExperiment:
    def test_entangled_attempts_violate_spurious_do_not(self):
        params = StreamParams(decay_ps=2_500.0)
        events, records = synth_experiment(params, WINDOWS, attempts=20_000, seed=9, entangle_prob=0.5)
        ts = build_trialset(events, records, WINDOWS)
        k, n = aggregate(ts)
        assert n > 3000
        # Quantum-grade win rate on clean heralds.
        assert k / n > 0.8

    def test_reflection_degrades_s_at_deep_negative_offsets(self):
        params = StreamParams(
            decay_ps=2_500.0,
            reflection_amplitude=2.0,
            reflection_center_ps=-1_800.0,
            reflection_sigma_ps=250.0,
            afterpulse_prob=0.02,
            dark_rate=0.005,
        )
        events, records = synth_experiment(params, WINDOWS, attempts=12_000, seed=10, entangle_prob=0.55)
        rows = {r.offset_ps: r for r in sweep(events, records, WINDOWS, [-1500, -800, -400, 0])}
        s0 = rows[0]
        for offset in (-800, -400):
            diff = abs(rows[offset].s - s0.s)
            assert diff <= 2.0 * math.sqrt(rows[offset].sigma ** 2 + s0.sigma ** 2)
        drop = s0.s - rows[-1500].s
        assert drop > 2.0 * math.sqrt(rows[-1500].sigma ** 2 + s0.sigma ** 2)


class TestFileFormats:
    def test_detections_roundtrip(self):
        events = [click(0, 0, 5_426_100), click(1, 1, 5_425_200)]
        buffer = io.StringIO()
        write_detections(buffer, events)
        back = read_detections(io.StringIO(buffer.getvalue()))
        assert back == events

    def test_detections_header_required(self):
        with pytest.raises(ValueError, match="header"):
            read_detections(io.StringIO("1,2,3\n"))

    def test_attempts_roundtrip(self):
        records = [AttemptRecord(0, 0, 1, 1, -1), AttemptRecord(1, 1, 0, -1, -1)]
        buffer = io.StringIO()
        write_attempts(buffer, records)
        back = read_attempts(io.StringIO(buffer.getvalue()))
        assert back == records

    def test_attempts_rejects_bad_fields(self):
        with pytest.raises(ValueError, match="line 1"):
            read_attempts(io.StringIO('{"attempt_id": 0}\n'))

    def test_sweep_csv_missing_values_empty(self):
        rows = sweep([first_click(0), second_click(1)], [AttemptRecord(0, 0, 0, 1, 1)], WINDOWS, [0, 9_999_999])
        buffer = io.StringIO()
        write_sweep_csv(buffer, rows)
        lines = buffer.getvalue().strip().splitlines()
        assert lines[0] == "offset_ps,S,sigma,n,k,p_local"
        assert lines[2].endswith(",0,0,")
