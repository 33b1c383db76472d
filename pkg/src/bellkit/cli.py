"""Command-line interface tying the analysis modules into reproducible runs.

Every report embeds the tool version, the seed and a hash of the resolved
configuration; identical configuration and seed give byte-identical output
files. Exit codes: 0 success, 1 domain or validation error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from typing import Sequence

from . import __version__, heralding, lhv, pvalues, randomness, settings_audit
from . import trials as trials_mod

COMBINE_CAVEAT = (
    "fisher treats the runs as independent tests; merge pools them into a single "
    "test. These are opposite extremes of how runs may relate, so quote the mode "
    "next to the number."
)

SWEEP_CAVEAT = "swept P-values are local: scanning offsets multiplies hypotheses."


class CliError(ValueError):
    """Usage or domain error surfaced with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise CliError(f"{self.prog}: {message}")


def _config_hash(params: dict[str, object]) -> str:
    canonical = json.dumps(params, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _report_envelope(command: str, params: dict[str, object], payload: dict[str, object]) -> dict[str, object]:
    return {
        "tool": "bellkit",
        "version": __version__,
        "command": command,
        "seed": params.get("seed"),
        "config_hash": _config_hash(params),
        **payload,
    }


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text)
            if not text.endswith("\n"):
                handle.write("\n")


def _emit_json(document: dict[str, object], out: str | None) -> None:
    _emit(json.dumps(document, indent=2, sort_keys=True), out)


def _parse_int_list(text: str, what: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise CliError(f"could not parse {what}: {text!r}") from None


def _parse_range(text: str) -> list[int]:
    """start:stop:step, inclusive of stop when it lands on the grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise CliError(f"expected start:stop:step, got {text!r}")
    try:
        start, stop, step = (int(p) for p in parts)
    except ValueError:
        raise CliError(f"expected integers in start:stop:step, got {text!r}") from None
    if step == 0:
        raise CliError("step must be nonzero")
    values = []
    value = start
    if step > 0:
        while value <= stop:
            values.append(value)
            value += step
    else:
        while value >= stop:
            values.append(value)
            value += step
    if not values:
        raise CliError(f"empty range {text!r}")
    return values


def _parse_float_range(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise CliError(f"expected start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise CliError(f"expected numbers in start:stop:step, got {text!r}") from None
    if step <= 0:
        raise CliError("step must be positive")
    values = []
    k = 0
    while True:
        value = start + k * step
        if value > stop + 1e-12:
            break
        values.append(min(value, stop))
        k += 1
    if not values:
        raise CliError(f"empty range {text!r}")
    return values


# ---------------------------------------------------------------------------
# Subcommand implementations


def _cmd_analyze(args: argparse.Namespace) -> int:
    trialset = trials_mod.read_trials(args.trials)
    if len(trialset) == 0:
        raise CliError(f"{args.trials}: no trials")
    k, n = trials_mod.aggregate(trialset)
    estimate = trials_mod.chsh_s(trialset)
    params = _params(args, ("trials", "f", "tau", "beta_form"))
    bias = pvalues.BiasParams(f=args.f, tau=args.tau)
    beta = pvalues.beta_win(bias, form=args.beta_form)
    cells = {
        f"tag={tag},a={a},b={b}": {"e": cell.e, "count": cell.count, "stderr": cell.stderr}
        for (tag, a, b), cell in sorted(trials_mod.correlators(trialset).items())
    }
    # sigma = 0 means every populated cell is perfectly correlated; the
    # Gaussian analysis is undefined there and reported as missing.
    p_conventional = (
        pvalues.pvalue_conventional(estimate.s_weighted, estimate.sigma) if estimate.sigma > 0 else None
    )
    payload = {
        "n": n,
        "k": k,
        "s_psi_minus": estimate.s_psi_minus,
        "s_psi_plus": estimate.s_psi_plus,
        "s_weighted": estimate.s_weighted,
        "sigma": estimate.sigma,
        "n_psi_minus": estimate.n_psi_minus,
        "n_psi_plus": estimate.n_psi_plus,
        "correlators": cells,
        "beta": beta,
        "p_conventional": p_conventional,
        "p_complete": pvalues.pvalue_complete(n, k, beta),
    }
    _emit_json(_report_envelope("analyze", params, payload), args.out)
    return 0


def _cmd_combine(args: argparse.Namespace) -> int:
    params = _params(args, ("mode", "pvalues", "counts", "f", "tau", "beta_form"))
    if args.mode == "fisher":
        if not args.pvalues:
            raise CliError("--pvalues is required for fisher mode")
        p_list = [float(p) for p in args.pvalues.split(",")]
        if len(p_list) < 2:
            raise CliError("fisher mode needs at least two P-values")
        report = pvalues.PValueReport(
            method="fisher",
            p=pvalues.fisher_combine(p_list),
            inputs={"pvalues": p_list},
            note=COMBINE_CAVEAT,
        )
    else:
        if not args.counts:
            raise CliError("--counts is required for merge mode")
        pairs = []
        for chunk in args.counts.split(","):
            bits = chunk.split(":")
            if len(bits) != 2:
                raise CliError(f"expected n:k pairs in --counts, got {chunk!r}")
            pairs.append((int(bits[0]), int(bits[1])))
        n = sum(p[0] for p in pairs)
        k = sum(p[1] for p in pairs)
        beta = pvalues.beta_win(pvalues.BiasParams(f=args.f, tau=args.tau), form=args.beta_form)
        report = pvalues.PValueReport(
            method="merged",
            p=pvalues.pvalue_complete(n, k, beta),
            inputs={"pairs": pairs, "n": n, "k": k, "beta": beta},
            note=COMBINE_CAVEAT,
        )
    _emit_json(_report_envelope("combine", params, report.to_dict()), args.out)
    return 0


def _cmd_bound(args: argparse.Namespace) -> int:
    params = _params(args, ("f", "tau", "n", "k", "tau_grid", "beta_form"))
    bias = pvalues.BiasParams(f=args.f, tau=args.tau)
    payload: dict[str, object] = {
        "f": args.f,
        "tau": args.tau,
        "beta_lemma": pvalues.beta_win_lemma(bias),
        "beta_expanded": pvalues.beta_win_expanded(bias),
    }
    if args.n is not None and args.k is not None:
        beta = pvalues.beta_win(bias, form=args.beta_form)
        payload["p_complete"] = pvalues.pvalue_complete(args.n, args.k, beta)
        if args.tau_grid:
            curve = pvalues.pvalue_vs_tau_curve(
                args.n, args.k, _parse_float_range(args.tau_grid), f=args.f, form=args.beta_form
            )
            if args.curve_out:
                pvalues.write_curve_csv(args.curve_out, curve)
                payload["curve_file"] = args.curve_out
            else:
                payload["curve"] = [[tau, p] for tau, p in curve]
    _emit_json(_report_envelope("bound", params, payload), args.out)
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    params = _params(args, ("strategy", "attempts", "f", "tau", "bias_dist", "seed", "trials_out"))
    strategy = lhv.make_strategy(args.strategy)
    model = lhv.RngModel(f=args.f, tau=args.tau, bias_dist=args.bias_dist)
    trialset, stats = lhv.simulate_with_stats(strategy, model, args.attempts, args.seed)
    if args.trials_out:
        trials_mod.write_trials(args.trials_out, trialset)
    payload = {
        "strategy": args.strategy,
        "attempts": stats.attempts,
        "heralded": stats.heralded,
        "wins": stats.wins,
        "win_rate": stats.win_rate,
        "early_a": stats.early_a,
        "early_b": stats.early_b,
        "trials_file": args.trials_out,
    }
    _emit_json(_report_envelope("simulate", params, payload), args.out)
    return 0


def _cmd_simulate_reference(args: argparse.Namespace) -> int:
    params = _params(
        args,
        ("win_prob_minus", "win_prob_plus", "herald_rate", "psi_plus_share", "attempts", "seed", "trials_out"),
    )
    win_prob: dict[int, float] = {}
    if args.win_prob_minus is not None:
        win_prob[trials_mod.HERALD_PSI_MINUS] = args.win_prob_minus
    if args.win_prob_plus is not None:
        win_prob[trials_mod.HERALD_PSI_PLUS] = args.win_prob_plus
    if not win_prob:
        raise CliError("need --win-prob-minus and/or --win-prob-plus")
    trialset = lhv.simulate_reference(
        win_prob,
        herald_rate=args.herald_rate,
        attempts=args.attempts,
        seed=args.seed,
        psi_plus_share=args.psi_plus_share,
    )
    if args.trials_out:
        trials_mod.write_trials(args.trials_out, trialset)
    k, n = trials_mod.aggregate(trialset)
    payload = {"attempts": args.attempts, "n": n, "k": k, "trials_file": args.trials_out}
    _emit_json(_report_envelope("simulate-reference", params, payload), args.out)
    return 0


def _cmd_adversary(args: argparse.Namespace) -> int:
    params = _params(args, ("n", "runs", "alpha", "seed", "f", "tau", "bias_dist", "strategies"))
    names = args.strategies.split(",") if args.strategies else None
    report = lhv.adversary_suite(
        n=args.n,
        runs=args.runs,
        alpha=args.alpha,
        seed=args.seed,
        f=args.f,
        tau=args.tau,
        bias_dist=args.bias_dist,
        strategies=names,
    )
    _emit_json(_report_envelope("adversary", params, report.to_dict()), args.out)
    return 0


def _load_windows(path: str | None) -> heralding.WindowConfig:
    if path is None:
        return heralding.WindowConfig()
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    if not isinstance(data, dict):
        raise CliError(f"{path}: window config must be a JSON object")
    try:
        return heralding.WindowConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise CliError(f"{path}: {exc}") from None


def _cmd_herald_synth(args: argparse.Namespace) -> int:
    params = _params(
        args,
        (
            "attempts",
            "seed",
            "mode",
            "window_config",
            "decay_ps",
            "signal_prob",
            "entangle_prob",
            "win_prob",
            "reflection_amplitude",
            "reflection_center_ps",
            "reflection_sigma_ps",
            "afterpulse_prob",
            "dark_rate",
            "detections_out",
            "attempts_out",
        ),
    )
    windows = _load_windows(args.window_config)
    stream_params = heralding.StreamParams(
        decay_ps=args.decay_ps,
        signal_prob=args.signal_prob,
        reflection_amplitude=args.reflection_amplitude,
        reflection_center_ps=args.reflection_center_ps,
        reflection_sigma_ps=args.reflection_sigma_ps,
        afterpulse_prob=args.afterpulse_prob,
        dark_rate=args.dark_rate,
    )
    if args.mode == "experiment":
        events, records = heralding.synth_experiment(
            stream_params,
            windows,
            attempts=args.attempts,
            seed=args.seed,
            entangle_prob=args.entangle_prob,
            win_prob=args.win_prob,
        )
        if not args.attempts_out:
            raise CliError("--attempts-out is required in experiment mode")
        heralding.write_attempts(args.attempts_out, records)
    else:
        events = heralding.synth_stream(stream_params, windows, attempts=args.attempts, seed=args.seed)
    heralding.write_detections(args.detections_out, events)
    payload = {
        "mode": args.mode,
        "attempts": args.attempts,
        "detections": len(events),
        "detections_file": args.detections_out,
        "attempts_file": args.attempts_out,
    }
    _emit_json(_report_envelope("herald synth", params, payload), args.out)
    return 0


def _cmd_herald_sweep(args: argparse.Namespace) -> int:
    params = _params(args, ("detections", "attempts", "window_config", "offsets", "beta", "sweep_out"))
    windows = _load_windows(args.window_config)
    events = heralding.read_detections(args.detections)
    records = heralding.read_attempts(args.attempts)
    offsets = _parse_range(args.offsets)
    rows = heralding.sweep(events, records, windows, offsets, beta=args.beta)
    heralding.write_sweep_csv(args.sweep_out, rows)
    payload = {
        "offsets": offsets,
        "rows": len(rows),
        "sweep_file": args.sweep_out,
        "note": SWEEP_CAVEAT,
    }
    _emit_json(_report_envelope("herald sweep", params, payload), args.out)
    return 0


def _cmd_rng_extract(args: argparse.Namespace) -> int:
    params = _params(args, ("messages", "max_chars", "bits_out", "packed"))
    messages = randomness.read_messages(args.messages)
    stream = randomness.extract_bits(messages, max_chars=args.max_chars, source=args.messages)
    randomness.write_bits(args.bits_out, stream, packed=args.packed)
    payload = {"messages": len(messages), "bits": len(stream), "bits_file": args.bits_out}
    _emit_json(_report_envelope("rng extract", params, payload), args.out)
    return 0


def _cmd_rng_bias(args: argparse.Namespace) -> int:
    params = _params(args, ("bits", "packed", "block8"))
    stream = randomness.read_bits(args.bits, packed=args.packed)
    if args.block8:
        stream = randomness.block8(stream)
    estimate = randomness.estimate_bias(stream)
    payload = {
        "n": estimate.n,
        "bias": estimate.bias,
        "uncertainty": estimate.uncertainty,
        "block8": args.block8,
    }
    _emit_json(_report_envelope("rng bias", params, payload), args.out)
    return 0


def _cmd_rng_combine(args: argparse.Namespace) -> int:
    params = _params(args, ("classical", "quantum", "packed", "bits_out"))
    classical = randomness.read_bits(args.classical, packed=args.packed)
    quantum = randomness.read_bits(args.quantum, packed=args.packed)
    combined = randomness.combine_streams(classical, quantum)
    randomness.write_bits(args.bits_out, combined, packed=args.packed)
    payload = {"bits": len(combined), "bits_file": args.bits_out}
    _emit_json(_report_envelope("rng combine", params, payload), args.out)
    return 0


def _cmd_rng_independence(args: argparse.Namespace) -> int:
    params = _params(args, ("a", "b", "packed", "truncate"))
    stream_a = randomness.read_bits(args.a, packed=args.packed)
    stream_b = randomness.read_bits(args.b, packed=args.packed)
    if args.truncate:
        n = min(len(stream_a), len(stream_b))
        stream_a = randomness.BitStream(bits=stream_a.bits[:n], source=stream_a.source)
        stream_b = randomness.BitStream(bits=stream_b.bits[:n], source=stream_b.source)
    p = randomness.independence_test(stream_a, stream_b)
    payload = {"n": len(stream_a), "p": p}
    _emit_json(_report_envelope("rng independence", params, payload), args.out)
    return 0


def _cmd_audit(args: argparse.Namespace) -> int:
    params = _params(
        args, ("counts", "settings", "label", "reps", "lee_reps", "alpha", "ordering", "seed", "format")
    )
    if (args.counts is None) == (args.settings is None):
        raise CliError("provide exactly one of --counts or --settings")
    if args.settings is not None:
        counts = settings_audit.read_settings_stream(args.settings)
    else:
        values = _parse_int_list(args.counts, "--counts")
        if len(values) != 4:
            raise CliError(f"--counts needs exactly four values, got {len(values)}")
        counts = settings_audit.SettingCounts(*values)
    row = settings_audit.audit_row(
        counts,
        reps=args.reps,
        seed=args.seed,
        label=args.label,
        lee_reps=args.lee_reps,
        alpha=args.alpha,
        ordering=args.ordering,
    )
    if args.format == "csv":
        _emit(f"{settings_audit.AuditRow.CSV_HEADER}\n{row.to_csv_row()}", args.out)
    else:
        _emit_json(_report_envelope("audit", params, row.to_dict()), args.out)
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def _params(args: argparse.Namespace, names: Sequence[str]) -> dict[str, object]:
    params = {name: getattr(args, name, None) for name in names}
    params["seed"] = getattr(args, "seed", None)
    return params


def _add_common(parser: argparse.ArgumentParser, seed: bool = True) -> None:
    parser.add_argument("--out", default=None, help="report file (default stdout)")
    if seed:
        parser.add_argument("--seed", type=int, default=0, help="64-bit unsigned seed (default 0)")


def _iter_parsers(parser: argparse.ArgumentParser):
    yield parser
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for child in action.choices.values():
                yield from _iter_parsers(child)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bellkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"bellkit {__version__}")
    parser.add_argument(
        "--config",
        default=None,
        help="JSON file of parameter defaults; explicit flags override",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="score a trial file: S, k, n, correlators, P-values")
    p.add_argument("trials", help="JSON-lines trial file")
    p.add_argument("--f", type=float, default=0.0, help="early-number probability bound")
    p.add_argument("--tau", type=float, default=0.0, help="mean bias bound")
    p.add_argument("--beta-form", choices=pvalues.BOUND_FORMS, default="lemma")
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("combine", help="combine runs: Fisher's method or merged counts")
    p.add_argument("--mode", choices=("fisher", "merge"), required=True)
    p.add_argument("--pvalues", default=None, help="comma-separated P-values (fisher mode)")
    p.add_argument("--counts", default=None, help="comma-separated n:k pairs (merge mode)")
    p.add_argument("--f", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--beta-form", choices=pvalues.BOUND_FORMS, default="lemma")
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_combine)

    p = sub.add_parser("bound", help="winning-probability bound, optional P-value curve")
    p.add_argument("--f", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--tau-grid", default=None, help="start:stop:step grid of tau values")
    p.add_argument("--beta-form", choices=pvalues.BOUND_FORMS, default="lemma")
    p.add_argument("--curve-out", default=None, help="CSV file for the (tau, p) curve")
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("simulate", help="run a local-hidden-variable strategy")
    p.add_argument("--strategy", choices=sorted(lhv.CATALOG), default="classical-optimal")
    p.add_argument("--attempts", type=int, required=True)
    p.add_argument("--f", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--bias-dist", choices=lhv.BIAS_DISTRIBUTIONS, default="point")
    p.add_argument("--trials-out", default=None, help="JSON-lines trial file to write")
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("simulate-reference", help="i.i.d. synthetic experiment trials")
    p.add_argument("--win-prob-minus", type=float, default=None)
    p.add_argument("--win-prob-plus", type=float, default=None)
    p.add_argument("--herald-rate", type=float, default=1.0)
    p.add_argument("--psi-plus-share", type=float, default=0.5)
    p.add_argument("--attempts", type=int, required=True)
    p.add_argument("--trials-out", default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_simulate_reference)

    p = sub.add_parser("adversary", help="false-rejection audit over the strategy catalog")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--f", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--bias-dist", choices=lhv.BIAS_DISTRIBUTIONS, default="point")
    p.add_argument("--strategies", default=None, help="comma-separated catalog names")
    _add_common(p)
    p.set_defaults(func=_cmd_adversary)

    herald = sub.add_parser("herald", help="heralding-window tools")
    herald_sub = herald.add_subparsers(dest="herald_command", required=True)

    p = herald_sub.add_parser("synth", help="generate synthetic detections")
    p.add_argument("--mode", choices=("stream", "experiment"), default="experiment")
    p.add_argument("--attempts", type=int, required=True)
    p.add_argument("--window-config", default=None, help="JSON window config file")
    p.add_argument("--decay-ps", type=float, default=12_000.0)
    p.add_argument("--signal-prob", type=float, default=0.5)
    p.add_argument("--entangle-prob", type=float, default=0.3)
    p.add_argument("--win-prob", type=float, default=(2.0 + 2.0**0.5) / 4.0)
    p.add_argument("--reflection-amplitude", type=float, default=0.0)
    p.add_argument("--reflection-center-ps", type=float, default=-2_000.0)
    p.add_argument("--reflection-sigma-ps", type=float, default=250.0)
    p.add_argument("--afterpulse-prob", type=float, default=0.0)
    p.add_argument("--dark-rate", type=float, default=0.0)
    p.add_argument("--detections-out", required=True)
    p.add_argument("--attempts-out", default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_herald_synth)

    p = herald_sub.add_parser("sweep", help="window-offset sweep of S, n and local P")
    p.add_argument("--detections", required=True, help="detections CSV")
    p.add_argument("--attempts", required=True, help="attempt records JSON-lines")
    p.add_argument("--window-config", default=None)
    p.add_argument("--offsets", required=True, help="start:stop:step in picoseconds")
    p.add_argument("--beta", type=float, default=0.75)
    p.add_argument("--sweep-out", required=True, help="sweep CSV file")
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_herald_sweep)

    rng = sub.add_parser("rng", help="randomness extraction tools")
    rng_sub = rng.add_subparsers(dest="rng_command", required=True)

    p = rng_sub.add_parser("extract", help="one parity bit per message line")
    p.add_argument("--messages", required=True)
    p.add_argument("--max-chars", type=int, default=randomness.MAX_MESSAGE_CHARS)
    p.add_argument("--bits-out", required=True)
    p.add_argument("--packed", action="store_true", help="write packed binary bits")
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_rng_extract)

    p = rng_sub.add_parser("bias", help="bias of a bit stream")
    p.add_argument("--bits", required=True)
    p.add_argument("--packed", action="store_true")
    p.add_argument("--block8", action="store_true", help="XOR 8-bit blocks first")
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_rng_bias)

    p = rng_sub.add_parser("combine", help="XOR 8 classical bits with 1 quantum bit")
    p.add_argument("--classical", required=True)
    p.add_argument("--quantum", required=True)
    p.add_argument("--packed", action="store_true")
    p.add_argument("--bits-out", required=True)
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_rng_combine)

    p = rng_sub.add_parser("independence", help="Fisher exact independence of two streams")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--packed", action="store_true")
    p.add_argument("--truncate", action="store_true", help="truncate to the shorter stream")
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_rng_independence)

    p = sub.add_parser("audit", help="setting-choice uniformity audit with LEE correction")
    p.add_argument("--counts", default=None, help="n00,n01,n10,n11")
    p.add_argument("--settings", default=None, help="raw settings stream (JSON-lines) to tabulate")
    p.add_argument("--label", default="")
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--lee-reps", type=int, default=10_000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--ordering", choices=settings_audit.ORDERINGS, default="probability")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    _add_common(p)
    p.set_defaults(func=_cmd_audit)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        # Two-phase parse so a config file can supply defaults.
        probe = _Parser(add_help=False)
        probe.add_argument("--config", default=None)
        known, _ = probe.parse_known_args(argv)
        if known.config:
            with open(known.config, "r", encoding="utf-8") as handle:
                config = json.load(handle)
            if not isinstance(config, dict):
                raise CliError(f"{known.config}: config must be a JSON object")
            defaults = {key.replace("-", "_"): value for key, value in config.items()}
            # Subparsers re-apply their own defaults over the namespace, so
            # config values must be installed on every parser in the tree.
            for sub_parser in _iter_parsers(parser):
                sub_parser.set_defaults(**defaults)
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
