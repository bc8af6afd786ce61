"""Command-line front end.

Exit codes: 0 success, 1 IO or unreadable input, 2 usage error,
3 protocol abort, 4 certificate mismatch.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import bell, device, entropy, protocol
from .bitstore import BITS_MAGIC, BitString, CorruptFileError, parse_bits, read_roundlog, write_bits, write_roundlog

log = logging.getLogger("randamp")

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_ABORT, EXIT_MISMATCH = 0, 1, 2, 3, 4
TABLE1_DEVICES = (("Ourense", 3.35), ("Valencia", 3.11))
CSV_COLUMNS = ("figure", "M_obs", "eps_SV", "n", "mode", "extractor", "eta", "c_Q", "eps_SV_max")


class UsageError(Exception):
    pass


def fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _probability(text: str) -> float:
    v = float(text)
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return v


def _positive_int(text: str) -> int:
    v = int(float(text)) if "e" in text.lower() else int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return v


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("simulator")
    g.add_argument("--visibility", type=_probability, default=1.0, help="GHZ visibility v (Mermin value 4v)")
    g.add_argument("--frac-fixed", type=_probability, default=0.0, help="fraction of rounds from the fixed signalling box")
    g.add_argument("--frac-random", type=_probability, default=0.0, help="fraction of rounds with input-dependent random outputs")
    g.add_argument("--sv-strategy", choices=device.SV_STRATEGIES, default="constant-bias", help="how the simulated SV source biases its bits")
    g.add_argument("--seed", type=int, default=0, help="64-bit RNG seed")


def _add_entropy_flags(p: argparse.ArgumentParser, eps_sv_default: float | None = 0.0) -> None:
    p.add_argument("--eps-sv", type=float, default=eps_sv_default, help="SV bias eps_SV of the input source")
    p.add_argument("--delta-f", type=float, default=None, help="fixed Mermin confidence width (default: Hoeffding width from --eps-est)")
    p.add_argument("--eps-est", type=float, default=1e-7, help="failure probability for the Hoeffding width")
    p.add_argument("--mode", choices=("iid", "mbqa"), default="iid", help="entropy accumulation bound")
    p.add_argument("--v-coeff", type=float, default=None, help="MBQA penalty coefficient v (default: reference calibration)")


def _mode(args) -> entropy.AccumulationMode:
    if args.mode == "iid":
        return entropy.IID
    v = args.v_coeff if args.v_coeff is not None else entropy.reference_v()
    return entropy.AccumulationMode.mbqa(v)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randamp", description="Device-independent randomness and privacy amplification toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample rounds from the simulated GHZ device")
    p.add_argument("--rounds", type=_positive_int, required=True, help="number of rounds")
    p.add_argument("--eps-sv", type=float, default=0.0, help="bias of the simulated input source")
    _add_sim_flags(p)
    p.add_argument("-o", "--output", type=Path, help="round log to write")
    p.add_argument("--sv-out", type=Path, help="also write SV bits drawn after the inputs")
    p.add_argument("--sv-bits", type=_positive_int, help="number of extra SV bits (default 2 per round)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="Mermin value, signalling and certified entropy of a round log")
    p.add_argument("log", type=Path, help="round log file")
    p.add_argument("--assumption", choices=("A", "B", "C"), default="B", help="signalling model")
    _add_entropy_flags(p)
    p.add_argument("--json", type=Path, help="write the JSON report here ('-' for stdout)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("rates", help="rate tables and curves as CSV")
    what = p.add_mutually_exclusive_group(required=True)
    what.add_argument("--table1", action="store_true", help="maximum eps_SV per device, extractor and mode")
    what.add_argument("--fig4", action="store_true", help="efficiency versus number of rounds")
    what.add_argument("--fig5", action="store_true", help="efficiency versus Mermin value")
    what.add_argument("--fig7", action="store_true", help="maximum eps_SV versus Mermin value, both extractors")
    what.add_argument("--fig8", action="store_true", help="device randomness rate c versus Mermin value")
    p.add_argument("--eps-sv", type=float, nargs="+", default=None, help="eps_SV values for curve families")
    p.add_argument("--eps-sec", type=float, default=1e-7, help="security parameter")
    p.add_argument("--delta-f", type=float, default=None, help="override the figure's Delta_f")
    p.add_argument("--v-coeff", type=float, default=None, help="MBQA penalty coefficient v (default: reference calibration)")
    p.add_argument("--m-range", type=float, nargs=3, metavar=("MIN", "MAX", "STEP"), default=None, help="Mermin grid")
    p.add_argument("--n-range", type=float, nargs=3, metavar=("MIN", "MAX", "POINTS"), default=(1e6, 1e9, 13), help="log-spaced round grid for --fig4")
    p.add_argument("-o", "--output", type=Path, help="CSV file (default stdout)")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("run", help="full protocol: collect, verify, extract, certify")
    p.add_argument("--rounds", type=_positive_int, help="number of rounds (default: length of --log)")
    _add_entropy_flags(p)
    p.add_argument("--eps-sec", type=float, default=1e-7, help="security parameter")
    p.add_argument("--threshold", type=float, default=None, help="abort below this Mermin value (default 2 + Delta_f)")
    p.add_argument("--assumption", choices=("A", "B", "C"), default="B", help="signalling model")
    p.add_argument("--extractor", choices=("dodis", "raz"), default="dodis", help="two-source extractor")
    p.add_argument("--flow", choices=("amplify", "privatize"), default="privatize", help="seeded-extension source")
    p.add_argument("--extend", action="store_true", help="append the seeded extractor output")
    p.add_argument("--alpha", type=int, default=2, help="seeded output length as a multiple of the seed")
    p.add_argument("--nonce", default="", help="run nonce; required to differ after an abort")
    p.add_argument("--log", type=Path, help="recorded round log instead of the simulator")
    p.add_argument("--sv-file", type=Path, help="bit file used as the SV source (after the log inputs with --log)")
    p.add_argument("--timestamp", action="store_true", help="record creation time in the certificate")
    _add_sim_flags(p)
    p.add_argument("-o", "--output", type=Path, required=True, help="output bit file; certificate and logs are written alongside")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="recompute and check a certificate")
    p.add_argument("certificate", type=Path, help="certificate JSON")
    p.set_defaults(func=cmd_verify)
    return parser


# -- simulate ---------------------------------------------------------------


def _sim_config(args, eps_sv: float) -> device.SimConfig:
    try:
        return device.SimConfig(
            visibility=args.visibility,
            frac_fixed_signalling=args.frac_fixed,
            frac_random_signalling=args.frac_random,
            rng_seed=args.seed,
            input_source=device.SvSimConfig(eps_sv, args.sv_strategy),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_simulate(args) -> int:
    config = _sim_config(args, args.eps_sv)
    dev, sv = device.make_sources(config)
    rounds = device.collect_rounds(dev, sv, args.rounds)
    table = bell.estimate_behavior(rounds)
    if args.output:
        write_roundlog(args.output, rounds)
    if args.sv_out:
        extra = args.sv_bits or entropy.BITS_PER_ROUND * args.rounds
        write_bits(args.sv_out, BitString.from_bits(sv.draw(extra)))
    print(f"rounds {len(rounds)}")
    print(f"M_obs {fmt(bell.mermin_value(table))} +- {fmt(bell.mermin_sigma(table))}")
    if args.output:
        print(f"wrote {args.output}")
    return EXIT_OK


# -- analyze ----------------------------------------------------------------


def cmd_analyze(args) -> int:
    rounds = read_roundlog(args.log)
    n = len(rounds)
    try:
        table = bell.estimate_behavior(rounds)
    except bell.MissingSettingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    M_obs = bell.mermin_value(table)
    sig = bell.signalling_fraction(table)
    delta_f = args.delta_f if args.delta_f is not None else entropy.confidence_width(n, args.eps_est)
    n_s = sig.n_s_debiased if args.assumption == "A" else sig.n_s
    report = {
        "rounds": n,
        "behavior": table.to_dict(),
        "correlators": bell.correlators(table),
        "M_obs": M_obs,
        "M_sigma": bell.mermin_sigma(table),
        "signalling": sig.to_dict(),
        "Delta_f": delta_f,
    }
    try:
        cert = bell.certify_entropy(M_obs, n, n_s, args.assumption, args.eps_sv, delta_f, _mode(args))
        report["entropy"] = cert.to_dict()
    except bell.SignallingInconsistency as exc:
        cert = None
        report["entropy"] = {"certified": False, "reason": str(exc)}
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    print(f"rounds      {n}")
    print(f"M_obs       {fmt(M_obs)} +- {fmt(bell.mermin_sigma(table))}")
    for key, value in report["correlators"].items():
        print(f"  E[{key}]    {fmt(value)}")
    for pair in sig.pairwise:
        print(f"  s {pair.sender}->{pair.receiver}    {fmt(pair.s)}  (CI {fmt(pair.ci)})")
    print(f"n_s         {fmt(sig.n_s)}  (debiased {fmt(sig.n_s_debiased)})")
    if cert is not None and cert.certified:
        print(f"assumption {args.assumption}: M_hat {fmt(cert.M_hat_ns)}  M_U {fmt(cert.M_U)}  log2_pQ {fmt(cert.log2_pQ)}")
    else:
        print(f"assumption {args.assumption}: not certified ({report['entropy']['reason']})")
    if args.json:
        text = protocol.canonical_json(report)
        if str(args.json) == "-":
            sys.stdout.write(text)
        else:
            args.json.write_text(text)
    return EXIT_OK


# -- rates ------------------------------------------------------------------


def _grid(bounds, default) -> list[float]:
    lo, hi, step = bounds or default
    if step <= 0 or hi < lo:
        raise UsageError("grid needs MIN <= MAX and a positive STEP")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 10) for k in range(count)]


def _n_grid(bounds) -> list[int]:
    lo, hi, points = bounds
    if lo < 1 or hi < lo or points < 1 or int(points) != points:
        raise UsageError("--n-range needs 1 <= MIN <= MAX and an integer POINTS")
    return sorted({int(round(v)) for v in np.logspace(math.log10(lo), math.log10(hi), int(points))})


def _row(figure, M, eps, n, mode, extractor, eta=None, c_Q=None, eps_max=None) -> dict:
    return {
        "figure": figure, "M_obs": M, "eps_SV": eps, "n": n if n is not None else "inf",
        "mode": mode, "extractor": extractor, "eta": eta, "c_Q": c_Q, "eps_SV_max": eps_max,
    }


def rate_rows(args) -> list[dict]:
    eps_sec = args.eps_sec
    mbqa = entropy.AccumulationMode.mbqa(args.v_coeff if args.v_coeff is not None else entropy.reference_v())
    rows = []
    if args.table1:
        df = 1e-3 if args.delta_f is None else args.delta_f
        for _name, M in TABLE1_DEVICES:
            for ext in ("dodis", "raz"):
                rows.append(_row("table1", M, None, None, "IID", ext, eps_max=entropy.max_sv_solver(M, df, ext)))
                for n in (10**7, 10**8):
                    e = entropy.max_sv_solver(M, df, ext, mbqa, n, eps_sec)
                    rows.append(_row("table1", M, None, n, "MBQA", ext, eps_max=e))
    elif args.fig7:
        df = 1e-3 if args.delta_f is None else args.delta_f
        for M in _grid(args.m_range, (2.0, 4.0, 0.05)):
            for ext in ("dodis", "raz"):
                rows.append(_row("fig7", M, None, None, "IID", ext, eps_max=entropy.max_sv_solver(M, df, ext)))
    elif args.fig4:
        df = 1e-2 if args.delta_f is None else args.delta_f
        for eps in args.eps_sv or [0.05]:
            for M in (3.35, 3.8) if args.m_range is None else _grid(args.m_range, None):
                for n in _n_grid(args.n_range):
                    for name, mode in (("IID", entropy.IID), ("MBQA", mbqa)):
                        r = entropy.efficiency(M, eps, n, df, eps_sec, "dodis", mode)
                        rows.append(_row("fig4", M, eps, n, name, "dodis", r.eta, r.c_Q))
    elif args.fig5 or args.fig8:
        figure = "fig5" if args.fig5 else "fig8"
        df_mbqa = 1e-2 if args.delta_f is None else args.delta_f
        for eps in args.eps_sv or [0.0, 0.01, 0.03, 0.05, 0.1]:
            for M in _grid(args.m_range, (2.0, 4.0, 0.05)):
                r = entropy.efficiency(M, eps, None, 0.0, eps_sec, "dodis", entropy.IID)
                rows.append(_row(figure, M, eps, None, "IID", "dodis", r.eta, r.c_Q))
                for n in (10**7, 10**8) if args.fig5 else (10**7,):
                    r = entropy.efficiency(M, eps, n, df_mbqa, eps_sec, "dodis", mbqa)
                    rows.append(_row(figure, M, eps, n, "MBQA", "dodis", r.eta, r.c_Q))
    return rows


def cmd_rates(args) -> int:
    for eps in args.eps_sv or []:
        if not 0 <= eps <= 0.5:
            raise UsageError(f"eps_SV {eps} outside [0, 1/2]")
    if not 0 < args.eps_sec < 1:
        raise UsageError("--eps-sec must lie in (0, 1)")
    if args.delta_f is not None and args.delta_f < 0:
        raise UsageError("--delta-f must be non-negative")
    rows = rate_rows(args)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: fmt(v) for k, v in row.items()})
    finally:
        if args.output:
            out.close()
    return EXIT_OK


# -- run --------------------------------------------------------------------


def _read_sv_file(path: Path) -> np.ndarray:
    """Bitstore file, or any other file read as raw bytes, least significant bit first."""
    data = path.read_bytes()
    if data.startswith(BITS_MAGIC):
        return parse_bits(data).to_bits()
    return np.unpackbits(np.frombuffer(data, np.uint8), bitorder="little")


def _aborted_nonces(out: Path) -> Path:
    return out.with_name(out.name + ".aborted")


def cmd_run(args) -> int:
    if args.extractor == "raz":
        raise UsageError("the Raz extractor is available for rate sizing only (see 'rates'); use --extractor dodis")
    if args.log is not None and args.sv_file is None:
        raise UsageError("--log needs --sv-file for the extractor bits")
    recorded = read_roundlog(args.log) if args.log else None
    n = args.rounds if args.rounds is not None else (len(recorded) if recorded is not None else None)
    if n is None:
        raise UsageError("--rounds is required without --log")
    if recorded is not None and n > len(recorded):
        raise UsageError(f"--rounds {n} exceeds the {len(recorded)} rounds in {args.log}")
    try:
        config = protocol.ProtocolConfig(
            n_rounds=n,
            eps_SV=args.eps_sv,
            eps_sec=args.eps_sec,
            Delta_f=args.delta_f,
            eps_est=args.eps_est,
            M_threshold=args.threshold,
            assumption=args.assumption,
            mode=_mode(args),
            flow=args.flow,
            extension=args.extend,
            alpha=args.alpha,
            nonce=args.nonce,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    registry = _aborted_nonces(args.output)
    if registry.exists() and args.nonce in registry.read_text().splitlines():
        raise UsageError(f"nonce {args.nonce!r} already ended in an abort for {args.output}; pass a fresh --nonce")

    if recorded is not None:
        dev = protocol.RecordedDevice(recorded)
        sv = protocol.ReplaySvSource(recorded.inputs_bits(), _read_sv_file(args.sv_file))
    else:
        sim = _sim_config(args, args.eps_sv)
        dev, sv = device.make_sources(sim)
        if args.sv_file is not None:
            sv = protocol.ReplaySvSource(_read_sv_file(args.sv_file))
    try:
        result = protocol.run_protocol(config, dev, sv)
    except ValueError as exc:
        if "exhausted" in str(exc) or "differ" in str(exc):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        raise
    if isinstance(result, protocol.Abort):
        with registry.open("a") as fh:
            fh.write(args.nonce + "\n")
        print(f"abort: {result.reason} ({result.detail})", file=sys.stderr)
        return EXIT_ABORT
    cert = protocol.write_certificate(result, args.output, timestamp=args.timestamp)
    print(f"M_obs {fmt(cert['M_obs'])}  n_s {fmt(cert['signalling']['n_s'])}  log2_pQ {fmt(cert['log2_pQ'])}")
    print(f"m2 {cert['m2']}  m_S {cert['m_S']}  output bits {cert['output_length']}")
    if cert["extractors"]["seeded_skipped"]:
        print(f"seeded extension skipped: {cert['extractors']['seeded_skipped']}")
    print(f"wrote {args.output} and {protocol.artifact_paths(args.output)['certificate'].name}")
    return EXIT_OK


# -- verify -----------------------------------------------------------------


def cmd_verify(args) -> int:
    outcome = protocol.verify_certificate(args.certificate)
    if outcome.ok:
        print("certificate verified")
    else:
        print(f"mismatch: {outcome.message}", file=sys.stderr)
    return outcome.code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except bell.MissingSettingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, CorruptFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
