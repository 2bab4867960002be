"""Command-line front end.

Exit status: 0 on success, 1 on a domain or input error (a JSON error record
goes to stderr), 2 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Optional, Sequence

from . import __version__
from .errors import InputParseError, PreconditionError, SecrecyError
from .report import jsonable, to_units
from . import io as sio


def _common(p: argparse.ArgumentParser, stochastic: bool = False) -> None:
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.add_argument("--units", choices=["nats", "bits"], default="nats")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp for byte-identical reruns")
    p.add_argument("-v", "--verbose", action="count", default=0)
    if stochastic:
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="secbroadcast", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    top = ap.add_subparsers(dest="group", required=True)

    cap = top.add_parser("capacity", help="discrete and Gaussian parallel channels").add_subparsers(
        dest="command", required=True)
    p = cap.add_parser("parallel", help="bounds for a parallel channel set")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--bound", choices=["all", "lower", "upper", "exact", "no-secrecy", "single-codebook", "sum"],
                   default="all")
    p.add_argument("--seed", type=int, default=0, help="restart seed")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    _common(p)
    p = cap.add_parser("gaussian", help="parallel Gaussian channels")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--power", type=float, help="total power (overrides the file)")
    p.add_argument("--which", choices=["both", "common", "sum"], default="both")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    _common(p)

    sim = top.add_parser("simulate", help="code simulation").add_subparsers(dest="command", required=True)
    p = sim.add_parser("wiretap", help="random binning code: error rate and leakage")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--n", type=int, nargs="+")
    p.add_argument("--rate", type=float, nargs="+", help="secrecy rates in nats per use")
    p.add_argument("--bins", type=int, nargs="+", help="bin size per channel (default: design size)")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--decoder", choices=["typical", "ml"], default="ml")
    p.add_argument("--user", type=int, default=0)
    p.add_argument("--sampling", choices=["iid", "typical"])
    _common(p, stochastic=True)

    fad = top.add_parser("fading", help="fast-fading channels").add_subparsers(dest="command", required=True)
    for name, hlp in (("common", "common-message secrecy rate"), ("sum-bounds", "sum-rate upper/lower bounds"),
                      ("figure-bounds", "high-SNR bounds for K = 1..Kmax"),
                      ("collusion", "bounds against colluding eavesdroppers")):
        p = fad.add_parser(name, help=hlp)
        p.add_argument("-i", "--input")
        p.add_argument("--users", type=int, nargs="+")
        p.add_argument("--snr", type=float, help="linear SNR P")
        p.add_argument("--method", choices=["quadrature", "monte_carlo"])
        p.add_argument("--trials", type=int)
        p.add_argument("--format", choices=["json", "csv"], default="json" if name == "common" else "csv")
        if name == "collusion":
            p.add_argument("--max-colluders", type=int, default=40)
            p.add_argument("--zero-tol", type=float, default=1e-3)
        _common(p, stochastic=True)
    return ap


# ------------------------------------------------------------------ handlers

def _parallel(args):
    from .bounds import (AuxiliarySpec, common_capacity_reversely_degraded, common_rate_lower, common_rate_upper,
                         no_secrecy_common_capacity, single_codebook_rate, sum_capacity_reversely_degraded)
    from .channels import ParallelChannelSet

    doc = sio.load_json(args.input, sio.PARALLEL_SCHEMA)
    chans = ParallelChannelSet.from_dict(doc)
    aux = AuxiliarySpec(tuple(doc["aux"]["sizes"]), tuple(doc["aux"]["modes"])) if "aux" in doc else None
    ordered = chans.is_ordered
    ops = {
        "lower": lambda: common_rate_lower(chans, aux, seed=args.seed),
        "upper": lambda: common_rate_upper(chans, seed=args.seed),
        "exact": lambda: common_capacity_reversely_degraded(chans, seed=args.seed),
        "no-secrecy": lambda: no_secrecy_common_capacity(chans, seed=args.seed),
        "single-codebook": lambda: single_codebook_rate(chans, seed=args.seed),
        "sum": lambda: sum_capacity_reversely_degraded(chans, seed=args.seed),
    }
    if args.bound == "all":
        names = ["lower", "upper", "no-secrecy"] + (["exact", "sum"] if ordered else [])
        if math.prod(c.n_in for c in chans.channels) <= 64:
            names.append("single-codebook")
    else:
        names = [args.bound]
    results = {n: ops[n]() for n in names}
    return {"input": doc, "bound": args.bound, "seed": args.seed}, results, None


def _gaussian(args):
    from .gaussian import GaussianParallelSpec, gaussian_common_capacity, gaussian_sum_capacity

    doc = sio.load_json(args.input, sio.GAUSSIAN_SCHEMA)
    if args.power is not None:
        doc["P"] = args.power
    if "P" not in doc:
        raise PreconditionError("total power missing: give P in the file or --power")
    spec = GaussianParallelSpec.from_dict(doc)
    results = {}
    if args.which in ("both", "common"):
        results["common"] = gaussian_common_capacity(spec)
    if args.which in ("both", "sum"):
        results["sum"] = gaussian_sum_capacity(spec)
    return {"input": spec.to_dict(), "which": args.which}, results, None


def _report_rows(results: dict, units: str):
    header = ["name", "bound_kind", f"value_{units}"]
    rows = [[k, r.bound_kind, to_units(r.value, units)] for k, r in results.items()]
    return header, rows


def _wiretap(args):
    from .channels import Dmc
    from .wiretap import SubChannel, WiretapCodeSpec, build_codebooks, exact_equivocation, simulate

    doc = sio.load_json(args.input, sio.WIRETAP_SCHEMA)
    seed = args.seed if args.seed is not None else doc.get("seed")
    if seed is None:
        raise PreconditionError("simulate wiretap is stochastic: a seed is mandatory (--seed or 'seed' in file)")
    chans = tuple(SubChannel(tuple(Dmc(r) for r in c["receivers"]), Dmc(c["eavesdropper"]), c["input_law"])
                  for c in doc["channels"])
    ns = args.n or ([doc["n"]] if "n" in doc else None)
    rates = args.rate or ([doc["rate"]] if "rate" in doc else None)
    if not ns or not rates:
        raise PreconditionError("block length and rate are required (--n/--rate or in the file)")
    bins = tuple(args.bins) if args.bins else (tuple(doc["bin_sizes"]) if "bin_sizes" in doc else None)
    base = dict(channels=chans, bin_rates=tuple(doc["bin_rates"]) if "bin_rates" in doc else None,
                bin_sizes=bins, eps_f=doc.get("eps_f", 0.0), seed=seed,
                sampling=args.sampling or doc.get("sampling", "iid"), epsilon=doc.get("epsilon", 0.1))
    M = len(chans)
    u = args.units
    header = (["n", "rate", "realized_rate", "messages"] + [f"bins_{j}" for j in range(M)]
              + ["trials", "errors", "error_rate", "error_stderr"]
              + [f"leakage_{j}_{u}" for j in range(M)] + [f"joint_leakage_{u}", f"joint_equivocation_{u}"])
    rows = []
    for n in ns:
        for R in rates:
            spec = WiretapCodeSpec(n=n, rate=R, **base)
            books = build_codebooks(spec)
            sim = simulate(books, args.trials, user=args.user, mode=args.decoder, workers=args.workers)
            eq = exact_equivocation(books)
            rows.append([n, R, books.realized_rate, books.message_count] + books.bin_counts
                        + [sim.trials, sim.errors, sim.error_rate, sim.stderr]
                        + [to_units(x, u) for x in eq.per_channel_leakage]
                        + [to_units(eq.joint_leakage, u), to_units(eq.joint_equivocation, u)])
    config = {"input": doc, "n": ns, "rate": rates, "bins": list(bins) if bins else None, "trials": args.trials,
              "seed": seed, "decoder": args.decoder, "user": args.user, "sampling": base["sampling"],
              "units": u}
    return config, header, rows


def _fading_spec(args, K: Optional[int] = None):
    from .fading import FadingSpec

    doc = sio.load_json(args.input, sio.FADING_SCHEMA) if args.input else {}
    if K is not None:
        doc["K"] = K
        if "mu" in doc and len(doc["mu"]) != K:
            doc.pop("mu")
    if args.snr is not None:
        doc["P"] = args.snr
    if args.method:
        doc["method"] = args.method
    if args.trials:
        doc["trials"] = args.trials
    if args.seed is not None:
        doc["seed"] = args.seed
    doc.setdefault("K", 1)
    if "P" not in doc:
        raise PreconditionError("SNR missing: give --snr or P in the file")
    if doc.get("method") == "monte_carlo" and doc.get("seed") is None:
        raise PreconditionError("monte_carlo is stochastic: a seed is mandatory")
    spec = FadingSpec.from_dict(doc)
    return FadingSpec(**{**spec.__dict__, "workers": args.workers})


def _fading(args):
    from .fading import (collusion_crossing, common_rate_fading, gap_bound, high_snr_bounds, sum_rate_bounds)

    u = args.units
    users = args.users
    if args.command == "common":
        spec = _fading_spec(args, users[0] if users else None)
        return "reports", spec.to_dict(), {"common": common_rate_fading(spec)}
    if args.command == "sum-bounds":
        Ks = users or [None]
        header = ["K", f"upper_{u}", f"lower_{u}", f"gap_{u}", f"gap_bound_{u}", f"gap_stderr_{u}",
                  f"upper_stderr_{u}", f"lower_stderr_{u}", "prob_eve_wins", "prob_eve_wins_stderr", "upper_family",
                  "lower_family"]
        rows, cfg = [], []
        for K in Ks:
            spec = _fading_spec(args, K)
            b = sum_rate_bounds(spec)
            gb = 2 * math.log(2) / (spec.K + 1) if spec.K >= 2 else None
            cv = lambda x: None if x is None else to_units(x, u)  # noqa: E731
            rows.append([spec.K, cv(b.upper.value), cv(b.lower.value), cv(b.gap), cv(gb), cv(b.gap_stderr),
                         cv(b.upper.solver_diag.get("stderr")), cv(b.lower.solver_diag.get("stderr")),
                         b.prob_eve_wins, b.prob_eve_wins_stderr, b.upper.solver_diag["family"],
                         b.lower.solver_diag["family"]])
            cfg.append(spec.to_dict())
        return "table", {"specs": cfg, "units": u}, (header, rows)
    if args.command == "figure-bounds":
        kmax = users[0] if users else 64
        header = ["K", f"upper_{u}", f"lower_{u}", "threshold", f"gap_bound_{u}"]
        rows = []
        for K in range(1, kmax + 1):
            up, lo, T = high_snr_bounds(K)
            rows.append([K, to_units(up, u), to_units(lo, u), T,
                         to_units(gap_bound(K).bound, u) if K >= 2 else None])
        return "table", {"Kmax": kmax, "seed": args.seed, "limit": "infinite SNR", "units": u}, (header, rows)
    # collusion
    header = ["K", "colluders", f"upper_{u}", f"lower_{u}", "is_crossing"]
    rows, cfg = [], []
    for K in users or [None]:
        spec = _fading_spec(args, K)
        cross, table = collusion_crossing(spec, args.max_colluders, args.zero_tol)
        for E, up, lo in table:
            rows.append([spec.K, E, to_units(up, u), to_units(lo, u), E == cross])
        cfg.append(spec.to_dict())
    return "table", {"specs": cfg, "max_colluders": args.max_colluders, "zero_tol": args.zero_tol, "units": u}, \
        (header, rows)


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    ts = not args.no_timestamp
    try:
        if args.group == "capacity":
            config, results, extra = _parallel(args) if args.command == "parallel" else _gaussian(args)
            if args.format == "json":
                text = sio.render_json(config, results, args.units, extra, ts)
            else:
                h, r = _report_rows(results, args.units)
                text = sio.render_csv(config, h, r, ts)
        elif args.group == "simulate":
            config, header, rows = _wiretap(args)
            text = sio.render_csv(config, header, rows, ts)
        else:
            kind, config, payload = _fading(args)
            if kind == "reports":
                if args.format == "json":
                    text = sio.render_json(config, payload, args.units, None, ts)
                else:
                    h, r = _report_rows(payload, args.units)
                    text = sio.render_csv(config, h, r, ts)
            elif args.format == "csv":
                text = sio.render_csv(config, *payload, ts)
            else:
                header, rows = payload
                doc = {"tool": "secbroadcast", "version": __version__, "config": config,
                       "rows": [dict(zip(header, row)) for row in rows]}
                if ts:
                    doc["timestamp"] = sio.timestamp()
                text = json.dumps(jsonable(doc), indent=2, sort_keys=True) + "\n"
        _emit(text, args.output)
    except SecrecyError as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, InputParseError):
            err.update(field=exc.field, line=exc.line)
        sys.stderr.write(json.dumps(err) + "\n")
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
