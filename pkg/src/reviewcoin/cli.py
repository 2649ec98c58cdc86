"""``rc`` command line.

Exit codes: 0 success, 1 domain failure (bad data, failed verification),
2 usage error or unreadable input path.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .bootstrap import WorkRecord, compute_sigma, plan_bootstrap
from .errors import ReviewCoinError
from .ledger import read_log, verify_file
from .simulator import CycleReport, ScenarioConfig, Simulation, summarize
from .tax_model import (
    PricingParams,
    TaxSchedule,
    compute_tau,
    neurips_db_schedule,
    round_tau,
    submission_cost,
    total_outlay,
)
from .units import format_rc

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("reviewcoin")


class UsageError(Exception):
    """Bad invocation or unreadable input; maps to exit code 2."""


def _read_json(path: str) -> Any:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ReviewCoinError(f"{path}: invalid JSON ({exc})") from exc


def _int_field(data: Any, key: str, default: int | None) -> int | None:
    if isinstance(data, dict) and key in data:
        value = data[key]
        if type(value) is not int:
            raise ReviewCoinError(f"{key} must be an integer")
        return value
    return default


# -- rc tax -------------------------------------------------------------------


def cmd_tax(args: argparse.Namespace) -> int:
    data = _read_json(args.schedule)
    if not isinstance(data, dict):
        raise ReviewCoinError("schedule file must hold a JSON object")
    schedule = TaxSchedule.from_dict(data)
    rho = args.rho if args.rho is not None else _int_field(data, "rho", 3)
    n = args.n if args.n is not None else _int_field(data, "n", 0)
    exact = compute_tau(schedule)
    rounded = round_tau(exact)
    params = PricingParams(rho=rho, tau=rounded if args.tau_policy == "rounded" else exact, n=n)
    print(
        f"tau={format_rc(exact)} RC, rounded={format_rc(rounded)} RC, "
        f"cost(rho={rho})={format_rc(submission_cost(params))} RC, "
        f"outlay(n={n})={format_rc(total_outlay(params))} RC"
    )
    return EXIT_OK


# -- rc simulate --------------------------------------------------------------


def _scenario(path: str) -> ScenarioConfig:
    data = _read_json(path)
    if not isinstance(data, dict):
        raise ReviewCoinError("scenario file must hold a JSON object")
    seed = os.environ.get("RC_SEED")
    if seed is not None:
        try:
            data = {**data, "rng_seed": int(seed, 0)}
        except ValueError as exc:
            raise UsageError(f"RC_SEED is not an integer: {seed!r}") from exc
    return ScenarioConfig.from_dict(data)


def write_reports(
    out_dir: Path, sim: Simulation, reports: Sequence[CycleReport]
) -> dict[str, Any]:
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = summarize(reports, sim.ledger)
    doc = {
        "version": __version__,
        "scenario": sim.config.to_dict(),
        "bootstrap": sim.bootstrap_info,
        "summary": summary.to_dict(),
        "cycles": [r.to_dict() for r in reports],
        "ledger": {
            "transactions": len(sim.ledger),
            "head_hash": sim.ledger.head_hash,
            "total_minted_mRC": sim.ledger.total_minted,
        },
    }
    (out_dir / "report.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    with open(out_dir / "cycles.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CycleReport.CSV_COLUMNS)
        writer.writerows(r.csv_row() for r in reports)
    sim.ledger.save(out_dir / "ledger.jsonl")
    return doc


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _scenario(args.scenario)
    sim = Simulation(config)
    reports = sim.run()
    doc = write_reports(Path(args.out), sim, reports)
    audit = doc["summary"]["audit"]
    final = reports[-1]
    print(
        f"{len(reports)} cycles, supply={format_rc(final.supply_mRC)} RC, "
        f"treasury={format_rc(final.treasury_mRC)} RC, gini={final.gini:.4f}, "
        f"supply_conserved={audit['supply_conserved']}, chain_verified={audit['chain_verified']}"
    )
    return EXIT_OK if audit["supply_conserved"] and audit["chain_verified"] else EXIT_FAIL


# -- rc ledger ----------------------------------------------------------------


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def cmd_ledger_verify(args: argparse.Namespace) -> int:
    result = verify_file(_existing(args.file))
    if result.ok:
        print(f"OK: {result.count} transactions")
        return EXIT_OK
    print(f"FAILED at seq {result.first_bad_seq}: {result.reason}")
    return EXIT_FAIL


def cmd_ledger_show(args: argparse.Namespace) -> int:
    txs = read_log(_existing(args.file))
    running = 0
    for tx in txs:
        memo = json.dumps(tx.memo_dict, sort_keys=True, separators=(",", ":")) if tx.memo else ""
        if args.account is None:
            entries = " ".join(f"{a}:{format_rc(d)}" for a, d in tx.entries)
            print(f"{tx.seq:>6} {tx.kind.value:<16} {entries} {memo}".rstrip())
            continue
        delta = tx.delta_for(args.account)
        if delta:
            running += delta
            print(
                f"{tx.seq:>6} {tx.kind.value:<16} {format_rc(delta):>12} "
                f"balance={format_rc(running)} {memo}".rstrip()
            )
    if args.account is not None:
        print(f"{args.account}: {format_rc(running)} RC")
    return EXIT_OK


# -- rc bootstrap -------------------------------------------------------------


def cmd_bootstrap_plan(args: argparse.Namespace) -> int:
    data = _read_json(args.history)
    if isinstance(data, list):
        data = {"records": data}
    if not isinstance(data, dict):
        raise ReviewCoinError("history must be a list of work records or an object")
    schedule = (
        TaxSchedule.from_dict(data["schedule"]) if "schedule" in data else neurips_db_schedule()
    )
    try:
        history = [WorkRecord.from_dict(r) for r in data.get("records", [])]
        free = (
            [WorkRecord.from_dict(r) for r in data["free_work"]] if "free_work" in data else None
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ReviewCoinError(f"malformed work record: {exc!r}") from exc
    sigma = compute_sigma(args.n, args.rho, args.tau)
    try:
        plan = plan_bootstrap(history, sigma, free_work=free, schedule=schedule)
    except KeyError as exc:
        raise ReviewCoinError(f"work record names an unknown role: {exc}") from exc
    out = {"n": args.n, "rho": args.rho, "tau_mRC": args.tau, **plan.to_dict()}
    print(json.dumps(out, indent=2))
    return EXIT_OK


# -- wiring -------------------------------------------------------------------


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rc", description="ReviewCoin conference economy tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    tax = sub.add_parser("tax", help="print tau, submission cost and total outlay")
    tax.add_argument("--schedule", required=True, help="tax schedule JSON")
    tax.add_argument("--rho", type=_positive, help="reviews per paper (default: file or 3)")
    tax.add_argument("--n", type=_non_negative, help="papers (default: file or 0)")
    tax.add_argument(
        "--tau-policy",
        choices=("rounded", "exact"),
        default="rounded",
        help="tau used for cost and outlay (default: rounded)",
    )
    tax.set_defaults(func=cmd_tax)

    sim = sub.add_parser("simulate", help="run a scenario and write reports")
    sim.add_argument("--scenario", required=True, help="scenario JSON")
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=cmd_simulate)

    ledger = sub.add_parser("ledger", help="inspect a JSONL transaction log")
    lsub = ledger.add_subparsers(dest="ledger_command", required=True)
    verify = lsub.add_parser("verify", help="check the hash chain and accounting rules")
    verify.add_argument("file")
    verify.set_defaults(func=cmd_ledger_verify)
    show = lsub.add_parser("show", help="print transactions")
    show.add_argument("file")
    show.add_argument("--account", help="only this account, with running balance")
    show.set_defaults(func=cmd_ledger_show)

    boot = sub.add_parser("bootstrap", help="plan the initial disbursement")
    bsub = boot.add_subparsers(dest="bootstrap_command", required=True)
    plan = bsub.add_parser("plan", help="print the bootstrap plan as JSON")
    plan.add_argument("--history", required=True, help="historical work records JSON")
    plan.add_argument("--n", type=_non_negative, required=True, help="papers per conference")
    plan.add_argument("--rho", type=_positive, required=True, help="reviews per paper")
    plan.add_argument("--tau", type=_non_negative, required=True, help="tax in millicoins")
    plan.set_defaults(func=cmd_bootstrap_plan)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ReviewCoinError as exc:
        print(f"rc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
