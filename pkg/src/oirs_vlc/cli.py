"""Command line front end.

Verbs: simulate, sweep-snr, sweep-n, chi-curve, oracle, power.  Exit code 0
on success, 1 when a run completes but a solver flags an iteration cap or a
degenerate channel, 2 on usage errors.  Numeric output carries 12
significant digits; every file-producing run writes a JSON sidecar with the
fully resolved configuration next to the output.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import harness
from .harness import ExperimentConfig
from .power_opt import PowerBudget, optimize_power, uniform_power

OUTPUT_DIR_ENV = "OIRS_VLC_OUT"

DEFAULT_OUT = {
    "simulate": "simulate.csv",
    "sweep-snr": "sweep_snr.csv",
    "sweep-n": "sweep_n.csv",
    "chi-curve": "chi_curve.csv",
    "oracle": "oracle.csv",
    "power": "power.csv",
}


class UsageError(Exception):
    pass


@dataclass
class Command:
    """Parsed invocation: verb plus shared and verb-specific options."""

    verb: str
    config: str | None = None
    out: str | None = None
    unit: str = "nats"
    overrides: list = field(default_factory=list)
    options: dict = field(default_factory=dict)


def parse_grid(text: str) -> list[float]:
    """Inclusive 'start:step:stop' grid, or a plain comma list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"grid must be start:step:stop, got {text!r}")
        try:
            start, step, stop = (float(p) for p in parts)
        except ValueError as exc:
            raise UsageError(f"non-numeric grid {text!r}") from exc
        if step <= 0 or stop < start:
            raise UsageError(f"grid needs step > 0 and stop >= start, got {text!r}")
        count = int(round((stop - start) / step)) + 1
        return [start + step * i for i in range(count)]
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise UsageError(f"non-numeric list {text!r}") from exc


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise UsageError(f"override must be key=value, got {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise UsageError(f"override has an empty key: {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _apply_overrides(data: dict, overrides) -> dict:
    for text in overrides:
        key, value = _parse_override(text)
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return data


def _load_config(command: Command) -> ExperimentConfig:
    data: dict = {}
    if command.config is not None:
        path = Path(command.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from exc
    _apply_overrides(data, command.overrides)
    try:
        return ExperimentConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad config: {exc}") from exc


def _out_path(command: Command) -> Path:
    if command.out is not None:
        return Path(command.out)
    base = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    return base / DEFAULT_OUT[command.verb]


def _write_sidecar(out_path: Path, command: Command, config_dict: dict) -> None:
    sidecar = {
        "verb": command.verb,
        "unit": command.unit,
        "out": str(out_path),
        "config": config_dict,
        "options": command.options,
    }
    Path(str(out_path) + ".config.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def parse_args(argv) -> Command:
    parser = argparse.ArgumentParser(
        prog="oirs-vlc",
        description="Capacity sweeps for reflector-assisted MIMO intensity channels",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--unit", choices=("nats", "bits"), default="nats")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="config override, repeatable")

    common(sub.add_parser("simulate", help="run the configured SNR sweep"))

    p = sub.add_parser("sweep-snr", help="SNR sweep with a grid on the command line")
    common(p)
    p.add_argument("--snr", help="start:step:stop in dB, inclusive")
    p.add_argument("--case", help="constraint case I, II or III")
    p.add_argument("--alpha", type=float, help="average-to-peak ratio")

    p = sub.add_parser("sweep-n", help="element-count sweep at one SNR")
    common(p)
    p.add_argument("--n-list", default="0,8,16,24,32", help="comma list of element counts")
    p.add_argument("--snr-db", type=float, default=40.0)
    p.add_argument("--case", help="constraint case I, II or III")
    p.add_argument("--alpha", type=float, help="average-to-peak ratio")

    p = sub.add_parser("chi-curve", help="capacity offset over alpha")
    common(p)
    p.add_argument("--alphas", default="0.02:0.02:1.0", help="alpha grid start:step:stop")
    p.add_argument("--n-tx", type=int, default=4)

    p = sub.add_parser("oracle", help="certify solvers against full enumeration")
    common(p)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--elements", type=int, default=4)
    p.add_argument("--n-tx", type=int, default=2)
    p.add_argument("--n-rx", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("power", help="intensity allocation for a cap vector and budget")
    common(p)
    p.add_argument("--a-max", help="comma list of per-LED caps")
    p.add_argument("--a-total", type=float, help="total intensity budget")

    ns = parser.parse_args(argv)
    options = {
        k: v
        for k, v in vars(ns).items()
        if k not in ("verb", "config", "out", "unit", "overrides") and v is not None
    }
    return Command(
        verb=ns.verb,
        config=ns.config,
        out=ns.out,
        unit=ns.unit,
        overrides=ns.overrides,
        options=options,
    )


def _exit_code(records) -> int:
    flagged = any("iteration-cap" in r.notes or "degenerate" in r.notes for r in records)
    return 1 if flagged else 0


def _run_sweep_like(command: Command) -> int:
    config = _load_config(command)
    opts = command.options
    updates: dict = {}
    if command.verb == "sweep-snr":
        if opts.get("snr"):
            updates["snr_db"] = parse_grid(opts["snr"])
        if opts.get("case"):
            updates["case"] = opts["case"]
        if opts.get("alpha") is not None:
            updates["alpha"] = opts["alpha"]
    if command.verb == "sweep-n":
        if opts.get("case"):
            updates["case"] = opts["case"]
        if opts.get("alpha") is not None:
            updates["alpha"] = opts["alpha"]
    if updates:
        try:
            config = ExperimentConfig(**{**config.resolved(), **updates})
        except ValueError as exc:
            raise UsageError(f"bad sweep settings: {exc}") from exc

    if command.verb == "sweep-n":
        n_list = [int(v) for v in parse_grid(opts.get("n_list", "0,8,16,24,32"))]
        records = harness.sweep_elements(config, n_list, opts.get("snr_db", 40.0))
    else:
        records = harness.sweep_snr(config)

    out = _out_path(command)
    harness.write_records_csv(records, out, unit=command.unit)
    _write_sidecar(out, command, config.resolved())
    print(f"wrote {len(records)} records to {out}")
    return _exit_code(records)


def _run_chi_curve(command: Command) -> int:
    alphas = parse_grid(command.options.get("alphas", "0.02:0.02:1.0"))
    bad = [a for a in alphas if not 0 < a <= 1]
    if bad:
        raise UsageError(f"alpha grid must stay inside (0, 1], got {bad[:3]}")
    n_tx = command.options.get("n_tx", 4)
    curve = harness.chi_curve(alphas, n_tx)
    conv = 1.0 if command.unit == "nats" else 1.0 / math.log(2.0)
    out = _out_path(command)
    with open(out, "w", newline="") as fh:
        fh.write("alpha,chi_nats\n")
        for alpha, chi in curve:
            fh.write(f"{alpha:.12g},{chi * conv:.12g}\n")
    _write_sidecar(out, command, {"alphas": alphas, "n_tx": n_tx})
    print(f"wrote {len(curve)} points to {out}")
    return 0


def _run_oracle(command: Command) -> int:
    opts = command.options
    try:
        report = harness.certify_solvers(
            n_seeds=opts.get("seeds", 100),
            n_elements=opts.get("elements", 4),
            n_tx=opts.get("n_tx", 2),
            n_rx=opts.get("n_rx", 2),
            seed=opts.get("seed", 0),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = _out_path(command)
    conv = 1.0 if command.unit == "nats" else 1.0 / math.log(2.0)
    with open(out, "w", newline="") as fh:
        fh.write("seed,oracle_nats,ldao_nats,lip_nats,greedy_nats,ldao_gap_nats\n")
        for row in report["rows"]:
            fh.write(
                f"{row['seed']},{row['oracle'] * conv:.12g},{row['ldao'] * conv:.12g},"
                f"{row['lip'] * conv:.12g},{row['greedy'] * conv:.12g},"
                f"{row['ldao_gap'] * conv:.12g}\n"
            )
    _write_sidecar(out, command, {k: opts.get(k) for k in ("seeds", "elements", "n_tx", "n_rx", "seed")})
    print(
        f"oracle hit rate {report['ldao_hit_rate']:.2f}, "
        f"worst gap {report['ldao_gap_max']:.3e} nats, "
        f"mean gap {report['ldao_gap_mean']:.3e} nats"
    )
    return 0


def _run_power(command: Command) -> int:
    config = _load_config(command)
    opts = command.options
    a_max = config.a_max
    if opts.get("a_max"):
        a_max = tuple(parse_grid(opts["a_max"]))
    a_total = opts.get("a_total", config.a_total)
    try:
        budget = PowerBudget(np.asarray(a_max), a_total)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    opt = optimize_power(budget)
    uni = uniform_power(budget)
    print("optimal  (" + ", ".join(f"{v:.12g}" for v in opt) + ")")
    print("uniform  (" + ", ".join(f"{v:.12g}" for v in uni) + ")")
    if command.out is not None:
        out = _out_path(command)
        with open(out, "w", newline="") as fh:
            fh.write("led,a_opt,a_uniform\n")
            for i, (a, u) in enumerate(zip(opt, uni), start=1):
                fh.write(f"{i},{a:.12g},{u:.12g}\n")
        _write_sidecar(out, command, {"a_max": list(a_max), "a_total": a_total})
    return 0


def run(command: Command) -> int:
    if command.verb in ("simulate", "sweep-snr", "sweep-n"):
        return _run_sweep_like(command)
    if command.verb == "chi-curve":
        return _run_chi_curve(command)
    if command.verb == "oracle":
        return _run_oracle(command)
    if command.verb == "power":
        return _run_power(command)
    raise UsageError(f"unknown verb {command.verb!r}")


def main(argv=None) -> int:
    try:
        command = parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return run(command)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
