"""Command-line front end: rate sweeps, threshold tables, protocol runs
and network comparisons, emitted as CSV or JSON for plotting.

Exit codes: 0 on success, 2 for usage or configuration errors, 3 for
numeric/solver failures.  Floats are printed with 9 significant digits
so identical invocations produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass

from . import keyrate, network as networks, noise as noise_model, protocol as protocol_sim

USAGE_ERROR = 2
NUMERIC_ERROR = 3


@dataclass(frozen=True)
class SweepSpec:
    variable: str  # Q | f_G | f_C
    start: float
    stop: float
    steps: int

    def __post_init__(self):
        if self.variable not in ("Q", "f_G", "f_C"):
            raise ValueError(f"unknown sweep variable {self.variable!r}")
        if self.steps < 2:
            raise ValueError("sweep needs at least 2 steps")
        if not self.stop > self.start >= 0.0:
            raise ValueError("sweep range must satisfy 0 <= start < stop")

    def values(self) -> list[float]:
        step = (self.stop - self.start) / (self.steps - 1)
        return [self.start + i * step for i in range(self.steps)]


def parse_sweep(text: str) -> SweepSpec:
    parts = text.split(":")
    if len(parts) != 4:
        raise ValueError(f"sweep spec {text!r} is not var:start:stop:steps")
    return SweepSpec(parts[0], float(parts[1]), float(parts[2]), int(parts[3]))


def parse_n_list(text: str) -> list[int | float]:
    """Party counts: '3', '2,5,inf' or a range '2..8'."""
    out: list[int | float] = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if ".." in chunk:
            lo, hi = chunk.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif chunk.lower() in ("inf", "infinity"):
            out.append(math.inf)
        else:
            out.append(int(chunk))
    if not out:
        raise ValueError("empty party list")
    return out


def parse_noise(text: str | None, topology: str) -> noise_model.GateNoise | noise_model.ChannelNoise | None:
    if text is None:
        return None
    kind, _, value = text.partition(":")
    if not value:
        raise ValueError(f"noise spec {text!r} is not kind:value")
    if kind == "gate":
        gate_topology = noise_model.ROUTER if topology in ("router", "butterfly") else noise_model.STAR
        return noise_model.GateNoise(float(value), gate_topology)
    if kind == "channel":
        return noise_model.ChannelNoise(float(value))
    raise ValueError(f"unknown noise kind {kind!r}")


def fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def n_label(n: int | float) -> str:
    return "inf" if isinstance(n, float) and math.isinf(n) else str(int(n))


def write_rows(path: str | None, header: list[str], rows: list[list], fmt_name: str) -> None:
    if fmt_name == "csv":
        lines = [",".join(header)]
        lines += [",".join(fmt(x) for x in row) for row in rows]
        text = "\n".join(lines) + "\n"
    else:
        text = json.dumps([dict(zip(header, row)) for row in rows], indent=2) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_rates(args) -> int:
    sweep = parse_sweep(args.sweep)
    n_values = parse_n_list(args.n)
    rows = []
    for n in n_values:
        finite = not (isinstance(n, float) and math.isinf(n))
        if not finite and sweep.variable != "Q":
            raise ValueError("N=inf curves are only defined for Q sweeps")
        t_n = networks.schedule_for(args.topology, networks.NQKD, int(n) if finite else 3).t_rep
        t_2 = networks.schedule_for(args.topology, networks.TWOQKD, int(n) if finite else 3).t_rep
        for value in sweep.values():
            if sweep.variable == "Q":
                r_inf = keyrate.rate_depolarized(value, n)
                link = value
            elif sweep.variable == "f_G":
                gate_topology = noise_model.STAR if args.topology == "star" else noise_model.ROUTER
                r_inf = keyrate.secret_fraction(
                    keyrate.gate_noise_rate_input(int(n), value, gate_topology)
                ).r_inf
                link = keyrate.TWOQKD_GATE_LINK_FACTOR * value
            else:  # f_C
                q = noise_model.channel_qber(int(n), value)
                r_inf = keyrate.rate_depolarized(q, int(n))
                hops = 1 if args.topology == "star" else 2
                link = 0.5 * (1.0 - (1.0 - value) ** hops)
            rate_nqkd = max(r_inf, 0.0) / t_n
            # a link error beyond the six-state domain carries no key anyway
            rate_2qkd = max(keyrate.six_state_rate(link), 0.0) / t_2 if link <= 2 / 3 else 0.0
            rows.append([n_label(n), sweep.variable, value, r_inf, rate_nqkd, rate_2qkd])
    write_rows(args.out, ["n", "variable", "value", "r_inf", "rate_nqkd", "rate_2qkd"], rows, args.format)
    return 0


def cmd_thresholds(args) -> int:
    n_values = parse_n_list(args.n)
    rows = []
    for n in n_values:
        finite = not (isinstance(n, float) and math.isinf(n))
        if args.kind == "qber":
            value = keyrate.threshold_qber(n)
        elif args.kind == "gate":
            if not finite:
                raise ValueError("gate thresholds need a finite N")
            value = keyrate.nqkd_gate_threshold(int(n))
        else:
            if not finite:
                raise ValueError("channel thresholds need a finite N")
            value = keyrate.nqkd_channel_threshold(int(n))
        rows.append([n_label(n), args.kind, value])
    write_rows(args.out, ["n", "kind", "threshold"], rows, args.format)
    return 0


def cmd_simulate(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if args.seed is not None:
        obj["seed"] = args.seed
    config = protocol_sim.protocol_config_from_json(obj)
    run = protocol_sim.ProtocolRun(config)
    result = protocol_sim.run_protocol(config, hash_key=args.hash_key, run=run)
    if args.transcript:
        protocol_sim.write_transcript(args.transcript, run)
    write_text(args.out, result.summary_json())
    return 0


def cmd_network(args) -> int:
    if args.graph:
        with open(args.graph, "r", encoding="utf-8") as fh:
            model = networks.NetworkModel.from_json(fh.read())
        topology = model.topology()
        n = model.n_parties
    else:
        topology = args.topology
        n = int(args.n) if args.n else 3
        model = None
    if args.sweep:
        sweep = parse_sweep(args.sweep)
        if sweep.variable == "Q":
            raise ValueError("network sweeps run over f_G or f_C")
        rows = []
        gate_topology = noise_model.STAR if topology == "star" else noise_model.ROUTER
        for value in sweep.values():
            if sweep.variable == "f_G":
                noise = noise_model.GateNoise(value, gate_topology)
            else:
                noise = noise_model.ChannelNoise(value)
            result = networks.compare_rates(topology, noise, n)
            rows.append(
                [value, result["rate_nqkd"], result["rate_twoqkd"], result["advantage"]]
            )
        write_rows(args.out, ["f", "rate_nqkd", "rate_2qkd", "advantage"], rows, args.format)
        return 0
    noise = parse_noise(args.noise, topology)
    result = networks.compare_rates(topology, noise, n)
    if model is not None:
        networks.edge_loads(model, networks.NQKD)
        networks.edge_loads(model, networks.TWOQKD)
    write_text(args.out, networks.comparison_to_json(result))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nqkd",
        description="Conference key distribution with multiparty entangled states: "
        "rates, thresholds, protocol simulation and network comparison.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    rates = sub.add_parser("rates", help="secret-fraction sweeps for a family of N")
    rates.add_argument("--sweep", required=True, help="var:start:stop:steps with var in Q, f_G, f_C")
    rates.add_argument("--n", required=True, help="party counts, e.g. 2..8 or 2,3,inf")
    rates.add_argument("--topology", default="star", choices=["star", "router", "butterfly"])
    rates.add_argument("--out", default="-")
    rates.add_argument("--format", default="csv", choices=["csv", "json"])
    rates.set_defaults(func=cmd_rates)

    thresholds = sub.add_parser("thresholds", help="solve noise thresholds per N")
    thresholds.add_argument("--kind", required=True, choices=["qber", "gate", "channel"])
    thresholds.add_argument("--n", required=True, help="party counts, e.g. 3..18")
    thresholds.add_argument("--out", default="-")
    thresholds.add_argument("--format", default="csv", choices=["csv", "json"])
    thresholds.set_defaults(func=cmd_thresholds)

    simulate = sub.add_parser("simulate", help="run the round-by-round protocol simulation")
    simulate.add_argument("--config", required=True, help="JSON protocol configuration")
    simulate.add_argument("--seed", type=int, default=None, help="override the config seed")
    simulate.add_argument("--transcript", default=None, help="write JSON-lines round records here")
    simulate.add_argument("--hash-key", action="store_true", help="Toeplitz-hash the corrected key")
    simulate.add_argument("--out", default="-")
    simulate.set_defaults(func=cmd_simulate)

    net = sub.add_parser("network", help="compare both protocols on a network")
    net.add_argument("--topology", default="router", choices=["star", "router", "butterfly"])
    net.add_argument("--graph", default=None, help="JSON network description (overrides --topology)")
    net.add_argument("--n", default=None, help="number of parties")
    net.add_argument("--noise", default=None, help="gate:VALUE or channel:VALUE")
    net.add_argument("--sweep", default=None, help="f_G:start:stop:steps or f_C:start:stop:steps")
    net.add_argument("--out", default="-")
    net.add_argument("--format", default="csv", choices=["csv", "json"])
    net.set_defaults(func=cmd_network)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (keyrate.SolverError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_ERROR


if __name__ == "__main__":
    sys.exit(main())
