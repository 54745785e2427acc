"""Network models, repetition-time schedules and the coding advantage.

Every channel carries one qubit per second, so the repetition time of a
protocol round equals the number of sequential network uses it needs.
Behind a bottleneck router the multipartite protocol distributes its
resource state in a single use (the router entangles and fans out),
while the bipartite relay must push N-1 Bell halves through the same
inbound edge one at a time.  The butterfly multicast graph doubles the
multipartite round rate instead.

``distribute_ghz_via_router`` verifies the fan-out step for real, on
state vectors, including both measurement branches of the router's
correction and a coherent version of the same correction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import keyrate, noise as noise_model
from .dense import (
    DenseState,
    apply_cz,
    apply_single_qubit,
    check_cap,
    dense_cap,
    entanglement_entropy,
    partial_trace,
    qubit_bits,
)

NQKD = "nqkd"
TWOQKD = "2qkd"

ALICE = "alice"
BOB = "bob"
ROUTER_ROLE = "router"


@dataclass(frozen=True)
class Node:
    id: str
    role: str


@dataclass(frozen=True)
class NetworkModel:
    """Directed graph with unit-capacity edges and party roles."""

    nodes: tuple[Node, ...]
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        known = set(ids)
        for a, b in self.edges:
            if a not in known or b not in known:
                raise ValueError(f"edge ({a}, {b}) references unknown node")
        if len(self.alices()) != 1:
            raise ValueError("network needs exactly one alice")
        unreachable = [b.id for b in self.bobs() if not self.has_path(self.alices()[0].id, b.id)]
        if unreachable:
            raise ValueError(f"alice cannot reach {unreachable}")

    def alices(self) -> list[Node]:
        return [n for n in self.nodes if n.role == ALICE]

    def bobs(self) -> list[Node]:
        return [n for n in self.nodes if n.role == BOB]

    def routers(self) -> list[Node]:
        return [n for n in self.nodes if n.role == ROUTER_ROLE]

    @property
    def n_parties(self) -> int:
        return 1 + len(self.bobs())

    def has_path(self, src: str, dst: str) -> bool:
        frontier, seen = [src], {src}
        while frontier:
            here = frontier.pop()
            if here == dst:
                return True
            for a, b in self.edges:
                if a == here and b not in seen:
                    seen.add(b)
                    frontier.append(b)
        return False

    def to_json(self) -> str:
        return json.dumps(
            {
                "nodes": [{"id": n.id, "role": n.role} for n in self.nodes],
                "edges": [{"from": a, "to": b} for a, b in self.edges],
            }
        )

    @classmethod
    def from_json(cls, text: str | dict) -> "NetworkModel":
        obj = json.loads(text) if isinstance(text, str) else text
        nodes = tuple(Node(str(n["id"]), str(n["role"])) for n in obj["nodes"])
        edges = tuple((str(e["from"]), str(e["to"])) for e in obj["edges"])
        return cls(nodes, edges)

    def topology(self) -> str:
        routers = len(self.routers())
        if routers == 0:
            return "star"
        if routers == 1:
            return "router"
        return "butterfly"


def star_network(n_parties: int) -> NetworkModel:
    nodes = [Node("A", ALICE)] + [Node(f"B{i}", BOB) for i in range(1, n_parties)]
    edges = tuple(("A", f"B{i}") for i in range(1, n_parties))
    return NetworkModel(tuple(nodes), edges)


def router_network(n_parties: int) -> NetworkModel:
    nodes = [Node("A", ALICE), Node("C", ROUTER_ROLE)]
    nodes += [Node(f"B{i}", BOB) for i in range(1, n_parties)]
    edges = [("A", "C")] + [("C", f"B{i}") for i in range(1, n_parties)]
    return NetworkModel(tuple(nodes), tuple(edges))


def butterfly_network() -> NetworkModel:
    """The 3-party multicast graph whose network code yields two states per use."""
    nodes = (
        Node("A", ALICE),
        Node("u", ROUTER_ROLE),
        Node("v", ROUTER_ROLE),
        Node("c", ROUTER_ROLE),
        Node("d", ROUTER_ROLE),
        Node("B1", BOB),
        Node("B2", BOB),
    )
    edges = (
        ("A", "u"), ("A", "v"),
        ("u", "B1"), ("v", "B2"),
        ("u", "c"), ("v", "c"),
        ("c", "d"),
        ("d", "B1"), ("d", "B2"),
    )
    return NetworkModel(nodes, edges)


@dataclass(frozen=True)
class Schedule:
    """Network uses per protocol round and the implied repetition time."""

    protocol: str
    uses_per_round: float
    states_per_use: float = 1.0

    def __post_init__(self):
        if self.uses_per_round <= 0 or self.states_per_use <= 0:
            raise ValueError("schedule counts must be positive")

    @property
    def t_rep(self) -> float:
        return self.uses_per_round / self.states_per_use

    def to_json(self) -> str:
        return json.dumps(
            {
                "protocol": self.protocol,
                "uses_per_round": self.uses_per_round,
                "states_per_use": self.states_per_use,
                "t_rep": self.t_rep,
            }
        )


def schedule_star_router(n_parties: int, protocol: str) -> Schedule:
    """Repetition times behind the single-router bottleneck.

    The multipartite state needs one use (each edge carries one qubit);
    the bipartite relay needs N-1 uses of the inbound edge.
    """
    if protocol == NQKD:
        return Schedule(NQKD, 1.0)
    if protocol == TWOQKD:
        return Schedule(TWOQKD, float(n_parties - 1))
    raise ValueError(f"unknown protocol {protocol!r}")


def schedule_butterfly(protocol: str, n_parties: int = 3, multicast_bits: int = 2) -> Schedule:
    """Repetition times on a multicast network.

    A graph that multicasts n classical bits per use yields n resource
    states per use for the multipartite protocol, against n/(N-1)
    relay rounds for the bipartite one (outgoing capacity at Alice).
    """
    if multicast_bits < 1:
        raise ValueError("multicast capacity must be at least 1")
    if protocol == NQKD:
        return Schedule(NQKD, 1.0, float(multicast_bits))
    if protocol == TWOQKD:
        return Schedule(TWOQKD, 1.0, multicast_bits / (n_parties - 1))
    raise ValueError(f"unknown protocol {protocol!r}")


def schedule_for(network: NetworkModel | str, protocol: str, n_parties: int) -> Schedule:
    topology = network if isinstance(network, str) else network.topology()
    if topology == "star":
        return Schedule(protocol, 1.0)
    if topology == "router":
        return schedule_star_router(n_parties, protocol)
    if topology == "butterfly":
        return schedule_butterfly(protocol, n_parties)
    raise ValueError(f"unknown topology {topology!r}")


def edge_loads(network: NetworkModel, protocol: str) -> dict[tuple[str, str], float]:
    """Qubits per second on each edge under the protocol's schedule.

    One network use lasts one second.  The multipartite protocol sends
    one qubit along every edge it touches per use; the bipartite relay
    spreads its per-round transmissions over the scheduled uses (e.g.
    one Bell half per use through the router's inbound edge).  No load
    may exceed the unit capacity.
    """
    topology = network.topology()
    n = network.n_parties
    loads: dict[tuple[str, str], float] = {e: 0.0 for e in network.edges}
    if topology == "star":
        for edge in network.edges:
            loads[edge] = 1.0
    elif topology == "router":
        if protocol == NQKD:
            for edge in network.edges:
                loads[edge] = 1.0
        else:
            # one Bell half crosses A->C per use; each Bob is served once
            # every N-1 uses
            for edge in network.edges:
                loads[edge] = 1.0 if edge == ("A", "C") else 1.0 / (n - 1)
    elif topology == "butterfly":
        if protocol == NQKD:
            for edge in network.edges:
                loads[edge] = 1.0
        else:
            # two Bell halves leave Alice and travel the direct paths
            for edge in (("A", "u"), ("A", "v"), ("u", "B1"), ("v", "B2")):
                loads[edge] = 1.0
    else:
        raise ValueError(f"unknown topology {topology!r}")
    overloaded = {e: l for e, l in loads.items() if l > 1.0 + 1e-12}
    if overloaded:
        raise ValueError(f"schedule exceeds unit capacity on {overloaded}")
    return loads


# ---------------------------------------------------------------------------
# State-vector verification of the router fan-out
# ---------------------------------------------------------------------------

_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
_PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)


def _rotated_ghz_target(n_parties: int) -> np.ndarray:
    """Hadamard-on-every-qubit image of the resource state."""
    target = np.zeros(1 << n_parties, dtype=complex)
    target[0] = target[-1] = 1.0 / np.sqrt(2.0)
    for q in range(n_parties):
        target = apply_single_qubit(target, _HADAMARD, q, n_parties)
    return target


def distribute_ghz_via_router(n_parties: int) -> tuple[DenseState, dict]:
    """Run the single-use router distribution on state vectors.

    Qubit 0 is the router qubit C, qubit 1 Alice's kept qubit, qubits
    2..N the Bobs.  Alice entangles C with her qubit, sends C, the
    router entangles C with N-1 fresh qubits, measures C in X and flips
    the first Bob on the -1 outcome.  Both branches must equal the
    all-Hadamard rotation of the resource state; the same correction
    applied coherently before discarding C must agree.
    """
    if n_parties < 2:
        raise ValueError("need at least 2 parties")
    check_cap(n_parties + 1)
    total = n_parties + 1
    dim = 1 << total
    psi = np.full(dim, 1.0 / math.sqrt(dim), dtype=complex)  # all qubits in |+>
    psi = apply_cz(psi, total, 0, 1)
    for bob in range(2, total):
        psi = apply_cz(psi, total, 0, bob)

    target = _rotated_ghz_target(n_parties)
    idx = np.arange(dim)
    c_bit = qubit_bits(idx, 0, total)
    report: dict = {"n_parties": n_parties}
    branches = {}
    for outcome, label in ((0, "plus"), (1, "minus")):
        # project C onto |+> or |->: amplitudes (psi_0 +- psi_1)/sqrt(2)
        sign = 1.0 if outcome == 0 else -1.0
        amp = (psi[c_bit == 0] + sign * psi[c_bit == 1]) / math.sqrt(2.0)
        prob = float(np.vdot(amp, amp).real)
        amp = amp / math.sqrt(prob)
        if outcome == 1:
            amp = apply_single_qubit(amp, _PAULI_X, 1, n_parties)  # correct Bob 1
        branches[label] = amp
        report[f"probability_{label}"] = prob
        report[f"fidelity_{label}"] = float(abs(np.vdot(target, amp)) ** 2)

    # coherent variant: apply X on Bob 1 controlled on C being |->
    coherent = apply_single_qubit(psi, _HADAMARD, 0, total)
    # now C's |1> component marks the |-> branch; controlled-X from C to Bob 1
    flip = idx ^ (1 << (total - 1 - 2))
    controlled = np.where(c_bit == 1, coherent[flip], coherent)
    rho = partial_trace(np.outer(controlled, controlled.conj()), total, tuple(range(1, total)))
    report["fidelity_coherent"] = float(np.real(np.vdot(target, rho @ target)))
    report["branches_agree"] = bool(
        abs(abs(np.vdot(branches["plus"], branches["minus"])) - 1.0) < 1e-12
    )
    return DenseState.from_vector(branches["plus"]), report


def entanglement_bound_check(n_parties: int) -> dict:
    """Why the relay needs N-1 uses: entanglement across the bottleneck.

    One transmitted qubit can raise the entanglement entropy across the
    Alice | router-plus-Bobs cut by at most 1 bit, while N-1 Bell pairs
    carry N-1 bits.  For small sizes the N-1 figure is recomputed from
    an explicit state.
    """
    required = float(n_parties - 1)
    report = {
        "n_parties": n_parties,
        "bound_per_use": 1.0,
        "required_entanglement": required,
        "single_use_sufficient": required <= 1.0,
    }
    pairs = n_parties - 1
    if 2 * pairs <= dense_cap():
        report["dense_entanglement"] = bell_pairs_entanglement(pairs)
    return report


def bell_pairs_entanglement(pairs: int) -> float:
    """Entanglement entropy of k Bell pairs across the natural cut."""
    check_cap(2 * pairs)
    dim = 1 << (2 * pairs)
    psi = np.zeros(dim, dtype=complex)
    # Alice holds qubits 0..k-1, the partner qubits are k..2k-1.
    for assignment in range(1 << pairs):
        index = (assignment << pairs) | assignment
        psi[index] = 1.0
    psi /= np.linalg.norm(psi)
    return entanglement_entropy(DenseState.from_vector(psi), tuple(range(pairs)))


# ---------------------------------------------------------------------------
# Protocol comparison
# ---------------------------------------------------------------------------

def _twoqkd_link_qber(noise, topology: str) -> float:
    if isinstance(noise, noise_model.GateNoise):
        return keyrate.TWOQKD_GATE_LINK_FACTOR * noise.f_g
    hops = 1 if topology == "star" else 2
    return 0.5 * (1.0 - (1.0 - noise.f_c) ** hops)


def compare_rates(
    network: NetworkModel | str,
    noise: noise_model.GateNoise | noise_model.ChannelNoise | None,
    n_parties: int,
) -> dict:
    """Key rates of both protocols on one network under one noise model.

    Returns both rate reports plus the advantage flag; ``noise`` may be
    None for the ideal comparison.
    """
    topology = network if isinstance(network, str) else network.topology()
    if topology == "butterfly" and n_parties != 3:
        raise ValueError("the butterfly comparison is defined for 3 parties")
    t_nqkd = schedule_for(topology, NQKD, n_parties).t_rep
    t_twoqkd = schedule_for(topology, TWOQKD, n_parties).t_rep

    if noise is None:
        nqkd_input = keyrate.depolarized_rate_input(0.0, n_parties, t_nqkd)
        link = 0.0
    elif isinstance(noise, noise_model.GateNoise):
        gate_topology = noise_model.STAR if topology == "star" else noise_model.ROUTER
        nqkd_input = keyrate.gate_noise_rate_input(n_parties, noise.f_g, gate_topology, t_nqkd)
        link = _twoqkd_link_qber(noise, topology)
    elif isinstance(noise, noise_model.ChannelNoise):
        q = noise_model.channel_qber(n_parties, noise.f_c)
        nqkd_input = keyrate.depolarized_rate_input(q, n_parties, t_nqkd)
        link = _twoqkd_link_qber(noise, topology)
    else:
        raise TypeError(f"unsupported noise model {noise!r}")

    nqkd_report = keyrate.secret_fraction(nqkd_input)
    twoqkd_report = keyrate.twoqkd_conference_rate([link] * (n_parties - 1), t_twoqkd)
    rate_n = nqkd_report.r_clamped / t_nqkd
    rate_2 = twoqkd_report.r_clamped / t_twoqkd
    return {
        "topology": topology,
        "n_parties": n_parties,
        "nqkd": nqkd_report,
        "twoqkd": twoqkd_report,
        "rate_nqkd": rate_n,
        "rate_twoqkd": rate_2,
        "advantage": rate_n > rate_2,
        "ratio": rate_n / rate_2 if rate_2 > 0 else math.inf if rate_n > 0 else math.nan,
    }


def comparison_to_json(result: dict) -> str:
    out = dict(result)
    out["nqkd"] = json.loads(result["nqkd"].to_json())
    out["twoqkd"] = json.loads(result["twoqkd"].to_json())
    if isinstance(out.get("ratio"), float) and not math.isfinite(out["ratio"]):
        out["ratio"] = str(out["ratio"])
    return json.dumps(out, indent=2)


__all__ = [
    "NetworkModel",
    "Node",
    "Schedule",
    "star_network",
    "router_network",
    "butterfly_network",
    "schedule_star_router",
    "schedule_butterfly",
    "schedule_for",
    "edge_loads",
    "distribute_ghz_via_router",
    "entanglement_bound_check",
    "bell_pairs_entanglement",
    "compare_rates",
    "comparison_to_json",
    "NQKD",
    "TWOQKD",
]
