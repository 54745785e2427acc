"""Noise models: imperfect two-qubit gates and depolarising transmission.

Two layers live side by side and must agree:

* closed-form coefficient / error-rate formulas (``lambda0_star``,
  ``lambda0_router``, ``qab_average``, ``channel_qber``), cheap enough
  for threshold solving at any N;
* brute-force circuit oracles on dense density matrices
  (``simulate_prep_circuit``, ``apply_channel_noise``) that recompute
  the same numbers by exhaustive enumeration for small N.

The gate model: a two-qubit gate fails with probability ``f_G``, in
which case the two processed qubits are traced out and replaced by the
maximally mixed state.  The resource state is built by entangling
qubit 0 (in |+>) with each Bob qubit (in |0>) via controlled-NOTs, in a
random order.  In the router variant one extra such gate acts before
the fan-out and only degrades the parity coherence, not the Z
statistics.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .dense import DenseState, apply_cnot, check_cap, replace_with_mixed
from .ghz import GhzDiagonalState, coefficients_from_dense, twirl_dense

STAR = "star"
ROUTER = "router"


@dataclass(frozen=True)
class GateNoise:
    """Two-qubit gate failure probability plus the preparation topology."""

    f_g: float
    topology: str = STAR

    def __post_init__(self):
        if not 0.0 <= self.f_g <= 1.0:
            raise ValueError(f"f_g={self.f_g} outside [0, 1]")
        if self.topology not in (STAR, ROUTER):
            raise ValueError(f"unknown topology {self.topology!r}")


@dataclass(frozen=True)
class ChannelNoise:
    """Per-transmission depolarisation probability."""

    f_c: float

    def __post_init__(self):
        if not 0.0 <= self.f_c <= 1.0:
            raise ValueError(f"f_c={self.f_c} outside [0, 1]")


def noise_from_json(text: str | dict) -> GateNoise | ChannelNoise:
    """Parse {"model": "gate"|"channel", "fG"|"fC": x, "topology": ...}."""
    obj = json.loads(text) if isinstance(text, str) else text
    model = obj.get("model")
    if model == "gate":
        return GateNoise(float(obj["fG"]), obj.get("topology", STAR))
    if model == "channel":
        return ChannelNoise(float(obj["fC"]))
    raise ValueError(f"unknown noise model {model!r}")


# ---------------------------------------------------------------------------
# White-noise mixture
# ---------------------------------------------------------------------------

def depolarized_state(n_parties: int, q: float) -> GhzDiagonalState:
    """Mixture of the resource state with white noise, at Z error rate ``q``.

    lambda_0^+ = 1 - q (2^N - 1)/(2^N - 2) and all other coefficients are
    equal, so that ``qber_z`` of the result is exactly ``q``.
    """
    if n_parties < 2:
        raise ValueError("need at least 2 parties")
    two_n = 2.0 ** n_parties
    q_max = (two_n - 2.0) / (two_n - 1.0)
    if not 0.0 <= q <= q_max:
        raise ValueError(f"q={q} outside [0, {q_max}] for N={n_parties}")
    half = 1 << (n_parties - 1)
    rest = q / (two_n - 2.0)
    lam_plus = np.full(half, rest)
    lam_minus = np.full(half, rest)
    lam_plus[0] = 1.0 - q * (two_n - 1.0) / (two_n - 2.0)
    return GhzDiagonalState(n_parties, lam_plus, lam_minus)


# ---------------------------------------------------------------------------
# Gate-failure combinatorics
# ---------------------------------------------------------------------------

def block_count(pattern: str) -> int:
    """Block count b of a success/failure pattern.

    ``pattern`` holds one character per gate ('1' success, '0' failure);
    a trailing '1' is appended and the result is the number of maximal
    runs of ones plus the number of zeros in that extended string.
    """
    if pattern == "":
        raise ValueError("empty pattern")
    if set(pattern) - {"0", "1"}:
        raise ValueError(f"pattern {pattern!r} is not binary")
    s = pattern + "1"
    runs = sum(1 for i, c in enumerate(s) if c == "1" and (i == 0 or s[i - 1] == "0"))
    return runs + s.count("0")


def pattern_prefactor(pattern: str) -> float:
    """Weight of a failure pattern's contribution to lambda_0^{+/-}."""
    if "0" not in pattern:
        return 1.0
    return 2.0 ** (-block_count(pattern))


@dataclass(frozen=True)
class GatePattern:
    """Success/failure pattern of the N-1 preparation gates."""

    bits: tuple[int, ...]

    def __post_init__(self):
        if not self.bits:
            raise ValueError("empty pattern")
        if set(self.bits) - {0, 1}:
            raise ValueError("pattern bits must be 0 or 1")

    @property
    def weight(self) -> int:
        return sum(self.bits)

    @property
    def as_string(self) -> str:
        return "".join(str(b) for b in self.bits)

    @property
    def blocks(self) -> int:
        return block_count(self.as_string)

    @property
    def prefactor(self) -> float:
        return pattern_prefactor(self.as_string)

    def probability(self, f_g: float) -> float:
        w = self.weight
        return f_g ** (len(self.bits) - w) * (1.0 - f_g) ** w


def _subset_count_coefficient(w: int, n: int) -> float:
    """Compact combinatorial form of the summed pattern prefactors at weight w."""
    return sum(
        comb(w, n - beta) * comb(n - w - 1, beta - n + w) * 2.0 ** (-beta)
        for beta in range(n - w, n + 1)
    )


@lru_cache(maxsize=None)
def _prefactor_sums(n_parties: int) -> tuple[np.ndarray, np.ndarray]:
    """Summed prefactors per Hamming weight, computed two independent ways.

    Returns (enumerated, compact) arrays of length N-1 covering weights
    0..N-2 (the all-success pattern is excluded; it carries prefactor 1
    and is handled separately).
    """
    n_gates = n_parties - 1
    x = np.arange(1 << n_gates, dtype=np.uint64)
    y = (x << np.uint64(1)) | np.uint64(1)  # append the extra success
    ones = np.bitwise_count(y)
    runs = np.bitwise_count(y & ~(y << np.uint64(1)))
    blocks = runs + (np.uint64(n_gates + 1) - ones)
    pref = 2.0 ** (-blocks.astype(float))
    weights = np.bitwise_count(x).astype(int)
    keep = x != (1 << n_gates) - 1
    enumerated = np.bincount(weights[keep], weights=pref[keep], minlength=n_gates)[:n_gates]
    compact = np.array([_subset_count_coefficient(w, n_parties) for w in range(n_gates)])
    if np.max(np.abs(enumerated - compact), initial=0.0) > 1e-12:
        raise ArithmeticError(
            f"pattern-sum and combinatorial prefactors disagree for N={n_parties}"
        )
    return enumerated, compact


def lambda0_star(n_parties: int, f_g: float) -> tuple[float, float]:
    """(lambda_0^+, lambda_0^-) of the gate-noise preparation circuit.

    Evaluated from the exhaustive pattern sum and from the compact
    per-weight combinatorial form; the two must agree to 1e-12.
    """
    if n_parties < 2:
        raise ValueError("need at least 2 parties")
    if not 0.0 <= f_g <= 1.0:
        raise ValueError(f"f_g={f_g} outside [0, 1]")
    enumerated, compact = _prefactor_sums(n_parties)
    n_gates = n_parties - 1
    w = np.arange(n_gates)
    poly = f_g ** (n_gates - w) * (1.0 - f_g) ** w
    lam_minus = float(enumerated @ poly)
    lam_minus_compact = float(compact @ poly)
    if abs(lam_minus - lam_minus_compact) > 1e-12:
        raise ArithmeticError("independent lambda_0^- evaluations disagree")
    lam_plus = (1.0 - f_g) ** n_gates + lam_minus
    return lam_plus, lam_minus


def lambda0_router(n_parties: int, f_g: float) -> tuple[float, float]:
    """(lambda_0^+, lambda_0^-) when one extra noisy gate precedes the fan-out.

    The router variant has the same qber_z as the star circuit; only the
    coherence lambda_0^+ - lambda_0^- shrinks, by a factor (1 - f_G).
    """
    lam_plus, lam_minus = lambda0_star(n_parties, f_g)
    both = 0.5 * f_g * (lam_plus + lam_minus)
    return (1.0 - f_g) * lam_plus + both, (1.0 - f_g) * lam_minus + both


def qab_average(n_parties: int, f_g: float) -> float:
    """Per-Bob disagreement probability, averaged over random gate orders.

    Closed form of the mean of (1 - (1-f_G)^k)/2 over k = 1..N-1; the
    ``f_g == 0`` singularity of the ratio form is the limit 0.
    """
    if n_parties < 2:
        raise ValueError("need at least 2 parties")
    if not 0.0 <= f_g <= 1.0:
        raise ValueError(f"f_g={f_g} outside [0, 1]")
    if f_g == 0.0:
        return 0.0
    return ((1.0 - f_g) ** n_parties + f_g * n_parties - 1.0) / (2.0 * f_g * (n_parties - 1))


# ---------------------------------------------------------------------------
# Transmission noise
# ---------------------------------------------------------------------------

def channel_qber(n_parties: int, f_c: float) -> float:
    """Z error rate after N depolarising transmissions at probability ``f_c``."""
    if n_parties < 2:
        raise ValueError("need at least 2 parties")
    if not 0.0 <= f_c <= 1.0:
        raise ValueError(f"f_c={f_c} outside [0, 1]")
    two_n = 2.0 ** n_parties
    return (two_n - 2.0) / two_n * (1.0 - (1.0 - f_c) ** n_parties)


def apply_channel_noise(state: DenseState, f_c: float) -> DenseState:
    """Dense counterpart of ``channel_qber``.

    Each of the N transmissions leaves the joint state intact with
    probability 1 - f_C and otherwise depolarises it completely; the
    composition is (1-f_C)^N rho + (1 - (1-f_C)^N) I/2^N.  Mixing only
    the travelling qubit instead would give an all-agree probability of
    (1-f/2)^N + (f/2)^N, which disagrees with ``channel_qber`` for
    N >= 3, so that is not the modelled channel.
    """
    if not 0.0 <= f_c <= 1.0:
        raise ValueError(f"f_c={f_c} outside [0, 1]")
    n = state.n_qubits
    check_cap(n)
    survive = (1.0 - f_c) ** n
    rho = survive * state.density() + (1.0 - survive) * np.eye(1 << n) / (1 << n)
    return DenseState.from_matrix(rho)


# ---------------------------------------------------------------------------
# Circuit oracle
# ---------------------------------------------------------------------------

def _initial_density(n_parties: int, alice: str) -> np.ndarray:
    """|alice><alice| on qubit 0, |0> on every Bob qubit."""
    dim = 1 << n_parties
    rho = np.zeros((dim, dim), dtype=complex)
    step = 1 << (n_parties - 1)
    if alice == "plus":
        rho[0, 0] = rho[0, step] = rho[step, 0] = rho[step, step] = 0.5
    elif alice == "mixed":
        rho[0, 0] = rho[step, step] = 0.5
    else:
        raise ValueError(f"unknown initial Alice state {alice!r}")
    return rho


def prep_circuit_output(
    n_parties: int,
    pattern: GatePattern,
    order: tuple[int, ...] | None = None,
    alice: str = "plus",
) -> DenseState:
    """Run the preparation circuit for one fixed success/failure pattern.

    ``pattern.bits[i-1]`` decides whether the gate targeting Bob ``i``
    succeeds; ``order`` lists the Bobs in execution order (default 1..N-1).
    """
    check_cap(n_parties)
    if len(pattern.bits) != n_parties - 1:
        raise ValueError(f"pattern needs {n_parties - 1} bits")
    if order is None:
        order = tuple(range(1, n_parties))
    if sorted(order) != list(range(1, n_parties)):
        raise ValueError(f"order {order} is not a permutation of 1..{n_parties - 1}")
    rho = _initial_density(n_parties, alice)
    for bob in order:
        if pattern.bits[bob - 1]:
            rho = apply_cnot(rho, n_parties, 0, bob)
        else:
            rho = replace_with_mixed(rho, n_parties, (0, bob))
    return DenseState.from_matrix(rho)


@lru_cache(maxsize=None)
def _pattern_tables(n_parties: int, alice: str) -> tuple[np.ndarray, np.ndarray]:
    """Order-averaged, twirled coefficient tables per Hamming weight.

    Returns two arrays of shape (N-1+1, 2^(N-1)): entry [w, j] is the
    sum over all weight-w patterns (averaged over all gate orders) of
    the twirled lambda_j^{+/-}.  Gate-failure probabilities only enter
    through the weight, so these tables are reused across all f_G.
    """
    n_gates = n_parties - 1
    half = 1 << n_gates
    plus = np.zeros((n_gates + 1, half))
    minus = np.zeros((n_gates + 1, half))
    orders = list(itertools.permutations(range(1, n_parties)))
    for bits in itertools.product((0, 1), repeat=n_gates):
        pattern = GatePattern(bits)
        w = pattern.weight
        for order in orders:
            out = twirl_dense(prep_circuit_output(n_parties, pattern, order, alice))
            lam_plus, lam_minus = coefficients_from_dense(out)
            plus[w] += lam_plus / len(orders)
            minus[w] += lam_minus / len(orders)
    return plus, minus


def simulate_prep_circuit(
    n_parties: int,
    f_g: float,
    pattern: GatePattern | None = None,
    order: tuple[int, ...] | None = None,
    topology: str = STAR,
) -> DenseState | GhzDiagonalState:
    """Brute-force gate-noise oracle.

    With an explicit ``pattern`` the conditional output state is
    returned as a dense matrix (star topology only).  Without one, all
    2^(N-1) patterns are enumerated, weighted by their probabilities,
    averaged over every gate order, twirled, and returned as a
    coefficient vector.  Exhaustive order averaging is factorial in N;
    use the closed forms beyond small N.
    """
    if not 0.0 <= f_g <= 1.0:
        raise ValueError(f"f_g={f_g} outside [0, 1]")
    if pattern is not None:
        if topology != STAR:
            raise ValueError("per-pattern output is only defined for the star circuit")
        return prep_circuit_output(n_parties, pattern, order)
    check_cap(n_parties)
    if n_parties > 8:
        raise ValueError("exhaustive order enumeration is not sensible beyond N=8")
    n_gates = n_parties - 1
    w = np.arange(n_gates + 1)
    weight_probs = f_g ** (n_gates - w) * (1.0 - f_g) ** w
    plus_tab, minus_tab = _pattern_tables(n_parties, "plus")
    lam_plus = weight_probs @ plus_tab
    lam_minus = weight_probs @ minus_tab
    if topology == ROUTER:
        plus_mix, minus_mix = _pattern_tables(n_parties, "mixed")
        lam_plus = (1.0 - f_g) * lam_plus + f_g * (weight_probs @ plus_mix)
        lam_minus = (1.0 - f_g) * lam_minus + f_g * (weight_probs @ minus_mix)
    elif topology != STAR:
        raise ValueError(f"unknown topology {topology!r}")
    return GhzDiagonalState(n_parties, np.maximum(lam_plus, 0.0), np.maximum(lam_minus, 0.0))
