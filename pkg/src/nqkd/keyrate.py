"""Asymptotic secret fractions, key rates and noise thresholds.

The general rate takes the measured error rates (Q_Z, Q_X, per-Bob
Q_AB_i) of a symmetrised state and charges the worst Bob for error
correction.  For the white-noise mixture the same quantity collapses to
a closed form in (Q, N) alone, including an N -> infinity limit; the two
code paths are kept independent and cross-checked in the tests.

The bipartite baseline runs one six-state link per Bob and relays a
one-time-padded conference key, so its rate is the slowest link's rate
divided by the rounds the network needs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from . import noise as noise_model

LOG2 = math.log(2.0)


class SolverError(ArithmeticError):
    """A root bracket could not be established or refined."""


def _xlog2x(x: float) -> float:
    """x log2 x, continuously extended by 0 for x <= 0."""
    if x <= 0.0:
        return 0.0
    return x * math.log2(x)


def binary_entropy(p: float) -> float:
    """Binary Shannon entropy h(p) in bits, with h(0) = h(1) = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    return -_xlog2x(p) - _xlog2x(1.0 - p)


@dataclass(frozen=True)
class RateInput:
    """Measured error rates feeding the secret-fraction formula."""

    q_z: float
    q_x: float
    q_ab: tuple[float, ...]
    n_parties: int
    t_rep: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "q_ab", tuple(float(q) for q in self.q_ab))
        for name, value in (("q_z", self.q_z), ("q_x", self.q_x), *(("q_ab", q) for q in self.q_ab)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if len(self.q_ab) != self.n_parties - 1:
            raise ValueError(f"need {self.n_parties - 1} per-Bob error rates")
        if self.t_rep <= 0.0:
            raise ValueError("t_rep must be positive")


@dataclass(frozen=True)
class RateReport:
    """Secret fraction, key rate and the summands that produced them."""

    r_inf: float
    r_clamped: float
    rate: float
    t_rep: float
    components: dict[str, float] = field(default_factory=dict)
    limiting_bob: int | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "r_inf": self.r_inf,
                "r_clamped": self.r_clamped,
                "rate": self.rate,
                "t_rep": self.t_rep,
                "limiting_bob": self.limiting_bob,
                "components": self.components,
            }
        )


def secret_fraction(inp: RateInput) -> RateReport:
    """Asymptotic secret fraction from measured error rates.

    The two parity log terms take arguments 1 - Q_Z/2 - Q_X and
    Q_X - Q_Z/2; statistical estimates may push those slightly negative,
    in which case the term is clamped to its continuous limit 0.
    Negative fractions are reported as-is, with ``r_clamped`` for key
    accounting, and the rate is ``r_inf / t_rep``.
    """
    q_z, q_x = inp.q_z, inp.q_x
    worst = max(range(len(inp.q_ab)), key=lambda i: inp.q_ab[i])
    components = {
        "parity_plus_term": _xlog2x(1.0 - q_z / 2.0 - q_x),
        "parity_minus_term": _xlog2x(q_x - q_z / 2.0),
        "z_agreement_term": (1.0 - q_z) * (1.0 - (math.log2(1.0 - q_z) if q_z < 1.0 else 0.0)),
        "error_correction_term": -binary_entropy(inp.q_ab[worst]),
    }
    r_inf = sum(components.values())
    return RateReport(
        r_inf=r_inf,
        r_clamped=max(r_inf, 0.0),
        rate=r_inf / inp.t_rep,
        t_rep=inp.t_rep,
        components=components,
        limiting_bob=worst + 1,
    )


def depolarized_rate_input(q: float, n_parties: int, t_rep: float = 1.0) -> RateInput:
    """Error rates of the white-noise mixture at Z error rate ``q``."""
    q_x = 2.0 ** (n_parties - 2) / (2.0 ** (n_parties - 1) - 1.0) * q
    q_ab = 2.0 ** (n_parties - 1) / (2.0 ** n_parties - 2.0) * q
    return RateInput(q, q_x, (q_ab,) * (n_parties - 1), n_parties, t_rep)


def rate_depolarized(q: float, n_parties: int | float) -> float:
    """Closed-form secret fraction of the white-noise mixture.

    ``n_parties`` may be ``math.inf``; large N is evaluated through
    ratios of the form (1 - 2^-N) that never overflow.
    """
    if q < 0.0:
        raise ValueError(f"q={q} is negative")
    if math.isinf(n_parties):
        if q > 1.0:
            raise ValueError(f"q={q} outside [0, 1]")
        return 1.0 - binary_entropy(q / 2.0) - q
    n = int(n_parties)
    if n < 2:
        raise ValueError("need at least 2 parties")
    eps = 2.0 ** (-n)
    q_max = (1.0 - 2.0 * eps) / (1.0 - eps)
    if q > q_max + 1e-15:
        raise ValueError(f"q={q} above the admissible {q_max} for N={n}")
    ratio_full = (1.0 - eps) / (1.0 - 2.0 * eps)      # (2^N-1)/(2^N-2)
    ratio_half = 0.5 / (1.0 - 2.0 * eps)              # 2^(N-1)/(2^N-2)
    log_half = (n - 1) + math.log1p(-2.0 * eps) / LOG2  # log2(2^(N-1)-1)
    log_full = n + math.log1p(-eps) / LOG2              # log2(2^N-1)
    return (
        1.0
        + binary_entropy(q)
        - binary_entropy(min(q * ratio_full, 1.0))
        - binary_entropy(q * ratio_half)
        + (log_half - ratio_full * log_full) * q
    )


def six_state_rate(q: float) -> float:
    """Bipartite six-state secret fraction 1 - h(3Q/2) - (3 log2 3 / 2) Q."""
    if not 0.0 <= q <= 2.0 / 3.0:
        raise ValueError(f"q={q} outside [0, 2/3]")
    return 1.0 - binary_entropy(1.5 * q) - 1.5 * math.log2(3.0) * q


def bisect_root(f, lo: float, hi: float, xtol: float = 1e-9, max_iter: int = 200) -> float:
    """Bracketed bisection; raises SolverError without a sign change."""
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0.0:
        raise SolverError(f"no sign change on [{lo}, {hi}] ({f_lo} .. {f_hi})")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0 or hi - lo < xtol:
            return mid
        if f_lo * f_mid < 0.0:
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
    return 0.5 * (lo + hi)


def threshold_qber(n_parties: int | float) -> float:
    """Largest Z error rate with a positive white-noise-mixture rate."""
    return bisect_root(lambda q: rate_depolarized(q, n_parties), 1e-9, 0.45, xtol=1e-9)


def twoqkd_conference_rate(q_links: list[float] | tuple[float, ...], t_rep: float) -> RateReport:
    """Conference rate of the bipartite relay protocol.

    Each Bob runs a six-state link with Alice; the one-time-pad relay of
    the conference key makes the slowest link binding.
    """
    if len(q_links) == 0:
        raise ValueError("need at least one link")
    if t_rep <= 0.0:
        raise ValueError("t_rep must be positive")
    rates = [six_state_rate(q) for q in q_links]
    worst = min(range(len(rates)), key=lambda i: rates[i])
    r_inf = rates[worst]
    return RateReport(
        r_inf=r_inf,
        r_clamped=max(r_inf, 0.0),
        rate=r_inf / t_rep,
        t_rep=t_rep,
        components={f"link_{i + 1}": r for i, r in enumerate(rates)},
        limiting_bob=worst + 1,
    )


def gate_noise_rate_input(n_parties: int, f_g: float, topology: str = noise_model.ROUTER,
                          t_rep: float = 1.0) -> RateInput:
    """Error rates of the gate-noise preparation circuit."""
    if topology == noise_model.ROUTER:
        lam_plus, lam_minus = noise_model.lambda0_router(n_parties, f_g)
    else:
        lam_plus, lam_minus = noise_model.lambda0_star(n_parties, f_g)
    q_z = 1.0 - lam_plus - lam_minus
    q_x = 0.5 * (1.0 - (lam_plus - lam_minus))
    q_ab = noise_model.qab_average(n_parties, f_g)
    return RateInput(q_z, q_x, (q_ab,) * (n_parties - 1), n_parties, t_rep)


TWOQKD_GATE_LINK_FACTOR = 0.5  # one noisy pair-preparation gate: link QBER f_G/2


def nqkd_gate_threshold(n_parties: int) -> float:
    """Gate failure probability at which the multipartite advantage vanishes.

    Compares the router-network multipartite rate (one network use per
    round) against N-1 six-state links prepared with one noisy gate each
    (link QBER f_G/2) over N-1 network uses.
    """
    if n_parties < 3:
        raise ValueError("need at least 3 parties for the comparison")

    def gap(f_g: float) -> float:
        nqkd = secret_fraction(gate_noise_rate_input(n_parties, f_g)).r_inf
        twoqkd = six_state_rate(TWOQKD_GATE_LINK_FACTOR * f_g) / (n_parties - 1)
        return nqkd - twoqkd

    return bisect_root(gap, 1e-9, 0.5, xtol=1e-7)


def nqkd_channel_threshold(n_parties: int) -> float:
    """Transmission noise level at which the multipartite advantage vanishes.

    The multipartite protocol sends N qubits per round (one use of the
    router network); the bipartite relay needs two hops per Bell pair,
    so each link sees QBER (1 - (1-f_C)^2)/2, and N-1 network uses.
    """
    if n_parties < 3:
        raise ValueError("need at least 3 parties for the comparison")

    def gap(f_c: float) -> float:
        nqkd = rate_depolarized(noise_model.channel_qber(n_parties, f_c), n_parties)
        link = 0.5 * (1.0 - (1.0 - f_c) ** 2)
        twoqkd = six_state_rate(link) / (n_parties - 1)
        return nqkd - twoqkd

    hi = 0.999
    # the gap is positive at 0; march right until it flips sign
    probe = 0.05
    while probe < hi and gap(probe) > 0.0:
        probe += 0.05
    if probe >= hi:
        raise SolverError(f"no advantage crossover found for N={n_parties}")
    return bisect_root(gap, 1e-9, probe, xtol=1e-9)
