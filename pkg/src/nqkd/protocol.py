"""Monte Carlo simulation of the conference-key protocol rounds.

One protocol run consists of L rounds over a fixed shared state.  A
seeded schedule marks a small fraction of rounds as parity-estimation
rounds (standing in for the pre-shared key that would mark them in the
field; the ledger charges the L*h(p) bits regardless).  In those rounds
every party measures X or Y at random; rounds where an odd number of
parties chose Y carry no parity information and are discarded, and
Alice's outcome is flipped whenever the Y count is not a multiple of
four.  All other rounds are measured in Z.  A random subset of the Z
rounds is announced for error-rate estimation, a common random flip
mask is applied to the rest, and the surviving rounds are turned into
key material at the asymptotic secret fraction of the estimates.

Sampling backends
-----------------
Z rounds are drawn directly from the diagonal coefficients.  Parity
rounds either go through the dense embedding (exact Born sampling of
the chosen product basis) or, for symmetrised states, through a parity
shortcut: conditioned on the bases, every strict subset of the
outcomes is uniformly random -- any partial X/Y Pauli product maps
|0>|j> to a computational string orthogonal to both branches of every
basis state, so its expectation vanishes -- and only the full product
carries signal, equal to +-1 with probability (1 +- f(kappa) <X..X>)/2.
Sampling uniform outcomes for all parties but the last and fixing the
last by the drawn product therefore reproduces the exact distribution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .dense import DenseState, dense_cap, product_basis_probabilities
from .ghz import GhzDiagonalState, dense_from_ghz_diagonal
from .keyrate import RateInput, RateReport, binary_entropy, secret_fraction
from .noise import depolarized_state

Z_ROUND = "Z"
XY_ROUND = "XY"


@dataclass(frozen=True)
class ProtocolConfig:
    n_parties: int
    n_rounds: int
    state: GhzDiagonalState | DenseState
    p_estimation: float = 0.05
    seed: int = 0
    announced_z_rounds: int | None = None
    shards: int = 1
    sampling: str = "auto"  # auto | dense | parity

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ValueError("need at least one round")
        if not 0.0 < self.p_estimation < 1.0:
            raise ValueError("p_estimation must lie strictly between 0 and 1")
        state_n = self.state.n_parties if isinstance(self.state, GhzDiagonalState) else self.state.n_qubits
        if state_n != self.n_parties:
            raise ValueError(f"state has {state_n} parties, config says {self.n_parties}")
        if self.shards < 1:
            raise ValueError("shards must be >= 1")
        if self.sampling not in ("auto", "dense", "parity"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")


@dataclass(frozen=True)
class RoundRecord:
    """One protocol round: type, per-party bases and +-1 outcomes."""

    round_type: str
    bases: tuple[str, ...]
    outcomes: tuple[int, ...]
    kappa_tilde: int
    kept: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "type": self.round_type,
                "bases": "".join(self.bases),
                "outcomes": list(self.outcomes),
                "kappa_tilde": self.kappa_tilde,
                "kept": self.kept,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "RoundRecord":
        obj = json.loads(text)
        return cls(
            round_type=obj["type"],
            bases=tuple(obj["bases"]),
            outcomes=tuple(int(a) for a in obj["outcomes"]),
            kappa_tilde=int(obj["kappa_tilde"]),
            kept=bool(obj["kept"]),
        )


@dataclass(frozen=True)
class EstimationResult:
    q_z_hat: float
    q_x_hat: float
    q_ab_hat: tuple[float, ...]
    n_plus: int
    n_minus: int
    z_rounds_used: int
    xy_rounds_total: int
    xy_rounds_kept: int


@dataclass(frozen=True)
class ResourceLedger:
    """Rounds and pre-shared secret bits consumed by one protocol run."""

    n_rounds: int
    preshared_key_bits: float
    second_type_rounds: int
    announced_z_rounds: int
    key_rounds: int


def f_sign(kappa_tilde: int) -> int:
    """Sign carried by a parity round with ``kappa_tilde`` Y measurers.

    0 for odd counts (the round is discarded), +1 when the count is a
    multiple of four and -1 otherwise.
    """
    if kappa_tilde < 0:
        raise ValueError("kappa_tilde must be non-negative")
    if kappa_tilde % 2 == 1:
        return 0
    return 1 if kappa_tilde % 4 == 0 else -1


def _f_sign_array(kappas: np.ndarray) -> np.ndarray:
    out = np.where(kappas % 4 == 0, 1, -1)
    return np.where(kappas % 2 == 1, 0, out)


# ---------------------------------------------------------------------------
# Round sampling
# ---------------------------------------------------------------------------

def _bits_from_indices(indices: np.ndarray, n_bits: int) -> np.ndarray:
    shifts = np.arange(n_bits - 1, -1, -1, dtype=np.uint64)
    return ((indices[:, None].astype(np.uint64) >> shifts) & 1).astype(np.uint8)


def sample_z_bits(state: GhzDiagonalState | DenseState, count: int, rng: np.random.Generator) -> np.ndarray:
    """Z-basis outcome bits, shape (count, N); bit 0 is the +1 outcome."""
    if count == 0:
        n = state.n_parties if isinstance(state, GhzDiagonalState) else state.n_qubits
        return np.zeros((0, n), dtype=np.uint8)
    if isinstance(state, DenseState):
        probs = state.z_probabilities()
        probs = np.maximum(probs, 0.0)
        probs /= probs.sum()
        idx = rng.choice(probs.size, size=count, p=probs)
        return _bits_from_indices(idx, state.n_qubits)
    n = state.n_parties
    branch_probs = state.lam_plus + state.lam_minus
    branch_probs = np.maximum(branch_probs, 0.0)
    branch_probs /= branch_probs.sum()
    j = rng.choice(branch_probs.size, size=count, p=branch_probs)
    alice = rng.integers(0, 2, size=count, dtype=np.uint64)
    mask = (1 << np.uint64(n - 1)) - np.uint64(1)
    bobs = np.where(alice == 1, (~j.astype(np.uint64)) & mask, j.astype(np.uint64))
    full = (alice << np.uint64(n - 1)) | bobs
    return _bits_from_indices(full, n)


def _resolve_sampling(state, n_parties: int, mode: str) -> str:
    if mode == "dense" or isinstance(state, DenseState):
        if isinstance(state, GhzDiagonalState) and n_parties > dense_cap():
            raise ValueError("dense sampling requested above the dense cap")
        return "dense"
    if mode == "parity":
        if not state.is_symmetric(1e-9):
            raise ValueError("parity sampling requires a symmetrised state")
        return "parity"
    if n_parties <= dense_cap():
        return "dense"
    if not state.is_symmetric(1e-9):
        raise ValueError(
            f"N={n_parties} exceeds the dense cap and the state is not symmetrised; "
            "no exact sampler is available"
        )
    return "parity"


def sample_xy_bits(
    state: GhzDiagonalState | DenseState,
    bases: np.ndarray,
    rng: np.random.Generator,
    method: str = "auto",
) -> np.ndarray:
    """Outcome bits for parity rounds with given bases (0 = X, 1 = Y)."""
    bases = np.asarray(bases, dtype=np.uint8)
    count, n = bases.shape
    if count == 0:
        return np.zeros((0, n), dtype=np.uint8)
    method = _resolve_sampling(state, n, method)
    if method == "dense":
        dense = state if isinstance(state, DenseState) else dense_from_ghz_diagonal(state)
        return _sample_xy_dense(dense, bases, rng)
    return _sample_xy_parity(state, bases, rng)


def _sample_xy_dense(state: DenseState, bases: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    count, n = bases.shape
    out = np.zeros((count, n), dtype=np.uint8)
    keys = bases @ (1 << np.arange(n - 1, -1, -1, dtype=np.int64))
    for key in np.unique(keys):
        rows = np.nonzero(keys == key)[0]
        letters = "".join("y" if b else "x" for b in bases[rows[0]])
        probs = np.maximum(product_basis_probabilities(state, letters), 0.0)
        probs /= probs.sum()
        idx = rng.choice(probs.size, size=rows.size, p=probs)
        out[rows] = _bits_from_indices(idx, n)
    return out


def _sample_xy_parity(state: GhzDiagonalState, bases: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    count, n = bases.shape
    x_expect = float((state.lam_plus - state.lam_minus).sum())
    kappa = bases.sum(axis=1)
    signs = _f_sign_array(kappa)
    p_plus = 0.5 * (1.0 + signs * x_expect)
    product_is_minus = rng.random(count) >= p_plus  # parity of the outcome bits
    bits = rng.integers(0, 2, size=(count, n), dtype=np.uint8)
    partial = bits[:, :-1].sum(axis=1) % 2
    bits[:, -1] = (partial + product_is_minus) % 2
    return bits


def sample_round(
    state: GhzDiagonalState | DenseState,
    round_type: str,
    rng: np.random.Generator,
    sampling: str = "auto",
) -> RoundRecord:
    """Sample one protocol round from the exact outcome distribution."""
    n = state.n_parties if isinstance(state, GhzDiagonalState) else state.n_qubits
    if round_type == Z_ROUND:
        bits = sample_z_bits(state, 1, rng)[0]
        return RoundRecord(Z_ROUND, ("Z",) * n, tuple(1 - 2 * int(b) for b in bits), 0, True)
    if round_type != XY_ROUND:
        raise ValueError(f"unknown round type {round_type!r}")
    bases = rng.integers(0, 2, size=(1, n), dtype=np.uint8)
    bits = sample_xy_bits(state, bases, rng, sampling)[0]
    kappa = int(bases.sum())
    return RoundRecord(
        XY_ROUND,
        tuple("Y" if b else "X" for b in bases[0]),
        tuple(1 - 2 * int(b) for b in bits),
        kappa,
        kappa % 2 == 0,
    )


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

def _estimate_qx_arrays(bases: np.ndarray, bits: np.ndarray) -> tuple[float, int, int, int]:
    kappa = bases.sum(axis=1)
    signs = _f_sign_array(kappa)
    kept = signs != 0
    if not kept.any():
        raise ValueError("no parity rounds with an even Y count")
    products = 1 - 2 * (bits[kept].sum(axis=1) % 2).astype(np.int64)
    signed = signs[kept] * products
    n_plus = int((signed > 0).sum())
    n_minus = int((signed < 0).sum())
    x_hat = (n_plus - n_minus) / (n_plus + n_minus)
    return 0.5 * (1.0 - x_hat), n_plus, n_minus, int(kept.sum())


def estimate_qx(records: Sequence[RoundRecord]) -> tuple[float, int, int]:
    """Parity error estimate from kept second-type rounds.

    Alice's flip for Y counts that are not multiples of four enters as
    the sign f(kappa); rounds with odd kappa contribute nothing.
    """
    rows = [r for r in records if r.round_type == XY_ROUND]
    if not rows:
        raise ValueError("no second-type rounds")
    bases = np.array([[1 if b == "Y" else 0 for b in r.bases] for r in rows], dtype=np.uint8)
    bits = np.array([[(1 - a) // 2 for a in r.outcomes] for r in rows], dtype=np.uint8)
    q_x, n_plus, n_minus, _ = _estimate_qx_arrays(bases, bits)
    return q_x, n_plus, n_minus


def _estimate_qz_arrays(bits: np.ndarray) -> tuple[float, np.ndarray]:
    if bits.shape[0] == 0:
        raise ValueError("no announced Z rounds")
    diff = bits[:, 1:] != bits[:, :1]
    return float(diff.any(axis=1).mean()), diff.mean(axis=0)


def estimate_qz(records: Sequence[RoundRecord]) -> tuple[float, list[float]]:
    """(Q_Z, per-Bob Q_AB) estimates from announced Z rounds."""
    rows = [r for r in records if r.round_type == Z_ROUND]
    if not rows:
        raise ValueError("no Z rounds")
    bits = np.array([[(1 - a) // 2 for a in r.outcomes] for r in rows], dtype=np.uint8)
    q_z, q_ab = _estimate_qz_arrays(bits)
    return q_z, q_ab.tolist()


def classical_depolarize(z_bits: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Flip a random half of the Z rounds identically for all parties.

    Returns (flipped bits, announced flip mask).  Agreement patterns,
    and therefore every estimator, are unchanged; Alice's marginal key
    becomes uniform.
    """
    z_bits = np.asarray(z_bits, dtype=np.uint8)
    mask = rng.integers(0, 2, size=z_bits.shape[0], dtype=np.uint8)
    return z_bits ^ mask[:, None], mask


# ---------------------------------------------------------------------------
# Accounting and the full run
# ---------------------------------------------------------------------------

def _schedule_rng_streams(config: ProtocolConfig) -> list[np.random.Generator]:
    seq = np.random.SeedSequence(config.seed)
    return [np.random.default_rng(s) for s in seq.spawn(5)]


def round_type_schedule(config: ProtocolConfig) -> np.ndarray:
    """Boolean mask over rounds; True marks a second-type (parity) round."""
    schedule_rng = _schedule_rng_streams(config)[0]
    return schedule_rng.random(config.n_rounds) < config.p_estimation


def preshared_key_accounting(config: ProtocolConfig, second_type_rounds: int | None = None) -> ResourceLedger:
    """Ledger of secret-bit and round consumption for one run.

    Marking the second-type rounds costs L*h(p) pre-shared bits (the
    marker string compresses to that); parameter estimation consumes the
    parity rounds plus an equally sized announced subset of Z rounds.
    """
    if second_type_rounds is None:
        second_type_rounds = int(round_type_schedule(config).sum())
    announced = config.announced_z_rounds
    if announced is None:
        announced = second_type_rounds
    announced = min(announced, config.n_rounds - second_type_rounds)
    return ResourceLedger(
        n_rounds=config.n_rounds,
        preshared_key_bits=config.n_rounds * binary_entropy(config.p_estimation),
        second_type_rounds=second_type_rounds,
        announced_z_rounds=announced,
        key_rounds=config.n_rounds - second_type_rounds - announced,
    )


def toeplitz_hash(bits: np.ndarray, out_len: int, rng: np.random.Generator) -> np.ndarray:
    """Two-universal hash: multiply by a random Toeplitz matrix over GF(2)."""
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.size
    if out_len < 0 or out_len > n:
        raise ValueError(f"output length {out_len} outside [0, {n}]")
    if out_len == 0:
        return np.zeros(0, dtype=np.uint8)
    diagonals = rng.integers(0, 2, size=n + out_len - 1, dtype=np.int64)
    full = np.convolve(diagonals, bits)
    return (full[n - 1 : n - 1 + out_len] % 2).astype(np.uint8)


@dataclass(frozen=True)
class ProtocolResult:
    config: ProtocolConfig
    estimate: EstimationResult
    ledger: ResourceLedger
    rate_report: RateReport
    key_length_estimate: float
    discard_fraction: float
    key_bits: np.ndarray          # Alice's flipped key-round bits
    flip_mask: np.ndarray
    hashed_key: np.ndarray | None

    def summary_json(self) -> str:
        return json.dumps(
            {
                "n_parties": self.config.n_parties,
                "n_rounds": self.config.n_rounds,
                "p_estimation": self.config.p_estimation,
                "seed": self.config.seed,
                "estimates": {
                    "q_z": self.estimate.q_z_hat,
                    "q_x": self.estimate.q_x_hat,
                    "q_ab": list(self.estimate.q_ab_hat),
                    "n_plus": self.estimate.n_plus,
                    "n_minus": self.estimate.n_minus,
                    "z_rounds_used": self.estimate.z_rounds_used,
                    "xy_rounds_total": self.estimate.xy_rounds_total,
                    "xy_rounds_kept": self.estimate.xy_rounds_kept,
                },
                "ledger": {
                    "n_rounds": self.ledger.n_rounds,
                    "preshared_key_bits": self.ledger.preshared_key_bits,
                    "second_type_rounds": self.ledger.second_type_rounds,
                    "announced_z_rounds": self.ledger.announced_z_rounds,
                    "key_rounds": self.ledger.key_rounds,
                },
                "secret_fraction": self.rate_report.r_inf,
                "secret_fraction_clamped": self.rate_report.r_clamped,
                "key_length_estimate": self.key_length_estimate,
                "discard_fraction": self.discard_fraction,
                "hashed_key_bits": None if self.hashed_key is None else len(self.hashed_key),
            },
            indent=2,
        )


class ProtocolRun:
    """All sampled rounds of one protocol execution, kept as flat arrays."""

    def __init__(self, config: ProtocolConfig):
        self.config = config
        schedule_rng, z_rng, xy_rng, subset_rng, post_rng = _schedule_rng_streams(config)
        self.is_xy = schedule_rng.random(config.n_rounds) < config.p_estimation
        n = config.n_parties
        xy_count = int(self.is_xy.sum())
        z_count = config.n_rounds - xy_count

        self.z_bits = _sharded(
            lambda r, c: sample_z_bits(config.state, c, r), z_rng, z_count, config.shards, n
        )
        self.xy_bases = xy_rng.integers(0, 2, size=(xy_count, n), dtype=np.uint8)
        self.xy_bits = _sharded(
            lambda r, c, off: sample_xy_bits(config.state, self.xy_bases[off : off + c], r, config.sampling),
            xy_rng,
            xy_count,
            config.shards,
            n,
            with_offset=True,
        )
        self._subset_rng = subset_rng
        self._post_rng = post_rng

    def iter_round_records(self) -> Iterator[RoundRecord]:
        n = self.config.n_parties
        z_pos = 0
        xy_pos = 0
        for is_xy in self.is_xy:
            if is_xy:
                bases = tuple("Y" if b else "X" for b in self.xy_bases[xy_pos])
                bits = self.xy_bits[xy_pos]
                kappa = int(self.xy_bases[xy_pos].sum())
                yield RoundRecord(
                    XY_ROUND, bases, tuple(1 - 2 * int(b) for b in bits), kappa, kappa % 2 == 0
                )
                xy_pos += 1
            else:
                bits = self.z_bits[z_pos]
                yield RoundRecord(Z_ROUND, ("Z",) * n, tuple(1 - 2 * int(b) for b in bits), 0, True)
                z_pos += 1


def _sharded(sampler, rng: np.random.Generator, count: int, shards: int, n: int, with_offset: bool = False):
    """Split ``count`` samples over seed-derived substreams."""
    if shards == 1:
        return sampler(rng, count) if not with_offset else sampler(rng, count, 0)
    bounds = np.linspace(0, count, shards + 1).astype(int)
    streams = rng.spawn(shards)
    parts = []
    for i, stream in enumerate(streams):
        c = int(bounds[i + 1] - bounds[i])
        parts.append(sampler(stream, c) if not with_offset else sampler(stream, c, int(bounds[i])))
    return np.concatenate(parts) if parts else np.zeros((0, n), dtype=np.uint8)


def run_protocol(config: ProtocolConfig, hash_key: bool = False, run: ProtocolRun | None = None) -> ProtocolResult:
    """Execute a full protocol run and account for the resulting key.

    Error correction and privacy amplification enter as information
    accounting: the secret fraction of the measured error rates prices
    h(max Q_AB) bits of correction information per key bit and the
    corresponding amplification subtraction.  With ``hash_key`` the
    corrected string is additionally compressed through a seeded
    Toeplitz hash to the estimated length.
    """
    if run is None:
        run = ProtocolRun(config)
    z_count = run.z_bits.shape[0]
    xy_count = run.xy_bases.shape[0]
    if z_count == 0:
        raise ValueError("no Z rounds were scheduled; lower p_estimation or raise n_rounds")

    ledger = preshared_key_accounting(config, second_type_rounds=xy_count)
    announced = ledger.announced_z_rounds
    announced_idx = run._subset_rng.choice(z_count, size=announced, replace=False)
    key_mask = np.ones(z_count, dtype=bool)
    key_mask[announced_idx] = False

    q_z_hat, q_ab_hat = _estimate_qz_arrays(run.z_bits[announced_idx])
    q_x_hat, n_plus, n_minus, kept = _estimate_qx_arrays(run.xy_bases, run.xy_bits)
    estimate = EstimationResult(
        q_z_hat=q_z_hat,
        q_x_hat=min(q_x_hat, 1.0),
        q_ab_hat=tuple(q_ab_hat.tolist()),
        n_plus=n_plus,
        n_minus=n_minus,
        z_rounds_used=announced,
        xy_rounds_total=xy_count,
        xy_rounds_kept=kept,
    )

    key_rounds_bits, flip_mask = classical_depolarize(run.z_bits[key_mask], run._post_rng)
    report = secret_fraction(
        RateInput(
            q_z=estimate.q_z_hat,
            q_x=estimate.q_x_hat,
            q_ab=estimate.q_ab_hat,
            n_parties=config.n_parties,
        )
    )
    key_length = ledger.key_rounds * report.r_clamped
    alice_key = key_rounds_bits[:, 0].copy()
    hashed = None
    if hash_key:
        hashed = toeplitz_hash(alice_key, int(math.floor(key_length)), run._post_rng)
    return ProtocolResult(
        config=config,
        estimate=estimate,
        ledger=ledger,
        rate_report=report,
        key_length_estimate=key_length,
        discard_fraction=1.0 - kept / xy_count if xy_count else 0.0,
        key_bits=alice_key,
        flip_mask=flip_mask,
        hashed_key=hashed,
    )


def write_transcript(path: str, run: ProtocolRun) -> None:
    """Write one JSON round record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in run.iter_round_records():
            fh.write(record.to_json())
            fh.write("\n")


def protocol_config_from_json(obj: dict | str) -> ProtocolConfig:
    """Build a config from its JSON form (see README for the schema)."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    state_spec = obj["state"]
    n = int(obj["n_parties"])
    model = state_spec.get("model", "ghz_diagonal")
    if model == "depolarized":
        state = depolarized_state(n, float(state_spec["q"]))
    elif model == "pure_ghz":
        state = depolarized_state(n, 0.0)
    elif model == "ghz_diagonal":
        state = GhzDiagonalState(
            n, np.asarray(state_spec["lambda_plus"]), np.asarray(state_spec["lambda_minus"])
        )
    else:
        raise ValueError(f"unknown state model {model!r}")
    return ProtocolConfig(
        n_parties=n,
        n_rounds=int(obj["n_rounds"]),
        state=state,
        p_estimation=float(obj.get("p_estimation", 0.05)),
        seed=int(obj.get("seed", 0)),
        announced_z_rounds=obj.get("announced_z_rounds"),
        shards=int(obj.get("shards", 1)),
        sampling=obj.get("sampling", "auto"),
    )
