"""Round sampling, estimators, post-processing and full protocol runs."""

import json

import numpy as np
import pytest

from nqkd.dense import DenseState, product_basis_probabilities
from nqkd.ghz import GhzDiagonalState, qber_pairwise_all, qber_x, qber_z
from nqkd.keyrate import threshold_qber
from nqkd.noise import depolarized_state
from nqkd.protocol import (
    ProtocolConfig,
    ProtocolRun,
    RoundRecord,
    classical_depolarize,
    estimate_qx,
    estimate_qz,
    f_sign,
    preshared_key_accounting,
    protocol_config_from_json,
    run_protocol,
    sample_round,
    sample_xy_bits,
    sample_z_bits,
    toeplitz_hash,
    write_transcript,
)


def three_sigma(p, n):
    return 3.0 * np.sqrt(max(p * (1 - p), 1e-12) / n)


def test_f_sign_values():
    assert [f_sign(k) for k in range(8)] == [1, 0, -1, 0, 1, 0, -1, 0]
    with pytest.raises(ValueError):
        f_sign(-1)


def test_z_sampling_pure_state():
    rng = np.random.default_rng(0)
    state = depolarized_state(3, 0.0)
    bits = sample_z_bits(state, 4000, rng)
    # perfectly correlated: every round is all-0 or all-1
    assert np.all((bits.sum(axis=1) == 0) | (bits.sum(axis=1) == 3))
    share = (bits[:, 0] == 1).mean()
    assert abs(share - 0.5) < three_sigma(0.5, 4000)


def test_z_sampling_depolarized_rate():
    rng = np.random.default_rng(1)
    state = depolarized_state(3, 0.3)
    bits = sample_z_bits(state, 30000, rng)
    any_differ = (bits[:, 1:] != bits[:, :1]).any(axis=1).mean()
    assert abs(any_differ - 0.3) < three_sigma(0.3, 30000)


def test_z_sampling_from_dense_state_matches():
    rng = np.random.default_rng(2)
    diag = depolarized_state(3, 0.3)
    from nqkd.ghz import dense_from_ghz_diagonal

    dense = dense_from_ghz_diagonal(diag)
    bits = sample_z_bits(dense, 30000, rng)
    any_differ = (bits[:, 1:] != bits[:, :1]).any(axis=1).mean()
    assert abs(any_differ - 0.3) < three_sigma(0.3, 30000)


def test_xy_sampling_pure_ghz_all_x():
    rng = np.random.default_rng(3)
    state = depolarized_state(3, 0.0)
    bases = np.zeros((2000, 3), dtype=np.uint8)  # all parties X
    bits = sample_xy_bits(state, bases, rng)
    products = 1 - 2 * (bits.sum(axis=1) % 2)
    assert np.all(products == 1)


def test_parity_shortcut_matches_dense_distribution():
    # the dense Born distribution of any X/Y product basis on a
    # symmetrised state is uniform within each parity class
    state = depolarized_state(3, 0.2)
    from nqkd.ghz import dense_from_ghz_diagonal

    dense = dense_from_ghz_diagonal(state)
    x_expect = float((state.lam_plus - state.lam_minus).sum())
    for combo in range(8):
        bases = [(combo >> (2 - q)) & 1 for q in range(3)]
        letters = "".join("y" if b else "x" for b in bases)
        probs = product_basis_probabilities(dense, letters)
        kappa = sum(bases)
        sign = f_sign(kappa)
        idx = np.arange(8)
        parity = 1 - 2 * ((idx ^ (idx >> 1) ^ (idx >> 2)) & 1)
        expected = (1 + sign * x_expect * parity) / 8.0
        assert np.abs(probs - expected).max() < 1e-12, letters


def test_parity_and_dense_samplers_statistically_agree():
    from nqkd.protocol import _estimate_qx_arrays

    state = depolarized_state(3, 0.2)
    n = 40000
    rng = np.random.default_rng(4)
    bases = rng.integers(0, 2, size=(n, 3), dtype=np.uint8)
    bits_dense = sample_xy_bits(state, bases, np.random.default_rng(5), method="dense")
    bits_parity = sample_xy_bits(state, bases, np.random.default_rng(6), method="parity")
    q_dense, _, _, kept_d = _estimate_qx_arrays(bases, bits_dense)
    q_parity, _, _, kept_p = _estimate_qx_arrays(bases, bits_parity)
    target = qber_x(state)
    assert abs(q_dense - target) < three_sigma(target, kept_d)
    assert abs(q_parity - target) < three_sigma(target, kept_p)


def test_parity_sampler_rejects_asymmetric_state():
    lam_plus = np.array([0.6, 0.3, 0.0, 0.0])
    lam_minus = np.array([0.0, 0.0, 0.1, 0.0])
    state = GhzDiagonalState(3, lam_plus, lam_minus)
    with pytest.raises(ValueError):
        sample_xy_bits(state, np.zeros((4, 3), dtype=np.uint8), np.random.default_rng(0), "parity")


def test_sample_round_records():
    rng = np.random.default_rng(7)
    state = depolarized_state(3, 0.1)
    z = sample_round(state, "Z", rng)
    assert z.round_type == "Z" and z.bases == ("Z", "Z", "Z") and z.kappa_tilde == 0 and z.kept
    xy = sample_round(state, "XY", rng)
    assert xy.round_type == "XY"
    assert set(xy.bases) <= {"X", "Y"}
    assert xy.kappa_tilde == sum(1 for b in xy.bases if b == "Y")
    assert xy.kept == (xy.kappa_tilde % 2 == 0)
    assert set(xy.outcomes) <= {-1, 1}
    with pytest.raises(ValueError):
        sample_round(state, "W", rng)


def test_estimate_qx_pure_state_is_exact_zero():
    rng = np.random.default_rng(8)
    state = depolarized_state(4, 0.0)
    records = [sample_round(state, "XY", rng) for _ in range(400)]
    q_x, n_plus, n_minus = estimate_qx(records)
    assert q_x == 0.0
    assert n_minus == 0
    assert n_plus == sum(1 for r in records if r.kept)


def test_estimate_qx_maximally_mixed():
    rng = np.random.default_rng(9)
    dim = 16
    state = DenseState.from_matrix(np.eye(dim) / dim)
    records = [sample_round(state, "XY", rng) for _ in range(4000)]
    q_x, n_plus, n_minus = estimate_qx(records)
    kept = n_plus + n_minus
    assert abs(q_x - 0.5) < three_sigma(0.5, kept)


def test_estimate_qx_depolarized():
    rng = np.random.default_rng(10)
    state = depolarized_state(4, 0.2)
    records = [sample_round(state, "XY", rng) for _ in range(6000)]
    q_x, n_plus, n_minus = estimate_qx(records)
    target = qber_x(state)
    assert target == pytest.approx(4 / 7 * 0.2, abs=1e-12)
    assert abs(q_x - target) < three_sigma(target, n_plus + n_minus)


def test_estimate_qx_requires_kept_rounds():
    record = RoundRecord("XY", ("X", "Y", "X"), (1, 1, 1), 1, False)
    with pytest.raises(ValueError):
        estimate_qx([record])
    with pytest.raises(ValueError):
        estimate_qx([])


def test_estimate_qz_values():
    rng = np.random.default_rng(11)
    clean = depolarized_state(3, 0.0)
    records = [sample_round(clean, "Z", rng) for _ in range(200)]
    q_z, q_ab = estimate_qz(records)
    assert q_z == 0.0 and q_ab == [0.0, 0.0]

    noisy = depolarized_state(3, 0.24)
    records = [sample_round(noisy, "Z", rng) for _ in range(20000)]
    q_z, q_ab = estimate_qz(records)
    assert abs(q_z - 0.24) < three_sigma(0.24, 20000)
    target_ab = 4 / 6 * 0.24
    for value in q_ab:
        assert abs(value - target_ab) < three_sigma(target_ab, 20000)
    with pytest.raises(ValueError):
        estimate_qz([])


def test_estimate_qz_orders_asymmetric_bobs():
    # extra weight on j = 10, which flips Bob 1 but not Bob 2
    lam_plus = np.array([0.60, 0.02, 0.16, 0.02])
    lam_minus = np.array([0.0, 0.02, 0.16, 0.02])
    total = lam_plus.sum() + lam_minus.sum()
    state = GhzDiagonalState(3, lam_plus / total, lam_minus / total)
    expected = qber_pairwise_all(state)
    assert expected[0] > expected[1]
    rng = np.random.default_rng(12)
    records = [sample_round(state, "Z", rng) for _ in range(20000)]
    _, q_ab = estimate_qz(records)
    assert q_ab[0] > q_ab[1]
    for est, ref in zip(q_ab, expected):
        assert abs(est - ref) < three_sigma(ref, 20000)


def test_classical_depolarize_properties():
    rng = np.random.default_rng(13)
    bits = np.zeros((5000, 3), dtype=np.uint8)  # all-zero outcomes
    flipped, mask = classical_depolarize(bits, rng)
    # all parties show exactly the announced mask
    for col in range(3):
        assert np.array_equal(flipped[:, col], mask)
    # Alice's marginal is uniform
    share = flipped[:, 0].mean()
    assert abs(share - 0.5) < three_sigma(0.5, 5000)
    # estimates are flip-invariant
    noisy = sample_z_bits(depolarized_state(3, 0.2), 5000, rng)
    flipped, _ = classical_depolarize(noisy, rng)
    from nqkd.protocol import _estimate_qz_arrays

    q1, ab1 = _estimate_qz_arrays(noisy)
    q2, ab2 = _estimate_qz_arrays(flipped)
    assert q1 == q2
    assert np.array_equal(ab1, ab2)


def test_accounting_formulas():
    state = depolarized_state(3, 0.0)
    config = ProtocolConfig(3, 100000, state, p_estimation=0.5, seed=0)
    ledger = preshared_key_accounting(config, second_type_rounds=50000)
    assert ledger.preshared_key_bits == pytest.approx(100000.0)
    config = ProtocolConfig(3, 100000, state, p_estimation=0.01, seed=0)
    ledger = preshared_key_accounting(config, second_type_rounds=1000)
    # direct entropy evaluation, frozen
    assert ledger.preshared_key_bits == pytest.approx(8079.313589591118, abs=1e-6)
    assert ledger.announced_z_rounds == 1000
    assert ledger.key_rounds == 98000
    small = ProtocolConfig(3, 100000, state, p_estimation=0.001, seed=0)
    assert preshared_key_accounting(small, 100).preshared_key_bits < 1200


def test_run_protocol_noiseless():
    state = depolarized_state(3, 0.0)
    result = run_protocol(ProtocolConfig(3, 10000, state, p_estimation=0.05, seed=3))
    assert result.estimate.q_z_hat == 0.0
    assert result.estimate.q_x_hat == 0.0
    assert result.rate_report.r_inf == pytest.approx(1.0)
    assert result.key_length_estimate == pytest.approx(result.ledger.key_rounds)


def test_run_protocol_above_threshold_clamps_to_zero():
    q = 0.25
    assert q > threshold_qber(3)
    state = depolarized_state(3, q)
    result = run_protocol(ProtocolConfig(3, 40000, state, seed=5))
    assert result.rate_report.r_inf < 0.0
    assert result.key_length_estimate == 0.0


def test_run_protocol_deterministic_per_seed():
    state = depolarized_state(3, 0.1)
    a = run_protocol(ProtocolConfig(3, 5000, state, seed=42))
    b = run_protocol(ProtocolConfig(3, 5000, state, seed=42))
    assert a.estimate == b.estimate
    assert np.array_equal(a.key_bits, b.key_bits)
    assert np.array_equal(a.flip_mask, b.flip_mask)
    c = run_protocol(ProtocolConfig(3, 5000, state, seed=43))
    assert not np.array_equal(a.key_bits, c.key_bits)
    # transcripts match round for round
    run1 = ProtocolRun(ProtocolConfig(3, 500, state, seed=9))
    run2 = ProtocolRun(ProtocolConfig(3, 500, state, seed=9))
    for r1, r2 in zip(run1.iter_round_records(), run2.iter_round_records()):
        assert r1 == r2


def test_run_protocol_sharded_reproducible():
    state = depolarized_state(3, 0.1)
    a = run_protocol(ProtocolConfig(3, 8000, state, seed=1, shards=4))
    b = run_protocol(ProtocolConfig(3, 8000, state, seed=1, shards=4))
    assert a.estimate == b.estimate
    # shard count is part of the reproducibility contract, not equality
    target = qber_z(state)
    assert abs(a.estimate.q_z_hat - target) < three_sigma(target, a.estimate.z_rounds_used)


def test_discard_rule_half():
    state = depolarized_state(3, 0.1)
    result = run_protocol(ProtocolConfig(3, 60000, state, p_estimation=0.3, seed=17))
    total = result.estimate.xy_rounds_total
    assert abs(result.discard_fraction - 0.5) < three_sigma(0.5, total)


def test_estimator_consistency_shrinking_bands():
    # the estimates land inside 3-sigma bands that shrink as 1/sqrt(L),
    # and the implied rate approaches the closed form
    from nqkd.keyrate import rate_depolarized

    q = 0.1
    state = depolarized_state(3, q)
    target_rate = rate_depolarized(q, 3)
    for n_rounds in (10**4, 10**5, 10**6):
        result = run_protocol(ProtocolConfig(3, n_rounds, state, seed=31))
        est = result.estimate
        assert abs(est.q_z_hat - q) < three_sigma(q, est.z_rounds_used)
        assert abs(est.q_x_hat - 2 / 3 * q) < three_sigma(2 / 3 * q, est.xy_rounds_kept)
    # combined sensitivity of the rate to all four estimates keeps the
    # million-round figure within ~0.03
    assert abs(result.rate_report.r_inf - target_rate) < 0.03


def test_basis_rule_equivalence():
    """Alice's deterministic basis rule reproduces discard-and-flip sampling."""
    state = depolarized_state(3, 0.15)
    n_rounds = 30000
    from nqkd.protocol import _estimate_qx_arrays

    rng = np.random.default_rng(21)
    free_bases = rng.integers(0, 2, size=(n_rounds, 3), dtype=np.uint8)
    free_bits = sample_xy_bits(state, free_bases, rng)
    q_free, _, _, kept_free = _estimate_qx_arrays(free_bases, free_bits)

    rule_rng = np.random.default_rng(22)
    bob_bases = rule_rng.integers(0, 2, size=(n_rounds, 2), dtype=np.uint8)
    kappa = bob_bases.sum(axis=1)
    alice_is_y = np.isin(kappa % 4, (1, 3)).astype(np.uint8)
    rule_bases = np.column_stack([alice_is_y, bob_bases])
    assert np.all(rule_bases.sum(axis=1) % 2 == 0)  # every round is kept
    rule_bits = sample_xy_bits(state, rule_bases, rule_rng)
    q_rule, _, _, kept_rule = _estimate_qx_arrays(rule_bases, rule_bits)
    assert kept_rule == n_rounds

    target = qber_x(state)
    sigma = np.sqrt(
        target * (1 - target) / kept_free + target * (1 - target) / kept_rule
    )
    assert abs(q_free - q_rule) < 3.0 * sigma


def test_round_record_json_roundtrip():
    record = RoundRecord("XY", ("X", "Y", "Y"), (1, -1, -1), 2, True)
    back = RoundRecord.from_json(record.to_json())
    assert back == record


def test_transcript_file(tmp_path):
    state = depolarized_state(3, 0.1)
    config = ProtocolConfig(3, 300, state, seed=2)
    run = ProtocolRun(config)
    path = tmp_path / "transcript.jsonl"
    write_transcript(str(path), run)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 300
    records = [RoundRecord.from_json(line) for line in lines]
    for record in records:
        if record.round_type == "Z":
            assert record.bases == ("Z", "Z", "Z")
        else:
            assert set(record.bases) <= {"X", "Y"}
            assert record.kept == (record.kappa_tilde % 2 == 0)
    assert sum(r.round_type == "XY" for r in records) == run.xy_bases.shape[0]


def test_summary_json_schema():
    state = depolarized_state(3, 0.1)
    result = run_protocol(ProtocolConfig(3, 2000, state, seed=4))
    obj = json.loads(result.summary_json())
    assert obj["n_parties"] == 3
    assert obj["estimates"]["n_plus"] + obj["estimates"]["n_minus"] == obj["estimates"]["xy_rounds_kept"]
    assert obj["ledger"]["key_rounds"] + obj["ledger"]["second_type_rounds"] + obj["ledger"][
        "announced_z_rounds"
    ] == obj["ledger"]["n_rounds"]


def test_toeplitz_hash_properties():
    rng = np.random.default_rng(30)
    x = rng.integers(0, 2, 200, dtype=np.uint8)
    y = rng.integers(0, 2, 200, dtype=np.uint8)
    h_seed = 77
    hx = toeplitz_hash(x, 64, np.random.default_rng(h_seed))
    hy = toeplitz_hash(y, 64, np.random.default_rng(h_seed))
    hxy = toeplitz_hash(x ^ y, 64, np.random.default_rng(h_seed))
    assert hx.size == 64
    assert np.array_equal(hx ^ hy, hxy)  # the hash is GF(2)-linear
    again = toeplitz_hash(x, 64, np.random.default_rng(h_seed))
    assert np.array_equal(hx, again)
    with pytest.raises(ValueError):
        toeplitz_hash(x, 300, np.random.default_rng(0))


def test_run_protocol_with_hashing():
    state = depolarized_state(3, 0.05)
    result = run_protocol(ProtocolConfig(3, 4000, state, seed=6), hash_key=True)
    assert result.hashed_key is not None
    assert result.hashed_key.size == int(result.key_length_estimate)


def test_config_validation():
    state = depolarized_state(3, 0.1)
    with pytest.raises(ValueError):
        ProtocolConfig(4, 100, state)
    with pytest.raises(ValueError):
        ProtocolConfig(3, 0, state)
    with pytest.raises(ValueError):
        ProtocolConfig(3, 100, state, p_estimation=0.0)
    with pytest.raises(ValueError):
        ProtocolConfig(3, 100, state, shards=0)
    with pytest.raises(ValueError):
        ProtocolConfig(3, 100, state, sampling="magic")


def test_config_from_json():
    config = protocol_config_from_json(
        {
            "n_parties": 3,
            "n_rounds": 500,
            "p_estimation": 0.1,
            "seed": 9,
            "state": {"model": "depolarized", "q": 0.2},
        }
    )
    assert config.n_rounds == 500
    assert qber_z(config.state) == pytest.approx(0.2)
    pure = protocol_config_from_json(
        '{"n_parties": 2, "n_rounds": 10, "state": {"model": "pure_ghz"}}'
    )
    assert pure.state.lam_plus[0] == 1.0
    explicit = protocol_config_from_json(
        {
            "n_parties": 2,
            "n_rounds": 10,
            "state": {"model": "ghz_diagonal", "lambda_plus": [0.7, 0.1], "lambda_minus": [0.1, 0.1]},
        }
    )
    assert explicit.state.lam_minus[1] == 0.1
    with pytest.raises(ValueError):
        protocol_config_from_json(
            {"n_parties": 2, "n_rounds": 10, "state": {"model": "nonsense"}}
        )
