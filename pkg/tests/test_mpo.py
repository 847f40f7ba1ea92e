from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choistitch.linalg import BELL_STATE, partial_trace, random_choi, random_unitary
from choistitch.mpo import (
    LocalSuperop,
    MpoChoi,
    TruncationPolicy,
    apply_superop,
    bell_product_mpo,
    compress,
    dense_from_mpo,
    mpo_from_dense,
    overlap,
    product_mpo,
    purity,
    reversed_mpo,
    trace,
    weight_resolved_diagonals,
    window_marginal,
)
from choistitch.simulate import CircuitSpec, base_gate, circuit_choi

from helpers import brute_force_g, dephasing_choi, random_mpo_dense, unitary_choi

Z = np.diag([1.0, -1.0])
X = np.array([[0.0, 1.0], [1.0, 0.0]])


def on_out(u):
    """Lift a unitary on k output qubits to the doubled sites (identity on the inputs)."""
    k = round(np.log2(u.shape[0]))
    full = np.kron(np.eye(2**k), u)
    from choistitch.linalg import interleave_in_out

    return interleave_in_out(full, k)


def test_bell_product_examples():
    m = bell_product_mpo(1)
    assert np.abs(dense_from_mpo(m) - BELL_STATE).max() < 1e-15
    assert abs(purity(m) - 1) < 1e-14
    m3 = bell_product_mpo(3)
    assert m3.bond_dims == [1, 1]
    assert np.abs(window_marginal(m3, [2]) - BELL_STATE).max() < 1e-15
    assert np.abs(window_marginal(m3, [0, 1, 2]) - np.kron(np.kron(BELL_STATE, BELL_STATE), BELL_STATE)).max() < 1e-15
    assert abs(weight_resolved_diagonals(bell_product_mpo(2), 0)[0] - 1) < 1e-14
    with pytest.raises(ValueError):
        bell_product_mpo(0)


def test_identity_channel_g_is_flat():
    g = weight_resolved_diagonals(bell_product_mpo(5), 5)
    assert np.abs(g - 1).max() < 1e-12


def test_mpo_rejects_bad_boundaries():
    t = np.zeros((2, 4, 4, 1))
    with pytest.raises(ValueError):
        MpoChoi((t,))
    with pytest.raises(ValueError):
        MpoChoi((np.zeros((1, 4, 4, 2)), np.zeros((3, 4, 4, 1))))


def test_identity_superop_leaves_mpo_unchanged(rng):
    dense = random_mpo_dense(3, rng)
    m = mpo_from_dense(dense)
    out = apply_superop(m, LocalSuperop(np.eye(256), 1), TruncationPolicy(1e-12))
    assert np.abs(dense_from_mpo(out) - dense).max() < 1e-12


def test_single_site_z_conjugation():
    m = apply_superop(bell_product_mpo(2), LocalSuperop.conjugation(on_out(Z), 1), TruncationPolicy())
    expected = np.kron(BELL_STATE, unitary_choi(Z))
    assert np.abs(dense_from_mpo(m) - expected).max() < 1e-12


def test_two_site_iswap_conjugation():
    u = base_gate()
    m = apply_superop(bell_product_mpo(2), LocalSuperop.conjugation(on_out(u), 0), TruncationPolicy())
    assert np.abs(dense_from_mpo(m) - unitary_choi(u)).max() < 1e-12


def test_apply_superop_support_out_of_range():
    with pytest.raises(ValueError):
        apply_superop(bell_product_mpo(2), LocalSuperop(np.eye(256), 1), TruncationPolicy())


def test_trace_preserved_by_tp_superops(rng):
    m = bell_product_mpo(5)
    policy = TruncationPolicy()
    for _ in range(12):
        start = int(rng.integers(0, 4))
        m = apply_superop(m, LocalSuperop.conjugation(on_out(random_unitary(4, rng)), start), policy)
        m = compress(m, policy)
    assert abs(trace(m) - 1) < 1e-6


def test_compress_bond_one_unchanged():
    m = bell_product_mpo(4)
    c = compress(m, TruncationPolicy())
    assert c.bond_dims == [1, 1, 1]
    assert np.abs(dense_from_mpo(c) - dense_from_mpo(m)).max() < 1e-14


def test_compress_removes_zero_padding(rng):
    m = mpo_from_dense(random_mpo_dense(3, rng))
    dims = m.bond_dims
    ts = list(m.tensors)
    padded = []
    for j, t in enumerate(ts):
        dl = t.shape[0] + (2 if j > 0 else 0)
        dr = t.shape[3] + (2 if j < len(ts) - 1 else 0)
        p = np.zeros((dl, 4, 4, dr), dtype=complex)
        p[: t.shape[0], :, :, : t.shape[3]] = t
        padded.append(p)
    pm = MpoChoi(tuple(padded))
    assert pm.bond_dims == [d + 2 for d in dims]
    c = compress(pm, TruncationPolicy())
    assert c.bond_dims == dims
    assert np.abs(dense_from_mpo(c) - dense_from_mpo(m)).max() < 1e-12


def test_compress_random_four_site(rng):
    dense = random_mpo_dense(4, rng)
    m = mpo_from_dense(dense)
    c = compress(m, TruncationPolicy(1e-7))
    assert np.linalg.norm(dense_from_mpo(c) - dense) < 1e-5


def test_compress_respects_threshold_and_cap(rng):
    dense = random_mpo_dense(4, rng)
    m = mpo_from_dense(dense)
    c = compress(m, TruncationPolicy(1e-7, max_bond=3))
    assert c.max_bond <= 3
    assert np.linalg.norm(dense_from_mpo(c) - dense) < np.linalg.norm(dense)


def test_window_marginal_matches_partial_trace(rng):
    dense = random_mpo_dense(4, rng)
    m = mpo_from_dense(dense)
    for window in ([0], [1, 2], [1, 2, 3], [3]):
        ref = partial_trace(dense, [4] * 4, keep=window)
        assert np.abs(window_marginal(m, window) - ref).max() < 1e-12


def test_window_marginal_errors():
    m = bell_product_mpo(8)
    with pytest.raises(ValueError):
        window_marginal(m, [0, 2])
    with pytest.raises(ValueError):
        window_marginal(m, range(6))
    with pytest.raises(ValueError):
        window_marginal(m, [7, 8])


def test_marginal_consistency_nested_windows():
    m = circuit_choi(CircuitSpec(6, 0.01, 4.0, seed=3))
    for start in range(4):
        big = window_marginal(m, range(start, start + 3))
        for keep in ([0, 1], [1, 2], [1]):
            sub = window_marginal(m, [start + j for j in keep])
            assert np.abs(partial_trace(big, [4, 4, 4], keep=keep) - sub).max() < 1e-8


def test_purity_examples():
    assert abs(purity(mpo_from_dense(dephasing_choi(0.3))) - 0.58) < 1e-12
    two = product_mpo([mpo_from_dense(dephasing_choi(0.3))] * 2)
    assert abs(purity(two) - 0.3364) < 1e-12
    assert abs(purity(bell_product_mpo(7)) - 1) < 1e-12


def test_purity_matches_dense(rng):
    dense = random_mpo_dense(3, rng)
    m = mpo_from_dense(dense)
    assert abs(purity(m) - np.trace(dense @ dense).real) < 1e-12
    assert abs(overlap(m, m) - purity(m)) < 1e-10


def test_overlap_examples(rng):
    assert abs(overlap(bell_product_mpo(3), bell_product_mpo(3)) - 1) < 1e-14
    x_choi = mpo_from_dense(unitary_choi(X))
    assert abs(overlap(x_choi, bell_product_mpo(1))) < 1e-14
    a, b = mpo_from_dense(random_mpo_dense(2, rng)), mpo_from_dense(random_mpo_dense(2, rng))
    assert abs(overlap(a, b) - overlap(b, a)) < 1e-14
    with pytest.raises(ValueError):
        overlap(a, bell_product_mpo(3))


def test_purity_invariant_under_local_unitaries(rng):
    m = circuit_choi(CircuitSpec(4, 0.01, 2.0))
    p0 = purity(m)
    for site in range(4):
        u = LocalSuperop.conjugation(on_out(random_unitary(2, rng)), site)
        m = apply_superop(m, u, TruncationPolicy(1e-12))
    assert abs(purity(m) - p0) < 1e-10


def test_weight_resolved_diagonals_dephasing():
    g = weight_resolved_diagonals(mpo_from_dense(dephasing_choi(0.3)), 1)
    assert np.abs(g - [0.7, 1.0]).max() < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_weight_resolved_diagonals_brute_force(n, rng):
    if n == 4:
        m = circuit_choi(CircuitSpec(4, 0.01, 8.0, seed=1))
    else:
        m = mpo_from_dense(random_choi(n, rng, kraus_rank=3))
    g = weight_resolved_diagonals(m, n)
    assert np.abs(g - brute_force_g(dense_from_mpo(m))).max() < 1e-8
    assert np.all(np.diff(g) >= -1e-12)
    assert abs(g[-1] - 1) < 1e-8


def test_weight_resolved_diagonals_truncated_register(rng):
    m = mpo_from_dense(random_choi(3, rng, kraus_rank=4))
    full = weight_resolved_diagonals(m, 3)
    assert np.abs(weight_resolved_diagonals(m, 1) - full[:2]).max() < 1e-12
    with pytest.raises(ValueError):
        weight_resolved_diagonals(m, 4)


def test_dense_round_trips(rng):
    bell = dense_from_mpo(bell_product_mpo(2))
    assert np.abs(dense_from_mpo(mpo_from_dense(bell)) - bell).max() < 1e-15
    dense = random_choi(3, rng)
    assert np.abs(dense_from_mpo(mpo_from_dense(dense)) - dense).max() < 1e-10
    with pytest.raises(ValueError):
        dense_from_mpo(bell_product_mpo(6))


def test_rank_one_choi_bond_is_squared_schmidt_rank(rng):
    # controlled-Z has operator Schmidt rank 2, so its pure Choi needs bond 2^2 = 4
    cz = np.diag([1.0, 1.0, 1.0, -1.0])
    assert mpo_from_dense(unitary_choi(cz)).bond_dims == [4]
    u = random_unitary(4, rng)
    v = np.kron(np.eye(4), u) @ (np.eye(4).reshape(-1) / 2)
    # Schmidt rank of the pure Choi vector across the site cut (in1 out1 | in2 out2)
    psi = v.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    r = np.linalg.matrix_rank(psi, tol=1e-10)
    assert mpo_from_dense(unitary_choi(u)).bond_dims == [r * r]


def test_reversed_mpo(rng):
    dense = random_mpo_dense(3, rng)
    from choistitch.linalg import permute_subsystems

    rev = permute_subsystems(dense, [4, 4, 4], [2, 1, 0])
    assert np.abs(dense_from_mpo(reversed_mpo(mpo_from_dense(dense))) - rev).max() < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 4))
def test_random_unitary_layers_keep_unit_trace(seed, n):
    r = np.random.default_rng(seed)
    m = bell_product_mpo(n)
    for site in range(n - 1):
        m = apply_superop(m, LocalSuperop.conjugation(on_out(random_unitary(4, r)), site), TruncationPolicy())
    dense = dense_from_mpo(m)
    assert np.abs(dense - dense.conj().T).max() < 1e-8
    assert abs(np.trace(dense) - 1) < 1e-8
    assert abs(purity(m) - 1) < 1e-8
