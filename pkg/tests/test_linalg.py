import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from natprob.linalg import (
    GOLDEN_GAMMA,
    MIX_MUL_1,
    MIX_MUL_2,
    LinearOp,
    Propagator,
    QuantumState,
    SplitMix64,
    X,
    Z,
    basis_state,
    embed_op,
    hermitian_evolve,
    is_projector,
    ket,
    partial_trace,
    random_density,
    random_projector,
    random_unit_vector,
    random_unit_vectors,
    schmidt_coefficients,
    tensor,
)

M64 = 2**64 - 1


def splitmix_reference(seed: int, count: int) -> list[int]:
    """Textbook stateful SplitMix64 in Python integers."""
    out, state = [], seed
    for _ in range(count):
        state = (state + GOLDEN_GAMMA) & M64
        z = state
        z = ((z ^ (z >> 30)) * MIX_MUL_1) & M64
        z = ((z ^ (z >> 27)) * MIX_MUL_2) & M64
        out.append(z ^ (z >> 31))
    return out


seeds = st.integers(min_value=0, max_value=M64)


# -- PRNG ---------------------------------------------------------------------


@given(seeds)
def test_splitmix_matches_reference(seed):
    got = SplitMix64(seed).next_u64(6).tolist()
    assert got == splitmix_reference(seed, 6)


def test_splitmix_frozen_outputs():
    # first outputs for seed 0, from the reference implementation
    assert SplitMix64(0).next_u64(3).tolist() == [
        0xE220A8397B1DCDAF,
        0x6E789E6AA1B965F4,
        0x06C45D188009454F,
    ]


def test_splitmix_counter_is_split_invariant():
    a = SplitMix64(99)
    whole = a.next_u64(10)
    b = SplitMix64(99)
    parts = np.concatenate([b.next_u64(3), b.next_u64(7)])
    np.testing.assert_array_equal(whole, parts)


def test_uniforms_in_unit_interval_and_deterministic():
    u = SplitMix64(5).random(1000)
    assert u.min() >= 0 and u.max() < 1
    np.testing.assert_array_equal(u, SplitMix64(5).random(1000))


def test_children_are_distinct_and_reproducible():
    root = SplitMix64(1)
    c0, c1 = root.child(0), root.child(1)
    assert c0.seed != c1.seed
    assert SplitMix64(1).child(0).seed == c0.seed
    assert root.counter == 0


def test_normals_moments():
    z = SplitMix64(3).standard_normal(20000)
    assert abs(z.mean()) < 0.03
    assert abs(z.var() - 1) < 0.04


@given(seeds, st.integers(1, 40))
def test_permutation_is_permutation(seed, n):
    perm = SplitMix64(seed).permutation(n)
    assert sorted(perm.tolist()) == list(range(n))


@given(seeds, st.integers(-5, 5), st.integers(1, 20))
def test_integers_in_range(seed, low, width):
    vals = SplitMix64(seed).integers(low, low + width, size=50)
    assert vals.min() >= low and vals.max() < low + width


# -- states and tensor products -------------------------------------------------


def test_tensor_basis_product():
    np.testing.assert_array_equal(tensor(ket("0"), ket("0")).amplitudes, [1, 0, 0, 0])


def test_tensor_plus_plus_uniform():
    np.testing.assert_allclose(tensor(ket("+"), ket("+")).amplitudes, np.full(4, 0.5), atol=1e-15)


@given(seeds)
def test_tensor_preserves_norm(seed):
    rng = SplitMix64(seed)
    u, v = random_unit_vector(3, rng), random_unit_vector(5, rng)
    w = tensor(u, v)
    assert w.dims == (3, 5)
    assert abs(np.linalg.norm(w.amplitudes) - 1) <= 1e-12


def test_site_zero_is_most_significant():
    assert basis_state(1, (2, 2)).amplitudes.tolist() == ket("01").amplitudes.tolist()
    assert np.flatnonzero(ket("10").amplitudes).tolist() == [2]


def test_state_rejects_bad_norm_and_dims():
    with pytest.raises(ValueError):
        QuantumState(np.array([1.0, 1.0]), (2,))
    with pytest.raises(ValueError):
        QuantumState(np.array([1.0, 0, 0]), (2,))


def test_random_unit_vector_dim_one_and_zero():
    v = random_unit_vector(1, SplitMix64(0))
    assert abs(abs(v.amplitudes[0]) - 1) < 1e-15
    with pytest.raises(ValueError):
        random_unit_vector(0, SplitMix64(0))


def test_random_unit_vector_same_seed_bitwise():
    a = random_unit_vector(8, SplitMix64(42)).amplitudes
    b = random_unit_vector(8, SplitMix64(42)).amplitudes
    assert a.tobytes() == b.tobytes()


def test_batched_vectors_match_sequential():
    batch = random_unit_vectors(4, 5, SplitMix64(8))
    rng = SplitMix64(8)
    seq = np.stack([random_unit_vector(4, rng).amplitudes for _ in range(5)])
    np.testing.assert_allclose(batch, seq, atol=1e-15)


def test_dn_law_rank_one_dim_four():
    vecs = random_unit_vectors(4, 10_000, SplitMix64(2024))
    mean = np.mean(np.abs(vecs[:, 0]) ** 2)
    assert abs(mean - 0.25) <= 0.015


# -- operators ----------------------------------------------------------------


def test_embed_z_site_zero():
    np.testing.assert_array_equal(embed_op(Z, [0], (2, 2)), np.diag([1, 1, -1, -1]))


def test_embed_x_site_one_flips_last_bit():
    out = embed_op(X, [1], (2, 2)) @ ket("00").amplitudes
    np.testing.assert_array_equal(out, ket("01").amplitudes)


def test_embed_nonadjacent_two_site_op():
    cnot = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
    full = embed_op(cnot, [0, 2], (2, 2, 2))
    out = full @ ket("100").amplitudes
    np.testing.assert_array_equal(out, ket("101").amplitudes)


def test_embed_errors():
    with pytest.raises(ValueError):
        embed_op(np.eye(3), [0], (2, 2))
    with pytest.raises(ValueError):
        embed_op(X, [2], (2, 2))


def test_linear_op_support_dimension_checked():
    with pytest.raises(ValueError):
        LinearOp(np.eye(4), (2, 2, 2), frozenset({0}))


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_disjoint_embeddings_commute_exactly(seed):
    rng = SplitMix64(seed)
    P, Q = random_projector(2, 1, rng), random_projector(4, 2, rng)
    A = embed_op(P, [0], (2, 2, 2, 2))
    B = embed_op(Q, [1, 3], (2, 2, 2, 2))
    assert not np.any(A @ B - B @ A)


def test_is_projector_cases():
    assert is_projector(np.eye(3))
    assert not is_projector(np.diag([1, 0.5]))
    v = random_unit_vector(5, SplitMix64(1)).amplitudes
    assert is_projector(np.outer(v, v.conj()))


# -- partial trace ------------------------------------------------------------


def test_partial_trace_bell():
    bell = QuantumState.normalized(np.array([1, 0, 0, 1]), (2, 2))
    np.testing.assert_allclose(partial_trace(bell, [0], (2, 2)), np.eye(2) / 2, atol=1e-15)


def test_partial_trace_product_keeps_plus():
    psi = tensor(ket("0"), ket("+"))
    plus = ket("+").amplitudes
    np.testing.assert_allclose(partial_trace(psi, [1], (2, 2)), np.outer(plus, plus), atol=1e-15)


@given(seeds)
def test_partial_trace_spectrum_is_schmidt(seed):
    psi = random_unit_vector(8, SplitMix64(seed), (2, 2, 2))
    rho = partial_trace(psi, [0, 1], (2, 2, 2))
    ev = np.sort(np.linalg.eigvalsh(rho))[::-1][:2]
    s = schmidt_coefficients(psi, [0, 1], (2, 2, 2))
    np.testing.assert_allclose(ev, np.sort(s**2)[::-1][:2], atol=1e-12)
    assert abs(np.trace(rho) - 1) <= 1e-12
    assert np.linalg.eigvalsh(rho).min() >= -1e-10


@given(seeds)
def test_partial_trace_of_density_preserves_trace(seed):
    rho = random_density(8, SplitMix64(seed))
    red = partial_trace(rho, [2], (2, 2, 2))
    assert abs(np.trace(red) - np.trace(rho)) <= 1e-12


def test_partial_trace_rejects_bad_sites():
    with pytest.raises(ValueError):
        partial_trace(ket("00"), [2], (2, 2))
    with pytest.raises(ValueError):
        partial_trace(ket("00"), [], (2, 2))


# -- evolution ----------------------------------------------------------------


def test_evolve_z_eigenstate_phase():
    out = hermitian_evolve(Z, np.pi / 2, ket("0"))
    np.testing.assert_allclose(out.amplitudes, [np.exp(-1j * np.pi / 2), 0], atol=1e-15)


def test_evolve_time_zero_is_identity():
    psi = random_unit_vector(4, SplitMix64(3), (2, 2))
    H = embed_op(X, [0], (2, 2)) + embed_op(Z, [1], (2, 2))
    np.testing.assert_allclose(hermitian_evolve(H, 0.0, psi).amplitudes, psi.amplitudes, atol=1e-15)


def test_evolve_x_quarter_period():
    out = hermitian_evolve(X, np.pi / 2, ket("0"))
    np.testing.assert_allclose(out.amplitudes, [0, -1j], atol=1e-15)


def test_evolve_rejects_non_hermitian():
    with pytest.raises(ValueError):
        Propagator(np.array([[0, 1], [0, 0]], dtype=complex))


@settings(max_examples=40, deadline=None)
@given(seeds, st.floats(-10, 10))
def test_evolution_preserves_inner_products(seed, t):
    rng = SplitMix64(seed)
    G = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    H = G + G.conj().T
    phi, psi = random_unit_vector(8, rng), random_unit_vector(8, rng)
    U = Propagator(H)
    before = np.vdot(phi.amplitudes, psi.amplitudes)
    after = np.vdot(U.apply(t, phi.amplitudes), U.apply(t, psi.amplitudes))
    assert abs(after - before) <= 1e-10
