import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from natprob.experiments import random_replacement_config
from natprob.linalg import (
    QuantumState,
    SplitMix64,
    embed_op,
    ghz,
    is_projector,
    ket,
    random_projector,
    random_unit_vector,
    tensor,
)
from natprob.spacetime import Region
from natprob.statements import (
    And,
    Leaf,
    LogicalExpr,
    Not,
    OrderedOperator,
    Or,
    ProjectionStatement,
    StructuralViolation,
    cond_prob,
    conjoin,
    expand,
    expr_operator,
    identity_statement,
    make_statement,
    negate,
    prob,
    record_permutation_check,
    registry,
    registry_from_json,
    registry_to_json,
    replacement_bound_report,
    truth_table,
    visibility_lower_bound,
    classicality_profile,
)

seeds = st.integers(0, 2**64 - 1)
P0 = np.diag([1, 0]).astype(complex)
P1 = np.diag([0, 1]).astype(complex)
PLUS = np.full((2, 2), 0.5, dtype=complex)


def two_site(seed):
    rng = SplitMix64(seed)
    dims = (2, 2)
    P = make_statement(random_projector(2, 1, rng), [0], dims, "P")
    Q = make_statement(random_projector(2, 1, rng), [1], dims, "Q")
    return P, Q, random_unit_vector(4, rng, dims)


# -- construction and negation --------------------------------------------------


def test_statement_requires_projector():
    with pytest.raises(ValueError):
        make_statement(np.diag([1, 0.5]), [0], (2,), "bad")


def test_region_must_match_support():
    with pytest.raises(ValueError):
        make_statement(P0, [0], (2, 2), "P", region=Region([(1, 0)]))


def test_negate_identity_is_zero_same_region():
    one = identity_statement((2, 2), Region([(0, 0)]))
    neg = negate(one)
    assert not np.any(neg.projector)
    assert neg.region == one.region


def test_negate_involution_exact():
    P, _, _ = two_site(1)
    assert np.array_equal(negate(negate(P)).projector, P.projector)
    assert negate(negate(P)).label == P.label


@given(seeds)
def test_prob_plus_prob_not_is_one(seed):
    P, _, psi = two_site(seed)
    reg = registry(P, negate(P))
    assert abs(prob("P", psi, reg) + prob("¬P", psi, reg) - 1) <= 1e-12


# -- conjunction ----------------------------------------------------------------


def test_spacelike_conjunction_plus_plus():
    dims = (2, 2)
    P = make_statement(P0, [0], dims, "P")
    Q = make_statement(P0, [1], dims, "Q")
    PQ = conjoin(P, Q)
    assert isinstance(PQ, ProjectionStatement)
    psi = tensor(ket("+"), ket("+"))
    assert abs(np.linalg.norm(PQ.projector @ psi.amplitudes) ** 2 - 0.25) <= 1e-15
    assert PQ.region == P.region | Q.region


def test_conjunction_with_identity_returns_p():
    P = make_statement(P0, [0], (2, 2), "P")
    one = identity_statement((2, 2), Region([(1, 0)]))
    assert np.array_equal(conjoin(P, one).projector, P.projector)


def test_time_ordered_pair_is_order_sensitive():
    later = make_statement(P0, [0], (2,), "P", t=1)
    earlier = make_statement(PLUS, [0], (2,), "Q", t=0)
    psi = ket("0").amplitudes
    pq = conjoin(later, earlier)
    qp = conjoin(earlier, later)
    assert isinstance(pq, OrderedOperator) and not pq.is_projector
    # later factor always lands on the left
    np.testing.assert_array_equal(pq.matrix, qp.matrix)
    assert abs(np.linalg.norm(P0 @ PLUS @ psi) ** 2 - 0.25) <= 1e-15
    assert abs(np.linalg.norm(PLUS @ P0 @ psi) ** 2 - 0.5) <= 1e-15
    assert abs(np.linalg.norm(pq.matrix @ psi) ** 2 - 0.25) <= 1e-15


def test_mixed_conjunction_rejected():
    P = make_statement(P0, [0], (2, 2), "P", region=Region([(0, 0), (0, 5)]))
    Q = make_statement(P0, [1], (2, 2), "Q", t=1)
    with pytest.raises(ValueError):
        conjoin(P, Q)


@given(seeds)
def test_spacelike_conjunction_commutes_and_associates(seed):
    rng = SplitMix64(seed)
    dims = (2, 2, 2)
    A, B, C = (make_statement(random_projector(2, 1, rng), [k], dims, "ABC"[k]) for k in range(3))
    assert np.array_equal(conjoin(A, B).projector, conjoin(B, A).projector)
    left = conjoin(conjoin(A, B), C).projector
    right = conjoin(A, conjoin(B, C)).projector
    np.testing.assert_allclose(left, right, atol=1e-15)


# -- expressions ------------------------------------------------------------------


def test_or_operator_formula():
    P, Q, _ = two_site(3)
    reg = registry(P, Q)
    op = expr_operator(Or(Leaf("P"), Leaf("Q")), reg)
    Pm, Qm = P.projector, Q.projector
    np.testing.assert_allclose(op, Pm + Qm - Pm @ Qm, atol=1e-12)
    assert is_projector(op)


def test_single_leaf_operator():
    P, Q, _ = two_site(4)
    np.testing.assert_array_equal(expr_operator("P", registry(P, Q)), P.projector)


def test_de_morgan_matrix_equality():
    P, Q, _ = two_site(5)
    reg = registry(P, Q)
    a = expr_operator(Not(And(Not(Leaf("P")), Not(Leaf("Q")))), reg)
    b = expr_operator(Or(Leaf("P"), Leaf("Q")), reg)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_expression_json_roundtrip_and_str():
    e = Or(Not(Leaf("A")), And(Leaf("B"), Leaf("C")))
    assert LogicalExpr.from_obj(e.to_obj()) == e
    assert sorted(e.leaves()) == ["A", "B", "C"]
    assert "A" in str(e)


def test_time_ordered_expression_puts_later_left():
    later = make_statement(P0, [0], (2,), "L", t=1)
    earlier = make_statement(PLUS, [0], (2,), "E", t=0)
    op = expr_operator(And(Leaf("E"), Leaf("L")), registry(later, earlier))
    np.testing.assert_allclose(op, P0 @ PLUS, atol=1e-15)


def test_truth_table_msb_first():
    t = truth_table(And(Leaf("A"), Not(Leaf("B"))), ["A", "B"])
    assert t.tolist() == [False, False, True, False]


@given(st.lists(st.booleans(), min_size=8, max_size=8))
def test_expansion_reproduces_commuting_operator(bits):
    rng = SplitMix64(sum(b << i for i, b in enumerate(bits)))
    dims = (2, 2, 2)
    stmts = [make_statement(random_projector(2, 1, rng), [k], dims, f"S{k}") for k in range(3)]
    table = np.array(bits)
    exp = expand(table, 3)
    from natprob.statements import apply_expansion

    mats = [s.projector for s in stmts]
    direct = np.zeros((8, 8), dtype=complex)
    for idx, on in enumerate(bits):
        if on:
            term = np.eye(8, dtype=complex)
            for k in range(3):
                bit = (idx >> (2 - k)) & 1
                term = term @ (mats[k] if bit else np.eye(8) - mats[k])
            direct += term
    psi = random_unit_vector(8, rng).amplitudes
    np.testing.assert_allclose(apply_expansion(exp, mats, psi), direct @ psi, atol=1e-12)
    assert exp.canonical_terms == sum(bits)


# -- probabilities ----------------------------------------------------------------


def test_prob_identity_and_ghz():
    psi = ghz(2)
    one = identity_statement((2, 2), Region([(9, 0)]), "1")
    P = make_statement(P0, [0], (2, 2), "P")
    Q = make_statement(P0, [1], (2, 2), "Q")
    reg = registry(one, P, Q)
    assert abs(prob("1", psi, reg) - 1) <= 1e-15
    assert abs(prob("P", psi, reg) - 0.5) <= 1e-15
    assert abs(cond_prob("P", "Q", psi, reg) - 1) <= 1e-12
    assert abs(cond_prob("P", "1", psi, reg) - prob("P", psi, reg)) <= 1e-15


@given(seeds)
def test_prob_additive_over_spacelike_complements(seed):
    P, Q, psi = two_site(seed)
    reg = registry(P, Q)
    split = prob(And(Leaf("Q"), Leaf("P")), psi, reg) + prob(And(Leaf("Q"), Not(Leaf("P"))), psi, reg)
    assert abs(split - prob("Q", psi, reg)) <= 1e-12


@given(seeds)
def test_product_state_independence(seed):
    rng = SplitMix64(seed)
    psi = tensor(random_unit_vector(2, rng), random_unit_vector(2, rng))
    P = make_statement(random_projector(2, 1, rng), [0], (2, 2), "P")
    Q = make_statement(random_projector(2, 1, rng), [1], (2, 2), "Q")
    reg = registry(P, Q)
    if prob("Q", psi, reg) < 1e-6:
        return
    assert abs(cond_prob("P", "Q", psi, reg) - prob("P", psi, reg)) <= 1e-12


def test_cond_prob_null_given_raises():
    P = make_statement(P0, [0], (2, 2), "P")
    Q = make_statement(P1, [1], (2, 2), "Q")
    with pytest.raises(ValueError):
        cond_prob("P", "Q", ket("00"), registry(P, Q))


# -- visibility -------------------------------------------------------------------


def test_visibility_ghz_perfect_record_is_capped():
    P = make_statement(P0, [0], (2, 2), "P")
    res = visibility_lower_bound(P, Region([(1, 0)]), ghz(2))
    assert res.capped and res.residual < 1e-12
    assert abs(res.value - (np.log(np.sqrt(0.5)) - np.log(1e-12))) <= 1e-12


def eta_state(eta):
    v = np.zeros(4, dtype=complex)
    v[0] = 1
    v[2] = np.sqrt(1 - eta)
    v[3] = np.sqrt(eta)
    return QuantumState.normalized(v, (2, 2))


def test_visibility_eta_example_candidate():
    eta = 0.96
    psi = eta_state(eta)
    P = make_statement(P1, [0], (2, 2), "P")
    cand = embed_op(P1, [1], (2, 2))
    residual = np.linalg.norm((P.projector - cand) @ psi.amplitudes)
    assert abs(residual - np.sqrt((1 - eta) / 2)) <= 1e-15
    assert abs(residual - 0.1414) <= 1e-4
    res = visibility_lower_bound(P, Region([(1, 0)]), psi)
    assert res.value >= np.log(np.sqrt(0.5)) - np.log(residual) - 1e-12
    assert res.value >= 1.609


def test_visibility_eta_exact_matches_helstrom_closed_form():
    # min residual² = ‖Pψ‖² − ½ sin θ with cos θ = √(1−η): the two conditional
    # states on site 1 are |0⟩ and √(1−η)|0⟩ + √η|1⟩, each with weight ½.
    eta = 0.96
    psi = eta_state(eta)
    P = make_statement(P1, [0], (2, 2), "P")
    closed = 0.5 * np.log(0.5) - 0.5 * np.log(0.5 - 0.5 * np.sqrt(eta))
    exact = visibility_lower_bound(P, Region([(1, 0)]), psi, method="exact")
    assert abs(exact.value - closed) <= 1e-12
    assert abs(closed - 1.9508) <= 1e-3
    grid = visibility_lower_bound(P, Region([(1, 0)]), psi, method="grid")
    assert grid.value <= exact.value + 1e-12
    assert exact.value - grid.value <= 5e-3


def test_visibility_null_p_is_zero():
    P = make_statement(P1, [0], (2, 2), "P")
    res = visibility_lower_bound(P, Region([(1, 0)]), ket("00"))
    assert res.value == 0.0


def test_visibility_rejects_multi_time_region():
    P = make_statement(P1, [0], (2, 2), "P")
    with pytest.raises(ValueError):
        visibility_lower_bound(P, Region([(1, 0), (1, 1)]), ghz(2))


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_visibility_monotone_in_region(seed):
    rng = SplitMix64(seed)
    dims = (2, 2, 2)
    psi = random_unit_vector(8, rng, dims)
    P = make_statement(random_projector(2, 1, rng), [0], dims, "P")
    small = visibility_lower_bound(P, Region([(1, 0)]), psi, method="exact")
    big = visibility_lower_bound(P, Region([(1, 0), (2, 0)]), psi, method="exact")
    assert small.value <= big.value + 1e-9


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_exact_candidate_beats_every_random_projector(seed):
    rng = SplitMix64(seed)
    dims = (2, 2, 2)
    psi = random_unit_vector(8, rng, dims)
    P = make_statement(random_projector(2, 1, rng), [0], dims, "P")
    best = visibility_lower_bound(P, Region([(1, 0), (2, 0)]), psi, method="exact")
    for rank in range(5):
        Pp = embed_op(random_projector(4, rank, rng), [1, 2], dims)
        r = np.linalg.norm((P.projector - Pp) @ psi.amplitudes)
        assert best.residual <= r + 1e-12


def test_classicality_profile_ghz_all_capped():
    psi = ghz(5)
    dims = (2,) * 5
    P = make_statement(P0, [0], dims, "P", t=0)
    regions = [Region([(k, 5)]) for k in range(1, 5)]
    prof = classicality_profile(P, regions, psi)
    assert all(r.capped for r in prof.results)
    assert prof.flags == []
    assert prof.score == min(prof.values)


def test_classicality_profile_product_state_has_no_records():
    psi = tensor(ket("+"), *[ket("+")] * 4)
    dims = (2,) * 5
    P = make_statement(P0, [0], dims, "P", t=0)
    pos = {0: 0, 1: -15, 2: -5, 3: 5, 4: 15}
    regions = [Region([(pos[k], 30)]) for k in range(1, 5)]
    prof = classicality_profile(P, regions, psi, positions=pos)
    # best a product region can do is P' ∈ {0, 1}: residual ‖Pψ‖, visibility 0
    assert prof.score <= 1e-12
    assert prof.flags == []


def test_classicality_profile_single_region():
    psi = ghz(2)
    P = make_statement(P0, [0], (2, 2), "P")
    U = Region([(1, 3)])
    prof = classicality_profile(P, [U], psi)
    assert len(prof.results) == 1
    assert prof.results[0].value == visibility_lower_bound(P, U, psi).value


# -- replacement bounds ------------------------------------------------------------


def single_pair(seed):
    rng = SplitMix64(seed)
    dims = (2, 2)
    pos = {0: 0, 1: 50}
    P = make_statement(random_projector(2, 1, rng), [0], dims, "P", t=1, positions=pos)
    R = make_statement(random_projector(2, 1, rng), [1], dims, "R", t=0, positions=pos)
    return P, R, random_unit_vector(4, rng, dims)


@given(seeds)
def test_single_statement_bound_is_tight(seed):
    P, R, psi = single_pair(seed)
    rep = replacement_bound_report([P], [R], psi, "P")
    assert rep.m == [1]
    assert abs(rep.observed - rep.eps[0]) <= 1e-12
    assert abs(rep.bound_sharp - rep.eps[0]) <= 1e-15
    rep_not = replacement_bound_report([P], [R], psi, Not(Leaf("P")))
    assert abs(rep_not.observed - rep.eps[0]) <= 1e-12


def test_structural_violation_raised_and_reported():
    dims = (2, 2)
    P = make_statement(P0, [0], dims, "P", t=0)
    R = make_statement(P0, [1], dims, "R", t=1)
    with pytest.raises(StructuralViolation) as exc:
        replacement_bound_report([P], [R], ket("00"), "P") if False else record_permutation_check([P, P], [R, R], ket("00"))
    assert exc.value.violations
    Q = make_statement(P0, [0], dims, "Q", t=5)
    R2 = make_statement(P0, [1], dims, "R2", t=0, positions={0: 0, 1: 40})
    R1 = make_statement(P0, [1], dims, "R1", t=0, positions={0: 0, 1: 40})
    # P (t=0) listed before Q (t=5): Q is in P's future
    rep = replacement_bound_report([P, Q], [R1, R2], ket("00"), And(Leaf("P"), Leaf("Q")), strict=False)
    assert any("Q" in v for v in rep.violations)


def test_expression_leaf_cap():
    with pytest.raises(ValueError):
        replacement_bound_report([None] * 17, [None] * 17, None, "P")


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_replacement_bound_three_statements_six_qubits(seed):
    cfg = random_replacement_config(SplitMix64(seed), 3, 6)
    rep = replacement_bound_report(cfg.originals, cfg.replacements, cfg.psi, cfg.expr)
    assert not rep.violations
    assert rep.observed <= rep.bound_sharp + 1e-9
    assert rep.bound_cube <= rep.bound_sharp + 1e-12
    assert rep.observed <= rep.bound_cube + 1e-9
    assert rep.bound_sharp <= rep.bound_coarse + 1e-12


def test_exact_records_give_zero_permutation_error():
    psi = ghz(4)
    dims = (2,) * 4
    pos = {0: 0, 1: 10, 2: 20, 3: 30}
    P = [make_statement(P0, [k], dims, f"P{k}", positions=pos) for k in (0, 1)]
    R = [make_statement(P0, [k], dims, f"R{k}", positions=pos) for k in (2, 3)]
    rep = record_permutation_check(P, R, psi)
    assert rep.eps == [0.0, 0.0]
    assert rep.ordered_error <= 1e-15 and rep.max_permuted_error <= 1e-15


def test_identity_replacements_commuting_originals():
    rng = SplitMix64(9)
    dims = (2,) * 3
    P = [make_statement(random_projector(2, 1, rng), [k], dims, f"P{k}") for k in range(3)]
    rep = record_permutation_check(P, P, random_unit_vector(8, rng, dims))
    assert rep.max_permuted_error <= 1e-15
    assert rep.permutations_checked == 6


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_permutation_bound_two_statements_four_qubits(seed):
    cfg = random_replacement_config(SplitMix64(seed), 2, 4)
    rep = record_permutation_check(cfg.originals, cfg.replacements, cfg.psi)
    assert rep.ordered_error <= rep.ordered_bound + 1e-9
    assert rep.max_permuted_error <= rep.permuted_bound + 1e-9


def test_permutation_sampling_needs_rng_beyond_five():
    cfg = random_replacement_config(SplitMix64(1), 6, 7)
    with pytest.raises(ValueError):
        record_permutation_check(cfg.originals, cfg.replacements, cfg.psi)
    rep = record_permutation_check(cfg.originals, cfg.replacements, cfg.psi, rng=SplitMix64(2), samples=50)
    assert rep.permutations_checked == 50 and rep.holds


# -- serialization ----------------------------------------------------------------


def test_registry_json_roundtrip():
    rng = SplitMix64(12)
    dims = (2, 3, 2)
    A = make_statement(random_projector(2, 1, rng), [0], dims, "A", t=2)
    B = make_statement(random_projector(6, 2, rng), [1, 2], dims, "B", t=0)
    back = registry_from_json(registry_to_json([A, B]))
    for orig in (A, B):
        got = back[orig.label]
        np.testing.assert_allclose(got.projector, orig.projector, atol=1e-15)
        assert got.region == orig.region and got.support == orig.support


def test_registry_rejects_duplicates():
    P = make_statement(P0, [0], (2,), "P")
    with pytest.raises(ValueError):
        registry(P, P)
