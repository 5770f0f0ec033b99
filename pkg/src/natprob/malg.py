"""Finite H-valued measure algebras generated by commuting records.

Atoms are indexed by assignments: bit ``k`` of an atom index is 1 when the
atom lies below generator ``k``. Algebra elements are Python ints whose bit
``a`` marks atom ``a``. Null atoms (‖φ(atom)‖ ≤ null_tol) are dropped from
every element, which realizes the quotient by the null ideal.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from natprob.linalg import QuantumState, make_rng
from natprob.spacetime import CausalRelation, region_relation
from natprob.statements import (
    LogicalExpr,
    ProjectionStatement,
    apply_expansion,
    expand,
)

MAX_GENERATORS = 12
EXHAUSTIVE_ATOMS = 10


def _bits(mask: int) -> list[int]:
    out, k = [], 0
    while mask:
        if mask & 1:
            out.append(k)
        mask >>= 1
        k += 1
    return out


@dataclass
class MeasureAlgebra:
    generators: list[ProjectionStatement]
    psi: np.ndarray
    atom_vectors: np.ndarray  # (2**n, D) φ of every raw atom
    support_mask: int  # non-null atoms
    null_tol: float
    report: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.generators)

    @property
    def n_atoms(self) -> int:
        return 2**self.n

    @property
    def one(self) -> int:
        return self.support_mask

    @property
    def zero(self) -> int:
        return 0

    @property
    def atoms(self) -> list[int]:
        """Indices of non-null atoms."""
        return _bits(self.support_mask)

    @property
    def labels(self) -> list[str]:
        return [g.label for g in self.generators]

    def atom_mu(self) -> np.ndarray:
        return np.einsum("ad,ad->a", self.atom_vectors.conj(), self.atom_vectors).real

    def element(self, b) -> int:
        """Canonical element from an int mask, a generator label or a LogicalExpr."""
        if isinstance(b, (bool, np.bool_)):
            return self.one if b else 0
        if isinstance(b, (int, np.integer)):
            b = int(b)
            if b < 0 or b >> self.n_atoms:
                raise ValueError(f"element {b} is foreign to an algebra with {self.n_atoms} atoms")
            return b & self.support_mask
        if isinstance(b, str):
            b = LogicalExpr("leaf", (), b)
        if isinstance(b, LogicalExpr):
            unknown = [lab for lab in b.leaves() if lab not in self.labels]
            if unknown:
                raise ValueError(f"expression mentions foreign statements {unknown}")
            idx = np.arange(self.n_atoms)
            values = {lab: ((idx >> k) & 1).astype(bool) for k, lab in enumerate(self.labels)}
            table = np.broadcast_to(b.evaluate(values), (self.n_atoms,))
            return int(sum(1 << int(a) for a in np.flatnonzero(table))) & self.support_mask
        raise TypeError(f"cannot interpret {b!r} as an algebra element")

    def generator(self, k: int) -> int:
        return sum(1 << a for a in range(self.n_atoms) if (a >> k) & 1) & self.support_mask

    def neg(self, b: int) -> int:
        return self.support_mask & ~self.element(b)

    def meet(self, a: int, b: int) -> int:
        return self.element(a) & self.element(b)

    def join(self, a: int, b: int) -> int:
        return self.element(a) | self.element(b)

    def indicator(self, b: int) -> np.ndarray:
        b = self.element(b)
        return np.array([(b >> a) & 1 for a in range(self.n_atoms)], dtype=float)

    def phi(self, b) -> np.ndarray:
        return self.indicator(b) @ self.atom_vectors

    def phi_direct(self, b) -> np.ndarray:
        """φ(b) recomputed by applying the operator of b to ψ (independent of atom sums)."""
        b = self.element(b)
        table = np.array([(b >> a) & 1 for a in range(self.n_atoms)], dtype=bool)
        exp = expand(table, self.n)
        # index bit k is generator k, i.e. generator n-1-k in MSB-first order
        mats = [g.projector for g in reversed(self.generators)]
        return apply_expansion(exp, mats, self.psi)

    def random_element(self, rng) -> int:
        rng = make_rng(rng)
        bits = rng.integers(0, 2, size=self.n_atoms)
        return sum(1 << a for a in range(self.n_atoms) if bits[a]) & self.support_mask

    def elements(self) -> Iterable[int]:
        """All elements of the quotient algebra (2**(non-null atoms) of them)."""
        atoms = self.atoms
        for combo in range(2 ** len(atoms)):
            yield sum(1 << atoms[i] for i in _bits(combo))

    def to_dict(self) -> dict:
        mu = self.atom_mu()
        return {
            "generators": self.labels,
            "atoms": [{"mask": a, "mu": float(mu[a])} for a in self.atoms],
            "reports": self.report,
        }

    def dump(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj))


def measure(alg: MeasureAlgebra, b) -> float:
    v = alg.phi(b)
    return float(np.vdot(v, v).real)


def inner(alg: MeasureAlgebra, a, b) -> complex:
    return complex(np.vdot(alg.phi(a), alg.phi(b)))


def check_spacelike(records: Sequence[ProjectionStatement]) -> list[str]:
    problems = []
    for P, Q in itertools.combinations(records, 2):
        rel = region_relation(P.region, Q.region)
        if rel is not CausalRelation.SPACELIKE:
            problems.append(f"{P.label} and {Q.label} are {rel.value}")
        elif np.any(P.projector @ Q.projector - Q.projector @ P.projector):
            problems.append(f"{P.label} and {Q.label} do not commute exactly")
    return problems


def verify_definition(alg: MeasureAlgebra, pairs: int = 200, rng=0) -> dict:
    """Check φ(1) = ψ, φ(0) = 0, additivity and orthogonality on sampled pairs."""
    rng = make_rng(rng)
    null_mask = (2**alg.n_atoms - 1) & ~alg.support_mask
    null_norm = float(np.linalg.norm(alg.indicator(null_mask) @ alg.atom_vectors)) if null_mask else 0.0
    one_err = float(np.linalg.norm(alg.phi_direct(alg.one) - alg.psi))
    gram = alg.atom_vectors @ alg.atom_vectors.conj().T
    off = gram - np.diag(np.diag(gram))
    max_orth = max_add = 0.0
    for _ in range(pairs):
        a, b = alg.random_element(rng), alg.random_element(rng)
        ab, anb = alg.meet(a, b), alg.meet(a, alg.neg(b))
        v_ab, v_anb = alg.phi_direct(ab), alg.phi_direct(anb)
        max_orth = max(max_orth, abs(np.vdot(v_ab, v_anb)))
        max_add = max(max_add, float(np.linalg.norm(alg.phi_direct(a) - v_ab - v_anb)))
    mu = alg.atom_mu()
    return {
        "phi_one_error": one_err,
        "null_mass": null_norm,
        "phi_zero_norm": float(np.linalg.norm(alg.phi(0))),
        "max_atom_overlap": float(np.abs(off).max(initial=0.0)),
        "max_orthogonality_error": float(max_orth),
        "max_additivity_error": float(max_add),
        "min_nonnull_norm": float(np.sqrt(mu[alg.atoms].min())) if alg.atoms else 0.0,
        "pairs": pairs,
    }


def generate_algebra(
    records: Sequence[ProjectionStatement],
    psi,
    null_tol: float = 1e-10,
    verify_pairs: int = 200,
    rng=0,
) -> MeasureAlgebra:
    records = list(records)
    if not records:
        raise ValueError("need at least one record")
    if len(records) > MAX_GENERATORS:
        raise ValueError(f"{len(records)} generators exceed the cap {MAX_GENERATORS}")
    labels = [r.label for r in records]
    if len(set(labels)) != len(labels):
        raise ValueError("generator labels must be distinct")
    problems = check_spacelike(records)
    if problems:
        raise ValueError("records must be pairwise spacelike: " + "; ".join(problems))
    vec = psi.amplitudes if isinstance(psi, QuantumState) else np.asarray(psi, dtype=complex)
    # split ψ generator by generator; level k holds 2**k partial products
    parts = vec[None, :]
    for k, rec in enumerate(records):
        on = parts @ rec.projector.T
        off = parts - on
        # new bit k is the high part of the index at this level
        parts = np.concatenate([off, on], axis=0)
    # after the loop index bit k corresponds to generator k
    norms = np.linalg.norm(parts, axis=1)
    support = sum(1 << a for a in range(len(norms)) if norms[a] > null_tol)
    alg = MeasureAlgebra(records, vec, parts, support, null_tol)
    alg.report = {"definition": verify_definition(alg, verify_pairs, rng), "null_atoms": len(norms) - bin(support).count("1")}
    return alg


def metric_contraction_check(alg: MeasureAlgebra, trials: int = 500, rng=0, tol: float = 1e-10) -> dict:
    rng = make_rng(rng)
    worst_meet = worst_join = worst_neg = -np.inf
    failures = 0
    for _ in range(trials):
        b, b2, c = (alg.random_element(rng) for _ in range(3))
        base = np.linalg.norm(alg.phi(b) - alg.phi(b2))
        d_meet = np.linalg.norm(alg.phi(alg.meet(b, c)) - alg.phi(alg.meet(b2, c)))
        d_join = np.linalg.norm(alg.phi(alg.join(b, c)) - alg.phi(alg.join(b2, c)))
        d_neg = np.linalg.norm(alg.phi(alg.neg(b)) - alg.phi(alg.neg(b2)))
        worst_meet = max(worst_meet, d_meet - base)
        worst_join = max(worst_join, d_join - base)
        worst_neg = max(worst_neg, abs(d_neg - base))
        if d_meet > base + tol or d_join > base + tol or abs(d_neg - base) > 1e-12:
            failures += 1
    return {
        "trials": trials,
        "max_meet_excess": float(worst_meet),
        "max_join_excess": float(worst_join),
        "max_negation_defect": float(worst_neg),
        "failures": failures,
        "passed": failures == 0,
    }


@dataclass
class FiniteProbabilitySpace:
    points: list[int]  # atom indices
    mu: np.ndarray
    algebra: MeasureAlgebra

    def event_map(self, b) -> frozenset[int]:
        b = self.algebra.element(b)
        return frozenset(p for p in self.points if (b >> p) & 1)

    def prob(self, event: Iterable[int]) -> float:
        idx = {p: i for i, p in enumerate(self.points)}
        return float(sum(self.mu[idx[p]] for p in event))

    def assignment(self, point: int) -> dict[str, bool]:
        """The homomorphism to {0,1} represented by an atom, on generators."""
        return {lab: bool((point >> k) & 1) for k, lab in enumerate(self.algebra.labels)}


def stone_space(alg: MeasureAlgebra) -> FiniteProbabilitySpace:
    norm2 = float(np.vdot(alg.psi, alg.psi).real)
    mu = alg.atom_mu()[alg.atoms] / norm2
    return FiniteProbabilitySpace(alg.atoms, mu, alg)


def stone_measure_check(alg: MeasureAlgebra, elements: Iterable[int] | None = None) -> dict:
    space = stone_space(alg)
    norm2 = float(np.vdot(alg.psi, alg.psi).real)
    if elements is None:
        elements = alg.elements() if len(alg.atoms) <= EXHAUSTIVE_ATOMS else [alg.random_element(k) for k in range(256)]
    worst, count = 0.0, 0
    for b in elements:
        direct = float(np.linalg.norm(alg.phi_direct(b)) ** 2) / norm2
        worst = max(worst, abs(space.prob(space.event_map(b)) - direct))
        count += 1
    return {"elements": count, "max_error": worst, "total_mass": float(space.mu.sum())}


@dataclass
class ObserverContext:
    algebra: MeasureAlgebra
    O: int
    mu_O: float

    def in_ideal(self, b) -> bool:
        b = self.algebra.element(b)
        return b & self.O == b

    def in_filter(self, b) -> bool:
        b = self.algebra.element(b)
        return b & self.O == self.O

    def ideal(self) -> list[int]:
        below = [a for a in self.algebra.atoms if (self.O >> a) & 1]
        return [sum(1 << below[i] for i in _bits(c)) for c in range(2 ** len(below))]

    def filter(self) -> list[int]:
        rest = [a for a in self.algebra.atoms if not (self.O >> a) & 1]
        return [self.O | sum(1 << rest[i] for i in _bits(c)) for c in range(2 ** len(rest))]

    def conditional(self, b) -> float:
        return measure(self.algebra, self.algebra.meet(b, self.O)) / self.mu_O

    def conditional_atoms(self) -> dict[int, float]:
        return {a: self.conditional(1 << a) for a in self.algebra.atoms if (self.O >> a) & 1}


def observer_context(alg: MeasureAlgebra, O) -> ObserverContext:
    O = alg.element(O)
    mu_O = measure(alg, O)
    if mu_O <= alg.null_tol:
        raise ValueError(f"observer statement is null (mu = {mu_O:.3e})")
    return ObserverContext(alg, O, mu_O)


def observer_closure_check(ctx: ObserverContext, samples: int = 100, rng=0) -> dict:
    """Ideal/filter closure and normalization of the conditional measure."""
    rng = make_rng(rng)
    alg = ctx.algebra
    ideal, filt = ctx.ideal(), ctx.filter()
    bad = 0
    for _ in range(samples):
        i1, i2 = ideal[rng.integers(0, len(ideal))], ideal[rng.integers(0, len(ideal))]
        f1, f2 = filt[rng.integers(0, len(filt))], filt[rng.integers(0, len(filt))]
        x = alg.random_element(rng)
        ok = (
            ctx.in_ideal(alg.join(i1, i2))
            and ctx.in_ideal(alg.meet(i1, x))
            and ctx.in_filter(alg.meet(f1, f2))
            and ctx.in_filter(alg.join(f1, x))
        )
        bad += not ok
    total = sum(ctx.conditional_atoms().values())
    return {"closure_failures": bad, "conditional_total": total}


# ---------------------------------------------------------------------------
# Classical statements


@dataclass
class ClassicalReport:
    best_label: str | None
    r1: float
    r2: float
    classical: bool
    degenerate: bool
    per_candidate: dict[str, tuple[float, float]]


def _pair_norms(alg: MeasureAlgebra, P: np.ndarray, b_masks: Sequence[int], a_masks: Sequence[int]) -> np.ndarray:
    """‖φ(b∧a) − Pφ(a)‖ for every (b, a) via the Gram matrix of atoms and P·atoms."""
    atoms = alg.atoms
    A = alg.atom_vectors[atoms]
    B = A @ P.T
    stacked = np.concatenate([A, B], axis=0)
    G = stacked.conj() @ stacked.T
    N = len(atoms)
    pos = {a: i for i, a in enumerate(atoms)}

    def ind(mask):
        v = np.zeros(N)
        for a in _bits(mask):
            if a in pos:
                v[pos[a]] = 1.0
        return v

    Ib = np.array([ind(b) for b in b_masks])
    Ia = np.array([ind(a) for a in a_masks])
    out = np.empty((len(b_masks), len(a_masks)))
    for i in range(len(b_masks)):
        coeff = np.concatenate([Ia * Ib[i], -Ia], axis=1)
        out[i] = np.sqrt(np.maximum(np.einsum("ai,ij,aj->a", coeff, G, coeff).real, 0.0))
    return out


def classical_statement_check(
    alg: MeasureAlgebra,
    b,
    candidates: Sequence[ProjectionStatement],
    eps: float,
    a_elements: Sequence[int] | None = None,
) -> ClassicalReport:
    if not candidates:
        raise ValueError("candidate list is empty")
    b = alg.element(b)
    norm_b = float(np.linalg.norm(alg.phi(b)))
    if a_elements is None:
        if len(alg.atoms) > EXHAUSTIVE_ATOMS:
            raise ValueError("algebra too large for exhaustive check; pass a_elements")
        a_elements = list(alg.elements())
    if norm_b <= alg.null_tol:
        return ClassicalReport(None, 0.0, 0.0, True, True, {})
    per = {}
    for P in candidates:
        r1 = float(np.linalg.norm(P.projector @ alg.psi - alg.phi(b))) / norm_b
        r2 = float(_pair_norms(alg, P.projector, [b], a_elements).max()) / norm_b
        per[P.label] = (r1, r2)
    best = min(per, key=lambda k: max(per[k]))
    r1, r2 = per[best]
    return ClassicalReport(best, r1, r2, max(r1, r2) <= eps, False, per)


def classical_density(alg: MeasureAlgebra, candidates: Sequence[ProjectionStatement], eps: float) -> dict:
    """Classify every element and return the smallest ε making classical statements ε-dense."""
    if len(alg.atoms) > EXHAUSTIVE_ATOMS:
        raise ValueError("density is only computed exhaustively for ≤ 2**10 elements")
    elems = list(alg.elements())
    mu = alg.atom_mu()
    norms = np.array([np.sqrt(sum(mu[a] for a in _bits(b))) for b in elems])
    best = np.full(len(elems), np.inf)
    for P in candidates:
        r2 = _pair_norms(alg, P.projector, elems, elems).max(axis=1)
        p_psi = P.projector @ alg.psi
        r1 = np.array([np.linalg.norm(p_psi - alg.phi(b)) for b in elems])
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.maximum(r1, r2) / norms
        best = np.minimum(best, score)
    classical = (norms <= alg.null_tol) | (best <= eps)
    cls_masks = [b for b, c in zip(elems, classical) if c]
    radius = 0.0
    for b in elems:
        d = min(np.sqrt(sum(mu[a] for a in _bits(b ^ c))) for c in cls_masks)
        radius = max(radius, d)
    return {
        "elements": len(elems),
        "classical": int(classical.sum()),
        "density_radius": float(radius),
        "phi_one_norm": float(np.linalg.norm(alg.phi(alg.one))),
    }


# ---------------------------------------------------------------------------
# Record swaps


def raw_phi(alg: MeasureAlgebra, mask: int) -> np.ndarray:
    """φ on the free algebra over all 2**n atoms (null atoms included)."""
    ind = np.array([(mask >> a) & 1 for a in range(alg.n_atoms)], dtype=float)
    return ind @ alg.atom_vectors


def element_depths(n: int, max_elements: int = 256) -> dict[int, int]:
    """Minimal ∧/∨ nesting depth of each element of the free algebra on n generators.

    Negation is free. Exhaustive closure; only used when 2**(2**n) ≤ max_elements.
    """
    n_atoms = 2**n
    full = 2**n_atoms - 1
    if 2**n_atoms > max_elements:
        raise ValueError("free algebra too large for exhaustive depth closure")
    depth: dict[int, int] = {}
    for k in range(n):
        g = sum(1 << a for a in range(n_atoms) if (a >> k) & 1)
        depth[g] = depth[full ^ g] = 0
    level = 0
    while len(depth) < 2**n_atoms:
        level += 1
        known = list(depth)
        new = set()
        for x, y in itertools.product(known, repeat=2):
            for z in (x & y, x | y):
                for w in (z, full ^ z):
                    if w not in depth:
                        new.add(w)
        if not new:
            break
        depth.update({w: level for w in new})
    return depth


@dataclass
class RecordSwapReport:
    max_error: float
    depth_curve: dict[int, float]
    subadditivity_pairs: int
    subadditivity_violations: int
    worst_subadditivity_excess: float
    elements: int
    errors: dict[int, float] = field(default_factory=dict, repr=False)


def _indicator_rows(masks: Sequence[int], n_atoms: int) -> np.ndarray:
    return np.array([[(int(m) >> a) & 1 for a in range(n_atoms)] for m in masks], dtype=float)


def record_swap_error(
    alg_I: MeasureAlgebra,
    alg_J: MeasureAlgebra,
    pairing: Sequence[int] | None = None,
    rng=0,
    samples: int = 400,
    max_depth: int = 4,
    max_pair_elements: int = 300,
) -> RecordSwapReport:
    """Errors ‖φ(b) − φ'(f(b))‖ of the Boolean isomorphism induced by the generator pairing.

    ``pairing[k]`` is the generator of ``alg_J`` matched with generator ``k``
    of ``alg_I``. Elements are those of the free algebra: exhaustive for
    n ≤ 3 generators, random expression trees up to ``max_depth`` otherwise.
    Subadditivity err(a∧b), err(a∨b) ≤ err(a) + err(b) is checked on all
    pairs of (at most ``max_pair_elements``) elements.
    """
    n = alg_I.n
    if alg_J.n != n:
        raise ValueError(f"generator counts differ: {n} vs {alg_J.n}")
    if np.linalg.norm(alg_I.psi - alg_J.psi) > 1e-12:
        raise ValueError("algebras are built over different states")
    pairing = list(range(n)) if pairing is None else list(pairing)
    if sorted(pairing) != list(range(n)):
        raise ValueError("pairing must be a permutation of generator indices")
    rng = make_rng(rng)
    n_atoms = 2**n
    atom_map = [sum(((a >> k) & 1) << pairing[k] for k in range(n)) for a in range(n_atoms)]
    diff_atoms = alg_I.atom_vectors - alg_J.atom_vectors[atom_map]

    if 2**n_atoms <= 256:
        depths = element_depths(n)
    else:
        full = 2**n_atoms - 1
        depths = {}
        for k in range(n):
            g = sum(1 << a for a in range(n_atoms) if (a >> k) & 1)
            depths[g] = depths[full ^ g] = 0
        items = list(depths.items())
        attempts = 0
        while len(depths) < samples and attempts < 50 * samples:
            attempts += 1
            x, dx = items[rng.integers(0, len(items))]
            y, dy = items[rng.integers(0, len(items))]
            d = max(dx, dy) + 1
            if d > max_depth:
                continue
            z = x & y if rng.random() < 0.5 else x | y
            if rng.random() < 0.5:
                z = full ^ z
            if z not in depths or depths[z] > d:
                depths[z] = d
                items.append((z, d))
    masks = sorted(depths)
    depth_arr = np.array([depths[m] for m in masks])
    errs = np.linalg.norm(_indicator_rows(masks, n_atoms) @ diff_atoms, axis=1)
    curve = {int(d): float(errs[depth_arr == d].max()) for d in np.unique(depth_arr)}

    if len(masks) > max_pair_elements:
        chosen = sorted(rng.permutation(len(masks))[:max_pair_elements].tolist())
    else:
        chosen = list(range(len(masks)))
    sub = [masks[i] for i in chosen]
    E = errs[chosen]
    bound = E[:, None] + E[None, :]
    violations, worst, pairs = 0, -np.inf, 0
    for op in (lambda x, y: x & y, lambda x, y: x | y):
        combo = [op(x, y) for x in sub for y in sub]
        e_c = np.linalg.norm(_indicator_rows(combo, n_atoms) @ diff_atoms, axis=1).reshape(len(sub), len(sub))
        excess = e_c - bound
        violations += int((excess > 1e-9).sum())
        worst = max(worst, float(excess.max()))
        pairs += excess.size
    return RecordSwapReport(
        max_error=float(errs.max()),
        depth_curve=curve,
        subadditivity_pairs=pairs,
        subadditivity_violations=violations,
        worst_subadditivity_excess=worst,
        elements=len(masks),
        errors={int(m): float(e) for m, e in zip(masks, errs)},
    )
