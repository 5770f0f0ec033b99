"""Projection-statements, logical combinations, visibility and replacement bounds.

A logical expression over statements is turned into an operator by taking
its canonical expansion into products of ``P_i`` and ``1 - P_i`` and writing
each product in time order (later statements on the left). The expansion is
evaluated with a Shannon tree along the time order, which yields the same
operator as summing all canonical terms.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from natprob.linalg import (
    LinearOp,
    QuantumState,
    embed_op,
    is_projector,
    partial_trace,
    projector_onto,
)
from natprob.spacetime import (
    CausalRelation,
    Region,
    region_for_sites,
    region_relation,
    sites_of_region,
)

PROJECTOR_TOL = 1e-10
RESIDUAL_FLOOR = 1e-12
MAX_LEAVES = 16
BLOCH_GRID_POINTS = 10_000


class StructuralViolation(ValueError):
    """Raised when the ordering/separation hypotheses of a bound do not hold."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class ProjectionStatement:
    """Full-space projector paired with the lattice region where it lives."""

    projector: np.ndarray
    region: Region
    support: frozenset[int]
    label: str
    dims: tuple[int, ...]
    # statement this one is the negation of, so double negation is exact
    complement_of: "ProjectionStatement | None" = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        mat = np.asarray(self.projector, dtype=complex)
        if mat.shape != (int(np.prod(self.dims)),) * 2:
            raise ValueError(f"{self.label}: projector shape {mat.shape} does not match dims {self.dims}")
        if not is_projector(mat, PROJECTOR_TOL):
            raise ValueError(f"{self.label}: operator is not a projector")
        object.__setattr__(self, "projector", mat)
        object.__setattr__(self, "support", frozenset(int(s) for s in self.support))
        object.__setattr__(self, "dims", tuple(self.dims))

    @property
    def dim(self) -> int:
        return self.projector.shape[0]

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.projector @ vec


def make_statement(
    local: np.ndarray | LinearOp,
    support: Sequence[int],
    dims: Sequence[int],
    label: str,
    t: int = 0,
    region: Region | None = None,
    positions: Mapping[int, int] | None = None,
) -> ProjectionStatement:
    """Embed a local projector on ``support``; the region defaults to a row at time ``t``."""
    support = tuple(support)
    full = embed_op(local, support, dims)
    if region is None:
        region = region_for_sites(sorted(support), t, positions)
    elif sites_of_region(region, positions) != frozenset(support):
        raise ValueError(f"{label}: region sites {sorted(sites_of_region(region, positions))} differ from support {sorted(support)}")
    return ProjectionStatement(full, region, frozenset(support), label, tuple(dims))


def identity_statement(dims: Sequence[int], region: Region, label: str = "1") -> ProjectionStatement:
    d = int(np.prod(dims))
    return ProjectionStatement(np.eye(d, dtype=complex), region, frozenset(), label, tuple(dims))


def negate(P: ProjectionStatement) -> ProjectionStatement:
    if P.complement_of is not None:
        return P.complement_of
    mat = np.eye(P.dim, dtype=complex) - P.projector
    label = P.label[1:] if P.label.startswith("¬") else "¬" + P.label
    return ProjectionStatement(mat, P.region, P.support, label, P.dims, complement_of=P)


@dataclass(frozen=True)
class OrderedOperator:
    """Time-ordered product of non-spacelike statements (later factor on the left)."""

    matrix: np.ndarray
    region: Region
    support: frozenset[int]
    label: str
    is_projector: bool


def conjoin(P: ProjectionStatement, Q: ProjectionStatement) -> ProjectionStatement | OrderedOperator:
    rel = region_relation(P.region, Q.region)
    region = P.region | Q.region
    support = P.support | Q.support
    label = f"({P.label}∧{Q.label})"
    if rel is CausalRelation.SPACELIKE:
        return ProjectionStatement(P.projector @ Q.projector, region, support, label, P.dims)
    if rel is CausalRelation.STRICTLY_FUTURE:
        mat = P.projector @ Q.projector
    elif rel is CausalRelation.STRICTLY_PAST:
        mat = Q.projector @ P.projector
    else:
        raise ValueError(f"{P.label} and {Q.label} are not time-orderable (Mixed relation)")
    return OrderedOperator(mat, region, support, label, is_projector(mat, PROJECTOR_TOL))


# ---------------------------------------------------------------------------
# Logical expressions


@dataclass(frozen=True)
class LogicalExpr:
    """Expression tree: ``op`` is ``leaf``, ``not``, ``and`` or ``or``."""

    op: str
    args: tuple = ()
    label: str | None = None

    def __post_init__(self):
        if self.op not in ("leaf", "not", "and", "or"):
            raise ValueError(f"unknown connective {self.op!r}")
        if self.op == "leaf" and not self.label:
            raise ValueError("leaf needs a label")
        if self.op == "not" and len(self.args) != 1:
            raise ValueError("not takes one argument")
        if self.op in ("and", "or") and len(self.args) < 1:
            raise ValueError(f"{self.op} needs arguments")

    def __invert__(self) -> "LogicalExpr":
        return Not(self)

    def __and__(self, other: "LogicalExpr") -> "LogicalExpr":
        return And(self, other)

    def __or__(self, other: "LogicalExpr") -> "LogicalExpr":
        return Or(self, other)

    def leaves(self) -> list[str]:
        """Distinct leaf labels in first-occurrence order."""
        if self.op == "leaf":
            return [self.label]
        out: list[str] = []
        for a in self.args:
            for lab in a.leaves():
                if lab not in out:
                    out.append(lab)
        return out

    def evaluate(self, values: Mapping[str, np.ndarray]) -> np.ndarray:
        """Vectorized truth evaluation over boolean arrays keyed by label."""
        if self.op == "leaf":
            return values[self.label]
        if self.op == "not":
            return ~self.args[0].evaluate(values)
        parts = [a.evaluate(values) for a in self.args]
        combine = np.logical_and if self.op == "and" else np.logical_or
        out = parts[0]
        for p in parts[1:]:
            out = combine(out, p)
        return out

    def to_obj(self):
        if self.op == "leaf":
            return self.label
        return [self.op] + [a.to_obj() for a in self.args]

    @classmethod
    def from_obj(cls, obj) -> "LogicalExpr":
        """Parse the JSON form: a label string or ``[op, arg, ...]``."""
        if isinstance(obj, str):
            return Leaf(obj)
        if isinstance(obj, list) and obj and isinstance(obj[0], str):
            return cls(obj[0].lower(), tuple(cls.from_obj(a) for a in obj[1:]))
        raise ValueError(f"cannot parse expression {obj!r}")

    def __str__(self) -> str:
        if self.op == "leaf":
            return self.label
        if self.op == "not":
            return f"¬{self.args[0]}"
        sym = " ∧ " if self.op == "and" else " ∨ "
        return "(" + sym.join(str(a) for a in self.args) + ")"


def Leaf(label: str) -> LogicalExpr:
    return LogicalExpr("leaf", (), label)


def Not(e: LogicalExpr) -> LogicalExpr:
    return LogicalExpr("not", (e,))


def And(*es: LogicalExpr) -> LogicalExpr:
    return LogicalExpr("and", tuple(es))


def Or(*es: LogicalExpr) -> LogicalExpr:
    return LogicalExpr("or", tuple(es))


def _as_expr(e: LogicalExpr | str) -> LogicalExpr:
    return Leaf(e) if isinstance(e, str) else e


def truth_table(expr: LogicalExpr, order: Sequence[str]) -> np.ndarray:
    """Boolean table indexed by assignment bits; bit ``k`` (MSB first) is ``order[k]``."""
    n = len(order)
    if n > MAX_LEAVES:
        raise ValueError(f"expression has {n} leaves; cap is {MAX_LEAVES}")
    idx = np.arange(2**n)
    values = {lab: ((idx >> (n - 1 - k)) & 1).astype(bool) for k, lab in enumerate(order)}
    return np.broadcast_to(expr.evaluate(values), (2**n,)).copy()


def time_order(statements: Sequence[ProjectionStatement]) -> list[int]:
    """Indices sorted latest-first; spacelike pairs keep input order. Mixed pairs raise."""
    n = len(statements)
    later: dict[int, set[int]] = {i: set() for i in range(n)}
    for i, j in itertools.combinations(range(n), 2):
        rel = region_relation(statements[i].region, statements[j].region)
        if rel is CausalRelation.MIXED:
            raise ValueError(f"{statements[i].label} and {statements[j].label} have no consistent time order")
        if rel is CausalRelation.STRICTLY_FUTURE:
            later[j].add(i)  # i must precede j in the product
        elif rel is CausalRelation.STRICTLY_PAST:
            later[i].add(j)
    order: list[int] = []
    remaining = list(range(n))
    while remaining:
        for i in remaining:
            if later[i] <= set(order):
                order.append(i)
                remaining.remove(i)
                break
        else:
            raise ValueError("causal relations contain a cycle")
    return order


@dataclass(frozen=True)
class Expansion:
    """Shannon-tree expansion of a Boolean function along a fixed factor order."""

    table: np.ndarray
    n: int
    cubes: tuple[tuple[tuple[int, bool], ...], ...]

    @property
    def canonical_terms(self) -> int:
        return int(self.table.sum())

    def cube_multiplicities(self) -> list[int]:
        m = [0] * self.n
        for cube in self.cubes:
            for k, _ in cube:
                m[k] += 1
        return m


def expand(table: np.ndarray, n: int) -> Expansion:
    cubes: list[tuple[tuple[int, bool], ...]] = []

    def rec(sub: np.ndarray, k: int, prefix: tuple[tuple[int, bool], ...]):
        if not sub.any():
            return
        if sub.all():
            cubes.append(prefix)
            return
        half = sub.size // 2
        lo, hi = sub[:half], sub[half:]
        if np.array_equal(lo, hi):
            rec(lo, k + 1, prefix)
            return
        rec(hi, k + 1, prefix + ((k, True),))
        rec(lo, k + 1, prefix + ((k, False),))

    rec(np.asarray(table, dtype=bool), 0, ())
    return Expansion(np.asarray(table, dtype=bool), n, tuple(cubes))


def apply_expansion(exp: Expansion, projectors: Sequence[np.ndarray], target: np.ndarray) -> np.ndarray:
    """Sum over cubes of the ordered products applied to ``target`` (vector or matrix).

    ``projectors[k]`` is the k-th factor from the left; each cube is a
    product of ``P_k`` or ``1 - P_k`` over its branched variables.
    """

    def product(cube: tuple[tuple[int, bool], ...]) -> np.ndarray:
        out = target
        for k, bit in reversed(cube):
            p_out = projectors[k] @ out
            out = p_out if bit else out - p_out
        return out

    total = np.zeros_like(target, dtype=complex)
    for cube in exp.cubes:
        total = total + product(cube)
    return total


def _registry_lookup(registry: Mapping[str, ProjectionStatement], labels: Sequence[str]) -> list[ProjectionStatement]:
    missing = [lab for lab in labels if lab not in registry]
    if missing:
        raise KeyError(f"unregistered statements: {missing}")
    return [registry[lab] for lab in labels]


def _prepare(expr: LogicalExpr, registry: Mapping[str, ProjectionStatement]):
    labels = expr.leaves()
    stmts = _registry_lookup(registry, labels)
    order = time_order(stmts)
    ordered_labels = [labels[i] for i in order]
    table = truth_table(expr, ordered_labels)
    exp = expand(table, len(ordered_labels))
    mats = [stmts[i].projector for i in order]
    return exp, mats, ordered_labels, stmts


def expr_operator(expr: LogicalExpr | str, registry: Mapping[str, ProjectionStatement]) -> np.ndarray:
    expr = _as_expr(expr)
    exp, mats, _, stmts = _prepare(expr, registry)
    return apply_expansion(exp, mats, np.eye(stmts[0].dim, dtype=complex))


def expr_apply(expr: LogicalExpr | str, registry: Mapping[str, ProjectionStatement], psi) -> np.ndarray:
    expr = _as_expr(expr)
    vec = psi.amplitudes if isinstance(psi, QuantumState) else np.asarray(psi, dtype=complex)
    exp, mats, _, _ = _prepare(expr, registry)
    return apply_expansion(exp, mats, vec)


def prob(expr: LogicalExpr | str, psi, registry: Mapping[str, ProjectionStatement]) -> float:
    v = expr_apply(expr, registry, psi)
    return float(np.vdot(v, v).real)


def cond_prob(expr: LogicalExpr | str, given: LogicalExpr | str, psi, registry: Mapping[str, ProjectionStatement]) -> float:
    denom = prob(given, psi, registry)
    if denom <= 1e-14:
        raise ValueError(f"conditioning on a null statement (prob = {denom:.3e})")
    return prob(And(_as_expr(expr), _as_expr(given)), psi, registry) / denom


# ---------------------------------------------------------------------------
# Visibility


@dataclass
class VisibilityResult:
    value: float
    residual: float
    norm_p: float
    certificate: np.ndarray | None  # local projector on ``sites``
    sites: tuple[int, ...]
    method: str
    capped: bool
    candidates_tried: int = 0


def _residual_operator(P: ProjectionStatement, psi: np.ndarray, sites: Sequence[int]) -> np.ndarray:
    """K with ‖(P − P')ψ‖² = ‖Pψ‖² + Tr(P' K) for every projector P' on ``sites``."""
    dims = P.dims
    p_psi = P.projector @ psi
    keep = sorted(sites)
    rest = [s for s in range(len(dims)) if s not in keep]
    dk = int(np.prod([dims[s] for s in keep]))
    a = psi.reshape(dims).transpose(keep + rest).reshape(dk, -1)
    b = p_psi.reshape(dims).transpose(keep + rest).reshape(dk, -1)
    rho = a @ a.conj().T
    cross = a @ b.conj().T  # Tr_rest |ψ><Pψ|
    K = rho - cross - cross.conj().T
    return 0.5 * (K + K.conj().T)


def _bloch_grid(n_points: int) -> np.ndarray:
    """Fibonacci-sphere rank-1 projectors, shape (n, 2, 2)."""
    i = np.arange(n_points) + 0.5
    theta = np.arccos(1 - 2 * i / n_points)
    phi = np.pi * (1 + 5**0.5) * i
    vecs = np.stack([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], axis=1)
    return np.einsum("ni,nj->nij", vecs, vecs.conj())


def visibility_candidates(P: ProjectionStatement, psi: np.ndarray, sites: Sequence[int], method: str):
    """Yield (name, local projector) candidates on the sorted ``sites``."""
    dims = P.dims
    keep = sorted(sites)
    dk = int(np.prod([dims[s] for s in keep]))
    yield "zero", np.zeros((dk, dk), dtype=complex)
    p_psi = P.projector @ psi
    norm_p = np.linalg.norm(p_psi)
    if method in ("auto", "spectral", "schmidt") and norm_p > 0:
        rho_p = partial_trace(p_psi, keep, dims)
        w, v = np.linalg.eigh(rho_p)
        w, v = w[::-1], v[:, ::-1]
        if method in ("auto", "spectral"):
            for r in range(1, dk + 1):
                yield f"spectral[{r}]", v[:, :r] @ v[:, :r].conj().T
        if method in ("auto", "schmidt"):
            top = max(w[0], 0.0)
            for frac in (0.5, 1e-1, 1e-2, 1e-4, 1e-8):
                sel = w > frac * top
                if sel.any():
                    yield f"schmidt[{frac:g}]", projector_onto(v[:, sel])
    if method in ("auto", "helstrom"):
        rho_p = partial_trace(p_psi, keep, dims)
        rho_q = partial_trace(psi - p_psi, keep, dims)
        w, v = np.linalg.eigh(rho_p - rho_q)
        if (w > 0).any():
            yield "helstrom", projector_onto(v[:, w > 0])
    if method in ("auto", "exact", "search"):
        K = _residual_operator(P, psi, keep)
        w, v = np.linalg.eigh(K)
        if (w < 0).any():
            yield "exact", projector_onto(v[:, w < 0])
    if method in ("auto", "grid") and dk == 2:
        yield "identity", np.eye(2, dtype=complex)


def visibility_lower_bound(
    P: ProjectionStatement,
    U: Region,
    psi,
    method: str = "auto",
    positions: Mapping[int, int] | None = None,
    extra_candidates: Iterable[np.ndarray] = (),
    grid_points: int = BLOCH_GRID_POINTS,
) -> VisibilityResult:
    """Best candidate value of ln‖Pψ‖ − ln‖(P − P')ψ‖ over projectors P' on U's sites.

    ``method`` selects the candidate family: ``spectral``, ``schmidt``,
    ``helstrom``, ``exact`` (negative eigenspace of the residual operator,
    which attains the supremum), ``grid`` (Bloch-sphere scan, single qubit
    only) or ``auto`` (all of them).
    """
    if U.single_time() is None:
        raise ValueError("visibility region must lie in a single time slice")
    sites = tuple(sorted(sites_of_region(U, positions)))
    if any(s < 0 or s >= len(P.dims) for s in sites):
        raise ValueError(f"region sites {sites} out of range")
    vec = psi.amplitudes if isinstance(psi, QuantumState) else np.asarray(psi, dtype=complex)
    p_psi = P.projector @ vec
    norm_p = float(np.linalg.norm(p_psi))
    if norm_p == 0.0:
        return VisibilityResult(0.0, 0.0, 0.0, None, sites, "null", False)

    def residual_of(local: np.ndarray) -> float:
        full = embed_op(local, sites, P.dims)
        return float(np.linalg.norm(p_psi - full @ vec))

    best_res, best_name, best_proj = math.inf, "", None
    tried = 0
    for name, local in itertools.chain(
        visibility_candidates(P, vec, sites, method), (("extra", c) for c in extra_candidates)
    ):
        tried += 1
        res = residual_of(local)
        if res < best_res:
            best_res, best_name, best_proj = res, name, local
    if method in ("auto", "grid") and len(sites) == 1 and P.dims[sites[0]] == 2:
        K = _residual_operator(P, vec, sites)
        grid = _bloch_grid(grid_points)
        scores = np.einsum("nij,ji->n", grid, K).real
        k = int(np.argmin(scores))
        tried += grid_points
        res = residual_of(grid[k])
        if res < best_res:
            best_res, best_name, best_proj = res, "grid", grid[k]
    capped = best_res < RESIDUAL_FLOOR
    value = math.log(norm_p) - math.log(max(best_res, RESIDUAL_FLOOR))
    return VisibilityResult(value, best_res, norm_p, best_proj, sites, best_name, capped, tried)


# ---------------------------------------------------------------------------
# Replacement bounds


@dataclass
class ReplacementReport:
    eps: list[float]
    m: list[int]
    observed: float
    bound_sharp: float
    bound_coarse: float
    m_cube: list[int] = field(default_factory=list)
    bound_cube: float = 0.0
    robust_ratios: list[float] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.observed <= self.bound_sharp + 1e-9 and self.bound_sharp <= self.bound_coarse + 1e-9

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "m": self.m,
            "observed": self.observed,
            "bound_sharp": self.bound_sharp,
            "bound_coarse": self.bound_coarse,
            "m_cube": self.m_cube,
            "bound_cube": self.bound_cube,
            "robust_ratios": self.robust_ratios,
            "violations": self.violations,
        }


def _rel_name(rel: CausalRelation) -> str:
    return rel.value


def replacement_violations(originals: Sequence[ProjectionStatement], replacements: Sequence[ProjectionStatement]) -> list[str]:
    """Check: for j > i, P_j is past of or spacelike to P_i; P'_j spacelike to P_i and P'_i."""
    out = []
    for i, j in itertools.combinations(range(len(originals)), 2):
        Pi, Pj, Ri, Rj = originals[i], originals[j], replacements[i], replacements[j]
        rel = region_relation(Pj.region, Pi.region)
        if rel not in (CausalRelation.STRICTLY_PAST, CausalRelation.SPACELIKE):
            out.append(f"{Pj.label} is {_rel_name(rel)} relative to {Pi.label}")
        for other in (Pi, Ri):
            rel = region_relation(Rj.region, other.region)
            if rel is not CausalRelation.SPACELIKE:
                out.append(f"{Rj.label} is {_rel_name(rel)} relative to {other.label}")
    return out


def replacement_bound_report(
    originals: Sequence[ProjectionStatement],
    replacements: Sequence[ProjectionStatement],
    psi,
    expr: LogicalExpr | str,
    strict: bool = True,
) -> ReplacementReport:
    """Compare E and E' (same expression over the replacements) on ψ.

    Statement ``i`` is the ``i``-th factor from the left in every ordered
    product. ``m_i`` counts the canonical terms (each involves ``P_i`` or
    ``1 - P_i``); ``m_cube`` counts appearances in the Shannon cube cover,
    another valid expansion giving a bound no larger.
    """
    if len(originals) != len(replacements):
        raise ValueError("originals and replacements differ in length")
    n = len(originals)
    if n > MAX_LEAVES:
        raise ValueError(f"{n} statements exceed the expansion cap {MAX_LEAVES}")
    violations = replacement_violations(originals, replacements)
    if violations and strict:
        raise StructuralViolation(violations)
    expr = _as_expr(expr)
    labels = [P.label for P in originals]
    unknown = [lab for lab in expr.leaves() if lab not in labels]
    if unknown:
        raise KeyError(f"expression references unknown statements {unknown}")
    vec = psi.amplitudes if isinstance(psi, QuantumState) else np.asarray(psi, dtype=complex)
    table = truth_table(expr, labels)
    exp = expand(table, n)
    e_vec = apply_expansion(exp, [P.projector for P in originals], vec)
    e2_vec = apply_expansion(exp, [R.projector for R in replacements], vec)
    observed = float(np.linalg.norm(e_vec - e2_vec))
    eps = [float(np.linalg.norm((P.projector - R.projector) @ vec)) for P, R in zip(originals, replacements)]
    K = exp.canonical_terms
    m = [K] * n
    m_cube = exp.cube_multiplicities()
    robust = []
    for j in range(n):
        tail = vec
        for k in range(n - 1, j, -1):
            tail = replacements[k].projector @ tail
        denom = np.linalg.norm(tail)
        num = np.linalg.norm((originals[j].projector - replacements[j].projector) @ tail)
        robust.append(float(num / denom) if denom > 0 else 0.0)
    return ReplacementReport(
        eps=eps,
        m=m,
        observed=observed,
        bound_sharp=float(sum(mi * e for mi, e in zip(m, eps))),
        bound_coarse=float(2**n * sum(eps)),
        m_cube=m_cube,
        bound_cube=float(sum(mi * e for mi, e in zip(m_cube, eps))),
        robust_ratios=robust,
        violations=violations,
    )


@dataclass
class PermutationReport:
    eps: list[float]
    ordered_error: float
    ordered_bound: float
    max_permuted_error: float
    permuted_bound: float
    permutations_checked: int
    worst_permutation: tuple[int, ...]
    violations: list[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return (
            self.ordered_error <= self.ordered_bound + 1e-9
            and self.max_permuted_error <= self.permuted_bound + 1e-9
        )


def _ordered_product(mats: Sequence[np.ndarray], vec: np.ndarray) -> np.ndarray:
    out = vec
    for m in reversed(mats):
        out = m @ out
    return out


def record_permutation_check(
    originals: Sequence[ProjectionStatement],
    replacements: Sequence[ProjectionStatement],
    psi,
    rng=None,
    samples: int = 200,
    strict: bool = True,
) -> PermutationReport:
    """Check ‖(ΠP_i − ΠP'_i)ψ‖ ≤ Σε and ‖(ΠP_i − ΠP_σ(i))ψ‖ ≤ 2Σε.

    All permutations are checked when n ≤ 5, otherwise ``samples`` drawn from ``rng``.
    """
    n = len(originals)
    if len(replacements) != n:
        raise ValueError("originals and replacements differ in length")
    violations = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for other in (originals[j], replacements[j]):
                rel = region_relation(replacements[i].region, other.region)
                if rel is not CausalRelation.SPACELIKE:
                    violations.append(f"{replacements[i].label} is {rel.value} relative to {other.label}")
    if violations and strict:
        raise StructuralViolation(violations)
    vec = psi.amplitudes if isinstance(psi, QuantumState) else np.asarray(psi, dtype=complex)
    P = [s.projector for s in originals]
    R = [s.projector for s in replacements]
    eps = [float(np.linalg.norm((p - r) @ vec)) for p, r in zip(P, R)]
    base = _ordered_product(P, vec)
    ordered_error = float(np.linalg.norm(base - _ordered_product(R, vec)))
    if n <= 5:
        perms: Iterable[tuple[int, ...]] = itertools.permutations(range(n))
    else:
        if rng is None:
            raise ValueError("rng required to sample permutations when n > 5")
        perms = [tuple(int(k) for k in rng.permutation(n)) for _ in range(samples)]
    worst, worst_perm, count = 0.0, tuple(range(n)), 0
    for perm in perms:
        count += 1
        err = float(np.linalg.norm(base - _ordered_product([P[k] for k in perm], vec)))
        if err > worst:
            worst, worst_perm = err, tuple(perm)
    total = sum(eps)
    return PermutationReport(eps, ordered_error, total, worst, 2 * total, count, worst_perm, violations)


# ---------------------------------------------------------------------------
# Classicality


@dataclass
class ClassicalityProfile:
    results: list[VisibilityResult]
    score: float
    median: float
    flags: list[str]

    @property
    def values(self) -> list[float]:
        return [r.value for r in self.results]


def classicality_profile(
    P: ProjectionStatement,
    regions: Sequence[Region],
    psi,
    method: str = "auto",
    positions: Mapping[int, int] | None = None,
) -> ClassicalityProfile:
    flags = []
    for k, U in enumerate(regions):
        rel = region_relation(U, P.region)
        if rel is not CausalRelation.STRICTLY_FUTURE:
            flags.append(f"region {k} is {rel.value} relative to {P.label}, not in its future")
    for a, b in itertools.combinations(range(len(regions)), 2):
        rel = region_relation(regions[a], regions[b])
        if rel is not CausalRelation.SPACELIKE:
            flags.append(f"regions {a} and {b} are {rel.value}, not spacelike")
    results = [visibility_lower_bound(P, U, psi, method, positions) for U in regions]
    values = [r.value for r in results]
    return ClassicalityProfile(results, float(min(values)), float(np.median(values)), flags)


# ---------------------------------------------------------------------------
# Registry serialization


def _complex_pairs(mat: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(mat).ravel()]


def statement_to_json(P: ProjectionStatement, local: np.ndarray | None = None) -> dict:
    """Serialize with the projector restricted to the support (row-major complex pairs)."""
    support = sorted(P.support)
    if local is None:
        local = local_projector(P)
    return {
        "label": P.label,
        "support": support,
        "region": P.region.to_list(),
        "dims": list(P.dims),
        "projector": _complex_pairs(local),
    }


def local_projector(P: ProjectionStatement) -> np.ndarray:
    """Recover the local operator on the support from the embedded projector."""
    support = sorted(P.support)
    if not support:
        return np.eye(1, dtype=complex)
    d_rest = P.dim // int(np.prod([P.dims[s] for s in support]))
    rest = [s for s in range(len(P.dims)) if s not in support]
    n = len(P.dims)
    tens = P.projector.reshape(P.dims + P.dims).transpose(support + rest + [n + s for s in support] + [n + s for s in rest])
    dk = P.dim // d_rest
    return np.einsum("ajbj->ab", tens.reshape(dk, d_rest, dk, d_rest)) / d_rest


def statement_from_json(obj: Mapping, positions: Mapping[int, int] | None = None) -> ProjectionStatement:
    dims = obj["dims"]
    support = obj["support"]
    d = int(np.prod([dims[s] for s in support]))
    pairs = np.asarray(obj["projector"], dtype=float)
    if pairs.shape != (d * d, 2):
        raise ValueError(f"{obj['label']}: projector has {len(pairs)} entries, expected {d * d}")
    local = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(d, d)
    region = Region.from_list(obj["region"])
    return make_statement(local, support, dims, obj["label"], region=region, positions=positions)


def registry_to_json(statements: Iterable[ProjectionStatement]) -> str:
    return json.dumps([statement_to_json(P) for P in statements], indent=2)


def registry_from_json(text: str, positions: Mapping[int, int] | None = None) -> dict[str, ProjectionStatement]:
    out = {}
    for obj in json.loads(text):
        P = statement_from_json(obj, positions)
        if P.label in out:
            raise ValueError(f"duplicate label {P.label}")
        out[P.label] = P
    return out


def registry(*statements: ProjectionStatement) -> dict[str, ProjectionStatement]:
    out = {}
    for P in statements:
        if P.label in out:
            raise ValueError(f"duplicate label {P.label}")
        out[P.label] = P
    return out
