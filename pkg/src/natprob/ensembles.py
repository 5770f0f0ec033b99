"""Density matrices and finite statistical ensembles built from measure algebras.

Distances between density matrices use the Frobenius (trace) inner product,
``‖A‖² = Tr A†A``. Ensembles are finite: the density of an element is the
normalized partial trace of ``|φ(b)⟩⟨φ(b)|`` and every point is an atom.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from natprob.linalg import embed_op, is_projector, partial_trace
from natprob.malg import EXHAUSTIVE_ATOMS, MeasureAlgebra, _bits, measure

DENSITY_TOL = 1e-10
WEIGHT_TOL = 1e-12
IDENTITY_TOL = 1e-10
DEFAULT_DELTA = 1e-6


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        if np.abs(m - m.conj().T).max() > DENSITY_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1) > DENSITY_TOL:
            raise ValueError(f"density matrix has trace {np.trace(m).real:.12g}")
        if np.linalg.eigvalsh(m).min() < -DENSITY_TOL:
            raise ValueError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def pure(cls, vec) -> "DensityMatrix":
        v = np.asarray(vec, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.matrix)


def _mat(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)


def hs_dist2(a, b) -> float:
    """Squared Frobenius distance."""
    d = _mat(a) - _mat(b)
    return float(np.vdot(d, d).real)


def linear_entropy(rho) -> float:
    m = _mat(rho)
    return float(1 - np.vdot(m, m).real)


def von_neumann_entropy(rho) -> float:
    w = np.linalg.eigvalsh(_mat(rho))
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log(w)))


@dataclass
class FiniteEnsemble:
    points: list[Hashable]
    weights: np.ndarray
    rhos: list[DensityMatrix]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.points) != len(self.weights) or len(self.points) != len(self.rhos):
            raise ValueError("points, weights and rhos must have equal length")
        if len(set(self.points)) != len(self.points):
            raise ValueError("ensemble points must be distinct")
        if np.any(self.weights < -WEIGHT_TOL) or abs(self.weights.sum() - 1) > WEIGHT_TOL:
            raise ValueError(f"weights must form a probability vector (sum {self.weights.sum():.15g})")
        dims = {r.dim for r in self.rhos}
        if len(dims) > 1:
            raise ValueError("all densities must share one dimension")

    def __len__(self) -> int:
        return len(self.points)

    def rho(self, point) -> DensityMatrix:
        return self.rhos[self.points.index(point)]

    def mean(self) -> np.ndarray:
        return np.einsum("p,pij->ij", self.weights, np.stack([r.matrix for r in self.rhos]))

    def average_linear_entropy(self) -> float:
        return float(sum(w * linear_entropy(r) for w, r in zip(self.weights, self.rhos)))

    def condition(self, points: Sequence[Hashable]) -> "FiniteEnsemble":
        """Bayesian update on a set of points: weights rescaled, densities unchanged."""
        keep = [self.points.index(p) for p in points]
        total = self.weights[keep].sum()
        if total <= WEIGHT_TOL:
            raise ValueError("conditioning event has zero weight")
        return FiniteEnsemble([self.points[i] for i in keep], self.weights[keep] / total, [self.rhos[i] for i in keep])

    def to_dict(self) -> dict:
        pts = []
        for p, w, r in zip(self.points, self.weights, self.rhos):
            flat = r.matrix.reshape(-1)
            pts.append(
                {
                    "point": p if isinstance(p, (int, str)) else str(p),
                    "weight": float(w),
                    "rho": [[float(z.real), float(z.imag)] for z in flat],
                    "S_L": linear_entropy(r),
                }
            )
        mean = self.mean()
        return {
            "points": pts,
            "averages": {
                "S_L": self.average_linear_entropy(),
                "S_L_of_mean": linear_entropy(mean),
                "rho": [[float(z.real), float(z.imag)] for z in mean.reshape(-1)],
            },
        }

    def dump(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class SystemSplit:
    system: tuple[int, ...]
    environment: tuple[int, ...]

    def __post_init__(self):
        s, e = set(self.system), set(self.environment)
        if not s:
            raise ValueError("system must contain at least one site")
        if s & e:
            raise ValueError(f"system and environment overlap on {sorted(s & e)}")
        allsites = s | e
        if allsites != set(range(len(allsites))):
            raise ValueError("system and environment must cover sites 0..n-1")
        object.__setattr__(self, "system", tuple(sorted(s)))
        object.__setattr__(self, "environment", tuple(sorted(e)))

    @classmethod
    def of(cls, system: Sequence[int], n_sites: int) -> "SystemSplit":
        return cls(tuple(system), tuple(s for s in range(n_sites) if s not in set(system)))


def _check_split(alg: MeasureAlgebra, split: SystemSplit) -> tuple[int, ...]:
    dims = alg.generators[0].dims
    if len(split.system) + len(split.environment) != len(dims):
        raise ValueError(f"split covers {len(split.system) + len(split.environment)} sites, algebra has {len(dims)}")
    return dims


def density_of(alg: MeasureAlgebra, b, split: SystemSplit) -> DensityMatrix:
    dims = _check_split(alg, split)
    b = alg.element(b)
    mu = measure(alg, b)
    if mu <= alg.null_tol:
        raise ValueError(f"element is null (mu = {mu:.3e})")
    rho = partial_trace(alg.phi(b), split.system, dims) / mu
    return DensityMatrix(0.5 * (rho + rho.conj().T))


@dataclass
class SeparatenessReport:
    separate: bool
    overlaps: dict[str, list[int]]

    @property
    def offending(self) -> list[str]:
        return [lab for lab, ov in self.overlaps.items() if ov]


def separateness_check(alg: MeasureAlgebra, split: SystemSplit) -> SeparatenessReport:
    """Every generator supported on environment sites makes every partition separate."""
    sys_sites = set(split.system)
    overlaps = {g.label: sorted(set(g.support) & sys_sites) for g in alg.generators}
    return SeparatenessReport(not any(overlaps.values()), overlaps)


@dataclass
class EnsembleReport:
    ensemble: FiniteEnsemble
    expectation_error: float
    additive_density_error: float
    elements_checked: int

    @property
    def passed(self) -> bool:
        return self.expectation_error <= IDENTITY_TOL and self.additive_density_error <= IDENTITY_TOL


def ensemble_from_algebra(alg: MeasureAlgebra, split: SystemSplit, samples: int = 200, rng=0) -> EnsembleReport:
    sep = separateness_check(alg, split)
    if not sep.separate:
        raise ValueError(f"algebra is not separate from the system; offending generators {sep.offending}")
    dims = _check_split(alg, split)
    mu = alg.atom_mu()
    atoms = alg.atoms
    total = float(mu[atoms].sum())
    rhos = [density_of(alg, 1 << a, split) for a in atoms]
    ens = FiniteEnsemble(list(atoms), mu[atoms] / total, rhos)
    # ρ(b) against the average over atoms below b
    if len(atoms) <= EXHAUSTIVE_ATOMS:
        elements = [e for e in alg.elements() if e]
    else:
        from natprob.linalg import make_rng

        gen = make_rng(rng)
        elements = [e for e in (alg.random_element(gen) for _ in range(samples)) if e]
    worst = 0.0
    stack = np.stack([r.matrix for r in rhos])
    for b in elements:
        idx = [i for i, a in enumerate(atoms) if (b >> a) & 1]
        w = mu[[atoms[i] for i in idx]]
        avg = np.einsum("p,pij->ij", w / w.sum(), stack[idx])
        worst = max(worst, float(np.abs(density_of(alg, b, split).matrix - avg).max()))
    rho_psi = partial_trace(alg.psi, split.system, dims) / float(np.vdot(alg.psi, alg.psi).real)
    add_err = float(np.abs(rho_psi - ens.mean()).max())
    return EnsembleReport(ens, worst, add_err, len(elements))


def conditional_ensemble(alg: MeasureAlgebra, ensemble: FiniteEnsemble, O) -> FiniteEnsemble:
    """Bayesian update on the observer statement O."""
    O = alg.element(O)
    return ensemble.condition([a for a in ensemble.points if (O >> a) & 1])


def refinement_map(fine: MeasureAlgebra, coarse: MeasureAlgebra) -> dict[int, int]:
    """Fine atom ↦ coarse atom, for coarse generators that are a subset of the fine ones (by label)."""
    pos = {lab: k for k, lab in enumerate(fine.labels)}
    missing = [lab for lab in coarse.labels if lab not in pos]
    if missing:
        raise ValueError(f"coarse generators {missing} are absent from the fine algebra")
    out = {}
    for a in fine.atoms:
        out[a] = sum(((a >> pos[lab]) & 1) << j for j, lab in enumerate(coarse.labels))
    return out


@dataclass
class MixingReport:
    lhs: float
    rhs: float
    error: float

    @property
    def holds(self) -> bool:
        return self.error <= IDENTITY_TOL


def mixing_identity_check(weights: Sequence[float], rhos: Sequence) -> MixingReport:
    """Σ a_i ‖ρ − ρ_i‖² against S_L(ρ) − Σ a_i S_L(ρ_i) with ρ = Σ a_i ρ_i."""
    a = np.asarray(weights, dtype=float)
    if a.ndim != 1 or len(a) != len(rhos) or len(a) == 0:
        raise ValueError("one weight per density required")
    if np.any(a < -WEIGHT_TOL) or abs(a.sum() - 1) > WEIGHT_TOL:
        raise ValueError("weights must form a probability vector")
    mats = [_mat(r) for r in rhos]
    rho = sum(w * m for w, m in zip(a, mats))
    lhs = float(sum(w * hs_dist2(rho, m) for w, m in zip(a, mats)))
    rhs = linear_entropy(rho) - float(sum(w * linear_entropy(m) for w, m in zip(a, mats)))
    return MixingReport(lhs, rhs, abs(lhs - rhs))


def top_eigvec(rho) -> tuple[float, np.ndarray]:
    """Largest eigenvalue and eigenvector; ties go to the first of the degenerate group in eigh order."""
    w, v = np.linalg.eigh(_mat(rho))
    k = int(np.flatnonzero(w >= w[-1] - 1e-12)[0])
    return float(w[k]), v[:, k]


@dataclass
class PurityReport:
    lambda1: float
    linear_entropy: float
    von_neumann: float
    dist2: float
    identity_error: float
    lambda_ok: bool
    pure_ok: bool
    entropy_order_ok: bool

    @property
    def holds(self) -> bool:
        return self.lambda_ok and self.pure_ok and self.entropy_order_ok and self.identity_error <= IDENTITY_TOL


def purity_bounds_check(rho) -> PurityReport:
    lam, vec = top_eigvec(rho)
    sl = linear_entropy(rho)
    s = von_neumann_entropy(rho)
    d2 = hs_dist2(rho, np.outer(vec, vec.conj()))
    ident = abs(d2 - (2 * (1 - lam) - sl))
    return PurityReport(
        lam,
        sl,
        s,
        d2,
        ident,
        1 - lam <= sl + IDENTITY_TOL,
        d2 <= sl + IDENTITY_TOL,
        s >= sl - IDENTITY_TOL,
    )


@dataclass
class EntropyDropReport:
    distance2: float
    drop: float
    error: float
    coarse_avg_sl: float
    fine_avg_sl: float

    @property
    def holds(self) -> bool:
        return self.error <= IDENTITY_TOL


def fine_grain_entropy_drop(
    coarse: FiniteEnsemble, fine: FiniteEnsemble, refinement: Mapping[Hashable, Hashable]
) -> EntropyDropReport:
    """∫ ‖ρ∘π − ρ'‖² dμ' against the drop in average linear entropy."""
    if set(refinement) != set(fine.points):
        raise ValueError("refinement map must be defined on every fine point")
    if not set(refinement.values()) <= set(coarse.points):
        raise ValueError("refinement map lands outside the coarse points")
    for cp, cw, cr in zip(coarse.points, coarse.weights, coarse.rhos):
        kids = [i for i, p in enumerate(fine.points) if refinement[p] == cp]
        w = fine.weights[kids].sum() if kids else 0.0
        if abs(w - cw) > 1e-10:
            raise ValueError(f"map does not refine weights at coarse point {cp!r}: {w} vs {cw}")
        if kids:
            avg = sum(fine.weights[i] * fine.rhos[i].matrix for i in kids) / w
            if np.abs(avg - cr.matrix).max() > IDENTITY_TOL:
                raise ValueError(f"coarse density at {cp!r} is not the average of its refinement")
    dist2 = float(
        sum(w * hs_dist2(coarse.rho(refinement[p]), r) for p, w, r in zip(fine.points, fine.weights, fine.rhos))
    )
    c_sl, f_sl = coarse.average_linear_entropy(), fine.average_linear_entropy()
    drop = c_sl - f_sl
    return EntropyDropReport(dist2, drop, abs(dist2 - drop), c_sl, f_sl)


@dataclass
class PureApproximation:
    ensemble: FiniteEnsemble
    distance: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.distance <= self.bound + IDENTITY_TOL


def pure_approximation(ensemble: FiniteEnsemble, eps: float = 0.0) -> PureApproximation:
    pures = [DensityMatrix.pure(top_eigvec(r)[1]) for r in ensemble.rhos]
    d2 = sum(w * hs_dist2(r, p) for w, r, p in zip(ensemble.weights, ensemble.rhos, pures))
    out = FiniteEnsemble(list(ensemble.points), ensemble.weights.copy(), pures)
    return PureApproximation(out, float(np.sqrt(max(d2, 0.0))), float(np.sqrt(max(ensemble.average_linear_entropy(), 0.0)) + eps))


@dataclass
class MeasurementReport:
    deltas: dict[int, float]
    prob_errors: dict[int, float]
    probabilities: dict[int, float]
    max_delta: float
    threshold: float
    prob_ok: bool

    @property
    def passed(self) -> bool:
        return self.max_delta <= self.threshold and self.prob_ok


def measurement_model_check(
    alg: MeasureAlgebra,
    pvm: Mapping,
    split: SystemSplit,
    E=None,
    delta: float = DEFAULT_DELTA,
) -> MeasurementReport:
    """Compare π(M)φ(E) with φ(M) for every M generated by the pvm outcomes.

    ``pvm`` maps disjoint algebra elements (whose join is E) to projectors on
    the system sites; π extends additively to their joins.
    """
    dims = _check_split(alg, split)
    E = alg.one if E is None else alg.element(E)
    keys = [alg.element(k) for k in pvm]
    locals_ = [np.asarray(p, dtype=complex) for p in pvm.values()]
    sys_dim = int(np.prod([dims[s] for s in split.system]))
    for k1 in range(len(keys)):
        for k2 in range(k1 + 1, len(keys)):
            if keys[k1] & keys[k2]:
                raise ValueError("pvm outcomes must be disjoint elements")
    join = 0
    for k in keys:
        join |= k
    if join != E:
        raise ValueError("pvm outcomes must join to E")
    for p in locals_:
        if p.shape != (sys_dim, sys_dim):
            raise ValueError(f"pvm entries must act on the system only (dimension {sys_dim})")
        if not is_projector(p):
            raise ValueError("pvm entries must be projectors")
    if np.abs(sum(locals_) - np.eye(sys_dim)).max() > 1e-10:
        raise ValueError("pvm is not additive: projectors do not sum to the identity")
    full = [embed_op(p, list(split.system), dims) for p in locals_]
    phi_E = alg.phi(E)
    nE2 = float(np.vdot(phi_E, phi_E).real)
    if nE2 <= alg.null_tol:
        raise ValueError("E is null")
    deltas, perrs, probs = {}, {}, {}
    prob_ok = True
    for combo in range(1, 2 ** len(keys)):
        M = 0
        op = np.zeros_like(full[0])
        for i in _bits(combo):
            M |= keys[i]
            op = op + full[i]
        phi_M = alg.phi(M)
        d = float(np.linalg.norm(op @ phi_E - phi_M) / np.sqrt(nE2))
        p_alg = float(np.vdot(phi_M, phi_M).real) / nE2
        p_born = float(np.vdot(phi_E, op @ phi_E).real) / nE2
        deltas[M], probs[M], perrs[M] = d, p_alg, abs(p_alg - p_born)
        if perrs[M] > 2 * d + 1e-12:
            prob_ok = False
    return MeasurementReport(deltas, perrs, probs, max(deltas.values()), delta, prob_ok)
