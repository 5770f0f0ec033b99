"""Star-coupled decoherence model, record error curves and observer branching.

Site 0 is the system, sites 1..n the environment; the Hamiltonian is
``sum_k M ⊗ H_k`` with term ``k`` acting on sites ``{0, k}``. Because every
term commutes with ``M``, the evolved state splits exactly into branches
``λ_i a_i ⊗ x_{1,i} ⊗ ... ⊗ x_{n,i}`` with ``x_{k,i} = exp(-i m_i H_k t) x_k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from natprob.linalg import (
    MAX_DIM,
    Propagator,
    QuantumState,
    X,
    Y,
    Z,
    embed_op,
    is_hermitian,
    kron_all,
    make_rng,
    projector_onto,
    random_unit_vectors,
)
from natprob.spacetime import region_for_sites, star_positions
from natprob.statements import make_statement, visibility_lower_bound

GAP_TOL = 1e-8
PRODUCT_TOL = 1e-10
FIT_FLOOR = 1e-12


def _expm_herm(h: np.ndarray, t: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


@dataclass
class DarwinismModel:
    n_env: int
    d_sys: int
    d_env: int
    M: np.ndarray
    H_ks: list[np.ndarray]
    positions: dict[int, int]
    eigvals: np.ndarray
    eigvecs: np.ndarray  # columns a_i
    hamiltonian: np.ndarray
    _propagator: Propagator | None = field(default=None, repr=False)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.d_sys,) + (self.d_env,) * self.n_env

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def propagator(self) -> Propagator:
        if self._propagator is None:
            self._propagator = Propagator(self.hamiltonian)
        return self._propagator

    def spectral_projector(self, branches: Sequence[int]) -> np.ndarray:
        """Local projector P_I onto span{a_i : i in I} on the system site."""
        return projector_onto(self.eigvecs[:, list(branches)])

    def commutator_norms(self) -> list[float]:
        out = []
        for i in range(self.d_sys):
            P = embed_op(self.spectral_projector([i]), [0], self.dims)
            out.append(float(np.linalg.norm(self.hamiltonian @ P - P @ self.hamiltonian)))
        return out


def build_star_model(
    n_env: int,
    d_sys: int,
    d_env: int,
    M: np.ndarray,
    H_ks: Sequence[np.ndarray] | np.ndarray,
    positions: Mapping[int, int] | None = None,
) -> DarwinismModel:
    if n_env < 1:
        raise ValueError("need at least one environment site")
    total = d_sys * d_env**n_env
    if total > MAX_DIM:
        raise ValueError(f"total dimension {total} exceeds cap {MAX_DIM}")
    M = np.asarray(M, dtype=complex)
    if M.shape != (d_sys, d_sys) or not is_hermitian(M):
        raise ValueError("M must be a Hermitian d_sys x d_sys matrix")
    H_arr = np.asarray(H_ks, dtype=complex)
    H_list = [H_arr] * n_env if H_arr.ndim == 2 else list(H_arr)
    if len(H_list) != n_env:
        raise ValueError(f"expected {n_env} environment Hamiltonians, got {len(H_list)}")
    for H in H_list:
        if H.shape != (d_env, d_env) or not is_hermitian(H):
            raise ValueError("each H_k must be a Hermitian d_env x d_env matrix")
    w, v = np.linalg.eigh(M)
    if d_sys > 1 and np.min(np.diff(w)) <= GAP_TOL:
        raise ValueError(f"M has a degenerate spectrum (min gap {np.min(np.diff(w)):.3e})")
    dims = (d_sys,) + (d_env,) * n_env
    H_total = np.zeros((total, total), dtype=complex)
    for k, H in enumerate(H_list, start=1):
        H_total += embed_op(np.kron(M, H), [0, k], dims)
    pos = dict(positions) if positions is not None else star_positions(n_env)
    model = DarwinismModel(n_env, d_sys, d_env, M, H_list, pos, w, v, H_total)
    if not is_hermitian(H_total):
        raise ValueError("assembled Hamiltonian is not Hermitian")
    return model


@dataclass
class BranchDecomposition:
    index: int
    eigenvalue: float
    a: np.ndarray
    factors: list[np.ndarray]
    weight: complex

    def vector(self) -> np.ndarray:
        return self.weight * kron_all([self.a] + self.factors)


@dataclass
class Evolution:
    t: float
    state: QuantumState
    branches: list[BranchDecomposition]
    residual: float
    norm: float

    def overlaps(self, i: int = 0, j: int = 1) -> np.ndarray:
        """Per-site overlaps ⟨x_{k,i}|x_{k,j}⟩."""
        return np.array([np.vdot(x, y) for x, y in zip(self.branches[i].factors, self.branches[j].factors)])


def factorize_product(psi: QuantumState, tol: float = PRODUCT_TOL) -> list[np.ndarray]:
    """Split a product state into site factors, checking Schmidt rank 1 across every cut."""
    factors = []
    rest = psi.amplitudes.copy()
    dims = list(psi.dims)
    for k, d in enumerate(dims[:-1]):
        mat = rest.reshape(d, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        if s.size > 1 and s[1] > tol:
            raise ValueError(f"state is not a product across cut {k}|{k + 1} (second Schmidt value {s[1]:.3e})")
        factors.append(u[:, 0] * s[0])
        rest = vh[0]
    factors.append(rest)
    # push global phase and norm into the first factor
    norms = [np.linalg.norm(f) for f in factors]
    factors = [f / n for f, n in zip(factors, norms)]
    factors[0] = factors[0] * np.prod(norms)
    return factors


def evolve(model: DarwinismModel, psi0: QuantumState | Sequence[np.ndarray], t: float) -> Evolution:
    if isinstance(psi0, QuantumState):
        if psi0.dims != model.dims:
            raise ValueError(f"state dims {psi0.dims} do not match model dims {model.dims}")
        factors = factorize_product(psi0)
        state0 = psi0
    else:
        factors = [np.asarray(f, dtype=complex) for f in psi0]
        if [f.size for f in factors] != list(model.dims):
            raise ValueError("factor sizes do not match model dims")
        factors = [f / np.linalg.norm(f) for f in factors]
        state0 = QuantumState(kron_all(factors), model.dims)
    a, xs = factors[0], factors[1:]
    out = model.propagator.apply(t, state0.amplitudes)
    state = QuantumState(out, model.dims, tol=1e-10)
    branches = []
    for i, m_i in enumerate(model.eigvals):
        a_i = model.eigvecs[:, i]
        x_ki = [_expm_herm(m_i * H, t) @ x for H, x in zip(model.H_ks, xs)]
        branches.append(BranchDecomposition(i, float(m_i), a_i, x_ki, complex(np.vdot(a_i, a))))
    recon = sum(b.vector() for b in branches)
    residual = float(np.linalg.norm(out - recon))
    return Evolution(t, state, branches, residual, float(np.linalg.norm(out)))


# ---------------------------------------------------------------------------
# Records


def record_projectors(evo: Evolution, branches: Sequence[int]) -> list[np.ndarray]:
    """X_k = projector onto span{x_{k,j} : j in I} per environment site."""
    n_env = len(evo.branches[0].factors)
    return [projector_onto(np.stack([evo.branches[j].factors[k] for j in branches], axis=1)) for k in range(n_env)]


def log_linear_fit(xs: Sequence[float], errs: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope and intercept of ln err vs x over points with err > 1e-12."""
    xs = np.asarray(xs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    keep = errs > FIT_FLOOR
    if keep.sum() < 2:
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(xs[keep], np.log(errs[keep]), 1)
    return float(slope), float(intercept)


@dataclass
class ErrorCurve:
    fragment_sizes: list[int]
    errors: list[float]
    slope: float
    intercept: float
    norm_p: float
    norm_not_p: float

    @property
    def monotone(self) -> bool:
        return all(b <= a + 1e-15 for a, b in zip(self.errors, self.errors[1:]))


def _apply_site_ops(vec: np.ndarray, dims: Sequence[int], ops: Mapping[int, np.ndarray]) -> np.ndarray:
    tens = vec.reshape(dims)
    for site, op in ops.items():
        tens = np.moveaxis(np.tensordot(op, tens, axes=([1], [site])), 0, site)
    return tens.reshape(-1)


def record_error_curve(
    model: DarwinismModel,
    evo: Evolution,
    branches: Sequence[int],
    fragment_sizes: Sequence[int],
) -> ErrorCurve:
    """err(m) = ‖X_1 ... X_m ψ − P_I ψ‖ for each fragment size m."""
    branches = sorted(set(int(b) for b in branches))
    if not branches or any(b < 0 or b >= model.d_sys for b in branches):
        raise ValueError(f"branch set {branches} incompatible with the pointer basis")
    if max(fragment_sizes, default=0) > model.n_env or min(fragment_sizes, default=0) < 0:
        raise ValueError("fragment sizes must lie in 0..n_env")
    psi = evo.state.amplitudes
    P = model.spectral_projector(branches)
    p_psi = _apply_site_ops(psi, model.dims, {0: P})
    Xs = record_projectors(evo, branches)
    errs = []
    for m in fragment_sizes:
        v = _apply_site_ops(psi, model.dims, {k + 1: Xs[k] for k in range(m)})
        errs.append(float(np.linalg.norm(v - p_psi)))
    slope, intercept = log_linear_fit(fragment_sizes, errs)
    return ErrorCurve(
        list(fragment_sizes),
        errs,
        slope,
        intercept,
        float(np.linalg.norm(p_psi)),
        float(np.linalg.norm(psi - p_psi)),
    )


def two_branch_closed_form(evo: Evolution, fragment_sizes: Sequence[int], branch: int = 0) -> list[float]:
    """err(m) = |λ_other| Π_{k≤m} |⟨x_{k,i}|x_{k,j}⟩| for a two-branch model."""
    other = 1 - branch
    ov = np.abs(evo.overlaps(branch, other))
    lam = abs(evo.branches[other].weight)
    return [float(lam * np.prod(ov[:m])) for m in fragment_sizes]


def overlap_model_time(c: float) -> float:
    """Time at which M=Z, H_k=X, x_k=|0⟩ gives per-site overlap cos(2t) = c."""
    if not -1 <= c <= 1:
        raise ValueError("overlap must lie in [-1, 1]")
    return float(np.arccos(c) / 2)


def qubit_star_model(n_env: int) -> DarwinismModel:
    return build_star_model(n_env, 2, 2, Z, X)


def plus_zero_state(n_env: int, weights: Sequence[float] | None = None) -> list[np.ndarray]:
    """Factors a ⊗ |0⟩^n with a = (w0, w1) normalized (default |+⟩)."""
    w = np.array([1.0, 1.0] if weights is None else weights, dtype=complex)
    a = w / np.linalg.norm(w)
    return [a] + [np.array([1, 0], dtype=complex)] * n_env


# ---------------------------------------------------------------------------
# Visibility scans


@dataclass
class VisibilityScan:
    sizes: list[int]
    record_visibility: list[float]
    best_visibility: list[float]
    capped: list[bool]
    offset: float
    k_hat: float
    slope: float
    intercept: float
    record_slope: float
    record_intercept: float
    linear_growth: bool


def visibility_bound_scan(
    model: DarwinismModel,
    evo: Evolution,
    branches: Sequence[int],
    region_family: Sequence[Sequence[int]],
    t_slice: int = 1,
    method: str = "auto",
) -> VisibilityScan:
    """Visibility of P_I in growing environment fragments.

    ``record_visibility`` uses the product of the span records on the
    fragment; ``best_visibility`` adds the visibility candidates of the
    statements module. ``k_hat`` is the smallest k with
    Vis ≤ ln‖Pψ‖ − ln‖(1−P)ψ‖ + k·|U| on the scanned family.
    """
    for small, big in zip(region_family, region_family[1:]):
        if not set(small) <= set(big):
            raise ValueError("region family must be nested")
    P_local = model.spectral_projector(branches)
    P = make_statement(P_local, [0], model.dims, "P_I", t=0, positions=model.positions)
    Xs = record_projectors(evo, branches)
    psi = evo.state.amplitudes
    p_psi = P.projector @ psi
    norm_p = float(np.linalg.norm(p_psi))
    norm_q = float(np.linalg.norm(psi - p_psi))
    offset = float(np.log(norm_p) - np.log(norm_q)) if norm_p > 0 and norm_q > 0 else float("nan")
    rec, best, capped, sizes = [], [], [], []
    for U_sites in region_family:
        U_sites = sorted(U_sites)
        region = region_for_sites(U_sites, t_slice, model.positions)
        record = kron_all([Xs[k - 1] for k in U_sites])
        res_rec = visibility_lower_bound(P, region, psi, method="none", positions=model.positions, extra_candidates=[record])
        res = visibility_lower_bound(P, region, psi, method=method, positions=model.positions, extra_candidates=[record])
        sizes.append(len(U_sites))
        rec.append(res_rec.value)
        best.append(res.value)
        capped.append(res.capped)
    sizes_arr = np.array(sizes, dtype=float)
    best_arr = np.array(best)
    k_hat = float(np.max((best_arr - offset) / sizes_arr)) if len(sizes) else float("nan")
    slope, intercept = np.polyfit(sizes_arr, best_arr, 1) if len(sizes) >= 2 else (np.nan, np.nan)
    r_slope, r_intercept = np.polyfit(sizes_arr, rec, 1) if len(sizes) >= 2 else (np.nan, np.nan)
    increments = np.diff(best_arr)
    linear = bool(np.all(increments <= k_hat + 1e-9)) if len(sizes) >= 2 else True
    return VisibilityScan(
        sizes,
        rec,
        best,
        capped,
        offset,
        k_hat,
        float(slope),
        float(intercept),
        float(r_slope),
        float(r_intercept),
        linear,
    )


# ---------------------------------------------------------------------------
# Observers


@dataclass
class ObserverModel:
    """Observer qubit/qudit appended after the environment, reading ``read_sites``."""

    read_sites: list[int]
    M_ks: list[np.ndarray]
    H_o: np.ndarray
    o: np.ndarray

    def __post_init__(self):
        if not self.read_sites:
            raise ValueError("observer must read at least one environment site")
        if len(self.M_ks) != len(self.read_sites):
            raise ValueError("one M_k per read site required")
        self.o = np.asarray(self.o, dtype=complex) / np.linalg.norm(self.o)

    @property
    def d_obs(self) -> int:
        return self.o.size


def ideal_observer(n_read: int) -> ObserverModel:
    """Reads Y on each record site with H_o = X, starting from |0⟩."""
    return ObserverModel(list(range(1, n_read + 1)), [Y] * n_read, X, np.array([1, 0], dtype=complex))


def ideal_read_time(n_read: int) -> float:
    return float(np.pi / (4 * n_read))


@dataclass
class ObserverReport:
    weights: list[float]
    branch_weights: list[float]
    weight_errors: list[float]
    knowledge: list[float]
    pair_overlaps: list[list[complex]]
    pointer_overlaps: list[list[float]]
    zero_distinguishability: bool
    approximation_distance: float
    dims: tuple[int, ...]

    @property
    def max_weight_error(self) -> float:
        return max(self.weight_errors)

    @property
    def max_knowledge(self) -> float:
        return max(self.knowledge)


def observer_branching(
    model: DarwinismModel,
    observer: ObserverModel | None,
    psi0: Sequence[np.ndarray],
    t_dec: float,
    t_read: float,
) -> ObserverReport:
    """Decohere for ``t_dec``, then run the read interaction Σ_k M_k ⊗ H_o for ``t_read``.

    O_i are orthogonalized projectors onto the observer states o_i reached in
    each branch. Statements are compared in the Heisenberg frame of the
    pre-read state: O_i ↦ U† O_i U, while the pre-read statement O = |o⟩⟨o|
    acts directly.
    """
    if observer is None:
        raise ValueError("observer site missing")
    n = model.n_env
    obs_site = n + 1
    dims = model.dims + (observer.d_obs,)
    total = int(np.prod(dims))
    if total > MAX_DIM:
        raise ValueError(f"total dimension {total} exceeds cap {MAX_DIM}")
    if any(k < 1 or k > n for k in observer.read_sites):
        raise ValueError("read sites must be environment sites")
    evo = evolve(model, list(psi0), t_dec)
    psi1 = np.kron(evo.state.amplitudes, observer.o)
    H_read = np.zeros((total, total), dtype=complex)
    for k, Mk in zip(observer.read_sites, observer.M_ks):
        H_read += embed_op(np.kron(Mk, observer.H_o), [k, obs_site], dims)
    U = Propagator(H_read).unitary(t_read)
    # pointer state reached in each branch, weight stripped so empty branches still get one
    o_states = []
    for b in evo.branches:
        branch_vec = np.kron(kron_all([b.a] + b.factors), observer.o)
        out = (U @ branch_vec).reshape(-1, observer.d_obs)
        w, v = np.linalg.eigh(out.T @ out.conj())
        o_states.append(v[:, -1])
    # Gram-Schmidt in branch order
    basis: list[np.ndarray] = []
    O_locals = []
    for o_i in o_states:
        vec = o_i - sum(np.vdot(e, o_i) * e for e in basis)
        nrm = np.linalg.norm(vec)
        if nrm > 1e-8:
            vec = vec / nrm
            basis.append(vec)
            O_locals.append(np.outer(vec, vec.conj()))
        else:
            O_locals.append(np.zeros((observer.d_obs, observer.d_obs), dtype=complex))
    O_full = [embed_op(Oi, [obs_site], dims) for Oi in O_locals]
    O_pre = embed_op(np.outer(observer.o, observer.o.conj()), [obs_site], dims)
    weights, knowledge, vecs = [], [], []
    for Oi in O_full:
        Oi_H = U.conj().T @ Oi @ U
        v = Oi_H @ psi1
        vecs.append(v)
        weights.append(float(np.vdot(v, v).real))
        knowledge.append(float(np.linalg.norm(Oi_H @ (O_pre @ psi1) - v)))
    lam2 = [abs(b.weight) ** 2 for b in evo.branches]
    pair = [[complex(np.vdot(vi, vj)) for vj in vecs] for vi in vecs]
    pointer = [[float(abs(np.vdot(oi, oj))) for oj in o_states] for oi in o_states]
    populated = [i for i, l in enumerate(lam2) if l > 1e-12]
    zero_dist = any(pointer[i][j] > 1 - 1e-9 for i in populated for j in populated if i < j)
    # large-n approximation Σ_i P'_i m_i H_o with P'_i the product records on the read sites
    approx = np.zeros_like(H_read)
    for b in evo.branches:
        rec_ops = {k: np.outer(b.factors[k - 1], b.factors[k - 1].conj()) for k in observer.read_sites}
        m_i = sum(float(np.vdot(b.factors[k - 1], Mk @ b.factors[k - 1]).real) for k, Mk in zip(observer.read_sites, observer.M_ks))
        P_rec = embed_op(kron_all([rec_ops[k] for k in observer.read_sites]), observer.read_sites, dims)
        approx += m_i * P_rec @ embed_op(observer.H_o, [obs_site], dims)
    approx_dist = float(np.linalg.norm((H_read - approx) @ psi1))
    return ObserverReport(
        weights=weights,
        branch_weights=lam2,
        weight_errors=[abs(w - l) for w, l in zip(weights, lam2)],
        knowledge=knowledge,
        pair_overlaps=pair,
        pointer_overlaps=pointer,
        zero_distinguishability=zero_dist,
        approximation_distance=approx_dist,
        dims=dims,
    )


# ---------------------------------------------------------------------------
# Random projection law


@dataclass
class DNResult:
    d: int
    N: int
    mean: float
    stderr: float
    samples: int

    @property
    def z_score(self) -> float:
        return (self.mean - self.d / self.N) / self.stderr


def dn_law(d: int, N: int, samples: int, rng, projector: np.ndarray | None = None) -> DNResult:
    """Sample mean of ‖Πv‖² over Haar vectors for a fixed rank-d projector Π."""
    if not 0 <= d <= N:
        raise ValueError("need 0 ≤ d ≤ N")
    rng = make_rng(rng)
    vecs = random_unit_vectors(N, samples, rng)
    if projector is None:
        vals = np.sum(np.abs(vecs[:, :d]) ** 2, axis=1)
    else:
        proj = vecs @ np.asarray(projector).T
        vals = np.sum(np.abs(proj) ** 2, axis=1)
    return DNResult(d, N, float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples)), samples)
