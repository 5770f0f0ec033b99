"""Dense linear algebra over tensor products of finite-dimensional sites.

Site ordering is big-endian: site 0 is the slowest-varying index of the
flattened amplitude vector, so ``|01>`` on two qubits is index 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

MAX_DIM = 2**12

# SplitMix64 constants (Steele, Lea & Flood 2014).
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_MUL_1 = 0xBF58476D1CE4E5B9
MIX_MUL_2 = 0x94D049BB133111EB

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX_MUL_1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX_MUL_2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-based SplitMix64 generator with a numpy-like sampling API.

    The k-th 64-bit output (k = 1, 2, ...) is ``mix64(seed + k * GOLDEN_GAMMA)``
    modulo 2**64. Uniform doubles take the top 53 bits; normals use the
    Box-Muller transform on consecutive uniform pairs. Child streams for
    independent trials are seeded by ``mix64(seed ^ mix64((index + 1) * GOLDEN_GAMMA))``,
    so trial results do not depend on scheduling order.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed) % 2**64
        self.counter = 0

    def next_u64(self, size: int) -> np.ndarray:
        ks = np.arange(self.counter + 1, self.counter + size + 1, dtype=np.uint64)
        self.counter += size
        with np.errstate(over="ignore"):
            state = np.uint64(self.seed) + ks * np.uint64(GOLDEN_GAMMA)
            return _mix64(state)

    def child(self, index: int) -> "SplitMix64":
        with np.errstate(over="ignore"):
            salt = _mix64(np.array([(index + 1) * GOLDEN_GAMMA % 2**64], dtype=np.uint64))
            seed = _mix64(np.array([self.seed], dtype=np.uint64) ^ salt)
        return SplitMix64(int(seed[0]))

    def random(self, size=None) -> np.ndarray | float:
        n = 1 if size is None else int(np.prod(size))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return float(u[0]) if size is None else u.reshape(size)

    def standard_normal(self, size=None) -> np.ndarray | float:
        n = 1 if size is None else int(np.prod(size))
        m = (n + 1) // 2
        u = self.random(2 * m)
        u1 = 1.0 - u[0::2]  # in (0, 1]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * m)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        z = z[:n]
        return float(z[0]) if size is None else z.reshape(size)

    def integers(self, low: int, high: int | None = None, size=None):
        if high is None:
            low, high = 0, low
        u = self.random(1 if size is None else size)
        out = low + np.floor(np.asarray(u) * (high - low)).astype(np.int64)
        out = np.minimum(out, high - 1)
        return int(out.ravel()[0]) if size is None else out

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        u = self.random(size)
        return low + (high - low) * u

    def permutation(self, n: int) -> np.ndarray:
        # Fisher-Yates driven by the stream
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.integers(0, i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def choice(self, seq: Sequence, size: int | None = None, replace: bool = True):
        if size is None:
            return seq[self.integers(0, len(seq))]
        if replace:
            return [seq[i] for i in self.integers(0, len(seq), size)]
        return [seq[i] for i in self.permutation(len(seq))[:size]]


def make_rng(seed) -> SplitMix64 | np.random.Generator:
    if isinstance(seed, (SplitMix64, np.random.Generator)):
        return seed
    return SplitMix64(0 if seed is None else seed)


@dataclass(frozen=True)
class QuantumState:
    """Normalized amplitude vector over a tensor product of sites."""

    amplitudes: np.ndarray
    dims: tuple[int, ...]
    tol: float = field(default=1e-12, compare=False, repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel().copy()
        dims = tuple(int(d) for d in self.dims)
        if any(d < 1 for d in dims):
            raise ValueError(f"site dimensions must be positive, got {dims}")
        if amps.size != int(np.prod(dims)):
            raise ValueError(f"{amps.size} amplitudes do not match dims {dims}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > self.tol:
            raise ValueError(f"state is not normalized (norm = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def normalized(cls, vector, dims: Sequence[int] | None = None) -> "QuantumState":
        v = np.asarray(vector, dtype=complex).ravel()
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(v / norm, tuple(dims) if dims is not None else (v.size,))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def n_sites(self) -> int:
        return len(self.dims)

    def vdot(self, other: "QuantumState | np.ndarray") -> complex:
        vec = other.amplitudes if isinstance(other, QuantumState) else np.asarray(other)
        return complex(np.vdot(self.amplitudes, vec))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


@dataclass(frozen=True)
class LinearOp:
    """Square matrix acting on the sites ``support`` of a system with ``dims``."""

    matrix: np.ndarray
    dims: tuple[int, ...]
    support: tuple[int, ...]

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        dims = tuple(int(d) for d in self.dims)
        support = tuple(int(s) for s in self.support)
        if len(set(support)) != len(support):
            raise ValueError(f"repeated site in support {support}")
        if any(s < 0 or s >= len(dims) for s in support):
            raise ValueError(f"support {support} out of range for {len(dims)} sites")
        local = int(np.prod([dims[s] for s in support]))
        if mat.shape != (local, local):
            raise ValueError(f"matrix shape {mat.shape} does not match support dimension {local}")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "support", support)

    def full(self) -> np.ndarray:
        return embed_op(self.matrix, self.support, self.dims)


def tensor(*states: QuantumState) -> QuantumState:
    amps = reduce(np.kron, [s.amplitudes for s in states])
    dims = sum((s.dims for s in states), ())
    return QuantumState(amps, dims)


def kron_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, mats)


def embed_op(
    op: LinearOp | np.ndarray, target_support: Sequence[int], full_dims: Sequence[int]
) -> np.ndarray:
    """Return ``op`` acting on ``target_support`` tensored with identity elsewhere.

    The target support may be unordered; the i-th tensor factor of ``op``
    is placed on site ``target_support[i]``. The result is a dense matrix
    on the full space whose entries are exact products of ``op`` entries
    with 0 or 1, so embeddings on disjoint supports commute exactly.
    """
    mat = op.matrix if isinstance(op, LinearOp) else np.asarray(op, dtype=complex)
    full_dims = tuple(int(d) for d in full_dims)
    target = tuple(int(s) for s in target_support)
    n = len(full_dims)
    if len(set(target)) != len(target) or any(s < 0 or s >= n for s in target):
        raise ValueError(f"invalid support {target} for {n} sites")
    local_dims = [full_dims[s] for s in target]
    if mat.shape != (int(np.prod(local_dims)),) * 2:
        raise ValueError(f"operator shape {mat.shape} does not match dims {local_dims} on {target}")
    if isinstance(op, LinearOp):
        op_local = [op.dims[s] for s in op.support]
        if op_local != local_dims:
            raise ValueError(f"operator site dims {op_local} differ from target dims {local_dims}")
    total = int(np.prod(full_dims))
    if total > MAX_DIM:
        raise ValueError(f"total dimension {total} exceeds cap {MAX_DIM}")
    rest = [s for s in range(n) if s not in target]
    rest_dim = int(np.prod([full_dims[s] for s in rest])) if rest else 1
    big = np.kron(mat, np.eye(rest_dim, dtype=complex))
    order = list(target) + rest
    shape = [full_dims[s] for s in order]
    tens = big.reshape(shape + shape)
    inv = np.argsort(order)
    perm = list(inv) + [n + i for i in inv]
    return np.ascontiguousarray(tens.transpose(perm).reshape(total, total))


def is_hermitian(mat: np.ndarray, tol: float = 1e-10) -> bool:
    mat = np.asarray(mat)
    return mat.ndim == 2 and mat.shape[0] == mat.shape[1] and np.linalg.norm(mat - mat.conj().T) <= tol


def is_projector(op: LinearOp | np.ndarray, tol: float = 1e-10) -> bool:
    mat = op.matrix if isinstance(op, LinearOp) else np.asarray(op)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        return False
    return is_hermitian(mat, tol) and np.linalg.norm(mat @ mat - mat) <= tol


def projector_onto(vectors: np.ndarray | Sequence[np.ndarray], rank_tol: float = 1e-12) -> np.ndarray:
    """Orthogonal projector onto the span of the given column vectors."""
    vecs = np.asarray(vectors, dtype=complex)
    if vecs.ndim == 1:
        vecs = vecs[:, None]
    u, s, _ = np.linalg.svd(vecs, full_matrices=False)
    basis = u[:, s > rank_tol * max(1.0, s.max(initial=0.0))]
    return basis @ basis.conj().T


def _as_matrix(rho) -> np.ndarray:
    if isinstance(rho, QuantumState):
        rho = rho.amplitudes
    return np.asarray(rho, dtype=complex)


def partial_trace(rho, keep: Iterable[int], dims: Sequence[int]) -> np.ndarray:
    """Reduced density matrix on ``keep`` (returned in ascending site order).

    ``rho`` may be a state vector (rank-1 shortcut via the reshaped
    amplitude matrix) or a full density matrix.
    """
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if not keep or any(k < 0 or k >= n for k in keep):
        raise ValueError(f"invalid site set {keep} for {n} sites")
    rest = [s for s in range(n) if s not in keep]
    dk = int(np.prod([dims[s] for s in keep]))
    dr = int(np.prod([dims[s] for s in rest])) if rest else 1
    arr = _as_matrix(rho)
    if arr.ndim == 1:
        tens = arr.reshape(dims).transpose(keep + rest).reshape(dk, dr)
        return tens @ tens.conj().T
    if arr.shape != (int(np.prod(dims)),) * 2:
        raise ValueError(f"density matrix shape {arr.shape} does not match dims {dims}")
    tens = arr.reshape(dims + dims).transpose(keep + rest + [n + s for s in keep] + [n + s for s in rest])
    tens = tens.reshape(dk, dr, dk, dr)
    return np.einsum("ajbj->ab", tens)


class Propagator:
    """Cached eigendecomposition of a Hermitian matrix for exp(-iHt)."""

    def __init__(self, hamiltonian: np.ndarray, tol: float = 1e-10):
        h = np.asarray(hamiltonian, dtype=complex)
        if not is_hermitian(h, tol):
            raise ValueError("Hamiltonian is not Hermitian")
        self.hamiltonian = h
        self.energies, self.eigvecs = np.linalg.eigh(h)

    def unitary(self, t: float) -> np.ndarray:
        phases = np.exp(-1j * self.energies * t)
        return (self.eigvecs * phases) @ self.eigvecs.conj().T

    def apply(self, t: float, vec: np.ndarray) -> np.ndarray:
        coeffs = self.eigvecs.conj().T @ np.asarray(vec, dtype=complex)
        return self.eigvecs @ (np.exp(-1j * self.energies * t) * coeffs)


def hermitian_evolve(H: np.ndarray | LinearOp, t: float, psi: QuantumState) -> QuantumState:
    mat = H.full() if isinstance(H, LinearOp) else H
    out = Propagator(mat).apply(t, psi.amplitudes)
    return QuantumState(out, psi.dims, tol=1e-10)


def random_unit_vector(dim: int, rng, dims: Sequence[int] | None = None) -> QuantumState:
    """Haar-random unit vector from normalized complex Gaussian entries."""
    if dim < 1:
        raise ValueError("dimension must be at least 1")
    rng = make_rng(rng)
    raw = rng.standard_normal(2 * dim)
    vec = raw[:dim] + 1j * raw[dim:]
    return QuantumState.normalized(vec, dims if dims is not None else (dim,))


def random_unit_vectors(dim: int, count: int, rng) -> np.ndarray:
    """``count`` Haar vectors as rows; draws the same stream as repeated ``random_unit_vector``."""
    if dim < 1:
        raise ValueError("dimension must be at least 1")
    rng = make_rng(rng)
    raw = rng.standard_normal(2 * dim * count).reshape(count, 2, dim)
    vecs = raw[:, 0] + 1j * raw[:, 1]
    return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)


def random_projector(dim: int, rank: int, rng) -> np.ndarray:
    rng = make_rng(rng)
    cols = [random_unit_vector(dim, rng).amplitudes for _ in range(rank)]
    if rank == 0:
        return np.zeros((dim, dim), dtype=complex)
    return projector_onto(np.stack(cols, axis=1))


def random_density(dim: int, rng, rank: int | None = None) -> np.ndarray:
    """Random mixed state from a Ginibre matrix (Hilbert-Schmidt measure)."""
    rng = make_rng(rng)
    k = dim if rank is None else rank
    raw = rng.standard_normal(2 * dim * k).reshape(2, dim, k)
    g = raw[0] + 1j * raw[1]
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def basis_state(index: int, dims: Sequence[int]) -> QuantumState:
    dims = tuple(dims)
    vec = np.zeros(int(np.prod(dims)), dtype=complex)
    vec[index] = 1.0
    return QuantumState(vec, dims)


def ket(label: str) -> QuantumState:
    """Qubit product state from a label over ``01+-``, e.g. ``ket("0+")``."""
    table = {
        "0": np.array([1, 0], dtype=complex),
        "1": np.array([0, 1], dtype=complex),
        "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
        "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
    }
    return tensor(*[QuantumState(table[c], (2,)) for c in label])


def ghz(n: int, d: int = 2) -> QuantumState:
    vec = np.zeros(d**n, dtype=complex)
    for level in range(d):
        vec[sum(level * d**k for k in range(n))] = 1.0
    return QuantumState.normalized(vec, (d,) * n)


def product_state(vectors: Sequence[np.ndarray]) -> QuantumState:
    vecs = [np.asarray(v, dtype=complex) for v in vectors]
    return QuantumState.normalized(kron_all(vecs), [v.size for v in vecs])


def schmidt_coefficients(psi: QuantumState | np.ndarray, left: Iterable[int], dims: Sequence[int]) -> np.ndarray:
    dims = tuple(dims)
    left = sorted(set(left))
    right = [s for s in range(len(dims)) if s not in left]
    amps = psi.amplitudes if isinstance(psi, QuantumState) else np.asarray(psi)
    dl = int(np.prod([dims[s] for s in left]))
    mat = amps.reshape(dims).transpose(left + right).reshape(dl, -1)
    return np.linalg.svd(mat, compute_uv=False)
