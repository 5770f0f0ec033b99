"""CHSH correlations, the deterministic bound and common fine-graining feasibility.

Observables are ``A = 2 P_θ - 1`` for spin along angle θ in the x–z plane,
i.e. ``A = cos θ Z + sin θ X``. The CHSH functional uses the sign pattern
``E(a0,b0) - E(a0,b1) + E(a1,b0) + E(a1,b1)``, which is ``(a0 + a1) b0 +
(a1 - a0) b1`` on deterministic assignments.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from natprob.linalg import QuantumState, X, Z

# CHSH_SIGNS[i][j] multiplies E(a_i, b_j)
CHSH_SIGNS = ((1, -1), (1, 1))
TABLE_TOL = 1e-12

ASSIGNMENTS: tuple[tuple[int, int, int, int], ...] = tuple(itertools.product((1, -1), repeat=4))


def singlet() -> QuantumState:
    return QuantumState(np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2), (2, 2))


def spin_observable(theta: float) -> np.ndarray:
    return np.cos(theta) * Z + np.sin(theta) * X


def spin_projector(theta: float) -> np.ndarray:
    return 0.5 * (np.eye(2) + spin_observable(theta))


@dataclass(frozen=True)
class ChshSetting:
    state: QuantumState
    a0: float
    a1: float
    b0: float
    b1: float

    def __post_init__(self):
        if self.state.dims != (2, 2):
            raise ValueError(f"CHSH needs a two-qubit state, got dims {self.state.dims}")
        if not all(np.isfinite([self.a0, self.a1, self.b0, self.b1])):
            raise ValueError("angles must be finite")


@dataclass(frozen=True)
class CorrelationTable:
    """``E[i][j]`` is the correlation of a_i with b_j."""

    E: tuple[tuple[float, float], tuple[float, float]]

    def __post_init__(self):
        arr = np.asarray(self.E, dtype=float)
        if arr.shape != (2, 2):
            raise ValueError("correlation table must be 2x2")
        if np.any(np.abs(arr) > 1 + TABLE_TOL):
            raise ValueError(f"correlations must lie in [-1, 1], got {arr.tolist()}")
        object.__setattr__(self, "E", tuple(tuple(float(v) for v in row) for row in arr))

    @classmethod
    def unchecked(cls, E) -> "CorrelationTable":
        """Table without the |E| ≤ 1 guard, for probing infeasible inputs."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "E", tuple(tuple(float(v) for v in row) for row in np.asarray(E, dtype=float)))
        return obj

    def as_array(self) -> np.ndarray:
        return np.asarray(self.E)


def chsh_functional(E, signs=CHSH_SIGNS) -> float:
    E = np.asarray(E.E if isinstance(E, CorrelationTable) else E, dtype=float)
    return float(sum(signs[i][j] * E[i, j] for i in range(2) for j in range(2)))


def chsh_variants() -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """The four sign patterns with exactly one minus sign (each also used negated)."""
    out = []
    for pos in itertools.product(range(2), repeat=2):
        s = [[1, 1], [1, 1]]
        s[pos[0]][pos[1]] = -1
        out.append((tuple(s[0]), tuple(s[1])))
    return out


def correlation(state: QuantumState, theta_a: float, theta_b: float) -> float:
    op = np.kron(spin_observable(theta_a), spin_observable(theta_b))
    v = state.amplitudes
    return float(np.vdot(v, op @ v).real)


def chsh_value(setting: ChshSetting) -> tuple[float, CorrelationTable]:
    a = (setting.a0, setting.a1)
    b = (setting.b0, setting.b1)
    E = [[correlation(setting.state, a[i], b[j]) for j in range(2)] for i in range(2)]
    table = CorrelationTable(E)
    return chsh_functional(table), table


def assignment_value(assignment: Sequence[int], signs=CHSH_SIGNS) -> int:
    a0, a1, b0, b1 = assignment
    a, b = (a0, a1), (b0, b1)
    return sum(signs[i][j] * a[i] * b[j] for i in range(2) for j in range(2))


def deterministic_vertex_bound(signs=CHSH_SIGNS) -> int:
    """Maximum of the CHSH functional over the 16 ±1 assignments (exact integers)."""
    return max(assignment_value(s, signs) for s in ASSIGNMENTS)


def assignment_correlations(assignment: Sequence[int]) -> np.ndarray:
    a0, a1, b0, b1 = assignment
    return np.array([[a0 * b0, a0 * b1], [a1 * b0, a1 * b1]])


# ---------------------------------------------------------------------------
# Exact phase-1 simplex


def _phase_one(A: list[list[Fraction]], b: list[Fraction]):
    """Find x ≥ 0 with A x = b, or a Farkas vector y (yᵀA ≤ 0, yᵀb > 0).

    Dense tableau over Fractions with Bland's rule, so it terminates and
    every pivot is exact.
    """
    m, n = len(A), len(A[0])
    rows = []
    flip = []
    for i in range(m):
        s = -1 if b[i] < 0 else 1
        flip.append(s)
        rows.append([s * v for v in A[i]] + [Fraction(int(k == i)) for k in range(m)] + [s * b[i]])
    basis = [n + i for i in range(m)]
    total = n + m
    # objective: minimize sum of artificials -> reduced costs
    cost = [Fraction(0)] * (total + 1)
    for i in range(m):
        for k in range(total + 1):
            cost[k] -= rows[i][k]
    for i in range(m):
        cost[n + i] += 1
    while True:
        enter = next((k for k in range(total) if cost[k] < 0), None)
        if enter is None:
            break
        best, leave = None, None
        for i in range(m):
            if rows[i][enter] > 0:
                ratio = rows[i][-1] / rows[i][enter]
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            raise RuntimeError("phase-1 objective unbounded (cannot happen)")
        piv = rows[leave][enter]
        rows[leave] = [v / piv for v in rows[leave]]
        for i in range(m):
            if i != leave and rows[i][enter] != 0:
                f = rows[i][enter]
                rows[i] = [vi - f * vl for vi, vl in zip(rows[i], rows[leave])]
        f = cost[enter]
        cost = [c - f * vl for c, vl in zip(cost, rows[leave])]
        basis[leave] = enter
    if -cost[-1] == 0:
        x = [Fraction(0)] * n
        for i, var in enumerate(basis):
            if var < n:
                x[var] = rows[i][-1]
        return True, x
    # phase-1 duals y'_i = 1 - (reduced cost of artificial i), mapped back through row flips
    y = [flip[i] * (Fraction(1) - cost[n + i]) for i in range(m)]
    return False, y


@dataclass
class FeasibilityResult:
    feasible: bool
    weights: np.ndarray | None = None
    exact_weights: list[Fraction] | None = None
    certificate: dict = field(default_factory=dict)
    max_deviation: float | None = None

    def to_dict(self) -> dict:
        out = {"feasible": self.feasible, "certificate": self.certificate}
        if self.weights is not None:
            out["weights"] = [float(w) for w in self.weights]
            out["max_deviation"] = self.max_deviation
        return out


def _lp_rows(E: np.ndarray, tol: Fraction):
    """Equality system for w (16), upper slacks (4), lower slacks (4)."""
    n_w, n = 16, 24
    A, b = [], []
    A.append([Fraction(1)] * n_w + [Fraction(0)] * 8)
    b.append(Fraction(1))
    cells = [(i, j) for i in range(2) for j in range(2)]
    for c, (i, j) in enumerate(cells):
        coeffs = [Fraction(int(assignment_correlations(s)[i, j])) for s in ASSIGNMENTS]
        target = Fraction(float(E[i, j]))
        up = coeffs + [Fraction(int(k == c)) for k in range(4)] + [Fraction(0)] * 4
        lo = coeffs + [Fraction(0)] * 4 + [Fraction(-int(k == c)) for k in range(4)]
        A.append(up)
        b.append(target + tol)
        A.append(lo)
        b.append(target - tol)
    return A, b, n


def fine_graining_feasibility(table: CorrelationTable, tol: float = 0.0) -> FeasibilityResult:
    """Is there a distribution over deterministic assignments matching the table within tol?

    Feasible answers carry witness weights. Infeasible answers carry a
    violated Bell functional: a CHSH variant when some |S| > 2 + 4 tol,
    otherwise a box inequality or the exact Farkas vector of the LP.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    E = table.as_array()
    frac_tol = Fraction(float(tol))
    A, b, n = _lp_rows(E, frac_tol)
    ok, sol = _phase_one(A, b)
    if ok:
        w = sol[:16]
        weights = np.array([float(v) for v in w])
        reproduced = sum(weights[k] * assignment_correlations(s) for k, s in enumerate(ASSIGNMENTS))
        dev = float(np.abs(reproduced - E).max())
        return FeasibilityResult(True, weights, w, {}, dev)
    for sign in (1, -1):
        for signs in chsh_variants():
            val = sign * chsh_functional(E, signs)
            if val > 2 + 4 * tol:
                return FeasibilityResult(
                    False,
                    certificate={
                        "type": "chsh",
                        "signs": [[sign * s for s in row] for row in signs],
                        "value": val,
                        "local_bound": 2,
                        "margin": val - 2 - 4 * tol,
                    },
                )
    for i, j in itertools.product(range(2), repeat=2):
        if abs(E[i, j]) > 1 + tol:
            return FeasibilityResult(
                False, certificate={"type": "box", "cell": [i, j], "value": float(E[i, j]), "local_bound": 1}
            )
    y = sol
    yA = [sum(y[i] * A[i][k] for i in range(len(A))) for k in range(n)]
    yb = sum(yi * bi for yi, bi in zip(y, b))
    verified = all(v <= 0 for v in yA) and yb > 0
    return FeasibilityResult(
        False, certificate={"type": "farkas", "y": [str(v) for v in y], "value": float(yb), "verified": verified}
    )


def fine_inequalities_hold(table: CorrelationTable, tol: float = 0.0) -> bool:
    """Independent oracle: the local correlation polytope is cut out by the
    eight CHSH facets and the eight box facets."""
    E = table.as_array()
    for sign in (1, -1):
        for signs in chsh_variants():
            if sign * chsh_functional(E, signs) > 2 + 4 * tol:
                return False
    return bool(np.all(np.abs(E) <= 1 + tol))


def tsirelson_sweep(rng, trials: int, state: QuantumState | None = None) -> np.ndarray:
    """CHSH values at uniformly random angles; random two-qubit states when ``state`` is None."""
    from natprob.linalg import random_unit_vector

    out = np.empty(trials)
    for k in range(trials):
        psi = state if state is not None else random_unit_vector(4, rng, dims=(2, 2))
        angles = rng.uniform(0, 2 * np.pi, size=4)
        out[k], _ = chsh_value(ChshSetting(psi, *angles))
    return out
