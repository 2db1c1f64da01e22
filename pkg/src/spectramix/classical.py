"""Measure-preserving maps on the unit torus, their correlations and Ulam transfer matrices.

Time is discrete throughout: ``T_t`` is the t-fold composition of one map step.
Subsets of the torus are represented on an ``n x n`` grid of cells and a point
belongs to a subset when the cell containing it is marked.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .numerics import ContractError, NumericalError, ResourceLimitError

MAP_KINDS = ("baker", "arnold_cat", "standard_map")
_ALIASES = {"cat": "arnold_cat", "arnold": "arnold_cat", "standard": "standard_map", "baker_map": "baker"}

MAX_ULAM_RESOLUTION = 256
ULAM_SUBSAMPLES = 8


@dataclass(frozen=True)
class MapSpec:
    kind: str
    K: float = 10.0

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in MAP_KINDS:
            raise ContractError(f"unknown map kind {self.kind!r}; expected one of {MAP_KINDS}")
        object.__setattr__(self, "kind", kind)


def step(spec: MapSpec, q, p):
    """One application of the map to arrays of coordinates."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if spec.kind == "arnold_cat":
        return (q + p) % 1.0, (q + 2.0 * p) % 1.0
    if spec.kind == "baker":
        fold = np.floor(2.0 * q)
        return (2.0 * q) % 1.0, (p + fold) / 2.0
    # standard map: p' = p + (K/2pi) sin(2pi q), q' = q + p'
    kick = spec.K / (2 * np.pi) * np.sin(2 * np.pi * q)
    p_new = (p + kick) % 1.0
    return (q + p + kick) % 1.0, p_new


def apply_map(spec: MapSpec, point, t: int):
    if t < 0:
        raise ContractError("t must be non-negative")
    q, p = point
    for _ in range(t):
        q, p = step(spec, q, p)
    if np.ndim(q) == 0:
        return float(q), float(p)
    return q, p


@dataclass
class GridMask:
    """Indicator of a grid-resolvable subset; ``cells[iq, ip]`` marks cell (iq, ip)."""

    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.ndim != 2 or self.cells.shape[0] != self.cells.shape[1]:
            raise ContractError("mask cells must be a square array")

    @property
    def n(self) -> int:
        return self.cells.shape[0]

    @property
    def measure(self) -> float:
        return float(np.count_nonzero(self.cells)) / self.n**2

    @classmethod
    def rect(cls, n: int, q0: float, q1: float, p0: float, p1: float) -> "GridMask":
        """Cells whose centres lie in the half-open box [q0,q1) x [p0,p1)."""
        c = (np.arange(n) + 0.5) / n
        inq = (c >= q0) & (c < q1)
        inp = (c >= p0) & (c < p1)
        return cls(np.outer(inq, inp))

    @classmethod
    def parse(cls, text: str, n: int) -> "GridMask":
        return cls.rect(n, *parse_rect(text))

    def contains(self, q, p) -> np.ndarray:
        n = self.n
        iq = np.floor(np.asarray(q) * n).astype(np.int64) % n
        ip = np.floor(np.asarray(p) * n).astype(np.int64) % n
        return self.cells[iq, ip]


_RECT = re.compile(r"^rect:([^,]+),([^,]+),([^,]+),([^,]+)$")


def parse_rect(text: str) -> tuple[float, float, float, float]:
    """Parse ``rect:q0,q1,p0,p1`` into four floats."""
    m = _RECT.match(text.strip())
    if not m:
        raise ContractError(f"expected rect:q0,q1,p0,p1, got {text!r}")
    q0, q1, p0, p1 = (float(v) for v in m.groups())
    for v in (q0, q1, p0, p1):
        if not 0.0 <= v <= 1.0:
            raise ContractError(f"rectangle bounds must lie in [0,1], got {text!r}")
    if q1 < q0 or p1 < p0:
        raise ContractError(f"empty or inverted rectangle {text!r}")
    return q0, q1, p0, p1


def left_half(n: int) -> GridMask:
    return GridMask.rect(n, 0.0, 0.5, 0.0, 1.0)


def bottom_half(n: int) -> GridMask:
    return GridMask.rect(n, 0.0, 1.0, 0.0, 0.5)


@dataclass
class GridDensity:
    """Cell-averaged density with (1/n^2) * sum(values) == 1."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values < 0):
            raise ContractError("density values must be non-negative")
        if abs(self.values.mean() - 1.0) > 1e-9:
            raise ContractError(f"density not normalised: mean {self.values.mean()!r}")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @classmethod
    def uniform(cls, n: int) -> "GridDensity":
        return cls(np.ones((n, n)))


def _centres(n: int):
    c = (np.arange(n) + 0.5) / n
    return np.meshgrid(c, c, indexing="ij")


def _check_resolution(n: int, *masks: GridMask):
    for m in masks:
        if m.n != n:
            raise ContractError(f"mask resolution {m.n} does not match grid resolution {n}")


def mixing_correlation(spec: MapSpec, A: GridMask, B: GridMask, t: int, n: int) -> float:
    """Grid estimate of C(T_t A, B) = mu(T_t A & B) - mu(A) mu(B)."""
    if t < 0:
        raise ContractError("t must be non-negative")
    return float(mixing_scan(spec, A, B, t, n)[-1])


def mixing_scan(spec: MapSpec, A: GridMask, B: GridMask, t_max: int, n: int) -> np.ndarray:
    """C(T_t A, B) for t = 0..t_max, pushing the centres of A forward once."""
    return mixing_scan_pairs(spec, [A], [B], t_max, n)[:, 0, 0]


def mixing_scan_pairs(spec: MapSpec, sets_a, sets_b, t_max: int, n: int) -> np.ndarray:
    """C(T_t A_i, B_j) for t = 0..t_max as an array of shape (t_max+1, len(A), len(B)).

    The whole grid of centres is pushed forward once; each pair is then a count
    of points that started in A_i and currently lie in B_j.
    """
    sets_a, sets_b = list(sets_a), list(sets_b)
    _check_resolution(n, *sets_a, *sets_b)
    if t_max < 0:
        raise ContractError("t must be non-negative")
    q, p = (c.ravel() for c in _centres(n))
    origin = [a.cells.ravel() for a in sets_a]
    count_a = [int(np.count_nonzero(o)) for o in origin]
    count_b = [int(np.count_nonzero(b.cells)) for b in sets_b]
    total = n * n
    out = np.empty((t_max + 1, len(sets_a), len(sets_b)))
    for t in range(t_max + 1):
        if t:
            q, p = step(spec, q, p)
        cell = (np.floor(q * n).astype(np.int64) % n) * n + np.floor(p * n).astype(np.int64) % n
        for j, b in enumerate(sets_b):
            now = b.cells.ravel()[cell]
            for i, o in enumerate(origin):
                hits = int(np.count_nonzero(now & o))
                # integer numerator keeps the value exact for power-of-two grids
                out[t, i, j] = (hits * total - count_a[i] * count_b[j]) / total**2
    return out


@dataclass
class TransferMatrix:
    """Ulam approximation of the one-step Frobenius-Perron operator.

    ``P[j, i]`` is the fraction of cell ``i`` carried into cell ``j``; cells are
    flattened as ``iq * n + ip``. Stored sparse: a column has at most
    ``subsamples**2`` non-zeros.
    """

    n: int
    P: sparse.csc_matrix
    subsamples: int = ULAM_SUBSAMPLES

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.P.sum(axis=0)).ravel()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.P.sum(axis=1)).ravel()

    def leading_eigenvalue(self) -> float:
        """Spectral radius; dense for small grids, ARPACK otherwise."""
        if self.P.shape[0] <= 1024:
            return float(np.max(np.abs(np.linalg.eigvals(self.P.toarray()))))
        from scipy.sparse.linalg import ArpackNoConvergence, eigs

        dim = self.P.shape[0]
        v0 = np.full(dim, 1 / np.sqrt(dim))  # fixed start vector: ARPACK's default draws from global state
        try:
            vals = eigs(self.P.astype(float), k=1, which="LM", return_eigenvectors=False, maxiter=5000, v0=v0)
        except ArpackNoConvergence as exc:
            raise NumericalError("leading eigenvalue did not converge") from exc
        return float(np.abs(vals[0]))

    def apply(self, density: np.ndarray) -> np.ndarray:
        return (self.P @ np.asarray(density).ravel()).reshape(self.n, self.n)


def ulam_transfer_matrix(spec: MapSpec | None, n: int, subsamples: int = ULAM_SUBSAMPLES) -> TransferMatrix:
    """Ulam matrix from ``subsamples x subsamples`` points per cell.

    ``spec=None`` stands for the identity map (t = 0).
    """
    if n > MAX_ULAM_RESOLUTION:
        raise ResourceLimitError(f"Ulam resolution {n} exceeds {MAX_ULAM_RESOLUTION}")
    if n < 1 or subsamples < 1:
        raise ContractError("resolution and sub-sampling must be positive")
    s = subsamples
    u = (np.arange(n * s) + 0.5) / (n * s)
    Q, P = np.meshgrid(u, u, indexing="ij")
    src = (np.arange(n * s) // s)
    src = (src[:, None] * n + src[None, :]).ravel()
    if spec is None:
        q2, p2 = Q, P
    else:
        q2, p2 = step(spec, Q, P)
    dst = (np.floor(q2 * n).astype(np.int64) % n) * n + (np.floor(p2 * n).astype(np.int64) % n)
    data = np.full(src.size, 1.0 / (s * s))
    mat = sparse.coo_matrix((data, (dst.ravel(), src)), shape=(n * n, n * n)).tocsc()
    mat.sum_duplicates()
    return TransferMatrix(n=n, P=mat, subsamples=s)


def invariant_density(T: TransferMatrix, tol: float = 1e-10, max_iter: int = 100_000) -> GridDensity:
    """Fixed point of ``T`` by power iteration from the uniform density."""
    col = T.column_sums()
    if np.max(np.abs(col - 1.0)) > 1e-9:
        raise ContractError("transfer matrix is not column-stochastic")
    v = np.ones(T.n * T.n)
    for _ in range(max_iter):
        w = T.P @ v
        w *= v.size / w.sum()
        change = np.mean(np.abs(w - v))
        v = w
        if change < tol:
            return GridDensity(v.reshape(T.n, T.n))
    raise NumericalError(f"power iteration did not converge in {max_iter} iterations")


def _weighted_measure(f: GridDensity, indicator: np.ndarray) -> float:
    return float(np.sum(f.values * indicator)) / f.values.size


def factorization_defect(spec: MapSpec, f_star: GridDensity, sets, offsets) -> float:
    """|int f* prod_i 1_{T_{t_i} A_i}  -  prod_i int f* 1_{A_i}| on the grid.

    Invariance of ``f*`` lets every set be pulled back to a common time, so the
    joint term is evaluated at cell centres y as prod_i 1_{A_i}(T^(t_max - t_i) y).
    """
    sets = list(sets)
    offsets = [int(t) for t in offsets]
    if not sets or len(sets) != len(offsets):
        raise ContractError("need one offset per set and at least one set")
    if any(t < 0 for t in offsets):
        raise ContractError("offsets must be non-negative")
    n = f_star.n
    _check_resolution(n, *sets)

    t_max = max(offsets)
    shifts = [t_max - t for t in offsets]
    q, p = _centres(n)
    joint = np.ones((n, n), dtype=bool)
    for s in range(max(shifts) + 1):
        if s:
            q, p = step(spec, q, p)
        for mask, shift in zip(sets, shifts):
            if shift == s:
                joint &= mask.contains(q, p)
    left = _weighted_measure(f_star, joint)
    right = 1.0
    for mask in sets:
        right *= _weighted_measure(f_star, mask.cells)
    return abs(left - right)


def literal_factorization_defect(f_star: GridDensity, sets) -> float:
    """Defect of the product rule with no time separation (fails for overlapping sets)."""
    sets = list(sets)
    if not sets:
        raise ContractError("need at least one set")
    _check_resolution(f_star.n, *sets)
    joint = np.logical_and.reduce([m.cells for m in sets])
    right = 1.0
    for mask in sets:
        right *= _weighted_measure(f_star, mask.cells)
    return abs(_weighted_measure(f_star, joint) - right)


@dataclass
class StochasticityReport:
    n: int
    column_defect: float
    row_defect: float
    leading_eigenvalue: float
    fixed_point_residual: float
    density_uniformity: float = field(default=float("nan"))

    @property
    def passed(self) -> bool:
        return self.column_defect < 1e-9 and abs(self.leading_eigenvalue - 1.0) < 1e-9


def stochasticity_report(T: TransferMatrix, f_star: GridDensity) -> StochasticityReport:
    residual = float(np.sum(np.abs(T.apply(f_star.values) - f_star.values))) / f_star.values.size
    return StochasticityReport(
        n=T.n,
        column_defect=float(np.max(np.abs(T.column_sums() - 1.0))),
        row_defect=float(np.max(np.abs(T.row_sums() - 1.0))),
        leading_eigenvalue=T.leading_eigenvalue(),
        fixed_point_residual=residual,
        density_uniformity=float(np.max(np.abs(f_star.values - 1.0))),
    )
