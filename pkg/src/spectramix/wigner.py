"""Weyl symbols and Wigner functions on a one-dimensional position grid.

Operators are N x N matrices in the position basis ``q_i = q_min + i dq``; a
matrix element ``A[a, b]`` stands for ``<q_a|A|q_b> dq``. The symbol is sampled
at ``(q_i, p_j)`` with ``p_j = 2 pi hbar j / (N dq)``, j = -N/2 .. N/2-1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .numerics import ContractError, is_power_of_two

DYNAMICS = ("harmonic_oscillator", "free_particle")
EDGE_FRACTION = 0.1
BAND_LIMIT_TOL = 1e-10


class BandLimitWarning(UserWarning):
    """An operator is not negligible near the grid edges, so wrap-around may bias results."""


@dataclass(frozen=True)
class PhaseGrid:
    N: int
    q_min: float
    q_max: float
    hbar: float

    def __post_init__(self):
        if not is_power_of_two(self.N) or self.N < 4:
            raise ContractError(f"N must be a power of two >= 4, got {self.N}")
        if not self.q_max > self.q_min:
            raise ContractError("q_max must exceed q_min")
        if self.hbar <= 0:
            raise ContractError("hbar must be positive")

    @classmethod
    def symmetric(cls, N: int, hbar: float) -> "PhaseGrid":
        """Centred grid whose position and momentum ranges coincide: L^2 = 2 pi hbar N."""
        L = float(np.sqrt(2 * np.pi * hbar * N))
        return cls(N, -L / 2, L / 2, hbar)

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / self.N

    @property
    def dp(self) -> float:
        return 2 * np.pi * self.hbar / (self.N * self.dq)

    @property
    def h(self) -> float:
        return 2 * np.pi * self.hbar

    @property
    def q(self) -> np.ndarray:
        return self.q_min + self.dq * np.arange(self.N)

    @property
    def j(self) -> np.ndarray:
        return np.arange(-self.N // 2, self.N // 2)

    @property
    def p(self) -> np.ndarray:
        return self.dp * self.j

    @property
    def p_max(self) -> float:
        return self.dp * self.N / 2

    def mesh(self):
        return np.meshgrid(self.q, self.p, indexing="ij")

    def inner_mask(self) -> np.ndarray:
        """Central half of the grid in both directions."""
        centre = 0.5 * (self.q_min + self.q_max)
        L = self.q_max - self.q_min
        Q, P = self.mesh()
        return (np.abs(Q - centre) < L / 4) & (np.abs(P) < self.p_max / 2)


@dataclass(frozen=True)
class WeylGrid:
    grid: PhaseGrid
    values: np.ndarray

    def real(self) -> np.ndarray:
        return self.values.real

    def imag_defect(self) -> float:
        scale = max(float(np.max(np.abs(self.values))), 1e-300)
        return float(np.max(np.abs(self.values.imag))) / scale


def momentum_basis(grid: PhaseGrid) -> np.ndarray:
    """Unitary V with V[j, a] = exp(-i p_j q_a / hbar) / sqrt(N)."""
    return np.exp(-1j * np.outer(grid.p, grid.q) / grid.hbar) / np.sqrt(grid.N)


def position_operator(grid: PhaseGrid) -> np.ndarray:
    return np.diag(grid.q).astype(complex)


def position_function(grid: PhaseGrid, f) -> np.ndarray:
    return np.diag(f(grid.q)).astype(complex)


def momentum_function(grid: PhaseGrid, g) -> np.ndarray:
    V = momentum_basis(grid)
    return (V.conj().T * g(grid.p)) @ V


def momentum_operator(grid: PhaseGrid) -> np.ndarray:
    return momentum_function(grid, lambda p: p)


def hamiltonian(grid: PhaseGrid, dynamics: str) -> np.ndarray:
    if dynamics == "harmonic_oscillator":
        return momentum_function(grid, lambda p: p**2 / 2) + position_function(grid, lambda q: q**2 / 2)
    if dynamics == "free_particle":
        return momentum_function(grid, lambda p: p**2 / 2)
    raise ContractError(f"unsupported dynamics {dynamics!r}; expected one of {DYNAMICS}")


def propagator(grid: PhaseGrid, dynamics: str, t: float) -> np.ndarray:
    """exp(-i H t / hbar) for the grid Hamiltonian."""
    H = hamiltonian(grid, dynamics)
    E, Z = np.linalg.eigh(H)
    return (Z * np.exp(-1j * E * t / grid.hbar)) @ Z.conj().T


def coherent_state(grid: PhaseGrid, q0: float = 0.0, p0: float = 0.0) -> np.ndarray:
    """Minimum-uncertainty packet of width sqrt(hbar/2) (oscillator ground state when displaced to 0)."""
    q = grid.q
    psi = np.exp(-((q - q0) ** 2) / (2 * grid.hbar) + 1j * p0 * q / grid.hbar)
    return psi / np.linalg.norm(psi)


def coherent_wigner(grid: PhaseGrid, q0: float = 0.0, p0: float = 0.0, Q=None, P=None) -> np.ndarray:
    """Analytic Wigner function (1/(pi hbar)) exp(-((q-q0)^2 + (p-p0)^2)/hbar)."""
    if Q is None:
        Q, P = grid.mesh()
    return np.exp(-((Q - q0) ** 2 + (P - p0) ** 2) / grid.hbar) / (np.pi * grid.hbar)


def oscillator_eigenstates(grid: PhaseGrid, count: int) -> np.ndarray:
    """Lowest ``count`` eigenvectors of the grid oscillator, as columns."""
    _, Z = np.linalg.eigh(hamiltonian(grid, "harmonic_oscillator"))
    return Z[:, :count]


def _check_operator(A, grid: PhaseGrid) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.shape != (grid.N, grid.N):
        raise ContractError(f"operator shape {A.shape} does not match grid size {grid.N}")
    return A


def band_limit_excess(A: np.ndarray, grid: PhaseGrid) -> float:
    """Largest entry inside the edge zones (position and momentum), relative to max|A|."""
    scale = float(np.max(np.abs(A)))
    if scale == 0:
        return 0.0
    e = max(1, int(round(EDGE_FRACTION * grid.N)))
    excess = 0.0
    V = momentum_basis(grid)
    for M in (A, V @ A @ V.conj().T):
        edge = np.zeros(grid.N, dtype=bool)
        edge[:e] = edge[-e:] = True
        excess = max(excess, float(np.max(np.abs(M[edge, :]))), float(np.max(np.abs(M[:, edge]))))
    return excess / scale


def _half_shift(g: np.ndarray) -> np.ndarray:
    """Band-limited resampling g(b) -> g(b + 1/2) on a periodic sequence."""
    N = g.size
    nu = np.fft.fftfreq(N, d=1.0 / N)
    mult = np.exp(1j * np.pi * nu / N)
    mult[N // 2] = np.cos(np.pi / 2)  # Nyquist term has no unambiguous half shift
    return np.fft.ifft(np.fft.fft(g) * mult)


def _offset_table(A: np.ndarray) -> np.ndarray:
    """G[i, k'] = A(q_i + k dq/2, q_i - k dq/2) for k = k' - N/2."""
    N = A.shape[0]
    i = np.arange(N)
    G = np.empty((N, N), dtype=complex)
    for col, k in enumerate(range(-N // 2, N // 2)):
        if k == -N // 2:
            G[:, col] = 0.5 * (A[(i - N // 4) % N, (i + N // 4) % N] + A[(i + N // 4) % N, (i - N // 4) % N])
        elif k % 2 == 0:
            m = k // 2
            G[:, col] = A[(i + m) % N, (i - m) % N]
        else:
            g = A[(i + k) % N, i]
            h = _half_shift(g)
            G[:, col] = h[(i - (k + 1) // 2) % N]
    return G


def weyl_symbol(A, grid: PhaseGrid, check_band_limit: bool = True) -> WeylGrid:
    """Discrete Weyl symbol sum_k A(q + k dq/2, q - k dq/2) exp(-i p k dq / hbar)."""
    A = _check_operator(A, grid)
    if check_band_limit:
        excess = band_limit_excess(A, grid)
        if excess > BAND_LIMIT_TOL:
            warnings.warn(f"operator reaches the grid edges (relative size {excess:.2e})", BandLimitWarning,
                          stacklevel=2)
    G = _offset_table(A)
    N = grid.N
    k = np.arange(-N // 2, N // 2)
    kernel = np.exp(-2j * np.pi * np.outer(k, grid.j) / N)
    return WeylGrid(grid, G @ kernel)


def _as_matrix(rho) -> np.ndarray:
    return rho.matrix if hasattr(rho, "matrix") else np.asarray(rho, dtype=complex)


def wigner_function(rho, grid: PhaseGrid, check_band_limit: bool = True) -> WeylGrid:
    """W = symbol / h; real for Hermitian rho."""
    W = weyl_symbol(_as_matrix(rho), grid, check_band_limit)
    return WeylGrid(grid, W.values.real / grid.h)


def phase_space_expectation(rho, O, grid: PhaseGrid, check_band_limit: bool = True) -> complex:
    """sum_ij W_rho(q_i, p_j) symbol_O(q_i, p_j) dq dp."""
    W = weyl_symbol(_as_matrix(rho), grid, check_band_limit).values / grid.h
    S = weyl_symbol(O, grid, check_band_limit).values
    val = complex(np.sum(W * S) * grid.dq * grid.dp)
    return val


def marginals(W: WeylGrid) -> tuple[np.ndarray, np.ndarray]:
    """Position and momentum marginals of a Wigner grid."""
    g = W.grid
    return W.values.real.sum(axis=1) * g.dp, W.values.real.sum(axis=0) * g.dq


def moyal_defect(A, B, grid: PhaseGrid, region: np.ndarray | None = None) -> float:
    """||sym(AB) - sym(A) sym(B)|| / ||sym(A) sym(B)|| over the inner half of the grid."""
    A = _check_operator(A, grid)
    B = _check_operator(B, grid)
    mask = grid.inner_mask() if region is None else region
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BandLimitWarning)
        sa = weyl_symbol(A, grid).values
        sb = weyl_symbol(B, grid).values
        sab = weyl_symbol(A @ B, grid).values
    prod = (sa * sb)[mask]
    denom = float(np.linalg.norm(prod))
    if denom == 0:
        raise ContractError("symbol product vanishes on the evaluation region")
    return float(np.linalg.norm(sab[mask] - prod)) / denom


def moyal_slope(make_pair, hbars=(0.4, 0.2, 0.1, 0.05), n_hbar: float = 12.8,
                half_width: float = 4.5) -> tuple[float, np.ndarray]:
    """Log-log slope of the Moyal defect against hbar.

    The box [-half_width, half_width) is fixed and N hbar is held constant, so
    the momentum range does not change across the scan. ``make_pair(grid)``
    returns the two operators.
    """
    defects = []
    for hb in hbars:
        N = int(round(n_hbar / hb))
        if not is_power_of_two(N):
            raise ContractError(f"n_hbar/hbar must give a power of two, got {n_hbar / hb}")
        g = PhaseGrid(N, -half_width, half_width, hb)
        A, B = make_pair(g)
        defects.append(moyal_defect(A, B, g))
    defects = np.array(defects)
    slope = float(np.polyfit(np.log(hbars), np.log(defects), 1)[0])
    return slope, defects


def classical_flow(dynamics: str, q, p, t: float):
    """Phase-space flow (q(t), p(t)) of unit-mass, unit-frequency quadratic dynamics."""
    if dynamics == "harmonic_oscillator":
        c, s = np.cos(t), np.sin(t)
        return q * c + p * s, -q * s + p * c
    if dynamics == "free_particle":
        return q + p * t, p
    raise ContractError(f"unsupported dynamics {dynamics!r}; expected one of {DYNAMICS}")


def sample_at(values: np.ndarray, grid: PhaseGrid, q, p, order: int = 5) -> np.ndarray:
    """Spline-interpolate grid values at arbitrary (q, p); zero outside the grid."""
    iq = (np.asarray(q) - grid.q_min) / grid.dq
    ip = np.asarray(p) / grid.dp + grid.N // 2
    coords = np.array([iq.ravel(), ip.ravel()])

    def interp(v):
        return ndimage.map_coordinates(v, coords, order=order, mode="constant", cval=0.0)

    if np.iscomplexobj(values):
        out = interp(values.real) + 1j * interp(values.imag)
    else:
        out = interp(values)
    return out.reshape(np.shape(q))


def _relative_l2(a: np.ndarray, b: np.ndarray) -> float:
    denom = float(np.linalg.norm(b))
    if denom == 0:
        raise ContractError("reference symbol vanishes")
    return float(np.linalg.norm(a - b)) / denom


def weyl_covariance_defect(A, t: float, dynamics: str, grid: PhaseGrid) -> float:
    """||sym(U^dagger A U) - sym(A) o flow_t|| / ||sym(A)||."""
    A = _check_operator(A, grid)
    if dynamics not in DYNAMICS:
        raise ContractError(f"unsupported dynamics {dynamics!r}; expected one of {DYNAMICS}")
    if t == 0:
        return 0.0
    U = propagator(grid, dynamics, t)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BandLimitWarning)
        evolved = weyl_symbol(U.conj().T @ A @ U, grid).values
        original = weyl_symbol(A, grid).values
    Q, P = grid.mesh()
    qt, pt = classical_flow(dynamics, Q, P, t)
    flowed = sample_at(original, grid, qt, pt)
    return float(np.linalg.norm(evolved - flowed)) / float(np.linalg.norm(original))


def fp_fixed_point_defect(rho_star, dynamics: str, grid: PhaseGrid, t: float) -> float:
    """||W o flow_{-t} - W|| / ||W||: zero when W is carried into itself by the classical flow."""
    if dynamics not in DYNAMICS:
        raise ContractError(f"unsupported dynamics {dynamics!r}; expected one of {DYNAMICS}")
    if t == 0:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BandLimitWarning)
        W = wigner_function(rho_star, grid).values
    Q, P = grid.mesh()
    qb, pb = classical_flow(dynamics, Q, P, -t)
    return _relative_l2(sample_at(W, grid, qb, pb), W)


def write_csv(W: WeylGrid, path) -> None:
    """Rows ``q,p,value`` with q varying slowest."""
    Q, P = W.grid.mesh()
    data = np.column_stack([Q.ravel(), P.ravel(), W.values.real.ravel()])
    with open(path, "w", newline="") as fh:
        fh.write("q,p,value\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def write_raw(W: WeylGrid, path) -> tuple[Path, Path]:
    """Little-endian float64 array (q-major) plus a ``.hdr`` key=value sidecar."""
    path = Path(path)
    header = path.with_suffix(path.suffix + ".hdr")
    W.values.real.astype("<f8").tofile(path)
    g = W.grid
    header.write_text(f"N={g.N}\nq_min={g.q_min!r}\nq_max={g.q_max!r}\nhbar={g.hbar!r}\n")
    return path, header


def read_raw(path) -> WeylGrid:
    path = Path(path)
    header = path.with_suffix(path.suffix + ".hdr")
    meta = dict(line.split("=", 1) for line in header.read_text().split())
    g = PhaseGrid(int(meta["N"]), float(meta["q_min"]), float(meta["q_max"]), float(meta["hbar"]))
    values = np.fromfile(path, dtype="<f8").reshape(g.N, g.N)
    return WeylGrid(g, values)
