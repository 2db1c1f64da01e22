"""Quantum kicked rotator on an N-dimensional angular-momentum basis.

One period applies the free rotation first and then the kick:
``F = exp(-i lam cos(theta)/hbar) exp(-i tau L^2/hbar)`` with ``L = hbar m``.
Momentum vectors are ordered m = -N/2 .. N/2-1; angles are theta_j = 2 pi j/N.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import (
    ContractError,
    InsufficientDataError,
    hermiticity_defect,
    is_power_of_two,
    unitary_eigenphases,
)

CHAOTIC_LAMBDA = 5.0
DEFAULT_WINDOW = 200


@dataclass(frozen=True)
class QkrConfig:
    N: int
    lam: float
    tau: float = 1.0
    hbar: float = 0.25
    kick_shift: float = 0.0
    half_kinetic: bool = False

    def __post_init__(self):
        if not is_power_of_two(int(self.N)) or self.N < 2:
            raise ContractError(f"N must be an even power of two, got {self.N}")
        if self.lam < 0:
            raise ContractError("lambda must be non-negative")
        if self.tau < 0:
            raise ContractError("tau must be non-negative")
        if self.hbar <= 0:
            raise ContractError("hbar must be positive")

    @property
    def chaotic(self) -> bool:
        return self.lam > CHAOTIC_LAMBDA

    def momenta(self) -> np.ndarray:
        return np.arange(-self.N // 2, self.N // 2)

    def angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.N) / self.N

    def rotation_phases(self) -> np.ndarray:
        m = self.momenta().astype(float)
        kin = m**2 / 2 if self.half_kinetic else m**2
        return np.exp(-1j * self.tau * self.hbar * kin)

    def kick_phases(self) -> np.ndarray:
        return np.exp(-1j * self.lam / self.hbar * np.cos(self.angles() + self.kick_shift))


def _to_angle(psi: np.ndarray) -> np.ndarray:
    return np.fft.ifft(np.fft.ifftshift(psi, axes=0), axis=0, norm="ortho")


def _to_momentum(a: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.fft(a, axis=0, norm="ortho"), axes=0)


def build_floquet(config: QkrConfig) -> np.ndarray:
    """One-period propagator as a dense matrix in the momentum basis."""
    N = config.N
    m = config.momenta()
    th = config.angles()
    W = np.exp(1j * np.outer(th, m)) / np.sqrt(N)
    return (W.conj().T * config.kick_phases()) @ W * config.rotation_phases()


def split_step(psi: np.ndarray, config: QkrConfig, kicks: int = 1) -> np.ndarray:
    """Propagate momentum amplitudes (vector or column stack) through ``kicks`` periods."""
    psi = np.asarray(psi, dtype=complex)
    rot = config.rotation_phases()
    kick = config.kick_phases()
    if psi.ndim == 2:
        rot, kick = rot[:, None], kick[:, None]
    for _ in range(kicks):
        psi = _to_momentum(kick * _to_angle(rot * psi))
    return psi


def momentum_state(N: int, m: int) -> np.ndarray:
    if not -N // 2 <= m < N // 2:
        raise ContractError(f"momentum {m} outside the basis")
    psi = np.zeros(N, dtype=complex)
    psi[m + N // 2] = 1.0
    return psi


def momentum_window_projector(N: int, m1: int, m2: int) -> np.ndarray:
    """Projector onto momenta m1 <= m <= m2."""
    m = np.arange(-N // 2, N // 2)
    return np.diag(((m >= m1) & (m <= m2)).astype(float)).astype(complex)


@dataclass
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.matrix, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ContractError("density matrix must be square")
        if hermiticity_defect(rho) > 1e-12:
            raise ContractError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > 1e-12:
            raise ContractError(f"density matrix trace {np.trace(rho).real} != 1")
        if np.linalg.eigvalsh(rho).min() < -1e-10:
            raise ContractError("density matrix is not positive semidefinite")
        self.matrix = rho

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def pure(cls, psi: np.ndarray) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, N: int) -> "DensityMatrix":
        return cls(np.eye(N, dtype=complex) / N)

    def expectation(self, O: np.ndarray) -> complex:
        return complex(np.sum(self.matrix * np.asarray(O).T))


def _as_matrix(rho) -> np.ndarray:
    return rho.matrix if hasattr(rho, "matrix") else np.asarray(rho, dtype=complex)


@dataclass
class FloquetBasis:
    phases: np.ndarray
    vectors: np.ndarray
    degenerate: bool = False
    min_gap: float = float("inf")

    @property
    def N(self) -> int:
        return self.phases.size

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * np.exp(-1j * self.phases)) @ self.vectors.conj().T

    def to_floquet(self, A: np.ndarray) -> np.ndarray:
        """Matrix elements <a_k|A|a_l>."""
        return self.vectors.conj().T @ A @ self.vectors

    def from_floquet(self, A: np.ndarray) -> np.ndarray:
        return self.vectors @ A @ self.vectors.conj().T


def floquet_eigensystem(F: np.ndarray, degeneracy_tol: float = 1e-9) -> FloquetBasis:
    """Floquet phases and eigenvectors; near-degenerate phases are flagged, not rejected."""
    phases, vectors = unitary_eigenphases(F)
    gaps = np.diff(np.append(phases, phases[0] + 2 * np.pi))
    gap = float(gaps.min()) if phases.size > 1 else float("inf")
    return FloquetBasis(phases=phases, vectors=vectors, degenerate=gap < degeneracy_tol, min_gap=gap)


@dataclass
class WeakLimitState:
    """Floquet-diagonal part of a state, kept both as a matrix and as populations."""

    matrix: np.ndarray
    populations: np.ndarray
    basis: FloquetBasis = field(repr=False)

    def floquet_matrix(self) -> np.ndarray:
        return self.basis.to_floquet(self.matrix)

    def expectation(self, O: np.ndarray) -> complex:
        return complex(np.sum(self.matrix * np.asarray(O).T))


def weak_limit(rho, basis: FloquetBasis) -> WeakLimitState:
    rho = _as_matrix(rho)
    if rho.shape != (basis.N, basis.N):
        raise ContractError("state and basis dimensions differ")
    pops = np.real(np.einsum("ik,ij,jk->k", basis.vectors.conj(), rho, basis.vectors))
    matrix = (basis.vectors * pops) @ basis.vectors.conj().T
    return WeakLimitState(matrix=matrix, populations=pops, basis=basis)


def _offdiag_product(rho, O, basis: FloquetBasis) -> np.ndarray:
    rho = _as_matrix(rho)
    O = np.asarray(O, dtype=complex)
    if rho.shape != O.shape or rho.shape != (basis.N, basis.N):
        raise ContractError("state, observable and basis dimensions differ")
    X = basis.to_floquet(rho) * basis.to_floquet(O).T
    np.fill_diagonal(X, 0)
    return X


def quantum_correlation(rho, O, M: int, basis: FloquetBasis) -> complex:
    """sum_{k!=l} rho_kl O_lk exp(-i M (phi_k - phi_l))."""
    if M < 0:
        raise ContractError("M must be non-negative")
    return complex(quantum_correlation_series(rho, O, [M], basis)[0])


def quantum_correlation_series(rho, O, Ms, basis: FloquetBasis, chunk: int = 1024) -> np.ndarray:
    """Spectral-sum correlation at every kick count in ``Ms``."""
    X = _offdiag_product(rho, O, basis)
    Ms = np.asarray(Ms, dtype=float)
    out = np.empty(Ms.size, dtype=complex)
    for start in range(0, Ms.size, chunk):
        z = np.exp(-1j * np.outer(Ms[start:start + chunk], basis.phases))
        out[start:start + chunk] = np.einsum("tk,kl,tl->t", z, X, z.conj())
    return out


def direct_correlation(rho, O, M: int, F: np.ndarray, rho_star: WeakLimitState) -> complex:
    """<O> in F^M rho F^-M minus <O> in the weak limit, by explicit propagation."""
    rho = _as_matrix(rho)
    FM = np.linalg.matrix_power(F, M)
    rho_M = FM @ rho @ FM.conj().T
    return complex(np.sum(rho_M * np.asarray(O).T)) - rho_star.expectation(O)


def window_average(series: np.ndarray, start: int, window: int = DEFAULT_WINDOW) -> float:
    seg = np.abs(np.asarray(series)[start:start + window + 1])
    if seg.size < window + 1:
        raise InsufficientDataError("series shorter than the requested window")
    return float(seg.mean())


def dephasing_ratio(series: np.ndarray, M0: int, window: int = DEFAULT_WINDOW) -> float:
    """Window-averaged |C| over [M0, M0+window] relative to [0, window]."""
    return window_average(series, M0, window) / window_average(series, 0, window)


def decoherence_time(series: np.ndarray, window: int = DEFAULT_WINDOW, fraction: float = 0.1,
                     stride: int = 50) -> int | None:
    """First window start at which the averaged |C| falls below ``fraction`` of the initial window."""
    ref = window_average(series, 0, window)
    for start in range(0, len(series) - window, stride):
        if window_average(series, start, window) < fraction * ref:
            return start
    return None


def momentum_spread(psi0: np.ndarray, config: QkrConfig, M: int) -> np.ndarray:
    """<L^2> after 0, 1, ..., M kicks (entry k is after k kicks)."""
    psi = np.asarray(psi0, dtype=complex)
    if psi.shape != (config.N,):
        raise ContractError("state dimension does not match N")
    if abs(np.linalg.norm(psi) - 1) > 1e-10:
        raise ContractError("initial state must be normalised")
    L2 = (config.hbar * config.momenta()) ** 2
    out = np.empty(M + 1)
    out[0] = L2 @ np.abs(psi) ** 2
    for k in range(1, M + 1):
        psi = split_step(psi, config)
        out[k] = L2 @ np.abs(psi) ** 2
    return out


def evolve(psi0: np.ndarray, config: QkrConfig, M: int) -> np.ndarray:
    return split_step(psi0, config, M)


def saturation_ratio(trajectory: np.ndarray) -> float:
    """Last-quarter mean over third-quarter mean of a trajectory."""
    traj = np.asarray(trajectory)
    q = traj.size // 4
    return float(traj[3 * q:].mean() / traj[2 * q:3 * q].mean())


@dataclass
class LocalizationFit:
    l_s: float
    slope: float
    r2: float
    m0: int
    fit_range: int
    flagged: bool


def localization_length(final_state: np.ndarray, bin_width: int | None = None) -> LocalizationFit:
    """Exponential width of a momentum profile from a log-linear fit.

    The profile is folded about its (smoothed) peak, averaged in equal-width
    distance bins and fitted over the range in which it falls by one decade.
    """
    P = np.abs(np.asarray(final_state, dtype=complex)) ** 2
    N = P.size
    if N < 8:
        raise InsufficientDataError("profile too short to fit")
    w = bin_width or max(1, N // 128)
    kernel = np.ones(2 * w + 1) / (2 * w + 1)
    smooth = np.convolve(np.concatenate([P[-w:], P, P[:w]]), kernel, mode="valid")
    m0 = int(np.argmax(smooth))

    d = np.arange(N // 2)
    folded = 0.5 * (P[(m0 + d) % N] + P[(m0 - d) % N])
    nb = d.size // w
    binned = folded[: nb * w].reshape(nb, w).mean(axis=1)
    centres = d[: nb * w].reshape(nb, w).mean(axis=1)

    below = np.nonzero(binned < binned[0] / 10)[0]
    stop = int(below[0]) + 1 if below.size else nb
    stop = max(stop, min(3, nb))
    x, y = centres[:stop], binned[:stop]
    keep = y > 0
    x, y = x[keep], np.log(y[keep])
    if x.size < 2:
        return LocalizationFit(float("inf"), 0.0, 0.0, m0 - N // 2, 0, True)
    slope, intercept = np.polyfit(x, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    l_s = 2.0 / abs(slope) if slope != 0 else float("inf")
    flagged = r2 < 0.5 or abs(slope) < 1e-12
    return LocalizationFit(float(l_s), float(slope), float(r2), m0 - N // 2, int(x[-1]), bool(flagged))


def fixed_point_defect(rho_star, F: np.ndarray) -> float:
    """max |F rho* F^dagger - rho*|."""
    R = _as_matrix(rho_star)
    if R.shape != F.shape:
        raise ContractError("state and propagator dimensions differ")
    return float(np.max(np.abs(F @ R @ F.conj().T - R)))


@dataclass
class QuantumFactorization:
    joint: complex
    product: complex
    defect: float
    imaginary_part: float
    literal_defect: float


def quantum_factorization(rho_star: WeakLimitState, observables, heisenberg_offsets) -> QuantumFactorization:
    """Compare Tr(rho* prod_i O_i(t_i)) with prod_i Tr(rho* O_i).

    O(t) = F^-t O F^t is applied in the Floquet basis. Since rho* is stationary
    only offset differences matter, so offsets are shifted to start at 0.
    """
    obs = [np.asarray(O, dtype=complex) for O in observables]
    offsets = [int(t) for t in heisenberg_offsets]
    if not obs or len(obs) != len(offsets):
        raise ContractError("need one offset per observable and at least one observable")
    basis = rho_star.basis
    for O in obs:
        if O.shape != (basis.N, basis.N):
            raise ContractError("observable dimension does not match the state")
    t0 = min(offsets)
    phi = basis.phases
    pops = rho_star.populations
    floq = [basis.to_floquet(O) for O in obs]

    def mean_of_product(times):
        prod = np.eye(basis.N, dtype=complex)
        for Of, t in zip(floq, times):
            ph = np.exp(1j * t * phi)
            prod = prod @ (ph[:, None] * Of * ph.conj()[None, :])
        return complex(np.sum(pops * np.diag(prod)))

    singles = [complex(np.sum(pops * np.real(np.diag(Of)))) for Of in floq]
    product = complex(np.prod(singles))
    if len(obs) == 1:
        joint = singles[0]
        literal = 0.0
    else:
        joint = mean_of_product([t - t0 for t in offsets])
        literal = abs(mean_of_product([0] * len(obs)) - product)
    return QuantumFactorization(joint=joint, product=product, defect=float(abs(joint - product)),
                                imaginary_part=float(joint.imag), literal_defect=float(literal))


def quantum_factorization_defect(rho_star: WeakLimitState, observables, heisenberg_offsets) -> float:
    return quantum_factorization(rho_star, observables, heisenberg_offsets).defect
