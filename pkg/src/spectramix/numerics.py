"""Shared numerical primitives: seeded streams, eigensolvers, FFT and test statistics."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import linalg as sla
from scipy import stats


class ContractError(ValueError):
    """An input violates the documented precondition of an operation."""


class InsufficientDataError(ValueError):
    pass


class NumericalError(RuntimeError):
    """An iterative procedure failed to converge."""


class ResourceLimitError(ValueError):
    pass


MAX_DENSE_DIM = 4096
_U64 = 2**64


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by numpy's Philox generator. The 128-bit Philox key holds the seed in
    the low word and the stream id in the high word, so distinct
    ``(seed, stream_id)`` pairs give non-overlapping sequences.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if not 0 <= seed < _U64:
            raise ContractError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if not 0 <= stream_id < _U64:
            raise ContractError(f"stream id must be a 64-bit unsigned integer, got {stream_id}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = self.seed + (self.stream_id << 64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def uniform(self, size=None) -> np.ndarray:
        return self.generator.random(size)

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def substream(self, stream_id: int) -> "RngStream":
        """Independent child stream; the parent's state is not touched."""
        return RngStream(self.seed, (self.stream_id * 1_000_003 + stream_id + 1) % _U64)


def seeded_rng(seed: int, stream_id: int = 0) -> RngStream:
    return RngStream(seed, stream_id)


def _max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def hermiticity_defect(H: np.ndarray) -> float:
    return _max_abs(H - H.conj().T)


def unitarity_defect(U: np.ndarray) -> float:
    return _max_abs(U.conj().T @ U - np.eye(U.shape[0]))


def _require_square(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractError(f"{name} must be a square matrix, got shape {M.shape}")
    if M.shape[0] > MAX_DENSE_DIM:
        raise ResourceLimitError(f"{name} dimension {M.shape[0]} exceeds {MAX_DENSE_DIM}")
    return M


def hermitian_eigensystem(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvector columns of a Hermitian matrix."""
    H = _require_square(H, "H")
    scale = max(_max_abs(H), 1e-300)
    if hermiticity_defect(H) >= 1e-12 * scale:
        raise ContractError("matrix is not Hermitian")
    return np.linalg.eigh(H)


def unitary_eigenphases(U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenphases ``phi`` with ``U = sum_k exp(-i phi_k) |a_k><a_k|``.

    Phases lie in (-pi, pi] and are sorted ascending. A complex Schur form of a
    normal matrix is diagonal, so the Schur vectors are an orthonormal
    eigenbasis even inside degenerate subspaces.
    """
    U = _require_square(U, "U")
    if unitarity_defect(U) >= 1e-10:
        raise ContractError("matrix is not unitary")
    T, Z = sla.schur(U.astype(complex), output="complex")
    phases = -np.angle(np.diag(T))
    phases[phases <= -np.pi] += 2 * np.pi
    order = np.argsort(phases, kind="stable")
    return phases[order], Z[:, order]


def ks_distance(samples: Sequence[float], reference_cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Kolmogorov-Smirnov distance sup_x |F_emp(x) - F_ref(x)|."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {n}")
    F = np.asarray(reference_cdf(x), dtype=float)
    # left limits make step-function references exact; continuous ones are unaffected
    F_left = np.asarray(reference_cdf(np.nextafter(x, -np.inf)), dtype=float)
    upper = np.arange(1, n + 1) / n - F
    lower = F_left - np.arange(n) / n
    return float(min(1.0, max(upper.max(), lower.max(), 0.0)))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size < 2 or b.size < 2:
        raise InsufficientDataError("need at least 2 samples on each side")
    return float(stats.ks_2samp(a, b).statistic)


def pearson_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ContractError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 3:
        raise InsufficientDataError("need at least 3 pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(dx @ dx)
    sy = np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        raise ContractError("zero variance input")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def chi_square_independence(x: Sequence[float], y: Sequence[float], bins: int = 8) -> tuple[float, float]:
    """Chi-square statistic and p-value for a ``bins x bins`` quantile-binned joint histogram."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ContractError("length mismatch")
    if x.size < 5 * bins * bins:
        raise InsufficientDataError("too few pairs for the requested binning")
    qs = np.linspace(0, 1, bins + 1)[1:-1]
    ix = np.searchsorted(np.quantile(x, qs), x, side="right")
    iy = np.searchsorted(np.quantile(y, qs), y, side="right")
    table = np.zeros((bins, bins))
    np.add.at(table, (ix, iy), 1)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    chi2, p, _, _ = stats.chi2_contingency(table, correction=False)
    return float(chi2), float(p)


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def fft_1d(values: Sequence[complex], direction: str = "forward") -> np.ndarray:
    """Unitary-normalised FFT; forward uses the exp(-2 pi i jk/N) kernel."""
    x = np.asarray(values, dtype=complex)
    if not is_power_of_two(x.size):
        raise ContractError(f"FFT length must be a power of two, got {x.size}")
    if direction == "forward":
        return np.fft.fft(x, norm="ortho")
    if direction == "inverse":
        return np.fft.ifft(x, norm="ortho")
    raise ContractError(f"unknown FFT direction {direction!r}")


def thread_count() -> int:
    """Worker cap from ``SPECTRAMIX_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("SPECTRAMIX_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def parallel_map(fn: Callable, items: Iterable) -> list:
    """Order-preserving map over a thread pool; results never depend on scheduling."""
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
