"""Gaussian ensembles, Haar transformations, spacing statistics and the projector construction.

Entry convention: diagonal entries have variance 1 and every independent real
component of an off-diagonal entry has variance 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import special

from .numerics import (
    ContractError,
    InsufficientDataError,
    RngStream,
    chi_square_independence,
    hermitian_eigensystem,
    ks_distance,
    ks_two_sample,
)
from .reports import TestReport

MIN_TEST_SAMPLES = 1000
MIN_SPACINGS = 1000
SPACING_THRESHOLD = 0.05
KS_CRITICAL_1PCT = 1.63


class EnsembleKind(str, Enum):
    GOE = "goe"
    GUE = "gue"
    GSE = "gse"

    @property
    def beta(self) -> int:
        return {"goe": 1, "gue": 2, "gse": 4}[self.value]

    @property
    def group(self) -> str:
        return {"goe": "orthogonal", "gue": "unitary", "gse": "symplectic"}[self.value]


def ensemble_kind(kind) -> EnsembleKind:
    try:
        return EnsembleKind(str(getattr(kind, "value", kind)).lower())
    except ValueError:
        raise ContractError(f"unknown ensemble {kind!r}; expected goe, gue or gse") from None


@dataclass
class MatrixSample:
    kind: EnsembleKind
    n: int
    H: np.ndarray

    @property
    def dim(self) -> int:
        return self.H.shape[0]


def _complex_gaussian(gen: np.random.Generator, shape) -> np.ndarray:
    return gen.standard_normal(shape) + 1j * gen.standard_normal(shape)


def _draw(kind: EnsembleKind, n: int, gen: np.random.Generator) -> np.ndarray:
    if kind is EnsembleKind.GOE:
        G = gen.standard_normal((n, n))
        return (G + G.T) / 2
    if kind is EnsembleKind.GUE:
        G = _complex_gaussian(gen, (n, n))
        return (G + G.conj().T) / 2
    G = _complex_gaussian(gen, (n, n))
    A = (G + G.conj().T) / 2
    C = _complex_gaussian(gen, (n, n))
    B = (C - C.T) / 2
    return np.block([[A, B], [-B.conj(), A.conj()]])


def sample_ensemble(kind, n: int, rng: RngStream) -> MatrixSample:
    """One matrix; GSE returns the 2n x 2n complex form of an n x n quaternion matrix."""
    kind = ensemble_kind(kind)
    if n < 2:
        raise ContractError("n must be at least 2")
    return MatrixSample(kind, n, _draw(kind, n, rng.generator))


def sample_batch(kind, n: int, count: int, rng: RngStream) -> list[MatrixSample]:
    """``count`` matrices, matrix i drawn from sub-stream i (independent of batching)."""
    return [sample_ensemble(kind, n, rng.substream(i)) for i in range(count)]


def uniform_symmetric_batch(n: int, count: int, rng: RngStream) -> list[MatrixSample]:
    """Real symmetric matrices with i.i.d. uniform[-1, 1] entries (not orthogonally invariant)."""
    out = []
    for i in range(count):
        U = rng.substream(i).generator.uniform(-1.0, 1.0, (n, n))
        out.append(MatrixSample(EnsembleKind.GOE, n, np.triu(U) + np.triu(U, 1).T))
    return out


def copied_entry_batch(n: int, count: int, rng: RngStream) -> list[MatrixSample]:
    """GOE matrices with H_12 := H_11, breaking independence of entries."""
    out = sample_batch("goe", n, count, rng)
    for s in out:
        s.H[0, 1] = s.H[1, 0] = s.H[0, 0]
    return out


def _stack(samples) -> tuple[EnsembleKind | None, np.ndarray]:
    if isinstance(samples, np.ndarray):
        return None, samples
    samples = list(samples)
    if not samples:
        raise InsufficientDataError("no samples")
    kinds = {s.kind for s in samples}
    dims = {s.H.shape for s in samples}
    if len(kinds) != 1 or len(dims) != 1:
        raise ContractError("samples must share kind and size")
    return kinds.pop(), np.stack([s.H for s in samples])


def independent_components(kind, H: np.ndarray) -> tuple[np.ndarray, list[str]]:
    """Real independent components of a stack of matrices, shape (S, m), with labels."""
    kind = ensemble_kind(kind)
    if kind is EnsembleKind.GSE:
        n = H.shape[-1] // 2
        A, B = H[:, :n, :n], H[:, :n, n:]
        cols, labels = _hermitian_components(A, "A")
        iu = np.triu_indices(n, 1)
        cols += [B[:, i, j].real for i, j in zip(*iu)] + [B[:, i, j].imag for i, j in zip(*iu)]
        labels += [f"ReB{i}{j}" for i, j in zip(*iu)] + [f"ImB{i}{j}" for i, j in zip(*iu)]
        return np.column_stack(cols), labels
    cols, labels = _hermitian_components(H, "H", complex_part=kind is EnsembleKind.GUE)
    return np.column_stack(cols), labels


def _hermitian_components(H, name, complex_part=True):
    n = H.shape[-1]
    cols = [H[:, i, i].real for i in range(n)]
    labels = [f"{name}{i}{i}" for i in range(n)]
    iu = np.triu_indices(n, 1)
    cols += [H[:, i, j].real for i, j in zip(*iu)]
    labels += [f"Re{name}{i}{j}" for i, j in zip(*iu)]
    if complex_part:
        cols += [H[:, i, j].imag for i, j in zip(*iu)]
        labels += [f"Im{name}{i}{j}" for i, j in zip(*iu)]
    return cols, labels


def randomness_test(samples, seed: int = 0, kind=None, chi_pairs: int = 10) -> TestReport:
    """Independence of matrix entries: max |Pearson r| over all component pairs vs 4/sqrt(S).

    Chi-square tests on ``chi_pairs`` randomly chosen pairs are attached as
    details and do not enter the verdict.
    """
    k, H = _stack(samples)
    kind = ensemble_kind(kind or k or "goe")
    S = H.shape[0]
    if S < MIN_TEST_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_TEST_SAMPLES} samples, got {S}")
    X, labels = independent_components(kind, H)
    R = np.corrcoef(X, rowvar=False)
    np.fill_diagonal(R, 0.0)
    R = np.nan_to_num(R, nan=1.0)
    i, j = np.unravel_index(np.argmax(np.abs(R)), R.shape)
    stat = float(np.abs(R[i, j]))

    gen = RngStream(seed, 0xC41).generator
    m = X.shape[1]
    pvals = []
    for _ in range(chi_pairs):
        a, b = gen.choice(m, size=2, replace=False)
        pvals.append(chi_square_independence(X[:, a], X[:, b], bins=8)[1])
    details = {"worst_pair": (labels[i], labels[j]), "chi_square_min_p": float(min(pvals)),
               "chi_square_pairs": chi_pairs}
    return TestReport("randomness", stat, 4.0 / np.sqrt(S), S, seed, details)


def haar_transform(kind, n: int, rng: RngStream, phase_correction: bool = True) -> np.ndarray:
    """Haar-distributed orthogonal (n x n), unitary (n x n) or symplectic (2n x 2n) matrix."""
    group = _group(kind)
    gen = rng.generator
    if group == "symplectic":
        return _haar_symplectic(n, gen)
    Z = gen.standard_normal((n, n)) if group == "orthogonal" else _complex_gaussian(gen, (n, n)) / np.sqrt(2)
    return _qr_haar(Z, phase_correction)


def _group(kind) -> str:
    if kind in ("orthogonal", "unitary", "symplectic"):
        return kind
    return ensemble_kind(kind).group


def _qr_haar(Z: np.ndarray, phase_correction: bool = True) -> np.ndarray:
    Q, R = np.linalg.qr(Z)
    if not phase_correction:
        return Q
    d = np.diagonal(R, axis1=-2, axis2=-1)
    return Q * (d / np.abs(d))[..., None, :]


def symplectic_form(n: int) -> np.ndarray:
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, I], [-I, Z]])


def _haar_symplectic(n: int, gen: np.random.Generator) -> np.ndarray:
    """Quaternionic Gram-Schmidt: columns come in pairs (v, -J conj(v))."""
    J = symplectic_form(n)
    U = np.zeros((2 * n, 2 * n), dtype=complex)
    for k in range(n):
        v = _complex_gaussian(gen, 2 * n) / np.sqrt(2)
        for _ in range(2):  # re-orthogonalise once for stability
            basis = np.concatenate([U[:, :k], U[:, n:n + k]], axis=1)
            v = v - basis @ (basis.conj().T @ v)
        v /= np.linalg.norm(v)
        U[:, k] = v
        U[:, n + k] = -J @ v.conj()
    return U


def haar_batch(kind, n: int, count: int, rng: RngStream, phase_correction: bool = True) -> np.ndarray:
    """Stack of ``count`` Haar matrices drawn from one stream (vectorised QR)."""
    group = _group(kind)
    gen = rng.generator
    if group == "symplectic":
        return np.stack([_haar_symplectic(n, gen) for _ in range(count)])
    if group == "orthogonal":
        Z = gen.standard_normal((count, n, n))
    else:
        Z = _complex_gaussian(gen, (count, n, n)) / np.sqrt(2)
    return _qr_haar(Z, phase_correction)


def default_positions(dim: int) -> list[tuple[int, int]]:
    return [(0, 0), (0, 1), (dim - 1, dim - 1), (dim - 2, dim - 1)]


def invariance_test(samples, kind=None, rng: RngStream | None = None, positions=None,
                    rotations_per_matrix: int = 32, transform: str = "haar") -> TestReport:
    """Two-sample KS between entries of H and of U H U^dagger at fixed positions.

    Each matrix is conjugated by ``rotations_per_matrix`` fresh Haar matrices so
    the transformed sample is large and the one-sample 1% critical value
    1.63/sqrt(S) applies. ``transform="identity"`` uses U = I.
    """
    k, H = _stack(samples)
    kind = ensemble_kind(kind or k or "goe")
    rng = rng or RngStream(0)
    S, dim = H.shape[0], H.shape[-1]
    if S < MIN_TEST_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_TEST_SAMPLES} samples, got {S}")
    positions = positions or default_positions(dim)
    n = dim // 2 if kind is EnsembleKind.GSE else dim

    transformed = []
    for r in range(rotations_per_matrix):
        if transform == "identity":
            transformed.append(H)
            continue
        if transform != "haar":
            raise ContractError(f"unknown transform {transform!r}")
        U = haar_batch(kind, n, S, rng.substream(r))
        transformed.append(U @ H @ np.swapaxes(U, -1, -2).conj())
    Hp = np.concatenate(transformed)

    stat = 0.0
    for i, j in positions:
        parts = [np.real] if (i == j or kind is EnsembleKind.GOE) else [np.real, np.imag]
        for part in parts:
            stat = max(stat, ks_two_sample(part(H[:, i, j]), part(Hp[:, i, j])))
    return TestReport("invariance", stat, KS_CRITICAL_1PCT / np.sqrt(S), S, rng.seed,
                      {"positions": positions, "rotations_per_matrix": rotations_per_matrix})


def semicircle_cdf(x, radius: float) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=float) / radius, -1.0, 1.0)
    return 0.5 + (x * np.sqrt(1 - x**2) + np.arcsin(x)) / np.pi


def unfold_spectrum(eigenvalues, method: str = "polynomial", degree: int = 7, radius: float | None = None,
                    bulk: float = 1.0) -> np.ndarray:
    """Unfolded nearest-neighbour spacings rescaled to unit mean.

    ``method`` is ``"semicircle"`` (analytic staircase, radius 2 sqrt(<x^2>)
    unless given) or ``"polynomial"`` (degree-``degree`` fit of the staircase).
    Only the central ``bulk`` fraction of levels is kept.
    """
    ev = np.asarray(eigenvalues, dtype=float).ravel()
    n = ev.size
    if n < 16:
        raise InsufficientDataError(f"need at least 16 levels, got {n}")
    if np.any(np.diff(ev) < 0):
        raise ContractError("eigenvalues must be sorted ascending")
    if not 0 < bulk <= 1:
        raise ContractError("bulk fraction must lie in (0, 1]")
    if method == "semicircle":
        R = radius if radius is not None else 2.0 * np.sqrt(np.mean(ev**2))
        staircase = n * semicircle_cdf(ev, R)
    elif method == "polynomial":
        fit = np.polynomial.Polynomial.fit(ev, np.arange(1, n + 1), degree)
        staircase = fit(ev)
    else:
        raise ContractError(f"unknown unfolding method {method!r}")
    lo = int(round(n * (1 - bulk) / 2))
    hi = n - lo
    s = np.diff(staircase[lo:hi])
    return s / s.mean()


def ensemble_spacings(samples, method: str = "semicircle", bulk: float = 0.5, **kw) -> np.ndarray:
    """Pooled unfolded spacings; Kramers pairs of GSE spectra are counted once."""
    out = []
    for s in samples:
        ev, _ = hermitian_eigensystem(s.H)
        if s.kind is EnsembleKind.GSE:
            ev = ev[::2]
        out.append(unfold_spectrum(ev, method=method, bulk=bulk, **kw))
    return np.concatenate(out)


_SURMISE = {
    1: (np.pi / 2, np.pi / 4),
    2: (32 / np.pi**2, 4 / np.pi),
    4: (2**18 / (3**6 * np.pi**3), 64 / (9 * np.pi)),
}


def _surmise_consts(beta):
    if beta not in _SURMISE:
        raise ContractError(f"beta must be 1, 2 or 4, got {beta!r}")
    return _SURMISE[beta]


def wigner_surmise(beta: int, s) -> np.ndarray:
    """P(s) = a s^beta exp(-b s^2), unit norm and unit mean."""
    a, b = _surmise_consts(beta)
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ContractError("s must be non-negative")
    return a * s**beta * np.exp(-b * s**2)


def surmise_cdf(beta: int, s) -> np.ndarray:
    _, b = _surmise_consts(beta)
    s = np.maximum(np.asarray(s, dtype=float), 0.0)
    return special.gammainc((beta + 1) / 2, b * s**2)


def poisson_cdf(s) -> np.ndarray:
    return 1.0 - np.exp(-np.maximum(np.asarray(s, dtype=float), 0.0))


def _check_spacings(spacings) -> np.ndarray:
    s = np.asarray(spacings, dtype=float).ravel()
    if s.size < MIN_SPACINGS:
        raise InsufficientDataError(f"need at least {MIN_SPACINGS} spacings, got {s.size}")
    if np.any(s < 0):
        raise ContractError("spacings must be non-negative")
    return s


def spacing_test(spacings, beta: int, seed: int = 0) -> TestReport:
    """KS distance to the beta surmise with the fixed threshold 0.05."""
    s = _check_spacings(spacings)
    stat = ks_distance(s, lambda x: surmise_cdf(beta, x))
    return TestReport(f"spacing_beta{beta}", stat, SPACING_THRESHOLD, s.size, seed)


def quasienergy_spacings(phases) -> np.ndarray:
    """Spacings of points on the circle with unit mean: (phi_{k+1} - phi_k) N / 2pi, wrapping."""
    ph = np.sort(np.asarray(phases, dtype=float).ravel())
    N = ph.size
    return np.diff(np.append(ph, ph[0] + 2 * np.pi)) * N / (2 * np.pi)


def bgs_spacing_check(qkr_phases, rng: RngStream | None = None, min_levels: int = 256):
    """Compare quasienergy spacings with the beta=1 surmise and with Poisson.

    ``qkr_phases`` is one spectrum or a list of spectra whose spacings are
    pooled. Returns the pair of reports (vs GOE, vs Poisson); each passes when
    its reference is the closer one.
    """
    spectra = qkr_phases if isinstance(qkr_phases, (list, tuple)) else [qkr_phases]
    pooled = []
    for ph in spectra:
        ph = np.asarray(ph, dtype=float)
        if ph.size < min_levels:
            raise InsufficientDataError(f"need at least {min_levels} phases, got {ph.size}")
        pooled.append(quasienergy_spacings(ph))
    s = np.concatenate(pooled)
    ks_goe = ks_distance(s, lambda x: surmise_cdf(1, x))
    ks_poi = ks_distance(s, poisson_cdf)
    seed = rng.seed if rng is not None else 0
    return (TestReport("bgs_vs_goe", ks_goe, ks_poi, s.size, seed),
            TestReport("bgs_vs_poisson", ks_poi, ks_goe, s.size, seed))


def bgs_verdict(reports) -> str:
    return "goe" if reports[0].passed else "poisson"


def uniform_phases(N: int, rng: RngStream) -> np.ndarray:
    """Ordered uniform points on (-pi, pi]: the uncorrelated (Poisson) reference."""
    return np.sort(np.pi - 2 * np.pi * rng.uniform(N))


@dataclass
class WeakLimitConstruction:
    alpha: float
    beta: float
    gamma: float
    rho_star: np.ndarray
    pi: np.ndarray
    pi_ij: list[np.ndarray]
    u: float
    v: float
    u_ij: np.ndarray
    v_ij: np.ndarray
    p_marginals: np.ndarray
    p_joint: float
    diagnostics: dict = field(default_factory=dict)

    def trace_defects(self) -> tuple[float, float]:
        """max_ij |Tr(rho* pi_ij) - p_ij| and |Tr(rho* pi) - p|."""
        marg = max(abs(np.trace(self.rho_star @ P).real - p) for P, p in zip(self.pi_ij, self.p_marginals))
        joint = abs(np.trace(self.rho_star @ self.pi).real - self.p_joint)
        return float(marg), float(joint)

    def idempotency_defect(self) -> float:
        return float(max(np.max(np.abs(P @ P - P)) for P in [self.pi, *self.pi_ij]))

    def product_defect(self) -> float:
        prod = np.eye(self.pi.shape[0])
        for P in self.pi_ij:
            prod = prod @ P
        return float(np.max(np.abs(self.pi - prod)))

    def invariance_defect(self, U: np.ndarray) -> float:
        """Change of Tr(rho* pi) when both are conjugated by the same unitary."""
        Ud = U.conj().T
        return float(abs(np.trace(U @ self.rho_star @ Ud @ U @ self.pi @ Ud) - np.trace(self.rho_star @ self.pi)))

    def to_dict(self) -> dict:
        marg, joint = self.trace_defects()
        return {
            "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
            "u": self.u, "v": self.v, "u2": self.u**2, "v2": self.v**2,
            "u_ij": self.u_ij, "v_ij": self.v_ij,
            "p_marginals": self.p_marginals, "p_joint": self.p_joint,
            "marginal_trace_defect": marg, "joint_trace_defect": joint,
            "idempotency_defect": self.idempotency_defect(),
            "product_defect": self.product_defect(),
        }


def _coefficients(p, alpha, beta):
    u2 = (beta - p) / (beta - alpha)
    v2 = (p - alpha) / (beta - alpha)
    return np.sqrt(u2), np.sqrt(v2)


def weak_limit_construction(p_marginals: Sequence[float], p_joint: float, dim: int,
                            alpha: float | None = None, beta: float | None = None) -> WeakLimitConstruction:
    """State rho* and rank-one projectors reproducing the given probabilities.

    rho* = alpha|1><1| + beta|2><2| + gamma|3><3| and each projector is onto
    u|1> + v|2> with alpha u^2 + beta v^2 = p, u^2 + v^2 = 1.
    """
    p_m = np.asarray(p_marginals, dtype=float).ravel()
    inputs = np.append(p_m, p_joint)
    if p_m.size == 0:
        raise ContractError("need at least one marginal probability")
    if np.any(inputs <= 0) or np.any(inputs >= 0.5):
        raise ContractError("every probability must lie in (0, 1/2)")
    if dim < 3:
        raise ContractError("dimension must be at least 3")
    lo, hi = float(inputs.min()), float(inputs.max())
    a = 0.9 * lo if alpha is None else float(alpha)
    b = hi + 0.9 * (0.5 - hi) if beta is None else float(beta)
    if not (0 <= a < lo and hi < b <= 0.5):
        raise ContractError(f"need 0 <= alpha < {lo} and {hi} < beta <= 1/2, got alpha={a}, beta={b}")
    g = 1.0 - a - b

    e = np.eye(dim)
    rho = a * np.outer(e[0], e[0]) + b * np.outer(e[1], e[1]) + g * np.outer(e[2], e[2])

    def projector(p):
        u, v = _coefficients(p, a, b)
        w = u * e[0] + v * e[1]
        return np.outer(w, w), u, v

    pis, us, vs = [], [], []
    for p in p_m:
        P, u, v = projector(p)
        pis.append(P)
        us.append(u)
        vs.append(v)
    pi, u, v = projector(p_joint)
    return WeakLimitConstruction(a, b, g, rho, pi, pis, float(u), float(v), np.array(us), np.array(vs),
                                 p_m, float(p_joint))
