"""Dense linear algebra shared by every sampler: ensemble/kernel conversions,
Schur-complement conditioning, and sums of fixed-order principal minors
recovered from shifted determinant evaluations.

All determinants go through LAPACK's pivoted LU (via numpy); there is no
exact-rational mode.  Tolerances live here so the whole package agrees on
them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IllConditioned, InvalidModel, SingularBlock, SingularMatrix

SYM_TOL = 1e-8        # allowed asymmetry for "symmetric" input
PSD_TOL = 1e-8        # eigenvalue slack below zero still counted as PSD
SINGULAR_TOL = 1e-12  # block determinants at or below this are singular
NUM_TOL = 1e-9        # generic relative identity checks
DET_RTOL = 1e-9       # relative agreement required of determinant identities
INTERP_TOL = 1e-6     # residual bound for coefficient recovery
MINOR_TOL = 1e-9      # principal-minor nonnegativity slack
CLAMP_TOL = 1e-9      # probability clamping window around [0, 1]

KIND_SYMMETRIC = "symmetric-psd"
KIND_NONSYMMETRIC = "nonsymmetric-psd"
KIND_UNCLASSIFIED = "unclassified"

# Shifted-node coefficient recovery loses digits to cancellation as n grows;
# past this size the spectral path is used instead.
_INTERP_MAX_N = 20


def _as_square(entries) -> np.ndarray:
    arr = np.array(entries, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidModel(f"expected a square matrix, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise InvalidModel("matrix entries must be finite")
    return arr


def classify_matrix(entries) -> str:
    """Classify a square matrix as symmetric-PSD, nonsymmetric-PSD, or neither.

    Nonsymmetric-PSD means the symmetric part (L + L^T)/2 is PSD, which is
    enough to make every principal minor nonnegative.
    """
    arr = _as_square(entries)
    if arr.size == 0:
        return KIND_SYMMETRIC
    scale = max(1.0, float(np.abs(arr).max()))
    sym_part = 0.5 * (arr + arr.T)
    lo = float(np.linalg.eigvalsh(sym_part).min())
    if np.abs(arr - arr.T).max() <= SYM_TOL * scale:
        return KIND_SYMMETRIC if lo >= -PSD_TOL * scale else KIND_UNCLASSIFIED
    return KIND_NONSYMMETRIC if lo >= -PSD_TOL * scale else KIND_UNCLASSIFIED


@dataclass(frozen=True)
class EnsembleMatrix:
    """Ensemble matrix L with a classification flag.

    Construct through from_array so the invariants are checked once; entries
    are frozen read-only after that.
    """

    entries: np.ndarray
    kind: str

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_array(cls, entries, kind: str | None = None) -> "EnsembleMatrix":
        arr = _as_square(entries)
        found = classify_matrix(arr)
        if kind is None:
            kind = found
        else:
            if kind not in (KIND_SYMMETRIC, KIND_NONSYMMETRIC, KIND_UNCLASSIFIED):
                raise InvalidModel(f"unknown kind {kind!r}")
            # A declared kind must be at least as weak as what the entries show.
            if kind == KIND_SYMMETRIC and found != KIND_SYMMETRIC:
                raise InvalidModel("matrix is not symmetric PSD within tolerance")
            if kind == KIND_NONSYMMETRIC and found == KIND_UNCLASSIFIED:
                raise InvalidModel("matrix has an indefinite symmetric part")
        arr = arr.copy()
        arr.flags.writeable = False
        return cls(entries=arr, kind=kind)

    @classmethod
    def _trusted(cls, arr: np.ndarray, kind: str) -> "EnsembleMatrix":
        # Internal constructor for matrices produced by operations that
        # preserve the class analytically (Schur complements, scalings).
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        arr.flags.writeable = False
        return cls(entries=arr, kind=kind)


@dataclass(frozen=True)
class MarginalKernel:
    """Marginal kernel K; for symmetric-PSD sources 0 <= K <= I."""

    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def det(matrix) -> float:
    """Determinant of a square matrix; the empty matrix has determinant 1."""
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.size == 0:
        return 1.0
    return float(np.linalg.det(arr))


def kernel_from_ensemble(ensemble: EnsembleMatrix) -> MarginalKernel:
    """K = L (I + L)^{-1}."""
    arr = ensemble.entries
    n = arr.shape[0]
    ipl = np.eye(n) + arr
    if n and abs(det(ipl)) <= SINGULAR_TOL:
        raise SingularMatrix("I + L is singular")
    k = np.linalg.solve(ipl.T, arr.T).T if n else np.zeros((0, 0))
    k = np.ascontiguousarray(k)
    k.flags.writeable = False
    return MarginalKernel(entries=k)


def ensemble_from_kernel(kernel: MarginalKernel) -> EnsembleMatrix:
    """L = K (I - K)^{-1}; requires I - K nonsingular."""
    k = np.asarray(kernel.entries, dtype=np.float64)
    n = k.shape[0]
    imk = np.eye(n) - k
    if n and abs(det(imk)) <= SINGULAR_TOL:
        raise SingularMatrix("I - K is singular (a marginal is pinned at 1)")
    arr = np.linalg.solve(imk.T, k.T).T if n else np.zeros((0, 0))
    return EnsembleMatrix.from_array(arr)


def schur_complement(ensemble: EnsembleMatrix, t) -> EnsembleMatrix:
    """Condition L on the block T: L^T = L_rest - L_[rest,T] L_TT^{-1} L_[T,rest].

    The remaining ground set keeps its original order.  Raises SingularBlock
    when det(L_TT) is at or below the singularity tolerance.
    """
    t = sorted(set(int(i) for i in t))
    arr = ensemble.entries
    n = arr.shape[0]
    if not t:
        return ensemble
    if t[0] < 0 or t[-1] >= n:
        raise InvalidModel(f"conditioning set {t} out of range for n={n}")
    rest = [i for i in range(n) if i not in set(t)]
    ltt = arr[np.ix_(t, t)]
    if abs(det(ltt)) <= SINGULAR_TOL:
        raise SingularBlock(f"det(L_TT) ~ 0 for T={t}")
    lrt = arr[np.ix_(rest, t)]
    ltr = arr[np.ix_(t, rest)]
    comp = arr[np.ix_(rest, rest)] - lrt @ np.linalg.solve(ltt, ltr)
    return EnsembleMatrix._trusted(comp, ensemble.kind)


def _newton_coefficients(values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Divided-difference table collapsed to Newton-basis coefficients."""
    coef = np.array(values, dtype=np.float64)
    m = len(coef)
    for j in range(1, m):
        coef[j:] = (coef[j:] - coef[j - 1:-1]) / (nodes[j:] - nodes[:m - j])
    return coef


def _newton_to_monomial(coef: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Expand sum_j c_j prod_{i<j} (z - x_i) into monomial coefficients
    (ascending powers)."""
    m = len(coef)
    mono = np.zeros(m)
    basis = np.zeros(m)
    basis[0] = 1.0
    for j in range(m):
        mono += coef[j] * basis
        if j < m - 1:
            shifted = np.empty(m)
            shifted[0] = 0.0
            shifted[1:] = basis[:-1]
            basis = shifted - nodes[j] * basis
    return mono


def _charpoly_interpolated(arr: np.ndarray) -> np.ndarray | None:
    """Minor sums from det(L + m I) at m = 0..n; None when the evaluations
    overflow or the recovered polynomial misses its own nodes."""
    n = arr.shape[0]
    nodes = np.arange(n + 1, dtype=np.float64)
    stack = arr[None, :, :] + nodes[:, None, None] * np.eye(n)[None, :, :]
    values = np.linalg.det(stack)
    if not np.all(np.isfinite(values)):
        return None
    coef = _newton_coefficients(values, nodes)
    mono = _newton_to_monomial(coef, nodes)
    # p(z) = sum_j e_{n-j} z^j, so reverse into e_0..e_n.
    e = mono[::-1].copy()
    recon = np.polyval(mono[::-1], nodes)
    scale = max(1.0, float(np.abs(values).max()))
    if np.abs(recon - values).max() > INTERP_TOL * scale:
        return None
    return e


def _charpoly_spectral(arr: np.ndarray, symmetric: bool) -> np.ndarray | None:
    """Minor sums via the eigenvalue recurrence e <- e + lambda * shift(e)."""
    n = arr.shape[0]
    if symmetric:
        lam = np.linalg.eigvalsh(arr).astype(np.complex128)
    else:
        lam = np.linalg.eigvals(arr)
    e = np.zeros(n + 1, dtype=np.complex128)
    e[0] = 1.0
    for x in lam:
        e[1:] = e[1:] + x * e[:-1]
    if not np.all(np.isfinite(e.view(np.float64))):
        return None
    real = e.real
    imag_scale = np.abs(e.imag).max() if n else 0.0
    ref = max(1.0, float(np.abs(real).max()))
    if imag_scale > INTERP_TOL * ref:
        return None
    return real


def char_poly_coeffs(ensemble_or_matrix) -> np.ndarray:
    """Vector e with e[j] = sum of the order-j principal minors of L.

    Equivalently det(L + z I) = sum_j e[j] z^(n-j).  Symmetric input goes
    through the eigenvalue recurrence, whose terms are all nonnegative for
    PSD spectra and therefore carry full relative accuracy.  Nonsymmetric
    input is recovered from shifted determinant evaluations at integer nodes
    while small (eigenvalues of nonnormal matrices are less trustworthy),
    falling back to the spectrum when the node values overflow or the
    reconstruction drifts.  Raises IllConditioned when no path passes the
    det(I+L) consistency check.
    """
    if isinstance(ensemble_or_matrix, EnsembleMatrix):
        arr = ensemble_or_matrix.entries
        symmetric = ensemble_or_matrix.kind == KIND_SYMMETRIC
    else:
        arr = _as_square(ensemble_or_matrix)
        symmetric = bool(arr.size == 0 or np.abs(arr - arr.T).max() <= SYM_TOL * max(1.0, np.abs(arr).max()))
    n = arr.shape[0]
    if n == 0:
        return np.array([1.0])
    ref = det(np.eye(n) + arr)
    spectral = lambda a: _charpoly_spectral(a, symmetric)  # noqa: E731
    if symmetric:
        candidates = [spectral, _charpoly_interpolated]
    elif n <= _INTERP_MAX_N:
        candidates = [_charpoly_interpolated, spectral]
    else:
        candidates = [spectral]
    last = None
    for recover in candidates:
        e = recover(arr)
        if e is None:
            continue
        last = e
        total = float(e.sum())
        if np.isfinite(ref) and abs(total - ref) <= DET_RTOL * max(1.0, abs(ref)):
            return e
    if last is None:
        raise IllConditioned("minor-sum recovery failed its residual checks")
    raise IllConditioned(
        f"minor sums disagree with det(I+L): sum={last.sum()!r} det={ref!r}"
    )


def read_matrix(path) -> np.ndarray:
    """Read the matrix file format: first non-comment line n, then n rows of
    n whitespace-separated decimals.  '#' starts a comment."""
    rows: list[list[float]] = []
    n = None
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if n is None:
                try:
                    n = int(line)
                except ValueError as exc:
                    raise InvalidModel(f"first line must be the size, got {line!r}") from exc
                if n < 0:
                    raise InvalidModel("matrix size must be nonnegative")
                continue
            rows.append([float(tok) for tok in line.split()])
    if n is None:
        raise InvalidModel(f"{path}: empty matrix file")
    if len(rows) != n or any(len(r) != n for r in rows):
        raise InvalidModel(f"{path}: expected {n} rows of {n} entries")
    return np.array(rows, dtype=np.float64).reshape(n, n)


def write_matrix(path, matrix) -> None:
    arr = _as_square(matrix)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{arr.shape[0]}\n")
        for row in arr:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
