from __future__ import annotations

import numpy as np
import pytest

from detsample.numerics import EnsembleMatrix


def random_psd(n: int, seed: int, scale: float = 1.0) -> np.ndarray:
    """Random symmetric PSD matrix with eigenvalues in (0, scale]."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    lam = scale * rng.uniform(0.05, 1.0, size=n)
    return (q * lam) @ q.T


def random_npsd(n: int, seed: int, skew: float = 0.5) -> np.ndarray:
    """Random nonsymmetric matrix whose symmetric part is PSD."""
    rng = np.random.default_rng(seed)
    sym = random_psd(n, seed)
    a = rng.normal(size=(n, n))
    return sym + skew * (a - a.T)


@pytest.fixture
def small_ensemble() -> EnsembleMatrix:
    return EnsembleMatrix.from_array([[2.0, 1.0], [1.0, 2.0]])
