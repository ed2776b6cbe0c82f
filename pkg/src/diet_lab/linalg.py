"""Minimal dense linear algebra on float64 row-major arrays.

Everything here operates on plain 2-D ``numpy.ndarray`` matrices. The SVD is
a one-sided Jacobi scheme: accurate for the small matrices the closed-form
analysis works with, and fully deterministic (including singular-vector
signs). All functions are pure.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, NumericError, ShapeError

# Relative threshold below which singular values are treated as zero.
DEFAULT_SVD_TOL = 1e-9


def as_matrix(a) -> np.ndarray:
    """Coerce to a 2-D float64 array without copying when possible."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def require_finite(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name} contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    """Exact float64 matrix product, with shape validation."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax_rows(m) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    m = require_finite(as_matrix(m), "softmax input")
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_sum_exp_rows(m) -> np.ndarray:
    """Per-row log(sum(exp(.))), overflow-safe."""
    m = require_finite(as_matrix(m), "log-sum-exp input")
    mx = m.max(axis=1)
    return mx + np.log(np.exp(m - mx[:, None]).sum(axis=1))


@dataclass(frozen=True)
class ThinSvd:
    """Rank-truncated factorization m = u @ diag(sigma) @ v.T.

    ``u`` is (n, r) and ``v`` is (d, r), both with orthonormal columns;
    ``sigma`` holds the r retained singular values, sorted descending.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return self.sigma.size

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def svd_thin(m, tol: float = DEFAULT_SVD_TOL, max_sweeps: int = 60) -> ThinSvd:
    """Thin SVD by one-sided Jacobi rotations.

    Columns of the working matrix are rotated pairwise until mutually
    orthogonal; column norms are then the singular values. Values below
    ``tol * sigma_max`` are truncated. Each right-singular-vector column is
    sign-fixed so that its largest-magnitude entry is non-negative, making
    the factorization deterministic.
    """
    m = require_finite(as_matrix(m))
    n, d = m.shape
    transposed = d > n
    a = m.T.copy() if transposed else m.copy()
    rows, cols = a.shape

    v = np.eye(cols)
    # Orthogonality threshold relative to the column-norm product; float64
    # roundoff makes anything much below ~1e-15 unreachable. Columns whose
    # norm falls under ``tiny`` are numerically zero (rank deficiency) and
    # must not be rotated against: they hold pure roundoff.
    eps = 1e-14
    tiny = 1e-15 * np.linalg.norm(a)

    for sweep in range(max_sweeps):
        rotated = False
        for i in range(cols - 1):
            for j in range(i + 1, cols):
                ci = a[:, i]
                cj = a[:, j]
                g = float(ci @ cj)
                ni = float(np.sqrt(ci @ ci))
                nj = float(np.sqrt(cj @ cj))
                if ni <= tiny or nj <= tiny:
                    continue
                if abs(g) <= eps * ni * nj:
                    continue
                rotated = True
                tau = (nj * nj - ni * ni) / (2.0 * g)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                if tau == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                a_i = c * ci - s * cj
                a_j = s * ci + c * cj
                a[:, i] = a_i
                a[:, j] = a_j
                v_i = c * v[:, i] - s * v[:, j]
                v_j = s * v[:, i] + c * v[:, j]
                v[:, i] = v_i
                v[:, j] = v_j
        if not rotated:
            break
    else:
        raise ConvergenceError(
            f"Jacobi SVD did not converge within {max_sweeps} sweeps",
            sweeps=max_sweeps,
        )

    norms = np.sqrt((a * a).sum(axis=0))
    order = np.argsort(-norms, kind="stable")
    norms = norms[order]
    a = a[:, order]
    v = v[:, order]

    sigma_max = norms[0] if norms.size else 0.0
    rank = int(np.sum(norms > tol * sigma_max)) if sigma_max > 0 else 0
    sigma = norms[:rank]
    u = a[:, :rank] / sigma if rank else np.zeros((rows, 0))
    v = v[:, :rank]

    if transposed:
        u, v = v, u

    # Sign convention: largest-|entry| of each v column made non-negative.
    for k in range(rank):
        pivot = int(np.argmax(np.abs(v[:, k])))
        if v[pivot, k] < 0:
            v[:, k] = -v[:, k]
            u[:, k] = -u[:, k]

    return ThinSvd(u=u, sigma=sigma, v=v)
