"""Dense symmetric eigendecomposition and distances between SPD matrices.

Covariances of feature activations are symmetric positive definite, so they
live on a curved manifold rather than in a flat vector space.  This module
provides the eigensolver, the matrix logarithm, the Euclidean / log-Euclidean /
affine-invariant covariance distances, and closed-form gradients of the two
distances used as training penalties.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateMatrixError,
    DimMismatchError,
    NoConvergenceError,
    NonSymmetricError,
)

SYMMETRY_RTOL = 1e-10
JACOBI_OFFDIAG_RTOL = 1e-12
JACOBI_MAX_SWEEPS = 100
JITTER_FLOOR = 1e-12
DEFAULT_JITTER_REL = 1e-5
# Eigenvalue pairs closer than this (relatively) use the limit value of the
# divided difference, which removes the removable singularity continuously.
LOEWNER_DEGENERACY_RTOL = 1e-12


@dataclass(frozen=True)
class SpdMatrix:
    """Symmetric positive definite matrix with its eigendecomposition cached.

    ``eigvals`` are sorted descending and all strictly positive; ``eigvecs``
    holds the matching eigenvectors as columns and is orthogonal.  Treat
    instances as immutable.
    """

    mat: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray

    @property
    def dim(self) -> int:
        return self.mat.shape[0]


def _check_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSymmetricError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DegenerateMatrixError("matrix has non-finite entries")
    scale = np.max(np.abs(m)) if m.size else 0.0
    asym = np.max(np.abs(m - m.T)) if m.size else 0.0
    if asym > SYMMETRY_RTOL * scale:
        raise NonSymmetricError(
            f"asymmetry {asym:.3e} exceeds tolerance {SYMMETRY_RTOL * scale:.3e}"
        )
    return m


def _jacobi_rotate(b: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    apq = b[p, q]
    if apq == 0.0:
        return
    theta = (b[q, q] - b[p, p]) / (2.0 * apq)
    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
    if theta < 0.0:
        t = -t
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c

    row_p, row_q = b[p, :].copy(), b[q, :].copy()
    b[p, :] = c * row_p - s * row_q
    b[q, :] = s * row_p + c * row_q
    col_p, col_q = b[:, p].copy(), b[:, q].copy()
    b[:, p] = c * col_p - s * col_q
    b[:, q] = s * col_p + c * col_q

    vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
    v[:, p] = c * vec_p - s * vec_q
    v[:, q] = s * vec_p + c * vec_q


def _offdiag_converged(b: np.ndarray) -> bool:
    diag = np.diag(b)
    off = b - np.diag(diag)
    return float(np.linalg.norm(off)) <= JACOBI_OFFDIAG_RTOL * float(
        np.linalg.norm(diag)
    )


def sym_eig(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues sorted descending (ties keep original diagonal order)
    and the matching orthonormal eigenvectors as columns, with each column's
    sign fixed so its largest-magnitude component is positive.  Deterministic
    for identical input bits.
    """
    b = _check_symmetric(m).copy()
    b = 0.5 * (b + b.T)
    n = b.shape[0]
    v = np.eye(n)

    converged = _offdiag_converged(b)
    for _ in range(JACOBI_MAX_SWEEPS):
        if converged:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                _jacobi_rotate(b, v, p, q)
        converged = _offdiag_converged(b)
    if not converged:
        raise NoConvergenceError(
            f"Jacobi sweep cap of {JACOBI_MAX_SWEEPS} reached for n={n}"
        )

    vals = np.diag(b).copy()
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = v[:, order]
    for j in range(n):
        lead = np.argmax(np.abs(vecs[:, j]))
        if vecs[lead, j] < 0.0:
            vecs[:, j] = -vecs[:, j]
    return vals, vecs


def spd_from_symmetric(m: np.ndarray) -> SpdMatrix:
    """Wrap a symmetric matrix as SpdMatrix; raises if not positive definite."""
    m = _check_symmetric(m)
    vals, vecs = sym_eig(m)
    if vals.size == 0 or vals[-1] <= 0.0:
        raise DegenerateMatrixError(
            f"matrix is not positive definite (min eigenvalue {vals[-1] if vals.size else 'n/a'})"
        )
    return SpdMatrix(mat=0.5 * (m + m.T), eigvals=vals, eigvecs=vecs)


def make_spd(m: np.ndarray, jitter_rel: float = DEFAULT_JITTER_REL) -> SpdMatrix:
    """Repair a symmetric (near-)PSD matrix into a strict SpdMatrix.

    Adds ``eps * I`` with ``eps = max(jitter_rel * trace(m) / dim, 1e-12)``.
    Batch covariances with fewer samples than features are rank deficient and
    the matrix logarithm is undefined at zero eigenvalues; the jitter keeps
    every eigenvalue strictly positive.
    """
    m = _check_symmetric(m)
    dim = m.shape[0]
    eps = max(jitter_rel * float(np.trace(m)) / dim, JITTER_FLOOR)
    jittered = m + eps * np.eye(dim)
    try:
        return spd_from_symmetric(jittered)
    except DegenerateMatrixError:
        raise DegenerateMatrixError(
            f"matrix not positive definite after jitter eps={eps:.3e}"
        ) from None


def jitter_eps(m: np.ndarray, jitter_rel: float = DEFAULT_JITTER_REL) -> float:
    """The jitter make_spd would add to ``m`` (needed by chain-rule gradients)."""
    m = np.asarray(m, dtype=np.float64)
    return max(jitter_rel * float(np.trace(m)) / m.shape[0], JITTER_FLOOR)


def mat_log(c: SpdMatrix) -> np.ndarray:
    """Matrix logarithm via the cached eigenbasis: U diag(log(vals)) U^T."""
    log_vals = np.log(c.eigvals)
    out = (c.eigvecs * log_vals) @ c.eigvecs.T
    return 0.5 * (out + out.T)


def mat_exp_symmetric(m: np.ndarray) -> np.ndarray:
    """Matrix exponential of a symmetric matrix (inverse of mat_log)."""
    vals, vecs = sym_eig(m)
    out = (vecs * np.exp(vals)) @ vecs.T
    return 0.5 * (out + out.T)


def _check_same_dim(cs: SpdMatrix, ct: SpdMatrix) -> int:
    if cs.dim != ct.dim:
        raise DimMismatchError(f"dimension mismatch: {cs.dim} vs {ct.dim}")
    return cs.dim


def dist_euclidean(cs: SpdMatrix, ct: SpdMatrix) -> float:
    """Squared Frobenius distance, normalized: ||Cs - Ct||_F^2 / (4 d^2)."""
    d = _check_same_dim(cs, ct)
    diff = cs.mat - ct.mat
    return float(np.sum(diff * diff)) / (4.0 * d * d)


def dist_log_euclidean(cs: SpdMatrix, ct: SpdMatrix) -> float:
    """Squared log-Euclidean distance: ||log Cs - log Ct||_F^2 / (4 d^2).

    A geodesic-inspired distance on the SPD manifold; the normalization makes
    the value independent of the feature-layer width.
    """
    d = _check_same_dim(cs, ct)
    diff = mat_log(cs) - mat_log(ct)
    return float(np.sum(diff * diff)) / (4.0 * d * d)


def dist_affine(cs: SpdMatrix, ct: SpdMatrix) -> float:
    """Affine-invariant distance ||log(Ct^-1/2 Cs Ct^-1/2)||_F (unnormalized).

    Equal in value to ||log(Cs Ct^-1)||_F; the congruence form avoids taking
    the logarithm of a non-symmetric product.  Provided for comparison
    experiments only, never used in training gradients.
    """
    _check_same_dim(cs, ct)
    inv_sqrt = (ct.eigvecs / np.sqrt(ct.eigvals)) @ ct.eigvecs.T
    middle = inv_sqrt @ cs.mat @ inv_sqrt
    vals, _ = sym_eig(0.5 * (middle + middle.T))
    log_vals = np.log(vals)
    return float(np.sqrt(np.sum(log_vals * log_vals)))


def loewner_log(eigvals: np.ndarray) -> np.ndarray:
    """Divided differences of log at eigenvalue pairs.

    L[i, j] = (log a_i - log a_j) / (a_i - a_j), with the limit 1/a_i on the
    diagonal and for near-degenerate pairs.
    """
    a = np.asarray(eigvals, dtype=np.float64)
    diff = a[:, None] - a[None, :]
    degenerate = np.abs(diff) < LOEWNER_DEGENERACY_RTOL * np.maximum(
        a[:, None], a[None, :]
    )
    safe = np.where(degenerate, 1.0, diff)
    log_diff = np.log(a)[:, None] - np.log(a)[None, :]
    return np.where(degenerate, 1.0 / a[:, None], log_diff / safe)


def _log_frechet_adjoint(c: SpdMatrix, sym_grad: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. log(C) back to a gradient w.r.t. C.

    The Frechet derivative of the matrix log at C = U diag(a) U^T acts as
    H -> U (L o (U^T H U)) U^T with L the divided-difference (Loewner) matrix;
    it is self-adjoint on symmetric matrices.
    """
    lo = loewner_log(c.eigvals)
    inner = c.eigvecs.T @ sym_grad @ c.eigvecs
    out = c.eigvecs @ (lo * inner) @ c.eigvecs.T
    return 0.5 * (out + out.T)


def grad_dist_log_euclidean(
    cs: SpdMatrix, ct: SpdMatrix
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of dist_log_euclidean w.r.t. both arguments.

    With delta = log Cs - log Ct, the gradient w.r.t. Cs is the Frechet
    adjoint of delta / (2 d^2) in Cs's eigenbasis; the gradient w.r.t. Ct is
    the same with opposite sign in Ct's eigenbasis.  Both outputs symmetric.
    """
    d = _check_same_dim(cs, ct)
    delta = mat_log(cs) - mat_log(ct)
    scale = 1.0 / (2.0 * d * d)
    gs = scale * _log_frechet_adjoint(cs, delta)
    gt = -scale * _log_frechet_adjoint(ct, delta)
    return gs, gt


def grad_dist_euclidean(
    cs: SpdMatrix, ct: SpdMatrix
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of dist_euclidean: gs = (Cs - Ct) / (2 d^2), gt = -gs."""
    d = _check_same_dim(cs, ct)
    gs = (cs.mat - ct.mat) / (2.0 * d * d)
    return gs, -gs
