"""Small dense SVD, polar factors, and Newton-Schulz orthogonalization.

The polar factor U V^T of a matrix-shaped momentum is the update direction used
by the eigenspace-preconditioned optimizers; it can be computed either through
an SVD or through the cubic Newton-Schulz fixed-point iteration, and the two
paths agree for well-conditioned input (a property the tests pin down).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpectralResult",
    "OrthogonalizeReport",
    "svd",
    "polar_factor",
    "newton_schulz_orthogonalize",
]


@dataclass
class SpectralResult:
    """Thin SVD M = u @ diag(s) @ v.T with s sorted non-increasing."""

    u: np.ndarray  # (m, k)
    s: np.ndarray  # (k,), non-negative, non-increasing
    v: np.ndarray  # (n, k)

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


@dataclass
class OrthogonalizeReport:
    o: np.ndarray
    iterations: int
    residual: float  # ||O^T O - I||_F (transposed form for wide input)
    converged: bool
    # ||G^2 - G||_F for the Gram matrix G: vanishes once the iterate is a
    # partial isometry, even when rank deficiency keeps ``residual`` large
    projection_defect: float = float("inf")


def svd(m: np.ndarray) -> SpectralResult:
    """Thin SVD of a finite matrix.

    Raises ``RuntimeError("svd did not converge")`` if the underlying LAPACK
    iteration fails.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("svd expects a 2-d matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("svd: non-finite input")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("svd did not converge") from exc
    return SpectralResult(u=u, s=s, v=vt.T)


def _gram_residuals(x: np.ndarray) -> tuple[float, float]:
    """(||G - I||_F, ||G^2 - G||_F) with G on the smaller side of x."""
    if x.shape[0] >= x.shape[1]:
        g = x.T @ x
    else:
        g = x @ x.T
    eye = np.eye(g.shape[0])
    return float(np.linalg.norm(g - eye)), float(np.linalg.norm(g @ g - g))


def newton_schulz_orthogonalize(m: np.ndarray, tol: float = 1e-7, max_iter: int = 30) -> OrthogonalizeReport:
    """Cubic Newton-Schulz iteration toward the polar factor of ``m``.

    Pre-scales X0 = m / (||m||_F + 1e-12) so all singular values land in (0, 1],
    then iterates X <- 1.5 X - 0.5 X X^T X (run on the transpose when m is tall
    so the Gram product stays on the small side). Stops when the orthogonality
    residual drops below ``tol`` or the iterate stagnates; non-convergence is
    reported through the flag, not raised.

    Rank-deficient input converges to a partial isometry on its range; the full
    residual then stays at sqrt(codimension) and the flag remains False even
    though the iterate has stabilized.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("newton_schulz_orthogonalize expects a 2-d matrix")
    fro = np.linalg.norm(m)
    if fro == 0.0:
        raise ValueError("polar factor undefined")

    transposed = m.shape[0] > m.shape[1]
    x = (m.T if transposed else m) / (fro + 1e-12)

    residual, defect = _gram_residuals(x)
    iters = 0
    while residual > tol and iters < max_iter:
        x_next = 1.5 * x - 0.5 * (x @ x.T) @ x
        step = float(np.linalg.norm(x_next - x))
        x = x_next
        iters += 1
        residual, defect = _gram_residuals(x)
        if step < 1e-15:
            break

    o = x.T if transposed else x
    return OrthogonalizeReport(o=o, iterations=iters, residual=residual,
                               converged=residual <= tol, projection_defect=defect)


def polar_factor(m: np.ndarray, method: str = "svd", tol: float = 1e-7, max_iter: int = 30) -> np.ndarray:
    """Orthogonal polar factor U V^T of a nonzero matrix.

    ``method="svd"`` composes the thin-SVD factors; ``method="newton_schulz"``
    runs the iteration and raises (carrying the residual) if it fails to reach
    ``tol``. Invariant under positive rescaling of ``m``.
    """
    m = np.asarray(m, dtype=np.float64)
    if np.linalg.norm(m) == 0.0:
        raise ValueError("polar factor undefined")
    if method == "svd":
        res = svd(m)
        return res.u @ res.v.T
    if method == "newton_schulz":
        report = newton_schulz_orthogonalize(m, tol=tol, max_iter=max_iter)
        if not report.converged:
            raise RuntimeError(
                f"newton-schulz did not converge: residual {report.residual:.3e} after {report.iterations} iterations"
            )
        return report.o
    raise ValueError(f"unknown polar method: {method!r}")
