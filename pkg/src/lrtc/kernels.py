"""Matrix kernels used by the completion solver.

Covers the SVD-based nuclear-norm prox, circular difference operators on
an ``I1 x I2`` pixel grid, isotropic TV, 2-D group shrinkage and the
FFT-diagonalized Sylvester solve of the TV-regularized encoding update.

Encodings with a TV prior are handled in their transposed layout ``Xh``
(``s x r`` with ``s = I1 * I2 * S``): column ``j`` holds row ``j`` of the
mode-3 encoding, made of ``S`` consecutive column-major ``I1 x I2`` images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "thin_svd",
    "nuclear_norm",
    "svt",
    "DiffOperators",
    "build_diff_operators",
    "as_images",
    "from_images",
    "tv_value",
    "shrink2d",
    "sylvester_fft_solve",
]


def thin_svd(m):
    """Thin SVD ``m = U @ diag(s) @ V.T`` with ``s`` non-increasing."""
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValueError("thin_svd: matrix contains NaN or Inf")
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    return u, s, vh.T


def nuclear_norm(m):
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        return 0.0
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def svt(w, delta):
    r"""Singular value thresholding.

    Returns the minimizer of :math:`\delta \|X\|_* + \frac{1}{2}\|X - W\|_F^2`,
    i.e. ``P diag(max(sigma - delta, 0)) Q^T`` for ``W = P diag(sigma) Q^T``.
    """
    if delta < 0:
        raise ValueError(f"threshold must be non-negative, got {delta}")
    u, s, v = thin_svd(w)
    s = np.maximum(s - delta, 0.0)
    keep = s > 0
    return (u[:, keep] * s[keep]) @ v[:, keep].T


@dataclass(frozen=True)
class DiffOperators:
    """Periodic forward differences on an ``I1 x I2`` grid.

    ``psi2[p, q]`` is the eigenvalue of ``D1^T D1 + D2^T D2`` for the 2-D
    Fourier mode ``(p, q)``.
    """

    grid: tuple
    psi2: np.ndarray

    def d1(self, x):
        """Difference along the first image axis; `x` has shape ``(I1, I2, ...)``."""
        return np.roll(x, -1, axis=0) - x

    def d2(self, x):
        return np.roll(x, -1, axis=1) - x

    def d1t(self, y):
        return np.roll(y, 1, axis=0) - y

    def d2t(self, y):
        return np.roll(y, 1, axis=1) - y

    def gram(self, x):
        """Apply ``D1^T D1 + D2^T D2``."""
        return self.d1t(self.d1(x)) + self.d2t(self.d2(x))


def build_diff_operators(i1, i2):
    i1, i2 = int(i1), int(i2)
    if i1 < 2 or i2 < 2:
        raise ValueError(f"difference grid must be at least 2 x 2, got {i1} x {i2}")
    lam1 = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(i1) / i1)
    lam2 = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(i2) / i2)
    psi2 = lam1[:, None] + lam2[None, :]
    psi2[0, 0] = 0.0
    psi2.setflags(write=False)
    return DiffOperators((i1, i2), psi2)


def as_images(xh, grid, blocks):
    """View an ``s x r`` transposed encoding as an ``(I1, I2, S, r)`` stack."""
    i1, i2 = grid
    s, r = xh.shape
    if s != i1 * i2 * blocks:
        raise ValueError(f"{s} rows do not match grid {grid} with {blocks} blocks")
    return np.reshape(xh, (i1, i2, blocks, r), order="F")


def from_images(img):
    i1, i2, blocks, r = img.shape
    return np.reshape(img, (i1 * i2 * blocks, r), order="F")


def tv_value(x3, grid, blocks=1):
    """Isotropic TV of a mode-3 encoding ``x3`` of shape ``(r, I1*I2*S)``.

    Every row is split into `blocks` column-major images; the value sums the
    Euclidean norm of the periodic forward gradient over all pixels.
    """
    x3 = np.asarray(x3, dtype=np.float64)
    ops = build_diff_operators(*grid)
    img = as_images(x3.T, grid, blocks)
    return float(np.sum(np.hypot(ops.d1(img), ops.d2(img))))


def shrink2d(t1, t2, threshold):
    """Pairwise 2-D shrinkage of ``(t1, t2)`` toward the origin by `threshold`.

    Each pair ``t = (t1[i], t2[i])`` maps to ``max(|t| - threshold, 0) t / |t|``
    with the convention ``0 * (0 / 0) = 0``.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be non-negative, got {threshold}")
    t1 = np.asarray(t1, dtype=np.float64)
    t2 = np.asarray(t2, dtype=np.float64)
    if t1.shape != t2.shape:
        raise ValueError("shrink2d: component shapes differ")
    norm = np.hypot(t1, t2)
    scale = np.zeros_like(norm)
    nz = norm > 0
    scale[nz] = np.maximum(norm[nz] - threshold, 0.0) / norm[nz]
    return scale * t1, scale * t2


def sylvester_fft_solve(a_hat, rhs, beta, rho, ops, blocks=1):
    """Solve ``Xh (Ah Ah^T) + beta B^T B Xh + rho Xh = rhs`` for ``Xh``.

    Parameters
    ----------
    a_hat : ndarray, shape (r, m)
        Transposed mode-3 library; ``Ah Ah^T`` is the ``r x r`` coupling.
    rhs : ndarray, shape (s, r)
        Right-hand side in the transposed encoding layout.
    beta, rho : float
        Positive TV penalty and proximal weight.
    ops : DiffOperators
        Grid operators; ``B = [D1; D2]`` acts blockwise on each image.
    blocks : int
        Number of images per encoding row.

    Returns
    -------
    ndarray, shape (s, r)

    Notes
    -----
    The coupling side is diagonalized by the left singular vectors of
    ``a_hat`` and the spatial side by a 2-D DFT per image, so the solve is
    an elementwise division by ``sigma_j^2 + beta * psi2 + rho``.
    """
    if beta <= 0 or rho <= 0:
        raise ValueError("beta and rho must be positive")
    a_hat = np.asarray(a_hat, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    r = a_hat.shape[0]
    if rhs.ndim != 2 or rhs.shape[1] != r:
        raise ValueError(f"rhs shape {rhs.shape} incompatible with library rank {r}")
    p, sig, _ = np.linalg.svd(a_hat, full_matrices=True)
    sig2 = np.zeros(r)
    sig2[: sig.size] = sig**2

    img = as_images(rhs @ p, ops.grid, blocks)
    spec = np.fft.fft2(img, axes=(0, 1))
    spec /= sig2[None, None, None, :] + beta * ops.psi2[:, :, None, None] + rho
    sol = np.fft.ifft2(spec, axes=(0, 1))
    real = sol.real
    imag = float(np.linalg.norm(sol.imag))
    if imag > 1e-9 * float(np.linalg.norm(real)) and imag > np.finfo(float).tiny:
        raise FloatingPointError(f"Sylvester solve left imaginary residue {imag:.3e}")
    return from_images(real) @ p.T
