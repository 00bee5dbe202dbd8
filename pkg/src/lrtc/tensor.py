"""Dense tensor helpers: mode-n unfolding, observation masks and test data.

Tensors are plain ``numpy.ndarray`` objects of dtype float64.  Linear
indices, whenever they appear (masks, files), follow column-major order
with the first index varying fastest, which is also the ordering used for
the columns of a mode-n unfolding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np

__all__ = [
    "ObservationMask",
    "check_tensor",
    "inner_product",
    "frobenius_norm",
    "unfold",
    "fold",
    "project",
    "project_complement",
    "random_mask",
    "synth_lowrank",
    "numerical_ranks",
]


def check_tensor(a, name="tensor"):
    """Return `a` as a float64 array, rejecting non-finite entries."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 0:
        raise ValueError(f"{name} must have at least one dimension")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf")
    return a


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def inner_product(a, b):
    """Sum of elementwise products of two equally shaped tensors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_shape(a, b)
    return float(np.dot(a.ravel(order="F"), b.ravel(order="F")))


def frobenius_norm(a):
    return float(np.sqrt(inner_product(a, a)))


def _check_mode(mode, ndim):
    if not isinstance(mode, (int, np.integer)) or not 0 <= mode < ndim:
        raise ValueError(f"mode must be an integer in [0, {ndim}), got {mode!r}")


def unfold(a, mode):
    """Mode-`mode` matricization (0-based mode).

    Rows index dimension `mode`; columns enumerate the remaining indices
    lexicographically with the earliest index varying fastest.

    Parameters
    ----------
    a : ndarray
        Tensor of shape ``(I_1, ..., I_N)``.
    mode : int
        Mode to unfold along, ``0 <= mode < N``.

    Returns
    -------
    ndarray
        Matrix of shape ``(I_mode, prod(I_j, j != mode))``.
    """
    a = np.asarray(a)
    _check_mode(mode, a.ndim)
    return np.reshape(np.moveaxis(a, mode, 0), (a.shape[mode], -1), order="F")


def fold(m, mode, dims):
    """Inverse of :func:`unfold`: rebuild a tensor of shape `dims`."""
    dims = tuple(int(d) for d in dims)
    _check_mode(mode, len(dims))
    m = np.asarray(m)
    rest = dims[:mode] + dims[mode + 1:]
    if m.shape != (dims[mode], prod(rest)):
        raise ValueError(
            f"matrix of shape {m.shape} cannot be folded along mode {mode} into {dims}"
        )
    t = np.reshape(m, (dims[mode],) + rest, order="F")
    return np.moveaxis(t, 0, mode)


@dataclass(frozen=True)
class ObservationMask:
    """Sorted set of observed column-major linear indices over `dims`."""

    dims: tuple
    indices: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d <= 0 for d in dims):
            raise ValueError(f"invalid dims {self.dims!r}")
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        if idx.size:
            if idx[0] < 0 or idx[-1] >= prod(dims):
                raise ValueError("mask index out of range")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("mask indices must be strictly increasing")
        idx = idx.copy()
        idx.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_bool(cls, observed):
        observed = np.asarray(observed, dtype=bool)
        return cls(observed.shape, np.flatnonzero(observed.ravel(order="F")))

    @classmethod
    def full(cls, dims):
        return cls(dims, np.arange(prod(dims), dtype=np.int64))

    @classmethod
    def empty(cls, dims):
        return cls(dims, np.empty(0, dtype=np.int64))

    @property
    def size(self):
        return int(prod(self.dims))

    @property
    def count(self):
        return int(self.indices.size)

    @property
    def ratio(self):
        """Sampling ratio |Omega| / prod(dims)."""
        return self.count / self.size

    def to_bool(self):
        flat = np.zeros(self.size, dtype=bool)
        flat[self.indices] = True
        return flat.reshape(self.dims, order="F")

    def __eq__(self, other):
        if not isinstance(other, ObservationMask):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash((self.dims, self.indices.tobytes()))


def _mask_dims(a, mask):
    if tuple(a.shape) != mask.dims:
        raise ValueError(f"dimension mismatch: tensor {a.shape} vs mask {mask.dims}")


def project(a, mask):
    """Keep the observed entries of `a` and zero out the rest."""
    a = np.asarray(a, dtype=np.float64)
    _mask_dims(a, mask)
    out = np.zeros(a.size)
    out[mask.indices] = a.ravel(order="F")[mask.indices]
    return out.reshape(a.shape, order="F")


def project_complement(a, mask):
    """Zero the observed entries of `a` and keep the rest."""
    a = np.asarray(a, dtype=np.float64)
    _mask_dims(a, mask)
    out = a.ravel(order="F").copy()
    out[mask.indices] = 0.0
    return out.reshape(a.shape, order="F")


def random_mask(dims, sr, seed=None):
    """Draw ``floor(sr * prod(dims))`` entries uniformly without replacement."""
    dims = tuple(int(d) for d in dims)
    if not 0.0 < sr <= 1.0:
        raise ValueError(f"sampling ratio must lie in (0, 1], got {sr}")
    total = prod(dims)
    count = int(np.floor(sr * total))
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(total, size=count, replace=False))
    return ObservationMask(dims, idx)


def _smooth_basis(n, r, rng):
    # Lowest periodic frequencies spanning r dimensions: 1, cos t, sin t, ...
    kmax = r // 2
    t = 2.0 * np.pi * np.arange(n) / n
    cols = [np.ones(n)]
    for f in range(1, kmax + 1):
        cols += [np.cos(f * t), np.sin(f * t)]
    basis = np.stack(cols, axis=1)
    return basis @ rng.standard_normal((basis.shape[1], r))


def synth_lowrank(dims, ranks, seed=None, smooth=False):
    """Random tensor of exact multilinear rank `ranks`, in Tucker form.

    Each factor has orthonormal columns and the core is Gaussian.  With
    `smooth`, the mode-1 and mode-2 factors span low-frequency periodic
    profiles, so frontal slices (and the mode-3 encodings) are smooth images.
    The result is scaled to unit root-mean-square entry.
    """
    dims = tuple(int(d) for d in dims)
    ranks = tuple(int(r) for r in ranks)
    if len(dims) != len(ranks):
        raise ValueError("dims and ranks must have the same length")
    for d, r in zip(dims, ranks):
        if not 1 <= r <= d:
            raise ValueError(f"rank {r} invalid for dimension {d}")
    if smooth:
        for d, r in zip(dims[:2], ranks[:2]):
            if 2 * (r // 2) + 1 > d:
                raise ValueError(f"dimension {d} too small for a smooth rank-{r} factor")
    rng = np.random.default_rng(seed)
    core = rng.standard_normal(ranks)
    t = core
    for n, (d, r) in enumerate(zip(dims, ranks)):
        if smooth and n < 2:
            raw = _smooth_basis(d, r, rng)
        else:
            raw = rng.standard_normal((d, r))
        q, _ = np.linalg.qr(raw)
        shape = t.shape[:n] + (d,) + t.shape[n + 1:]
        t = fold(q @ unfold(t, n), n, shape)
    return t / np.sqrt(np.mean(t**2))


def numerical_ranks(a, rtol=1e-8):
    """Mode-n ranks counting singular values above ``rtol * sigma_max``."""
    a = np.asarray(a, dtype=np.float64)
    out = []
    for n in range(a.ndim):
        s = np.linalg.svd(unfold(a, n), compute_uv=False)
        out.append(int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0)
    return tuple(out)
