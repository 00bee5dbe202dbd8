"""Picture quality indices computed per frontal slice.

A frontal slice is ``t[:, :, k]`` after all trailing modes are flattened
(column-major), so an ``I1 x I2 x I3 x I4`` tensor has ``I3 * I4`` slices.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "PSNR_CAP",
    "frontal_slices",
    "psnr",
    "ssim",
    "ergas",
    "sam",
    "MetricsReport",
    "evaluate",
]

PSNR_CAP = 99.0


def frontal_slices(t):
    t = np.asarray(t, dtype=np.float64)
    if t.ndim < 2:
        raise ValueError("need at least a 2-D array")
    return np.reshape(t, t.shape[:2] + (-1,), order="F")


def _pair(ref, est):
    ref = np.asarray(ref, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    if ref.shape != est.shape:
        raise ValueError(f"dimension mismatch: {ref.shape} vs {est.shape}")
    return frontal_slices(ref), frontal_slices(est)


def psnr(ref, est, peak=None):
    """Per-slice PSNR in dB and its mean.

    `peak` defaults to ``max |ref|`` over the whole reference; slices with
    zero error are reported at ``PSNR_CAP``.
    """
    r, e = _pair(ref, est)
    if peak is None:
        peak = float(np.max(np.abs(r)))
    mse = np.mean((r - e) ** 2, axis=(0, 1))
    vals = np.full(mse.shape, PSNR_CAP)
    nz = mse > 0
    with np.errstate(divide="ignore"):
        vals[nz] = np.minimum(10.0 * np.log10(peak**2 / mse[nz]), PSNR_CAP)
    return vals, float(np.mean(vals))


def _gaussian_window(size=11, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _filter_valid(img, w):
    win = sliding_window_view(img, w.shape)
    return np.einsum("ijkl,kl->ij", win, w)


def ssim(ref, est, data_range=None, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Per-slice SSIM with a Gaussian window, and its mean.

    Local statistics use only fully contained windows.  Slices smaller than
    the window fall back to a single global-statistics SSIM per slice.
    The dynamic range defaults to ``max(ref) - min(ref)`` over the tensor.
    """
    r, e = _pair(ref, est)
    if data_range is None:
        data_range = float(np.max(r) - np.min(r)) or 1.0
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    vals = np.empty(r.shape[2])
    small = r.shape[0] < window or r.shape[1] < window
    w = _gaussian_window(window, sigma)
    for k in range(r.shape[2]):
        x, y = r[:, :, k], e[:, :, k]
        if small:
            mx, my = x.mean(), y.mean()
            vx, vy = x.var(), y.var()
            cxy = np.mean((x - mx) * (y - my))
        else:
            mx, my = _filter_valid(x, w), _filter_valid(y, w)
            vx = _filter_valid(x * x, w) - mx**2
            vy = _filter_valid(y * y, w) - my**2
            cxy = _filter_valid(x * y, w) - mx * my
        smap = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
        vals[k] = np.mean(smap)
    return vals, float(np.mean(vals))


def _band_means(r):
    means = np.mean(r, axis=(0, 1))
    zero = means == 0
    if np.any(zero):
        warnings.warn(f"{int(zero.sum())} reference slice(s) have zero mean; using eps", RuntimeWarning)
        means = np.where(zero, np.finfo(float).eps, means)
    return means


def ergas_per_slice(ref, est, sr_scale=1.0):
    r, e = _pair(ref, est)
    mse = np.mean((r - e) ** 2, axis=(0, 1))
    return 100.0 * sr_scale * np.sqrt(mse / _band_means(r) ** 2)


def ergas(ref, est, sr_scale=1.0):
    """Global ERGAS over frontal slices (bands)."""
    r, e = _pair(ref, est)
    mse = np.mean((r - e) ** 2, axis=(0, 1))
    return float(100.0 * sr_scale * np.sqrt(np.mean(mse / _band_means(r) ** 2)))


def sam(ref, est):
    """Mean spectral angle, in degrees, between mode-3 fibers.

    Uses ``2 atan2(|u' - v'|, |u' + v'|)`` on unit fibers, which stays
    accurate near 0 and 180 degrees.  Fibers where either input is zero
    contribute 0.
    """
    r, e = _pair(ref, est)
    u = r.reshape(-1, r.shape[2])
    v = e.reshape(-1, e.shape[2])
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    ok = (nu > 0) & (nv > 0)
    if not np.all(ok):
        warnings.warn(f"{int((~ok).sum())} zero-norm fiber(s) in SAM contribute 0", RuntimeWarning)
    ang = np.zeros(u.shape[0])
    uu = u[ok] / nu[ok, None]
    vv = v[ok] / nv[ok, None]
    ang[ok] = 2.0 * np.arctan2(np.linalg.norm(uu - vv, axis=1), np.linalg.norm(uu + vv, axis=1))
    return float(np.degrees(np.mean(ang)))


@dataclass
class MetricsReport:
    """Per-slice PQIs with their means; SAM is a single spatial average."""

    psnr: np.ndarray
    ssim: np.ndarray
    ergas: np.ndarray
    sam: float
    ergas_global: float
    meta: dict = field(default_factory=dict)

    COLUMNS = ("slice", "psnr", "ssim", "ergas", "sam")

    @property
    def means(self):
        return {
            "psnr": float(np.mean(self.psnr)),
            "ssim": float(np.mean(self.ssim)),
            "ergas": float(np.mean(self.ergas)),
            "sam": float(self.sam),
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for k in range(len(self.psnr)):
            w.writerow([k + 1, repr(float(self.psnr[k])), repr(float(self.ssim[k])),
                        repr(float(self.ergas[k])), ""])
        m = self.means
        w.writerow(["MEAN", repr(m["psnr"]), repr(m["ssim"]), repr(m["ergas"]), repr(m["sam"])])
        return buf.getvalue()

    def to_json(self):
        doc = {
            "mean": self.means,
            "ergas_global": self.ergas_global,
            "per_slice": {
                "psnr": [float(v) for v in self.psnr],
                "ssim": [float(v) for v in self.ssim],
                "ergas": [float(v) for v in self.ergas],
            },
            "meta": self.meta,
        }
        return json.dumps(doc, indent=2)


def evaluate(ref, est, peak=None, sr_scale=1.0, meta=None):
    p, _ = psnr(ref, est, peak=peak)
    s, _ = ssim(ref, est)
    return MetricsReport(
        psnr=p, ssim=s,
        ergas=ergas_per_slice(ref, est, sr_scale),
        sam=sam(ref, est),
        ergas_global=ergas(ref, est, sr_scale),
        meta=dict(meta or {}),
    )
