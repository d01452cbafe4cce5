"""Hot numeric kernels, in two interchangeable backends.

Every kernel has a pure-numpy implementation and a numba ``@njit`` loop
implementation producing the same values up to floating-point summation
order. ``_backend`` picks the active set at import time; both stay
importable through :func:`get_kernels` for the equivalence tests and the
backend benchmark.

Kernel contracts (all arrays are C-contiguous float64 unless noted):

* ``resize_bilinear(src, out_h, out_w)`` -- half-pixel-center bilinear
  resampling with edge clamping.
* ``assign_nearest(x, centroids)`` -- exact nearest centroid per row,
  ties to the lowest index; returns ``(idx int64, squared_dist)``.
* ``gmm_log_joint(x, means, variances, log_weights)`` -- ``(n, k)`` matrix
  of ``log w_k + log N(x | mean_k, diag(var_k))``.
* ``sift_grid(m0, b0, m1, b1, xs, ys, patch, n_cells, n_bins)`` -- spatial
  bilinear binning of per-pixel orientation votes into ``n_cells^2 x
  n_bins`` histograms, one per patch, patches scanned rows-first.
* ``fv_sums(x, resp)`` -- responsibility-weighted sums ``(sum_r, sum_rx,
  sum_rx2)`` used by the Fisher encoding.
* ``vlad_sums(x, idx, k)`` -- per-cluster sums of assigned vectors.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._backend import HAVE_NUMBA, USE_NUMBA

_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# numpy implementations


def _resize_bilinear_numpy(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = src.shape
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    np.clip(ys, 0.0, h - 1.0, out=ys)
    np.clip(xs, 0.0, w - 1.0, out=xs)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    a = src[y0[:, None], x0[None, :]]
    b = src[y0[:, None], x1[None, :]]
    c = src[y1[:, None], x0[None, :]]
    d = src[y1[:, None], x1[None, :]]
    return (
        (1.0 - fy) * (1.0 - fx) * a
        + (1.0 - fy) * fx * b
        + fy * (1.0 - fx) * c
        + fy * fx * d
    )


def _assign_nearest_numpy(x: np.ndarray, centroids: np.ndarray):
    n = x.shape[0]
    k = centroids.shape[0]
    idx = np.empty(n, dtype=np.int64)
    d2 = np.empty(n, dtype=np.float64)
    c2 = np.einsum("kd,kd->k", centroids, centroids)
    block = max(1, (1 << 22) // max(k, 1))
    for s in range(0, n, block):
        e = min(s + block, n)
        xb = x[s:e]
        dist = xb @ centroids.T
        dist *= -2.0
        dist += np.einsum("nd,nd->n", xb, xb)[:, None]
        dist += c2[None, :]
        best = np.argmin(dist, axis=1)
        idx[s:e] = best
        # exact distance of the winner (the expanded form above is only
        # accurate to roundoff; a duplicate must report exactly zero)
        diff = xb - centroids[best]
        d2[s:e] = np.einsum("nd,nd->n", diff, diff)
    return idx, d2


def _gmm_log_joint_numpy(
    x: np.ndarray,
    means: np.ndarray,
    variances: np.ndarray,
    log_weights: np.ndarray,
) -> np.ndarray:
    inv_v = 1.0 / variances
    const = log_weights - 0.5 * (
        variances.shape[1] * _LOG_2PI + np.log(variances).sum(axis=1)
    )
    quad = (x * x) @ inv_v.T
    quad -= 2.0 * (x @ (means * inv_v).T)
    quad += np.einsum("kd,kd->k", means * means, inv_v)[None, :]
    return const[None, :] - 0.5 * quad


def _cell_weight_matrix(patch: int, n_cells: int) -> np.ndarray:
    """(patch*patch, n_cells*n_cells) bilinear cell weights per pixel offset."""
    cell = patch / n_cells
    weights = np.zeros((patch * patch, n_cells * n_cells))
    for dy in range(patch):
        v = (dy + 0.5) / cell - 0.5
        cy0 = math.floor(v)
        fy = v - cy0
        for cy, wy in ((cy0, 1.0 - fy), (cy0 + 1, fy)):
            if wy == 0.0 or not 0 <= cy < n_cells:
                continue
            for dx in range(patch):
                u = (dx + 0.5) / cell - 0.5
                cx0 = math.floor(u)
                fx = u - cx0
                for cx, wx in ((cx0, 1.0 - fx), (cx0 + 1, fx)):
                    if wx == 0.0 or not 0 <= cx < n_cells:
                        continue
                    weights[dy * patch + dx, cy * n_cells + cx] += wy * wx
    return weights


def _sift_grid_numpy(m0, b0, m1, b1, xs, ys, patch, n_cells, n_bins):
    cell_w = _cell_weight_matrix(patch, n_cells)
    n_patches = len(ys) * len(xs)
    out = np.zeros((n_patches, n_cells * n_cells, n_bins))
    for mag, bins in ((m0, b0), (m1, b1)):
        for ob in range(n_bins):
            contrib = np.where(bins == ob, mag, 0.0)
            win = sliding_window_view(contrib, (patch, patch))[ys][:, xs]
            flat = win.reshape(n_patches, patch * patch)
            out[:, :, ob] += flat @ cell_w
    return out.reshape(n_patches, n_cells * n_cells * n_bins)


def _fv_sums_numpy(x: np.ndarray, resp: np.ndarray):
    s0 = resp.sum(axis=0)
    s1 = resp.T @ x
    s2 = resp.T @ (x * x)
    return s0, s1, s2


def _vlad_sums_numpy(x: np.ndarray, idx: np.ndarray, k: int) -> np.ndarray:
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, idx, x)
    return sums


# ---------------------------------------------------------------------------
# loop implementations (numba-jitted when the backend is active)


def _resize_bilinear_loops(src, out_h, out_w):
    h, w = src.shape
    out = np.empty((out_h, out_w))
    sy = h / out_h
    sx = w / out_w
    for i in range(out_h):
        y = (i + 0.5) * sy - 0.5
        if y < 0.0:
            y = 0.0
        if y > h - 1.0:
            y = h - 1.0
        y0 = int(math.floor(y))
        fy = y - y0
        y1 = y0 + 1 if y0 + 1 < h else h - 1
        for j in range(out_w):
            x = (j + 0.5) * sx - 0.5
            if x < 0.0:
                x = 0.0
            if x > w - 1.0:
                x = w - 1.0
            x0 = int(math.floor(x))
            fx = x - x0
            x1 = x0 + 1 if x0 + 1 < w else w - 1
            out[i, j] = (
                (1.0 - fy) * (1.0 - fx) * src[y0, x0]
                + (1.0 - fy) * fx * src[y0, x1]
                + fy * (1.0 - fx) * src[y1, x0]
                + fy * fx * src[y1, x1]
            )
    return out


def _assign_nearest_loops(x, centroids):
    # |x - c|^2 = |x|^2 + |c|^2 - 2 x.c ; the product goes through BLAS
    # (numba lowers np.dot there) and the argmin epilogue is fused.
    n, d = x.shape
    k = centroids.shape[0]
    idx = np.empty(n, dtype=np.int64)
    d2 = np.empty(n, dtype=np.float64)
    c2 = np.empty(k)
    for j in range(k):
        s = 0.0
        for m in range(d):
            s += centroids[j, m] * centroids[j, m]
        c2[j] = s
    xc = np.dot(np.ascontiguousarray(x), np.ascontiguousarray(centroids.T))
    for i in range(n):
        s = 0.0
        for m in range(d):
            s += x[i, m] * x[i, m]
        best = 0
        best_d = np.inf
        for j in range(k):
            dist = s + c2[j] - 2.0 * xc[i, j]
            if dist < best_d:
                best_d = dist
                best = j
        # exact distance of the winner; the expanded form is only
        # accurate to roundoff and a duplicate must report exactly zero
        exact = 0.0
        for m in range(d):
            t = x[i, m] - centroids[best, m]
            exact += t * t
        idx[i] = best
        d2[i] = exact
    return idx, d2


def _gmm_log_joint_loops(x, means, variances, log_weights):
    # quadratic form expanded so both products go through BLAS
    n, d = x.shape
    k = means.shape[0]
    const = np.empty(k)
    m2v = np.empty((d, k))
    for j in range(k):
        s_log = 0.0
        s_m2 = 0.0
        for m in range(d):
            v = variances[j, m]
            s_log += math.log(v)
            s_m2 += means[j, m] * means[j, m] / v
            m2v[m, j] = means[j, m] / v
        const[j] = log_weights[j] - 0.5 * (d * _LOG_2PI + s_log) - 0.5 * s_m2
    inv_v_t = np.empty((d, k))
    for j in range(k):
        for m in range(d):
            inv_v_t[m, j] = 1.0 / variances[j, m]
    x2 = x * x
    quad = np.dot(np.ascontiguousarray(x2), inv_v_t)
    cross = np.dot(np.ascontiguousarray(x), m2v)
    out = np.empty((n, k))
    for i in range(n):
        for j in range(k):
            out[i, j] = const[j] - 0.5 * quad[i, j] + cross[i, j]
    return out


def _sift_grid_loops(m0, b0, m1, b1, xs, ys, patch, n_cells, n_bins):
    n_patches = len(ys) * len(xs)
    hist_len = n_cells * n_cells * n_bins
    out = np.zeros((n_patches, hist_len))
    cell = patch / n_cells
    p = 0
    for yi in range(len(ys)):
        top = ys[yi]
        for xi in range(len(xs)):
            left = xs[xi]
            for dy in range(patch):
                v = (dy + 0.5) / cell - 0.5
                cy0 = int(math.floor(v))
                fy = v - cy0
                for dx in range(patch):
                    u = (dx + 0.5) / cell - 0.5
                    cx0 = int(math.floor(u))
                    fx = u - cx0
                    gy = top + dy
                    gx = left + dx
                    for pair in range(2):
                        if pair == 0:
                            mag = m0[gy, gx]
                            ob = b0[gy, gx]
                        else:
                            mag = m1[gy, gx]
                            ob = b1[gy, gx]
                        if mag == 0.0:
                            continue
                        for cy in (cy0, cy0 + 1):
                            if cy < 0 or cy >= n_cells:
                                continue
                            wy = 1.0 - fy if cy == cy0 else fy
                            for cx in (cx0, cx0 + 1):
                                if cx < 0 or cx >= n_cells:
                                    continue
                                wx = 1.0 - fx if cx == cx0 else fx
                                out[p, (cy * n_cells + cx) * n_bins + ob] += (
                                    mag * wy * wx
                                )
            p += 1
    return out


def _fv_sums_loops(x, resp):
    n, d = x.shape
    k = resp.shape[1]
    s0 = np.zeros(k)
    for i in range(n):
        for j in range(k):
            s0[j] += resp[i, j]
    # transpose the (d, n) side: far smaller copy than resp.T
    xt = np.ascontiguousarray(x.T)
    s1t = np.dot(xt, resp)
    s2t = np.dot(xt * xt, resp)
    return s0, s1t.T, s2t.T


def _vlad_sums_loops(x, idx, k):
    n, d = x.shape
    sums = np.zeros((k, d))
    for i in range(n):
        j = idx[i]
        for m in range(d):
            sums[j, m] += x[i, m]
    return sums


_KERNEL_NAMES = (
    "resize_bilinear",
    "assign_nearest",
    "gmm_log_joint",
    "sift_grid",
    "fv_sums",
    "vlad_sums",
)

_NUMPY_KERNELS = {
    "resize_bilinear": _resize_bilinear_numpy,
    "assign_nearest": _assign_nearest_numpy,
    "gmm_log_joint": _gmm_log_joint_numpy,
    "sift_grid": _sift_grid_numpy,
    "fv_sums": _fv_sums_numpy,
    "vlad_sums": _vlad_sums_numpy,
}

_NUMBA_KERNELS = None
if HAVE_NUMBA:
    from numba import njit

    _NUMBA_KERNELS = {
        "resize_bilinear": njit(cache=True)(_resize_bilinear_loops),
        "assign_nearest": njit(cache=True)(_assign_nearest_loops),
        "gmm_log_joint": njit(cache=True)(_gmm_log_joint_loops),
        "sift_grid": njit(cache=True)(_sift_grid_loops),
        "fv_sums": njit(cache=True)(_fv_sums_loops),
        "vlad_sums": njit(cache=True)(_vlad_sums_loops),
    }


def get_kernels(backend: str) -> dict:
    """Kernel set for ``backend`` ("numpy" or "numba"), for benchmarks/tests."""
    if backend == "numpy":
        return dict(_NUMPY_KERNELS)
    if backend == "numba":
        if _NUMBA_KERNELS is None:
            raise RuntimeError("numba backend unavailable (not installed or disabled)")
        return dict(_NUMBA_KERNELS)
    raise ValueError(f"unknown backend {backend!r}")


_ACTIVE = _NUMBA_KERNELS if USE_NUMBA and _NUMBA_KERNELS is not None else _NUMPY_KERNELS

resize_bilinear = _ACTIVE["resize_bilinear"]
assign_nearest = _ACTIVE["assign_nearest"]
gmm_log_joint = _ACTIVE["gmm_log_joint"]
sift_grid = _ACTIVE["sift_grid"]
fv_sums = _ACTIVE["fv_sums"]
vlad_sums = _ACTIVE["vlad_sums"]
