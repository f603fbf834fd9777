# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ray-marching kernels for triplane and Gaussian-blob fields.

One call renders a batch of rays end to end (optional shoulder warp, field
lookup, compositing) with the GIL released, so tiles can run on
plain Python threads.  Mirrors the numpy path in ``render.march_rays``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs, floor, sin, cos, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

DEF MAX_WIDTH = 512


cdef inline double _softplus(double x) noexcept nogil:
    return (x if x > 0.0 else 0.0) + log1p(exp(-fabs(x)))


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double e = exp(-fabs(x))
    if x >= 0.0:
        return 1.0 / (1.0 + e)
    return e / (1.0 + e)


cdef inline double _pixel(double c, int res) noexcept nogil:
    cdef double u = (c + 0.5) * (res - 1)
    if u < 0.0:
        return 0.0
    if u > res - 1:
        return res - 1.0
    return u


cdef inline void _shoulder(double* p, double theta_base, double phi_base,
                           double y_chin, double y_base, int strict) noexcept nogil:
    cdef double x = p[0], y = p[1], z = p[2]
    cdef double d, span, th, ph, c, s, x1, y1
    if y >= y_chin:
        return
    d = fabs(y - y_chin)
    span = fabs(y_base - y_chin)
    th = d / span * theta_base
    ph = d / span * phi_base
    c = cos(th)
    s = sin(th)
    x1 = c * x - s * y
    y1 = s * x + c * y
    c = cos(ph)
    s = sin(ph)
    if strict:
        p[0] = c * x1 - s * z
    else:
        p[0] = c * x1 + s * z
    p[1] = y1
    p[2] = -s * x1 + c * z


def render_triplane_tile(const float[:, :, :, ::1] planes,
                         layers,
                         const double[:, ::1] origins,
                         const double[:, ::1] dirs,
                         const double[:, ::1] ts,
                         double delta,
                         const double[::1] background,
                         warp,
                         double[:, ::1] out_rgb,
                         double[:, ::1] out_feat,
                         double[::1] out_depth,
                         double[::1] out_alpha):
    """Render ``n`` rays; returns the first ray with non-finite output or -1."""
    cdef int res = planes.shape[1]
    cdef int nch = planes.shape[3]
    cdef int n_rays = origins.shape[0]
    cdef int n_samples = ts.shape[1]
    cdef int n_layers = len(layers)
    cdef int n_out, n_extra

    dims_np = np.empty(n_layers + 1, dtype=np.intc)
    offs_np = np.empty(n_layers, dtype=np.intp)
    blobs = []
    cdef Py_ssize_t off = 0
    if nch > MAX_WIDTH:
        raise ValueError("triplane has more channels than the kernel supports")
    dims_np[0] = nch
    for i, (w, b) in enumerate(layers):
        if w.shape[1] != dims_np[i]:
            raise ValueError("MLP layer dimensions do not compose")
        if w.shape[0] > MAX_WIDTH:
            raise ValueError("MLP layer wider than kernel limit")
        dims_np[i + 1] = w.shape[0]
        offs_np[i] = off
        blobs.append(np.asarray(w, dtype=np.float64).ravel())
        blobs.append(np.asarray(b, dtype=np.float64).ravel())
        off += w.shape[0] * w.shape[1] + w.shape[0]
    cdef double[::1] params = np.ascontiguousarray(np.concatenate(blobs))
    cdef int[::1] dims = dims_np
    cdef Py_ssize_t[::1] offs = offs_np
    n_out = dims[n_layers]
    n_extra = n_out - 4
    if out_feat.shape[1] != 3 + n_extra:
        raise ValueError("feature output width does not match MLP")

    cdef int use_warp = warp is not None
    cdef double theta_base = 0.0, phi_base = 0.0, y_chin = 0.0, y_base = 0.0
    cdef int strict = 0
    if use_warp:
        theta_base, phi_base, y_chin, y_base, strict = warp

    cdef int bad = -1
    cdef int r, s, k, ch, li, o, j, c0, r0, ca, ra
    cdef double t, a, wgt, trans, alpha_acc, depth_acc, sig
    cdef double u, v, fc, fr, v00, v01, v10, v11, acc
    cdef double p[3]
    cdef double* h
    cdef double* h2
    cdef double* tmp
    cdef double* feat_acc
    cdef double rgb_acc[3]
    cdef double rgb_s[3]
    cdef const float* base
    cdef Py_ssize_t row_stride = res * nch
    cdef Py_ssize_t plane_stride = res * row_stride
    cdef const float* pl = &planes[0, 0, 0, 0]
    cdef double* prm = &params[0]

    with nogil:
        h = <double*> malloc(MAX_WIDTH * sizeof(double))
        h2 = <double*> malloc(MAX_WIDTH * sizeof(double))
        feat_acc = <double*> malloc((n_extra + 1) * sizeof(double))
        for r in range(n_rays):
            trans = 1.0
            alpha_acc = 0.0
            depth_acc = 0.0
            rgb_acc[0] = 0.0
            rgb_acc[1] = 0.0
            rgb_acc[2] = 0.0
            for j in range(n_extra):
                feat_acc[j] = 0.0
            for s in range(n_samples):
                t = ts[r, s]
                p[0] = origins[r, 0] + t * dirs[r, 0]
                p[1] = origins[r, 1] + t * dirs[r, 1]
                p[2] = origins[r, 2] + t * dirs[r, 2]
                if use_warp:
                    _shoulder(p, theta_base, phi_base, y_chin, y_base, strict)
                for ch in range(nch):
                    h[ch] = 0.0
                for k in range(3):
                    if k == 0:
                        ca = 0
                        ra = 1
                    elif k == 1:
                        ca = 0
                        ra = 2
                    else:
                        ca = 1
                        ra = 2
                    u = _pixel(p[ca], res)
                    v = _pixel(p[ra], res)
                    c0 = <int> floor(u)
                    if c0 > res - 2:
                        c0 = res - 2
                    r0 = <int> floor(v)
                    if r0 > res - 2:
                        r0 = res - 2
                    fc = u - c0
                    fr = v - r0
                    base = pl + k * plane_stride + r0 * row_stride + c0 * nch
                    for ch in range(nch):
                        v00 = base[ch]
                        v01 = base[nch + ch]
                        v10 = base[row_stride + ch]
                        v11 = base[row_stride + nch + ch]
                        h[ch] = h[ch] + ((v00 * (1.0 - fc) + v01 * fc) * (1.0 - fr)
                                         + (v10 * (1.0 - fc) + v11 * fc) * fr)
                for ch in range(nch):
                    h[ch] = h[ch] / 3.0
                for li in range(n_layers):
                    for o in range(dims[li + 1]):
                        acc = 0.0
                        for j in range(dims[li]):
                            acc = acc + prm[offs[li] + o * dims[li] + j] * h[j]
                        acc = acc + prm[offs[li] + dims[li + 1] * dims[li] + o]
                        if li < n_layers - 1 and acc <= 0.0:
                            acc = 0.01 * acc
                        h2[o] = acc
                    tmp = h
                    h = h2
                    h2 = tmp
                sig = _softplus(h[0])
                rgb_s[0] = _sigmoid(h[1])
                rgb_s[1] = _sigmoid(h[2])
                rgb_s[2] = _sigmoid(h[3])
                if not isfinite(sig) and bad < 0:
                    bad = r
                a = 1.0 - exp(-sig * delta)
                wgt = trans * a
                alpha_acc = alpha_acc + wgt
                depth_acc = depth_acc + wgt * t
                rgb_acc[0] = rgb_acc[0] + wgt * rgb_s[0]
                rgb_acc[1] = rgb_acc[1] + wgt * rgb_s[1]
                rgb_acc[2] = rgb_acc[2] + wgt * rgb_s[2]
                for j in range(n_extra):
                    feat_acc[j] = feat_acc[j] + wgt * h[4 + j]
                trans = trans * (1.0 - a)
            for j in range(3):
                out_rgb[r, j] = rgb_acc[j] + trans * background[j]
                out_feat[r, j] = out_rgb[r, j]
            for j in range(n_extra):
                out_feat[r, 3 + j] = feat_acc[j]
            out_alpha[r] = alpha_acc
            out_depth[r] = depth_acc / (alpha_acc if alpha_acc > 1e-8 else 1e-8)
            if bad < 0 and not (isfinite(out_rgb[r, 0]) and isfinite(out_rgb[r, 1])
                                and isfinite(out_rgb[r, 2]) and isfinite(out_depth[r])):
                bad = r
        free(h)
        free(h2)
        free(feat_acc)
    return bad


def render_blob_tile(const double[:, ::1] blobs,
                     const double[:, ::1] origins,
                     const double[:, ::1] dirs,
                     const double[:, ::1] ts,
                     double delta,
                     const double[::1] background,
                     warp,
                     double[:, ::1] out_rgb,
                     double[::1] out_depth,
                     double[::1] out_alpha):
    """Render rays through a Gaussian blob field.

    ``blobs`` rows are ``(cx, cy, cz, sx, sy, sz, peak, r, g, b)``.  Colour is
    the density-weighted blob colour; extra feature channels are zero and
    are filled in by the caller.
    """
    cdef int n_rays = origins.shape[0]
    cdef int n_samples = ts.shape[1]
    cdef int n_blobs = blobs.shape[0]
    cdef int use_warp = warp is not None
    cdef double theta_base = 0.0, phi_base = 0.0, y_chin = 0.0, y_base = 0.0
    cdef int strict = 0
    if use_warp:
        theta_base, phi_base, y_chin, y_base, strict = warp
    cdef int bad = -1
    cdef int r, s, k, j
    cdef double t, a, wgt, trans, alpha_acc, depth_acc, sig, sk, zx, zy, zz
    cdef double p[3]
    cdef double wc[3]
    cdef double rgb_acc[3]
    with nogil:
        for r in range(n_rays):
            trans = 1.0
            alpha_acc = 0.0
            depth_acc = 0.0
            rgb_acc[0] = 0.0
            rgb_acc[1] = 0.0
            rgb_acc[2] = 0.0
            for s in range(n_samples):
                t = ts[r, s]
                p[0] = origins[r, 0] + t * dirs[r, 0]
                p[1] = origins[r, 1] + t * dirs[r, 1]
                p[2] = origins[r, 2] + t * dirs[r, 2]
                if use_warp:
                    _shoulder(p, theta_base, phi_base, y_chin, y_base, strict)
                sig = 0.0
                wc[0] = 0.0
                wc[1] = 0.0
                wc[2] = 0.0
                for k in range(n_blobs):
                    zx = (p[0] - blobs[k, 0]) / blobs[k, 3]
                    zy = (p[1] - blobs[k, 1]) / blobs[k, 4]
                    zz = (p[2] - blobs[k, 2]) / blobs[k, 5]
                    sk = blobs[k, 6] * exp(-0.5 * (zx * zx + zy * zy + zz * zz))
                    sig = sig + sk
                    wc[0] = wc[0] + sk * blobs[k, 7]
                    wc[1] = wc[1] + sk * blobs[k, 8]
                    wc[2] = wc[2] + sk * blobs[k, 9]
                if not isfinite(sig) and bad < 0:
                    bad = r
                a = 1.0 - exp(-sig * delta)
                wgt = trans * a
                alpha_acc = alpha_acc + wgt
                depth_acc = depth_acc + wgt * t
                if sig > 0.0:
                    rgb_acc[0] = rgb_acc[0] + wgt * (wc[0] / sig)
                    rgb_acc[1] = rgb_acc[1] + wgt * (wc[1] / sig)
                    rgb_acc[2] = rgb_acc[2] + wgt * (wc[2] / sig)
                trans = trans * (1.0 - a)
            for j in range(3):
                out_rgb[r, j] = rgb_acc[j] + trans * background[j]
            out_alpha[r] = alpha_acc
            out_depth[r] = depth_acc / (alpha_acc if alpha_acc > 1e-8 else 1e-8)
            if bad < 0 and not (isfinite(out_rgb[r, 0]) and isfinite(out_rgb[r, 1])
                                and isfinite(out_rgb[r, 2]) and isfinite(out_depth[r])):
                bad = r
    return bad
