# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: window entropy, kd-tree KNN queries, and the
tile-based compositing forward/backward.  Mirrors entrosplat._pure."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp
from libc.stdlib cimport free, malloc

cnp.import_array()


# ---------------------------------------------------------------------------
# local window entropy
# ---------------------------------------------------------------------------

def entropy_map(cnp.int32_t[:, ::1] padded, int n, double[::1] table, int levels):
    cdef int hp = padded.shape[0]
    cdef int wp = padded.shape[1]
    cdef int h = hp - n + 1
    cdef int w = wp - n + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((h, w))
    cdef double[:, ::1] outv = out
    cdef int* counts = <int*> malloc(levels * sizeof(int))
    cdef int* touched = <int*> malloc(n * n * sizeof(int))
    if counts == NULL or touched == NULL:
        free(counts)
        free(touched)
        raise MemoryError()
    cdef int i, j, wy, wx, b, ntouch, k, pos, tmp
    cdef double acc
    for b in range(levels):
        counts[b] = 0
    with nogil:
        for i in range(h):
            for j in range(w):
                ntouch = 0
                for wy in range(n):
                    for wx in range(n):
                        b = padded[i + wy, j + wx]
                        if counts[b] == 0:
                            touched[ntouch] = b
                            ntouch += 1
                        counts[b] += 1
                # ascending bin order keeps the sum on the same float grid
                # as the numpy fallback's sorted-run scan
                for k in range(1, ntouch):
                    tmp = touched[k]
                    pos = k
                    while pos > 0 and touched[pos - 1] > tmp:
                        touched[pos] = touched[pos - 1]
                        pos -= 1
                    touched[pos] = tmp
                acc = 0.0
                for k in range(ntouch):
                    acc = acc + table[counts[touched[k]]]
                    counts[touched[k]] = 0
                outv[i, j] = 0.0 - acc
    free(counts)
    free(touched)
    return out


# ---------------------------------------------------------------------------
# kd-tree KNN query
# ---------------------------------------------------------------------------

cdef inline double _mindist2(double[:, ::1] bbox, int node, double qx, double qy, double qz) nogil:
    cdef double d2 = 0.0
    cdef double d
    d = bbox[node, 0] - qx
    if qx - bbox[node, 1] > d:
        d = qx - bbox[node, 1]
    if d > 0.0:
        d2 += d * d
    d = bbox[node, 2] - qy
    if qy - bbox[node, 3] > d:
        d = qy - bbox[node, 3]
    if d > 0.0:
        d2 += d * d
    d = bbox[node, 4] - qz
    if qz - bbox[node, 5] > d:
        d = qz - bbox[node, 5]
    if d > 0.0:
        d2 += d * d
    return d2


cdef void _kd_visit(double[:, ::1] pts, cnp.int32_t[::1] ids,
                    cnp.int32_t[::1] left, cnp.int32_t[::1] right,
                    cnp.int32_t[::1] start, cnp.int32_t[::1] end,
                    double[:, ::1] bbox, int node,
                    double qx, double qy, double qz, int exclude, int k,
                    double* best_d, int* best_i, int* count) nogil:
    cdef int row, pid, pos
    cdef double dx, dy, dz, d2, ml, mr
    cdef int lc, rc, first, second
    if left[node] < 0:
        for row in range(start[node], end[node]):
            pid = ids[row]
            if pid == exclude:
                continue
            dx = pts[row, 0] - qx
            dy = pts[row, 1] - qy
            dz = pts[row, 2] - qz
            d2 = dx * dx + dy * dy + dz * dz
            if count[0] == k:
                if d2 > best_d[k - 1] or (d2 == best_d[k - 1] and pid > best_i[k - 1]):
                    continue
                count[0] = k - 1
            # insert keeping ascending (d2, id)
            pos = count[0]
            while pos > 0 and (best_d[pos - 1] > d2 or (best_d[pos - 1] == d2 and best_i[pos - 1] > pid)):
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = d2
            best_i[pos] = pid
            count[0] += 1
    else:
        lc = left[node]
        rc = right[node]
        ml = _mindist2(bbox, lc, qx, qy, qz)
        mr = _mindist2(bbox, rc, qx, qy, qz)
        if ml <= mr:
            first = lc
            second = rc
        else:
            first = rc
            second = lc
            ml, mr = mr, ml
        if not (count[0] == k and ml > best_d[k - 1]):
            _kd_visit(pts, ids, left, right, start, end, bbox, first, qx, qy, qz, exclude, k, best_d, best_i, count)
        if not (count[0] == k and mr > best_d[k - 1]):
            _kd_visit(pts, ids, left, right, start, end, bbox, second, qx, qy, qz, exclude, k, best_d, best_i, count)


def kd_query_batch(double[:, ::1] pts, cnp.int32_t[::1] ids,
                   cnp.int32_t[::1] left, cnp.int32_t[::1] right,
                   cnp.int32_t[::1] start, cnp.int32_t[::1] end,
                   double[:, ::1] bbox, double[:, ::1] queries,
                   cnp.int64_t[::1] excludes, int k):
    cdef int m = queries.shape[0]
    cdef cnp.ndarray[cnp.int32_t, ndim=2] out_id = np.full((m, max(k, 1)), -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_d2 = np.full((m, max(k, 1)), np.inf)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] counts = np.zeros(m, dtype=np.int32)
    if k == 0:
        return out_id[:, :0], out_d2[:, :0], counts
    cdef cnp.int32_t[:, ::1] oid = out_id
    cdef double[:, ::1] od2 = out_d2
    cdef cnp.int32_t[::1] cnt = counts
    cdef double* best_d = <double*> malloc(k * sizeof(double))
    cdef int* best_i = <int*> malloc(k * sizeof(int))
    if best_d == NULL or best_i == NULL:
        free(best_d)
        free(best_i)
        raise MemoryError()
    cdef int i, j, found
    with nogil:
        for i in range(m):
            found = 0
            _kd_visit(pts, ids, left, right, start, end, bbox, 0,
                      queries[i, 0], queries[i, 1], queries[i, 2],
                      <int> excludes[i], k, best_d, best_i, &found)
            cnt[i] = found
            for j in range(found):
                od2[i, j] = best_d[j]
                oid[i, j] = best_i[j]
    free(best_d)
    free(best_i)
    return out_id, out_d2, counts


# ---------------------------------------------------------------------------
# tile compositing
# ---------------------------------------------------------------------------

def composite_forward(cnp.int32_t[::1] order, cnp.int64_t[::1] tile_start,
                      int tiles_x, int tiles_y, int tile_size,
                      double[:, ::1] mean2d, double[:, ::1] conic,
                      double[:, ::1] color, double[::1] opacity,
                      double[::1] depth, double[::1] radius,
                      int height, int width, double[::1] background,
                      double cutoff, double term_eps, bint training):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] img = np.empty((height, width, 3))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] depth_img = np.zeros((height, width))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] alpha = np.zeros((height, width))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] t_final_arr = np.ones((height, width)) if training else None
    cdef cnp.ndarray[cnp.int32_t, ndim=2] n_seen_arr = np.zeros((height, width), dtype=np.int32) if training else None

    cdef double[:, :, ::1] imgv = img
    cdef double[:, ::1] depthv = depth_img
    cdef double[:, ::1] alphav = alpha
    cdef double[:, ::1] tfv = t_final_arr if training else None
    cdef cnp.int32_t[:, ::1] nsv = n_seen_arr if training else None

    cdef int ty, tx, t, y0, y1, x0, x1, py, px, p, seen
    cdef cnp.int64_t s, e, idx
    cdef double T, cr, cg, cb, dsum, dx, dy, q, f, g, w
    cdef double bg0 = background[0], bg1 = background[1], bg2 = background[2]

    with nogil:
        for ty in range(tiles_y):
            y0 = ty * tile_size
            y1 = (ty + 1) * tile_size
            if y1 > height:
                y1 = height
            for tx in range(tiles_x):
                t = ty * tiles_x + tx
                s = tile_start[t]
                e = tile_start[t + 1]
                x0 = tx * tile_size
                x1 = (tx + 1) * tile_size
                if x1 > width:
                    x1 = width
                for py in range(y0, y1):
                    for px in range(x0, x1):
                        T = 1.0
                        cr = 0.0
                        cg = 0.0
                        cb = 0.0
                        dsum = 0.0
                        seen = 0
                        for idx in range(s, e):
                            if T < term_eps:
                                break
                            seen += 1
                            p = order[idx]
                            dx = px - mean2d[p, 0]
                            dy = py - mean2d[p, 1]
                            if dx > radius[p] or -dx > radius[p] or dy > radius[p] or -dy > radius[p]:
                                continue
                            q = conic[p, 0] * dx * dx + 2.0 * conic[p, 1] * (dx * dy) + conic[p, 2] * dy * dy
                            g = exp(-0.5 * q)
                            f = opacity[p] * g
                            if f < cutoff:
                                continue
                            w = f * T
                            cr += w * color[p, 0]
                            cg += w * color[p, 1]
                            cb += w * color[p, 2]
                            dsum += w * depth[p]
                            T *= 1.0 - f
                        imgv[py, px, 0] = cr + T * bg0
                        imgv[py, px, 1] = cg + T * bg1
                        imgv[py, px, 2] = cb + T * bg2
                        depthv[py, px] = dsum
                        alphav[py, px] = 1.0 - T
                        if training:
                            tfv[py, px] = T
                            nsv[py, px] = seen
    return img, depth_img, alpha, t_final_arr, n_seen_arr


def composite_backward(cnp.int32_t[::1] order, cnp.int64_t[::1] tile_start,
                       int tiles_x, int tiles_y, int tile_size,
                       double[:, ::1] mean2d, double[:, ::1] conic,
                       double[:, ::1] color, double[::1] opacity,
                       double[::1] depth, double[::1] radius,
                       int height, int width, double[::1] background,
                       double cutoff, double term_eps,
                       double[:, ::1] t_final, cnp.int32_t[:, ::1] n_seen,
                       double[:, :, ::1] d_img):
    cdef int m_total = mean2d.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d_mean = np.zeros((m_total, 2))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d_conic = np.zeros((m_total, 3))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d_opacity = np.zeros(m_total)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d_color = np.zeros((m_total, 3))
    cdef double[:, ::1] dmv = d_mean
    cdef double[:, ::1] dcv = d_conic
    cdef double[::1] dov = d_opacity
    cdef double[:, ::1] dclv = d_color

    cdef int ty, tx, t, y0, y1, x0, x1, py, px, p
    cdef cnp.int64_t s, e, idx, last
    cdef double T, sr, sg, sb, dx, dy, q, f, g, w, one_minus, tb
    cdef double glr, glg, glb, df, dgq
    cdef double bg0 = background[0], bg1 = background[1], bg2 = background[2]

    with nogil:
        for ty in range(tiles_y):
            y0 = ty * tile_size
            y1 = (ty + 1) * tile_size
            if y1 > height:
                y1 = height
            for tx in range(tiles_x):
                t = ty * tiles_x + tx
                s = tile_start[t]
                e = tile_start[t + 1]
                if s == e:
                    continue
                x0 = tx * tile_size
                x1 = (tx + 1) * tile_size
                if x1 > width:
                    x1 = width
                for py in range(y0, y1):
                    for px in range(x0, x1):
                        glr = d_img[py, px, 0]
                        glg = d_img[py, px, 1]
                        glb = d_img[py, px, 2]
                        T = t_final[py, px]
                        sr = T * bg0
                        sg = T * bg1
                        sb = T * bg2
                        last = s + n_seen[py, px]
                        for idx in range(last - 1, s - 1, -1):
                            p = order[idx]
                            dx = px - mean2d[p, 0]
                            dy = py - mean2d[p, 1]
                            if dx > radius[p] or -dx > radius[p] or dy > radius[p] or -dy > radius[p]:
                                continue
                            q = conic[p, 0] * dx * dx + 2.0 * conic[p, 1] * (dx * dy) + conic[p, 2] * dy * dy
                            g = exp(-0.5 * q)
                            f = opacity[p] * g
                            if f < cutoff:
                                continue
                            one_minus = 1.0 - f
                            tb = T / one_minus  # transmittance in front of this entry
                            w = f * tb
                            dclv[p, 0] += w * glr
                            dclv[p, 1] += w * glg
                            dclv[p, 2] += w * glb
                            df = glr * (tb * color[p, 0] - sr / one_minus) \
                               + glg * (tb * color[p, 1] - sg / one_minus) \
                               + glb * (tb * color[p, 2] - sb / one_minus)
                            dov[p] += df * g
                            dgq = df * opacity[p] * g * -0.5
                            dcv[p, 0] += dgq * dx * dx
                            dcv[p, 1] += dgq * 2.0 * dx * dy
                            dcv[p, 2] += dgq * dy * dy
                            dmv[p, 0] += -dgq * (2.0 * conic[p, 0] * dx + 2.0 * conic[p, 1] * dy)
                            dmv[p, 1] += -dgq * (2.0 * conic[p, 1] * dx + 2.0 * conic[p, 2] * dy)
                            sr += w * color[p, 0]
                            sg += w * color[p, 1]
                            sb += w * color[p, 2]
                            T = tb
    return d_mean, d_conic, d_opacity, d_color
