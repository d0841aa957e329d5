"""Pure numpy fallbacks for the compiled kernels.

Signature-compatible with entrosplat._kernels so the dispatcher in
_backend.py can swap them freely.  The sliding-window entropy scan keeps
the exact accumulation order of the compiled kernel (histogram terms added
in ascending bin order), so both backends produce bit-identical maps.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def entropy_map(padded_bins, n, table, levels):
    """Local window entropy from a replicate-padded, quantized raster.

    padded_bins: (H + n - 1, W + n - 1) int32.  table[c] holds
    (c/n^2) * log2(c/n^2); the shared table keeps both backends on the
    same float grid.
    """
    hp, wp = padded_bins.shape
    h, w = hp - n + 1, wp - n + 1
    win = sliding_window_view(padded_bins, (n, n)).reshape(h * w, n * n)
    flat = np.sort(win, axis=1)
    m = n * n
    idx = np.arange(m, dtype=np.int64)
    ends = np.empty((h * w, m), dtype=bool)
    ends[:, -1] = True
    ends[:, :-1] = flat[:, 1:] != flat[:, :-1]
    starts = np.empty_like(ends)
    starts[:, 0] = True
    starts[:, 1:] = ends[:, :-1]
    last_start = np.maximum.accumulate(np.where(starts, idx[None, :], -1), axis=1)
    run_len = idx[None, :] - last_start + 1
    acc = np.zeros(h * w)
    for j in range(m):  # ascending bin order, one vectorized add per column
        acc = acc + np.where(ends[:, j], table[run_len[:, j]], 0.0)
    return (0.0 - acc).reshape(h, w)


def _mindist2(bbox, node, qx, qy, qz):
    d2 = 0.0
    for axis, q in ((0, qx), (1, qy), (2, qz)):
        lo = bbox[node, 2 * axis]
        hi = bbox[node, 2 * axis + 1]
        d = lo - q
        if q - hi > d:
            d = q - hi
        if d > 0.0:
            d2 += d * d
    return d2


def _kd_query_one(pts, ids, left, right, start, end, bbox, qx, qy, qz, exclude, k, out_d2, out_id):
    best_d = []
    best_i = []

    def visit(node):
        if left[node] < 0:
            for row in range(start[node], end[node]):
                pid = int(ids[row])
                if pid == exclude:
                    continue
                dx = pts[row, 0] - qx
                dy = pts[row, 1] - qy
                dz = pts[row, 2] - qz
                d2 = dx * dx + dy * dy + dz * dz
                if len(best_d) < k:
                    pos = len(best_d)
                    while pos > 0 and (best_d[pos - 1], best_i[pos - 1]) > (d2, pid):
                        pos -= 1
                    best_d.insert(pos, d2)
                    best_i.insert(pos, pid)
                elif (d2, pid) < (best_d[-1], best_i[-1]):
                    best_d.pop()
                    best_i.pop()
                    pos = len(best_d)
                    while pos > 0 and (best_d[pos - 1], best_i[pos - 1]) > (d2, pid):
                        pos -= 1
                    best_d.insert(pos, d2)
                    best_i.insert(pos, pid)
        else:
            lc, rc = int(left[node]), int(right[node])
            ml = _mindist2(bbox, lc, qx, qy, qz)
            mr = _mindist2(bbox, rc, qx, qy, qz)
            order = ((ml, lc), (mr, rc)) if ml <= mr else ((mr, rc), (ml, lc))
            for mind, child in order:
                if len(best_d) == k and mind > best_d[-1]:
                    continue
                visit(child)

    if k > 0:
        visit(0)
    found = len(best_d)
    out_d2[:found] = best_d
    out_id[:found] = best_i
    return found


def kd_query_batch(pts, ids, left, right, start, end, bbox, queries, excludes, k):
    m = queries.shape[0]
    out_id = np.full((m, k), -1, dtype=np.int32)
    out_d2 = np.full((m, k), np.inf)
    counts = np.zeros(m, dtype=np.int32)
    for i in range(m):
        counts[i] = _kd_query_one(
            pts, ids, left, right, start, end, bbox,
            float(queries[i, 0]), float(queries[i, 1]), float(queries[i, 2]),
            int(excludes[i]), k, out_d2[i], out_id[i],
        )
    return out_id, out_d2, counts


def composite_forward(order, tile_start, tiles_x, tiles_y, tile_size,
                      mean2d, conic, color, opacity, depth, radius,
                      height, width, background, cutoff, term_eps, training):
    """Front-to-back alpha compositing over depth-sorted per-tile lists.

    Per pixel: f_k = opacity_k * exp(-0.5 d^T conic d), entries outside the
    footprint square or with f below the cutoff contribute nothing, and
    iteration stops once transmittance drops under term_eps.
    """
    img = np.empty((height, width, 3))
    img[:] = background
    depth_img = np.zeros((height, width))
    alpha = np.zeros((height, width))
    t_final = np.ones((height, width)) if training else None
    n_seen = np.zeros((height, width), dtype=np.int32) if training else None

    for ty in range(tiles_y):
        y0, y1 = ty * tile_size, min((ty + 1) * tile_size, height)
        for tx in range(tiles_x):
            t = ty * tiles_x + tx
            s, e = int(tile_start[t]), int(tile_start[t + 1])
            if s == e:
                continue
            x0, x1 = tx * tile_size, min((tx + 1) * tile_size, width)
            prims = order[s:e]
            px = np.arange(x0, x1, dtype=np.float64)
            py = np.arange(y0, y1, dtype=np.float64)
            pxx, pyy = np.meshgrid(px, py)
            pxx = pxx.reshape(-1, 1)
            pyy = pyy.reshape(-1, 1)

            dx = pxx - mean2d[prims, 0][None, :]
            dy = pyy - mean2d[prims, 1][None, :]
            inside = (np.abs(dx) <= radius[prims][None, :]) & (np.abs(dy) <= radius[prims][None, :])
            a = conic[prims, 0][None, :]
            b = conic[prims, 1][None, :]
            c = conic[prims, 2][None, :]
            q = a * dx * dx + 2.0 * b * (dx * dy) + c * dy * dy
            f = opacity[prims][None, :] * np.exp(-0.5 * q)
            f = np.where(inside & (f >= cutoff), f, 0.0)

            t_incl = np.cumprod(1.0 - f, axis=1)
            t_excl = np.empty_like(t_incl)
            t_excl[:, 0] = 1.0
            t_excl[:, 1:] = t_incl[:, :-1]
            dead = t_excl < term_eps
            any_dead = dead.any(axis=1)
            first_dead = np.where(any_dead, dead.argmax(axis=1), f.shape[1])
            alive = ~dead  # transmittance is monotone, so alive is a prefix
            w = np.where(alive, f * t_excl, 0.0)
            rows = np.arange(f.shape[0])
            tfin = np.where(any_dead, t_excl[rows, np.minimum(first_dead, f.shape[1] - 1)], t_incl[:, -1])

            tile_rgb = w @ color[prims] + tfin[:, None] * background[None, :]
            tile_depth = w @ depth[prims]
            ph, pw = y1 - y0, x1 - x0
            img[y0:y1, x0:x1] = tile_rgb.reshape(ph, pw, 3)
            depth_img[y0:y1, x0:x1] = tile_depth.reshape(ph, pw)
            alpha[y0:y1, x0:x1] = (1.0 - tfin).reshape(ph, pw)
            if training:
                t_final[y0:y1, x0:x1] = tfin.reshape(ph, pw)
                n_seen[y0:y1, x0:x1] = first_dead.astype(np.int32).reshape(ph, pw)
    return img, depth_img, alpha, t_final, n_seen


def composite_backward(order, tile_start, tiles_x, tiles_y, tile_size,
                       mean2d, conic, color, opacity, depth, radius,
                       height, width, background, cutoff, term_eps,
                       t_final, n_seen, d_img):
    m_total = mean2d.shape[0]
    d_mean = np.zeros((m_total, 2))
    d_conic = np.zeros((m_total, 3))
    d_opacity = np.zeros(m_total)
    d_color = np.zeros((m_total, 3))

    for ty in range(tiles_y):
        y0, y1 = ty * tile_size, min((ty + 1) * tile_size, height)
        for tx in range(tiles_x):
            t = ty * tiles_x + tx
            s, e = int(tile_start[t]), int(tile_start[t + 1])
            if s == e:
                continue
            x0, x1 = tx * tile_size, min((tx + 1) * tile_size, width)
            prims = order[s:e]
            px = np.arange(x0, x1, dtype=np.float64)
            py = np.arange(y0, y1, dtype=np.float64)
            pxx, pyy = np.meshgrid(px, py)
            pxx = pxx.reshape(-1, 1)
            pyy = pyy.reshape(-1, 1)

            dx = pxx - mean2d[prims, 0][None, :]
            dy = pyy - mean2d[prims, 1][None, :]
            inside = (np.abs(dx) <= radius[prims][None, :]) & (np.abs(dy) <= radius[prims][None, :])
            a = conic[prims, 0][None, :]
            b = conic[prims, 1][None, :]
            c = conic[prims, 2][None, :]
            q = a * dx * dx + 2.0 * b * (dx * dy) + c * dy * dy
            g = np.exp(-0.5 * q)
            f = opacity[prims][None, :] * g
            counted = inside & (f >= cutoff)
            f = np.where(counted, f, 0.0)

            t_incl = np.cumprod(1.0 - f, axis=1)
            t_excl = np.empty_like(t_incl)
            t_excl[:, 0] = 1.0
            t_excl[:, 1:] = t_incl[:, :-1]
            alive = t_excl >= term_eps
            counted &= alive
            w = np.where(counted, f * t_excl, 0.0)
            tfin = t_final[y0:y1, x0:x1].reshape(-1)

            gl = d_img[y0:y1, x0:x1].reshape(-1, 3)
            cols = color[prims]
            wc = w[:, :, None] * cols[None, :, :]
            suffix = np.cumsum(wc[:, ::-1, :], axis=1)[:, ::-1, :] - wc
            suffix = suffix + (tfin[:, None] * background[None, :])[:, None, :]

            one_minus = np.where(counted, 1.0 - f, 1.0)
            dC_df = t_excl[:, :, None] * cols[None, :, :] - suffix / one_minus[:, :, None]
            df = np.where(counted, np.einsum("pc,pmc->pm", gl, dC_df), 0.0)

            d_op = df * g
            dgq = df * opacity[prims][None, :] * g * -0.5
            dda = dgq * dx * dx
            ddb = dgq * 2.0 * dx * dy
            ddc = dgq * dy * dy
            dmx = -dgq * (2.0 * a * dx + 2.0 * b * dy)
            dmy = -dgq * (2.0 * b * dx + 2.0 * c * dy)

            np.add.at(d_color, prims, np.einsum("pm,pc->mc", w, gl))
            np.add.at(d_opacity, prims, np.where(counted, d_op, 0.0).sum(axis=0))
            np.add.at(d_conic, prims, np.stack([
                np.where(counted, dda, 0.0).sum(axis=0),
                np.where(counted, ddb, 0.0).sum(axis=0),
                np.where(counted, ddc, 0.0).sum(axis=0),
            ], axis=1))
            np.add.at(d_mean, prims, np.stack([
                np.where(counted, dmx, 0.0).sum(axis=0),
                np.where(counted, dmy, 0.0).sum(axis=0),
            ], axis=1))
    return d_mean, d_conic, d_opacity, d_color
