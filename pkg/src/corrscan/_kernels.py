"""Compiled inner loops.

Every scan kernel threads the same mutable state through ``_update``:

``best[2, K]``
    running maxima; row 0 is the corrected score, row 1 the raw log-LR.
    Column ``k`` holds scale bucket ``k``; column 0 the overall maximum.
``arg[2, K, 4]``
    encoded argmax regions matching ``best``.
``thr, thr_ver, ver``
    per-size cache of the squared-correlation level a region must exceed to
    improve on its bucket.  Regions below it skip the logarithm; regions
    above it are scored exactly, so results match a plain scan bit for bit.
``stats[2]``
    regions scored, degenerate regions skipped.

Region encodings: rectangles ``(x0, y0, w, h)``, template members
``(template, oy, ox, 0)``.  Cover keys pack the same fields into bit fields
of width ``nbits`` of each field's largest value (shifts, no division).
"""
import math

import numpy as np
from numba import njit

R2_MAX = 1.0 - 1e-12
VAR_RTOL = 1e-12


@njit(cache=True, nogil=True)
def nbits(v):
    """Bits needed for values in ``[0, v]`` (at least one)."""
    b = 1
    while (1 << b) <= v:
        b += 1
    return b


@njit(cache=True, nogil=True)
def _threshold(bt, bl, pen, den, dof):
    tau = bt * den + pen
    q1 = -1.0
    if tau > 0.0:
        q1 = -math.expm1(-tau / dof)
    q2 = -1.0
    if bl > 0.0:
        q2 = -math.expm1(-bl / dof)
    q = q1 if q1 < q2 else q2
    if q > 0.0:
        q = q * (1.0 - 1e-9)
    return q


@njit(cache=True, nogil=True)
def _moments(sx, sy, sxx, syy, sxy, fs):
    """Squared covariance and variance product; ``prod < 0`` flags a degenerate region."""
    vx = sxx - sx * sx / fs
    vy = syy - sy * sy / fs
    if vx <= VAR_RTOL * sxx or vy <= VAR_RTOL * syy:
        return 0.0, -1.0
    cxy = sxy - sx * sy / fs
    return cxy * cxy, vx * vy


@njit(cache=True, nogil=True)
def _update(r2, s, k, a0, a1, a2, a3, pen, den, best, arg, ver):
    # called only for regions above the size's threshold, so the array
    # argument overhead stays off the hot path
    if r2 > R2_MAX:
        r2 = R2_MAX
    fs = float(s)
    L = -(fs - 2.0) * math.log1p(-r2)
    T = (L - pen[s]) / den[s]
    hit = False
    if T > best[0, k]:
        hit = True
        best[0, k] = T
        arg[0, k, 0] = a0
        arg[0, k, 1] = a1
        arg[0, k, 2] = a2
        arg[0, k, 3] = a3
        if T > best[0, 0]:
            best[0, 0] = T
            arg[0, 0, 0] = a0
            arg[0, 0, 1] = a1
            arg[0, 0, 2] = a2
            arg[0, 0, 3] = a3
    if L > best[1, k]:
        hit = True
        best[1, k] = L
        arg[1, k, 0] = a0
        arg[1, k, 1] = a1
        arg[1, k, 2] = a2
        arg[1, k, 3] = a3
        if L > best[1, 0]:
            best[1, 0] = L
            arg[1, 0, 0] = a0
            arg[1, 0, 1] = a1
            arg[1, 0, 2] = a2
            arg[1, 0, 3] = a3
    if hit:
        ver[k] += 1


@njit(cache=True, nogil=True)
def rect_band_scan(P, y_lo, y_hi, hmin, hmax, wmin, wmax, amin, cap, area_lim, smin, smax, full,
                   pen, den, bucket, best, arg, thr, thr_ver, ver, stats):
    """All rectangles with top row in ``[y_lo, y_hi)``, order (y0, h, w, x0)."""
    H = P.shape[0] - 1
    W = P.shape[1] - 1
    D = np.empty((W + 1, 6))
    lo_size = max(amin, smin)
    hi_size = min(cap, smax)
    for y0 in range(y_lo, y_hi):
        for h in range(hmin, min(hmax, H - y0) + 1):
            if h * wmin > area_lim:
                break
            y1 = y0 + h
            for x in range(W + 1):
                for c in range(6):
                    D[x, c] = P[y1, x, c] - P[y0, x, c]
            wlo = wmin
            need = (lo_size + h - 1) // h
            if wlo < need:
                wlo = need
            whi = min(wmax, W, area_lim // h)
            if full and whi > hi_size // h:
                whi = hi_size // h
            for w in range(wlo, whi + 1):
                for x0 in range(W - w + 1):
                    x1 = x0 + w
                    cnt = int(D[x1, 5] - D[x0, 5] + 0.5)
                    if cnt < lo_size or cnt > hi_size:
                        continue
                    c2, prod = _moments(D[x1, 0] - D[x0, 0], D[x1, 1] - D[x0, 1], D[x1, 2] - D[x0, 2],
                              D[x1, 3] - D[x0, 3], D[x1, 4] - D[x0, 4], float(cnt))
                    if prod < 0.0:
                        stats[1] += 1
                        continue
                    stats[0] += 1
                    k = bucket[cnt]
                    if thr_ver[cnt] != ver[k]:
                        thr[cnt] = _threshold(best[0, k], best[1, k], pen[cnt], den[cnt], cnt - 2.0)
                        thr_ver[cnt] = ver[k]
                    if c2 > thr[cnt] * prod:
                        _update(c2 / prod, cnt, k, x0, y0, w, h, pen, den, best, arg, ver)


@njit(cache=True, nogil=True)
def rect_list_scan(P, keys, i_lo, i_hi, amin, cap,
                   pen, den, bucket, best, arg, thr, thr_ver, ver, stats):
    """Rectangles with cover keys ``keys[i_lo:i_hi]`` (see :func:`rect_cover`)."""
    H = P.shape[0] - 1
    W = P.shape[1] - 1
    bx, bw, bh = nbits(W - 1), nbits(W), nbits(H)
    mx, mw, mh = (1 << bx) - 1, (1 << bw) - 1, (1 << bh) - 1
    for i in range(i_lo, i_hi):
        key = keys[i]
        x0 = key & mx
        w = (key >> bx) & mw
        h = (key >> (bx + bw)) & mh
        y0 = key >> (bx + bw + bh)
        x1, y1 = x0 + w, y0 + h
        # same operation order as rect_band_scan so both paths agree to the bit
        cnt = int((P[y1, x1, 5] - P[y0, x1, 5]) - (P[y1, x0, 5] - P[y0, x0, 5]) + 0.5)
        if cnt < amin or cnt > cap:
            continue
        s0 = (P[y1, x1, 0] - P[y0, x1, 0]) - (P[y1, x0, 0] - P[y0, x0, 0])
        s1 = (P[y1, x1, 1] - P[y0, x1, 1]) - (P[y1, x0, 1] - P[y0, x0, 1])
        s2 = (P[y1, x1, 2] - P[y0, x1, 2]) - (P[y1, x0, 2] - P[y0, x0, 2])
        s3 = (P[y1, x1, 3] - P[y0, x1, 3]) - (P[y1, x0, 3] - P[y0, x0, 3])
        s4 = (P[y1, x1, 4] - P[y0, x1, 4]) - (P[y1, x0, 4] - P[y0, x0, 4])
        c2, prod = _moments(s0, s1, s2, s3, s4, float(cnt))
        if prod < 0.0:
            stats[1] += 1
            continue
        stats[0] += 1
        k = bucket[cnt]
        if thr_ver[cnt] != ver[k]:
            thr[cnt] = _threshold(best[0, k], best[1, k], pen[cnt], den[cnt], cnt - 2.0)
            thr_ver[cnt] = ver[k]
        if c2 > thr[cnt] * prod:
            _update(c2 / prod, cnt, k, x0, y0, w, h, pen, den, best, arg, ver)


@njit(cache=True, nogil=True)
def tpl_scan(R, t_lo, t_hi, tstart, tdr, tc0, tc1, th, tw, tsize, amin, cap, smin, smax, full,
             pen, den, bucket, best, arg, thr, thr_ver, ver, stats):
    """Every placement of templates ``t_lo..t_hi-1``, order (t, oy, ox)."""
    H = R.shape[0]
    W = R.shape[1] - 1
    lo_size = max(amin, smin)
    hi_size = min(cap, smax)
    s = np.empty(6)
    for t in range(t_lo, t_hi):
        if tsize[t] < lo_size:
            continue
        if full and tsize[t] > hi_size:
            continue
        for oy in range(H - th[t] + 1):
            for ox in range(W - tw[t] + 1):
                for c in range(6):
                    s[c] = 0.0
                for q in range(tstart[t], tstart[t + 1]):
                    row = oy + tdr[q]
                    a = ox + tc0[q]
                    b = ox + tc1[q] + 1
                    for c in range(6):
                        s[c] += R[row, b, c] - R[row, a, c]
                cnt = int(s[5] + 0.5)
                if cnt < lo_size or cnt > hi_size:
                    continue
                c2, prod = _moments(s[0], s[1], s[2], s[3], s[4], float(cnt))
                if prod < 0.0:
                    stats[1] += 1
                    continue
                stats[0] += 1
                k = bucket[cnt]
                if thr_ver[cnt] != ver[k]:
                    thr[cnt] = _threshold(best[0, k], best[1, k], pen[cnt], den[cnt], cnt - 2.0)
                    thr_ver[cnt] = ver[k]
                if c2 > thr[cnt] * prod:
                    _update(c2 / prod, cnt, k, t, oy, ox, 0, pen, den, best, arg, ver)


@njit(cache=True, nogil=True)
def tpl_list_scan(R, keys, i_lo, i_hi, tstart, tdr, tc0, tc1, amin, cap,
                  pen, den, bucket, best, arg, thr, thr_ver, ver, stats):
    """Template placements with cover keys ``keys[i_lo:i_hi]`` (see :func:`tpl_cover`)."""
    H = R.shape[0]
    W = R.shape[1] - 1
    bx, by = nbits(W - 1), nbits(H - 1)
    mx, my = (1 << bx) - 1, (1 << by) - 1
    s = np.empty(6)
    for i in range(i_lo, i_hi):
        key = keys[i]
        ox = key & mx
        oy = (key >> bx) & my
        t = key >> (bx + by)
        for c in range(6):
            s[c] = 0.0
        for q in range(tstart[t], tstart[t + 1]):
            row = oy + tdr[q]
            a = ox + tc0[q]
            b = ox + tc1[q] + 1
            for c in range(6):
                s[c] += R[row, b, c] - R[row, a, c]
        cnt = int(s[5] + 0.5)
        if cnt < amin or cnt > cap:
            continue
        c2, prod = _moments(s[0], s[1], s[2], s[3], s[4], float(cnt))
        if prod < 0.0:
            stats[1] += 1
            continue
        stats[0] += 1
        k = bucket[cnt]
        if thr_ver[cnt] != ver[k]:
            thr[cnt] = _threshold(best[0, k], best[1, k], pen[cnt], den[cnt], cnt - 2.0)
            thr_ver[cnt] = ver[k]
        if c2 > thr[cnt] * prod:
            _update(c2 / prod, cnt, k, t, oy, ox, 0, pen, den, best, arg, ver)


# ---------------------------------------------------------------- coverings
# Count and intersection lookups are written out inline: calling a helper
# with array arguments costs a reference-count round trip per call.

# Cover keys are deduplicated in a flat open-addressing table of int64 (empty
# slots hold -1); far lighter than a typed dict for tens of millions of keys.
_HS_MUL = np.uint64(0x9E3779B97F4A7C15)


@njit(cache=True, nogil=True)
def _hs_grow(table):
    new = np.full(2 * len(table), -1, dtype=np.int64)
    mask = np.uint64(len(new) - 1)
    for key in table:
        if key >= 0:
            h = (np.uint64(key) * _HS_MUL) >> np.uint64(17)
            i = np.int64(h & mask)
            while new[i] >= 0:
                i = np.int64((np.uint64(i) + np.uint64(1)) & mask)
            new[i] = key
    return new


@njit(cache=True, nogil=True)
def _hs_keys(table, n):
    out = np.empty(n, dtype=np.int64)
    j = 0
    for key in table:
        if key >= 0:
            out[j] = key
            j += 1
    out.sort()
    return out


@njit(cache=True, nogil=True)
def rect_bucket_count(C, lo, hi, hmin, hmax, wmin, wmax, amin, cap, area_cap):
    """Number of family rectangles with count in ``(lo, hi]``."""
    H = C.shape[0] - 1
    W = C.shape[1] - 1
    total = 0
    for y0 in range(H):
        for h in range(hmin, min(hmax, H - y0) + 1):
            for w in range(wmin, min(wmax, W) + 1):
                if w * h > area_cap:
                    break
                for x0 in range(W - w + 1):
                    cnt = int(C[y0 + h, x0 + w] - C[y0, x0 + w] - C[y0 + h, x0] + C[y0, x0] + 0.5)
                    if cnt > lo and cnt <= hi and cnt >= amin and cnt <= cap:
                        total += 1
    return total


@njit(cache=True, nogil=True)
def rect_cover(C, lo, hi, hmin, hmax, wmin, wmax, amin, cap, area_cap, g, eps):
    """Covering of the rectangles with count in ``(lo, hi]`` by corner snapping.

    Each member maps to the rectangle whose corner coordinates are rounded to
    the nearest multiple of ``g``.  When that image is not a family member or
    lies farther than ``eps`` the grid is halved and the member snapped again;
    at spacing 1 the member covers itself.  Returns sorted bit-packed keys
    ``(y0, h, w, x0)`` (enumeration order) and the number of self-covering
    members.
    """
    H = C.shape[0] - 1
    W = C.shape[1] - 1
    bx, bw, bh = nbits(W - 1), nbits(W), nbits(H)
    table = np.full(1 << 16, -1, dtype=np.int64)
    nkeys = 0
    own = 0
    last = np.int64(-1)
    for y0 in range(H):
        for h in range(hmin, min(hmax, H - y0) + 1):
            y1 = y0 + h
            for w in range(wmin, min(wmax, W) + 1):
                if w * h > area_cap:
                    break
                for x0 in range(W - w + 1):
                    x1 = x0 + w
                    cnt = int(C[y1, x1] - C[y0, x1] - C[y1, x0] + C[y0, x0] + 0.5)
                    if cnt <= lo or cnt > hi or cnt < amin or cnt > cap:
                        continue
                    gg = g
                    X0 = x0
                    Y0 = y0
                    sw = w
                    sh = h
                    while gg > 1:
                        half = gg // 2
                        X0 = ((x0 + half) // gg) * gg
                        X1 = min(((x1 + half) // gg) * gg, W)
                        Y0 = ((y0 + half) // gg) * gg
                        Y1 = min(((y1 + half) // gg) * gg, H)
                        sw = X1 - X0
                        sh = Y1 - Y0
                        ok = (sw >= wmin and sw <= wmax and sh >= hmin and sh <= hmax
                              and sw * sh <= area_cap)
                        if ok:
                            cnt2 = int(C[Y1, X1] - C[Y0, X1] - C[Y1, X0] + C[Y0, X0] + 0.5)
                            ok = cnt2 >= amin and cnt2 <= cap
                        if ok:
                            ix0 = max(x0, X0)
                            ix1 = min(x1, X1)
                            iy0 = max(y0, Y0)
                            iy1 = min(y1, Y1)
                            inter = 0
                            if ix1 > ix0 and iy1 > iy0:
                                inter = int(C[iy1, ix1] - C[iy0, ix1] - C[iy1, ix0] + C[iy0, ix0] + 0.5)
                            d = 1.0 - inter / math.sqrt(float(cnt) * float(cnt2))
                            ok = d <= eps + 1e-12
                        if ok:
                            break
                        gg = gg // 2
                    if gg <= 1:
                        own += 1
                        X0 = x0
                        Y0 = y0
                        sw = w
                        sh = h
                    key = (((np.int64(Y0) << bh | sh) << bw | sw) << bx) | X0
                    # neighbouring x0 usually share an image
                    if key != last:
                        last = key
                        h_ = (np.uint64(key) * _HS_MUL) >> np.uint64(17)
                        i_ = np.int64(h_ & np.uint64(len(table) - 1))
                        while table[i_] >= 0 and table[i_] != key:
                            i_ = np.int64((np.uint64(i_) + np.uint64(1)) & np.uint64(len(table) - 1))
                        if table[i_] < 0:
                            table[i_] = key
                            nkeys += 1
                            if 10 * nkeys > 7 * len(table):
                                table = _hs_grow(table)
    return _hs_keys(table, nkeys), own


@njit(cache=True, nogil=True)
def tpl_bucket_count(Rc, tstart, tdr, tc0, tc1, th, tw, tsize, lo, hi, amin, cap):
    H = Rc.shape[0]
    W = Rc.shape[1] - 1
    total = 0
    for t in range(len(th)):
        if tsize[t] <= lo or tsize[t] < amin:
            continue
        for oy in range(H - th[t] + 1):
            for ox in range(W - tw[t] + 1):
                cnt = 0
                for q in range(tstart[t], tstart[t + 1]):
                    row = oy + tdr[q]
                    cnt += Rc[row, ox + tc1[q] + 1] - Rc[row, ox + tc0[q]]
                if cnt > lo and cnt <= hi and cnt >= amin and cnt <= cap:
                    total += 1
    return total


@njit(cache=True, nogil=True)
def tpl_cover(Rc, tstart, tdr, tc0, tc1, th, tw, tsize, lo, hi, amin, cap, eps,
              grids, snap_t, snap_dy, snap_dx):
    """Template analogue of :func:`rect_cover`.

    Level ``l`` snaps on a grid of spacing ``grids[l]`` (coarse to fine):
    ``snap_t[l, t, oy % G, ox % G]`` is the template of the snapped image of
    member ``(t, oy, ox)`` (or -1), placed at ``(oy + snap_dy, ox + snap_dx)``.
    Keys are bit-packed ``(t, oy, ox)``.
    """
    H = Rc.shape[0]
    W = Rc.shape[1] - 1
    bx, by = nbits(W - 1), nbits(H - 1)
    table = np.full(1 << 16, -1, dtype=np.int64)
    nkeys = 0
    own = 0
    last = np.int64(-1)
    for t in range(len(th)):
        if tsize[t] <= lo or tsize[t] < amin:
            continue
        for oy in range(H - th[t] + 1):
            for ox in range(W - tw[t] + 1):
                cnt = 0
                for q in range(tstart[t], tstart[t + 1]):
                    row = oy + tdr[q]
                    cnt += Rc[row, ox + tc1[q] + 1] - Rc[row, ox + tc0[q]]
                if cnt <= lo or cnt > hi or cnt < amin or cnt > cap:
                    continue
                found = False
                u = t
                uy = oy
                ux = ox
                for lev in range(len(grids)):
                    G = grids[lev]
                    ry = oy % G
                    rx = ox % G
                    u = snap_t[lev, t, ry, rx]
                    if u < 0:
                        continue
                    uy = oy + snap_dy[lev, t, ry, rx]
                    ux = ox + snap_dx[lev, t, ry, rx]
                    if uy < 0 or ux < 0 or uy + th[u] > H or ux + tw[u] > W:
                        continue
                    cnt2 = 0
                    for q in range(tstart[u], tstart[u + 1]):
                        row = uy + tdr[q]
                        cnt2 += Rc[row, ux + tc1[q] + 1] - Rc[row, ux + tc0[q]]
                    if cnt2 < amin or cnt2 > cap:
                        continue
                    inter = 0
                    i = tstart[t]
                    j = tstart[u]
                    ie = tstart[t + 1]
                    je = tstart[u + 1]
                    while i < ie and j < je:
                        ra = oy + tdr[i]
                        rb = uy + tdr[j]
                        if ra < rb:
                            i += 1
                        elif rb < ra:
                            j += 1
                        else:
                            a = max(ox + tc0[i], ux + tc0[j])
                            b = min(ox + tc1[i], ux + tc1[j])
                            if b >= a:
                                inter += Rc[ra, b + 1] - Rc[ra, a]
                            i += 1
                            j += 1
                    d = 1.0 - inter / math.sqrt(float(cnt) * float(cnt2))
                    if d <= eps + 1e-12:
                        found = True
                        break
                if found:
                    key = ((np.int64(u) << by | uy) << bx) | ux
                else:
                    own += 1
                    key = ((np.int64(t) << by | oy) << bx) | ox
                if key != last:
                    last = key
                    h_ = (np.uint64(key) * _HS_MUL) >> np.uint64(17)
                    i_ = np.int64(h_ & np.uint64(len(table) - 1))
                    while table[i_] >= 0 and table[i_] != key:
                        i_ = np.int64((np.uint64(i_) + np.uint64(1)) & np.uint64(len(table) - 1))
                    if table[i_] < 0:
                        table[i_] = key
                        nkeys += 1
                        if 10 * nkeys > 7 * len(table):
                            table = _hs_grow(table)
    return _hs_keys(table, nkeys), own
