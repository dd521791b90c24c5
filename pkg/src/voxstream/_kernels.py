"""Compiled inner loops of the rasterizers.

Arrays follow ``PackedComponents``: ``boxes`` is int64 (n, 6) ordered by
component id, ``kinds``/``params`` describe the value function of each row.
Scalars are carried as float64 while combining; ``scode`` selects the
output type (0 uint8, 1 uint32, 2 float32) and every combine step is
rounded to that type so the result matches the Python reference exactly.
"""

import math

import numpy as np
from numba import njit

from . import functions as _f

_JIT = dict(cache=True, nogil=True)

_constant = njit(**_JIT)(_f.constant_value)
_ramp = njit(**_JIT)(_f.ramp_value)
_seg_dist_sq = njit(**_JIT)(_f.segment_distance_sq)
_shadow = njit(**_JIT)(_f.shadow_value)


@njit(**_JIT)
def _capsule(px, py, pz, sx, sy, sz, ex, ey, ez, radius, inside, outside):
    if _seg_dist_sq(px, py, pz, sx, sy, sz, ex, ey, ez) <= radius * radius:
        return inside
    return outside


@njit(**_JIT)
def evaluate(kind, params, i, x, y, z):
    """Raw value of the function in row ``i`` at voxel (x, y, z)."""
    if kind == 0:
        return _constant(params[i, 0])
    fx = float(x)
    fy = float(y)
    fz = float(z)
    if kind == 1:
        return _ramp(params[i, 0], params[i, 1], params[i, 2], params[i, 3], fx, fy, fz)
    if kind == 2:
        return _capsule(fx, fy, fz, params[i, 0], params[i, 1], params[i, 2], params[i, 3],
                        params[i, 4], params[i, 5], params[i, 6], params[i, 7], params[i, 8])
    return _shadow(fx, fy, fz, params[i, 0], params[i, 1], params[i, 2], params[i, 3],
                   params[i, 4])


@njit(**_JIT)
def to_scalar(raw, scode, maxval):
    if scode == 2:
        return float(np.float32(raw))
    v = math.floor(raw + 0.5)
    if v < 0.0:
        return 0.0
    if v > maxval:
        return maxval
    return v


@njit(**_JIT)
def combine(op, scode, maxval, acc, v):
    if op == 0:
        if scode == 2:
            return float(np.float32(acc + v))
        s = acc + v
        if s > maxval:
            return maxval
        return s
    if v > acc:
        return v
    return acc


@njit(**_JIT)
def sample(kinds, params, i, x, y, z, scode, maxval):
    return to_scalar(evaluate(kinds[i], params, i, x, y, z), scode, maxval)


@njit(inline="always", **_JIT)
def fold_run(kinds, params, i, x0, x1, y, z, acc, a0, op, scode, maxval):
    """Combine the values of row ``i`` at voxels x0..x1-1 of line (y, z) into
    ``acc[a0 : a0 + x1 - x0]``.

    Same per-voxel result as calling ``sample`` at each voxel; the kind
    dispatch is taken once per run so the per-voxel formula can inline.
    """
    kind = kinds[i]
    if kind == 0:
        for x in range(x0, x1):
            k = a0 + x - x0
            acc[k] = combine(op, scode, maxval, float(acc[k]),
                             to_scalar(_constant(params[i, 0]), scode, maxval))
    elif kind == 1:
        for x in range(x0, x1):
            k = a0 + x - x0
            v = _ramp(params[i, 0], params[i, 1], params[i, 2], params[i, 3],
                      float(x), float(y), float(z))
            acc[k] = combine(op, scode, maxval, float(acc[k]), to_scalar(v, scode, maxval))
    elif kind == 2:
        for x in range(x0, x1):
            k = a0 + x - x0
            v = _capsule(float(x), float(y), float(z), params[i, 0], params[i, 1], params[i, 2],
                         params[i, 3], params[i, 4], params[i, 5], params[i, 6], params[i, 7],
                         params[i, 8])
            acc[k] = combine(op, scode, maxval, float(acc[k]), to_scalar(v, scode, maxval))
    else:
        for x in range(x0, x1):
            k = a0 + x - x0
            v = _shadow(float(x), float(y), float(z), params[i, 0], params[i, 1], params[i, 2],
                        params[i, 3], params[i, 4])
            acc[k] = combine(op, scode, maxval, float(acc[k]), to_scalar(v, scode, maxval))


# -- brute force: linear scan of every component at every voxel ---------------

@njit(**_JIT)
def bruteforce_slice(boxes, kinds, params, z, out, op, scode, maxval, identity, counts):
    n = boxes.shape[0]
    dy, dx = out.shape
    count = counts.shape[0] > 0
    for y in range(dy):
        for x in range(dx):
            acc = identity
            for i in range(n):
                if (boxes[i, 0] <= x and x <= boxes[i, 3] and boxes[i, 1] <= y
                        and y <= boxes[i, 4] and boxes[i, 2] <= z and z <= boxes[i, 5]):
                    acc = combine(op, scode, maxval, acc,
                                  sample(kinds, params, i, x, y, z, scode, maxval))
                    if count:
                        counts[i] += 1
            out[y, x] = acc


# -- component order ----------------------------------------------------------

@njit(**_JIT)
def component_order(boxes, kinds, params, order, buf, dx, dy, op, scode, maxval, counts):
    count = counts.shape[0] > 0
    for k in range(order.shape[0]):
        i = order[k]
        for z in range(boxes[i, 2], boxes[i, 5] + 1):
            for y in range(boxes[i, 1], boxes[i, 4] + 1):
                x0 = boxes[i, 0]
                x1 = boxes[i, 3] + 1
                fold_run(kinds, params, i, x0, x1, y, z, buf, (z * dy + y) * dx + x0,
                         op, scode, maxval)
                if count:
                    counts[i] += x1 - x0


# -- nested sweeps: the y and x sweeps of one z-slice -------------------------

@njit(**_JIT)
def sweep_slice(boxes, kinds, params, cz, z, out, op, scode, maxval, identity,
                counts, line_active, trace_vox, trace_comp, trace_n):
    """Rasterize slice ``z`` given its active set ``cz`` (component rows, ascending).

    Q_y is C_z sorted by (lo_y, id); per line, C_y is compacted and
    refilled from Q_y, then sorted by (lo_x, id) into Q_x. C_x is kept in
    ascending id order by inserting each popped component at its place.
    The slice works on local copies of the active boxes; local index order
    equals id order because ``cz`` is ascending.
    """
    dy, dx = out.shape
    m = cz.shape[0]
    count = counts.shape[0] > 0
    stats = line_active.shape[0] > 0
    trace = trace_vox.shape[0] > 0

    idt = np.empty(1, dtype=out.dtype)
    idt[0] = identity
    idv = idt[0]
    lo_x = np.empty(m, dtype=np.int64)
    hi_x = np.empty(m, dtype=np.int64)
    lo_y = np.empty(m, dtype=np.int64)
    hi_y = np.empty(m, dtype=np.int64)
    keys = np.empty(m, dtype=np.int64)
    qy = np.empty(m, dtype=np.int64)
    for k in range(m):
        r = cz[k]
        lo_x[k] = boxes[r, 0]
        hi_x[k] = boxes[r, 3]
        lo_y[k] = boxes[r, 1]
        hi_y[k] = boxes[r, 4]
        keys[k] = lo_y[k] * m + k
        qy[k] = k
    _sort_by_key(keys, qy, m)
    qy_pos = 0

    cy = np.empty(m, dtype=np.int64)
    ny = 0
    qx = np.empty(m, dtype=np.int64)
    qx_lo = np.empty(m, dtype=np.int64)
    cx = np.empty(m, dtype=np.int64)
    xkeys = np.empty(m, dtype=np.int64)

    for y in range(dy):
        w = 0
        for k in range(ny):
            c = cy[k]
            if hi_y[c] >= y:
                cy[w] = c
                w += 1
        ny = w
        while qy_pos < m and lo_y[qy[qy_pos]] == y:
            cy[ny] = qy[qy_pos]
            ny += 1
            qy_pos += 1
        if stats:
            line_active[y] = ny

        row = out[y]
        row[:] = idv
        if ny == 0:
            continue

        for k in range(ny):
            xkeys[k] = lo_x[cy[k]] * m + cy[k]
            qx[k] = cy[k]
        _sort_by_key(xkeys, qx, ny)
        for k in range(ny):
            qx_lo[k] = lo_x[qx[k]]
        qx_pos = 0
        nx = 0
        # smallest hi_x in C_x: compaction is a no-op until the sweep passes it
        expire = dx

        x = 0
        while x < dx:
            if x > expire:
                w = 0
                expire = dx
                for k in range(nx):
                    c = cx[k]
                    h = hi_x[c]
                    if h >= x:
                        cx[w] = c
                        w += 1
                        if h < expire:
                            expire = h
                nx = w
            while qx_pos < ny and qx_lo[qx_pos] == x:
                c = qx[qx_pos]
                j = nx
                while j > 0 and cx[j - 1] > c:
                    cx[j] = cx[j - 1]
                    j -= 1
                cx[j] = c
                nx += 1
                qx_pos += 1
                if hi_x[c] < expire:
                    expire = hi_x[c]
            nxt = qx_lo[qx_pos] if qx_pos < ny else dx
            if nx == 0:
                # C_x stays empty until the next queued component starts
                x = nxt
                continue
            # C_x is unchanged on [x, end): fold each member over the run,
            # in id order, so every voxel still combines in canonical order
            end = min(expire + 1, nxt)
            for k in range(nx):
                r = cz[cx[k]]
                fold_run(kinds, params, r, x, end, y, z, row, x, op, scode, maxval)
                if count:
                    counts[r] += end - x
                if trace:
                    t = trace_n[0]
                    base = (z * dy + y) * dx
                    for xx in range(x, end):
                        trace_vox[t] = base + xx
                        trace_comp[t] = r
                        t += 1
                    trace_n[0] = t
            x = end


@njit(**_JIT)
def _sort_by_key(keys, vals, m):
    """Sort ``vals[:m]`` by unique ``keys[:m]`` in place."""
    if m > 32:
        o = np.argsort(keys[:m])
        ks = keys[:m][o]
        vs = vals[:m][o]
        keys[:m] = ks
        vals[:m] = vs
        return
    for a in range(1, m):
        k = keys[a]
        v = vals[a]
        b = a
        while b > 0 and keys[b - 1] > k:
            keys[b] = keys[b - 1]
            vals[b] = vals[b - 1]
            b -= 1
        keys[b] = k
        vals[b] = v


# -- bulk-loaded R-tree point query -------------------------------------------

@njit(**_JIT)
def rtree_query(node_box, node_start, node_count, node_leaf, child, entry_box, root,
                x, y, z, result, stack):
    """Write the rows of all entries containing (x, y, z) to ``result``; return the count."""
    nres = 0
    if root < 0:
        return 0
    sp = 0
    stack[sp] = root
    sp += 1
    while sp > 0:
        sp -= 1
        nd = stack[sp]
        if not (node_box[nd, 0] <= x and x <= node_box[nd, 3] and node_box[nd, 1] <= y
                and y <= node_box[nd, 4] and node_box[nd, 2] <= z and z <= node_box[nd, 5]):
            continue
        s = node_start[nd]
        e = s + node_count[nd]
        if node_leaf[nd]:
            for k in range(s, e):
                i = child[k]
                if (entry_box[i, 0] <= x and x <= entry_box[i, 3] and entry_box[i, 1] <= y
                        and y <= entry_box[i, 4] and entry_box[i, 2] <= z and z <= entry_box[i, 5]):
                    result[nres] = i
                    nres += 1
        else:
            for k in range(s, e):
                stack[sp] = child[k]
                sp += 1
    # materialize in ascending row (= id) order
    for a in range(1, nres):
        v = result[a]
        b = a
        while b > 0 and result[b - 1] > v:
            result[b] = result[b - 1]
            b -= 1
        result[b] = v
    return nres


@njit(**_JIT)
def spatial_slice(node_box, node_start, node_count, node_leaf, child, root,
                  boxes, kinds, params, z, out, op, scode, maxval, identity, counts,
                  result, stack):
    dy, dx = out.shape
    count = counts.shape[0] > 0
    for y in range(dy):
        for x in range(dx):
            nres = rtree_query(node_box, node_start, node_count, node_leaf, child, boxes, root,
                               x, y, z, result, stack)
            acc = identity
            for k in range(nres):
                i = result[k]
                acc = combine(op, scode, maxval, acc,
                              sample(kinds, params, i, x, y, z, scode, maxval))
                if count:
                    counts[i] += 1
            out[y, x] = acc


# -- helpers for the phantom image and noise ----------------------------------



@njit(**_JIT)
def splitmix64_mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(**_JIT)
def gaussian_at(key, index):
    """Standard normal draw for voxel ``index`` under the noise key (Box-Muller)."""
    base = key + np.uint64(index) * np.uint64(2) * np.uint64(0x9E3779B97F4A7C15)
    h1 = splitmix64_mix(base + np.uint64(0x9E3779B97F4A7C15))
    h2 = splitmix64_mix(base + np.uint64(2) * np.uint64(0x9E3779B97F4A7C15))
    u1 = (float(h1 >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)
    u2 = float(h2 >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(**_JIT)
def add_noise(values, first_index, sigma, key):
    """Add sigma * N(0, 1) in place; draw k is keyed by ``first_index + k``."""
    flat = values.reshape(-1)
    for k in range(flat.shape[0]):
        flat[k] += sigma * gaussian_at(key, first_index + k)


@njit(**_JIT)
def store_scalars(values, out, scode, maxval, minval):
    """Convert float64 ``values`` into ``out`` with the scalar type's rounding and clamping."""
    fv = values.reshape(-1)
    fo = out.reshape(-1)
    for k in range(fv.shape[0]):
        v = fv[k]
        if scode == 2:
            if v < minval:
                v = minval
            elif v > maxval:
                v = maxval
            fo[k] = np.float32(v)
        else:
            fo[k] = to_scalar(v, scode, maxval)
