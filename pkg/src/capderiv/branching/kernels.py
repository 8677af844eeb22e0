"""Hot loops: tree exploration, spine walks and SRW escapes.

Every function here compiles with numba unless CAPDERIV_DISABLE_NUMBA is set,
in which case the identical source runs as Python. Randomness comes from a
splitmix64 counter generator whose state is a one-element uint64 array ``rs``
(held in a local inside the hot loop); both paths use wrapping uint64
arithmetic and so produce the same draws.

Targets are passed as a sorted table of encoded lattice points (``keys``) with
a bit mask per entry (``masks``) naming the target sets that contain it, plus
the bounding box ``lo``/``hi`` of all targets. Spatial pruning uses a union of
balls (``pc`` centers, ``pr2`` squared radii): a vertex outside every ball is
recorded but gets no children.
"""
import numpy as np

from .._jit import BACKEND, njit

OFFSET = 1 << 11
BASE = 1 << 12

STACK_ROWS = 1 << 18

# status codes
OK = 0
OVER_BUDGET = 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def rand(rs):
    """Uniform double in [0, 1) from the splitmix64 state rs[0]."""
    rs[0] += _GOLDEN
    z = rs[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    z = z ^ (z >> _S31)
    return float(z >> _S11) * _INV53


@njit(cache=True)
def new_state(seed):
    rs = np.empty(1, dtype=np.uint64)
    rs[0] = np.uint64(seed)
    return rs


def target_table(*sets_points):
    """Build (keys, masks, lo, hi) from arrays of points; set i gets bit 1 << i."""
    allpts = np.vstack(sets_points).astype(np.int64)
    if np.abs(allpts).max() >= OFFSET:
        raise ValueError("target coordinates too large for the key encoding")
    codes = {}
    for i, pts in enumerate(sets_points):
        for p in np.asarray(pts, dtype=np.int64):
            k = encode(p)
            codes[k] = codes.get(k, 0) | (1 << i)
    keys = np.array(sorted(codes), dtype=np.int64)
    masks = np.array([codes[k] for k in keys], dtype=np.int64)
    lo = allpts.min(0)
    hi = allpts.max(0)
    return keys, masks, lo, hi


@njit(cache=True)
def encode(p):
    k = 0
    mult = 1
    for j in range(p.shape[0]):
        k += (p[j] + OFFSET) * mult
        mult *= BASE
    return k


@njit(cache=True)
def lookup(p, keys, lo, hi):
    """Index of p in the key table, or -1."""
    for j in range(p.shape[0]):
        if p[j] < lo[j] or p[j] > hi[j]:
            return -1
    k = encode(p)
    i = np.searchsorted(keys, k)
    if i < keys.shape[0] and keys[i] == k:
        return i
    return -1


@njit(cache=True)
def draw(cdf, rs):
    u = rand(rs)
    k = 0
    while u >= cdf[k]:
        k += 1
    return k


@njit(cache=True)
def step_into(src, dst, d, rs):
    s = int(rand(rs) * 2 * d)
    for j in range(d):
        dst[j] = src[j]
    if s < d:
        dst[s] += 1
    else:
        dst[s - d] -= 1


@njit(cache=True)
def _grow(a, need):
    cap = a.shape[0]
    if need <= cap:
        return a
    while cap < need:
        cap *= 2
    b = np.empty((cap, a.shape[1]), dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True, inline="always")
def _next(st):
    """Advance a local splitmix64 state; returns (state, uniform)."""
    st += _GOLDEN
    z = (st ^ (st >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return st, float((z ^ (z >> _S31)) >> _S11) * _INV53


@njit(cache=True, inline="always")
def _find(px, keys, lo, hi):
    """Index of px in the key table, or -1 (caller has already checked the bounding box)."""
    d = px.shape[0]
    key = 0
    mult = 1
    for j in range(d):
        key += (px[j] + OFFSET) * mult
        mult *= BASE
    a = 0
    b = keys.shape[0]
    while a < b:
        m = (a + b) >> 1
        if keys[m] < key:
            a = m + 1
        else:
            b = m
    found = -1
    if a < keys.shape[0] and keys[a] == key:
        found = a
    return found


# sampler kinds
CRITICAL = 0  # one tree; root law root_cdf, others mu
PAST = 1      # past T_-: SRW spine from x (x excluded), mu~ trees per spine vertex
FULL = 2      # invariant tree: mu tree at x, spine degrees from mu_sb

# marked-path types
SPINE = 0
ROOT = 1
SIDE = 2

CAPPED = 2  # status: marked path longer than MAX_PATH



@njit(cache=True, inline="always")
def green_eval(dx, gt, mt, M, coef):
    """(g, M1) at the lattice vector dx: table inside the box, far-field fit outside."""
    d = dx.shape[0]
    idx = 0
    mult = 1
    r2 = 0.0
    s4 = 0.0
    inside = True
    for j in range(d):
        a = abs(dx[j])
        if a > M:
            inside = False
        idx += a * mult
        mult *= M + 1
        v = float(a) * float(a)
        r2 += v
        s4 += v * v
    if inside:
        g = gt[idx]
        m = mt[idx]
    else:
        # r^(2-d) and r^(4-d) by repeated multiplication
        s = 1.0 / np.sqrt(r2)
        pm = 1.0
        for _ in range(d - 4):
            pm *= s
        q = s4 / (r2 * r2)
        g = coef[0] * pm * s * s * (1.0 + (coef[1] + coef[2] * q) / r2)
        m = coef[3] * pm * (1.0 + (coef[4] + coef[5] * q) / r2)
    return g, m


@njit(cache=True, inline="always")
def _tail_add(p, tab, at_exit, mult, tail, dx):
    """Add the expected visits to each target missed by cutting the sample at p.

    A pruned tree vertex p loses its subtree: g(t - p) per target t. A spine
    that leaves its ball at p (p not visited) loses p, its side trees and the
    rest of the spine: g + sidem (M1 - g), with sidem the mean number of side
    trees per spine vertex. Targets never sit at p, so no delta terms appear.
    Contributions are scaled by ``mult``.
    """
    tpts, gt, mt, M, coef, sidem = tab
    d = p.shape[0]
    for t in range(tpts.shape[0]):
        for j in range(d):
            dx[j] = tpts[t, j] - p[j]
        g, m = green_eval(dx, gt, mt, M, coef)
        if at_exit:
            tail[t] += mult * (g + sidem * (m - g))
        else:
            tail[t] += mult * g


@njit(cache=True)
def _pick(cdf, u):
    k = 0
    while u >= cdf[k]:
        k += 1
    return k


@njit(cache=True, inline="always")
def _mark(p, keys, masks, lo, hi, flags, counts):
    """Record a visit to p; returns the updated target flags."""
    inbox = True
    for j in range(p.shape[0]):
        if p[j] < lo[j] or p[j] > hi[j]:
            inbox = False
    if inbox:
        i = _find(p, keys, lo, hi)
        if i >= 0:
            counts[i] += 1
            flags |= masks[i]
    return flags


@njit(cache=True)
def _rec(p, rec, nrec):
    rec = _grow(rec, nrec + 1)
    for j in range(p.shape[0]):
        rec[nrec, j] = p[j]
    return rec, nrec + 1


@njit(cache=True)
def _inside(p, pc, pr2):
    for bi in range(pc.shape[0]):
        r2 = 0.0
        for j in range(p.shape[0]):
            t = p[j] - pc[bi, j]
            r2 += t * t
        if r2 <= pr2[bi]:
            return True
    return False


@njit(cache=True)
def _push(p, k, stack, top, st):
    """Push k children of p, each one uniform lattice step away."""
    d = p.shape[0]
    if top + k > stack.shape[0]:
        return top, st, False
    for c in range(k):
        st, u = _next(st)
        s = int(u * 2 * d)
        for j in range(d):
            stack[top + c, j] = p[j]
        if s < d:
            stack[top + c, s] += 1
        else:
            stack[top + c, s - d] -= 1
    return top + k, st, True


@njit(cache=True)
def _push_law(p, law, off, stack, top, st):
    st, u = _next(st)
    k = _pick(law, u) - off
    if k <= 0:
        return top, st, True
    return _push(p, k, stack, top, st)


@njit(cache=True)
def _drain(stack, top, cdf, geo, tab, stop_mask, flags, counts, tail, rec, nrec,
           used, pruned, budget, st, hist):
    """Depth-first expansion of every pending tree vertex on the stack."""
    keys, masks, lo, hi, pc, pr2, sc, sr2 = geo
    d = stack.shape[1]
    nb = pc.shape[0]
    cap = stack.shape[0]
    recording = rec.shape[0] > 0
    tailing = tail.shape[0] > 0
    px = np.empty(d, dtype=np.int64)
    dx = np.empty(d, dtype=np.int64)
    status = OK
    while top > 0:
        top -= 1
        inbox = True
        for j in range(d):
            v = stack[top, j]
            px[j] = v
            if v < lo[j] or v > hi[j]:
                inbox = False
        if inbox:
            i = _find(px, keys, lo, hi)
            if i >= 0:
                flags |= masks[i]
                counts[i] += 1
        if recording:
            rec = _grow(rec, nrec + 1)
            for j in range(d):
                rec[nrec, j] = px[j]
            nrec += 1
        used += 1
        if stop_mask != 0 and (flags & stop_mask) == stop_mask:
            break
        if used > budget:
            status = OVER_BUDGET
            break
        keep = False
        for bi in range(nb):
            r2 = 0.0
            for j in range(d):
                t = px[j] - pc[bi, j]
                r2 += t * t
            if r2 <= pr2[bi]:
                keep = True
                break
        if not keep:
            pruned += 1
            if tailing:
                _tail_add(px, tab, False, 1.0, tail, dx)
            continue
        st, u = _next(st)
        k = 0
        while u >= cdf[k]:
            k += 1
        hist[1, k] += 1
        if k == 0:
            continue
        if top + k > cap:
            status = OVER_BUDGET
            break
        for c in range(k):
            st, u = _next(st)
            s = int(u * 2 * d)
            for j in range(d):
                stack[top + c, j] = px[j]
            if s < d:
                stack[top + c, s] += 1
            else:
                stack[top + c, s - d] -= 1
        top += k
    return flags, used, pruned, status, st, rec, nrec


@njit(cache=True)
def _spine(p, law, off, geo, tab, stop_mask, flags, counts, tail, stack, top, st,
           rec, nrec, used, budget, hist):
    """Continue a spine beyond p (p already handled) until it leaves the spine ball.

    Each new spine vertex draws k from ``law`` and roots k - off side trees.
    Returns (flags, top, st, rec, nrec, used, status, exited, stopped).
    """
    keys, masks, lo, hi, pc, pr2, sc, sr2 = geo
    d = p.shape[0]
    q = p.copy()
    dx = np.empty(d, dtype=np.int64)
    recording = rec.shape[0] > 0
    while True:
        st, u = _next(st)
        s = int(u * 2 * d)
        if s < d:
            q[s] += 1
        else:
            q[s - d] -= 1
        r2 = 0.0
        for j in range(d):
            t = q[j] - sc[j]
            r2 += t * t
        if r2 > sr2:
            if tail.shape[0] > 0:
                _tail_add(q, tab, True, 1.0, tail, dx)
            return flags, top, st, rec, nrec, used, OK, True, False
        flags = _mark(q, keys, masks, lo, hi, flags, counts)
        if recording:
            rec, nrec = _rec(q, rec, nrec)
        used += 1
        if stop_mask != 0 and (flags & stop_mask) == stop_mask:
            return flags, top, st, rec, nrec, used, OK, False, True
        if used > budget:
            return flags, top, st, rec, nrec, used, OVER_BUDGET, False, True
        st, u = _next(st)
        k = _pick(law, u)
        hist[2, k] += 1
        if k - off > 0:
            top, st, ok = _push(q, k - off, stack, top, st)
            if not ok:
                return flags, top, st, rec, nrec, used, OVER_BUDGET, False, True


@njit(cache=True)
def sample(kind, x, root_cdf, cdf, geo, tab, stop_mask, counts, tail, stack, rec,
           hist, budget, st):
    """One realization of a tree-indexed walk; returns
    (flags, used, pruned, exited, status, st, rec, nrec).

    CRITICAL: a Galton-Watson tree rooted at x with root law root_cdf.
    PAST: the spine is a SRW from x (x itself is not in the past); every spine
    vertex carries k ~ root_cdf (mu~) critical trees rooted one step away.
    FULL: a mu tree at x, then spine vertices with k ~ root_cdf (mu_sb), whose
    k - 1 non-special children each root a critical tree.
    The spine stops once it leaves the ball (sc, sr2). Tree vertices outside
    every prune ball (pc, pr2) are visited but get no children. Missed
    expected visits per target accumulate in ``tail`` when it is non-empty.
    ``hist`` rows 0/1/2 count root, normal and spine degree draws. The
    depth-first stack has fixed capacity; overflow counts as an exhausted
    node budget.
    """
    keys, masks, lo, hi, pc, pr2, sc, sr2 = geo
    d = x.shape[0]
    flags = 0
    used = 0
    pruned = 0
    top = 0
    nrec = 0
    exited = False
    stopped = False
    status = OK
    if kind != PAST:
        flags = _mark(x, keys, masks, lo, hi, flags, counts)
        if rec.shape[0] > 0:
            rec, nrec = _rec(x, rec, nrec)
        used = 1
        stopped = stop_mask != 0 and (flags & stop_mask) == stop_mask
        if not stopped:
            if _inside(x, pc, pr2):
                law = root_cdf if kind == CRITICAL else cdf
                st, u = _next(st)
                k = _pick(law, u)
                hist[0, k] += 1
                top, st, ok = _push(x, k, stack, top, st)
                if not ok:
                    status = OVER_BUDGET
            else:
                pruned = 1
                if tail.shape[0] > 0:
                    _tail_add(x, tab, False, 1.0, tail, np.empty(d, dtype=np.int64))
    if kind != CRITICAL and not stopped and status == OK:
        off = 0 if kind == PAST else 1
        flags, top, st, rec, nrec, used, status, exited, stopped = _spine(
            x, root_cdf, off, geo, tab, stop_mask, flags, counts, tail, stack, top, st,
            rec, nrec, used, budget, hist)
    if not stopped and status == OK:
        flags, used, pruned, status, st, rec, nrec = _drain(
            stack, top, cdf, geo, tab, stop_mask, flags, counts, tail, rec, nrec,
            used, pruned, budget, st, hist)
    return flags, used, pruned, exited, status, st, rec, nrec


@njit(cache=True)
def run_block(seed, n, kind, x, root_cdf, cdf, geo, tab, stop_mask, budget, retries, hist):
    """Draw ``n`` samples of one sampler kind from one seeded stream.

    Returns per-sample arrays (flags, nodes, pruned, exited, attempts, tail)
    and per-target visit moments: rows 0/1 hold the sum and sum of squares of
    the counts, rows 2/3 the same for counts plus missed expected visits.
    ``tail`` is the per-sample total of missed expected visits (zero when
    ``tab`` has no target points). A sample exceeding the node budget is
    discarded and redrawn from the same stream, at most ``retries`` times; a
    negative ``attempts`` marks failure.
    """
    st = np.uint64(seed)
    d = x.shape[0]
    m = geo[0].shape[0]
    tpts = tab[0]
    mt = tpts.shape[0]
    flags_out = np.zeros(n, dtype=np.int64)
    nodes = np.zeros(n, dtype=np.int64)
    pruned_out = np.zeros(n, dtype=np.int64)
    exited = np.zeros(n, dtype=np.bool_)
    attempts = np.zeros(n, dtype=np.int64)
    tails = np.zeros(n, dtype=np.float64)
    moments = np.zeros((4, m), dtype=np.float64)
    counts = np.zeros(m, dtype=np.int64)
    tail = np.zeros(mt, dtype=np.float64)
    stack = np.empty((STACK_ROWS, d), dtype=np.int64)
    rec = np.empty((0, d), dtype=np.int64)
    for i in range(n):
        a = 0
        while True:
            a += 1
            counts[:] = 0
            tail[:] = 0.0
            fl, used, pr, ex, status, st, rec, nrec = sample(
                kind, x, root_cdf, cdf, geo, tab, stop_mask, counts, tail, stack, rec,
                hist, budget, st)
            if status == OK or a > retries:
                break
        flags_out[i] = fl
        nodes[i] = used
        pruned_out[i] = pr
        exited[i] = ex
        attempts[i] = a if status == OK else -a
        tails[i] = tail.sum()
        for t in range(m):
            c = float(counts[t])
            moments[0, t] += c
            moments[1, t] += c * c
            if mt == m:
                c += tail[t]
            moments[2, t] += c
            moments[3, t] += c * c
    return flags_out, nodes, pruned_out, exited, attempts, tails, moments


@njit(cache=True)
def record_sample(seed, kind, x, root_cdf, cdf, geo, tab, budget, hist):
    """One sample with its full list of visited positions (with multiplicity)."""
    st = np.uint64(seed)
    d = x.shape[0]
    counts = np.zeros(geo[0].shape[0], dtype=np.int64)
    tail = np.zeros(0, dtype=np.float64)
    stack = np.empty((STACK_ROWS, d), dtype=np.int64)
    rec = np.empty((1024, d), dtype=np.int64)
    fl, used, pr, ex, status, st, rec, nrec = sample(
        kind, x, root_cdf, cdf, geo, tab, 0, counts, tail, stack, rec, hist, budget, st)
    return rec[:nrec].copy(), fl, used, pr, ex, status


# ---------------------------------------------------------------------------
# marked-visit sampler
#
# To estimate P(a tree-indexed walk started at x visits K and avoids B) when K
# is far from x, draw the tree size-biased by its number of visits to K: pick
# a target k in K and a position type for the marked vertex with probability
# proportional to its expected visit count, draw the tree path from k back to
# x by importance sampling, then grow everything else around that path.
# With weight W (E[W] = total expected visits to K) the unbiased estimate is
# W 1(B avoided) / N_K, where N_K >= 1 counts the visits to K.
#
# The path is generated from k toward x; each vertex gets its side trees as
# the walk leaves it. Side trees of vertices far from every prune ball would
# be pruned at their roots, so only their expected visits enter the tail.
# Connecting paths have a heavy length tail (P(L > n) ~ n^-1/2), so Russian
# roulette at lengths L0, 4 L0, 16 L0, ... keeps the mean cost finite: the
# path survives with probability 1/2 and doubles its weight.

MAX_PATH = 1 << 40


@njit(cache=True, inline="always")
def _propose(y, x, use_v, gt, mt, M, coef, dx, fv):
    """Proposal weights g or V = M1 - g at the 2d neighbours of y (relative to x)."""
    d = y.shape[0]
    tot = 0.0
    for c in range(2 * d):
        for j in range(d):
            dx[j] = y[j] - x[j]
        if c < d:
            dx[c] += 1
        else:
            dx[c - d] -= 1
        g, m = green_eval(dx, gt, mt, M, coef)
        f = m - g if use_v else g
        fv[c] = f
        tot += f
    return tot


@njit(cache=True, inline="always")
def _side(y, n, pc, near2, stack, top, st, tab, tail, dx):
    """Give path vertex y its n side trees: pushed when y is near a prune
    ball, otherwise only their expected visits are recorded."""
    d = y.shape[0]
    near = False
    for bi in range(pc.shape[0]):
        r2 = 0.0
        for j in range(d):
            t = y[j] - pc[bi, j]
            r2 += t * t
        if r2 <= near2[bi]:
            near = True
    ok = True
    if near:
        top, st, ok = _push(y, n, stack, top, st)
    elif tab[0].shape[0] > 0:
        _tail_add(y, tab, False, float(n), tail, dx)
    return top, st, ok


@njit(cache=True)
def marked(kind, x, choice, laws, geo, tab, kbit, abit, counts, tail, stack, hist,
           budget, L0, st):
    """One size-biased sample; returns
    (value, weight, n_k, tail_k, tail_b, used, pruned, status, st).

    ``choice`` = (cum, k_index, type, log_ratio, kpts): the cumulative choice
    probabilities over (target, type) pairs, and log(total / exact path sum)
    per pair. ``laws`` = cdfs of (mu, mu~, mu_sb, size-biased mu~, full-tree
    side law t(t+1)mu(t+1)/sigma^2). ``n_k`` counts the visits to K and
    ``tail_k``/``tail_b`` the expected visits to K and B cut off by truncation.
    Samples that hit B or die in the roulette return zero value and weight.
    ``hist[0, 0]`` accumulates the lengths of completed paths.

    Path roles, with the path running k = y_0, y_1, ..., y_L = x:
    SPINE: k is spine vertex X_L; every y_i (i < L) is a spine vertex.
    SIDE: y_0 .. y_{s-1} is the lineage of k inside a side tree attached at
    the spine vertex y_s; y_s .. y_{L-1} are spine vertices.
    ROOT (full tree only): y_0 .. y_{L-1} is the lineage of k in the root's tree.
    """
    cum, ck, ct, clw, kpts = choice
    mu, tilde, sb, sbt, sfull = laws
    keys, masks, lo, hi, pc, pr2, sc, sr2 = geo
    gt = tab[1]
    mt = tab[2]
    M = tab[3]
    coef = tab[4]
    d = x.shape[0]
    nb = pc.shape[0]
    near2 = np.empty(nb, dtype=np.float64)
    for bi in range(nb):
        r = np.sqrt(pr2[bi]) + 1.0
        near2[bi] = r * r
    dx = np.empty(d, dtype=np.int64)
    fv = np.empty(2 * d, dtype=np.float64)
    st, u = _next(st)
    a = 0
    b = cum.shape[0] - 1
    while a < b:
        m = (a + b) >> 1
        if cum[m] <= u:
            a = m + 1
        else:
            b = m
    typ = ct[a]
    lw = clw[a]
    y = np.empty(d, dtype=np.int64)
    for j in range(d):
        y[j] = kpts[ck[a], j]
    xn = y.copy() if typ != ROOT else x.copy()
    use_v = typ == SIDE
    stop_p = 1.0 / gt[0]
    i = 0
    steps = 0
    sw = -1
    level = L0
    flags = 0
    used = 0
    top = 0
    while True:
        at_x = True
        for j in range(d):
            if y[j] != x[j]:
                at_x = False
                break
        pcont = 1.0
        if use_v:
            if steps > 0:
                for j in range(d):
                    dx[j] = y[j] - x[j]
                g, m1 = green_eval(dx, gt, mt, M, coef)
                h = g - 1.0 if at_x else g
                sig = h / (m1 - g)
                st, u = _next(st)
                if u < sig:
                    lw -= np.log(sig)
                    use_v = False
                    steps = 0
                    sw = i
                    for j in range(d):
                        xn[j] = y[j]
                else:
                    pcont = 1.0 - sig
        elif steps > 0 and at_x:
            st, u = _next(st)
            if u < stop_p:
                lw -= np.log(stop_p)
                break
            pcont = 1.0 - stop_p
        # y is an inner path vertex
        if use_v or typ == ROOT:
            law = mu if i == 0 else sb
            off = 0 if i == 0 else 1
        elif i == sw:
            law = sbt if kind == PAST else sfull
            off = 1
        else:
            law = tilde if kind == PAST else sb
            off = 0 if kind == PAST else 1
        flags = _mark(y, keys, masks, lo, hi, flags, counts)
        used += 1
        if abit != 0 and (flags & abit) != 0:
            return 0.0, 0.0, 0, 0.0, 0.0, used, 0, OK, st
        if used > budget:
            return 0.0, 0.0, 0, 0.0, 0.0, used, 0, OVER_BUDGET, st
        st, u = _next(st)
        n = _pick(law, u) - off
        if n > 0:
            top, st, ok = _side(y, n, pc, near2, stack, top, st, tab, tail, dx)
            if not ok:
                return 0.0, 0.0, 0, 0.0, 0.0, used, 0, OVER_BUDGET, st
        i += 1
        if i >= level:
            st, u = _next(st)
            if u >= 0.5:
                return 0.0, 0.0, 0, 0.0, 0.0, used, 0, OK, st
            lw += np.log(2.0)
            level *= 4
            if level > MAX_PATH:
                return 0.0, 0.0, 0, 0.0, 0.0, used, 0, CAPPED, st
        tot = _propose(y, x, use_v, gt, mt, M, coef, dx, fv)
        st, u = _next(st)
        u *= tot
        c = 0
        acc = fv[0]
        while u >= acc and c < 2 * d - 1:
            c += 1
            acc += fv[c]
        lw += np.log(tot / (2 * d * pcont * fv[c]))
        if c < d:
            y[c] += 1
        else:
            y[c - d] -= 1
        steps += 1
    W = np.exp(lw)
    hist[0, 0] += i
    if kind == FULL:
        flags = _mark(x, keys, masks, lo, hi, flags, counts)
        used += 1
        if abit != 0 and (flags & abit) != 0:
            return 0.0, 0.0, 0, 0.0, 0.0, used, 0, OK, st
        st, u = _next(st)
        if typ == ROOT:
            n = _pick(sb, u) - 1
        else:
            n = _pick(mu, u)
        if n > 0:
            top, st, ok = _side(x, n, pc, near2, stack, top, st, tab, tail, dx)
            if not ok:
                return 0.0, 0.0, 0, 0.0, 0.0, used, 0, OVER_BUDGET, st
        slaw = sb
        off = 1
    else:
        slaw = tilde
        off = 0
    rec = np.empty((0, d), dtype=np.int64)
    flags, top, st, rec, nrec, used, status, exited, stopped = _spine(
        xn, slaw, off, geo, tab, abit, flags, counts, tail, stack, top, st,
        rec, 0, used, budget, hist)
    pruned = 0
    if status == OK and not stopped:
        flags, used, pruned, status, st, rec, nrec = _drain(
            stack, top, mu, geo, tab, abit, flags, counts, tail, rec, nrec,
            used, pruned, budget, st, hist)
    if status != OK:
        return 0.0, 0.0, 0, 0.0, 0.0, used, pruned, status, st
    if abit != 0 and (flags & abit) != 0:
        return 0.0, 0.0, 0, 0.0, 0.0, used, pruned, OK, st
    nk = 0
    tk = 0.0
    ta = 0.0
    for i in range(keys.shape[0]):
        if masks[i] & kbit:
            nk += counts[i]
            tk += tail[i]
        elif masks[i] & abit:
            ta += tail[i]
    return W / nk, W, nk, tk, ta, used, pruned, OK, st


@njit(cache=True)
def marked_block(seed, n, kind, x, choice, laws, geo, tab, kbit, abit, budget, retries,
                 L0, hist):
    """``n`` marked samples from one stream.

    Returns per-sample (value, weight, n_k, tail_k, tail_b) rows and
    (nodes, pruned, attempts); attempts is negative after exhausted retries
    and zero for a path that outgrew MAX_PATH (value and weight zero).
    """
    st = np.uint64(seed)
    d = x.shape[0]
    out = np.zeros((n, 5), dtype=np.float64)
    nodes = np.zeros(n, dtype=np.int64)
    pruned = np.zeros(n, dtype=np.int64)
    attempts = np.zeros(n, dtype=np.int64)
    counts = np.zeros(geo[0].shape[0], dtype=np.int64)
    tail = np.zeros(tab[0].shape[0], dtype=np.float64)
    stack = np.empty((STACK_ROWS, d), dtype=np.int64)
    for i in range(n):
        a = 0
        while True:
            a += 1
            counts[:] = 0
            tail[:] = 0.0
            v, w, nk, tk, ta, used, pr, status, st = marked(
                kind, x, choice, laws, geo, tab, kbit, abit, counts, tail, stack, hist,
                budget, L0, st)
            if status != OVER_BUDGET or a > retries:
                break
        out[i, 0] = v
        out[i, 1] = w
        out[i, 2] = nk
        out[i, 3] = tk
        out[i, 4] = ta
        nodes[i] = used
        pruned[i] = pr
        if status == CAPPED:
            attempts[i] = 0
        elif status == OK:
            attempts[i] = a
        else:
            attempts[i] = -a
    return out, nodes, pruned, attempts


@njit(cache=True)
def srw_escape_block(seed, n, x, keys, lo, hi, R2):
    """Count SRW paths from x that leave B(0, sqrt(R2)) before returning to the key set."""
    rs = new_state(seed)
    d = x.shape[0]
    p = np.empty(d, dtype=np.int64)
    esc = 0
    for _ in range(n):
        for j in range(d):
            p[j] = x[j]
        while True:
            step_into(p, p, d, rs)
            r2 = 0.0
            for j in range(d):
                r2 += p[j] * p[j]
            if r2 > R2:
                esc += 1
                break
            if lookup(p, keys, lo, hi) >= 0:
                break
    return esc


@njit(cache=True)
def generation_sizes(seed, n, cdf, max_gen):
    """Sum over n critical trees of the number of vertices in generations 0..max_gen."""
    rs = new_state(seed)
    tot = np.zeros(max_gen + 1, dtype=np.float64)
    sq = np.zeros(max_gen + 1, dtype=np.float64)
    for _ in range(n):
        z = 1
        for g in range(max_gen + 1):
            tot[g] += z
            sq[g] += float(z) * z
            nz = 0
            for _v in range(z):
                nz += draw(cdf, rs)
            z = nz
    return tot, sq


if BACKEND == "python":
    # uint64 scalar arithmetic wraps exactly as in compiled code; numpy only warns
    import functools

    def _wrapping(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            with np.errstate(over="ignore"):
                return fn(*args, **kwargs)
        return inner

    run_block = _wrapping(run_block)
    marked_block = _wrapping(marked_block)
    record_sample = _wrapping(record_sample)
    srw_escape_block = _wrapping(srw_escape_block)
    generation_sizes = _wrapping(generation_sizes)


def key_points(keys, d):
    """Decode a sorted key table back to lattice points (same row order)."""
    keys = np.asarray(keys, dtype=np.int64)
    out = np.empty((keys.shape[0], d), dtype=np.int64)
    rest = keys.copy()
    for j in range(d):
        out[:, j] = rest % BASE - OFFSET
        rest //= BASE
    return out
