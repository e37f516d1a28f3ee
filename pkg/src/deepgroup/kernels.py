"""Hot numeric kernels with two interchangeable backends.

The rejection samplers and the model's set-aggregation step spend nearly all
their time in a handful of small loops: Kendall-tau pair counting, per-group
pairwise-tau screening, ragged segment reductions, and row scatter-adds.
Each kernel has a pure-numpy implementation and a numba-compiled one.

Backend selection: set ``DEEPGROUP_BACKEND=numpy`` to force the numpy path
(e.g. when numba is unavailable or for debugging); anything else, or unset,
uses numba when it imports. ``benchmarks/bench_kernels.py`` times both.
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via DEEPGROUP_BACKEND instead
    HAVE_NUMBA = False

# Reduction op codes shared by both backends.
OP_MEAN = 0
OP_MAX = 1
OP_MIN = 2
OP_MEDIAN = 3

# Result codes for group screening.
TAU_ACCEPT = 1
TAU_REJECT = 0
TAU_UNDEFINED = -1


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def tau_pair_counts_np(p, q):
    """Concordant/discordant/tied pair counts for two tie-encoded position rows.

    Positions are 1-based ranks; items sharing a rank are tied. Pairs tied in
    either row contribute to the tie counts and never to nc/nd.
    """
    dp = p[:, None] - p[None, :]
    dq = q[:, None] - q[None, :]
    iu = np.triu_indices(p.shape[0], 1)
    dp = dp[iu]
    dq = dq[iu]
    prod = dp * dq
    nc = int(np.count_nonzero(prod > 0))
    nd = int(np.count_nonzero(prod < 0))
    n1 = int(np.count_nonzero(dp == 0))
    n2 = int(np.count_nonzero(dq == 0))
    return nc, nd, n1, n2


def _tau_b_from_counts(nc, nd, n1, n2, m):
    n0 = m * (m - 1) // 2
    den = float(n0 - n1) * float(n0 - n2)
    if den <= 0.0:
        return np.nan
    return (nc - nd) / np.sqrt(den)


def check_group_tau_np(positions, threshold, require_at_least):
    """Screen one candidate group: all pairwise tau-b >= thr (or <= thr).

    ``positions`` is an s x m matrix of tie-encoded ranks, one row per member.
    Returns TAU_ACCEPT, TAU_REJECT, or TAU_UNDEFINED (an all-tied row makes
    tau undefined for some pair).
    """
    s, m = positions.shape
    for i in range(s):
        for j in range(i + 1, s):
            nc, nd, n1, n2 = tau_pair_counts_np(positions[i], positions[j])
            tau = _tau_b_from_counts(nc, nd, n1, n2, m)
            if np.isnan(tau):
                return TAU_UNDEFINED
            if require_at_least:
                if tau < threshold:
                    return TAU_REJECT
            elif tau > threshold:
                return TAU_REJECT
    return TAU_ACCEPT


def segment_reduce_np(values, offsets, op):
    """Columnwise reduction of ragged row segments.

    values: (T, d) float64; offsets: (B+1,) int64 with non-empty segments.
    Returns (out, route): out is (B, d); route holds, for max/min/median, the
    absolute row index in ``values`` that receives the gradient (first index
    on ties, lower median for even segment sizes); -1 where unused.
    """
    starts = offsets[:-1]
    sizes = np.diff(offsets)
    nseg, d = starts.shape[0], values.shape[1]
    route = np.full((nseg, d), -1, dtype=np.int64)
    if op == OP_MEAN:
        out = np.add.reduceat(values, starts, axis=0) / sizes[:, None]
        return out, route
    if op in (OP_MAX, OP_MIN):
        ufunc = np.maximum if op == OP_MAX else np.minimum
        out = ufunc.reduceat(values, starts, axis=0)
        # first row attaining the extremum per segment/column
        hit = values == np.repeat(out, sizes, axis=0)
        rows = np.where(hit, np.arange(values.shape[0])[:, None], values.shape[0])
        route = np.minimum.reduceat(rows, starts, axis=0)
        return out, route
    if op == OP_MEDIAN:
        out = np.empty((nseg, d))
        for b in range(nseg):
            block = values[offsets[b]:offsets[b + 1]]
            med = np.sort(block, axis=0)[(block.shape[0] - 1) // 2]
            out[b] = med
            route[b] = offsets[b] + np.argmax(block == med, axis=0)
        return out, route
    raise ValueError(f"unknown reduction op code {op}")


def segment_reduce_backward_np(grad_out, offsets, op, route, total_rows):
    sizes = np.diff(offsets)
    grad_values = np.zeros((total_rows, grad_out.shape[1]))
    if op == OP_MEAN:
        grad_values[:] = np.repeat(grad_out / sizes[:, None], sizes, axis=0)
    else:
        cols = np.tile(np.arange(grad_out.shape[1]), grad_out.shape[0])
        np.add.at(grad_values, (route.ravel(), cols), grad_out.ravel())
    return grad_values


def scatter_add_rows_np(out, idx, src):
    np.add.at(out, idx, src)


def gather_reduce_np(emb, idx, offsets, op):
    """Fused emb[idx] gather + segment reduction.

    Like segment_reduce over emb[idx], but route indexes rows of emb (user
    rows), so the backward pass can scatter straight into the embedding
    gradient without materializing the gathered matrix.
    """
    out, route = segment_reduce_np(emb[idx], offsets, op)
    route_user = np.where(route >= 0, idx[np.maximum(route, 0)], -1)
    return out, route_user


def gather_reduce_backward_np(grad_out, idx, offsets, op, route_user, grad_emb):
    """Accumulate the fused-reduction gradient into grad_emb in place."""
    if op == OP_MEAN:
        sizes = np.diff(offsets)
        np.add.at(grad_emb, idx, np.repeat(grad_out / sizes[:, None], sizes, axis=0))
    else:
        cols = np.tile(np.arange(grad_out.shape[1]), grad_out.shape[0])
        np.add.at(grad_emb, (route_user.ravel(), cols), grad_out.ravel())


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def tau_pair_counts_nb(p, q):
        m = p.shape[0]
        nc = 0
        nd = 0
        n1 = 0
        n2 = 0
        for i in range(m):
            for j in range(i + 1, m):
                dp = p[i] - p[j]
                dq = q[i] - q[j]
                if dp == 0:
                    n1 += 1
                if dq == 0:
                    n2 += 1
                s = dp * dq
                if s > 0:
                    nc += 1
                elif s < 0:
                    nd += 1
        return nc, nd, n1, n2

    @njit(cache=True)
    def check_group_tau_nb(positions, threshold, require_at_least):
        s, m = positions.shape
        n0 = m * (m - 1) // 2
        for i in range(s):
            for j in range(i + 1, s):
                nc, nd, n1, n2 = tau_pair_counts_nb(positions[i], positions[j])
                den = float(n0 - n1) * float(n0 - n2)
                if den <= 0.0:
                    return TAU_UNDEFINED
                tau = (nc - nd) / np.sqrt(den)
                if require_at_least:
                    if tau < threshold:
                        return TAU_REJECT
                elif tau > threshold:
                    return TAU_REJECT
        return TAU_ACCEPT

    @njit(cache=True)
    def segment_reduce_nb(values, offsets, op):
        # row-major traversal: the row loop is outermost wherever possible
        nseg = offsets.shape[0] - 1
        d = values.shape[1]
        out = np.empty((nseg, d))
        route = np.full((nseg, d), -1, dtype=np.int64)
        for b in range(nseg):
            s = offsets[b]
            e = offsets[b + 1]
            k = e - s
            if op == OP_MEAN:
                for j in range(d):
                    out[b, j] = values[s, j]
                for r in range(s + 1, e):
                    for j in range(d):
                        out[b, j] += values[r, j]
                for j in range(d):
                    out[b, j] /= k
            elif op == OP_MAX:
                for j in range(d):
                    out[b, j] = values[s, j]
                    route[b, j] = s
                for r in range(s + 1, e):
                    for j in range(d):
                        if values[r, j] > out[b, j]:
                            out[b, j] = values[r, j]
                            route[b, j] = r
            elif op == OP_MIN:
                for j in range(d):
                    out[b, j] = values[s, j]
                    route[b, j] = s
                for r in range(s + 1, e):
                    for j in range(d):
                        if values[r, j] < out[b, j]:
                            out[b, j] = values[r, j]
                            route[b, j] = r
            else:
                block = np.empty((k, d))
                for r in range(k):
                    for j in range(d):
                        block[r, j] = values[s + r, j]
                buf = np.empty(k)
                for j in range(d):
                    for r in range(k):
                        buf[r] = block[r, j]
                    med = np.sort(buf)[(k - 1) // 2]
                    out[b, j] = med
                    for r in range(k):
                        if block[r, j] == med:
                            route[b, j] = s + r
                            break
        return out, route

    @njit(cache=True)
    def segment_reduce_backward_nb(grad_out, offsets, op, route, total_rows):
        nseg, d = grad_out.shape
        grad_values = np.zeros((total_rows, d))
        for b in range(nseg):
            s = offsets[b]
            e = offsets[b + 1]
            if op == OP_MEAN:
                k = e - s
                for r in range(s, e):
                    for j in range(d):
                        grad_values[r, j] += grad_out[b, j] / k
            else:
                for j in range(d):
                    grad_values[route[b, j], j] += grad_out[b, j]
        return grad_values

    @njit(cache=True)
    def scatter_add_rows_nb(out, idx, src):
        for r in range(idx.shape[0]):
            row = idx[r]
            for j in range(src.shape[1]):
                out[row, j] += src[r, j]

    @njit(cache=True)
    def gather_reduce_nb(emb, idx, offsets, op):
        nseg = offsets.shape[0] - 1
        d = emb.shape[1]
        out = np.empty((nseg, d))
        route_user = np.full((nseg, d), -1, dtype=np.int64)
        for b in range(nseg):
            s = offsets[b]
            e = offsets[b + 1]
            k = e - s
            if op == OP_MEAN:
                row0 = idx[s]
                for j in range(d):
                    out[b, j] = emb[row0, j]
                for r in range(s + 1, e):
                    row = idx[r]
                    for j in range(d):
                        out[b, j] += emb[row, j]
                for j in range(d):
                    out[b, j] /= k
            elif op == OP_MAX:
                row0 = idx[s]
                for j in range(d):
                    out[b, j] = emb[row0, j]
                    route_user[b, j] = row0
                for r in range(s + 1, e):
                    row = idx[r]
                    for j in range(d):
                        if emb[row, j] > out[b, j]:
                            out[b, j] = emb[row, j]
                            route_user[b, j] = row
            elif op == OP_MIN:
                row0 = idx[s]
                for j in range(d):
                    out[b, j] = emb[row0, j]
                    route_user[b, j] = row0
                for r in range(s + 1, e):
                    row = idx[r]
                    for j in range(d):
                        if emb[row, j] < out[b, j]:
                            out[b, j] = emb[row, j]
                            route_user[b, j] = row
            else:
                buf = np.empty(k)
                for j in range(d):
                    for r in range(k):
                        buf[r] = emb[idx[s + r], j]
                    med = np.sort(buf)[(k - 1) // 2]
                    out[b, j] = med
                    for r in range(k):
                        if emb[idx[s + r], j] == med:
                            route_user[b, j] = idx[s + r]
                            break
        return out, route_user

    @njit(cache=True)
    def gather_reduce_backward_nb(grad_out, idx, offsets, op, route_user, grad_emb):
        nseg, d = grad_out.shape
        for b in range(nseg):
            s = offsets[b]
            e = offsets[b + 1]
            if op == OP_MEAN:
                k = e - s
                for r in range(s, e):
                    row = idx[r]
                    for j in range(d):
                        grad_emb[row, j] += grad_out[b, j] / k
            else:
                for j in range(d):
                    grad_emb[route_user[b, j], j] += grad_out[b, j]


def _pick_backend():
    requested = os.environ.get("DEEPGROUP_BACKEND", "").strip().lower()
    if requested == "numpy":
        return "numpy"
    if requested in ("", "numba"):
        if HAVE_NUMBA:
            return "numba"
        if requested == "numba":
            raise ImportError("DEEPGROUP_BACKEND=numba but numba is not installed")
        return "numpy"
    raise ValueError(f"DEEPGROUP_BACKEND must be 'numba' or 'numpy', got {requested!r}")


BACKEND = _pick_backend()

if BACKEND == "numba":
    tau_pair_counts = tau_pair_counts_nb
    check_group_tau = check_group_tau_nb
    segment_reduce = segment_reduce_nb
    segment_reduce_backward = segment_reduce_backward_nb
    scatter_add_rows = scatter_add_rows_nb
    gather_reduce = gather_reduce_nb
    gather_reduce_backward = gather_reduce_backward_nb
else:
    tau_pair_counts = tau_pair_counts_np
    check_group_tau = check_group_tau_np
    segment_reduce = segment_reduce_np
    segment_reduce_backward = segment_reduce_backward_np
    scatter_add_rows = scatter_add_rows_np
    gather_reduce = gather_reduce_np
    gather_reduce_backward = gather_reduce_backward_np
