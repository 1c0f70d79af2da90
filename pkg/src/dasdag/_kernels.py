"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from ``DASDAG_BACKEND``:

- ``numba`` (default): jit-compiled loops, used when numba imports cleanly.
- ``numpy``: vectorized numpy / plain Python, no compilation step.

Both implementations of every kernel are importable by name so the benchmark
and the equivalence tests can exercise them side by side in one process.
"""
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
        # probe OpenMP before TBB; old TBB builds only emit a warning
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_requested = os.environ.get("DASDAG_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"DASDAG_BACKEND must be 'numba' or 'numpy', got {_requested!r}")
BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


def _jit(**kwargs):
    if not HAVE_NUMBA:
        return lambda f: None
    return lambda f: numba.njit(cache=True, **kwargs)(f)


# ---------------------------------------------------------------- RBF gram


def rbf_gram_numpy(X, bandwidth):
    """Gaussian kernel matrix ``exp(-|x_i - x_j|^2 / (2 h^2))``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    sq = np.einsum("ij,ij->i", X, X)
    D = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    D *= -0.5 / (bandwidth * bandwidth)
    return np.exp(D, out=D)


def _rbf_gram_loops(X, bandwidth):
    n, d = X.shape
    K = np.empty((n, n))
    scale = -0.5 / (bandwidth * bandwidth)
    for i in numba.prange(n):
        K[i, i] = 1.0
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = X[i, k] - X[j, k]
                acc += diff * diff
            v = np.exp(scale * acc)
            K[i, j] = v
            K[j, i] = v
    return K


_rbf_gram_jit = _jit(parallel=True)(_rbf_gram_loops)


def rbf_gram_numba(X, bandwidth):
    if _rbf_gram_jit is None:
        raise RuntimeError("numba is not available")
    return _rbf_gram_jit(np.ascontiguousarray(X, dtype=np.float64), float(bandwidth))


# ------------------------------------------------------ reachability / SID


def descendants_numpy(A):
    """Reflexive transitive closure: ``De[a, b]`` is True iff b is a descendant of a (or a == b)."""
    A = np.asarray(A, dtype=bool)
    R = A | np.eye(A.shape[0], dtype=bool)
    while True:
        nxt = (R.astype(np.int64) @ R.astype(np.int64)) > 0
        if np.array_equal(nxt, R):
            return R
        R = nxt


def _descendants_loops(A):
    d = A.shape[0]
    R = np.zeros((d, d), dtype=np.bool_)
    stack = np.empty(d, dtype=np.int64)
    for s in range(d):
        R[s, s] = True
        top = 0
        stack[top] = s
        top += 1
        while top > 0:
            top -= 1
            v = stack[top]
            for c in range(d):
                if A[v, c] and not R[s, c]:
                    R[s, c] = True
                    stack[top] = c
                    top += 1
    return R


_descendants_jit = _jit()(_descendants_loops)


def descendants_numba(A):
    if _descendants_jit is None:
        raise RuntimeError("numba is not available")
    return _descendants_jit(np.ascontiguousarray(A, dtype=np.bool_))


def _csr(A, transpose):
    d = A.shape[0]
    ptr = np.zeros(d + 1, dtype=np.int64)
    for v in range(d):
        cnt = 0
        for u in range(d):
            if (A[u, v] if transpose else A[v, u]):
                cnt += 1
        ptr[v + 1] = ptr[v] + cnt
    idx = np.empty(ptr[d], dtype=np.int64)
    for v in range(d):
        k = ptr[v]
        for u in range(d):
            if (A[u, v] if transpose else A[v, u]):
                idx[k] = u
                k += 1
    return ptr, idx


def _d_connected(i, j, ch_ptr, ch_idx, pa_ptr, pa_idx, in_z, anc_z, cut,
                 vis_up, vis_down, st_node, st_dir):
    # Bayes-ball reachability from i to j given Z, in the graph with the
    # edges i -> c (cut[c]) removed.  dir 0 = arrived from a child, 1 = from a parent.
    d = in_z.shape[0]
    for v in range(d):
        vis_up[v] = False
        vis_down[v] = False
    top = 0
    st_node[0] = i
    st_dir[0] = 0
    top = 1
    while top > 0:
        top -= 1
        v = st_node[top]
        direction = st_dir[top]
        if direction == 0:
            if vis_up[v]:
                continue
            vis_up[v] = True
            if v == j:
                return True
            if in_z[v]:
                continue
            for k in range(pa_ptr[v], pa_ptr[v + 1]):
                p = pa_idx[k]
                if p == i and cut[v]:
                    continue
                st_node[top] = p
                st_dir[top] = 0
                top += 1
            for k in range(ch_ptr[v], ch_ptr[v + 1]):
                c = ch_idx[k]
                if v == i and cut[c]:
                    continue
                st_node[top] = c
                st_dir[top] = 1
                top += 1
        else:
            if vis_down[v]:
                continue
            vis_down[v] = True
            if v == j:
                return True
            if not in_z[v]:
                for k in range(ch_ptr[v], ch_ptr[v + 1]):
                    c = ch_idx[k]
                    if v == i and cut[c]:
                        continue
                    st_node[top] = c
                    st_dir[top] = 1
                    top += 1
            if anc_z[v]:
                for k in range(pa_ptr[v], pa_ptr[v + 1]):
                    p = pa_idx[k]
                    if p == i and cut[v]:
                        continue
                    st_node[top] = p
                    st_dir[top] = 0
                    top += 1
    return False


def _sid_matrix(G, H, De, csr, d_connected):
    # wrong[i, j] = 1 iff p(x_j | do(x_i)) is misestimated by adjusting for pa_H(i).
    d = G.shape[0]
    ch_ptr, ch_idx = csr(G, False)
    pa_ptr, pa_idx = csr(G, True)
    cap = 4 * ch_idx.shape[0] + 2 * d + 2
    st_node = np.empty(cap, dtype=np.int64)
    st_dir = np.empty(cap, dtype=np.int64)
    vis_up = np.zeros(d, dtype=np.bool_)
    vis_down = np.zeros(d, dtype=np.bool_)
    in_z = np.zeros(d, dtype=np.bool_)
    anc_z = np.zeros(d, dtype=np.bool_)
    forb = np.zeros(d, dtype=np.bool_)
    cut = np.zeros(d, dtype=np.bool_)
    wrong = np.zeros((d, d), dtype=np.bool_)
    for i in range(d):
        for v in range(d):
            in_z[v] = H[v, i]
            anc_z[v] = False
            forb[v] = False
        for z in range(d):
            if not in_z[z]:
                continue
            for a in range(d):
                if De[a, z]:
                    anc_z[a] = True
            # any j reachable from a proper descendant w of i that is itself an
            # ancestor of z puts z inside the forbidden set for (i, j)
            for w in range(d):
                if w != i and De[i, w] and De[w, z]:
                    for t in range(d):
                        if De[w, t]:
                            forb[t] = True
        for j in range(d):
            if j == i:
                continue
            if in_z[j]:
                wrong[i, j] = De[i, j]
                continue
            if forb[j]:
                wrong[i, j] = True
                continue
            for k in range(ch_ptr[i], ch_ptr[i + 1]):
                c = ch_idx[k]
                cut[c] = De[c, j]
            wrong[i, j] = d_connected(i, j, ch_ptr, ch_idx, pa_ptr, pa_idx, in_z,
                                       anc_z, cut, vis_up, vis_down, st_node, st_dir)
            for k in range(ch_ptr[i], ch_ptr[i + 1]):
                cut[ch_idx[k]] = False
    return wrong


def sid_matrix_python(G, H):
    G = np.ascontiguousarray(G, dtype=np.bool_)
    H = np.ascontiguousarray(H, dtype=np.bool_)
    return _sid_matrix(G, H, descendants_numpy(G), _csr, _d_connected)


_csr_jit = _jit()(_csr)
_d_connected_jit = _jit()(_d_connected)
_sid_matrix_jit = _jit()(_sid_matrix)


def sid_matrix_numba(G, H):
    if _sid_matrix_jit is None:
        raise RuntimeError("numba is not available")
    G = np.ascontiguousarray(G, dtype=np.bool_)
    H = np.ascontiguousarray(H, dtype=np.bool_)
    return _sid_matrix_jit(G, H, descendants_numba(G), _csr_jit, _d_connected_jit)


if BACKEND == "numba":
    rbf_gram = rbf_gram_numba
    descendants = descendants_numba
    sid_matrix = sid_matrix_numba
else:
    rbf_gram = rbf_gram_numpy
    descendants = descendants_numpy
    sid_matrix = sid_matrix_python
