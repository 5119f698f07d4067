"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is missing, or when
``ELBOWSSR_PURE_PYTHON=1`` is set. Both backends share these signatures.
"""
import numpy as np

_CHUNK = 16384


def strict_local_maxima(channel):
    """Row-major (ys, xs) of pixels strictly greater than all 8 neighbours.

    Neighbours outside the grid are ignored.
    """
    a = np.asarray(channel, dtype=np.float64)
    h, w = a.shape
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = a
    mask = np.ones((h, w), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            mask &= a > padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    ys, xs = np.nonzero(mask)
    return ys.astype(np.int64), xs.astype(np.int64)


def score_combinations(cand_xy, counts, proj, bank_dim, rank_tol):
    """Mean subspace similarity of every candidate combination to a bank.

    cand_xy: (K, C, 2) candidate coordinates, padded along C.
    counts: (K,) number of valid candidates per landmark.
    proj: (K, K) mean projection matrix of the bank subspaces.
    Combinations are enumerated lexicographically (last landmark fastest).
    Combinations whose numerical rank differs from ``bank_dim`` score -inf.
    """
    cand_xy = np.asarray(cand_xy, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    proj = np.asarray(proj, dtype=np.float64)
    k = len(counts)
    n = int(np.prod(counts))
    scores = np.empty(n)
    rows = np.arange(k)[:, None]
    for start in range(0, n, _CHUNK):
        stop = min(n, start + _CHUNK)
        idx = np.array(np.unravel_index(np.arange(start, stop), tuple(counts)))  # (K, n)
        x = cand_xy[rows, idx].transpose(1, 0, 2)  # (n, K, 2)
        xc = x - x.mean(axis=1, keepdims=True)
        u, s, _ = np.linalg.svd(xc, full_matrices=False)
        rank = np.count_nonzero(s > rank_tol * s[:, :1], axis=1)
        u = u[:, :, :bank_dim]
        val = np.einsum("nki,kl,nli->n", u, proj, u) / bank_dim
        ok = (rank == bank_dim) & (s[:, 0] > 0)
        scores[start:stop] = np.where(ok, val, -np.inf)
    return scores
