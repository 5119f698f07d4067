"""Independent reference implementations used only by the tests.

None of these share code paths with the package: bases come from an
eigendecomposition of X^T X instead of an SVD of X, similarity from explicit
K x K projection matrices, peaks and candidates from exhaustive loops.
"""
import itertools
import math

import numpy as np


def eig_basis(points, rel_tol=1e-8):
    """Orthonormal basis of the centered column space via eigh(Xc^T Xc).

    u_i = Xc v_i / sigma_i with sigma_i^2 the eigenvalues. Returns None for a
    zero matrix.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[1] == 2:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    xc = pts - pts.sum(axis=0) / len(pts)
    evals, evecs = np.linalg.eigh(xc.T @ xc)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    sig = np.sqrt(np.clip(evals, 0, None))
    if sig[0] == 0:
        return None
    keep = sig > rel_tol * sig[0]
    return (xc @ evecs[:, keep]) / sig[keep]


def projection_similarity(a_vectors, b_vectors):
    """trace(Q1 Q2) / N with Q = sum of outer products of basis vectors."""
    q1 = sum(np.outer(v, v) for v in np.asarray(a_vectors).T)
    q2 = sum(np.outer(v, v) for v in np.asarray(b_vectors).T)
    n = np.asarray(a_vectors).shape[1]
    return float(np.trace(q1 @ q2)) / n


def projection_eigen_similarity(a_vectors, b_vectors):
    """Mean of the N largest eigenvalues of Q1 Q2 (the squared canonical cosines)."""
    a, b = np.asarray(a_vectors), np.asarray(b_vectors)
    ev = np.sort(np.real(np.linalg.eigvals((a @ a.T) @ (b @ b.T))))[::-1]
    n = a.shape[1]
    return float(ev[:n].mean())


def brute_force_select(candidate_lists, training_shapes, rel_tol=1e-8, tie_tol=1e-9):
    """Exhaustive SSR: index of the best combination and all scores. Scores
    within ``tie_tol`` of the best are ties, won by the lowest index.
    Degenerate or rank-mismatched combinations score -inf."""
    bank = [eig_basis(s, rel_tol) for s in training_shapes]
    bank = [b for b in bank if b is not None]
    dim = max(b.shape[1] for b in bank)
    bank = [b for b in bank if b.shape[1] == dim]
    scores = []
    for combo in itertools.product(*[range(len(c)) for c in candidate_lists]):
        pts = np.array([candidate_lists[k][i][:2] for k, i in enumerate(combo)], dtype=float)
        basis = eig_basis(pts, rel_tol)
        if basis is None or basis.shape[1] != dim:
            scores.append(-math.inf)
            continue
        scores.append(sum(projection_similarity(basis, b) for b in bank) / len(bank))
    top = max(scores)
    best = next(j for j, v in enumerate(scores) if v >= top - tie_tol)
    return best, scores


def local_maxima_loops(channel):
    """(y, x) pairs strictly above every in-bounds 8-neighbour, row-major."""
    h, w = channel.shape
    out = []
    for y in range(h):
        for x in range(w):
            v = channel[y, x]
            ok = True
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if (dy or dx) and 0 <= y + dy < h and 0 <= x + dx < w:
                        ok &= v > channel[y + dy, x + dx]
            if ok:
                out.append((y, x))
    return out


def check_candidates(channel, cands, r, d):
    """All-pairs verification of the candidate invariants; returns a list of violations."""
    problems = []
    vmax = channel.max()
    for x, y, v in cands:
        if channel[int(y), int(x)] != v:
            problems.append(f"value mismatch at {(x, y)}")
        if v < r * vmax:
            problems.append(f"value {v} below threshold")
    for (x1, y1, _), (x2, y2, _) in itertools.combinations(cands, 2):
        if math.hypot(x1 - x2, y1 - y2) < d:
            problems.append(f"candidates {(x1, y1)} and {(x2, y2)} closer than {d}")
    vals = [c[2] for c in cands]
    if vals != sorted(vals, reverse=True):
        problems.append("not sorted by value")
    return problems


def gaussian_patch(cx, cy, sigma, w, h, amplitude=1.0):
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    return amplitude * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * sigma ** 2))


def random_affine(rng, dim=2):
    """Invertible affine map with bounded conditioning: rotation, scale, shear, shift."""
    theta = rng.uniform(0, 2 * math.pi)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    scale = np.diag(rng.uniform(0.5, 2.0, size=2))
    shear = np.array([[1.0, rng.uniform(-1, 1)], [0.0, 1.0]])
    return rot @ scale @ shear, rng.uniform(-100, 100, size=2)
