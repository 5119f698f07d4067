import itertools

import numpy as np
import pytest

from elbowssr import kernels
from elbowssr.kernels import available_backends
from oracles import eig_basis, local_maxima_loops, projection_similarity


def test_backend_selected():
    assert kernels.BACKEND in available_backends()


@pytest.mark.parametrize("seed", range(4))
def test_local_maxima_matches_loops(backend, seed):
    rng = np.random.default_rng(seed)
    ch = rng.random((11, 13))
    ch[3, 4] = ch[3, 5] = 5.0  # plateau: neither is strict
    ys, xs = backend.strict_local_maxima(ch)
    assert list(zip(ys.tolist(), xs.tolist())) == local_maxima_loops(ch)
    assert (3, 4) not in zip(ys.tolist(), xs.tolist())


def test_local_maxima_constant_channel(backend):
    ys, xs = backend.strict_local_maxima(np.zeros((5, 5)))
    assert len(ys) == len(xs) == 0


def _oracle_scores(cand_xy, counts, bank_vectors):
    out = []
    for combo in itertools.product(*[range(c) for c in counts]):
        pts = np.array([cand_xy[k, i] for k, i in enumerate(combo)])
        b = eig_basis(pts)
        dim = bank_vectors[0].shape[1]
        if b is None or b.shape[1] != dim:
            out.append(-np.inf)
        else:
            out.append(np.mean([projection_similarity(b, v) for v in bank_vectors]))
    return np.array(out)


@pytest.mark.parametrize("seed", range(6))
def test_scores_match_oracle(backend, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(3, 8))
    counts = rng.integers(1, 4, size=k)
    cand = rng.uniform(0, 50, size=(k, counts.max(), 2))
    bank = [eig_basis(rng.uniform(0, 50, size=(k, 2))) for _ in range(5)]
    proj = sum(v @ v.T for v in bank) / len(bank)
    got = backend.score_combinations(cand, counts, proj, 2, 1e-8)
    np.testing.assert_allclose(got, _oracle_scores(cand, counts, bank), atol=1e-12)


def test_degenerate_and_collinear_combinations(backend):
    cand = np.zeros((4, 2, 2))
    cand[:, 0] = [[0, 0], [1, 1], [2, 2], [3, 3]]  # collinear
    cand[:, 1] = [5, 0]
    counts = np.array([2, 2, 2, 2])
    bank = [eig_basis(np.array([[0, 0], [4, 0], [0, 3], [2, 5]]))]
    scores = backend.score_combinations(cand, counts, bank[0] @ bank[0].T, 2, 1e-8)
    assert scores[0] == -np.inf  # collinear: rank 1
    assert scores[-1] == -np.inf  # all coincident
    expected = _oracle_scores(cand, counts, bank)
    assert np.array_equal(np.isinf(scores), np.isinf(expected))
    assert np.isfinite(scores).sum() > 0
    np.testing.assert_allclose(scores[np.isfinite(scores)], expected[np.isfinite(expected)], atol=1e-12)


def test_rank_one_bank(backend):
    cand = np.zeros((3, 2, 2))
    cand[:, 0] = [[0, 0], [1, 1], [2, 2]]
    cand[:, 1] = [[0, 0], [4, 0], [0, 3]]
    line = eig_basis(np.array([[0, 0], [1, 0], [2, 0]]))
    scores = backend.score_combinations(cand, [2, 2, 2], line @ line.T, 1, 1e-8)
    assert scores[0] == pytest.approx(1.0, abs=1e-12)
    assert scores[7] == -np.inf  # (0,0), (4,0), (0,3) has rank 2


def test_backends_agree_on_large_enumeration():
    backends = available_backends()
    if len(backends) < 2:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(7)
    cand = rng.uniform(0, 100, size=(8, 3, 2))
    counts = np.full(8, 3)
    v = eig_basis(rng.uniform(0, 100, size=(8, 2)))
    a = backends["python"].score_combinations(cand, counts, v @ v.T, 2, 1e-8)
    b = backends["cython"].score_combinations(cand, counts, v @ v.T, 2, 1e-8)
    assert len(a) == 6561
    np.testing.assert_allclose(a, b, atol=1e-12)
    assert np.argmax(a) == np.argmax(b)
