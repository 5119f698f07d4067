import numpy as np
import pytest

from elbowssr.errors import (
    BudgetExceededError,
    DimensionMismatchError,
    InvalidConfigurationError,
    RefinementFailedError,
)
from elbowssr.harness import HarnessConfig, render_heatmaps, sample_landmark_instance, stream
from elbowssr.heatmap import CandidateSet, DecodeConfig, HeatmapStack, image_to_heatmap
from elbowssr.ssr import (
    DegenerateTrainingShapeWarning,
    ReferenceBank,
    bank_size,
    build_reference_bank,
    combination_count,
    decode_landmarks,
    enumerate_combinations,
    per_image_bank_factory,
    refine_batch,
    refine_landmarks,
    score_combinations,
    ssr_select,
)
from oracles import brute_force_select, gaussian_patch

HC = HarnessConfig()


@pytest.fixture(scope="module")
def training():
    return [sample_landmark_instance(HC, stream(11, 0, i)) for i in range(300)]


@pytest.fixture(scope="module")
def bank(training):
    return build_reference_bank(training, 0.1, seed=3)


def cset(*lists):
    return CandidateSet(tuple(np.array([(x, y, 1.0 - 0.01 * i) for i, (x, y) in enumerate(c)]) for c in lists))


def test_bank_size_rounds_up():
    assert bank_size(2030, 0.033) == 67
    assert bank_size(30, 0.1) == 3


def test_bank_of_2030_has_67_members():
    shapes = [sample_landmark_instance(HC, stream(1, 0, i)).points for i in range(2030)]
    b = build_reference_bank(shapes, 0.033, seed=0)
    assert b.M == 67 and b.K == 8 and b.effective_dim == 2
    assert len(set(b.indices)) == 67


def test_bank_full_fraction_uses_everything(training):
    assert build_reference_bank(training[:20], 1.0).indices == tuple(range(20))


def test_bank_is_deterministic(training):
    a = build_reference_bank(training, 0.1, seed=5)
    b = build_reference_bank(training, 0.1, seed=5)
    assert a.indices == b.indices
    np.testing.assert_array_equal(a.mean_projection, b.mean_projection)
    assert build_reference_bank(training, 0.1, seed=6).indices != a.indices


def test_bank_skips_degenerate_shapes():
    good = np.array([[0, 0], [4, 0], [0, 3], [5, 5]], dtype=float)
    shapes = [good, np.ones((4, 2)), good + 1, np.array([[0, 0], [1, 1], [2, 2], [3, 3.0]])]
    with pytest.warns(DegenerateTrainingShapeWarning):
        b = build_reference_bank(shapes, 1.0)
    assert b.indices == (0, 2)
    with pytest.raises(InvalidConfigurationError), pytest.warns(DegenerateTrainingShapeWarning):
        build_reference_bank([np.ones((4, 2))] * 3, 1.0)


def test_bank_rejects_bad_arguments(training):
    with pytest.raises(InvalidConfigurationError):
        build_reference_bank([], 0.5)
    with pytest.raises(InvalidConfigurationError):
        build_reference_bank(training, 0.0)
    with pytest.raises(InvalidConfigurationError):
        ReferenceBank(())


def test_bank_is_immutable(bank):
    with pytest.raises(ValueError):
        bank.mean_projection[0, 0] = 1.0
    with pytest.raises(AttributeError):
        bank.bases = ()


def test_enumerate_counts():
    assert len(enumerate_combinations(cset(*[[(i, i * i)] for i in range(8)]))) == 1
    combos = enumerate_combinations(cset([(0, 0)], [(1, 0), (2, 5)], [(3, 1)]))
    assert len(combos) == 2
    assert combos[0].choice == (0, 0, 0) and combos[1].choice == (0, 1, 0)
    assert combos[1].points.tolist() == [[0, 0], [2, 5], [3, 1]]
    three = cset(*[[(0, 0), (10, 0), (0, 10)]] * 8)
    assert combination_count(three) == 6561
    assert [c.index for c in enumerate_combinations(three)[:3]] == [0, 1, 2]


def test_enumerate_budget():
    big = cset(*[[(0, 0), (10, 0), (0, 10)]] * 8)
    with pytest.raises(BudgetExceededError, match="6561"):
        enumerate_combinations(big, budget=1000)


def test_single_candidates_skip_the_bank():
    c = cset([(0, 0)], [(4, 1)], [(2, 7)])
    assert ssr_select(c, None).index == 0


def test_triangle_toy_prefers_true_vertex():
    # K = 3 triangles are all affine-equivalent, so the spurious point only
    # loses when it collapses the triangle onto a line
    template = np.array([[0, 0], [5, 8], [10, 0]], dtype=float)
    b = build_reference_bank([template, template * 2 + 3], 1.0)
    c = cset([(0, 0)], [(40, 0), (5, 8)], [(10, 0)])
    chosen = ssr_select(c, b)
    assert chosen.choice == (0, 1, 0)
    best, _ = brute_force_select([cc.tolist() for cc in c.candidates], [template, template * 2 + 3])
    assert best == chosen.index


def _decoy_heatmaps():
    gt = sample_landmark_instance(HC, stream(99, 1, 0))
    h = np.array(render_heatmaps(gt, HC).values)
    hm = image_to_heatmap(gt.points, HC.heatmap_size, HC.image_size)
    w, hh = HC.heatmap_size
    # landmark 3 gets a stronger decoy 12 heatmap px to the right
    h[2] += 1.1 * gaussian_patch(round(hm[2, 0]) + 12, round(hm[2, 1]), HC.gaussian_sigma, w, hh)
    return gt, HeatmapStack(h)


def test_geometry_beats_heatmap_value(bank, training):
    gt, h = _decoy_heatmaps()
    naive = decode_landmarks(h, HC.image_size)
    refined = refine_landmarks(h, DecodeConfig(), bank, HC.image_size)
    err_naive = np.hypot(*(naive.points[2] - gt.points[2]))
    err_ssr = np.hypot(*(refined.points[2] - gt.points[2]))
    assert err_naive > 40 and err_ssr < 1.0
    assert refined.candidates.counts.tolist() == [1, 1, 2, 1, 1, 1, 1, 1]
    # the decoy is the top-valued candidate yet loses the geometric vote
    assert refined.candidates[2][0, 2] > refined.candidates[2][1, 2]
    best, _ = brute_force_select([c.tolist() for c in refined.candidates.candidates],
                                 [training[i].points for i in bank.indices])
    assert best == 1


@pytest.mark.parametrize("seed", range(20))
def test_selection_matches_brute_force(seed, training, backend):
    rng = np.random.default_rng(seed)
    base = sample_landmark_instance(HC, stream(seed, 7, 0)).points
    lists = []
    for k in range(8):
        n = 1 + int(rng.random() < 0.35)
        pts = [base[k] + rng.normal(0, 2, 2)]
        pts += [base[k] + rng.uniform(-60, 60, 2) for _ in range(n - 1)]
        rng.shuffle(pts)
        lists.append([(x, y, 1.0) for x, y in pts])
    c = CandidateSet(tuple(np.array(l) for l in lists))
    b = build_reference_bank(training, 0.05, seed=seed)
    chosen = ssr_select(c, b, backend=backend)
    best, _ = brute_force_select(lists, [training[i].points for i in b.indices])
    assert chosen.index == best


@pytest.mark.parametrize("seed", range(5))
def test_argmax_invariant_to_translation_and_scale(seed, bank):
    rng = np.random.default_rng(seed)
    base = sample_landmark_instance(HC, stream(seed, 8, 0)).points
    lists = [np.array([(*(base[k] + rng.normal(0, 30, 2)), 1.0) for _ in range(2)]) for k in range(8)]
    c = CandidateSet(tuple(lists))
    moved = CandidateSet(tuple(np.column_stack([l[:, :2] * 2.5 + [17, -40], l[:, 2]]) for l in lists))
    assert ssr_select(c, bank).index == ssr_select(moved, bank).index


def test_all_degenerate_fails(bank):
    same = [(5, 5), (9, 9)]
    c = cset(*[same] * 8)
    # every combination lies on y = x
    with pytest.raises(RefinementFailedError):
        ssr_select(c, bank)


def test_dimension_mismatch(bank):
    c = cset([(0, 0), (1, 5)], [(4, 1)], [(2, 7)])
    with pytest.raises(DimensionMismatchError):
        ssr_select(c, bank)
    with pytest.raises(DimensionMismatchError):
        score_combinations(c, bank)


def test_multiple_candidates_need_a_bank():
    with pytest.raises(InvalidConfigurationError):
        ssr_select(cset([(0, 0), (1, 5)], [(4, 1)], [(2, 7)]), None)


def test_clean_heatmaps_are_unchanged_by_ssr(bank):
    gt = sample_landmark_instance(HC, stream(5, 1, 3))
    h = render_heatmaps(gt, HC)
    a = decode_landmarks(h, HC.image_size).points
    b = refine_landmarks(h, DecodeConfig(), bank, HC.image_size).points
    assert np.array_equal(a, b)
    np.testing.assert_allclose(b, gt.points, atol=0.05 * 4)


def test_single_candidate_config_matches_plain_pipeline(bank):
    _, h = _decoy_heatmaps()
    a = decode_landmarks(h, HC.image_size).points
    b = refine_landmarks(h, DecodeConfig(max_candidates=1), bank, HC.image_size).points
    assert np.array_equal(a, b)


def test_budget_exceeded_gives_no_output(bank):
    _, h = _decoy_heatmaps()
    with pytest.raises(BudgetExceededError):
        refine_landmarks(h, DecodeConfig(), bank, HC.image_size, budget=1)


def test_two_landmarks_bypass_ssr():
    ch1 = gaussian_patch(10, 10, 2, 40, 40) + 1.1 * gaussian_patch(30, 30, 2, 40, 40)
    ch2 = gaussian_patch(20, 5, 2, 40, 40)
    res = refine_landmarks(HeatmapStack(np.stack([ch1, ch2])), DecodeConfig(), None, (40, 40))
    np.testing.assert_allclose(res.points[0], [30, 30], atol=0.05)


def test_batch_isolates_failures(bank):
    gt = sample_landmark_instance(HC, stream(5, 1, 4))
    good = render_heatmaps(gt, HC)
    # two peaks per channel on one row: every combination is collinear
    bad_vals = np.zeros((8, 20, 20))
    for k in range(8):
        bad_vals[k, 5, 5] = bad_vals[k, 5, 15] = 1.0 - 0.01 * (k == 0)
    bad = HeatmapStack(bad_vals)
    results, failures = refine_batch({"b": bad, "a": good}, DecodeConfig(), HC.image_size, bank=bank)
    assert list(results) == ["a"] and list(failures) == ["b"]
    assert isinstance(failures["b"], RefinementFailedError)


def test_per_image_banks(training):
    factory = per_image_bank_factory(training, 0.05, seed=2)
    assert factory("img1").indices == factory("img1").indices
    assert factory("img1").indices != factory("img2").indices


def test_rounding_level_ties_go_to_lowest_index(backend):
    # every non-collinear triangle is affine-equivalent to every other, so all
    # valid combinations score 1 up to rounding
    rng = np.random.default_rng(4)
    lists = [rng.uniform(0, 100, size=(3, 2)) for _ in range(3)]
    c = CandidateSet(tuple(np.column_stack([l, np.ones(3)]) for l in lists))
    b = build_reference_bank([np.array([[0, 0], [4, 1], [1, 5.0]])], 1.0)
    scores = score_combinations(c, b, backend=backend)
    assert np.all(np.abs(scores - 1) < 1e-12)
    assert ssr_select(c, b, backend=backend).index == 0
