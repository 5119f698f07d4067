import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from elbowssr.errors import InvalidInputError
from elbowssr.metrics import LandmarkSet
from elbowssr.prompts import DuplicatePromptWarning, generate_prompts

# x_i = 10 * i, y_i = i * i
PTS = np.array([(10.0 * i, float(i * i)) for i in range(1, 9)])


def make(points=PTS):
    with pytest.warns(DuplicatePromptWarning):
        return generate_prompts(points)


def test_substitution_into_formulas():
    p = make()
    assert [xy for xy, _ in p.positives] == [tuple(PTS[i]) for i in range(2, 8)]
    assert [i for _, i in p.positives] == [3, 4, 5, 6, 7, 8]
    assert [xy for xy, _ in p.negatives] == [
        (40.0, 9.0),
        (40.0, 9.0),
        (50.0, 16.0),
        (50.0, 34.0),  # 2 * 25 - 16
        (80.0, 34.0),
        (15.0, 2.5),  # ((10 + 20) / 2, (1 + 4) / 2)
    ]
    assert p.warnings == ("duplicate-negative",)


def test_identical_first_two_landmarks():
    pts = PTS.copy()
    pts[1] = pts[0]
    assert make(pts).negatives[5][0] == tuple(pts[0])


def test_equal_y4_y5():
    pts = PTS.copy()
    pts[4, 1] = pts[3, 1]
    assert make(pts).negatives[3][0] == (pts[4, 0], pts[4, 1])


def test_payload_shape():
    payload = json.loads(make(LandmarkSet("x", PTS)).to_json())
    assert set(payload) == {"positives", "negatives"}
    assert len(payload["positives"]) == len(payload["negatives"]) == 6


@pytest.mark.parametrize("bad", [PTS[:7], np.full((8, 2), np.nan)])
def test_rejects_wrong_input(bad):
    with pytest.raises(InvalidInputError):
        generate_prompts(bad)


@settings(max_examples=100, deadline=None)
@given(pts=arrays(np.float64, (8, 2), elements=st.floats(-500, 500)),
       t=arrays(np.float64, (2,), elements=st.floats(-500, 500)))
def test_translation_equivariance(pts, t):
    with pytest.warns(DuplicatePromptWarning):
        a = generate_prompts(pts)
        b = generate_prompts(pts + t)
    for (pa, _), (pb, _) in zip(a.positives + a.negatives, b.positives + b.negatives):
        np.testing.assert_allclose(np.add(pa, t), pb, atol=1e-9)
