import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_page
from frecency_fl.frecency import DEFAULT_PARAMS, ModelParams, VisitType
from frecency_fl.ranking_loss import EventLoss, LossConfig, SearchEvent, event_loss, svm_loss


def test_svm_loss_examples():
    assert svm_loss([100, 99.9, 50], 0, 1.0) == pytest.approx(0.9)
    assert svm_loss([42], 0, 3.0) == 0.0
    assert svm_loss([10, 20], 0, 0.0) == 10.0


def test_svm_loss_bad_index():
    with pytest.raises(IndexError):
        svm_loss([1.0, 2.0], 2, 1.0)


def test_margin_must_be_positive():
    with pytest.raises(ValueError):
        LossConfig(0.0)


def test_event_validation(typed_page):
    with pytest.raises(ValueError):
        SearchEvent((), 0)
    with pytest.raises(ValueError):
        SearchEvent((typed_page,), 1)


def test_event_loss_examples(typed_page):
    assert event_loss(DEFAULT_PARAMS, SearchEvent((typed_page,), 0), LossConfig(1.0)) == 0.0
    twin = make_page(1, [(2.0, VisitType.TYPED)] * 3)
    assert event_loss(DEFAULT_PARAMS, SearchEvent((typed_page, twin), 0), LossConfig(1.0)) == 1.0
    zero = ModelParams.from_array(np.zeros(8))
    n = 4
    cands = tuple(make_page(i, [(float(i), VisitType.FOLLOWED_LINK)]) for i in range(n))
    assert event_loss(zero, SearchEvent(cands, 2), LossConfig(1.0)) == n - 1


def test_fast_loss_matches_reference():
    rng = np.random.default_rng(4)
    cands = tuple(
        make_page(i, sorted((float(rng.uniform(0, 120)), VisitType.TYPED) for _ in range(3)), total=5)
        for i in range(6)
    )
    event = SearchEvent(cands, 3)
    params = ModelParams((90, 80, 40, 20, 5), (1.3, 1.7, 1.1))
    assert EventLoss(event)(params) == pytest.approx(event_loss(params, event), rel=1e-12)


scores_st = st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=1, max_size=12)


@given(scores_st, st.data(), st.floats(0.01, 100))
def test_nonnegative_and_shift_invariant(scores, data, margin):
    i = data.draw(st.integers(0, len(scores) - 1))
    shift = data.draw(st.floats(-1e3, 1e3))
    loss = svm_loss(scores, i, margin)
    assert loss >= 0
    assert svm_loss(np.add(scores, shift), i, margin) == pytest.approx(loss, rel=1e-9, abs=1e-6)


@given(scores_st, st.data(), st.floats(0.01, 50), st.floats(0, 50))
def test_non_decreasing_in_margin(scores, data, margin, extra):
    i = data.draw(st.integers(0, len(scores) - 1))
    assert svm_loss(scores, i, margin + extra) >= svm_loss(scores, i, margin)


@given(scores_st, st.data(), st.floats(0.01, 50))
def test_zero_iff_separated_by_margin(scores, data, margin):
    i = data.draw(st.integers(0, len(scores) - 1))
    separated = all(s + margin - scores[i] <= 0 for j, s in enumerate(scores) if j != i)
    assert (svm_loss(scores, i, margin) == 0.0) == separated
