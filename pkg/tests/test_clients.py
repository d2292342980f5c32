import numpy as np
import pytest
from scipy.stats import norm

from conftest import make_page
from oracles import ceil_exponential_mean, frecency_by_hand
from frecency_fl.clients import (
    STREAM_EVAL,
    STREAM_TRAIN,
    SyntheticClientPool,
    client_round_update,
    gen_history,
    noisy_argmax,
    simulate_click,
    simulate_evaluation,
    simulate_search_round,
    typed_text,
    ClientHistory,
)
from frecency_fl.config import ClientConfig, ConfigError, IntDist
from frecency_fl.frecency import DEFAULT_PARAMS, ModelParams, VisitType, page_features
from frecency_fl.ranking_loss import event_loss

SMALL = ClientConfig(pages_per_client=IntDist("uniform", low=10, high=30))


def test_history_deterministic():
    a, b = gen_history(7, SMALL, seed=3), gen_history(7, SMALL, seed=3)
    assert a.pages == b.pages
    assert gen_history(8, SMALL, seed=3).pages != a.pages


def test_fast_features_match_page_features():
    hist = gen_history(2, SMALL, seed=1)
    expected = np.stack([page_features(p) for p in hist.pages])
    np.testing.assert_allclose(hist.features, expected, rtol=1e-12)
    theta = DEFAULT_PARAMS.to_array()
    np.testing.assert_allclose(hist.scores(DEFAULT_PARAMS), [frecency_by_hand(p, theta) for p in hist.pages])


def test_history_structure():
    hist = gen_history(0, SMALL, seed=0)
    assert 10 <= len(hist.pages) <= 30
    for p in hist.pages:
        assert 1 <= len(p.visits) <= 10 and p.total_visit_count >= len(p.visits)
        if not p.bookmarked:
            assert all(v.visit_type is not VisitType.BOOKMARKED for v in p.visits)


def test_no_bookmarks_when_fraction_zero():
    cfg = ClientConfig(bookmark_fraction=0.0)
    for cid in range(5):
        hist = gen_history(cid, cfg)
        assert not any(p.bookmarked for p in hist.pages)
        assert not any(v.visit_type is VisitType.BOOKMARKED for p in hist.pages for v in p.visits)


def test_visit_count_mean_matches_ceil_exponential():
    counts = np.concatenate([gen_history(c).visit_counts for c in range(60)])
    expected = ceil_exponential_mean(ClientConfig().visit_frequency_lambda)
    assert counts.mean() == pytest.approx(expected, rel=0.10)


def test_config_validation():
    with pytest.raises(ConfigError):
        ClientConfig(bookmark_fraction=1.5)
    with pytest.raises(ConfigError):
        ClientConfig(visit_type_probs=(0.5, 0.5, 0.5, 0.0))


def test_click_rate_matches_gaussian_noise():
    # Two pages 10 points apart, each score perturbed by N(0, 30).
    rng = np.random.default_rng(0)
    wins = sum(noisy_argmax([10.0, 0.0], 30.0, rng) == 0 for _ in range(10_000))
    assert wins / 10_000 == pytest.approx(norm.cdf(10 / np.sqrt(60)), abs=0.02)


def test_noiseless_click_is_truth_argmax():
    pages = (make_page(0, [(50.0, VisitType.TYPED)]), make_page(1, [(1.0, VisitType.TYPED)]))
    assert simulate_click(pages, DEFAULT_PARAMS, 0.0, np.random.default_rng()) == 1
    with pytest.raises(ValueError):
        simulate_click((), DEFAULT_PARAMS, 1.0, np.random.default_rng())


def test_single_page_client():
    page = make_page(0, [(2.0, VisitType.TYPED)], url="https://only.example/")
    hist = ClientHistory(0, (page,))
    cfg = ClientConfig(searches_per_round=IntDist("fixed", value=1))
    (event,) = simulate_search_round(hist, DEFAULT_PARAMS, DEFAULT_PARAMS, cfg, np.random.default_rng(1))
    assert event.candidates == (page,) and event.selected_index == 0 and event.chars_typed == 1


def test_search_events_well_formed():
    hist = gen_history(4, SMALL, seed=2)
    cfg = ClientConfig(searches_per_round=IntDist("fixed", value=20))
    events = simulate_search_round(hist, DEFAULT_PARAMS, DEFAULT_PARAMS, cfg, hist.round_rng(0))
    assert len(events) == 20
    for e in events:
        assert 1 <= len(e.candidates) <= cfg.display_limit
        assert all(e.query in typed_text(p.url).lower() or e.query in p.url.lower() for p in e.candidates)
        assert 1 <= e.chars_typed == len(e.query)


def test_better_model_means_less_typing():
    # A model that ranks nothing sensibly forces longer prefixes.
    pool = SyntheticClientPool(40, SMALL, seed=5)
    flat = ModelParams((1, 1, 1, 1, 1), (0, 0, 0.0001))
    good = np.mean([e.chars_typed for e in simulate_evaluation(pool, DEFAULT_PARAMS, 500)])
    bad = np.mean([e.chars_typed for e in simulate_evaluation(pool, flat, 500)])
    assert good < bad


def test_round_update_metrics_match_recomputed_loss():
    pool = SyntheticClientPool(10, SMALL, seed=9)
    model = ModelParams((40, 70, 50, 30, 10), (1.2, 0.5, 1.4))
    events = []
    for it in range(20):
        events = pool.round_events(3, model, it)
        if events:
            break
    update = client_round_update(pool.history(3), model, events, it)
    expected = np.mean([event_loss(model, e) for e in events])
    assert update.mean_loss == pytest.approx(expected, rel=1e-12, abs=1e-12)
    assert update.n_examples == len(events)
    assert update.chars_typed == tuple(e.chars_typed for e in events)


def test_duplicate_events_give_same_gradient():
    pool = SyntheticClientPool(10, SMALL, seed=9)
    model = ModelParams((40, 70, 50, 30, 10), (1.2, 0.5, 1.4))
    event = next(e for it in range(50) for e in pool.round_events(1, model, it))
    hist = pool.history(1)
    one = client_round_update(hist, model, [event], 0)
    two = client_round_update(hist, model, [event, event], 0)
    np.testing.assert_allclose(two.gradient, one.gradient, rtol=1e-12)
    assert two.n_examples == 2


def test_no_events_no_update():
    assert client_round_update(gen_history(0, SMALL), DEFAULT_PARAMS, [], 0) is None


def test_sign_only_update():
    pool = SyntheticClientPool(10, SMALL, seed=9)
    model = ModelParams((40, 70, 50, 30, 10), (1.2, 0.5, 1.4))
    for it in range(20):
        full = pool.compute_update(2, model, it)
        if full is not None:
            break
    signed = pool.compute_update(2, model, it, sign_only=True)
    np.testing.assert_array_equal(signed.gradient, np.sign(full.gradient))


def test_streams_are_independent():
    cfg = ClientConfig(pages_per_client=SMALL.pages_per_client, searches_per_round=IntDist("fixed", value=5))
    pool = SyntheticClientPool(5, cfg, seed=1)
    train = pool.round_events(0, DEFAULT_PARAMS, 0, STREAM_TRAIN)
    evaluation = pool.round_events(0, DEFAULT_PARAMS, 0, STREAM_EVAL)
    assert [e.query for e in train] != [e.query for e in evaluation]
    assert [e.query for e in train] == [e.query for e in pool.round_events(0, DEFAULT_PARAMS, 0, STREAM_TRAIN)]


def test_evaluation_reaches_event_target():
    pool = SyntheticClientPool(20, SMALL, seed=0)
    assert len(simulate_evaluation(pool, DEFAULT_PARAMS, 300)) >= 300


def test_click_rate_on_well_separated_pages():
    # True scores 200 and 100; noise difference is N(0, 60).
    pages = (make_page(0, [(2.0, VisitType.FOLLOWED_LINK)], total=2), make_page(1, [(2.0, VisitType.TYPED)]))
    truth = ModelParams((100, 70, 50, 30, 10), (0.5, 2.0, 1.4))
    rng = np.random.default_rng(3)
    rate = np.mean([simulate_click(pages, truth, 30.0, rng) == 1 for _ in range(10_000)])
    assert rate == pytest.approx(norm.cdf(100 / np.sqrt(60)), abs=0.02)


def test_model_equal_to_truth_without_noise_clicks_top():
    cfg = ClientConfig(pages_per_client=SMALL.pages_per_client, click_noise_variance=0.0,
                       searches_per_round=IntDist("fixed", value=30))
    hist = gen_history(5, cfg, seed=1)
    events = simulate_search_round(hist, DEFAULT_PARAMS, DEFAULT_PARAMS, cfg, hist.round_rng(0))
    assert all(e.selected_index == 0 for e in events)


def test_single_event_update_is_its_gradient():
    from frecency_fl.gradients import approx_gradient

    pool = SyntheticClientPool(10, SMALL, seed=9)
    model = ModelParams((40, 70, 50, 30, 10), (1.2, 0.5, 1.4))
    event = next(e for it in range(50) for e in pool.round_events(1, model, it))
    update = client_round_update(pool.history(1), model, [event], 0)
    expected = approx_gradient(lambda p: event_loss(p, event), model)
    np.testing.assert_allclose(update.gradient, expected, rtol=1e-9, atol=1e-12)
