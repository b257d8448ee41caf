from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from balanceroute.model import ActiveEntry, Request
from balanceroute.predictor import (OutputHistory, PredictionCache, PredictionState, Predictor,
                                    PredictorConfig, PredictorKind, Refresh, composite_contribution,
                                    exactmatch_contribution, mu_rem_survival, oracle_contribution,
                                    p_fin_survival, refresh_prediction)


def brute_stages(outputs, a, H):
    """Direct corpus scan with exact rationals."""
    alive = [o for o in outputs if o > a]
    if not alive:
        return Fraction(1), Fraction(H)
    fin = [o for o in alive if o <= a + H]
    p = Fraction(len(fin), len(alive))
    if not fin:
        return p, Fraction(H)
    return p, Fraction(sum(o - a for o in fin), len(fin))


H4 = OutputHistory([5, 10, 15, 20])


def test_p_fin_examples():
    assert p_fin_survival(8, 5, H4) == pytest.approx(1 / 3, abs=1e-15)
    assert p_fin_survival(0, 100, OutputHistory([5, 10])) == 1.0
    assert p_fin_survival(25, 5, H4) == 1.0


def test_mu_rem_examples():
    assert mu_rem_survival(8, 5, H4) == 2.0
    assert mu_rem_survival(0, 100, H4) == 12.5
    assert mu_rem_survival(10, 5, OutputHistory([5])) == 5.0


def test_history_must_be_nonempty():
    with pytest.raises(ValueError):
        OutputHistory([])


@pytest.mark.parametrize("p,mu,H,expected", [(0.0, 37.0, 80, 80.0), (1.0, 10.0, 80, 10.0), (0.5, 10.0, 80, 45.0)])
def test_composite_examples(p, mu, H, expected):
    assert composite_contribution(p, mu, H) == expected


@pytest.mark.parametrize("r,H,expected", [(3, 80, 3), (500, 80, 80), (80, 80, 80)])
def test_oracle_examples(r, H, expected):
    assert oracle_contribution(r, H) == expected


def test_exactmatch_examples():
    hist = OutputHistory([5, 10, 15, 20, 300], keyed={"k": [12]})
    assert exactmatch_contribution("k", 0, 80, hist) == 12.0
    for a in (0, 3, 9, 14, 50):
        marginal = composite_contribution(p_fin_survival(a, 80, hist), mu_rem_survival(a, 80, hist), 80)
        assert exactmatch_contribution("missing", a, 80, hist) == marginal
        assert exactmatch_contribution(None, a, 80, hist) == marginal
    # age 100 is past the keyed max (12) but inside marginal support (300):
    # the keyed bucket's own fallback applies (p=1, mu=H)
    assert exactmatch_contribution("k", 100, 80, hist) == 80.0
    assert p_fin_survival(100, 80, hist) < 1.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 400), min_size=1, max_size=1000))
def test_survival_matches_brute_force(outputs):
    hist = OutputHistory(outputs)
    top = max(outputs)
    for a in range(0, top + 3, max(1, top // 25)):
        for H in (1, 2, 7, 40, 80, 500):
            p, mu = brute_stages(outputs, a, H)
            assert abs(p_fin_survival(a, H, hist) - float(p)) <= 1e-12
            assert abs(mu_rem_survival(a, H, hist) - float(mu)) <= 1e-12


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 1.0), st.integers(1, 200))
def test_composite_monotone_in_p(p1, p2, mu_frac, H):
    mu = mu_frac * H
    lo, hi = sorted((p1, p2))
    if mu < H:
        assert composite_contribution(hi, mu, H) <= composite_contribution(lo, mu, H) + 1e-12
    assert composite_contribution(lo, float(H), H) == pytest.approx(H)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 300), min_size=1, max_size=200), st.integers(0, 320), st.integers(1, 120))
def test_exactmatch_empty_index_equals_survival(outputs, a, H):
    hist = OutputHistory(outputs)
    assert exactmatch_contribution("anything", a, H, hist) == composite_contribution(
        p_fin_survival(a, H, hist), mu_rem_survival(a, H, hist), H)


def test_refresh_rule_examples():
    cfg = PredictorConfig(PredictorKind.SURVIVAL, horizon=80)
    never = lambda a: pytest.fail("no refresh expected")  # noqa: E731
    assert refresh_prediction(PredictionState(10.0, 0, 80), 5, cfg, never).c_hat == 9.0
    gated = refresh_prediction(PredictionState(1.0, 3, 80), 5, cfg, lambda a: Refresh(80.0, 0.2, 7.0, True))
    assert gated == PredictionState(80.0, 0, 80)

    class FixedStages:
        def _bucket(self, key, min_samples):
            return self

        def stages(self, a, H):
            return 0.9, 4.0

    # p=0.9, mu=4 -> composite 0.1*80 + 0.9*4
    r = Predictor(cfg, FixedStages()).query(Request(0, 0, 5, 100), 5)
    assert r.c_hat == pytest.approx(max(1.0, 0.1 * 80 + 0.9 * 4), abs=1e-12)
    assert not r.gated


def test_gate_resets_to_anchor():
    # every training output is far beyond the window: p_fin = 0
    pred = Predictor(PredictorConfig(PredictorKind.SURVIVAL, horizon=10), OutputHistory([1000] * 5))
    r = pred.query(Request(0, 0, 5, 20), 0)
    assert r.gated and r.c_hat == 10.0


def test_delta_t_default_is_half_horizon():
    assert PredictorConfig(horizon=80).delta_t == 40
    assert PredictorConfig(horizon=1).delta_t == 1
    assert PredictorConfig(horizon=80, refresh_period=7).delta_t == 7


def _eager_trace(pred, req, steps):
    """c_hat per step by stepping refresh_prediction once per decode step."""
    st_ = PredictionState(pred.query(req, 0).c_hat, 0, pred.H)
    out = [st_.c_hat]
    for age in range(1, steps):
        st_ = refresh_prediction(st_, age, pred.config, lambda a: pred.query(req, a))
        out.append(st_.c_hat)
    return out


@pytest.mark.parametrize("kind", list(PredictorKind))
@pytest.mark.parametrize("dt", [None, 1, 3, 25])
def test_lazy_cache_matches_eager_stepping(kind, dt):
    rng = np.random.default_rng(11)
    train = [Request(i, 0, 10, int(o), prompt_key=f"p{i % 7}")
             for i, o in enumerate(rng.lognormal(3.5, 1.0, 400).astype(int) + 1)]
    hist = OutputHistory.fit(train)
    cfg = PredictorConfig(kind, horizon=30, refresh_period=dt)
    pred = Predictor(cfg, hist)
    for j, o in enumerate([1, 2, 5, 29, 31, 60, 250]):
        req = Request(1000 + j, 0, 9, o, prompt_key=f"p{j}")
        eager = _eager_trace(pred, req, o)
        cache = PredictionCache(pred)
        entry = ActiveEntry(req, assign_step=17)
        cache.admit(entry)
        lazy = [cache.c_hat(entry, 17 + t) for t in range(o)]
        assert lazy == eager
        assert all(1.0 <= c <= 30.0 for c in lazy)


def test_oracle_is_exact_inside_window():
    pred = Predictor(PredictorConfig(PredictorKind.ORACLE, horizon=80))
    req = Request(0, 0, 5, 50)
    assert _eager_trace(pred, req, 50) == [float(50 - a) for a in range(50)]


def test_fit_builds_keyed_index():
    hist = OutputHistory.fit([Request(0, 0, 1, 5, "a"), Request(1, 0, 1, 9, "a"), Request(2, 0, 1, 7)])
    assert hist.outputs == [5, 7, 9]
    assert hist.keys() == ["a"] and hist.key_size("a") == 2
    assert hist.cdf(7) == pytest.approx(2 / 3)
