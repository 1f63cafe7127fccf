import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hsigraph import preference_opt as P
from hsigraph.rng import KeyedStream

CFG = P.DpoConfig(beta=2.0, seed=3)


def zero_model():
    return P.DenoiserModel(np.zeros(P.NUM_PARAMS))


def model_with(W1=None, b1=None, W2=None, b2=None):
    m = zero_model()
    parts = m.unpack()
    for dst, src in zip(parts, (W1, b1, W2, b2)):
        if src is not None:
            dst[...] = src
    return m


def test_parameter_count():
    assert P.IN_DIM == 76 and P.OUT_DIM == 64
    assert P.NUM_PARAMS == 64 * 76 + 64 + 64 * 64 + 64 == 9088


def test_per_sample_loss_examples():
    x = P.synth_pairs(1, seed=0)[0].x_w
    eps = KeyedStream(1).normal(P.OUT_DIM)
    assert P.per_sample_loss(model_with(b2=eps), x, 7, eps, CFG) == 0.0
    assert P.per_sample_loss(zero_model(), x, 7, eps, CFG) == pytest.approx(np.mean(eps ** 2), abs=1e-15)
    with pytest.raises(ValueError):
        P.per_sample_loss(zero_model(), x, CFG.timesteps, eps, CFG)


def test_loss_ignores_prompt_when_prompt_weights_are_zero():
    m = P.DenoiserModel.init(4, out_scale=0.5)
    W1 = m.unpack()[0]
    W1[:, -P.NUM_PROMPTS:] = 0.0
    pts = P.synth_pairs(1, seed=2)[0].x_w.points
    eps = KeyedStream(2).normal(P.OUT_DIM)
    vals = {P.per_sample_loss(m, P.TrajectorySample(pts, p), 11, eps, CFG) for p in range(P.NUM_PROMPTS)}
    assert len(vals) == 1


def test_dpo_objective_examples():
    assert P.dpo_objective(0.4, 0.4, 5000.0) == pytest.approx(math.log(2), abs=1e-12)
    assert P.dpo_objective(0.0, 1.0, 2.0) == pytest.approx(math.log1p(math.exp(-1)), abs=1e-12)
    assert float(P.dpo_objective(0.0, 1.0, 2.0)) == pytest.approx(0.313262, abs=1e-6)
    assert np.isfinite(P.dpo_objective(1e6, 0.0, 5000.0))
    with pytest.raises(ValueError):
        P.dpo_objective(0.0, 0.0, 0.0)


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.01, 100), st.floats(0.001, 5))
def test_dpo_objective_monotone(lw, ll, beta, dec):
    assert P.dpo_objective(lw - dec, ll, beta) <= P.dpo_objective(lw, ll, beta)
    if 0.5 * beta * abs(lw - ll) < 30:
        assert P.dpo_objective(lw - dec, ll, beta) < P.dpo_objective(lw, ll, beta)


def test_dpo_loss_matches_objective_of_per_sample_losses():
    m = P.DenoiserModel.init(1, out_scale=0.3)
    pair = P.synth_pairs(1, seed=5)[0]
    t, eps = P.draws(1, CFG, 9)
    lw = P.per_sample_loss(m, pair.x_w, int(t[0]), eps[0], CFG)
    ll = P.per_sample_loss(m, pair.x_l, int(t[0]), eps[0], CFG)
    assert P.dpo_loss(m, pair, 2.0, t, eps, CFG) == pytest.approx(float(P.dpo_objective(lw, ll, 2.0)), abs=1e-14)


def test_gradient_examples():
    m = P.DenoiserModel.init(2, out_scale=0.3)
    pairs = P.synth_pairs(4, seed=1)
    t, eps = P.draws(4, CFG, 1)
    norms = [np.linalg.norm(P.gradient(m, pairs, P.DpoConfig(beta=b), t, eps)[1]) for b in (1.0, 1e-2, 1e-4)]
    assert norms[0] > norms[1] > norms[2] and norms[2] < 1e-3 * norms[0]
    one = P.gradient(m, pairs[:1], CFG, t[:1], eps[:1])
    dup = P.gradient(m, pairs[:1] * 3, CFG, np.repeat(t[:1], 3), np.repeat(eps[:1], 3, axis=0))
    assert dup[0] == pytest.approx(one[0], abs=1e-15)
    assert np.allclose(dup[1], one[1], atol=1e-15)
    with pytest.raises(ValueError):
        P.gradient(m, [], CFG, t, eps)


def test_gradient_finite_differences_reference_variant():
    cfg = P.DpoConfig(beta=2.0, reference=True)
    ref = P.DenoiserModel.init(7, out_scale=0.3)
    m = ref.copy()
    m.params += KeyedStream(8).normal(P.NUM_PARAMS) * 0.01
    pairs = P.synth_pairs(3, seed=4)
    t, eps = P.draws(3, cfg, 2)
    _, g = P.gradient(m, pairs, cfg, t, eps, ref)
    for i in KeyedStream(9).integers(0, P.NUM_PARAMS, 30):
        a, b = m.copy(), m.copy()
        a.params[i] += 1e-5
        b.params[i] -= 1e-5
        num = (P.dpo_loss(a, pairs, 2.0, t, eps, cfg, ref) - P.dpo_loss(b, pairs, 2.0, t, eps, cfg, ref)) / 2e-5
        assert abs(num - g[i]) <= 1e-4 * max(abs(num), abs(g[i]), 1e-8)


@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_non_finite_gradient_reports_index():
    m = P.DenoiserModel.init(0)
    m.params[P.NUM_PARAMS - 1] = np.inf
    t, eps = P.draws(1, CFG, 0)
    with pytest.raises(P.NumericalError, match="parameter"):
        P.gradient(m, P.synth_pairs(1), CFG, t, eps)


def oracle_slide(points, contact=0.5):
    vals = [abs(d) for d, h in points if h < contact]
    return sum(vals) / len(vals) if vals else 0.0


def test_synth_pairs():
    pairs = P.synth_pairs(100, seed=11)
    assert len(pairs) == 100
    gaps = []
    for p in pairs:
        sw, sl = oracle_slide(p.x_w.points), oracle_slide(p.x_l.points)
        assert sw < sl
        assert sl - sw >= P.MARGIN_FLOOR - 1e-12
        assert P.slide_score(p.x_w.points) == pytest.approx(sw, abs=1e-15)
        gaps.append(sl - sw)
        # only contact-frame displacement differs
        same = p.x_w.points[:, 1] >= 0.5
        assert np.array_equal(p.x_w.points[same], p.x_l.points[same])
    again = P.synth_pairs(100, seed=11)
    assert all(np.array_equal(a.x_w.points, b.x_w.points) and np.array_equal(a.x_l.points, b.x_l.points)
               for a, b in zip(pairs, again))
    assert np.allclose(gaps, [P.slide_score(p.x_l.points) - P.slide_score(p.x_w.points) for p in pairs], atol=0)
    assert {p.prompt for p in pairs} == set(range(P.NUM_PROMPTS))


def test_train_examples():
    pairs = P.synth_pairs(200, seed=0)
    model = P.DenoiserModel.init(0)
    res = P.train(model, pairs, P.DpoConfig(steps=500))
    assert res.trace[-1] < math.log(2)
    again = P.train(model, pairs, P.DpoConfig(steps=500))
    assert res.trace == again.trace
    frozen = P.train(model, pairs, P.DpoConfig(lr=0.0, steps=5))
    assert np.array_equal(frozen.model.params, model.params)


def test_label_swap_inverts_margin():
    train = P.synth_pairs(200, seed=0)
    held = P.synth_pairs(200, seed=1)
    cfg = P.DpoConfig(steps=300)
    m0 = P.DenoiserModel.init(0)
    fwd = P.preference_margins(P.train(m0, train, cfg).model, held, cfg).mean()
    rev = P.preference_margins(P.train(m0, [p.swapped() for p in train], cfg).model, held, cfg).mean()
    assert fwd > 0 > rev


def test_divergence_aborts_with_trace():
    pairs = P.synth_pairs(16, seed=0)
    with pytest.raises(P.TrainingDiverged) as info:
        P.train(P.DenoiserModel.init(0, out_scale=1.0), pairs, P.DpoConfig(beta=5000.0, lr=5.0, steps=200))
    assert len(info.value.trace) >= 2


def test_accuracy_chance_and_hand_built_perfect_model():
    held = P.synth_pairs(200, seed=1)
    acc = P.eval_preference_accuracy(P.DenoiserModel.init(5), held, CFG)
    assert abs(acc - 0.5) <= 0.1
    # linear-regime tanh MLP that echoes x_t: far-from-zero samples always lose
    s = 1e-4
    W1 = np.zeros((P.HIDDEN, P.IN_DIM))
    W1[:, :P.OUT_DIM] = s * np.eye(P.OUT_DIM)
    hand = model_with(W1=W1, W2=np.eye(P.OUT_DIM) / s)
    z = np.zeros((P.SEQ_LEN, 2))
    pairs = [P.PreferencePair(P.TrajectorySample(z, k % 4), P.TrajectorySample(z + 5.0, k % 4)) for k in range(40)]
    assert P.eval_preference_accuracy(hand, pairs, CFG) == 1.0


def test_checkpoint_round_trip(tmp_path):
    m = P.DenoiserModel.init(3, out_scale=0.2)
    P.save_checkpoint(tmp_path / "m.ckpt", m, seed=3, steps=12)
    back, header = P.load_checkpoint(tmp_path / "m.ckpt")
    assert np.array_equal(back.params, m.params)
    assert header["steps"] == 12 and header["params"] == P.NUM_PARAMS
    text = P.trace_csv([0.7, 0.6])
    assert text.splitlines() == ["step,loss", "0,0.7", "1,0.6"]


def test_pair_validation():
    a = P.TrajectorySample(np.zeros((P.SEQ_LEN, 2)), 0)
    b = P.TrajectorySample(np.zeros((P.SEQ_LEN, 2)), 1)
    with pytest.raises(ValueError):
        P.PreferencePair(a, b)
    with pytest.raises(ValueError):
        P.TrajectorySample(np.full((P.SEQ_LEN, 2), np.nan), 0)
