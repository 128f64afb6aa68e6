import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqseg.errors import InvalidArgumentError
from seqseg.mask_ops import dice, dist
from seqseg.metrics import EvalScores, dice_avg, ged, wilcoxon_signed_rank

from .conftest import random_masks


def ged_oracle(preds, labels):
    """Plain loops over every ordered pair, self-pairs included."""
    cross = np.mean([dist(y, p) for y in labels for p in preds])
    yy = np.mean([dist(a, b) for a in labels for b in labels])
    pp = np.mean([dist(a, b) for a in preds for b in preds])
    return 2 * cross - yy - pp


def wilcoxon_oracle(a, b):
    """Exact p-value by listing all 2**n sign patterns."""
    d = np.asarray(a, float) - np.asarray(b, float)
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return 1.0
    mags = np.abs(d)
    ranks = np.array([np.sum(mags < m) + (np.sum(mags == m) + 1) / 2 for m in mags])
    observed = min(ranks[d > 0].sum(), ranks[d < 0].sum())
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        w_plus = sum(r for r, s in zip(ranks, signs) if s)
        if min(w_plus, ranks.sum() - w_plus) <= observed:
            hits += 1
    return hits / 2**n


def test_ged_identical_sets_is_zero(rng):
    masks = random_masks(rng, 3)
    assert ged(masks, masks) == 0.0
    assert ged(masks, [masks[2], masks[0], masks[1]]) == 0.0


def test_ged_single_pair():
    y = np.array([[1, 1], [0, 0]])
    p = np.array([[0, 1], [1, 0]])
    assert ged([p], [y]) == pytest.approx(2 * dist(y, p), abs=1e-12)


def test_ged_hand_enumerated_2x2():
    y1 = np.array([[1, 0], [0, 0]])
    y2 = np.array([[1, 1], [0, 0]])
    p1 = np.array([[1, 1], [1, 0]])
    p2 = np.array([[0, 0], [0, 1]])
    # d(y1,p1)=2/3, d(y1,p2)=1, d(y2,p1)=1/3, d(y2,p2)=1; d(y1,y2)=1/2; d(p1,p2)=1
    cross = (2 / 3 + 1 + 1 / 3 + 1) / 4
    within_y = (0 + 0.5 + 0.5 + 0) / 4
    within_p = (0 + 1 + 1 + 0) / 4
    expected = 2 * cross - within_y - within_p
    assert ged([p1, p2], [y1, y2]) == pytest.approx(expected, abs=1e-12)
    assert ged([p1, p2], [y1, y2]) == pytest.approx(ged_oracle([p1, p2], [y1, y2]), abs=1e-12)


def test_ged_errors():
    with pytest.raises(InvalidArgumentError):
        ged([], [np.ones((2, 2))])
    with pytest.raises(InvalidArgumentError):
        ged([np.ones((2, 2))], [np.ones((3, 3))])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 5))
def test_ged_properties(seed, m, k):
    rng = np.random.default_rng(seed)
    preds, labels = random_masks(rng, m), random_masks(rng, k)
    value = ged(preds, labels)
    assert value == pytest.approx(ged_oracle(preds, labels), abs=1e-12)
    assert value == pytest.approx(ged(labels, preds), abs=1e-12)
    order = rng.permutation(m)
    assert value == pytest.approx(ged([preds[i] for i in order], labels), abs=1e-12)


def test_dice_avg_examples(rng):
    m = random_masks(rng, 1)[0]
    m[0, 0] = 1
    assert dice_avg([m, m, m], [m, m]) == pytest.approx(1.0)
    assert dice_avg([1 - m, 1 - m, m], [m]) == pytest.approx(0.0, abs=1e-6)
    value = dice_avg([[[1]], [[1]], [[0]]], [[[1]], [[0]]])
    assert value == pytest.approx(np.mean([dice([[1]], [[1]]), dice([[1]], [[0]])]))
    assert value == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(InvalidArgumentError):
        dice_avg([], [m])


def test_dice_avg_permutation_invariant(rng):
    preds, labels = random_masks(rng, 5), random_masks(rng, 3)
    ref = dice_avg(preds, labels)
    assert dice_avg(preds[::-1], labels[::-1]) == ref


def test_wilcoxon_examples():
    assert wilcoxon_signed_rank([1, 2, 3], [1, 2, 3])[1] == 1.0
    stat, p = wilcoxon_signed_rank([1.1, 2.2, 3.3, 4.4, 5.5], [1, 2, 3, 4, 5])
    assert stat == 0.0
    assert p == 2 / 2**5 == 0.0625
    with pytest.raises(InvalidArgumentError):
        wilcoxon_signed_rank([1, 2], [1])


def test_wilcoxon_exact_against_enumeration(rng):
    for n in range(1, 13):
        for _ in range(4):
            a = rng.normal(size=n)
            b = a + rng.normal(0.3, 1.0, size=n)
            p = wilcoxon_signed_rank(a, b)[1]
            assert p == wilcoxon_oracle(a, b)
            assert wilcoxon_signed_rank(b, a)[1] == p


def test_wilcoxon_ties_and_zeros():
    a = [1, 2, 3, 4, 5, 6]
    b = [0, 1, 3, 5, 4, 4]  # |d| = 1,1,0,1,1,2
    assert wilcoxon_signed_rank(a, b)[1] == wilcoxon_oracle(a, b)


def test_wilcoxon_normal_approximation_matches_scipy(rng):
    from scipy.stats import wilcoxon

    a = rng.normal(size=40)
    b = a + rng.normal(0.2, 1.0, size=40)
    stat, p = wilcoxon_signed_rank(a, b)
    ref = wilcoxon(a, b, zero_method="wilcox", correction=True, method="approx")
    assert stat == pytest.approx(ref.statistic)
    assert p == pytest.approx(ref.pvalue, rel=1e-9)
    assert 0.0 <= p <= 1.0


def test_eval_scores_serialisation(tmp_path):
    s = EvalScores(["a", "b"], [0.25, -0.125], [0.5, 1.0])
    assert s.num_samples == 2
    assert s.mean_ged == pytest.approx(0.0625)
    assert s.mean_dice_avg == 0.75
    s.write_csv(tmp_path / "x.csv")
    assert (tmp_path / "x.csv").read_text().splitlines()[0] == "sample_id,ged,dice_avg"
    back = EvalScores.read_csv(tmp_path / "x.csv")
    assert back == s
    s.write_json(tmp_path / "x.json")
    assert EvalScores.from_dict(json.loads((tmp_path / "x.json").read_text())) == s
    with pytest.raises(InvalidArgumentError):
        EvalScores(["a"], [0.1, 0.2], [0.3])
