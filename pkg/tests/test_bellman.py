"""Bellman function: frozen values, domain handling, sampled inequalities.

Every frozen expectation below is a short hand computation with the
closed form B = 4 (F - f^2 / (v + A)); the comments spell the arithmetic
out so the numbers can be re-derived without running anything.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadic_carleson import (
    AlphaSequence,
    BellmanPoint,
    DomainError,
    MODES,
    PreconditionError,
    ValidationError,
    a_shift_gain,
    bellman_gradient,
    bellman_value,
    bellman_values,
    box_squared_alpha,
    build_tree,
    carleson_normalized,
    certify_tree_embedding,
    concavity_first_order_gap,
    gradient_signs_check,
    leaf_point_mass,
    martingale_split_slack,
    random_tree_measure,
    sample_admissible,
    sample_batch,
    split_compensation,
    tree_split_slack,
    uniform_boundary_measure,
)
from dyadic_carleson.bellman import (
    MartingaleWitness,
    SplitWitness,
    domain_violation,
)


# ---------------------------------------------------------------------------
# closed form
# ---------------------------------------------------------------------------


def test_frozen_values():
    assert bellman_value(BellmanPoint(1, 0, 0, 1)) == 4.0       # 4*(1 - 0/1)
    assert bellman_value(BellmanPoint(1, 1, 0, 1)) == 0.0       # 4*(1 - 1/1)
    assert bellman_value(BellmanPoint(2, 1, 1, 1)) == 6.0       # 4*(2 - 1/2)
    # v + A = 0 forces f = 0 and the value degenerates to 4F
    assert bellman_value(BellmanPoint(1, 0, 0, 0)) == 4.0
    assert bellman_value(BellmanPoint(0, 0, 0, 0)) == 0.0


def test_vectorized_matches_scalar():
    pts = [BellmanPoint(1, 0, 0, 1), BellmanPoint(2, 1, 1, 1),
           BellmanPoint(3, -1, 0.5, 2), BellmanPoint(1, 0, 0, 0)]
    arrays = [np.array([getattr(p, n) for p in pts]) for n in "FfAv"]
    vec = bellman_values(*arrays)
    for i, p in enumerate(pts):
        assert vec[i] == pytest.approx(bellman_value(p), rel=1e-15)
    # scale=1 drops the factor 4
    assert bellman_values(*arrays, scale=1.0)[0] == 1.0


@pytest.mark.parametrize("point,fragment", [
    (BellmanPoint(-1, 0, 0, 1), "F >= 0"),
    (BellmanPoint(1, 0, 0, -1), "v >= 0"),
    (BellmanPoint(1, 0, -1, 1), "A >= 0"),
    (BellmanPoint(1, 0, 2, 1), "A <= v"),
    (BellmanPoint(1, 2, 0, 1), "f\\^2 <= F v"),
    (BellmanPoint(1, float("nan"), 0, 1), "finite"),
])
def test_domain_rejection(point, fragment):
    assert domain_violation(point) is not None
    with pytest.raises(DomainError, match=fragment):
        bellman_value(point)


def test_gradient_closed_form():
    # at (2, 1, 1/2, 1): s = v + A = 3/2, so
    # dF = 4, df = -8/s = -16/3, dA = dv = 4 (f/s)^2 = 16/9
    g = bellman_gradient(BellmanPoint(2, 1, 0.5, 1))
    assert g[0] == pytest.approx(4.0, abs=1e-15)
    assert g[1] == pytest.approx(-16.0 / 3.0, rel=1e-14)
    assert g[2] == pytest.approx(16.0 / 9.0, rel=1e-14)
    assert g[3] == pytest.approx(16.0 / 9.0, rel=1e-14)


def test_gradient_signs_by_finite_differences():
    report = gradient_signs_check(BellmanPoint(2, 1, 0.5, 1))
    assert report.ok
    assert report.dF == pytest.approx(4.0, abs=1e-4)
    report = gradient_signs_check(BellmanPoint(2, -1, 0.5, 1))
    assert report.ok and report.df > 0
    with pytest.raises(PreconditionError, match="boundary"):
        gradient_signs_check(BellmanPoint(1, 1, 0, 1))  # F v - f^2 = 0


@settings(max_examples=200, deadline=None)
@given(F=st.floats(0, 10), v=st.floats(0, 10),
       t=st.floats(-1, 1), s=st.floats(0, 1))
def test_range_on_admissible_points(F, v, t, s):
    p = BellmanPoint(F, t * np.sqrt(F * v), s * v, v)
    value = bellman_value(p, tol=1e-9)
    assert -1e-9 <= value <= 4.0 * F + 1e-9


# ---------------------------------------------------------------------------
# the three split inequalities, hand-checked instances first
# ---------------------------------------------------------------------------


def test_martingale_slack_hand_cases():
    p = BellmanPoint(1, 0, 0, 1)
    assert martingale_split_slack(p, p, 0.0) == pytest.approx(0.0, abs=1e-12)
    # opposite-sign children cancel: parent value 4, children both 0
    up = BellmanPoint(1, 1, 0, 1)
    dn = BellmanPoint(1, -1, 0, 1)
    assert martingale_split_slack(up, dn, 0.0) == pytest.approx(4.0, abs=1e-12)
    with pytest.raises(DomainError, match="m >= 0"):
        martingale_split_slack(p, p, -1.0)
    half = BellmanPoint(1, 0, 0.5, 1)
    with pytest.raises(DomainError, match="A <= v"):
        martingale_split_slack(half, half, 1.0)


def test_tree_split_slack_hand_cases():
    zero = BellmanPoint(0, 0, 0, 0)
    # a = b = 1, c = 0 builds the Cauchy-Schwarz equality parent (1,1,0,1)
    assert tree_split_slack(SplitWitness(zero, zero, 1, 1, 0)) == pytest.approx(
        0.0, abs=1e-12
    )
    # c = 1 moves the parent to (1,1,1,1): B = 2, drift = 1, slack = 1
    assert tree_split_slack(SplitWitness(zero, zero, 1, 1, 1)) == pytest.approx(
        1.0, abs=1e-12
    )
    with pytest.raises(ValidationError, match="a >= 0"):
        SplitWitness(zero, zero, -1, 0, 0)
    with pytest.raises(ValidationError, match="c >= 0"):
        SplitWitness(zero, zero, 0, 0, -1)


def test_split_compensation_hand_cases():
    # stripped (1,0,0,1) has B = 4, shifted (2,1,0,2) has B = 6
    got = split_compensation(BellmanPoint(2, 1, 1, 2), 1, 1, 1)
    assert got == pytest.approx(-0.5, abs=1e-12)
    assert split_compensation(BellmanPoint(1, 1, 0, 1), 1, 1, 0) == pytest.approx(
        0.0, abs=1e-12
    )
    with pytest.raises(DomainError):
        split_compensation(BellmanPoint(1, 0, 0, 1), 2, 0, 0)  # v - a^2 < 0


def test_a_shift_gain_frozen():
    # B(2,1,1,2) = 4*(2 - 1/3) = 20/3 and B(2,1,0,2) = 6, so the gain is
    # (20/3 - 6)/4 = 1/6; the bounds are 1*1/9 and 1/16
    gain = a_shift_gain(BellmanPoint(2, 1, 1, 2), 1.0)
    assert gain.gain == pytest.approx(1.0 / 6.0, rel=1e-12)
    assert gain.exact_bound == pytest.approx(1.0 / 9.0, rel=1e-12)
    assert gain.weak_bound == pytest.approx(1.0 / 16.0, rel=1e-12)
    assert gain.gain >= gain.exact_bound >= gain.weak_bound
    with pytest.raises(DomainError, match="0 <= c <= A"):
        a_shift_gain(BellmanPoint(1, 0, 0.5, 1), 0.7)


def _random_interior_points(seed, count):
    rng = np.random.default_rng(seed)
    v = rng.uniform(0.1, 3.0, count)
    A = rng.uniform(0.0, 1.0, count) * v
    F = rng.uniform(0.1, 3.0, count)
    f = rng.uniform(-0.99, 0.99, count) * np.sqrt(F * v)
    return [BellmanPoint(*map(float, q)) for q in zip(F, f, A, v)]


def test_a_shift_gain_chain_randomized():
    rng = np.random.default_rng(5)
    for p in _random_interior_points(5, 200):
        c = float(rng.uniform(0, p.A))
        got = a_shift_gain(p, c)
        assert got.gain >= got.exact_bound - 1e-12
        assert got.exact_bound >= got.weak_bound - 1e-12


def test_concavity_gap_randomized():
    pts = _random_interior_points(9, 400)
    for x, x_star in zip(pts[::2], pts[1::2]):
        assert concavity_first_order_gap(x, x_star) >= -1e-9


# ---------------------------------------------------------------------------
# admissible sampler
# ---------------------------------------------------------------------------


def test_sampler_validation():
    with pytest.raises(ValidationError, match="unknown mode"):
        sample_batch(0, 10, "downhill")
    with pytest.raises(ValidationError):
        sample_batch(0, -1, "martingale")
    batch, _ = sample_batch(0, 0, "martingale")
    assert len(batch) == 0


@pytest.mark.parametrize("mode", MODES)
def test_sampler_is_deterministic_and_rejection_free(mode):
    batch1, stats = sample_batch(123, 500, mode)
    batch2, _ = sample_batch(123, 500, mode)
    assert len(batch1) == 500
    assert stats.rejected_cauchy_schwarz == 0
    assert stats.rejected_test_bound == 0
    if mode == "compensation":
        assert np.array_equal(batch1.values(), batch2.values())
    else:
        assert np.array_equal(batch1.slacks(), batch2.slacks())


@pytest.mark.parametrize("mode", ["martingale", "tree_split"])
def test_batch_slacks_match_scalar_witnesses(mode):
    batch, _ = sample_batch(7, 64, mode)
    slacks = batch.slacks()
    for i in (0, 13, 63):
        w = batch.witness(i)
        if mode == "martingale":
            scalar = martingale_split_slack(w.left, w.right, w.m)
        else:
            scalar = tree_split_slack(w)
        assert slacks[i] == pytest.approx(scalar, rel=1e-12, abs=1e-12)


def test_compensation_batch_matches_scalar():
    batch, _ = sample_batch(8, 64, "compensation")
    values = batch.values()
    for i in (0, 31, 63):
        w = batch.witness(i)
        scalar = split_compensation(w.parent, w.a, w.b, w.c)
        assert values[i] == pytest.approx(scalar, rel=1e-12, abs=1e-12)


def test_sampled_inequalities_at_scale():
    batch, _ = sample_batch(2024, 10_000, "martingale")
    assert batch.slacks().min() >= -1e-9
    batch, _ = sample_batch(2024, 10_000, "tree_split")
    assert batch.slacks().min() >= -1e-9
    batch, _ = sample_batch(2024, 10_000, "compensation")
    assert batch.values().max() <= 1e-12


def test_sampled_parents_stay_in_range():
    batch, _ = sample_batch(31, 5_000, "tree_split")
    F, f, A, v = batch.parent()
    values = bellman_values(F, f, A, v)
    assert values.min() >= -1e-9
    assert (values <= 4.0 * F + 1e-9 * np.maximum(1.0, F)).all()


def test_midpoint_concavity_sampled():
    x, _ = sample_batch(1, 5_000, "martingale")
    y, _ = sample_batch(2, 5_000, "martingale")
    xs, ys = x.parent(), y.parent()
    mid = bellman_values(*(0.5 * (a + b) for a, b in zip(xs, ys)))
    avg = 0.5 * (bellman_values(*xs) + bellman_values(*ys))
    assert (mid >= avg - 1e-9).all()


def test_witness_stream_types():
    stream = list(sample_admissible(5, 3, "martingale"))
    assert len(stream) == 3 and isinstance(stream[0], MartingaleWitness)
    for w in stream:
        assert martingale_split_slack(w.left, w.right, w.m) >= -1e-9
    split = next(sample_admissible(5, 1, "tree_split"))
    assert isinstance(split, SplitWitness)


# ---------------------------------------------------------------------------
# telescoping certificate
# ---------------------------------------------------------------------------


def test_certificate_uniform_depth3():
    """Uniform measure, phi = 1, box-squared weights, hand-checked totals.

    After normalizing by the test constant 15/8 every box average is
    8/15, each path level contributes 2^d * 2^-2d * 64/15 to the total,
    so total = (64/15) * (15/8) = 8.  F at the root counts the 15 nodes,
    giving the upper bound 60, and B(root) = 4*(15 - 4) = 44.
    """
    shape = build_tree(3)
    lam = carleson_normalized(uniform_boundary_measure(shape))
    cert = certify_tree_embedding(lam, np.ones(shape.node_count),
                                  box_squared_alpha(shape))
    assert cert.ok
    assert cert.total == pytest.approx(8.0, rel=1e-12)
    assert cert.bellman_bound == pytest.approx(44.0, rel=1e-12)
    assert cert.upper_bound == pytest.approx(60.0, rel=1e-12)
    assert cert.min_slack >= -1e-9
    assert len(cert.rows) == shape.node_count
    assert cert.rows[0].node == 1
    assert min(r.slack for r in cert.rows) == cert.min_slack


def test_certificate_point_mass():
    # each of the N+1 path nodes contributes exactly 1/(N+1)
    shape = build_tree(4)
    lam = leaf_point_mass(shape, shape.first_leaf).scaled(1.0 / 5.0)
    cert = certify_tree_embedding(lam, np.ones(shape.node_count),
                                  box_squared_alpha(shape))
    assert cert.ok
    assert cert.total == pytest.approx(1.0, rel=1e-12)


def test_certificate_requires_normalized_measure():
    shape = build_tree(2)
    lam = uniform_boundary_measure(shape)  # test constant 1.75
    with pytest.raises(PreconditionError, match="scale the measure"):
        certify_tree_embedding(lam, np.ones(shape.node_count),
                               box_squared_alpha(shape))


@pytest.mark.parametrize("seed", range(8))
def test_certificate_random_instances(seed):
    shape = build_tree(5)
    rng = np.random.default_rng(seed)
    lam = carleson_normalized(random_tree_measure(seed, shape, density=0.5))
    phi = rng.normal(size=shape.node_count)
    cert = certify_tree_embedding(lam, phi, box_squared_alpha(shape))
    assert cert.ok
    assert cert.total <= cert.bellman_bound + 1e-9 * max(1.0, cert.bellman_bound)
    assert cert.bellman_bound <= cert.upper_bound + 1e-9 * max(1.0, cert.upper_bound)


def test_certificate_with_random_alpha():
    from dyadic_carleson import alpha_test_constant

    shape = build_tree(4)
    rng = np.random.default_rng(40)
    lam = random_tree_measure(40, shape)
    raw = AlphaSequence(shape, rng.uniform(0, 1, shape.node_count))
    constant = alpha_test_constant(lam, raw).constant
    alpha = AlphaSequence(shape, raw.values / (constant * (1 + 1e-12)))
    cert = certify_tree_embedding(lam, rng.normal(size=shape.node_count), alpha)
    assert cert.ok
