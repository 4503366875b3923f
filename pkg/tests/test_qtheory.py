import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robustcodec.errors import ConfigError, DomainError
from robustcodec.qtheory import (IntervalQuantizer, TheoryViolation, UniformPair,
                                 distortion_batch, distortion_closed, distortion_numeric,
                                 exhaustive_grid, f1_f2, lower_bound, minimax_search,
                                 optimal_uniform, verify_theorem1, worst_case)


def per_cell_oracle(alpha, lengths):
    """Exact antiderivative of (x - c)^2 summed over the pieces of (0, alpha)."""
    edges = np.concatenate([[0.0], np.cumsum(lengths)])
    total = 0.0
    for i in range(len(lengths)):
        lo = min(edges[i], alpha)
        hi = alpha if i == len(lengths) - 1 else min(edges[i + 1], alpha)
        if hi > lo:
            c = 0.5 * (edges[i] + edges[i + 1])
            total += ((hi - c) ** 3 - (lo - c) ** 3) / 3.0
    return total / alpha


def random_case(rng):
    N = int(rng.integers(1, 17))
    p = rng.uniform(0.02, 1.0, N) * rng.uniform(0.5, 2.0) / N * 2
    alpha = rng.uniform(p[0], max(2.0, p[0] * 1.01))
    return alpha, p


def test_trivial_values():
    one = IntervalQuantizer([1.0])
    assert distortion_closed(1.0, one) == pytest.approx(1 / 12, abs=1e-15)
    assert distortion_numeric(1.0, one) == pytest.approx(1 / 12, abs=1e-10)
    assert distortion_closed(1.0, optimal_uniform(1.0, 4)) == pytest.approx(1 / 192, abs=1e-15)
    assert optimal_uniform(1.0, 4).lengths == (0.25, 0.25, 0.25, 0.25)


def test_closed_matches_quadrature_and_oracle():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        alpha, p = random_case(rng)
        q = IntervalQuantizer(p)
        closed = distortion_closed(alpha, q)
        worst = max(worst, abs(closed - distortion_numeric(alpha, q)),
                    abs(closed - per_cell_oracle(alpha, p)))
    assert worst <= 1e-8


def test_numeric_matches_oracle():
    rng = np.random.default_rng(1)
    for _ in range(200):
        alpha, p = random_case(rng)
        alpha = rng.uniform(0.01, 2.0)
        assert distortion_numeric(alpha, IntervalQuantizer(p)) == pytest.approx(
            per_cell_oracle(alpha, p), abs=1e-10)


def test_batch_matches_closed_including_first_cell():
    rng = np.random.default_rng(2)
    for _ in range(300):
        alpha, p = random_case(rng)
        alpha = rng.uniform(0.01, 2.0)  # may land in the first cell
        assert distortion_batch(alpha, p)[0] == pytest.approx(per_cell_oracle(alpha, p), abs=1e-12)


def test_first_cell_falls_back_with_warning(caplog):
    q = IntervalQuantizer([2.0, 1.0])
    with caplog.at_level(logging.WARNING, logger="robustcodec.qtheory"):
        val = distortion_closed(1.0, q)
    assert "quadrature" in caplog.text
    assert val == pytest.approx(1 / 3, abs=1e-10)


def test_domain_errors():
    q = IntervalQuantizer([1.0])
    with pytest.raises(DomainError):
        distortion_closed(0.0, q)
    with pytest.raises(DomainError):
        distortion_numeric(-1.0, q)
    with pytest.raises(ConfigError):
        IntervalQuantizer([1.0, 0.0])
    with pytest.raises(ConfigError):
        UniformPair(4, 0.25)
    with pytest.raises(DomainError):
        f1_f2(4, 0.3)


def test_numeric_monotone_in_alpha():
    q = optimal_uniform(1.0, 4)
    vals = [distortion_numeric(a, q) for a in np.linspace(1.0, 1.25, 50)]
    assert np.all(np.diff(vals) > 0)


def test_uniform_lower_bound_and_uniqueness():
    rng = np.random.default_rng(3)
    for N in (1, 2, 4, 8, 16):
        for alpha in (0.5, 1.0, 1.7):
            assert distortion_closed(alpha, optimal_uniform(alpha, N)) == pytest.approx(
                lower_bound(alpha, N), abs=1e-12)
    for _ in range(1000):
        N = int(rng.integers(2, 17))
        alpha = rng.uniform(0.5, 2.0)
        p = np.full(N, alpha / N) * (1 + rng.uniform(-0.3, 0.3, N))
        assert distortion_closed(alpha, IntervalQuantizer(p)) - lower_bound(alpha, N) > 0


def test_worst_case_examples():
    pair = UniformPair(4, 0.2)
    q1, q1d = optimal_uniform(1.0, 4), optimal_uniform(1.2, 4)
    assert worst_case(q1, pair) == distortion_closed(1.2, q1)
    assert worst_case(q1d, pair) < worst_case(q1, pair)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8), st.integers(1, 7))
def test_worst_case_dominates(lengths, k):
    N = len(lengths)
    pair = UniformPair(N, 0.9 / N * k / 7)
    q = IntervalQuantizer(lengths)
    v = worst_case(q, pair)
    assert v >= distortion_closed(1.0, q)
    assert v >= distortion_closed(1.0 + pair.delta, q)


def test_f1_f2_identities():
    for N in range(1, 17):
        r = f1_f2(N, 0.0)
        assert r.f1 == r.f2
        for frac in (0.1, 0.5, 0.9):
            d = frac / N
            r = f1_f2(N, d)
            assert r.d1_of_opt_1pd == pytest.approx(
                distortion_closed(1.0, optimal_uniform(1 + d, N)), rel=1e-12)
            assert r.d1pd_of_opt_1 == pytest.approx(
                distortion_closed(1 + d, optimal_uniform(1.0, N)), rel=1e-12)


def test_f1_f2_derivatives():
    for N in (2, 5, 16):
        for d in np.linspace(0.05, 0.95, 7) / N:
            r = f1_f2(N, d)
            assert r.df1 == pytest.approx(r.df1_fd, rel=1e-6)
            assert r.df2 == pytest.approx(r.df2_fd, rel=1e-6)


def test_minimax_search_dominates_candidates():
    pair = UniformPair(3, 0.2)
    res = minimax_search(pair)
    assert res.V <= min(worst_case(optimal_uniform(1.0, 3), pair),
                        worst_case(optimal_uniform(1.2, 3), pair))
    assert len(res.starts) >= 3


def test_minimax_small_delta_tends_to_uniform():
    for N in (2, 4):
        res = minimax_search(UniformPair(N, 1e-6))
        np.testing.assert_allclose(res.quantizer.lengths, np.full(N, 1 / N), atol=1e-3)


def test_exhaustive_grid_coarse():
    pair = UniformPair(2, 0.4)
    p, V = exhaustive_grid(pair, resolution=1e-3)
    assert V == pytest.approx(minimax_search(pair).V, abs=1e-5)


@pytest.mark.parametrize("N", [2, 4, 8])
@pytest.mark.parametrize("frac", [0.25, 0.5, 0.9])
def test_minimax_tradeoff_sweep(N, frac):
    rep = verify_theorem1(UniformPair(N, frac / N))
    assert rep.holds and rep.margin > 0
    assert rep.V_opt1 > rep.V_opt1pd


def test_margin_shrinks_with_delta():
    margins = [verify_theorem1(UniformPair(2, d)).margin for d in (0.2, 0.05, 0.01)]
    assert margins[0] > margins[1] > margins[2] > 0


def test_violation_raises():
    pair = UniformPair(2, 0.4)
    res = minimax_search(pair)
    res.quantizer = optimal_uniform(1.0, 2)  # pretend the search returned the uniform one
    with pytest.raises(TheoryViolation):
        verify_theorem1(pair, res)
