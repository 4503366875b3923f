import numpy as np
import pytest

from robustcodec.recipes import (MixtureSetup, RotationResult, RotationSetup,
                                 refinement_experiment, rotation_experiment,
                                 tradeoff_experiment)

TINY = MixtureSetup(train_count=64, test_count=32, hidden=6, warm=((0.03, 2),), epochs=2,
                    inner_steps=2, eval_gammas=(1e9, 2.0, 1.2, 1.05, 1.01))


def test_tradeoff_runs_and_reports():
    res = tradeoff_experiment(0, TINY)
    assert set(res.curves) == {"standard", "dro_small", "dro_large", "awgn"}
    assert set(res.orderings()) == {"a", "b", "c", "d"}
    assert all(isinstance(v, bool) for v in res.orderings().values())
    s = res.summary()
    assert s["rho_large"] > 0 and np.isfinite(s["at_rho_awgn"])


def test_tradeoff_reproducible():
    a, b = tradeoff_experiment(1, TINY), tradeoff_experiment(1, TINY)
    assert a.summary() == b.summary()


def test_refinement_prefix_and_rates():
    res = refinement_experiment(0, 7, 3, TINY)
    assert res.prefix_ok
    assert res.rates[0] == pytest.approx(7 * np.log2(12), abs=1e-12)
    assert res.rates[1] == res.rates[2]
    r = res.common_radii(5)
    assert r[0] <= r[-1] and np.isfinite(res.worst_ratio())


def test_refinement_rejects_bad_split():
    with pytest.raises(ValueError):
        refinement_experiment(0, 3, 3, TINY)


def test_rotation_runs():
    setup = RotationSetup(train_count=24, test_count=12, hidden=6, base_epochs=1,
                          robust_epochs=1, predictor_epochs=1, train_grid_degrees=45,
                          predictor_grid_degrees=45, eval_grid_degrees=30)
    res = rotation_experiment(0, setup)
    assert res.structured.shape == res.robust.shape == res.base.shape == (6,)
    assert res.rates[0] == pytest.approx(np.log2(144))
    assert RotationResult.flatness(res.base) >= 1.0
