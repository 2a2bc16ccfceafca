import math

import numpy as np
import pytest

from mftc.functionals import QuadraticModel
from mftc.measure_space import ParticleEnsemble
from mftc.verification import (AuditReport, Check, compare_with_riccati, directional_errors, hjb_order,
                               hjb_residual, monotonicity_pairing_values, random_ensemble,
                               random_quadratic_model, run_suite, tanh_model)


def test_check_relations():
    assert Check("a", "i", "b", "<=", 1.0, 1.0).passed
    assert not Check("a", "i", "b", "<=", 1.0, 1.5).passed
    assert Check("a", "i", "b", ">=", 0.0, 0.1).passed
    assert Check("a", "i", "b", "==", 0.0, 0.0).passed
    assert not Check("a", "i", "b", "==", 0.0, 1e-300).passed
    assert Check("a", "i", "b", "report", 0.0, 123.0).passed
    assert not Check("a", "i", "b", "<=", 1.0, math.nan).passed


def test_report_csv_and_summary(tmp_path):
    rep = AuditReport("demo", 3)
    rep.add("ok", "inst", "basis", "<=", 1.0, 0.5)
    rep.add("bad", "inst, with comma", "basis", ">=", 1.0, 0.5)
    assert not rep.passed and [c.name for c in rep.failures] == ["bad"]
    text = rep.csv_text()
    assert text.splitlines()[0] == "suite,seed,check,instance,basis,relation,bound,observed,pass"
    assert '"inst, with comma"' in text
    rep.to_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == text
    assert "bad" in rep.summary()


def test_random_model_has_requested_margin():
    rng = np.random.default_rng(0)
    m = random_quadratic_model(rng, 2, kappa=0.5, T=1.0)
    c = m.lipschitz_constant()
    assert c * 1.0 * 2.0 / m.lam == pytest.approx(0.5)
    assert m.admissible


def test_monotone_instances_have_psd_couplings():
    rng = np.random.default_rng(1)
    for _ in range(10):
        m = random_quadratic_model(rng, 3, monotone=True)
        assert m.monotone


def test_hjb_residual_vanishes_for_zero_cost():
    z = QuadraticModel.zero(1)
    assert hjb_residual(z, ParticleEnsemble([[1.0], [2.0]]), 0.5) == 0.0


def test_hjb_order_is_two():
    rng = np.random.default_rng(2)
    m = random_quadratic_model(rng, 1, T=1.0)
    hs, res = hjb_order(m, random_ensemble(rng, 8, 1), 0.4, 400)
    orders = [math.log2(abs(res[k]) / abs(res[k + 1])) for k in range(len(res) - 1)]
    assert all(abs(h2 - h1 / 2) < 1e-15 for h1, h2 in zip(hs, hs[1:]))
    assert min(orders) > 1.8


def test_compare_with_riccati_tanh():
    dev = compare_with_riccati(tanh_model(), ParticleEnsemble([[1.0], [0.5]]), 400, force=True)
    assert max(dev.values()) < 1e-6


def test_pairing_zero_for_equal_laws():
    rng = np.random.default_rng(3)
    m = random_quadratic_model(rng, 2, monotone=True)
    X = random_ensemble(rng, 6, 2)
    assert monotonicity_pairing_values(m, X, X) == 0.0


def test_directional_errors_decay():
    rng = np.random.default_rng(4)
    f = random_quadratic_model(rng, 2).running()
    errs = directional_errors(f, random_ensemble(rng, 8, 2), random_ensemble(rng, 8, 2))
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("suite", ["monotonicity", "gradients"])
def test_suite_deterministic_and_green(suite):
    a, b = run_suite(suite, 5), run_suite(suite, 5)
    assert a.csv_text() == b.csv_text()
    assert a.passed


def test_suites_do_not_mutate_inputs():
    rng = np.random.default_rng(6)
    m = random_quadratic_model(rng, 2)
    X = random_ensemble(rng, 6, 2)
    before = (m.Q.copy(), m.S.copy(), X.points.copy())
    compare_with_riccati(m, X, 100)
    monotonicity_pairing_values(m, X, random_ensemble(rng, 6, 2), 50)
    assert np.array_equal(before[0], m.Q) and np.array_equal(before[1], m.S)
    assert np.array_equal(before[2], X.points)


def test_unknown_suite():
    with pytest.raises(KeyError):
        run_suite("nope", 1)


def test_single_suite_names_unprefixed():
    rep = run_suite("gradients", 1)
    assert all("." not in c.name for c in rep.checks)
