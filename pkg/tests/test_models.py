import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from mclt import models
from mclt.errors import ConfigError, InsufficientReplicates, MartingaleViolation
from mclt.models import (
    MartingaleModel,
    ModelCertificates,
    build_model,
    check_martingale_property,
    model_from_flat,
    model_moments,
    simulate_path,
)

PLAIN = ["rademacher", "pairswap", "drifting-variance", "asymmetric-two-point"]


class Biased(MartingaleModel):
    """Steps of +-1 shifted by 0.1: not a martingale."""

    id = "biased-test"

    @property
    def certificates(self):
        return ModelCertificates()

    def step(self, k, s_prev, x_prev):
        return 1.1, 0.9, 0.5, 1.0


@given(
    model_id=st.sampled_from(PLAIN),
    n=st.integers(1, 40),
    idx=st.integers(0, 10**6),
    seed=st.integers(0, 2**64 - 1),
)
def test_path_record_invariants(model_id, n, idx, seed):
    rec = simulate_path(build_model(model_id, n), idx, seed)
    assert rec.x.shape == rec.sigma2.shape == (n,)
    assert rec.v2[0] == 0.0 and rec.v2.shape == (n + 1,)
    assert np.all(rec.sigma2 >= 0)
    assert np.all(np.diff(rec.v2) >= 0)
    np.testing.assert_allclose(rec.rho2, rec.v2[-1] - rec.v2[:-1], rtol=0, atol=1e-12)
    assert rec.s_end == pytest.approx(rec.x.sum(), abs=1e-12)
    # two-point steps: |X_k| is the conditional standard deviation when p_up = 1/2
    if model_id != "asymmetric-two-point":
        np.testing.assert_allclose(rec.x**2, rec.sigma2, rtol=1e-12)


@pytest.mark.parametrize("model_id", PLAIN)
def test_single_path_matches_batch_bitwise(model_id):
    model = build_model(model_id, 17)
    batch = model.simulate_batch(100, 30, seed=9)
    for i in (0, 13, 29):
        rec = simulate_path(model, 100 + i, 9)
        np.testing.assert_array_equal(rec.x, batch.x[i])
        np.testing.assert_array_equal(rec.sigma2, batch.sigma2[i])
    again = simulate_path(model, 113, 9)
    np.testing.assert_array_equal(again.x, batch.x[13])


def test_generic_simulator_matches_vectorized_override():
    # rademacher overrides simulate_batch; the base-class loop must agree with it
    model = build_model("rademacher", 12)
    fast = model.simulate_batch(0, 64, 3)
    slow = MartingaleModel.simulate_batch(model, 0, 64, 3)
    np.testing.assert_array_equal(fast.x, slow.x)
    skew = build_model("asymmetric-two-point", 12, {"p": 0.3})
    np.testing.assert_array_equal(
        skew.simulate_batch(0, 64, 3).x, MartingaleModel.simulate_batch(skew, 0, 64, 3).x
    )


def test_pairswap_pins_total_variance():
    batch = build_model("pairswap", 4, {"u": 0.5}).simulate_batch(0, 5000, 1)
    np.testing.assert_allclose(batch.vn2, 4.0, rtol=0, atol=1e-12)
    odd = build_model("pairswap", 5).simulate_batch(0, 500, 1)
    np.testing.assert_allclose(odd.vn2, 5.0, rtol=0, atol=1e-12)


def test_pairswap_variances_take_both_values():
    batch = build_model("pairswap", 4).simulate_batch(0, 2000, 2)
    assert set(np.unique(batch.sigma2[:, 2])) == {0.5, 1.5}


def test_moments_match_enumeration_pairswap():
    exact = oracles.exact_moments("pairswap", 4, u=0.5)
    np.testing.assert_allclose(exact["sigma_bar2"], [1.5, 0.5, 1.0, 1.0])
    mc = model_moments(build_model("pairswap", 4), reps=100_000, seed=4)
    np.testing.assert_allclose(mc.sigma_bar2, exact["sigma_bar2"], atol=0.01)
    np.testing.assert_allclose(mc.var_dev, exact["var_dev"], atol=0.01)
    assert mc.var_dev[3] > 0
    assert mc.s2 == pytest.approx(4.0, abs=0.02)
    assert mc.cond2_dev == pytest.approx(0.0, abs=1e-12)


def test_moments_match_enumeration_drifting():
    exact = oracles.exact_moments("drifting-variance", 4, theta=0.5)
    mc = model_moments(build_model("drifting-variance", 4), reps=100_000, seed=5)
    assert exact["cond2_dev"] > 0 and mc.cond2_dev > 0
    for key in ("sigma_bar2", "abs3", "var_dev"):
        np.testing.assert_allclose(getattr(mc, key), exact[key], atol=0.02, err_msg=key)
    assert mc.cond2_dev == pytest.approx(exact["cond2_dev"], abs=0.005)
    np.testing.assert_allclose(mc.rho_bar2, np.cumsum(mc.sigma_bar2[::-1])[::-1])


def test_two_step_analytic_moments_match_enumeration():
    exact = oracles.exact_moments("two-step", 2)
    m = build_model("two-step", 2).analytic_moments()
    for key in ("sigma_bar2", "abs3", "var_dev", "rho_bar2"):
        np.testing.assert_allclose(getattr(m, key), exact[key], rtol=1e-14, err_msg=key)
    assert m.s2 == exact["s2"] == 2.5
    assert m.cond2_dev == pytest.approx(exact["cond2_dev"], rel=1e-14)


def test_moments_need_enough_reps():
    with pytest.raises(InsufficientReplicates):
        model_moments(build_model("pairswap", 4), reps=50)


def test_martingale_check_passes_for_pairswap():
    report = check_martingale_property(build_model("pairswap", 8), reps=100_000, seed=0)
    assert report.passed and report.worst_z < 6


def test_martingale_check_flags_biased_model():
    with pytest.raises(MartingaleViolation) as info:
        check_martingale_property(Biased(10), reps=100_000, seed=0)
    # bias 0.1 with unit spread over ~1e5/9 draws per bucket gives |z| near 10
    assert "|z|" in str(info.value)


def test_martingale_check_needs_reps():
    with pytest.raises(InsufficientReplicates):
        check_martingale_property(build_model("rademacher", 4), reps=1000)


def test_simulation_independent_of_thread_count(monkeypatch):
    model = build_model("drifting-variance", 20)
    monkeypatch.setenv("MCLT_THREADS", "1")
    one = model_moments(model, reps=10_000, seed=3)
    monkeypatch.setenv("MCLT_THREADS", "8")
    eight = model_moments(model, reps=10_000, seed=3)
    np.testing.assert_array_equal(one.sigma_bar2, eight.sigma_bar2)
    assert one.cond2_dev == eight.cond2_dev


def test_certificates():
    assert build_model("rademacher", 3).certificates.satisfies_condition2
    assert not build_model("drifting-variance", 3).certificates.satisfies_condition2
    assert build_model("drifting-variance", 3, {"theta": 0}).certificates.satisfies_condition2
    cert = build_model("pairswap", 4, {"u": 0.5}).certificates
    # third moments of pairswap steps are at most (1 + u)^{3/2}
    p, x, _ = oracles.enumerate_paths("pairswap", 4, u=0.5)
    assert np.max(np.abs(x) ** 3) <= cert.gamma + 1e-12


@pytest.mark.parametrize(
    "model_id,n,params",
    [
        ("nope", 4, {}),
        ("rademacher", 0, {}),
        ("rademacher", 4, {"u": 1}),
        ("pairswap", 4, {"u": 2}),
        ("pairswap", 4, {"u": "abc"}),
        ("two-step", 3, {}),
        ("asymmetric-two-point", 4, {"p": 1.0}),
    ],
)
def test_config_errors(model_id, n, params):
    with pytest.raises(ConfigError):
        build_model(model_id, n, params)


def test_model_from_flat():
    m = model_from_flat({"model.id": "pairswap", "model.n": 6, "model.params.u": 0.25})
    assert m.n == 6 and m.params["u"] == 0.25
    assert model_from_flat({"model.id": "pairswap"}, n=8).n == 8
    with pytest.raises(ConfigError):
        model_from_flat({"model.id": "pairswap"})
    with pytest.raises(ConfigError):
        model_from_flat({"model.id": "pairswap", "model.n": 4, "model.bogus": 1})


def test_registry_lists_all_models():
    assert set(models.available_models()) >= {
        "rademacher",
        "pairswap",
        "drifting-variance",
        "asymmetric-two-point",
        "two-step",
        "completed",
    }
