import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cvqsdc.channel import ChannelParams
from cvqsdc.config import ProtocolConfig
from cvqsdc.distributions import Constant, Distribution, Uniform
from cvqsdc.protocol import MESSAGE, expected_return_stats, run_protocol
from cvqsdc.security import (
    ANALYTIC,
    MONTE_CARLO,
    AnalyticParams,
    SecrecyCurve,
    analytic_params,
    conditional_entropy,
    curves_from_csv,
    curves_to_csv,
    discrete_entropy,
    discrete_mutual_info,
    monte_carlo_mutual_info,
    mutual_info_asym,
    mutual_info_sym,
    secrecy_capacity,
    shannon_hartley,
    sweep,
    variance_of_product,
)

# brute-force oracle: 10^7 draws of |alpha| ~ U[1, 10], m ~ U[0.1, 1], Var(|alpha| sqrt(m))
ORACLE_VAR_PRODUCT = 4.783492014661874

GRID = np.linspace(0.0, 1.0, 101)
Z_3DB = 10 ** -0.3


def params(eta_E=0.5, eta_L=0.9, z=1.0, var=9.57, var_m=0.0675):
    return AnalyticParams(eta_E=eta_E, eta_L=eta_L, z=z, var_x_sqrt_m=var, var_m=var_m, mean_m=0.55)


# -- closed forms -----------------------------------------------------------------


@pytest.mark.parametrize("eta_E", [0.0, 1.0])
@pytest.mark.parametrize("z", [1.0, Z_3DB, 0.1])
def test_eve_blind_at_endpoints(eta_E, z):
    p = params(eta_E=eta_E, z=z)
    assert mutual_info_asym(p, "eve") == 0.0
    assert mutual_info_sym(p, "eve") == 0.0


def test_asym_reference_value():
    p = AnalyticParams(eta_E=1.0, eta_L=1.0, z=1.0, var_x_sqrt_m=8.0, var_m=0.1)
    assert np.isclose(mutual_info_asym(p, "bob"), math.log2(1.16))
    assert np.isclose(mutual_info_asym(p, "bob"), 0.2141, atol=1e-4)


@given(eta_E=st.floats(0, 1), eta_L=st.floats(0, 1))
def test_sym_equals_asym_without_squeezing(eta_E, eta_L):
    p = params(eta_E=eta_E, eta_L=eta_L, z=1.0)
    assert np.isclose(mutual_info_sym(p, "bob"), mutual_info_asym(p, "bob"))


def test_sym_bob_blind_without_light():
    assert mutual_info_sym(params(eta_E=0.0, z=0.2), "bob") == 0.0


@given(eta_E=st.floats(0, 1))
def test_alice_squeezing_helps_bob_more(eta_E):
    p = params(eta_E=eta_E, z=Z_3DB)
    assert mutual_info_sym(p, "bob") <= mutual_info_asym(p, "bob") + 1e-15


def test_sym_rejects_nonpositive_noise():
    with pytest.raises(ValueError):
        mutual_info_sym(params(eta_E=1.0, eta_L=1.0, z=0.1, var_m=2.0), "bob")


def test_sym_moment_options():
    p = params(eta_E=0.8, z=Z_3DB)
    assert mutual_info_sym(p, "bob", m_moment="mean") > mutual_info_sym(p, "bob")
    with pytest.raises(ValueError):
        mutual_info_sym(p, "bob", m_moment="median")


def test_raw_log():
    p = params(eta_E=0.5)
    assert mutual_info_asym(p, "eve", raw_log=True) < mutual_info_asym(p, "eve")
    assert mutual_info_asym(params(eta_E=0.0), "bob", raw_log=True) == 0.0


def test_params_validation():
    with pytest.raises(ValueError):
        params(eta_E=1.5)
    with pytest.raises(ValueError):
        params(z=0.0)
    with pytest.raises(ValueError):
        params(var=-1.0)
    with pytest.raises(ValueError):
        mutual_info_asym(params(), "alice")


def test_analytic_params_from_config():
    p = analytic_params(ProtocolConfig(squeezing_db=-3.0), eta_E=0.3)
    assert p.eta_E == 0.3 and p.eta_L == 0.9
    assert np.isclose(p.z, Z_3DB)
    assert np.isclose(p.var_x_sqrt_m, 2 * variance_of_product(Uniform(1, 10), Uniform(0.1, 1)))
    assert np.isclose(p.var_m, 0.81 / 12)


# -- shape of the curves ---------------------------------------------------------


@pytest.mark.parametrize("variant", ["asymmetric", "symmetric"])
@pytest.mark.parametrize("db", [0.0, -3.0, -10.0])
def test_bob_information_grows_with_eta_E(variant, db):
    curve = sweep(variant, GRID, ProtocolConfig(squeezing_db=db))
    assert np.all(np.diff(curve.I_AB) >= 0.0)
    assert curve.I_AE[0] == 0.0 and curve.I_AE[-1] == 0.0


@given(z1=st.floats(0.01, 1.0), z2=st.floats(0.01, 1.0), eta_E=st.floats(0, 1))
def test_more_squeezing_more_information(z1, z2, eta_E):
    lo, hi = sorted((z1, z2))
    for f in (mutual_info_asym, mutual_info_sym):
        assert f(params(eta_E=eta_E, z=lo), "bob") >= f(params(eta_E=eta_E, z=hi), "bob") - 1e-15


def test_honest_endpoint_capacity():
    curve = sweep("asymmetric", [0.0, 1.0], ProtocolConfig(squeezing_db=-5.0))
    assert np.allclose(curve.I_AE, 0.0)
    assert curve.C_s[-1] == curve.I_AB[-1]


def test_saturation_above_balanced_tap():
    # past the balanced point the capacity gains shrink with stronger squeezing
    caps = [sweep("asymmetric", [0.75], ProtocolConfig(squeezing_db=db)).C_s[0] for db in (-1.0, -5.0, -10.0)]
    assert caps[1] - caps[0] > caps[2] - caps[1] > 0.0


def test_eve_information_peaks_at_balanced_tap():
    curve = sweep("asymmetric", GRID, ProtocolConfig(squeezing_db=0.0))
    assert GRID[np.argmax(curve.I_AE)] == 0.5


# -- capacities and discrete information ------------------------------------------


def test_secrecy_capacity():
    assert np.isclose(secrecy_capacity(1.0, 0.3), 0.7)
    assert secrecy_capacity(0.4, 0.4) == 0.0
    assert secrecy_capacity(0.1, 0.3) < 0.0
    assert secrecy_capacity(0.1, 0.3, clip=True) == 0.0


@pytest.mark.parametrize("s, n, bits", [(0.0, 2.0, 0.0), (1.0, 1.0, 1.0), (3.0, 1.0, 2.0)])
def test_shannon_hartley(s, n, bits):
    assert shannon_hartley(s, n) == bits


def test_shannon_hartley_rejects_bad_noise():
    with pytest.raises(ValueError):
        shannon_hartley(1.0, 0.0)


def test_discrete_examples():
    assert discrete_entropy([0.25] * 4) == 2.0
    assert discrete_entropy([1.0, 0.0]) == 0.0
    indep = np.outer([0.3, 0.7], [0.5, 0.25, 0.25])
    assert abs(discrete_mutual_info(indep)) < 1e-12
    assert np.isclose(conditional_entropy(indep), discrete_entropy([0.3, 0.7]))
    corr = np.array([[0.5, 0.0], [0.0, 0.5]])
    assert np.isclose(discrete_mutual_info(corr), 1.0)
    assert conditional_entropy(corr) == 0.0


@pytest.mark.parametrize("bad", [[0.5, 0.6], [-0.1, 1.1], [], [np.nan, 1.0]])
def test_discrete_rejects_invalid(bad):
    with pytest.raises(ValueError):
        discrete_entropy(bad)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)),
              elements=st.floats(0.0, 1.0)))
def test_mutual_info_symmetric(table):
    if table.sum() <= 0.0:
        return
    joint = table / table.sum()
    assert abs(discrete_mutual_info(joint) - discrete_mutual_info(joint.T)) < 1e-12
    assert discrete_mutual_info(joint) <= min(discrete_entropy(joint.sum(0)), discrete_entropy(joint.sum(1))) + 1e-12


# -- variance of the product -------------------------------------------------------


class _QuadratureOnly(Distribution):
    """Uniform distribution that only knows ``expect``, to exercise the generic path."""

    def __init__(self, low, high):
        self._u = Uniform(low, high)

    support = property(lambda self: self._u.support)

    def expect(self, func):
        return self._u.expect(func)


def test_variance_of_product_examples():
    assert variance_of_product(Constant(3.0), Constant(1.0)) == 0.0
    assert np.isclose(variance_of_product(Uniform(0.0, 1.0), Constant(1.0)), 1 / 12)


def test_variance_of_product_matches_oracle():
    val = variance_of_product(Uniform(1.0, 10.0), Uniform(0.1, 1.0))
    assert abs(val / ORACLE_VAR_PRODUCT - 1) < 1e-3


def test_variance_of_product_quadrature_path():
    closed = variance_of_product(Uniform(1.0, 10.0), Uniform(0.1, 1.0))
    quad = variance_of_product(_QuadratureOnly(1.0, 10.0), _QuadratureOnly(0.1, 1.0))
    assert np.isclose(closed, quad, rtol=1e-9)


# -- Monte-Carlo estimator -----------------------------------------------------------


@pytest.fixture(scope="module")
def hidden_tap_run():
    cfg = ProtocolConfig(n=20_000, channel=ChannelParams(eta_L=0.9, eta_E=0.7),
                         declared_eta=0.63, seed=3)
    tr = run_protocol(cfg)
    assert tr.accepted
    return tr


def test_mc_matches_closed_form(hidden_tap_run):
    p = analytic_params(hidden_tap_run.config)
    for party in ("bob", "eve"):
        mc = monte_carlo_mutual_info([hidden_tap_run], party)
        assert abs(mc / mutual_info_asym(p, party) - 1) < 0.05


def test_mc_perfect_reading_is_capped(hidden_tap_run):
    tr = hidden_tap_run
    idx = tr.indices(MESSAGE)
    mu = expected_return_stats(tr.config, tr.alpha[idx]).mean
    bob = tr.bob_meas.copy()
    bob[idx] = mu * np.sqrt(tr.m_true[idx])
    exact = dataclasses.replace(tr, bob_meas=bob)
    assert monte_carlo_mutual_info([exact], "bob") == 30.0
    assert monte_carlo_mutual_info([exact], "bob", cap=12.0) == 12.0


def test_mc_shuffled_reading_floor():
    # a calibrated but uninformative reading has MSE = 2 Var(s): I = log2(1.5)
    cfg = ProtocolConfig(n=20_000, x_distribution=Uniform(200.0, 400.0), channel=ChannelParams(eta_L=1.0))
    tr = run_protocol(cfg)
    idx = tr.indices(MESSAGE)
    bob = tr.bob_meas.copy()
    bob[idx] = np.random.default_rng(0).permutation(bob[idx])
    shuffled = dataclasses.replace(tr, bob_meas=bob)
    assert abs(monte_carlo_mutual_info([shuffled], "bob") - math.log2(1.5)) < 0.05


def test_mc_random_phase_eve_learns_nothing():
    cfg = ProtocolConfig(n=20_000, phase_mode="random", variant="symmetric", declared_eta=0.45,
                         channel=ChannelParams(eta_E=0.5))
    tr = run_protocol(cfg)
    assert monte_carlo_mutual_info([tr], "eve") < 0.01
    assert monte_carlo_mutual_info([tr], "bob") > 0.03


def test_mc_pools_transcripts(hidden_tap_run):
    one = monte_carlo_mutual_info([hidden_tap_run], "bob")
    two = monte_carlo_mutual_info([hidden_tap_run, hidden_tap_run], "bob")
    assert np.isclose(one, two)


def test_mc_needs_accepted_messages():
    aborted = run_protocol(ProtocolConfig(channel=ChannelParams(eta_E=0.0)))
    with pytest.raises(ValueError):
        monte_carlo_mutual_info([aborted], "bob")


def test_mc_eve_peak_follows_analytic_peak():
    grid = np.round(np.linspace(0.1, 0.9, 9), 10)
    mc = sweep("asymmetric", grid, ProtocolConfig(n=20_000, squeezing_db=0.0), MONTE_CARLO, seed=1)
    an = sweep("asymmetric", grid, ProtocolConfig(squeezing_db=0.0))
    assert abs(grid[np.argmax(mc.I_AE)] - grid[np.argmax(an.I_AE)]) <= 0.1 + 1e-12


# -- sweeps and CSV --------------------------------------------------------------------


def test_mc_sweep_deterministic_and_worker_independent():
    grid = [0.0, 0.5, 1.0]
    base = ProtocolConfig(n=2000)
    a = sweep("symmetric", grid, base, MONTE_CARLO, seed=7)
    b = sweep("symmetric", grid, base, MONTE_CARLO, seed=7, workers=2)
    assert a.to_csv() == b.to_csv()
    c = sweep("symmetric", grid, base, MONTE_CARLO, seed=8)
    assert a.to_csv() != c.to_csv()


def test_mc_sweep_marks_aborted_points():
    noisy = ProtocolConfig(n=1000).replace(channel_excess_noise=1.0)
    curve = sweep("asymmetric", [0.5, 1.0], noisy, MONTE_CARLO)
    assert curve.aborted.all()
    assert curve.to_csv().splitlines()[-1] == "1,NA,NA,NA,monte_carlo,asymmetric"


def test_random_phase_has_no_closed_form():
    with pytest.raises(ValueError):
        sweep("symmetric_random_phase", GRID, ProtocolConfig(), ANALYTIC)


def test_curve_csv_round_trip():
    curve = sweep("asymmetric", GRID, ProtocolConfig(squeezing_db=-3.0))
    curve.metadata = {"note": "x", "grid": 101}
    text = curve.to_csv()
    assert text.splitlines()[2] == "eta_E,I_AB_bits,I_AE_bits,C_s_bits,provenance,variant"
    assert SecrecyCurve.from_csv(text).to_csv() == text


def test_table_csv_round_trip():
    curves = [sweep("symmetric", GRID, ProtocolConfig(squeezing_db=db)) for db in (0.0, -3.0)]
    text = curves_to_csv(curves, {"panel": "b"})
    back = curves_from_csv(text)
    assert [c.squeezing_db for c in back] == [0.0, -3.0]
    assert curves_to_csv(back, back[0].metadata) == text


@pytest.mark.parametrize("text", [
    "eta,I\n0,1\n",
    "eta_E,I_AB_bits,I_AE_bits,C_s_bits,provenance,variant\n0,1,2\n",
    "eta_E,I_AB_bits,I_AE_bits,C_s_bits,provenance,variant\n0,x,0,0,analytic,asymmetric\n",
    "eta_E,I_AB_bits,I_AE_bits,C_s_bits,provenance,variant\n0.5,1,0,1,analytic,asymmetric\n0.2,1,0,1,analytic,asymmetric\n",
    "eta_E,I_AB_bits,I_AE_bits,C_s_bits,provenance,variant\n0.5,1,0,0.3,analytic,asymmetric\n",
])
def test_curve_csv_rejects_malformed(text):
    with pytest.raises(ValueError):
        curves_from_csv(text)
