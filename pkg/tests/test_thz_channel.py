import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

import oracles
from risthz.errors import DomainError, PoleError
from risthz.thz_channel import (BAND_HZ, C_LIGHT, Environment, LinkGeometry, Misalignment,
                                absorption_coefficient, absorption_gain, misalign_cdf,
                                misalign_moment, misalign_pdf, misalign_sample, path_gain,
                                propagation_gain, vapor_param)

# frozen from tests/oracles.py
VAPOR_27C = 0.017664451412833952
KAPPA_300 = 0.0006630707289855097
FRIIS_300_30_20 = 1.0539691957673056e-07
A_O_GEOM = 0.05397189570961468
GAMMA_SQ_GEOM = 9.266426169163632


def test_vapor_values():
    env = Environment()
    assert vapor_param(Environment(rel_humidity=0.0)) == 0.0
    assert vapor_param(env) == pytest.approx(VAPOR_27C, rel=1e-13)
    assert oracles.vapor(27, 101325, 0.5) == pytest.approx(VAPOR_27C, rel=1e-15)
    assert vapor_param(Environment(rel_humidity=1.0)) == pytest.approx(2 * VAPOR_27C, rel=1e-14)


def test_environment_validation():
    with pytest.raises(PoleError):
        Environment(temperature_c=-240.97)
    with pytest.raises(DomainError):
        Environment(temperature_c=-300)
    with pytest.raises(DomainError):
        Environment(pressure_pa=0)
    with pytest.raises(DomainError):
        Environment(rel_humidity=1.2)


def test_dry_air_is_polynomial():
    f = np.linspace(*BAND_HZ, 126)
    poly = 5.54e-37 * f ** 3 - 3.94e-25 * f ** 2 + 9.06e-14 * f - 6.36e-3
    k = absorption_coefficient(f, Environment(rel_humidity=0.0))
    assert np.max(np.abs(k - poly)) < 1e-12


def test_absorption_values_and_resonance():
    env = Environment()
    assert absorption_coefficient(300e9, env) == pytest.approx(KAPPA_300, rel=1e-12)
    assert oracles.absorption(300e9) == pytest.approx(KAPPA_300, rel=1e-13)
    k300, k340, k380 = (absorption_coefficient(f, env) for f in (300e9, 340e9, 380e9))
    assert k380 > k340 > k300


def test_absorption_grid_is_clean():
    f = np.arange(275e9, 400e9 + 1, 1e9)
    for rh in (0.1, 0.5, 1.0):
        k = absorption_coefficient(f, Environment(temperature_c=20.0, rel_humidity=rh))
        assert np.all(np.isfinite(k)) and np.all(k > 0)


def test_out_of_band_rejected():
    with pytest.raises(DomainError, match="HITRAN"):
        absorption_coefficient(450e9, Environment())
    with pytest.raises(DomainError):
        LinkGeometry(freq_hz=100e9)


def test_friis():
    geom = LinkGeometry()
    assert propagation_gain(geom) == pytest.approx(FRIIS_300_30_20, rel=1e-13)
    assert oracles.friis(300e9, 30, 20, 1e4, 1e4) == pytest.approx(FRIIS_300_30_20, rel=1e-14)
    double = LinkGeometry(300e9, 60, 20, 1e4, 1e4)
    assert propagation_gain(double) == pytest.approx(0.5 * propagation_gain(geom), rel=1e-14)


def test_friis_unit_identity():
    # h_FL = c^2/(4 pi f)^2 at unit gains and distances; at f = c/(4 pi) it is one
    class Geom:
        freq_hz, d1_m, d2_m, gt, gr = C_LIGHT / (4 * math.pi), 1.0, 1.0, 1.0, 1.0
    assert propagation_gain(Geom) == pytest.approx(1.0, rel=1e-15)


def test_path_gain_composition():
    geom, env = LinkGeometry(), Environment()
    k = absorption_coefficient(geom.freq_hz, env)
    ref = FRIIS_300_30_20 * math.exp(-0.5 * k * 50.0)
    assert path_gain(geom, env) == pytest.approx(ref, rel=1e-13)
    gains = [path_gain(LinkGeometry(300e9, d, 20.0), env) for d in (5, 10, 20, 40)]
    assert all(a > b for a, b in zip(gains, gains[1:]))
    assert absorption_gain(geom, Environment(rel_humidity=0.0)) == pytest.approx(
        math.exp(-0.5 * absorption_coefficient(300e9, Environment(rel_humidity=0.0)) * 50), rel=1e-14)


def test_geometry_misalignment():
    mis = Misalignment.from_geometry(0.01, 0.06, 0.01)
    u = math.sqrt(math.pi) * 0.01 / (math.sqrt(2) * 0.06)
    assert mis.u == pytest.approx(u, rel=1e-15)
    assert mis.a_o == pytest.approx(math.erf(u) ** 2, rel=1e-14)
    assert mis.a_o == pytest.approx(A_O_GEOM, rel=1e-13)
    assert mis.gamma_sq == pytest.approx(GAMMA_SQ_GEOM, rel=1e-13)
    w_eq = 0.06 ** 2 * math.sqrt(math.pi) * math.erf(u) / (2 * u * math.exp(-u * u))
    assert mis.gamma_sq == pytest.approx(w_eq / (4 * 0.01 ** 2), rel=1e-13)


def test_misalignment_law():
    mis = Misalignment.from_shape(0.3, 2.5)
    assert misalign_moment(0, mis) == 1.0
    assert misalign_cdf(0.3, mis) == 1.0
    assert misalign_cdf(0.0, mis) == 0.0
    tot = integrate.quad(lambda x: misalign_pdf(x, mis), 0, 0.3, epsabs=1e-14)[0]
    assert tot == pytest.approx(1.0, abs=1e-10)
    m2 = integrate.quad(lambda x: x * x * misalign_pdf(x, mis), 0, 0.3)[0]
    assert misalign_moment(2, mis) == pytest.approx(m2, rel=1e-10)


def test_misalignment_sampler_ks():
    mis = Misalignment.from_geometry()
    x = misalign_sample(mis, 3, 100_000)
    assert x.max() <= mis.a_o
    assert stats.kstest(x, lambda v: misalign_cdf(np.clip(v, 0, mis.a_o), mis)).statistic < 0.01


def test_misalignment_errors():
    mis = Misalignment.from_shape(0.3, 2.5)
    with pytest.raises(DomainError):
        misalign_pdf(0.4, mis)
    with pytest.raises(DomainError):
        misalign_moment(-3, mis)
    with pytest.raises(DomainError):
        Misalignment.from_shape(1.5, 1.0)
    with pytest.raises(DomainError):
        Misalignment.from_geometry(0.0, 0.06, 0.01)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.05, 20), st.floats(-0.04, 5))
def test_moment_closed_form(a_o, g2, s):
    mis = Misalignment.from_shape(a_o, g2)
    if s <= -g2:
        return
    num = integrate.quad(lambda x: x ** s * misalign_pdf(x, mis) if x > 0 else 0.0, 0, a_o,
                         limit=200)[0]
    assert misalign_moment(s, mis) == pytest.approx(num, rel=1e-6)
